//! Problem contract, particle beliefs and the exact Bayesian filter.
//!
//! A problem is described through a generative model: given a state and an
//! action it samples a successor state, an observation and a reward. Besides
//! sampling, planners need to evaluate the observation density
//! `Z(o | a, s')`, which POWSS uses to reweight particles.
//!
//! Observations are real scalars. Problems with discrete observations embed
//! each symbol as a distinct real and report a probability mass through
//! [`Pomdp::obs_density`].
//!
//! Weights are kept in linear space. Bundled problems plan to depth 3, where
//! products of densities are nowhere near underflow; much deeper trees would
//! need log weights.

use std::fmt::Debug;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PomdpError {
    #[error("total particle weight is zero")]
    ZeroTotalWeight,
    #[error("observation {observation} has zero likelihood under every successor state of action {action}")]
    ZeroLikelihood { action: usize, observation: f64 },
    #[error("invalid problem definition: {0}")]
    InvalidProblem(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("particle width must be at least 1")]
    ZeroWidth,
}

/// One draw `(s', o, r)` from the generative model.
///
/// `terminal` is advisory: the absorbing post-termination state keeps the
/// planners' recursion unchanged, while closed-loop evaluation uses the flag
/// to stop an episode early.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeOutcome<S> {
    pub next_state: S,
    pub observation: f64,
    pub reward: f64,
    pub terminal: bool,
}

/// A finite-horizon, discounted POMDP exposed through a generative model.
///
/// Implementations must be immutable after construction; planners share them
/// across threads.
pub trait Pomdp: Sync {
    type State: Clone + Debug + Send + Sync;

    fn action_count(&self) -> usize;

    /// Discount factor in `[0, 1)`.
    fn discount(&self) -> f64;

    /// Planning horizon `D`; the problem terminates after `D` steps.
    fn horizon(&self) -> usize;

    /// Bound on the absolute value of every reward.
    fn r_max(&self) -> f64;

    fn generate<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut R,
    ) -> GenerativeOutcome<Self::State>;

    /// Observation density `Z(o | a, s')`.
    fn obs_density(&self, action: usize, next_state: &Self::State, observation: f64) -> f64;

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn action_name(&self, action: usize) -> String {
        format!("a{action}")
    }

    /// `V_max = R_max / (1 - γ)`, a bound on every value in the problem.
    fn v_max(&self) -> f64 {
        self.r_max() / (1.0 - self.discount())
    }
}

/// Checks the structural invariants every problem must satisfy.
pub fn validate_problem<P: Pomdp>(problem: &P) -> Result<(), PomdpError> {
    let gamma = problem.discount();
    if !(0.0..1.0).contains(&gamma) {
        return Err(PomdpError::InvalidProblem(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    if problem.horizon() == 0 {
        return Err(PomdpError::InvalidProblem("horizon must be at least 1".into()));
    }
    if problem.action_count() == 0 {
        return Err(PomdpError::InvalidProblem("action set is empty".into()));
    }
    if !(problem.r_max() > 0.0 && problem.r_max().is_finite()) {
        return Err(PomdpError::InvalidProblem(format!(
            "r_max {} must be positive and finite",
            problem.r_max()
        )));
    }
    Ok(())
}

/// Problems with a finite state space and evaluable dynamics.
///
/// These enable QMDP, the exact filter and the exhaustive oracle.
pub trait FiniteStates: Pomdp {
    fn state_count(&self) -> usize;

    fn state_index(&self, state: &Self::State) -> usize;

    fn state_at(&self, index: usize) -> Self::State;

    /// Transition probability `T(s' | s, a)` over state indices.
    fn transition_prob(&self, state: usize, action: usize, next_state: usize) -> f64;

    /// Expected immediate reward `R(s, a)`.
    fn expected_reward(&self, state: usize, action: usize) -> f64;

    fn initial_belief(&self) -> ExactBelief;
}

/// Finite-state problems whose observation density is piecewise constant over
/// a finite set of bins, so that binning the observation loses no information.
pub trait LosslessObservations: FiniteStates {
    fn obs_bin_count(&self, action: usize) -> usize;

    fn obs_bin(&self, action: usize, observation: f64) -> usize;

    /// Probability mass `∫_bin Z(o | a, s') do`.
    fn bin_probability(&self, action: usize, next_state: usize, bin: usize) -> f64;
}

/// A belief represented by weighted state particles, together with the tree
/// depth at which it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticleSet<S> {
    states: Vec<S>,
    weights: Vec<f64>,
    depth: usize,
}

impl<S> WeightedParticleSet<S> {
    /// Builds a set from parallel state and weight vectors.
    ///
    /// Fails if the lengths differ, any weight is negative or non-finite, or
    /// the total weight is not positive.
    pub fn new(states: Vec<S>, weights: Vec<f64>, depth: usize) -> Result<Self, PomdpError> {
        if states.len() != weights.len() {
            return Err(PomdpError::InvalidBelief(format!(
                "{} states but {} weights",
                states.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PomdpError::InvalidBelief(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(PomdpError::ZeroTotalWeight);
        }
        Ok(Self {
            states,
            weights,
            depth,
        })
    }

    /// Every particle gets weight exactly `1 / n`.
    pub fn uniform(states: Vec<S>, depth: usize) -> Result<Self, PomdpError> {
        if states.is_empty() {
            return Err(PomdpError::ZeroWidth);
        }
        let w = 1.0 / states.len() as f64;
        let weights = vec![w; states.len()];
        Ok(Self {
            states,
            weights,
            depth,
        })
    }

    /// Unchecked constructor for planner internals, where the caller has
    /// already established the invariants.
    pub(crate) fn from_parts(states: Vec<S>, weights: Vec<f64>, depth: usize) -> Self {
        debug_assert_eq!(states.len(), weights.len());
        Self {
            states,
            weights,
            depth,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.states.iter().zip(self.weights.iter().copied())
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        for w in &mut self.weights {
            *w *= factor;
        }
        self
    }

    /// Rescales the weights to sum to one.
    pub fn normalize(mut self) -> Result<Self, PomdpError> {
        let total = self.total_weight();
        if !(total > 0.0) {
            return Err(PomdpError::ZeroTotalWeight);
        }
        for w in &mut self.weights {
            *w /= total;
        }
        Ok(self)
    }
}

/// Draws `width` particles from the problem's initial belief, each with
/// weight `1 / width`.
pub fn sample_initial_particles<P: Pomdp, R: Rng + ?Sized>(
    problem: &P,
    width: usize,
    rng: &mut R,
) -> Result<WeightedParticleSet<P::State>, PomdpError> {
    if width == 0 {
        return Err(PomdpError::ZeroWidth);
    }
    let states = (0..width).map(|_| problem.sample_initial(rng)).collect();
    WeightedParticleSet::uniform(states, 0)
}

/// Draws `width` uniformly weighted particles from an exact belief.
pub fn sample_particles_from_belief<P: FiniteStates, R: Rng + ?Sized>(
    problem: &P,
    belief: &ExactBelief,
    width: usize,
    rng: &mut R,
) -> Result<WeightedParticleSet<P::State>, PomdpError> {
    if width == 0 {
        return Err(PomdpError::ZeroWidth);
    }
    let states = (0..width)
        .map(|_| problem.state_at(belief.sample_index(rng)))
        .collect();
    WeightedParticleSet::uniform(states, 0)
}

/// A probability vector over the states of a finite problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactBelief(Vec<f64>);

impl ExactBelief {
    const SUM_TOLERANCE: f64 = 1e-12;

    /// Accepts any nonnegative vector summing to one within `1e-12`.
    pub fn new(probabilities: Vec<f64>) -> Result<Self, PomdpError> {
        if probabilities.is_empty() {
            return Err(PomdpError::InvalidBelief("empty probability vector".into()));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(PomdpError::InvalidBelief(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(PomdpError::InvalidBelief(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(probabilities))
    }

    /// Normalizes an unnormalized nonnegative vector.
    pub fn from_unnormalized(mass: Vec<f64>) -> Result<Self, PomdpError> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(PomdpError::ZeroTotalWeight);
        }
        Ok(Self(mass.into_iter().map(|m| m / total).collect()))
    }

    pub fn point_mass(state_count: usize, index: usize) -> Self {
        let mut p = vec![0.0; state_count];
        p[index] = 1.0;
        Self(p)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    /// Predicted successor distribution `Σ_s T(s' | s, a) b(s)`.
    pub fn predict<P: FiniteStates>(&self, problem: &P, action: usize) -> Vec<f64> {
        let n = problem.state_count();
        (0..n)
            .map(|next| {
                self.0
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b > 0.0)
                    .map(|(s, b)| b * problem.transition_prob(s, action, next))
                    .sum()
            })
            .collect()
    }
}

/// Exact Bayesian filter step:
/// `b'(s') ∝ Z(o | a, s') · Σ_s T(s' | s, a) b(s)`.
pub fn exact_bayes_update<P: FiniteStates>(
    problem: &P,
    belief: &ExactBelief,
    action: usize,
    observation: f64,
) -> Result<ExactBelief, PomdpError> {
    if belief.len() != problem.state_count() {
        return Err(PomdpError::InvalidBelief(format!(
            "belief has {} entries, problem has {} states",
            belief.len(),
            problem.state_count()
        )));
    }
    let predicted = belief.predict(problem, action);
    let posterior: Vec<f64> = predicted
        .iter()
        .enumerate()
        .map(|(next, p)| {
            if *p > 0.0 {
                p * problem.obs_density(action, &problem.state_at(next), observation)
            } else {
                0.0
            }
        })
        .collect();
    ExactBelief::from_unnormalized(posterior).map_err(|_| PomdpError::ZeroLikelihood {
        action,
        observation,
    })
}
