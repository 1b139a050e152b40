//! Sparse-sampling planners and exact reference solvers.
//!
//! [`Planner`] implements the shared recursion: the root samples `C`
//! particles from the belief and estimates every action's Q-value, while
//! value estimation at depth `d` maximizes over Q-estimates and returns 0 at
//! the horizon. The two planners differ only in how a child belief is built
//! from the `C` generated outcomes of a node:
//!
//! * POSS keeps, for each distinct observation, the next states that produced
//!   exactly that observation, with unit weights. With continuous observations
//!   every child is a single particle, so the estimate collapses to QMDP.
//! * POWSS keeps all `C` next states in every child and reweights them by the
//!   likelihood of the child's observation, `w_i · Z(o_j | a, s'_i)`.
//!
//! [`qmdp`] and [`oracle`] solve finite problems exactly and serve as
//! references for both.

pub mod oracle;
pub mod qmdp;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{sn_estimate, EstimatorError};
use crate::pomdp::{sample_initial_particles, Pomdp, PomdpError, WeightedParticleSet};

pub use oracle::{exact_q_values, ExactSolver};
pub use qmdp::{qmdp_q_values, qmdp_q_values_at};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("child belief for action {action} at depth {depth} has zero total weight")]
    ZeroTotalWeight { action: usize, depth: usize },
    #[error("exhaustive solve needs about {nodes:e} nodes, over the budget of {budget:e}")]
    IntractableSize { nodes: f64, budget: f64 },
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Poss,
    Powss,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Poss => "poss",
            SolverKind::Powss => "powss",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "poss" => Ok(SolverKind::Poss),
            "powss" => Ok(SolverKind::Powss),
            other => Err(SolverError::InvalidConfig(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Number of particles and sampled children per node (`C`).
    pub width: usize,
    pub kind: SolverKind,
    pub discount: f64,
    /// Planning horizon `D`, counted from the root.
    pub horizon: usize,
}

impl SolverConfig {
    /// Copies discount and horizon from the problem.
    pub fn new<P: Pomdp>(problem: &P, kind: SolverKind, width: usize) -> Self {
        Self {
            width,
            kind,
            discount: problem.discount(),
            horizon: problem.horizon(),
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.width == 0 {
            return Err(SolverError::InvalidConfig("width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(SolverError::InvalidConfig(format!(
                "discount {} outside [0, 1)",
                self.discount
            )));
        }
        Ok(())
    }
}

/// Root Q-estimates and the greedy action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QEstimates {
    pub per_action: Vec<f64>,
    /// Argmax of `per_action`; ties go to the lowest index.
    pub best_action: usize,
    pub value: f64,
}

impl QEstimates {
    pub fn from_values(per_action: Vec<f64>) -> Self {
        let (best_action, value) = argmax(&per_action);
        Self {
            per_action,
            best_action,
            value,
        }
    }
}

/// First index attaining the maximum. Panics on an empty slice.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, v) in values.iter().copied().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Shape of the most recently built tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeStats {
    /// Child belief sets constructed below the root.
    pub child_beliefs: usize,
    pub min_child_particles: Option<usize>,
    pub max_child_particles: usize,
    /// POSS only: generated observations that matched an earlier one at the
    /// same node.
    pub observation_collisions: usize,
    pub generative_calls: usize,
    /// Largest `|Q̂|` computed at any node.
    pub max_abs_q: f64,
}

impl TreeStats {
    fn record_child(&mut self, particles: usize) {
        self.child_beliefs += 1;
        self.min_child_particles = Some(self.min_child_particles.map_or(particles, |m| m.min(particles)));
        self.max_child_particles = self.max_child_particles.max(particles);
    }
}

/// A POSS or POWSS planner bound to one problem.
///
/// Runs are single-threaded and consume the random stream in a fixed order,
/// so equal seeds give bit-identical results. Root actions are estimated in
/// index order from one shared set of root particles.
pub struct Planner<'a, P: Pomdp> {
    problem: &'a P,
    config: SolverConfig,
    stats: TreeStats,
}

impl<'a, P: Pomdp> Planner<'a, P> {
    pub fn new(problem: &'a P, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        Ok(Self {
            problem,
            config,
            stats: TreeStats::default(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Statistics of the tree built by the last `select_action*` call.
    pub fn stats(&self) -> &TreeStats {
        &self.stats
    }

    /// Samples `C` root particles from the initial belief and plans from them.
    pub fn select_action<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<QEstimates, SolverError> {
        let root = sample_initial_particles(self.problem, self.config.width, rng)?;
        self.select_action_from(&root, rng)
    }

    /// Plans from a given root particle set of exactly `C` particles.
    pub fn select_action_from<R: Rng + ?Sized>(
        &mut self,
        root: &WeightedParticleSet<P::State>,
        rng: &mut R,
    ) -> Result<QEstimates, SolverError> {
        if root.len() != self.config.width {
            return Err(SolverError::InvalidConfig(format!(
                "root has {} particles, width is {}",
                root.len(),
                self.config.width
            )));
        }
        self.stats = TreeStats::default();
        let per_action = (0..self.problem.action_count())
            .map(|a| self.estimate_q(root, a, 0, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(QEstimates::from_values(per_action))
    }

    /// `max_a Q̂_d(b̄, a)`, or 0 at or beyond the horizon.
    pub fn estimate_v<R: Rng + ?Sized>(
        &mut self,
        belief: &WeightedParticleSet<P::State>,
        depth: usize,
        rng: &mut R,
    ) -> Result<f64, SolverError> {
        if depth >= self.config.horizon {
            return Ok(0.0);
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.problem.action_count() {
            best = best.max(self.estimate_q(belief, a, depth, rng)?);
        }
        Ok(best)
    }

    pub fn estimate_q<R: Rng + ?Sized>(
        &mut self,
        belief: &WeightedParticleSet<P::State>,
        action: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<f64, SolverError> {
        let q = match self.config.kind {
            SolverKind::Poss => self.poss_estimate_q(belief, action, depth, rng),
            SolverKind::Powss => self.powss_estimate_q(belief, action, depth, rng),
        }?;
        self.stats.max_abs_q = self.stats.max_abs_q.max(q.abs());
        Ok(q)
    }

    /// Unweighted estimate: `C` outcomes (cycling through the particles when
    /// there are fewer than `C`), children grouped by exact observation
    /// equality, and a plain average of `r_i + γ V̂(child(o_i))`.
    pub fn poss_estimate_q<R: Rng + ?Sized>(
        &mut self,
        belief: &WeightedParticleSet<P::State>,
        action: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<f64, SolverError> {
        if belief.is_empty() {
            return Err(PomdpError::ZeroWidth.into());
        }
        let width = self.config.width;
        let states = belief.states();
        let outcomes: Vec<_> = (0..width)
            .map(|i| self.problem.generate(&states[i % states.len()], action, rng))
            .collect();
        self.stats.generative_calls += width;

        if depth + 1 >= self.config.horizon {
            return Ok(outcomes.iter().map(|o| o.reward).sum::<f64>() / width as f64);
        }

        // Group by observation, in order of first appearance.
        let mut group_of: HashMap<u64, usize> = HashMap::with_capacity(width);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut membership = Vec::with_capacity(width);
        for (i, outcome) in outcomes.iter().enumerate() {
            let key = observation_key(outcome.observation);
            let g = *group_of.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            if !groups[g].is_empty() {
                self.stats.observation_collisions += 1;
            }
            groups[g].push(i);
            membership.push(g);
        }

        let mut child_values = Vec::with_capacity(groups.len());
        for members in &groups {
            let child_states = members
                .iter()
                .map(|&i| outcomes[i].next_state.clone())
                .collect::<Vec<_>>();
            let weights = vec![1.0; child_states.len()];
            self.stats.record_child(child_states.len());
            let child = WeightedParticleSet::from_parts(child_states, weights, depth + 1);
            child_values.push(self.estimate_v(&child, depth + 1, rng)?);
        }

        let gamma = self.config.discount;
        let total: f64 = outcomes
            .iter()
            .zip(&membership)
            .map(|(o, &g)| o.reward + gamma * child_values[g])
            .sum();
        Ok(total / width as f64)
    }

    /// Weighted estimate: one outcome per particle, and for each sampled
    /// observation `o_j` a child holding all next states with weights
    /// `w_i · Z(o_j | a, s'_i)`. Returns the self-normalized average of
    /// `r_i + γ V̂(child(o_i))`.
    pub fn powss_estimate_q<R: Rng + ?Sized>(
        &mut self,
        belief: &WeightedParticleSet<P::State>,
        action: usize,
        depth: usize,
        rng: &mut R,
    ) -> Result<f64, SolverError> {
        if belief.is_empty() {
            return Err(PomdpError::ZeroWidth.into());
        }
        let weights = belief.weights();
        let outcomes: Vec<_> = belief
            .states()
            .iter()
            .map(|s| self.problem.generate(s, action, rng))
            .collect();
        self.stats.generative_calls += outcomes.len();
        let zero_weight = || SolverError::ZeroTotalWeight { action, depth };

        if depth + 1 >= self.config.horizon {
            let rewards: Vec<f64> = outcomes.iter().map(|o| o.reward).collect();
            return sn_estimate(weights, &rewards).map_err(|e| estimator_error(e, action, depth));
        }

        let next_states: Vec<P::State> = outcomes.iter().map(|o| o.next_state.clone()).collect();
        let gamma = self.config.discount;
        let mut returns = Vec::with_capacity(outcomes.len());
        for (j, outcome) in outcomes.iter().enumerate() {
            // A zero-weight particle contributes nothing to the average.
            if weights[j] == 0.0 {
                returns.push(outcome.reward);
                continue;
            }
            let child_weights: Vec<f64> = next_states
                .iter()
                .zip(weights)
                .map(|(s, w)| w * self.problem.obs_density(action, s, outcome.observation))
                .collect();
            if !(child_weights.iter().sum::<f64>() > 0.0) {
                return Err(SolverError::ZeroTotalWeight {
                    action,
                    depth: depth + 1,
                });
            }
            self.stats.record_child(next_states.len());
            let child = WeightedParticleSet::from_parts(next_states.clone(), child_weights, depth + 1);
            let v = self.estimate_v(&child, depth + 1, rng)?;
            returns.push(outcome.reward + gamma * v);
        }
        sn_estimate(weights, &returns).map_err(|_| zero_weight())
    }
}

fn estimator_error(e: EstimatorError, action: usize, depth: usize) -> SolverError {
    match e {
        EstimatorError::ZeroTotalWeight => SolverError::ZeroTotalWeight { action, depth },
        other => SolverError::InvalidConfig(other.to_string()),
    }
}

/// Bit pattern used to test observations for exact equality; `-0.0` and
/// `0.0` compare equal and share a key.
fn observation_key(o: f64) -> u64 {
    if o == 0.0 {
        0
    } else {
        o.to_bits()
    }
}

/// Convenience wrapper: builds a [`Planner`] and runs it from the initial
/// belief.
pub fn select_action<P: Pomdp, R: Rng + ?Sized>(
    problem: &P,
    config: SolverConfig,
    rng: &mut R,
) -> Result<QEstimates, SolverError> {
    Planner::new(problem, config)?.select_action(rng)
}
