//! Exact finite-horizon solution by exhaustive expectimax.
//!
//! For problems whose observation density is constant on a finite set of
//! bins, the posterior after observing `o` depends only on `o`'s bin. The
//! belief-space tree over (action, bin) pairs is then finite and can be
//! enumerated, giving the optimal `Q*_d(b, a)` up to rounding.

use crate::pomdp::{ExactBelief, LosslessObservations};

use super::SolverError;

/// Exhaustive solver with a cap on the size of the enumerated tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolver {
    /// Maximum `(bins · actions)^(D − depth)` accepted before refusing.
    pub node_budget: f64,
}

impl Default for ExactSolver {
    fn default() -> Self {
        Self { node_budget: 1e8 }
    }
}

impl ExactSolver {
    pub fn new(node_budget: f64) -> Self {
        Self { node_budget }
    }

    fn check_size<P: LosslessObservations>(&self, problem: &P, depth: usize) -> Result<(), SolverError> {
        let actions = problem.action_count();
        let bins = (0..actions).map(|a| problem.obs_bin_count(a)).max().unwrap_or(1);
        let remaining = problem.horizon().saturating_sub(depth);
        let nodes = ((bins * actions) as f64).powi(remaining as i32);
        if nodes > self.node_budget {
            return Err(SolverError::IntractableSize {
                nodes,
                budget: self.node_budget,
            });
        }
        Ok(())
    }

    fn check_belief<P: LosslessObservations>(problem: &P, belief: &ExactBelief) -> Result<(), SolverError> {
        if belief.len() != problem.state_count() {
            return Err(SolverError::InvalidConfig(format!(
                "belief has {} entries, problem has {} states",
                belief.len(),
                problem.state_count()
            )));
        }
        Ok(())
    }

    /// Optimal `Q*_depth(b, a)` for every action. At or beyond the horizon
    /// every entry is 0.
    pub fn q_values<P: LosslessObservations>(
        &self,
        problem: &P,
        belief: &ExactBelief,
        depth: usize,
    ) -> Result<Vec<f64>, SolverError> {
        Self::check_belief(problem, belief)?;
        self.check_size(problem, depth)?;
        Ok((0..problem.action_count())
            .map(|a| q_value(problem, belief, a, depth))
            .collect())
    }

    /// Optimal `V*_depth(b)`.
    pub fn value<P: LosslessObservations>(
        &self,
        problem: &P,
        belief: &ExactBelief,
        depth: usize,
    ) -> Result<f64, SolverError> {
        Self::check_belief(problem, belief)?;
        self.check_size(problem, depth)?;
        Ok(value(problem, belief, depth))
    }

    /// Expected discounted return from `depth` of a policy that maps the exact
    /// belief and the current depth to an action.
    pub fn policy_value<P, F>(
        &self,
        problem: &P,
        belief: &ExactBelief,
        depth: usize,
        policy: &F,
    ) -> Result<f64, SolverError>
    where
        P: LosslessObservations,
        F: Fn(&ExactBelief, usize) -> usize,
    {
        Self::check_belief(problem, belief)?;
        self.check_size(problem, depth)?;
        Ok(policy_value(problem, belief, depth, policy))
    }
}

/// Exact Q-values with the default node budget.
pub fn exact_q_values<P: LosslessObservations>(
    problem: &P,
    belief: &ExactBelief,
    depth: usize,
) -> Result<Vec<f64>, SolverError> {
    ExactSolver::default().q_values(problem, belief, depth)
}

fn expected_reward<P: LosslessObservations>(problem: &P, belief: &ExactBelief, action: usize) -> f64 {
    belief
        .probabilities()
        .iter()
        .enumerate()
        .filter(|(_, b)| **b > 0.0)
        .map(|(s, b)| b * problem.expected_reward(s, action))
        .sum()
}

/// `Σ_bin P(bin | b, a) · f(b_{a,bin})` over bins of positive probability.
fn expect_over_bins<P, F>(problem: &P, belief: &ExactBelief, action: usize, mut f: F) -> f64
where
    P: LosslessObservations,
    F: FnMut(&ExactBelief) -> f64,
{
    let predicted = belief.predict(problem, action);
    let mut total = 0.0;
    for bin in 0..problem.obs_bin_count(action) {
        let joint: Vec<f64> = predicted
            .iter()
            .enumerate()
            .map(|(next, p)| {
                if *p > 0.0 {
                    p * problem.bin_probability(action, next, bin)
                } else {
                    0.0
                }
            })
            .collect();
        let mass: f64 = joint.iter().sum();
        if mass > 0.0 {
            let posterior = ExactBelief::from_unnormalized(joint).expect("positive mass");
            total += mass * f(&posterior);
        }
    }
    total
}

fn q_value<P: LosslessObservations>(problem: &P, belief: &ExactBelief, action: usize, depth: usize) -> f64 {
    if depth >= problem.horizon() {
        return 0.0;
    }
    let reward = expected_reward(problem, belief, action);
    if depth + 1 >= problem.horizon() {
        return reward;
    }
    let continuation = expect_over_bins(problem, belief, action, |next| value(problem, next, depth + 1));
    reward + problem.discount() * continuation
}

fn value<P: LosslessObservations>(problem: &P, belief: &ExactBelief, depth: usize) -> f64 {
    if depth >= problem.horizon() {
        return 0.0;
    }
    (0..problem.action_count())
        .map(|a| q_value(problem, belief, a, depth))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn policy_value<P, F>(problem: &P, belief: &ExactBelief, depth: usize, policy: &F) -> f64
where
    P: LosslessObservations,
    F: Fn(&ExactBelief, usize) -> usize,
{
    if depth >= problem.horizon() {
        return 0.0;
    }
    let action = policy(belief, depth);
    let reward = expected_reward(problem, belief, action);
    let continuation = expect_over_bins(problem, belief, action, |next| {
        policy_value(problem, next, depth + 1, policy)
    });
    reward + problem.discount() * continuation
}
