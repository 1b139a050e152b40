//! QMDP: value a belief by the fully observable MDP's Q-function,
//! `Q_MDP(b, a) = Σ_s b(s) Q_MDP(s, a)`.
//!
//! QMDP assumes the state becomes known after one step, so it never values
//! information gathering.

use crate::pomdp::{ExactBelief, FiniteStates};

/// Finite-horizon MDP Q-table with `steps` decisions remaining,
/// indexed `[state][action]`.
pub fn mdp_q_table<P: FiniteStates>(problem: &P, steps: usize) -> Vec<Vec<f64>> {
    let n = problem.state_count();
    let actions = problem.action_count();
    let gamma = problem.discount();
    let mut values = vec![0.0; n];
    let mut table = vec![vec![0.0; actions]; n];
    for _ in 0..steps {
        for (s, row) in table.iter_mut().enumerate() {
            for (a, q) in row.iter_mut().enumerate() {
                let continuation: f64 = (0..n)
                    .map(|next| problem.transition_prob(s, a, next) * values[next])
                    .sum();
                *q = problem.expected_reward(s, a) + gamma * continuation;
            }
        }
        for (v, row) in values.iter_mut().zip(&table) {
            *v = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    table
}

/// QMDP values at the root, with the problem's full horizon remaining.
pub fn qmdp_q_values<P: FiniteStates>(problem: &P, belief: &ExactBelief) -> Vec<f64> {
    qmdp_q_values_at(problem, belief, 0)
}

/// QMDP values at `depth`, i.e. with `horizon - depth` steps remaining.
pub fn qmdp_q_values_at<P: FiniteStates>(problem: &P, belief: &ExactBelief, depth: usize) -> Vec<f64> {
    let steps = problem.horizon().saturating_sub(depth);
    let table = mdp_q_table(problem, steps);
    (0..problem.action_count())
        .map(|a| {
            belief
                .probabilities()
                .iter()
                .zip(&table)
                .filter(|(b, _)| **b > 0.0)
                .map(|(b, row)| b * row[a])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Chain, CoTiger};

    #[test]
    fn tiger_qmdp() {
        let tiger = CoTiger::new();
        let q = qmdp_q_values(&tiger, &tiger.initial_belief());
        assert_eq!(q, vec![0.0, 0.0, 8.5, 7.5]);

        let known_left = ExactBelief::new(vec![1.0, 0.0, 0.0]).unwrap();
        let q = qmdp_q_values(&tiger, &known_left);
        assert_eq!(q[1], 10.0);
        assert_eq!(q[0], -10.0);
    }

    #[test]
    fn last_step_is_immediate_reward() {
        let tiger = CoTiger::new();
        let q = qmdp_q_values_at(&tiger, &tiger.initial_belief(), 2);
        assert_eq!(q, vec![0.0, 0.0, -1.0, -2.0]);
        let q = qmdp_q_values_at(&tiger, &tiger.initial_belief(), 3);
        assert_eq!(q, vec![0.0; 4]);
    }

    #[test]
    fn chain_qmdp_is_geometric() {
        let chain = Chain::default();
        let q = qmdp_q_values(&chain, &chain.initial_belief());
        assert_eq!(q, vec![0.75, 1.75]);
    }
}
