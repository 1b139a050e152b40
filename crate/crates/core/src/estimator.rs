//! Self-normalized importance sampling and the bounds built on it.
//!
//! Given samples `x_i ~ Q` and unnormalized importance weights
//! `w_i ∝ P(x_i)/Q(x_i)`, the self-normalized (SN) estimator of `E_P[f]` is
//! `Σ w_i f(x_i) / Σ w_i`. It is biased, but with a bounded weight ratio
//! (`d∞ = ess sup w < ∞`) its bias is at most `‖f‖∞ d∞ / √N` and its error
//! concentrates exponentially in `N`.
//!
//! POWSS's Q-estimates are SN estimates at every node, so the same quantities
//! determine how wide a POWSS tree must be for a target accuracy; see
//! [`planning_bounds`].
//!
//! On `d∞` for planning: the weight of a particle at depth `d` is a product of
//! `d` observation densities, so a per-step ratio bound `ρ` (1.7 for the
//! continuous tiger problem) admits two readings, `d∞ ≤ ρ` per step or
//! `d∞ ≤ ρ^d` cumulatively. [`planning_bounds`] takes `d_inf_max` from the
//! caller and makes no choice between them.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("total weight is zero")]
    ZeroTotalWeight,
    #[error("{weights} weights but {values} values")]
    LengthMismatch { weights: usize, values: usize },
    #[error("no samples")]
    Empty,
    #[error("t(λ, N) = {t} ≤ 0: N is too small for the requested accuracy")]
    InvalidRegime { t: f64 },
}

/// `Σ w_i f_i / Σ w_i`.
///
/// Computed as `f_0 + Σ w_i (f_i - f_0) / Σ w_i`, which is algebraically the
/// same but returns a constant `f` exactly.
pub fn sn_estimate(weights: &[f64], values: &[f64]) -> Result<f64, EstimatorError> {
    if weights.len() != values.len() {
        return Err(EstimatorError::LengthMismatch {
            weights: weights.len(),
            values: values.len(),
        });
    }
    let Some(&reference) = values.first() else {
        return Err(EstimatorError::Empty);
    };
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(EstimatorError::ZeroTotalWeight);
    }
    let shift: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, f)| w * (f - reference))
        .sum();
    Ok(reference + shift / total)
}

/// Upper bound `‖f‖∞ d∞ / √N` on the bias of the SN estimator.
pub fn sn_bias_bound(f_inf: f64, d_inf: f64, n: usize) -> f64 {
    f_inf * d_inf / (n as f64).sqrt()
}

/// `t(λ, N) = λ / (‖f‖∞ d∞) − 1/√N`. Only positive values give a usable
/// concentration bound.
pub fn concentration_t(lambda: f64, n: usize, f_inf: f64, d_inf: f64) -> f64 {
    lambda / (f_inf * d_inf) - 1.0 / (n as f64).sqrt()
}

/// `3 exp(−N t²)`, the probability that the SN estimate misses `E_P[f]` by
/// more than `λ`. Not clamped to 1.
pub fn concentration_failure_bound(
    lambda: f64,
    n: usize,
    f_inf: f64,
    d_inf: f64,
) -> Result<f64, EstimatorError> {
    let t = concentration_t(lambda, n, f_inf, d_inf);
    if !(t > 0.0) {
        return Err(EstimatorError::InvalidRegime { t });
    }
    Ok(failure_bound_from_t(t, n))
}

/// `3 exp(−N t²)` for a given `t`.
pub fn failure_bound_from_t(t: f64, n: usize) -> f64 {
    3.0 * (-(n as f64) * t * t).exp()
}

/// Observed weight ratio `N max(w) / Σ w`.
///
/// This is the largest self-normalized weight rescaled so that uniform
/// weights give 1. As a sample maximum it can only under-estimate the
/// essential supremum, so treat it as a diagnostic.
pub fn empirical_d_inf(raw_weights: &[f64]) -> Result<f64, EstimatorError> {
    if raw_weights.is_empty() {
        return Err(EstimatorError::Empty);
    }
    let total: f64 = raw_weights.iter().sum();
    if !(total > 0.0) {
        return Err(EstimatorError::ZeroTotalWeight);
    }
    let max = raw_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw_weights.len() as f64 * max / total)
}

/// Constants that make every POWSS Q-estimate `ε`-accurate with high
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub epsilon: f64,
    /// Per-node accuracy `λ = ε(1−γ)²/5`.
    pub lambda: f64,
    /// Allowed failure probability `δ = λ / (V_max D (1−γ)²)`.
    pub delta: f64,
    /// `t_max(λ, C)` evaluated at `min_width`.
    pub t_max: f64,
    pub d_inf_max: f64,
    pub v_max: f64,
    /// Smallest width `C` meeting both the positivity condition on `t_max`
    /// and the failure-probability condition.
    pub min_width: u128,
    /// `alpha_sequence[d] = α_d`, with `α_{D−1} = λ` and
    /// `α_d = λ + γ α_{d+1}`.
    pub alpha_sequence: Vec<f64>,
}

/// Inputs to [`planning_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsInput {
    pub epsilon: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub depth: usize,
    pub action_count: usize,
    pub d_inf_max: f64,
}

impl BoundsInput {
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn lambda(&self) -> f64 {
        self.epsilon * (1.0 - self.gamma).powi(2) / 5.0
    }

    pub fn delta(&self) -> f64 {
        self.lambda() / (self.v_max() * self.depth as f64 * (1.0 - self.gamma).powi(2))
    }

    /// `t_max(λ, C) = λ / (3 V_max d∞) − 1/√C`.
    pub fn t_max(&self, width: u128) -> f64 {
        self.lambda() / (3.0 * self.v_max() * self.d_inf_max) - 1.0 / (width as f64).sqrt()
    }

    /// Natural log of `3|A| (3|A|C)^D exp(−C t_max²)`.
    pub fn log_failure(&self, width: u128) -> f64 {
        let a = self.action_count as f64;
        let c = width as f64;
        let t = self.t_max(width);
        (3.0 * a).ln() + self.depth as f64 * (3.0 * a * c).ln() - c * t * t
    }

    /// Whether `width` satisfies both conditions.
    pub fn width_suffices(&self, width: u128) -> bool {
        width >= 1 && self.t_max(width) > 0.0 && self.log_failure(width) <= self.delta().ln()
    }
}

/// Computes λ, δ, the α sequence and the minimal width.
///
/// Panics on inputs outside the domain (non-positive ε, r_max or depth,
/// γ outside `[0, 1)`, d∞ < 1, no actions).
pub fn planning_bounds(input: BoundsInput) -> BoundsReport {
    assert!(input.epsilon > 0.0, "epsilon must be positive");
    assert!((0.0..1.0).contains(&input.gamma), "gamma must lie in [0, 1)");
    assert!(input.r_max > 0.0, "r_max must be positive");
    assert!(input.depth >= 1, "depth must be at least 1");
    assert!(input.action_count >= 1, "need at least one action");
    assert!(input.d_inf_max >= 1.0, "d_inf_max must be at least 1");

    let lambda = input.lambda();
    let mut alpha_sequence = vec![0.0; input.depth];
    alpha_sequence[input.depth - 1] = lambda;
    for d in (0..input.depth - 1).rev() {
        alpha_sequence[d] = lambda + input.gamma * alpha_sequence[d + 1];
    }

    let min_width = minimal_width(&input);
    BoundsReport {
        epsilon: input.epsilon,
        lambda,
        delta: input.delta(),
        t_max: input.t_max(min_width),
        d_inf_max: input.d_inf_max,
        v_max: input.v_max(),
        min_width,
        alpha_sequence,
    }
}

/// Smallest `C` with `t_max(C) > 0` and `log_failure(C) ≤ ln δ`.
///
/// With `x = 1/√C`, the derivative of `log_failure` in `C` has the sign of
/// `D x² + a x − a²` (where `a` is the first term of `t_max`), so
/// `log_failure` rises and then falls. If the first admissible width fails,
/// every width on the rising stretch fails too, and the satisfying widths
/// form an upward-closed set that doubling plus bisection locates.
fn minimal_width(input: &BoundsInput) -> u128 {
    let a = input.lambda() / (3.0 * input.v_max() * input.d_inf_max);
    let threshold = (1.0 / a).powi(2);
    let mut start = (threshold.floor() as u128).max(1);
    while input.t_max(start) <= 0.0 {
        start += 1;
    }
    while start > 1 && input.t_max(start - 1) > 0.0 {
        start -= 1;
    }
    if input.width_suffices(start) {
        return start;
    }
    let mut lo = start;
    let mut hi = start.saturating_mul(2);
    while !input.width_suffices(hi) {
        lo = hi;
        hi = hi.checked_mul(2).expect("width search overflowed u128");
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if input.width_suffices(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sn_estimate_examples() {
        assert_eq!(sn_estimate(&[1.0, 1.0, 1.0], &[2.0, 4.0, 6.0]), Ok(4.0));
        assert_eq!(sn_estimate(&[3.0, 1.0], &[10.0, -10.0]), Ok(5.0));
        assert_eq!(sn_estimate(&[0.3, 0.3], &[7.0, 7.0]), Ok(7.0));
        assert_eq!(
            sn_estimate(&[0.0, 0.0], &[1.0, 2.0]),
            Err(EstimatorError::ZeroTotalWeight)
        );
        assert_eq!(
            sn_estimate(&[1.0], &[1.0, 2.0]),
            Err(EstimatorError::LengthMismatch {
                weights: 1,
                values: 2
            })
        );
        assert_eq!(sn_estimate(&[], &[]), Err(EstimatorError::Empty));
    }

    #[test]
    fn bias_bound_examples() {
        assert_eq!(sn_bias_bound(1.0, 1.0, 4), 0.5);
        assert!((sn_bias_bound(20.0, 1.7, 100) - 3.4).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for n in 1..200 {
            let b = sn_bias_bound(2.0, 1.3, n);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(concentration_t(1.0, 4, 1.0, 1.0), 0.5);
        assert_eq!(concentration_t(1.0, 4, 2.0, 1.0), 0.0);
        assert!((concentration_t(0.5, 100, 1.0, 1.7) - (0.5 / 1.7 - 0.1)).abs() < 1e-15);
        assert!((concentration_t(0.5, 100, 1.0, 1.7) - 0.1941).abs() < 1e-4);

        let p = concentration_failure_bound(1.0, 4, 1.0, 1.0).unwrap();
        assert!((p - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((p - 1.1036).abs() < 1e-4);
        assert!((failure_bound_from_t(1e-12, 4) - 3.0).abs() < 1e-12);
        assert!(matches!(
            concentration_failure_bound(1.0, 4, 2.0, 1.0),
            Err(EstimatorError::InvalidRegime { .. })
        ));
        let tiny = concentration_failure_bound(0.5, 10_000, 1.0, 1.0).unwrap();
        assert!(tiny < 1e-300);
    }

    #[test]
    fn empirical_d_inf_examples() {
        assert_eq!(empirical_d_inf(&[1.0, 1.0, 1.0, 1.0]), Ok(1.0));
        assert!((empirical_d_inf(&[1.7, 0.3]).unwrap() - 1.7).abs() < 1e-15);
        assert_eq!(empirical_d_inf(&[0.0]), Err(EstimatorError::ZeroTotalWeight));
        assert_eq!(empirical_d_inf(&[]), Err(EstimatorError::Empty));
    }

    #[test]
    fn bounds_plug_in() {
        let r = planning_bounds(BoundsInput {
            epsilon: 5.0,
            gamma: 0.0,
            r_max: 1.0,
            depth: 1,
            action_count: 1,
            d_inf_max: 1.0,
        });
        assert_eq!(r.lambda, 1.0);
        assert_eq!(r.v_max, 1.0);
        assert_eq!(r.delta, 1.0);
        assert_eq!(r.alpha_sequence, vec![1.0]);
        assert!(r.t_max > 0.0);
    }

    #[test]
    fn minimal_width_is_minimal() {
        for input in [
            BoundsInput { epsilon: 5.0, gamma: 0.0, r_max: 1.0, depth: 1, action_count: 1, d_inf_max: 1.0 },
            BoundsInput { epsilon: 50.0, gamma: 0.5, r_max: 1.0, depth: 2, action_count: 2, d_inf_max: 1.2 },
            BoundsInput { epsilon: 1.0, gamma: 0.95, r_max: 10.0, depth: 3, action_count: 4, d_inf_max: 1.7 },
        ] {
            let r = planning_bounds(input);
            assert!(input.width_suffices(r.min_width));
            assert!(!input.width_suffices(r.min_width - 1));
        }
    }

    #[test]
    fn generous_accuracy_hits_positivity_threshold() {
        // δ > 1 here, so the failure condition is slack and only t_max > 0 binds.
        let input = BoundsInput {
            epsilon: 1e6,
            gamma: 0.0,
            r_max: 1.0,
            depth: 1,
            action_count: 1,
            d_inf_max: 1.0,
        };
        let r = planning_bounds(input);
        assert!(input.t_max(r.min_width) > 0.0);
        assert!(r.min_width == 1 || input.t_max(r.min_width - 1) <= 0.0);
    }

    proptest! {
        #[test]
        fn sn_estimate_is_scale_invariant(
            pairs in proptest::collection::vec((0.01f64..10.0, -50.0f64..50.0), 1..40),
            c in 1e-6f64..1e6,
        ) {
            let (w, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let a = sn_estimate(&w, &f).unwrap();
            let b = sn_estimate(&scaled, &f).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn sn_estimate_is_a_convex_combination(
            pairs in proptest::collection::vec((0.0f64..10.0, -50.0f64..50.0), 1..40),
        ) {
            let (w, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let est = sn_estimate(&w, &f).unwrap();
            let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
            let bound = f.iter().map(|x| x.abs()).fold(0.0, f64::max);
            prop_assert!(est.abs() <= bound + 1e-12);
        }

        #[test]
        fn uniform_weights_give_the_mean(f in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let w = vec![0.25; f.len()];
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            prop_assert!((sn_estimate(&w, &f).unwrap() - mean).abs() <= 1e-12);
        }

        #[test]
        fn alpha_recurrence(eps in 0.1f64..10.0, gamma in 0.0f64..0.99, depth in 1usize..8) {
            let input = BoundsInput { epsilon: eps, gamma, r_max: 1.0, depth, action_count: 2, d_inf_max: 1.0 };
            let lambda = input.lambda();
            let alpha = planning_bounds(input).alpha_sequence;
            prop_assert_eq!(alpha[depth - 1], lambda);
            for d in 0..depth - 1 {
                prop_assert_eq!(alpha[d], lambda + gamma * alpha[d + 1]);
            }
            prop_assert!(alpha[0] <= lambda / (1.0 - gamma) * (1.0 + 1e-12));
        }
    }
}
