//! Bundled benchmark problems.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::pomdp::{ExactBelief, FiniteStates, GenerativeOutcome, LosslessObservations, Pomdp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("observation {0} outside the observation space [0, 1]")]
    DomainError(f64),
    #[error("unknown problem {0:?} (expected \"co-tiger\" or \"chain\")")]
    UnknownProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoTigerState {
    TigerL,
    TigerR,
    /// Absorbing state entered after a door is opened.
    Done,
}

impl CoTigerState {
    pub const ALL: [CoTigerState; 3] = [CoTigerState::TigerL, CoTigerState::TigerR, CoTigerState::Done];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoTigerAction {
    OpenL = 0,
    OpenR = 1,
    Wait = 2,
    Listen = 3,
}

impl CoTigerAction {
    pub const ALL: [CoTigerAction; 4] = [
        CoTigerAction::OpenL,
        CoTigerAction::OpenR,
        CoTigerAction::Wait,
        CoTigerAction::Listen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CoTigerAction::OpenL => "open-l",
            CoTigerAction::OpenR => "open-r",
            CoTigerAction::Wait => "wait",
            CoTigerAction::Listen => "listen",
        }
    }
}

/// Tiger problem with a continuous observation in `[0, 1]` and an extra,
/// uninformative `Wait` action.
///
/// Listening reports an observation in the half of `[0, 1]` matching the
/// tiger's side (`[0, 0.5]` for left, `(0.5, 1]` for right) 85% of the time,
/// uniformly within the half. Waiting yields a uniform observation. Opening
/// a door pays +10 or -10 and moves to the absorbing `Done` state, which
/// emits uniform observations and zero reward forever.
#[derive(Debug, Clone, PartialEq)]
pub struct CoTiger {
    pub discount: f64,
    pub horizon: usize,
}

impl Default for CoTiger {
    fn default() -> Self {
        Self::new()
    }
}

impl CoTiger {
    pub const CORRECT_LISTEN: f64 = 0.85;
    /// 0.85 of the mass spread over a half-interval of length 0.5.
    pub const LISTEN_DENSITY_CORRECT: f64 = 1.7;
    pub const LISTEN_DENSITY_WRONG: f64 = 0.3;
    pub const OPEN_REWARD: f64 = 10.0;
    pub const OPEN_PENALTY: f64 = -10.0;
    pub const WAIT_COST: f64 = -1.0;
    pub const LISTEN_COST: f64 = -2.0;

    pub fn new() -> Self {
        Self {
            discount: 0.95,
            horizon: 3,
        }
    }

    fn reward(state: CoTigerState, action: CoTigerAction) -> f64 {
        use CoTigerAction::*;
        use CoTigerState::*;
        match (state, action) {
            (Done, _) => 0.0,
            (TigerL, OpenL) | (TigerR, OpenR) => Self::OPEN_PENALTY,
            (TigerL, OpenR) | (TigerR, OpenL) => Self::OPEN_REWARD,
            (_, Wait) => Self::WAIT_COST,
            (_, Listen) => Self::LISTEN_COST,
        }
    }

    fn successor(state: CoTigerState, action: CoTigerAction) -> CoTigerState {
        match (state, action) {
            (CoTigerState::Done, _) => CoTigerState::Done,
            (_, CoTigerAction::OpenL | CoTigerAction::OpenR) => CoTigerState::Done,
            (s, _) => s,
        }
    }

    fn action(index: usize) -> CoTigerAction {
        CoTigerAction::from_index(index).unwrap_or_else(|| panic!("co-tiger has no action {index}"))
    }
}

/// Observation density of the continuous-observation tiger problem.
pub fn co_tiger_obs_density(
    action: CoTigerAction,
    next_state: CoTigerState,
    observation: f64,
) -> Result<f64, ProblemError> {
    if !(0.0..=1.0).contains(&observation) {
        return Err(ProblemError::DomainError(observation));
    }
    let left_half = observation <= 0.5;
    let density = match (action, next_state) {
        (CoTigerAction::Listen, CoTigerState::TigerL) => {
            if left_half {
                CoTiger::LISTEN_DENSITY_CORRECT
            } else {
                CoTiger::LISTEN_DENSITY_WRONG
            }
        }
        (CoTigerAction::Listen, CoTigerState::TigerR) => {
            if left_half {
                CoTiger::LISTEN_DENSITY_WRONG
            } else {
                CoTiger::LISTEN_DENSITY_CORRECT
            }
        }
        _ => 1.0,
    };
    Ok(density)
}

impl Pomdp for CoTiger {
    type State = CoTigerState;

    fn action_count(&self) -> usize {
        4
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn r_max(&self) -> f64 {
        10.0
    }

    fn generate<R: Rng + ?Sized>(
        &self,
        state: &CoTigerState,
        action: usize,
        rng: &mut R,
    ) -> GenerativeOutcome<CoTigerState> {
        let action = Self::action(action);
        let next_state = Self::successor(*state, action);
        let observation = match (action, next_state) {
            (CoTigerAction::Listen, CoTigerState::TigerL | CoTigerState::TigerR) => {
                // Bin first, then a uniform position inside the bin.
                let correct = rng.gen_bool(Self::CORRECT_LISTEN);
                let left_bin = correct == (next_state == CoTigerState::TigerL);
                let u: f64 = rng.gen();
                if left_bin {
                    0.5 * u
                } else {
                    1.0 - 0.5 * u
                }
            }
            _ => rng.gen(),
        };
        GenerativeOutcome {
            next_state,
            observation,
            reward: Self::reward(*state, action),
            terminal: next_state == CoTigerState::Done,
        }
    }

    fn obs_density(&self, action: usize, next_state: &CoTigerState, observation: f64) -> f64 {
        co_tiger_obs_density(Self::action(action), *next_state, observation).unwrap_or(0.0)
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> CoTigerState {
        if rng.gen_bool(0.5) {
            CoTigerState::TigerL
        } else {
            CoTigerState::TigerR
        }
    }

    fn action_name(&self, action: usize) -> String {
        Self::action(action).name().to_string()
    }
}

impl FiniteStates for CoTiger {
    fn state_count(&self) -> usize {
        3
    }

    fn state_index(&self, state: &CoTigerState) -> usize {
        state.index()
    }

    fn state_at(&self, index: usize) -> CoTigerState {
        CoTigerState::ALL[index]
    }

    fn transition_prob(&self, state: usize, action: usize, next_state: usize) -> f64 {
        let next = Self::successor(CoTigerState::ALL[state], Self::action(action));
        if next.index() == next_state {
            1.0
        } else {
            0.0
        }
    }

    fn expected_reward(&self, state: usize, action: usize) -> f64 {
        Self::reward(CoTigerState::ALL[state], Self::action(action))
    }

    fn initial_belief(&self) -> ExactBelief {
        ExactBelief::new(vec![0.5, 0.5, 0.0]).expect("valid uniform belief")
    }
}

impl LosslessObservations for CoTiger {
    fn obs_bin_count(&self, _action: usize) -> usize {
        2
    }

    /// `[0, 0.5]` is bin 0 and `(0.5, 1]` is bin 1.
    fn obs_bin(&self, _action: usize, observation: f64) -> usize {
        usize::from(observation > 0.5)
    }

    fn bin_probability(&self, action: usize, next_state: usize, bin: usize) -> f64 {
        // Densities are constant on each half, and each half has length 0.5.
        let representative = if bin == 0 { 0.25 } else { 0.75 };
        0.5 * self.obs_density(action, &CoTigerState::ALL[next_state], representative)
    }
}

/// A deterministic one-state problem with two actions paying 0 and 1.
///
/// Every solver must value action 1 at exactly `Σ_{d<D} γ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub discount: f64,
    pub horizon: usize,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new(0.5, 3)
    }
}

impl Chain {
    pub fn new(discount: f64, horizon: usize) -> Self {
        Self { discount, horizon }
    }
}

impl Pomdp for Chain {
    type State = ();

    fn action_count(&self) -> usize {
        2
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn r_max(&self) -> f64 {
        1.0
    }

    fn generate<R: Rng + ?Sized>(&self, _: &(), action: usize, rng: &mut R) -> GenerativeOutcome<()> {
        GenerativeOutcome {
            next_state: (),
            observation: rng.gen(),
            reward: action as f64,
            terminal: false,
        }
    }

    fn obs_density(&self, _: usize, _: &(), observation: f64) -> f64 {
        if (0.0..=1.0).contains(&observation) {
            1.0
        } else {
            0.0
        }
    }

    fn sample_initial<R: Rng + ?Sized>(&self, _: &mut R) {}
}

impl FiniteStates for Chain {
    fn state_count(&self) -> usize {
        1
    }

    fn state_index(&self, _: &()) -> usize {
        0
    }

    fn state_at(&self, _: usize) {}

    fn transition_prob(&self, _: usize, _: usize, _: usize) -> f64 {
        1.0
    }

    fn expected_reward(&self, _: usize, action: usize) -> f64 {
        action as f64
    }

    fn initial_belief(&self) -> ExactBelief {
        ExactBelief::point_mass(1, 0)
    }
}

impl LosslessObservations for Chain {
    fn obs_bin_count(&self, _: usize) -> usize {
        1
    }

    fn obs_bin(&self, _: usize, _: f64) -> usize {
        0
    }

    fn bin_probability(&self, _: usize, _: usize, _: usize) -> f64 {
        1.0
    }
}

/// Names accepted on the command line and in sweep configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemName {
    CoTiger,
    Chain,
}

impl ProblemName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemName::CoTiger => "co-tiger",
            ProblemName::Chain => "chain",
        }
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "co-tiger" => Ok(ProblemName::CoTiger),
            "chain" => Ok(ProblemName::Chain),
            other => Err(ProblemError::UnknownProblem(other.to_string())),
        }
    }
}

/// Runs `$body` with `$p` bound to the bundled problem named by `$name`.
#[macro_export]
macro_rules! with_problem {
    ($name:expr, $p:ident => $body:expr) => {
        match $name {
            $crate::problems::ProblemName::CoTiger => {
                let $p = $crate::problems::CoTiger::new();
                $body
            }
            $crate::problems::ProblemName::Chain => {
                let $p = $crate::problems::Chain::default();
                $body
            }
        }
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{exact_bayes_update, validate_problem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Midpoint rule on a grid aligned with the density's breakpoint at 0.5.
    fn integrate(f: impl Fn(f64) -> f64) -> f64 {
        let n = 200_000;
        let h = 1.0 / n as f64;
        (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn bundled_problems_are_valid() {
        validate_problem(&CoTiger::new()).unwrap();
        validate_problem(&Chain::default()).unwrap();
        validate_problem(&Chain::new(0.0, 1)).unwrap();
        assert!(validate_problem(&Chain::new(1.0, 3)).is_err());
        assert!(validate_problem(&Chain::new(0.5, 0)).is_err());
    }

    #[test]
    fn open_rewards() {
        let tiger = CoTiger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = tiger.generate(&CoTigerState::TigerL, CoTigerAction::OpenL.index(), &mut rng);
        assert_eq!(out.reward, -10.0);
        assert!(out.terminal);
        assert_eq!(out.next_state, CoTigerState::Done);
        let out = tiger.generate(&CoTigerState::TigerL, CoTigerAction::OpenR.index(), &mut rng);
        assert_eq!(out.reward, 10.0);
        assert!(out.terminal);
    }

    #[test]
    fn done_is_absorbing() {
        let tiger = CoTiger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for a in 0..4 {
            for _ in 0..50 {
                let out = tiger.generate(&CoTigerState::Done, a, &mut rng);
                assert_eq!(out.next_state, CoTigerState::Done);
                assert_eq!(out.reward, 0.0);
                assert!(out.terminal);
                assert!((0.0..=1.0).contains(&out.observation));
            }
        }
    }

    #[test]
    fn listen_is_correct_85_percent() {
        let tiger = CoTiger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let left = (0..n)
            .filter(|_| {
                let out = tiger.generate(&CoTigerState::TigerL, CoTigerAction::Listen.index(), &mut rng);
                assert!(!out.terminal);
                assert_eq!(out.reward, -2.0);
                out.observation <= 0.5
            })
            .count() as f64
            / n as f64;
        assert!((0.84..=0.86).contains(&left), "fraction {left}");
    }

    #[test]
    fn density_examples() {
        use CoTigerAction::*;
        use CoTigerState::*;
        assert_eq!(co_tiger_obs_density(Listen, TigerL, 0.2), Ok(1.7));
        assert_eq!(co_tiger_obs_density(Listen, TigerL, 0.5), Ok(1.7));
        assert_eq!(co_tiger_obs_density(Wait, TigerR, 0.9), Ok(1.0));
        assert_eq!(co_tiger_obs_density(Listen, TigerR, 0.2), Ok(0.3));
        assert_eq!(co_tiger_obs_density(Listen, Done, 0.2), Ok(1.0));
        assert_eq!(co_tiger_obs_density(OpenL, Done, 0.7), Ok(1.0));
        assert_eq!(
            co_tiger_obs_density(Listen, TigerL, 1.2),
            Err(ProblemError::DomainError(1.2))
        );
        assert!(co_tiger_obs_density(Wait, TigerL, -0.1).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        for action in CoTigerAction::ALL {
            for state in CoTigerState::ALL {
                let total = integrate(|o| co_tiger_obs_density(action, state, o).unwrap());
                assert!((total - 1.0).abs() < 1e-9, "{action:?} {state:?}: {total}");
            }
        }
        let chain = Chain::default();
        for a in 0..2 {
            assert!((integrate(|o| chain.obs_density(a, &(), o)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bins_are_lossless() {
        let tiger = CoTiger::new();
        for a in 0..4 {
            for s in 0..3 {
                let state = CoTigerState::ALL[s];
                for bin in 0..2 {
                    let (lo, hi) = if bin == 0 { (0.0, 0.5) } else { (0.5 + 1e-12, 1.0) };
                    let reference = tiger.obs_density(a, &state, lo);
                    for k in 0..=100 {
                        let o = lo + (hi - lo) * k as f64 / 100.0;
                        assert_eq!(tiger.obs_bin(a, o), bin);
                        assert_eq!(tiger.obs_density(a, &state, o), reference);
                    }
                    let mass = integrate(|o| {
                        if tiger.obs_bin(a, o) == bin {
                            tiger.obs_density(a, &state, o)
                        } else {
                            0.0
                        }
                    });
                    assert!((mass - tiger.bin_probability(a, s, bin)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn listen_posterior_matches_bin() {
        let tiger = CoTiger::new();
        let uniform = tiger.initial_belief();
        for k in 1..50 {
            let o = 0.5 * k as f64 / 50.0;
            let b = exact_bayes_update(&tiger, &uniform, CoTigerAction::Listen.index(), o).unwrap();
            assert!((b.probabilities()[0] - 0.85).abs() < 1e-12);
            let b = exact_bayes_update(&tiger, &uniform, CoTigerAction::Listen.index(), 1.0 - o).unwrap();
            assert!((b.probabilities()[1] - 0.85).abs() < 1e-12);
        }
    }

    #[test]
    fn transitions_are_stochastic() {
        let tiger = CoTiger::new();
        for s in 0..3 {
            for a in 0..4 {
                let total: f64 = (0..3).map(|n| tiger.transition_prob(s, a, n)).sum();
                assert_eq!(total, 1.0);
            }
        }
    }

    #[test]
    fn problem_names_parse() {
        assert_eq!("co-tiger".parse::<ProblemName>(), Ok(ProblemName::CoTiger));
        assert_eq!("chain".parse::<ProblemName>(), Ok(ProblemName::Chain));
        assert!("tiger".parse::<ProblemName>().is_err());
        assert_eq!(ProblemName::CoTiger.to_string(), "co-tiger");
    }
}
