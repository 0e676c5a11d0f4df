//! Finite-horizon MDP machinery: state vectors, environments, rollouts and
//! exact dynamic programming over tabular models.

mod tabular;

pub use tabular::{
    dp_evaluate, ell_tilde, qdagger_loss, zero_one_loss, TabularMdp, TabularPolicy, ValueTables,
};

use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random stream used everywhere a seed must fully determine the outcome.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed; used to give every rollout its own stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed-dimension real state with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("state vector must have positive dimension"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "state component {i} is {}",
                values[i]
            )));
        }
        Ok(StateVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        StateVector::new(v)
    }
}

impl From<StateVector> for Vec<f64> {
    fn from(s: StateVector) -> Vec<f64> {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match *self {
            Action::Discrete(i) => Some(i),
            Action::Continuous(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Action::Continuous(v) => Some(v),
            Action::Discrete(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { low: f64, high: f64 },
}

impl ActionSpace {
    pub fn num_discrete(&self) -> Option<usize> {
        match *self {
            ActionSpace::Discrete { n } => Some(n),
            ActionSpace::Continuous { .. } => None,
        }
    }

    pub fn contains(&self, a: &Action) -> bool {
        match (self, a) {
            (ActionSpace::Discrete { n }, Action::Discrete(i)) => i < n,
            (ActionSpace::Continuous { low, high }, Action::Continuous(v)) => {
                v.is_finite() && *low <= *v && *v <= *high
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub reward: f64,
    pub done: bool,
}

/// A deterministic simulator with gym-style episodes.
///
/// All randomness comes from `reset`; environments that need more (serves
/// after a point, for instance) keep a private stream seeded there, so a
/// clone taken mid-episode replays identically.
pub trait Environment: Clone + Send + Sync {
    fn id(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn max_steps(&self) -> usize;
    fn reset(&mut self, rng: &mut SimRng) -> StateVector;
    fn state(&self) -> StateVector;
    fn step(&mut self, action: Action) -> Result<Transition>;

    /// Replaces any internal random stream; a no-op for deterministic
    /// environments.
    fn reseed(&mut self, _seed: u64) {}

    /// `(time, state index)` for environments backed by a tabular MDP.
    fn tabular_position(&self) -> Option<(usize, usize)> {
        None
    }

    /// Overwrites the observable part of the state.
    fn restore(&mut self, _state: &StateVector) -> Result<()> {
        Err(Error::Unsupported(format!(
            "environment `{}` cannot restore arbitrary states",
            self.id()
        )))
    }
}

pub trait Policy: Sync {
    fn act(&self, state: &StateVector) -> Result<Action>;
}

impl<F> Policy for F
where
    F: Fn(&StateVector) -> Action + Sync,
{
    fn act(&self, state: &StateVector) -> Result<Action> {
        Ok(self(state))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: StateVector,
    pub action: Action,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub final_state: StateVector,
    pub terminated_early: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Every visited state, the final one included.
    pub fn states(&self) -> impl Iterator<Item = &StateVector> {
        self.steps
            .iter()
            .map(|s| &s.state)
            .chain(std::iter::once(&self.final_state))
    }
}

/// Runs `policy` in a fresh copy of `env` for at most `max_steps` steps.
pub fn rollout<E: Environment, P: Policy + ?Sized>(
    env: &E,
    policy: &P,
    max_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut env = env.clone();
    let mut rng = rng_from_seed(seed);
    let mut state = env.reset(&mut rng);
    let mut steps = Vec::new();
    let mut terminated_early = false;
    for t in 0..max_steps {
        let action = policy.act(&state)?;
        let tr = env.step(action).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("rollout step {t}: {msg}")),
            other => other,
        })?;
        steps.push(TrajectoryStep {
            state,
            action,
            reward: tr.reward,
        });
        state = tr.state;
        if tr.done {
            terminated_early = t + 1 < max_steps;
            break;
        }
    }
    Ok(Trajectory {
        steps,
        final_state: state,
        terminated_early,
    })
}

/// Mean total reward of `n` rollouts with seeds derived from `seed`.
pub fn mean_reward<E: Environment, P: Policy + ?Sized>(
    env: &E,
    policy: &P,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("need at least one evaluation rollout"));
    }
    let mut total = 0.0;
    for i in 0..n {
        let tr = rollout(env, policy, env.max_steps(), derive_seed(seed, i as u64))?;
        total += tr.total_reward();
    }
    Ok(total / n as f64)
}
