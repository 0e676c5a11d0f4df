//! Simulators and their symbolic descriptions.

pub mod cartpole;
pub mod duelpong;
pub mod figure2;
pub mod tabular;
pub mod toypong;

pub use cartpole::{CartPole, CartPoleParams, ForceMode};
pub use duelpong::{DuelPong, DuelPongParams};
pub use figure2::CriticalChain;
pub use tabular::TabularEnv;
pub use toypong::{ToyPong, ToyPongParams};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, Environment, SimRng, StateVector, Transition};

pub const ENV_IDS: [&str; 4] = ["cartpole", "toypong", "duelpong", "figure2"];

/// Any registered environment, dispatched by string id.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    CartPole(CartPole),
    ToyPong(ToyPong),
    DuelPong(DuelPong),
    Tabular(TabularEnv),
}

/// Parameters for the `figure2` id.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(default)]
struct ChainParams {
    k: usize,
    alpha: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams { k: 5, alpha: 0.5 }
    }
}

fn parse<T: serde::de::DeserializeOwned + Default>(params: Option<&Value>) -> Result<T> {
    match params {
        None | Some(Value::Null) => Ok(T::default()),
        Some(v) => Ok(serde_json::from_value(v.clone())?),
    }
}

/// Builds environment `id` from optional JSON parameters; missing fields
/// take their defaults.
pub fn make_env(id: &str, params: Option<&Value>) -> Result<AnyEnv> {
    match id {
        "cartpole" => Ok(AnyEnv::CartPole(CartPole::new(parse(params)?)?)),
        "toypong" => Ok(AnyEnv::ToyPong(ToyPong::new(parse(params)?)?)),
        "duelpong" => Ok(AnyEnv::DuelPong(DuelPong::new(parse(params)?)?)),
        "figure2" => {
            let p: ChainParams = parse(params)?;
            let chain = CriticalChain::new(p.k, p.alpha)?;
            let features = chain.embedding();
            Ok(AnyEnv::Tabular(TabularEnv::new(chain.mdp, features)?))
        }
        other => Err(Error::invalid(format!(
            "unknown environment `{other}`; known: {}",
            ENV_IDS.join(", ")
        ))),
    }
}

macro_rules! dispatch {
    ($self:expr, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::CartPole($e) => $body,
            AnyEnv::ToyPong($e) => $body,
            AnyEnv::DuelPong($e) => $body,
            AnyEnv::Tabular($e) => $body,
        }
    };
}

impl Environment for AnyEnv {
    fn id(&self) -> &'static str {
        match self {
            AnyEnv::Tabular(_) => "figure2",
            other => dispatch!(other, e => e.id()),
        }
    }

    fn dim(&self) -> usize {
        dispatch!(self, e => e.dim())
    }

    fn action_space(&self) -> ActionSpace {
        dispatch!(self, e => e.action_space())
    }

    fn max_steps(&self) -> usize {
        dispatch!(self, e => e.max_steps())
    }

    fn reset(&mut self, rng: &mut SimRng) -> StateVector {
        dispatch!(self, e => e.reset(rng))
    }

    fn state(&self) -> StateVector {
        dispatch!(self, e => e.state())
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        dispatch!(self, e => e.step(action))
    }

    fn reseed(&mut self, seed: u64) {
        dispatch!(self, e => e.reseed(seed))
    }

    fn tabular_position(&self) -> Option<(usize, usize)> {
        dispatch!(self, e => e.tabular_position())
    }

    fn restore(&mut self, state: &StateVector) -> Result<()> {
        dispatch!(self, e => e.restore(state))
    }
}
