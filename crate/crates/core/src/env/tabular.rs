//! Simulator over a tabular MDP with states embedded as real vectors.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, Environment, SimRng, StateVector, TabularMdp, Transition};

#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp,
    features: Vec<StateVector>,
    state: usize,
    time: usize,
    rng: SimRng,
}

impl TabularEnv {
    /// `features[s]` is the observation emitted in state `s`.
    pub fn new(mdp: TabularMdp, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != mdp.num_states() {
            return Err(Error::DimensionMismatch {
                expected: mdp.num_states(),
                got: features.len(),
            });
        }
        let dim = features.first().map_or(0, |f| f.len());
        let features = features
            .into_iter()
            .map(|f| {
                let v = StateVector::new(f)?;
                v.check_dim(dim)?;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let state = mdp.initial_state();
        Ok(TabularEnv {
            mdp,
            features,
            state,
            time: 0,
            rng: SimRng::seed_from_u64(0),
        })
    }

    /// One-hot observations.
    pub fn one_hot(mdp: TabularMdp) -> Result<Self> {
        let n = mdp.num_states();
        let features = (0..n)
            .map(|s| (0..n).map(|j| if j == s { 1.0 } else { 0.0 }).collect())
            .collect();
        TabularEnv::new(mdp, features)
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn state_index(&self) -> usize {
        self.state
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn features(&self) -> &[StateVector] {
        &self.features
    }
}

impl Environment for TabularEnv {
    fn id(&self) -> &'static str {
        "tabular"
    }

    fn dim(&self) -> usize {
        self.features[0].dim()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete {
            n: self.mdp.num_actions(),
        }
    }

    fn max_steps(&self) -> usize {
        self.mdp.horizon()
    }

    fn reset(&mut self, rng: &mut SimRng) -> StateVector {
        self.rng = SimRng::seed_from_u64(rng.gen());
        self.state = self.mdp.initial_state();
        self.time = 0;
        self.state()
    }

    fn state(&self) -> StateVector {
        self.features[self.state].clone()
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = SimRng::seed_from_u64(seed);
    }

    fn tabular_position(&self) -> Option<(usize, usize)> {
        Some((self.time, self.state))
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        let a = action
            .index()
            .filter(|&a| a < self.mdp.num_actions())
            .ok_or_else(|| Error::invalid(format!("invalid tabular action {action:?}")))?;
        let reward = self.mdp.reward(self.state);
        let row = self.mdp.row(self.state, a);
        let mut u: f64 = self.rng.gen();
        let mut next = row[row.len() - 1].0;
        for &(s2, p) in row {
            if u < p {
                next = s2;
                break;
            }
            u -= p;
        }
        self.state = next;
        self.time += 1;
        Ok(Transition {
            state: self.state(),
            reward,
            done: self.time >= self.mdp.horizon(),
        })
    }
}
