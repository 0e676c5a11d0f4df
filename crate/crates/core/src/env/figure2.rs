//! Chain MDP with a single critical state.
//!
//! States `s_-k .. s_k` form a chain walked with `left`/`right`. At
//! `s_-(k-1)` the extra action `down` leads to `s~`, worth `T`; the right
//! end `s_k` is worth `T - alpha`. Any unavailable action, and any action
//! at `s~` or `s_k`, leads to the absorbing `s_end`. The horizon is
//! `T = 3 (k + 1)`.

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;

#[derive(Debug, Clone)]
pub struct CriticalChain {
    pub k: usize,
    pub alpha: f64,
    pub mdp: TabularMdp,
}

impl CriticalChain {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let horizon = 3 * (k + 1);
        let n = 2 * k + 3;
        let ki = k as i64;
        let chain = |i: i64| (i + ki) as usize;
        let tilde = 2 * k + 1;
        let end = 2 * k + 2;
        let mut transitions = Vec::new();
        for i in -ki..=ki {
            let s = chain(i);
            if i == ki {
                for a in [LEFT, RIGHT, DOWN] {
                    transitions.push((s, a, end, 1.0));
                }
                continue;
            }
            let left = if i == -ki { end } else { chain(i - 1) };
            transitions.push((s, LEFT, left, 1.0));
            transitions.push((s, RIGHT, chain(i + 1), 1.0));
            let down = if i == -(ki - 1) { tilde } else { end };
            transitions.push((s, DOWN, down, 1.0));
        }
        for a in [LEFT, RIGHT, DOWN] {
            transitions.push((tilde, a, end, 1.0));
            transitions.push((end, a, end, 1.0));
        }
        let t = horizon as f64;
        let mut rewards = vec![0.0; n];
        rewards[tilde] = t;
        rewards[chain(ki)] = t - alpha;
        let mdp = TabularMdp::new(n, 3, horizon, chain(0), &transitions, rewards)?;
        Ok(CriticalChain { k, alpha, mdp })
    }

    /// Index of chain state `s_i`, `-k <= i <= k`.
    pub fn chain_state(&self, i: i64) -> usize {
        assert!(i.unsigned_abs() as usize <= self.k, "chain index {i} out of range");
        (i + self.k as i64) as usize
    }

    pub fn tilde_state(&self) -> usize {
        2 * self.k + 1
    }

    pub fn end_state(&self) -> usize {
        2 * self.k + 2
    }

    pub fn critical_state(&self) -> usize {
        self.chain_state(-(self.k as i64 - 1))
    }

    /// Walk left and take `down` at the critical state.
    pub fn optimal_policy(&self) -> TabularPolicy {
        let mut p = vec![LEFT; self.mdp.num_states()];
        p[self.critical_state()] = DOWN;
        p
    }

    pub fn left_policy(&self) -> TabularPolicy {
        vec![LEFT; self.mdp.num_states()]
    }

    pub fn right_policy(&self) -> TabularPolicy {
        vec![RIGHT; self.mdp.num_states()]
    }

    /// One real feature per state: the chain index, with `s~` placed just
    /// left of the chain and `s_end` just right of it.
    pub fn embedding(&self) -> Vec<Vec<f64>> {
        let ki = self.k as i64;
        let mut e: Vec<Vec<f64>> = (-ki..=ki).map(|i| vec![i as f64]).collect();
        e.push(vec![-(ki as f64) - 1.0]);
        e.push(vec![ki as f64 + 1.0]);
        e
    }
}
