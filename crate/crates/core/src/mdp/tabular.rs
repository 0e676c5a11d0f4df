use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;

/// Deterministic stationary policy: one action index per state.
pub type TabularPolicy = Vec<usize>;

/// Finite-horizon tabular MDP with state rewards `R(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    // rows indexed by s * num_actions + a, sparse (s', p)
    rows: Vec<Vec<(usize, f64)>>,
    rewards: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TabularMdpDoc {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    transitions: Vec<(usize, usize, usize, f64)>,
    rewards: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        transitions: &[(usize, usize, usize, f64)],
        rewards: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if initial_state >= num_states {
            return Err(Error::schema("initial_state", "out of range"));
        }
        if rewards.len() != num_states {
            return Err(Error::schema(
                "rewards",
                format!("expected {num_states} entries, got {}", rewards.len()),
            ));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::schema("rewards", "non-finite reward"));
        }
        let mut rows = vec![Vec::new(); num_states * num_actions];
        for (k, &(s, a, s2, p)) in transitions.iter().enumerate() {
            if s >= num_states || s2 >= num_states || a >= num_actions {
                return Err(Error::schema(
                    format!("transitions[{k}]"),
                    "state or action index out of range",
                ));
            }
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::schema(
                    format!("transitions[{k}]"),
                    format!("probability {p} outside [0, 1]"),
                ));
            }
            if p > 0.0 {
                rows[s * num_actions + a].push((s2, p));
            }
        }
        for row in rows.iter_mut() {
            row.sort_by_key(|&(s2, _)| s2);
            row.dedup_by(|next, kept| {
                if next.0 == kept.0 {
                    kept.1 += next.1;
                    true
                } else {
                    false
                }
            });
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let total: f64 = rows[s * num_actions + a].iter().map(|&(_, p)| p).sum();
                if (total - 1.0).abs() > ROW_TOLERANCE {
                    return Err(Error::schema(
                        "transitions",
                        format!("row (s={s}, a={a}) sums to {total}, expected 1"),
                    ));
                }
            }
        }
        Ok(TabularMdp {
            num_states,
            num_actions,
            horizon,
            initial_state,
            rows,
            rewards,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TabularMdpDoc = serde_json::from_str(text)?;
        TabularMdp::new(
            doc.num_states,
            doc.num_actions,
            doc.horizon,
            doc.initial_state,
            &doc.transitions,
            doc.rewards,
        )
    }

    pub fn to_json(&self) -> String {
        let mut transitions = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                for &(s2, p) in self.row(s, a) {
                    transitions.push((s, a, s2, p));
                }
            }
        }
        let doc = TabularMdpDoc {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            initial_state: self.initial_state,
            transitions,
            rewards: self.rewards.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("tabular MDP serializes")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reward(&self, s: usize) -> f64 {
        self.rewards[s]
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.num_actions + a]
    }

    /// A state whose every action self-loops; it has no meaningful actions
    /// and is excluded from loss accounting.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.num_actions).all(|a| {
            let row = self.row(s, a);
            row.len() == 1 && row[0].0 == s
        })
    }

    /// Every action induces the same successor distribution, so the choice
    /// of action is immaterial. Such states (absorbing ones included) are
    /// excluded from loss accounting.
    pub fn is_choice_free(&self, s: usize) -> bool {
        let first = self.row(s, 0);
        (1..self.num_actions).all(|a| self.row(s, a) == first)
    }

    fn check_policy(&self, policy: &[usize], what: &str) -> Result<()> {
        if policy.len() != self.num_states {
            return Err(Error::DimensionMismatch {
                expected: self.num_states,
                got: policy.len(),
            });
        }
        if let Some(s) = policy.iter().position(|&a| a >= self.num_actions) {
            return Err(Error::invalid(format!(
                "{what} picks action {} at state {s}, only {} actions exist",
                policy[s], self.num_actions
            )));
        }
        Ok(())
    }
}

/// `V_t`, `Q_t` and `d_t` of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    /// `v[t][s]` for `t` in `0..=T`; `v[T]` is identically zero.
    pub v: Vec<Vec<f64>>,
    /// `q[t][s][a]` for `t` in `0..T`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `d[t][s]` for `t` in `0..=T`.
    pub d: Vec<Vec<f64>>,
}

impl ValueTables {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// Cost-to-go `J = -V_0(s0)`.
    pub fn cost_to_go(&self, initial_state: usize) -> f64 {
        -self.v[0][initial_state]
    }

    /// `V_t(s) - min_a Q_t(s, a)`, where these tables belong to the oracle.
    pub fn ell_tilde(&self, t: usize, s: usize) -> f64 {
        let q = &self.q[t][s];
        let min = q.iter().copied().fold(f64::INFINITY, f64::min);
        (self.v[t][s] - min).max(0.0)
    }

    /// Time-averaged state distribution `d(s) = T^-1 sum_{t<T} d_t(s)`.
    pub fn average_distribution(&self) -> Vec<f64> {
        let horizon = self.horizon();
        let n = self.d[0].len();
        let mut avg = vec![0.0; n];
        for row in &self.d[..horizon] {
            for (acc, p) in avg.iter_mut().zip(row) {
                *acc += p;
            }
        }
        avg.iter_mut().for_each(|x| *x /= horizon as f64);
        avg
    }
}

/// Backward induction for `V`, `Q` and forward induction for `d`.
pub fn dp_evaluate(mdp: &TabularMdp, policy: &[usize]) -> Result<ValueTables> {
    mdp.check_policy(policy, "policy")?;
    let n = mdp.num_states;
    let na = mdp.num_actions;
    let horizon = mdp.horizon;

    let mut v = vec![vec![0.0; n]; horizon + 1];
    let mut q = vec![vec![vec![0.0; na]; n]; horizon];
    for t in (0..horizon).rev() {
        let (head, tail) = v.split_at_mut(t + 1);
        let next = &tail[0];
        for s in 0..n {
            for a in 0..na {
                let future: f64 = mdp.row(s, a).iter().map(|&(s2, p)| p * next[s2]).sum();
                q[t][s][a] = mdp.reward(s) + future;
            }
            head[t][s] = q[t][s][policy[s]];
        }
    }

    let mut d = vec![vec![0.0; n]; horizon + 1];
    d[0][mdp.initial_state] = 1.0;
    for t in 1..=horizon {
        let (prev, cur) = d.split_at_mut(t);
        let prev = &prev[t - 1];
        for s in 0..n {
            if prev[s] == 0.0 {
                continue;
            }
            for &(s2, p) in mdp.row(s, policy[s]) {
                cur[0][s2] += prev[s] * p;
            }
        }
    }
    Ok(ValueTables { v, q, d })
}

/// `g(pi) = E_{s ~ d^(pi)} 1[pi(s) != pi*(s)]`, zero at choice-free states.
pub fn zero_one_loss(mdp: &TabularMdp, policy: &[usize], oracle: &[usize]) -> Result<f64> {
    mdp.check_policy(oracle, "oracle")?;
    let tables = dp_evaluate(mdp, policy)?;
    let avg = tables.average_distribution();
    Ok((0..mdp.num_states)
        .filter(|&s| !mdp.is_choice_free(s) && policy[s] != oracle[s])
        .map(|s| avg[s])
        .sum())
}

/// `l(pi) = T^-1 sum_t E_{s ~ d_t^(pi)} [V*_t(s) - Q*_t(s, pi(s))]`.
pub fn qdagger_loss(mdp: &TabularMdp, policy: &[usize], oracle: &[usize]) -> Result<f64> {
    let star = dp_evaluate(mdp, oracle)?;
    let own = dp_evaluate(mdp, policy)?;
    let horizon = mdp.horizon;
    let mut total = 0.0;
    for t in 0..horizon {
        for s in 0..mdp.num_states {
            let w = own.d[t][s];
            if w == 0.0 || mdp.is_choice_free(s) {
                continue;
            }
            total += w * (star.v[t][s] - star.q[t][s][policy[s]]);
        }
    }
    Ok(total / horizon as f64)
}

/// `V*_t(s) - min_a Q*_t(s, a)` for the oracle policy.
pub fn ell_tilde(mdp: &TabularMdp, oracle: &[usize], t: usize, s: usize) -> Result<f64> {
    if t >= mdp.horizon {
        return Err(Error::invalid(format!(
            "time {t} outside horizon {}",
            mdp.horizon
        )));
    }
    if s >= mdp.num_states {
        return Err(Error::invalid(format!("state {s} out of range")));
    }
    if mdp.is_choice_free(s) {
        return Ok(0.0);
    }
    Ok(dp_evaluate(mdp, oracle)?.ell_tilde(t, s))
}
