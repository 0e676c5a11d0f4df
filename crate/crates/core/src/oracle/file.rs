//! Oracles loaded from JSON model files.
//!
//! Three kinds are understood:
//!
//! ```text
//! {"kind": "table", "num_actions": A,
//!  "entries": [{"state": [..], "action": a}
//!            | {"state": [..], "probs": [..]}
//!            | {"state": [..], "q": [..]}, ...]}
//! {"kind": "linear_softmax", "weights": [[..] x A], "bias": [..]}
//! {"kind": "mlp", "layers": [{"weights": [[..]], "bias": [..],
//!                              "activation": "relu" | "tanh" | "identity"}, ...],
//!  "output": "q" | "logits"}
//! ```
//!
//! Tables answer with their nearest entry (Euclidean). Entries that carry
//! probabilities, and all logit outputs, yield `Q(s, a) = log pi(s, a)`;
//! action-only entries yield `Q = 1` for the listed action and 0 otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, Environment, StateVector};
use crate::oracle::{argmax, Oracle};

/// Action probabilities as a function of the state.
pub trait StochasticPolicy: Sync {
    fn probs(&self, s: &[f64]) -> Result<Vec<f64>>;
}

/// `log pi(s, a)`, rejecting zero probabilities.
pub fn maxent_q(probs: &[f64], action: usize) -> Result<f64> {
    let p = *probs
        .get(action)
        .ok_or_else(|| Error::invalid(format!("no probability for action {action}")))?;
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!(
            "probability of action {action} is {p}; log-probability undefined"
        )));
    }
    Ok(p.ln())
}

fn check_probs(probs: &[f64]) -> Result<()> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "probabilities {probs:?} do not form a distribution"
        )));
    }
    Ok(())
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpOutput {
    Q,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadedOracle {
    Table {
        num_actions: usize,
        entries: Vec<TableEntry>,
    },
    LinearSoftmax {
        weights: Vec<Vec<f64>>,
        #[serde(default)]
        bias: Vec<f64>,
    },
    Mlp {
        layers: Vec<Layer>,
        output: MlpOutput,
    },
}

fn dense(weights: &[Vec<f64>], bias: &[f64], x: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias.get(i).copied().unwrap_or(0.0)
        })
        .collect()
}

impl LoadedOracle {
    pub fn from_json(text: &str) -> Result<Self> {
        let oracle: LoadedOracle = serde_json::from_str(text)?;
        oracle.validate()?;
        Ok(oracle)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LoadedOracle::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle serializes")
    }

    pub fn num_actions(&self) -> usize {
        match self {
            LoadedOracle::Table { num_actions, .. } => *num_actions,
            LoadedOracle::LinearSoftmax { weights, .. } => weights.len(),
            LoadedOracle::Mlp { layers, .. } => layers.last().map_or(0, |l| l.weights.len()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LoadedOracle::Table { entries, .. } => entries.first().map_or(0, |e| e.state.len()),
            LoadedOracle::LinearSoftmax { weights, .. } => weights.first().map_or(0, |r| r.len()),
            LoadedOracle::Mlp { layers, .. } => {
                layers.first().and_then(|l| l.weights.first()).map_or(0, |r| r.len())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64], field: &str| -> Result<()> {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::schema(field.to_string(), "non-finite number"))
            }
        };
        match self {
            LoadedOracle::Table {
                num_actions,
                entries,
            } => {
                if *num_actions == 0 {
                    return Err(Error::schema("num_actions", "must be positive"));
                }
                if entries.is_empty() {
                    return Err(Error::schema("entries", "table is empty"));
                }
                let dim = entries[0].state.len();
                for (k, e) in entries.iter().enumerate() {
                    let field = format!("entries[{k}]");
                    if e.state.len() != dim || dim == 0 {
                        return Err(Error::schema(
                            format!("{field}.state"),
                            format!("expected {dim} components, got {}", e.state.len()),
                        ));
                    }
                    finite(&e.state, &format!("{field}.state"))?;
                    let given = [e.action.is_some(), e.probs.is_some(), e.q.is_some()]
                        .iter()
                        .filter(|b| **b)
                        .count();
                    if given != 1 {
                        return Err(Error::schema(
                            field,
                            "exactly one of `action`, `probs`, `q` is required",
                        ));
                    }
                    if let Some(a) = e.action {
                        if a >= *num_actions {
                            return Err(Error::schema(format!("{field}.action"), "out of range"));
                        }
                    }
                    for (name, v) in [("probs", &e.probs), ("q", &e.q)] {
                        if let Some(v) = v {
                            if v.len() != *num_actions {
                                return Err(Error::schema(
                                    format!("{field}.{name}"),
                                    format!("expected {num_actions} values, got {}", v.len()),
                                ));
                            }
                            finite(v, &format!("{field}.{name}"))?;
                        }
                    }
                    if let Some(p) = &e.probs {
                        check_probs(p).map_err(|err| {
                            Error::schema(format!("{field}.probs"), err.to_string())
                        })?;
                    }
                }
            }
            LoadedOracle::LinearSoftmax { weights, bias } => {
                if weights.is_empty() || weights[0].is_empty() {
                    return Err(Error::schema("weights", "must be a non-empty matrix"));
                }
                let dim = weights[0].len();
                for (i, row) in weights.iter().enumerate() {
                    if row.len() != dim {
                        return Err(Error::schema(format!("weights[{i}]"), "ragged matrix"));
                    }
                    finite(row, &format!("weights[{i}]"))?;
                }
                if !bias.is_empty() && bias.len() != weights.len() {
                    return Err(Error::schema("bias", "length must equal the number of actions"));
                }
                finite(bias, "bias")?;
            }
            LoadedOracle::Mlp { layers, .. } => {
                if layers.is_empty() {
                    return Err(Error::schema("layers", "network has no layers"));
                }
                let mut width = None;
                for (k, layer) in layers.iter().enumerate() {
                    let field = format!("layers[{k}]");
                    if layer.weights.is_empty() {
                        return Err(Error::schema(format!("{field}.weights"), "empty matrix"));
                    }
                    let cols = layer.weights[0].len();
                    if let Some(w) = width {
                        if cols != w {
                            return Err(Error::schema(
                                format!("{field}.weights"),
                                format!("expects {cols} inputs but previous layer yields {w}"),
                            ));
                        }
                    }
                    for (i, row) in layer.weights.iter().enumerate() {
                        if row.len() != cols {
                            return Err(Error::schema(format!("{field}.weights[{i}]"), "ragged matrix"));
                        }
                        finite(row, &format!("{field}.weights[{i}]"))?;
                    }
                    if layer.bias.len() != layer.weights.len() {
                        return Err(Error::schema(
                            format!("{field}.bias"),
                            "length must equal the number of rows",
                        ));
                    }
                    finite(&layer.bias, &format!("{field}.bias"))?;
                    width = Some(layer.weights.len());
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: s.len(),
            });
        }
        Ok(())
    }

    fn nearest(&self, entries: &[TableEntry], s: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, e) in entries.iter().enumerate() {
            let d: f64 = e.state.iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Action values at `s`.
    pub fn q(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s)?;
        match self {
            LoadedOracle::Table {
                num_actions,
                entries,
            } => {
                let e = &entries[self.nearest(entries, s)];
                if let Some(q) = &e.q {
                    Ok(q.clone())
                } else if let Some(p) = &e.probs {
                    (0..*num_actions).map(|a| maxent_q(p, a)).collect()
                } else {
                    let a = e.action.expect("validated entry");
                    Ok((0..*num_actions).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
                }
            }
            LoadedOracle::LinearSoftmax { weights, bias } => Ok(log_softmax(&dense(weights, bias, s))),
            LoadedOracle::Mlp { layers, output } => {
                let mut x = s.to_vec();
                for layer in layers {
                    x = dense(&layer.weights, &layer.bias, &x);
                    match layer.activation {
                        Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
                        Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
                        Activation::Identity => {}
                    }
                }
                Ok(match output {
                    MlpOutput::Q => x,
                    MlpOutput::Logits => log_softmax(&x),
                })
            }
        }
    }

    pub fn best_action(&self, s: &[f64]) -> Result<usize> {
        if let LoadedOracle::Table { entries, .. } = self {
            self.check_input(s)?;
            if let Some(a) = entries[self.nearest(entries, s)].action {
                return Ok(a);
            }
        }
        Ok(argmax(&self.q(s)?))
    }

    /// Table of `states` labelled by `policy`.
    pub fn table_from_policy<F: Fn(&[f64]) -> usize>(
        states: &[Vec<f64>],
        num_actions: usize,
        policy: F,
    ) -> Self {
        LoadedOracle::Table {
            num_actions,
            entries: states
                .iter()
                .map(|s| TableEntry {
                    state: s.clone(),
                    action: Some(policy(s)),
                    probs: None,
                    q: None,
                })
                .collect(),
        }
    }
}

impl StochasticPolicy for LoadedOracle {
    fn probs(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.q(s)?.iter().map(|l| l.exp()).collect())
    }
}

impl<E: Environment> Oracle<E> for LoadedOracle {
    fn act(&self, s: &StateVector) -> Result<Action> {
        Ok(Action::Discrete(self.best_action(s)?))
    }

    fn q_values(&self, _env: &E, s: &StateVector) -> Result<Vec<f64>> {
        self.q(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxent_values() {
        let q: Vec<f64> = (0..3).map(|a| maxent_q(&[1.0 / 3.0; 3], a).unwrap()).collect();
        assert!(q.iter().all(|v| (v - (1.0f64 / 3.0).ln()).abs() < 1e-15));
        let q0 = maxent_q(&[0.9, 0.1], 0).unwrap();
        let q1 = maxent_q(&[0.9, 0.1], 1).unwrap();
        assert!((q0 - q1 - 2.1972245773362196).abs() < 1e-12);
        assert!(maxent_q(&[1.0, 0.0], 1).is_err());
    }

    #[test]
    fn linear_softmax_picks_largest_row() {
        let o = LoadedOracle::from_json(
            r#"{"kind": "linear_softmax", "weights": [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]}"#,
        )
        .unwrap();
        assert_eq!(o.best_action(&[2.0, 1.0]).unwrap(), 0);
        assert_eq!(o.best_action(&[0.0, 1.0]).unwrap(), 1);
        assert_eq!(o.best_action(&[-1.0, -1.0]).unwrap(), 2);
    }

    #[test]
    fn malformed_files_name_the_field() {
        let err = LoadedOracle::from_json(
            r#"{"kind": "table", "num_actions": 2, "entries": [{"state": [0.0], "action": 5}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("entries[0].action"), "{err}");
        let err = LoadedOracle::from_json(
            r#"{"kind": "mlp", "output": "q", "layers": [{"weights": [[1.0, 2.0]], "bias": [0.0, 1.0], "activation": "relu"}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("layers[0].bias"), "{err}");
    }

    #[test]
    fn mlp_forward_pass() {
        let o = LoadedOracle::from_json(
            r#"{"kind": "mlp", "output": "q", "layers": [
                {"weights": [[1.0], [-1.0]], "bias": [0.0, 0.0], "activation": "relu"},
                {"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.5], "activation": "identity"}]}"#,
        )
        .unwrap();
        assert_eq!(o.q(&[2.0]).unwrap(), vec![2.0, 0.5]);
        assert_eq!(o.best_action(&[-2.0]).unwrap(), 1);
    }
}
