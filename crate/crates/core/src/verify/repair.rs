//! Counterexample-driven repairs of toy Pong closed loops: a guarding root
//! node or an edited environment parameter, each followed by re-verification.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dtree::{DecisionTree, GuardSide};
use crate::env::toypong::{LEFT, RIGHT};
use crate::env::ToyPongParams;
use crate::error::{Error, Result};
use crate::verify::correctness::{
    reach_check_with_budget, replay_toypong, toypong_closed_loop, toypong_spec, Counterexample, Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Patch {
    RootGuard {
        feature: usize,
        threshold: f64,
        action: usize,
        side: GuardSide,
    },
    Param {
        name: String,
        value: f64,
    },
}

impl Patch {
    pub fn describe(&self) -> String {
        match self {
            Patch::RootGuard {
                feature,
                threshold,
                action,
                side,
            } => {
                let op = match side {
                    GuardSide::AtMost => "<=",
                    GuardSide::Above => ">",
                };
                format!("root guard s[{feature}] {op} {threshold} -> action {action}")
            }
            Patch::Param { name, value } => format!("parameter {name} = {value}"),
        }
    }
}

/// Sets the numeric field `name` of a serializable parameter struct.
pub fn patch_params<T: Serialize + DeserializeOwned>(params: &T, name: &str, value: f64) -> Result<T> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("parameter {name} must be finite")));
    }
    let mut v = serde_json::to_value(params).map_err(|e| Error::invalid(e.to_string()))?;
    let field = v
        .get_mut(name)
        .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
    *field = if field.is_u64() || field.is_i64() {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(Error::schema(name, "expects a nonnegative integer"));
        }
        json!(value as u64)
    } else {
        json!(value)
    };
    serde_json::from_value(v).map_err(|e| Error::schema(name, e.to_string()))
}

/// Applies `patch` to a toy Pong configuration.
pub fn apply_patch(
    params: &ToyPongParams,
    tree: &DecisionTree,
    patch: &Patch,
) -> Result<(ToyPongParams, DecisionTree)> {
    match patch {
        Patch::RootGuard {
            feature,
            threshold,
            action,
            side,
        } => Ok((params.clone(), tree.with_root_guard(*feature, *threshold, *action, *side)?)),
        Patch::Param { name, value } => {
            let patched: ToyPongParams = patch_params(params, name, *value)?;
            patched.validate()?;
            Ok((patched, tree.clone()))
        }
    }
}

/// Guard for the region where `cex` misses the ball: while the ball is
/// within one paddle half length of the miss point, move towards it.
pub fn guard_for_counterexample(params: &ToyPongParams, cex: &Counterexample) -> Result<Patch> {
    let last = cex
        .trace
        .last()
        .ok_or_else(|| Error::invalid("empty counterexample trace"))?;
    let (x, xp) = (last[0], last[4]);
    let l = params.paddle_half_length;
    Ok(if x >= xp {
        Patch::RootGuard {
            feature: 0,
            threshold: (x - l).clamp(0.0, params.x_max),
            action: RIGHT,
            side: GuardSide::Above,
        }
    } else {
        Patch::RootGuard {
            feature: 0,
            threshold: (x + l).clamp(0.0, params.x_max),
            action: LEFT,
            side: GuardSide::AtMost,
        }
    })
}

/// A verdict together with the concrete replay of its counterexample.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedVerdict {
    pub verdict: Verdict,
    /// `Some(true)` when the counterexample replays on the simulator.
    pub replays: Option<bool>,
}

impl CheckedVerdict {
    pub fn to_json(&self) -> Value {
        let mut v = self.verdict.to_json();
        v["replays"] = json!(self.replays);
        v
    }
}

pub fn check_toypong(
    params: &ToyPongParams,
    tree: &DecisionTree,
    t_max: usize,
    budget: usize,
) -> Result<CheckedVerdict> {
    let system = toypong_closed_loop(params, tree)?;
    let spec = toypong_spec(params, t_max)?;
    let verdict = reach_check_with_budget(&system, &spec, budget)?;
    let replays = match verdict.counterexample() {
        Some(cex) => Some(replay_toypong(params, tree, &cex.trace[0], &spec)?),
        None => None,
    };
    Ok(CheckedVerdict { verdict, replays })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairStep {
    pub patch: Patch,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub before: CheckedVerdict,
    pub after: CheckedVerdict,
}

impl RepairStep {
    /// `before -> after` verdict names.
    pub fn delta(&self) -> String {
        format!("{} -> {}", self.before.verdict.name(), self.after.verdict.name())
    }

    /// True when the verdict kind or the counterexample changed.
    pub fn verdict_changed(&self) -> bool {
        self.before.verdict.name() != self.after.verdict.name()
            || self.before.verdict.counterexample().map(|c| &c.trace)
                != self.after.verdict.counterexample().map(|c| &c.trace)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "patch": self.patch,
            "description": self.patch.describe(),
            "tree_nodes_before": self.nodes_before,
            "tree_nodes_after": self.nodes_after,
            "delta": self.delta(),
            "verdict_changed": self.verdict_changed(),
            "before": self.before.to_json(),
            "after": self.after.to_json(),
        })
    }
}

/// Verifies the original configuration, then each patch applied on its own.
pub fn repair_toypong(
    params: &ToyPongParams,
    tree: &DecisionTree,
    patches: &[Patch],
    t_max: usize,
    budget: usize,
) -> Result<Vec<RepairStep>> {
    let before = check_toypong(params, tree, t_max, budget)?;
    patches
        .iter()
        .map(|patch| {
            let (p, t) = apply_patch(params, tree, patch)?;
            Ok(RepairStep {
                patch: patch.clone(),
                nodes_before: tree.node_count(),
                nodes_after: t.node_count(),
                before: before.clone(),
                after: check_toypong(&p, &t, t_max, budget)?,
            })
        })
        .collect()
}

/// A short arena in which a falling ball drifts at most 3.75 sideways
/// before reaching the paddle line and starts within 0.5 of the paddle.
/// The stay policy misses with `L = 4` and is safe once `L = 9/2`.
pub fn short_arena() -> ToyPongParams {
    ToyPongParams {
        y_max: 3.0,
        v_min: 1.0,
        v_max: 1.25,
        start_offset: 0.5,
        ..ToyPongParams::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::toypong::STAY;

    #[test]
    fn param_patch_sets_fields_by_name() {
        let p = patch_params(&ToyPongParams::default(), "paddle_half_length", 4.5).unwrap();
        assert_eq!(p.paddle_half_length, 4.5);
        let p = patch_params(&p, "max_steps", 100.0).unwrap();
        assert_eq!(p.max_steps, 100);
        assert!(patch_params(&p, "paddle_length", 4.5).is_err());
        assert!(patch_params(&p, "max_steps", 1.5).is_err());
    }

    #[test]
    fn root_guard_adds_two_nodes() {
        let tree = DecisionTree::single_action(5, STAY);
        let patch = Patch::RootGuard {
            feature: 0,
            threshold: 26.0,
            action: RIGHT,
            side: GuardSide::Above,
        };
        let (_, patched) = apply_patch(&ToyPongParams::default(), &tree, &patch).unwrap();
        assert_eq!(patched.node_count(), tree.node_count() + 2);
        let bad = Patch::RootGuard {
            feature: 9,
            threshold: 1.0,
            action: LEFT,
            side: GuardSide::AtMost,
        };
        assert!(apply_patch(&ToyPongParams::default(), &tree, &bad).is_err());
    }

    #[test]
    fn short_arena_is_repaired_by_longer_paddle() {
        let params = short_arena();
        let tree = DecisionTree::single_action(5, STAY);
        let patch = Patch::Param {
            name: "paddle_half_length".into(),
            value: 4.5,
        };
        let steps = repair_toypong(&params, &tree, &[patch], params.bounce_horizon(), 100_000).unwrap();
        assert_eq!(steps[0].delta(), "counterexample -> safe");
        assert_eq!(steps[0].before.replays, Some(true));
        assert!(steps[0].verdict_changed());
    }
}
