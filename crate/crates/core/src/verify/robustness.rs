//! Exact L-infinity robustness radius of discrete decision-tree policies.
//!
//! Every reachable leaf routes a box, so the distance from `s0` to a leaf
//! is the largest per-coordinate gap to the box.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::dtree::{DecisionTree, LeafBox, LeafKind, LeafLabel};
use crate::error::{Error, Result};

/// Distance by which witnesses are pushed inside open box faces.
pub const WITNESS_PUSH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessResult {
    /// `f64::INFINITY` when every reachable leaf agrees with `s0`.
    pub epsilon: f64,
    pub witness_leaf: Option<usize>,
    pub witness_point: Option<Vec<f64>>,
}

/// `inf { ||s - s0||_inf : s in closure(box) }`.
pub fn leaf_linf_distance(s0: &[f64], bounds: &LeafBox) -> f64 {
    s0.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
        .fold(0.0, f64::max)
}

/// Point of the leaf nearest to `s0`; coordinates on an open lower face are
/// moved just inside.
pub fn nearest_point(s0: &[f64], bounds: &LeafBox) -> Vec<f64> {
    s0.iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(&x, (&lo, &hi))| {
            if x > lo {
                x.min(hi)
            } else {
                (lo + WITNESS_PUSH).max(lo.next_up()).min(hi)
            }
        })
        .collect()
}

pub fn epsilon_robustness(tree: &DecisionTree, s0: &[f64]) -> Result<RobustnessResult> {
    if tree.leaf_kind != LeafKind::Discrete {
        return Err(Error::Unsupported("robustness needs a tree with action leaves".into()));
    }
    if s0.len() != tree.dim {
        return Err(Error::DimensionMismatch {
            expected: tree.dim,
            got: s0.len(),
        });
    }
    let own = tree.predict_discrete(s0)?;
    let mut best = RobustnessResult {
        epsilon: f64::INFINITY,
        witness_leaf: None,
        witness_point: None,
    };
    for region in tree.leaf_regions() {
        if region.label == LeafLabel::Action(own) {
            continue;
        }
        let d = leaf_linf_distance(s0, &region.bounds);
        if d < best.epsilon {
            best = RobustnessResult {
                epsilon: d,
                witness_leaf: Some(region.leaf),
                witness_point: Some(nearest_point(s0, &region.bounds)),
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub state: Vec<f64>,
    pub result: RobustnessResult,
    pub micros: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessSummary {
    pub rows: Vec<RobustnessRow>,
    pub min_epsilon: f64,
    pub max_micros: u128,
}

/// Computes the radius at every state and writes one CSV row per state:
/// the state components, `epsilon` and `witness_leaf`. Query times are
/// returned but not written, so the file is reproducible.
pub fn robustness_report(tree: &DecisionTree, states: &[Vec<f64>], output: &Path) -> Result<RobustnessSummary> {
    let mut rows = Vec::with_capacity(states.len());
    for s in states {
        let start = Instant::now();
        let result = epsilon_robustness(tree, s)?;
        rows.push(RobustnessRow {
            state: s.clone(),
            result,
            micros: start.elapsed().as_micros(),
        });
    }
    let mut text = String::new();
    let header: Vec<String> = (0..tree.dim).map(|i| format!("s{i}")).collect();
    text.push_str(&header.join(","));
    text.push_str(",epsilon,witness_leaf\n");
    for row in &rows {
        for x in &row.state {
            text.push_str(&format!("{x},"));
        }
        let leaf = row.result.witness_leaf.map_or(String::new(), |l| l.to_string());
        text.push_str(&format!("{},{leaf}\n", row.result.epsilon));
    }
    let mut f = std::fs::File::create(output).map_err(|e| Error::io(output, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(output, e))?;
    Ok(RobustnessSummary {
        min_epsilon: rows.iter().map(|r| r.result.epsilon).fold(f64::INFINITY, f64::min),
        max_micros: rows.iter().map(|r| r.micros).max().unwrap_or(0),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_tree() -> DecisionTree {
        DecisionTree::from_json(
            r#"{"version":1,"dim":2,"leaf_kind":"discrete","nodes":[
                {"kind":"split","feature":0,"threshold":0.0,"left":1,"right":2},
                {"kind":"action","action":0},{"kind":"action","action":1}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn interval_distance() {
        let b = LeafBox { lower: vec![1.0], upper: vec![2.0] };
        assert_eq!(leaf_linf_distance(&[0.0], &b), 1.0);
        assert_eq!(leaf_linf_distance(&[1.5], &b), 0.0);
        assert_eq!(leaf_linf_distance(&[5.0], &b), 3.0);
    }

    #[test]
    fn half_space_distance_and_witness() {
        let tree = split_tree();
        let r = epsilon_robustness(&tree, &[-2.0, 0.0]).unwrap();
        assert_eq!(r.epsilon, 2.0);
        assert_eq!(r.witness_leaf, Some(2));
        let w = r.witness_point.unwrap();
        assert_ne!(tree.predict_discrete(&w).unwrap(), 0);
        assert!(w[0] - 0.0 <= 2.0 * WITNESS_PUSH);
        let r = epsilon_robustness(&tree, &[0.0, 0.0]).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert_eq!(tree.predict_discrete(&r.witness_point.unwrap()).unwrap(), 1);
    }

    #[test]
    fn single_leaf_is_infinitely_robust() {
        let tree = DecisionTree::single_action(3, 1);
        let r = epsilon_robustness(&tree, &[0.0, 1.0, 2.0]).unwrap();
        assert!(r.epsilon.is_infinite());
        assert!(r.witness_leaf.is_none());
        assert!(epsilon_robustness(&tree, &[0.0]).is_err());
    }
}
