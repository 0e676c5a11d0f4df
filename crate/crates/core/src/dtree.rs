//! Axis-aligned decision trees: CART training, prediction, leaf regions and
//! the JSON interchange format.
//!
//! A split on feature `i` with threshold `t` sends `s` left when
//! `s[i] <= t`, so every leaf region is a box that is open below and closed
//! above in each coordinate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, Policy, StateVector};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafKind {
    Discrete,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Action {
        action: usize,
    },
    Linear {
        coef: Vec<f64>,
        intercept: f64,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        !matches!(self, Node::Split { .. })
    }
}

/// What a leaf outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafLabel {
    Action(usize),
    Linear { coef: Vec<f64>, intercept: f64 },
}

/// `lower[i] < s[i] <= upper[i]` for every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LeafBox {
    pub fn unbounded(dim: usize) -> Self {
        LeafBox {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| lo < x && x <= hi)
    }

    /// Whether any point satisfies the half-open constraints.
    pub fn is_reachable(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(lo, hi)| lo < hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafRegion {
    pub leaf: usize,
    pub bounds: LeafBox,
    pub label: LeafLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub version: u32,
    pub dim: usize,
    pub leaf_kind: LeafKind,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardSide {
    /// The guard leaf receives `s[feature] <= threshold`.
    AtMost,
    /// The guard leaf receives `s[feature] > threshold`.
    Above,
}

impl DecisionTree {
    pub fn single_action(dim: usize, action: usize) -> Self {
        DecisionTree {
            version: FORMAT_VERSION,
            dim,
            leaf_kind: LeafKind::Discrete,
            nodes: vec![Node::Action { action }],
        }
    }

    pub fn single_linear(coef: Vec<f64>, intercept: f64) -> Self {
        DecisionTree {
            version: FORMAT_VERSION,
            dim: coef.len(),
            leaf_kind: LeafKind::Linear,
            nodes: vec![Node::Linear { coef, intercept }],
        }
    }

    /// Checks structure, indices and numbers.
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::schema(
                "version",
                format!("expected {FORMAT_VERSION}, found {}", self.version),
            ));
        }
        if self.dim == 0 {
            return Err(Error::schema("dim", "must be positive"));
        }
        if self.nodes.is_empty() {
            return Err(Error::schema("nodes", "tree has no nodes"));
        }
        let n = self.nodes.len();
        let mut parents = vec![0usize; n];
        for (i, node) in self.nodes.iter().enumerate() {
            let field = format!("nodes[{i}]");
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= self.dim {
                        return Err(Error::schema(
                            format!("{field}.feature"),
                            format!("{feature} out of range for dim {}", self.dim),
                        ));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::schema(format!("{field}.threshold"), "not finite"));
                    }
                    for (name, child) in [("left", *left), ("right", *right)] {
                        if child >= n || child == 0 {
                            return Err(Error::schema(
                                format!("{field}.{name}"),
                                format!("child index {child} invalid"),
                            ));
                        }
                        parents[child] += 1;
                    }
                }
                Node::Action { .. } => {
                    if self.leaf_kind != LeafKind::Discrete {
                        return Err(Error::schema(
                            format!("{field}.kind"),
                            "action leaf in a linear tree",
                        ));
                    }
                }
                Node::Linear { coef, intercept } => {
                    if self.leaf_kind != LeafKind::Linear {
                        return Err(Error::schema(
                            format!("{field}.kind"),
                            "linear leaf in a discrete tree",
                        ));
                    }
                    if coef.len() != self.dim {
                        return Err(Error::schema(
                            format!("{field}.coef"),
                            format!("expected {} coefficients, got {}", self.dim, coef.len()),
                        ));
                    }
                    if !intercept.is_finite() || coef.iter().any(|c| !c.is_finite()) {
                        return Err(Error::schema(format!("{field}.coef"), "not finite"));
                    }
                }
            }
        }
        if let Some(i) = (1..n).find(|&i| parents[i] != 1) {
            return Err(Error::schema(
                format!("nodes[{i}]"),
                format!("referenced by {} parents, expected 1", parents[i]),
            ));
        }
        // every node has one parent and the root none; with n - 1 edges this
        // is a tree exactly when all nodes are reachable from the root
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(Error::schema("nodes", "cycle detected"));
            }
            seen[i] = true;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::schema(format!("nodes[{i}]"), "unreachable from the root"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(v) = value.get("version") {
            if v.as_u64() != Some(FORMAT_VERSION as u64) {
                return Err(Error::schema(
                    "version",
                    format!("expected {FORMAT_VERSION}, found {v}"),
                ));
            }
        }
        let tree: DecisionTree = serde_json::from_value(value)?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trees serialize")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DecisionTree::from_json(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                _ => 0,
            }
        }
        go(self, 0)
    }

    fn check_input(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: s.len(),
            });
        }
        Ok(())
    }

    /// Node index of the leaf that `s` is routed to.
    pub fn leaf_index(&self, s: &[f64]) -> Result<usize> {
        self.check_input(s)?;
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if s[feature] <= threshold { left } else { right },
                _ => return Ok(i),
            }
        }
    }

    pub fn leaf_label(&self, leaf: usize) -> Option<LeafLabel> {
        match &self.nodes[leaf] {
            Node::Action { action } => Some(LeafLabel::Action(*action)),
            Node::Linear { coef, intercept } => Some(LeafLabel::Linear {
                coef: coef.clone(),
                intercept: *intercept,
            }),
            Node::Split { .. } => None,
        }
    }

    pub fn predict(&self, s: &[f64]) -> Result<Action> {
        let leaf = self.leaf_index(s)?;
        Ok(match &self.nodes[leaf] {
            Node::Action { action } => Action::Discrete(*action),
            Node::Linear { coef, intercept } => {
                Action::Continuous(coef.iter().zip(s).fold(*intercept, |acc, (c, x)| acc + c * x))
            }
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        })
    }

    pub fn predict_discrete(&self, s: &[f64]) -> Result<usize> {
        self.predict(s)?
            .index()
            .ok_or_else(|| Error::Unsupported("tree has linear leaves".into()))
    }

    /// Boxes of all reachable leaves, in preorder.
    pub fn leaf_regions(&self) -> Vec<LeafRegion> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, LeafBox::unbounded(self.dim))];
        while let Some((i, bounds)) = stack.pop() {
            if !bounds.is_reachable() {
                continue;
            }
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let mut lb = bounds.clone();
                    lb.upper[feature] = lb.upper[feature].min(threshold);
                    let mut rb = bounds;
                    rb.lower[feature] = rb.lower[feature].max(threshold);
                    stack.push((right, rb));
                    stack.push((left, lb));
                }
                _ => out.push(LeafRegion {
                    leaf: i,
                    bounds,
                    label: self.leaf_label(i).expect("leaf"),
                }),
            }
        }
        out
    }

    /// New root routing one side of `s[feature] = threshold` to a fixed
    /// action and the other side to the existing tree.
    pub fn with_root_guard(
        &self,
        feature: usize,
        threshold: f64,
        action: usize,
        side: GuardSide,
    ) -> Result<DecisionTree> {
        if feature >= self.dim {
            return Err(Error::invalid(format!(
                "feature {feature} out of range for a {}-dimensional tree",
                self.dim
            )));
        }
        if !threshold.is_finite() {
            return Err(Error::invalid("guard threshold must be finite"));
        }
        if self.leaf_kind != LeafKind::Discrete {
            return Err(Error::Unsupported("root guards need a discrete tree".into()));
        }
        let shift = |i: usize| i + 2;
        let mut nodes = Vec::with_capacity(self.nodes.len() + 2);
        let (left, right) = match side {
            GuardSide::AtMost => (1, 2),
            GuardSide::Above => (2, 1),
        };
        nodes.push(Node::Split {
            feature,
            threshold,
            left,
            right,
        });
        nodes.push(Node::Action { action });
        for node in &self.nodes {
            nodes.push(match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => Node::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: shift(*left),
                    right: shift(*right),
                },
                other => other.clone(),
            });
        }
        let tree = DecisionTree {
            version: FORMAT_VERSION,
            dim: self.dim,
            leaf_kind: self.leaf_kind,
            nodes,
        };
        tree.validate()?;
        Ok(tree)
    }
}

impl Policy for DecisionTree {
    fn act(&self, state: &StateVector) -> Result<Action> {
        self.predict(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub leaf_kind: LeafKind,
    /// Linear leaves only: fit an intercept term.
    pub fit_intercept: bool,
    /// Thresholds with `|t| < origin_margin` are never used.
    pub origin_margin: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 8,
            min_samples_leaf: 1,
            leaf_kind: LeafKind::Discrete,
            fit_intercept: true,
            origin_margin: 0.0,
        }
    }
}

/// Gini impurity `1 - sum p_k^2` of class weights.
pub fn gini(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

/// Threshold strictly below `b` and at least `a`, as close to the midpoint
/// as floating point allows.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b && m >= a {
        m
    } else {
        a
    }
}

struct Data<'a> {
    xs: Vec<&'a [f64]>,
    weights: Vec<f64>,
    dim: usize,
}

fn prepare<'a, S: AsRef<[f64]>>(
    xs: &'a [S],
    n_targets: usize,
    weights: Option<&[f64]>,
) -> Result<Data<'a>> {
    if xs.is_empty() {
        return Err(Error::invalid("cannot fit a tree to an empty dataset"));
    }
    if n_targets != xs.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: n_targets,
        });
    }
    let dim = xs[0].as_ref().len();
    if dim == 0 {
        return Err(Error::invalid("states must have at least one feature"));
    }
    let mut rows = Vec::with_capacity(xs.len());
    for x in xs {
        let x = x.as_ref();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training state".into()));
        }
        rows.push(x);
    }
    let weights = match weights {
        Some(w) => {
            if w.len() != xs.len() {
                return Err(Error::DimensionMismatch {
                    expected: xs.len(),
                    got: w.len(),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("sample weights must be finite and nonnegative"));
            }
            w.to_vec()
        }
        None => vec![1.0; xs.len()],
    };
    Ok(Data {
        xs: rows,
        weights,
        dim,
    })
}

/// Indices sorted by feature `f`, ties by index.
fn sorted_by(data: &Data, idx: &[usize], f: usize) -> Vec<usize> {
    let mut v = idx.to_vec();
    v.sort_by(|&a, &b| data.xs[a][f].total_cmp(&data.xs[b][f]).then(a.cmp(&b)));
    v
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// CART classification tree minimizing weighted Gini impurity.
pub fn fit_classifier<S: AsRef<[f64]>>(
    xs: &[S],
    labels: &[usize],
    weights: Option<&[f64]>,
    config: &TreeConfig,
) -> Result<DecisionTree> {
    let data = prepare(xs, labels.len(), weights)?;
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| data.weights[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(Error::ZeroWeights);
    }
    let mut nodes = Vec::new();
    grow_classifier(&data, labels, n_classes, &idx, 0, config, &mut nodes);
    Ok(DecisionTree {
        version: FORMAT_VERSION,
        dim: data.dim,
        leaf_kind: LeafKind::Discrete,
        nodes,
    })
}

fn class_weights(data: &Data, labels: &[usize], n_classes: usize, idx: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; n_classes];
    for &i in idx {
        c[labels[i]] += data.weights[i];
    }
    c
}

fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

fn grow_classifier(
    data: &Data,
    labels: &[usize],
    n_classes: usize,
    idx: &[usize],
    depth: usize,
    config: &TreeConfig,
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    let counts = class_weights(data, labels, n_classes, idx);
    nodes.push(Node::Action {
        action: majority(&counts),
    });
    let total: f64 = counts.iter().sum();
    let parent = total * gini(&counts);
    if depth >= config.max_depth || parent <= 0.0 {
        return me;
    }
    let min_leaf = config.min_samples_leaf.max(1) as f64;
    let eps = 1e-12 * total.max(1.0);
    let mut best: Option<Candidate> = None;
    for f in 0..data.dim {
        let order = sorted_by(data, idx, f);
        let mut left = vec![0.0; n_classes];
        let mut left_w = 0.0;
        for k in 0..order.len() - 1 {
            let i = order[k];
            left[labels[i]] += data.weights[i];
            left_w += data.weights[i];
            let a = data.xs[i][f];
            let b = data.xs[order[k + 1]][f];
            if a == b {
                continue;
            }
            let right_w = total - left_w;
            if left_w < min_leaf || right_w < min_leaf {
                continue;
            }
            let t = midpoint(a, b);
            if t.abs() < config.origin_margin {
                continue;
            }
            let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
            let score = left_w * gini(&left) + right_w * gini(&right);
            if best.as_ref().is_none_or(|b| score < b.score - eps) {
                best = Some(Candidate {
                    feature: f,
                    threshold: t,
                    score,
                });
            }
        }
    }
    let Some(best) = best else { return me };
    if best.score >= parent - eps {
        return me;
    }
    let (li, ri): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| data.xs[i][best.feature] <= best.threshold);
    let left = grow_classifier(data, labels, n_classes, &li, depth + 1, config, nodes);
    let right = grow_classifier(data, labels, n_classes, &ri, depth + 1, config, nodes);
    nodes[me] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    me
}

const RIDGE: f64 = 1e-8;

/// Sufficient statistics of a weighted least-squares problem.
#[derive(Clone)]
struct Moments {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    weight: f64,
}

impl Moments {
    fn new(p: usize) -> Self {
        Moments {
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
            weight: 0.0,
        }
    }

    fn add(&mut self, z: &[f64], y: f64, w: f64) {
        let p = z.len();
        for a in 0..p {
            let wa = w * z[a];
            self.xty[a] += wa * y;
            for b in a..p {
                self.xtx[(a, b)] += wa * z[b];
            }
        }
        self.yty += w * y * y;
        self.weight += w;
    }

    fn minus(&self, other: &Moments) -> Moments {
        Moments {
            xtx: &self.xtx - &other.xtx,
            xty: &self.xty - &other.xty,
            yty: self.yty - other.yty,
            weight: self.weight - other.weight,
        }
    }

    fn solve(&self) -> DVector<f64> {
        let p = self.xty.len();
        let mut m = self.xtx.clone();
        for a in 0..p {
            for b in 0..a {
                m[(a, b)] = m[(b, a)];
            }
            m[(a, a)] += RIDGE;
        }
        match m.clone().cholesky() {
            Some(ch) => ch.solve(&self.xty),
            None => m
                .lu()
                .solve(&self.xty)
                .unwrap_or_else(|| DVector::zeros(p)),
        }
    }

    fn sse(&self) -> f64 {
        let beta = self.solve();
        (self.yty - beta.dot(&self.xty)).max(0.0)
    }
}

fn design_row(x: &[f64], intercept: bool) -> Vec<f64> {
    let mut z = x.to_vec();
    if intercept {
        z.push(1.0);
    }
    z
}

/// Regression tree with least-squares linear models in the leaves; splits
/// minimize the summed squared residuals of the two child fits.
pub fn fit_linear<S: AsRef<[f64]>>(
    xs: &[S],
    targets: &[f64],
    weights: Option<&[f64]>,
    config: &TreeConfig,
) -> Result<DecisionTree> {
    let data = prepare(xs, targets.len(), weights)?;
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("regression target".into()));
    }
    let idx: Vec<usize> = (0..targets.len()).filter(|&i| data.weights[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(Error::ZeroWeights);
    }
    let rows: Vec<Vec<f64>> = data
        .xs
        .iter()
        .map(|x| design_row(x, config.fit_intercept))
        .collect();
    let mut nodes = Vec::new();
    grow_linear(&data, &rows, targets, &idx, 0, config, &mut nodes);
    Ok(DecisionTree {
        version: FORMAT_VERSION,
        dim: data.dim,
        leaf_kind: LeafKind::Linear,
        nodes,
    })
}

fn grow_linear(
    data: &Data,
    rows: &[Vec<f64>],
    targets: &[f64],
    idx: &[usize],
    depth: usize,
    config: &TreeConfig,
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    let p = rows[0].len();
    let mut all = Moments::new(p);
    for &i in idx {
        all.add(&rows[i], targets[i], data.weights[i]);
    }
    let beta = all.solve();
    let (coef, intercept) = if config.fit_intercept {
        (beta.as_slice()[..data.dim].to_vec(), beta[data.dim])
    } else {
        (beta.as_slice().to_vec(), 0.0)
    };
    nodes.push(Node::Linear { coef, intercept });
    let parent = all.sse();
    if depth >= config.max_depth || parent <= 0.0 {
        return me;
    }
    let min_leaf = config.min_samples_leaf.max(1) as f64;
    let eps = 1e-12 * all.yty.max(1e-300);
    let mut best: Option<Candidate> = None;
    for f in 0..data.dim {
        let order = sorted_by(data, idx, f);
        let mut left = Moments::new(p);
        for k in 0..order.len() - 1 {
            let i = order[k];
            left.add(&rows[i], targets[i], data.weights[i]);
            let a = data.xs[i][f];
            let b = data.xs[order[k + 1]][f];
            if a == b {
                continue;
            }
            let right = all.minus(&left);
            if left.weight < min_leaf || right.weight < min_leaf {
                continue;
            }
            let t = midpoint(a, b);
            if t.abs() < config.origin_margin {
                continue;
            }
            let score = left.sse() + right.sse();
            if best.as_ref().is_none_or(|b| score < b.score - eps) {
                best = Some(Candidate {
                    feature: f,
                    threshold: t,
                    score,
                });
            }
        }
    }
    let Some(best) = best else { return me };
    if best.score >= parent - eps {
        return me;
    }
    let (li, ri): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| data.xs[i][best.feature] <= best.threshold);
    let left = grow_linear(data, rows, targets, &li, depth + 1, config, nodes);
    let right = grow_linear(data, rows, targets, &ri, depth + 1, config, nodes);
    nodes[me] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    me
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_of_even_split() {
        assert_eq!(gini(&[2.0, 2.0]), 0.5);
        assert_eq!(gini(&[3.0, 0.0]), 0.0);
    }

    #[test]
    fn single_label_gives_single_leaf() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0]];
        let t = fit_classifier(&xs, &[1, 1, 1], None, &TreeConfig::default()).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.predict_discrete(&[5.0]).unwrap(), 1);
    }

    #[test]
    fn one_threshold_separates() {
        let xs = vec![vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]];
        let t = fit_classifier(&xs, &[0, 0, 1, 1], None, &TreeConfig::default()).unwrap();
        assert_eq!(t.node_count(), 3);
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.0),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn boundary_goes_left() {
        let t = DecisionTree {
            version: 1,
            dim: 1,
            leaf_kind: LeafKind::Discrete,
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                },
                Node::Action { action: 0 },
                Node::Action { action: 1 },
            ],
        };
        assert_eq!(t.predict_discrete(&[0.0]).unwrap(), 0);
        assert_eq!(t.predict_discrete(&[1e-300]).unwrap(), 1);
    }

    #[test]
    fn contradictory_path_is_unreachable() {
        let t = DecisionTree {
            version: 1,
            dim: 1,
            leaf_kind: LeafKind::Discrete,
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 4,
                },
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 2,
                    right: 3,
                },
                Node::Action { action: 0 },
                Node::Action { action: 1 },
                Node::Action { action: 2 },
            ],
        };
        let leaves: Vec<usize> = t.leaf_regions().iter().map(|r| r.leaf).collect();
        assert_eq!(leaves, vec![2, 4]);
    }

    #[test]
    fn linear_leaves_recover_a_line() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x[0] - 1.0).collect();
        let t = fit_linear(&xs, &ys, None, &TreeConfig { leaf_kind: LeafKind::Linear, ..Default::default() })
            .unwrap();
        assert_eq!(t.node_count(), 1);
        match t.predict(&[0.5]).unwrap() {
            Action::Continuous(v) => assert!((v - 0.5).abs() < 1e-6),
            _ => panic!(),
        }
    }

    #[test]
    fn root_guard_adds_two_nodes() {
        let t = DecisionTree::single_action(2, 1);
        let g = t.with_root_guard(0, 3.0, 0, GuardSide::AtMost).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.predict_discrete(&[2.0, 0.0]).unwrap(), 0);
        assert_eq!(g.predict_discrete(&[4.0, 0.0]).unwrap(), 1);
        assert!(t.with_root_guard(5, 0.0, 0, GuardSide::AtMost).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut t = DecisionTree::single_action(1, 0);
        t.version = 2;
        let text = serde_json::to_string(&t).unwrap();
        assert!(matches!(DecisionTree::from_json(&text), Err(Error::Schema { .. })));
    }
}
