//! Exact polyhedral geometry: half-space polytopes, affine maps and
//! piecewise-affine systems with rational coefficients.

use num_integer::Integer;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use crate::error::{Error, Result};
use crate::lp::{q_from_f64, q_to_f64, LinearProgram, LpOutcome, Q};

/// `normal . s <= bound`, or `<` when `strict`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearConstraint {
    pub normal: Vec<Q>,
    pub bound: Q,
    pub strict: bool,
}

impl LinearConstraint {
    pub fn new(normal: Vec<Q>, bound: Q, strict: bool) -> Self {
        LinearConstraint {
            normal,
            bound,
            strict,
        }
    }

    /// `s[i] <= value` (or `<`).
    pub fn upper(dim: usize, i: usize, value: Q, strict: bool) -> Self {
        let mut normal = vec![Q::zero(); dim];
        normal[i] = Q::one();
        LinearConstraint::new(normal, value, strict)
    }

    /// `s[i] >= value` (or `>`).
    pub fn lower(dim: usize, i: usize, value: Q, strict: bool) -> Self {
        let mut normal = vec![Q::zero(); dim];
        normal[i] = -Q::one();
        LinearConstraint::new(normal, -value, strict)
    }

    /// The complement half-space.
    pub fn negated(&self) -> Self {
        LinearConstraint {
            normal: self.normal.iter().map(|c| -c).collect(),
            bound: -&self.bound,
            strict: !self.strict,
        }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn eval_exact(&self, s: &[Q]) -> Q {
        self.normal
            .iter()
            .zip(s)
            .filter(|(c, _)| !c.is_zero())
            .fold(Q::zero(), |acc, (c, x)| acc + c * x)
    }

    pub fn holds_exact(&self, s: &[Q]) -> bool {
        let lhs = self.eval_exact(s);
        if self.strict {
            lhs < self.bound
        } else {
            lhs <= self.bound
        }
    }

    /// Floating evaluation, summing nonzero terms in index order.
    pub fn holds_f64(&self, s: &[f64]) -> bool {
        let mut acc = 0.0;
        for (c, x) in self.normal.iter().zip(s) {
            if c.is_zero() {
                continue;
            }
            if c.is_one() {
                acc += *x;
            } else if (-c).is_one() {
                acc -= *x;
            } else {
                acc += q_to_f64(c) * *x;
            }
        }
        let bound = q_to_f64(&self.bound);
        if self.strict {
            acc < bound
        } else {
            acc <= bound
        }
    }

    /// Scales to coprime integer coefficients; `None` if the normal is zero.
    fn canonical(&self) -> Option<Self> {
        if self.normal.iter().all(|c| c.is_zero()) {
            return None;
        }
        let mut lcm = BigInt::one();
        for c in self.normal.iter().chain(std::iter::once(&self.bound)) {
            lcm = lcm.lcm(c.denom());
        }
        let scaled: Vec<BigInt> = self
            .normal
            .iter()
            .chain(std::iter::once(&self.bound))
            .map(|c| (c * Q::from_integer(lcm.clone())).to_integer())
            .collect();
        let mut g = BigInt::zero();
        for v in &scaled[..scaled.len() - 1] {
            g = g.gcd(v);
        }
        let g = Q::from_integer(g);
        let mut normal: Vec<Q> = scaled[..scaled.len() - 1]
            .iter()
            .map(|v| Q::from_integer(v.clone()) / &g)
            .collect();
        let bound = Q::from_integer(scaled[scaled.len() - 1].clone()) / &g;
        normal.shrink_to_fit();
        Some(LinearConstraint {
            normal,
            bound,
            strict: self.strict,
        })
    }
}

/// Intersection of finitely many (possibly strict) half-spaces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polytope {
    dim: usize,
    constraints: Vec<LinearConstraint>,
    trivially_empty: bool,
}

impl Polytope {
    /// All of `R^dim`.
    pub fn universe(dim: usize) -> Self {
        Polytope {
            dim,
            constraints: Vec::new(),
            trivially_empty: false,
        }
    }

    pub fn from_constraints(dim: usize, constraints: Vec<LinearConstraint>) -> Result<Self> {
        let mut p = Polytope::universe(dim);
        for c in constraints {
            p.push(c)?;
        }
        Ok(p)
    }

    /// Closed box; infinite bounds are omitted.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        let dim = lower.len();
        let mut p = Polytope::universe(dim);
        for i in 0..dim {
            if lower[i].is_finite() {
                p.push(LinearConstraint::lower(dim, i, q_from_f64(lower[i]), false))?;
            }
            if upper[i].is_finite() {
                p.push(LinearConstraint::upper(dim, i, q_from_f64(upper[i]), false))?;
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn push(&mut self, c: LinearConstraint) -> Result<()> {
        if c.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.dim(),
            });
        }
        match c.canonical() {
            None => {
                let violated = if c.strict {
                    !c.bound.is_positive()
                } else {
                    c.bound.is_negative()
                };
                if violated {
                    self.trivially_empty = true;
                }
            }
            Some(c) => {
                if let Some(existing) = self
                    .constraints
                    .iter_mut()
                    .find(|e| e.normal == c.normal)
                {
                    if c.bound < existing.bound || (c.bound == existing.bound && c.strict) {
                        *existing = c;
                    }
                } else {
                    self.constraints.push(c);
                }
            }
        }
        Ok(())
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        let mut out = self.clone();
        out.trivially_empty |= other.trivially_empty;
        for c in &other.constraints {
            out.push(c.clone())?;
        }
        Ok(out)
    }

    pub fn contains_exact(&self, s: &[Q]) -> bool {
        !self.trivially_empty && self.constraints.iter().all(|c| c.holds_exact(s))
    }

    pub fn contains_f64(&self, s: &[f64]) -> bool {
        !self.trivially_empty && self.constraints.iter().all(|c| c.holds_f64(s))
    }

    /// `{ s : map(s) in self }`.
    pub fn preimage(&self, map: &AffineMap) -> Result<Polytope> {
        if map.out_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: map.out_dim(),
            });
        }
        let mut out = Polytope::universe(map.in_dim());
        out.trivially_empty = self.trivially_empty;
        for c in &self.constraints {
            let mut normal = vec![Q::zero(); map.in_dim()];
            let mut shift = Q::zero();
            for (i, ci) in c.normal.iter().enumerate() {
                if ci.is_zero() {
                    continue;
                }
                for (j, m) in map.matrix[i].iter().enumerate() {
                    if !m.is_zero() {
                        normal[j] += ci * m;
                    }
                }
                shift += ci * &map.offset[i];
            }
            out.push(LinearConstraint::new(normal, &c.bound - shift, c.strict))?;
        }
        Ok(out)
    }

    fn slack_program(&self, slack_on: &[bool]) -> LinearProgram {
        let n = self.dim;
        let mut rows = Vec::with_capacity(self.constraints.len() + 1);
        for (c, &with_slack) in self.constraints.iter().zip(slack_on) {
            let mut r = c.normal.clone();
            r.push(if with_slack { Q::one() } else { Q::zero() });
            rows.push((r, c.bound.clone()));
        }
        let mut cap = vec![Q::zero(); n];
        cap.push(Q::one());
        rows.push((cap, Q::one()));
        let mut objective = vec![Q::zero(); n];
        objective.push(Q::one());
        LinearProgram {
            num_free: n,
            num_nonneg: 1,
            objective,
            rows,
        }
    }

    /// Exact emptiness, honouring strict inequalities.
    pub fn is_empty(&self) -> bool {
        self.feasible_point().is_none()
    }

    /// Some point satisfying every constraint (strict ones strictly).
    pub fn feasible_point(&self) -> Option<Vec<Q>> {
        if self.trivially_empty {
            return None;
        }
        if self.constraints.is_empty() {
            return Some(vec![Q::zero(); self.dim]);
        }
        let slack_on: Vec<bool> = self.constraints.iter().map(|c| c.strict).collect();
        let any_strict = slack_on.iter().any(|&s| s);
        match self.slack_program(&slack_on).solve() {
            LpOutcome::Optimal { value, mut point } => {
                if any_strict && !value.is_positive() {
                    return None;
                }
                point.truncate(self.dim);
                Some(point)
            }
            LpOutcome::Infeasible => None,
            LpOutcome::Unbounded => unreachable!("slack variable is capped"),
        }
    }

    /// Per-coordinate bounds of `map(closure(self))`; `None` for an
    /// unbounded side. Returns `None` when `self` is empty.
    pub fn image_bounds(&self, map: &AffineMap) -> Option<Vec<(Option<Q>, Option<Q>)>> {
        if self.trivially_empty {
            return None;
        }
        let rows: Vec<(Vec<Q>, Q)> = self
            .constraints
            .iter()
            .map(|c| (c.normal.clone(), c.bound.clone()))
            .collect();
        let mut out = Vec::with_capacity(map.out_dim());
        for (row, offset) in map.matrix.iter().zip(&map.offset) {
            let side = |sign: &Q| -> Option<Option<Q>> {
                let lp = LinearProgram {
                    num_free: self.dim,
                    num_nonneg: 0,
                    objective: row.iter().map(|a| a * sign).collect(),
                    rows: rows.clone(),
                };
                match lp.solve() {
                    LpOutcome::Infeasible => None,
                    LpOutcome::Unbounded => Some(None),
                    LpOutcome::Optimal { value, .. } => Some(Some(value * sign + offset)),
                }
            };
            let hi = side(&Q::one())?;
            let lo = side(&-Q::one())?;
            out.push((lo, hi));
        }
        Some(out)
    }

    /// False only when no point of the box `bounds` satisfies every
    /// constraint taken individually.
    pub fn may_meet_box(&self, bounds: &[(Option<Q>, Option<Q>)]) -> bool {
        if self.trivially_empty {
            return false;
        }
        self.constraints.iter().all(|c| {
            let mut least = Q::zero();
            for (a, (lo, hi)) in c.normal.iter().zip(bounds) {
                if a.is_zero() {
                    continue;
                }
                let end = if a.is_positive() { lo } else { hi };
                match end {
                    Some(v) => least += a * v,
                    None => return true,
                }
            }
            if c.strict {
                least < c.bound
            } else {
                least <= c.bound
            }
        })
    }

    /// A point in the relative interior: every constraint that is not an
    /// implied equality holds strictly.
    pub fn relative_interior_point(&self) -> Option<Vec<Q>> {
        let base = self.feasible_point()?;
        if self.constraints.is_empty() {
            return Some(base);
        }
        let all = vec![true; self.constraints.len()];
        if let LpOutcome::Optimal { value, mut point } = self.slack_program(&all).solve() {
            if value.is_positive() {
                point.truncate(self.dim);
                return Some(point);
            }
        }
        // find constraints that are tight on the whole polytope
        let closure: Vec<LinearConstraint> = self
            .constraints
            .iter()
            .map(|c| LinearConstraint {
                strict: false,
                ..c.clone()
            })
            .collect();
        let rows: Vec<(Vec<Q>, Q)> = closure
            .iter()
            .map(|c| (c.normal.clone(), c.bound.clone()))
            .collect();
        let mut slack_on = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            if c.strict {
                slack_on.push(true);
                continue;
            }
            let lp = LinearProgram {
                num_free: self.dim,
                num_nonneg: 0,
                objective: c.normal.iter().map(|x| -x).collect(),
                rows: rows.clone(),
            };
            let implied_equality = match lp.solve() {
                LpOutcome::Optimal { value, .. } => &c.bound + value == Q::zero(),
                _ => false,
            };
            slack_on.push(!implied_equality);
        }
        match self.slack_program(&slack_on).solve() {
            LpOutcome::Optimal { mut point, .. } => {
                point.truncate(self.dim);
                Some(point)
            }
            _ => Some(base),
        }
    }
}

/// `s -> matrix * s + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: Vec<Vec<Q>>,
    pub offset: Vec<Q>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![vec![Q::zero(); dim]; dim];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = Q::one();
        }
        AffineMap {
            matrix,
            offset: vec![Q::zero(); dim],
        }
    }

    pub fn from_f64(matrix: &[Vec<f64>], offset: &[f64]) -> Self {
        AffineMap {
            matrix: matrix
                .iter()
                .map(|r| r.iter().map(|&x| q_from_f64(x)).collect())
                .collect(),
            offset: offset.iter().map(|&x| q_from_f64(x)).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.first().map_or(0, |r| r.len())
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.len()
    }

    /// `self o inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let n = inner.in_dim();
        let mut matrix = vec![vec![Q::zero(); n]; self.out_dim()];
        let mut offset = self.offset.clone();
        for i in 0..self.out_dim() {
            for (k, a) in self.matrix[i].iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = &inner.matrix[k][j];
                    if !b.is_zero() {
                        matrix[i][j] += a * b;
                    }
                }
                offset[i] += a * &inner.offset[k];
            }
        }
        AffineMap { matrix, offset }
    }

    pub fn apply_exact(&self, s: &[Q]) -> Vec<Q> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, c)| {
                row.iter()
                    .zip(s)
                    .filter(|(a, _)| !a.is_zero())
                    .fold(c.clone(), |acc, (a, x)| acc + a * x)
            })
            .collect()
    }

    /// Floating evaluation: start from the offset, then add nonzero terms
    /// in column order. Unit coefficients become plain additions.
    pub fn apply_f64(&self, s: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, c)| {
                let mut nonzero = row.iter().zip(s).filter(|(a, _)| !a.is_zero());
                // a zero offset contributes nothing: begin with the first term
                let mut acc = if c.is_zero() {
                    match nonzero.next() {
                        None => return 0.0,
                        Some((a, x)) => term(a, *x),
                    }
                } else {
                    q_to_f64(c)
                };
                for (a, x) in nonzero {
                    if a.is_one() {
                        acc += *x;
                    } else if (-a).is_one() {
                        acc -= *x;
                    } else {
                        acc += q_to_f64(a) * *x;
                    }
                }
                acc
            })
            .collect()
    }
}

fn term(a: &Q, x: f64) -> f64 {
    if a.is_one() {
        x
    } else if (-a).is_one() {
        -x
    } else {
        q_to_f64(a) * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub guard: Polytope,
    pub map: AffineMap,
    pub label: String,
}

/// Guards partition the operating region; each carries its own affine update.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffineSystem {
    pub dim: usize,
    pub pieces: Vec<Piece>,
}

impl PiecewiseAffineSystem {
    pub fn new(dim: usize, pieces: Vec<Piece>) -> Result<Self> {
        for (k, p) in pieces.iter().enumerate() {
            if p.guard.dim() != dim || p.map.in_dim() != dim || p.map.out_dim() != dim {
                return Err(Error::invalid(format!(
                    "piece {k} ({}) is not {dim}-dimensional",
                    p.label
                )));
            }
        }
        Ok(PiecewiseAffineSystem { dim, pieces })
    }

    pub fn piece_index_f64(&self, s: &[f64]) -> Option<usize> {
        self.pieces.iter().position(|p| p.guard.contains_f64(s))
    }

    pub fn piece_index_exact(&self, s: &[Q]) -> Option<usize> {
        self.pieces.iter().position(|p| p.guard.contains_exact(s))
    }

    pub fn step_f64(&self, s: &[f64]) -> Option<Vec<f64>> {
        self.piece_index_f64(s)
            .map(|i| self.pieces[i].map.apply_f64(s))
    }

    pub fn step_exact(&self, s: &[Q]) -> Option<Vec<Q>> {
        self.piece_index_exact(s)
            .map(|i| self.pieces[i].map.apply_exact(s))
    }
}

/// One piecewise-affine system per discrete action.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPwa {
    pub dim: usize,
    pub per_action: Vec<PiecewiseAffineSystem>,
}

pub fn q_vec_to_f64(v: &[Q]) -> Vec<f64> {
    v.iter().map(q_to_f64).collect()
}

pub fn q_vec_from_f64(v: &[f64]) -> Vec<Q> {
    v.iter().map(|&x| q_from_f64(x)).collect()
}
