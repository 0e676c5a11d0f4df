//! Lyapunov stability certificates for polynomial closed-loop dynamics.
//!
//! A quadratic candidate `V(s) = sᵀPs` comes from the Lyapunov equation of
//! the linearization. Interval branch-and-bound then proves
//! `V̇(s) ≤ -c‖s‖²` on `{V ≤ ρ, ‖s‖₂ ≥ δ}` and a bisection search maximizes ρ.
//! Certificates hold for the polynomial dynamics they were computed from.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtree::{DecisionTree, LeafBox, LeafLabel};
use crate::error::{Error, Result};
use crate::linalg::{
    is_positive_definite, matrix_from_rows, matrix_to_rows, quad_form, solve_continuous_lyapunov,
    spectral_abscissa, symmetric_eigenvalues, symmetrize,
};
use crate::mdp::rng_from_seed;
use crate::poly::{Polynomial, PolynomialMap};
use crate::verify::interval::{box_mid, enclose, widest_dim, Interval, IntervalBox};

pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_MARGIN: f64 = 1e-3;
pub const DEFAULT_BOX_BUDGET: u64 = 10_000_000;
pub const RHO_SEARCH_STEPS: u32 = 20;
pub const RHO_FLOOR: f64 = 1e-6;

const SAMPLE_DIRECTIONS: usize = 2000;
const SAMPLE_LEVELS: usize = 241;
const SAMPLE_MAX_LEVEL: f64 = 1e6;
const MIN_BOX_WIDTH: f64 = 1e-13;

/// Solves `AᵀP + PA = -I` for a Hurwitz `A`.
pub fn lyapunov_candidate(a_cl: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a_cl.nrows() != a_cl.ncols() {
        return Err(Error::invalid("closed-loop matrix must be square"));
    }
    let alpha = spectral_abscissa(a_cl);
    if !(alpha < 0.0) {
        return Err(Error::invalid(format!(
            "closed-loop matrix is not Hurwitz (spectral abscissa {alpha})"
        )));
    }
    let n = a_cl.nrows();
    let p = symmetrize(&solve_continuous_lyapunov(a_cl, &DMatrix::identity(n, n))?);
    if !is_positive_definite(&p) {
        return Err(Error::Numerical("Lyapunov solution is not positive definite".into()));
    }
    Ok(p)
}

/// `V(s) = sᵀPs`.
pub fn quadratic_polynomial(p: &DMatrix<f64>) -> Polynomial {
    let n = p.nrows();
    let mut v = Polynomial::zero(n);
    for i in 0..n {
        for j in 0..n {
            let mut m = vec![0; n];
            m[i] += 1;
            m[j] += 1;
            v.add_term(m, p[(i, j)]);
        }
    }
    v
}

/// `V̇(s) = 2 sᵀP f(s)`.
pub fn vdot_polynomial(p: &DMatrix<f64>, f: &PolynomialMap) -> Result<Polynomial> {
    let n = p.nrows();
    if p.ncols() != n || f.dim_in != n || f.dim_out() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: f.dim_out(),
        });
    }
    let mut out = Polynomial::zero(n);
    for i in 0..n {
        let si = Polynomial::var(n, i);
        for j in 0..n {
            let c = 2.0 * p[(i, j)];
            if c != 0.0 {
                out = &out + &(&si * &f.outputs[j]).scale(c);
            }
        }
    }
    Ok(out)
}

/// `‖s‖²`.
pub fn squared_norm_polynomial(n: usize) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for i in 0..n {
        let mut m = vec![0; n];
        m[i] = 2;
        p.add_term(m, 1.0);
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Radius of the excluded ball around the origin.
    pub delta: f64,
    /// `c` in `V̇ ≤ -c‖s‖²`.
    pub margin: f64,
    /// Maximum number of boxes per certification run.
    pub budget: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            delta: DEFAULT_DELTA,
            margin: DEFAULT_MARGIN,
            budget: DEFAULT_BOX_BUDGET,
        }
    }
}

impl CertifyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta must be positive"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin must be positive"));
        }
        if self.budget == 0 {
            return Err(Error::invalid("box budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub boxes: u64,
    pub max_depth: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertifyOutcome {
    Certified(SearchStats),
    /// A point in the region where `V̇(s) > -c‖s‖²`.
    Violation { point: Vec<f64>, stats: SearchStats },
    BudgetExhausted(SearchStats),
}

impl CertifyOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, CertifyOutcome::Certified(_))
    }

    pub fn stats(&self) -> SearchStats {
        match self {
            CertifyOutcome::Certified(s) | CertifyOutcome::BudgetExhausted(s) => *s,
            CertifyOutcome::Violation { stats, .. } => *stats,
        }
    }

    pub fn violation(&self) -> Option<&[f64]> {
        match self {
            CertifyOutcome::Violation { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// The inequality `g(s) = V̇(s) + c‖s‖² ≤ 0` on `{V ≤ ρ, ‖s‖ ≥ δ}`.
struct Problem {
    v: Polynomial,
    g: Polynomial,
    rho: f64,
    delta: f64,
    /// Largest eigenvalue of the quadratic part of `g`.
    quad_max: f64,
    /// `(degree, |coefficient|)` of the terms of `g` of degree three and up.
    tail: Vec<(u32, f64)>,
    /// `g` has no constant or linear terms.
    origin_bound: bool,
}

enum Step {
    Discard,
    Violation(Vec<f64>),
    Split,
    Stuck,
}

impl Problem {
    fn new(p: &DMatrix<f64>, f: &PolynomialMap, rho: f64, opts: &CertifyOptions) -> Result<Self> {
        let n = p.nrows();
        let v = quadratic_polynomial(p);
        let g = &vdot_polynomial(p, f)? + &squared_norm_polynomial(n).scale(opts.margin);
        let quad = g.homogeneous_part(2);
        let mut m = DMatrix::zeros(n, n);
        for (mono, c) in quad.terms() {
            let idx: Vec<usize> = mono
                .iter()
                .enumerate()
                .flat_map(|(i, &e)| std::iter::repeat(i).take(e as usize))
                .collect();
            if idx[0] == idx[1] {
                m[(idx[0], idx[0])] += c;
            } else {
                m[(idx[0], idx[1])] += 0.5 * c;
                m[(idx[1], idx[0])] += 0.5 * c;
            }
        }
        let quad_max = symmetric_eigenvalues(&m).last().copied().unwrap_or(0.0);
        let tail = g
            .terms()
            .filter_map(|(mono, c)| {
                let d: u32 = mono.iter().sum();
                (d >= 3).then_some((d, c.abs()))
            })
            .collect();
        let origin_bound = g.terms().all(|(mono, _)| mono.iter().sum::<u32>() >= 2);
        Ok(Problem {
            v,
            g,
            rho,
            delta: opts.delta,
            quad_max,
            tail,
            origin_bound,
        })
    }

    /// `g ≤ (λ_max + Σ|c_k| r^(d_k - 2)) ‖s‖²` where `r` bounds `|s_i|` on the box.
    fn near_origin_negative(&self, b: &[Interval]) -> bool {
        if !self.origin_bound {
            return false;
        }
        let r = b.iter().map(Interval::mag).fold(0.0, f64::max);
        let tail: f64 = self.tail.iter().map(|&(d, c)| c * r.powi(d as i32 - 2)).sum();
        let bound = self.quad_max + tail * (1.0 + 1e-12);
        bound < -1e-12
    }

    fn step(&self, b: &[Interval]) -> Step {
        if enclose(&self.v, b).lo > self.rho {
            return Step::Discard;
        }
        let far: f64 = b.iter().map(|x| x.mag() * x.mag()).sum();
        if far < self.delta * self.delta {
            return Step::Discard;
        }
        if self.near_origin_negative(b) {
            return Step::Discard;
        }
        if enclose(&self.g, b).hi <= 0.0 {
            return Step::Discard;
        }
        let c = box_mid(b);
        let norm2: f64 = c.iter().map(|x| x * x).sum();
        if self.v.eval(&c) <= self.rho && norm2 >= self.delta * self.delta && self.g.eval(&c) > 0.0 {
            return Step::Violation(c);
        }
        if b[widest_dim(b)].width() < MIN_BOX_WIDTH {
            return Step::Stuck;
        }
        Step::Split
    }
}

fn split_box(b: &[Interval]) -> (IntervalBox, IntervalBox) {
    let k = widest_dim(b);
    let (l, r) = b[k].split();
    let mut lb = b.to_vec();
    let mut rb = b.to_vec();
    lb[k] = l;
    rb[k] = r;
    (lb, rb)
}

enum Local {
    Done(u32),
    Violation(Vec<f64>),
    Exhausted(u32),
    Cancelled(u32),
}

fn depth_first(problem: &Problem, root: IntervalBox, depth: u32, budget: u64, counter: &AtomicU64, stop: &AtomicBool) -> Local {
    let mut stack = vec![(root, depth)];
    let mut max_depth = depth;
    while let Some((b, d)) = stack.pop() {
        if stop.load(Ordering::Relaxed) {
            return Local::Cancelled(max_depth);
        }
        if counter.fetch_add(1, Ordering::Relaxed) >= budget {
            stop.store(true, Ordering::Relaxed);
            return Local::Exhausted(max_depth);
        }
        max_depth = max_depth.max(d);
        match problem.step(&b) {
            Step::Discard => {}
            Step::Violation(p) => {
                stop.store(true, Ordering::Relaxed);
                return Local::Violation(p);
            }
            Step::Stuck => {
                stop.store(true, Ordering::Relaxed);
                return Local::Exhausted(max_depth);
            }
            Step::Split => {
                let (l, r) = split_box(&b);
                stack.push((r, d + 1));
                stack.push((l, d + 1));
            }
        }
    }
    Local::Done(max_depth)
}

/// Bounding box of `{sᵀPs ≤ ρ}`: half-widths `sqrt(ρ (P⁻¹)_ii)`.
pub fn ellipsoid_extents(p: &DMatrix<f64>, rho: f64) -> Result<Vec<f64>> {
    let inv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("P is singular".into()))?;
    Ok((0..p.nrows()).map(|i| (rho * inv[(i, i)]).sqrt()).collect())
}

/// Proves `V̇(s) ≤ -c‖s‖²` for all `s` with `V(s) ≤ ρ` and `‖s‖₂ ≥ δ`, where
/// `V(s) = sᵀPs` and `V̇` is taken along `f`.
pub fn certify_region(p: &DMatrix<f64>, f: &PolynomialMap, rho: f64, opts: &CertifyOptions) -> Result<CertifyOutcome> {
    opts.validate()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho must be positive"));
    }
    if !is_positive_definite(p) {
        return Err(Error::invalid("P must be positive definite"));
    }
    let problem = Problem::new(p, f, rho, opts)?;
    let root: IntervalBox = ellipsoid_extents(p, rho)?
        .into_iter()
        .map(|w| {
            let w = w * (1.0 + 1e-9);
            Interval::new(-w, w)
        })
        .collect();

    // breadth-first until there is enough independent work
    let target = 8 * rayon::current_num_threads();
    let mut frontier = vec![(root, 0u32)];
    let mut boxes = 0u64;
    let mut max_depth = 0u32;
    while !frontier.is_empty() && frontier.len() < target {
        let mut next = Vec::with_capacity(2 * frontier.len());
        for (b, d) in frontier {
            boxes += 1;
            max_depth = max_depth.max(d);
            if boxes > opts.budget {
                return Ok(CertifyOutcome::BudgetExhausted(SearchStats { boxes, max_depth }));
            }
            match problem.step(&b) {
                Step::Discard => {}
                Step::Violation(point) => {
                    return Ok(CertifyOutcome::Violation {
                        point,
                        stats: SearchStats { boxes, max_depth },
                    })
                }
                Step::Stuck => {
                    return Ok(CertifyOutcome::BudgetExhausted(SearchStats { boxes, max_depth }));
                }
                Step::Split => {
                    let (l, r) = split_box(&b);
                    next.push((l, d + 1));
                    next.push((r, d + 1));
                }
            }
        }
        frontier = next;
    }

    let counter = AtomicU64::new(boxes);
    let stop = AtomicBool::new(false);
    let results: Vec<Local> = frontier
        .into_par_iter()
        .map(|(b, d)| depth_first(&problem, b, d, opts.budget, &counter, &stop))
        .collect();
    let mut exhausted = false;
    let mut violation = None;
    for r in results {
        match r {
            Local::Done(d) | Local::Cancelled(d) => max_depth = max_depth.max(d),
            Local::Exhausted(d) => {
                exhausted = true;
                max_depth = max_depth.max(d);
            }
            Local::Violation(p) => {
                if violation.is_none() {
                    violation = Some(p);
                }
            }
        }
    }
    let stats = SearchStats {
        boxes: counter.load(Ordering::Relaxed).min(opts.budget),
        max_depth,
    };
    Ok(match violation {
        Some(point) => CertifyOutcome::Violation { point, stats },
        None if exhausted => CertifyOutcome::BudgetExhausted(stats),
        None => CertifyOutcome::Certified(stats),
    })
}

/// Smallest level `V = t` at which sampled rays first show `V̇ > -c‖s‖²`,
/// or `1e6` when no ray does.
pub fn sampled_violation_level(p: &DMatrix<f64>, f: &PolynomialMap, opts: &CertifyOptions, seed: u64) -> Result<f64> {
    let n = p.nrows();
    let g = &vdot_polynomial(p, f)? + &squared_norm_polynomial(n).scale(opts.margin);
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("P must be positive definite"))?;
    // s = L^{-T} u has V(s) = |u|^2
    let l_inv_t = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor is singular".into()))?
        .transpose();
    let mut rng = rng_from_seed(seed);
    let levels: Vec<f64> = (0..SAMPLE_LEVELS)
        .map(|k| RHO_FLOOR * (SAMPLE_MAX_LEVEL / RHO_FLOOR).powf(k as f64 / (SAMPLE_LEVELS - 1) as f64))
        .collect();
    let mut best = SAMPLE_MAX_LEVEL;
    for _ in 0..SAMPLE_DIRECTIONS {
        let u: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let dir = &l_inv_t * nalgebra::DVector::from_iterator(n, u.iter().map(|x| x / norm));
        for &level in levels.iter().take_while(|&&l| l < best) {
            let s: Vec<f64> = dir.iter().map(|x| x * level.sqrt()).collect();
            let norm2: f64 = s.iter().map(|x| x * x).sum();
            if norm2 >= opts.delta * opts.delta && g.eval(&s) > 0.0 {
                best = level;
                break;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateStats {
    pub boxes: u64,
    pub max_depth: u32,
    /// Certification runs made by the ρ search.
    pub runs: u32,
}

/// `V(s) = sᵀPs` decreases along the polynomial dynamics on
/// `{V ≤ rho} ∩ leaf_box`, outside the ball of radius `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub rho: f64,
    pub delta: f64,
    pub margin: f64,
    #[serde(with = "leaf_box_json")]
    pub leaf_box: LeafBox,
    pub stats: CertificateStats,
    /// Degree of the polynomial dynamics the certificate refers to.
    pub dynamics_degree: u32,
}

mod leaf_box_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::dtree::LeafBox;

    #[derive(Serialize, Deserialize)]
    struct Raw {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    }

    fn finite(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect()
    }

    pub fn serialize<S: Serializer>(b: &LeafBox, s: S) -> Result<S::Ok, S::Error> {
        Raw {
            lower: finite(&b.lower),
            upper: finite(&b.upper),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LeafBox, D::Error> {
        let raw = Raw::deserialize(d)?;
        Ok(LeafBox {
            lower: raw.lower.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect(),
            upper: raw.upper.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect(),
        })
    }
}

impl StabilityCertificate {
    pub fn p_matrix(&self) -> DMatrix<f64> {
        matrix_from_rows(&self.p)
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.p.iter().any(|r| r.len() != n) || self.leaf_box.dim() != n {
            return Err(Error::schema("P", "must be square and match leaf_box"));
        }
        if !is_positive_definite(&self.p_matrix()) {
            return Err(Error::schema("P", "must be positive definite"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::schema("rho", "must be positive"));
        }
        Ok(())
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        quad_form(&self.p_matrix(), s)
    }

    /// Whether `s` lies in `{V ≤ rho} ∩ leaf_box`.
    pub fn contains(&self, s: &[f64]) -> bool {
        self.value(s) <= self.rho && self.leaf_box.contains(s)
    }

    pub fn extents(&self) -> Result<Vec<f64>> {
        ellipsoid_extents(&self.p_matrix(), self.rho)
    }

    /// Whether the region contains the cube `‖s‖∞ ≤ r`.
    pub fn covers_cube(&self, r: f64) -> bool {
        let n = self.dim();
        let p = self.p_matrix();
        (0..1usize << n).all(|mask| {
            let s: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { r } else { -r }).collect();
            quad_form(&p, &s) <= self.rho
                && s.iter()
                    .zip(self.leaf_box.lower.iter().zip(&self.leaf_box.upper))
                    .all(|(x, (lo, hi))| lo < x && x <= hi)
        })
    }

    /// Uniform samples from `{V ≤ rho, ‖s‖ ≥ delta} ∩ leaf_box`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let chol = self
            .p_matrix()
            .cholesky()
            .ok_or_else(|| Error::invalid("P must be positive definite"))?;
        let l_inv_t = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Cholesky factor is singular".into()))?
            .transpose();
        let mut rng = rng_from_seed(seed);
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count {
            tries += 1;
            if tries > 100 * count + 1000 {
                return Err(Error::NotConverged("rejection sampling of the certified region".into()));
            }
            let u: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let radius = self.rho.sqrt() * rng.gen::<f64>().powf(1.0 / n as f64);
            let dir = nalgebra::DVector::from_iterator(n, u.iter().map(|x| x / norm * radius));
            let s: Vec<f64> = (&l_inv_t * dir).iter().copied().collect();
            let norm2: f64 = s.iter().map(|x| x * x).sum();
            if norm2 >= self.delta * self.delta && self.contains(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: StabilityCertificate = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

fn search_rho(
    p: &DMatrix<f64>,
    f: &PolynomialMap,
    opts: &CertifyOptions,
    cap: f64,
    leaf_box: LeafBox,
) -> Result<StabilityCertificate> {
    let upper = sampled_violation_level(p, f, opts, 0)?.min(cap);
    if !(upper >= RHO_FLOOR) {
        return Err(Error::invalid(format!("largest admissible rho {upper} is below {RHO_FLOOR}")));
    }
    let mut runs = 0u32;
    let mut run = |rho: f64| -> Result<CertifyOutcome> {
        runs += 1;
        certify_region(p, f, rho, opts)
    };
    let (rho, stats) = match run(upper)? {
        CertifyOutcome::Certified(s) => (upper, s),
        _ => {
            let floor = run(RHO_FLOOR)?;
            let CertifyOutcome::Certified(mut best_stats) = floor else {
                return Err(Error::NotConverged(format!(
                    "no rho in [{RHO_FLOOR}, {upper}] could be certified"
                )));
            };
            let (mut lo, mut hi) = (RHO_FLOOR, upper);
            for _ in 0..RHO_SEARCH_STEPS {
                let mid = 0.5 * (lo + hi);
                match run(mid)? {
                    CertifyOutcome::Certified(s) => {
                        lo = mid;
                        best_stats = s;
                    }
                    _ => hi = mid,
                }
            }
            (lo, best_stats)
        }
    };
    Ok(StabilityCertificate {
        p: matrix_to_rows(p),
        rho,
        delta: opts.delta,
        margin: opts.margin,
        leaf_box,
        stats: CertificateStats {
            boxes: stats.boxes,
            max_depth: stats.max_depth,
            runs,
        },
        dynamics_degree: f.degree(),
    })
}

/// Largest certified ρ by bisection below the first sampled violation level.
pub fn max_rho(p: &DMatrix<f64>, f: &PolynomialMap, opts: &CertifyOptions) -> Result<StabilityCertificate> {
    opts.validate()?;
    search_rho(p, f, opts, f64::INFINITY, LeafBox::unbounded(p.nrows()))
}

/// Closed loop `s ↦ f_env(s, βᵀs)` for the linear leaf containing the origin.
pub fn leaf_closed_loop(tree: &DecisionTree, f_env: &PolynomialMap) -> Result<(PolynomialMap, LeafBox)> {
    let n = tree.dim;
    if f_env.dim_in != n + 1 || f_env.dim_out() != n {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: f_env.dim_in,
        });
    }
    let origin = vec![0.0; n];
    let leaf = tree.leaf_index(&origin)?;
    let region = tree
        .leaf_regions()
        .into_iter()
        .find(|r| r.leaf == leaf)
        .ok_or_else(|| Error::invalid("origin leaf is unreachable"))?;
    if region.bounds.lower.iter().zip(&region.bounds.upper).any(|(&lo, &hi)| !(lo < 0.0 && 0.0 < hi)) {
        return Err(Error::invalid("origin lies on a split boundary"));
    }
    let LeafLabel::Linear { coef, intercept } = region.label else {
        return Err(Error::Unsupported("stability needs linear leaves".into()));
    };
    if intercept != 0.0 {
        return Err(Error::invalid(format!(
            "leaf at the origin has intercept {intercept}; the origin must be an equilibrium"
        )));
    }
    let mut inner: Vec<Polynomial> = (0..n).map(|i| Polynomial::var(n, i)).collect();
    inner.push(Polynomial::linear(&coef, 0.0));
    let closed = f_env.compose(&PolynomialMap::new(n, inner)?, None)?;
    Ok((closed, region.bounds))
}

/// Region of attraction of the tree's origin leaf, restricted to that leaf's box.
pub fn tree_roa(tree: &DecisionTree, f_env: &PolynomialMap, opts: &CertifyOptions) -> Result<StabilityCertificate> {
    opts.validate()?;
    let (closed, bounds) = leaf_closed_loop(tree, f_env)?;
    let a_cl = matrix_from_rows(&closed.linear_part());
    let p = lyapunov_candidate(&a_cl)?;
    let inv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("P is singular".into()))?;
    let cap = (0..tree.dim)
        .map(|i| {
            let reach = (-bounds.lower[i]).min(bounds.upper[i]);
            reach * reach / inv[(i, i)]
        })
        .fold(f64::INFINITY, f64::min);
    search_rho(&p, &closed, opts, cap, bounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerativeResult {
    pub points: u64,
    /// Grid points in `{V ≤ rho} \ {0}` where `V̇ ≥ 0`.
    pub violations: Vec<Vec<f64>>,
}

/// Grid points of spacing `step` inside the bounding box of `{V ≤ rho}`.
pub fn grid_size(p: &DMatrix<f64>, rho: f64, step: f64) -> Result<u128> {
    Ok(ellipsoid_extents(p, rho)?
        .iter()
        .map(|w| 2 * (w / step).floor() as u128 + 1)
        .product())
}

/// Evaluates `V̇` on a regular grid inside `{V ≤ rho}`. Sound only at the grid points.
pub fn enumerative_check(p: &DMatrix<f64>, f: &PolynomialMap, rho: f64, step: f64) -> Result<EnumerativeResult> {
    if !(step > 0.0 && rho > 0.0) {
        return Err(Error::invalid("step and rho must be positive"));
    }
    let n = p.nrows();
    let v = quadratic_polynomial(p);
    let vdot = vdot_polynomial(p, f)?;
    let counts: Vec<i64> = ellipsoid_extents(p, rho)?
        .iter()
        .map(|w| (w / step).floor() as i64)
        .collect();
    let results: Vec<(u64, Vec<Vec<f64>>)> = (-counts[0]..=counts[0])
        .into_par_iter()
        .map(|k0| {
            let mut idx: Vec<i64> = counts.iter().map(|&c| -c).collect();
            idx[0] = k0;
            let mut points = 0u64;
            let mut bad = Vec::new();
            let mut s = vec![0.0; n];
            loop {
                for (x, &k) in s.iter_mut().zip(&idx) {
                    *x = k as f64 * step;
                }
                if idx.iter().any(|&k| k != 0) && v.eval(&s) <= rho {
                    points += 1;
                    if vdot.eval(&s) >= 0.0 {
                        bad.push(s.clone());
                    }
                }
                // odometer over coordinates 1..n
                let mut i = 1;
                loop {
                    if i >= n {
                        return (points, bad);
                    }
                    if idx[i] < counts[i] {
                        idx[i] += 1;
                        break;
                    }
                    idx[i] = -counts[i];
                    i += 1;
                }
            }
        })
        .collect();
    let mut out = EnumerativeResult {
        points: 0,
        violations: Vec::new(),
    };
    for (k, bad) in results {
        out.points += k;
        out.violations.extend(bad);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(terms: &[(u32, f64)]) -> PolynomialMap {
        let p = Polynomial::from_terms(1, terms.iter().map(|&(e, c)| (vec![e], c))).unwrap();
        PolynomialMap::new(1, vec![p]).unwrap()
    }

    fn cubic() -> PolynomialMap {
        scalar(&[(1, -1.0), (3, 1.0)])
    }

    fn one(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_candidate() {
        let p = lyapunov_candidate(&one(-1.0)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(lyapunov_candidate(&one(0.5)).is_err());
    }

    #[test]
    fn vdot_of_cubic() {
        let vdot = vdot_polynomial(&one(1.0), &cubic()).unwrap();
        assert_eq!(vdot.coefficient(&[2]), -2.0);
        assert_eq!(vdot.coefficient(&[4]), 2.0);
        assert_eq!(vdot.num_terms(), 2);
    }

    #[test]
    fn linear_decay_certified() {
        let opts = CertifyOptions {
            margin: 0.1,
            ..Default::default()
        };
        let out = certify_region(&one(0.5), &scalar(&[(1, -1.0)]), 1.0, &opts).unwrap();
        assert!(out.is_certified());
    }

    #[test]
    fn cubic_regions() {
        let opts = CertifyOptions::default();
        assert!(certify_region(&one(1.0), &cubic(), 0.81, &opts).unwrap().is_certified());
        let out = certify_region(&one(1.0), &cubic(), 1.21, &opts).unwrap();
        let x = out.violation().expect("violation")[0].abs();
        assert!(x > 0.99 && x <= 1.1 + 1e-9, "violation at {x}");
    }

    #[test]
    fn cubic_max_rho() {
        let cert = max_rho(&one(1.0), &cubic(), &CertifyOptions::default()).unwrap();
        assert!((0.9..=1.0).contains(&cert.rho), "rho {}", cert.rho);
        let back = StabilityCertificate::from_json(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn enumerative_cubic() {
        let none = enumerative_check(&one(1.0), &scalar(&[(1, -1.0)]), 1.21, 0.01).unwrap();
        assert!(none.violations.is_empty());
        let res = enumerative_check(&one(1.0), &cubic(), 1.21, 0.01).unwrap();
        assert!(!res.violations.is_empty());
        for v in &res.violations {
            assert!(v[0].abs() >= 1.0 - 1e-9 && v[0].abs() <= 1.1 + 1e-9);
        }
    }

    #[test]
    fn tree_roa_respects_leaf_box() {
        // x' = -x + u, y' = -y, with u = -x, split at x <= 0.02
        let n = 3;
        let x = Polynomial::var(n, 0);
        let y = Polynomial::var(n, 1);
        let u = Polynomial::var(n, 2);
        let f = PolynomialMap::new(n, vec![&(&-&x + &u) + &(&(&x * &x) * &x), -&y]).unwrap();
        let tree = DecisionTree {
            version: 1,
            dim: 2,
            leaf_kind: crate::dtree::LeafKind::Linear,
            nodes: vec![
                crate::dtree::Node::Split {
                    feature: 0,
                    threshold: 0.02,
                    left: 1,
                    right: 2,
                },
                crate::dtree::Node::Linear {
                    coef: vec![-1.0, 0.0],
                    intercept: 0.0,
                },
                crate::dtree::Node::Linear {
                    coef: vec![0.0, 0.0],
                    intercept: 0.0,
                },
            ],
        };
        tree.validate().unwrap();
        let cert = tree_roa(&tree, &f, &CertifyOptions::default()).unwrap();
        assert!(cert.extents().unwrap()[0] <= 0.02 + 1e-12);
        assert!(cert.rho > 0.0);

        let mut shifted = tree.clone();
        if let crate::dtree::Node::Split { threshold, .. } = &mut shifted.nodes[0] {
            *threshold = 0.0;
        }
        assert!(tree_roa(&shifted, &f, &CertifyOptions::default()).is_err());
    }
}
