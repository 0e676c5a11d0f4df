//! Bounded-horizon safety of piecewise-affine closed loops.
//!
//! Reachability is explored over piece paths. A path is represented by the
//! set of initial states that follow it together with the composed affine
//! map from the initial state to the current one, so no projection is ever
//! needed and every test is an exact rational feasibility problem.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dtree::{DecisionTree, LeafBox, LeafKind, LeafLabel};
use crate::env::{CartPoleParams, ToyPongParams};
use crate::error::{Error, Result};
use crate::geometry::{
    q_vec_to_f64, AffineMap, ControlledPwa, LinearConstraint, Piece, PiecewiseAffineSystem, Polytope,
};
use crate::lp::{q_from_decimal, q_from_f64, Q};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecMode {
    /// Every trajectory must enter `invariant_target` within `t_max` steps
    /// without passing through `unsafe_sets` first.
    Invariant,
    /// No trajectory may enter `unsafe_sets` within `t_max` steps.
    Unsafe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetySpec {
    pub initial: Polytope,
    pub invariant_target: Vec<Polytope>,
    pub unsafe_sets: Vec<Polytope>,
    pub t_max: usize,
    pub mode: SpecMode,
}

impl SafetySpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        for p in std::iter::once(&self.initial)
            .chain(&self.invariant_target)
            .chain(&self.unsafe_sets)
        {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        if self.mode == SpecMode::Invariant && self.invariant_target.is_empty() {
            return Err(Error::invalid("invariant specs need a target region"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// The trajectory entered the unsafe set with this index.
    Unsafe { set: usize },
    /// The trajectory did not enter the target within `t_max` steps.
    TargetNotReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    /// States `s_0 .. s_t`, computed exactly and rounded.
    pub trace: Vec<Vec<f64>>,
    pub exact_trace: Vec<Vec<Q>>,
    pub path: Vec<usize>,
    pub path_labels: Vec<String>,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Safe { nodes: usize },
    Counterexample { cex: Box<Counterexample>, nodes: usize },
    BudgetExceeded { nodes: usize },
}

impl Verdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, Verdict::Safe { .. })
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Verdict::Counterexample { cex, .. } => Some(cex),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Safe { .. } => "safe",
            Verdict::Counterexample { .. } => "counterexample",
            Verdict::BudgetExceeded { .. } => "budget_exceeded",
        }
    }

    pub fn nodes(&self) -> usize {
        match self {
            Verdict::Safe { nodes } | Verdict::Counterexample { nodes, .. } | Verdict::BudgetExceeded { nodes } => {
                *nodes
            }
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({ "verdict": self.name(), "nodes": self.nodes() });
        if let Some(cex) = self.counterexample() {
            v["counterexample"] = json!({
                "violation": cex.violation,
                "steps": cex.trace.len() - 1,
                "trace": cex.trace,
                "exact_trace": cex.exact_trace.iter()
                    .map(|s| s.iter().map(|x| x.to_string()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "path": cex.path,
                "path_labels": cex.path_labels,
            });
        }
        v
    }
}

/// Region routed to a leaf: `lower < s <= upper`.
pub fn leaf_polytope(bounds: &LeafBox) -> Result<Polytope> {
    let dim = bounds.dim();
    let mut p = Polytope::universe(dim);
    for i in 0..dim {
        if bounds.lower[i].is_finite() {
            p.push(LinearConstraint::lower(dim, i, q_from_f64(bounds.lower[i]), true))?;
        }
        if bounds.upper[i].is_finite() {
            p.push(LinearConstraint::upper(dim, i, q_from_f64(bounds.upper[i]), false))?;
        }
    }
    Ok(p)
}

/// Product of the per-action environment pieces with the tree's leaves.
pub fn compose_closed_loop(env: &ControlledPwa, tree: &DecisionTree) -> Result<PiecewiseAffineSystem> {
    if tree.leaf_kind != LeafKind::Discrete {
        return Err(Error::Unsupported("closed loops need a tree with action leaves".into()));
    }
    if tree.dim != env.dim {
        return Err(Error::DimensionMismatch {
            expected: env.dim,
            got: tree.dim,
        });
    }
    let mut pieces = Vec::new();
    for region in tree.leaf_regions() {
        let LeafLabel::Action(action) = region.label else {
            unreachable!("discrete tree")
        };
        let system = env.per_action.get(action).ok_or_else(|| {
            Error::invalid(format!("leaf {} uses action {action} unknown to the environment", region.leaf))
        })?;
        let leaf = leaf_polytope(&region.bounds)?;
        for piece in &system.pieces {
            let guard = leaf.intersect(&piece.guard)?;
            if guard.is_empty() {
                continue;
            }
            pieces.push(Piece {
                guard,
                map: piece.map.clone(),
                label: format!("leaf{}/{}", region.leaf, piece.label),
            });
        }
    }
    PiecewiseAffineSystem::new(env.dim, pieces)
}

/// `region` minus the union of `holes`, as disjoint polytopes.
fn subtract(region: Polytope, holes: &[Polytope]) -> Result<Vec<Polytope>> {
    let mut parts = vec![region];
    for hole in holes {
        let mut next = Vec::new();
        for part in parts {
            let mut prefix = part;
            for c in hole.constraints() {
                let mut piece = prefix.clone();
                piece.push(c.negated())?;
                if !piece.is_empty() {
                    next.push(piece);
                }
                prefix.push(c.clone())?;
            }
        }
        parts = next;
    }
    Ok(parts)
}

struct Search<'a> {
    system: &'a PiecewiseAffineSystem,
    spec: &'a SafetySpec,
    budget: usize,
    nodes: usize,
    path: Vec<usize>,
}

enum Outcome {
    Clear,
    Found(Box<Counterexample>),
    OutOfBudget,
}

impl Search<'_> {
    fn counterexample(&self, region: &Polytope, violation: Violation) -> Result<Box<Counterexample>> {
        let s0 = region
            .relative_interior_point()
            .ok_or_else(|| Error::Numerical("nonempty region without a witness point".into()))?;
        let mut exact_trace = vec![s0];
        for &k in &self.path {
            let next = self.system.pieces[k].map.apply_exact(exact_trace.last().unwrap());
            exact_trace.push(next);
        }
        Ok(Box::new(Counterexample {
            trace: exact_trace.iter().map(|s| q_vec_to_f64(s)).collect(),
            exact_trace,
            path: self.path.clone(),
            path_labels: self.path.iter().map(|&k| self.system.pieces[k].label.clone()).collect(),
            violation,
        }))
    }

    fn visit(&mut self, region: Polytope, phi: &AffineMap, t: usize) -> Result<Outcome> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Ok(Outcome::OutOfBudget);
        }
        for (j, bad) in self.spec.unsafe_sets.iter().enumerate() {
            let hit = region.intersect(&bad.preimage(phi)?)?;
            if !hit.is_empty() {
                return Ok(Outcome::Found(self.counterexample(&hit, Violation::Unsafe { set: j })?));
            }
        }
        let open = match self.spec.mode {
            SpecMode::Unsafe => vec![region],
            SpecMode::Invariant => {
                let targets = self
                    .spec
                    .invariant_target
                    .iter()
                    .map(|p| p.preimage(phi))
                    .collect::<Result<Vec<_>>>()?;
                subtract(region, &targets)?
            }
        };
        if t == self.spec.t_max {
            if self.spec.mode == SpecMode::Invariant {
                if let Some(rest) = open.first() {
                    return Ok(Outcome::Found(self.counterexample(rest, Violation::TargetNotReached)?));
                }
            }
            return Ok(Outcome::Clear);
        }
        let prefilter = self.system.pieces.len() > 4 * self.system.dim;
        for part in open {
            let bounds = if prefilter {
                match part.image_bounds(phi) {
                    Some(b) => Some(b),
                    None => continue,
                }
            } else {
                None
            };
            for (k, piece) in self.system.pieces.iter().enumerate() {
                if let Some(b) = &bounds {
                    if !piece.guard.may_meet_box(b) {
                        continue;
                    }
                }
                let child = part.intersect(&piece.guard.preimage(phi)?)?;
                if child.is_empty() {
                    continue;
                }
                let next_phi = piece.map.compose(phi);
                self.path.push(k);
                let outcome = self.visit(child, &next_phi, t + 1)?;
                self.path.pop();
                if !matches!(outcome, Outcome::Clear) {
                    return Ok(outcome);
                }
            }
        }
        Ok(Outcome::Clear)
    }
}

/// Depth-first exploration of piece paths in index order, so the reported
/// counterexample has the lexicographically least path.
///
/// States covered by no guard have no successor and are not explored.
pub fn reach_check_with_budget(system: &PiecewiseAffineSystem, spec: &SafetySpec, budget: usize) -> Result<Verdict> {
    spec.validate(system.dim)?;
    let mut search = Search {
        system,
        spec,
        budget,
        nodes: 0,
        path: Vec::new(),
    };
    let outcome = search.visit(spec.initial.clone(), &AffineMap::identity(system.dim), 0)?;
    let nodes = search.nodes.min(budget);
    Ok(match outcome {
        Outcome::Clear => Verdict::Safe { nodes },
        Outcome::Found(cex) => Verdict::Counterexample { cex, nodes },
        Outcome::OutOfBudget => Verdict::BudgetExceeded { nodes },
    })
}

pub fn reach_check(system: &PiecewiseAffineSystem, spec: &SafetySpec) -> Result<Verdict> {
    reach_check_with_budget(system, spec, DEFAULT_NODE_BUDGET)
}

/// Steps `step` from `s0` for up to `spec.t_max` steps and reports whether
/// the trajectory violates `spec`.
pub fn replay_counterexample<F>(s0: &[f64], mut step: F, spec: &SafetySpec) -> Result<bool>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut s = s0.to_vec();
    if !spec.initial.contains_f64(&s) {
        return Ok(false);
    }
    for t in 0..=spec.t_max {
        if spec.unsafe_sets.iter().any(|p| p.contains_f64(&s)) {
            return Ok(true);
        }
        if spec.mode == SpecMode::Invariant && spec.invariant_target.iter().any(|p| p.contains_f64(&s)) {
            return Ok(false);
        }
        if t < spec.t_max {
            s = step(&s)?;
        }
    }
    Ok(spec.mode == SpecMode::Invariant)
}

/// Toy Pong: from every initial state the ball must be returned within
/// `t_max` steps without dropping below the paddle line.
pub fn toypong_spec(params: &ToyPongParams, t_max: usize) -> Result<SafetySpec> {
    Ok(SafetySpec {
        initial: params.initial_region()?,
        invariant_target: vec![params.returned_region()?],
        unsafe_sets: vec![params.unsafe_region()?],
        t_max,
        mode: SpecMode::Invariant,
    })
}

pub fn toypong_controlled(params: &ToyPongParams) -> Result<ControlledPwa> {
    Ok(ControlledPwa {
        dim: 5,
        per_action: (0..3).map(|a| params.pwa_for_action(a)).collect::<Result<_>>()?,
    })
}

pub fn toypong_closed_loop(params: &ToyPongParams, tree: &DecisionTree) -> Result<PiecewiseAffineSystem> {
    compose_closed_loop(&toypong_controlled(params)?, tree)
}

/// Replays a toy Pong trace start on the simulator under `tree`.
pub fn replay_toypong(params: &ToyPongParams, tree: &DecisionTree, s0: &[f64], spec: &SafetySpec) -> Result<bool> {
    replay_counterexample(
        s0,
        |s| {
            let a = tree.predict_discrete(s)?;
            Ok(params.step_state(s, a)?.0.to_vec())
        },
        spec,
    )
}

/// The cart-pole linearized around the upright position and discretized
/// with the simulator's step, one affine map per push direction. The maps
/// are computed exactly from the decimal parameter values.
pub fn cartpole_controlled(params: &CartPoleParams) -> Result<ControlledPwa> {
    params.validate()?;
    let d = q_from_decimal;
    let (g, mc, mp, l, dt) = (
        d(params.gravity),
        d(params.cart_mass),
        d(params.pole_mass),
        d(params.pole_half_length),
        d(params.dt),
    );
    let total = &mc + &mp;
    let denom = &l * (Q::new(4.into(), 3.into()) - &mp / &total);
    let dtheta_dtheta = &g / &denom;
    let dtheta_dforce = -Q::one() / (&total * &denom);
    let k = &mp * &l / &total;
    let zero = Q::zero;
    let one = Q::one;
    let matrix = vec![
        vec![one(), dt.clone(), zero(), zero()],
        vec![zero(), one(), -&dt * &k * &dtheta_dtheta, zero()],
        vec![zero(), zero(), one(), dt.clone()],
        vec![zero(), zero(), &dt * &dtheta_dtheta, one()],
    ];
    let b = [
        zero(),
        &dt * (Q::one() / &total - &k * &dtheta_dforce),
        zero(),
        &dt * &dtheta_dforce,
    ];
    let force = d(params.force_mag);
    let per_action = [-force.clone(), force]
        .into_iter()
        .map(|f| {
            let label = if f.is_negative() { "push-left" } else { "push-right" };
            PiecewiseAffineSystem::new(
                4,
                vec![Piece {
                    guard: Polytope::universe(4),
                    map: AffineMap {
                        matrix: matrix.clone(),
                        offset: b.iter().map(|bi| bi * &f).collect(),
                    },
                    label: label.into(),
                }],
            )
        })
        .collect::<Result<_>>()?;
    Ok(ControlledPwa { dim: 4, per_action })
}

/// Initial box `[-0.05, 0.05]^4`, unsafe `|theta| > y0`.
pub fn cartpole_spec(y0: f64, t_max: usize) -> Result<SafetySpec> {
    if !(y0.is_finite() && y0 >= 0.0) {
        return Err(Error::invalid(format!("angle bound must be nonnegative, got {y0}")));
    }
    let dim = 4;
    let above = Polytope::from_constraints(dim, vec![LinearConstraint::lower(dim, 2, q_from_decimal(y0), true)])?;
    let below = Polytope::from_constraints(dim, vec![LinearConstraint::upper(dim, 2, q_from_decimal(-y0), true)])?;
    Ok(SafetySpec {
        initial: {
            let mut p = Polytope::universe(dim);
            for i in 0..dim {
                p.push(LinearConstraint::lower(dim, i, q_from_decimal(-0.05), false))?;
                p.push(LinearConstraint::upper(dim, i, q_from_decimal(0.05), false))?;
            }
            p
        },
        invariant_target: Vec::new(),
        unsafe_sets: vec![above, below],
        t_max,
        mode: SpecMode::Unsafe,
    })
}

pub fn cartpole_bounded_check(params: &CartPoleParams, tree: &DecisionTree, y0: f64, t_max: usize) -> Result<Verdict> {
    let system = compose_closed_loop(&cartpole_controlled(params)?, tree)?;
    reach_check(&system, &cartpole_spec(y0, t_max)?)
}

fn smt_q(x: &Q) -> String {
    let mag = x.abs();
    let body = if mag.is_integer() {
        format!("{}.0", mag.numer())
    } else {
        format!("(/ {}.0 {}.0)", mag.numer(), mag.denom())
    };
    if x.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

fn smt_var(t: usize, i: usize) -> String {
    format!("s_{t}_{i}")
}

fn smt_affine(coefs: &[Q], constant: &Q, t: usize) -> String {
    let mut terms: Vec<String> = coefs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| format!("(* {} {})", smt_q(c), smt_var(t, i)))
        .collect();
    if !constant.is_zero() || terms.is_empty() {
        terms.push(smt_q(constant));
    }
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        format!("(+ {})", terms.join(" "))
    }
}

fn smt_constraint(c: &LinearConstraint, t: usize) -> String {
    let op = if c.strict { "<" } else { "<=" };
    format!("({op} {} {})", smt_affine(&c.normal, &Q::zero(), t), smt_q(&c.bound))
}

fn smt_polytope(p: &Polytope, t: usize) -> String {
    if p.constraints().is_empty() {
        return "true".into();
    }
    let parts: Vec<String> = p.constraints().iter().map(|c| smt_constraint(c, t)).collect();
    format!("(and {})", parts.join(" "))
}

fn smt_any(ps: &[Polytope], t: usize) -> String {
    if ps.is_empty() {
        return "false".into();
    }
    format!("(or {})", ps.iter().map(|p| smt_polytope(p, t)).collect::<Vec<_>>().join(" "))
}

/// SMT-LIB2 (QF_LRA) query that is satisfiable exactly when a trajectory
/// of `system` violates `spec`.
pub fn encode_smtlib(system: &PiecewiseAffineSystem, spec: &SafetySpec) -> Result<String> {
    spec.validate(system.dim)?;
    let dim = system.dim;
    let mut out = String::new();
    out.push_str("(set-logic QF_LRA)\n");
    for t in 0..=spec.t_max {
        for i in 0..dim {
            writeln!(out, "(declare-const {} Real)", smt_var(t, i)).unwrap();
        }
    }
    writeln!(out, "(assert {})", smt_polytope(&spec.initial, 0)).unwrap();
    for t in 1..=spec.t_max {
        let cases: Vec<String> = system
            .pieces
            .iter()
            .map(|p| {
                let updates: Vec<String> = (0..dim)
                    .map(|i| format!("(= {} {})", smt_var(t, i), smt_affine(&p.map.matrix[i], &p.map.offset[i], t - 1)))
                    .collect();
                format!("(and {} {})", smt_polytope(&p.guard, t - 1), updates.join(" "))
            })
            .collect();
        writeln!(out, "(assert (or {}))", cases.join(" ")).unwrap();
    }
    let violation = match spec.mode {
        SpecMode::Unsafe => {
            let any: Vec<String> = (0..=spec.t_max).map(|t| smt_any(&spec.unsafe_sets, t)).collect();
            format!("(or {})", any.join(" "))
        }
        SpecMode::Invariant => {
            let not_target = |t: usize| format!("(not {})", smt_any(&spec.invariant_target, t));
            let mut cases = Vec::new();
            for t in 0..=spec.t_max {
                let mut parts: Vec<String> = (0..t).map(not_target).collect();
                parts.push(smt_any(&spec.unsafe_sets, t));
                cases.push(format!("(and {})", parts.join(" ")));
            }
            let never: Vec<String> = (0..=spec.t_max).map(not_target).collect();
            cases.push(format!("(and {})", never.join(" ")));
            format!("(or {})", cases.join(" "))
        }
    };
    writeln!(out, "(assert {violation})").unwrap();
    out.push_str("(check-sat)\n(get-model)\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverAnswer {
    Sat { initial_state: Option<Vec<Q>> },
    Unsat,
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut atom = String::new();
    let flush = |atom: &mut String, stack: &mut Vec<Vec<Sexp>>| {
        if !atom.is_empty() {
            stack.last_mut().unwrap().push(Sexp::Atom(std::mem::take(atom)));
        }
    };
    for ch in text.chars() {
        match ch {
            '(' => {
                flush(&mut atom, &mut stack);
                stack.push(Vec::new());
            }
            ')' => {
                flush(&mut atom, &mut stack);
                let done = stack.pop().unwrap();
                stack
                    .last_mut()
                    .ok_or_else(|| Error::invalid("unbalanced parenthesis in solver output"))?
                    .push(Sexp::List(done));
            }
            c if c.is_whitespace() => flush(&mut atom, &mut stack),
            c => atom.push(c),
        }
    }
    flush(&mut atom, &mut stack);
    if stack.len() != 1 {
        return Err(Error::invalid("unbalanced parenthesis in solver output"));
    }
    Ok(stack.pop().unwrap())
}

fn parse_decimal(s: &str) -> Result<Q> {
    let bad = || Error::invalid(format!("unparseable number `{s}` in solver model"));
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits = format!("{int}{frac}");
    let n: num_bigint::BigInt = digits.parse().map_err(|_| bad())?;
    let scale = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
    Ok(Q::new(n, scale))
}

fn eval_number(e: &Sexp) -> Result<Q> {
    match e {
        Sexp::Atom(a) => parse_decimal(a),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => Ok(-eval_number(x)?),
            [Sexp::Atom(op), x, y] if op == "/" => {
                let d = eval_number(y)?;
                if d.is_zero() {
                    return Err(Error::invalid("division by zero in solver model"));
                }
                Ok(eval_number(x)? / d)
            }
            _ => Err(Error::invalid("unsupported term in solver model")),
        },
    }
}

/// Reads `sat`/`unsat` and, for `sat`, the values of `s_0_*` from the model.
pub fn parse_solver_output(text: &str, dim: usize) -> Result<SolverAnswer> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().unwrap_or("");
    match first {
        "unsat" => return Ok(SolverAnswer::Unsat),
        "sat" => {}
        other => return Ok(SolverAnswer::Unknown(other.to_string())),
    }
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let mut values: Vec<Option<Q>> = vec![None; dim];
    fn walk(e: &Sexp, values: &mut Vec<Option<Q>>) -> Result<()> {
        if let Sexp::List(items) = e {
            if let [Sexp::Atom(kw), Sexp::Atom(name), _, _, body] = items.as_slice() {
                if kw == "define-fun" {
                    if let Some(i) = name.strip_prefix("s_0_").and_then(|i| i.parse::<usize>().ok()) {
                        if i < values.len() {
                            values[i] = Some(eval_number(body)?);
                        }
                    }
                    return Ok(());
                }
            }
            for item in items {
                walk(item, values)?;
            }
        }
        Ok(())
    }
    for e in parse_sexps(&rest)? {
        walk(&e, &mut values)?;
    }
    let initial_state = values.into_iter().collect::<Option<Vec<_>>>();
    Ok(SolverAnswer::Sat { initial_state })
}

/// Runs `template` (with `{file}` replaced by `path`) and parses its answer.
pub fn run_external_solver(template: &str, path: &Path, dim: usize) -> Result<SolverAnswer> {
    let file = path.to_string_lossy();
    let words: Vec<String> = template
        .split_whitespace()
        .map(|w| w.replace("{file}", &file))
        .collect();
    let (prog, args) = words
        .split_first()
        .ok_or_else(|| Error::invalid("empty solver command"))?;
    let output = Command::new(prog)
        .args(args)
        .output()
        .map_err(|e| Error::io(Path::new(prog), e))?;
    parse_solver_output(&String::from_utf8_lossy(&output.stdout), dim)
}

/// A contraction `s' = s / 2` on `[-1, 1]^dim`, used as a known-safe case.
pub fn contraction_system(dim: usize) -> Result<PiecewiseAffineSystem> {
    let mut map = AffineMap::identity(dim);
    for (i, row) in map.matrix.iter_mut().enumerate() {
        row[i] = Q::new(1.into(), 2.into());
    }
    PiecewiseAffineSystem::new(
        dim,
        vec![Piece {
            guard: Polytope::universe(dim),
            map,
            label: "halve".into(),
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::q;

    fn far_spec(dim: usize, t_max: usize) -> SafetySpec {
        SafetySpec {
            initial: Polytope::from_box(&vec![-1.0; dim], &vec![1.0; dim]).unwrap(),
            invariant_target: Vec::new(),
            unsafe_sets: vec![Polytope::from_constraints(
                dim,
                vec![LinearConstraint::lower(dim, 0, q(5), false)],
            )
            .unwrap()],
            t_max,
            mode: SpecMode::Unsafe,
        }
    }

    #[test]
    fn contraction_is_safe() {
        let system = contraction_system(2).unwrap();
        let v = reach_check(&system, &far_spec(2, 10)).unwrap();
        assert!(v.is_safe(), "{v:?}");
    }

    #[test]
    fn identity_inside_unsafe_fails_at_once() {
        let system = PiecewiseAffineSystem::new(
            1,
            vec![Piece {
                guard: Polytope::universe(1),
                map: AffineMap::identity(1),
                label: "id".into(),
            }],
        )
        .unwrap();
        let mut spec = far_spec(1, 3);
        spec.unsafe_sets = vec![Polytope::from_box(&[-2.0], &[2.0]).unwrap()];
        let v = reach_check(&system, &spec).unwrap();
        let cex = v.counterexample().expect("counterexample");
        assert_eq!(cex.trace.len(), 1);
        assert!(cex.path.is_empty());
    }

    #[test]
    fn smtlib_declares_one_constant_per_step_and_dimension() {
        let system = contraction_system(1).unwrap();
        let text = encode_smtlib(&system, &far_spec(1, 7)).unwrap();
        assert_eq!(text.matches("(declare-const").count(), 8);
        assert!(text.starts_with("(set-logic QF_LRA)"));
        assert!(text.contains("(check-sat)"));
    }

    #[test]
    fn solver_models_parse() {
        let out = "sat\n(\n  (define-fun s_0_1 () Real\n    (- (/ 3.0 4.0)))\n  (define-fun s_0_0 () Real 2.5)\n  (define-fun s_1_0 () Real 0.0)\n)\n";
        match parse_solver_output(out, 2).unwrap() {
            SolverAnswer::Sat { initial_state: Some(s) } => {
                assert_eq!(s, vec![Q::new(5.into(), 2.into()), Q::new((-3).into(), 4.into())]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_solver_output("unsat\n", 2).unwrap(), SolverAnswer::Unsat);
    }

    #[test]
    fn subtraction_is_a_partition() {
        let square = Polytope::from_box(&[0.0, 0.0], &[4.0, 4.0]).unwrap();
        let hole = Polytope::from_box(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        let parts = subtract(square, std::slice::from_ref(&hole)).unwrap();
        for x in 0..=8 {
            for y in 0..=8 {
                let p = [q(x) / q(2), q(y) / q(2)];
                let inside = parts.iter().filter(|r| r.contains_exact(&p)).count();
                let expected = usize::from(!hole.contains_exact(&p));
                assert_eq!(inside, expected, "({x}, {y})/2");
            }
        }
    }
}
