//! Sum-of-squares programs for external SDP tools, as plain text.
//!
//! Format, one item per line:
//!
//! ```text
//! sos-program 1
//! mode candidate|roa
//! vars x0 x1
//! unknowns p_0_0 p_0_1 p_1_1
//! objective none|maximize <unknown>
//! constraint <name> nonnegative|nonpositive
//!   form <free text>
//!   basis <monomial> ; <monomial> ...
//!   term <monomial> : <coef> <symbol> ; <coef> <symbol> ...
//! end
//! ```
//!
//! A monomial is a comma-separated exponent vector. The symbol `1` is the
//! constant. Each constraint polynomial has coefficients affine in the unknowns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::{Monomial, Polynomial, PolynomialMap};
use crate::verify::stability::{quadratic_polynomial, squared_norm_polynomial, vdot_polynomial};

pub const CONSTANT: &str = "1";

/// Affine combination of unknowns, keyed by symbol.
pub type AffineExpr = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolicPolynomial {
    pub terms: BTreeMap<Monomial, AffineExpr>,
}

impl SymbolicPolynomial {
    pub fn add(&mut self, m: Monomial, symbol: &str, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(m.clone()).or_default();
        let v = e.entry(symbol.to_string()).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            e.remove(symbol);
            if e.is_empty() {
                self.terms.remove(&m);
            }
        }
    }

    /// Adds `symbol * p`.
    pub fn add_scaled(&mut self, p: &Polynomial, symbol: &str) {
        for (m, c) in p.terms() {
            self.add(m.clone(), symbol, c);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.iter().sum()).max().unwrap_or(0)
    }

    /// Coefficient polynomial of one symbol.
    pub fn part(&self, symbol: &str, nvars: usize) -> Polynomial {
        let mut p = Polynomial::zero(nvars);
        for (m, e) in &self.terms {
            if let Some(&c) = e.get(symbol) {
                p.add_term(m.clone(), c);
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SosMode {
    Candidate,
    Roa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Nonnegative,
    Nonpositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosConstraint {
    pub name: String,
    pub sense: Sense,
    pub form: String,
    /// Monomials of the Gram-matrix basis.
    pub basis: Vec<Monomial>,
    pub poly: SymbolicPolynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosProgram {
    pub mode: SosMode,
    pub vars: Vec<String>,
    pub unknowns: Vec<String>,
    /// Unknown to maximize.
    pub objective: Option<String>,
    pub constraints: Vec<SosConstraint>,
}

fn monomials_of_degree(n: usize, d: u32) -> Vec<Monomial> {
    if n == 0 {
        return if d == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=d).rev() {
        for mut rest in monomials_of_degree(n - 1, d - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Monomials of degree `lo/2 ..= hi/2` where `lo`, `hi` are the extreme term degrees.
fn gram_basis(p: &SymbolicPolynomial, n: usize) -> Vec<Monomial> {
    let degs: Vec<u32> = p.terms.keys().map(|m| m.iter().sum()).collect();
    let lo = degs.iter().copied().min().unwrap_or(0);
    let hi = degs.iter().copied().max().unwrap_or(0);
    ((lo + 1) / 2..=hi / 2).flat_map(|d| monomials_of_degree(n, d)).collect()
}

fn sym_name(prefix: &str, i: usize, j: usize) -> String {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    format!("{prefix}_{i}_{j}")
}

fn sym_unknowns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).flat_map(|i| (i..n).map(move |j| sym_name(prefix, i, j))).collect()
}

fn mono2(n: usize, i: usize, j: usize) -> Monomial {
    let mut m = vec![0; n];
    m[i] += 1;
    m[j] += 1;
    m
}

impl SosProgram {
    /// Quadratic Lyapunov function for `ṡ = As`:
    /// `sᵀPs - ‖s‖² ≥ 0` and `sᵀPAs + ‖s‖² ≤ 0` with `P` unknown.
    pub fn candidate(a: &DMatrix<f64>) -> Result<SosProgram> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid("system matrix must be square"));
        }
        let norm = squared_norm_polynomial(n);
        let mut pos = SymbolicPolynomial::default();
        let mut dec = SymbolicPolynomial::default();
        for i in 0..n {
            for j in 0..n {
                pos.add(mono2(n, i, j), &sym_name("p", i, j), 1.0);
                for k in 0..n {
                    dec.add(mono2(n, i, k), &sym_name("p", i, j), a[(j, k)]);
                }
            }
        }
        pos.add_scaled(&norm.scale(-1.0), CONSTANT);
        dec.add_scaled(&norm, CONSTANT);
        let constraints = vec![
            SosConstraint {
                name: "positivity".into(),
                sense: Sense::Nonnegative,
                form: "s^T P s - |s|^2".into(),
                basis: gram_basis(&pos, n),
                poly: pos,
            },
            SosConstraint {
                name: "decrease".into(),
                sense: Sense::Nonpositive,
                form: "s^T P A s + |s|^2".into(),
                basis: gram_basis(&dec, n),
                poly: dec,
            },
        ];
        Ok(SosProgram {
            mode: SosMode::Candidate,
            vars: (0..n).map(|i| format!("x{i}")).collect(),
            unknowns: sym_unknowns("p", n),
            objective: None,
            constraints,
        })
    }

    /// Largest sublevel set of a fixed `V = sᵀPs` on which `V̇` is negative:
    /// `λ(s) V̇(s) + (ρ - V(s)) ‖s‖² ≤ 0` with `λ(s) = sᵀΛs`, maximizing `ρ`.
    pub fn roa(p: &DMatrix<f64>, f: &PolynomialMap) -> Result<SosProgram> {
        let n = p.nrows();
        let vdot = vdot_polynomial(p, f)?;
        let norm = squared_norm_polynomial(n);
        let mut poly = SymbolicPolynomial::default();
        for i in 0..n {
            for j in 0..n {
                let sij = Polynomial::from_terms(n, [(mono2(n, i, j), 1.0)])?;
                poly.add_scaled(&(&sij * &vdot), &sym_name("l", i, j));
            }
        }
        poly.add_scaled(&norm, "rho");
        poly.add_scaled(&(&quadratic_polynomial(p) * &norm).scale(-1.0), CONSTANT);
        let mut unknowns = vec!["rho".to_string()];
        unknowns.extend(sym_unknowns("l", n));
        Ok(SosProgram {
            mode: SosMode::Roa,
            vars: (0..n).map(|i| format!("x{i}")).collect(),
            unknowns,
            objective: Some("rho".into()),
            constraints: vec![SosConstraint {
                name: "sublevel_decrease".into(),
                sense: Sense::Nonpositive,
                form: format!("lambda(s) * ({vdot}) + (rho - V(s)) * |s|^2"),
                basis: gram_basis(&poly, n),
                poly,
            }],
        })
    }

    pub fn to_text(&self) -> String {
        let mono = |m: &Monomial| m.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::from("sos-program 1\n");
        let mode = match self.mode {
            SosMode::Candidate => "candidate",
            SosMode::Roa => "roa",
        };
        let _ = writeln!(out, "mode {mode}");
        let _ = writeln!(out, "vars {}", self.vars.join(" "));
        let _ = writeln!(out, "unknowns {}", self.unknowns.join(" "));
        match &self.objective {
            Some(u) => {
                let _ = writeln!(out, "objective maximize {u}");
            }
            None => out.push_str("objective none\n"),
        }
        for c in &self.constraints {
            let sense = match c.sense {
                Sense::Nonnegative => "nonnegative",
                Sense::Nonpositive => "nonpositive",
            };
            let _ = writeln!(out, "constraint {} {sense}", c.name);
            let _ = writeln!(out, "  form {}", c.form);
            let basis: Vec<String> = c.basis.iter().map(mono).collect();
            let _ = writeln!(out, "  basis {}", basis.join(" ; "));
            for (m, e) in &c.poly.terms {
                let parts: Vec<String> = e.iter().map(|(s, v)| format!("{v:?} {s}")).collect();
                let _ = writeln!(out, "  term {} : {}", mono(m), parts.join(" ; "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<SosProgram> {
        let bad = |line: usize, msg: &str| Error::schema(format!("line {}", line + 1), msg.to_string());
        let parse_mono = |s: &str, line: usize| -> Result<Monomial> {
            s.trim()
                .split(',')
                .map(|e| e.trim().parse::<u32>().map_err(|_| bad(line, "bad exponent")))
                .collect()
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "sos-program 1" => {}
            _ => return Err(bad(0, "missing `sos-program 1` header")),
        }
        let mut mode = None;
        let mut vars = None;
        let mut unknowns = None;
        let mut objective = None;
        let mut constraints: Vec<SosConstraint> = Vec::new();
        let mut ended = false;
        for (i, raw) in lines {
            let line = raw.trim();
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let rest = rest.trim();
            match key {
                "mode" => {
                    mode = Some(match rest {
                        "candidate" => SosMode::Candidate,
                        "roa" => SosMode::Roa,
                        _ => return Err(bad(i, "unknown mode")),
                    })
                }
                "vars" => vars = Some(rest.split_whitespace().map(String::from).collect::<Vec<_>>()),
                "unknowns" => unknowns = Some(rest.split_whitespace().map(String::from).collect::<Vec<_>>()),
                "objective" => {
                    objective = Some(match rest.split_once(' ') {
                        None if rest == "none" => None,
                        Some(("maximize", u)) => Some(u.trim().to_string()),
                        _ => return Err(bad(i, "bad objective")),
                    })
                }
                "constraint" => {
                    let (name, sense) = rest.split_once(' ').ok_or_else(|| bad(i, "constraint needs a sense"))?;
                    let sense = match sense.trim() {
                        "nonnegative" => Sense::Nonnegative,
                        "nonpositive" => Sense::Nonpositive,
                        _ => return Err(bad(i, "unknown sense")),
                    };
                    constraints.push(SosConstraint {
                        name: name.to_string(),
                        sense,
                        form: String::new(),
                        basis: Vec::new(),
                        poly: SymbolicPolynomial::default(),
                    });
                }
                "form" | "basis" | "term" => {
                    let c = constraints.last_mut().ok_or_else(|| bad(i, "entry outside a constraint"))?;
                    match key {
                        "form" => c.form = rest.to_string(),
                        "basis" => {
                            c.basis = rest
                                .split(';')
                                .filter(|s| !s.trim().is_empty())
                                .map(|s| parse_mono(s, i))
                                .collect::<Result<_>>()?
                        }
                        _ => {
                            let (m, coefs) = rest.split_once(':').ok_or_else(|| bad(i, "term needs `:`"))?;
                            let m = parse_mono(m, i)?;
                            for part in coefs.split(';') {
                                let (v, s) = part.trim().split_once(' ').ok_or_else(|| bad(i, "bad coefficient"))?;
                                let v: f64 = v.parse().map_err(|_| bad(i, "bad coefficient"))?;
                                c.poly.add(m.clone(), s.trim(), v);
                            }
                        }
                    }
                }
                "end" => {
                    ended = true;
                    break;
                }
                _ => return Err(bad(i, "unknown keyword")),
            }
        }
        if !ended {
            return Err(bad(text.lines().count(), "missing `end`"));
        }
        let program = SosProgram {
            mode: mode.ok_or_else(|| Error::schema("mode", "missing"))?,
            vars: vars.ok_or_else(|| Error::schema("vars", "missing"))?,
            unknowns: unknowns.ok_or_else(|| Error::schema("unknowns", "missing"))?,
            objective: objective.ok_or_else(|| Error::schema("objective", "missing"))?,
            constraints,
        };
        program.validate()?;
        Ok(program)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for c in &self.constraints {
            for (m, e) in &c.poly.terms {
                if m.len() != n {
                    return Err(Error::schema(format!("constraint {}", c.name), "monomial length differs from vars"));
                }
                if let Some(s) = e.keys().find(|s| *s != CONSTANT && !self.unknowns.contains(s)) {
                    return Err(Error::schema(format!("constraint {}", c.name), format!("undeclared symbol `{s}`")));
                }
            }
        }
        if let Some(u) = &self.objective {
            if !self.unknowns.contains(u) {
                return Err(Error::schema("objective", format!("undeclared unknown `{u}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_counts() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let prog = SosProgram::candidate(&a).unwrap();
        assert_eq!(prog.unknowns.len(), 3);
        assert_eq!(prog.constraints.len(), 2);
        assert_eq!(SosProgram::parse(&prog.to_text()).unwrap(), prog);
    }

    #[test]
    fn scalar_roa_polynomial() {
        let f = PolynomialMap::new(
            1,
            vec![Polynomial::from_terms(1, [(vec![1], -1.0), (vec![3], 1.0)]).unwrap()],
        )
        .unwrap();
        let prog = SosProgram::roa(&DMatrix::from_element(1, 1, 1.0), &f).unwrap();
        let poly = &prog.constraints[0].poly;
        // l x^2 (-2x^2 + 2x^4) + (rho - x^2) x^2
        assert_eq!(poly.part("l_0_0", 1).coefficient(&[4]), -2.0);
        assert_eq!(poly.part("l_0_0", 1).coefficient(&[6]), 2.0);
        assert_eq!(poly.part("rho", 1).coefficient(&[2]), 1.0);
        assert_eq!(poly.part(CONSTANT, 1).coefficient(&[4]), -1.0);
        assert_eq!(poly.terms.len(), 3);
        assert_eq!(SosProgram::parse(&prog.to_text()).unwrap(), prog);
    }

    #[test]
    fn parse_rejects_undeclared_symbols() {
        let text = "sos-program 1\nmode roa\nvars x0\nunknowns rho\nobjective maximize rho\n\
                    constraint c nonpositive\n  form x\n  basis 1\n  term 2 : 1.0 zeta\nend\n";
        assert!(SosProgram::parse(text).is_err());
    }
}
