//! Sparse multivariate polynomials with floating coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector of a monomial.
pub type Monomial = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

fn total_degree(m: &[u32]) -> u32 {
    m.iter().sum()
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The polynomial `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut m = vec![0; nvars];
        m[i] = 1;
        let mut p = Polynomial::zero(nvars);
        p.add_term(m, 1.0);
        p
    }

    /// `sum_i coefs[i] * x_i + constant`.
    pub fn linear(coefs: &[f64], constant: f64) -> Self {
        let n = coefs.len();
        let mut p = Polynomial::constant(n, constant);
        for (i, &c) in coefs.iter().enumerate() {
            let mut m = vec![0; n];
            m[i] = 1;
            p.add_term(m, c);
        }
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Result<Self> {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            if m.len() != nvars {
                return Err(Error::DimensionMismatch {
                    expected: nvars,
                    got: m.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("coefficient of {m:?}")));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.len(), self.nvars);
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &[u32]) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| total_degree(m)).max().unwrap_or(0)
    }

    /// Terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: u32) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| total_degree(m) == d)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    /// Drops every term above total degree `d`.
    pub fn truncate(&self, d: u32) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| total_degree(m) <= d)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut p = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            p.add_term(m.clone(), c * k);
        }
        p
    }

    /// Product with every term above `max_degree` discarded.
    pub fn mul_truncated(&self, other: &Polynomial, max_degree: Option<u32>) -> Polynomial {
        assert_eq!(self.nvars, other.nvars, "polynomial variable counts differ");
        let mut p = Polynomial::zero(self.nvars);
        for (ma, ca) in &self.terms {
            let da = total_degree(ma);
            for (mb, cb) in &other.terms {
                if let Some(max) = max_degree {
                    if da + total_degree(mb) > max {
                        continue;
                    }
                }
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                p.add_term(m, ca * cb);
            }
        }
        p
    }

    pub fn pow_truncated(&self, k: u32, max_degree: Option<u32>) -> Polynomial {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..k {
            acc = acc.mul_truncated(self, max_degree);
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(m, c)| {
                m.iter()
                    .zip(x)
                    .fold(*c, |acc, (&e, &xi)| acc * xi.powi(e as i32))
            })
            .sum()
    }

    pub fn partial(&self, i: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.nvars);
        for (m, c) in &self.terms {
            if m[i] == 0 {
                continue;
            }
            let mut d = m.clone();
            d[i] -= 1;
            p.add_term(d, c * m[i] as f64);
        }
        p
    }

    /// Replaces `x_i` by `subs[i]`; the result lives in the variables of `subs`.
    pub fn substitute(&self, subs: &[Polynomial], max_degree: Option<u32>) -> Result<Polynomial> {
        if subs.len() != self.nvars {
            return Err(Error::DimensionMismatch {
                expected: self.nvars,
                got: subs.len(),
            });
        }
        let nvars = subs.first().map_or(0, |p| p.nvars);
        let mut powers: Vec<Vec<Polynomial>> = subs
            .iter()
            .map(|p| vec![Polynomial::constant(nvars, 1.0), p.clone()])
            .collect();
        let mut out = Polynomial::zero(nvars);
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(nvars, *c);
            for (i, &e) in m.iter().enumerate() {
                while powers[i].len() <= e as usize {
                    let next = powers[i]
                        .last()
                        .unwrap()
                        .mul_truncated(&subs[i], max_degree);
                    powers[i].push(next);
                }
                if e > 0 {
                    term = term.mul_truncated(&powers[i][e as usize], max_degree);
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars, "polynomial variable counts differ");
        let mut p = self.clone();
        for (m, c) in &rhs.terms {
            p.add_term(m.clone(), *c);
        }
        p
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.mul_truncated(rhs, None)
    }
}

/// Writes terms as `c*x0^2*x3`, highest degree first.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut terms: Vec<(&Monomial, &f64)> = self.terms.iter().collect();
        terms.sort_by(|a, b| total_degree(b.0).cmp(&total_degree(a.0)).then(b.0.cmp(a.0)));
        for (k, (m, c)) in terms.into_iter().enumerate() {
            let sign = if *c < 0.0 { "-" } else { "+" };
            if k == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{:?}", c.abs())?;
            for (i, &e) in m.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// Vector of polynomials sharing one set of input variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    pub dim_in: usize,
    pub outputs: Vec<Polynomial>,
}

impl PolynomialMap {
    pub fn new(dim_in: usize, outputs: Vec<Polynomial>) -> Result<Self> {
        for p in &outputs {
            if p.nvars() != dim_in {
                return Err(Error::DimensionMismatch {
                    expected: dim_in,
                    got: p.nvars(),
                });
            }
        }
        Ok(PolynomialMap { dim_in, outputs })
    }

    /// `x -> m x`.
    pub fn linear(m: &[Vec<f64>]) -> Self {
        let outputs = m.iter().map(|row| Polynomial::linear(row, 0.0)).collect();
        PolynomialMap {
            dim_in: m.first().map_or(0, |r| r.len()),
            outputs,
        }
    }

    pub fn dim_out(&self) -> usize {
        self.outputs.len()
    }

    pub fn degree(&self) -> u32 {
        self.outputs.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.outputs.iter().map(|p| p.eval(x)).collect()
    }

    /// Coefficients of the degree-one terms: row i is the gradient of output i at 0.
    pub fn linear_part(&self) -> Vec<Vec<f64>> {
        self.outputs
            .iter()
            .map(|p| {
                (0..self.dim_in)
                    .map(|j| {
                        let mut m = vec![0; self.dim_in];
                        m[j] = 1;
                        p.coefficient(&m)
                    })
                    .collect()
            })
            .collect()
    }

    /// `self o inner`.
    pub fn compose(&self, inner: &PolynomialMap, max_degree: Option<u32>) -> Result<PolynomialMap> {
        if inner.dim_out() != self.dim_in {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in,
                got: inner.dim_out(),
            });
        }
        let outputs = self
            .outputs
            .iter()
            .map(|p| p.substitute(&inner.outputs, max_degree))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolynomialMap {
            dim_in: inner.dim_in,
            outputs,
        })
    }
}
