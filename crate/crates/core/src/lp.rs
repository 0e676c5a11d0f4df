//! Exact linear programming over arbitrary-precision rationals.
//!
//! Dictionary simplex with Bland's anti-cycling rule and an auxiliary
//! variable for phase one. Problems are stated over free variables
//! `x` and nonnegative variables `y` with constraints `a . (x, y) <= b`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Exact conversion; every finite binary float is a rational.
pub fn q_from_f64(x: f64) -> Q {
    Q::from_float(x).unwrap_or_else(|| panic!("cannot convert non-finite {x} to a rational"))
}

/// The shortest decimal that rounds to `x`, as an exact rational.
pub fn q_from_decimal(x: f64) -> Q {
    assert!(x.is_finite(), "cannot convert non-finite {x} to a rational");
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("exponent");
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa),
    };
    let frac_len = digits.split_once('.').map_or(0, |(_, f)| f.len()) as i32;
    let int: BigInt = digits.replace('.', "").parse().expect("digits");
    let shift = exp - frac_len;
    let ten = BigInt::from(10);
    let mag = if shift >= 0 {
        Q::from_integer(int * num_traits::pow(ten, shift as usize))
    } else {
        Q::new(int, num_traits::pow(ten, (-shift) as usize))
    };
    if neg {
        -mag
    } else {
        mag
    }
}

pub fn q_to_f64(x: &Q) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal { value: Q, point: Vec<Q> },
}

/// `maximize c . v  s.t.  rows[i].0 . v <= rows[i].1`, where the first
/// `num_free` entries of `v` are free and the rest are nonnegative.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_free: usize,
    pub num_nonneg: usize,
    pub objective: Vec<Q>,
    pub rows: Vec<(Vec<Q>, Q)>,
}

impl LinearProgram {
    pub fn solve(&self) -> LpOutcome {
        let nv = self.num_free + self.num_nonneg;
        assert_eq!(self.objective.len(), nv, "objective length");
        // standard form columns: u (free+), w (free-), y
        let ncols = 2 * self.num_free + self.num_nonneg;
        let expand = |coeffs: &[Q]| -> Vec<Q> {
            let mut out = Vec::with_capacity(ncols);
            out.extend(coeffs[..self.num_free].iter().cloned());
            out.extend(coeffs[..self.num_free].iter().map(|c| -c));
            out.extend(coeffs[self.num_free..].iter().cloned());
            out
        };
        let a: Vec<Vec<Q>> = self
            .rows
            .iter()
            .map(|(row, _)| {
                assert_eq!(row.len(), nv, "constraint length");
                expand(row)
            })
            .collect();
        let b: Vec<Q> = self.rows.iter().map(|(_, rhs)| rhs.clone()).collect();
        let c = expand(&self.objective);
        match solve_standard(&c, &a, &b) {
            StdOutcome::Infeasible => LpOutcome::Infeasible,
            StdOutcome::Unbounded => LpOutcome::Unbounded,
            StdOutcome::Optimal { value, z } => {
                let mut point = Vec::with_capacity(nv);
                for i in 0..self.num_free {
                    point.push(&z[i] - &z[self.num_free + i]);
                }
                point.extend(z[2 * self.num_free..].iter().cloned());
                LpOutcome::Optimal { value, point }
            }
        }
    }
}

enum StdOutcome {
    Infeasible,
    Unbounded,
    Optimal { value: Q, z: Vec<Q> },
}

/// Dictionary `x_B(i) = rhs[i] + sum_j coef[i][j] * x_N(j)`,
/// objective `obj_const + sum_j obj[j] * x_N(j)`.
struct Dictionary {
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    rhs: Vec<Q>,
    coef: Vec<Vec<Q>>,
    obj: Vec<Q>,
    obj_const: Q,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Dictionary {
    fn pivot(&mut self, r: usize, e: usize) {
        let a_re = self.coef[r][e].clone();
        debug_assert!(!a_re.is_zero());
        let inv = a_re.recip();
        // row r solved for the entering variable
        let new_rhs = -&self.rhs[r] * &inv;
        let mut new_row: Vec<Q> = self.coef[r].iter().map(|c| -c * &inv).collect();
        new_row[e] = inv;
        self.rhs[r] = new_rhs;
        self.coef[r] = new_row;
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[e]);

        let (pivot_rhs, pivot_row) = (self.rhs[r].clone(), self.coef[r].clone());
        for i in 0..self.coef.len() {
            if i == r {
                continue;
            }
            let f = std::mem::replace(&mut self.coef[i][e], Q::zero());
            if f.is_zero() {
                continue;
            }
            self.rhs[i] += &f * &pivot_rhs;
            for (j, pc) in pivot_row.iter().enumerate() {
                if pc.is_zero() {
                    continue;
                }
                if j == e {
                    self.coef[i][j] = &f * pc;
                } else {
                    self.coef[i][j] += &f * pc;
                }
            }
        }
        let f = std::mem::replace(&mut self.obj[e], Q::zero());
        if !f.is_zero() {
            self.obj_const += &f * &pivot_rhs;
            for (j, pc) in pivot_row.iter().enumerate() {
                if pc.is_zero() {
                    continue;
                }
                if j == e {
                    self.obj[j] = &f * pc;
                } else {
                    self.obj[j] += &f * pc;
                }
            }
        }
    }

    /// One Bland's-rule iteration; `skip` marks nonbasic columns that may
    /// not enter.
    fn step(&mut self, skip: Option<usize>) -> Step {
        let mut entering: Option<usize> = None;
        for (j, c) in self.obj.iter().enumerate() {
            if Some(self.nonbasic[j]) == skip || !c.is_positive() {
                continue;
            }
            if entering.is_none_or(|e| self.nonbasic[j] < self.nonbasic[e]) {
                entering = Some(j);
            }
        }
        let Some(e) = entering else {
            return Step::Optimal;
        };
        let mut leaving: Option<(usize, Q)> = None;
        for i in 0..self.coef.len() {
            let a = &self.coef[i][e];
            if !a.is_negative() {
                continue;
            }
            let ratio = &self.rhs[i] / -a;
            let better = match &leaving {
                None => true,
                Some((r, best)) => {
                    ratio < *best || (ratio == *best && self.basic[i] < self.basic[*r])
                }
            };
            if better {
                leaving = Some((i, ratio));
            }
        }
        match leaving {
            None => Step::Unbounded,
            Some((r, _)) => {
                self.pivot(r, e);
                Step::Pivoted
            }
        }
    }

    fn run(&mut self, skip: Option<usize>) -> bool {
        loop {
            match self.step(skip) {
                Step::Optimal => return true,
                Step::Unbounded => return false,
                Step::Pivoted => {}
            }
        }
    }
}

fn solve_standard(c: &[Q], a: &[Vec<Q>], b: &[Q]) -> StdOutcome {
    let n = c.len();
    let m = a.len();
    let aux = n + m;
    let mut dict = Dictionary {
        basic: (n..n + m).collect(),
        nonbasic: (0..n).collect(),
        rhs: b.to_vec(),
        coef: a.iter().map(|row| row.iter().map(|x| -x).collect()).collect(),
        obj: vec![Q::zero(); n],
        obj_const: Q::zero(),
    };

    let most_negative = (0..m)
        .filter(|&i| b[i].is_negative())
        .min_by(|&i, &j| b[i].cmp(&b[j]).then(i.cmp(&j)));
    if let Some(r) = most_negative {
        // phase one: maximize -x0 with x0 added to every row
        dict.nonbasic.push(aux);
        for row in dict.coef.iter_mut() {
            row.push(Q::one());
        }
        dict.obj = vec![Q::zero(); n];
        dict.obj.push(-Q::one());
        let e = n;
        dict.pivot(r, e);
        let finished = dict.run(None);
        debug_assert!(finished, "phase one is bounded");
        if dict.obj_const.is_negative() {
            return StdOutcome::Infeasible;
        }
        if let Some(r) = dict.basic.iter().position(|&v| v == aux) {
            // degenerate: x0 basic at zero, swap it out
            if let Some(e) = (0..dict.nonbasic.len()).find(|&j| !dict.coef[r][j].is_zero()) {
                dict.pivot(r, e);
            }
        }
        if let Some(col) = dict.nonbasic.iter().position(|&v| v == aux) {
            dict.nonbasic.remove(col);
            for row in dict.coef.iter_mut() {
                row.remove(col);
            }
        } else {
            // x0 is still basic: its row is identically zero, drop it
            let r = dict.basic.iter().position(|&v| v == aux).expect("aux var present");
            dict.basic.remove(r);
            dict.rhs.remove(r);
            dict.coef.remove(r);
        }
        // rewrite the true objective over the current nonbasic set
        dict.obj = vec![Q::zero(); dict.nonbasic.len()];
        dict.obj_const = Q::zero();
        for (orig, cj) in c.iter().enumerate() {
            if cj.is_zero() {
                continue;
            }
            if let Some(j) = dict.nonbasic.iter().position(|&v| v == orig) {
                dict.obj[j] += cj;
            } else if let Some(i) = dict.basic.iter().position(|&v| v == orig) {
                dict.obj_const += cj * &dict.rhs[i];
                for (j, a) in dict.coef[i].iter().enumerate() {
                    if !a.is_zero() {
                        dict.obj[j] += cj * a;
                    }
                }
            }
        }
    } else {
        dict.obj = c.to_vec();
    }

    if !dict.run(None) {
        return StdOutcome::Unbounded;
    }
    let mut z = vec![Q::zero(); n];
    for (i, &var) in dict.basic.iter().enumerate() {
        if var < n {
            z[var] = dict.rhs[i].clone();
        }
    }
    StdOutcome::Optimal {
        value: dict.obj_const,
        z,
    }
}
