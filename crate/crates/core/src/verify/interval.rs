//! Interval arithmetic with outward rounding and polynomial range enclosures.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::poly::Polynomial;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn down(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

fn up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value in the interval.
    pub fn mig(&self) -> f64 {
        if self.contains(0.0) {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn scale(self, k: f64) -> Interval {
        let (a, b) = (k * self.lo, k * self.hi);
        Interval::new(down(a.min(b)), up(a.max(b)))
    }

    pub fn powi(self, k: u32) -> Interval {
        match k {
            0 => Interval::point(1.0),
            1 => self,
            _ if k % 2 == 0 => {
                let lo = self.mig();
                let hi = self.mag();
                Interval::new(down(lo.powi(k as i32)).max(0.0), up(hi.powi(k as i32)))
            }
            _ => {
                let lo = self.lo.powi(k as i32);
                let hi = self.hi.powi(k as i32);
                // powi may be off by a few ulps for large k
                let slack = |x: f64| x.abs() * (k as f64) * f64::EPSILON;
                Interval::new(down(lo - slack(lo)), up(hi + slack(hi)))
            }
        }
    }

    pub fn intersect(self, other: Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Interval::new(lo, hi)
        } else {
            // disjoint only through rounding; keep the tighter one
            if self.width() <= other.width() {
                self
            } else {
                other
            }
        }
    }

    pub fn split(self) -> (Interval, Interval) {
        let m = self.mid();
        (Interval::new(self.lo, m), Interval::new(m, self.hi))
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new(down(self.lo + o.lo), up(self.hi + o.hi))
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new(down(self.lo - o.hi), up(self.hi - o.lo))
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(down(lo), up(hi))
    }
}

/// Axis-aligned box as one interval per coordinate.
pub type IntervalBox = Vec<Interval>;

pub fn box_mid(b: &[Interval]) -> Vec<f64> {
    b.iter().map(Interval::mid).collect()
}

/// Index of the widest coordinate.
pub fn widest_dim(b: &[Interval]) -> usize {
    b.iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| x.width().total_cmp(&y.width()))
        .map_or(0, |(i, _)| i)
}

/// Natural interval extension: every monomial is enclosed separately.
pub fn natural_extension(p: &Polynomial, b: &[Interval]) -> Interval {
    let mut acc = Interval::point(0.0);
    for (m, c) in p.terms() {
        let mut t = Interval::point(1.0);
        for (x, &e) in b.iter().zip(m) {
            if e > 0 {
                t = t * x.powi(e);
            }
        }
        acc = acc + t.scale(c);
    }
    acc
}

/// Enclosure from the Horner form in variable `var`, with the coefficient
/// polynomials enclosed by the natural extension.
pub fn horner_extension(p: &Polynomial, b: &[Interval], var: usize) -> Interval {
    let deg = p.terms().map(|(m, _)| m[var]).max().unwrap_or(0) as usize;
    let mut coefs: Vec<Polynomial> = vec![Polynomial::zero(p.nvars()); deg + 1];
    for (m, c) in p.terms() {
        let mut rest = m.clone();
        let e = rest[var] as usize;
        rest[var] = 0;
        coefs[e].add_term(rest, c);
    }
    let mut acc = Interval::point(0.0);
    for q in coefs.iter().rev() {
        acc = acc * b[var] + natural_extension(q, b);
    }
    acc
}

/// Natural extension intersected with the Horner form in the widest variable.
pub fn enclose(p: &Polynomial, b: &[Interval]) -> Interval {
    let natural = natural_extension(p, b);
    if p.nvars() == 0 {
        return natural;
    }
    natural.intersect(horner_extension(p, b, widest_dim(b)))
}
