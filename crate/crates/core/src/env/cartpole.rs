//! Classic cart-pole balancing task.
//!
//! State is `(x, v, theta, omega)`: cart position (m), cart velocity (m/s),
//! pole angle from upright (rad) and angular velocity (rad/s).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, Environment, SimRng, StateVector, Transition};
use crate::poly::{Polynomial, PolynomialMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceMode {
    /// Action 0 pushes with `-force_mag`, action 1 with `+force_mag`.
    Discrete,
    /// Any force, clipped to `[-force_mag, force_mag]`.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub angle_limit: f64,
    pub x_limit: f64,
    pub max_steps: usize,
    pub force_mode: ForceMode,
    /// Half-width of the uniform reset box around the origin.
    pub reset_half_width: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            angle_limit: 0.2094,
            x_limit: 2.4,
            max_steps: 200,
            force_mode: ForceMode::Discrete,
            reset_half_width: 0.05,
        }
    }
}

impl CartPoleParams {
    pub fn continuous() -> Self {
        CartPoleParams {
            force_mode: ForceMode::Continuous,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_half_length", self.pole_half_length),
            ("force_mag", self.force_mag),
            ("dt", self.dt),
            ("x_limit", self.x_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::schema(name, "must be positive and finite"));
            }
        }
        if !(self.angle_limit > 0.0 && self.angle_limit < std::f64::consts::FRAC_PI_2) {
            return Err(Error::schema("angle_limit", "must lie in (0, pi/2)"));
        }
        if !(self.reset_half_width >= 0.0 && self.reset_half_width.is_finite()) {
            return Err(Error::schema("reset_half_width", "must be nonnegative"));
        }
        Ok(())
    }

    fn total_mass(&self) -> f64 {
        self.cart_mass + self.pole_mass
    }

    fn pole_mass_length(&self) -> f64 {
        self.pole_mass * self.pole_half_length
    }

    /// `(x_acc, theta_acc)` of the continuous dynamics.
    pub fn accelerations(&self, s: &[f64], force: f64) -> (f64, f64) {
        let (theta, omega) = (s[2], s[3]);
        let (sin, cos) = theta.sin_cos();
        let total = self.total_mass();
        let temp = (force + self.pole_mass_length() * omega * omega * sin) / total;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - self.pole_mass_length() * theta_acc * cos / total;
        (x_acc, theta_acc)
    }

    /// Right-hand side `ds/dt` of the continuous dynamics.
    pub fn derivatives(&self, s: &[f64], force: f64) -> [f64; 4] {
        let (x_acc, theta_acc) = self.accelerations(s, force);
        [s[1], x_acc, s[3], theta_acc]
    }

    /// One semi-implicit Euler step: velocities first, then positions.
    pub fn step_state(&self, s: &[f64], force: f64) -> Result<[f64; 4]> {
        if s.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: s.len(),
            });
        }
        let (x_acc, theta_acc) = self.accelerations(s, force);
        let v = s[1] + self.dt * x_acc;
        let omega = s[3] + self.dt * theta_acc;
        let next = [s[0] + self.dt * v, v, s[2] + self.dt * omega, omega];
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "cart-pole step from {s:?} with force {force}"
            )));
        }
        Ok(next)
    }

    pub fn is_failure(&self, s: &[f64]) -> bool {
        s[0].abs() > self.x_limit || s[2].abs() > self.angle_limit
    }

    pub fn force_of(&self, action: Action) -> Result<f64> {
        match (self.force_mode, action) {
            (ForceMode::Discrete, Action::Discrete(0)) => Ok(-self.force_mag),
            (ForceMode::Discrete, Action::Discrete(1)) => Ok(self.force_mag),
            (ForceMode::Continuous, Action::Continuous(f)) if f.is_finite() => {
                Ok(f.clamp(-self.force_mag, self.force_mag))
            }
            (_, a) => Err(Error::invalid(format!(
                "action {a:?} is not valid for cart-pole in {:?} mode",
                self.force_mode
            ))),
        }
    }

    /// Jacobians `(A, B)` of the continuous dynamics at the upright equilibrium.
    pub fn linearize(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let total = self.total_mass();
        let l = self.pole_half_length;
        let denom = l * (4.0 / 3.0 - self.pole_mass / total);
        let dtheta_dtheta = self.gravity / denom;
        let dtheta_dforce = -1.0 / (total * denom);
        let k = self.pole_mass_length() / total;
        let a = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, -k * dtheta_dtheta, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, dtheta_dtheta, 0.0],
        ];
        let b = vec![0.0, 1.0 / total - k * dtheta_dforce, 0.0, dtheta_dforce];
        (a, b)
    }

    /// Forward-Euler discretization `(I + dt A, dt B)` of the linearization.
    pub fn linearize_discrete(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (a, b) = self.linearize();
        let ad = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &x)| if i == j { 1.0 } else { 0.0 } + self.dt * x)
                    .collect()
            })
            .collect();
        let bd = b.iter().map(|&x| self.dt * x).collect();
        (ad, bd)
    }

    /// Taylor expansion of the continuous dynamics about the origin in the
    /// five variables `(x, v, theta, omega, force)`.
    pub fn taylor(&self, degree: u32) -> Result<PolynomialMap> {
        if ![1, 3, 5].contains(&degree) {
            return Err(Error::invalid(format!(
                "Taylor degree must be 1, 3 or 5, got {degree}"
            )));
        }
        let d = Some(degree);
        let n = 5;
        let theta = Polynomial::var(n, 2);
        let omega = Polynomial::var(n, 3);
        let force = Polynomial::var(n, 4);
        let one = Polynomial::constant(n, 1.0);

        // sin and cos series up to the requested degree
        let mut sin = Polynomial::zero(n);
        let mut cos = Polynomial::zero(n);
        let mut fact = 1.0;
        for k in 0..=degree {
            if k > 0 {
                fact *= k as f64;
            }
            let term = theta.pow_truncated(k, d).scale(1.0 / fact);
            match k % 4 {
                0 => cos = &cos + &term,
                1 => sin = &sin + &term,
                2 => cos = &cos - &term,
                _ => sin = &sin - &term,
            }
        }

        let total = self.total_mass();
        let l = self.pole_half_length;
        let pml = self.pole_mass_length();
        let temp = (&force + &omega.pow_truncated(2, d).mul_truncated(&sin, d).scale(pml))
            .scale(1.0 / total);
        // 1 / (l (4/3 - m cos^2 / M)) = (1/D) * 1 / (1 + u), u = (l m / (M D)) (1 - cos^2)
        let denom0 = l * (4.0 / 3.0 - self.pole_mass / total);
        let cos2 = cos.mul_truncated(&cos, d);
        let u = (&one - &cos2).scale(l * self.pole_mass / (total * denom0));
        let mut recip = Polynomial::zero(n);
        let mut power = one.clone();
        for k in 0..=degree {
            let signed = if k % 2 == 0 { power.clone() } else { -&power };
            recip = &recip + &signed;
            power = power.mul_truncated(&u, d);
            if power.is_zero() {
                break;
            }
        }
        let recip = recip.scale(1.0 / denom0);
        let numer = &sin.scale(self.gravity) - &cos.mul_truncated(&temp, d);
        let theta_acc = numer.mul_truncated(&recip, d);
        let x_acc = &temp - &theta_acc.mul_truncated(&cos, d).scale(pml / total);

        PolynomialMap::new(
            n,
            vec![
                Polynomial::var(n, 1).truncate(degree),
                x_acc.truncate(degree),
                omega.truncate(degree),
                theta_acc.truncate(degree),
            ],
        )
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    state: [f64; 4],
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Result<Self> {
        params.validate()?;
        Ok(CartPole {
            params,
            state: [0.0; 4],
        })
    }
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole::new(CartPoleParams::default()).expect("default parameters are valid")
    }
}

impl Environment for CartPole {
    fn id(&self) -> &'static str {
        "cartpole"
    }

    fn dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        match self.params.force_mode {
            ForceMode::Discrete => ActionSpace::Discrete { n: 2 },
            ForceMode::Continuous => ActionSpace::Continuous {
                low: -self.params.force_mag,
                high: self.params.force_mag,
            },
        }
    }

    fn max_steps(&self) -> usize {
        self.params.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> StateVector {
        let w = self.params.reset_half_width;
        for x in self.state.iter_mut() {
            *x = if w > 0.0 { rng.gen_range(-w..=w) } else { 0.0 };
        }
        self.state()
    }

    fn state(&self) -> StateVector {
        StateVector::new(self.state.to_vec()).expect("cart-pole state stays finite")
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        let force = self.params.force_of(action)?;
        self.state = self.params.step_state(&self.state, force)?;
        Ok(Transition {
            state: self.state(),
            reward: 1.0,
            done: self.params.is_failure(&self.state),
        })
    }

    fn restore(&mut self, state: &StateVector) -> Result<()> {
        state.check_dim(4)?;
        self.state.copy_from_slice(state);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_push_moves_cart_and_tips_pole_back() {
        let p = CartPoleParams::default();
        let s = p.step_state(&[0.0; 4], 10.0).unwrap();
        assert!(s[1] > 0.0);
        assert!(s[3] < 0.0);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = CartPoleParams::continuous();
        let mut s = [0.0; 4];
        for _ in 0..500 {
            s = p.step_state(&s, 0.0).unwrap();
        }
        assert_eq!(s, [0.0; 4]);
    }

    #[test]
    fn dynamics_are_odd() {
        let p = CartPoleParams::default();
        let s = [0.3, -0.2, 0.1, 0.7];
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = p.step_state(&s, 3.5).unwrap();
        let b = p.step_state(&neg, -3.5).unwrap();
        for i in 0..4 {
            assert_eq!(a[i], -b[i]);
        }
    }

    #[test]
    fn discretization_matches_euler_step() {
        let p = CartPoleParams::default();
        let (a, b) = p.linearize();
        let (ad, bd) = p.linearize_discrete();
        for i in 0..4 {
            assert_eq!(bd[i], p.dt * b[i]);
            for j in 0..4 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert_eq!(ad[i][j], id + p.dt * a[i][j]);
            }
        }
    }

    #[test]
    fn taylor_rejects_even_degrees() {
        assert!(CartPoleParams::default().taylor(2).is_err());
    }
}
