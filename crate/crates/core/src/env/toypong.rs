//! Single-paddle Pong on a rectangle with elastic collisions.
//!
//! State is `(x, y, vx, vy, xp)`: ball position, ball velocity and the
//! paddle centre on the bottom edge. Actions are 0 = left, 1 = right,
//! 2 = stay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineMap, LinearConstraint, Piece, PiecewiseAffineSystem, Polytope};
use crate::lp::{q_from_f64, Q};
use crate::mdp::{Action, ActionSpace, Environment, SimRng, StateVector, Transition};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const STAY: usize = 2;
pub const ACTION_NAMES: [&str; 3] = ["left", "right", "stay"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyPongParams {
    pub x_max: f64,
    pub y_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Half paddle length: the ball is returned when `|x - xp| <= paddle_half_length`.
    pub paddle_half_length: f64,
    pub paddle_speed: f64,
    pub max_steps: usize,
    /// Largest `|x - xp|` at the start of an episode.
    pub start_offset: f64,
}

impl Default for ToyPongParams {
    fn default() -> Self {
        ToyPongParams {
            x_max: 30.0,
            y_max: 20.0,
            v_min: 1.0,
            v_max: 2.0,
            paddle_half_length: 4.0,
            paddle_speed: 2.0,
            max_steps: 250,
            start_offset: 4.0,
        }
    }
}

impl ToyPongParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.x_max,
            self.y_max,
            self.v_min,
            self.v_max,
            self.paddle_half_length,
            self.paddle_speed,
            self.start_offset,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::schema("toypong", "parameters must be finite"));
        }
        if !(self.x_max > 0.0 && self.y_max > 0.0) {
            return Err(Error::schema("x_max/y_max", "must be positive"));
        }
        if !(0.0 < self.v_min && self.v_min < self.v_max) {
            return Err(Error::schema("v_min/v_max", "need 0 < v_min < v_max"));
        }
        if !(0.0 < self.paddle_half_length && self.paddle_half_length < self.x_max / 2.0) {
            return Err(Error::schema(
                "paddle_half_length",
                "need 0 < L < x_max / 2",
            ));
        }
        if !(self.paddle_speed > 0.0 && self.start_offset >= 0.0) {
            return Err(Error::schema(
                "paddle_speed/start_offset",
                "speed must be positive and offset nonnegative",
            ));
        }
        Ok(())
    }

    /// Horizon after which a falling ball must have bounced: `ceil(2 y_max / v_min)`.
    pub fn bounce_horizon(&self) -> usize {
        (2.0 * self.y_max / self.v_min).ceil() as usize
    }

    fn paddle_after(&self, xp: f64, action: usize) -> f64 {
        match action {
            LEFT => {
                let moved = xp - self.paddle_speed;
                if moved < 0.0 {
                    0.0
                } else {
                    moved
                }
            }
            RIGHT => {
                let moved = xp + self.paddle_speed;
                if moved > self.x_max {
                    self.x_max
                } else {
                    moved
                }
            }
            _ => xp,
        }
    }

    /// One step: paddle, then side walls, then top wall or bottom edge.
    /// Returns the successor and whether the ball was missed.
    pub fn step_state(&self, s: &[f64], action: usize) -> Result<([f64; 5], bool)> {
        if s.len() != 5 {
            return Err(Error::DimensionMismatch {
                expected: 5,
                got: s.len(),
            });
        }
        if action > STAY {
            return Err(Error::invalid(format!("toy Pong has no action {action}")));
        }
        let (x, y, vx, vy, xp) = (s[0], s[1], s[2], s[3], s[4]);
        let xp_next = self.paddle_after(xp, action);

        let moved_x = x + vx;
        let (x_next, vx_next) = if moved_x < 0.0 {
            (-x - vx, -vx)
        } else if moved_x > self.x_max {
            (2.0 * self.x_max - x - vx, -vx)
        } else {
            (moved_x, vx)
        };

        let moved_y = y + vy;
        let mut missed = false;
        let (y_next, vy_next) = if moved_y > self.y_max {
            (2.0 * self.y_max - y - vy, -vy)
        } else if moved_y > 0.0 {
            (moved_y, vy)
        } else if (x_next - xp_next).abs() <= self.paddle_half_length {
            (-y - vy, -vy)
        } else {
            missed = true;
            (moved_y, vy)
        };
        Ok(([x_next, y_next, vx_next, vy_next, xp_next], missed))
    }

    /// Piecewise-affine form of `step_state` for one action.
    pub fn pwa_for_action(&self, action: usize) -> Result<PiecewiseAffineSystem> {
        if action > STAY {
            return Err(Error::invalid(format!("toy Pong has no action {action}")));
        }
        let dim = 5;
        let qf = q_from_f64;
        let x_max = qf(self.x_max);
        let y_max = qf(self.y_max);
        let speed = qf(self.paddle_speed);
        let half = qf(self.paddle_half_length);
        let zero = Q::from_integer(0.into());
        let row = |coefs: [i64; 5]| -> Vec<Q> { coefs.iter().map(|&c| Q::from_integer(c.into())).collect() };

        // paddle cases: (label, guard, paddle row, paddle offset)
        let mut paddle: Vec<(&str, Vec<LinearConstraint>, Vec<Q>, Q)> = Vec::new();
        match action {
            LEFT => {
                paddle.push((
                    "paddle-left",
                    vec![LinearConstraint::lower(dim, 4, speed.clone(), false)],
                    row([0, 0, 0, 0, 1]),
                    -speed.clone(),
                ));
                paddle.push((
                    "paddle-at-left-edge",
                    vec![LinearConstraint::upper(dim, 4, speed.clone(), true)],
                    row([0, 0, 0, 0, 0]),
                    zero.clone(),
                ));
            }
            RIGHT => {
                paddle.push((
                    "paddle-right",
                    vec![LinearConstraint::upper(dim, 4, &x_max - &speed, false)],
                    row([0, 0, 0, 0, 1]),
                    speed.clone(),
                ));
                paddle.push((
                    "paddle-at-right-edge",
                    vec![LinearConstraint::lower(dim, 4, &x_max - &speed, true)],
                    row([0, 0, 0, 0, 0]),
                    x_max.clone(),
                ));
            }
            _ => paddle.push(("paddle-stay", vec![], row([0, 0, 0, 0, 1]), zero.clone())),
        }

        // horizontal cases: (label, guard, x row, x offset, vx sign)
        let sum_x = row([1, 0, 1, 0, 0]);
        let neg_sum_x = row([-1, 0, -1, 0, 0]);
        let horizontal: Vec<(&str, Vec<LinearConstraint>, Vec<Q>, Q, i64)> = vec![
            (
                "left-wall",
                vec![LinearConstraint::new(sum_x.clone(), zero.clone(), true)],
                neg_sum_x.clone(),
                zero.clone(),
                -1,
            ),
            (
                "free-x",
                vec![
                    LinearConstraint::new(neg_sum_x.clone(), zero.clone(), false),
                    LinearConstraint::new(sum_x.clone(), x_max.clone(), false),
                ],
                sum_x.clone(),
                zero.clone(),
                1,
            ),
            (
                "right-wall",
                vec![LinearConstraint::new(neg_sum_x.clone(), -x_max.clone(), true)],
                neg_sum_x.clone(),
                &x_max + &x_max,
                -1,
            ),
        ];

        let sum_y = row([0, 1, 0, 1, 0]);
        let neg_sum_y = row([0, -1, 0, -1, 0]);
        let mut pieces = Vec::new();
        for (p_label, p_guard, p_row, p_off) in &paddle {
            for (h_label, h_guard, x_row, x_off, vx_sign) in &horizontal {
                // x' - xp' as an affine function of the pre-state
                let diff: Vec<Q> = x_row.iter().zip(p_row).map(|(a, b)| a - b).collect();
                let diff_off = x_off - p_off;

                let mut vertical: Vec<(String, Vec<LinearConstraint>, Vec<Q>, Q, i64)> = vec![
                    (
                        "top-wall".into(),
                        vec![LinearConstraint::new(neg_sum_y.clone(), -y_max.clone(), true)],
                        neg_sum_y.clone(),
                        &y_max + &y_max,
                        -1,
                    ),
                    (
                        "free-y".into(),
                        vec![
                            LinearConstraint::new(neg_sum_y.clone(), zero.clone(), true),
                            LinearConstraint::new(sum_y.clone(), y_max.clone(), false),
                        ],
                        sum_y.clone(),
                        zero.clone(),
                        1,
                    ),
                ];
                let at_bottom = LinearConstraint::new(sum_y.clone(), zero.clone(), false);
                // diff <= L  and  -diff <= L
                let hit_right = LinearConstraint::new(diff.clone(), &half - &diff_off, false);
                let hit_left = LinearConstraint::new(
                    diff.iter().map(|c| -c).collect(),
                    &half + &diff_off,
                    false,
                );
                vertical.push((
                    "paddle-hit".into(),
                    vec![at_bottom.clone(), hit_right.clone(), hit_left.clone()],
                    neg_sum_y.clone(),
                    zero.clone(),
                    -1,
                ));
                vertical.push((
                    "miss-right-of-paddle".into(),
                    vec![at_bottom.clone(), hit_right.negated()],
                    sum_y.clone(),
                    zero.clone(),
                    1,
                ));
                vertical.push((
                    "miss-left-of-paddle".into(),
                    vec![at_bottom.clone(), hit_left.negated()],
                    sum_y.clone(),
                    zero.clone(),
                    1,
                ));

                for (v_label, v_guard, y_row, y_off, vy_sign) in vertical {
                    let guard = Polytope::from_constraints(
                        dim,
                        p_guard
                            .iter()
                            .chain(h_guard)
                            .chain(&v_guard)
                            .cloned()
                            .collect(),
                    )?;
                    let mut vx_row = row([0; 5]);
                    vx_row[2] = Q::from_integer((*vx_sign).into());
                    let mut vy_row = row([0; 5]);
                    vy_row[3] = Q::from_integer(vy_sign.into());
                    let map = AffineMap {
                        matrix: vec![x_row.clone(), y_row, vx_row, vy_row, p_row.clone()],
                        offset: vec![x_off.clone(), y_off, zero.clone(), zero.clone(), p_off.clone()],
                    };
                    pieces.push(Piece {
                        guard,
                        map,
                        label: format!(
                            "{}/{p_label}/{h_label}/{v_label}",
                            ACTION_NAMES[action]
                        ),
                    });
                }
            }
        }
        PiecewiseAffineSystem::new(dim, pieces)
    }

    /// Initial region: ball in the upper half falling, paddle within
    /// `start_offset` of the ball.
    pub fn initial_region(&self) -> Result<Polytope> {
        let dim = 5;
        let mut p = Polytope::from_box(
            &[0.0, self.y_max / 2.0, -self.v_max, -self.v_max, 0.0],
            &[self.x_max, self.y_max, self.v_max, -self.v_min, self.x_max],
        )?;
        let off = q_from_f64(self.start_offset);
        let mut diff = vec![Q::from_integer(0.into()); dim];
        diff[0] = Q::from_integer(1.into());
        diff[4] = Q::from_integer((-1).into());
        p.push(LinearConstraint::new(diff.clone(), off.clone(), false))?;
        p.push(LinearConstraint::new(
            diff.iter().map(|c| -c).collect(),
            off,
            false,
        ))?;
        Ok(p)
    }

    /// Ball below the bottom edge and still falling.
    pub fn unsafe_region(&self) -> Result<Polytope> {
        Polytope::from_constraints(
            5,
            vec![
                LinearConstraint::upper(5, 1, q_from_f64(0.0), false),
                LinearConstraint::upper(5, 3, q_from_f64(0.0), true),
            ],
        )
    }

    /// Ball moving upwards, i.e. it has been returned.
    pub fn returned_region(&self) -> Result<Polytope> {
        Polytope::from_constraints(5, vec![LinearConstraint::lower(5, 3, q_from_f64(0.0), true)])
    }

    pub fn sample_initial(&self, rng: &mut SimRng) -> [f64; 5] {
        let x = rng.gen_range(0.0..=self.x_max);
        let y = rng.gen_range(self.y_max / 2.0..=self.y_max);
        let vx = rng.gen_range(-self.v_max..=self.v_max);
        let vy = -rng.gen_range(self.v_min..=self.v_max);
        let xp = if self.start_offset > 0.0 {
            (x + rng.gen_range(-self.start_offset..=self.start_offset)).clamp(0.0, self.x_max)
        } else {
            x
        };
        [x, y, vx, vy, xp]
    }
}

#[derive(Debug, Clone)]
pub struct ToyPong {
    pub params: ToyPongParams,
    state: [f64; 5],
}

impl ToyPong {
    pub fn new(params: ToyPongParams) -> Result<Self> {
        params.validate()?;
        Ok(ToyPong {
            params,
            state: [0.0; 5],
        })
    }
}

impl Default for ToyPong {
    fn default() -> Self {
        ToyPong::new(ToyPongParams::default()).expect("default parameters are valid")
    }
}

impl Environment for ToyPong {
    fn id(&self) -> &'static str {
        "toypong"
    }

    fn dim(&self) -> usize {
        5
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete { n: 3 }
    }

    fn max_steps(&self) -> usize {
        self.params.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> StateVector {
        self.state = self.params.sample_initial(rng);
        self.state()
    }

    fn state(&self) -> StateVector {
        StateVector::new(self.state.to_vec()).expect("toy Pong state stays finite")
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        let a = action
            .index()
            .ok_or_else(|| Error::invalid("toy Pong needs a discrete action"))?;
        let (next, missed) = self.params.step_state(&self.state, a)?;
        self.state = next;
        Ok(Transition {
            state: self.state(),
            reward: if missed { 0.0 } else { 1.0 },
            done: missed,
        })
    }

    fn restore(&mut self, state: &StateVector) -> Result<()> {
        state.check_dim(5)?;
        self.state.copy_from_slice(state);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_wall_reflects() {
        let p = ToyPongParams::default();
        let (s, missed) = p.step_state(&[10.0, 19.0, 1.0, 2.0, 15.0], STAY).unwrap();
        assert!(!missed);
        assert_eq!(s, [11.0, 19.0, 1.0, -2.0, 15.0]);
    }

    #[test]
    fn paddle_returns_ball_below() {
        let p = ToyPongParams::default();
        let (s, missed) = p.step_state(&[15.0, 1.0, 0.5, -1.5, 14.0], RIGHT).unwrap();
        assert!(!missed);
        assert_eq!(s[1], 0.5);
        assert_eq!(s[3], 1.5);
    }

    #[test]
    fn missing_ends_the_episode() {
        let p = ToyPongParams::default();
        let (_, missed) = p.step_state(&[2.0, 1.0, -1.0, -1.5, 25.0], STAY).unwrap();
        assert!(missed);
    }

    #[test]
    fn paddle_is_clamped() {
        let p = ToyPongParams::default();
        let (s, _) = p.step_state(&[10.0, 10.0, 0.0, -1.0, 29.0], RIGHT).unwrap();
        assert_eq!(s[4], 30.0);
        let (s, _) = p.step_state(&[10.0, 10.0, 0.0, -1.0, 1.0], LEFT).unwrap();
        assert_eq!(s[4], 0.0);
    }

    #[test]
    fn bounce_horizon_is_forty() {
        assert_eq!(ToyPongParams::default().bounce_horizon(), 40);
    }
}
