//! Two-paddle Pong against a scripted opponent, played to 21 points.
//!
//! The player paddle sits on the left edge (`x = 0`) and moves vertically;
//! the opponent on the right edge tracks the ball with limited speed. The
//! observation is `(x, y, vx, vy, yp)`; the opponent's position is hidden.
//! Actions are 0 = up, 1 = down, 2 = stay.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSpace, Environment, SimRng, StateVector, Transition};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const STAY: usize = 2;
pub const ACTION_NAMES: [&str; 3] = ["up", "down", "stay"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuelPongParams {
    pub width: f64,
    pub height: f64,
    pub vx_min: f64,
    pub vx_max: f64,
    pub vy_max: f64,
    pub paddle_half_length: f64,
    pub paddle_speed: f64,
    pub opponent_half_length: f64,
    pub opponent_speed: f64,
    /// Change of `vy` per unit of normalized hit offset on the player paddle.
    pub spin: f64,
    /// Half-width of the uniform `vy` perturbation on opponent returns.
    pub return_noise: f64,
    pub rounds_to_win: u32,
    pub max_steps: usize,
}

impl Default for DuelPongParams {
    fn default() -> Self {
        DuelPongParams {
            width: 40.0,
            height: 30.0,
            vx_min: 1.0,
            vx_max: 2.0,
            vy_max: 1.5,
            paddle_half_length: 3.0,
            paddle_speed: 2.0,
            opponent_half_length: 3.0,
            opponent_speed: 1.0,
            spin: 0.6,
            return_noise: 0.6,
            rounds_to_win: 21,
            max_steps: 30_000,
        }
    }
}

impl DuelPongParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("vx_min", self.vx_min),
            ("vx_max", self.vx_max),
            ("vy_max", self.vy_max),
            ("paddle_half_length", self.paddle_half_length),
            ("paddle_speed", self.paddle_speed),
            ("opponent_half_length", self.opponent_half_length),
            ("opponent_speed", self.opponent_speed),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::schema(name, "must be positive and finite"));
            }
        }
        if self.vx_min > self.vx_max {
            return Err(Error::schema("vx_min", "must not exceed vx_max"));
        }
        if !(self.spin >= 0.0 && self.return_noise >= 0.0) {
            return Err(Error::schema("spin/return_noise", "must be nonnegative"));
        }
        if self.rounds_to_win == 0 {
            return Err(Error::schema("rounds_to_win", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DuelPong {
    pub params: DuelPongParams,
    ball: [f64; 4],
    player: f64,
    opponent: f64,
    player_score: u32,
    opponent_score: u32,
    rng: SimRng,
}

impl DuelPong {
    pub fn new(params: DuelPongParams) -> Result<Self> {
        params.validate()?;
        let mid = params.height / 2.0;
        Ok(DuelPong {
            params,
            ball: [0.0; 4],
            player: mid,
            opponent: mid,
            player_score: 0,
            opponent_score: 0,
            rng: SimRng::seed_from_u64(0),
        })
    }

    pub fn scores(&self) -> (u32, u32) {
        (self.player_score, self.opponent_score)
    }

    pub fn opponent_position(&self) -> f64 {
        self.opponent
    }

    /// Ball restarts at mid-court heading for the player, level with the paddle.
    fn serve(&mut self) {
        let p = &self.params;
        let vx = -self.rng.gen_range(p.vx_min..=p.vx_max);
        let vy = self.rng.gen_range(-p.vy_max..=p.vy_max);
        self.ball = [p.width / 2.0, self.player, vx, vy];
    }
}

impl Default for DuelPong {
    fn default() -> Self {
        DuelPong::new(DuelPongParams::default()).expect("default parameters are valid")
    }
}

impl Environment for DuelPong {
    fn id(&self) -> &'static str {
        "duelpong"
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
        self.rng = SimRng::seed_from_u64(rng.gen());
        self.player = self.params.height / 2.0;
        self.opponent = self.params.height / 2.0;
        self.player_score = 0;
        self.opponent_score = 0;
        self.serve();
        self.state()
    }

    fn state(&self) -> StateVector {
        let [x, y, vx, vy] = self.ball;
        StateVector::new(vec![x, y, vx, vy, self.player]).expect("duel Pong state stays finite")
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        let a = action
            .index()
            .filter(|&a| a <= STAY)
            .ok_or_else(|| Error::invalid(format!("duel Pong has no action {action:?}")))?;
        let p = self.params.clone();
        let delta = match a {
            UP => p.paddle_speed,
            DOWN => -p.paddle_speed,
            _ => 0.0,
        };
        self.player = (self.player + delta).clamp(0.0, p.height);
        let [mut x, mut y, mut vx, mut vy] = self.ball;
        let chase = (y - self.opponent).clamp(-p.opponent_speed, p.opponent_speed);
        self.opponent = (self.opponent + chase).clamp(0.0, p.height);

        x += vx;
        y += vy;
        if y < 0.0 {
            y = -y;
            vy = -vy;
        } else if y > p.height {
            y = 2.0 * p.height - y;
            vy = -vy;
        }

        let mut reward = 0.0;
        if x <= 0.0 {
            let offset = y - self.player;
            if offset.abs() <= p.paddle_half_length {
                x = -x;
                vx = -vx;
                vy = (vy + p.spin * offset / p.paddle_half_length).clamp(-p.vy_max, p.vy_max);
            } else {
                reward = -1.0;
            }
        } else if x >= p.width {
            if (y - self.opponent).abs() <= p.opponent_half_length {
                x = 2.0 * p.width - x;
                vx = -vx;
                let noise = if p.return_noise > 0.0 {
                    self.rng.gen_range(-p.return_noise..=p.return_noise)
                } else {
                    0.0
                };
                vy = (vy + noise).clamp(-p.vy_max, p.vy_max);
            } else {
                reward = 1.0;
            }
        }
        self.ball = [x, y, vx, vy];
        if reward > 0.0 {
            self.player_score += 1;
            self.serve();
        } else if reward < 0.0 {
            self.opponent_score += 1;
            self.serve();
        }
        let done =
            self.player_score >= p.rounds_to_win || self.opponent_score >= p.rounds_to_win;
        Ok(Transition {
            state: self.state(),
            reward,
            done,
        })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = SimRng::seed_from_u64(seed);
    }

    fn restore(&mut self, state: &StateVector) -> Result<()> {
        state.check_dim(5)?;
        self.ball = [state[0], state[1], state[2], state[3]];
        self.player = state[4];
        Ok(())
    }
}

/// Moves the paddle toward the ball's current height.
pub fn tracking_action(s: &[f64], tolerance: f64) -> usize {
    let gap = s[1] - s[4];
    if gap > tolerance {
        UP
    } else if gap < -tolerance {
        DOWN
    } else {
        STAY
    }
}
