//! Oracle policies: reference controllers that supply both actions and
//! action values.

pub mod file;
pub mod ilqr;
pub mod lqr;

pub use file::{maxent_q, LoadedOracle, StochasticPolicy};
pub use ilqr::{DiscreteModel, Ilqr, IlqrConfig, IlqrPlan};
pub use lqr::{is_stabilizing, lqr_solve, LqrSolution, TimeMode};

use nalgebra::DMatrix;

use crate::env::toypong::{self, ToyPongParams};
use crate::env::{duelpong, CartPoleParams, ForceMode};
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, quad_form};
use crate::mdp::{
    derive_seed, dp_evaluate, Action, Environment, Policy, StateVector, TabularMdp, ValueTables,
};

/// A reference policy with action values.
pub trait Oracle<E: Environment>: Sync {
    fn act(&self, s: &StateVector) -> Result<Action>;

    /// `Q(s, a)` for every discrete action, with `env` positioned at `s`.
    fn q_values(&self, env: &E, s: &StateVector) -> Result<Vec<f64>>;
}

/// `Q(s, act(s)) - min_a Q(s, a)`.
pub fn ell_tilde_from_q(q: &[f64], act: usize) -> Result<f64> {
    let chosen = *q
        .get(act)
        .ok_or_else(|| Error::invalid(format!("action {act} has no Q-value")))?;
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    if !(chosen.is_finite() && min.is_finite()) {
        return Err(Error::NonFinite("oracle Q-value".into()));
    }
    Ok(chosen - min)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Average return of taking `action` at `s` and then following `expert`,
/// over `horizon` steps in total.
///
/// A single rollout continues the environment's own random stream; with
/// several, rollout `i` reseeds it from `derive_seed(seed, i)`.
pub fn mc_q_estimate<E: Environment, P: Policy + ?Sized>(
    env: &E,
    expert: &P,
    s: &StateVector,
    action: Action,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::invalid("Monte-Carlo horizon must be positive"));
    }
    if n_rollouts == 0 {
        return Err(Error::invalid("need at least one Monte-Carlo rollout"));
    }
    let mut total = 0.0;
    for i in 0..n_rollouts {
        let mut sim = env.clone();
        if sim.state() != *s {
            sim.restore(s)?;
        }
        if n_rollouts > 1 {
            sim.reseed(derive_seed(seed, i as u64));
        }
        let mut tr = sim.step(action)?;
        let mut ret = tr.reward;
        for _ in 1..horizon {
            if tr.done {
                break;
            }
            let a = expert.act(&tr.state)?;
            tr = sim.step(a)?;
            ret += tr.reward;
        }
        total += ret;
    }
    Ok(total / n_rollouts as f64)
}

/// A hand-written expert whose action values are estimated by simulation.
pub struct ScriptedOracle<P: Policy> {
    pub expert: P,
    pub num_actions: usize,
    pub n_rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl<E: Environment, P: Policy> Oracle<E> for ScriptedOracle<P> {
    fn act(&self, s: &StateVector) -> Result<Action> {
        self.expert.act(s)
    }

    fn q_values(&self, env: &E, s: &StateVector) -> Result<Vec<f64>> {
        (0..self.num_actions)
            .map(|a| {
                mc_q_estimate(
                    env,
                    &self.expert,
                    s,
                    Action::Discrete(a),
                    self.n_rollouts,
                    self.horizon,
                    self.seed,
                )
            })
            .collect()
    }
}

/// Exact oracle for a tabular MDP: a fixed policy and its DP tables.
pub struct TabularOracle {
    pub mdp: TabularMdp,
    pub policy: Vec<usize>,
    pub tables: ValueTables,
    features: Vec<StateVector>,
}

impl TabularOracle {
    pub fn new(mdp: TabularMdp, policy: Vec<usize>, features: Vec<StateVector>) -> Result<Self> {
        if features.len() != mdp.num_states() {
            return Err(Error::DimensionMismatch {
                expected: mdp.num_states(),
                got: features.len(),
            });
        }
        let tables = dp_evaluate(&mdp, &policy)?;
        Ok(TabularOracle {
            mdp,
            policy,
            tables,
            features,
        })
    }

    fn index_of(&self, s: &StateVector) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == s)
            .ok_or_else(|| Error::invalid(format!("observation {s:?} matches no tabular state")))
    }
}

impl<E: Environment> Oracle<E> for TabularOracle {
    fn act(&self, s: &StateVector) -> Result<Action> {
        Ok(Action::Discrete(self.policy[self.index_of(s)?]))
    }

    fn q_values(&self, env: &E, _s: &StateVector) -> Result<Vec<f64>> {
        let (t, state) = env
            .tabular_position()
            .ok_or_else(|| Error::Unsupported("tabular oracle needs a tabular environment".into()))?;
        if t >= self.mdp.horizon() {
            // past the horizon every action is worth nothing
            return Ok(vec![0.0; self.mdp.num_actions()]);
        }
        Ok(self.tables.q[t][state].clone())
    }
}

fn nearest_push(params: &CartPoleParams, force: f64) -> Action {
    match params.force_mode {
        ForceMode::Discrete => Action::Discrete(usize::from(force >= 0.0)),
        ForceMode::Continuous => Action::Continuous(force.clamp(-params.force_mag, params.force_mag)),
    }
}

fn cartpole_q(params: &CartPoleParams, p: &DMatrix<f64>, s: &[f64]) -> Result<Vec<f64>> {
    if params.force_mode != ForceMode::Discrete {
        return Err(Error::Unsupported(
            "action values are only defined for discrete pushes".into(),
        ));
    }
    [-params.force_mag, params.force_mag]
        .iter()
        .map(|&f| Ok(-quad_form(p, &params.step_state(s, f)?)))
        .collect()
}

/// LQR controller on the linearized cart-pole with `Q(s, a) = -s'^T P s'`.
pub struct LqrOracle {
    pub params: CartPoleParams,
    pub solution: LqrSolution,
}

impl LqrOracle {
    pub fn new(params: CartPoleParams, state_cost: &[f64], control_cost: f64) -> Result<Self> {
        let (a, b) = params.linearize_discrete();
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(state_cost));
        let r = DMatrix::from_element(1, 1, control_cost);
        let solution = lqr_solve(
            &matrix_from_rows(&a),
            &DMatrix::from_column_slice(4, 1, &b),
            &q,
            &r,
            TimeMode::Discrete,
        )?;
        Ok(LqrOracle { params, solution })
    }

    pub fn standard(params: CartPoleParams) -> Result<Self> {
        let defaults = IlqrConfig::default();
        LqrOracle::new(params, &defaults.state_cost, defaults.control_cost)
    }

    pub fn force(&self, s: &[f64]) -> f64 {
        -(0..4).map(|j| self.solution.k[(0, j)] * s[j]).sum::<f64>()
    }
}

impl<E: Environment> Oracle<E> for LqrOracle {
    fn act(&self, s: &StateVector) -> Result<Action> {
        s.check_dim(4)?;
        Ok(nearest_push(&self.params, self.force(s)))
    }

    fn q_values(&self, _env: &E, s: &StateVector) -> Result<Vec<f64>> {
        cartpole_q(&self.params, &self.solution.p, s)
    }
}

/// Receding-horizon iLQR on the cart-pole simulator, switching to the
/// origin LQR gain when `||s||_inf <= fallback_radius`.
pub struct IlqrOracle {
    pub ilqr: Ilqr<CartPoleParams>,
    pub fallback_radius: f64,
}

impl IlqrOracle {
    pub fn new(params: CartPoleParams, config: IlqrConfig, fallback_radius: f64) -> Result<Self> {
        Ok(IlqrOracle {
            ilqr: Ilqr::new(params, config)?,
            fallback_radius,
        })
    }

    fn in_fallback(&self, s: &[f64]) -> bool {
        s.iter().all(|x| x.abs() <= self.fallback_radius)
    }

    /// Unclipped force chosen at `s`.
    pub fn force(&self, s: &[f64]) -> Result<f64> {
        if self.in_fallback(s) {
            return Ok(self.ilqr.lqr_action(s));
        }
        Ok(self.ilqr.plan(s)?.controls[0])
    }

    /// Quadratic cost-to-go used for action values from `s`.
    pub fn cost_to_go(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        if self.in_fallback(s) {
            return Ok(self.ilqr.lqr.p.clone());
        }
        Ok(self.ilqr.plan(s)?.cost_to_go[1].clone())
    }
}

impl<E: Environment> Oracle<E> for IlqrOracle {
    fn act(&self, s: &StateVector) -> Result<Action> {
        s.check_dim(4)?;
        Ok(nearest_push(&self.ilqr.model, self.force(s)?))
    }

    fn q_values(&self, _env: &E, s: &StateVector) -> Result<Vec<f64>> {
        let p = self.cost_to_go(s)?;
        cartpole_q(&self.ilqr.model, &p, s)
    }
}

/// Ball position when it next reaches the bottom edge, ignoring the paddle.
pub fn toypong_landing_x(params: &ToyPongParams, s: &[f64]) -> f64 {
    let (mut x, mut y, mut vx, mut vy) = (s[0], s[1], s[2], s[3]);
    let limit = 4 * params.bounce_horizon() + 8;
    for _ in 0..limit {
        let mx = x + vx;
        if mx < 0.0 {
            x = -x - vx;
            vx = -vx;
        } else if mx > params.x_max {
            x = 2.0 * params.x_max - x - vx;
            vx = -vx;
        } else {
            x = mx;
        }
        let my = y + vy;
        if my > params.y_max {
            y = 2.0 * params.y_max - y - vy;
            vy = -vy;
        } else if my > 0.0 {
            y = my;
        } else {
            return x;
        }
    }
    x
}

/// Moves the paddle toward the predicted landing point of the ball.
pub fn toypong_expert(params: ToyPongParams, tolerance: f64) -> impl Fn(&StateVector) -> Action + Sync + Send + Clone {
    move |s: &StateVector| {
        let target = toypong_landing_x(&params, s);
        let gap = target - s[4];
        Action::Discrete(if gap > tolerance {
            toypong::RIGHT
        } else if gap < -tolerance {
            toypong::LEFT
        } else {
            toypong::STAY
        })
    }
}

/// Keeps the paddle level with the ball.
pub fn duelpong_expert(tolerance: f64) -> impl Fn(&StateVector) -> Action + Sync + Send + Clone {
    move |s: &StateVector| Action::Discrete(duelpong::tracking_action(s, tolerance))
}
