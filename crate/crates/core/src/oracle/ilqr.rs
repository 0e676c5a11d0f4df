//! Receding-horizon iterative LQR.

use nalgebra::{DMatrix, DVector};

use crate::env::CartPoleParams;
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, quad_form};
use crate::oracle::lqr::{lqr_solve, LqrSolution, TimeMode};

/// Discrete-time dynamics with a scalar control.
pub trait DiscreteModel: Sync {
    fn state_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: f64) -> Result<Vec<f64>>;
    /// Jacobians of `step` at the origin with zero control.
    fn linearization(&self) -> (DMatrix<f64>, DMatrix<f64>);
}

impl DiscreteModel for CartPoleParams {
    fn state_dim(&self) -> usize {
        4
    }

    fn step(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        Ok(self.step_state(x, u)?.to_vec())
    }

    fn linearization(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (a, b) = self.linearize_discrete();
        (matrix_from_rows(&a), DMatrix::from_column_slice(4, 1, &b))
    }
}

#[derive(Debug, Clone)]
pub struct IlqrConfig {
    pub horizon: usize,
    pub iterations: usize,
    pub fd_step: f64,
    /// Diagonal of the state cost.
    pub state_cost: Vec<f64>,
    pub control_cost: f64,
}

impl Default for IlqrConfig {
    fn default() -> Self {
        IlqrConfig {
            horizon: 50,
            iterations: 3,
            fd_step: 1e-5,
            state_cost: vec![1.0, 1.0, 10.0, 1.0],
            control_cost: 0.1,
        }
    }
}

/// Outcome of one planning call.
#[derive(Debug, Clone)]
pub struct IlqrPlan {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    /// Total cost before the first iteration and after each one.
    pub costs: Vec<f64>,
    /// Quadratic cost-to-go matrices `P_t` from the last backward pass.
    pub cost_to_go: Vec<DMatrix<f64>>,
}

pub struct Ilqr<M: DiscreteModel> {
    pub model: M,
    pub config: IlqrConfig,
    q: DMatrix<f64>,
    /// Infinite-horizon LQR of the linearized model: terminal cost and warm start.
    pub lqr: LqrSolution,
}

impl<M: DiscreteModel> Ilqr<M> {
    pub fn new(model: M, config: IlqrConfig) -> Result<Self> {
        let n = model.state_dim();
        if config.state_cost.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: config.state_cost.len(),
            });
        }
        if config.horizon == 0 || config.iterations == 0 {
            return Err(Error::invalid("iLQR needs a positive horizon and iteration count"));
        }
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&config.state_cost));
        let r = DMatrix::from_element(1, 1, config.control_cost);
        let (a, b) = model.linearization();
        let lqr = lqr_solve(&a, &b, &q, &r, TimeMode::Discrete)?;
        Ok(Ilqr { model, config, q, lqr })
    }

    pub fn lqr_action(&self, x: &[f64]) -> f64 {
        -(0..x.len()).map(|j| self.lqr.k[(0, j)] * x[j]).sum::<f64>()
    }

    fn total_cost(&self, states: &[Vec<f64>], controls: &[f64]) -> f64 {
        let r = self.config.control_cost;
        let running: f64 = controls
            .iter()
            .zip(states)
            .map(|(u, x)| quad_form(&self.q, x) + r * u * u)
            .sum();
        running + quad_form(&self.lqr.p, &states[states.len() - 1])
    }

    pub fn simulate(&self, x0: &[f64], controls: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut states = vec![x0.to_vec()];
        for &u in controls {
            let next = self.model.step(states.last().unwrap(), u)?;
            states.push(next);
        }
        Ok(states)
    }

    fn jacobians(&self, x: &[f64], u: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = x.len();
        let h = self.config.fd_step;
        let mut a = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            xp[j] = x[j] + h;
            let fp = self.model.step(&xp, u)?;
            xp[j] = x[j] - h;
            let fm = self.model.step(&xp, u)?;
            xp[j] = x[j];
            for i in 0..n {
                a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let fp = self.model.step(x, u + h)?;
        let fm = self.model.step(x, u - h)?;
        let b = DVector::from_fn(n, |i, _| (fp[i] - fm[i]) / (2.0 * h));
        Ok((a, b))
    }

    /// Optimizes a control sequence from `x0`, warm-started by the LQR policy.
    pub fn plan(&self, x0: &[f64]) -> Result<IlqrPlan> {
        let n = self.model.state_dim();
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
        let horizon = self.config.horizon;
        let r = self.config.control_cost;
        let mut states = vec![x0.to_vec()];
        let mut controls = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let x = states.last().unwrap();
            let u = self.lqr_action(x);
            controls.push(u);
            states.push(self.model.step(x, u)?);
        }
        let mut cost = self.total_cost(&states, &controls);
        let mut costs = vec![cost];
        let mut cost_to_go = vec![self.lqr.p.clone(); horizon + 1];

        for iter in 0..self.config.iterations {
            // backward pass
            let mut vx = 2.0 * &self.lqr.p * DVector::from_column_slice(&states[horizon]);
            let mut vxx = 2.0 * &self.lqr.p;
            cost_to_go[horizon] = self.lqr.p.clone();
            let mut ff = vec![0.0; horizon];
            let mut fb = vec![DVector::zeros(n); horizon];
            for t in (0..horizon).rev() {
                let (a, b) = self.jacobians(&states[t], controls[t])?;
                let x = DVector::from_column_slice(&states[t]);
                let qx = 2.0 * &self.q * &x + a.transpose() * &vx;
                let qu = 2.0 * r * controls[t] + b.dot(&vx);
                let qxx = 2.0 * &self.q + a.transpose() * &vxx * &a;
                let quu = 2.0 * r + b.dot(&(&vxx * &b));
                let qux = (&vxx * &a).transpose() * &b;
                if !(quu > 0.0) {
                    return Err(Error::NotConverged(format!(
                        "iLQR iteration {iter}: non-convex control Hessian {quu} at t={t}"
                    )));
                }
                let k = -qu / quu;
                let kk = -&qux / quu;
                vx = &qx + &kk * (quu * k) + &kk * qu + &qux * k;
                vxx = &qxx + &kk * kk.transpose() * quu + &kk * qux.transpose() + &qux * kk.transpose();
                vxx = (&vxx + vxx.transpose()) * 0.5;
                cost_to_go[t] = &vxx * 0.5;
                ff[t] = k;
                fb[t] = kk;
            }
            // forward pass with backtracking
            let mut accepted = false;
            let mut alpha = 1.0;
            for _ in 0..12 {
                let mut new_states = vec![x0.to_vec()];
                let mut new_controls = Vec::with_capacity(horizon);
                let mut finite = true;
                for t in 0..horizon {
                    let x = &new_states[t];
                    let dx: f64 = (0..n).map(|i| fb[t][i] * (x[i] - states[t][i])).sum();
                    let u = controls[t] + alpha * ff[t] + dx;
                    let next = self.model.step(x, u);
                    match next {
                        Ok(next) => {
                            new_controls.push(u);
                            new_states.push(next);
                        }
                        Err(_) => {
                            finite = false;
                            break;
                        }
                    }
                }
                if finite {
                    let c = self.total_cost(&new_states, &new_controls);
                    if c.is_finite() && c < cost {
                        states = new_states;
                        controls = new_controls;
                        cost = c;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            costs.push(cost);
            if !cost.is_finite() {
                return Err(Error::NotConverged(format!(
                    "iLQR forward pass diverged; cost trace {costs:?}"
                )));
            }
            if !accepted {
                // no descent direction left: the remaining iterations are no-ops
                for _ in iter + 1..self.config.iterations {
                    costs.push(cost);
                }
                break;
            }
        }
        Ok(IlqrPlan {
            states,
            controls,
            costs,
            cost_to_go,
        })
    }
}
