//! Damped Gauss-Newton (Levenberg-style) least squares for small, fixed
//! parameter counts.
//!
//! Each iteration solves `(J^T J + lambda D) delta = J^T r` where `D` is the
//! diagonal of `J^T J` floored away from zero, so that parameters the data
//! cannot see (gauge directions, zero Jacobian columns) get a well-posed,
//! vanishing update instead of a singular system. Steps that lower the cost
//! are accepted and shrink `lambda`; rejected steps grow it.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    /// Stop once the step norm falls below this, relative to the parameter norm.
    pub step_tol: f64,
    pub init_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            cost_tol: 1e-12,
            step_tol: 1e-12,
            init_damping: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        for (name, v) in [
            ("cost_tol", self.cost_tol),
            ("step_tol", self.step_tol),
            ("init_damping", self.init_damping),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

const DAMPING_DOWN: f64 = 0.3;
const DAMPING_UP: f64 = 3.0;
const MAX_DAMPING: f64 = 1e20;
/// Damping entries are at least this fraction of the largest diagonal entry.
/// Without it, weakly observed parameters (gauge directions) are almost free
/// to move and the iteration crawls along them.
const DIAG_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Mean squared residual at the initial parameters.
    pub init_cost: f64,
    /// Mean squared residual at the returned parameters.
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after the initial evaluation and after every accepted step.
    pub cost_history: Vec<f64>,
}

/// A least-squares problem with `N` parameters.
pub trait LeastSquares<const N: usize> {
    fn residual_count(&self) -> usize;

    /// Writes residuals `r_k = observed_k - model_k(x)`.
    fn residuals(&self, x: &SVector<f64, N>, out: &mut [f64]);

    /// Derivative of `model_k(x)` with respect to `x` for residual `k`.
    fn model_gradient(&self, x: &SVector<f64, N>, k: usize) -> SVector<f64, N>;
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

/// Runs the damped descent from `x0`; parameters with `free[i] == false`
/// never move.
pub fn minimize<P, const N: usize>(
    problem: &P,
    x0: SVector<f64, N>,
    free: [bool; N],
    cfg: &SolverConfig,
) -> Result<(SVector<f64, N>, SolverReport)>
where
    P: LeastSquares<N>,
{
    cfg.validate()?;
    let m = problem.residual_count();
    if m == 0 {
        return Err(Error::InvalidArgument("no residuals".into()));
    }
    let mut r = vec![0.0; m];
    let mut trial_r = vec![0.0; m];

    let mut x = x0;
    problem.residuals(&x, &mut r);
    let mut cost = mean_square(&r);
    if !cost.is_finite() {
        return Err(Error::NonFinite);
    }
    let init_cost = cost;
    let mut history = vec![cost];
    let mut lambda = cfg.init_damping;
    let mut iterations = 0;
    let mut converged = false;
    // normal equations are rebuilt only after an accepted step
    let mut normal: Option<(SMatrix<f64, N, N>, SVector<f64, N>)> = None;

    while iterations < cfg.max_iter {
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (jtj, jtr) = normal.get_or_insert_with(|| {
            let mut jtj = SMatrix::<f64, N, N>::zeros();
            let mut jtr = SVector::<f64, N>::zeros();
            for (k, &rk) in r.iter().enumerate() {
                let mut g = problem.model_gradient(&x, k);
                for i in 0..N {
                    if !free[i] {
                        g[i] = 0.0;
                    }
                }
                jtj.ger(1.0, &g, &g, 1.0);
                jtr.axpy(rk, &g, 1.0);
            }
            (jtj, jtr)
        });
        iterations += 1;

        let diag_max = (0..N).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = (diag_max * DIAG_FLOOR).max(f64::MIN_POSITIVE);
        let mut a = *jtj;
        for i in 0..N {
            if free[i] {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            } else {
                a.row_mut(i).fill(0.0);
                a.column_mut(i).fill(0.0);
                a[(i, i)] = 1.0;
            }
        }
        let delta = match a.cholesky() {
            Some(ch) => ch.solve(jtr),
            None => {
                lambda *= DAMPING_UP;
                if lambda > MAX_DAMPING {
                    converged = true;
                    break;
                }
                continue;
            }
        };

        let trial = x + delta;
        problem.residuals(&trial, &mut trial_r);
        let trial_cost = mean_square(&trial_r);

        if trial_cost.is_finite() && trial_cost < cost {
            let rel_drop = (cost - trial_cost) / cost;
            let small_step = delta.norm() <= cfg.step_tol * (x.norm() + cfg.step_tol);
            x = trial;
            std::mem::swap(&mut r, &mut trial_r);
            cost = trial_cost;
            history.push(cost);
            normal = None;
            lambda = (lambda * DAMPING_DOWN).max(1e-15);
            if rel_drop < cfg.cost_tol || small_step {
                converged = true;
                break;
            }
        } else {
            lambda *= DAMPING_UP;
            if lambda > MAX_DAMPING {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    Ok((
        x,
        SolverReport {
            init_cost,
            final_cost: cost,
            iterations,
            converged,
            cost_history: history,
        },
    ))
}
