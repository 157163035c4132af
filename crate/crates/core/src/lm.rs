//! Box-constrained Levenberg-Marquardt least squares.
//!
//! Steps solve `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr` and are projected back onto the
//! bounds. Accepted steps shrink λ, rejected ones grow it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, FitDiagnostic, Result};

pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;
    fn num_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);

    /// Row-major `num_residuals × num_params` Jacobian. The default uses
    /// forward differences.
    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>) {
        let m = self.num_residuals();
        let mut base = vec![0.0; m];
        let mut shifted = vec![0.0; m];
        self.residuals(params, &mut base);
        let mut p = params.to_vec();
        for j in 0..params.len() {
            let h = 1e-7 * params[j].abs().max(1e-7);
            p[j] = params[j] + h;
            self.residuals(&p, &mut shifted);
            for i in 0..m {
                out[(i, j)] = (shifted[i] - base[i]) / h;
            }
            p[j] = params[j];
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn project(&self, p: &mut [f64]) {
        for ((x, lo), hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative cost reduction below which the run counts as converged.
    pub ftol: f64,
    /// Relative step size below which the run counts as converged.
    pub xtol: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 500,
            ftol: 1e-12,
            xtol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// `½ Σ rᵢ²`.
    pub cost: f64,
    pub iterations: usize,
}

impl LmReport {
    pub fn diagnostic(&self) -> FitDiagnostic {
        FitDiagnostic {
            params: self.params.clone(),
            cost: self.cost,
            iterations: self.iterations,
        }
    }
}

fn half_sum_squares(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

pub fn minimize<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    initial: &[f64],
    bounds: &Bounds,
    config: &LmConfig,
) -> Result<LmReport> {
    let n = problem.num_params();
    let m = problem.num_residuals();
    if initial.len() != n || bounds.lower.len() != n || bounds.upper.len() != n {
        return Err(Error::invalid("initial parameters", "length does not match the problem"));
    }
    if m < n {
        return Err(Error::invalid("residuals", format!("{m} residuals for {n} parameters")));
    }

    let mut params = initial.to_vec();
    bounds.project(&mut params);
    let mut resid = vec![0.0; m];
    problem.residuals(&params, &mut resid);
    let mut cost = half_sum_squares(&resid);
    if !cost.is_finite() {
        return Err(Error::Domain("initial residuals are not finite".into()));
    }

    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut trial_resid = vec![0.0; m];
    let mut damping = config.initial_damping;

    for iteration in 1..=config.max_iterations {
        problem.jacobian(&params, &mut jac);
        let r = DVector::from_column_slice(&resid);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * r;

        let mut accepted = false;
        while damping < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            for i in 0..n {
                trial[i] = params[i] + step[i];
            }
            bounds.project(&mut trial);
            problem.residuals(&trial, &mut trial_resid);
            let trial_cost = half_sum_squares(&trial_resid);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step_norm: f64 = trial.iter().zip(&params).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let param_norm: f64 = params.iter().map(|x| x * x).sum::<f64>().sqrt();
                let reduction = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                params.copy_from_slice(&trial);
                std::mem::swap(&mut resid, &mut trial_resid);
                cost = trial_cost;
                damping = (damping / 10.0).max(1e-15);
                accepted = true;
                if cost == 0.0
                    || reduction < config.ftol
                    || step_norm < config.xtol * (param_norm + config.xtol)
                {
                    return Ok(LmReport {
                        params,
                        cost,
                        iterations: iteration,
                    });
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary within the bounds
            return Ok(LmReport {
                params,
                cost,
                iterations: iteration,
            });
        }
    }
    Err(Error::NotConverged(Box::new(FitDiagnostic {
        params,
        cost,
        iterations: config.max_iterations,
    })))
}
