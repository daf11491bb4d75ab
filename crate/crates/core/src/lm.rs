//! Levenberg-Marquardt nonlinear least squares.
//!
//! Minimizes ½‖r(p)‖² with Marquardt's diagonal scaling: the step solves
//! (JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr, so large λ moves along the scaled gradient
//! and λ → 0 recovers Gauss-Newton.

use nalgebra::{DMatrix, DVector};

/// A least-squares problem with `n_params` unknowns and `n_residuals` terms.
pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Row-major Jacobian ∂r_i/∂p_j. Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut probe = p.to_vec();
        let mut fwd = vec![0.0; m];
        let mut bwd = vec![0.0; m];
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-3);
            probe[j] = p[j] + h;
            self.residuals(&probe, &mut fwd);
            probe[j] = p[j] - h;
            self.residuals(&probe, &mut bwd);
            probe[j] = p[j];
            for i in 0..m {
                jac[(i, j)] = (fwd[i] - bwd[i]) / (2.0 * h);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Converged once an accepted step lowers the cost by less than this fraction.
    pub cost_rtol: f64,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_rtol: 1e-10,
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// ½‖r‖² at the returned parameters.
    pub cost: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// s²·(JᵀJ)⁻¹ with s² = ‖r‖²/(m − p); `None` when JᵀJ is singular.
    pub covariance: Option<DMatrix<f64>>,
}

impl LmReport {
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

pub fn minimize<P: Problem + ?Sized>(problem: &P, initial: &[f64], cfg: &LmConfig) -> LmReport {
    let n = problem.n_params();
    let m = problem.n_residuals();
    assert_eq!(initial.len(), n, "initial guess has wrong length");

    let mut p = initial.to_vec();
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut cost = cost_of(&r);
    let mut jac = DMatrix::zeros(m, n);
    let mut lambda = cfg.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    'outer: while iterations < cfg.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        problem.jacobian(&p, &mut jac);
        let jtj = jac.tr_mul(&jac);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        if grad.amax() == 0.0 {
            converged = true;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match a.lu().solve(&(-&grad)) {
                    Some(s) => s,
                    None => {
                        lambda *= cfg.lambda_up;
                        if lambda > 1e20 {
                            break 'outer;
                        }
                        continue;
                    }
                },
            };
            for i in 0..n {
                trial[i] = p[i] + step[i];
            }
            problem.residuals(&trial, &mut r_trial);
            let new_cost = cost_of(&r_trial);
            if new_cost.is_finite() && new_cost <= cost {
                let rel = (cost - new_cost) / cost;
                let step_small = step.iter().zip(&p).all(|(d, x)| d.abs() <= 1e-15 * (x.abs() + 1e-300));
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = new_cost;
                lambda = (lambda * cfg.lambda_down).max(1e-15);
                if rel < cfg.cost_rtol || step_small {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= cfg.lambda_up;
            if lambda > 1e20 {
                // No descent direction left at working precision.
                converged = true;
                break 'outer;
            }
        }
    }

    problem.jacobian(&p, &mut jac);
    let jtj = jac.tr_mul(&jac);
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let covariance = jtj.try_inverse().map(|inv| inv * s2);
    LmReport {
        residual_norm: (2.0 * cost).sqrt(),
        params: p,
        cost,
        iterations,
        converged,
        covariance,
    }
}
