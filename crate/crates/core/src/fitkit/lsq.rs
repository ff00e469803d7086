//! Damped Gauss-Newton (Levenberg-Marquardt) least squares.
//!
//! Minimises `½ Σ rᵢ(p)²` over a box. Each iteration solves
//!
//! ```text
//! (JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr
//! ```
//!
//! starting from `λ = 1e-3`; a step that lowers the cost is accepted and
//! `λ` shrinks by 0.3, otherwise `λ` grows by 10 and the step is retried.
//! The Jacobian is taken from [`Problem::jacobian`] when the problem
//! supplies one and from forward differences otherwise.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LsqError {
    #[error("residual vector is not finite at the initial parameters")]
    NonFiniteResidual,
    #[error("normal matrix JᵀJ is singular")]
    SingularJacobian,
    #[error("did not converge within {} iterations", .0.iterations)]
    NotConverged(Box<LmSolution>),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("problem has {residuals} residuals but {params} parameters")]
    Underdetermined { residuals: usize, params: usize },
}

/// A residual model `r(p)`.
pub trait Problem {
    fn num_residuals(&self) -> usize;

    fn residuals(&self, params: &[f64], out: &mut [f64]);

    /// Fill `jac` (residuals × params) analytically. Returning `false`
    /// selects finite differences.
    fn jacobian(&self, _params: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }

    /// Typical magnitude of parameter `j`, used as the floor of the
    /// finite-difference step when the parameter itself is near zero.
    fn param_scale(&self, _j: usize) -> f64 {
        1.0
    }
}

/// Closure-backed problem without an analytic Jacobian.
pub struct FnProblem<F> {
    pub num_residuals: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> Problem for FnProblem<F> {
    fn num_residuals(&self) -> usize {
        self.num_residuals
    }

    fn residuals(&self, params: &[f64], out: &mut [f64]) {
        (self.f)(params, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn check(&self, n: usize) -> Result<(), LsqError> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LsqError::InvalidBounds(format!(
                "expected {n} bounds, got {} lower and {} upper",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if let Some(j) = (0..n).find(|&j| !(self.lower[j] <= self.upper[j])) {
            return Err(LsqError::InvalidBounds(format!(
                "parameter {j}: lower {} exceeds upper {}",
                self.lower[j], self.upper[j]
            )));
        }
        Ok(())
    }

    fn project(&self, p: &mut [f64]) {
        for (j, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Relative cost change that ends the iteration.
    pub cost_rtol: f64,
    /// Max-norm of the gradient `Jᵀr` that ends the iteration.
    pub gradient_tol: f64,
    /// Residual norm, relative to its initial value, treated as an exact fit.
    pub zero_residual_rtol: f64,
    pub fd_relative_step: f64,
    /// Residuals are already divided by their standard deviations; do not
    /// rescale the covariance by the residual variance.
    pub absolute_sigma: bool,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.3,
            cost_rtol: 1e-10,
            gradient_tol: 1e-12,
            zero_residual_rtol: 1e-10,
            fd_relative_step: 1e-7,
            absolute_sigma: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostChange,
    Gradient,
    ZeroResidual,
    /// No step along the damped direction lowers the cost any further.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// `√Σ rᵢ²`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Max-norm of `Jᵀr` at the solution.
    pub gradient_norm: f64,
    /// Residual norm after the start and after every accepted step.
    pub norm_history: Vec<f64>,
}

struct Workspace<'a, P: Problem + ?Sized> {
    problem: &'a P,
    settings: &'a LmSettings,
    bounds: &'a Bounds,
    evaluations: usize,
    scratch: Vec<f64>,
}

impl<P: Problem + ?Sized> Workspace<'_, P> {
    fn residuals(&mut self, p: &[f64], out: &mut DVector<f64>) -> bool {
        self.evaluations += 1;
        self.problem.residuals(p, out.as_mut_slice());
        out.iter().all(|v| v.is_finite())
    }

    fn jacobian(&mut self, p: &[f64], r: &DVector<f64>, jac: &mut DMatrix<f64>) -> bool {
        if self.problem.jacobian(p, jac) {
            return jac.iter().all(|v| v.is_finite());
        }
        forward_difference(
            self.problem,
            p,
            r.as_slice(),
            self.bounds,
            self.settings.fd_relative_step,
            &mut self.scratch,
            jac,
        );
        self.evaluations += p.len();
        jac.iter().all(|v| v.is_finite())
    }
}

/// Forward-difference Jacobian with step `rel · max(|pⱼ|, scaleⱼ)`,
/// switching to a backward step at an upper bound.
pub fn forward_difference<P: Problem + ?Sized>(
    problem: &P,
    p: &[f64],
    r0: &[f64],
    bounds: &Bounds,
    rel: f64,
    scratch: &mut Vec<f64>,
    jac: &mut DMatrix<f64>,
) {
    let m = r0.len();
    scratch.resize(m, 0.0);
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let mut h = rel * p[j].abs().max(problem.param_scale(j));
        if p[j] + h > bounds.upper[j] {
            h = -h;
        }
        q[j] = p[j] + h;
        let h_eff = q[j] - p[j];
        problem.residuals(&q, scratch);
        for i in 0..m {
            jac[(i, j)] = (scratch[i] - r0[i]) / h_eff;
        }
        q[j] = p[j];
    }
}

/// Finite-difference Jacobian of `problem` at `params`, ignoring any
/// analytic Jacobian it supplies.
pub fn numerical_jacobian<P: Problem + ?Sized>(problem: &P, params: &[f64]) -> DMatrix<f64> {
    let m = problem.num_residuals();
    let mut r0 = vec![0.0; m];
    problem.residuals(params, &mut r0);
    let mut jac = DMatrix::zeros(m, params.len());
    forward_difference(
        problem,
        params,
        &r0,
        &Bounds::unbounded(params.len()),
        LmSettings::default().fd_relative_step,
        &mut Vec::new(),
        &mut jac,
    );
    jac
}

/// Minimise `½‖r(p)‖²` from `init` within `bounds`.
pub fn least_squares<P: Problem + ?Sized>(
    problem: &P,
    init: &[f64],
    bounds: &Bounds,
    settings: &LmSettings,
) -> Result<LmSolution, LsqError> {
    let n = init.len();
    let m = problem.num_residuals();
    bounds.check(n)?;
    if m < n {
        return Err(LsqError::Underdetermined {
            residuals: m,
            params: n,
        });
    }

    let mut ws = Workspace {
        problem,
        settings,
        bounds,
        evaluations: 0,
        scratch: Vec::with_capacity(m),
    };

    let mut p = init.to_vec();
    bounds.project(&mut p);
    let mut r = DVector::zeros(m);
    if !ws.residuals(&p, &mut r) {
        return Err(LsqError::NonFiniteResidual);
    }
    let mut jac = DMatrix::zeros(m, n);
    if !ws.jacobian(&p, &r, &mut jac) {
        return Err(LsqError::NonFiniteResidual);
    }

    let initial_norm = r.norm();
    let mut cost = 0.5 * r.norm_squared();
    let mut norm_history = vec![initial_norm];
    let mut lambda = settings.initial_lambda;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let mut p_trial = vec![0.0; n];
    let mut r_trial = DVector::zeros(m);

    if cost == 0.0 {
        termination = Termination::ZeroResidual;
    }

    while termination == Termination::MaxIterations && iterations < settings.max_iterations {
        let grad = jac.tr_mul(&r);
        if grad.amax() < settings.gradient_tol {
            termination = Termination::Gradient;
            break;
        }
        let normal = jac.tr_mul(&jac);
        let diag: Vec<f64> = (0..n)
            .map(|j| {
                let d = normal[(j, j)];
                if d > 0.0 {
                    d
                } else {
                    f64::MIN_POSITIVE
                }
            })
            .collect();

        iterations += 1;
        let mut accepted = None;
        while lambda < 1e20 {
            let mut damped = normal.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * diag[j];
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= settings.lambda_up;
                continue;
            };
            let step = chol.solve(&(-&grad));
            for j in 0..n {
                p_trial[j] = p[j] + step[j];
            }
            bounds.project(&mut p_trial);
            if ws.residuals(&p_trial, &mut r_trial) {
                let trial_cost = 0.5 * r_trial.norm_squared();
                if trial_cost < cost {
                    accepted = Some(trial_cost);
                    lambda = (lambda * settings.lambda_down).max(1e-15);
                    break;
                }
            }
            lambda *= settings.lambda_up;
        }

        let Some(new_cost) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        let rel_change = (cost - new_cost) / cost;
        std::mem::swap(&mut p, &mut p_trial);
        std::mem::swap(&mut r, &mut r_trial);
        cost = new_cost;
        let norm = r.norm();
        norm_history.push(norm);
        log::trace!("lm iteration {iterations}: |r| = {norm:e}, lambda = {lambda:e}");

        if !ws.jacobian(&p, &r, &mut jac) {
            return Err(LsqError::NonFiniteResidual);
        }
        if norm <= settings.zero_residual_rtol * initial_norm {
            termination = Termination::ZeroResidual;
        } else if rel_change < settings.cost_rtol {
            termination = Termination::CostChange;
        }
    }

    let grad = jac.tr_mul(&r);
    let normal = jac.tr_mul(&jac);
    let inverse = normal
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| normal.try_inverse())
        .ok_or(LsqError::SingularJacobian)?;
    let variance = if settings.absolute_sigma {
        1.0
    } else {
        2.0 * cost / (m - n).max(1) as f64
    };
    let covariance = inverse * variance;
    let sigmas = (0..n).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();

    let solution = LmSolution {
        params: p,
        sigmas,
        covariance,
        residual_norm: (2.0 * cost).sqrt(),
        iterations,
        evaluations: ws.evaluations,
        converged: termination != Termination::MaxIterations,
        termination,
        gradient_norm: grad.amax(),
        norm_history,
    };
    if solution.converged {
        Ok(solution)
    } else {
        Err(LsqError::NotConverged(Box::new(solution)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock() -> FnProblem<impl Fn(&[f64], &mut [f64])> {
        FnProblem {
            num_residuals: 2,
            f: |p: &[f64], r: &mut [f64]| {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
            },
        }
    }

    #[test]
    fn linear_residual_converges_fast() {
        let prob = FnProblem {
            num_residuals: 1,
            f: |p: &[f64], r: &mut [f64]| r[0] = p[0] - 3.0,
        };
        let sol = least_squares(&prob, &[0.0], &Bounds::unbounded(1), &LmSettings::default())
            .unwrap();
        assert!(sol.iterations <= 3, "{} iterations", sol.iterations);
        assert!((sol.params[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let sol = least_squares(
            &rosenbrock(),
            &[-1.2, 1.0],
            &Bounds::unbounded(2),
            &LmSettings::default(),
        )
        .unwrap();
        assert!((sol.params[0] - 1.0).abs() < 1e-8, "{:?}", sol.params);
        assert!((sol.params[1] - 1.0).abs() < 1e-8, "{:?}", sol.params);
        assert!(sol.norm_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_start_rejected() {
        let prob = FnProblem {
            num_residuals: 1,
            f: |p: &[f64], r: &mut [f64]| r[0] = (p[0] - 1.0).ln(),
        };
        let err = least_squares(&prob, &[0.0], &Bounds::unbounded(1), &LmSettings::default())
            .unwrap_err();
        assert!(matches!(err, LsqError::NonFiniteResidual));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let settings = LmSettings {
            max_iterations: 2,
            ..LmSettings::default()
        };
        let err = least_squares(&rosenbrock(), &[-1.2, 1.0], &Bounds::unbounded(2), &settings)
            .unwrap_err();
        match err {
            LsqError::NotConverged(sol) => assert_eq!(sol.iterations, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bounds_are_respected() {
        // Unconstrained minimum at p = −2, box is [0, 5].
        let prob = FnProblem {
            num_residuals: 2,
            f: |p: &[f64], r: &mut [f64]| {
                r[0] = p[0] + 2.0;
                r[1] = 0.1 * (p[0] + 2.0);
            },
        };
        let bounds = Bounds {
            lower: vec![0.0],
            upper: vec![5.0],
        };
        let sol = least_squares(&prob, &[3.0], &bounds, &LmSettings::default()).unwrap();
        assert_eq!(sol.params[0], 0.0);
    }

    #[test]
    fn inconsistent_bounds_rejected() {
        let prob = FnProblem {
            num_residuals: 1,
            f: |p: &[f64], r: &mut [f64]| r[0] = p[0],
        };
        let bounds = Bounds {
            lower: vec![1.0],
            upper: vec![0.0],
        };
        assert!(matches!(
            least_squares(&prob, &[0.5], &bounds, &LmSettings::default()),
            Err(LsqError::InvalidBounds(_))
        ));
    }

    #[test]
    fn linear_fit_covariance_matches_closed_form() {
        // y = a + b x with fixed residual pattern: compare with OLS formulas.
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, x)| 1.0 + 2.0 * x + if k % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let prob = FnProblem {
            num_residuals: xs.len(),
            f: |p: &[f64], r: &mut [f64]| {
                for i in 0..xs.len() {
                    r[i] = p[0] + p[1] * xs[i] - ys[i];
                }
            },
        };
        let sol = least_squares(&prob, &[0.0, 0.0], &Bounds::unbounded(2), &LmSettings::default())
            .unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let resid: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (sol.params[0] + sol.params[1] * x - y).powi(2))
            .sum();
        let s2 = resid / (n - 2.0);
        let sigma_b = (s2 / sxx).sqrt();
        assert!((sol.sigmas[1] / sigma_b - 1.0).abs() < 1e-6);
    }
}
