//! Limit objects along the noise-free path `X^0`: the information and Gram
//! matrices, asymptotic covariances and the limit contrasts.
//!
//! Integrals use composite Simpson weights on a uniform grid of `quad_steps`
//! intervals; `X^0` comes from RK4 with substeps inside each interval.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::models::ModelSpec;
use crate::optimizer::{minimize_restricted, OptimOptions};
use crate::paths::solve_ode;
use crate::scalar::Scalar;

pub const DEFAULT_QUAD_STEPS: usize = 2000;

/// Smallest singular value accepted when inverting a limit matrix.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct InfoMatrices<T> {
    /// `int db^T S^{-1} db`, `p x p`.
    pub i_b: Matrix<T>,
    /// `(1/2T) int tr(dS S^{-1} dS S^{-1})`, `q x q`.
    pub i_sigma: Matrix<T>,
    /// `int db^T db`.
    pub j_b: Matrix<T>,
    /// `int db^T S db`.
    pub k_b: Matrix<T>,
    pub quad_steps: usize,
    pub theta0: Vec<T>,
    pub shared_params: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovTarget {
    /// `diag(I_b^{-1}, I_sigma^{-1})`.
    Final,
    /// `J_b^{-1} K_b J_b^{-1}`.
    Stage1Drift,
    /// `I_b^{-1}`.
    Drift,
    /// `I_sigma^{-1}`.
    Diffusion,
}

/// RK4 substeps per quadrature interval.
const ODE_SUBSTEPS: usize = 8;

/// Composite Simpson weights on `steps` uniform intervals; an odd final
/// interval gets the trapezoid rule.
fn quadrature_weights<T: Scalar>(steps: usize, horizon: T) -> Vec<T> {
    let h = horizon / T::from_usize_lossy(steps);
    let third = h / T::c(3.0);
    let mut w = vec![T::zero(); steps + 1];
    let even = steps - steps % 2;
    for i in (0..even).step_by(2) {
        w[i] += third;
        w[i + 1] += T::c(4.0) * third;
        w[i + 2] += third;
    }
    if even < steps {
        w[steps - 1] += h * T::c(0.5);
        w[steps] += h * T::c(0.5);
    }
    w
}

/// `X^0`, quadrature weights and `S(X^0, beta0)` with its Cholesky factor at
/// every node.
struct LimitPath<T: Scalar> {
    grid: Vec<T>,
    nodes: Vec<Vec<T>>,
    weights: Vec<T>,
    sigma0: Vec<Matrix<T>>,
    chol0: Vec<Cholesky<T>>,
}

impl<T: Scalar> LimitPath<T> {
    fn new(model: &ModelSpec<T>, alpha0: &[T], beta0: &[T], steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("quadrature needs at least one interval".into()));
        }
        let path = solve_ode(model, alpha0, steps * ODE_SUBSTEPS)?;
        let nodes: Vec<Vec<T>> = (0..=steps).map(|i| path.state(i * ODE_SUBSTEPS).to_vec()).collect();
        let grid: Vec<T> = (0..=steps).map(|i| path.grid[i * ODE_SUBSTEPS]).collect();
        let weights = quadrature_weights(steps, model.horizon);
        let mut sigma0 = Vec::with_capacity(steps + 1);
        let mut chol0 = Vec::with_capacity(steps + 1);
        for (i, x) in nodes.iter().enumerate() {
            let s = model.sigma_sigma_t(x, beta0);
            let c = Cholesky::new(&s).ok_or(Error::SingularDiffusion { time: grid[i].as_f64() })?;
            sigma0.push(s);
            chol0.push(c);
        }
        Ok(Self {
            grid,
            nodes,
            weights,
            sigma0,
            chol0,
        })
    }
}

fn check_theta<T: Scalar>(model: &ModelSpec<T>, theta0: &[T]) -> Result<()> {
    if !model.theta_in_box(theta0) {
        return Err(Error::InvalidArgument("theta0 lies outside the parameter box".into()));
    }
    Ok(())
}

/// Computes `I_b`, `I_sigma`, `J_b`, `K_b` at `theta0` with `quad_steps`
/// quadrature intervals.
pub fn info_matrices<T: Scalar>(model: &ModelSpec<T>, theta0: &[T], quad_steps: usize) -> Result<InfoMatrices<T>> {
    check_theta(model, theta0)?;
    let (alpha0, beta0) = model.split_theta(theta0)?;
    let lp = LimitPath::new(model, alpha0, beta0, quad_steps)?;
    let (d, p, q) = (model.dims.d, model.dims.p, model.dims.q);
    let mut i_b = Matrix::zeros(p, p);
    let mut j_b = Matrix::zeros(p, p);
    let mut k_b = Matrix::zeros(p, p);
    let mut i_sigma = Matrix::zeros(q, q);
    for (node, x) in lp.nodes.iter().enumerate() {
        let w = lp.weights[node];
        let db = model.drift_param_jacobian(x, alpha0);
        let chol = &lp.chol0[node];
        let s = &lp.sigma0[node];
        let cols: Vec<Vec<T>> = (0..p).map(|i| (0..d).map(|r| db[(r, i)]).collect()).collect();
        let sinv_cols: Vec<Vec<T>> = cols.iter().map(|c| chol.solve(c)).collect();
        let s_cols: Vec<Vec<T>> = cols.iter().map(|c| s.matvec(c)).collect();
        for i in 0..p {
            for j in 0..p {
                let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
                i_b[(i, j)] += w * dot(&cols[i], &sinv_cols[j]);
                j_b[(i, j)] += w * dot(&cols[i], &cols[j]);
                k_b[(i, j)] += w * dot(&cols[i], &s_cols[j]);
            }
        }
        if q > 0 && !model.has_unit_diffusion() {
            let sinv = chol.inverse();
            let ds: Vec<Matrix<T>> = model
                .sigma_sigma_t_param_derivatives(x, beta0)
                .iter()
                .map(|m| m.matmul(&sinv))
                .collect();
            for i in 0..q {
                for j in 0..q {
                    i_sigma[(i, j)] += w * ds[i].matmul(&ds[j]).trace();
                }
            }
        }
    }
    let half_t = T::one() / (T::c(2.0) * model.horizon);
    Ok(InfoMatrices {
        i_b: i_b.symmetrized(),
        i_sigma: i_sigma.scaled(half_t).symmetrized(),
        j_b: j_b.symmetrized(),
        k_b: k_b.symmetrized(),
        quad_steps,
        theta0: theta0.to_vec(),
        shared_params: model.shared_params,
    })
}

/// Inverse of `m` after the non-degeneracy check.
pub fn checked_inverse<T: Scalar>(m: &Matrix<T>, which: &str) -> Result<Matrix<T>> {
    let smin = if m.rows() == 0 { T::infinity() } else { m.min_singular_value() };
    if !(smin.as_f64() > SINGULAR_TOLERANCE) {
        return Err(Error::SingularInformation {
            which: which.into(),
            min_singular: smin.as_f64(),
        });
    }
    m.inverse().ok_or(Error::SingularInformation {
        which: which.into(),
        min_singular: smin.as_f64(),
    })
}

/// Asymptotic covariance of the standardized estimator
/// `(eps^{-1}(alpha - alpha0), sqrt(n)(beta - beta0))`.
pub fn asymptotic_cov<T: Scalar>(info: &InfoMatrices<T>, target: CovTarget) -> Result<Matrix<T>> {
    match target {
        CovTarget::Drift => checked_inverse(&info.i_b, "I_b"),
        CovTarget::Diffusion => checked_inverse(&info.i_sigma, "I_sigma"),
        CovTarget::Stage1Drift => {
            let ji = checked_inverse(&info.j_b, "J_b")?;
            Ok(ji.matmul(&info.k_b).matmul(&ji).symmetrized())
        }
        CovTarget::Final => {
            let a = checked_inverse(&info.i_b, "I_b")?;
            let b = checked_inverse(&info.i_sigma, "I_sigma")?;
            let (p, q) = (a.rows(), b.rows());
            let mut out = Matrix::zeros(p + q, p + q);
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] = a[(i, j)];
                }
            }
            for i in 0..q {
                for j in 0..q {
                    out[(p + i, p + j)] = b[(i, j)];
                }
            }
            Ok(out)
        }
    }
}

impl<T: Scalar> InfoMatrices<T> {
    /// Per-coordinate standard deviations of the unstandardized estimator:
    /// drift coordinates scale with `eps`, diffusion coordinates with
    /// `1/sqrt(n)`.
    pub fn theoretical_sds(&self, target: CovTarget, epsilon: f64, n: usize) -> Result<Vec<f64>> {
        let cov = asymptotic_cov(self, target)?;
        let p = self.i_b.rows();
        let rn = (n as f64).sqrt();
        Ok((0..cov.rows())
            .map(|i| {
                let sd = cov[(i, i)].as_f64().max(0.0).sqrt();
                let diffusion = match target {
                    CovTarget::Final => i >= p,
                    CovTarget::Diffusion => true,
                    _ => false,
                };
                if diffusion {
                    sd / rn
                } else {
                    sd * epsilon
                }
            })
            .collect())
    }
}

/// Values of the limit contrasts at a probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitContrasts<T> {
    /// `int |b(X^0, alpha) - b(X^0, alpha0)|^2`.
    pub u1: T,
    /// Time average of `log det(S(beta) S0^{-1}) + tr(S(beta)^{-1} S0) - d`.
    pub u2: T,
    /// `int (b - b0)^T S0^{-1} (b - b0)`.
    pub u3: T,
}

/// Evaluator of the limit contrasts for repeated probing.
pub struct LimitEvaluator<'m, T: Scalar> {
    model: &'m ModelSpec<T>,
    alpha0: Vec<T>,
    lp: LimitPath<T>,
    b0: Vec<Vec<T>>,
}

impl<'m, T: Scalar> LimitEvaluator<'m, T> {
    pub fn new(model: &'m ModelSpec<T>, theta0: &[T], quad_steps: usize) -> Result<Self> {
        check_theta(model, theta0)?;
        let (alpha0, beta0) = model.split_theta(theta0)?;
        let lp = LimitPath::new(model, alpha0, beta0, quad_steps)?;
        let b0 = lp.nodes.iter().map(|x| model.drift_vec(x, alpha0)).collect();
        Ok(Self {
            model,
            alpha0: alpha0.to_vec(),
            lp,
            b0,
        })
    }

    fn drift_gaps(&self, alpha: &[T]) -> Result<impl Iterator<Item = (usize, Vec<T>)> + '_> {
        if alpha.len() != self.alpha0.len() {
            return Err(Error::dim("alpha probe", self.alpha0.len(), alpha.len()));
        }
        let alpha = alpha.to_vec();
        Ok(self.lp.nodes.iter().enumerate().map(move |(k, x)| {
            let b = self.model.drift_vec(x, &alpha);
            (k, b.iter().zip(&self.b0[k]).map(|(u, v)| *u - *v).collect())
        }))
    }

    pub fn u1(&self, alpha: &[T]) -> Result<T> {
        Ok(self
            .drift_gaps(alpha)?
            .map(|(k, g)| self.lp.weights[k] * g.iter().map(|v| *v * *v).sum::<T>())
            .sum())
    }

    pub fn u3(&self, alpha: &[T]) -> Result<T> {
        Ok(self
            .drift_gaps(alpha)?
            .map(|(k, g)| {
                let s = self.lp.chol0[k].solve(&g);
                self.lp.weights[k] * g.iter().zip(&s).map(|(a, b)| *a * *b).sum::<T>()
            })
            .sum())
    }

    pub fn u2(&self, beta: &[T]) -> Result<T> {
        if beta.len() != self.model.dims.q {
            return Err(Error::dim("beta probe", self.model.dims.q, beta.len()));
        }
        let d = T::from_usize_lossy(self.model.dims.d);
        let mut total = T::zero();
        for (k, x) in self.lp.nodes.iter().enumerate() {
            let s = self.model.sigma_sigma_t(x, beta);
            let c = Cholesky::new(&s).ok_or(Error::SingularDiffusion {
                time: self.lp.grid[k].as_f64(),
            })?;
            let tr = c.inverse().matmul(&self.lp.sigma0[k]).trace();
            let ld = c.log_det() - self.lp.chol0[k].log_det();
            total += self.lp.weights[k] * (ld + tr - d);
        }
        Ok(total / self.model.horizon)
    }
}

/// Limit contrasts at `(alpha, beta)` relative to `theta0`.
pub fn limit_contrasts<T: Scalar>(
    model: &ModelSpec<T>,
    theta0: &[T],
    alpha: &[T],
    beta: &[T],
    quad_steps: usize,
) -> Result<LimitContrasts<T>> {
    if !model.box_alpha.contains(alpha) || !model.box_beta.contains(beta) {
        return Err(Error::InvalidArgument("probe lies outside the parameter box".into()));
    }
    let ev = LimitEvaluator::new(model, theta0, quad_steps)?;
    Ok(LimitContrasts {
        u1: ev.u1(alpha)?,
        u2: ev.u2(beta)?,
        u3: ev.u3(alpha)?,
    })
}

/// Minimizers of the limit contrasts `U_1(.; alpha0)` and `U_2(.; beta0)`
/// over the boxes restricted by the fixed coordinates: the parameters the
/// restricted estimators converge to.
pub fn null_optimal_parameters<T: Scalar>(
    model: &ModelSpec<T>,
    theta0: &[T],
    alpha_fixed: &[(usize, T)],
    beta_fixed: &[(usize, T)],
    quad_steps: usize,
    opts: &OptimOptions,
) -> Result<(Vec<T>, Vec<T>)> {
    let ev = LimitEvaluator::new(model, theta0, quad_steps)?;
    let (alpha0, beta0) = model.split_theta(theta0)?;
    let a = if alpha_fixed.is_empty() {
        alpha0.to_vec()
    } else {
        minimize_restricted(&|a: &[T]| ev.u1(a), &model.box_alpha, alpha0, alpha_fixed, opts)?.x
    };
    let b = if beta_fixed.is_empty() || model.dims.q == 0 {
        beta0.to_vec()
    } else {
        minimize_restricted(&|b: &[T]| ev.u2(b), &model.box_beta, beta0, beta_fixed, opts)?.x
    };
    Ok((a, b))
}
