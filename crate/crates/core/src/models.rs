//! Diffusion models `dX = b(X, alpha) dt + eps * sigma(X, beta) dW`.
//!
//! A [`ModelSpec`] bundles the coefficient evaluators with dimensions, the
//! initial state, the horizon and the compact parameter boxes. Three models
//! are built in ([`BuiltinModel`]); anything else plugs in through
//! [`Equations`] and the [`Registry`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{Jet, Real, Scalar};

/// Coefficient evaluators of a model. Implementations must be pure.
///
/// `diffusion` writes the `d x r` matrix row-major into `out`.
pub trait Equations<T: Scalar>: Send + Sync {
    fn drift(&self, x: &[T], alpha: &[T], out: &mut [T]);

    fn diffusion(&self, x: &[T], beta: &[T], out: &mut [T]);

    /// Analytic `d x d` Jacobian of the drift in `x`, row-major. Returns
    /// `false` when not provided.
    fn drift_jacobian_x(&self, _x: &[T], _alpha: &[T], _out: &mut [T]) -> bool {
        false
    }

    /// Drift evaluated on Taylor series. Returns `false` when not provided;
    /// the generator then falls back to finite differences.
    fn drift_series(&self, _x: &[Jet<T>], _alpha: &[Jet<T>], _out: &mut [Jet<T>]) -> bool {
        false
    }

    /// True when `sigma` is the identity for every state and parameter.
    fn unit_diffusion(&self) -> bool {
        false
    }
}

/// Product of closed intervals `[lo_i, hi_i]` with `lo_i < hi_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Scalar> ParamBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidBox {
                what: "box".into(),
                reason: format!("{} lower bounds but {} upper bounds", lo.len(), hi.len()),
            });
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox {
                    what: format!("coordinate {}", i + 1),
                    reason: format!("need lo < hi, got [{l}, {h}]"),
                });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_pairs(pairs: &[(T, T)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn cube(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn empty() -> Self {
        Self {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lo
    }

    pub fn upper(&self) -> &[T] {
        &self.hi
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn project(&self, x: &mut [T]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.max(*l).min(*h);
        }
    }

    pub fn projected(&self, x: &[T]) -> Vec<T> {
        let mut y = x.to_vec();
        self.project(&mut y);
        y
    }

    pub fn midpoint(&self) -> Vec<T> {
        let half = T::c(0.5);
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| half * (l + h)).collect()
    }

    /// Sub-box on the given coordinates.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            lo: idx.iter().map(|&i| self.lo[i]).collect(),
            hi: idx.iter().map(|&i| self.hi[i]).collect(),
        }
    }

    /// Point at relative position `u in [0,1]^dim` inside the box.
    pub fn lerp(&self, u: &[f64]) -> Vec<T> {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(u)
            .map(|((&l, &h), &t)| l + (h - l) * T::c(t))
            .collect()
    }
}

/// Model dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// State dimension.
    pub d: usize,
    /// Wiener dimension.
    pub r: usize,
    /// Drift parameter dimension.
    pub p: usize,
    /// Diffusion parameter dimension.
    pub q: usize,
}

/// A fully specified small-dispersion diffusion model.
#[derive(Clone)]
pub struct ModelSpec<T: Scalar> {
    pub name: String,
    pub dims: Dims,
    pub x0: Vec<T>,
    pub horizon: T,
    pub box_alpha: ParamBox<T>,
    pub box_beta: ParamBox<T>,
    /// Drift and diffusion read the same parameter vector (`p == q`).
    pub shared_params: bool,
    equations: Arc<dyn Equations<T>>,
}

impl<T: Scalar> fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("shared_params", &self.shared_params)
            .finish()
    }
}

impl<T: Scalar> ModelSpec<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        x0: Vec<T>,
        horizon: T,
        box_alpha: ParamBox<T>,
        box_beta: ParamBox<T>,
        shared_params: bool,
        equations: Arc<dyn Equations<T>>,
    ) -> Result<Self> {
        if dims.d == 0 || dims.r == 0 {
            return Err(Error::InvalidArgument("state and Wiener dimensions must be positive".into()));
        }
        if x0.len() != dims.d {
            return Err(Error::dim("x0", dims.d, x0.len()));
        }
        if box_alpha.dim() != dims.p {
            return Err(Error::dim("alpha box", dims.p, box_alpha.dim()));
        }
        if box_beta.dim() != dims.q {
            return Err(Error::dim("beta box", dims.q, box_beta.dim()));
        }
        if shared_params && dims.p != dims.q {
            return Err(Error::InvalidArgument(format!(
                "shared parameters need p == q, got p = {}, q = {}",
                dims.p, dims.q
            )));
        }
        if !(horizon > T::zero()) {
            return Err(Error::InvalidArgument("horizon T must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dims,
            x0,
            horizon,
            box_alpha,
            box_beta,
            shared_params,
            equations,
        })
    }

    pub fn equations(&self) -> &Arc<dyn Equations<T>> {
        &self.equations
    }

    /// Length of the full parameter vector: `p + q`, or `p` when shared.
    pub fn theta_len(&self) -> usize {
        if self.shared_params {
            self.dims.p
        } else {
            self.dims.p + self.dims.q
        }
    }

    /// Splits `theta` into `(alpha, beta)`; with shared parameters both are
    /// the whole vector.
    pub fn split_theta<'a>(&self, theta: &'a [T]) -> Result<(&'a [T], &'a [T])> {
        if theta.len() != self.theta_len() {
            return Err(Error::dim("theta", self.theta_len(), theta.len()));
        }
        if self.shared_params {
            Ok((theta, theta))
        } else {
            Ok(theta.split_at(self.dims.p))
        }
    }

    pub fn theta_in_box(&self, theta: &[T]) -> bool {
        match self.split_theta(theta) {
            Ok((a, b)) => self.box_alpha.contains(a) && self.box_beta.contains(b),
            Err(_) => false,
        }
    }

    #[inline]
    pub fn drift(&self, x: &[T], alpha: &[T], out: &mut [T]) {
        self.equations.drift(x, alpha, out)
    }

    pub fn drift_vec(&self, x: &[T], alpha: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dims.d];
        self.drift(x, alpha, &mut out);
        out
    }

    #[inline]
    pub fn diffusion(&self, x: &[T], beta: &[T], out: &mut [T]) {
        self.equations.diffusion(x, beta, out)
    }

    pub fn diffusion_matrix(&self, x: &[T], beta: &[T]) -> Matrix<T> {
        let mut out = vec![T::zero(); self.dims.d * self.dims.r];
        self.diffusion(x, beta, &mut out);
        Matrix::from_row_major(self.dims.d, self.dims.r, out)
    }

    pub fn has_unit_diffusion(&self) -> bool {
        self.equations.unit_diffusion()
    }

    pub fn has_series_drift(&self) -> bool {
        let d = self.dims.d;
        let x: Vec<Jet<T>> = self.x0.iter().map(|&v| Jet::constant(v, 1)).collect();
        let a: Vec<Jet<T>> = self.box_alpha.midpoint().into_iter().map(|v| Jet::constant(v, 1)).collect();
        let mut out = vec![Jet::constant(T::zero(), 1); d];
        self.equations.drift_series(&x, &a, &mut out)
    }

    /// `sigma sigma^T (x, beta)` written row-major (`d x d`) into `out`;
    /// `scratch` must hold `d * r` values.
    #[inline]
    pub fn sigma_sigma_t_into(&self, x: &[T], beta: &[T], scratch: &mut [T], out: &mut [T]) {
        let (d, r) = (self.dims.d, self.dims.r);
        if self.has_unit_diffusion() {
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = if i == j { T::one() } else { T::zero() };
                }
            }
            return;
        }
        self.diffusion(x, beta, scratch);
        for i in 0..d {
            for j in 0..=i {
                let mut s = T::zero();
                for k in 0..r {
                    s += scratch[i * r + k] * scratch[j * r + k];
                }
                out[i * d + j] = s;
                out[j * d + i] = s;
            }
        }
    }

    pub fn sigma_sigma_t(&self, x: &[T], beta: &[T]) -> Matrix<T> {
        let d = self.dims.d;
        let mut scratch = vec![T::zero(); d * self.dims.r];
        let mut out = vec![T::zero(); d * d];
        self.sigma_sigma_t_into(x, beta, &mut scratch, &mut out);
        Matrix::from_row_major(d, d, out)
    }

    /// Analytic drift Jacobian in `x` when the model supplies one.
    pub fn analytic_drift_jacobian(&self, x: &[T], alpha: &[T]) -> Option<Matrix<T>> {
        let d = self.dims.d;
        let mut out = vec![T::zero(); d * d];
        if self.equations.drift_jacobian_x(x, alpha, &mut out) {
            Some(Matrix::from_row_major(d, d, out))
        } else {
            None
        }
    }

    /// Central-difference drift Jacobian in `x`.
    pub fn fd_drift_jacobian(&self, x: &[T], alpha: &[T]) -> Matrix<T> {
        crate::generator::fd_jacobian(x, self.dims.d, |y, out| self.drift(y, alpha, out))
    }

    /// Central-difference derivative of the drift in `alpha`: column `i`
    /// holds `d b / d alpha_i` (a `d x p` matrix).
    pub fn drift_param_jacobian(&self, x: &[T], alpha: &[T]) -> Matrix<T> {
        let (d, p) = (self.dims.d, self.dims.p);
        let mut jac = Matrix::zeros(d, p);
        let mut a = alpha.to_vec();
        let mut fp = vec![T::zero(); d];
        let mut fm = vec![T::zero(); d];
        for i in 0..p {
            let h = T::fd_step() * T::one().max(alpha[i].abs());
            let orig = a[i];
            a[i] = orig + h;
            self.drift(x, &a, &mut fp);
            a[i] = orig - h;
            self.drift(x, &a, &mut fm);
            a[i] = orig;
            let inv = T::one() / (h + h);
            for r in 0..d {
                jac[(r, i)] = (fp[r] - fm[r]) * inv;
            }
        }
        jac
    }

    /// Central-difference derivatives of `sigma sigma^T` in each `beta_j`.
    pub fn sigma_sigma_t_param_derivatives(&self, x: &[T], beta: &[T]) -> Vec<Matrix<T>> {
        let mut b = beta.to_vec();
        (0..beta.len())
            .map(|j| {
                let h = T::fd_step() * T::one().max(beta[j].abs());
                let orig = b[j];
                b[j] = orig + h;
                let plus = self.sigma_sigma_t(x, &b);
                b[j] = orig - h;
                let minus = self.sigma_sigma_t(x, &b);
                b[j] = orig;
                plus.sub(&minus).scaled(T::one() / (h + h))
            })
            .collect()
    }
}

/// Overrides applied on top of a built-in model's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides<T> {
    pub x0: Option<Vec<T>>,
    pub horizon: Option<T>,
    pub box_alpha: Option<Vec<(T, T)>>,
    pub box_beta: Option<Vec<(T, T)>>,
}

/// The models used in the simulation studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinModel {
    /// Two-dimensional model with four drift and two diffusion parameters.
    Model1,
    /// Small-noise SIR epidemic with shared `(beta, gamma)`.
    Sir,
    /// Three-dimensional model with unit diffusion, six drift parameters.
    Model3,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 3] = [BuiltinModel::Model1, BuiltinModel::Sir, BuiltinModel::Model3];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinModel::Model1 => "model1",
            BuiltinModel::Sir => "sir",
            BuiltinModel::Model3 => "model3",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn default_theta(self) -> Vec<f64> {
        match self {
            BuiltinModel::Model1 => vec![3.0, 6.0, 5.0, 4.0, 1.0, 0.5],
            BuiltinModel::Sir => vec![1.2, 1.0],
            BuiltinModel::Model3 => vec![3.0, 7.0, 2.0, 8.0, 1.0, 6.0],
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            BuiltinModel::Model1 => 0.01,
            BuiltinModel::Sir => 1e-4,
            BuiltinModel::Model3 => 0.001,
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            BuiltinModel::Model1 => 1000,
            BuiltinModel::Sir => 360,
            BuiltinModel::Model3 => 100,
        }
    }

    pub fn default_horizon(self) -> f64 {
        match self {
            BuiltinModel::Sir => 12.0,
            _ => 1.0,
        }
    }

    /// Balance coefficient used for this model in the studies.
    pub fn default_rho(self) -> f64 {
        match self {
            BuiltinModel::Model1 => 1.0,
            BuiltinModel::Sir => 4.0,
            BuiltinModel::Model3 => 2.0,
        }
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn model1_drift<S: Real>(x: &[S], a: &[S], out: &mut [S]) {
    let one = S::lit(1.0);
    let two = S::lit(2.0);
    out[0] = -(a[0] * x[0]) + two * (one + a[1] * x[1]).cos();
    out[1] = two * (one + a[2] * x[0]).sin() - a[3] * x[1];
}

fn sir_drift<S: Real>(x: &[S], a: &[S], out: &mut [S]) {
    let infection = a[0] * x[0] * x[1];
    out[0] = -infection;
    out[1] = infection - a[1] * x[1];
}

fn model3_drift<S: Real>(x: &[S], a: &[S], out: &mut [S]) {
    let five = S::lit(5.0);
    out[0] = S::lit(1.0) - a[0] * x[0] - five * (a[1] * x[1] * x[1]).sin();
    out[1] = S::lit(2.0) - a[2] * x[1] - five * (a[3] * x[2] * x[2]).sin();
    out[2] = S::lit(3.0) - a[4] * x[2] - five * (a[5] * x[0] * x[0]).sin();
}

struct Model1;
struct Sir;
struct Model3;
struct OrnsteinUhlenbeck;

impl<T: Scalar + Real> Equations<T> for Model1 {
    fn drift(&self, x: &[T], alpha: &[T], out: &mut [T]) {
        model1_drift(x, alpha, out)
    }

    fn diffusion(&self, x: &[T], beta: &[T], out: &mut [T]) {
        let one = T::one();
        out[0] = beta[0] / (one + x[0] * x[0]);
        out[1] = -T::c(0.1);
        out[2] = T::c(0.1);
        out[3] = beta[1] / (one + x[1] * x[1]);
    }

    fn drift_jacobian_x(&self, x: &[T], a: &[T], out: &mut [T]) -> bool {
        let one = T::one();
        let two = T::c(2.0);
        out[0] = -a[0];
        out[1] = -two * a[1] * Float::sin(one + a[1] * x[1]);
        out[2] = two * a[2] * Float::cos(one + a[2] * x[0]);
        out[3] = -a[3];
        true
    }

    fn drift_series(&self, x: &[Jet<T>], alpha: &[Jet<T>], out: &mut [Jet<T>]) -> bool {
        model1_drift(x, alpha, out);
        true
    }
}

impl<T: Scalar + Real> Equations<T> for Sir {
    fn drift(&self, x: &[T], alpha: &[T], out: &mut [T]) {
        sir_drift(x, alpha, out)
    }

    /// Radicands are clamped at zero so the evaluator is total.
    fn diffusion(&self, x: &[T], beta: &[T], out: &mut [T]) {
        let infection = Float::sqrt((beta[0] * x[0] * x[1]).max(T::zero()));
        let recovery = Float::sqrt((beta[1] * x[1]).max(T::zero()));
        out[0] = infection;
        out[1] = T::zero();
        out[2] = -infection;
        out[3] = recovery;
    }

    fn drift_jacobian_x(&self, x: &[T], a: &[T], out: &mut [T]) -> bool {
        out[0] = -a[0] * x[1];
        out[1] = -a[0] * x[0];
        out[2] = a[0] * x[1];
        out[3] = a[0] * x[0] - a[1];
        true
    }

    fn drift_series(&self, x: &[Jet<T>], alpha: &[Jet<T>], out: &mut [Jet<T>]) -> bool {
        sir_drift(x, alpha, out);
        true
    }
}

impl<T: Scalar + Real> Equations<T> for Model3 {
    fn drift(&self, x: &[T], alpha: &[T], out: &mut [T]) {
        model3_drift(x, alpha, out)
    }

    fn diffusion(&self, _x: &[T], _beta: &[T], out: &mut [T]) {
        for i in 0..3 {
            for j in 0..3 {
                out[i * 3 + j] = if i == j { T::one() } else { T::zero() };
            }
        }
    }

    fn drift_jacobian_x(&self, x: &[T], a: &[T], out: &mut [T]) -> bool {
        let ten = T::c(10.0);
        out.iter_mut().for_each(|v| *v = T::zero());
        out[0] = -a[0];
        out[1] = -ten * a[1] * x[1] * Float::cos(a[1] * x[1] * x[1]);
        out[4] = -a[2];
        out[5] = -ten * a[3] * x[2] * Float::cos(a[3] * x[2] * x[2]);
        out[6] = -ten * a[5] * x[0] * Float::cos(a[5] * x[0] * x[0]);
        out[8] = -a[4];
        true
    }

    fn drift_series(&self, x: &[Jet<T>], alpha: &[Jet<T>], out: &mut [Jet<T>]) -> bool {
        model3_drift(x, alpha, out);
        true
    }

    fn unit_diffusion(&self) -> bool {
        true
    }
}

impl<T: Scalar + Real> Equations<T> for OrnsteinUhlenbeck {
    fn drift(&self, x: &[T], alpha: &[T], out: &mut [T]) {
        out[0] = -alpha[0] * x[0];
    }

    fn diffusion(&self, _x: &[T], beta: &[T], out: &mut [T]) {
        out[0] = beta[0];
    }

    fn drift_jacobian_x(&self, _x: &[T], alpha: &[T], out: &mut [T]) -> bool {
        out[0] = -alpha[0];
        true
    }

    fn drift_series(&self, x: &[Jet<T>], alpha: &[Jet<T>], out: &mut [Jet<T>]) -> bool {
        out[0] = -(alpha[0] * x[0]);
        true
    }
}

fn pairs_or<T: Scalar>(given: &Option<Vec<(T, T)>>, dim: usize, lo: f64, hi: f64, what: &str) -> Result<ParamBox<T>> {
    match given {
        Some(p) => {
            if p.len() != dim {
                return Err(Error::dim(what, dim, p.len()));
            }
            ParamBox::from_pairs(p)
        }
        None if dim == 0 => Ok(ParamBox::empty()),
        None => ParamBox::cube(dim, T::c(lo), T::c(hi)),
    }
}

fn lits<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::c(x)).collect()
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Scalar>(
    name: &str,
    dims: Dims,
    x0: Vec<T>,
    horizon: f64,
    lo: f64,
    hi: f64,
    shared: bool,
    eq: Arc<dyn Equations<T>>,
    overrides: &Overrides<T>,
) -> Result<ModelSpec<T>> {
    let x0 = match &overrides.x0 {
        Some(v) => {
            if v.len() != dims.d {
                return Err(Error::dim("x0 override", dims.d, v.len()));
            }
            v.clone()
        }
        None => x0,
    };
    let horizon = overrides.horizon.unwrap_or(T::c(horizon));
    let box_alpha = pairs_or(&overrides.box_alpha, dims.p, lo, hi, "alpha box override")?;
    let box_beta = pairs_or(&overrides.box_beta, dims.q, lo, hi, "beta box override")?;
    ModelSpec::new(name, dims, x0, horizon, box_alpha, box_beta, shared, eq)
}

/// Builds one of the built-in models with optional overrides.
pub fn make_builtin<T: Scalar + Real>(model: BuiltinModel, overrides: &Overrides<T>) -> Result<ModelSpec<T>> {
    match model {
        BuiltinModel::Model1 => assemble(
            "model1",
            Dims { d: 2, r: 2, p: 4, q: 2 },
            lits(&[1.0, 1.0]),
            1.0,
            0.01,
            50.0,
            false,
            Arc::new(Model1),
            overrides,
        ),
        BuiltinModel::Sir => assemble(
            "sir",
            Dims { d: 2, r: 2, p: 2, q: 2 },
            lits(&[0.99999, 0.00001]),
            12.0,
            0.01,
            100.0,
            true,
            Arc::new(Sir),
            overrides,
        ),
        BuiltinModel::Model3 => assemble(
            "model3",
            Dims { d: 3, r: 3, p: 6, q: 0 },
            lits(&[1.0, 1.0, 1.0]),
            1.0,
            0.01,
            30.0,
            false,
            Arc::new(Model3),
            overrides,
        ),
    }
}

/// Builds a built-in model by name.
pub fn make_builtin_by_name<T: Scalar + Real>(name: &str, overrides: &Overrides<T>) -> Result<ModelSpec<T>> {
    make_builtin(BuiltinModel::from_name(name)?, overrides)
}

/// Scalar Ornstein-Uhlenbeck model `dX = -alpha X dt + eps * beta dW`,
/// `x0 = 1`, `T = 1`, boxes `[0.01, 10]`.
pub fn ornstein_uhlenbeck<T: Scalar + Real>(overrides: &Overrides<T>) -> Result<ModelSpec<T>> {
    assemble(
        "ou",
        Dims { d: 1, r: 1, p: 1, q: 1 },
        lits(&[1.0]),
        1.0,
        0.01,
        10.0,
        false,
        Arc::new(OrnsteinUhlenbeck),
        overrides,
    )
}

pub type ModelFactory = fn(&Overrides<f64>) -> Result<ModelSpec<f64>>;

/// Name-keyed collection of model factories (built-ins plus plug-ins).
#[derive(Clone)]
pub struct Registry {
    factories: BTreeMap<String, ModelFactory>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("model1", |o| make_builtin(BuiltinModel::Model1, o));
        r.register("sir", |o| make_builtin(BuiltinModel::Sir, o));
        r.register("model3", |o| make_builtin(BuiltinModel::Model3, o));
        r.register("ou", ornstein_uhlenbeck);
        r
    }
}

impl Registry {
    pub fn register(&mut self, name: &str, factory: ModelFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(|s| s.as_str())
    }

    pub fn build(&self, name: &str, overrides: &Overrides<f64>) -> Result<ModelSpec<f64>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))?;
        f(overrides)
    }
}

/// Per-state outcome of [`validate_model`].
#[derive(Clone, Debug)]
pub struct ProbeReport<T> {
    pub state: Vec<T>,
    pub min_eigenvalue: T,
    pub finite: bool,
}

/// Numeric check of the regularity conditions along a set of probe states.
#[derive(Clone, Debug)]
pub struct ValidationReport<T> {
    pub probes: Vec<ProbeReport<T>>,
    pub alpha_in_box: bool,
    pub beta_in_box: bool,
    pub warnings: Vec<String>,
}

impl<T: Scalar> ValidationReport<T> {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.probes
            .iter()
            .map(|p| p.min_eigenvalue)
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

/// Eigenvalue floor below which `sigma sigma^T` counts as singular.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Checks finiteness, positive definiteness of `sigma sigma^T` and parameter
/// membership. Never fails; problems are reported as warnings.
pub fn validate_model<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], beta: &[T], probes: &[Vec<T>]) -> ValidationReport<T> {
    let mut warnings = Vec::new();
    let alpha_in_box = model.box_alpha.contains(alpha);
    let beta_in_box = model.box_beta.contains(beta);
    if !alpha_in_box {
        warnings.push("alpha outside its box".to_string());
    }
    if !beta_in_box {
        warnings.push("beta outside its box".to_string());
    }
    let d = model.dims.d;
    let mut reports = Vec::with_capacity(probes.len());
    for (i, x) in probes.iter().enumerate() {
        if x.len() != d {
            warnings.push(format!("probe {i} has dimension {} (expected {d})", x.len()));
            continue;
        }
        let b = model.drift_vec(x, alpha);
        let sig = model.diffusion_matrix(x, beta);
        let finite = b.iter().all(|v| v.is_finite()) && sig.is_finite();
        let ss = model.sigma_sigma_t(x, beta);
        let min_eig = if ss.is_finite() {
            ss.symmetric_eigenvalues()[0]
        } else {
            T::nan()
        };
        if !finite {
            warnings.push(format!("non-finite coefficients at probe {i} ({x:?})"));
        }
        if !(min_eig > T::c(PD_TOLERANCE)) {
            warnings.push(format!(
                "sigma sigma^T singular or indefinite at probe {i} ({x:?}): min eigenvalue {min_eig:e}"
            ));
        }
        reports.push(ProbeReport {
            state: x.clone(),
            min_eigenvalue: min_eig,
            finite,
        });
    }
    ValidationReport {
        probes: reports,
        alpha_in_box,
        beta_in_box,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m1() -> ModelSpec<f64> {
        make_builtin(BuiltinModel::Model1, &Overrides::default()).unwrap()
    }

    #[test]
    fn model1_drift_by_substitution() {
        let b = m1().drift_vec(&[1.0, 1.0], &[3.0, 6.0, 5.0, 4.0]);
        assert_relative_eq!(b[0], 2.0 * 7f64.cos() - 3.0, epsilon = 1e-15);
        assert_relative_eq!(b[1], 2.0 * 6f64.sin() - 4.0, epsilon = 1e-15);
    }

    #[test]
    fn sir_drift_by_substitution() {
        let m = make_builtin(BuiltinModel::Sir, &Overrides::<f64>::default()).unwrap();
        let b = m.drift_vec(&[0.5, 0.1], &[1.2, 1.0]);
        assert_relative_eq!(b[0], -0.06, epsilon = 1e-15);
        assert_relative_eq!(b[1], -0.04, epsilon = 1e-15);
        assert!(m.shared_params);
        assert_eq!(m.theta_len(), 2);
    }

    #[test]
    fn model3_diffusion_is_identity() {
        let m = make_builtin(BuiltinModel::Model3, &Overrides::<f64>::default()).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -3.0, 7.5]] {
            let s = m.diffusion_matrix(&x, &[]);
            assert_eq!(s, Matrix::identity(3));
        }
        assert_eq!(m.dims.q, 0);
    }

    #[test]
    fn builtin_shapes_and_defaults() {
        let m = m1();
        assert_eq!(m.dims, Dims { d: 2, r: 2, p: 4, q: 2 });
        assert_eq!(m.x0, vec![1.0, 1.0]);
        assert_eq!(m.box_alpha.lower(), &[0.01; 4]);
        assert_eq!(m.box_beta.upper(), &[50.0; 2]);
        let s = make_builtin(BuiltinModel::Sir, &Overrides::<f64>::default()).unwrap();
        assert_eq!(s.x0, vec![0.99999, 0.00001]);
        assert_eq!(s.box_alpha.upper(), &[100.0; 2]);
        let m3 = make_builtin(BuiltinModel::Model3, &Overrides::<f64>::default()).unwrap();
        assert_eq!(m3.box_alpha.upper(), &[30.0; 6]);
    }

    #[test]
    fn override_dimension_mismatch_is_rejected() {
        let o = Overrides {
            x0: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(matches!(make_builtin(BuiltinModel::Model1, &o), Err(Error::Dimension { .. })));
        let o = Overrides {
            box_alpha: Some(vec![(0.0, 1.0); 3]),
            ..Default::default()
        };
        assert!(make_builtin(BuiltinModel::Model1, &o).is_err());
        assert!(matches!(make_builtin_by_name::<f64>("model9", &Overrides::default()), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn empty_interval_is_rejected() {
        assert!(ParamBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(ParamBox::new(vec![2.0], vec![1.0]).is_err());
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let cases: Vec<(ModelSpec<f64>, Vec<f64>, Vec<f64>)> = vec![
            (m1(), vec![0.7, -1.2], vec![3.0, 6.0, 5.0, 4.0]),
            (
                make_builtin(BuiltinModel::Sir, &Overrides::default()).unwrap(),
                vec![0.8, 0.15],
                vec![1.2, 1.0],
            ),
            (
                make_builtin(BuiltinModel::Model3, &Overrides::default()).unwrap(),
                vec![0.9, 1.1, 0.4],
                vec![3.0, 7.0, 2.0, 8.0, 1.0, 6.0],
            ),
        ];
        for (m, x, a) in cases {
            let an = m.analytic_drift_jacobian(&x, &a).unwrap();
            let fd = m.fd_drift_jacobian(&x, &a);
            let scale = an.max_abs().max(1.0);
            for i in 0..m.dims.d {
                for j in 0..m.dims.d {
                    assert!((an[(i, j)] - fd[(i, j)]).abs() <= 1e-6 * scale, "{} ({i},{j})", m.name);
                }
            }
        }
    }

    #[test]
    fn validation_model1_positive_definite() {
        let m = m1();
        let rep = validate_model(&m, &[3.0, 6.0, 5.0, 4.0], &[1.0, 0.5], &[vec![1.0, 1.0]]);
        // sigma = [[1/2, -0.1], [0.1, 1/4]]
        let s = Matrix::from_row_major(2, 2, vec![0.5, -0.1, 0.1, 0.25]);
        let ss = s.matmul(&s.transpose());
        let tr = ss[(0, 0)] + ss[(1, 1)];
        let det = ss[(0, 0)] * ss[(1, 1)] - ss[(0, 1)] * ss[(1, 0)];
        let lmin: f64 = 0.5 * (tr - f64::sqrt(tr * tr - 4.0 * det));
        assert!(rep.is_clean(), "{:?}", rep.warnings);
        assert_relative_eq!(rep.min_eigenvalue(), lmin, epsilon = 1e-14);
        assert!(lmin > 0.0);
    }

    #[test]
    fn validation_flags_singular_sir_state() {
        let m = make_builtin(BuiltinModel::Sir, &Overrides::<f64>::default()).unwrap();
        let rep = validate_model(&m, &[1.2, 1.0], &[1.2, 1.0], &[vec![0.0, 0.0]]);
        assert!(!rep.is_clean());
        assert_eq!(rep.probes[0].min_eigenvalue, 0.0);
    }

    #[test]
    fn validation_model3_min_eigenvalue_one() {
        let m = make_builtin(BuiltinModel::Model3, &Overrides::<f64>::default()).unwrap();
        let rep = validate_model(&m, &[3.0, 7.0, 2.0, 8.0, 1.0, 6.0], &[], &[vec![0.3, -2.0, 4.0]]);
        assert!(rep.is_clean());
        assert_relative_eq!(rep.min_eigenvalue(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn registry_knows_builtins_and_plugins() {
        let reg = Registry::default();
        let names: Vec<&str> = reg.names().collect();
        assert_eq!(names, vec!["model1", "model3", "ou", "sir"]);
        let ou = reg.build("ou", &Overrides::default()).unwrap();
        assert_eq!(ou.dims.d, 1);
        assert!(reg.build("nope", &Overrides::default()).is_err());
    }

    #[test]
    fn single_precision_builtin() {
        let m = make_builtin::<f32>(BuiltinModel::Model1, &Overrides::default()).unwrap();
        let b = m.drift_vec(&[1.0, 1.0], &[3.0, 6.0, 5.0, 4.0]);
        assert!((b[0] - (2.0 * 7f32.cos() - 3.0)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn builtin_outputs_finite_and_shaped(
            which in 0usize..3,
            u in proptest::collection::vec(0.0f64..1.0, 6),
            xs in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let model = make_builtin::<f64>(BuiltinModel::ALL[which], &Overrides::default()).unwrap();
            let d = model.dims.d;
            let alpha = model.box_alpha.lerp(&u[..model.dims.p]);
            let beta = model.box_beta.lerp(&u[..model.dims.q]);
            let beta = if model.shared_params { alpha.clone() } else { beta };
            let x: Vec<f64> = if model.name == "sir" {
                xs[..2].iter().map(|v| (v + 3.0) / 6.0).collect()
            } else {
                xs[..d].to_vec()
            };
            let b = model.drift_vec(&x, &alpha);
            prop_assert_eq!(b.len(), d);
            prop_assert!(b.iter().all(|v| v.is_finite()));
            let s = model.diffusion_matrix(&x, &beta);
            prop_assert_eq!((s.rows(), s.cols()), (d, model.dims.r));
            prop_assert!(s.is_finite());
        }

        #[test]
        fn sir_sigma_sigma_t_identity(s in 0.0f64..1.0, i in 0.0f64..1.0, beta in 0.01f64..100.0, gamma in 0.01f64..100.0) {
            let m = make_builtin::<f64>(BuiltinModel::Sir, &Overrides::default()).unwrap();
            let ss = m.sigma_sigma_t(&[s, i], &[beta, gamma]);
            let bsi = beta * s * i;
            let expect = [bsi, -bsi, -bsi, bsi + gamma * i];
            for (k, e) in expect.iter().enumerate() {
                prop_assert!((ss.as_slice()[k] - e).abs() <= 1e-12 * (1.0 + e.abs()));
            }
        }
    }
}
