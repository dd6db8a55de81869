//! Iterated reduced-generator terms `(L^0)^j b`, the corrections `Q_{l,k}`
//! and the residuals `P_{l,k}`.
//!
//! `(L^0)^j b(x)` is the `j`-th time derivative of `b` along the flow of
//! `x' = b(x)`, so `(L^0)^j b(x) = (j+1)! c_{j+1}` where `c_m` are the Taylor
//! coefficients of that flow started at `x`. When a model evaluates its
//! drift on [`Jet`]s the coefficients come out exactly from the recurrence
//! `c_{m+1} = [b(x(t))]_m / (m+1)`. Other models use nested central
//! differences `g_j = J_x[g_{j-1}] b`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::ModelSpec;
use crate::paths::ObservationSet;
use crate::scalar::{Jet, Scalar, JET_CAPACITY};

/// Largest supported order `j` (and approximation degree `v`).
pub const V_MAX: usize = 6;

/// How `(L^0)^j b` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GeneratorMethod {
    /// Taylor series when the model provides them, else finite differences.
    #[default]
    Auto,
    Series,
    FiniteDifference,
}

/// Central-difference Jacobian of `f: R^{x.len()} -> R^m` at `x`, with
/// per-coordinate step `eps^{1/3} max(1, |x_i|)`.
pub fn fd_jacobian<T: Scalar, F>(x: &[T], m: usize, mut f: F) -> Matrix<T>
where
    F: FnMut(&[T], &mut [T]),
{
    let n = x.len();
    let mut jac = Matrix::zeros(m, n);
    let mut y = x.to_vec();
    let mut fp = vec![T::zero(); m];
    let mut fm = vec![T::zero(); m];
    for i in 0..n {
        let h = T::fd_step() * T::one().max(x[i].abs());
        y[i] = x[i] + h;
        f(&y, &mut fp);
        y[i] = x[i] - h;
        f(&y, &mut fm);
        y[i] = x[i];
        let inv = T::one() / (h + h);
        for r in 0..m {
            jac[(r, i)] = (fp[r] - fm[r]) * inv;
        }
    }
    jac
}

fn factorial<T: Scalar>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_usize_lossy(i))
}

fn check_order(j: usize) -> Result<()> {
    if j > V_MAX {
        return Err(Error::InvalidArgument(format!("generator order {j} exceeds the cap {V_MAX}")));
    }
    Ok(())
}

/// Taylor coefficients `c_0 = x, c_1 = b(x), ..., c_order` of the flow of
/// `x' = b(x, alpha)` through `x`, or `None` if the model has no series
/// evaluator. `out` receives `order + 1` rows of length `d`.
pub fn flow_coefficients<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], x: &[T], order: usize) -> Option<Vec<Vec<T>>> {
    let mut scratch = SeriesScratch::new(model.dims.d, alpha, order);
    if !scratch.run(model, x) {
        return None;
    }
    Some((0..=order).map(|m| scratch.coefficient(m)).collect())
}

struct SeriesScratch<T: Scalar> {
    d: usize,
    order: usize,
    alpha: Vec<Jet<T>>,
    xs: Vec<Jet<T>>,
    bs: Vec<Jet<T>>,
    coeffs: Vec<T>,
}

impl<T: Scalar> SeriesScratch<T> {
    fn new(d: usize, alpha: &[T], order: usize) -> Self {
        debug_assert!(order < JET_CAPACITY);
        Self {
            d,
            order,
            alpha: alpha.iter().map(|&a| Jet::constant(a, 1)).collect(),
            xs: vec![Jet::constant(T::zero(), 1); d],
            bs: vec![Jet::constant(T::zero(), 1); d],
            coeffs: vec![T::zero(); (order + 1) * d],
        }
    }

    fn set_alpha(&mut self, alpha: &[T]) {
        for (j, &a) in self.alpha.iter_mut().zip(alpha) {
            *j = Jet::constant(a, 1);
        }
    }

    /// Fills `coeffs` with `c_0..c_order`; false if no series evaluator.
    fn run(&mut self, model: &ModelSpec<T>, x: &[T]) -> bool {
        let d = self.d;
        self.coeffs[..d].copy_from_slice(x);
        for k in 0..self.order {
            for i in 0..d {
                let c: Vec<T> = (0..=k).map(|m| self.coeffs[m * d + i]).collect();
                self.xs[i] = Jet::from_coefficients(&c);
            }
            if !model.equations().drift_series(&self.xs, &self.alpha, &mut self.bs) {
                return false;
            }
            let scale = T::one() / T::from_usize_lossy(k + 1);
            for i in 0..d {
                self.coeffs[(k + 1) * d + i] = self.bs[i].coeff(k) * scale;
            }
        }
        true
    }

    fn coefficient(&self, m: usize) -> Vec<T> {
        self.coeffs[m * self.d..(m + 1) * self.d].to_vec()
    }
}

fn fd_recursion<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], x: &[T], j: usize) -> Vec<T> {
    let d = model.dims.d;
    let b = model.drift_vec(x, alpha);
    if j == 0 {
        return b;
    }
    let jac = if j == 1 {
        model
            .analytic_drift_jacobian(x, alpha)
            .unwrap_or_else(|| model.fd_drift_jacobian(x, alpha))
    } else {
        fd_jacobian(x, d, |y, out| out.copy_from_slice(&fd_recursion(model, alpha, y, j - 1)))
    };
    jac.matvec(&b)
}

/// `(L^0_alpha)^j b(x, alpha)`.
pub fn iterated_generator_drift<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], x: &[T], j: usize) -> Result<Vec<T>> {
    iterated_generator_drift_with(model, alpha, x, j, GeneratorMethod::Auto)
}

/// [`iterated_generator_drift`] with an explicit evaluation method.
pub fn iterated_generator_drift_with<T: Scalar>(
    model: &ModelSpec<T>,
    alpha: &[T],
    x: &[T],
    j: usize,
    method: GeneratorMethod,
) -> Result<Vec<T>> {
    check_order(j)?;
    if x.len() != model.dims.d {
        return Err(Error::dim("state", model.dims.d, x.len()));
    }
    let out = match method {
        GeneratorMethod::FiniteDifference => fd_recursion(model, alpha, x, j),
        GeneratorMethod::Series | GeneratorMethod::Auto => match flow_coefficients(model, alpha, x, j + 1) {
            Some(c) => {
                let f: T = factorial(j + 1);
                c[j + 1].iter().map(|&v| v * f).collect()
            }
            None if method == GeneratorMethod::Series => {
                return Err(Error::Unsupported(format!("model `{}` has no series drift evaluator", model.name)));
            }
            None => fd_recursion(model, alpha, x, j),
        },
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("(L^0)^{j} b"),
            k: 0,
        });
    }
    Ok(out)
}

/// `Q_l(x) = sum_{j=1}^{l-1} h^{j+1}/(j+1)! (L^0)^j b(x)`; zero for `l <= 1`.
pub fn q_term<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], x: &[T], l: usize, h: T) -> Result<Vec<T>> {
    check_order(l)?;
    let mut exp = Expander::new(model, l, GeneratorMethod::Auto);
    let mut out = vec![T::zero(); model.dims.d];
    exp.set_alpha(alpha);
    exp.correction(model, x, alpha, h, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("Q_{l}"),
            k: 0,
        });
    }
    Ok(out)
}

/// Reusable evaluator of `Q_l` at many states for a fixed order.
pub struct Expander<T: Scalar> {
    l: usize,
    d: usize,
    mode: Mode,
    series: SeriesScratch<T>,
    b: Vec<T>,
    jac: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Zero,
    AnalyticJacobian,
    Series,
    FiniteDifference,
}

impl<T: Scalar> Expander<T> {
    pub fn new(model: &ModelSpec<T>, l: usize, method: GeneratorMethod) -> Self {
        let d = model.dims.d;
        let l = l.min(V_MAX);
        let mid = model.box_alpha.midpoint();
        let analytic = {
            let mut j = vec![T::zero(); d * d];
            model.equations().drift_jacobian_x(&model.x0, &mid, &mut j)
        };
        let series = model.has_series_drift();
        let mode = match (l, method) {
            (0 | 1, _) => Mode::Zero,
            (_, GeneratorMethod::FiniteDifference) => Mode::FiniteDifference,
            (2, _) if analytic => Mode::AnalyticJacobian,
            (_, GeneratorMethod::Series) | (_, GeneratorMethod::Auto) if series => Mode::Series,
            _ => Mode::FiniteDifference,
        };
        Self {
            l,
            d,
            mode,
            series: SeriesScratch::new(d, &mid, l),
            b: vec![T::zero(); d],
            jac: vec![T::zero(); d * d],
        }
    }

    pub fn order(&self) -> usize {
        self.l
    }

    /// Must be called whenever `alpha` changes (series mode caches it).
    pub fn set_alpha(&mut self, alpha: &[T]) {
        if self.mode == Mode::Series {
            self.series.set_alpha(alpha);
        }
    }

    /// Writes `Q_l(x)` into `out`.
    pub fn correction(&mut self, model: &ModelSpec<T>, x: &[T], alpha: &[T], h: T, out: &mut [T]) {
        let d = self.d;
        match self.mode {
            Mode::Zero => out.iter_mut().for_each(|v| *v = T::zero()),
            Mode::AnalyticJacobian => {
                model.drift(x, alpha, &mut self.b);
                model.equations().drift_jacobian_x(x, alpha, &mut self.jac);
                let s = h * h * T::c(0.5);
                for i in 0..d {
                    let mut acc = T::zero();
                    for j in 0..d {
                        acc += self.jac[i * d + j] * self.b[j];
                    }
                    out[i] = s * acc;
                }
            }
            Mode::Series => {
                self.series.run(model, x);
                out.iter_mut().for_each(|v| *v = T::zero());
                let mut hp = h;
                for m in 2..=self.l {
                    hp *= h;
                    for i in 0..d {
                        out[i] += hp * self.series.coeffs[m * d + i];
                    }
                }
            }
            Mode::FiniteDifference => {
                out.iter_mut().for_each(|v| *v = T::zero());
                for j in 1..self.l {
                    let g = fd_recursion(model, alpha, x, j);
                    let w = h.powi(j as i32 + 1) / factorial::<T>(j + 1);
                    for i in 0..d {
                        out[i] += w * g[i];
                    }
                }
            }
        }
    }

    /// Writes `h b(x) + Q_l(x)` into `out` and returns nothing; `b` is left
    /// in the internal buffer.
    pub fn expansion(&mut self, model: &ModelSpec<T>, x: &[T], alpha: &[T], h: T, out: &mut [T]) {
        let d = self.d;
        if self.mode == Mode::Series {
            self.series.run(model, x);
            let mut hp = T::one();
            out.iter_mut().for_each(|v| *v = T::zero());
            for m in 1..=self.l {
                hp *= h;
                for i in 0..d {
                    out[i] += hp * self.series.coeffs[m * d + i];
                }
            }
            return;
        }
        self.correction(model, x, alpha, h, out);
        model.drift(x, alpha, &mut self.b);
        for i in 0..d {
            out[i] += h * self.b[i];
        }
    }
}

/// Per-step `Q_{l,k}` and `P_{l,k}` for `k = 1..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorTerms<T> {
    pub l: usize,
    pub h: T,
    pub n: usize,
    pub d: usize,
    q: Vec<T>,
    p: Vec<T>,
}

impl<T: Scalar> GeneratorTerms<T> {
    /// `Q_{l,k}`, `k` in `1..=n`.
    #[inline]
    pub fn q(&self, k: usize) -> &[T] {
        &self.q[(k - 1) * self.d..k * self.d]
    }

    /// `P_{l,k}`, `k` in `1..=n`.
    #[inline]
    pub fn p(&self, k: usize) -> &[T] {
        &self.p[(k - 1) * self.d..k * self.d]
    }

    pub fn q_flat(&self) -> &[T] {
        &self.q
    }

    pub fn p_flat(&self) -> &[T] {
        &self.p
    }
}

fn check_obs<T: Scalar>(obs: &ObservationSet<T>, model: &ModelSpec<T>) -> Result<()> {
    if obs.d != model.dims.d {
        return Err(Error::dim("observation state", model.dims.d, obs.d));
    }
    Ok(())
}

/// Per-step corrections `Q_{l,k}(alpha)` evaluated at `X_{t_{k-1}}`, flat `n x d`.
pub fn q_path<T: Scalar>(obs: &ObservationSet<T>, model: &ModelSpec<T>, alpha: &[T], l: usize) -> Result<Vec<T>> {
    check_obs(obs, model)?;
    check_order(l)?;
    let (n, d, h) = (obs.n, obs.d, obs.h());
    let mut exp = Expander::new(model, l, GeneratorMethod::Auto);
    exp.set_alpha(alpha);
    let mut q = vec![T::zero(); n * d];
    for k in 1..=n {
        let out = &mut q[(k - 1) * d..k * d];
        exp.correction(model, obs.state(k - 1), alpha, h, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("Q_{l}"),
                k,
            });
        }
    }
    Ok(q)
}

/// `P_{1,k} = X_k - X_{k-1} - h b(X_{k-1})` and `P_{l,k} = P_{1,k} - Q_{l,k}`.
pub fn p_residuals<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    alpha: &[T],
    l: usize,
) -> Result<GeneratorTerms<T>> {
    if l == 0 {
        return Err(Error::InvalidArgument("order l must be at least 1".into()));
    }
    if alpha.len() != model.dims.p {
        return Err(Error::dim("alpha", model.dims.p, alpha.len()));
    }
    let q = q_path(obs, model, alpha, l)?;
    let (n, d, h) = (obs.n, obs.d, obs.h());
    let mut p = vec![T::zero(); n * d];
    let mut b = vec![T::zero(); d];
    for k in 1..=n {
        let (prev, cur) = (obs.state(k - 1), obs.state(k));
        model.drift(prev, alpha, &mut b);
        for i in 0..d {
            let p1 = cur[i] - prev[i] - h * b[i];
            p[(k - 1) * d + i] = p1 - q[(k - 1) * d + i];
        }
    }
    Ok(GeneratorTerms { l, h, n, d, q, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_builtin, BuiltinModel, Dims, Equations, Overrides, ParamBox};
    use crate::paths::{ode_observations, solve_ode};
    use crate::scalar::Real;
    use proptest::prelude::*;
    use std::sync::Arc;

    /// `b(x, a) = a x` in one dimension, with or without a series evaluator.
    struct Linear {
        series: bool,
    }
    impl Equations<f64> for Linear {
        fn drift(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
            out[0] = a[0] * x[0];
        }
        fn diffusion(&self, _x: &[f64], b: &[f64], out: &mut [f64]) {
            out[0] = b[0];
        }
        fn drift_series(&self, x: &[Jet<f64>], a: &[Jet<f64>], out: &mut [Jet<f64>]) -> bool {
            if self.series {
                out[0] = a[0] * x[0];
            }
            self.series
        }
    }

    struct Constant;
    impl Equations<f64> for Constant {
        fn drift(&self, _x: &[f64], a: &[f64], out: &mut [f64]) {
            out[0] = a[0];
            out[1] = -2.0 * a[0];
        }
        fn diffusion(&self, _x: &[f64], _b: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[0] = 1.0;
            out[3] = 1.0;
        }
    }

    fn linear(series: bool) -> ModelSpec<f64> {
        ModelSpec::new(
            "linear",
            Dims { d: 1, r: 1, p: 1, q: 1 },
            vec![1.0],
            1.0,
            ParamBox::cube(1, -3.0, 3.0).unwrap(),
            ParamBox::cube(1, 0.1, 3.0).unwrap(),
            false,
            Arc::new(Linear { series }),
        )
        .unwrap()
    }

    fn model1() -> ModelSpec<f64> {
        make_builtin(BuiltinModel::Model1, &Overrides::default()).unwrap()
    }

    #[test]
    fn linear_powers() {
        for series in [true, false] {
            let m = linear(series);
            let (a, x) = (1.3, 0.7);
            // Nested differences lose about five digits per level.
            let orders = if series { 3 } else { 2 };
            for j in 1..=orders {
                let g = iterated_generator_drift(&m, &[a], &[x], j).unwrap();
                let tol = if series { 1e-14 } else { [0.0, 1e-8, 1e-4][j] };
                let err = (g[0] - a.powi(j as i32 + 1) * x).abs();
                assert!(err < tol, "series={series} j={j} err {err}");
            }
        }
    }

    #[test]
    fn constant_drift_vanishes() {
        let m = ModelSpec::new(
            "const",
            Dims { d: 2, r: 2, p: 1, q: 1 },
            vec![0.0, 0.0],
            1.0,
            ParamBox::cube(1, -3.0, 3.0).unwrap(),
            ParamBox::cube(1, 0.1, 3.0).unwrap(),
            false,
            Arc::new(Constant),
        )
        .unwrap();
        for j in 1..=3 {
            let g = iterated_generator_drift(&m, &[1.5], &[0.3, -2.0], j).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-6));
        }
    }

    /// Hand-derived `(d_x b) b` for model 1.
    fn model1_l1(x: &[f64], a: &[f64]) -> [f64; 2] {
        let b1 = -a[0] * x[0] + 2.0 * (1.0 + a[1] * x[1]).cos();
        let b2 = 2.0 * (1.0 + a[2] * x[0]).sin() - a[3] * x[1];
        let j11 = -a[0];
        let j12 = -2.0 * a[1] * (1.0 + a[1] * x[1]).sin();
        let j21 = 2.0 * a[2] * (1.0 + a[2] * x[0]).cos();
        let j22 = -a[3];
        [j11 * b1 + j12 * b2, j21 * b1 + j22 * b2]
    }

    #[test]
    fn model1_first_order_symbolic() {
        let m = model1();
        let (x, a) = ([1.0, 1.0], [3.0, 6.0, 5.0, 4.0]);
        let expect = model1_l1(&x, &a);
        for method in [GeneratorMethod::Series, GeneratorMethod::FiniteDifference] {
            let g = iterated_generator_drift_with(&m, &a, &x, 1, method).unwrap();
            for i in 0..2 {
                assert!((g[i] - expect[i]).abs() < 1e-6, "{method:?}");
            }
        }
    }

    #[test]
    fn series_and_fd_agree_on_builtins() {
        let m = model1();
        let (x, a) = ([0.8, 1.1], [3.0, 6.0, 5.0, 4.0]);
        for j in 1..=3 {
            let s = iterated_generator_drift_with(&m, &a, &x, j, GeneratorMethod::Series).unwrap();
            let f = iterated_generator_drift_with(&m, &a, &x, j, GeneratorMethod::FiniteDifference).unwrap();
            let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let tol = [0.0, 1e-7, 1e-4, 1e-2][j];
            for i in 0..2 {
                assert!((s[i] - f[i]).abs() <= tol * scale, "j={j}: {s:?} vs {f:?}");
            }
        }
    }

    #[test]
    fn q_linear_model() {
        let m = linear(true);
        let (a, x, h) = (1.7, 0.9, 0.05);
        let q2 = q_term(&m, &[a], &[x], 2, h).unwrap()[0];
        assert!((q2 - h * h / 2.0 * a * a * x).abs() < 1e-15);
        let q3 = q_term(&m, &[a], &[x], 3, h).unwrap()[0];
        assert!((q3 - (h * h / 2.0 * a * a * x + h.powi(3) / 6.0 * a.powi(3) * x)).abs() < 1e-15);
        assert_eq!(q_term(&model1(), &[3.0, 6.0, 5.0, 4.0], &[1.0, 1.0], 2, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn q2_matches_explicit_formula() {
        let m = model1();
        let (x, a, h) = ([0.4, -0.3], [3.0, 6.0, 5.0, 4.0], 0.01);
        let g = model1_l1(&x, &a);
        let q = q_term(&m, &a, &x, 2, h).unwrap();
        for i in 0..2 {
            assert!((q[i] - h * h / 2.0 * g[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn constructed_zero_residual() {
        let m = model1();
        let a = [3.0, 6.0, 5.0, 4.0];
        let n = 20;
        let h = 1.0 / n as f64;
        let mut vals = m.x0.clone();
        for k in 1..=n {
            let prev = vals[(k - 1) * 2..k * 2].to_vec();
            let b = m.drift_vec(&prev, &a);
            vals.push(prev[0] + h * b[0]);
            vals.push(prev[1] + h * b[1]);
        }
        let obs = ObservationSet::new(1.0, 0.0, 2, vals).unwrap();
        let t = p_residuals(&obs, &m, &a, 1).unwrap();
        assert!(t.p_flat().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn order_two_identity() {
        let m = model1();
        let a = [3.0, 6.0, 5.0, 4.0];
        let obs = crate::paths::simulate_sde(&m, &[3.0, 6.0, 5.0, 4.0, 1.0, 0.5], 0.01, 100, 2, 9).unwrap();
        let p1 = p_residuals(&obs, &m, &a, 1).unwrap();
        let p2 = p_residuals(&obs, &m, &a, 2).unwrap();
        for k in 1..=obs.n {
            for i in 0..2 {
                assert!((p2.p(k)[i] - p1.p(k)[i] + p2.q(k)[i]).abs() <= 1e-14);
            }
        }
    }

    fn max_residual(m: &ModelSpec<f64>, a: &[f64], n: usize, v: usize) -> f64 {
        let obs = ode_observations(m, a, n, 64).unwrap();
        let t = p_residuals(&obs, m, a, v).unwrap();
        t.p_flat().iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    #[test]
    fn residual_order_of_accuracy() {
        let m = model1();
        let a = [3.0, 6.0, 5.0, 4.0];
        // Local error of the order-v expansion is O(h^{v+1}).
        for v in 1..=3 {
            let e: Vec<f64> = [50, 100, 200, 400].iter().map(|&n| max_residual(&m, &a, n, v)).collect();
            let slope = (e[0] / e[3]).ln() / 8f64.ln();
            assert!(slope >= v as f64 + 0.5, "v={v} slope {slope} ({e:?})");
        }
    }

    #[test]
    fn sir_high_order_series_consistency() {
        let m = make_builtin::<f64>(BuiltinModel::Sir, &Overrides::default()).unwrap();
        let a = [1.2, 1.0];
        let path = solve_ode(&m, &a, 4000).unwrap();
        let x = path.state(2000).to_vec();
        // Coefficients of the flow must reproduce the RK4 path a short time ahead.
        let c = flow_coefficients(&m, &a, &x, 6).unwrap();
        let dt = 12.0 / 4000.0 * 10.0;
        for i in 0..2 {
            let mut s = 0.0;
            for (k, ck) in c.iter().enumerate() {
                s += ck[i] * dt.powi(k as i32);
            }
            assert!((s - path.state(2010)[i]).abs() < 1e-9, "{s} vs {}", path.state(2010)[i]);
        }
    }

    #[test]
    fn order_cap() {
        assert!(iterated_generator_drift(&model1(), &[3.0, 6.0, 5.0, 4.0], &[1.0, 1.0], V_MAX + 1).is_err());
    }

    proptest! {
        #[test]
        fn p_identity_any_order(a0 in 0.5f64..5.0, a1 in 0.5f64..8.0, l in 2usize..=5, seed in 0u64..50) {
            let m = model1();
            let a = [a0, a1, 5.0, 4.0];
            let obs = crate::paths::simulate_sde(&m, &[3.0, 6.0, 5.0, 4.0, 1.0, 0.5], 0.01, 30, 2, seed).unwrap();
            let p1 = p_residuals(&obs, &m, &a, 1).unwrap();
            let pl = p_residuals(&obs, &m, &a, l).unwrap();
            for k in 1..=obs.n {
                for i in 0..2 {
                    prop_assert!((pl.p(k)[i] - (p1.p(k)[i] - pl.q(k)[i])).abs() <= 1e-14);
                }
            }
        }

        #[test]
        fn fd_jacobian_matches_analytic(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let m = model1();
            let a = [3.0, 6.0, 5.0, 4.0];
            let an = m.analytic_drift_jacobian(&[x0, x1], &a).unwrap();
            let fd = m.fd_drift_jacobian(&[x0, x1], &a);
            for i in 0..2 {
                for j in 0..2 {
                    let e = an[(i, j)];
                    prop_assert!((fd[(i, j)] - e).abs() <= 1e-6 * e.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn real_trait_is_usable_on_jets() {
        let x = Jet::from_coefficients(&[0.5, 1.0]);
        let y = Real::sin(x);
        assert!((y.coeff(1) - 0.5f64.cos()).abs() < 1e-15);
    }
}
