//! Box-constrained minimization: projected BFGS with central-difference
//! gradients, a box-projected Nelder-Mead fallback, coordinate pinning and
//! seeded multi-start.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::models::ParamBox;
use crate::rng::Stream;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Relative change in `f` regarded as converged.
    pub f_tol: f64,
    /// Step length (relative to `max(1, |x|)`) regarded as converged.
    pub x_tol: f64,
    /// Run Nelder-Mead when the quasi-Newton iteration breaks down.
    pub fallback: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            f_tol: 1e-10,
            x_tol: 1e-8,
            fallback: true,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.f_tol > 0.0) || !(self.x_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "optimizer needs max_iters >= 1 and positive tolerances".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimStatus {
    Converged,
    MaxIters,
    FallbackUsed,
}

impl OptimStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimStatus::Converged => "converged",
            OptimStatus::MaxIters => "max-iters",
            OptimStatus::FallbackUsed => "fallback-used",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub f_init: T,
    pub status: OptimStatus,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Objective adapter: errors and non-finite values both read as `+inf`,
/// evaluations are counted.
struct Counted<'f, T, F> {
    f: &'f F,
    evals: Cell<usize>,
    _t: std::marker::PhantomData<T>,
}

impl<'f, T: Scalar, F: Fn(&[T]) -> Result<T>> Counted<'f, T, F> {
    fn new(f: &'f F) -> Self {
        Self {
            f,
            evals: Cell::new(0),
            _t: std::marker::PhantomData,
        }
    }

    fn eval(&self, x: &[T]) -> T {
        self.evals.set(self.evals.get() + 1);
        match (self.f)(x) {
            Ok(v) if v.is_finite() => v,
            _ => T::infinity(),
        }
    }
}

/// Central-difference gradient with step `eps^{1/3} max(1, |x_i|)`.
pub fn numeric_gradient<T: Scalar, F: Fn(&[T]) -> Result<T>>(f: &F, x: &[T]) -> Result<Vec<T>> {
    let mut y = x.to_vec();
    let mut g = vec![T::zero(); x.len()];
    for i in 0..x.len() {
        let h = T::fd_step() * T::one().max(x[i].abs());
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        g[i] = (fp - fm) / (h + h);
    }
    Ok(g)
}

/// Gradient inside a box: central where both neighbours are feasible and
/// finite, one-sided otherwise. `None` if no finite difference exists.
fn box_gradient<T: Scalar, F: Fn(&[T]) -> Result<T>>(c: &Counted<T, F>, bx: &ParamBox<T>, x: &[T], fx: T) -> Option<Vec<T>> {
    let (lo, hi) = (bx.lower(), bx.upper());
    let mut y = x.to_vec();
    let mut g = vec![T::zero(); x.len()];
    for i in 0..x.len() {
        let h = T::fd_step() * T::one().max(x[i].abs());
        let up = x[i] + h <= hi[i];
        let down = x[i] - h >= lo[i];
        let fp = if up {
            y[i] = x[i] + h;
            c.eval(&y)
        } else {
            T::infinity()
        };
        let fm = if down {
            y[i] = x[i] - h;
            c.eval(&y)
        } else {
            T::infinity()
        };
        y[i] = x[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (h + h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => return None,
        };
    }
    Some(g)
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Minimizes `f` over `bx` from `x_init`.
pub fn minimize_box<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    f: &F,
    bx: &ParamBox<T>,
    x_init: &[T],
    opts: &OptimOptions,
) -> Result<OptimResult<T>> {
    opts.validate()?;
    if x_init.len() != bx.dim() {
        return Err(Error::dim("optimizer start", bx.dim(), x_init.len()));
    }
    let x0 = bx.projected(x_init);
    let f0 = f(&x0)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    if bx.dim() == 0 {
        return Ok(OptimResult {
            x: x0,
            f: f0,
            f_init: f0,
            status: OptimStatus::Converged,
            iterations: 0,
            evaluations: 1,
        });
    }
    let c = Counted::new(f);
    let (x, fx, status, iters) = match bfgs(&c, bx, x0.clone(), f0, opts) {
        Ok(r) => r,
        Err((x, fx, iters)) if opts.fallback => {
            let (xn, fxn) = nelder_mead(&c, bx, &x, fx, opts);
            let (x, fx) = if fxn <= fx { (xn, fxn) } else { (x, fx) };
            (x, fx, OptimStatus::FallbackUsed, iters)
        }
        Err((x, fx, iters)) => (x, fx, OptimStatus::MaxIters, iters),
    };
    let (x, fx) = if fx <= f0 { (x, fx) } else { (x0, f0) };
    Ok(OptimResult {
        x,
        f: fx,
        f_init: f0,
        status,
        iterations: iters,
        evaluations: c.evals.get() + 1,
    })
}

type Breakdown<T> = (Vec<T>, T, usize);

#[allow(clippy::type_complexity)]
fn bfgs<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    c: &Counted<T, F>,
    bx: &ParamBox<T>,
    mut x: Vec<T>,
    mut fx: T,
    opts: &OptimOptions,
) -> std::result::Result<(Vec<T>, T, OptimStatus, usize), Breakdown<T>> {
    let n = x.len();
    let (lo, hi) = (bx.lower().to_vec(), bx.upper().to_vec());
    let f_tol = T::c(opts.f_tol);
    let x_tol = T::c(opts.x_tol);
    let c1 = T::c(1e-4);
    let half = T::c(0.5);
    let Some(mut g) = box_gradient(c, bx, &x, fx) else {
        return Err((x, fx, 0));
    };
    let mut hinv = identity_scaled(n, T::one() / inf_norm(&g).max(T::c(1e-12)));
    let mut fresh = true;
    let mut last_active: Vec<bool> = vec![false; n];
    let mut small_steps = 0;
    for iter in 1..=opts.max_iters {
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo[i] && g[i] > T::zero()) || (x[i] >= hi[i] && g[i] < T::zero()))
            .collect();
        if active != last_active && !fresh {
            hinv = identity_scaled(n, diag_scale(&hinv));
            fresh = true;
        }
        last_active = active.clone();
        // Projected gradient small: stationary.
        let pg = (0..n)
            .map(|i| if active[i] { T::zero() } else { g[i].abs() })
            .fold(T::zero(), |a, b| a.max(b));
        if pg == T::zero() {
            return Ok((x, fx, OptimStatus::Converged, iter - 1));
        }
        let mut d = vec![T::zero(); n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            let mut s = T::zero();
            for j in 0..n {
                if !active[j] {
                    s -= hinv[i * n + j] * g[j];
                }
            }
            d[i] = s;
        }
        let slope: T = (0..n).map(|i| g[i] * d[i]).sum();
        if !(slope < T::zero()) {
            if fresh {
                return Err((x, fx, iter));
            }
            hinv = identity_scaled(n, diag_scale(&hinv));
            fresh = true;
            continue;
        }
        // Backtracking along the projected path.
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<T> = (0..n).map(|i| x[i] + t * d[i]).collect();
            bx.project(&mut xt);
            let ft = c.eval(&xt);
            let decrease: T = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
            if ft.is_finite() && ft <= fx + c1 * decrease {
                accepted = Some((xt, ft));
                break;
            }
            t *= half;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                return Err((x, fx, iter));
            }
            hinv = identity_scaled(n, diag_scale(&hinv));
            fresh = true;
            continue;
        };
        let Some(gn) = box_gradient(c, bx, &xn, fnew) else {
            return Err((xn, fnew, iter));
        };
        let s: Vec<T> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<T> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy: T = (0..n).map(|i| s[i] * y[i]).sum();
        let yy: T = y.iter().map(|v| *v * *v).sum();
        let ss: T = s.iter().map(|v| *v * *v).sum();
        if sy > T::c(1e-12) * (ss * yy).sqrt() {
            if fresh {
                hinv = identity_scaled(n, sy / yy);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        let df = (fx - fnew).abs();
        let step = inf_norm(&s);
        let xscale = T::one().max(inf_norm(&xn));
        x = xn;
        fx = fnew;
        g = gn;
        if df <= f_tol * T::one().max(fx.abs()) || step <= x_tol * xscale {
            small_steps += 1;
            if small_steps >= 2 || step == T::zero() {
                return Ok((x, fx, OptimStatus::Converged, iter));
            }
        } else {
            small_steps = 0;
        }
    }
    Ok((x, fx, OptimStatus::MaxIters, opts.max_iters))
}

fn identity_scaled<T: Scalar>(n: usize, s: T) -> Vec<T> {
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        h[i * n + i] = s;
    }
    h
}

fn diag_scale<T: Scalar>(h: &[T]) -> T {
    let n = (h.len() as f64).sqrt() as usize;
    let tr: T = (0..n).map(|i| h[i * n + i]).sum();
    let s = tr / T::from_usize_lossy(n.max(1));
    if s > T::zero() && s.is_finite() {
        s
    } else {
        T::one()
    }
}

/// `H <- (I - r s y^T) H (I - r y s^T) + r s s^T`, `r = 1 / s^T y`.
fn bfgs_update<T: Scalar>(h: &mut [T], s: &[T], y: &[T], sy: T) {
    let n = s.len();
    let r = T::one() / sy;
    let hy: Vec<T> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: T = (0..n).map(|i| y[i] * hy[i]).sum();
    let coef = (T::one() + r * yhy) * r;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] = h[i * n + j] + coef * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Nelder-Mead with every trial point projected onto the box.
fn nelder_mead<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    c: &Counted<T, F>,
    bx: &ParamBox<T>,
    x0: &[T],
    f0: T,
    opts: &OptimOptions,
) -> (Vec<T>, T) {
    let n = x0.len();
    let (lo, hi) = (bx.lower(), bx.upper());
    let mut simplex: Vec<(Vec<T>, T)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = T::c(0.05) * (hi[i] - lo[i]);
        x[i] = if x[i] + step <= hi[i] { x[i] + step } else { x[i] - step };
        let fx = c.eval(&x);
        simplex.push((x, fx));
    }
    let (alpha, gamma, rho, sigma) = (T::one(), T::c(2.0), T::c(0.5), T::c(0.5));
    let max_evals = 200 * (n + 1) * (n + 1) + opts.max_iters;
    let mut evals = 0;
    let order = |s: &mut Vec<(Vec<T>, T)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Greater));
    };
    let point = |base: &[T], dir: &[T], t: T| -> Vec<T> {
        let mut p: Vec<T> = base.iter().zip(dir).map(|(b, d)| *b + t * (*d - *b)).collect();
        bx.project(&mut p);
        p
    };
    while evals < max_evals {
        order(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let size = (1..=n)
            .map(|k| inf_norm(&simplex[k].0.iter().zip(&simplex[0].0).map(|(a, b)| *a - *b).collect::<Vec<_>>()))
            .fold(T::zero(), |a, b| a.max(b));
        if (worst - best).abs() <= T::c(opts.f_tol) * T::one().max(best.abs())
            && size <= T::c(opts.x_tol) * T::one().max(inf_norm(&simplex[0].0))
        {
            break;
        }
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += x[i] / T::from_usize_lossy(n);
            }
        }
        let worst_x = simplex[n].0.clone();
        let xr = point(&centroid, &worst_x, -alpha);
        let fr = c.eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = point(&centroid, &worst_x, -gamma);
            let fe = c.eval(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (target, ft) = if fr < simplex[n].1 { (xr.clone(), fr) } else { (worst_x.clone(), simplex[n].1) };
            let xc = point(&centroid, &target, rho);
            let fc = c.eval(&xc);
            evals += 1;
            if fc < ft {
                simplex[n] = (xc, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for k in 1..=n {
                    let xs = point(&best_x, &simplex[k].0, sigma);
                    let fs = c.eval(&xs);
                    evals += 1;
                    simplex[k] = (xs, fs);
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

/// Minimizes with some coordinates pinned to fixed values; the free
/// coordinates are optimized inside their sub-box.
pub fn minimize_restricted<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    f: &F,
    bx: &ParamBox<T>,
    x_init: &[T],
    fixed: &[(usize, T)],
    opts: &OptimOptions,
) -> Result<OptimResult<T>> {
    let dim = bx.dim();
    if x_init.len() != dim {
        return Err(Error::dim("optimizer start", dim, x_init.len()));
    }
    let mut pinned: Vec<Option<T>> = vec![None; dim];
    for &(i, v) in fixed {
        if i >= dim {
            return Err(Error::InvalidArgument(format!("fixed index {} out of range 1..={dim}", i + 1)));
        }
        if v < bx.lower()[i] || v > bx.upper()[i] {
            return Err(Error::InvalidArgument(format!(
                "fixed value {v} for coordinate {} lies outside [{}, {}]",
                i + 1,
                bx.lower()[i],
                bx.upper()[i]
            )));
        }
        pinned[i] = Some(v);
    }
    let free: Vec<usize> = (0..dim).filter(|&i| pinned[i].is_none()).collect();
    let embed = |z: &[T]| -> Vec<T> {
        let mut x: Vec<T> = pinned.iter().map(|p| p.unwrap_or(T::zero())).collect();
        for (k, &i) in free.iter().enumerate() {
            x[i] = z[k];
        }
        x
    };
    let sub = bx.select(&free);
    let z0: Vec<T> = free.iter().map(|&i| x_init[i]).collect();
    let g = |z: &[T]| f(&embed(z));
    let r = minimize_box(&g, &sub, &z0, opts)?;
    Ok(OptimResult {
        x: embed(&r.x),
        ..r
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiStartResult<T> {
    pub best: OptimResult<T>,
    pub best_index: usize,
    pub starts: usize,
    pub failures: usize,
}

/// Uniform start `i` of a multi-start run.
pub fn uniform_start<T: Scalar>(bx: &ParamBox<T>, seed: u64, index: u64) -> Vec<T> {
    let mut s = Stream::new(seed, index);
    let mut u = vec![0.0; bx.dim()];
    s.fill_uniform(&mut u);
    bx.lerp(&u)
}

fn pick_best<T: Scalar>(results: Vec<(usize, Result<OptimResult<T>>)>) -> Result<MultiStartResult<T>> {
    let starts = results.len();
    let mut failures = 0;
    let mut best: Option<(usize, OptimResult<T>)> = None;
    let mut last_err = None;
    for (i, r) in results {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some((bi, b)) => r.f < b.f || (r.f == b.f && i < *bi),
                };
                if better {
                    best = Some((i, r));
                }
            }
            Err(e) => {
                failures += 1;
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((best_index, best)) => Ok(MultiStartResult {
            best,
            best_index,
            starts,
            failures,
        }),
        None => Err(last_err.unwrap_or(Error::NonFiniteStart)),
    }
}

/// Runs [`minimize_box`] from `n_starts` seeded uniform points and keeps the
/// best by `(f*, start index)`.
pub fn multi_start<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    f: &F,
    bx: &ParamBox<T>,
    n_starts: usize,
    seed: u64,
    opts: &OptimOptions,
) -> Result<MultiStartResult<T>> {
    if n_starts == 0 {
        return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
    }
    let results = (0..n_starts)
        .map(|i| (i, minimize_box(f, bx, &uniform_start(bx, seed, i as u64), opts)))
        .collect();
    pick_best(results)
}

/// Evaluates `f` at `n_candidates` seeded uniform points and runs
/// [`minimize_box`] from the `n_local` best of them.
pub fn multi_start_screened<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    f: &F,
    bx: &ParamBox<T>,
    n_candidates: usize,
    n_local: usize,
    seed: u64,
    opts: &OptimOptions,
) -> Result<MultiStartResult<T>> {
    if n_candidates == 0 || n_local == 0 {
        return Err(Error::InvalidArgument("need at least one candidate and one local run".into()));
    }
    let mut scored: Vec<(usize, Vec<T>, T)> = (0..n_candidates)
        .map(|i| {
            let x = uniform_start(bx, seed, i as u64);
            let v = match f(&x) {
                Ok(v) if v.is_finite() => v,
                _ => T::infinity(),
            };
            (i, x, v)
        })
        .collect();
    scored.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Greater).then(a.0.cmp(&b.0)));
    let results = scored
        .into_iter()
        .take(n_local)
        .filter(|c| c.2.is_finite())
        .map(|(i, x, _)| (i, minimize_box(f, bx, &x, opts)))
        .collect::<Vec<_>>();
    if results.is_empty() {
        return Err(Error::NonFiniteStart);
    }
    pick_best(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bowl(c: Vec<f64>) -> impl Fn(&[f64]) -> Result<f64> {
        move |x: &[f64]| Ok(x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum())
    }

    fn unit_box(n: usize) -> ParamBox<f64> {
        ParamBox::cube(n, -2.0, 2.0).unwrap()
    }

    #[test]
    fn interior_quadratic() {
        let r = minimize_box(&bowl(vec![0.3, -1.1, 1.7]), &unit_box(3), &[0.0, 0.0, 0.0], &OptimOptions::default()).unwrap();
        for (a, b) in r.x.iter().zip([0.3, -1.1, 1.7]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(r.status, OptimStatus::Converged);
    }

    #[test]
    fn active_constraint_projects() {
        let r = minimize_box(&bowl(vec![3.0, -5.0, 0.5]), &unit_box(3), &[0.0, 0.0, 0.0], &OptimOptions::default()).unwrap();
        for (a, b) in r.x.iter().zip([2.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-6, "{:?}", r.x);
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| Ok(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let r = minimize_box(&f, &unit_box(2), &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_x: &[f64]| Ok(f64::NAN);
        assert!(matches!(
            minimize_box(&f, &unit_box(1), &[0.0], &OptimOptions::default()),
            Err(Error::NonFiniteStart)
        ));
    }

    #[test]
    fn fallback_on_nonsmooth_objective() {
        // |x| + |y| kinks defeat the quasi-Newton line search near the optimum.
        let f = |x: &[f64]| Ok((x[0] - 0.5).abs() + 2.0 * (x[1] + 0.25).abs());
        let r = minimize_box(&f, &unit_box(2), &[1.5, 1.5], &OptimOptions::default()).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-4 && (r.x[1] + 0.25).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn infinite_region_is_avoided() {
        let f = |x: &[f64]| if x[0] > 1.0 { Ok(f64::INFINITY) } else { Ok((x[0] - 0.9).powi(2)) };
        let r = minimize_box(&f, &unit_box(1), &[-1.0], &OptimOptions::default()).unwrap();
        assert!((r.x[0] - 0.9).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn restricted_pins_and_zero_dimensional() {
        let f = bowl(vec![0.5, 0.5, 0.5]);
        let r = minimize_restricted(&f, &unit_box(3), &[0.0, 0.0, 0.0], &[(1, 1.5)], &OptimOptions::default()).unwrap();
        assert_eq!(r.x[1], 1.5);
        assert!((r.x[0] - 0.5).abs() < 1e-6 && (r.x[2] - 0.5).abs() < 1e-6);
        let all = minimize_restricted(&f, &unit_box(3), &[0.0; 3], &[(0, 1.0), (1, 1.0), (2, 1.0)], &OptimOptions::default()).unwrap();
        assert_eq!(all.x, vec![1.0, 1.0, 1.0]);
        assert_eq!(all.iterations, 0);
        assert!(minimize_restricted(&f, &unit_box(3), &[0.0; 3], &[(0, 3.0)], &OptimOptions::default()).is_err());
    }

    #[test]
    fn multi_start_unimodal_and_single() {
        let f = bowl(vec![0.2, -0.4]);
        let o = OptimOptions::default();
        for seed in [1, 2, 3] {
            let r = multi_start(&f, &unit_box(2), 5, seed, &o).unwrap();
            assert!((r.best.x[0] - 0.2).abs() < 1e-6 && (r.best.x[1] + 0.4).abs() < 1e-6);
        }
        let one = multi_start(&f, &unit_box(2), 1, 9, &o).unwrap();
        let direct = minimize_box(&f, &unit_box(2), &uniform_start(&unit_box(2), 9, 0), &o).unwrap();
        assert_eq!(one.best, direct);
    }

    #[test]
    fn multi_start_finds_deeper_well() {
        // Wells at -1 (depth 1) and +1.5 (depth 2) on [-3, 3].
        let f = |x: &[f64]| {
            let a = (x[0] + 1.0).powi(2);
            let b = (x[0] - 1.5).powi(2);
            Ok(-(-4.0 * a).exp() - 2.0 * (-4.0 * b).exp())
        };
        let bx = ParamBox::cube(1, -3.0, 3.0).unwrap();
        let grid_min = (0..=60000)
            .map(|i| -3.0 + i as f64 * 1e-4)
            .min_by(|a, b| f(&[*a]).unwrap().partial_cmp(&f(&[*b]).unwrap()).unwrap())
            .unwrap();
        let r = multi_start(&f, &bx, 50, 4, &OptimOptions::default()).unwrap();
        assert!((r.best.x[0] - grid_min).abs() < 1e-3);
        let s = multi_start_screened(&f, &bx, 200, 3, 4, &OptimOptions::default()).unwrap();
        assert!((s.best.x[0] - grid_min).abs() < 1e-3);
    }

    #[test]
    fn numeric_gradient_quadratic() {
        let f = |x: &[f64]| Ok(x[0] * x[0] * 3.0 + x[0] * x[1]);
        let g = numeric_gradient(&f, &[1.0, 2.0]).unwrap();
        assert!((g[0] - 8.0).abs() < 1e-8 && (g[1] - 1.0).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn result_in_box_and_not_worse(
            c in proptest::collection::vec(-4.0f64..4.0, 2),
            x0 in proptest::collection::vec(-2.0f64..2.0, 2),
            w in 0.1f64..10.0,
        ) {
            let f = |x: &[f64]| Ok(w * (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(4) + (3.0 * x[0]).sin());
            let bx = unit_box(2);
            let r = minimize_box(&f, &bx, &x0, &OptimOptions::default()).unwrap();
            prop_assert!(bx.contains(&r.x));
            prop_assert!(r.f <= f(&x0).unwrap() + 1e-12);
            let again = minimize_box(&f, &bx, &x0, &OptimOptions::default()).unwrap();
            prop_assert_eq!(r, again);
        }
    }
}
