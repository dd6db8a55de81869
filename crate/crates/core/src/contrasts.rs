//! Contrast functions of the adaptive procedures.
//!
//! With `s = eps^{-2} h^{-1}`, `S_k(beta) = sigma sigma^T(X_{k-1}, beta)` and
//! `dX_k = X_k - X_{k-1}`:
//!
//! | name | formula |
//! |------|---------|
//! | `u1(a)` | `s sum P_v(a)^T P_v(a)` |
//! | `u2(b; a_bar)` | `sum log det S_k(b) + s P_v(a_bar)^T S_k(b)^{-1} P_v(a_bar)` |
//! | `u3(a; b_bar)` | `s sum P_v(a)^T S_k(b_bar)^{-1} P_v(a)` |
//! | `v_stage(a; a_bar, l)` | `s sum r^T r`, `r = P_1(a) - Q_l(a_bar)` |
//! | `v_final(a; a_bar, b_bar)` | `s sum r^T S_k(b_bar)^{-1} r`, `r = P_1(a) - Q_v(a_bar)` |
//! | `w1(b)` | `sum log det S_k(b) + s dX^T S_k(b)^{-1} dX` |
//! | `w2(a; b_bar)` | `s sum P_1(a)^T S_k(b_bar)^{-1} P_1(a)` |
//!
//! Quantities that depend only on frozen arguments (`Q_l(a_bar)`,
//! `P_v(a_bar)`, Cholesky factors of `S_k(b_bar)`) are computed once and
//! cached by the exact bit pattern of the frozen vector.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::generator::{q_path, Expander, GeneratorMethod, V_MAX};
use crate::linalg::{factor_in_place, forward_solve, Matrix};
use crate::models::ModelSpec;
use crate::paths::ObservationSet;
use crate::scalar::Scalar;

/// Eigenvalue floor for `sigma sigma^T`, applied to the Cholesky pivots.
pub const MIN_EIGENVALUE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Key {
    Q(usize, Vec<u64>),
    P(usize, Vec<u64>),
    Metric(Vec<u64>),
}

fn fingerprint<T: Scalar>(v: &[T]) -> Vec<u64> {
    v.iter().map(|x| x.as_f64().to_bits()).collect()
}

/// Observations, model and approximation degree shared by all contrasts.
pub struct ContrastContext<'a, T: Scalar> {
    pub obs: &'a ObservationSet<T>,
    pub model: &'a ModelSpec<T>,
    pub v: usize,
    scale: T,
    increments: Vec<T>,
    cache: Mutex<HashMap<Key, Arc<Vec<T>>>>,
}

impl<'a, T: Scalar> ContrastContext<'a, T> {
    pub fn new(obs: &'a ObservationSet<T>, model: &'a ModelSpec<T>, v: usize) -> Result<Self> {
        if obs.d != model.dims.d {
            return Err(Error::dim("observation state", model.dims.d, obs.d));
        }
        if v == 0 || v > V_MAX {
            return Err(Error::InvalidArgument(format!("approximation degree v must be in 1..={V_MAX}, got {v}")));
        }
        if !(obs.epsilon > T::zero()) {
            return Err(Error::InvalidArgument("contrasts need eps > 0".into()));
        }
        let d = obs.d;
        let mut increments = Vec::with_capacity(obs.n * d);
        for k in 1..=obs.n {
            let (a, b) = (obs.state(k - 1), obs.state(k));
            increments.extend(b.iter().zip(a).map(|(x, y)| *x - *y));
        }
        let scale = T::one() / (obs.epsilon * obs.epsilon * obs.h());
        Ok(Self {
            obs,
            model,
            v,
            scale,
            increments,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// `eps^{-2} h^{-1}`.
    pub fn scale(&self) -> T {
        self.scale
    }

    fn check_alpha(&self, a: &[T]) -> Result<()> {
        if a.len() != self.model.dims.p {
            return Err(Error::dim("alpha", self.model.dims.p, a.len()));
        }
        Ok(())
    }

    fn check_beta(&self, b: &[T]) -> Result<()> {
        if b.len() != self.model.dims.q {
            return Err(Error::dim("beta", self.model.dims.q, b.len()));
        }
        Ok(())
    }

    fn cached(&self, key: Key, make: impl FnOnce() -> Result<Vec<T>>) -> Result<Arc<Vec<T>>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(make()?);
        self.cache.lock().expect("cache lock").insert(key, Arc::clone(&v));
        Ok(v)
    }

    /// `Q_{l,k}(a_bar)` for all `k`, flat `n x d`.
    pub fn frozen_q(&self, a_bar: &[T], l: usize) -> Result<Arc<Vec<T>>> {
        self.check_alpha(a_bar)?;
        self.cached(Key::Q(l, fingerprint(a_bar)), || q_path(self.obs, self.model, a_bar, l))
    }

    /// `P_{v,k}(a_bar)` for all `k`, flat `n x d`.
    pub fn frozen_p(&self, a_bar: &[T]) -> Result<Arc<Vec<T>>> {
        self.check_alpha(a_bar)?;
        self.cached(Key::P(self.v, fingerprint(a_bar)), || {
            Ok(crate::generator::p_residuals(self.obs, self.model, a_bar, self.v)?
                .p_flat()
                .to_vec())
        })
    }

    /// Cholesky factors of `S_k(b_bar)` for all `k`, flat `n x d x d`; `None`
    /// for unit diffusion.
    pub fn frozen_metric(&self, b_bar: &[T]) -> Result<Option<Arc<Vec<T>>>> {
        self.check_beta(b_bar)?;
        if self.model.has_unit_diffusion() {
            return Ok(None);
        }
        let out = self.cached(Key::Metric(fingerprint(b_bar)), || {
            let (n, d) = (self.obs.n, self.obs.d);
            let mut f = vec![T::zero(); n * d * d];
            let mut scratch = vec![T::zero(); d * self.model.dims.r];
            for k in 1..=n {
                let slot = &mut f[(k - 1) * d * d..k * d * d];
                self.model
                    .sigma_sigma_t_into(self.obs.state(k - 1), b_bar, &mut scratch, slot);
                self.factor(slot, k)?;
            }
            Ok(f)
        })?;
        Ok(Some(out))
    }

    /// Factors `slot` in place, enforcing the eigenvalue floor.
    fn factor(&self, slot: &mut [T], k: usize) -> Result<()> {
        let d = self.obs.d;
        let orig = slot.to_vec();
        let ok = factor_in_place(slot, d) && (0..d).all(|i| slot[i * d + i] * slot[i * d + i] > T::c(MIN_EIGENVALUE));
        if ok {
            Ok(())
        } else {
            let m = Matrix::from_row_major(d, d, orig);
            let min = if m.is_finite() {
                m.symmetric_eigenvalues()[0].as_f64()
            } else {
                f64::NAN
            };
            Err(Error::NotPositiveDefinite { k, min_eigenvalue: min })
        }
    }

    fn finish(&self, sum: T, what: &str) -> Result<T> {
        if sum.is_finite() {
            Ok(sum)
        } else {
            Err(Error::NonFinite {
                what: what.to_string(),
                k: 0,
            })
        }
    }

    /// Shared kernel of every drift contrast: `s sum r_k^T M_k^{-1} r_k` with
    /// `r_k = dX_k - E_l(X_{k-1}; a) - q_k`, where `E_l` is the live order-`l`
    /// drift expansion and `q_k` an optional frozen correction.
    fn drift_sum(&self, a: &[T], live: usize, frozen: Option<&[T]>, metric: Option<&[T]>, what: &str) -> Result<T> {
        self.check_alpha(a)?;
        let (n, d, h) = (self.obs.n, self.obs.d, self.obs.h());
        let mut exp = Expander::new(self.model, live, GeneratorMethod::Auto);
        exp.set_alpha(a);
        let mut e = vec![T::zero(); d];
        let mut r = vec![T::zero(); d];
        let mut sum = T::zero();
        for k in 1..=n {
            exp.expansion(self.model, self.obs.state(k - 1), a, h, &mut e);
            let off = (k - 1) * d;
            for i in 0..d {
                r[i] = self.increments[off + i] - e[i];
                if let Some(q) = frozen {
                    r[i] -= q[off + i];
                }
            }
            if let Some(l) = metric {
                forward_solve(&l[off * d..(off + d) * d], d, &mut r);
            }
            let term: T = r.iter().map(|v| *v * *v).sum();
            if !term.is_finite() {
                return Err(Error::NonFinite {
                    what: what.to_string(),
                    k,
                });
            }
            sum += term;
        }
        self.finish(self.scale * sum, what)
    }

    /// `sum log det S_k(b) + s y_k^T S_k(b)^{-1} y_k` for fixed vectors `y_k`.
    fn diffusion_sum(&self, b: &[T], y: &[T], what: &str) -> Result<T> {
        self.check_beta(b)?;
        let (n, d) = (self.obs.n, self.obs.d);
        let mut s = vec![T::zero(); d * d];
        let mut scratch = vec![T::zero(); d * self.model.dims.r];
        let mut r = vec![T::zero(); d];
        let unit = self.model.has_unit_diffusion();
        let mut sum = T::zero();
        let two = T::c(2.0);
        for k in 1..=n {
            let off = (k - 1) * d;
            r.copy_from_slice(&y[off..off + d]);
            let mut term = T::zero();
            if !unit {
                self.model
                    .sigma_sigma_t_into(self.obs.state(k - 1), b, &mut scratch, &mut s);
                self.factor(&mut s, k)?;
                for i in 0..d {
                    term += two * s[i * d + i].ln();
                }
                forward_solve(&s, d, &mut r);
            }
            let quad: T = r.iter().map(|v| *v * *v).sum();
            term += self.scale * quad;
            if !term.is_finite() {
                return Err(Error::NonFinite {
                    what: what.to_string(),
                    k,
                });
            }
            sum += term;
        }
        self.finish(sum, what)
    }

    pub fn u1(&self, a: &[T]) -> Result<T> {
        self.drift_sum(a, self.v, None, None, "U1")
    }

    pub fn u2(&self, b: &[T], a_bar: &[T]) -> Result<T> {
        let p = self.frozen_p(a_bar)?;
        self.diffusion_sum(b, &p, "U2")
    }

    pub fn u3(&self, a: &[T], b_bar: &[T]) -> Result<T> {
        let m = self.frozen_metric(b_bar)?;
        self.drift_sum(a, self.v, None, m.as_deref().map(|v| v.as_slice()), "U3")
    }

    /// `V^{(l)}`; `a_bar` is ignored for `l = 1`.
    pub fn v_stage(&self, a: &[T], a_bar: &[T], l: usize) -> Result<T> {
        if l == 0 || l > self.v.max(1) {
            return Err(Error::InvalidArgument(format!("stage l must be in 1..={}, got {l}", self.v)));
        }
        if l == 1 {
            return self.drift_sum(a, 1, None, None, "V1");
        }
        let q = self.frozen_q(a_bar, l)?;
        self.drift_sum(a, 1, Some(&q), None, "V")
    }

    /// `V^{(v+2)}`.
    pub fn v_final(&self, a: &[T], a_bar: &[T], b_bar: &[T]) -> Result<T> {
        let q = self.frozen_q(a_bar, self.v)?;
        let m = self.frozen_metric(b_bar)?;
        self.drift_sum(a, 1, Some(&q), m.as_deref().map(|v| v.as_slice()), "V(v+2)")
    }

    pub fn w1(&self, b: &[T]) -> Result<T> {
        self.diffusion_sum(b, &self.increments, "W1")
    }

    pub fn w2(&self, a: &[T], b_bar: &[T]) -> Result<T> {
        let m = self.frozen_metric(b_bar)?;
        self.drift_sum(a, 1, None, m.as_deref().map(|v| v.as_slice()), "W2")
    }

    /// Joint contrast `sum log det S_k(b) + s P_v(a)^T S_k(b)^{-1} P_v(a)`
    /// over both parameters at once (the non-adaptive baseline).
    pub fn joint(&self, a: &[T], b: &[T]) -> Result<T> {
        self.check_alpha(a)?;
        let (n, d, h) = (self.obs.n, self.obs.d, self.obs.h());
        let mut exp = Expander::new(self.model, self.v, GeneratorMethod::Auto);
        exp.set_alpha(a);
        let mut e = vec![T::zero(); d];
        let mut p = vec![T::zero(); n * d];
        for k in 1..=n {
            exp.expansion(self.model, self.obs.state(k - 1), a, h, &mut e);
            for i in 0..d {
                p[(k - 1) * d + i] = self.increments[(k - 1) * d + i] - e[i];
            }
        }
        self.diffusion_sum(b, &p, "joint")
    }
}
