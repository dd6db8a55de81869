//! Chi-square law, empirical quantiles and Kolmogorov-Smirnov tests.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::standard_normal_cdf;

pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * dof as f64, 0.5 * x)
    }
}

pub fn chi2_sf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5 * dof as f64, 0.5 * x)
    }
}

pub fn chi2_pdf(dof: usize, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof as f64;
    if x == 0.0 {
        return match dof {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        };
    }
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Upper `delta` quantile of chi-square with `dof` degrees of freedom:
/// the `x` with `P(chi2_dof > x) = delta`.
pub fn chi2_quantile(dof: usize, delta: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidArgument("chi-square needs dof >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("level delta must lie in (0, 1], got {delta}")));
    }
    if delta == 1.0 {
        return Ok(0.0);
    }
    let k = dof as f64;
    // Wilson-Hilferty start.
    let z = -crate::rng::standard_normal_quantile(delta);
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    // Residual on whichever tail is smaller keeps precision at both ends.
    let resid = |x: f64| if delta < 0.5 { chi2_sf(dof, x) - delta } else { (1.0 - delta) - chi2_cdf(dof, x) };
    for _ in 0..200 {
        let r = resid(x);
        if r > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = r / chi2_pdf(dof, x);
        let mut next = x + step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= 1e-14 * x.max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Empirical upper-`delta` quantile: the `ceil((1 - delta) m)`-th order
/// statistic of `m` samples.
pub fn empirical_upper_quantile(samples: &[f64], delta: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("level delta must lie in (0, 1), got {delta}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    let idx = (((1.0 - delta) * m as f64).ceil() as usize).clamp(1, m) - 1;
    Ok(s[idx])
}

/// Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let rn = ne.sqrt();
    kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)
}

fn sorted_finite(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sample contains non-finite values".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let s = sorted_finite(samples)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n),
    })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let (x, y) = (sorted_finite(a)?, sorted_finite(b)?);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p(d, n * m / (n + m)),
    })
}

/// KS test of `samples` against `N(0, target_sd^2)`.
pub fn normality_diagnostics(samples: &[f64], target_sd: f64) -> Result<KsResult> {
    if samples.len() < 50 {
        return Err(Error::InvalidArgument(format!(
            "normality diagnostics need at least 50 samples, got {}",
            samples.len()
        )));
    }
    if !(target_sd > 0.0) || !target_sd.is_finite() {
        return Err(Error::InvalidArgument(format!("target sd must be positive, got {target_sd}")));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Ok(KsResult {
            statistic: 1.0,
            p_value: 0.0,
        });
    }
    ks_one_sample(samples, |x| standard_normal_cdf(x / target_sd))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (denominator `m - 1`).
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}
