//! The limiting ODE `X^0`, Euler-Maruyama simulation of observations and the
//! observation CSV format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::rng::Stream;
use crate::scalar::Scalar;

/// Solution of `dX^0 = b(X^0, alpha) dt` on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OdePath<T> {
    pub d: usize,
    pub grid: Vec<T>,
    states: Vec<T>,
    pub alpha: Vec<T>,
}

impl<T: Scalar> OdePath<T> {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[T] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    pub fn last(&self) -> &[T] {
        self.state(self.steps())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.states.chunks_exact(self.d)
    }
}

/// Classical fourth-order Runge-Kutta for `x' = b(x, alpha)` from the model's
/// `x0` over `[0, T]` with `steps` uniform intervals.
pub fn solve_ode<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], steps: usize) -> Result<OdePath<T>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("ODE steps must be positive".into()));
    }
    if alpha.len() != model.dims.p {
        return Err(Error::dim("alpha", model.dims.p, alpha.len()));
    }
    let d = model.dims.d;
    let h = model.horizon / T::from_usize_lossy(steps);
    let half = T::c(0.5);
    let sixth = T::one() / T::c(6.0);
    let two = T::c(2.0);
    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(&model.x0);
    let mut x = model.x0.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]);
    let mut tmp = vec![T::zero(); d];
    for step in 1..=steps {
        model.drift(&x, alpha, &mut k1);
        for i in 0..d {
            tmp[i] = x[i] + half * h * k1[i];
        }
        model.drift(&tmp, alpha, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] + half * h * k2[i];
        }
        model.drift(&tmp, alpha, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        model.drift(&tmp, alpha, &mut k4);
        for i in 0..d {
            x[i] += h * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                step,
                time: (h * T::from_usize_lossy(step)).as_f64(),
            });
        }
        states.extend_from_slice(&x);
    }
    let grid = (0..=steps)
        .map(|k| model.horizon * T::from_usize_lossy(k) / T::from_usize_lossy(steps))
        .collect();
    Ok(OdePath {
        d,
        grid,
        states,
        alpha: alpha.to_vec(),
    })
}

/// Discrete observations `X_{t_k}`, `t_k = kT/n`, `k = 0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet<T> {
    pub n: usize,
    pub horizon: T,
    pub epsilon: T,
    pub d: usize,
    times: Vec<T>,
    values: Vec<T>,
    /// Seed recorded by the simulator, if any.
    pub seed: Option<u64>,
    /// Model name recorded by the simulator, if any.
    pub model: Option<String>,
    /// Parameter vector used by the simulator, if any.
    pub theta: Option<Vec<T>>,
}

impl<T: Scalar> ObservationSet<T> {
    /// Builds an observation set from `n + 1` states on the uniform grid.
    pub fn new(horizon: T, epsilon: T, d: usize, values: Vec<T>) -> Result<Self> {
        if d == 0 || !values.len().is_multiple_of(d) || values.len() < 2 * d {
            return Err(Error::InvalidArgument(format!(
                "need at least two states of dimension {d}, got {} values",
                values.len()
            )));
        }
        if !(horizon > T::zero()) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(epsilon >= T::zero()) {
            return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
        }
        let n = values.len() / d - 1;
        let times = uniform_grid(horizon, n);
        Ok(Self {
            n,
            horizon,
            epsilon,
            d,
            times,
            values,
            seed: None,
            model: None,
            theta: None,
        })
    }

    /// Step `h_n = T / n`.
    #[inline]
    pub fn h(&self) -> T {
        self.horizon / T::from_usize_lossy(self.n)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[T] {
        &self.values[k * self.d..(k + 1) * self.d]
    }

    pub fn with_metadata(mut self, seed: Option<u64>, model: Option<String>) -> Self {
        self.seed = seed;
        self.model = model;
        self
    }

    pub fn with_theta(mut self, theta: Option<Vec<T>>) -> Self {
        self.theta = theta;
        self
    }

    /// Observation set on the same grid with different states.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::dim("observation values", self.values.len(), values.len()));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }
}

fn uniform_grid<T: Scalar>(horizon: T, n: usize) -> Vec<T> {
    (0..=n)
        .map(|k| horizon * T::from_usize_lossy(k) / T::from_usize_lossy(n))
        .collect()
}

/// Euler-Maruyama on `n * refine` uniform sub-steps, sub-sampled to the `n + 1`
/// observation times. `theta` is the full parameter vector of the model.
pub fn simulate_sde<T: Scalar>(
    model: &ModelSpec<T>,
    theta: &[T],
    epsilon: T,
    n: usize,
    refine: usize,
    seed: u64,
) -> Result<ObservationSet<T>> {
    if n == 0 || refine == 0 {
        return Err(Error::InvalidArgument("n and refine must be positive".into()));
    }
    if !(epsilon >= T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let (alpha, beta) = model.split_theta(theta)?;
    let (d, r) = (model.dims.d, model.dims.r);
    let m = n * refine;
    let dt = model.horizon / T::from_usize_lossy(m);
    let noise_scale = epsilon * dt.sqrt();
    let unit = model.has_unit_diffusion();
    let mut stream = Stream::new(seed, 0);
    let mut x = model.x0.clone();
    let mut b = vec![T::zero(); d];
    let mut sig = vec![T::zero(); d * r];
    let mut z = vec![0.0f64; r];
    let mut values = Vec::with_capacity((n + 1) * d);
    values.extend_from_slice(&x);
    for step in 1..=m {
        model.drift(&x, alpha, &mut b);
        stream.fill_normal(&mut z);
        if unit {
            for i in 0..d {
                x[i] += dt * b[i] + noise_scale * T::c(z[i]);
            }
        } else {
            model.diffusion(&x, beta, &mut sig);
            for i in 0..d {
                let mut s = T::zero();
                for (k, zk) in z.iter().enumerate() {
                    s += sig[i * r + k] * T::c(*zk);
                }
                x[i] += dt * b[i] + noise_scale * s;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                step,
                time: (dt * T::from_usize_lossy(step)).as_f64(),
            });
        }
        if step % refine == 0 {
            values.extend_from_slice(&x);
        }
    }
    Ok(ObservationSet::new(model.horizon, epsilon, d, values)?
        .with_metadata(Some(seed), Some(model.name.clone()))
        .with_theta(Some(theta.to_vec())))
}

/// Noise-free observations sampled from a Runge-Kutta solve with
/// `substeps` sub-intervals per observation interval.
pub fn ode_observations<T: Scalar>(model: &ModelSpec<T>, alpha: &[T], n: usize, substeps: usize) -> Result<ObservationSet<T>> {
    let path = solve_ode(model, alpha, n * substeps.max(1))?;
    let mut values = Vec::with_capacity((n + 1) * model.dims.d);
    for k in 0..=n {
        values.extend_from_slice(path.state(k * substeps.max(1)));
    }
    ObservationSet::new(model.horizon, T::zero(), model.dims.d, values)
}

/// Writes the observation CSV: a `# n=.. T=.. eps=.. d=..` line, a header
/// and `n + 1` rows at 17 significant digits.
pub fn format_observations<T: Scalar>(obs: &ObservationSet<T>) -> String {
    let mut s = String::new();
    let _ = write!(s, "# n={} T={:.16e} eps={:.16e} d={}", obs.n, obs.horizon, obs.epsilon, obs.d);
    if let Some(seed) = obs.seed {
        let _ = write!(s, " seed={seed}");
    }
    if let Some(m) = &obs.model {
        let _ = write!(s, " model={m}");
    }
    if let Some(th) = &obs.theta {
        let parts: Vec<String> = th.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = write!(s, " theta={}", parts.join(","));
    }
    s.push('\n');
    s.push('t');
    for i in 1..=obs.d {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    for k in 0..=obs.n {
        let _ = write!(s, "{:.16e}", obs.times[k]);
        for v in obs.state(k) {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn save_observations<T: Scalar>(obs: &ObservationSet<T>, path: &Path) -> Result<()> {
    fs::write(path, format_observations(obs))?;
    Ok(())
}

pub fn load_observations<T: Scalar>(path: &Path) -> Result<ObservationSet<T>> {
    parse_observations(&fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<V: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<V> {
    s.trim()
        .parse::<V>()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from `{}`", s.trim())))
}

/// Parses the observation CSV format written by [`format_observations`].
pub fn parse_observations<T: Scalar>(text: &str) -> Result<ObservationSet<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (ln, meta) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let meta = meta
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| parse_err(ln, "first line must start with `#` and carry n, T, eps, d"))?;
    let (mut n, mut horizon, mut eps, mut d, mut seed, mut model) = (None, None, None, None, None, None);
    let mut theta = None;
    for tok in meta.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(ln, format!("expected key=value, got `{tok}`")))?;
        match k {
            "n" => n = Some(parse_num::<usize>(ln, "n", v)?),
            "T" => horizon = Some(parse_num::<T>(ln, "T", v)?),
            "eps" => eps = Some(parse_num::<T>(ln, "eps", v)?),
            "d" => d = Some(parse_num::<usize>(ln, "d", v)?),
            "seed" => seed = Some(parse_num::<u64>(ln, "seed", v)?),
            "model" => model = Some(v.to_string()),
            "theta" => {
                theta = Some(v.split(',').map(|x| parse_num::<T>(ln, "theta", x)).collect::<Result<Vec<T>>>()?)
            }
            other => return Err(parse_err(ln, format!("unknown header field `{other}`"))),
        }
    }
    let n = n.ok_or_else(|| parse_err(ln, "missing header field `n`"))?;
    let horizon = horizon.ok_or_else(|| parse_err(ln, "missing header field `T`"))?;
    let eps = eps.ok_or_else(|| parse_err(ln, "missing header field `eps`"))?;
    let d = d.ok_or_else(|| parse_err(ln, "missing header field `d`"))?;
    if n == 0 || d == 0 {
        return Err(parse_err(ln, "n and d must be positive"));
    }
    if !(horizon > T::zero()) {
        return Err(parse_err(ln, "T must be positive"));
    }
    if !(eps >= T::zero()) {
        return Err(parse_err(ln, "eps must be non-negative"));
    }
    let (ln, header) = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|i| format!("x{i}")))
        .collect();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != expected {
        return Err(parse_err(ln, format!("expected header `{}`", expected.join(","))));
    }
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity((n + 1) * d);
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(parse_err(ln, format!("expected {} fields, got {}", d + 1, fields.len())));
        }
        let t: T = parse_num(ln, "t", fields[0])?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(parse_err(ln, "times must be strictly increasing"));
            }
        }
        let k = times.len();
        let expect = horizon * T::from_usize_lossy(k) / T::from_usize_lossy(n);
        if (t - expect).abs() > T::c(1e-9) * T::one().max(horizon) {
            return Err(parse_err(ln, format!("time {t} is off the uniform grid (expected {expect})")));
        }
        times.push(t);
        for f in &fields[1..] {
            let v: T = parse_num(ln, "state", f)?;
            if !v.is_finite() {
                return Err(parse_err(ln, "non-finite state value"));
            }
            values.push(v);
        }
    }
    if times.len() != n + 1 {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {} data rows, found {}", n + 1, times.len()),
        ));
    }
    Ok(ObservationSet {
        n,
        horizon,
        epsilon: eps,
        d,
        times,
        values,
        seed,
        model,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_builtin, ornstein_uhlenbeck, BuiltinModel, Dims, Equations, Overrides, ParamBox};
    use std::sync::Arc;

    struct Zero;
    impl Equations<f64> for Zero {
        fn drift(&self, _x: &[f64], _a: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|v| *v = 0.0);
        }
        fn diffusion(&self, _x: &[f64], _b: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
    }

    fn zero_model() -> ModelSpec<f64> {
        ModelSpec::new(
            "zero",
            Dims { d: 1, r: 1, p: 1, q: 1 },
            vec![0.5],
            1.0,
            ParamBox::cube(1, -1.0, 1.0).unwrap(),
            ParamBox::cube(1, 0.1, 2.0).unwrap(),
            false,
            Arc::new(Zero),
        )
        .unwrap()
    }

    fn ou() -> ModelSpec<f64> {
        ornstein_uhlenbeck(&Overrides::default()).unwrap()
    }

    #[test]
    fn ode_linear_decay() {
        let p = solve_ode(&ou(), &[1.0], 1000).unwrap();
        assert!((p.last()[0] - (-1f64).exp()).abs() < 1e-9);
        assert_eq!(p.state(0), &[1.0]);
    }

    #[test]
    fn ode_zero_drift_is_constant() {
        let p = solve_ode(&zero_model(), &[0.0], 50).unwrap();
        assert!(p.iter().all(|x| x == [0.5]));
    }

    #[test]
    fn ode_sir_step_halving() {
        let m = make_builtin::<f64>(BuiltinModel::Sir, &Overrides::default()).unwrap();
        let a = solve_ode(&m, &[1.2, 1.0], 10_000).unwrap();
        let b = solve_ode(&m, &[1.2, 1.0], 20_000).unwrap();
        let mut gap = 0.0f64;
        for k in 0..=10_000 {
            for i in 0..2 {
                gap = gap.max((a.state(k)[i] - b.state(2 * k)[i]).abs());
            }
        }
        assert!(gap <= 1e-8, "gap {gap}");
    }

    #[test]
    fn ode_fourth_order_ratio() {
        let m = make_builtin::<f64>(BuiltinModel::Model1, &Overrides::default()).unwrap();
        let alpha = [3.0, 6.0, 5.0, 4.0];
        let x = |s| solve_ode(&m, &alpha, s).unwrap().last().to_vec();
        let (a, b, c) = (x(40), x(80), x(160));
        let e1 = (a[0] - b[0]).hypot(a[1] - b[1]);
        let e2 = (b[0] - c[0]).hypot(b[1] - c[1]);
        let ratio = e1 / e2;
        assert!((8.0..=24.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ode_blow_up_names_time() {
        struct Blow;
        impl Equations<f64> for Blow {
            fn drift(&self, x: &[f64], _a: &[f64], out: &mut [f64]) {
                out[0] = x[0] * x[0];
            }
            fn diffusion(&self, _x: &[f64], _b: &[f64], out: &mut [f64]) {
                out[0] = 1.0;
            }
        }
        let m = ModelSpec::new(
            "blow",
            Dims { d: 1, r: 1, p: 1, q: 1 },
            vec![1.0],
            5.0,
            ParamBox::cube(1, 0.0, 1.0).unwrap(),
            ParamBox::cube(1, 0.0, 1.0).unwrap(),
            false,
            Arc::new(Blow),
        )
        .unwrap();
        match solve_ode(&m, &[0.5], 100) {
            Err(Error::NonFiniteState { time, .. }) => assert!(time > 0.9 && time <= 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_noise_tracks_ode() {
        for model in [BuiltinModel::Model1, BuiltinModel::Sir] {
            let m = make_builtin::<f64>(model, &Overrides::default()).unwrap();
            let theta = model.default_theta();
            let n = 100;
            let obs = simulate_sde(&m, &theta, 0.0, n, 10, 1).unwrap();
            let ode = solve_ode(&m, &theta[..m.dims.p], n * 10).unwrap();
            let h = obs.h();
            for k in 0..=n {
                for i in 0..m.dims.d {
                    let g = (obs.state(k)[i] - ode.state(10 * k)[i]).abs();
                    assert!(g <= 5.0 * h, "{model} k={k} gap {g}");
                }
            }
        }
    }

    #[test]
    fn increment_variance() {
        let m = zero_model();
        let eps = 0.1;
        let n = 100_000;
        let obs = simulate_sde(&m, &[0.0, 1.0], eps, n, 1, 5).unwrap();
        let h = obs.h();
        let inc: Vec<f64> = (1..=n).map(|k| obs.state(k)[0] - obs.state(k - 1)[0]).collect();
        let mean = inc.iter().sum::<f64>() / n as f64;
        let var = inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / (eps * eps * h) - 1.0).abs() < 0.02);
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = make_builtin::<f64>(BuiltinModel::Sir, &Overrides::default()).unwrap();
        let a = simulate_sde(&m, &[1.2, 1.0], 1e-4, 360, 10, 7).unwrap();
        let b = simulate_sde(&m, &[1.2, 1.0], 1e-4, 360, 10, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_sde(&m, &[1.2, 1.0], 1e-4, 360, 10, 8).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.state(0), m.x0.as_slice());
    }

    #[test]
    fn ou_weak_mean() {
        let m = ou();
        let reps = 10_000;
        let xs: Vec<f64> = (0..reps)
            .map(|s| *simulate_sde(&m, &[1.0, 1.0], 0.1, 20, 50, s).unwrap().state(20).first().unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let se = sd / (reps as f64).sqrt();
        let exact = (-1f64).exp();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} vs {exact}");
    }

    #[test]
    fn csv_round_trip() {
        let m = make_builtin::<f64>(BuiltinModel::Model1, &Overrides::default()).unwrap();
        let obs = simulate_sde(&m, &BuiltinModel::Model1.default_theta(), 0.01, 50, 10, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        save_observations(&obs, &path).unwrap();
        let back: ObservationSet<f64> = load_observations(&path).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn csv_rejects_non_monotone_times() {
        let text = "# n=2 T=1 eps=0.1 d=1\nt,x1\n0,1\n0.5,1\n0.4,1\n";
        match parse_observations::<f64>(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("increasing"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_missing_eps_named() {
        let text = "# n=1 T=1 d=1\nt,x1\n0,1\n1,1\n";
        match parse_observations::<f64>(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("eps"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_row_count_checked() {
        let text = "# n=3 T=1 eps=0.1 d=1\nt,x1\n0,1\n";
        assert!(parse_observations::<f64>(text).is_err());
    }
}
