//! Likelihood-ratio-type tests built from the stage contrasts.
//!
//! A [`Hypothesis`] pins some drift and/or diffusion coordinates. The
//! drift statistic for Type I / Type II compares the first-stage contrast
//! with and without the pins and has the non-standard null `pi_r`; the
//! efficient-metric variants and every diffusion statistic are
//! asymptotically chi-square.

use std::fmt;
use std::sync::Arc;

use crate::asymptotics::{checked_inverse, info_matrices, DEFAULT_QUAD_STEPS};
use crate::contrasts::ContrastContext;
use crate::error::{Error, Result};
use crate::estimators::{
    approximation_degree, choose_regime, run_stage, special_with, type1_with, type2_with, lowrho_with, BaseType,
    Estimate, EstimatorOptions, Regime, SpecialMode, Stage, StageKind,
};
use crate::linalg::Matrix;
use crate::models::ModelSpec;
use crate::paths::ObservationSet;
use crate::rng::{derive_seed, Stream};
use crate::scalar::Scalar;
use crate::stats::{chi2_quantile, chi2_sf};

pub const DEFAULT_MC_N: usize = 200_000;

/// Magnitude of a negative raw statistic above which clamping is flagged.
pub const CLAMP_FLAG: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hypothesis {
    /// 0-based `(index, value)` pairs, sorted by index.
    pub alpha_fixed: Vec<(usize, f64)>,
    pub beta_fixed: Vec<(usize, f64)>,
}

impl Hypothesis {
    pub fn new(mut alpha_fixed: Vec<(usize, f64)>, mut beta_fixed: Vec<(usize, f64)>) -> Result<Self> {
        for (what, v) in [("alpha", &mut alpha_fixed), ("beta", &mut beta_fixed)] {
            v.sort_by_key(|e| e.0);
            if v.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidArgument(format!("{what} coordinate fixed twice")));
            }
            if v.iter().any(|e| !e.1.is_finite()) {
                return Err(Error::InvalidArgument(format!("{what} fixed value is not finite")));
            }
        }
        Ok(Self {
            alpha_fixed,
            beta_fixed,
        })
    }

    /// Parses entries like `alpha[1]=3.0, alpha[4]=4.0, beta[2]=0.5`
    /// (indices are 1-based).
    pub fn parse(text: &str) -> Result<Self> {
        let entries: Vec<&str> = text.split([',', ';', '\n']).map(str::trim).filter(|s| !s.is_empty()).collect();
        Self::parse_entries(&entries)
    }

    pub fn parse_entries<S: AsRef<str>>(entries: &[S]) -> Result<Self> {
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        for raw in entries {
            let e = raw.as_ref().trim();
            let bad = || Error::InvalidArgument(format!("bad hypothesis entry `{e}`; expected alpha[i]=value or beta[j]=value"));
            let (lhs, rhs) = e.split_once('=').ok_or_else(bad)?;
            let lhs = lhs.trim();
            let open = lhs.find('[').ok_or_else(bad)?;
            let inner = lhs[open + 1..].strip_suffix(']').ok_or_else(bad)?;
            let idx: usize = inner.trim().parse().map_err(|_| bad())?;
            if idx == 0 {
                return Err(Error::InvalidArgument(format!("hypothesis indices are 1-based, got 0 in `{e}`")));
            }
            let value: f64 = rhs.trim().parse().map_err(|_| bad())?;
            match lhs[..open].trim() {
                "alpha" => alpha.push((idx - 1, value)),
                "beta" => beta.push((idx - 1, value)),
                _ => return Err(bad()),
            }
        }
        Self::new(alpha, beta)
    }

    pub fn r(&self) -> usize {
        self.alpha_fixed.len()
    }

    pub fn s(&self) -> usize {
        self.beta_fixed.len()
    }

    pub fn alpha_indices(&self) -> Vec<usize> {
        self.alpha_fixed.iter().map(|e| e.0).collect()
    }

    pub fn beta_indices(&self) -> Vec<usize> {
        self.beta_fixed.iter().map(|e| e.0).collect()
    }

    /// Checks indices and values against the model's boxes.
    pub fn validate<T: Scalar>(&self, model: &ModelSpec<T>) -> Result<()> {
        if model.shared_params && !self.beta_fixed.is_empty() {
            return Err(Error::InvalidArgument(
                "drift and diffusion share parameters; state the hypothesis on alpha only".into(),
            ));
        }
        for (what, fixed, bx) in [
            ("alpha", &self.alpha_fixed, &model.box_alpha),
            ("beta", &self.beta_fixed, &model.box_beta),
        ] {
            for &(i, v) in fixed {
                if i >= bx.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "{what}[{}] is out of range (dimension {})",
                        i + 1,
                        bx.dim()
                    )));
                }
                let (lo, hi) = (bx.lower()[i].as_f64(), bx.upper()[i].as_f64());
                if !(v >= lo && v <= hi) {
                    return Err(Error::InvalidArgument(format!(
                        "{what}[{}] = {v} lies outside the box [{lo}, {hi}]",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    fn pins<T: Scalar>(fixed: &[(usize, f64)]) -> Vec<(usize, T)> {
        fixed.iter().map(|&(i, v)| (i, T::c(v))).collect()
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .alpha_fixed
            .iter()
            .map(|(i, v)| format!("alpha[{}]={v}", i + 1))
            .chain(self.beta_fixed.iter().map(|(i, v)| format!("beta[{}]={v}", i + 1)))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestMethod {
    /// First-stage `U1` drift statistic (`pi_r` null) and `U2` diffusion.
    Type1,
    /// Stage-`v` drift statistic (`pi_r` null) and `V(v+1)` diffusion.
    Type2,
    /// `W2(.|beta_check)` drift (chi-square) and `W1` diffusion.
    LowRho,
    /// `U3(.|beta_tilde)` drift with a chi-square null.
    Type1Efficient,
    /// `V(v+2)(.|alpha_hat_v, beta_hat)` drift with a chi-square null.
    Type2Efficient,
}

impl TestMethod {
    pub const ALL: [TestMethod; 5] = [
        TestMethod::Type1,
        TestMethod::Type2,
        TestMethod::LowRho,
        TestMethod::Type1Efficient,
        TestMethod::Type2Efficient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestMethod::Type1 => "type1",
            TestMethod::Type2 => "type2",
            TestMethod::LowRho => "lowrho",
            TestMethod::Type1Efficient => "type1-efficient",
            TestMethod::Type2Efficient => "type2-efficient",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown test method `{s}`")))
    }

    fn base(self) -> Option<BaseType> {
        match self {
            TestMethod::Type1 | TestMethod::Type1Efficient => Some(BaseType::Type1),
            TestMethod::Type2 | TestMethod::Type2Efficient => Some(BaseType::Type2),
            TestMethod::LowRho => None,
        }
    }

    /// Whether the drift statistic has the `pi_r` null.
    pub fn drift_uses_pi(self) -> bool {
        matches!(self, TestMethod::Type1 | TestMethod::Type2)
    }

    /// Stage names of the drift and diffusion statistics.
    fn stage_names(self, v: usize) -> (String, &'static str) {
        match self {
            TestMethod::Type1 => ("alpha_tilde_1".into(), "beta_tilde"),
            TestMethod::Type2 => (format!("alpha_hat_{v}"), "beta_hat"),
            TestMethod::LowRho => ("alpha_check".into(), "beta_check"),
            TestMethod::Type1Efficient => ("alpha_tilde".into(), "beta_tilde"),
            TestMethod::Type2Efficient => ("alpha_hat".into(), "beta_hat"),
        }
    }
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Drift,
    Diffusion,
}

/// Monte Carlo sample of `pi_r`, sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct PiSample {
    pub r: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl PiSample {
    /// Empirical upper-`delta` quantile.
    pub fn quantile(&self, delta: f64) -> f64 {
        let m = self.values.len();
        let idx = (((1.0 - delta) * m as f64).ceil() as usize).clamp(1, m) - 1;
        self.values[idx]
    }

    /// Half-width of the order-statistic band `k +- sqrt(m delta (1-delta))`,
    /// a standard-error proxy for [`PiSample::quantile`].
    pub fn quantile_se(&self, delta: f64) -> f64 {
        let m = self.values.len();
        let k = ((1.0 - delta) * m as f64).ceil() as isize - 1;
        let c = ((m as f64) * delta * (1.0 - delta)).sqrt().ceil() as isize;
        let lo = (k - c).clamp(0, m as isize - 1) as usize;
        let hi = (k + c).clamp(0, m as isize - 1) as usize;
        0.5 * (self.values[hi] - self.values[lo])
    }

    /// Fraction of the sample at or above `x`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < x);
        (self.values.len() - below) as f64 / self.values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NullLaw {
    Chi2(usize),
    Pi(Arc<PiSample>),
}

impl NullLaw {
    pub fn label(&self) -> String {
        match self {
            NullLaw::Chi2(k) => format!("chi2({k})"),
            NullLaw::Pi(s) => format!("pi({})", s.r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    Reject,
    Accept,
    NotApplicable,
}

impl Decision {
    pub fn is_reject(self) -> bool {
        self == Decision::Reject
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::Accept => "accept",
            Decision::NotApplicable => "n/a",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestOutcome {
    pub which: Which,
    pub method: TestMethod,
    pub statistic: f64,
    /// Value before clamping at zero.
    pub raw_statistic: f64,
    /// Set when the raw statistic was below `-CLAMP_FLAG`.
    pub clamp_flagged: bool,
    pub null: Option<NullLaw>,
    pub quantile: f64,
    /// Monte Carlo standard-error proxy of `quantile` (zero for chi-square).
    pub quantile_se: f64,
    /// `P(null >= statistic)`: Monte Carlo for `pi_r`, exact for chi-square.
    pub p_value: f64,
    pub decision: Decision,
}

impl TestOutcome {
    pub fn not_applicable(which: Which, method: TestMethod) -> Self {
        Self {
            which,
            method,
            statistic: f64::NAN,
            raw_statistic: f64::NAN,
            clamp_flagged: false,
            null: None,
            quantile: f64::NAN,
            quantile_se: f64::NAN,
            p_value: f64::NAN,
            decision: Decision::NotApplicable,
        }
    }

    pub fn applies(&self) -> bool {
        self.decision != Decision::NotApplicable
    }
}

/// Four-way reading of the two decisions: 1 neither rejected, 2 only the
/// diffusion part, 3 only the drift part, 4 both.
pub fn judged_case(drift_reject: bool, diffusion_reject: bool) -> u8 {
    match (drift_reject, diffusion_reject) {
        (false, false) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (true, true) => 4,
    }
}

pub fn case_description(case: u8) -> &'static str {
    match case {
        1 => "neither alpha nor beta is rejected",
        2 => "only beta is rejected",
        3 => "only alpha is rejected",
        4 => "both alpha and beta are rejected",
        _ => "undefined",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub drift: TestOutcome,
    pub diffusion: TestOutcome,
    /// Present when both parts apply.
    pub case: Option<u8>,
    pub unrestricted: Estimate<f64>,
    pub restricted: Estimate<f64>,
    /// Point at which the `pi_r` matrices were evaluated.
    pub plug_in_theta: Option<Vec<f64>>,
}

/// Where `J_b` and `K_b` are evaluated for the `pi_r` null.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum PlugIn {
    /// The unrestricted final estimate.
    #[default]
    Estimate,
    /// A fixed parameter, for example the truth in a simulation study.
    Fixed(Vec<f64>),
    /// A ready-made sample, reused across replicates.
    Sample(Arc<PiSample>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestOptions {
    pub delta: f64,
    pub mc_n: usize,
    pub seed: u64,
    pub quad_steps: usize,
    pub plug_in: PlugIn,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            delta: 0.05,
            mc_n: DEFAULT_MC_N,
            seed: 0,
            quad_steps: DEFAULT_QUAD_STEPS,
            plug_in: PlugIn::Estimate,
        }
    }
}

/// `G = diag(0, (J_free,free)^{-1})` after reordering: zero on the fixed
/// rows and columns, the inverse of the free block of `j` elsewhere.
pub fn g_block(j: &Matrix<f64>, fixed: &[usize]) -> Result<Matrix<f64>> {
    let p = j.rows();
    if fixed.iter().any(|&i| i >= p) {
        return Err(Error::InvalidArgument("fixed index out of range".into()));
    }
    let free: Vec<usize> = (0..p).filter(|i| !fixed.contains(i)).collect();
    let mut g = Matrix::zeros(p, p);
    if free.is_empty() {
        return Ok(g);
    }
    let inv = checked_inverse(&j.submatrix(&free), "free block")?;
    for (a, &i) in free.iter().enumerate() {
        for (b, &k) in free.iter().enumerate() {
            g[(i, k)] = inv[(a, b)];
        }
    }
    Ok(g)
}

/// Draws `mc_n` values of `Z^T (J^{-1} - G) Z` with `Z ~ N(0, K)` and `G`
/// the block for the `fixed` coordinates.
pub fn pi_r_sample(j: &Matrix<f64>, k: &Matrix<f64>, fixed: &[usize], mc_n: usize, seed: u64) -> Result<PiSample> {
    let p = j.rows();
    if j.cols() != p || k.rows() != p || k.cols() != p {
        return Err(Error::dim("K_b", p, k.rows()));
    }
    if fixed.is_empty() || fixed.len() > p {
        return Err(Error::InvalidArgument(format!("pi_r needs 1 <= r <= p = {p}, got r = {}", fixed.len())));
    }
    if mc_n == 0 {
        return Err(Error::InvalidArgument("mc_n must be positive".into()));
    }
    let kmin = k.symmetrized().symmetric_eigenvalues().first().copied().unwrap_or(0.0);
    if kmin < -1e-10 * k.max_abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("K_b is not positive semidefinite (min eigenvalue {kmin:e})")));
    }
    let jinv = checked_inverse(j, "J_b")?;
    let a = jinv.sub(&g_block(j, fixed)?).symmetrized();
    let l = k.symmetrized().psd_factor();
    // Blocked streams keep the sample independent of any later parallel split.
    const BLOCK: usize = 4096;
    let mut values = Vec::with_capacity(mc_n);
    let (mut xi, mut z) = (vec![0.0; p], vec![0.0; p]);
    for b in 0..mc_n.div_ceil(BLOCK) {
        let mut s = Stream::new(derive_seed(seed, 0x5049), b as u64);
        for _ in 0..BLOCK.min(mc_n - b * BLOCK) {
            s.fill_normal(&mut xi);
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = (0..p).map(|c| l[(i, c)] * xi[c]).sum();
            }
            values.push(a.quad_form(&z));
        }
    }
    values.sort_by(f64::total_cmp);
    Ok(PiSample {
        r: fixed.len(),
        seed,
        values,
    })
}

/// Upper-`delta` quantile of `pi_r` for the first `r` coordinates fixed.
pub fn pi_r_quantile(
    j: &Matrix<f64>,
    k: &Matrix<f64>,
    r: usize,
    delta: f64,
    mc_n: usize,
    seed: u64,
) -> Result<(f64, Arc<PiSample>)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("level delta must lie in (0, 1), got {delta}")));
    }
    let fixed: Vec<usize> = (0..r).collect();
    let s = pi_r_sample(j, k, &fixed, mc_n, seed)?;
    Ok((s.quantile(delta), Arc::new(s)))
}

/// `pi_r` sample for `hyp` with `J_b`, `K_b` evaluated at `theta`.
pub fn pi_for_hypothesis<T: Scalar>(
    model: &ModelSpec<T>,
    hyp: &Hypothesis,
    theta: &[T],
    opts: &TestOptions,
) -> Result<PiSample> {
    let info = info_matrices(model, theta, opts.quad_steps)?;
    let to64 = |m: &Matrix<T>| {
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            for c in 0..m.cols() {
                out[(i, c)] = m[(i, c)].as_f64();
            }
        }
        out
    };
    pi_r_sample(&to64(&info.j_b), &to64(&info.k_b), &hyp.alpha_indices(), opts.mc_n, opts.seed)
}

/// Unrestricted schedule used by `method`.
fn unrestricted_with<T: Scalar>(
    ctx: &ContrastContext<'_, T>,
    method: TestMethod,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let model = ctx.model;
    if model.shared_params {
        let Some(base) = method.base() else {
            return Err(Error::Unsupported("the low-rho test needs separate drift and diffusion parameters".into()));
        };
        let mode = match opts.regime {
            Regime::Auto => choose_regime(ctx.obs.epsilon.as_f64(), ctx.obs.n)?,
            Regime::FastDrift => SpecialMode::SharedFastDrift,
            Regime::FastDiffusion => SpecialMode::SharedFastDiffusion,
            Regime::Balanced => return Err(Error::Unsupported("the balanced regime is not covered".into())),
        };
        if mode != SpecialMode::SharedFastDrift {
            return Err(Error::Unsupported(
                "tests for shared parameters are available in the fast-drift regime only".into(),
            ));
        }
        return special_with(ctx, mode, base, rho, init, opts);
    }
    match method {
        TestMethod::Type1 | TestMethod::Type1Efficient => type1_with(ctx, rho, init, opts),
        TestMethod::Type2 | TestMethod::Type2Efficient => type2_with(ctx, rho, init, opts),
        TestMethod::LowRho => lowrho_with(ctx, Some(rho), init, opts),
    }
}

fn stage_params<'e, T: Scalar>(est: &'e Estimate<T>, name: &str) -> Result<&'e [T]> {
    est.stage(name)
        .map(|s| s.params.as_slice())
        .ok_or_else(|| Error::InvalidArgument(format!("estimate has no stage `{name}`")))
}

type Objective<'a, T> = Box<dyn Fn(&[T]) -> Result<T> + 'a>;

/// Restricted counterparts of the two test stages, with the frozen inputs
/// taken from `unres`.
fn restricted_with<T: Scalar>(
    ctx: &ContrastContext<'_, T>,
    hyp: &Hypothesis,
    method: TestMethod,
    unres: &Estimate<T>,
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let model = ctx.model;
    let v = ctx.v;
    let o = &opts.optim;
    let (drift_name, diff_name) = method.stage_names(v);
    let apins = Hypothesis::pins::<T>(&hyp.alpha_fixed);
    let bpins = Hypothesis::pins::<T>(&hyp.beta_fixed);
    let shared = model.shared_params;
    let a_start = stage_params(unres, &drift_name)?.to_vec();
    let drift_name_h0 = drift_name.clone();
    let restrict = |f: &dyn Fn(&[T]) -> Result<T>, contrast: &str| -> Result<Stage<T>> {
        run_stage(&drift_name_h0, contrast, StageKind::Drift, &f, &model.box_alpha, &a_start, &apins, None, o)
    };
    let drift: Stage<T> = match method {
        TestMethod::Type1 => restrict(&|a| ctx.u1(a), "U1")?,
        TestMethod::Type2 => {
            let prev = if v >= 2 {
                stage_params(unres, &format!("alpha_hat_{}", v - 1))?.to_vec()
            } else {
                a_start.clone()
            };
            restrict(&|a| ctx.v_stage(a, &prev, v), &format!("V{v}"))?
        }
        TestMethod::LowRho => {
            let bc = stage_params(unres, "beta_check")?.to_vec();
            restrict(&|a| ctx.w2(a, &bc), "W2")?
        }
        TestMethod::Type1Efficient => {
            let metric = if shared {
                stage_params(unres, "alpha_tilde_1")?.to_vec()
            } else {
                stage_params(unres, "beta_tilde")?.to_vec()
            };
            restrict(&|a| ctx.u3(a, &metric), "U3")?
        }
        TestMethod::Type2Efficient => {
            let av = stage_params(unres, &format!("alpha_hat_{v}"))?.to_vec();
            let metric = if shared { av.clone() } else { stage_params(unres, "beta_hat")?.to_vec() };
            restrict(&|a| ctx.v_final(a, &av, &metric), &format!("V{}", v + 2))?
        }
    };
    let mut stages = vec![drift];
    let mut beta_hat = None;
    if !shared && hyp.s() > 0 {
        let b_start = stage_params(unres, diff_name)?.to_vec();
        let (f, contrast): (Objective<'_, T>, String) = match method {
            TestMethod::LowRho => (Box::new(|b: &[T]| ctx.w1(b)), "W1".into()),
            _ => {
                let a_frozen = match method.base() {
                    Some(BaseType::Type1) => stage_params(unres, "alpha_tilde_1")?.to_vec(),
                    _ => stage_params(unres, &format!("alpha_hat_{v}"))?.to_vec(),
                };
                let label = if method.base() == Some(BaseType::Type1) { "U2".into() } else { format!("V{}", v + 1) };
                (Box::new(move |b: &[T]| ctx.u2(b, &a_frozen)), label)
            }
        };
        let s = run_stage(diff_name, &contrast, StageKind::Diffusion, &f, &model.box_beta, &b_start, &bpins, None, o)?;
        beta_hat = Some(s.params.clone());
        stages.push(s);
    }
    Ok(Estimate {
        method: unres.method,
        rho: unres.rho,
        v,
        alpha_hat: stages[0].params.clone(),
        beta_hat,
        stages,
        notes: vec![format!("restricted under {hyp}")],
    })
}

/// Restricted estimate under `hyp`: the two test stages re-minimized with
/// the hypothesis coordinates pinned.
pub fn restricted_estimate<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    hyp: &Hypothesis,
    method: TestMethod,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    hyp.validate(model)?;
    let ctx = ContrastContext::new(obs, model, approximation_degree(rho)?)?;
    let unres = unrestricted_with(&ctx, method, rho, init, opts)?;
    restricted_with(&ctx, hyp, method, &unres, opts)
}

/// Raw and clamped LR statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrStatistic {
    pub value: f64,
    pub raw: f64,
    pub flagged: bool,
}

/// Difference of the `(which, method)` test-stage contrast at the
/// restricted and unrestricted points, clamped at zero.
pub fn lr_statistic<T: Scalar>(
    unrestricted: &Estimate<T>,
    restricted: &Estimate<T>,
    which: Which,
    method: TestMethod,
) -> Result<LrStatistic> {
    if unrestricted.v != restricted.v || unrestricted.method != restricted.method {
        return Err(Error::InvalidArgument("estimates come from different schedules".into()));
    }
    let (drift, diff) = method.stage_names(unrestricted.v);
    let name = match which {
        Which::Drift => drift.as_str(),
        Which::Diffusion => diff,
    };
    let get = |e: &Estimate<T>| {
        e.stage(name)
            .map(|s| s.value.as_f64())
            .ok_or_else(|| Error::InvalidArgument(format!("{method} statistic needs stage `{name}`")))
    };
    let raw = get(restricted)? - get(unrestricted)?;
    Ok(LrStatistic {
        value: raw.max(0.0),
        raw,
        flagged: raw < -CLAMP_FLAG,
    })
}

fn to_f64_estimate<T: Scalar>(e: &Estimate<T>) -> Estimate<f64> {
    let cv = |x: &[T]| x.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    Estimate {
        method: e.method,
        rho: e.rho,
        v: e.v,
        stages: e
            .stages
            .iter()
            .map(|s| Stage {
                name: s.name.clone(),
                contrast: s.contrast.clone(),
                kind: s.kind,
                params: cv(&s.params),
                value: s.value.as_f64(),
                initial_value: s.initial_value.as_f64(),
                status: s.status,
                evaluations: s.evaluations,
            })
            .collect(),
        alpha_hat: cv(&e.alpha_hat),
        beta_hat: e.beta_hat.as_deref().map(cv),
        notes: e.notes.clone(),
    }
}

fn decide(which: Which, method: TestMethod, lr: LrStatistic, null: NullLaw, delta: f64) -> Result<TestOutcome> {
    let (quantile, quantile_se, p_value) = match &null {
        NullLaw::Chi2(k) => (chi2_quantile(*k, delta)?, 0.0, chi2_sf(*k, lr.value)),
        NullLaw::Pi(s) => (s.quantile(delta), s.quantile_se(delta), s.upper_tail(lr.value)),
    };
    Ok(TestOutcome {
        which,
        method,
        statistic: lr.value,
        raw_statistic: lr.raw,
        clamp_flagged: lr.flagged,
        null: Some(null),
        quantile,
        quantile_se,
        p_value,
        decision: if lr.value > quantile { Decision::Reject } else { Decision::Accept },
    })
}

/// Unrestricted and restricted estimation, both statistics, their nulls
/// and decisions at level `topts.delta`.
#[allow(clippy::too_many_arguments)]
pub fn run_test<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    hyp: &Hypothesis,
    method: TestMethod,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
    topts: &TestOptions,
) -> Result<TestReport> {
    hyp.validate(model)?;
    if !(topts.delta > 0.0 && topts.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("level delta must lie in (0, 1), got {}", topts.delta)));
    }
    if !model.theta_in_box(init) {
        return Err(Error::InvalidArgument("initial parameter lies outside the parameter box".into()));
    }
    let ctx = ContrastContext::new(obs, model, approximation_degree(rho)?)?;
    let unres = unrestricted_with(&ctx, method, rho, init, opts)?;
    let res = restricted_with(&ctx, hyp, method, &unres, opts)?;
    let mut plug_in_theta = None;

    let drift = if hyp.r() == 0 {
        TestOutcome::not_applicable(Which::Drift, method)
    } else {
        let lr = lr_statistic(&unres, &res, Which::Drift, method)?;
        let null = if method.drift_uses_pi() {
            let sample = match &topts.plug_in {
                PlugIn::Sample(s) => {
                    if s.r != hyp.r() {
                        return Err(Error::InvalidArgument(format!(
                            "supplied pi sample has r = {}, hypothesis has r = {}",
                            s.r,
                            hyp.r()
                        )));
                    }
                    Arc::clone(s)
                }
                PlugIn::Fixed(theta) => {
                    let t: Vec<T> = theta.iter().map(|&x| T::c(x)).collect();
                    plug_in_theta = Some(theta.clone());
                    Arc::new(pi_for_hypothesis(model, hyp, &t, topts)?)
                }
                PlugIn::Estimate => {
                    let mut t = unres.alpha_hat.clone();
                    if !model.shared_params {
                        t.extend_from_slice(unres.beta_hat.as_deref().unwrap_or(&[]));
                    }
                    plug_in_theta = Some(t.iter().map(|x| x.as_f64()).collect());
                    Arc::new(pi_for_hypothesis(model, hyp, &t, topts)?)
                }
            };
            NullLaw::Pi(sample)
        } else {
            NullLaw::Chi2(hyp.r())
        };
        decide(Which::Drift, method, lr, null, topts.delta)?
    };

    let diffusion = if hyp.s() == 0 || model.shared_params {
        TestOutcome::not_applicable(Which::Diffusion, method)
    } else {
        let lr = lr_statistic(&unres, &res, Which::Diffusion, method)?;
        decide(Which::Diffusion, method, lr, NullLaw::Chi2(hyp.s()), topts.delta)?
    };

    let case = (drift.applies() && diffusion.applies())
        .then(|| judged_case(drift.decision.is_reject(), diffusion.decision.is_reject()));
    Ok(TestReport {
        drift,
        diffusion,
        case,
        unrestricted: to_f64_estimate(&unres),
        restricted: to_f64_estimate(&res),
        plug_in_theta,
    })
}
