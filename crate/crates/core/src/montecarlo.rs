//! Replicated simulation experiments: estimation moments, test sizes and
//! powers, normality diagnostics, timing, and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::asymptotics::{info_matrices, CovTarget, DEFAULT_QUAD_STEPS};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorOptions, Method, MultiStart, Regime, SpecialMode, StageStatus};
use crate::models::{ModelSpec, Overrides, Registry};
use crate::optimizer::OptimStatus;
use crate::paths::simulate_sde;
use crate::rng::{derive_seed, standard_normal_cdf, standard_normal_quantile};
use crate::stats::{chi2_cdf, chi2_pdf, ks_one_sample, ks_two_sample, mean, normality_diagnostics, sample_sd};
use crate::testing::{pi_for_hypothesis, run_test, Hypothesis, NullLaw, PiSample, PlugIn, TestMethod, TestOptions};

/// Replicate runs whose failure share exceeds this fail the experiment.
pub const MAX_FAILURE_RATE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub enum InitPolicy {
    /// Start every stage at the data-generating parameter.
    TrueInit,
    Fixed(Vec<f64>),
    /// Box midpoint plus a screening multi-start on the first drift stage.
    MultiStart { candidates: usize, local: usize },
}

/// Where the `pi_r` matrices are evaluated inside an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NullPlugIn {
    /// Per replicate, at the unrestricted estimate.
    #[default]
    Estimate,
    /// Once per experiment, at `theta0`.
    Theta0,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestConfig {
    pub hypothesis: Hypothesis,
    pub method: TestMethod,
    pub delta: f64,
    pub mc_n: usize,
    pub plug_in: NullPlugIn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueCase {
    pub label: String,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    pub theta0: Vec<f64>,
    pub epsilon: f64,
    pub n: usize,
    /// Overrides the model's horizon.
    pub horizon: Option<f64>,
    pub refine: usize,
    pub rho: f64,
    pub methods: Vec<Method>,
    pub init: InitPolicy,
    pub replicates: usize,
    pub base_seed: u64,
    pub test: Option<TestConfig>,
    /// Data-generating parameters; empty means a single case at `theta0`.
    pub cases: Vec<TrueCase>,
    pub regime: Regime,
    pub quad_steps: usize,
    pub retain_raw: bool,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: &str, theta0: Vec<f64>, epsilon: f64, n: usize) -> Self {
        Self {
            model: model.into(),
            theta0,
            epsilon,
            n,
            horizon: None,
            refine: 10,
            rho: 1.0,
            methods: vec![Method::Type1, Method::Type2],
            init: InitPolicy::TrueInit,
            replicates: 500,
            base_seed: 1,
            test: None,
            cases: Vec::new(),
            regime: Regime::Auto,
            quad_steps: DEFAULT_QUAD_STEPS,
            retain_raw: false,
            workers: None,
            output_dir: None,
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec<f64>> {
        let ov = Overrides {
            horizon: self.horizon,
            ..Overrides::default()
        };
        Registry::default().build(&self.model, &ov)
    }

    pub fn true_cases(&self) -> Vec<TrueCase> {
        if self.cases.is_empty() {
            vec![TrueCase {
                label: "theta0".into(),
                theta: self.theta0.clone(),
            }]
        } else {
            self.cases.clone()
        }
    }

    pub fn validate(&self, model: &ModelSpec<f64>) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n == 0 || self.refine == 0 {
            return Err(Error::InvalidArgument("n and refine must be positive".into()));
        }
        if self.methods.is_empty() && self.test.is_none() {
            return Err(Error::InvalidArgument("nothing to run: no methods and no test".into()));
        }
        if !model.theta_in_box(&self.theta0) {
            return Err(Error::InvalidArgument("theta0 lies outside the parameter box".into()));
        }
        for c in self.true_cases() {
            if !model.theta_in_box(&c.theta) {
                return Err(Error::InvalidArgument(format!("case `{}` lies outside the parameter box", c.label)));
            }
        }
        if let InitPolicy::Fixed(t) = &self.init {
            if !model.theta_in_box(t) {
                return Err(Error::InvalidArgument("fixed init lies outside the parameter box".into()));
            }
        }
        if let InitPolicy::MultiStart { candidates, local } = self.init {
            if candidates == 0 || local == 0 || local > candidates {
                return Err(Error::InvalidArgument("multi-start needs 1 <= local <= candidates".into()));
            }
        }
        if let Some(t) = &self.test {
            t.hypothesis.validate(model)?;
            if !(t.delta > 0.0 && t.delta < 1.0) {
                return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", t.delta)));
            }
            if t.mc_n == 0 {
                return Err(Error::InvalidArgument("mc_n must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Seed of replicate `index` in case `case`.
pub fn replicate_seed(base: u64, case: usize, index: usize) -> u64 {
    derive_seed(derive_seed(base, case as u64), index as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodRecord {
    pub theta_hat: Option<Vec<f64>>,
    pub error: Option<String>,
    pub nonconverged: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestRecord {
    pub drift_stat: f64,
    pub diffusion_stat: f64,
    pub drift_reject: Option<bool>,
    pub diffusion_reject: Option<bool>,
    pub case: Option<u8>,
    pub clamp_flagged: bool,
    /// Unrestricted final estimate of the test schedule.
    pub theta_hat: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub methods: Vec<MethodRecord>,
    pub test: Option<TestRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub theo_sd: f64,
    pub ks_stat: f64,
    pub ks_p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub coords: Vec<CoordSummary>,
    pub successes: usize,
    pub failures: usize,
    pub nonconverged: usize,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestSummary {
    pub method: TestMethod,
    pub hypothesis: Hypothesis,
    pub delta: f64,
    /// Counts of judged cases 1..=4.
    pub case_counts: [usize; 4],
    pub drift_rejections: usize,
    pub diffusion_rejections: usize,
    pub drift_applicable: bool,
    pub diffusion_applicable: bool,
    pub completed: usize,
    pub failures: usize,
    pub clamp_flags: usize,
    /// KS of the drift statistic against its null (two-sample for `pi_r`).
    pub drift_ks: Option<(f64, f64)>,
    pub diffusion_ks: Option<(f64, f64)>,
    /// Sample used as the drift null when it is `pi_r` under the `theta0` plug-in.
    pub pi_sample: Option<Arc<PiSample>>,
    pub total_seconds: f64,
}

impl TestSummary {
    pub fn drift_rate(&self) -> f64 {
        self.drift_rejections as f64 / self.completed.max(1) as f64
    }

    pub fn diffusion_rate(&self) -> f64 {
        self.diffusion_rejections as f64 / self.completed.max(1) as f64
    }

    pub fn case_rate(&self, case: u8) -> f64 {
        self.case_counts[case as usize - 1] as f64 / self.completed.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseSummary {
    pub label: String,
    pub theta: Vec<f64>,
    pub methods: Vec<MethodSummary>,
    pub test: Option<TestSummary>,
    /// Replicate records, kept when `retain_raw` is set.
    pub raw: Option<Vec<ReplicateRecord>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub cases: Vec<CaseSummary>,
    pub replicates: usize,
}

impl ExperimentSummary {
    pub fn failure_rate(&self) -> f64 {
        let mut fails = 0usize;
        let mut total = 0usize;
        for c in &self.cases {
            for m in &c.methods {
                fails += m.failures;
                total += m.failures + m.successes;
            }
            if let Some(t) = &c.test {
                fails += t.failures;
                total += t.failures + t.completed;
            }
        }
        if total == 0 {
            0.0
        } else {
            fails as f64 / total as f64
        }
    }

    pub fn failure_rate_ok(&self) -> bool {
        self.failure_rate() <= MAX_FAILURE_RATE
    }

    pub fn case(&self, label: &str) -> Option<&CaseSummary> {
        self.cases.iter().find(|c| c.label == label)
    }
}

impl CaseSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Names of the coordinates that `method` reports for `model`.
pub fn coord_names(model: &ModelSpec<f64>, method: Method) -> Vec<String> {
    let alpha = (1..=model.dims.p).map(|i| format!("alpha{i}"));
    match method {
        Method::Special(SpecialMode::SigmaKnown | SpecialMode::SharedFastDrift, _) => alpha.collect(),
        Method::Special(SpecialMode::SharedFastDiffusion, _) => alpha.collect(),
        _ if model.shared_params => alpha.collect(),
        _ => alpha.chain((1..=model.dims.q).map(|j| format!("beta{j}"))).collect(),
    }
}

/// Asymptotic SDs of the final estimates of `method`, with the limit
/// matrices evaluated at `theta`.
pub fn method_sds(
    model: &ModelSpec<f64>,
    method: Method,
    theta: &[f64],
    epsilon: f64,
    n: usize,
    quad_steps: usize,
) -> Result<Vec<f64>> {
    let len = coord_names(model, method).len();
    let target = match method {
        Method::Special(SpecialMode::SharedFastDiffusion, _) => CovTarget::Diffusion,
        Method::Special(..) => CovTarget::Drift,
        _ if model.shared_params || model.dims.q == 0 => CovTarget::Drift,
        _ => CovTarget::Final,
    };
    let sds = info_matrices(model, theta, quad_steps)?.theoretical_sds(target, epsilon, n)?;
    if sds.len() != len {
        return Err(Error::dim("theoretical SDs", len, sds.len()));
    }
    Ok(sds)
}

fn theoretical_sds(model: &ModelSpec<f64>, method: Method, theta: &[f64], cfg: &ExperimentConfig) -> Vec<f64> {
    method_sds(model, method, theta, cfg.epsilon, cfg.n, cfg.quad_steps).unwrap_or_else(|e| {
        warn!("theoretical SDs unavailable for {method}: {e}");
        vec![f64::NAN; coord_names(model, method).len()]
    })
}

/// Truth coordinates matching `coord_names`.
fn truth_for(model: &ModelSpec<f64>, method: Method, theta: &[f64]) -> Vec<f64> {
    let len = coord_names(model, method).len();
    theta[..len].to_vec()
}

struct CaseContext<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ModelSpec<f64>,
    case_index: usize,
    theta: Vec<f64>,
    pi: Option<Arc<PiSample>>,
}

fn run_replicate(cx: &CaseContext<'_>, index: usize) -> Result<ReplicateRecord> {
    let cfg = cx.cfg;
    let seed = replicate_seed(cfg.base_seed, cx.case_index, index);
    let obs = simulate_sde(cx.model, &cx.theta, cfg.epsilon, cfg.n, cfg.refine, seed)?;
    let (init, multi) = match &cfg.init {
        InitPolicy::TrueInit => (cx.theta.clone(), None),
        InitPolicy::Fixed(t) => (t.clone(), None),
        InitPolicy::MultiStart { candidates, local } => {
            let (a, b) = (cx.model.box_alpha.midpoint(), cx.model.box_beta.midpoint());
            let mut t = a;
            if !cx.model.shared_params {
                t.extend(b);
            }
            let ms = MultiStart {
                candidates: *candidates,
                local: *local,
                seed: derive_seed(seed, 0x4d53),
            };
            (t, Some(ms))
        }
    };
    let opts = EstimatorOptions {
        multi_start: multi,
        regime: cfg.regime,
        ..EstimatorOptions::default()
    };
    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let t0 = Instant::now();
            let r = estimate(&obs, cx.model, m, cfg.rho, &init, &opts);
            let seconds = t0.elapsed().as_secs_f64();
            match r {
                Ok(e) => MethodRecord {
                    nonconverged: e.stages.iter().any(|s| s.status == StageStatus::Optim(OptimStatus::MaxIters)),
                    theta_hat: Some(e.theta_hat()),
                    error: None,
                    seconds,
                },
                Err(e) => MethodRecord {
                    theta_hat: None,
                    error: Some(e.to_string()),
                    nonconverged: false,
                    seconds,
                },
            }
        })
        .collect();
    let test = cfg.test.as_ref().map(|tc| {
        let topts = TestOptions {
            delta: tc.delta,
            mc_n: tc.mc_n,
            seed: derive_seed(seed, 0x5445),
            quad_steps: cfg.quad_steps,
            plug_in: match &cx.pi {
                Some(s) => PlugIn::Sample(Arc::clone(s)),
                None => PlugIn::Estimate,
            },
        };
        match run_test(&obs, cx.model, &tc.hypothesis, tc.method, cfg.rho, &init, &opts, &topts) {
            Ok(rep) => TestRecord {
                drift_stat: rep.drift.statistic,
                diffusion_stat: rep.diffusion.statistic,
                drift_reject: rep.drift.applies().then(|| rep.drift.decision.is_reject()),
                diffusion_reject: rep.diffusion.applies().then(|| rep.diffusion.decision.is_reject()),
                case: rep.case,
                clamp_flagged: rep.drift.clamp_flagged || rep.diffusion.clamp_flagged,
                theta_hat: Some(rep.unrestricted.theta_hat()),
                error: None,
            },
            Err(e) => TestRecord {
                drift_stat: f64::NAN,
                diffusion_stat: f64::NAN,
                drift_reject: None,
                diffusion_reject: None,
                case: None,
                clamp_flagged: false,
                theta_hat: None,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(ReplicateRecord {
        index,
        seed,
        methods,
        test,
    })
}

fn simulation_failure(index: usize, seed: u64, cfg: &ExperimentConfig, e: &Error) -> ReplicateRecord {
    let msg = format!("simulation failed: {e}");
    ReplicateRecord {
        index,
        seed,
        methods: cfg
            .methods
            .iter()
            .map(|_| MethodRecord {
                theta_hat: None,
                error: Some(msg.clone()),
                nonconverged: false,
                seconds: 0.0,
            })
            .collect(),
        test: cfg.test.as_ref().map(|_| TestRecord {
            drift_stat: f64::NAN,
            diffusion_stat: f64::NAN,
            drift_reject: None,
            diffusion_reject: None,
            case: None,
            clamp_flagged: false,
            theta_hat: None,
            error: Some(msg.clone()),
        }),
    }
}

fn run_indices(cx: &CaseContext<'_>, indices: &[usize]) -> Vec<ReplicateRecord> {
    indices
        .par_iter()
        .map(|&i| {
            run_replicate(cx, i).unwrap_or_else(|e| {
                simulation_failure(i, replicate_seed(cx.cfg.base_seed, cx.case_index, i), cx.cfg, &e)
            })
        })
        .collect()
}

/// Deterministic reduce over replicate records, in index order whatever
/// order they arrive in.
fn aggregate(cx: &CaseContext<'_>, label: &str, mut records: Vec<ReplicateRecord>) -> CaseSummary {
    records.sort_by_key(|r| r.index);
    let cfg = cx.cfg;
    let model = cx.model;
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let names = coord_names(model, m);
            let truth = truth_for(model, m, &cx.theta);
            let theo = theoretical_sds(model, m, &cx.theta, cfg);
            let ok: Vec<&Vec<f64>> = records.iter().filter_map(|r| r.methods[mi].theta_hat.as_ref()).collect();
            let coords = names
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let xs: Vec<f64> = ok.iter().map(|t| t[c]).collect();
                    let errs: Vec<f64> = xs.iter().map(|x| x - truth[c]).collect();
                    let (ks_stat, ks_p) = match normality_diagnostics(&errs, theo[c]) {
                        Ok(k) => (k.statistic, k.p_value),
                        Err(_) => (f64::NAN, f64::NAN),
                    };
                    CoordSummary {
                        name: name.clone(),
                        truth: truth[c],
                        mean: if xs.is_empty() { f64::NAN } else { mean(&xs) },
                        sd: sample_sd(&xs),
                        theo_sd: theo[c],
                        ks_stat,
                        ks_p,
                    }
                })
                .collect();
            let failures = records.iter().filter(|r| r.methods[mi].error.is_some()).count();
            for r in records.iter().filter(|r| r.methods[mi].error.is_some()).take(3) {
                warn!("{m} replicate {} failed: {}", r.index, r.methods[mi].error.as_deref().unwrap_or(""));
            }
            MethodSummary {
                method: m,
                coords,
                successes: ok.len(),
                failures,
                nonconverged: records.iter().filter(|r| r.methods[mi].nonconverged).count(),
                total_seconds: records.iter().map(|r| r.methods[mi].seconds).sum(),
            }
        })
        .collect();
    let test = cfg.test.as_ref().map(|tc| {
        let done: Vec<&TestRecord> = records
            .iter()
            .filter_map(|r| r.test.as_ref())
            .filter(|t| t.error.is_none())
            .collect();
        let failures = records.len() - done.len();
        let mut case_counts = [0usize; 4];
        for t in &done {
            if let Some(c) = t.case {
                case_counts[c as usize - 1] += 1;
            }
        }
        let drift_stats: Vec<f64> = done.iter().map(|t| t.drift_stat).filter(|x| x.is_finite()).collect();
        let diff_stats: Vec<f64> = done.iter().map(|t| t.diffusion_stat).filter(|x| x.is_finite()).collect();
        let r = tc.hypothesis.r();
        let s = tc.hypothesis.s();
        let drift_ks = (drift_stats.len() >= 2)
            .then(|| match (&cx.pi, tc.method.drift_uses_pi()) {
                (Some(pi), true) => ks_two_sample(&drift_stats, &pi.values).ok(),
                (None, true) => None,
                (_, false) => ks_one_sample(&drift_stats, |x| chi2_cdf(r, x)).ok(),
            })
            .flatten()
            .map(|k| (k.statistic, k.p_value));
        let diffusion_ks = (diff_stats.len() >= 2 && s > 0)
            .then(|| ks_one_sample(&diff_stats, |x| chi2_cdf(s, x)).ok())
            .flatten()
            .map(|k| (k.statistic, k.p_value));
        TestSummary {
            method: tc.method,
            hypothesis: tc.hypothesis.clone(),
            delta: tc.delta,
            case_counts,
            drift_rejections: done.iter().filter(|t| t.drift_reject == Some(true)).count(),
            diffusion_rejections: done.iter().filter(|t| t.diffusion_reject == Some(true)).count(),
            drift_applicable: r > 0,
            diffusion_applicable: s > 0 && !model.shared_params,
            completed: done.len(),
            failures,
            clamp_flags: done.iter().filter(|t| t.clamp_flagged).count(),
            drift_ks,
            diffusion_ks,
            pi_sample: cx.pi.clone(),
            total_seconds: 0.0,
        }
    });
    CaseSummary {
        label: label.into(),
        theta: cx.theta.clone(),
        methods,
        test,
        raw: cfg.retain_raw.then_some(records),
    }
}

/// `pi_r` sample at `theta0`, shared by every case.
fn theta0_null(cfg: &ExperimentConfig, model: &ModelSpec<f64>) -> Result<Option<Arc<PiSample>>> {
    match &cfg.test {
        Some(tc) if tc.plug_in == NullPlugIn::Theta0 && tc.method.drift_uses_pi() && tc.hypothesis.r() > 0 => {
            let topts = TestOptions {
                delta: tc.delta,
                mc_n: tc.mc_n,
                seed: derive_seed(cfg.base_seed, 0x5049),
                quad_steps: cfg.quad_steps,
                plug_in: PlugIn::Estimate,
            };
            Ok(Some(Arc::new(pi_for_hypothesis(model, &tc.hypothesis, &cfg.theta0, &topts)?)))
        }
        _ => Ok(None),
    }
}

fn case_context<'a>(
    cfg: &'a ExperimentConfig,
    model: &'a ModelSpec<f64>,
    ci: usize,
    case: &TrueCase,
    pi: Option<Arc<PiSample>>,
) -> CaseContext<'a> {
    CaseContext {
        cfg,
        model,
        case_index: ci,
        theta: case.theta.clone(),
        pi,
    }
}

fn with_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs every case of `cfg`; writes the summary CSVs when `output_dir` is
/// set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let model = cfg.build_model()?;
    cfg.validate(&model)?;
    let cases = cfg.true_cases();
    let pi = theta0_null(cfg, &model)?;
    let mut out = Vec::with_capacity(cases.len());
    for (ci, case) in cases.iter().enumerate() {
        let cx = case_context(cfg, &model, ci, case, pi.clone());
        let indices: Vec<usize> = (0..cfg.replicates).collect();
        let t0 = Instant::now();
        let records = with_pool(cfg.workers, || run_indices(&cx, &indices))?;
        let elapsed = t0.elapsed().as_secs_f64();
        let mut summary = aggregate(&cx, &case.label, records);
        if let Some(t) = summary.test.as_mut() {
            t.total_seconds = elapsed;
        }
        info!("case {} finished in {:.1} s", case.label, elapsed);
        out.push(summary);
    }
    let summary = ExperimentSummary {
        config: cfg.clone(),
        cases: out,
        replicates: cfg.replicates,
    };
    if !summary.failure_rate_ok() {
        warn!(
            "failure rate {:.2}% exceeds {:.0}%",
            100.0 * summary.failure_rate(),
            100.0 * MAX_FAILURE_RATE
        );
    }
    if let Some(dir) = &cfg.output_dir {
        write_summary(&summary, dir)?;
    }
    Ok(summary)
}

/// `estimates.csv` contents.
pub fn estimates_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("method,coord,mean,sd,theo_sd,case,truth,n_ok,n_failed,n_nonconverged\n");
    for c in &s.cases {
        for m in &c.methods {
            for k in &m.coords {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    m.method, k.name, k.mean, k.sd, k.theo_sd, c.label, k.truth, m.successes, m.failures, m.nonconverged
                );
            }
        }
    }
    out
}

/// `tests.csv` contents: judged-case counts and rejection rates per true
/// case.
pub fn tests_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("case,judged_case,count,empirical_rate\n");
    for c in &s.cases {
        let Some(t) = &c.test else { continue };
        if t.drift_applicable && t.diffusion_applicable {
            for k in 1..=4u8 {
                let _ = writeln!(out, "{},{},{},{}", c.label, k, t.case_counts[k as usize - 1], t.case_rate(k));
            }
        }
        if t.drift_applicable {
            let _ = writeln!(out, "{},alpha-rejected,{},{}", c.label, t.drift_rejections, t.drift_rate());
        }
        if t.diffusion_applicable {
            let _ = writeln!(out, "{},beta-rejected,{},{}", c.label, t.diffusion_rejections, t.diffusion_rate());
        }
        let total = t.completed + t.failures;
        let _ = writeln!(out, "{},failed,{},{}", c.label, t.failures, t.failures as f64 / total.max(1) as f64);
    }
    out
}

/// `diagnostics.csv` contents: KS of estimates against their asymptotic
/// normal law and of test statistics against their nulls.
pub fn diagnostics_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("coord,ks_stat,p,case,method,target\n");
    for c in &s.cases {
        for m in &c.methods {
            for k in &m.coords {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},normal(0;{})",
                    k.name, k.ks_stat, k.ks_p, c.label, m.method, k.theo_sd
                );
            }
        }
        if let Some(t) = &c.test {
            if let Some((d, p)) = t.drift_ks {
                let target = if t.method.drift_uses_pi() {
                    format!("pi({})", t.hypothesis.r())
                } else {
                    format!("chi2({})", t.hypothesis.r())
                };
                let _ = writeln!(out, "lambda_alpha,{d},{p},{},{},{target}", c.label, t.method);
            }
            if let Some((d, p)) = t.diffusion_ks {
                let _ = writeln!(out, "lambda_beta,{d},{p},{},{},chi2({})", c.label, t.method, t.hypothesis.s());
            }
        }
    }
    out
}

/// `timing.csv` contents. Wall-clock values differ between runs.
pub fn timing_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("case,method,replicates,total_seconds,mean_seconds\n");
    for c in &s.cases {
        for m in &c.methods {
            let n = (m.successes + m.failures).max(1);
            let _ = writeln!(out, "{},{},{},{},{}", c.label, m.method, n, m.total_seconds, m.total_seconds / n as f64);
        }
        if let Some(t) = &c.test {
            let n = (t.completed + t.failures).max(1);
            let _ = writeln!(
                out,
                "{},test-{},{},{},{}",
                c.label,
                t.method,
                n,
                t.total_seconds,
                t.total_seconds / n as f64
            );
        }
    }
    out
}

pub fn write_summary(s: &ExperimentSummary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("estimates.csv"), estimates_csv(s))?;
    fs::write(dir.join("tests.csv"), tests_csv(s))?;
    fs::write(dir.join("diagnostics.csv"), diagnostics_csv(s))?;
    fs::write(dir.join("timing.csv"), timing_csv(s))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Histogram,
    EmpiricalCdf,
    Qq,
    StatisticVsNull,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::Histogram, PlotKind::EmpiricalCdf, PlotKind::Qq, PlotKind::StatisticVsNull];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Histogram => "histogram",
            PlotKind::EmpiricalCdf => "empirical-cdf",
            PlotKind::Qq => "qq",
            PlotKind::StatisticVsNull => "statistic-vs-null",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown plot kind `{s}`")))
    }
}

/// Pairs of matching order statistics, `(x_(i), y_(i))`; the longer sample
/// is read at the shorter one's plotting positions.
pub fn qq_pairs(sample: &[f64], reference: &[f64]) -> Vec<(f64, f64)> {
    let mut a = sample.to_vec();
    let mut b = reference.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let m = a.len().min(b.len());
    let pick = |v: &[f64], i: usize| v[((i as f64 + 0.5) / m as f64 * v.len() as f64) as usize];
    (0..m).map(|i| (pick(&a, i), pick(&b, i))).collect()
}

/// Standardized sample against `N(0, 1)` quantiles at `(i - 1/2)/m`.
pub fn qq_normal(standardized: &[f64]) -> Vec<(f64, f64)> {
    let mut a = standardized.to_vec();
    a.sort_by(f64::total_cmp);
    let m = a.len() as f64;
    a.iter()
        .enumerate()
        .map(|(i, &x)| (standard_normal_quantile((i as f64 + 0.5) / m), x))
        .collect()
}

fn standardized(c: &CaseSummary, mi: usize, coord: usize) -> Vec<f64> {
    let Some(raw) = &c.raw else { return Vec::new() };
    let k = &c.methods[mi].coords[coord];
    raw.iter()
        .filter_map(|r| r.methods[mi].theta_hat.as_ref())
        .map(|t| (t[coord] - k.truth) / k.theo_sd)
        .collect()
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if xs.is_empty() {
        return Vec::new();
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = ((hi - lo) / bins as f64).max(1e-12);
    let mut counts = vec![0usize; bins];
    for &x in xs {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + (i as f64 + 0.5) * w, w, c))
        .collect()
}

/// Grid of `(x, density, cdf)` of the statistic null law.
pub fn null_curve(null: &NullLaw, points: usize) -> Vec<(f64, f64, f64)> {
    match null {
        NullLaw::Chi2(k) => {
            let top = crate::stats::chi2_quantile(*k, 1e-4).unwrap_or(30.0);
            (0..points)
                .map(|i| {
                    let x = top * (i as f64 + 0.5) / points as f64;
                    (x, chi2_pdf(*k, x), chi2_cdf(*k, x))
                })
                .collect()
        }
        NullLaw::Pi(s) => {
            let top = s.quantile(1e-4);
            let w = top / points as f64;
            (0..points)
                .map(|i| {
                    let x = (i as f64 + 0.5) * w;
                    let cdf = 1.0 - s.upper_tail(x);
                    let dens = (s.upper_tail(x - 0.5 * w) - s.upper_tail(x + 0.5 * w)) / w;
                    (x, dens, cdf)
                })
                .collect()
        }
    }
}

/// Writes CSV plot data of `kind` into `dir`; returns the written paths.
pub fn emit_plot_data(s: &ExperimentSummary, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>> {
    if s.cases.iter().any(|c| c.raw.is_none()) {
        return Err(Error::InvalidArgument(
            "plot data needs the raw replicate store; rerun with retain_raw".into(),
        ));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    for c in &s.cases {
        if kind == PlotKind::StatisticVsNull {
            let (Some(t), Some(raw)) = (&c.test, &c.raw) else { continue };
            let parts = [
                ("alpha", t.drift_applicable, t.hypothesis.r(), true),
                ("beta", t.diffusion_applicable, t.hypothesis.s(), false),
            ];
            for (tag, applies, dof, is_drift) in parts {
                if !applies {
                    continue;
                }
                let null = match (&t.pi_sample, is_drift && t.method.drift_uses_pi()) {
                    (Some(pi), true) => NullLaw::Pi(Arc::clone(pi)),
                    (None, true) => continue,
                    _ => NullLaw::Chi2(dof),
                };
                let mut stats: Vec<f64> = raw
                    .iter()
                    .filter_map(|r| r.test.as_ref())
                    .map(|t| if is_drift { t.drift_stat } else { t.diffusion_stat })
                    .filter(|x| x.is_finite())
                    .collect();
                stats.sort_by(f64::total_cmp);
                let m = stats.len().max(1) as f64;
                let mut body = format!("x,null_density,null_cdf,empirical_cdf\n# null {}\n", null.label());
                for (x, d, f) in null_curve(&null, 200) {
                    let e = stats.partition_point(|&v| v <= x) as f64 / m;
                    let _ = writeln!(body, "{x},{d},{f},{e}");
                }
                put(format!("{}_lambda_{tag}_vs_null.csv", c.label), body)?;
            }
            continue;
        }
        for (mi, ms) in c.methods.iter().enumerate() {
            for (ci, k) in ms.coords.iter().enumerate() {
                let z = standardized(c, mi, ci);
                let base = format!("{}_{}_{}", c.label, ms.method, k.name);
                match kind {
                    PlotKind::Histogram => {
                        let m = z.len().max(1) as f64;
                        let mut body = String::from("bin_center,bin_width,count,density,normal_density\n");
                        for (x, w, n) in histogram(&z, 30) {
                            let _ = writeln!(body, "{x},{w},{n},{},{}", n as f64 / (m * w), normal_pdf(x));
                        }
                        put(format!("{base}_histogram.csv"), body)?;
                    }
                    PlotKind::EmpiricalCdf => {
                        let mut zs = z.clone();
                        zs.sort_by(f64::total_cmp);
                        let m = zs.len() as f64;
                        let mut body = String::from("x,empirical_cdf,normal_cdf\n");
                        for (i, x) in zs.iter().enumerate() {
                            let _ = writeln!(body, "{x},{},{}", (i + 1) as f64 / m, standard_normal_cdf(*x));
                        }
                        put(format!("{base}_ecdf.csv"), body)?;
                    }
                    PlotKind::Qq => {
                        let mut body = String::from("theoretical,sample\n");
                        for (a, b) in qq_normal(&z) {
                            let _ = writeln!(body, "{a},{b}");
                        }
                        put(format!("{base}_qq.csv"), body)?;
                    }
                    PlotKind::StatisticVsNull => unreachable!(),
                }
            }
        }
    }
    Ok(written)
}
