//! Command-line front end: `simulate`, `estimate`, `test`, `experiment` and `info`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use adaptive_sde::asymptotics::{info_matrices, CovTarget, DEFAULT_QUAD_STEPS};
use adaptive_sde::estimators::{approximation_degree, estimate, Estimate, EstimatorOptions, Method, MultiStart};
use adaptive_sde::linalg::Matrix;
use adaptive_sde::models::{BuiltinModel, ModelSpec, Overrides, Registry};
use adaptive_sde::montecarlo::{coord_names, emit_plot_data, estimates_csv, method_sds, run_experiment, write_summary};
use adaptive_sde::paths::{format_observations, load_observations, simulate_sde, ObservationSet};
use adaptive_sde::rng::derive_seed;
use adaptive_sde::testing::{case_description, run_test, Hypothesis, PlugIn, TestMethod, TestOptions, TestOutcome};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod config;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "ADAPTIVE_SDE_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<adaptive_sde::Error> for CliError {
    fn from(e: adaptive_sde::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "adaptive-sde", version, about = "Adaptive estimation and tests for small-dispersion diffusions")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one observed path and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate the parameters from an observation CSV.
    Estimate(EstimateArgs),
    /// Test a parameter hypothesis on an observation CSV.
    Test(TestArgs),
    /// Run a Monte Carlo experiment from a config file.
    #[command(after_long_help = config::schema_help(), after_help = config::schema_help())]
    Experiment(ExperimentArgs),
    /// Print model metadata, v and information-matrix condition numbers.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model name (model1, sir, model3, ou).
    #[arg(long)]
    pub model: Option<String>,
    /// Observation horizon T (overrides the model default).
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameter (alpha then beta), comma separated; defaults to the model's.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Euler sub-steps per observation interval.
    #[arg(long, default_value_t = 10)]
    pub refine: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observation CSV (as written by `simulate`).
    #[arg(long)]
    pub obs: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Balance coefficient; defaults to the model's.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Initial value: `true` (parameter recorded in the file), `midpoint`,
    /// `multistart` or a comma-separated vector.
    #[arg(long, default_value = "true", allow_hyphen_values = true)]
    pub init: String,
    /// Seed for multi-start screening and Monte Carlo nulls.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Estimation method (type1, type2, lowrho, joint, sigma-known-type1, ...).
    #[arg(long, default_value = "type1")]
    pub method: String,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Null hypothesis, e.g. "alpha[1]=3.0, beta[2]=0.5" (1-based).
    #[arg(long)]
    pub hypothesis: String,
    /// type1, type2, lowrho, type1-efficient or type2-efficient.
    #[arg(long, default_value = "type1")]
    pub method: String,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Monte Carlo draws for the pi_r null.
    #[arg(long, default_value_t = adaptive_sde::testing::DEFAULT_MC_N)]
    pub mc_n: usize,
    /// Evaluate the pi_r matrices at this parameter instead of the estimate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub plug_in: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set replicates=50 --set test.delta=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (overrides `workers` and the environment).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Parameter at which the limit matrices are evaluated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_QUAD_STEPS)]
    pub quad_steps: usize,
}

fn build_model(name: &str, horizon: Option<f64>) -> Result<ModelSpec<f64>, CliError> {
    let ov = Overrides {
        horizon,
        ..Overrides::default()
    };
    Ok(Registry::default().build(name, &ov)?)
}

fn builtin(name: &str) -> Option<BuiltinModel> {
    BuiltinModel::from_name(name).ok()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn model_name(args: &ModelArgs, obs: Option<&ObservationSet<f64>>) -> Result<String, CliError> {
    args.model
        .clone()
        .or_else(|| obs.and_then(|o| o.model.clone()))
        .ok_or_else(|| CliError::Usage("no model given and none recorded in the observation file".into()))
}

pub fn simulate(a: &SimulateArgs) -> Result<String, CliError> {
    let name = a.model.model.clone().ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let model = build_model(&name, a.model.horizon)?;
    let b = builtin(&name);
    let theta = match (&a.theta, b) {
        (Some(t), _) => t.clone(),
        (None, Some(b)) => b.default_theta(),
        (None, None) => return Err(CliError::Usage(format!("--theta is required for model `{name}`"))),
    };
    let eps = a.eps.or(b.map(|b| b.default_epsilon())).ok_or_else(|| CliError::Usage("--eps is required".into()))?;
    let n = a.n.or(b.map(|b| b.default_n())).ok_or_else(|| CliError::Usage("--n is required".into()))?;
    if !model.theta_in_box(&theta) {
        return Err(CliError::Usage(format!("theta ({}) lies outside the parameter box", fmt_vec(&theta))));
    }
    let obs = simulate_sde(&model, &theta, eps, n, a.refine, a.seed)?;
    let text = format_observations(&obs);
    match &a.out {
        Some(p) => {
            fs::write(p, &text).map_err(|e| io_err(p, e))?;
            Ok(format!("wrote {} observations (n = {n}) to {}\n", n + 1, p.display()))
        }
        None => Ok(text),
    }
}

struct Fit {
    obs: ObservationSet<f64>,
    model: ModelSpec<f64>,
    rho: f64,
    init: Vec<f64>,
    opts: EstimatorOptions,
}

fn prepare(a: &FitArgs) -> Result<Fit, CliError> {
    let obs: ObservationSet<f64> = load_observations(&a.obs)?;
    let name = model_name(&a.model, Some(&obs))?;
    let model = build_model(&name, a.model.horizon.or(Some(obs.horizon)))?;
    if model.dims.d != obs.d {
        return Err(CliError::Usage(format!(
            "observations have dimension {} but model `{name}` has {}",
            obs.d, model.dims.d
        )));
    }
    let rho = a.rho.or(builtin(&name).map(|b| b.default_rho())).unwrap_or(1.0);
    let mut mid = model.box_alpha.midpoint();
    mid.extend(model.box_beta.midpoint());
    let mut opts = EstimatorOptions::default();
    let init = match a.init.as_str() {
        "true" => obs
            .theta
            .clone()
            .ok_or_else(|| CliError::Usage("--init true needs a parameter recorded in the observation file".into()))?,
        "midpoint" => mid,
        "multistart" => {
            opts.multi_start = Some(MultiStart {
                candidates: 20_000,
                local: 200,
                seed: derive_seed(a.seed, 0x4d53),
            });
            mid
        }
        list => list
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Usage(format!("cannot parse --init `{list}`")))?,
    };
    if init.len() != model.theta_len() {
        return Err(CliError::Usage(format!(
            "initial value has {} entries, model `{name}` needs {}",
            init.len(),
            model.theta_len()
        )));
    }
    Ok(Fit {
        obs,
        model,
        rho,
        init,
        opts,
    })
}

fn header(fit: &Fit, extra: &str) -> String {
    let o = &fit.obs;
    let mut s = format!("# model={} n={} T={} eps={} rho={}", fit.model.name, o.n, o.horizon, o.epsilon, fit.rho);
    if let Some(seed) = o.seed {
        let _ = write!(s, " seed={seed}");
    }
    if let Some(t) = &o.theta {
        let _ = write!(s, " theta={}", fmt_vec(t));
    }
    s.push_str(extra);
    s.push('\n');
    s
}

/// `estimate.csv`: one row per stage parameter, then the final estimate
/// with asymptotic standard errors evaluated at the estimate.
pub fn estimate_csv(est: &Estimate<f64>, model: &ModelSpec<f64>, ses: &[f64]) -> String {
    let mut s = String::from("row,stage,contrast,status,contrast_value,param,value,se\n");
    for st in &est.stages {
        let base = if st.name.contains("beta") { "beta" } else { "alpha" };
        for (i, v) in st.params.iter().enumerate() {
            let _ = writeln!(
                s,
                "stage,{},{},{},{:.17e},{base}{},{v:.17e},",
                st.name,
                st.contrast,
                st.status.as_str(),
                st.value,
                i + 1
            );
        }
    }
    let names = coord_names(model, est.method);
    for (k, (name, v)) in names.iter().zip(est.theta_hat()).enumerate() {
        let se = ses.get(k).map(|x| format!("{x:.6e}")).unwrap_or_default();
        let _ = writeln!(s, "final,,,,,{name},{v:.17e},{se}");
    }
    s
}

pub fn estimate_cmd(a: &EstimateArgs) -> Result<String, CliError> {
    let fit = prepare(&a.fit)?;
    let method = Method::from_name(&a.method)?;
    let est = estimate(&fit.obs, &fit.model, method, fit.rho, &fit.init, &fit.opts)?;
    let mut full = est.theta_hat();
    if full.len() < fit.model.theta_len() {
        full.extend_from_slice(&fit.init[full.len()..]);
    }
    let ses = method_sds(&fit.model, method, &full, fit.obs.epsilon, fit.obs.n, DEFAULT_QUAD_STEPS).unwrap_or_default();
    fs::create_dir_all(&a.fit.out_dir).map_err(|e| io_err(&a.fit.out_dir, e))?;
    let path = a.fit.out_dir.join("estimate.csv");
    let extra = format!(" method={} v={} init={}", est.method, est.v, a.fit.init);
    let body = header(&fit, &extra) + &estimate_csv(&est, &fit.model, &ses);
    fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    let mut out = format!("method {} (v = {})\n", est.method, est.v);
    for (k, (name, v)) in coord_names(&fit.model, est.method).iter().zip(est.theta_hat()).enumerate() {
        match ses.get(k) {
            Some(se) => {
                let _ = writeln!(out, "  {name:<8} {v:>14.6}  se {se:.6}");
            }
            None => {
                let _ = writeln!(out, "  {name:<8} {v:>14.6}");
            }
        }
    }
    for n in &est.notes {
        let _ = writeln!(out, "  note: {n}");
    }
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(out)
}

fn outcome_line(o: &TestOutcome) -> String {
    if !o.applies() {
        return format!("{:?}: not applicable\n", o.which);
    }
    let null = o.null.as_ref().map(|n| n.label()).unwrap_or_default();
    format!(
        "{:?}: statistic {:.6} vs {null} critical value {:.6} (se {:.2e}), p = {:.4} -> {:?}{}\n",
        o.which,
        o.statistic,
        o.quantile,
        o.quantile_se,
        o.p_value,
        o.decision,
        if o.clamp_flagged { " [negative raw statistic clamped]" } else { "" }
    )
}

pub fn test_cmd(a: &TestArgs) -> Result<String, CliError> {
    let fit = prepare(&a.fit)?;
    let hyp = Hypothesis::parse(&a.hypothesis)?;
    let method = TestMethod::from_name(&a.method)?;
    let topts = TestOptions {
        delta: a.delta,
        mc_n: a.mc_n,
        seed: derive_seed(a.fit.seed, 0x5445),
        plug_in: a.plug_in.clone().map(PlugIn::Fixed).unwrap_or_default(),
        ..TestOptions::default()
    };
    let rep = run_test(&fit.obs, &fit.model, &hyp, method, fit.rho, &fit.init, &fit.opts, &topts)?;
    let mut csv = header(&fit, &format!(" method={method} hypothesis=\"{hyp}\" delta={}", a.delta));
    csv.push_str("part,statistic,raw_statistic,null,quantile,quantile_se,p_value,decision\n");
    for o in [&rep.drift, &rep.diffusion] {
        let null = o.null.as_ref().map(|n| n.label()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{:?},{:.17e},{:.17e},{null},{:.17e},{:.3e},{:.6e},{:?}",
            o.which, o.statistic, o.raw_statistic, o.quantile, o.quantile_se, o.p_value, o.decision
        );
    }
    let mut report = format!("hypothesis {hyp} via {method} at level {}\n", a.delta);
    report.push_str(&outcome_line(&rep.drift));
    report.push_str(&outcome_line(&rep.diffusion));
    if let Some(c) = rep.case {
        let _ = writeln!(report, "case {c}: {}", case_description(c));
        let _ = writeln!(csv, "# case={c}");
    }
    let _ = writeln!(report, "unrestricted estimate: {}", fmt_vec(&rep.unrestricted.theta_hat()));
    let _ = writeln!(report, "restricted estimate:   {}", fmt_vec(&rep.restricted.theta_hat()));
    fs::create_dir_all(&a.fit.out_dir).map_err(|e| io_err(&a.fit.out_dir, e))?;
    let path = a.fit.out_dir.join("test.csv");
    fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
    let rpath = a.fit.out_dir.join("test_report.txt");
    fs::write(&rpath, &report).map_err(|e| io_err(&rpath, e))?;
    let _ = writeln!(report, "wrote {} and {}", path.display(), rpath.display());
    Ok(report)
}

fn env_workers() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

pub fn experiment_cmd(a: &ExperimentArgs) -> Result<String, CliError> {
    let file = config::parse_config(&a.config, &a.overrides)?;
    if a.print_config {
        return serde_json::to_string_pretty(&file)
            .map(|s| s + "\n")
            .map_err(|e| CliError::Usage(e.to_string()));
    }
    let mut cfg = file.to_experiment()?;
    cfg.workers = a.workers.or(cfg.workers).or(env_workers()?);
    if let Some(d) = &a.out_dir {
        cfg.output_dir = Some(d.clone());
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let summary = run_experiment(&cfg)?;
    write_summary(&summary, &dir)?;
    let mut out = estimates_csv(&summary);
    for kind in file.plot_kinds()? {
        for p in emit_plot_data(&summary, kind, &dir.join("plots"))? {
            let _ = writeln!(out, "wrote {}", p.display());
        }
    }
    let _ = writeln!(
        out,
        "replicate failure rate {:.2}%{}",
        100.0 * summary.failure_rate(),
        if summary.failure_rate_ok() { "" } else { " (above the 2% limit)" }
    );
    let _ = writeln!(out, "wrote summary CSV files to {}", dir.display());
    Ok(out)
}

fn condition_number(m: &Matrix<f64>) -> f64 {
    let ev = m.symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    max / min
}

pub fn info_cmd(a: &InfoArgs) -> Result<String, CliError> {
    let name = model_name(&a.model, None)?;
    let model = build_model(&name, a.model.horizon)?;
    let b = builtin(&name);
    let rho = a.rho.or(b.map(|b| b.default_rho())).unwrap_or(1.0);
    let v = approximation_degree(rho)?;
    let mut out = String::new();
    let d = model.dims;
    let _ = writeln!(out, "model {} (d = {}, r = {}, p = {}, q = {})", model.name, d.d, d.r, d.p, d.q);
    let _ = writeln!(out, "x0 = ({}), T = {}", fmt_vec(&model.x0), model.horizon);
    let bounds = |lo: &[f64], hi: &[f64]| -> String {
        lo.iter().zip(hi).map(|(l, h)| format!("[{l}, {h}]")).collect::<Vec<_>>().join(" x ")
    };
    let _ = writeln!(out, "alpha box {}", bounds(model.box_alpha.lower(), model.box_alpha.upper()));
    if d.q > 0 {
        let _ = writeln!(out, "beta box  {}", bounds(model.box_beta.lower(), model.box_beta.upper()));
    }
    if model.shared_params {
        let _ = writeln!(out, "drift and diffusion share the parameter");
    }
    let _ = writeln!(out, "rho = {rho}, v={v}");
    let theta = match (&a.theta, b) {
        (Some(t), _) => t.clone(),
        (None, Some(b)) => b.default_theta(),
        (None, None) => {
            let mut t = model.box_alpha.midpoint();
            t.extend(model.box_beta.midpoint());
            t
        }
    };
    let info = info_matrices(&model, &theta, a.quad_steps)?;
    let _ = writeln!(out, "limit matrices at theta = ({}):", fmt_vec(&theta));
    let _ = writeln!(out, "  cond(I_b)     = {:.6e}", condition_number(&info.i_b));
    if info.i_sigma.rows() > 0 && !model.shared_params {
        let _ = writeln!(out, "  cond(I_sigma) = {:.6e}", condition_number(&info.i_sigma));
    }
    let _ = writeln!(out, "  cond(J_b)     = {:.6e}", condition_number(&info.j_b));
    let _ = writeln!(out, "  cond(K_b)     = {:.6e}", condition_number(&info.k_b));
    let eps = a.eps.or(b.map(|b| b.default_epsilon()));
    let n = a.n.or(b.map(|b| b.default_n()));
    if let (Some(eps), Some(n)) = (eps, n) {
        let target = if model.shared_params || d.q == 0 { CovTarget::Drift } else { CovTarget::Final };
        if let Ok(sds) = info.theoretical_sds(target, eps, n) {
            let _ = writeln!(out, "asymptotic SDs at eps = {eps}, n = {n}: {}", sds.iter().map(|s| format!("{s:.6}")).collect::<Vec<_>>().join(", "));
        }
    }
    Ok(out)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn dispatch(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Test(a) => test_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Info(a) => info_cmd(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
