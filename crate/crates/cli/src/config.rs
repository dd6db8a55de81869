//! Strict TOML schema for `experiment` runs.

use std::path::PathBuf;

use adaptive_sde::estimators::{Method, Regime};
use adaptive_sde::models::BuiltinModel;
use adaptive_sde::montecarlo::{ExperimentConfig, InitPolicy, NullPlugIn, PlotKind, TestConfig, TrueCase};
use adaptive_sde::testing::{Hypothesis, TestMethod, DEFAULT_MC_N};
use adaptive_sde::asymptotics::DEFAULT_QUAD_STEPS;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model", "required", "model name: model1, sir, model3 or ou"),
    ("theta0", "required", "reference parameter (alpha then beta), also the data-generating value"),
    ("epsilon", "required", "dispersion of the noise"),
    ("n", "required", "number of observation intervals"),
    ("horizon", "model horizon", "observation horizon T"),
    ("refine", "10", "Euler sub-steps per observation interval"),
    ("rho", "model default (1 when unknown)", "balance coefficient; v = ceil(rho + 1/2)"),
    ("methods", "[\"type1\", \"type2\"]", "estimation methods (type1, type2, lowrho, joint, sigma-known-type1, ...)"),
    ("replicates", "500", "Monte Carlo replicates R"),
    ("seed", "1", "base seed; every replicate seed derives from it"),
    ("regime", "\"auto\"", "shared-parameter regime: auto, fast-drift, fast-diffusion"),
    ("quad_steps", "2000", "quadrature intervals for the limit matrices"),
    ("retain_raw", "false", "keep per-replicate records (needed for plots)"),
    ("workers", "ADAPTIVE_SDE_WORKERS or all processors", "worker threads"),
    ("output_dir", "\".\"", "directory for the summary CSV files"),
    ("plots", "[]", "plot data to emit: histogram, empirical-cdf, qq, statistic-vs-null"),
    ("init.policy", "\"true\"", "initial values: true, fixed or multistart"),
    ("init.theta", "none", "starting parameter for policy = \"fixed\""),
    ("init.candidates", "20000", "screened uniform candidates for policy = \"multistart\""),
    ("init.local", "200", "local searches started from the best candidates"),
    ("test.hypothesis", "required in [test]", "null, e.g. \"alpha[1]=3.0, beta[2]=0.5\" (1-based)"),
    ("test.method", "\"type1\"", "type1, type2, lowrho, type1-efficient or type2-efficient"),
    ("test.delta", "0.05", "significance level"),
    ("test.mc_n", "200000", "Monte Carlo draws for the pi_r null"),
    ("test.plug_in", "\"estimate\"", "where the pi_r matrices are evaluated: estimate or theta0"),
    ("cases.label", "required in [[cases]]", "name of a data-generating case"),
    ("cases.theta", "required in [[cases]]", "data-generating parameter of the case"),
];

fn d_refine() -> usize {
    10
}
fn d_methods() -> Vec<String> {
    vec!["type1".into(), "type2".into()]
}
fn d_replicates() -> usize {
    500
}
fn d_seed() -> u64 {
    1
}
fn d_regime() -> String {
    "auto".into()
}
fn d_quad() -> usize {
    DEFAULT_QUAD_STEPS
}
fn d_policy() -> String {
    "true".into()
}
fn d_candidates() -> usize {
    20_000
}
fn d_local() -> usize {
    200
}
fn d_test_method() -> String {
    "type1".into()
}
fn d_delta() -> f64 {
    0.05
}
fn d_mc_n() -> usize {
    DEFAULT_MC_N
}
fn d_plug_in() -> String {
    "estimate".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: String,
    pub theta0: Vec<f64>,
    pub epsilon: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "d_refine")]
    pub refine: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default = "d_methods")]
    pub methods: Vec<String>,
    #[serde(default = "d_replicates")]
    pub replicates: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_regime")]
    pub regime: String,
    #[serde(default = "d_quad")]
    pub quad_steps: usize,
    #[serde(default)]
    pub retain_raw: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plots: Vec<String>,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestSection>,
    #[serde(default)]
    pub cases: Vec<CaseSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default = "d_policy")]
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default = "d_candidates")]
    pub candidates: usize,
    #[serde(default = "d_local")]
    pub local: usize,
}

impl Default for InitSection {
    fn default() -> Self {
        Self {
            policy: d_policy(),
            theta: None,
            candidates: d_candidates(),
            local: d_local(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub hypothesis: String,
    #[serde(default = "d_test_method")]
    pub method: String,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_mc_n")]
    pub mc_n: usize,
    #[serde(default = "d_plug_in")]
    pub plug_in: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub label: String,
    pub theta: Vec<f64>,
}

/// Help text listing every key with its default.
pub fn schema_help() -> String {
    let w = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (TOML; [init] and [test] are tables, [[cases]] an array of tables):\n");
    for (key, default, desc) in KEYS {
        s.push_str(&format!("  {key:<w$}  {desc} (default: {default})\n"));
    }
    s
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> CliError {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => CliError::Usage(format!("config line {}: {msg}", line_of(text, span.start))),
        None => CliError::Usage(format!("config: {msg}")),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies a `key=value` override; dotted keys address tables.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{item}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Parses config text, then applies `--set` overrides.
pub fn parse_config_text(text: &str, overrides: &[String]) -> Result<FileConfig, CliError> {
    let cfg: FileConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("override: {}", e.message().trim())))
}

pub fn parse_config(path: &std::path::Path, overrides: &[String]) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text, overrides)
}

fn regime_from_name(s: &str) -> Result<Regime, CliError> {
    match s {
        "auto" => Ok(Regime::Auto),
        "fast-drift" => Ok(Regime::FastDrift),
        "fast-diffusion" => Ok(Regime::FastDiffusion),
        "balanced" => Ok(Regime::Balanced),
        other => Err(CliError::Usage(format!("unknown regime `{other}`"))),
    }
}

impl FileConfig {
    pub fn plot_kinds(&self) -> Result<Vec<PlotKind>, CliError> {
        self.plots.iter().map(|p| PlotKind::from_name(p).map_err(CliError::from)).collect()
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::new(&self.model, self.theta0.clone(), self.epsilon, self.n);
        cfg.horizon = self.horizon;
        cfg.refine = self.refine;
        cfg.rho = self
            .rho
            .unwrap_or_else(|| BuiltinModel::from_name(&self.model).map(|m| m.default_rho()).unwrap_or(1.0));
        cfg.methods = self
            .methods
            .iter()
            .map(|m| Method::from_name(m).map_err(CliError::from))
            .collect::<Result<_, _>>()?;
        cfg.replicates = self.replicates;
        cfg.base_seed = self.seed;
        cfg.regime = regime_from_name(&self.regime)?;
        cfg.quad_steps = self.quad_steps;
        cfg.retain_raw = self.retain_raw || !self.plots.is_empty();
        cfg.workers = self.workers;
        cfg.output_dir = self.output_dir.clone();
        cfg.init = match self.init.policy.as_str() {
            "true" => InitPolicy::TrueInit,
            "fixed" => InitPolicy::Fixed(
                self.init
                    .theta
                    .clone()
                    .ok_or_else(|| CliError::Usage("init.policy = \"fixed\" needs init.theta".into()))?,
            ),
            "multistart" => InitPolicy::MultiStart {
                candidates: self.init.candidates,
                local: self.init.local,
            },
            other => return Err(CliError::Usage(format!("unknown init.policy `{other}`"))),
        };
        if let Some(t) = &self.test {
            cfg.test = Some(TestConfig {
                hypothesis: Hypothesis::parse(&t.hypothesis)?,
                method: TestMethod::from_name(&t.method)?,
                delta: t.delta,
                mc_n: t.mc_n,
                plug_in: match t.plug_in.as_str() {
                    "estimate" => NullPlugIn::Estimate,
                    "theta0" => NullPlugIn::Theta0,
                    other => return Err(CliError::Usage(format!("unknown test.plug_in `{other}`"))),
                },
            });
        }
        cfg.cases = self
            .cases
            .iter()
            .map(|c| TrueCase {
                label: c.label.clone(),
                theta: c.theta.clone(),
            })
            .collect();
        Ok(cfg)
    }
}
