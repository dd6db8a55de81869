//! Adaptive estimation schedules.
//!
//! Each schedule is a short sequence of box-constrained minimizations of the
//! contrasts in [`crate::contrasts`], with earlier stages frozen into later
//! ones. Drift stages are warm-started from the previous drift estimate.

use std::fmt;

use log::{info, warn};

use crate::contrasts::ContrastContext;
use crate::error::{Error, Result};
use crate::generator::V_MAX;
use crate::models::{ModelSpec, ParamBox};
use crate::optimizer::{minimize_box, minimize_restricted, multi_start_screened, OptimOptions, OptimStatus};
use crate::paths::ObservationSet;
use crate::scalar::Scalar;

/// `v = ceil(rho + 1/2)`.
pub fn approximation_degree(rho: f64) -> Result<usize> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("balance coefficient rho must be positive, got {rho}")));
    }
    let v = (rho + 0.5).ceil() as usize;
    if v > V_MAX {
        return Err(Error::InvalidArgument(format!(
            "rho = {rho} gives v = {v}, above the supported maximum {V_MAX}"
        )));
    }
    Ok(v)
}

/// Special schedules for degenerate parameterizations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialMode {
    /// Diffusion coefficient known (or `q = 0`): drift stages only.
    SigmaKnown,
    /// Shared parameters with `eps^{-1}/sqrt(n) -> inf`.
    SharedFastDrift,
    /// Shared parameters with `eps^{-1}/sqrt(n) -> 0`.
    SharedFastDiffusion,
}

/// Which drift schedule a special mode follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseType {
    Type1,
    Type2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Type1,
    Type2,
    LowRho,
    Special(SpecialMode, BaseType),
    /// Non-adaptive joint minimization, kept as a comparison baseline.
    Joint,
}

impl Method {
    pub fn name(self) -> String {
        match self {
            Method::Type1 => "type1".into(),
            Method::Type2 => "type2".into(),
            Method::LowRho => "lowrho".into(),
            Method::Joint => "joint".into(),
            Method::Special(m, b) => {
                let m = match m {
                    SpecialMode::SigmaKnown => "sigma-known",
                    SpecialMode::SharedFastDrift => "shared-fast-drift",
                    SpecialMode::SharedFastDiffusion => "shared-fast-diffusion",
                };
                match (m, b) {
                    ("shared-fast-diffusion", _) => m.into(),
                    (_, BaseType::Type1) => format!("{m}-type1"),
                    (_, BaseType::Type2) => format!("{m}-type2"),
                }
            }
        }
    }

    pub const ALL: [Method; 10] = [
        Method::Type1,
        Method::Type2,
        Method::LowRho,
        Method::Joint,
        Method::Special(SpecialMode::SigmaKnown, BaseType::Type1),
        Method::Special(SpecialMode::SigmaKnown, BaseType::Type2),
        Method::Special(SpecialMode::SharedFastDrift, BaseType::Type1),
        Method::Special(SpecialMode::SharedFastDrift, BaseType::Type2),
        Method::Special(SpecialMode::SharedFastDiffusion, BaseType::Type1),
        Method::Special(SpecialMode::SharedFastDiffusion, BaseType::Type2),
    ];

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimation method `{s}`")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Asymptotic regime hint for shared-parameter models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Regime {
    /// Compare `eps^{-1}` with `sqrt(n)`.
    #[default]
    Auto,
    FastDrift,
    FastDiffusion,
    /// `eps^{-1}/sqrt(n)` tends to a constant; no adaptive estimator applies.
    Balanced,
}

/// Picks the shared-parameter regime from `eps` and `n`.
pub fn choose_regime(epsilon: f64, n: usize) -> Result<SpecialMode> {
    let ratio = 1.0 / (epsilon * (n as f64).sqrt());
    if (ratio - 1.0).abs() <= 0.1 {
        return Err(balanced_refusal(ratio));
    }
    Ok(if ratio > 1.0 {
        SpecialMode::SharedFastDrift
    } else {
        SpecialMode::SharedFastDiffusion
    })
}

fn balanced_refusal(ratio: f64) -> Error {
    Error::Unsupported(format!(
        "eps^-1/sqrt(n) = {ratio:.3} is of order one: drift and diffusion contrasts must be optimized \
         simultaneously and the adaptive estimators cannot be used"
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Optim(OptimStatus),
    /// The contrast does not depend on the stage parameter.
    Vacuous,
    /// Every coordinate fixed; nothing to optimize.
    Pinned,
}

impl StageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StageStatus::Optim(s) => s.as_str(),
            StageStatus::Vacuous => "vacuous",
            StageStatus::Pinned => "pinned",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageKind {
    Drift,
    Diffusion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage<T> {
    pub name: String,
    /// Contrast minimized at this stage (`U1`, `V3`, `W2`, ...).
    pub contrast: String,
    pub kind: StageKind,
    pub params: Vec<T>,
    pub value: T,
    pub initial_value: T,
    pub status: StageStatus,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<T> {
    pub method: Method,
    pub rho: Option<f64>,
    pub v: usize,
    pub stages: Vec<Stage<T>>,
    pub alpha_hat: Vec<T>,
    /// Absent for drift-only schedules.
    pub beta_hat: Option<Vec<T>>,
    pub notes: Vec<String>,
}

impl<T: Scalar> Estimate<T> {
    pub fn stage(&self, name: &str) -> Option<&Stage<T>> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// `(alpha_hat, beta_hat)` concatenated; `alpha_hat` alone when no
    /// diffusion estimate exists.
    pub fn theta_hat(&self) -> Vec<T> {
        let mut t = self.alpha_hat.clone();
        if let Some(b) = &self.beta_hat {
            t.extend_from_slice(b);
        }
        t
    }

    pub fn any_fallback(&self) -> bool {
        self.stages
            .iter()
            .any(|s| s.status == StageStatus::Optim(OptimStatus::FallbackUsed))
    }
}

/// Seeded screening multi-start for the first drift stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiStart {
    pub candidates: usize,
    pub local: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EstimatorOptions {
    pub optim: OptimOptions,
    pub multi_start: Option<MultiStart>,
    pub regime: Regime,
}

/// One stage minimization: pinned coordinates, optional multi-start and
/// stage-tagged errors.
#[allow(clippy::too_many_arguments)]
pub fn run_stage<T: Scalar, F: Fn(&[T]) -> Result<T>>(
    name: &str,
    contrast: &str,
    kind: StageKind,
    f: &F,
    bx: &ParamBox<T>,
    init: &[T],
    fixed: &[(usize, T)],
    multi: Option<&MultiStart>,
    opts: &OptimOptions,
) -> Result<Stage<T>> {
    let wrap = |e: Error| e.in_stage(name);
    if fixed.len() == bx.dim() {
        let mut x = init.to_vec();
        for &(i, v) in fixed {
            x[i] = v;
        }
        let value = f(&x).map_err(wrap)?;
        return Ok(Stage {
            name: name.into(),
            contrast: contrast.into(),
            kind,
            params: x,
            value,
            initial_value: value,
            status: StageStatus::Pinned,
            evaluations: 1,
        });
    }
    let r = match multi {
        Some(ms) if fixed.is_empty() => {
            let r = multi_start_screened(f, bx, ms.candidates, ms.local, ms.seed, opts).map_err(wrap)?;
            let mut best = r.best;
            best.evaluations += ms.candidates;
            best
        }
        _ if fixed.is_empty() => minimize_box(f, bx, init, opts).map_err(wrap)?,
        _ => minimize_restricted(f, bx, &bx.projected(init), fixed, opts).map_err(wrap)?,
    };
    Ok(Stage {
        name: name.into(),
        contrast: contrast.into(),
        kind,
        params: r.x,
        value: r.f,
        initial_value: r.f_init,
        status: StageStatus::Optim(r.status),
        evaluations: r.evaluations,
    })
}

fn vacuous_stage<T: Scalar>(name: &str, contrast: &str, params: Vec<T>, value: T) -> Stage<T> {
    Stage {
        name: name.into(),
        contrast: contrast.into(),
        kind: StageKind::Diffusion,
        params,
        value,
        initial_value: value,
        status: StageStatus::Vacuous,
        evaluations: 1,
    }
}

fn diffusion_is_vacuous<T: Scalar>(model: &ModelSpec<T>) -> bool {
    model.dims.q == 0 || model.has_unit_diffusion()
}

fn check_init<T: Scalar>(model: &ModelSpec<T>, init: &[T]) -> Result<()> {
    let (a, b) = model.split_theta(init)?;
    if !model.box_alpha.contains(a) || !model.box_beta.contains(b) {
        return Err(Error::InvalidArgument("initial parameter lies outside the parameter box".into()));
    }
    Ok(())
}

/// Type I: `U1 -> U2(.|alpha~1) -> U3(.|beta~)`.
pub fn estimate_type1<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let v = approximation_degree(rho)?;
    if model.shared_params {
        return estimate_shared(obs, model, BaseType::Type1, rho, init, opts);
    }
    check_init(model, init)?;
    let ctx = ContrastContext::new(obs, model, v)?;
    type1_with(&ctx, rho, init, opts)
}

pub(crate) fn type1_with<T: Scalar>(
    ctx: &ContrastContext<'_, T>,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let model = ctx.model;
    let (a0, b0) = model.split_theta(init)?;
    let o = &opts.optim;
    let s1 = run_stage(
        "alpha_tilde_1",
        "U1",
        StageKind::Drift,
        &|a: &[T]| ctx.u1(a),
        &model.box_alpha,
        a0,
        &[],
        opts.multi_start.as_ref(),
        o,
    )?;
    let a1 = s1.params.clone();
    let s2 = if diffusion_is_vacuous(model) {
        let value = ctx.u2(b0, &a1).map_err(|e| e.in_stage("beta_tilde"))?;
        vacuous_stage("beta_tilde", "U2", b0.to_vec(), value)
    } else {
        run_stage(
            "beta_tilde",
            "U2",
            StageKind::Diffusion,
            &|b: &[T]| ctx.u2(b, &a1),
            &model.box_beta,
            b0,
            &[],
            None,
            o,
        )?
    };
    let bt = s2.params.clone();
    let s3 = run_stage(
        "alpha_tilde",
        "U3",
        StageKind::Drift,
        &|a: &[T]| ctx.u3(a, &bt),
        &model.box_alpha,
        &a1,
        &[],
        None,
        o,
    )?;
    let mut notes = Vec::new();
    if s2.status == StageStatus::Vacuous {
        notes.push("diffusion stage is vacuous: contrast does not depend on beta".into());
    }
    Ok(Estimate {
        method: Method::Type1,
        rho: Some(rho),
        v: ctx.v,
        alpha_hat: s3.params.clone(),
        beta_hat: Some(bt),
        stages: vec![s1, s2, s3],
        notes,
    })
}

/// Type II: `V1 -> V2(.|alpha^1) -> ... -> V(v) -> U2(.|alpha^v) -> V(v+2)`.
pub fn estimate_type2<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let v = approximation_degree(rho)?;
    if model.shared_params {
        return estimate_shared(obs, model, BaseType::Type2, rho, init, opts);
    }
    check_init(model, init)?;
    let ctx = ContrastContext::new(obs, model, v)?;
    type2_with(&ctx, rho, init, opts)
}

/// Steps `1..v` of Type II.
fn type2_drift_stages<T: Scalar>(ctx: &ContrastContext<'_, T>, a0: &[T], opts: &EstimatorOptions) -> Result<Vec<Stage<T>>> {
    let model = ctx.model;
    let mut stages: Vec<Stage<T>> = Vec::with_capacity(ctx.v);
    for l in 1..=ctx.v {
        let prev = stages.last().map(|s| s.params.clone()).unwrap_or_else(|| a0.to_vec());
        let name = format!("alpha_hat_{l}");
        let multi = if l == 1 { opts.multi_start.as_ref() } else { None };
        let s = run_stage(
            &name,
            &format!("V{l}"),
            StageKind::Drift,
            &|a: &[T]| ctx.v_stage(a, &prev, l),
            &model.box_alpha,
            &prev,
            &[],
            multi,
            &opts.optim,
        )?;
        stages.push(s);
    }
    Ok(stages)
}

pub(crate) fn type2_with<T: Scalar>(
    ctx: &ContrastContext<'_, T>,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let model = ctx.model;
    let v = ctx.v;
    let (a0, b0) = model.split_theta(init)?;
    let mut stages = type2_drift_stages(ctx, a0, opts)?;
    let av = stages[v - 1].params.clone();
    let sb = if diffusion_is_vacuous(model) {
        let value = ctx.u2(b0, &av).map_err(|e| e.in_stage("beta_hat"))?;
        vacuous_stage("beta_hat", &format!("V{}", v + 1), b0.to_vec(), value)
    } else {
        run_stage(
            "beta_hat",
            &format!("V{}", v + 1),
            StageKind::Diffusion,
            &|b: &[T]| ctx.u2(b, &av),
            &model.box_beta,
            b0,
            &[],
            None,
            &opts.optim,
        )?
    };
    let bh = sb.params.clone();
    let vacuous = sb.status == StageStatus::Vacuous;
    stages.push(sb);
    let sf = run_stage(
        "alpha_hat",
        &format!("V{}", v + 2),
        StageKind::Drift,
        &|a: &[T]| ctx.v_final(a, &av, &bh),
        &model.box_alpha,
        &av,
        &[],
        None,
        &opts.optim,
    )?;
    let alpha_hat = sf.params.clone();
    stages.push(sf);
    let mut notes = Vec::new();
    if vacuous {
        notes.push("diffusion stage is vacuous: contrast does not depend on beta".into());
    }
    Ok(Estimate {
        method: Method::Type2,
        rho: Some(rho),
        v,
        stages,
        alpha_hat,
        beta_hat: Some(bh),
        notes,
    })
}

/// Low-rho schedule: `W1 -> W2(.|beta_check)`. `rho` is recorded only; a
/// value of `1/2` or more is reported in the notes.
pub fn estimate_lowrho<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    rho: Option<f64>,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    check_init(model, init)?;
    let ctx = ContrastContext::new(obs, model, 1)?;
    lowrho_with(&ctx, rho, init, opts)
}

pub(crate) fn lowrho_with<T: Scalar>(
    ctx: &ContrastContext<'_, T>,
    rho: Option<f64>,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let model = ctx.model;
    let (a0, b0) = model.split_theta(init)?;
    let mut notes = Vec::new();
    if let Some(r) = rho {
        if r >= 0.5 {
            let msg = format!("low-rho schedule used with rho = {r} >= 1/2");
            warn!("{msg}");
            notes.push(msg);
        }
    }
    let s1 = if diffusion_is_vacuous(model) {
        notes.push("diffusion stage is vacuous: contrast does not depend on beta".into());
        let value = ctx.w1(b0).map_err(|e| e.in_stage("beta_check"))?;
        vacuous_stage("beta_check", "W1", b0.to_vec(), value)
    } else {
        run_stage(
            "beta_check",
            "W1",
            StageKind::Diffusion,
            &|b: &[T]| ctx.w1(b),
            &model.box_beta,
            b0,
            &[],
            None,
            &opts.optim,
        )?
    };
    let bc = s1.params.clone();
    let s2 = run_stage(
        "alpha_check",
        "W2",
        StageKind::Drift,
        &|a: &[T]| ctx.w2(a, &bc),
        &model.box_alpha,
        a0,
        &[],
        opts.multi_start.as_ref(),
        &opts.optim,
    )?;
    Ok(Estimate {
        method: Method::LowRho,
        rho,
        v: ctx.v,
        alpha_hat: s2.params.clone(),
        beta_hat: Some(bc),
        stages: vec![s1, s2],
        notes,
    })
}

/// Shared-parameter models under `opts.regime` (chosen from `eps` and `n`
/// when `Auto`).
fn estimate_shared<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    base: BaseType,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let mode = match opts.regime {
        Regime::Auto => {
            let m = choose_regime(obs.epsilon.as_f64(), obs.n)?;
            info!("shared parameters: eps^-1/sqrt(n) = {:.3}, using {:?}", 1.0 / (obs.epsilon.as_f64() * (obs.n as f64).sqrt()), m);
            m
        }
        Regime::FastDrift => SpecialMode::SharedFastDrift,
        Regime::FastDiffusion => SpecialMode::SharedFastDiffusion,
        Regime::Balanced => return Err(balanced_refusal(1.0 / (obs.epsilon.as_f64() * (obs.n as f64).sqrt()))),
    };
    estimate_special(obs, model, mode, base, rho, init, opts)
}

/// Special schedules: known diffusion, or shared drift/diffusion parameters.
pub fn estimate_special<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    mode: SpecialMode,
    base: BaseType,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    if opts.regime == Regime::Balanced {
        return Err(balanced_refusal(1.0 / (obs.epsilon.as_f64() * (obs.n as f64).sqrt())));
    }
    match mode {
        SpecialMode::SigmaKnown if model.shared_params => {
            return Err(Error::InvalidArgument(
                "sigma-known mode needs a diffusion that does not share the drift parameters".into(),
            ))
        }
        SpecialMode::SharedFastDrift | SpecialMode::SharedFastDiffusion if !model.shared_params => {
            return Err(Error::InvalidArgument(format!(
                "{mode:?} needs a model whose drift and diffusion share parameters"
            )))
        }
        _ => {}
    }
    check_init(model, init)?;
    let v = approximation_degree(rho)?;
    let ctx = ContrastContext::new(obs, model, v)?;
    special_with(&ctx, mode, base, rho, init, opts)
}

pub(crate) fn special_with<T: Scalar>(
    ctx: &ContrastContext<'_, T>,
    mode: SpecialMode,
    base: BaseType,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    let model = ctx.model;
    let v = ctx.v;
    let (a0, b0) = model.split_theta(init)?;
    let method = Method::Special(mode, base);
    let o = &opts.optim;
    match mode {
        SpecialMode::SharedFastDiffusion => {
            let s = run_stage(
                "beta_check",
                "W1",
                StageKind::Diffusion,
                &|b: &[T]| ctx.w1(b),
                &model.box_beta,
                b0,
                &[],
                opts.multi_start.as_ref(),
                o,
            )?;
            let b = s.params.clone();
            Ok(Estimate {
                method,
                rho: Some(rho),
                v,
                stages: vec![s],
                alpha_hat: b.clone(),
                beta_hat: Some(b),
                notes: vec!["shared parameters: only the diffusion contrast is used".into()],
            })
        }
        SpecialMode::SigmaKnown | SpecialMode::SharedFastDrift => {
            let shared = mode == SpecialMode::SharedFastDrift;
            let mut stages = Vec::new();
            let (start, metric) = match base {
                BaseType::Type1 if shared => {
                    let s1 = run_stage(
                        "alpha_tilde_1",
                        "U1",
                        StageKind::Drift,
                        &|a: &[T]| ctx.u1(a),
                        &model.box_alpha,
                        a0,
                        &[],
                        opts.multi_start.as_ref(),
                        o,
                    )?;
                    let a1 = s1.params.clone();
                    stages.push(s1);
                    (a1.clone(), a1)
                }
                BaseType::Type1 => (a0.to_vec(), b0.to_vec()),
                BaseType::Type2 => {
                    stages = type2_drift_stages(ctx, a0, opts)?;
                    let av = stages[v - 1].params.clone();
                    let metric = if shared { av.clone() } else { b0.to_vec() };
                    (av, metric)
                }
            };
            let last = match base {
                BaseType::Type1 => {
                    let multi = if shared { None } else { opts.multi_start.as_ref() };
                    run_stage(
                        "alpha_tilde",
                        "U3",
                        StageKind::Drift,
                        &|a: &[T]| ctx.u3(a, &metric),
                        &model.box_alpha,
                        &start,
                        &[],
                        multi,
                        o,
                    )?
                }
                BaseType::Type2 => run_stage(
                    "alpha_hat",
                    &format!("V{}", v + 2),
                    StageKind::Drift,
                    &|a: &[T]| ctx.v_final(a, &start, &metric),
                    &model.box_alpha,
                    &start,
                    &[],
                    None,
                    o,
                )?,
            };
            let alpha_hat = last.params.clone();
            stages.push(last);
            let notes = if shared {
                vec!["shared parameters: the metric uses the current drift estimate".into()]
            } else {
                Vec::new()
            };
            Ok(Estimate {
                method,
                rho: Some(rho),
                v,
                stages,
                alpha_hat,
                beta_hat: None,
                notes,
            })
        }
    }
}

/// Minimizes the joint contrast over `(alpha, beta)` at once.
pub fn estimate_joint<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    if model.shared_params {
        return Err(Error::Unsupported("the joint baseline needs separate drift and diffusion parameters".into()));
    }
    check_init(model, init)?;
    let v = approximation_degree(rho)?;
    let ctx = ContrastContext::new(obs, model, v)?;
    let p = model.dims.p;
    let mut lo = model.box_alpha.lower().to_vec();
    lo.extend_from_slice(model.box_beta.lower());
    let mut hi = model.box_alpha.upper().to_vec();
    hi.extend_from_slice(model.box_beta.upper());
    let bx = ParamBox::new(lo, hi)?;
    let s = run_stage(
        "theta_joint",
        "joint",
        StageKind::Drift,
        &|t: &[T]| ctx.joint(&t[..p], &t[p..]),
        &bx,
        init,
        &[],
        opts.multi_start.as_ref(),
        &opts.optim,
    )?;
    Ok(Estimate {
        method: Method::Joint,
        rho: Some(rho),
        v,
        alpha_hat: s.params[..p].to_vec(),
        beta_hat: Some(s.params[p..].to_vec()),
        stages: vec![s],
        notes: Vec::new(),
    })
}

/// Dispatches on `method`. `rho` feeds `v` for every schedule except the
/// low-rho one, where it is only recorded.
pub fn estimate<T: Scalar>(
    obs: &ObservationSet<T>,
    model: &ModelSpec<T>,
    method: Method,
    rho: f64,
    init: &[T],
    opts: &EstimatorOptions,
) -> Result<Estimate<T>> {
    match method {
        Method::Type1 if model.dims.q == 0 => {
            estimate_special(obs, model, SpecialMode::SigmaKnown, BaseType::Type1, rho, init, opts)
        }
        Method::Type2 if model.dims.q == 0 => {
            estimate_special(obs, model, SpecialMode::SigmaKnown, BaseType::Type2, rho, init, opts)
        }
        Method::Type1 => estimate_type1(obs, model, rho, init, opts),
        Method::Type2 => estimate_type2(obs, model, rho, init, opts),
        Method::LowRho => estimate_lowrho(obs, model, Some(rho), init, opts),
        Method::Special(mode, base) => estimate_special(obs, model, mode, base, rho, init, opts),
        Method::Joint => estimate_joint(obs, model, rho, init, opts),
    }
}
