//! Replicated checks of the limit laws at desk scale.

use adaptive_sde::asymptotics::{asymptotic_cov, info_matrices, CovTarget, DEFAULT_QUAD_STEPS};
use adaptive_sde::estimators::{estimate_type1, EstimatorOptions};
use adaptive_sde::linalg::Matrix;
use adaptive_sde::models::{make_builtin, BuiltinModel, Overrides};
use adaptive_sde::montecarlo::{replicate_seed, run_experiment, ExperimentConfig, NullPlugIn, TestConfig};
use adaptive_sde::paths::simulate_sde;
use adaptive_sde::testing::{Hypothesis, TestMethod};
use rayon::prelude::*;

#[test]
fn first_stage_covariance_matches_sandwich() {
    let model = make_builtin::<f64>(BuiltinModel::Model1, &Overrides::default()).unwrap();
    let theta = BuiltinModel::Model1.default_theta();
    let (eps, n, reps) = (0.01, 1000, 500);
    let scaled: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let obs = simulate_sde(&model, &theta, eps, n, 10, replicate_seed(77, 0, i)).unwrap();
            let est = estimate_type1(&obs, &model, 1.0, &theta, &EstimatorOptions::default()).unwrap();
            let a1 = &est.stage("alpha_tilde_1").unwrap().params;
            a1.iter().zip(&theta).map(|(a, t)| (a - t) / eps).collect()
        })
        .collect();
    let p = 4;
    let mean: Vec<f64> = (0..p).map(|j| scaled.iter().map(|z| z[j]).sum::<f64>() / reps as f64).collect();
    let mut cov = Matrix::zeros(p, p);
    for z in &scaled {
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] += (z[i] - mean[i]) * (z[j] - mean[j]) / (reps - 1) as f64;
            }
        }
    }
    let info = info_matrices(&model, &theta, DEFAULT_QUAD_STEPS).unwrap();
    let target = asymptotic_cov(&info, CovTarget::Stage1Drift).unwrap();
    let rel = cov.sub(&target).symmetric_norm() / target.symmetric_norm();
    assert!(rel <= 0.2, "relative operator-norm gap {rel:.3}");
}

fn beta_size(eps: f64, n: usize, reps: usize) -> f64 {
    let mut cfg = ExperimentConfig::new("model1", BuiltinModel::Model1.default_theta(), eps, n);
    cfg.methods = Vec::new();
    cfg.replicates = reps;
    cfg.base_seed = 2024;
    cfg.test = Some(TestConfig {
        hypothesis: Hypothesis::parse("beta[1]=1.0, beta[2]=0.5").unwrap(),
        method: TestMethod::Type1,
        delta: 0.05,
        mc_n: 1,
        plug_in: NullPlugIn::Estimate,
    });
    let s = run_experiment(&cfg).unwrap();
    s.cases[0].test.as_ref().unwrap().diffusion_rate()
}

#[test]
fn beta_test_size_approaches_level() {
    let coarse = beta_size(0.05, 100, 2000);
    let fine = beta_size(0.01, 1000, 1000);
    assert!(
        (fine - 0.05).abs() < (coarse - 0.05).abs(),
        "size at (0.01, 1000) = {fine:.4}, at (0.05, 100) = {coarse:.4}"
    );
}
