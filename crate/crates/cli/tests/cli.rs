use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adaptive_sde_cli::config::KEYS;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-sde"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn adaptive-sde")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate_sir(dir: &Path) -> String {
    let path = dir.join("sir.csv");
    let p = path.to_str().unwrap();
    let o = run(&[
        "simulate", "--model", "sir", "--theta", "1.2,1.0", "--eps", "1e-4", "--n", "360", "--T", "12", "--seed", "7", "--out", p,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    p.to_string()
}

/// `(name, value, se)` rows of the final block of estimate.csv.
fn final_rows(text: &str) -> Vec<(String, f64, f64)> {
    text.lines()
        .filter(|l| l.starts_with("final,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[5].to_string(), f[6].parse().unwrap(), f[7].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(simulate_sir(dir.path())).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# n=360 "));
    assert!(lines[0].contains("seed=7"));
    assert_eq!(lines[1], "t,x1,x2");
    assert_eq!(lines.len() - 2, 361);
}

#[test]
fn estimate_sir_type2_near_truth() {
    let dir = tempfile::tempdir().unwrap();
    let obs = simulate_sir(dir.path());
    let out = dir.path().join("est");
    let o = run(&["estimate", "--obs", &obs, "--method", "type2", "--rho", "4", "--init", "true", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("estimate.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains("seed=7"));
    let rows = final_rows(&text);
    assert_eq!(rows.len(), 2);
    for ((name, v, se), truth) in rows.iter().zip([1.2, 1.0]) {
        assert!(*se > 0.003 && *se < 0.007, "{name} se {se}");
        assert!((v - truth).abs() < 5.0 * se, "{name}: {v} vs {truth} (se {se})");
    }
}

#[test]
fn simulate_then_estimate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (simulate_sir(a.path()), simulate_sir(b.path()));
    assert_eq!(fs::read(&oa).unwrap(), fs::read(&ob).unwrap());
    for (obs, dir) in [(&oa, a.path()), (&ob, b.path())] {
        let o = run(&["estimate", "--obs", obs, "--method", "type1", "--rho", "4", "--out-dir", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.path().join("estimate.csv")).unwrap(), fs::read(b.path().join("estimate.csv")).unwrap());
}

#[test]
fn info_reports_degree() {
    let o = run(&["info", "--model", "model1", "--rho", "1"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("v=2"), "{s}");
    assert!(s.contains("cond(I_b)"));
    let o = run(&["info", "--model", "sir"]);
    assert!(stdout(&o).contains("v=5"));
}

#[test]
fn experiment_help_lists_every_key() {
    let o = run(&["experiment", "--help"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for (k, _, _) in KEYS {
        assert!(s.contains(k), "missing `{k}` in help");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let noisy = dir.path().join("noisy.csv");
    let o = run(&["simulate", "--model", "sir", "--theta", "1.2,1.0", "--eps", "0.5", "--n", "50", "--seed", "3", "--out", noisy.to_str().unwrap()]);
    assert!(o.status.success());
    let o = run(&["estimate", "--obs", noisy.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(stderr(&o).trim().lines().count(), 1);
    let missing = dir.path().join("missing.csv");
    assert_eq!(run(&["estimate", "--obs", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "model = \"ou\"\ntheta0 = [1.0, 0.5]\nepsilon = 0.05\nn = 50\nrho_ = 2\n").unwrap();
    let o = run(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("line 5") && e.contains("rho_"), "{e}");
}

#[test]
fn experiment_writes_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ou.toml");
    fs::write(
        &cfg,
        "model = \"ou\"\ntheta0 = [1.0, 0.5]\nepsilon = 0.05\nn = 50\nreplicates = 4\nquad_steps = 200\nplots = [\"qq\"]\n\n[test]\nhypothesis = \"alpha[1]=1.0, beta[1]=0.5\"\nmc_n = 2000\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .args(["experiment", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
        .env("ADAPTIVE_SDE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["estimates.csv", "tests.csv", "diagnostics.csv", "timing.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(fs::read_dir(out.join("plots")).unwrap().count() > 0);
    let o = bin()
        .args(["experiment", "--config", cfg.to_str().unwrap()])
        .env("ADAPTIVE_SDE_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["experiment", "--config", cfg.to_str().unwrap(), "--set", "replicates=9", "--print-config"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["replicates"], 9);
    assert_eq!(json["test"]["delta"], 0.05);
}

#[test]
fn test_subcommand_reports_case() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("m1.csv");
    let o = run(&["simulate", "--model", "model1", "--eps", "0.01", "--n", "1000", "--seed", "11", "--out", obs.to_str().unwrap()]);
    assert!(o.status.success());
    let o = run(&[
        "test", "--obs", obs.to_str().unwrap(), "--hypothesis", "alpha[1]=3.0, alpha[4]=4.0, beta[1]=1.0, beta[2]=0.5",
        "--mc-n", "20000", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("case "), "{s}");
    let csv = fs::read_to_string(dir.path().join("test.csv")).unwrap();
    assert!(csv.contains("Drift,") && csv.contains("Diffusion,"));
    assert!(csv.contains("pi(2)") && csv.contains("chi2(2)"), "{csv}");
}
