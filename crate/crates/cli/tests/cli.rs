use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgp_cli::artifacts::{ModelFile, RunSummary, HyperoptSummary};
use sgp_cli::commands::mean_std;
use sgp_core::problems::elliptic;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sgp-pde"));
    c.env_remove("SGP_OUTPUT_DIR").env("RUST_LOG", "error");
    c
}

/// Writes `config` into `dir` with `output_dir` pointing at `dir/out` and runs `sub`.
fn run(sub: &str, dir: &Path, config: serde_json::Value) -> (Output, PathBuf) {
    let out = dir.join("out");
    let mut cfg = config;
    if cfg.get("output_dir").is_none() {
        cfg["output_dir"] = serde_json::json!(out);
    }
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let output = bin().args([sub, "--config"]).arg(&path).output().unwrap();
    (output, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_elliptic() -> serde_json::Value {
    serde_json::json!({"problem": "elliptic", "N": 120, "M": 60, "seed": 3, "gamma": 1e-6, "gn": {"max_iter": 4}})
}

fn read<T: for<'de> serde::Deserialize<'de>>(p: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_problem_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run("solve", dir.path(), serde_json::json!({"N": 100, "M": 50}));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("problem"), "{}", stderr(&o));
}

#[test]
fn schema_violations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_elliptic();
    cfg["sigmaa"] = serde_json::json!(0.2);
    assert_eq!(run("solve", dir.path(), cfg).0.status.code(), Some(2));

    let mut cfg = small_elliptic();
    cfg["M"] = serde_json::json!(500);
    assert_eq!(run("solve", dir.path(), cfg).0.status.code(), Some(2));

    let mut cfg = small_elliptic();
    cfg["gamma"] = serde_json::json!(-1.0);
    assert_eq!(run("solve", dir.path(), cfg).0.status.code(), Some(2));

    let mut cfg = small_elliptic();
    cfg["nu"] = serde_json::json!(0.1);
    assert_eq!(run("solve", dir.path(), cfg).0.status.code(), Some(2));

    let mut cfg = small_elliptic();
    cfg["reference_file"] = serde_json::json!("no_such_file.csv");
    assert_eq!(run("solve", dir.path(), cfg).0.status.code(), Some(2));

    let path = dir.path().join("broken.json");
    fs::write(&path, "{ not json").unwrap();
    let o = bin().args(["solve", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["solve", "--config"]).arg(dir.path().join("absent.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    // The periodic Gram matrix of four operators is numerically singular, and a zero nugget cannot be raised.
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run("solve", dir.path(), serde_json::json!({"problem": "mfg", "N": 60, "M": 60, "eta": 0.0}));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical failure"));
}

#[test]
fn solve_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run("solve", dir.path(), small_elliptic());
    assert!(o.status.success(), "{}", stderr(&o));
    let s: RunSummary = read(&out.join("run_summary.json"));
    assert_eq!(s.schema_version, 1);
    assert_eq!((s.problem.as_str(), s.n, s.m, s.seed), ("elliptic", 120, 60, 3));
    assert_eq!(s.gamma, 1e-6);
    assert_eq!(s.eta, 1e-6);
    assert!(s.linf.is_some());
    assert_eq!(s.reference.as_deref(), Some("analytic"));

    let history = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("iteration,loss"));
    assert_eq!(history.lines().count(), s.iterations + 2);

    // The stored model reproduces the error grid.
    let model: ModelFile = read(&out.join("model.json"));
    assert_eq!(model.fields.len(), 1);
    let u = &model.fields[0].model;
    let mut rdr = csv::Reader::from_path(out.join("error_grid.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), vec!["x1", "x2", "value"]);
    let mut rows = 0;
    let mut worst: f64 = 0.0;
    for rec in rdr.records() {
        let r: Vec<f64> = rec.unwrap().iter().map(|f| f.parse().unwrap()).collect();
        let p = [r[0], r[1]];
        let e = (u.evaluate(&p).unwrap() - elliptic::exact_solution(&p)).abs();
        assert!((e - r[2]).abs() <= 1e-12 * (1.0 + e), "at {p:?}: {e} vs {}", r[2]);
        worst = worst.max(r[2]);
        rows += 1;
    }
    assert_eq!(rows, 3600);
    assert_eq!(worst, s.linf.unwrap());
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({"problem": "burgers", "N": 120, "M": 60, "seed": 7, "gn": {"max_iter": 5}});
    let (oa, outa) = run("solve", a.path(), cfg.clone());
    let (ob, outb) = run("solve", b.path(), cfg);
    assert!(oa.status.success() && ob.status.success());
    for f in ["loss_history.csv", "model.json", "error_grid.csv"] {
        assert_eq!(fs::read(outa.join(f)).unwrap(), fs::read(outb.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn output_dir_comes_from_the_environment_when_set() {
    let dir = tempfile::tempdir().unwrap();
    let elsewhere = dir.path().join("from_env");
    let path = dir.path().join("config.json");
    let mut cfg = small_elliptic();
    cfg["output_dir"] = serde_json::json!(dir.path().join("from_config"));
    fs::write(&path, cfg.to_string()).unwrap();
    let o = bin()
        .env("SGP_OUTPUT_DIR", &elsewhere)
        .args(["solve", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elsewhere.join("run_summary.json").is_file());
    assert!(!dir.path().join("from_config").exists());
}

fn aggregate_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        vec!["N", "M", "seeds_ok", "seeds_failed", "mean_linf", "std_linf", "mean_iterations", "mean_final_loss", "mean_wall_time"]
    );
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn single_seed_batch_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_elliptic();
    cfg.as_object_mut().unwrap().remove("seed");
    cfg["seeds"] = serde_json::json!([5]);
    let (o, out) = run("batch", dir.path(), cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = aggregate_rows(&out.join("batch_aggregate.csv"));
    assert_eq!(rows.len(), 1);
    let s: RunSummary = read(&out.join("N120_M60").join("seed_5").join("run_summary.json"));
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), s.linf.unwrap());
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[0][6].parse::<f64>().unwrap(), s.iterations as f64);
}

#[test]
fn batch_aggregate_ignores_seed_order() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = |seeds: serde_json::Value| {
        let mut c = small_elliptic();
        c.as_object_mut().unwrap().remove("seed");
        c["seeds"] = seeds;
        c["sizes"] = serde_json::json!([{"N": 120, "M": 60}, {"N": 120, "M": 30}]);
        c
    };
    let (oa, outa) = run("batch", a.path(), cfg(serde_json::json!([1, 2])));
    let (ob, outb) = run("batch", b.path(), cfg(serde_json::json!([2, 1])));
    assert!(oa.status.success() && ob.status.success());
    let (ra, rb) = (aggregate_rows(&outa.join("batch_aggregate.csv")), aggregate_rows(&outb.join("batch_aggregate.csv")));
    assert_eq!(ra.len(), 2);
    // Everything but the wall time is deterministic.
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x[..8], y[..8]);
    }
    assert_eq!((ra[0][0].as_str(), ra[0][1].as_str(), ra[1][1].as_str()), ("120", "60", "30"));
    assert_eq!(ra[0][2], "2");
}

#[test]
fn aggregate_statistics() {
    assert_eq!(mean_std(&[]), None);
    assert_eq!(mean_std(&[4.0]), Some((4.0, 0.0)));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn one_cell_hyperopt_selects_that_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_elliptic();
    cfg["hyperopt"] = serde_json::json!({"values": [0.25]});
    let (o, out) = run("hyperopt", dir.path(), cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: HyperoptSummary = read(&out.join("hyperopt_summary.json"));
    assert_eq!(s.best_sigma, 0.25);
    assert_eq!(s.cells, 1);
    let table = fs::read_to_string(out.join("hyperopt.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "sigma,elbo,iterations,linf_error,status");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.25,") && lines[1].ends_with(",ok"));
}

#[test]
fn diagnose_reports_zero_nystrom_error_without_compression() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "problem": "elliptic", "N": 40, "M": 40, "seed": 1, "gamma": 1e-6, "eta": 0.0,
        "kernel": {"type": "gaussian_iso", "sigma": 0.3}, "gn": {"max_iter": 3}
    });
    let (o, out) = run("diagnose", dir.path(), cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: RunSummary = read(&out.join("run_summary.json"));
    let d = s.diagnostics.unwrap();
    assert_eq!(s.eta_used, 0.0);
    assert_eq!(d.psi_len, 2 * 30 + 40);
    // |K(psi, psi)| is of order 1e3 here.
    assert!(d.nystrom_error < 1e-7, "{}", d.nystrom_error);
    assert_eq!(s.constraint_residual, 0.0);
}

#[test]
fn diagnose_guard_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_elliptic();
    cfg["diagnostics"] = serde_json::json!({"max_psi": 100});
    let (o, out) = run("diagnose", dir.path(), cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("guard"), "{}", stderr(&o));
    assert!(!out.join("run_summary.json").exists());
}
