//! End-to-end tests of the `dpopt` binary.

use std::path::Path;
use std::process::{Command, Output};

fn dpopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpopt"))
        .args(args)
        .env_remove("DPOPT_OUT")
        .output()
        .unwrap()
}

fn machine_value(out: &Output, key: &str) -> Option<String> {
    let stdout = String::from_utf8_lossy(&out.stdout);
    stdout
        .lines()
        .filter(|l| l.starts_with("@@ "))
        .flat_map(|l| l.split_whitespace().skip(1))
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn calibrate_closed_form() {
    let out = dpopt(&[
        "calibrate",
        "--eps",
        "8",
        "--delta",
        "1e-5",
        "--n",
        "50000",
        "--b",
        "1000",
        "--t",
        "5000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let sigma: f64 = machine_value(&out, "sigma").unwrap().parse().unwrap();
    assert!(sigma >= 1.2);
    assert!(machine_value(&out, "order").is_some());
    // human-readable text stays off stdout
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise multiplier"));
}

#[test]
fn calibrate_numeric() {
    let out = dpopt(&[
        "calibrate",
        "--eps",
        "8",
        "--n",
        "50000",
        "--b",
        "1000",
        "--t",
        "5000",
        "--accountant",
        "numeric",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let sigma = machine_value(&out, "sigma").unwrap();
    let v: f64 = sigma.parse().unwrap();
    assert!((1.08..=1.32).contains(&v), "{v}");
    // four significant figures
    assert_eq!(
        sigma.chars().filter(char::is_ascii_digit).count(),
        4,
        "{sigma}"
    );
}

#[test]
fn calibrate_error_exits() {
    let big_batch = dpopt(&[
        "calibrate",
        "--eps",
        "8",
        "--n",
        "1000",
        "--b",
        "100",
        "--t",
        "10",
    ]);
    assert_eq!(big_batch.status.code(), Some(1));
    assert!(big_batch.stdout.is_empty());
    let numeric_ok = dpopt(&[
        "calibrate",
        "--eps",
        "8",
        "--n",
        "1000",
        "--b",
        "100",
        "--t",
        "10",
        "--accountant",
        "numeric",
    ]);
    assert_eq!(numeric_ok.status.code(), Some(0));
    let infeasible = dpopt(&[
        "calibrate",
        "--eps",
        "1e-6",
        "--n",
        "50000",
        "--b",
        "1000",
        "--t",
        "5000",
    ]);
    assert_eq!(infeasible.status.code(), Some(2));
    assert_eq!(dpopt(&["calibrate", "--eps", "8"]).status.code(), Some(1));
    assert_eq!(
        dpopt(&[
            "calibrate",
            "--eps",
            "8",
            "--n",
            "5",
            "--b",
            "1",
            "--t",
            "1",
            "--accountant",
            "rough"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn help_lists_every_flag() {
    let out = dpopt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config",
        "--out",
        "--seed",
        "--force",
        "--jobs",
        "--timing",
        "--verbose",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    for cmd in ["calibrate", "run", "sweep", "bias", "verify", "rate"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(dpopt(&["launch"]).status.code(), Some(1));
}

#[test]
fn run_refuses_overwrite_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("nested/out");
    let out = out_dir.to_str().unwrap();
    let cfg = write_config(dir.path(), "run.steps = 500\noptimizer.kind = nsgd\n");
    let first = dpopt(&["run", "--config", &cfg, "--out", out, "--seed", "4"]);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let csv = out_dir.join("trajectory.csv");
    let svg = out_dir.join("trajectory.svg");
    let bytes = std::fs::read(&csv).unwrap();
    roxmltree::Document::parse(&std::fs::read_to_string(&svg).unwrap()).unwrap();

    let again = dpopt(&["run", "--config", &cfg, "--out", out, "--seed", "4"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let forced = dpopt(&[
        "run", "--config", &cfg, "--out", out, "--seed", "4", "--force", "--jobs", "1",
    ]);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(std::fs::read(&csv).unwrap(), bytes);

    let other_seed = dpopt(&[
        "run", "--config", &cfg, "--out", out, "--seed", "5", "--force",
    ]);
    assert_eq!(other_seed.status.code(), Some(0));
    assert_ne!(std::fs::read(&csv).unwrap(), bytes);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.steps = 50\n");
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_dpopt"))
        .args(["run", "--config", &cfg])
        .env("DPOPT_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("trajectory.csv").is_file());
}

#[test]
fn sweep_writes_csv_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "objective.kind = logistic\nobjective.n_terms = 200\nobjective.dim = 4\nnoise.kind = none\n\
         run.steps = 100\nrun.init = 0\noptimizer.batch_size = 10\n\
         sweep.lrs = 0.1, 0.4\nsweep.params = 0.1, 1, 10\nsweep.seeds = 0, 1\n",
    );
    let out = dir.path().join("o");
    let run = |force: bool| {
        let mut args = vec![
            "sweep",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--optimizer",
            "sgd",
        ];
        if force {
            args.push("--force");
        }
        dpopt(&args)
    };
    let first = run(false);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert_eq!(machine_value(&first, "all_finite").as_deref(), Some("true"));
    let bytes = std::fs::read(out.join("sweep_sgd.csv")).unwrap();
    assert_eq!(
        String::from_utf8_lossy(&bytes).lines().count(),
        1 + 2 * 3 * 2
    );
    let svg = std::fs::read_to_string(out.join("sweep_sgd.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(
        doc.descendants()
            .filter(|n| n.attribute("class") == Some("cell"))
            .count(),
        6
    );
    assert_eq!(run(true).status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("sweep_sgd.csv")).unwrap(), bytes);
}

#[test]
fn bias_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let bias = dpopt(&[
        "bias",
        "--out",
        out.to_str().unwrap(),
        "--draws",
        "2000",
        "--points",
        "5",
    ]);
    assert_eq!(
        bias.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&bias.stderr)
    );
    assert_eq!(machine_value(&bias, "failed").as_deref(), Some("0"));
    let rows = dpopt::bias_lab::read_report(&out.join("bias.csv")).unwrap();
    assert!(rows.iter().any(|r| r.check == "descent") && rows.iter().all(|r| r.pass));

    // default horizon is below the minimum iteration count: a finding, exit 2
    let short = dpopt(&["verify"]);
    assert_eq!(short.status.code(), Some(2));
    let t_min = machine_value(&short, "t_min").unwrap();
    let cfg = write_config(dir.path(), &format!("run.steps = {t_min}\n"));
    let long = dpopt(&["verify", "--config", &cfg]);
    assert_eq!(
        long.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&long.stderr)
    );
    assert_eq!(machine_value(&long, "pass").as_deref(), Some("true"));
}

#[test]
fn rate_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rate.steps = 100, 1000, 3000\nrate.seeds = 0, 1\n",
    );
    let out = dir.path().join("o");
    let res = dpopt(&["rate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let slope: f64 = machine_value(&res, "slope").unwrap().parse().unwrap();
    assert!(slope < 0.0);
    let rows = dpopt::harness::output::read_rate_csv(&out.join("rate.csv")).unwrap();
    assert_eq!(rows.len(), 6);
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "optimizer.momentum = 0.9\n");
    let out = dpopt(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let missing = dpopt(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(missing.status.code(), Some(1));
}
