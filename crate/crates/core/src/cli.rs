//! `dpopt` command-line entry point.
//!
//! Machine-readable results go to stdout as lines starting with [`SENTINEL`];
//! everything else goes to stderr. Exit codes: 0 success, 1 usage or input
//! error, 2 infeasible budget or a failed check.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::accountant::{self, Accountant, AccountantConfig, PrivacyBudget};
use crate::bias_lab::{self, CheckRecord};
use crate::harness::{self, plot, ConfigFile, ExperimentConfig, ObjectiveSpec, OptimizerKind};
use crate::optimizer::{
    eta_condition_nsgd, eta_condition_sgd, min_iterations_nsgd, min_iterations_sgd,
    theorem_lr_nsgd, theorem_lr_sgd,
};
use crate::oracle::{check_assumption2, empirical_tau0};
use crate::rng::stream_rng;
use crate::{Error, Result};

pub const SENTINEL: &str = "@@";
pub const OUT_ENV: &str = "DPOPT_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FINDING: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dpopt",
    version,
    about = "Differentially private SGD / normalized SGD toolkit"
)]
pub struct Cli {
    /// Experiment config file (`section.key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; created if absent.
    #[arg(long, global = true, env = OUT_ENV, default_value = "dpopt-out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing result files.
    #[arg(long, global = true)]
    pub force: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Record wall-clock seconds in trajectories (makes output non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
    /// More diagnostics on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the noise multiplier for an (ε, δ) budget.
    Calibrate(CalibrateArgs),
    /// Run one training trajectory.
    Run,
    /// Learning-rate × regularizer (or clip) grid.
    Sweep(SweepArgs),
    /// Monte Carlo checks of the bias and descent inequalities.
    Bias(BiasArgs),
    /// Check the noise bound and the theory step-size conditions.
    Verify(VerifyArgs),
    /// Min-gradient-norm decay across horizons, with log-log slope.
    Rate,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    /// Dataset size N.
    #[arg(long)]
    pub n: u64,
    /// Batch size B.
    #[arg(long)]
    pub b: u64,
    /// Iterations T.
    #[arg(long)]
    pub t: u64,
    /// `closed` or `numeric`.
    #[arg(long, default_value = "closed")]
    pub accountant: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Overrides `optimizer.kind`.
    #[arg(long)]
    pub optimizer: Option<String>,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    /// Monte Carlo draws per check.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    /// Iterates for the descent check.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error that escaped a subcommand.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } | Error::NoiseBoundViolation { .. } => EXIT_FINDING,
        _ => EXIT_USAGE,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Run => cmd_run(cli),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Bias(a) => cmd_bias(cli, a),
        Command::Verify(a) => cmd_verify(cli, a),
        Command::Rate => cmd_rate(cli),
    }
}

/// Formats `v` to `digits` significant figures.
pub fn sig_figs(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

fn machine(fields: &[(&str, String)]) {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{SENTINEL} {}", body.join(" "));
}

fn calibrate(a: &CalibrateArgs) -> Result<i32> {
    let acc: Accountant = a.accountant.parse()?;
    let budget = PrivacyBudget::new(a.eps, a.delta)?;
    let cfg = AccountantConfig::new(a.n, a.b, a.t)?;
    let cal = accountant::calibrate(acc, &budget, &cfg)?;
    let sigma = sig_figs(cal.sigma, 4);
    eprintln!(
        "noise multiplier {sigma} for eps={} delta={} (achieved eps {:.4} at order {})",
        a.eps, a.delta, cal.eps, cal.order
    );
    machine(&[
        ("calibrate", acc_name(acc).into()),
        ("sigma", sigma),
        ("order", format!("{}", cal.order)),
        ("eps", format!("{}", cal.eps)),
    ]);
    Ok(EXIT_OK)
}

fn acc_name(a: Accountant) -> &'static str {
    match a {
        Accountant::ClosedForm => "closed",
        Accountant::NumericPoisson => "numeric",
    }
}

fn load_config(cli: &Cli) -> Result<ConfigFile> {
    let mut cf = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = cli.seed {
        cf.set("run.seed", seed.to_string())?;
    }
    Ok(cf)
}

fn experiment(cli: &Cli, cf: &ConfigFile) -> Result<ExperimentConfig> {
    let mut cfg = cf.experiment()?;
    cfg.timing = cli.timing;
    Ok(cfg)
}

/// Creates the output directory and returns the target paths, refusing to
/// clobber existing files unless `force`.
fn prepare_outputs(cli: &Cli, names: &[&str]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cli.out)?;
    let paths: Vec<PathBuf> = names.iter().map(|n| cli.out.join(n)).collect();
    if !cli.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::WouldOverwrite(p.clone()));
        }
    }
    Ok(paths)
}

fn announce(cli: &Cli, paths: &[PathBuf]) {
    for p in paths {
        if cli.verbose > 0 {
            eprintln!("wrote {}", p.display());
        }
        machine(&[("file", p.display().to_string())]);
    }
}

fn cmd_run(cli: &Cli) -> Result<i32> {
    let cf = load_config(cli)?;
    let cfg = experiment(cli, &cf)?;
    let paths = prepare_outputs(cli, &["trajectory.csv", "trajectory.svg"])?;
    let t = harness::run(&cfg)?;
    harness::output::write_trajectory_csv(&t, &paths[0])?;
    let series = [plot::Series {
        name: cfg.optimizer.kind.name().into(),
        points: t
            .records
            .iter()
            .map(|r| (r.step as f64, r.grad_norm))
            .collect(),
    }];
    let svg = plot::line_chart(&series, "Gradient norm", "step", "gradient norm", true);
    plot::write_svg(&svg, &paths[1])?;
    eprintln!(
        "{} steps, eta={:.6e}, min grad norm {:.6e}{}",
        cfg.steps,
        t.eta,
        t.min_grad_norm,
        if t.diverged { " (diverged)" } else { "" }
    );
    machine(&[
        ("run", cfg.optimizer.kind.name().into()),
        ("eta", format!("{}", t.eta)),
        ("min_grad_norm", format!("{}", t.min_grad_norm)),
        ("diverged", t.diverged.to_string()),
    ]);
    announce(cli, &paths);
    Ok(EXIT_OK)
}

fn parse_kind(s: &str) -> Result<OptimizerKind> {
    match s {
        "nsgd" => Ok(OptimizerKind::Nsgd),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
    }
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<i32> {
    let mut cf = load_config(cli)?;
    if let Some(k) = &a.optimizer {
        parse_kind(k)?;
        cf.set("optimizer.kind", k.clone())?;
    }
    let cfg = experiment(cli, &cf)?;
    let kind = cfg.optimizer.kind;
    let (lrs, params, seeds) = cf.sweep_grid(kind)?;
    let csv_name = format!("sweep_{}.csv", kind.name());
    let svg_name = format!("sweep_{}.svg", kind.name());
    let paths = prepare_outputs(cli, &[&csv_name, &svg_name])?;
    let res = harness::sweep(&cfg, &lrs, &params, &seeds)?;
    harness::output::write_sweep_csv(&res, &paths[0])?;
    let param_axis = match kind {
        OptimizerKind::Nsgd => "regularizer r",
        OptimizerKind::Sgd => "clip c",
    };
    let rows: Vec<String> = lrs.iter().map(|v| v.to_string()).collect();
    let cols: Vec<String> = params.iter().map(|v| v.to_string()).collect();
    let title = format!("{} min gradient norm", kind.name());
    let svg = plot::heatmap(&res.mean, &rows, &cols, &title, "learning rate", param_axis);
    plot::write_svg(&svg, &paths[1])?;
    let best = res.best_lr_index();
    eprintln!(
        "best lr {} (std across {param_axis} {:.4})",
        lrs[best],
        res.row_std(best)
    );
    machine(&[
        ("sweep", kind.name().into()),
        ("best_lr", lrs[best].to_string()),
        ("row_std", format!("{}", res.row_std(best))),
        ("all_finite", res.all_finite().to_string()),
    ]);
    announce(cli, &paths);
    Ok(EXIT_OK)
}

fn cmd_bias(cli: &Cli, a: &BiasArgs) -> Result<i32> {
    let cf = load_config(cli)?;
    let cfg = experiment(cli, &cf)?;
    let paths = prepare_outputs(cli, &["bias.csv"])?;
    let objective = cfg.objective.build()?;
    let noise = cfg.noise.model()?;
    let x0 = cfg.initial_point(objective.dim());
    let opt = cfg.resolve(objective.as_ref(), &x0)?;
    let mut rng = stream_rng(cfg.seed, 0);

    let mut records = bias_lab::toy_records()?;
    if noise.variance().is_some() {
        let tau = cfg.noise.tau0 / (1.0 - cfg.noise.tau1);
        let r = 2.0 * tau.max(1e-3);
        let c = 2.0 * r;
        let points: Vec<Vec<f64>> = match cfg.objective {
            ObjectiveSpec::Cosh { dim } => (1..=10)
                .map(|i| bias_lab::cosh_point_with_grad_norm(dim, 2.0 * tau * i as f64 / 10.0))
                .collect(),
            _ => (0..10)
                .map(|_| bias_lab::random_point(objective.dim(), 2.0, &mut rng))
                .collect(),
        };
        records.extend(bias_lab::first_order_records(
            objective.as_ref(),
            &noise,
            &points,
            r,
            c,
            opt.eta(),
            a.draws,
            &mut rng,
        )?);
    } else {
        eprintln!("noise.kind = none: skipping first-order checks");
    }
    let iterates: Vec<Vec<f64>> = (0..a.points)
        .map(|_| bias_lab::random_point(objective.dim(), 2.0, &mut rng))
        .collect();
    records.extend(bias_lab::descent_records(
        objective.as_ref(),
        &noise,
        &iterates,
        &opt,
        a.draws,
        &mut rng,
    )?);

    bias_lab::write_report(&records, &paths[0])?;
    let failed: Vec<&CheckRecord> = records.iter().filter(|r| !r.pass).collect();
    for f in &failed {
        eprintln!(
            "FAIL {} [{}]: estimate {} vs bound {}",
            f.check, f.params, f.estimate, f.bound
        );
    }
    eprintln!("{} checks, {} failed", records.len(), failed.len());
    machine(&[
        ("bias_checks", records.len().to_string()),
        ("failed", failed.len().to_string()),
    ]);
    announce(cli, &paths);
    Ok(if failed.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDING
    })
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<i32> {
    let cf = load_config(cli)?;
    let cfg = experiment(cli, &cf)?;
    let objective = cfg.objective.build()?;
    let noise = cfg.noise.model()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let mut ok = true;

    if objective.is_finite_sum() {
        let points: Vec<Vec<f64>> = (0..a.points)
            .map(|_| bias_lab::random_point(objective.dim(), 2.0, &mut rng))
            .collect();
        let tau0 = empirical_tau0(objective.as_ref(), &points)?;
        eprintln!("finite sum: empirical per-sample deviation bound {tau0:.6}");
        machine(&[
            ("verify", "finite_sum_tau0".into()),
            ("tau0", format!("{tau0}")),
        ]);
    } else {
        let rep = check_assumption2(&noise, objective.as_ref(), a.points, a.draws, &mut rng)?;
        eprintln!(
            "noise bound holds on {} draws (max ratio {:.6})",
            rep.n_draws, rep.max_ratio
        );
        machine(&[
            ("verify", "noise_bound".into()),
            ("draws", rep.n_draws.to_string()),
            ("max_ratio", format!("{}", rep.max_ratio)),
        ]);
    }

    let x0 = cfg.initial_point(objective.dim());
    let theory = cfg.theory_params(objective.as_ref(), &x0)?;
    let sigma = cfg.optimizer.sigma;
    let param = cfg.optimizer.param;
    let t = cfg.steps;
    let (t_min, eta, bound) = match cfg.optimizer.kind {
        OptimizerKind::Nsgd => {
            let t_min = min_iterations_nsgd(&theory, param, sigma)?;
            let eta = theorem_lr_nsgd(&theory, param, sigma, t)?;
            let alpha = crate::optimizer::alpha0_nsgd(&theory.variance, param);
            (t_min, eta, eta_condition_nsgd(&theory, param, sigma, alpha))
        }
        OptimizerKind::Sgd => {
            let t_min = min_iterations_sgd(&theory, param, sigma)?;
            let eta = theorem_lr_sgd(&theory, param, sigma, t)?;
            let alpha = crate::optimizer::alpha0_sgd(&theory.variance, param);
            (t_min, eta, eta_condition_sgd(&theory, param, sigma, alpha))
        }
    };
    let holds = eta <= bound;
    ok &= holds;
    eprintln!(
        "{}: T={t}, T_min={t_min}, eta={eta:.6e}, step-size bound {bound:.6e}: {}",
        cfg.optimizer.kind.name(),
        if holds { "ok" } else { "VIOLATED" }
    );
    machine(&[
        ("verify", "step_size".into()),
        ("t_min", t_min.to_string()),
        ("eta", format!("{eta}")),
        ("bound", format!("{bound}")),
        ("pass", holds.to_string()),
    ]);
    Ok(if ok { EXIT_OK } else { EXIT_FINDING })
}

fn cmd_rate(cli: &Cli) -> Result<i32> {
    let cf = load_config(cli)?;
    let cfg = experiment(cli, &cf)?;
    let (steps, seeds) = cf.rate_grid()?;
    let seeds: Vec<u64> = seeds.iter().map(|s| s.wrapping_add(cfg.seed)).collect();
    let paths = prepare_outputs(cli, &["rate.csv", "rate.svg"])?;
    let rep = harness::rate_experiment(&cfg, &steps, &seeds)?;
    harness::output::write_rate_csv(&rep, &paths[0])?;
    let series = [plot::Series {
        name: cfg.optimizer.kind.name().into(),
        points: rep
            .points
            .iter()
            .map(|p| ((p.steps as f64).log10(), p.mean))
            .collect(),
    }];
    let svg = plot::line_chart(&series, "Rate", "log10 T", "mean min gradient norm", true);
    plot::write_svg(&svg, &paths[1])?;
    for p in &rep.points {
        eprintln!("T={:>8}: mean min grad norm {:.6e}", p.steps, p.mean);
    }
    eprintln!("log-log slope {:.4}", rep.slope);
    machine(&[
        ("rate", cfg.optimizer.kind.name().into()),
        ("slope", format!("{}", rep.slope)),
    ]);
    announce(cli, &paths);
    Ok(EXIT_OK)
}
