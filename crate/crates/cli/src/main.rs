use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use parabolic_backstepping::analysis::{lyapunov_monitor, modal_rate_oracle, TARGET_DECAY_RATE};
use parabolic_backstepping::config::{parse_config, RunConfig};
use parabolic_backstepping::io::{
    write_feedback_csv, write_file, write_injection_csv, write_kernel_csv, write_norms_csv,
    write_report_csv, write_snapshots_csv, RunManifest,
};
use parabolic_backstepping::kernels::{KernelSet, ObserverSetup};
use parabolic_backstepping::sim::{run_scenario, Scenario, SimConfig};
use parabolic_backstepping::verify::{all_pass, render, run_verification};
use parabolic_backstepping::Error;

/// Backstepping kernels, simulations and checks for the coupled
/// reaction-diffusion plant `w_t = w_xx + Σw`.
#[derive(Parser)]
#[command(name = "pbs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the four kernels and write surfaces and gain curves.
    Kernels(Common),
    /// Run a scenario and write snapshots and norm time series.
    Simulate(Common),
    /// Run the verification suite; exits 1 if any check fails.
    Verify(Common),
    /// Print the dominant open-loop growth rate.
    Spectrum(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Kernel grid resolution.
    #[arg(long)]
    n: Option<usize>,
    /// Simulation grid intervals.
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    scenario: Option<String>,
    /// Overrides `lambda1` from the config.
    #[arg(long, allow_hyphen_values = true)]
    lambda1: Option<f64>,
    /// Overrides `lambda2` from the config.
    #[arg(long, allow_hyphen_values = true)]
    lambda2: Option<f64>,
}

enum Failure {
    Usage(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(args: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => {
            let (Some(l1), Some(l2)) = (args.lambda1, args.lambda2) else {
                return Err(Failure::Usage(
                    "either --config or both --lambda1 and --lambda2 are required".into(),
                ));
            };
            RunConfig::new(SimConfig::new(l1, l2, Scenario::StateFeedback))
        }
    };
    if let Some(l1) = args.lambda1 {
        cfg.sim.lambda1 = l1;
    }
    if let Some(l2) = args.lambda2 {
        cfg.sim.lambda2 = l2;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(nx) = args.nx {
        cfg.sim.nx = nx;
    }
    if let Some(name) = &args.scenario {
        cfg.sim.scenario =
            Scenario::from_name(name).ok_or_else(|| Failure::Usage(format!("unknown scenario `{name}`")))?;
    }
    cfg.sim.validate()?;
    Ok(cfg)
}

fn prepare(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_kernels(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    prepare(&args.out)?;
    let mut manifest = RunManifest::new("kernels", cfg.to_text());
    let start = Instant::now();
    let ks = KernelSet::solve_with_tol(cfg.sim.lambda1, cfg.sim.lambda2, cfg.n, cfg.tol)?;
    manifest.timings.push(("solve".into(), start.elapsed().as_secs_f64()));

    let dir = &args.out;
    for (name, kf) in [
        ("kernel_control.csv", &ks.control),
        ("kernel_inverse.csv", &ks.inverse),
        ("kernel_observer_anticollocated.csv", &ks.anticollocated),
        ("kernel_observer_collocated.csv", &ks.collocated),
    ] {
        manifest.record_kernel(kf);
        manifest.files.push(write_file(dir, name, |w| write_kernel_csv(w, kf))?);
    }
    let anti = ks.gains(ObserverSetup::AntiCollocated)?;
    let colloc = ks.gains(ObserverSetup::Collocated)?;
    manifest.files.push(write_file(dir, "gains_feedback.csv", |w| write_feedback_csv(w, &anti))?);
    manifest.files.push(write_file(dir, "gains_injection_anticollocated.csv", |w| {
        write_injection_csv(w, &anti)
    })?);
    manifest.files.push(write_file(dir, "gains_injection_collocated.csv", |w| {
        write_injection_csv(w, &colloc)
    })?);
    manifest.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    for f in &manifest.files {
        println!("wrote {}", f.display());
    }
    manifest.write(dir)?;
    Ok(())
}

fn cmd_simulate(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    prepare(&args.out)?;
    let mut manifest = RunManifest::new("simulate", cfg.to_text());
    let start = Instant::now();
    let kernels = if cfg.sim.scenario.needs_gains() {
        let ks = KernelSet::solve_with_tol(cfg.sim.lambda1, cfg.sim.lambda2, cfg.n, cfg.tol)?;
        for kf in [&ks.control, &ks.anticollocated, &ks.collocated] {
            manifest.record_kernel(kf);
        }
        Some(ks)
    } else {
        None
    };
    let gains = match &kernels {
        Some(ks) => Some(ks.gains(cfg.sim.scenario.observer().unwrap_or(ObserverSetup::AntiCollocated))?),
        None => None,
    };
    manifest.timings.push(("kernels".into(), start.elapsed().as_secs_f64()));
    let traj = run_scenario(&cfg.sim, gains.as_ref())?;
    manifest.timings.push(("simulation".into(), start.elapsed().as_secs_f64()));

    let lyap = match (&kernels, &gains, cfg.sim.scenario) {
        (Some(ks), Some(g), Scenario::OutputFeedbackAntiCollocated) => {
            Some(lyapunov_monitor(&traj, &ks.control, &ks.anticollocated, g)?.v)
        }
        _ => None,
    };
    let dir = &args.out;
    manifest.files.push(write_file(dir, "snapshots.csv", |w| write_snapshots_csv(w, &traj))?);
    manifest.files.push(write_file(dir, "norms.csv", |w| write_norms_csv(w, &traj, lyap.as_deref()))?);
    manifest.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    for f in &manifest.files {
        println!("wrote {}", f.display());
    }
    manifest.write(dir)?;
    Ok(())
}

fn cmd_verify(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    prepare(&args.out)?;
    let mut manifest = RunManifest::new("verify", cfg.to_text());
    let start = Instant::now();
    let checks = run_verification(&cfg)?;
    manifest.timings.push(("checks".into(), start.elapsed().as_secs_f64()));
    let text = render(&checks);
    print!("{text}");
    let dir = &args.out;
    manifest.files.push(write_file(dir, "report.csv", |w| write_report_csv(w, &checks))?);
    let txt = dir.join("report.txt");
    std::fs::write(&txt, &text)?;
    manifest.files.push(txt);
    manifest.write(dir)?;
    if all_pass(&checks) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_spectrum(args: &Common) -> Result<(), Failure> {
    let cfg = load(args)?;
    let rate = modal_rate_oracle(cfg.sim.lambda1, cfg.sim.lambda2)?;
    println!("{rate:.4}");
    println!(
        "# sqrt(lambda1*lambda2) = {:.6}, slowest heat mode = {:.6}, {}",
        rate + TARGET_DECAY_RATE,
        TARGET_DECAY_RATE,
        if rate > 0.0 { "open loop unstable" } else { "open loop stable" }
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Kernels(a) => cmd_kernels(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Spectrum(a) => cmd_spectrum(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
