//! Command-line pipeline: simulate ground-truth grasp trajectories, estimate
//! inertial parameters from them, run friction trials, and tabulate method
//! comparisons.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graspdyn::error::Error;
use graspdyn::friction::{estimate_mu, servo_until_slip, ContactSurface};
use graspdyn::graph::{
    baseline_least_squares, build_graph, solve, InertialSeed, Smoothing, SolverConfig, Variant,
};
use graspdyn::io;
use graspdyn::se3::Vec3;
use graspdyn::sim::{add_force_noise, run_sim, SimConfig};

#[derive(Parser)]
#[command(
    name = "graspdyn",
    about = "Grasped-object inertial and friction estimation from fingertip force sensing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ground-truth trajectory dataset (JSONL).
    Simulate(SimulateArgs),
    /// Estimate inertial parameters from a dataset.
    Estimate(EstimateArgs),
    /// Run simulated friction-servo trials.
    Friction(FrictionArgs),
    /// Tabulate estimation reports against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file: JSON with params, hull, and attachment points.
    #[arg(long)]
    model: PathBuf,
    /// Simulation config (flat key = value text); defaults apply if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Force noise variance sigma^2 in N^2 added to the recorded forces.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma2: f64,
    /// Seed for the simulation and the noise stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trajectory dataset (JSONL).
    #[arg(long)]
    data: PathBuf,
    /// Object hull file (JSON, vertices or halfspaces).
    #[arg(long)]
    hull: PathBuf,
    /// One of: baseline, baseline-fg, no-c-no-g, c-no-g, c-plus-g.
    #[arg(long)]
    method: String,
    /// Prior parameters file; required for c-plus-g.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Solver config (flat key = value text).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Disable the Savitzky-Golay force smoothing of the baseline method.
    #[arg(long, default_value_t = false)]
    no_smoothing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FrictionArgs {
    /// True coefficient of static friction for the simulated surface.
    #[arg(long)]
    mu_true: f64,
    /// Servo config (flat key = value text); defaults apply if omitted.
    #[arg(long)]
    servo_config: Option<PathBuf>,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth parameters file.
    #[arg(long)]
    gt: PathBuf,
    /// Estimation report files (JSON), one row each, in order.
    #[arg(long, num_args = 1..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> graspdyn::Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Friction(a) => cmd_friction(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn cmd_simulate(args: SimulateArgs) -> graspdyn::Result<()> {
    let model = io::load_model(&args.model)?;
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            io::parse_sim_config(&text, &path.display().to_string())?
        }
        None => SimConfig::default(),
    };
    config.seed = args.seed;
    if args.noise_sigma2 < 0.0 {
        return Err(Error::InvalidConfig("noise variance must be >= 0".into()));
    }
    let mut traj = run_sim(&model, &config)?;
    if args.noise_sigma2 > 0.0 {
        traj = add_force_noise(&traj, args.noise_sigma2, args.seed.wrapping_add(1))?;
    }
    io::save_trajectory(&args.out, &traj)?;
    println!("{} samples -> {}", traj.samples.len(), args.out.display());
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> graspdyn::Result<()> {
    let traj = io::load_trajectory(&args.data)?;
    let hull = io::load_hull(&args.hull)?;
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            io::parse_solver_config(&text, &path.display().to_string())?
        }
        None => SolverConfig::default(),
    };

    let report = if args.method == "baseline" {
        let smoothing = if args.no_smoothing {
            Smoothing::Off
        } else {
            Smoothing::On
        };
        let started = std::time::Instant::now();
        let baseline = baseline_least_squares(&traj, smoothing, &config.gravity_vec())?;
        if baseline.rank_deficient {
            eprintln!(
                "warning: rank-deficient system (rank {}); minimum-norm solution",
                baseline.rank
            );
        }
        io::report_from_baseline(&baseline, started.elapsed().as_secs_f64())
    } else {
        config.variant = Variant::parse(&args.method)?;
        let prior = match (&args.prior, config.variant.has_prior()) {
            (Some(path), _) => Some(io::load_params(path)?),
            (None, true) => {
                return Err(Error::InvalidConfig(
                    "method c-plus-g requires --prior".into(),
                ))
            }
            (None, false) => None,
        };
        let graph = build_graph(&traj, &hull, &config, prior.as_ref())?;
        solve(&graph, &config, InertialSeed::Default)?
    };

    io::save_report(&args.out, &report)?;
    println!(
        "{}: mass {:.4} kg, com ({:.4}, {:.4}, {:.4}) m -> {}",
        report.method,
        report.params.mass,
        report.params.com[0],
        report.params.com[1],
        report.params.com[2],
        args.out.display()
    );
    Ok(())
}

fn cmd_friction(args: FrictionArgs) -> graspdyn::Result<()> {
    if args.trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let (cfg, warp) = match &args.servo_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            io::parse_servo_config(&text, &path.display().to_string())?
        }
        None => (graspdyn::friction::ServoConfig::default(), None),
    };
    let normal = Vec3::new(0.0, 0.0, 1.0);
    let mut surface = ContactSurface::new(normal, args.mu_true)?;
    surface.warp = warp;

    let mut rows = Vec::with_capacity(args.trials);
    for trial in 0..args.trials {
        let ev = servo_until_slip(&surface, &cfg, args.seed.wrapping_add(trial as u64))?;
        if !ev.slipped {
            eprintln!("warning: trial {trial} reached the normal floor without slip");
        }
        let mu_est = estimate_mu(&ev.f_slip, &normal)?;
        rows.push((trial, mu_est, ev.f_slip));
    }
    let f = std::fs::File::create(&args.out)?;
    io::write_friction_csv(std::io::BufWriter::new(f), "sim", args.mu_true, &rows)?;
    println!("{} trials -> {}", args.trials, args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> graspdyn::Result<()> {
    let gt = io::load_params(&args.gt)?;
    let mut rows = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let report = io::load_report(path)?;
        let dataset = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        rows.push(io::MetricsRow::compute(&dataset, &gt, &report)?);
    }
    let f = std::fs::File::create(&args.out)?;
    io::write_metrics_csv(std::io::BufWriter::new(f), &rows)?;
    println!("{} rows -> {}", rows.len(), args.out.display());
    Ok(())
}
