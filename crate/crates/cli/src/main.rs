use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use terra_nav::framework::{
    compute_metrics, export, run_bench, run_mission_on, summarize, sweep_retrain,
    train_model_error, write_json, write_runs_csv, write_summary_csv, write_sweep_csv,
    ExecutionModels, KernelChoice, MissionConfig,
};
use terra_nav::model_error::PerturbationOracle;
use terra_nav::terrain::{generate_terrain, TerrainStyle};

#[derive(Parser)]
#[command(
    name = "terra-nav",
    version,
    about = "Bipedal navigation over uncertain rough terrain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and export its log, metrics and heatmaps.
    Run(RunArgs),
    /// Train the lateral-deviation model and save it as JSON.
    TrainModelError(TrainArgs),
    /// Run seeded missions per terrain style and kernel; writes a per-kernel summary.
    Bench(BenchArgs),
    /// Sweep the retrain period and report success rates.
    SweepRetrain(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Mission configuration (JSON); omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "TERRA_NAV_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Seeds both the terrain and the mission, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kernel: Option<KernelChoice>,
    #[arg(long)]
    style: Option<TerrainStyle>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Destination file of the trained model.
    #[arg(long)]
    out: PathBuf,
    /// Training-set seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "rbf,nn,attentive")]
    kernels: Vec<KernelChoice>,
    #[arg(long, value_delimiter = ',', default_value = "hills,ridge,undulation")]
    styles: Vec<TerrainStyle>,
    /// Seeds per style; seeds run from 0.
    #[arg(long, default_value_t = 10)]
    trials: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    min: usize,
    #[arg(long)]
    max: usize,
    #[arg(long, default_value_t = 5)]
    trials: u64,
    #[arg(long)]
    kernel: Option<KernelChoice>,
    #[arg(long)]
    style: Option<TerrainStyle>,
}

fn load_config(path: Option<&Path>) -> Result<MissionConfig> {
    Ok(match path {
        Some(p) => MissionConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => MissionConfig::default(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.common.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.terrain_seed = seed;
    }
    if let Some(k) = args.kernel {
        cfg.kernel = k;
    }
    if let Some(s) = args.style {
        cfg.terrain.style = s;
    }
    cfg.validate()?;
    let field = generate_terrain(&cfg.terrain, cfg.terrain_seed)?;
    let models = ExecutionModels::from_config(&cfg)?;
    let t0 = Instant::now();
    let log = run_mission_on(&cfg, &field, &models)?;
    let mut report = compute_metrics(&log, &field);
    report.wall_time_s = t0.elapsed().as_secs_f64();
    create_dir(&args.common.out)?;
    export(&log, &report, &field, &args.common.out)?;
    println!(
        "{:?} after {} steps ({} retrains, {:.1} s); outputs in {}",
        report.outcome,
        report.steps,
        report.retrains,
        report.wall_time_s,
        args.common.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let me = &cfg.model_error;
    let oracle = PerturbationOracle::calibrated(&me.ranges, me.oracle_noise_std);
    let seed = args.seed.unwrap_or(me.training_seed);
    let model = train_model_error(&oracle, me.points_per_axis, me.ranges, seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    model.save(&args.out)?;
    println!("model written to {}", args.out.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let base = load_config(args.common.config.as_deref())?;
    let models = ExecutionModels::from_config(&base)?;
    let seeds: Vec<u64> = (0..args.trials).collect();
    let t0 = Instant::now();
    let runs = run_bench(&base, &args.styles, &args.kernels, &seeds, &models)?;
    let summary = summarize(&runs, &args.kernels);
    let dir = &args.common.out;
    create_dir(dir)?;
    write_summary_csv(&summary, &dir.join("summary.csv"))?;
    write_runs_csv(&runs, &dir.join("runs.csv"))?;
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{:<10} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "kernel", "reached", "path_err", "env_err", "path_std", "env_std"
    );
    for s in &summary {
        println!(
            "{:<10} {:>4}/{:<3} {:>12.3e} {:>12.3e} {:>10.3e} {:>10.3e}",
            s.kernel.name(),
            s.reached,
            s.runs,
            s.path_error,
            s.env_error_mean,
            s.path_std,
            s.env_std
        );
    }
    println!(
        "{} missions in {:.1} s; tables in {}",
        runs.len(),
        t0.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    if args.min == 0 || args.min > args.max {
        bail!("need 1 <= --min <= --max");
    }
    let mut base = load_config(args.common.config.as_deref())?;
    if let Some(k) = args.kernel {
        base.kernel = k;
    }
    if let Some(s) = args.style {
        base.terrain.style = s;
    }
    let models = ExecutionModels::from_config(&base)?;
    let seeds: Vec<u64> = (0..args.trials).collect();
    let rows = sweep_retrain(&base, args.min..=args.max, &seeds, &models)?;
    create_dir(&args.common.out)?;
    write_sweep_csv(&rows, &args.common.out.join("sweep.csv"))?;
    for r in &rows {
        println!(
            "period {:>3}: {}/{} reached, {:.1} steps, path error {:.3e}",
            r.retrain_period, r.reached, r.runs, r.mean_steps, r.mean_path_error
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::TrainModelError(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::SweepRetrain(a) => sweep(a),
    }
}
