//! Command-line surface for the surface-code memory laboratory.
//!
//! Subcommands: `train`, `attack run|sweep`, `verify`, `threshold`,
//! `robustness`, `referee bench`, `lattice dump`, `baseline`. All outputs are
//! CSV or JSON files under `--out-dir` (plus human-readable summaries on
//! stdout). Every command is exactly reproducible from its flags and `--seed`.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qeclab::attack::{
    error_histogram, mean_attack_lifetime, AttackConfig, AttackStrategy,
};
use qeclab::dqn::{
    load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig,
};
use qeclab::env::{baseline_unprotected_lifetime, EnvConfig, MemoryEnv};
use qeclab::experiments::{
    attack_sweep, bootstrap_mean_ci, referee_sweep, robustness_sweep,
    standard_rates, ResultStore, SweepConfig,
};
use qeclab::lattice::build_lattice;
use qeclab::noise::{NoiseSpec, SpatialProfile};
use qeclab::referee::build_matching_graphs;
use qeclab::verifier::{fit_ansatz, verify_decoder, DecoderUnderTest};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "qeclab", about = "Surface-code memory laboratory", version)]
struct Cli {
    /// Master seed; every stochastic component derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Optional JSON config file; explicit flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Worker count. Execution is sequential regardless, preserving
    /// bit-exact determinism; the flag exists for interface stability.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a deep-Q decoder and write a checkpoint.
    Train(TrainArgs),
    /// Adversarial attacks against a trained decoder.
    Attack {
        #[command(subcommand)]
        cmd: AttackCmd,
    },
    /// Exhaustive fault-tolerance verification (Table-1-shaped CSV).
    Verify(VerifyArgs),
    /// Referee-only failure rates over an error-rate grid plus an ansatz fit.
    Threshold(ThresholdArgs),
    /// Decoder robustness across spatial noise profiles.
    Robustness(RobustnessArgs),
    /// Referee benchmarks.
    Referee {
        #[command(subcommand)]
        cmd: RefereeCmd,
    },
    /// Lattice inspection.
    Lattice {
        #[command(subcommand)]
        cmd: LatticeCmd,
    },
    /// Unprotected single-qubit lifetime baseline.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 3)]
    distance: usize,
    #[arg(long, default_value_t = 0.005)]
    p_phys: f64,
    #[arg(long, default_value_t = 0.0)]
    p_meas: f64,
    /// Environment steps of training; defaults to the TrainConfig default.
    #[arg(long)]
    steps: Option<u64>,
    /// Cycle cap per training episode.
    #[arg(long, default_value_t = 2_000)]
    cycle_cap: u64,
    /// Checkpoint output path.
    #[arg(long, default_value = "decoder.json")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Repeated attacks with one strategy and population size.
    Run(AttackRunArgs),
    /// Full factorial over strategies and population sizes.
    Sweep(AttackSweepArgs),
}

#[derive(Args)]
struct AttackRunArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse_strategy, default_value = "min")]
    strategy: AttackStrategy,
    /// Candidate volumes sampled per round (N).
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 0.001)]
    p_phys: f64,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 20_000)]
    cycle_cap: u64,
    /// Reject candidate batches touching more than this many distinct qubits.
    #[arg(long)]
    max_qubits: Option<usize>,
    /// One greedy correction per round (literal single-action mode).
    #[arg(long)]
    single_action_round: bool,
    /// Also emit a per-qubit error histogram over the first ROUNDS rounds.
    #[arg(long, value_name = "ROUNDS")]
    histogram_rounds: Option<usize>,
}

#[derive(Args)]
struct AttackSweepArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated strategies (min,max,min_var,max_var).
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy,
          default_value = "min,max,min_var,max_var")]
    strategies: Vec<AttackStrategy>,
    /// Comma-separated candidate population sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,8,16,32")]
    n_values: Vec<usize>,
    /// Comma-separated physical error rates.
    #[arg(long, value_delimiter = ',', default_value = "0.001")]
    p_values: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 20_000)]
    cycle_cap: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 3)]
    distance: usize,
    /// Verify every pattern weight from 1 to this bound.
    #[arg(long, default_value_t = 1)]
    max_errors: usize,
    /// Optional trained decoder; without it the MWPM referee is verified.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Comma-separated code distances.
    #[arg(long, value_delimiter = ',', default_value = "3,5")]
    distances: Vec<usize>,
    /// Comma-separated error-rate grid; default is the standard grid.
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
    /// Environment steps per (distance, rate) cell.
    #[arg(long, default_value_t = 20_000)]
    steps_per_cell: u64,
    #[arg(long, default_value_t = 100_000)]
    cycle_cap: u64,
    /// Threshold hint for the ansatz fit (alpha absorbs the intercept).
    #[arg(long, default_value_t = 0.01)]
    p_threshold_hint: f64,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Gaussian sigmas to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.0001,0.0005")]
    sigmas: Vec<f64>,
    /// Patterned-profile betas to sweep (cross, quadrant, concentric).
    #[arg(long, value_delimiter = ',', default_value = "0.002,0.004,0.008")]
    betas: Vec<f64>,
    /// Skip the patterned profiles, sweep gaussian + uniform only.
    #[arg(long)]
    gaussian_only: bool,
    #[arg(long, default_value_t = 200)]
    episodes_per_rate: usize,
    #[arg(long, default_value_t = 2_000)]
    cycle_cap: u64,
}

#[derive(Subcommand)]
enum RefereeCmd {
    /// Referee-only lifetime-vs-rate CSV, optionally miscalibrated.
    Bench(RefereeBenchArgs),
}

#[derive(Args)]
struct RefereeBenchArgs {
    #[arg(long, default_value_t = 3)]
    distance: usize,
    /// Standard deviation of the N(1, sigma^2) weight miscalibration.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20_000)]
    steps_per_cell: u64,
    #[arg(long, default_value_t = 100_000)]
    cycle_cap: u64,
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Dump stabilizer and logical supports as JSON.
    Dump {
        #[arg(long, default_value_t = 3)]
        distance: usize,
    },
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, default_value_t = 0.001)]
    p_phys: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
}

fn parse_strategy(s: &str) -> Result<AttackStrategy, String> {
    match s {
        "min" => Ok(AttackStrategy::Min),
        "max" => Ok(AttackStrategy::Max),
        "min_var" => Ok(AttackStrategy::MinVar),
        "max_var" => Ok(AttackStrategy::MaxVar),
        other => Err(format!(
            "unknown strategy {other:?}; expected min, max, min_var, or max_var"
        )),
    }
}

/// Loads the optional JSON config file and overlays it under `flag_value`
/// semantics: only fields absent from the command line are taken from it.
/// Train is the only subcommand with enough knobs to warrant it.
fn load_train_config(path: Option<&Path>, seed: u64) -> Result<TrainConfig> {
    let mut config = match path {
        Some(p) => {
            let data = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&data)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    config.seed = seed;
    Ok(config)
}

fn load_net(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    if cli.workers > 1 {
        eprintln!("note: execution is sequential; --workers > 1 has no effect");
    }

    match &cli.command {
        Command::Train(args) => cmd_train(&cli, args),
        Command::Attack { cmd: AttackCmd::Run(args) } => cmd_attack_run(&cli, args),
        Command::Attack { cmd: AttackCmd::Sweep(args) } => cmd_attack_sweep(&cli, args),
        Command::Verify(args) => cmd_verify(&cli, args),
        Command::Threshold(args) => cmd_threshold(&cli, args),
        Command::Robustness(args) => cmd_robustness(&cli, args),
        Command::Referee { cmd: RefereeCmd::Bench(args) } => cmd_referee_bench(&cli, args),
        Command::Lattice { cmd: LatticeCmd::Dump { distance } } => cmd_lattice_dump(*distance),
        Command::Baseline(args) => cmd_baseline(&cli, args),
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut config = load_train_config(cli.config.as_deref(), cli.seed)?;
    if let Some(steps) = args.steps {
        config.total_steps = steps;
    }
    let distance = args.distance;
    let noise = NoiseSpec::depolarizing(args.p_phys, args.p_meas, distance);
    let cycle_cap = args.cycle_cap;
    let make_env = move |seed| {
        MemoryEnv::new(EnvConfig::new(noise.clone(), seed).with_cycle_cap(cycle_cap))
    };

    eprintln!(
        "training d={distance} p={} for {} steps (seed {})",
        args.p_phys, config.total_steps, config.seed
    );
    let result = train(make_env, &config)?;
    let depth = distance; // rounds span `distance` cycles by default
    let ckpt = Checkpoint::new(result.net, distance, depth, config);
    save_checkpoint(&ckpt, &args.out)?;
    println!("checkpoint written to {}", args.out.display());

    let curve_path = cli.out_dir.join("training_curve.csv");
    let rows: Vec<Vec<String>> = result
        .curve
        .iter()
        .map(|c| {
            vec![
                c.step.to_string(),
                c.epsilon.to_string(),
                c.eval_mean_lifetime.to_string(),
            ]
        })
        .collect();
    write_csv(&curve_path, &["step", "epsilon", "eval_mean_lifetime"], &rows)?;
    println!("training curve written to {}", curve_path.display());
    Ok(())
}

fn cmd_attack_run(cli: &Cli, args: &AttackRunArgs) -> Result<()> {
    let ckpt = load_net(&args.checkpoint)?;
    let mut env = MemoryEnv::new(EnvConfig::new(
        NoiseSpec::depolarizing(args.p_phys, 0.0, ckpt.distance),
        cli.seed,
    ));
    let mut config = AttackConfig::new(args.strategy, args.n, cli.seed)
        .with_cycle_cap(args.cycle_cap);
    if let Some(cap) = args.max_qubits {
        config = config.with_qubit_cap(cap);
    }
    config.single_action_round = args.single_action_round;

    let started = std::time::Instant::now();
    let (mean, results) = mean_attack_lifetime(&mut env, &ckpt.net, &config, args.reps)?;
    let elapsed = started.elapsed().as_secs_f64();

    let lifetimes: Vec<f64> = results.iter().map(|r| r.lifetime_cycles as f64).collect();
    let mut sorted = lifetimes.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = sorted[sorted.len() / 2];
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed ^ 0xb007);
    let ci = bootstrap_mean_ci(&lifetimes, 10_000, 0.95, &mut rng);

    let stem = format!("attack-{}-n{}-p{}", args.strategy.name(), args.n, args.p_phys);
    let csv_path = cli.out_dir.join(format!("{stem}-lifetimes.csv"));
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), r.lifetime_cycles.to_string(), r.volumes_consumed.to_string()])
        .collect();
    write_csv(&csv_path, &["rep", "lifetime_cycles", "volumes"], &rows)?;

    let summary = serde_json::json!({
        "strategy": args.strategy.name(),
        "n_samples": args.n,
        "p_phys": args.p_phys,
        "reps": args.reps,
        "cycle_cap": args.cycle_cap,
        "max_qubits": args.max_qubits,
        "single_action_round": args.single_action_round,
        "seed": cli.seed,
        "mean_lifetime": ci.mean,
        "median_lifetime": median,
        "ci_lower": ci.lower,
        "ci_upper": ci.upper,
        "mean_seconds_per_attack": elapsed / args.reps.max(1) as f64,
    });
    let json_path = cli.out_dir.join(format!("{stem}-summary.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;

    if let Some(rounds) = args.histogram_rounds {
        let hist = error_histogram(&results, ckpt.distance * ckpt.distance, rounds);
        let hist_path = cli.out_dir.join(format!("{stem}-histogram.json"));
        std::fs::write(&hist_path, serde_json::to_string_pretty(&hist)?)?;
        println!("histogram written to {}", hist_path.display());
    }

    println!(
        "{} attack, N={}: mean lifetime {:.1} cycles (95% CI [{:.1}, {:.1}]), {:.3} s/attack",
        args.strategy.name(), args.n, mean, ci.lower, ci.upper,
        elapsed / args.reps.max(1) as f64
    );
    println!("lifetimes: {}", csv_path.display());
    println!("summary:   {}", json_path.display());
    Ok(())
}

fn cmd_attack_sweep(cli: &Cli, args: &AttackSweepArgs) -> Result<()> {
    let ckpt = load_net(&args.checkpoint)?;
    let mut rows = Vec::new();
    for &p in &args.p_values {
        let cells = attack_sweep(
            &ckpt.net,
            ckpt.distance,
            p,
            &args.strategies,
            &args.n_values,
            args.reps,
            args.cycle_cap,
            cli.seed,
        );
        for cell in cells {
            rows.push(vec![
                cell.strategy.name().to_string(),
                cell.n_samples.to_string(),
                cell.p_phys.to_string(),
                cell.mean_lifetime.to_string(),
                cell.elapsed_secs.to_string(),
            ]);
        }
    }
    let path = cli.out_dir.join("attack_sweep.csv");
    write_csv(
        &path,
        &["strategy", "n_samples", "p_phys", "mean_lifetime", "elapsed_secs"],
        &rows,
    )?;
    println!("attack sweep written to {}", path.display());
    Ok(())
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<()> {
    let lattice = build_lattice(args.distance)?;
    let graphs = build_matching_graphs(&lattice, None)?;
    let ckpt = args.checkpoint.as_deref().map(load_net).transpose()?;
    if let Some(c) = &ckpt {
        if c.distance != args.distance {
            bail!(
                "checkpoint is for distance {}, requested {}",
                c.distance,
                args.distance
            );
        }
    }
    let mut rows = Vec::new();
    for n in 1..=args.max_errors {
        let decoder = match &ckpt {
            Some(c) => DecoderUnderTest::Dqn { net: &c.net, depth: c.depth },
            None => DecoderUnderTest::MwpmOnly,
        };
        let report = verify_decoder(&lattice, &graphs, &decoder, n)?;
        println!(
            "d={} n={}: {} patterns, {} failures ({:.4}%), {} referee calls, {} remaining defects",
            args.distance, n, report.total_patterns, report.failures,
            report.failure_rate_percent(), report.referee_required, report.remaining_defects
        );
        rows.push(vec![
            args.distance.to_string(),
            n.to_string(),
            report.total_patterns.to_string(),
            report.failures.to_string(),
            format!("{:.6}", report.failure_rate_percent()),
            report.referee_required.to_string(),
            report.remaining_defects.to_string(),
        ]);
    }
    let path = cli.out_dir.join(format!("verify_d{}.csv", args.distance));
    write_csv(
        &path,
        &[
            "distance",
            "n_errors",
            "patterns",
            "failures",
            "failure_rate_percent",
            "referee_required",
            "remaining_defects",
        ],
        &rows,
    )?;
    println!("verification table written to {}", path.display());
    Ok(())
}

fn cmd_threshold(cli: &Cli, args: &ThresholdArgs) -> Result<()> {
    let rates = args.p_grid.clone().unwrap_or_else(standard_rates);
    let mut rows = Vec::new();
    for &d in &args.distances {
        let record = referee_sweep(
            d,
            0.0,
            &rates,
            args.steps_per_cell,
            args.cycle_cap,
            10_000,
            cli.seed,
        );
        let mut samples = Vec::new();
        for point in &record.points {
            // Failure probability per decoding round: episodes that ended in
            // referee failure divided by total rounds survived.
            let rounds: u64 = point.lifetimes.iter().map(|&l| l / d as u64).sum();
            let failures = point.lifetimes.len() as u64;
            let p_fail = failures as f64 / rounds.max(1) as f64;
            samples.push((point.p_phys, p_fail));
            rows.push(vec![
                d.to_string(),
                point.p_phys.to_string(),
                p_fail.to_string(),
                failures.to_string(),
                rounds.to_string(),
            ]);
        }
        match fit_ansatz(d, &samples, args.p_threshold_hint) {
            Ok(fit) => {
                let path = cli.out_dir.join(format!("ansatz_d{d}.json"));
                std::fs::write(&path, serde_json::to_string_pretty(&fit)?)?;
                println!(
                    "d={d}: alpha={:.6e} p_th={} exponent={} -> {}",
                    fit.alpha, fit.p_threshold, fit.exponent, path.display()
                );
            }
            Err(e) => eprintln!("d={d}: ansatz fit skipped ({e})"),
        }
    }
    let path = cli.out_dir.join("threshold.csv");
    write_csv(
        &path,
        &["distance", "p_phys", "p_fail_per_round", "failures", "rounds"],
        &rows,
    )?;
    println!("threshold data written to {}", path.display());
    Ok(())
}

fn cmd_robustness(cli: &Cli, args: &RobustnessArgs) -> Result<()> {
    let ckpt = load_net(&args.checkpoint)?;
    let config = SweepConfig {
        distance: ckpt.distance,
        episodes_per_rate: args.episodes_per_rate,
        cycle_cap: args.cycle_cap,
        seed: cli.seed,
        ..SweepConfig::default()
    };
    let mut profiles: Vec<SpatialProfile> = args
        .sigmas
        .iter()
        .map(|&sigma| SpatialProfile::Gaussian { sigma })
        .collect();
    if !args.gaussian_only {
        for &beta in &args.betas {
            profiles.push(SpatialProfile::Cross { beta });
            profiles.push(SpatialProfile::Quadrant { beta });
            profiles.push(SpatialProfile::Concentric { beta });
        }
    }
    let rows = robustness_sweep(&ckpt.net, &config, &profiles);
    let store = ResultStore::open(&cli.out_dir)?;
    let mut csv_rows = Vec::new();
    for row in &rows {
        store.save(&row.run)?;
        store.save(&row.uniform_reference)?;
        for (point, reference) in row.run.points.iter().zip(&row.uniform_reference.points) {
            csv_rows.push(vec![
                row.run.label.clone(),
                point.p_phys.to_string(),
                point.ci.mean.to_string(),
                reference.ci.mean.to_string(),
            ]);
        }
    }
    let path = cli.out_dir.join("robustness.csv");
    write_csv(
        &path,
        &["profile", "p_phys", "mean_lifetime", "uniform_mean_lifetime"],
        &csv_rows,
    )?;
    println!("robustness sweep written to {}", path.display());
    Ok(())
}

fn cmd_referee_bench(cli: &Cli, args: &RefereeBenchArgs) -> Result<()> {
    let rates = args.rates.clone().unwrap_or_else(standard_rates);
    let record = referee_sweep(
        args.distance,
        args.sigma,
        &rates,
        args.steps_per_cell,
        args.cycle_cap,
        10_000,
        cli.seed,
    );
    let rows: Vec<Vec<String>> = record
        .points
        .iter()
        .map(|p| {
            vec![
                args.distance.to_string(),
                args.sigma.to_string(),
                p.p_phys.to_string(),
                p.ci.mean.to_string(),
                p.ci.lower.to_string(),
                p.ci.upper.to_string(),
                p.lifetimes.len().to_string(),
            ]
        })
        .collect();
    let path = cli
        .out_dir
        .join(format!("referee_d{}_sigma{}.csv", args.distance, args.sigma));
    write_csv(
        &path,
        &["distance", "sigma", "p_phys", "mean_lifetime", "ci_lower", "ci_upper", "episodes"],
        &rows,
    )?;
    println!("referee bench written to {}", path.display());
    Ok(())
}

fn cmd_lattice_dump(distance: usize) -> Result<()> {
    let lattice = build_lattice(distance)?;
    println!("{}", serde_json::to_string_pretty(&lattice)?);
    Ok(())
}

fn cmd_baseline(cli: &Cli, args: &BaselineArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mean = baseline_unprotected_lifetime(args.p_phys, args.trials, &mut rng)?;
    println!(
        "unprotected single-qubit lifetime at p={}: {:.2} cycles (analytic 1/p = {:.2})",
        args.p_phys, mean, 1.0 / args.p_phys
    );
    Ok(())
}
