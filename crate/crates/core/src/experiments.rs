//! Reproducible experiment sweeps: decoder lifetime versus physical error
//! rate, robustness across spatial noise profiles, adversarial factorials,
//! and referee-only baselines, with bootstrap confidence intervals and an
//! append-only on-disk result store.

use crate::attack::{mean_attack_lifetime, AttackConfig, AttackStrategy};
use crate::dqn::{greedy_action, QNetwork};
use crate::env::{run_episode, Action, EnvConfig, MemoryEnv};
use crate::noise::{NoiseKind, NoiseSpec, SpatialProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// The standard sweep grid: 0.1% to 1.2% in steps of 0.1%.
pub fn standard_rates() -> Vec<f64> {
    (1..=12).map(|i| i as f64 * 0.001).collect()
}

/// Percentile-bootstrap confidence interval for a sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

impl ConfidenceInterval {
    /// True when the two intervals share no points.
    pub fn disjoint_from(&self, other: &ConfidenceInterval) -> bool {
        self.upper < other.lower || other.upper < self.lower
    }
}

/// Percentile bootstrap of the mean: `resamples` draws with replacement,
/// symmetric tail cut at `(1 - confidence) / 2` per side.
pub fn bootstrap_mean_ci(
    samples: &[f64],
    resamples: usize,
    confidence: f64,
    rng: &mut ChaCha8Rng,
) -> ConfidenceInterval {
    assert!(!samples.is_empty(), "bootstrap needs samples");
    assert!(confidence > 0.0 && confidence < 1.0);
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += samples[rng.gen_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let tail = (1.0 - confidence) / 2.0;
    let lo_idx = ((resamples as f64 * tail) as usize).min(resamples - 1);
    let hi_idx = ((resamples as f64 * (1.0 - tail)) as usize).min(resamples - 1);
    ConfidenceInterval {
        mean,
        lower: means[lo_idx],
        upper: means[hi_idx],
        confidence,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub distance: usize,
    pub rates: Vec<f64>,
    pub episodes_per_rate: usize,
    /// Gaussian spatial profiles get fresh per-qubit rates every this many
    /// episodes; deterministic profiles ignore it.
    pub resample_every: usize,
    pub p_meas: f64,
    pub cycle_cap: u64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distance: 3,
            rates: standard_rates(),
            episodes_per_rate: 200,
            resample_every: 10,
            p_meas: 0.0,
            cycle_cap: 2_000,
            bootstrap_resamples: 10_000,
            seed: 0,
        }
    }
}

/// One sweep cell: every episode lifetime plus summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub p_phys: f64,
    pub lifetimes: Vec<u64>,
    pub ci: ConfidenceInterval,
    pub elapsed_secs: f64,
}

/// A completed sweep, ready for the result store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub created_unix: u64,
    pub label: String,
    pub config: serde_json::Value,
    pub points: Vec<RatePoint>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs()
}

fn summarize(
    p_phys: f64,
    lifetimes: Vec<u64>,
    resamples: usize,
    started: Instant,
    rng: &mut ChaCha8Rng,
) -> RatePoint {
    let as_f64: Vec<f64> = lifetimes.iter().map(|&l| l as f64).collect();
    let ci = bootstrap_mean_ci(&as_f64, resamples, 0.95, rng);
    RatePoint {
        p_phys,
        lifetimes,
        ci,
        elapsed_secs: started.elapsed().as_secs_f64(),
    }
}

/// Runs `episodes` under `policy`, resampling Gaussian spatial rates every
/// `resample_every` episodes. The per-cell seed stream is independent of
/// wall-clock effects, so identical configs reproduce identical lifetimes.
fn run_cell<P>(
    base_noise: &NoiseSpec,
    config: &SweepConfig,
    cell_seed: u64,
    mut policy: P,
) -> Vec<u64>
where
    P: FnMut(&crate::env::SyndromeVolume) -> Action,
{
    let mut spatial_rng = ChaCha8Rng::seed_from_u64(cell_seed ^ 0x5bad);
    let mut lifetimes = Vec::with_capacity(config.episodes_per_rate);
    let mut env = MemoryEnv::new(
        EnvConfig::new(base_noise.clone(), cell_seed).with_cycle_cap(config.cycle_cap),
    );
    for ep in 0..config.episodes_per_rate {
        if ep > 0 && config.resample_every > 0 && ep % config.resample_every == 0 {
            let refreshed = env.noise().resample_spatial(&mut spatial_rng);
            env = MemoryEnv::new(
                EnvConfig::new(refreshed, cell_seed.wrapping_add(ep as u64))
                    .with_cycle_cap(config.cycle_cap),
            );
        }
        let stats = run_episode(&mut env, &mut policy);
        lifetimes.push(stats.lifetime_cycles);
    }
    lifetimes
}

/// Lifetime-versus-rate sweep for a trained decoder under a given spatial
/// profile.
pub fn decoder_sweep(
    net: &QNetwork,
    config: &SweepConfig,
    spatial: SpatialProfile,
    label: &str,
) -> RunRecord {
    let mut points = Vec::with_capacity(config.rates.len());
    let mut boot_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xb007);
    for (ri, &p) in config.rates.iter().enumerate() {
        let started = Instant::now();
        let cell_seed = config
            .seed
            .wrapping_add(1_000_003u64.wrapping_mul(ri as u64 + 1));
        let mut init_rng = ChaCha8Rng::seed_from_u64(cell_seed);
        let noise = NoiseSpec::new(
            NoiseKind::Depolarizing,
            p,
            config.p_meas,
            spatial,
            None,
            config.distance,
            &mut init_rng,
        );
        let num_qubits = config.distance * config.distance;
        let lifetimes = run_cell(&noise, config, cell_seed, |obs| {
            greedy_action(net, obs, num_qubits).expect("finite Q-values")
        });
        points.push(summarize(
            p,
            lifetimes,
            config.bootstrap_resamples,
            started,
            &mut boot_rng,
        ));
    }
    RunRecord {
        run_id: format!("{label}-{:016x}", config.seed),
        created_unix: now_unix(),
        label: label.to_string(),
        config: serde_json::to_value(config).expect("config serializes"),
        points,
    }
}

/// One spatial profile against the uniform reference, same seed discipline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub profile: SpatialProfile,
    pub run: RunRecord,
    pub uniform_reference: RunRecord,
}

/// Decoder robustness: each requested profile swept with seeds identical to
/// its uniform reference, so differences are attributable to the profile.
pub fn robustness_sweep(
    net: &QNetwork,
    config: &SweepConfig,
    profiles: &[SpatialProfile],
) -> Vec<RobustnessRow> {
    profiles
        .iter()
        .map(|&profile| {
            let name = match profile {
                SpatialProfile::Uniform => "uniform".to_string(),
                SpatialProfile::Gaussian { sigma } => format!("gaussian-{sigma}"),
                SpatialProfile::Cross { beta } => format!("cross-{beta}"),
                SpatialProfile::Quadrant { beta } => format!("quadrant-{beta}"),
                SpatialProfile::Concentric { beta } => format!("concentric-{beta}"),
            };
            RobustnessRow {
                profile,
                run: decoder_sweep(net, config, profile, &name),
                uniform_reference: decoder_sweep(
                    net,
                    config,
                    SpatialProfile::Uniform,
                    &format!("{name}-ref"),
                ),
            }
        })
        .collect()
}

/// One cell of the adversarial factorial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCell {
    pub strategy: AttackStrategy,
    pub n_samples: usize,
    pub p_phys: f64,
    pub mean_lifetime: f64,
    pub lifetimes: Vec<u64>,
    pub elapsed_secs: f64,
}

/// Full factorial of strategies and candidate-population sizes.
pub fn attack_sweep(
    net: &QNetwork,
    distance: usize,
    p_phys: f64,
    strategies: &[AttackStrategy],
    sample_counts: &[usize],
    repetitions: usize,
    cycle_cap: u64,
    seed: u64,
) -> Vec<AttackCell> {
    let mut cells = Vec::new();
    for (si, &strategy) in strategies.iter().enumerate() {
        for (ni, &n_samples) in sample_counts.iter().enumerate() {
            let started = Instant::now();
            let cell_seed = seed
                .wrapping_add(7_919u64.wrapping_mul(si as u64 + 1))
                .wrapping_add(104_729u64.wrapping_mul(ni as u64 + 1));
            let mut env = MemoryEnv::new(EnvConfig::new(
                NoiseSpec::depolarizing(p_phys, 0.0, distance),
                cell_seed,
            ));
            let config = AttackConfig::new(strategy, n_samples, cell_seed)
                .with_cycle_cap(cycle_cap);
            let (mean, results) = mean_attack_lifetime(&mut env, net, &config, repetitions)
                .expect("attack parameters validated by caller");
            cells.push(AttackCell {
                strategy,
                n_samples,
                p_phys,
                mean_lifetime: mean,
                lifetimes: results.iter().map(|r| r.lifetime_cycles).collect(),
                elapsed_secs: started.elapsed().as_secs_f64(),
            });
        }
    }
    cells
}

/// Referee-only baseline: the identity policy, so the MWPM referee is the
/// sole decoder. Each rate cell consumes `steps_per_cell` environment steps,
/// resetting whenever the referee ends an episode. With `sigma > 0` the
/// referee's matching weights are miscalibrated with N(1, sigma^2) draws.
pub fn referee_sweep(
    distance: usize,
    sigma: f64,
    rates: &[f64],
    steps_per_cell: u64,
    cycle_cap: u64,
    bootstrap_resamples: usize,
    seed: u64,
) -> RunRecord {
    let lattice = crate::lattice::build_lattice(distance).expect("valid distance");
    let mut points = Vec::with_capacity(rates.len());
    let mut boot_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb007);
    for (ri, &p) in rates.iter().enumerate() {
        let started = Instant::now();
        let cell_seed = seed.wrapping_add(1_000_003u64.wrapping_mul(ri as u64 + 1));
        let mut graphs =
            crate::referee::build_matching_graphs(&lattice, None).expect("default weights");
        if sigma > 0.0 {
            let mut weight_rng = ChaCha8Rng::seed_from_u64(cell_seed ^ 0x516);
            crate::referee::miscalibrate_weights(&mut graphs, sigma, &mut weight_rng);
        }
        let mut env = MemoryEnv::with_graphs(
            EnvConfig::new(NoiseSpec::depolarizing(p, 0.0, distance), cell_seed)
                .with_cycle_cap(cycle_cap),
            graphs,
        );
        let mut lifetimes = Vec::new();
        let mut steps = 0u64;
        while steps < steps_per_cell {
            let stats = run_episode(&mut env, |_| Action::Identity);
            steps += stats.actions_taken;
            lifetimes.push(stats.lifetime_cycles);
        }
        points.push(summarize(p, lifetimes, bootstrap_resamples, started, &mut boot_rng));
    }
    RunRecord {
        run_id: format!("referee-d{distance}-s{sigma}-{seed:016x}"),
        created_unix: now_unix(),
        label: "referee".to_string(),
        config: serde_json::json!({
            "distance": distance,
            "sigma": sigma,
            "rates": rates,
            "steps_per_cell": steps_per_cell,
            "cycle_cap": cycle_cap,
            "seed": seed,
        }),
        points,
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("run id {0:?} already stored")]
    DuplicateRunId(String),
}

/// Append-only result store: one JSON file per run plus a shared CSV of
/// summary rows. Re-saving an existing run id is an error.
pub struct ResultStore {
    dir: PathBuf,
}

impl ResultStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn json_path(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.json"))
    }

    pub fn csv_path(&self) -> PathBuf {
        self.dir.join("summary.csv")
    }

    pub fn save(&self, record: &RunRecord) -> Result<(), StoreError> {
        let path = self.json_path(&record.run_id);
        if path.exists() {
            return Err(StoreError::DuplicateRunId(record.run_id.clone()));
        }
        std::fs::write(&path, serde_json::to_string_pretty(record)?)?;

        let csv_path = self.csv_path();
        let fresh = !csv_path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&csv_path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            w.write_record([
                "run_id",
                "label",
                "created_unix",
                "p_phys",
                "episodes",
                "mean_lifetime",
                "ci_lower",
                "ci_upper",
                "elapsed_secs",
            ])?;
        }
        for point in &record.points {
            w.write_record([
                record.run_id.as_str(),
                record.label.as_str(),
                &record.created_unix.to_string(),
                &point.p_phys.to_string(),
                &point.lifetimes.len().to_string(),
                &point.ci.mean.to_string(),
                &point.ci.lower.to_string(),
                &point.ci.upper.to_string(),
                &point.elapsed_secs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(&self, run_id: &str) -> Result<RunRecord, StoreError> {
        let data = std::fs::read_to_string(self.json_path(run_id))?;
        Ok(serde_json::from_str(&data)?)
    }
}
