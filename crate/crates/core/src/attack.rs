//! Q-value-informed adversarial noise: each decoding round, sample a
//! population of candidate error batches, score the decoder's Q-values on the
//! syndrome volume each would produce, and commit the batch that minimizes or
//! maximizes the score. Every committed batch is a genuine draw from the noise
//! model, so the adversary only post-selects — it never invents errors.

use crate::dqn::{greedy_index, QNetwork};
use crate::env::{Action, MemoryEnv, SyndromeVolume, TerminationCause};
use crate::lattice::{Pauli, PauliFrame};
use crate::noise::NoiseEvent;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a candidate volume is scored and which extreme is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStrategy {
    /// Minimize the best available Q-value (starve the decoder of confidence).
    Min,
    /// Maximize the best available Q-value (feed it reassuring volumes).
    Max,
    /// Minimize the population variance of the Q-values.
    MinVar,
    /// Maximize the population variance of the Q-values.
    MaxVar,
}

impl AttackStrategy {
    pub fn all() -> [AttackStrategy; 4] {
        [Self::Min, Self::Max, Self::MinVar, Self::MaxVar]
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
            Self::MinVar => "min_var",
            Self::MaxVar => "max_var",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub strategy: AttackStrategy,
    /// Candidate batches sampled per round (N in the selection rule).
    pub n_samples: usize,
    /// Optional cap on distinct data qubits an accepted batch may touch;
    /// enforced by resampling, preserving the conditional noise distribution.
    pub max_qubits_per_round: Option<usize>,
    /// One greedy correction per round instead of decoding to quiescence.
    pub single_action_round: bool,
    pub cycle_cap: u64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(strategy: AttackStrategy, n_samples: usize, seed: u64) -> Self {
        Self {
            strategy,
            n_samples,
            max_qubits_per_round: None,
            single_action_round: false,
            cycle_cap: 1_000_000,
            seed,
        }
    }

    pub fn with_cycle_cap(mut self, cap: u64) -> Self {
        self.cycle_cap = cap;
        self
    }

    pub fn with_qubit_cap(mut self, cap: usize) -> Self {
        self.max_qubits_per_round = Some(cap);
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error(
        "constrained resampling exceeded {attempts} attempts; \
         the qubit cap {cap} is unreachable at this error rate"
    )]
    ResampleBudgetExhausted { attempts: u64, cap: usize },
    #[error("non-finite Q-values during attack")]
    NonFiniteQ,
}

/// Per-round record of what the adversary chose and how the decoder reacted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub chosen_index: usize,
    pub chosen_score: f64,
    pub batch: Vec<NoiseEvent>,
    pub corrections: u64,
    /// Batches rejected by the qubit-cap filter before acceptance.
    pub rejected_batches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub lifetime_cycles: u64,
    pub volumes_consumed: u64,
    pub terminated_by: TerminationCause,
    pub rounds: Vec<RoundRecord>,
}

impl AttackResult {
    /// Total resample rejections across all rounds.
    pub fn total_rejections(&self) -> u64 {
        self.rounds.iter().map(|r| r.rejected_batches).sum()
    }
}

/// Scores one candidate volume under the configured strategy. MIN/MAX use the
/// best available action value; the variance pair uses the population
/// variance of the full Q-vector.
pub fn score_volume(
    net: &QNetwork,
    volume: &SyndromeVolume,
    strategy: AttackStrategy,
) -> Result<f64, AttackError> {
    let q = net
        .forward(&volume.flatten())
        .map_err(|_| AttackError::NonFiniteQ)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(AttackError::NonFiniteQ);
    }
    Ok(match strategy {
        AttackStrategy::Min | AttackStrategy::Max => {
            q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
        AttackStrategy::MinVar | AttackStrategy::MaxVar => {
            let mean = q.iter().sum::<f64>() / q.len() as f64;
            q.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / q.len() as f64
        }
    })
}

/// Index of the selected candidate: argmin for MIN/MIN_VAR, argmax for
/// MAX/MAX_VAR, ties broken toward the lowest index.
pub fn select_index(scores: &[f64], strategy: AttackStrategy) -> usize {
    let minimize = matches!(strategy, AttackStrategy::Min | AttackStrategy::MinVar);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let better = if minimize { s < scores[best] } else { s > scores[best] };
        if better {
            best = i;
        }
    }
    best
}

/// Distinct data qubits touched by a batch of noise events.
pub fn qubits_touched(batch: &[NoiseEvent]) -> usize {
    let mut seen: Vec<usize> = batch.iter().map(|e| e.qubit).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

const RESAMPLE_ATTEMPT_CAP: u64 = 10_000;

/// Draws one candidate batch, resampling until it satisfies the qubit cap.
/// Returns the batch and the number of rejected draws.
fn sample_admissible_batch(
    env: &MemoryEnv,
    cap: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<NoiseEvent>, u64), AttackError> {
    let mut rejected = 0u64;
    loop {
        let batch = env.sample_round_batch(rng);
        match cap {
            Some(c) if qubits_touched(&batch) > c => {
                rejected += 1;
                if rejected >= RESAMPLE_ATTEMPT_CAP {
                    return Err(AttackError::ResampleBudgetExhausted {
                        attempts: RESAMPLE_ATTEMPT_CAP,
                        cap: c,
                    });
                }
            }
            _ => return Ok((batch, rejected)),
        }
    }
}

/// Runs one adversarial episode against a frozen decoder.
///
/// Each round: sample `n_samples` admissible batches and one set of readout
/// flips, score the volume each batch would produce, commit the selected
/// batch, then let the decoder act greedily until it picks identity (or a
/// single action in `single_action_round` mode, or its budget runs out). The
/// round ends with a referee check on the true hidden state.
pub fn run_attack(
    env: &mut MemoryEnv,
    net: &QNetwork,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    if config.n_samples == 0 {
        return Err(AttackError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let num_qubits = env.lattice().num_qubits();
    env.set_cycle_cap(config.cycle_cap);
    // Every consumed volume must be adversarially selected, so start from an
    // empty episode rather than the organic first round of `reset`.
    env.reset_empty();
    let mut rounds = Vec::new();

    loop {
        // Sample candidates and score them.
        let flips = env.sample_round_flips(&mut rng);
        let mut scores = Vec::with_capacity(config.n_samples);
        let mut batches = Vec::with_capacity(config.n_samples);
        let mut rejected_total = 0u64;
        for _ in 0..config.n_samples {
            let (batch, rejected) =
                sample_admissible_batch(env, config.max_qubits_per_round, &mut rng)?;
            rejected_total += rejected;
            let volume = env.volume_with(&batch, &flips);
            scores.push(score_volume(net, &volume, config.strategy)?);
            batches.push(batch);
        }
        let chosen = select_index(&scores, config.strategy);
        let chosen_score = scores[chosen];
        let batch = batches.swap_remove(chosen);
        env.commit_round(&batch, flips);

        // Decode phase: greedy corrections until identity or budget.
        let mut corrections = 0u64;
        loop {
            let q = net
                .forward(&env.observation().flatten())
                .map_err(|_| AttackError::NonFiniteQ)?;
            let idx = greedy_index(&q).map_err(|_| AttackError::NonFiniteQ)?;
            match Action::from_index(idx, num_qubits).expect("valid index") {
                Action::Identity => break,
                Action::Correct { qubit, pauli } => {
                    env.apply_correction(qubit, pauli);
                    corrections += 1;
                }
            }
            if config.single_action_round || env.actions_this_round() >= env.action_budget() {
                break;
            }
        }

        rounds.push(RoundRecord {
            chosen_index: chosen,
            chosen_score,
            batch,
            corrections,
            rejected_batches: rejected_total,
        });

        // Referee check on the true state.
        let verdict = env.referee_verdict();
        if !verdict.continue_episode {
            env.finish(TerminationCause::RefereeFailure);
            break;
        }
        if env.stats().lifetime_cycles >= config.cycle_cap {
            env.finish(TerminationCause::Cap);
            break;
        }
    }

    let stats = env.stats();
    Ok(AttackResult {
        lifetime_cycles: stats.lifetime_cycles,
        volumes_consumed: stats.volumes_consumed,
        terminated_by: stats.terminated_by.expect("episode finished"),
        rounds,
    })
}

/// Mean adversarial lifetime over `repetitions` independent episodes; the
/// per-episode seed is derived from `config.seed` and the repetition index.
pub fn mean_attack_lifetime(
    env: &mut MemoryEnv,
    net: &QNetwork,
    config: &AttackConfig,
    repetitions: usize,
) -> Result<(f64, Vec<AttackResult>), AttackError> {
    let mut results = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        results.push(run_attack(env, net, &cfg)?);
    }
    let mean = results.iter().map(|r| r.lifetime_cycles as f64).sum::<f64>()
        / repetitions.max(1) as f64;
    Ok((mean, results))
}

/// Per-qubit frequency of the net Pauli each adversarial round applies,
/// accumulated over the first `rounds_per_episode` rounds of every episode.
/// Entry `[qubit][k]` counts X, Y, Z for k = 0, 1, 2, divided by the number
/// of contributing rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub num_qubits: usize,
    pub rounds_counted: u64,
    pub frequencies: Vec<[f64; 3]>,
}

pub fn error_histogram(results: &[AttackResult], num_qubits: usize, rounds_per_episode: usize) -> ErrorHistogram {
    let mut counts = vec![[0u64; 3]; num_qubits];
    let mut rounds_counted = 0u64;
    for result in results {
        for round in result.rounds.iter().take(rounds_per_episode) {
            rounds_counted += 1;
            let mut frame = PauliFrame::identity(num_qubits);
            for ev in &round.batch {
                frame.apply(ev.qubit, ev.pauli).expect("event within lattice");
            }
            for q in 0..num_qubits {
                match frame.get(q) {
                    Pauli::I => {}
                    Pauli::X => counts[q][0] += 1,
                    Pauli::Y => counts[q][1] += 1,
                    Pauli::Z => counts[q][2] += 1,
                }
            }
        }
    }
    let denom = rounds_counted.max(1) as f64;
    ErrorHistogram {
        num_qubits,
        rounds_counted,
        frequencies: counts
            .iter()
            .map(|c| [c[0] as f64 / denom, c[1] as f64 / denom, c[2] as f64 / denom])
            .collect(),
    }
}
