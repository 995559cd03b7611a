//! The RL memory experiment: a hidden Pauli frame evolved by noise, syndrome
//! volumes as observations, single-qubit corrections as actions, and the MWPM
//! referee deciding episode termination.
//!
//! Time accounting: one decoding round spans `depth` measurement cycles. All
//! slices of a round are measured against the same frame snapshot with
//! independent readout flips, so with `p_meas = 0` the slices are duplicates.
//! Corrections never advance time; only consuming a fresh volume does.

use crate::lattice::{
    build_lattice, measure_syndrome, LatticeSpec, Pauli, PauliFrame, Syndrome,
};
use crate::noise::{NoiseEvent, NoiseSpec};
use crate::referee::{build_matching_graphs, referee_check, MatchingGraph, RefereeVerdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stacked binary syndrome slices; the decoder's observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyndromeVolume {
    /// `depth` slices of `d^2 - 1` bits each.
    pub slices: Vec<Vec<bool>>,
}

impl SyndromeVolume {
    pub fn depth(&self) -> usize {
        self.slices.len()
    }

    pub fn slice_len(&self) -> usize {
        self.slices.first().map_or(0, |s| s.len())
    }

    /// Row-major flattening to the network's input encoding.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices
            .iter()
            .flatten()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    /// The last measured slice, as a syndrome.
    pub fn final_slice(&self) -> Syndrome {
        Syndrome {
            bits: self.slices.last().expect("volume has at least one slice").clone(),
        }
    }
}

/// Decoder action: a single-qubit X or Z correction, or identity to request
/// the next error round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Identity,
    Correct { qubit: usize, pauli: Pauli },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActionError {
    #[error("action index {0} out of range for space size {1}")]
    IndexOutOfRange(usize, usize),
    #[error("corrections are limited to X and Z, got {0:?}")]
    InvalidPauli(Pauli),
}

impl Action {
    /// Size of the action space: identity + X and Z on every data qubit.
    pub fn space_size(num_qubits: usize) -> usize {
        2 * num_qubits + 1
    }

    /// Index 0 is identity, then X corrections, then Z corrections.
    pub fn to_index(self, num_qubits: usize) -> usize {
        match self {
            Action::Identity => 0,
            Action::Correct {
                qubit,
                pauli: Pauli::X,
            } => 1 + qubit,
            Action::Correct {
                qubit,
                pauli: Pauli::Z,
            } => 1 + num_qubits + qubit,
            Action::Correct { pauli, .. } => panic!("invalid correction pauli {pauli:?}"),
        }
    }

    pub fn from_index(index: usize, num_qubits: usize) -> Result<Action, ActionError> {
        let size = Self::space_size(num_qubits);
        if index >= size {
            return Err(ActionError::IndexOutOfRange(index, size));
        }
        Ok(if index == 0 {
            Action::Identity
        } else if index <= num_qubits {
            Action::Correct {
                qubit: index - 1,
                pauli: Pauli::X,
            }
        } else {
            Action::Correct {
                qubit: index - 1 - num_qubits,
                pauli: Pauli::Z,
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationCause {
    RefereeFailure,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Syndrome-measurement cycles survived.
    pub lifetime_cycles: u64,
    pub volumes_consumed: u64,
    pub actions_taken: u64,
    pub terminated_by: Option<TerminationCause>,
}

/// Reward shaping; dense defect-count shaping plus a terminal referee signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Reward for identity when the referee lets the episode continue.
    pub identity_success: f64,
    /// Reward for identity when the referee ends the episode.
    pub identity_failure: f64,
    /// Scale on (defects before - defects after) for a correction. Kept below
    /// half the identity reward so that clearing a weight-one error (two
    /// defects) pays less than surviving a round: corrections do not advance
    /// time, and a larger scale makes easily-repairable defect states score
    /// above clean states, which misorders the Q-landscape that the
    /// attack strategies rank states by.
    pub defect_delta_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            identity_success: 1.0,
            identity_failure: -1.0,
            defect_delta_scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub noise: NoiseSpec,
    /// Measurement cycles per decoding round. Defaults to the code distance.
    pub depth: usize,
    pub cycle_cap: u64,
    #[serde(default)]
    pub reward: RewardConfig,
    pub seed: u64,
}

impl EnvConfig {
    pub fn new(noise: NoiseSpec, seed: u64) -> Self {
        let depth = noise.distance;
        Self {
            noise,
            depth,
            cycle_cap: 1_000_000,
            reward: RewardConfig::default(),
            seed,
        }
    }

    pub fn with_cycle_cap(mut self, cap: u64) -> Self {
        self.cycle_cap = cap;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("episode already finished")]
    EpisodeFinished,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: SyndromeVolume,
    pub reward: f64,
    pub done: bool,
}

pub struct MemoryEnv {
    lattice: LatticeSpec,
    graphs: (MatchingGraph, MatchingGraph),
    config: EnvConfig,
    rng: ChaCha8Rng,
    hidden: PauliFrame,
    /// Global environment step counter for temporal noise; survives resets.
    t: u64,
    round_flips: Vec<Vec<bool>>,
    obs: SyndromeVolume,
    done: bool,
    stats: EpisodeStats,
    actions_this_round: u64,
}

impl MemoryEnv {
    pub fn new(config: EnvConfig) -> Self {
        let lattice = build_lattice(config.noise.distance).expect("valid distance in NoiseSpec");
        let graphs = build_matching_graphs(&lattice, None).expect("default weights are valid");
        Self::with_graphs(config, graphs)
    }

    /// Environment with a custom (e.g. miscalibrated) referee.
    pub fn with_graphs(config: EnvConfig, graphs: (MatchingGraph, MatchingGraph)) -> Self {
        let lattice = build_lattice(config.noise.distance).expect("valid distance in NoiseSpec");
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let num_qubits = lattice.num_qubits();
        let mut env = Self {
            lattice,
            graphs,
            config,
            rng,
            hidden: PauliFrame::identity(num_qubits),
            t: 0,
            round_flips: Vec::new(),
            obs: SyndromeVolume { slices: Vec::new() },
            done: true,
            stats: EpisodeStats {
                lifetime_cycles: 0,
                volumes_consumed: 0,
                actions_taken: 0,
                terminated_by: None,
            },
            actions_this_round: 0,
        };
        env.reset();
        env
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn graphs(&self) -> &(MatchingGraph, MatchingGraph) {
        &self.graphs
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.config.noise
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn cycle_cap(&self) -> u64 {
        self.config.cycle_cap
    }

    /// Adjusts the cycle cap; takes effect from the next referee check.
    pub fn set_cycle_cap(&mut self, cap: u64) {
        self.config.cycle_cap = cap;
    }

    pub fn hidden(&self) -> &PauliFrame {
        &self.hidden
    }

    pub fn observation(&self) -> &SyndromeVolume {
        &self.obs
    }

    pub fn observation_len(&self) -> usize {
        self.config.depth * self.lattice.num_stabilizers()
    }

    pub fn stats(&self) -> EpisodeStats {
        self.stats
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current_step(&self) -> u64 {
        self.t
    }

    /// Corrections allowed per round before an identity is forced.
    pub fn action_budget(&self) -> u64 {
        2 * self.lattice.num_qubits() as u64
    }

    /// Starts a fresh episode: identity frame, first noise round applied.
    /// The temporal-noise step counter is deliberately not reset.
    pub fn reset(&mut self) -> SyndromeVolume {
        self.hidden = PauliFrame::identity(self.lattice.num_qubits());
        self.done = false;
        self.stats = EpisodeStats {
            lifetime_cycles: 0,
            volumes_consumed: 0,
            actions_taken: 0,
            terminated_by: None,
        };
        self.actions_this_round = 0;
        self.advance_round();
        self.obs.clone()
    }

    /// Starts an episode with no noise applied yet: identity frame, clean
    /// flip-free volume, zero lifetime. For adversaries that supply every
    /// round themselves via `commit_round`.
    pub fn reset_empty(&mut self) -> SyndromeVolume {
        self.hidden = PauliFrame::identity(self.lattice.num_qubits());
        self.done = false;
        self.stats = EpisodeStats {
            lifetime_cycles: 0,
            volumes_consumed: 0,
            actions_taken: 0,
            terminated_by: None,
        };
        self.actions_this_round = 0;
        self.round_flips = vec![vec![false; self.lattice.num_stabilizers()]; self.config.depth];
        self.rebuild_observation();
        self.obs.clone()
    }

    /// Applies `depth` noise cycles and measures a fresh volume.
    fn advance_round(&mut self) {
        for _ in 0..self.config.depth {
            let events = self.config.noise.sample_cycle_errors(self.t, &mut self.rng);
            for ev in events {
                self.hidden.apply(ev.qubit, ev.pauli).expect("event within lattice");
            }
            self.t += 1;
        }
        self.round_flips = (0..self.config.depth)
            .map(|_| self.config.noise.sample_measurement_flips(&mut self.rng))
            .collect();
        self.rebuild_observation();
        self.stats.volumes_consumed += 1;
        self.stats.lifetime_cycles += self.config.depth as u64;
        self.actions_this_round = 0;
    }

    /// Re-derives the observed volume from the hidden frame and the round's
    /// recorded measurement flips.
    fn rebuild_observation(&mut self) {
        let syn = measure_syndrome(&self.hidden, &self.lattice);
        self.obs = SyndromeVolume {
            slices: self
                .round_flips
                .iter()
                .map(|flips| {
                    syn.bits
                        .iter()
                        .zip(flips)
                        .map(|(&s, &f)| s ^ f)
                        .collect()
                })
                .collect(),
        };
    }

    /// Referee verdict on the current hidden state, decoding the final
    /// measured slice.
    pub fn referee_verdict(&self) -> RefereeVerdict {
        referee_check(
            &self.hidden,
            &self.obs.final_slice(),
            &self.graphs,
            &self.lattice,
        )
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        self.stats.actions_taken += 1;
        let forced_identity = matches!(action, Action::Correct { .. })
            && self.actions_this_round >= self.action_budget();
        match action {
            Action::Correct { qubit, pauli } if !forced_identity => {
                let before = measure_syndrome(&self.hidden, &self.lattice).defect_count() as f64;
                self.hidden.apply(qubit, pauli).expect("action within lattice");
                let after = measure_syndrome(&self.hidden, &self.lattice).defect_count() as f64;
                self.actions_this_round += 1;
                self.rebuild_observation();
                Ok(StepOutcome {
                    observation: self.obs.clone(),
                    reward: self.config.reward.defect_delta_scale * (before - after),
                    done: false,
                })
            }
            _ => {
                let verdict = self.referee_verdict();
                if !verdict.continue_episode {
                    self.done = true;
                    self.stats.terminated_by = Some(TerminationCause::RefereeFailure);
                    Ok(StepOutcome {
                        observation: self.obs.clone(),
                        reward: self.config.reward.identity_failure,
                        done: true,
                    })
                } else if self.stats.lifetime_cycles >= self.config.cycle_cap {
                    self.done = true;
                    self.stats.terminated_by = Some(TerminationCause::Cap);
                    Ok(StepOutcome {
                        observation: self.obs.clone(),
                        reward: self.config.reward.identity_success,
                        done: true,
                    })
                } else {
                    self.advance_round();
                    Ok(StepOutcome {
                        observation: self.obs.clone(),
                        reward: self.config.reward.identity_success,
                        done: false,
                    })
                }
            }
        }
    }

    /// Samples one round's worth of noise events (`depth` cycles starting at
    /// the current step) without touching environment state.
    pub fn sample_round_batch(&self, rng: &mut ChaCha8Rng) -> Vec<NoiseEvent> {
        let mut batch = Vec::new();
        for dt in 0..self.config.depth as u64 {
            batch.extend(self.config.noise.sample_cycle_errors(self.t + dt, rng));
        }
        batch
    }

    pub fn sample_round_flips(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
        (0..self.config.depth)
            .map(|_| self.config.noise.sample_measurement_flips(rng))
            .collect()
    }

    /// The volume that would be observed after applying `batch` to the hidden
    /// state, under the given measurement flips.
    pub fn volume_with(&self, batch: &[NoiseEvent], flips: &[Vec<bool>]) -> SyndromeVolume {
        let mut trial = self.hidden.clone();
        for ev in batch {
            trial.apply(ev.qubit, ev.pauli).expect("event within lattice");
        }
        let syn = measure_syndrome(&trial, &self.lattice);
        SyndromeVolume {
            slices: flips
                .iter()
                .map(|f| syn.bits.iter().zip(f).map(|(&s, &m)| s ^ m).collect())
                .collect(),
        }
    }

    /// Commits an externally chosen error batch as this round's noise.
    /// Advances time by `depth` cycles and installs the matching observation.
    pub fn commit_round(&mut self, batch: &[NoiseEvent], flips: Vec<Vec<bool>>) {
        for ev in batch {
            self.hidden.apply(ev.qubit, ev.pauli).expect("event within lattice");
        }
        self.t += self.config.depth as u64;
        self.round_flips = flips;
        self.rebuild_observation();
        self.stats.volumes_consumed += 1;
        self.stats.lifetime_cycles += self.config.depth as u64;
        self.actions_this_round = 0;
    }

    /// Applies a correction without consuming the action budget bookkeeping
    /// of `step`; used by attack decode phases.
    pub fn apply_correction(&mut self, qubit: usize, pauli: Pauli) {
        self.hidden.apply(qubit, pauli).expect("correction within lattice");
        self.stats.actions_taken += 1;
        self.actions_this_round += 1;
        self.rebuild_observation();
    }

    pub fn actions_this_round(&self) -> u64 {
        self.actions_this_round
    }

    /// Marks the episode finished with the given cause.
    pub fn finish(&mut self, cause: TerminationCause) {
        self.done = true;
        self.stats.terminated_by = Some(cause);
    }
}

/// Runs one episode under `policy` until termination or the cycle cap.
pub fn run_episode<P>(env: &mut MemoryEnv, mut policy: P) -> EpisodeStats
where
    P: FnMut(&SyndromeVolume) -> Action,
{
    let mut obs = env.reset();
    loop {
        let action = policy(&obs);
        let out = env.step(action).expect("episode still running");
        if out.done {
            return env.stats();
        }
        obs = out.observation;
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("p_phys must be positive")]
    ZeroErrorRate,
}

/// Mean cycles to first error of a single unprotected qubit (Monte-Carlo).
pub fn baseline_unprotected_lifetime(
    p_phys: f64,
    trials: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, BaselineError> {
    if p_phys <= 0.0 {
        return Err(BaselineError::ZeroErrorRate);
    }
    let mut total = 0u64;
    for _ in 0..trials {
        let mut cycles = 1u64;
        while rng.gen::<f64>() >= p_phys {
            cycles += 1;
        }
        total += cycles;
    }
    Ok(total as f64 / trials as f64)
}

/// One JSON-lines trace entry for debugging episode dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub action: usize,
    pub reward: f64,
    pub defect_count: usize,
    pub done: bool,
}

/// Runs an episode while recording a per-step trace.
pub fn run_traced_episode<P>(env: &mut MemoryEnv, mut policy: P) -> (EpisodeStats, Vec<TraceEntry>)
where
    P: FnMut(&SyndromeVolume) -> Action,
{
    let num_qubits = env.lattice().num_qubits();
    let mut trace = Vec::new();
    let mut obs = env.reset();
    loop {
        let action = policy(&obs);
        let out = env.step(action).expect("episode still running");
        trace.push(TraceEntry {
            action: action.to_index(num_qubits),
            reward: out.reward,
            defect_count: out.observation.final_slice().defect_count(),
            done: out.done,
        });
        if out.done {
            return (env.stats(), trace);
        }
        obs = out.observation;
    }
}
