//! Exhaustive fault-tolerance verification: enumerate every placement of `n`
//! single-qubit X/Z errors on the lattice, run the decoder on the resulting
//! syndrome, and count logical failures. Exact counting replaces sampling
//! below threshold, where failure events are too rare to Monte-Carlo.

use crate::dqn::{greedy_index, QNetwork};
use crate::env::{Action, SyndromeVolume};
use crate::lattice::{logical_flipped, measure_syndrome, LatticeSpec, Pauli, PauliFrame};
use crate::referee::{mwpm_decode, MatchingGraph};
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact number of distinct patterns of `n` errors on `num_qubits` qubits,
/// each error independently X or Z: `C(num_qubits, n) * 2^n`.
pub fn count_patterns(num_qubits: usize, n: usize) -> u128 {
    if n > num_qubits {
        return 0;
    }
    let mut binom: u128 = 1;
    for k in 0..n {
        binom = binom * (num_qubits - k) as u128 / (k + 1) as u128;
    }
    binom << n
}

/// One enumerated pattern: `n` distinct qubits, each with an X or Z error.
pub type Pattern = Vec<(usize, Pauli)>;

/// Iterates every pattern of exactly `n` errors in lexicographic qubit order,
/// with Pauli assignments cycling X before Z per position.
pub fn enumerate_patterns(num_qubits: usize, n: usize) -> impl Iterator<Item = Pattern> {
    (0..num_qubits).combinations(n).flat_map(move |qubits| {
        (0..1u32 << n).map(move |mask| {
            qubits
                .iter()
                .enumerate()
                .map(|(i, &q)| {
                    let pauli = if mask >> i & 1 == 0 { Pauli::X } else { Pauli::Z };
                    (q, pauli)
                })
                .collect()
        })
    })
}

/// Which decoder handles the enumerated syndromes.
pub enum DecoderUnderTest<'a> {
    /// The MWPM referee alone, decoding both error types.
    MwpmOnly,
    /// A trained deep-Q decoder acting greedily until identity or its action
    /// budget; the observed volume repeats the syndrome `depth` times.
    Dqn { net: &'a QNetwork, depth: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("pattern weight {n} exceeds qubit count {num_qubits}")]
    WeightTooLarge { n: usize, num_qubits: usize },
    #[error("network input {net_input} does not match depth x stabilizers = {expected}")]
    NetworkShape { net_input: usize, expected: usize },
}

/// Outcome of one exhaustive sweep at fixed error weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub distance: usize,
    pub weight: usize,
    pub total_patterns: u128,
    /// Patterns whose decoded state carries a logical flip.
    pub failures: u64,
    /// Patterns that leave a visible syndrome or a logical flip before
    /// decoding, i.e. would invoke the referee in the memory experiment.
    pub referee_required: u64,
    /// Sum over patterns of defects still lit after the decoder finished.
    pub remaining_defects: u64,
}

impl EnumerationReport {
    pub fn failure_rate_percent(&self) -> f64 {
        if self.total_patterns == 0 {
            0.0
        } else {
            100.0 * self.failures as f64 / self.total_patterns as f64
        }
    }
}

fn decode_with_mwpm(
    frame: &mut PauliFrame,
    lattice: &LatticeSpec,
    graphs: &(MatchingGraph, MatchingGraph),
) {
    let syndrome = measure_syndrome(frame, lattice);
    let defects: Vec<usize> = syndrome
        .bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    for graph in [&graphs.0, &graphs.1] {
        let graph_defects: Vec<usize> = defects
            .iter()
            .copied()
            .filter(|&s| graph.local_of_stab(s).is_some())
            .collect();
        let outcome = mwpm_decode(graph, &graph_defects);
        for &(q, p) in &outcome.corrections {
            frame.apply(q, p).expect("qubit within lattice");
        }
    }
}

fn decode_with_dqn(frame: &mut PauliFrame, lattice: &LatticeSpec, net: &QNetwork, depth: usize) {
    let num_qubits = lattice.num_qubits();
    let budget = 2 * num_qubits;
    for _ in 0..budget {
        let syndrome = measure_syndrome(frame, lattice);
        let volume = SyndromeVolume {
            slices: vec![syndrome.bits.clone(); depth],
        };
        let q = net.forward(&volume.flatten()).expect("shape validated");
        let idx = greedy_index(&q).expect("finite Q-values");
        match Action::from_index(idx, num_qubits).expect("valid index") {
            Action::Identity => break,
            Action::Correct { qubit, pauli } => {
                frame.apply(qubit, pauli).expect("qubit within lattice");
            }
        }
    }
}

/// Exhaustively verifies a decoder against every weight-`n` error pattern.
pub fn verify_decoder(
    lattice: &LatticeSpec,
    graphs: &(MatchingGraph, MatchingGraph),
    decoder: &DecoderUnderTest,
    n: usize,
) -> Result<EnumerationReport, VerifyError> {
    let num_qubits = lattice.num_qubits();
    if n > num_qubits {
        return Err(VerifyError::WeightTooLarge { n, num_qubits });
    }
    if let DecoderUnderTest::Dqn { net, depth } = decoder {
        let expected = depth * lattice.num_stabilizers();
        if net.input_dim() != expected {
            return Err(VerifyError::NetworkShape {
                net_input: net.input_dim(),
                expected,
            });
        }
    }

    let mut failures = 0u64;
    let mut referee_required = 0u64;
    let mut remaining_defects = 0u64;
    let mut total = 0u128;
    for pattern in enumerate_patterns(num_qubits, n) {
        total += 1;
        let mut frame = PauliFrame::identity(num_qubits);
        for &(q, p) in &pattern {
            frame.apply(q, p).expect("qubit within lattice");
        }
        let syndrome = measure_syndrome(&frame, lattice);
        let (x_flip, z_flip) = logical_flipped(&frame, lattice);
        if !syndrome.is_clean() || x_flip || z_flip {
            referee_required += 1;
        }
        match decoder {
            DecoderUnderTest::MwpmOnly => decode_with_mwpm(&mut frame, lattice, graphs),
            DecoderUnderTest::Dqn { net, depth } => {
                decode_with_dqn(&mut frame, lattice, net, *depth);
                // A trained agent may stop with defects left; the referee's
                // matching then finishes the job, as in the live experiment.
                decode_with_mwpm(&mut frame, lattice, graphs);
            }
        }
        let residual = measure_syndrome(&frame, lattice);
        remaining_defects += residual.defect_count() as u64;
        let (x_flip, z_flip) = logical_flipped(&frame, lattice);
        if x_flip || z_flip {
            failures += 1;
        }
    }
    debug_assert_eq!(total, count_patterns(num_qubits, n));
    Ok(EnumerationReport {
        distance: lattice.distance,
        weight: n,
        total_patterns: total,
        failures,
        referee_required,
        remaining_defects,
    })
}

/// Sum of visible syndromes the DQN left behind, before the referee cleanup.
/// Exposed separately because `verify_decoder` reports post-referee residuals
/// (always zero for a valid matching).
pub fn dqn_remaining_defects(
    lattice: &LatticeSpec,
    net: &QNetwork,
    depth: usize,
    n: usize,
) -> Result<u64, VerifyError> {
    let num_qubits = lattice.num_qubits();
    if n > num_qubits {
        return Err(VerifyError::WeightTooLarge { n, num_qubits });
    }
    let expected = depth * lattice.num_stabilizers();
    if net.input_dim() != expected {
        return Err(VerifyError::NetworkShape {
            net_input: net.input_dim(),
            expected,
        });
    }
    let mut sum = 0u64;
    for pattern in enumerate_patterns(num_qubits, n) {
        let mut frame = PauliFrame::identity(num_qubits);
        for &(q, p) in &pattern {
            frame.apply(q, p).expect("qubit within lattice");
        }
        decode_with_dqn(&mut frame, lattice, net, depth);
        sum += measure_syndrome(&frame, lattice).defect_count() as u64;
    }
    Ok(sum)
}

/// Below-threshold scaling ansatz `p_fail = alpha * (p / p_th)^e` with
/// `e = floor((d + 1) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzFit {
    pub alpha: f64,
    pub p_threshold: f64,
    pub exponent: u32,
}

impl AnsatzFit {
    pub fn predict(&self, p: f64) -> f64 {
        self.alpha * (p / self.p_threshold).powi(self.exponent as i32)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least one sample with positive rate and failure probability")]
    DegenerateSample,
    #[error("threshold hint must be positive")]
    BadThresholdHint,
}

/// Fits the ansatz to `(p, p_fail)` samples at a single distance.
///
/// With data from one distance, `alpha` and `p_th` are not separately
/// identifiable: only `alpha / p_th^e` is constrained. The convention here
/// fixes `p_th` to the caller's hint and absorbs the fitted log-log intercept
/// into `alpha`, which makes `predict` exact regardless of the hint.
pub fn fit_ansatz(
    distance: usize,
    samples: &[(f64, f64)],
    p_threshold_hint: f64,
) -> Result<AnsatzFit, FitError> {
    if p_threshold_hint <= 0.0 {
        return Err(FitError::BadThresholdHint);
    }
    let exponent = ((distance + 1) / 2) as u32;
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(p, pf)| p > 0.0 && pf > 0.0 && p.is_finite() && pf.is_finite())
        .collect();
    if usable.is_empty() {
        return Err(FitError::DegenerateSample);
    }
    // ln p_fail = c + e ln p; with the slope pinned to e, the least-squares
    // intercept is the mean residual.
    let c = usable
        .iter()
        .map(|&(p, pf)| pf.ln() - exponent as f64 * p.ln())
        .sum::<f64>()
        / usable.len() as f64;
    let alpha = (c + exponent as f64 * p_threshold_hint.ln()).exp();
    Ok(AnsatzFit {
        alpha,
        p_threshold: p_threshold_hint,
        exponent,
    })
}
