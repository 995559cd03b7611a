//! Pauli and measurement noise processes: homogeneous, spatially
//! inhomogeneous (Gaussian-perturbed and patterned), and sinusoidal
//! time-dependent noise.

use crate::lattice::Pauli;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// X, Y, Z each with probability p/3.
    Depolarizing,
    /// Only X errors.
    BitFlip,
    /// Only Z errors.
    PhaseFlip,
}

/// Spatial distribution of per-qubit error probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "pattern")]
pub enum SpatialProfile {
    Uniform,
    /// Per-qubit rates drawn i.i.d. from N(p_phys, sigma^2), clamped at 0.
    Gaussian { sigma: f64 },
    /// p_phys + beta on the middle row and middle column.
    Cross { beta: f64 },
    /// p_phys + beta on the top-left ceil(d/2) x ceil(d/2) block.
    Quadrant { beta: f64 },
    /// Rates rise from p_phys/2 at the edge to p_phys + beta at the center,
    /// by Chebyshev ring.
    Concentric { beta: f64 },
}

/// Sinusoidal modulation of the physical error rate,
/// p(t) = p_qubit + beta * sin(2*pi*omega*t + r_i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSpec {
    pub beta: f64,
    pub omega: f64,
    /// Per-qubit phase offsets in [0, 2*pi).
    pub offsets: Vec<f64>,
}

/// Declarative temporal-noise configuration; offsets are materialized when the
/// spec is instantiated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalConfig {
    pub beta: f64,
    /// Cycles per environment step. Defaults to 1e-4.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Draw per-qubit phase offsets uniformly from [0, 2*pi); all zero otherwise.
    #[serde(default)]
    pub randomize_offsets: bool,
}

pub fn default_omega() -> f64 {
    1e-4
}

/// Closed description of one noise model with materialized per-qubit rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub p_phys: f64,
    pub p_meas: f64,
    pub spatial: SpatialProfile,
    pub temporal: Option<TemporalSpec>,
    pub distance: usize,
    /// Resolved base probability per data qubit, clamped to [0, 1].
    pub per_qubit_p: Vec<f64>,
}

/// One sampled physical error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEvent {
    pub qubit: usize,
    pub pauli: Pauli,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

fn resolve_spatial(
    spatial: SpatialProfile,
    p_phys: f64,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = d * d;
    match spatial {
        SpatialProfile::Uniform => vec![clamp_prob(p_phys); n],
        SpatialProfile::Gaussian { sigma } => {
            if sigma == 0.0 {
                return vec![clamp_prob(p_phys); n];
            }
            let normal = Normal::new(p_phys, sigma).expect("sigma must be finite and non-negative");
            (0..n).map(|_| clamp_prob(normal.sample(rng))).collect()
        }
        SpatialProfile::Cross { beta } => {
            let mid = d / 2;
            (0..n)
                .map(|q| {
                    let (r, c) = (q / d, q % d);
                    if r == mid || c == mid {
                        clamp_prob(p_phys + beta)
                    } else {
                        clamp_prob(p_phys)
                    }
                })
                .collect()
        }
        SpatialProfile::Quadrant { beta } => {
            let block = d.div_ceil(2);
            (0..n)
                .map(|q| {
                    let (r, c) = (q / d, q % d);
                    if r < block && c < block {
                        clamp_prob(p_phys + beta)
                    } else {
                        clamp_prob(p_phys)
                    }
                })
                .collect()
        }
        SpatialProfile::Concentric { beta } => {
            let center = (d / 2) as i64;
            let max_ring = center.max(1) as f64;
            (0..n)
                .map(|q| {
                    let (r, c) = ((q / d) as i64, (q % d) as i64);
                    let ring = (r - center).abs().max((c - center).abs()) as f64;
                    clamp_prob(p_phys / 2.0 + (p_phys / 2.0 + beta) * (1.0 - ring / max_ring))
                })
                .collect()
        }
    }
}

impl NoiseSpec {
    /// Materializes a noise spec for a distance-`d` code. `rng` is consumed
    /// for Gaussian spatial draws and randomized temporal offsets.
    pub fn new(
        kind: NoiseKind,
        p_phys: f64,
        p_meas: f64,
        spatial: SpatialProfile,
        temporal: Option<TemporalConfig>,
        d: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let per_qubit_p = resolve_spatial(spatial, p_phys, d, rng);
        let temporal = temporal.map(|cfg| TemporalSpec {
            beta: cfg.beta,
            omega: cfg.omega,
            offsets: if cfg.randomize_offsets {
                (0..d * d).map(|_| rng.gen::<f64>() * TAU).collect()
            } else {
                vec![0.0; d * d]
            },
        });
        Self {
            kind,
            p_phys,
            p_meas,
            spatial,
            temporal,
            distance: d,
            per_qubit_p,
        }
    }

    /// Uniform depolarizing noise, the paper-default model.
    pub fn depolarizing(p_phys: f64, p_meas: f64, d: usize) -> Self {
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        Self::new(
            NoiseKind::Depolarizing,
            p_phys,
            p_meas,
            SpatialProfile::Uniform,
            None,
            d,
            &mut rng,
        )
    }

    pub fn num_qubits(&self) -> usize {
        self.distance * self.distance
    }

    /// Error probability for `qubit` at environment step `t`.
    pub fn error_prob(&self, qubit: usize, t: u64) -> f64 {
        let base = self.per_qubit_p[qubit];
        match &self.temporal {
            Some(tm) => {
                clamp_prob(base + tm.beta * (TAU * tm.omega * t as f64 + tm.offsets[qubit]).sin())
            }
            None => base,
        }
    }

    /// Samples one cycle of independent per-qubit errors at step `t`.
    pub fn sample_cycle_errors(&self, t: u64, rng: &mut ChaCha8Rng) -> Vec<NoiseEvent> {
        let mut events = Vec::new();
        for qubit in 0..self.num_qubits() {
            let p = self.error_prob(qubit, t);
            if p > 0.0 && rng.gen::<f64>() < p {
                let pauli = match self.kind {
                    NoiseKind::BitFlip => Pauli::X,
                    NoiseKind::PhaseFlip => Pauli::Z,
                    NoiseKind::Depolarizing => match rng.gen_range(0..3) {
                        0 => Pauli::X,
                        1 => Pauli::Y,
                        _ => Pauli::Z,
                    },
                };
                events.push(NoiseEvent { qubit, pauli });
            }
        }
        events
    }

    /// Independent readout flips, one per stabilizer.
    pub fn sample_measurement_flips(&self, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let n_stab = self.num_qubits() - 1;
        (0..n_stab)
            .map(|_| self.p_meas > 0.0 && rng.gen::<f64>() < self.p_meas)
            .collect()
    }

    /// Fresh i.i.d. draw of per-qubit rates for Gaussian spatial noise;
    /// a no-op clone for every deterministic pattern.
    pub fn resample_spatial(&self, rng: &mut ChaCha8Rng) -> NoiseSpec {
        let mut out = self.clone();
        if matches!(self.spatial, SpatialProfile::Gaussian { .. }) {
            out.per_qubit_p = resolve_spatial(self.spatial, self.p_phys, self.distance, rng);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn uniform_base_case() {
        let spec = NoiseSpec::depolarizing(0.001, 0.0, 3);
        for t in [0, 1, 99, 12345] {
            for q in 0..9 {
                assert_eq!(spec.error_prob(q, t), 0.001);
            }
        }
    }

    #[test]
    fn temporal_peak_value() {
        // omega = 1/4 per step puts sin at exactly 1 for t=1.
        let mut r = rng(0);
        let spec = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Uniform,
            Some(TemporalConfig {
                beta: 0.0005,
                omega: 0.25,
                randomize_offsets: false,
            }),
            3,
            &mut r,
        );
        assert!((spec.error_prob(0, 1) - 0.0015).abs() < 1e-15);
    }

    #[test]
    fn concentric_interval_endpoints() {
        let mut r = rng(0);
        let (p, beta) = (0.004, 0.002);
        let spec = NoiseSpec::new(
            NoiseKind::Depolarizing,
            p,
            0.0,
            SpatialProfile::Concentric { beta },
            None,
            5,
            &mut r,
        );
        // Corner sits on the outermost ring, the exact center on ring 0.
        assert!((spec.per_qubit_p[0] - p / 2.0).abs() < 1e-15);
        let center = 2 * 5 + 2;
        assert!((spec.per_qubit_p[center] - (p + beta)).abs() < 1e-15);
        // Monotone non-decreasing from edge to center along the middle row.
        for c in 0..2 {
            assert!(spec.per_qubit_p[2 * 5 + c] <= spec.per_qubit_p[2 * 5 + c + 1] + 1e-15);
        }
    }

    #[test]
    fn cross_and_quadrant_masks_at_d5() {
        let mut r = rng(0);
        let cross = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Cross { beta: 0.004 },
            None,
            5,
            &mut r,
        );
        for q in 0..25 {
            let (row, col) = (q / 5, q % 5);
            let expect = if row == 2 || col == 2 { 0.005 } else { 0.001 };
            assert!((cross.per_qubit_p[q] - expect).abs() < 1e-15);
        }
        let quad = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Quadrant { beta: 0.004 },
            None,
            5,
            &mut r,
        );
        for q in 0..25 {
            let (row, col) = (q / 5, q % 5);
            let expect = if row < 3 && col < 3 { 0.005 } else { 0.001 };
            assert!((quad.per_qubit_p[q] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn no_noise_yields_no_events() {
        let spec = NoiseSpec::depolarizing(0.0, 0.0, 3);
        let mut r = rng(7);
        for t in 0..100 {
            assert!(spec.sample_cycle_errors(t, &mut r).is_empty());
        }
    }

    #[test]
    fn bit_flip_only_produces_x() {
        let mut r = rng(3);
        let spec = NoiseSpec::new(
            NoiseKind::BitFlip,
            0.3,
            0.0,
            SpatialProfile::Uniform,
            None,
            3,
            &mut r,
        );
        for t in 0..200 {
            for ev in spec.sample_cycle_errors(t, &mut r) {
                assert_eq!(ev.pauli, Pauli::X);
            }
        }
    }

    #[test]
    fn depolarizing_pauli_frequencies() {
        // Monte-Carlo oracle: X, Y, Z each p/3 = 0.1 over 10^6 cycle samples
        // of a single-qubit lattice slot.
        let mut r = rng(11);
        let spec = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.3,
            0.0,
            SpatialProfile::Uniform,
            None,
            3,
            &mut r,
        );
        let trials = 1_000_000u64;
        let mut counts = [0u64; 3];
        for t in 0..trials {
            for ev in spec.sample_cycle_errors(t, &mut r) {
                if ev.qubit == 0 {
                    let i = match ev.pauli {
                        Pauli::X => 0,
                        Pauli::Y => 1,
                        Pauli::Z => 2,
                        Pauli::I => unreachable!(),
                    };
                    counts[i] += 1;
                }
            }
        }
        let sigma = (0.1 * 0.9 / trials as f64).sqrt();
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!(
                (freq - 0.1).abs() < 3.0 * sigma,
                "frequency {freq} outside 3 sigma of 0.1"
            );
        }
    }

    #[test]
    fn measurement_flip_extremes_and_rate() {
        let mut r = rng(5);
        let off = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Uniform,
            None,
            3,
            &mut r,
        );
        assert!(off.sample_measurement_flips(&mut r).iter().all(|&b| !b));
        let on = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            1.0,
            SpatialProfile::Uniform,
            None,
            3,
            &mut r,
        );
        assert!(on.sample_measurement_flips(&mut r).iter().all(|&b| b));

        let mid = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.05,
            SpatialProfile::Uniform,
            None,
            3,
            &mut r,
        );
        let trials = 100_000usize;
        let mut flips = 0u64;
        for _ in 0..trials {
            flips += mid
                .sample_measurement_flips(&mut r)
                .iter()
                .filter(|&&b| b)
                .count() as u64;
        }
        let n = (trials * 8) as f64;
        let rate = flips as f64 / n;
        let sigma = (0.05 * 0.95 / n).sqrt();
        assert!((rate - 0.05).abs() < 3.0 * sigma);
    }

    #[test]
    fn gaussian_resampling() {
        let mut r = rng(21);
        let degenerate = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Gaussian { sigma: 0.0 },
            None,
            3,
            &mut r,
        );
        assert!(degenerate.per_qubit_p.iter().all(|&p| p == 0.001));

        let spec = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Gaussian { sigma: 0.0005 },
            None,
            3,
            &mut r,
        );
        let draws = 10_000usize;
        let mut sum = 0.0;
        let mut cur = spec.clone();
        for _ in 0..draws {
            cur = cur.resample_spatial(&mut r);
            sum += cur.per_qubit_p[0];
        }
        let mean = sum / draws as f64;
        assert!((mean - 0.001).abs() < 3.0 * 0.0005 / (draws as f64).sqrt());

        // Uniform specs resample to themselves.
        let uniform = NoiseSpec::depolarizing(0.001, 0.0, 3);
        assert_eq!(uniform.resample_spatial(&mut r), uniform);
    }

    #[test]
    fn temporal_mean_over_period_matches_base() {
        // Analytic property: the sine averages out over one exact period.
        let mut r = rng(0);
        let spec = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Uniform,
            Some(TemporalConfig {
                beta: 0.0005,
                omega: 1.0 / 1000.0,
                randomize_offsets: true,
            }),
            3,
            &mut r,
        );
        for q in 0..9 {
            let mean: f64 = (0..1000).map(|t| spec.error_prob(q, t)).sum::<f64>() / 1000.0;
            assert!((mean - 0.001).abs() < 1e-10, "qubit {q}: mean {mean}");
        }
    }

    #[test]
    fn randomized_offsets_desynchronize_qubits() {
        let mut r = rng(9);
        let spec = NoiseSpec::new(
            NoiseKind::Depolarizing,
            0.001,
            0.0,
            SpatialProfile::Uniform,
            Some(TemporalConfig {
                beta: 0.0005,
                omega: 1e-3,
                randomize_offsets: true,
            }),
            3,
            &mut r,
        );
        assert!(spec.error_prob(0, 57) != spec.error_prob(1, 57));
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let spec = NoiseSpec::depolarizing(0.05, 0.02, 3);
        let mut a = rng(42);
        let mut b = rng(42);
        for t in 0..50 {
            assert_eq!(
                spec.sample_cycle_errors(t, &mut a),
                spec.sample_cycle_errors(t, &mut b)
            );
            assert_eq!(
                spec.sample_measurement_flips(&mut a),
                spec.sample_measurement_flips(&mut b)
            );
        }
    }

    #[test]
    fn json_round_trip() {
        let mut r = rng(1);
        let spec = NoiseSpec::new(
            NoiseKind::PhaseFlip,
            0.002,
            0.01,
            SpatialProfile::Gaussian { sigma: 0.0003 },
            Some(TemporalConfig {
                beta: 0.0002,
                omega: 1e-4,
                randomize_offsets: true,
            }),
            5,
            &mut r,
        );
        let json = serde_json::to_string(&spec).unwrap();
        let back: NoiseSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
