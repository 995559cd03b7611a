//! Rotated surface-code geometry and phase-free Pauli algebra.
//!
//! The code lives on a `d x d` grid of data qubits (row-major indexing) with
//! `d^2 - 1` weight-2/weight-4 stabilizers split evenly between X and Z type.
//! Logical representatives are fixed: logical X is the top row, logical Z the
//! left column. Phases are never tracked; syndromes and logical-flip checks
//! depend only on commutation structure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Single-qubit Pauli operator with phase ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// Phase-free group product.
    pub fn compose(self, other: Pauli) -> Pauli {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => p,
            (a, b) if a == b => I,
            (X, Y) | (Y, X) => Z,
            (X, Z) | (Z, X) => Y,
            (Y, Z) | (Z, Y) => X,
            _ => unreachable!(),
        }
    }

    /// True iff the two operators anticommute (distinct non-identity Paulis).
    pub fn anticommutes(self, other: Pauli) -> bool {
        self != Pauli::I && other != Pauli::I && self != other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabKind {
    X,
    Z,
}

impl StabKind {
    /// The Pauli this stabilizer type is made of.
    pub fn pauli(self) -> Pauli {
        match self {
            StabKind::X => Pauli::X,
            StabKind::Z => Pauli::Z,
        }
    }
}

/// One plaquette: its type and the data qubits it acts on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stabilizer {
    pub kind: StabKind,
    pub support: Vec<usize>,
}

/// Full geometry of a distance-`d` rotated surface code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub distance: usize,
    pub stabilizers: Vec<Stabilizer>,
    /// Data-qubit indices of the fixed logical-X representative (top row).
    pub logical_x_support: Vec<usize>,
    /// Data-qubit indices of the fixed logical-Z representative (left column).
    pub logical_z_support: Vec<usize>,
}

impl LatticeSpec {
    pub fn num_qubits(&self) -> usize {
        self.distance * self.distance
    }

    pub fn num_stabilizers(&self) -> usize {
        self.num_qubits() - 1
    }

    pub fn qubit_index(&self, row: usize, col: usize) -> usize {
        row * self.distance + col
    }

    /// Indices (into `stabilizers`) of all stabilizers of the given type,
    /// in lattice order.
    pub fn stabilizer_indices(&self, kind: StabKind) -> Vec<usize> {
        self.stabilizers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("distance must be odd, got {0}")]
    EvenDistance(usize),
    #[error("distance must be at least 3, got {0}")]
    DistanceTooSmall(usize),
}

/// Builds the distance-`d` rotated surface code.
///
/// Plaquettes are cells of the (extended) dual grid; a cell at `(r, c)` covers
/// the data qubits `(r, c), (r, c+1), (r+1, c), (r+1, c+1)` that fall inside
/// the grid. Interior cells alternate X/Z in a checkerboard; weight-2 boundary
/// cells keep only the color whose type belongs to that boundary (Z on the
/// top/bottom rows, X on the left/right columns).
pub fn build_lattice(d: usize) -> Result<LatticeSpec, LatticeError> {
    if d < 3 {
        return Err(LatticeError::DistanceTooSmall(d));
    }
    if d % 2 == 0 {
        return Err(LatticeError::EvenDistance(d));
    }

    let qubit = |r: usize, c: usize| r * d + c;
    let mut stabilizers = Vec::with_capacity(d * d - 1);

    // Cell (r, c) with r, c in -1..d-1; type X when (r + c) is even.
    for r in -1i64..(d as i64) {
        for c in -1i64..(d as i64) {
            let mut support = Vec::with_capacity(4);
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let (qr, qc) = (r + dr, c + dc);
                if (0..d as i64).contains(&qr) && (0..d as i64).contains(&qc) {
                    support.push(qubit(qr as usize, qc as usize));
                }
            }
            let kind = if (r + c).rem_euclid(2) == 0 {
                StabKind::X
            } else {
                StabKind::Z
            };
            let interior = (0..d as i64 - 1).contains(&r) && (0..d as i64 - 1).contains(&c);
            let keep = if interior {
                true
            } else if support.len() == 2 {
                let top_or_bottom = r == -1 || r == d as i64 - 1;
                // Z checks live on the top/bottom boundary, X on left/right.
                (top_or_bottom && kind == StabKind::Z) || (!top_or_bottom && kind == StabKind::X)
            } else {
                false // corner cells touch a single qubit
            };
            if keep {
                support.sort_unstable();
                stabilizers.push(Stabilizer { kind, support });
            }
        }
    }
    debug_assert_eq!(stabilizers.len(), d * d - 1);

    let logical_x_support = (0..d).map(|c| qubit(0, c)).collect();
    let logical_z_support = (0..d).map(|r| qubit(r, 0)).collect();

    Ok(LatticeSpec {
        distance: d,
        stabilizers,
        logical_x_support,
        logical_z_support,
    })
}

/// The hidden physical error state: one Pauli per data qubit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    paulis: Vec<Pauli>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("qubit index {index} out of range for {num_qubits} qubits")]
pub struct QubitOutOfRange {
    pub index: usize,
    pub num_qubits: usize,
}

impl PauliFrame {
    pub fn identity(num_qubits: usize) -> Self {
        Self {
            paulis: vec![Pauli::I; num_qubits],
        }
    }

    pub fn from_paulis(paulis: Vec<Pauli>) -> Self {
        Self { paulis }
    }

    pub fn len(&self) -> usize {
        self.paulis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paulis.is_empty()
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        self.paulis[qubit]
    }

    pub fn paulis(&self) -> &[Pauli] {
        &self.paulis
    }

    /// Number of non-identity entries.
    pub fn weight(&self) -> usize {
        self.paulis.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Multiplies `p` onto the given qubit in place.
    pub fn apply(&mut self, qubit: usize, p: Pauli) -> Result<(), QubitOutOfRange> {
        if qubit >= self.paulis.len() {
            return Err(QubitOutOfRange {
                index: qubit,
                num_qubits: self.paulis.len(),
            });
        }
        self.paulis[qubit] = self.paulis[qubit].compose(p);
        Ok(())
    }

    /// Qubit-wise product of two frames.
    pub fn compose(&self, other: &PauliFrame) -> PauliFrame {
        assert_eq!(self.len(), other.len());
        PauliFrame {
            paulis: self
                .paulis
                .iter()
                .zip(&other.paulis)
                .map(|(&a, &b)| a.compose(b))
                .collect(),
        }
    }

    /// Parity of anticommutations with an operator made of `pauli` on `support`.
    pub fn anticommutes_with(&self, pauli: Pauli, support: &[usize]) -> bool {
        support
            .iter()
            .filter(|&&q| self.paulis[q].anticommutes(pauli))
            .count()
            % 2
            == 1
    }
}

/// Returns a copy of `frame` with `p` multiplied onto `qubit`.
pub fn apply_pauli(frame: &PauliFrame, qubit: usize, p: Pauli) -> Result<PauliFrame, QubitOutOfRange> {
    let mut out = frame.clone();
    out.apply(qubit, p)?;
    Ok(out)
}

/// Binary stabilizer-measurement outcome, one bit per stabilizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syndrome {
    pub bits: Vec<bool>,
}

impl Syndrome {
    pub fn defect_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_clean(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    pub fn xor(&self, other: &Syndrome) -> Syndrome {
        assert_eq!(self.bits.len(), other.bits.len());
        Syndrome {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a ^ b)
                .collect(),
        }
    }
}

/// Noiseless syndrome of `frame`: bit `s` is set iff the frame anticommutes
/// with stabilizer `s`.
pub fn measure_syndrome(frame: &PauliFrame, lattice: &LatticeSpec) -> Syndrome {
    Syndrome {
        bits: lattice
            .stabilizers
            .iter()
            .map(|s| frame.anticommutes_with(s.kind.pauli(), &s.support))
            .collect(),
    }
}

/// Whether the logical X / Z observables are flipped by `frame`.
///
/// The check is the direct anticommutation count against the fixed logical
/// representatives. For frames with an empty syndrome this is canonical
/// (stabilizer multiplication cannot change it); on other frames the result is
/// representative-dependent and intended only as a diagnostic.
pub fn logical_flipped(frame: &PauliFrame, lattice: &LatticeSpec) -> (bool, bool) {
    let x_flipped = frame.anticommutes_with(Pauli::X, &lattice.logical_x_support);
    let z_flipped = frame.anticommutes_with(Pauli::Z, &lattice.logical_z_support);
    (x_flipped, z_flipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn overlap(a: &[usize], b: &[usize]) -> usize {
        a.iter().filter(|q| b.contains(q)).count()
    }

    #[test]
    fn rejects_bad_distances() {
        assert_eq!(build_lattice(2), Err(LatticeError::DistanceTooSmall(2)));
        assert_eq!(build_lattice(1), Err(LatticeError::DistanceTooSmall(1)));
        assert_eq!(build_lattice(4), Err(LatticeError::EvenDistance(4)));
    }

    #[test]
    fn counts_match_distance() {
        for d in [3, 5, 7] {
            let lat = build_lattice(d).unwrap();
            assert_eq!(lat.num_qubits(), d * d);
            assert_eq!(lat.stabilizers.len(), d * d - 1);
            let x = lat.stabilizer_indices(StabKind::X).len();
            let z = lat.stabilizer_indices(StabKind::Z).len();
            assert_eq!(x, (d * d - 1) / 2);
            assert_eq!(z, (d * d - 1) / 2);
            for s in &lat.stabilizers {
                assert!(s.support.len() == 2 || s.support.len() == 4);
            }
        }
    }

    #[test]
    fn stabilizers_pairwise_commute() {
        for d in [3, 5, 7] {
            let lat = build_lattice(d).unwrap();
            for (i, a) in lat.stabilizers.iter().enumerate() {
                for b in &lat.stabilizers[i + 1..] {
                    if a.kind != b.kind {
                        assert_eq!(
                            overlap(&a.support, &b.support) % 2,
                            0,
                            "d={d}: stabilizers of different type share an odd number of qubits"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn logicals_commute_with_stabilizers_and_anticommute_with_each_other() {
        for d in [3, 5, 7] {
            let lat = build_lattice(d).unwrap();
            for s in &lat.stabilizers {
                let logical = match s.kind {
                    // X stabilizers can only anticommute with Z-type logicals.
                    StabKind::X => &lat.logical_z_support,
                    StabKind::Z => &lat.logical_x_support,
                };
                assert_eq!(overlap(&s.support, logical) % 2, 0, "d={d}");
            }
            assert_eq!(
                overlap(&lat.logical_x_support, &lat.logical_z_support) % 2,
                1,
                "d={d}: logical representatives must anticommute"
            );
        }
    }

    #[test]
    fn pauli_composition_table() {
        use Pauli::*;
        assert_eq!(I.compose(X), X);
        assert_eq!(X.compose(X), I);
        assert_eq!(X.compose(Z), Y);
        assert_eq!(Z.compose(X), Y);
        assert_eq!(Y.compose(Z), X);
        assert_eq!(X.compose(Y), Z);
    }

    #[test]
    fn apply_pauli_bounds_check() {
        let frame = PauliFrame::identity(9);
        assert!(apply_pauli(&frame, 9, Pauli::X).is_err());
        let frame = apply_pauli(&frame, 3, Pauli::X).unwrap();
        assert_eq!(frame.get(3), Pauli::X);
    }

    #[test]
    fn clean_frame_has_clean_syndrome() {
        let lat = build_lattice(3).unwrap();
        let syn = measure_syndrome(&PauliFrame::identity(9), &lat);
        assert!(syn.is_clean());
    }

    #[test]
    fn single_x_flips_expected_z_checks_at_d3() {
        let lat = build_lattice(3).unwrap();
        // Adjacency oracle: count Z stabilizers containing each qubit.
        for q in 0..9 {
            let z_adjacent = lat
                .stabilizers
                .iter()
                .filter(|s| s.kind == StabKind::Z && s.support.contains(&q))
                .count();
            let frame = apply_pauli(&PauliFrame::identity(9), q, Pauli::X).unwrap();
            let syn = measure_syndrome(&frame, &lat);
            assert_eq!(syn.defect_count(), z_adjacent);
            // X errors never flip X-type checks.
            for (i, s) in lat.stabilizers.iter().enumerate() {
                if s.kind == StabKind::X {
                    assert!(!syn.bits[i]);
                }
            }
        }
        // A bulk qubit touches two Z plaquettes, the right corner one.
        let bulk = apply_pauli(&PauliFrame::identity(9), lat.qubit_index(1, 1), Pauli::X).unwrap();
        assert_eq!(measure_syndrome(&bulk, &lat).defect_count(), 2);
        let corner_q = (0..9)
            .find(|&q| {
                lat.stabilizers
                    .iter()
                    .filter(|s| s.kind == StabKind::Z && s.support.contains(&q))
                    .count()
                    == 1
            })
            .unwrap();
        let corner = apply_pauli(&PauliFrame::identity(9), corner_q, Pauli::X).unwrap();
        assert_eq!(measure_syndrome(&corner, &lat).defect_count(), 1);
    }

    #[test]
    fn logical_chain_flips_opposite_observable() {
        let lat = build_lattice(3).unwrap();
        let mut frame = PauliFrame::identity(9);
        for &q in &lat.logical_x_support {
            frame.apply(q, Pauli::X).unwrap();
        }
        assert!(measure_syndrome(&frame, &lat).is_clean());
        assert_eq!(logical_flipped(&frame, &lat), (false, true));

        let mut frame = PauliFrame::identity(9);
        for &q in &lat.logical_z_support {
            frame.apply(q, Pauli::Z).unwrap();
        }
        assert!(measure_syndrome(&frame, &lat).is_clean());
        assert_eq!(logical_flipped(&frame, &lat), (true, false));

        assert_eq!(
            logical_flipped(&PauliFrame::identity(9), &lat),
            (false, false)
        );
    }

    #[test]
    fn stabilizers_act_trivially() {
        for d in [3, 5] {
            let lat = build_lattice(d).unwrap();
            for s in &lat.stabilizers {
                let mut frame = PauliFrame::identity(lat.num_qubits());
                for &q in &s.support {
                    frame.apply(q, s.kind.pauli()).unwrap();
                }
                assert!(measure_syndrome(&frame, &lat).is_clean());
                assert_eq!(logical_flipped(&frame, &lat), (false, false));
            }
        }
    }

    fn arb_frame(n: usize) -> impl Strategy<Value = PauliFrame> {
        proptest::collection::vec(
            prop_oneof![
                Just(Pauli::I),
                Just(Pauli::X),
                Just(Pauli::Y),
                Just(Pauli::Z)
            ],
            n,
        )
        .prop_map(PauliFrame::from_paulis)
    }

    proptest! {
        #[test]
        fn syndrome_is_linear(f1 in arb_frame(25), f2 in arb_frame(25)) {
            let lat = build_lattice(5).unwrap();
            let lhs = measure_syndrome(&f1.compose(&f2), &lat);
            let rhs = measure_syndrome(&f1, &lat).xor(&measure_syndrome(&f2, &lat));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn double_application_restores(f in arb_frame(9), q in 0usize..9,
                                       p in prop_oneof![Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]) {
            let once = apply_pauli(&f, q, p).unwrap();
            let twice = apply_pauli(&once, q, p).unwrap();
            prop_assert_eq!(twice, f);
        }

        #[test]
        fn stabilizer_products_are_invisible(mask in proptest::collection::vec(any::<bool>(), 8)) {
            let lat = build_lattice(3).unwrap();
            let mut frame = PauliFrame::identity(9);
            for (s, &on) in lat.stabilizers.iter().zip(&mask) {
                if on {
                    for &q in &s.support {
                        frame.apply(q, s.kind.pauli()).unwrap();
                    }
                }
            }
            prop_assert!(measure_syndrome(&frame, &lat).is_clean());
            prop_assert_eq!(logical_flipped(&frame, &lat), (false, false));
        }
    }
}
