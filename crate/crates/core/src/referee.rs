//! Minimum-weight-perfect-matching referee.
//!
//! Two matching graphs are built, one per Pauli error type; X errors are
//! decoded on the graph whose nodes are the Z-type stabilizers and vice versa
//! (Y errors decompose into X and Z). Defects are paired along shortest paths
//! in the weighted graph, with boundary nodes absorbing odd defects. The
//! referee applies the matched correction to a copy of the hidden state and
//! terminates the episode when a logical observable is flipped.

use crate::lattice::{logical_flipped, LatticeSpec, Pauli, PauliFrame, StabKind, Syndrome};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BinaryHeap;
use thiserror::Error;

/// Edge weights after miscalibration never drop below this.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Exact subset-DP matching is used up to this many defects; beyond it (only
/// reachable in pathological high-noise states) a greedy pairing steps in.
const EXACT_MATCHING_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    /// Local index into `stab_nodes`.
    Stab(usize),
    /// Local boundary-node index.
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub a: Node,
    pub b: Node,
    pub weight: f64,
    /// Data qubit this edge corrects.
    pub qubit: usize,
}

/// Matching graph for one Pauli error type.
#[derive(Debug, Clone)]
pub struct MatchingGraph {
    /// The Pauli error this graph corrects (X or Z).
    pub error_type: Pauli,
    /// Lattice stabilizer indices of the detector nodes.
    pub stab_nodes: Vec<usize>,
    pub edges: Vec<Edge>,
    pub num_boundary: usize,
    /// adjacency[local stab] = (edge index, other endpoint)
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge weight {0} is negative")]
    NegativeWeight(f64),
    #[error("expected {expected} edge weights, got {got}")]
    WeightCountMismatch { expected: usize, got: usize },
}

impl MatchingGraph {
    fn build(lattice: &LatticeSpec, error_type: Pauli) -> Self {
        let detector_kind = match error_type {
            Pauli::X => StabKind::Z,
            Pauli::Z => StabKind::X,
            _ => panic!("matching graphs exist only for X and Z errors"),
        };
        let stab_nodes = lattice.stabilizer_indices(detector_kind);
        let local_of: std::collections::HashMap<usize, usize> = stab_nodes
            .iter()
            .enumerate()
            .map(|(local, &global)| (global, local))
            .collect();

        let mut edges = Vec::new();
        let mut num_boundary = 0;
        for q in 0..lattice.num_qubits() {
            let touching: Vec<usize> = stab_nodes
                .iter()
                .copied()
                .filter(|&s| lattice.stabilizers[s].support.contains(&q))
                .collect();
            match touching.len() {
                2 => edges.push(Edge {
                    a: Node::Stab(local_of[&touching[0]]),
                    b: Node::Stab(local_of[&touching[1]]),
                    weight: 1.0,
                    qubit: q,
                }),
                1 => {
                    edges.push(Edge {
                        a: Node::Stab(local_of[&touching[0]]),
                        b: Node::Boundary(num_boundary),
                        weight: 1.0,
                        qubit: q,
                    });
                    num_boundary += 1;
                }
                other => panic!("qubit {q} touches {other} detectors of one type"),
            }
        }

        let mut adjacency = vec![Vec::new(); stab_nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if let Node::Stab(s) = e.a {
                adjacency[s].push(i);
            }
            if let Node::Stab(s) = e.b {
                adjacency[s].push(i);
            }
        }

        Self {
            error_type,
            stab_nodes,
            edges,
            num_boundary,
            adjacency,
        }
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<(), GraphError> {
        if weights.len() != self.edges.len() {
            return Err(GraphError::WeightCountMismatch {
                expected: self.edges.len(),
                got: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(GraphError::NegativeWeight(w));
        }
        for (e, &w) in self.edges.iter_mut().zip(weights) {
            e.weight = w;
        }
        Ok(())
    }

    /// Graph-local node index of a lattice stabilizer, if it detects this
    /// graph's error type.
    pub fn local_of_stab(&self, global: usize) -> Option<usize> {
        self.stab_nodes.iter().position(|&s| s == global)
    }

    /// Dijkstra from one detector node. Returns per-stab-node (distance,
    /// incoming edge) plus the cheapest boundary exit (cost, final edge).
    /// Dijkstra from a local source node: per-node distances, predecessor
    /// edges, and the cheapest boundary exit (cost, edge).
    pub fn shortest_paths(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>, f64, Option<usize>) {
        let n = self.stab_nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev_edge: Vec<Option<usize>> = vec![None; n];
        let mut boundary_cost = f64::INFINITY;
        let mut boundary_edge = None;
        dist[source] = 0.0;

        // Max-heap on negated distance.
        let mut heap = BinaryHeap::new();
        heap.push((std::cmp::Reverse(ordered(0.0)), source));
        while let Some((std::cmp::Reverse(d), u)) = heap.pop() {
            let d = d.0;
            if d > dist[u] {
                continue;
            }
            for &ei in &self.adjacency[u] {
                let e = &self.edges[ei];
                let other = match (e.a, e.b) {
                    (Node::Stab(a), b) if a == u => b,
                    (a, Node::Stab(b)) if b == u => a,
                    _ => continue,
                };
                match other {
                    Node::Stab(v) => {
                        let nd = d + e.weight;
                        if nd < dist[v] {
                            dist[v] = nd;
                            prev_edge[v] = Some(ei);
                            heap.push((std::cmp::Reverse(ordered(nd)), v));
                        }
                    }
                    Node::Boundary(_) => {
                        let nd = d + e.weight;
                        if nd < boundary_cost {
                            boundary_cost = nd;
                            boundary_edge = Some(ei);
                        }
                    }
                }
            }
        }
        (dist, prev_edge, boundary_cost, boundary_edge)
    }

    /// Qubits along the shortest path from `source` back from `target`,
    /// following predecessor edges.
    fn path_qubits(&self, prev_edge: &[Option<usize>], source: usize, target: usize) -> Vec<usize> {
        let mut qubits = Vec::new();
        let mut cur = target;
        while cur != source {
            let ei = prev_edge[cur].expect("broken predecessor chain");
            let e = &self.edges[ei];
            qubits.push(e.qubit);
            cur = match (e.a, e.b) {
                (Node::Stab(a), Node::Stab(b)) => {
                    if a == cur {
                        b
                    } else {
                        a
                    }
                }
                _ => unreachable!("boundary edge inside a stab-to-stab path"),
            };
        }
        qubits
    }
}

#[derive(Debug, Clone, Copy)]
struct OrderedF64(f64);
impl PartialEq for OrderedF64 {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}
impl Eq for OrderedF64 {}
impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
fn ordered(x: f64) -> OrderedF64 {
    OrderedF64(x)
}

/// Builds the (X-error, Z-error) matching graph pair. `weights`, when given,
/// replace the default unit weights of both graphs in edge order
/// (X graph first, then Z graph).
pub fn build_matching_graphs(
    lattice: &LatticeSpec,
    weights: Option<&[f64]>,
) -> Result<(MatchingGraph, MatchingGraph), GraphError> {
    let mut gx = MatchingGraph::build(lattice, Pauli::X);
    let mut gz = MatchingGraph::build(lattice, Pauli::Z);
    if let Some(w) = weights {
        let nx = gx.edges.len();
        if w.len() != nx + gz.edges.len() {
            return Err(GraphError::WeightCountMismatch {
                expected: nx + gz.edges.len(),
                got: w.len(),
            });
        }
        gx.set_weights(&w[..nx])?;
        gz.set_weights(&w[nx..])?;
    }
    Ok((gx, gz))
}

/// Result of decoding one defect set.
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub corrections: Vec<(usize, Pauli)>,
    pub matched_weight: f64,
}

/// Pairs the given defects (lattice stabilizer indices) at minimum total
/// weight, odd leftovers going to the boundary, and returns the correction
/// along the matched paths.
pub fn mwpm_decode(graph: &MatchingGraph, defects: &[usize]) -> DecodeOutcome {
    let locals: Vec<usize> = defects
        .iter()
        .map(|&g| {
            graph
                .local_of_stab(g)
                .expect("defect is not a node of this graph")
        })
        .collect();
    let k = locals.len();
    if k == 0 {
        return DecodeOutcome {
            corrections: Vec::new(),
            matched_weight: 0.0,
        };
    }

    let mut dists = Vec::with_capacity(k);
    let mut prevs = Vec::with_capacity(k);
    let mut boundary = Vec::with_capacity(k);
    for &src in &locals {
        let (d, p, bc, be) = graph.shortest_paths(src);
        dists.push(d);
        prevs.push(p);
        boundary.push((bc, be));
    }

    let pair_cost =
        |i: usize, j: usize| -> f64 { dists[i][locals[j]] };

    // mate[i] = Some(j) for a defect pair, None for a boundary match.
    let mates: Vec<Option<usize>> = if k <= EXACT_MATCHING_LIMIT {
        exact_matching(k, &pair_cost, &boundary)
    } else {
        greedy_matching(k, &pair_cost, &boundary)
    };

    let num_qubits = graph
        .edges
        .iter()
        .map(|e| e.qubit + 1)
        .max()
        .unwrap_or(0);
    let mut flip = vec![false; num_qubits];
    let mut total = 0.0;
    for i in 0..k {
        match mates[i] {
            Some(j) if j > i => {
                total += pair_cost(i, j);
                for q in graph.path_qubits(&prevs[i], locals[i], locals[j]) {
                    flip[q] ^= true;
                }
            }
            Some(_) => {}
            None => {
                let (bc, be) = boundary[i];
                total += bc;
                let be = be.expect("finite boundary cost without an exit edge");
                // Path to the stab adjacent to the boundary exit, then out.
                let exit_stab = match (graph.edges[be].a, graph.edges[be].b) {
                    (Node::Stab(s), _) | (_, Node::Stab(s)) => s,
                    _ => unreachable!(),
                };
                for q in graph.path_qubits(&prevs[i], locals[i], exit_stab) {
                    flip[q] ^= true;
                }
                flip[graph.edges[be].qubit] ^= true;
            }
        }
    }

    let corrections = flip
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(q, _)| (q, graph.error_type))
        .collect();
    DecodeOutcome {
        corrections,
        matched_weight: total,
    }
}

/// Exact minimum-weight pairing by subset DP: pick the lowest defect still in
/// the mask and either match it to the boundary or to another defect.
fn exact_matching(
    k: usize,
    pair_cost: &dyn Fn(usize, usize) -> f64,
    boundary: &[(f64, Option<usize>)],
) -> Vec<Option<usize>> {
    let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
    let mut best = vec![f64::INFINITY; (full as usize) + 1];
    // choice[mask] = (i, Some(j)) pair or (i, None) boundary.
    let mut choice: Vec<(usize, Option<usize>)> = vec![(0, None); (full as usize) + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut b = boundary[i].0 + best[rest as usize];
        let mut c = (i, None);
        let mut m = rest;
        while m != 0 {
            let j = m.trailing_zeros() as usize;
            m &= !(1 << j);
            let cand = pair_cost(i, j) + best[(rest & !(1 << j)) as usize];
            if cand < b {
                b = cand;
                c = (i, Some(j));
            }
        }
        best[mask as usize] = b;
        choice[mask as usize] = c;
    }

    let mut mates = vec![None; k];
    let mut mask = full;
    while mask != 0 {
        let (i, j) = choice[mask as usize];
        match j {
            Some(j) => {
                mates[i] = Some(j);
                mates[j] = Some(i);
                mask &= !(1u32 << i) & !(1u32 << j);
            }
            None => {
                mates[i] = None;
                mask &= !(1u32 << i);
            }
        }
    }
    mates
}

/// Cheap fallback for defect sets too large for the DP; matches the globally
/// cheapest remaining option repeatedly.
fn greedy_matching(
    k: usize,
    pair_cost: &dyn Fn(usize, usize) -> f64,
    boundary: &[(f64, Option<usize>)],
) -> Vec<Option<usize>> {
    let mut mates: Vec<Option<Option<usize>>> = vec![None; k];
    let mut remaining = k;
    while remaining > 0 {
        let mut best = f64::INFINITY;
        let mut pick: (usize, Option<usize>) = (0, None);
        for i in 0..k {
            if mates[i].is_some() {
                continue;
            }
            if boundary[i].0 < best {
                best = boundary[i].0;
                pick = (i, None);
            }
            for j in i + 1..k {
                if mates[j].is_none() && pair_cost(i, j) < best {
                    best = pair_cost(i, j);
                    pick = (i, Some(j));
                }
            }
        }
        let (i, j) = pick;
        mates[i] = Some(j);
        remaining -= 1;
        if let Some(j) = j {
            mates[j] = Some(Some(i));
            remaining -= 1;
        }
    }
    mates.into_iter().map(|m| m.unwrap()).collect()
}

/// Referee verdict for one episode-termination check.
#[derive(Debug, Clone)]
pub struct RefereeVerdict {
    pub continue_episode: bool,
    /// Corrections the referee applied to its trial copy.
    pub corrections_applied: Vec<(usize, Pauli)>,
}

/// The three-step termination check: split the syndrome by type, decode both
/// halves, apply the corrections to a copy of the hidden state, and test the
/// logical observables. The hidden frame itself is never mutated.
pub fn referee_check(
    hidden: &PauliFrame,
    syndrome: &Syndrome,
    graphs: &(MatchingGraph, MatchingGraph),
    lattice: &LatticeSpec,
) -> RefereeVerdict {
    let (gx, gz) = graphs;
    let defects_of = |g: &MatchingGraph| -> Vec<usize> {
        g.stab_nodes
            .iter()
            .copied()
            .filter(|&s| syndrome.bits[s])
            .collect()
    };
    let x_out = mwpm_decode(gx, &defects_of(gx));
    let z_out = mwpm_decode(gz, &defects_of(gz));

    let mut trial = hidden.clone();
    let mut corrections_applied = Vec::new();
    for (q, p) in x_out.corrections.into_iter().chain(z_out.corrections) {
        trial.apply(q, p).expect("correction within lattice");
        corrections_applied.push((q, p));
    }
    let (x_flipped, z_flipped) = logical_flipped(&trial, lattice);
    RefereeVerdict {
        continue_episode: !(x_flipped || z_flipped),
        corrections_applied,
    }
}

/// Replaces every graph edge weight with an independent draw from N(1, sigma^2),
/// clamped below at `WEIGHT_FLOOR`. (Implicit boundary-boundary connections
/// keep weight 0.)
pub fn miscalibrate_weights(
    graphs: &(MatchingGraph, MatchingGraph),
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> (MatchingGraph, MatchingGraph) {
    let mut out = graphs.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(1.0, sigma).expect("sigma must be finite and non-negative");
    for g in [&mut out.0, &mut out.1] {
        for e in &mut g.edges {
            e.weight = normal.sample(rng).max(WEIGHT_FLOOR);
        }
    }
    out
}
