//! Maximum-likelihood decisions, the minimum-weight perfect-matching
//! comparison decoder, and the incoherent-twirl evaluation.
//!
//! Maximum-likelihood decoding picks the class with the largest `|Z_μ|²`;
//! the Bloch-averaged infidelity of correcting with class `μ` is
//! `r_μ = (2/3) Σ_{ν≠μ} |Z_ν|² / Σ_ν |Z_ν|²`, so the worst case (all
//! weights equal) is 1/2.
//!
//! MWPM pairs defects (and one boundary mirror per defect) on a complete
//! graph with graph-distance weights and zero-weight mirror-mirror edges,
//! solved exactly by a blossom matching; vertex defects are matched for
//! the Z-string correction toward the rough edges, plaquette defects for
//! the X-string correction toward the smooth edges.

use rustworkx_core::max_weight_matching::max_weight_matching;
use rustworkx_core::petgraph::graph::UnGraph;
use std::convert::Infallible;
use thiserror::Error;

use crate::amplitude::{normalized_weights2, AmplitudeLog};
use crate::circuit::{evaluate_twirl_partitions, CircuitError};
use crate::couplings::{twirl_couplings, CouplingError, RotationSpec};
use crate::lattice::{CodeLayout, EtaConfig, LogicalClass, Stabilizer, Syndrome};
use crate::mps::TruncationPolicy;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("all four amplitudes are zero")]
    AllAmplitudesZero,
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Outcome of a maximum-likelihood decision.
#[derive(Clone, Debug)]
pub struct DecodeVerdict {
    /// `argmax_μ |Z_μ|²`, ties broken in the fixed order I < X < Y < Z.
    pub class: LogicalClass,
    /// Normalized class weights `|Z_μ|² / P(s)`.
    pub weights: [f64; 4],
    /// `r_{μ*,s} = (2/3)(1 - w_{μ*})`.
    pub min_infidelity: f64,
    /// Class chosen by MWPM and its weight share, when attached.
    pub mwpm_class: Option<LogicalClass>,
    pub mwpm_weight_share: Option<f64>,
}

impl DecodeVerdict {
    pub fn with_mwpm(mut self, class: LogicalClass) -> Self {
        self.mwpm_class = Some(class);
        self.mwpm_weight_share = Some(self.weights[class.index()]);
        self
    }

    /// `1 - |Z_mwpm|²/P(s)`, the per-sample MWPM error term.
    pub fn mwpm_error(&self) -> Option<f64> {
        self.mwpm_weight_share.map(|w| 1.0 - w)
    }
}

/// Maximum-likelihood verdict from the four class amplitudes. Invariant
/// under any common log-space rescaling of the amplitudes.
pub fn ml_verdict(zs: &[AmplitudeLog; 4]) -> Result<DecodeVerdict, DecodeError> {
    let weights = normalized_weights2(zs).ok_or(DecodeError::AllAmplitudesZero)?;
    let mut best = 0usize;
    for k in 1..4 {
        if weights[k] > weights[best] {
            best = k;
        }
    }
    Ok(DecodeVerdict {
        class: LogicalClass::from_index(best),
        weights,
        min_infidelity: (2.0 / 3.0) * (1.0 - weights[best]),
        mwpm_class: None,
        mwpm_weight_share: None,
    })
}

/// `1 - |Z_μ|²/P(s)` for an externally chosen class.
pub fn mwpm_error_term(zs: &[AmplitudeLog; 4], class: LogicalClass) -> Result<f64, DecodeError> {
    let weights = normalized_weights2(zs).ok_or(DecodeError::AllAmplitudesZero)?;
    Ok(1.0 - weights[class.index()])
}

// ---------------------------------------------------------------------------
// Minimum-weight perfect matching.
// ---------------------------------------------------------------------------

/// One of the two independent matching subproblems: defect coordinates,
/// per-defect boundary distances, pairwise distances, all in integer link
/// counts (scaled when per-link weights are in play).
#[derive(Clone, Debug)]
pub struct MatchingProblem {
    /// Stabilizer indices of the defects.
    pub defects: Vec<usize>,
    /// `dist[i][j]`: links on the shortest path between defects.
    pub pairwise: Vec<Vec<i128>>,
    /// `(cost, toward_low_side)` of each defect's cheapest boundary exit.
    pub boundary: Vec<(i128, bool)>,
}

/// Matched structure: defect pairs and defects routed to a boundary.
#[derive(Clone, Debug, Default)]
pub struct MatchingOutcome {
    pub pairs: Vec<(usize, usize)>,
    pub to_boundary: Vec<usize>,
    pub total_weight: i128,
}

fn solve_matching(problem: &MatchingProblem) -> MatchingOutcome {
    let k = problem.defects.len();
    let mut out = MatchingOutcome::default();
    if k == 0 {
        return out;
    }
    // Nodes: defects 0..k, mirrors k..2k. Maximize Σ(-cost) over a
    // maximum-cardinality matching; mirror-mirror edges cost nothing, so a
    // perfect matching always exists.
    let mut graph = UnGraph::<(), i128>::new_undirected();
    for _ in 0..2 * k {
        graph.add_node(());
    }
    use rustworkx_core::petgraph::graph::NodeIndex;
    for i in 0..k {
        for j in i + 1..k {
            graph.add_edge(
                NodeIndex::new(i),
                NodeIndex::new(j),
                -problem.pairwise[i][j],
            );
        }
        graph.add_edge(NodeIndex::new(i), NodeIndex::new(k + i), -problem.boundary[i].0);
    }
    for i in 0..k {
        for j in i + 1..k {
            graph.add_edge(NodeIndex::new(k + i), NodeIndex::new(k + j), 0);
        }
    }
    let matching: Result<_, Infallible> =
        max_weight_matching(&graph, true, |e| Ok(*e.weight()), false);
    let matching = matching.expect("infallible weight fn");
    for &(a, b) in &matching {
        let (a, b) = (a.min(b), a.max(b));
        if b < k {
            out.pairs.push((a, b));
            out.total_weight += problem.pairwise[a][b];
        } else if a < k {
            out.to_boundary.push(a);
            out.total_weight += problem.boundary[a].0;
        }
    }
    out.pairs.sort_unstable();
    out.to_boundary.sort_unstable();
    out
}

/// Grid steps between two stabilizers of the same species are two grid
/// units; each step crosses exactly one link.
fn grid_distance(a: &Stabilizer, b: &Stabilizer) -> i128 {
    ((a.row.abs_diff(b.row) + a.col.abs_diff(b.col)) / 2) as i128
}

/// Matching problem for the vertex (Z-string) sector. Vertex defects
/// terminate on the rough top/bottom edges.
pub fn vertex_matching_problem(layout: &CodeLayout, s: &Syndrome) -> MatchingProblem {
    let rows = 2 * layout.m_len() - 1;
    let defects: Vec<usize> = s.vertex_defects().collect();
    let stabs = layout.vertices();
    let pairwise = defects
        .iter()
        .map(|&i| {
            defects
                .iter()
                .map(|&j| grid_distance(&stabs[i], &stabs[j]))
                .collect()
        })
        .collect();
    let boundary = defects
        .iter()
        .map(|&i| {
            let up = ((stabs[i].row + 1) / 2) as i128;
            let down = ((rows - stabs[i].row) / 2) as i128;
            if up <= down {
                (up, true)
            } else {
                (down, false)
            }
        })
        .collect();
    MatchingProblem {
        defects,
        pairwise,
        boundary,
    }
}

/// Matching problem for the plaquette (X-string) sector. Plaquette
/// defects terminate on the smooth left/right edges.
pub fn plaquette_matching_problem(layout: &CodeLayout, s: &Syndrome) -> MatchingProblem {
    let cols = 2 * layout.l_len() - 1;
    let defects: Vec<usize> = s.plaquette_defects().collect();
    let stabs = layout.plaquettes();
    let pairwise = defects
        .iter()
        .map(|&i| {
            defects
                .iter()
                .map(|&j| grid_distance(&stabs[i], &stabs[j]))
                .collect()
        })
        .collect();
    let boundary = defects
        .iter()
        .map(|&i| {
            let left = ((stabs[i].col + 1) / 2) as i128;
            let right = ((cols - stabs[i].col) / 2) as i128;
            if left <= right {
                (left, true)
            } else {
                (right, false)
            }
        })
        .collect();
    MatchingProblem {
        defects,
        pairwise,
        boundary,
    }
}

/// Flip signs along the L-shaped lattice path between two stabilizers of
/// one species: first along the primary axis, then along the other.
fn flip_l_path(
    layout: &CodeLayout,
    eta: &mut EtaConfig,
    z_sector: bool,
    from: (usize, usize),
    to: (usize, usize),
) {
    let mut flip = |r: usize, c: usize| {
        let j = layout.qubit_at(r, c).expect("path qubit");
        if z_sector {
            eta.z[j] = -eta.z[j];
        } else {
            eta.x[j] = -eta.x[j];
        }
    };
    // Vertical leg at the starting column, then horizontal leg at the
    // target row.
    let (r0, c0) = from;
    let (r1, c1) = to;
    let (rlo, rhi) = (r0.min(r1), r0.max(r1));
    let mut r = rlo + 1;
    while r < rhi {
        flip(r, c0);
        r += 2;
    }
    let (clo, chi) = (c0.min(c1), c0.max(c1));
    let mut c = clo + 1;
    while c < chi {
        flip(r1, c);
        c += 2;
    }
}

/// Exact MWPM correction for a syndrome: both sectors matched
/// independently, strings realized along deterministic L-shaped paths.
pub fn mwpm_decode(layout: &CodeLayout, s: &Syndrome) -> EtaConfig {
    let mut eta = EtaConfig::identity(layout.num_qubits());
    let rows = 2 * layout.m_len() - 1;
    let cols = 2 * layout.l_len() - 1;

    let vp = vertex_matching_problem(layout, s);
    let vm = solve_matching(&vp);
    let vstabs = layout.vertices();
    for &(a, b) in &vm.pairs {
        let sa = &vstabs[vp.defects[a]];
        let sb = &vstabs[vp.defects[b]];
        flip_l_path(layout, &mut eta, true, (sa.row, sa.col), (sb.row, sb.col));
    }
    for &a in &vm.to_boundary {
        let sa = &vstabs[vp.defects[a]];
        let target_row = if vp.boundary[a].1 { 0 } else { rows - 1 };
        // Straight vertical string to the rough edge, inclusive of the
        // boundary link.
        let (rlo, rhi) = (sa.row.min(target_row), sa.row.max(target_row));
        let mut r = if target_row == 0 { rlo } else { rlo + 1 };
        let rend = if target_row == 0 { rhi - 1 } else { rhi };
        while r <= rend {
            let j = layout.qubit_at(r, sa.col).expect("boundary path qubit");
            eta.z[j] = -eta.z[j];
            r += 2;
        }
    }

    let pp = plaquette_matching_problem(layout, s);
    let pm = solve_matching(&pp);
    let pstabs = layout.plaquettes();
    for &(a, b) in &pm.pairs {
        let sa = &pstabs[pp.defects[a]];
        let sb = &pstabs[pp.defects[b]];
        flip_l_path(layout, &mut eta, false, (sa.row, sa.col), (sb.row, sb.col));
    }
    for &a in &pm.to_boundary {
        let sa = &pstabs[pp.defects[a]];
        let target_col = if pp.boundary[a].1 { 0 } else { cols - 1 };
        let (clo, chi) = (sa.col.min(target_col), sa.col.max(target_col));
        let mut c = if target_col == 0 { clo } else { clo + 1 };
        let cend = if target_col == 0 { chi - 1 } else { chi };
        while c <= cend {
            let j = layout.qubit_at(sa.row, c).expect("boundary path qubit");
            eta.x[j] = -eta.x[j];
            c += 2;
        }
    }
    eta
}

/// Minimum matching weights of both sectors (diagnostic / test hook).
pub fn mwpm_weights(layout: &CodeLayout, s: &Syndrome) -> (i128, i128) {
    let v = solve_matching(&vertex_matching_problem(layout, s));
    let p = solve_matching(&plaquette_matching_problem(layout, s));
    (v.total_weight, p.total_weight)
}

/// Outcome of the incoherent-twirl evaluation for one sampled string.
#[derive(Clone, Debug)]
pub struct TwirlVerdict {
    pub class: LogicalClass,
    /// Normalized class probabilities `Z^(inc)_μ / Σ_ν Z^(inc)_ν`.
    pub weights: [f64; 4],
    /// `1 - max_μ` share, the per-sample logical error term.
    pub error_term: f64,
    pub entropy_half: f64,
    pub discarded_weight: f64,
    pub imag_residue: f64,
}

/// Evaluate the four real twirl partition functions for a sampled string
/// and decode by the largest class probability.
pub fn twirl_verdict(
    layout: &CodeLayout,
    rot: &RotationSpec,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<TwirlVerdict, DecodeError> {
    let couplings = twirl_couplings(rot)?;
    twirl_verdict_with(layout, &couplings, eta, policy)
}

/// As [`twirl_verdict`] with precomputed couplings.
pub fn twirl_verdict_with(
    layout: &CodeLayout,
    couplings: &crate::couplings::TwirlCouplings,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<TwirlVerdict, DecodeError> {
    let parts = evaluate_twirl_partitions(layout, couplings, eta, policy)?;
    let max = parts
        .log_z
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DecodeError::AllAmplitudesZero);
    }
    let mut weights = [0.0f64; 4];
    let mut total = 0.0;
    for (w, lz) in weights.iter_mut().zip(&parts.log_z) {
        *w = (lz - max).exp();
        total += *w;
    }
    for w in &mut weights {
        *w /= total;
    }
    let mut best = 0usize;
    for k in 1..4 {
        if weights[k] > weights[best] {
            best = k;
        }
    }
    Ok(TwirlVerdict {
        class: LogicalClass::from_index(best),
        weights,
        error_term: 1.0 - weights[best],
        entropy_half: parts.entropy_half,
        discarded_weight: parts.discarded_weight,
        imag_residue: parts.imag_residue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::twirl_probabilities;
    use crate::lattice::{build_layout, canonical_correction, logical_class, syndrome_of};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn amp(w2: f64) -> AmplitudeLog {
        if w2 == 0.0 {
            AmplitudeLog::ZERO
        } else {
            AmplitudeLog::new(0.5 * w2.ln(), 0.0)
        }
    }

    #[test]
    fn ml_verdict_examples() {
        let v = ml_verdict(&[amp(1.0), amp(0.0), amp(0.0), amp(0.0)]).unwrap();
        assert_eq!(v.class, LogicalClass::I);
        assert!(v.min_infidelity.abs() < 1e-15);

        let v = ml_verdict(&[amp(1.0), amp(1.0), amp(1.0), amp(1.0)]).unwrap();
        assert_eq!(v.class, LogicalClass::I); // tie-break by fixed order
        assert!((v.min_infidelity - 0.5).abs() < 1e-12);

        let v = ml_verdict(&[amp(4.0), amp(1.0), amp(1.0), amp(1.0)]).unwrap();
        assert!((v.min_infidelity - 2.0 / 7.0).abs() < 1e-12);

        assert!(matches!(
            ml_verdict(&[AmplitudeLog::ZERO; 4]),
            Err(DecodeError::AllAmplitudesZero)
        ));
    }

    #[test]
    fn ml_verdict_is_scale_invariant() {
        let zs = [amp(0.3), amp(0.5), amp(0.1), amp(0.15)];
        let shifted: [AmplitudeLog; 4] = std::array::from_fn(|k| {
            AmplitudeLog::new(zs[k].log_mag + 500.0, zs[k].phase)
        });
        let a = ml_verdict(&zs).unwrap();
        let b = ml_verdict(&shifted).unwrap();
        assert_eq!(a.class, b.class);
        assert!((a.min_infidelity - b.min_infidelity).abs() < 1e-12);
        for k in 0..4 {
            assert!((a.weights[k] - b.weights[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mwpm_share_never_exceeds_ml_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let zs: [AmplitudeLog; 4] =
                std::array::from_fn(|_| amp(rng.gen_range(1e-6..1.0f64)));
            let v = ml_verdict(&zs).unwrap();
            for k in 0..4 {
                let attached = v.clone().with_mwpm(LogicalClass::from_index(k));
                assert!(attached.mwpm_weight_share.unwrap() <= v.weights[v.class.index()] + 1e-15);
                let err = mwpm_error_term(&zs, LogicalClass::from_index(k)).unwrap();
                assert!((err - attached.mwpm_error().unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mwpm_trivial_cases() {
        let layout = build_layout(3, 3).unwrap();
        let empty = syndrome_of(&layout, &EtaConfig::identity(layout.num_qubits())).unwrap();
        assert_eq!(
            mwpm_decode(&layout, &empty),
            EtaConfig::identity(layout.num_qubits())
        );

        // Two horizontally adjacent plaquette defects: the single shared
        // link beats any boundary pairing.
        let mut s = empty;
        let p0 = layout
            .plaquettes()
            .iter()
            .position(|p| p.row == 2 && p.col == 1)
            .unwrap();
        let p1 = layout
            .plaquettes()
            .iter()
            .position(|p| p.row == 2 && p.col == 3)
            .unwrap();
        s.plaquettes[p0] = true;
        s.plaquettes[p1] = true;
        let eta = mwpm_decode(&layout, &s);
        let flipped: Vec<usize> = (0..layout.num_qubits())
            .filter(|&j| eta.x[j] == -1)
            .collect();
        assert_eq!(flipped, vec![layout.qubit_at(2, 2).unwrap()]);
        assert!(eta.z.iter().all(|&z| z == 1));
        assert_eq!(syndrome_of(&layout, &eta).unwrap(), s);
    }

    /// Minimum total weight over all ways of pairing defects or sending
    /// them to their cheapest boundary, by direct recursion.
    fn exhaustive_min(problem: &MatchingProblem) -> i128 {
        fn go(problem: &MatchingProblem, unmatched: &mut Vec<usize>) -> i128 {
            let Some(first) = unmatched.first().copied() else {
                return 0;
            };
            let rest: Vec<usize> = unmatched[1..].to_vec();
            // Route to boundary.
            let mut best = {
                let mut r = rest.clone();
                problem.boundary[first].0 + go(problem, &mut r)
            };
            // Or pair with any later defect.
            for (k, &other) in rest.iter().enumerate() {
                let mut r = rest.clone();
                r.remove(k);
                let cost = problem.pairwise[first][other] + go(problem, &mut r);
                best = best.min(cost);
            }
            best
        }
        let mut all: Vec<usize> = (0..problem.defects.len()).collect();
        go(problem, &mut all)
    }

    #[test]
    fn matching_is_exact_on_random_syndromes() {
        let layout = build_layout(3, 3).unwrap();
        let n = layout.num_qubits();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..120 {
            let mut eta = EtaConfig::identity(n);
            for j in 0..n {
                eta.set_code(j, rng.gen_range(0..4));
            }
            let s = syndrome_of(&layout, &eta).unwrap();
            let vp = vertex_matching_problem(&layout, &s);
            let pp = plaquette_matching_problem(&layout, &s);
            let (vw, pw) = mwpm_weights(&layout, &s);
            assert_eq!(vw, exhaustive_min(&vp), "vertex sector");
            assert_eq!(pw, exhaustive_min(&pp), "plaquette sector");

            // Round trip: the correction reproduces the syndrome, and its
            // realized string length equals the matching weight.
            let corr = mwpm_decode(&layout, &s);
            assert_eq!(syndrome_of(&layout, &corr).unwrap(), s);
            let z_len = corr.z.iter().filter(|&&z| z == -1).count() as i128;
            let x_len = corr.x.iter().filter(|&&x| x == -1).count() as i128;
            assert!(z_len <= vw && x_len <= pw, "paths longer than matching");
        }
    }

    #[test]
    fn twirl_partition_equals_enumerated_class_probability() {
        // Z^(inc)_{μ,s} must equal the total probability of Pauli strings
        // in the class (μ, s), enumerated directly.
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.23 * PI, 0.3 * PI, 0.27 * PI);
        let probs = twirl_probabilities(&rot);
        let policy = TruncationPolicy::exact();

        // Enumerate all 4^5 strings with their product probabilities.
        use std::collections::BTreeMap;
        let mut by_class: BTreeMap<(u64, usize), f64> = BTreeMap::new();
        let mut reference: BTreeMap<u64, EtaConfig> = BTreeMap::new();
        for idx in 0..4usize.pow(n as u32) {
            let eta = EtaConfig::from_index(n, idx);
            let s = syndrome_of(&layout, &eta).unwrap();
            let r = reference
                .entry(s.hash64())
                .or_insert_with(|| canonical_correction(&layout, &s));
            let class = logical_class(&layout, &eta, r).unwrap();
            let mut p = 1.0;
            for j in 0..n {
                let q = &probs[j];
                let w = [1.0 - q[0] - q[1] - q[2], q[0], q[1], q[2]];
                p *= w[eta.code(j)];
            }
            *by_class.entry((s.hash64(), class.index())).or_insert(0.0) += p;
        }

        for (hash, eta_ref) in &reference {
            let v = twirl_verdict(&layout, &rot, eta_ref, &policy).unwrap();
            assert!(v.imag_residue < 1e-10);
            // Reconstruct unnormalized Z from weights: compare ratios via
            // total probability of the syndrome.
            let total: f64 = (0..4)
                .map(|mu| by_class.get(&(*hash, mu)).copied().unwrap_or(0.0))
                .sum();
            for mu in 0..4 {
                let want = by_class.get(&(*hash, mu)).copied().unwrap_or(0.0);
                let got = v.weights[mu] * total;
                assert!(
                    (got - want).abs() < 1e-10,
                    "class {mu}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn twirl_verdict_near_identity() {
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 1e-4, 0.3 * PI, 0.27 * PI);
        let eta = EtaConfig::identity(n);
        let v = twirl_verdict(&layout, &rot, &eta, &TruncationPolicy::exact()).unwrap();
        assert_eq!(v.class, LogicalClass::I);
        assert!(v.error_term < 1e-3, "error term {}", v.error_term);
    }

    #[test]
    fn twirl_partition_magnitude_matches_enumeration_scale() {
        // The absolute normalization, not just ratios: check one syndrome
        // directly against the enumerated class sum.
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.2 * PI, 0.35 * PI, 0.3 * PI);
        let tw = twirl_couplings(&rot).unwrap();
        let eta = EtaConfig::identity(n);
        let parts =
            evaluate_twirl_partitions(&layout, &tw, &eta, &TruncationPolicy::exact()).unwrap();
        // Identity-class probability by enumeration.
        let probs = twirl_probabilities(&rot);
        let mut want = 0.0;
        for idx in 0..4usize.pow(n as u32) {
            let cand = EtaConfig::from_index(n, idx);
            let s = syndrome_of(&layout, &cand).unwrap();
            if !s.is_empty() {
                continue;
            }
            if logical_class(&layout, &cand, &eta).unwrap() != LogicalClass::I {
                continue;
            }
            let mut p = 1.0;
            for j in 0..n {
                let q = &probs[j];
                let w = [1.0 - q[0] - q[1] - q[2], q[0], q[1], q[2]];
                p *= w[cand.code(j)];
            }
            want += p;
        }
        let got = parts.log_z[0].exp();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}
