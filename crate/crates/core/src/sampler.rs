//! Born-probability sampling of error strings.
//!
//! Each per-qubit gate is treated as a weak measurement with four
//! outcomes. Visiting qubits in circuit order, the four candidate gates
//! are applied to scratch copies of the evolved chain and weighted by
//! `⟨φ_j| ω^(j) |φ_j⟩`. Outside the final vertical layer `ω` is the
//! identity, so the weights are just squared norms; inside the final
//! layer `ω` keeps the boundary-state projector factors on every chain
//! site not yet consumed by a later gate (both the `(1+σ^z)/2` odd-site
//! and `(1+σ^x)/2` even-site factors — the conservative schedule, which
//! the exact d = 2 distribution validates). Sampling `η` this way draws
//! syndromes from `P(s) = Σ_μ |Z_{μ,s}|²`: every `(μ, s)` class contains
//! the same number of `η` configurations, so configuration sampling
//! induces the correct syndrome marginal.

use rand::Rng;
use thiserror::Error;

use crate::amplitude::AmplitudeLog;
use crate::circuit::{build_gate, finish_partitions, CircuitError};
use crate::couplings::{
    pauli_coefficients, signs_from_slot, twirl_probabilities, CouplingError, PauliCoefficients,
    RotationSpec, ValidationMode,
};
use crate::lattice::{syndrome_of, CodeLayout, EtaConfig, Syndrome};
use crate::mps::{
    apply_gate, projector_expectation_log, ChainState, MpsError, ProjFactor, TruncationPolicy,
};

/// Guard for the exact enumeration oracle.
pub const MAX_ENUMERATION_QUBITS: usize = 9;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("all four candidate weights vanished at circuit position {0}")]
    AllZeroWeights(usize),
    #[error("{0} qubits exceed the enumeration guard of {MAX_ENUMERATION_QUBITS}")]
    TooManyQubits(usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

impl From<MpsError> for SamplerError {
    fn from(e: MpsError) -> Self {
        SamplerError::Circuit(CircuitError::Mps(e))
    }
}

/// One sampled error string with everything the decoders need.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub seed: u64,
    pub index: u64,
    pub eta: EtaConfig,
    pub syndrome: Syndrome,
    /// `(Z_I, Z_X, Z_Y, Z_Z)` labelled relative to the sampled string.
    pub z: [AmplitudeLog; 4],
    pub entropy_half: f64,
    pub discarded_weight: f64,
    /// Per-step normalized conditionals, when requested.
    pub conditionals: Option<Vec<[f64; 4]>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SampleOptions {
    pub seed: u64,
    pub index: u64,
    pub keep_conditionals: bool,
}

/// Projector factors for the marginal weight at `circuit_pos` (after that
/// position's gate has been applied). `None` means the identity: every
/// position before the final vertical layer. Inside the final layer the
/// factors cover chain sites `1..=2m-1` (1-based) for the layer's `m`-th
/// gate, identity on everything a later gate still acts on.
pub fn omega_factors(layout: &CodeLayout, circuit_pos: usize) -> Option<Vec<ProjFactor>> {
    let start = layout.final_layer_start();
    if circuit_pos < start {
        return None;
    }
    let m_gate = circuit_pos - start + 1; // 1-based within the layer
    let chain = layout.chain_len();
    let covered = 2 * m_gate - 1;
    Some(
        (0..chain)
            .map(|site0| {
                if site0 < covered {
                    if site0 % 2 == 0 {
                        ProjFactor::ZPlus
                    } else {
                        ProjFactor::XPlus
                    }
                } else {
                    ProjFactor::Identity
                }
            })
            .collect(),
    )
}

/// Evolve through the circuit letting `choose` pick each qubit's slot from
/// the normalized conditional weights. Returns the final state, the
/// realized string, and the per-step conditionals.
///
/// Outside the final layer the four candidate weights are squared norms,
/// read off from the shared contracted block without splitting each
/// candidate (the canonical invariant makes the block Frobenius norm the
/// state norm); only the committed candidate pays the SVD split. Inside
/// the final layer the projector sandwich needs the full state, so each
/// candidate is applied to a scratch copy there.
fn run_chain<F>(
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    policy: &TruncationPolicy,
    mut choose: F,
) -> Result<(ChainState, EtaConfig, Vec<[f64; 4]>), SamplerError>
where
    F: FnMut(usize, &[f64; 4]) -> usize,
{
    let n = layout.num_qubits();
    let mut state = crate::circuit::boundary_state(layout.m_len()).to_mps();
    let mut eta = EtaConfig::identity(n);
    let mut conditionals = Vec::with_capacity(n);
    for pos in layout.circuit_order() {
        let omega = omega_factors(layout, pos);
        let mut log_w = [f64::NEG_INFINITY; 4];
        let slot;
        match &omega {
            None => {
                let gates: Vec<_> = (0..4)
                    .map(|s| build_gate(layout, coeffs, pos, signs_from_slot(s)))
                    .collect();
                let (first, span) = (gates[0].first_site, gates[0].span);
                let block = state.prepare_block(first, span)?;
                let mut thetas: [Option<ndarray::Array3<num_complex::Complex64>>; 4] =
                    [None, None, None, None];
                for (s, gate) in gates.iter().enumerate() {
                    let theta = crate::mps::gate_times_block(&gate.matrix, &block);
                    let n2 = crate::mps::block_norm_sqr(&theta);
                    if n2 > 0.0 && n2.is_finite() {
                        log_w[s] = n2.ln() + 2.0 * state.log_norm();
                        thetas[s] = Some(theta);
                    }
                }
                slot = pick_slot(pos, &log_w, &mut conditionals, &mut choose)?;
                state.commit_block(
                    first,
                    span,
                    thetas[slot].take().expect("chosen candidate exists"),
                    policy,
                )?;
            }
            Some(factors) => {
                let mut scratch: [Option<ChainState>; 4] = [None, None, None, None];
                for s in 0..4 {
                    let gate = build_gate(layout, coeffs, pos, signs_from_slot(s));
                    let mut candidate = state.clone();
                    match apply_gate(
                        &mut candidate,
                        gate.first_site,
                        gate.span,
                        &gate.matrix,
                        policy,
                    ) {
                        Ok(()) => {
                            log_w[s] = projector_expectation_log(&candidate, factors);
                            scratch[s] = Some(candidate);
                        }
                        // A candidate annihilating the state has weight zero.
                        Err(MpsError::ZeroState) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                slot = pick_slot(pos, &log_w, &mut conditionals, &mut choose)?;
                state = scratch[slot].take().expect("chosen candidate exists");
            }
        }
        eta.set_code(pos, slot);
    }
    Ok((state, eta, conditionals))
}

fn pick_slot<F>(
    pos: usize,
    log_w: &[f64; 4],
    conditionals: &mut Vec<[f64; 4]>,
    choose: &mut F,
) -> Result<usize, SamplerError>
where
    F: FnMut(usize, &[f64; 4]) -> usize,
{
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return Err(SamplerError::AllZeroWeights(pos));
    }
    let mut probs = [0.0f64; 4];
    let mut total = 0.0;
    for (p, lw) in probs.iter_mut().zip(log_w) {
        *p = (lw - max).exp();
        total += *p;
    }
    for p in &mut probs {
        *p /= total;
    }
    let slot = choose(pos, &probs);
    debug_assert!(probs[slot] > 0.0, "chose a zero-weight slot");
    conditionals.push(probs);
    Ok(slot)
}

/// Draw one error string by its Born probability and evaluate its record.
pub fn sample_error_string<R: Rng>(
    layout: &CodeLayout,
    rot: &RotationSpec,
    policy: &TruncationPolicy,
    rng: &mut R,
    opts: SampleOptions,
) -> Result<SampleRecord, SamplerError> {
    let coeffs = pauli_coefficients(rot, ValidationMode::Permissive)?;
    sample_error_string_with(layout, &coeffs, policy, rng, opts)
}

/// As [`sample_error_string`] with precomputed coefficients.
pub fn sample_error_string_with<R: Rng>(
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    policy: &TruncationPolicy,
    rng: &mut R,
    opts: SampleOptions,
) -> Result<SampleRecord, SamplerError> {
    let (state, eta, conditionals) = run_chain(layout, coeffs, policy, |_, probs| {
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        for (slot, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return slot;
            }
        }
        3
    })?;
    let parts = finish_partitions(state, layout, coeffs, &eta, policy)?;
    let syndrome = syndrome_of(layout, &eta).expect("sampled eta has layout length");
    Ok(SampleRecord {
        seed: opts.seed,
        index: opts.index,
        eta,
        syndrome,
        z: parts.z,
        entropy_half: parts.entropy_half,
        discarded_weight: parts.discarded_weight,
        conditionals: opts.keep_conditionals.then_some(conditionals),
    })
}

/// Per-step conditionals of a fixed string (the chain-rule diagnostic).
pub fn conditionals_for(
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    policy: &TruncationPolicy,
    eta: &EtaConfig,
) -> Result<Vec<[f64; 4]>, SamplerError> {
    let (_, realized, conditionals) =
        run_chain(layout, coeffs, policy, |pos, _| eta.code(pos))?;
    debug_assert_eq!(&realized, eta);
    Ok(conditionals)
}

/// Exact normalized distribution over all `4^N` sign configurations,
/// computed by full circuit evaluation per configuration.
pub fn exact_eta_distribution(
    layout: &CodeLayout,
    rot: &RotationSpec,
) -> Result<Vec<f64>, SamplerError> {
    let n = layout.num_qubits();
    if n > MAX_ENUMERATION_QUBITS {
        return Err(SamplerError::TooManyQubits(n));
    }
    let coeffs = pauli_coefficients(rot, ValidationMode::Permissive)?;
    let policy = TruncationPolicy::exact();
    let reference = crate::circuit::boundary_state(layout.m_len());
    let mut log_w2 = vec![f64::NEG_INFINITY; 4usize.pow(n as u32)];
    for (idx, lw) in log_w2.iter_mut().enumerate() {
        let eta = EtaConfig::from_index(n, idx);
        match crate::circuit::evolve(layout, &coeffs, &eta, &policy) {
            Ok(state) => {
                let amp: AmplitudeLog = crate::mps::overlap(&state, &reference);
                *lw = amp.log_weight2();
            }
            Err(CircuitError::Mps(MpsError::ZeroState)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let max = log_w2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = log_w2
        .into_iter()
        .map(|lw| if lw == f64::NEG_INFINITY { 0.0 } else { (lw - max).exp() })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Draw a Pauli-twirled error string: independent per-qubit choices with
/// probabilities `(cos²α, p₁, p₂, p₃)`; a `Y` draw sets both signs to -1.
pub fn sample_twirl_string<R: Rng>(rot: &RotationSpec, rng: &mut R) -> EtaConfig {
    let probs = twirl_probabilities(rot);
    let mut eta = EtaConfig::identity(rot.len());
    for (j, p) in probs.iter().enumerate() {
        let draw: f64 = rng.gen();
        let slot = if draw < p[0] {
            1 // X
        } else if draw < p[0] + p[1] {
            2 // Y: both signs flip
        } else if draw < p[0] + p[1] + p[2] {
            3 // Z
        } else {
            0
        };
        // Slot codes order (I, X, XZ, Z); the draw above tested error
        // probabilities first, so remap: identity is the complement.
        eta.set_code(j, slot);
    }
    eta
}

/// Syndrome marginal induced by an exact configuration table.
pub fn syndrome_distribution(
    layout: &CodeLayout,
    eta_probs: &[f64],
) -> Vec<(Syndrome, f64)> {
    use std::collections::BTreeMap;
    let n = layout.num_qubits();
    let mut by_hash: BTreeMap<u64, (Syndrome, f64)> = BTreeMap::new();
    for (idx, p) in eta_probs.iter().enumerate() {
        let eta = EtaConfig::from_index(n, idx);
        let s = syndrome_of(layout, &eta).unwrap();
        let e = by_hash.entry(s.hash64()).or_insert_with(|| (s, 0.0));
        e.1 += p;
    }
    by_hash.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_layout;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn omega_schedule_shape() {
        let layout = build_layout(3, 3).unwrap();
        let n = layout.num_qubits();
        let m = layout.m_len();
        for pos in 0..n - m {
            assert!(omega_factors(&layout, pos).is_none());
        }
        // First final-layer position: only the first odd site projected.
        let f = omega_factors(&layout, n - m).unwrap();
        assert_eq!(f[0], ProjFactor::ZPlus);
        assert!(f[1..].iter().all(|x| *x == ProjFactor::Identity));
        // Last position: the full boundary projector.
        let f = omega_factors(&layout, n - 1).unwrap();
        for (i, x) in f.iter().enumerate() {
            let want = if i % 2 == 0 {
                ProjFactor::ZPlus
            } else {
                ProjFactor::XPlus
            };
            assert_eq!(*x, want);
        }
    }

    #[test]
    fn identity_channel_samples_identity_class() {
        // At α = 0 only strings in the trivial class (empty syndrome,
        // logical I) carry weight. The sampled configuration is any of
        // the 2^(N-1) stabilizer-loop gauge copies of the identity; the
        // class, not the representative, is the physical statement.
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.0, 0.3, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            let rec = sample_error_string(
                &layout,
                &rot,
                &TruncationPolicy::exact(),
                &mut rng,
                SampleOptions::default(),
            )
            .unwrap();
            assert!(rec.syndrome.is_empty());
            let class = crate::lattice::logical_class(&layout, &rec.eta, &EtaConfig::identity(n))
                .unwrap();
            assert_eq!(class, crate::lattice::LogicalClass::I);
            // And the record's own class weights say the same.
            let w = crate::amplitude::normalized_weights2(&rec.z).unwrap();
            assert!((w[0] - 1.0).abs() < 1e-9, "weights {w:?}");
        }
    }

    #[test]
    fn exact_distribution_normalizes_and_identity_limit() {
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.0, 0.3, 0.4);
        let probs = exact_eta_distribution(&layout, &rot).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // All mass sits uniformly on the identity class: the stabilizer
        // group's 2^(N-1) sign patterns.
        let group = 1usize << (layout.vertices().len() + layout.plaquettes().len());
        let mut support = 0usize;
        for (idx, &p) in probs.iter().enumerate() {
            if p > 1e-12 {
                support += 1;
                let eta = EtaConfig::from_index(n, idx);
                let s = crate::lattice::syndrome_of(&layout, &eta).unwrap();
                assert!(s.is_empty());
                assert_eq!(
                    crate::lattice::logical_class(&layout, &eta, &EtaConfig::identity(n)).unwrap(),
                    crate::lattice::LogicalClass::I
                );
                assert!((p - 1.0 / group as f64).abs() < 1e-12);
            }
        }
        assert_eq!(support, group);

        let rot = RotationSpec::uniform(n, 0.21 * PI, 0.3 * PI, 0.22 * PI);
        let probs = exact_eta_distribution(&layout, &rot).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn chain_rule_reproduces_exact_distribution() {
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.19 * PI, 0.31 * PI, 0.27 * PI);
        let coeffs = pauli_coefficients(&rot, ValidationMode::Strict).unwrap();
        let table = exact_eta_distribution(&layout, &rot).unwrap();
        let policy = TruncationPolicy::exact();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..12 {
            let idx = rng.gen_range(0..table.len());
            let eta = EtaConfig::from_index(n, idx);
            if table[idx] == 0.0 {
                continue;
            }
            let conds = conditionals_for(&layout, &coeffs, &policy, &eta).unwrap();
            let product: f64 = conds
                .iter()
                .enumerate()
                .map(|(pos, c)| c[eta.code(pos)])
                .product();
            assert!(
                (product - table[idx]).abs() < 1e-8,
                "eta {idx}: chain rule {product} vs table {}",
                table[idx]
            );
        }
    }

    #[test]
    fn sampled_distribution_close_to_exact() {
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.12 * PI, 0.3 * PI, 0.25 * PI);
        let coeffs = pauli_coefficients(&rot, ValidationMode::Strict).unwrap();
        let table = exact_eta_distribution(&layout, &rot).unwrap();
        let policy = TruncationPolicy::exact();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples = 20_000usize;
        let mut counts = vec![0usize; table.len()];
        for _ in 0..samples {
            let rec = sample_error_string_with(
                &layout,
                &coeffs,
                &policy,
                &mut rng,
                SampleOptions::default(),
            )
            .unwrap();
            counts[rec.eta.to_index()] += 1;
        }
        let tv: f64 = table
            .iter()
            .zip(&counts)
            .map(|(p, c)| (p - *c as f64 / samples as f64).abs())
            .sum::<f64>()
            / 2.0;
        // Finite-sample TV over ~4^5 bins at this sample count sits near
        // 0.06; the acceptance suite runs the tighter 1e5-sample check.
        assert!(tv < 0.08, "TV distance {tv}");
    }

    #[test]
    fn step_weights_follow_sum_over_gates_recursion() {
        // Unnormalized candidate weights at step j must reproduce the
        // previous step's marginal weight through the sum-over-four-gates
        // channel. With unnormalized factors the channel constant is 2 per
        // qubit; the (1+σ)/2 projector normalization shifts it to 1 at
        // the entry into the final layer (one new factor) and 1/2 inside
        // it (two factor sites consumed per gate, one gained).
        let layout = build_layout(3, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.24 * PI, 0.33 * PI, 0.21 * PI);
        let coeffs = pauli_coefficients(&rot, ValidationMode::Strict).unwrap();
        let policy = TruncationPolicy::exact();
        let mut state = crate::circuit::boundary_state(layout.m_len()).to_mps();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for pos in layout.circuit_order() {
            let prev_weight = if pos == 0 {
                state.log_squared_norm()
            } else {
                match omega_factors(&layout, pos - 1) {
                    None => state.log_squared_norm(),
                    Some(f) => projector_expectation_log(&state, &f),
                }
            };
            let omega = omega_factors(&layout, pos);
            let mut total = 0.0f64;
            let mut kept: Vec<ChainState> = Vec::new();
            let mut weights = Vec::new();
            for slot in 0..4 {
                let gate = build_gate(&layout, &coeffs, pos, signs_from_slot(slot));
                let mut cand = state.clone();
                apply_gate(&mut cand, gate.first_site, gate.span, &gate.matrix, &policy).unwrap();
                let lw = match &omega {
                    None => cand.log_squared_norm(),
                    Some(f) => projector_expectation_log(&cand, f),
                };
                total += (lw - prev_weight).exp();
                weights.push((lw - prev_weight).exp());
                kept.push(cand);
            }
            let expected = if pos < layout.final_layer_start() {
                2.0
            } else if pos == layout.final_layer_start() {
                1.0
            } else {
                0.5
            };
            assert!(
                (total - expected).abs() < 1e-9,
                "position {pos}: Σ weights / prev = {total}, expected {expected}"
            );
            // Commit a random nonzero candidate and continue.
            let pick = loop {
                let k = rng.gen_range(0..4);
                if weights[k] > 1e-12 {
                    break k;
                }
            };
            state = kept.swap_remove(pick);
        }
    }

    #[test]
    fn twirl_string_statistics() {
        let n = 40;
        // alpha = 0: identity string.
        let rot0 = RotationSpec::uniform(n, 0.0, 0.3, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_twirl_string(&rot0, &mut rng), EtaConfig::identity(n));

        // Full X rotation: eta^x = -1 everywhere.
        let rot_x = RotationSpec::uniform(n, PI / 2.0, 0.0, 0.0);
        let eta = sample_twirl_string(&rot_x, &mut rng);
        assert!(eta.x.iter().all(|&x| x == -1));
        assert!(eta.z.iter().all(|&z| z == 1));

        // Empirical per-site frequencies against the twirl probabilities.
        let rot = RotationSpec::uniform(1, 0.21 * PI, 0.29 * PI, 0.23 * PI);
        let p = twirl_probabilities(&rot)[0];
        let expect = [1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]];
        let draws = 40_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let eta = sample_twirl_string(&rot, &mut rng);
            counts[eta.code(0)] += 1;
        }
        for k in 0..4 {
            let freq = counts[k] as f64 / draws as f64;
            let sigma = (expect[k] * (1.0 - expect[k]) / draws as f64).sqrt();
            assert!(
                (freq - expect[k]).abs() < 4.0 * sigma.max(1e-4),
                "slot {k}: {freq} vs {}",
                expect[k]
            );
        }
    }

    #[test]
    fn syndrome_marginals_match_partition_weights() {
        // The induced syndrome distribution equals P(s) = Σ_μ |Z_μ|²
        // normalized, by the constant class multiplicity.
        let layout = build_layout(2, 2).unwrap();
        let n = layout.num_qubits();
        let rot = RotationSpec::uniform(n, 0.2 * PI, 0.32 * PI, 0.26 * PI);
        let table = exact_eta_distribution(&layout, &rot).unwrap();
        let by_syndrome = syndrome_distribution(&layout, &table);
        // Compare each syndrome's mass against the four-amplitude weight
        // of its canonical correction.
        let mut total_check = 0.0;
        for (s, mass) in &by_syndrome {
            let eta = crate::lattice::canonical_correction(&layout, s);
            let zs = crate::oracle::statevector_amplitudes(&layout, &rot, &eta).unwrap();
            let p: f64 = zs.iter().map(|z| z.norm_sqr()).sum();
            assert!((mass - p).abs() < 1e-9, "syndrome mass {mass} vs P(s) {p}");
            total_check += p;
        }
        assert!((total_check - 1.0).abs() < 1e-9);
    }
}
