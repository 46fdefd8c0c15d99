//! The non-unitary transfer-matrix circuit and the four class amplitudes.
//!
//! Every physical qubit becomes one gate on the `2M-1`-site chain. Qubits
//! on horizontal bonds of the direct lattice act on three sites centred on
//! an even (vertex) site and are diagonal on the odd neighbours; vertical
//! bonds act centred on an odd (dual) site and are diagonal on the even
//! neighbours. At the rough top and bottom edges the vertical gates lose
//! one leg and carry a single-site `σ^z` field instead.
//!
//! Gate entries are built entry-wise as products of the four per-qubit
//! Pauli coefficients and `±1` trace-sign factors; the closed-form
//! couplings of the transfer-matrix representation serve as a cross-check
//! in the tests, never as the construction path, so no complex-logarithm
//! branch can leak into the evaluation.
//!
//! Class amplitudes for one sampled string come from two evolutions: the
//! string itself (giving `Z_I`, and `Z_Z` by applying `Q̂_odd = ∏ σ^x` on
//! odd sites before the final overlap, an exact identity for the stored
//! `Z̄` representative) and a rerun with `η^x` flipped along the stored
//! `X̄` path (giving `Z_X`, then `Z_Y` via `Q̂_odd` again).

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::amplitude::AmplitudeLog;
use crate::couplings::{
    pauli_coefficients, slot_from_signs, CouplingError, PauliCoefficients, RotationSpec,
    TwirlCouplings, ValidationMode,
};
use crate::lattice::{CodeLayout, EtaConfig, LogicalClass, Orientation};
use crate::mps::{
    apply_gate, half_chain_entropy, overlap, ChainState, MpsError, TruncationPolicy,
};

pub use crate::mps::ProductState as BoundaryState;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Mps(#[from] MpsError),
}

/// One dense transfer-matrix gate.
#[derive(Clone, Debug)]
pub struct GateSpec {
    pub qubit: usize,
    pub eta: (i8, i8),
    /// First chain site spanned, 0-based.
    pub first_site: usize,
    /// Number of spanned sites (3 in the bulk, 2 at the rough edges).
    pub span: usize,
    pub matrix: Array2<Complex64>,
}

fn spin(p: usize) -> i8 {
    1 - 2 * (p as i8)
}

/// Per-qubit weight table: the four slot values with eta signs and the
/// trace sign folded in, as a function of the vertex bilinear `a` and the
/// plaquette bilinear `b`.
#[derive(Clone, Copy)]
struct WeightTable<'a> {
    w: &'a [Complex64; 4],
    eta_x: i8,
    eta_z: i8,
    trace_signed: bool,
}

impl WeightTable<'_> {
    fn value(&self, a: i8, b: i8) -> Complex64 {
        let slot = slot_from_signs(self.eta_x * a, self.eta_z * b);
        let v = self.w[slot];
        if self.trace_signed && a == -1 && self.eta_z == -1 {
            -v
        } else {
            v
        }
    }
}

fn gate_from_table(layout: &CodeLayout, j: usize, table: WeightTable<'_>) -> GateSpec {
    let q = layout.qubit(j);
    let rows = 2 * layout.m_len() - 1;
    let r = q.row;
    let (first_site, span) = match q.orientation {
        Orientation::Horizontal => (r - 1, 3),
        Orientation::Vertical => {
            if r == 0 {
                (0, 2)
            } else if r == rows - 1 {
                (r - 1, 2)
            } else {
                (r - 1, 3)
            }
        }
    };
    let dim = 1usize << span;
    let mut matrix = Array2::zeros((dim, dim));
    match (q.orientation, span) {
        (Orientation::Horizontal, 3) => {
            // Diagonal in the odd neighbours, σ^x-active on the even centre:
            // a = time-like vertex bilinear, b = spatial plaquette bilinear.
            for p1 in 0..2 {
                for p3 in 0..2 {
                    let b = spin(p1) * spin(p3);
                    for p2_out in 0..2 {
                        for p2_in in 0..2 {
                            let a = spin(p2_out) * spin(p2_in);
                            let out = p1 * 4 + p2_out * 2 + p3;
                            let inp = p1 * 4 + p2_in * 2 + p3;
                            matrix[[out, inp]] = table.value(a, b);
                        }
                    }
                }
            }
        }
        (Orientation::Vertical, 3) => {
            // Diagonal in the even neighbours, σ^x-active on the odd centre.
            for p1 in 0..2 {
                for p3 in 0..2 {
                    let a = spin(p1) * spin(p3);
                    for p2_out in 0..2 {
                        for p2_in in 0..2 {
                            let b = spin(p2_out) * spin(p2_in);
                            let out = p1 * 4 + p2_out * 2 + p3;
                            let inp = p1 * 4 + p2_in * 2 + p3;
                            matrix[[out, inp]] = table.value(a, b);
                        }
                    }
                }
            }
        }
        (Orientation::Vertical, 2) if r == 0 => {
            // Sites (1, 2): active odd site first, σ^z field on site 2. The
            // missing vertex spin beyond the rough edge is pinned to +1.
            for p2 in 0..2 {
                let a = spin(p2);
                for p1_out in 0..2 {
                    for p1_in in 0..2 {
                        let b = spin(p1_out) * spin(p1_in);
                        matrix[[p1_out * 2 + p2, p1_in * 2 + p2]] = table.value(a, b);
                    }
                }
            }
        }
        (Orientation::Vertical, 2) => {
            // Sites (2M-2, 2M-1): σ^z field on the even site, active odd
            // site last.
            for p1 in 0..2 {
                let a = spin(p1);
                for p2_out in 0..2 {
                    for p2_in in 0..2 {
                        let b = spin(p2_out) * spin(p2_in);
                        matrix[[p1 * 2 + p2_out, p1 * 2 + p2_in]] = table.value(a, b);
                    }
                }
            }
        }
        _ => unreachable!("gate spans are 2 or 3 sites"),
    }
    GateSpec {
        qubit: j,
        eta: (table.eta_x, table.eta_z),
        first_site,
        span,
        matrix,
    }
}

/// Build the coherent gate for qubit `j` with reference signs `eta_j`.
pub fn build_gate(
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    j: usize,
    eta_j: (i8, i8),
) -> GateSpec {
    assert!(j < layout.num_qubits(), "qubit index out of range");
    gate_from_table(
        layout,
        j,
        WeightTable {
            w: coeffs.at(j),
            eta_x: eta_j.0,
            eta_z: eta_j.1,
            trace_signed: true,
        },
    )
}

/// Build the incoherent (twirled) gate for qubit `j`: same geometry, real
/// probability weights, no trace sign.
pub fn build_twirl_gate(
    layout: &CodeLayout,
    couplings: &TwirlCouplings,
    j: usize,
    eta_j: (i8, i8),
) -> GateSpec {
    assert!(j < layout.num_qubits(), "qubit index out of range");
    let w = couplings.weights(j);
    let wc = [
        Complex64::new(w[0], 0.0),
        Complex64::new(w[1], 0.0),
        Complex64::new(w[2], 0.0),
        Complex64::new(w[3], 0.0),
    ];
    gate_from_table(
        layout,
        j,
        WeightTable {
            w: &wc,
            eta_x: eta_j.0,
            eta_z: eta_j.1,
            trace_signed: false,
        },
    )
}

/// The boundary state `√2^{M-1} |1⟩₁ ⊗ |+⟩₂ ⊗ ... ⊗ |1⟩_{2M-1}`: odd
/// sites pin the missing dual spins beyond the smooth edges to +1, even
/// sites sum the first vertex column freely.
pub fn boundary_state(m: usize) -> BoundaryState {
    assert!(m >= 2, "M must be at least 2");
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let plus = Complex64::new(0.5f64.sqrt(), 0.0);
    let sites = (0..2 * m - 1)
        .map(|idx| {
            if idx % 2 == 0 {
                [one, zero]
            } else {
                [plus, plus]
            }
        })
        .collect();
    BoundaryState {
        sites,
        log_scale: 0.5 * (m as f64 - 1.0) * std::f64::consts::LN_2,
    }
}

/// Apply `Q̂_odd = ∏ σ^x` over the odd chain sites (0-based even indices).
pub fn apply_q_odd(state: &mut ChainState) {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let sx = [[zero, one], [one, zero]];
    for site in (0..state.n_sites()).step_by(2) {
        state.apply_unitary_single_site(site, &sx);
    }
}

/// Evolve the boundary state through the full circuit for one reference
/// string. Gates are applied in circuit order (`V(1) H(1) ... V(L)`).
pub fn evolve(
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<ChainState, CircuitError> {
    let mut state = boundary_state(layout.m_len()).to_mps();
    for j in layout.circuit_order() {
        let gate = build_gate(layout, coeffs, j, (eta.x[j], eta.z[j]));
        apply_gate(&mut state, gate.first_site, gate.span, &gate.matrix, policy)?;
    }
    Ok(state)
}

/// The four class amplitudes plus entanglement diagnostics for one
/// reference string.
#[derive(Clone, Debug)]
pub struct PartitionSet {
    /// `(Z_I, Z_X, Z_Y, Z_Z)` in the fixed-logical phase convention.
    pub z: [AmplitudeLog; 4],
    /// Half-chain entanglement entropy of the fully evolved state (nats).
    pub entropy_half: f64,
    /// Total discarded weight across both evolutions.
    pub discarded_weight: f64,
}

impl PartitionSet {
    /// `log Σ_μ |Z_μ|²`, i.e. the log of the unnormalized `P(s)`.
    pub fn log_p_s(&self) -> f64 {
        let max = self
            .z
            .iter()
            .map(|z| z.log_weight2())
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = self.z.iter().map(|z| (z.log_weight2() - max).exp()).sum();
        max + sum.ln()
    }
}

/// Complete a [`PartitionSet`] from an already evolved state (the sampler
/// hands over its committed evolution here). Consumes the state; the
/// `X̄`-flipped companion evolution is run internally.
pub fn finish_partitions(
    mut state_a: ChainState,
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<PartitionSet, CircuitError> {
    let reference = boundary_state(layout.m_len());
    let cut = layout.m_len();
    let entropy_half = half_chain_entropy(&mut state_a, cut)?;
    let discarded_a = state_a.discarded_weight();

    let z_i_raw = overlap(&state_a, &reference);
    apply_q_odd(&mut state_a);
    let z_z_raw = overlap(&state_a, &reference);

    let mut eta_x = eta.clone();
    eta_x.flip_x(layout.xbar_path());
    // A vanished companion state is a legitimate exactly-zero amplitude
    // for degenerate (permissive-mode) channels, not a failure.
    let (z_x_raw, z_y_raw, discarded_b) = match evolve(layout, coeffs, &eta_x, policy) {
        Ok(mut state_b) => {
            let discarded = state_b.discarded_weight();
            let z_x = overlap(&state_b, &reference);
            apply_q_odd(&mut state_b);
            let z_y = overlap(&state_b, &reference);
            (z_x, z_y, discarded)
        }
        Err(CircuitError::Mps(MpsError::ZeroState)) => {
            (AmplitudeLog::ZERO, AmplitudeLog::ZERO, 0.0)
        }
        Err(e) => return Err(e),
    };

    // The evolutions compute amplitudes of composed strings; divide out
    // the composition phase so the four values are coefficients of the
    // fixed logicals (1, X̄, Ȳ = iX̄Z̄, Z̄).
    let corrected = |raw: AmplitudeLog, class: LogicalClass| -> AmplitudeLog {
        if raw.is_zero() {
            return raw;
        }
        let phase = layout.logical_phase(eta, class);
        AmplitudeLog::new(raw.log_mag, crate::amplitude::wrap_phase(raw.phase - phase.arg()))
    };
    Ok(PartitionSet {
        z: [
            corrected(z_i_raw, LogicalClass::I),
            corrected(z_x_raw, LogicalClass::X),
            corrected(z_y_raw, LogicalClass::Y),
            corrected(z_z_raw, LogicalClass::Z),
        ],
        entropy_half,
        discarded_weight: discarded_a + discarded_b,
    })
}

/// Evaluate all four `Z_{μ,s}` for a reference string from scratch.
pub fn evaluate_partitions_with(
    layout: &CodeLayout,
    coeffs: &PauliCoefficients,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<PartitionSet, CircuitError> {
    let state_a = evolve(layout, coeffs, eta, policy)?;
    finish_partitions(state_a, layout, coeffs, eta, policy)
}

/// Convenience wrapper deriving the coefficients from rotation parameters.
pub fn evaluate_partitions(
    layout: &CodeLayout,
    rot: &RotationSpec,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<PartitionSet, CircuitError> {
    let coeffs = pauli_coefficients(rot, ValidationMode::Permissive)?;
    evaluate_partitions_with(layout, &coeffs, eta, policy)
}

/// Twirled analogue of [`PartitionSet`]: real, non-negative partition
/// values stored in log space.
#[derive(Clone, Debug)]
pub struct TwirlPartitionSet {
    /// `log Z^{(inc)}_μ` for `μ = I, X, Y, Z`.
    pub log_z: [f64; 4],
    pub entropy_half: f64,
    pub discarded_weight: f64,
    /// Largest relative imaginary residue seen in the four overlaps.
    pub imag_residue: f64,
}

fn twirl_evolve(
    layout: &CodeLayout,
    couplings: &TwirlCouplings,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<ChainState, CircuitError> {
    let mut state = boundary_state(layout.m_len()).to_mps();
    for j in layout.circuit_order() {
        let gate = build_twirl_gate(layout, couplings, j, (eta.x[j], eta.z[j]));
        apply_gate(&mut state, gate.first_site, gate.span, &gate.matrix, policy)?;
    }
    Ok(state)
}

/// Evaluate the four incoherent partition functions `Z^{(inc)}_{μ,s}` by
/// the same transfer-matrix contraction, with gates built from the real
/// twirl couplings.
pub fn evaluate_twirl_partitions(
    layout: &CodeLayout,
    couplings: &TwirlCouplings,
    eta: &EtaConfig,
    policy: &TruncationPolicy,
) -> Result<TwirlPartitionSet, CircuitError> {
    let reference = boundary_state(layout.m_len());
    let cut = layout.m_len();

    let mut state_a = twirl_evolve(layout, couplings, eta, policy)?;
    let entropy_half = half_chain_entropy(&mut state_a, cut)?;
    let discarded_a = state_a.discarded_weight();
    let z_i = overlap(&state_a, &reference);
    apply_q_odd(&mut state_a);
    let z_z = overlap(&state_a, &reference);

    let mut eta_x = eta.clone();
    eta_x.flip_x(layout.xbar_path());
    let mut state_b = twirl_evolve(layout, couplings, &eta_x, policy)?;
    let discarded_b = state_b.discarded_weight();
    let z_x = overlap(&state_b, &reference);
    apply_q_odd(&mut state_b);
    let z_y = overlap(&state_b, &reference);

    let mut imag_residue = 0.0f64;
    let mut log_z = [f64::NEG_INFINITY; 4];
    for (slot, amp) in [z_i, z_x, z_y, z_z].into_iter().enumerate() {
        if !amp.is_zero() {
            // Positive reals have phase ~0; anything else is a residue.
            let residue = amp.phase.sin().abs() + amp.phase.cos().min(0.0).abs();
            imag_residue = imag_residue.max(residue);
            log_z[slot] = amp.log_mag;
        }
    }
    Ok(TwirlPartitionSet {
        log_z,
        entropy_half,
        discarded_weight: discarded_a + discarded_b,
        imag_residue,
    })
}
