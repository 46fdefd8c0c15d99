//! Independent ground-truth computations at small scale.
//!
//! Two routes to the class amplitudes exist besides the transfer-matrix
//! circuit:
//!
//! - [`brute_force_partition`] sums the complex Boltzmann weights
//!   `exp(-H_{μ,s})` over every spin configuration of the random-bond
//!   Ising model, using the coupling form of the weights (a genuinely
//!   different algebraic path from the circuit's entry-wise products);
//! - [`statevector_z`] evaluates the defining normalized trace
//!   `½ Σ_k ⟨k_L| R(η_μ) U |k_L⟩` on the full `2^N` Hilbert space.
//!
//! Both must agree with each other and with the MPS circuit. The trace
//! normalization used here makes `Σ_{s,μ} |Z_{μ,s}|² = 1`, so the
//! circuit/statevector calibration constant is pinned to exactly one;
//! `calibration_constant` records that.

use num_complex::Complex64;
use thiserror::Error;

use crate::couplings::{
    absorb_trace_sign, complex_couplings, CouplingError, RotationSpec,
};
use crate::lattice::{syndrome_of, CodeLayout, EtaConfig, LogicalClass, Syndrome};

/// Circuit and statevector amplitudes agree with no residual scale; fixed
/// once by the d = 2 calibration test and asserted everywhere else.
pub const CALIBRATION_CONSTANT: f64 = 1.0;

/// Enumeration guard: at most this many Ising spins in the brute-force sum.
pub const MAX_BRUTE_FORCE_SPINS: usize = 26;

/// Statevector guard: at most this many physical qubits.
pub const MAX_STATEVECTOR_QUBITS: usize = 13;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} Ising spins exceed the enumeration guard of {MAX_BRUTE_FORCE_SPINS}")]
    TooManySpins(usize),
    #[error("{0} qubits exceed the statevector guard of {MAX_STATEVECTOR_QUBITS}")]
    TooManyQubits(usize),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// A pure encoded state on the Bloch sphere,
/// `|ψ⟩ = cos(θ/2)|0̄⟩ + sin(θ/2) e^{iφ}|1̄⟩`.
#[derive(Clone, Copy, Debug)]
pub struct BlochPoint {
    pub theta: f64,
    pub phi: f64,
}

/// Sum `exp(-H_{μ,s})` over all vertex and plaquette spin configurations.
/// `eta` fixes the reference string; the stored logical representative of
/// `class` is composed on top of it. Trace signs are absorbed into the
/// couplings before the sum, and spins beyond a boundary are pinned to +1.
pub fn brute_force_partition(
    layout: &CodeLayout,
    rot: &RotationSpec,
    eta: &EtaConfig,
    class: LogicalClass,
) -> Result<Complex64, OracleError> {
    let nv = layout.vertices().len();
    let np = layout.plaquettes().len();
    if nv + np > MAX_BRUTE_FORCE_SPINS {
        return Err(OracleError::TooManySpins(nv + np));
    }
    let eta_mu = layout.compose_logical(eta, class);
    let j = absorb_trace_sign(&complex_couplings(rot)?, &eta_mu);

    // Per-qubit effective couplings with the eta signs folded in, so the
    // inner loop only needs the two spin bilinears.
    struct Term {
        j0: Complex64,
        jx: Complex64,
        jy: Complex64,
        jz: Complex64,
        v: [Option<usize>; 2],
        p: [Option<usize>; 2],
    }
    let terms: Vec<Term> = (0..layout.num_qubits())
        .map(|q| {
            let [j0, jx, jy, jz] = j.j[q];
            let ex = eta_mu.x[q] as f64;
            let ez = eta_mu.z[q] as f64;
            Term {
                j0,
                jx: jx * ex,
                jy: jy * ex * ez,
                jz: jz * ez,
                v: layout.qubit(q).vertices,
                p: layout.qubit(q).plaquettes,
            }
        })
        .collect();

    let spin = |config: usize, idx: usize| -> f64 {
        if config >> idx & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let mut total = Complex64::new(0.0, 0.0);
    for config in 0..1usize << (nv + np) {
        let mut h = Complex64::new(0.0, 0.0);
        for t in &terms {
            let sv: f64 = t.v.iter().map(|o| o.map_or(1.0, |v| spin(config, v))).product();
            let sp: f64 = t
                .p
                .iter()
                .map(|o| o.map_or(1.0, |p| spin(config, nv + p)))
                .product();
            h += t.j0 + t.jx * sv + t.jz * sp + t.jy * (sv * sp);
        }
        total += h.exp();
    }
    // The spin sum is the amplitude of the composed string R(η ⊕ μ);
    // report it as the coefficient of the fixed logical Ō^μ, so that all
    // four amplitudes share the phase convention of the Bloch identities.
    Ok(total / layout.logical_phase(eta, class))
}

// ---------------------------------------------------------------------------
// Statevector machinery. Basis index bit `j` is qubit `j`; bit value 0 is
// the `Z = +1` state. Operators act on basis vectors directly, never as
// dense 2^N x 2^N matrices.
// ---------------------------------------------------------------------------

fn apply_single_qubit(state: &mut [Complex64], qubit: usize, m: &[[Complex64; 2]; 2]) {
    let stride = 1usize << qubit;
    let n = state.len();
    let mut base = 0;
    while base < n {
        for low in base..base + stride {
            let i0 = low;
            let i1 = low + stride;
            let a = state[i0];
            let b = state[i1];
            state[i0] = m[0][0] * a + m[0][1] * b;
            state[i1] = m[1][0] * a + m[1][1] * b;
        }
        base += 2 * stride;
    }
}

fn apply_x_string(state: &mut [Complex64], mask: usize) {
    if mask == 0 {
        return;
    }
    for idx in 0..state.len() {
        let target = idx ^ mask;
        if target > idx {
            state.swap(idx, target);
        }
    }
}

fn apply_z_string(state: &mut [Complex64], mask: usize) {
    if mask == 0 {
        return;
    }
    for (idx, amp) in state.iter_mut().enumerate() {
        if (idx & mask).count_ones() % 2 == 1 {
            *amp = -*amp;
        }
    }
}

fn project_plus_eigenspace_x(state: &mut [Complex64], mask: usize, sign: f64) {
    // state <- (state + sign * X_mask state) / 2
    let mut flipped: Vec<Complex64> = state.to_vec();
    apply_x_string(&mut flipped, mask);
    for (s, f) in state.iter_mut().zip(flipped) {
        *s = 0.5 * (*s + sign * f);
    }
}

fn qubit_mask(qubits: &[usize]) -> usize {
    qubits.iter().fold(0usize, |m, &q| m | (1 << q))
}

fn norm(state: &[Complex64]) -> f64 {
    state.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// The full-lattice rotation `U = ∏_j U_j` applied in place.
fn apply_rotation(state: &mut [Complex64], rot: &RotationSpec) {
    for j in 0..rot.len() {
        let (sa, ca) = rot.alpha[j].sin_cos();
        let [n1, n2, n3] = rot.axis(j);
        let m = [
            [
                Complex64::new(ca, sa * n3),
                Complex64::new(sa * n2, sa * n1),
            ],
            [
                Complex64::new(-sa * n2, sa * n1),
                Complex64::new(ca, -sa * n3),
            ],
        ];
        apply_single_qubit(state, j, &m);
    }
}

/// The reference-string operator `R(η) = (∏_j Z_j^{(1-η^z)/2})(∏_j
/// X_j^{(1-η^x)/2})`, Z-part to the left of the X-part.
fn apply_reference_string(state: &mut [Complex64], eta: &EtaConfig) {
    let x_mask = qubit_mask(
        &(0..eta.len())
            .filter(|&j| eta.x[j] == -1)
            .collect::<Vec<_>>(),
    );
    let z_mask = qubit_mask(
        &(0..eta.len())
            .filter(|&j| eta.z[j] == -1)
            .collect::<Vec<_>>(),
    );
    apply_x_string(state, x_mask);
    apply_z_string(state, z_mask);
}

/// Orthonormal logical basis `(|0̄⟩, |1̄⟩)` with `Z̄|0̄⟩ = |0̄⟩` and
/// `|1̄⟩ = X̄|0̄⟩`.
pub fn logical_basis(layout: &CodeLayout) -> Result<[Vec<Complex64>; 2], OracleError> {
    let n = layout.num_qubits();
    if n > MAX_STATEVECTOR_QUBITS {
        return Err(OracleError::TooManyQubits(n));
    }
    let dim = 1usize << n;
    let mut zero = vec![Complex64::new(0.0, 0.0); dim];
    zero[0] = Complex64::new(1.0, 0.0);
    // |0...0> is already a +1 eigenstate of every plaquette and of Z̄;
    // project onto the vertex stabilizers' +1 eigenspace.
    for v in layout.vertices() {
        project_plus_eigenspace_x(&mut zero, qubit_mask(&v.qubits), 1.0);
    }
    let nrm = norm(&zero);
    zero.iter_mut().for_each(|a| *a /= nrm);
    let mut one = zero.clone();
    apply_x_string(&mut one, qubit_mask(layout.xbar_path()));
    Ok([zero, one])
}

/// Exact class amplitude `Z_{μ,s} = ½ Σ_k ⟨k_L| Ō^μ R(η) U |k_L⟩`, the
/// coefficient of the fixed Hermitian logical `Ō^μ` (with `Ȳ = i X̄ Z̄`)
/// in the projected error operator `D_s` built on the correction `R(η)`.
pub fn statevector_z(
    layout: &CodeLayout,
    rot: &RotationSpec,
    eta: &EtaConfig,
    class: LogicalClass,
) -> Result<Complex64, OracleError> {
    let basis = logical_basis(layout)?;
    let xbar = qubit_mask(layout.xbar_path());
    let zbar = qubit_mask(layout.zbar_path());
    let mut z = Complex64::new(0.0, 0.0);
    for k in &basis {
        let mut evolved = k.clone();
        apply_rotation(&mut evolved, rot);
        apply_reference_string(&mut evolved, eta);
        match class {
            LogicalClass::I => {}
            LogicalClass::X => apply_x_string(&mut evolved, xbar),
            LogicalClass::Z => apply_z_string(&mut evolved, zbar),
            LogicalClass::Y => {
                apply_z_string(&mut evolved, zbar);
                apply_x_string(&mut evolved, xbar);
                evolved
                    .iter_mut()
                    .for_each(|a| *a *= Complex64::new(0.0, 1.0));
            }
        }
        z += inner(k, &evolved);
    }
    Ok(0.5 * z)
}

/// All four class amplitudes for one reference string.
pub fn statevector_amplitudes(
    layout: &CodeLayout,
    rot: &RotationSpec,
    eta: &EtaConfig,
) -> Result<[Complex64; 4], OracleError> {
    Ok([
        statevector_z(layout, rot, eta, LogicalClass::I)?,
        statevector_z(layout, rot, eta, LogicalClass::X)?,
        statevector_z(layout, rot, eta, LogicalClass::Y)?,
        statevector_z(layout, rot, eta, LogicalClass::Z)?,
    ])
}

/// The conditional syndrome probability `P(s|ρ)` in terms of the four
/// amplitudes and the encoded state's Bloch angles. Its uniform Bloch
/// average is `Σ_μ |Z_μ|²`.
pub fn conditional_syndrome_probability(zs: &[Complex64; 4], b: &BlochPoint) -> f64 {
    let (st, ct) = b.theta.sin_cos();
    let (sp, cp) = b.phi.sin_cos();
    let total: f64 = zs.iter().map(|z| z.norm_sqr()).sum();
    let p = 2.0 * ct * ((zs[0].conj() * zs[3]).re + (zs[2].conj() * zs[1]).im)
        + 2.0 * st
            * (cp * ((zs[0].conj() * zs[1]).re + (zs[3].conj() * zs[2]).im)
                + sp * ((zs[0].conj() * zs[2]).re + (zs[1].conj() * zs[3]).im))
        + total;
    debug_assert!(p > -1e-9, "P(s|rho) = {p} < 0 signals a convention bug");
    p
}

/// The encoded state at a Bloch point, as a full statevector.
pub fn bloch_state(layout: &CodeLayout, b: &BlochPoint) -> Result<Vec<Complex64>, OracleError> {
    let [zero, one] = logical_basis(layout)?;
    let c0 = Complex64::new((b.theta / 2.0).cos(), 0.0);
    let c1 = Complex64::from_polar((b.theta / 2.0).sin(), b.phi);
    Ok(zero
        .iter()
        .zip(&one)
        .map(|(a, b)| c0 * a + c1 * b)
        .collect())
}

/// Direct projective evaluation of `⟨ψ| U† Π_s U |ψ⟩` for one syndrome.
pub fn projective_syndrome_probability(
    layout: &CodeLayout,
    rot: &RotationSpec,
    b: &BlochPoint,
    s: &Syndrome,
) -> Result<f64, OracleError> {
    let mut state = bloch_state(layout, b)?;
    apply_rotation(&mut state, rot);
    // Vertex (X-type) projectors with the requested signs.
    for (v, stab) in layout.vertices().iter().enumerate() {
        let sign = if s.vertices[v] { -1.0 } else { 1.0 };
        project_plus_eigenspace_x(&mut state, qubit_mask(&stab.qubits), sign);
    }
    // Plaquette (Z-type) projectors are diagonal.
    for (p, stab) in layout.plaquettes().iter().enumerate() {
        let mask = qubit_mask(&stab.qubits);
        let want_odd = s.plaquettes[p];
        for (idx, amp) in state.iter_mut().enumerate() {
            let odd = (idx & mask).count_ones() % 2 == 1;
            if odd != want_odd {
                *amp = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(norm(&state).powi(2))
}

/// The four squared overlaps `|⟨ψ| Ō^μ D_s |ψ⟩|²` at a Bloch point, used
/// for the fidelity-split identity (they sum to `2 P(s|ρ)`).
pub fn fidelity_numerators(
    layout: &CodeLayout,
    rot: &RotationSpec,
    eta: &EtaConfig,
    b: &BlochPoint,
) -> Result<[f64; 4], OracleError> {
    let psi = bloch_state(layout, b)?;
    let zs = statevector_amplitudes(layout, rot, eta)?;
    // D_s = Σ_μ Z_μ Ō^μ on the code space; ⟨ψ|Ō^μ D_s|ψ⟩ follows from the
    // logical Bloch algebra without another 2^N pass.
    let [zero, one] = logical_basis(layout)?;
    let a0 = inner(&zero, &psi);
    let a1 = inner(&one, &psi);
    // Logical operators in the (|0̄>,|1̄>) basis: X̄ swaps, Z̄ = diag(1,-1),
    // Ȳ = i X̄ Z̄ is the standard Pauli Y.
    let i = Complex64::new(0.0, 1.0);
    let apply_logical = move |mu: usize, v: [Complex64; 2]| -> [Complex64; 2] {
        match mu {
            0 => v,
            1 => [v[1], v[0]],
            2 => [-i * v[1], i * v[0]],
            3 => [v[0], -v[1]],
            _ => unreachable!(),
        }
    };
    let d_psi = {
        let mut acc = [Complex64::new(0.0, 0.0); 2];
        for mu in 0..4 {
            let r = apply_logical(mu, [a0, a1]);
            acc[0] += zs[mu] * r[0];
            acc[1] += zs[mu] * r[1];
        }
        acc
    };
    let mut out = [0.0; 4];
    for mu in 0..4 {
        let od = apply_logical(mu, d_psi);
        let amp = a0.conj() * od[0] + a1.conj() * od[1];
        out[mu] = amp.norm_sqr();
    }
    Ok(out)
}
