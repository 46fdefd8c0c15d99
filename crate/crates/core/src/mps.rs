//! Matrix-product-state engine for non-unitary gate application on an open
//! chain.
//!
//! States are kept in mixed-canonical form: every tensor left of the
//! orthogonality center is a left isometry, everything right of it a right
//! isometry. Gates are dense operators on two or three consecutive sites;
//! application contracts the spanned tensors into one block, multiplies
//! the gate in, and re-splits with sequential SVDs under a
//! [`TruncationPolicy`]. Each application renormalizes the state and moves
//! the norm into an accumulated `log_norm`, keeping tensor magnitudes
//! O(1) for stable decompositions while partition values grow or shrink
//! exponentially.
//!
//! The [`dense`] submodule holds an exact statevector backend for small
//! chains, used to cross-validate every operation here.

pub mod dense;

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use thiserror::Error;

use crate::amplitude::AmplitudeLog;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("SVD failed: {0}")]
    SvdFailed(String),
    #[error("state norm vanished during gate application")]
    ZeroState,
    #[error("non-finite entries entering decomposition")]
    NonFinite,
}

/// Bond-dimension cap and relative singular-value cutoff.
///
/// A singular value `s_k` is discarded when its relative weight
/// `s_k² / Σ s²` falls below `cutoff²`; the state is renormalized after
/// every truncation and the discarded weight is accumulated on the state.
#[derive(Clone, Copy, Debug)]
pub struct TruncationPolicy {
    pub chi_max: usize,
    pub cutoff: f64,
}

impl TruncationPolicy {
    pub fn new(chi_max: usize, cutoff: f64) -> Self {
        assert!(chi_max >= 2, "chi_max must be at least 2");
        assert!(cutoff >= 0.0, "cutoff must be non-negative");
        Self { chi_max, cutoff }
    }

    /// No truncation at all; exact up to float roundoff.
    pub fn exact() -> Self {
        Self {
            chi_max: usize::MAX,
            cutoff: 0.0,
        }
    }
}

impl Default for TruncationPolicy {
    /// Production default for sweep runs.
    fn default() -> Self {
        Self {
            chi_max: 64,
            cutoff: 1e-10,
        }
    }
}

/// Projector factors for last-layer sampling marginals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjFactor {
    Identity,
    /// `(1 + σ^z)/2`
    ZPlus,
    /// `(1 + σ^x)/2`
    XPlus,
}

impl ProjFactor {
    fn matrix(self) -> [[Complex64; 2]; 2] {
        let o = Complex64::new(1.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let h = Complex64::new(0.5, 0.0);
        match self {
            ProjFactor::Identity => [[o, z], [z, o]],
            ProjFactor::ZPlus => [[o, z], [z, z]],
            ProjFactor::XPlus => [[h, h], [h, h]],
        }
    }
}

/// A product state with an overall `exp(log_scale)` prefactor, used both
/// as circuit boundary state and as overlap reference.
#[derive(Clone, Debug)]
pub struct ProductState {
    pub sites: Vec<[Complex64; 2]>,
    pub log_scale: f64,
}

/// Pin the linear-algebra backend to sequential execution once per
/// process: parallelism lives at the sample level, and the per-gate
/// decompositions are far below the size where threaded kernels win.
pub fn configure_linalg_threading() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

impl ProductState {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn to_mps(&self) -> ChainState {
        configure_linalg_threading();
        let tensors = self
            .sites
            .iter()
            .map(|v| {
                let mut t = Array3::zeros((1, 2, 1));
                t[[0, 0, 0]] = v[0];
                t[[0, 1, 0]] = v[1];
                t
            })
            .collect();
        ChainState {
            tensors,
            log_norm: self.log_scale,
            phase: 0.0,
            center: 0,
            discarded_weight: 0.0,
        }
    }
}

/// Matrix product state on an open chain of physical dimension 2.
#[derive(Clone, Debug)]
pub struct ChainState {
    /// Rank-3 site tensors `(left bond, physical, right bond)`.
    tensors: Vec<Array3<Complex64>>,
    /// Accumulated log of the positive scale pulled out of the tensors.
    log_norm: f64,
    /// Accumulated phase (kept for completeness; scale extraction is real).
    phase: f64,
    center: usize,
    discarded_weight: f64,
}

impl ChainState {
    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.tensors.iter().map(|t| t.dim().0).collect();
        dims.push(self.tensors.last().map_or(1, |t| t.dim().2));
        dims
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Squared norm of the normalized tensors (excludes `log_norm`); with
    /// the canonical invariant this is the Frobenius norm of the center.
    pub fn squared_norm_bare(&self) -> f64 {
        self.tensors[self.center]
            .iter()
            .map(|a| a.norm_sqr())
            .sum()
    }

    /// `ln ||state||²` including the accumulated scale.
    pub fn log_squared_norm(&self) -> f64 {
        2.0 * self.log_norm + self.squared_norm_bare().ln()
    }

    fn move_center_right(&mut self) -> Result<(), MpsError> {
        let c = self.center;
        let (l, p, r) = self.tensors[c].dim();
        let mat = reshape_lp_r(&self.tensors[c], l * p, r);
        let (u, s, vh) = svd_thin(&mat)?;
        let rank = s.len();
        self.tensors[c] = reshape_to_lpr(&u, l, p, rank);
        // carry = S · V^H into the next tensor
        let mut carry = Array2::<Complex64>::zeros((rank, r));
        for i in 0..rank {
            for j in 0..r {
                carry[[i, j]] = Complex64::new(s[i], 0.0) * vh[[i, j]];
            }
        }
        let next = &self.tensors[c + 1];
        let (nl, np, nr) = next.dim();
        debug_assert_eq!(nl, r);
        let next_mat = reshape_lp_r(next, nl, np * nr); // (l, p*r)
        let merged = matmul(&carry, &next_mat);
        self.tensors[c + 1] = reshape_to_lpr(&merged, rank, np, nr);
        self.center = c + 1;
        Ok(())
    }

    fn move_center_left(&mut self) -> Result<(), MpsError> {
        let c = self.center;
        let (l, p, r) = self.tensors[c].dim();
        let mat = reshape_lp_r(&self.tensors[c], l, p * r);
        let (u, s, vh) = svd_thin(&mat)?;
        let rank = s.len();
        self.tensors[c] = reshape_to_lpr(&vh, rank, p, r);
        let mut carry = Array2::<Complex64>::zeros((l, rank));
        for i in 0..l {
            for j in 0..rank {
                carry[[i, j]] = u[[i, j]] * Complex64::new(s[j], 0.0);
            }
        }
        let prev = &self.tensors[c - 1];
        let (pl, pp, pr) = prev.dim();
        debug_assert_eq!(pr, l);
        let prev_mat = reshape_lp_r(prev, pl * pp, pr);
        let merged = matmul(&prev_mat, &carry);
        self.tensors[c - 1] = reshape_to_lpr(&merged, pl, pp, rank);
        self.center = c - 1;
        Ok(())
    }

    pub fn canonicalize_to(&mut self, pos: usize) -> Result<(), MpsError> {
        assert!(pos < self.n_sites());
        while self.center < pos {
            self.move_center_right()?;
        }
        while self.center > pos {
            self.move_center_left()?;
        }
        Ok(())
    }

    /// Apply a unitary single-site operator (preserves canonical form).
    pub fn apply_unitary_single_site(&mut self, site: usize, m: &[[Complex64; 2]; 2]) {
        let (l, _, r) = self.tensors[site].dim();
        let t = &self.tensors[site];
        let mut out = Array3::zeros((l, 2, r));
        for a in 0..l {
            for b in 0..r {
                for q in 0..2 {
                    out[[a, q, b]] = m[q][0] * t[[a, 0, b]] + m[q][1] * t[[a, 1, b]];
                }
            }
        }
        self.tensors[site] = out;
    }

    /// Materialize the full amplitude vector (test helper; exponential).
    pub fn to_dense(&self) -> Vec<Complex64> {
        let scale = Complex64::from_polar(self.log_norm.exp(), self.phase);
        let mut acc: Array2<Complex64> = Array2::ones((1, 1));
        for t in &self.tensors {
            let (l, p, r) = t.dim();
            let rows = acc.dim().0;
            debug_assert_eq!(acc.dim().1, l);
            let mut next = Array2::zeros((rows * p, r));
            for i in 0..rows {
                for q in 0..p {
                    for b in 0..r {
                        let mut s = Complex64::new(0.0, 0.0);
                        for a in 0..l {
                            s += acc[[i, a]] * t[[a, q, b]];
                        }
                        next[[i * p + q, b]] = s;
                    }
                }
            }
            acc = next;
        }
        acc.column(0).iter().map(|z| z * scale).collect()
    }
}

impl ChainState {
    /// Canonicalize the center into the span and contract the spanned
    /// tensors into one block `(l, 2^span, r)`. With the canonical
    /// invariant, the Frobenius norm of any operator applied to this
    /// block is the norm of the full state, which is what lets the
    /// sampler weigh gate candidates without re-splitting each one.
    pub fn prepare_block(
        &mut self,
        first: usize,
        span: usize,
    ) -> Result<Array3<Complex64>, MpsError> {
        assert!(span == 2 || span == 3, "gates span two or three sites");
        assert!(first + span <= self.n_sites(), "gate span out of range");
        let last = first + span - 1;
        if self.center < first {
            self.canonicalize_to(first)?;
        } else if self.center > last {
            self.canonicalize_to(last)?;
        }
        let mut block = self.tensors[first].clone();
        for site in first + 1..=last {
            let (l, p, r) = block.dim();
            let t = &self.tensors[site];
            let (tl, tp, tr) = t.dim();
            debug_assert_eq!(r, tl);
            let a = reshape_lp_r(&block, l * p, r);
            let b = reshape_lp_r(t, tl, tp * tr);
            let merged = matmul(&a, &b);
            block = reshape_to_lpr(&merged, l, p * tp, tr);
        }
        Ok(block)
    }

    /// Split a (gate-multiplied) block back into site tensors with
    /// truncation, renormalize, and leave the center on the right edge.
    pub fn commit_block(
        &mut self,
        first: usize,
        span: usize,
        block: Array3<Complex64>,
        policy: &TruncationPolicy,
    ) -> Result<(), MpsError> {
        let last = first + span - 1;
        let mut remainder = block;
        for site in first..last {
            let (cl, cp, cr) = remainder.dim();
            let tail = cp / 2;
            let mat = reshape_lp_r(&remainder, cl * 2, tail * cr);
            let (u, s, vh) = svd_thin(&mat)?;
            let (keep, dropped) = truncate_rank(&s, policy);
            if keep == 0 {
                return Err(MpsError::ZeroState);
            }
            self.discarded_weight += dropped;
            let total_kept: f64 = s[..keep].iter().map(|x| x * x).sum();
            let renorm = total_kept.sqrt();
            self.tensors[site] =
                reshape_to_lpr(&u.slice(ndarray::s![.., ..keep]).to_owned(), cl, 2, keep);
            // remainder <- S V^H with truncation and renormalization
            let mut sv = Array2::<Complex64>::zeros((keep, tail * cr));
            for i in 0..keep {
                let si = s[i] / renorm;
                for jj in 0..tail * cr {
                    sv[[i, jj]] = Complex64::new(si, 0.0) * vh[[i, jj]];
                }
            }
            self.log_norm += renorm.ln();
            if !self.log_norm.is_finite() {
                return Err(MpsError::ZeroState);
            }
            remainder = reshape_to_lpr(&sv, keep, tail, cr);
        }
        // Final site holds the remaining block; extract its norm.
        let nrm = remainder.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(if nrm == 0.0 {
                MpsError::ZeroState
            } else {
                MpsError::NonFinite
            });
        }
        remainder.mapv_inplace(|z| z / nrm);
        self.log_norm += nrm.ln();
        self.tensors[last] = remainder;
        self.center = last;
        Ok(())
    }
}

/// `theta'(l, q, r) = Σ_p G[q, p] theta(l, p, r)`, skipping zero gate
/// entries (the transfer gates hold at most `4·dim` nonzeros).
pub fn gate_times_block(gate: &Array2<Complex64>, block: &Array3<Complex64>) -> Array3<Complex64> {
    let (l, dim, r) = block.dim();
    debug_assert_eq!(gate.dim(), (dim, dim));
    let mut theta = Array3::<Complex64>::zeros((l, dim, r));
    for q in 0..dim {
        for p in 0..dim {
            let g = gate[[q, p]];
            if g == Complex64::new(0.0, 0.0) {
                continue;
            }
            for a in 0..l {
                for b in 0..r {
                    theta[[a, q, b]] += g * block[[a, p, b]];
                }
            }
        }
    }
    theta
}

/// Squared Frobenius norm of a block.
pub fn block_norm_sqr(block: &Array3<Complex64>) -> f64 {
    block.iter().map(|z| z.norm_sqr()).sum()
}

/// Apply a dense gate over `span` consecutive sites starting at `first`.
/// The state ends canonicalized with its center on the right edge of the
/// gate, renormalized, with the norm folded into `log_norm` and any
/// truncated weight added to the discarded-weight account.
pub fn apply_gate(
    state: &mut ChainState,
    first: usize,
    span: usize,
    gate: &Array2<Complex64>,
    policy: &TruncationPolicy,
) -> Result<(), MpsError> {
    let dim = 1usize << span;
    assert_eq!(gate.dim(), (dim, dim), "gate matrix shape mismatch");
    let block = state.prepare_block(first, span)?;
    let theta = gate_times_block(gate, &block);
    state.commit_block(first, span, theta, policy)
}

/// Overlap `⟨reference | state⟩` including accumulated log-norm, phase and
/// the reference scale.
pub fn overlap(state: &ChainState, reference: &ProductState) -> AmplitudeLog {
    assert_eq!(state.n_sites(), reference.len(), "length mismatch");
    let mut env: Array1<Complex64> = Array1::ones(1);
    for (t, refv) in state.tensors.iter().zip(&reference.sites) {
        let (l, _, r) = t.dim();
        let mut next: Array1<Complex64> = Array1::zeros(r);
        for b in 0..r {
            let mut s = Complex64::new(0.0, 0.0);
            for a in 0..l {
                for p in 0..2 {
                    s += env[a] * refv[p].conj() * t[[a, p, b]];
                }
            }
            next[b] = s;
        }
        env = next;
    }
    AmplitudeLog::from_complex_scaled(env[0], state.log_norm + reference.log_scale, state.phase)
}

/// Von Neumann entropy (nats) of the bipartition with `cut` sites on the
/// left. Canonicalizes to the cut internally.
pub fn half_chain_entropy(state: &mut ChainState, cut: usize) -> Result<f64, MpsError> {
    assert!(cut >= 1 && cut < state.n_sites(), "cut must be interior");
    state.canonicalize_to(cut - 1)?;
    let t = &state.tensors[cut - 1];
    let (l, p, r) = t.dim();
    let mat = reshape_lp_r(t, l * p, r);
    let (_, s, _) = svd_thin(&mat)?;
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total <= 0.0 {
        return Err(MpsError::ZeroState);
    }
    let mut entropy = 0.0;
    for x in &s {
        let w = x * x / total;
        if w > 1e-300 {
            entropy -= w * w.ln();
        }
    }
    Ok(entropy)
}

/// `⟨state| ∏ factors |state⟩` with the accumulated scale included.
/// Overflows for long chains; [`projector_expectation_log`] is the
/// log-safe variant used by the sampler.
pub fn expect_projector_product(state: &ChainState, factors: &[ProjFactor]) -> f64 {
    let bare = projector_expectation_bare(state, factors);
    bare * (2.0 * state.log_norm).exp()
}

/// `ln ⟨state| ∏ factors |state⟩`, or `-inf` for a vanishing sandwich.
pub fn projector_expectation_log(state: &ChainState, factors: &[ProjFactor]) -> f64 {
    let bare = projector_expectation_bare(state, factors);
    if bare <= 0.0 {
        f64::NEG_INFINITY
    } else {
        bare.ln() + 2.0 * state.log_norm
    }
}

fn projector_expectation_bare(state: &ChainState, factors: &[ProjFactor]) -> f64 {
    assert_eq!(state.n_sites(), factors.len(), "factor list length mismatch");
    // env[a', a] transfer contraction; each site costs two bond-cubed
    // matmuls plus the 2x2 factor application.
    let mut env: Array2<Complex64> = Array2::ones((1, 1));
    for (t, f) in state.tensors.iter().zip(factors) {
        let m = f.matrix();
        let (l, _, r) = t.dim();
        // tmp[a', (p, b)] = Σ_a env[a', a] A[a, p, b]
        let a_flat = reshape_lp_r(t, l, 2 * r);
        let tmp = matmul(&env, &a_flat);
        // tmp2[a', (p', b)] = Σ_p m[p'][p] tmp[a', (p, b)]
        let lp = tmp.dim().0;
        let mut tmp2 = Array2::<Complex64>::zeros((lp, 2 * r));
        for row in 0..lp {
            for b in 0..r {
                let x0 = tmp[[row, b]];
                let x1 = tmp[[row, r + b]];
                tmp2[[row, b]] = m[0][0] * x0 + m[0][1] * x1;
                tmp2[[row, r + b]] = m[1][0] * x0 + m[1][1] * x1;
            }
        }
        // env'[b', b] = Σ_{a', p'} conj(A[a', p', b']) tmp2[a', (p', b)]
        // Reindex both to (a'·p') rows.
        let a_rows = reshape_lp_r(t, l * 2, r); // rows (a', p'), cols b'
        let mut a_conj_t = Array2::<Complex64>::zeros((r, l * 2));
        for row in 0..l * 2 {
            for bp in 0..r {
                a_conj_t[[bp, row]] = a_rows[[row, bp]].conj();
            }
        }
        let mut tmp2_rows = Array2::<Complex64>::zeros((l * 2, r));
        for ap in 0..l {
            for p in 0..2 {
                for b in 0..r {
                    tmp2_rows[[ap * 2 + p, b]] = tmp2[[ap, p * r + b]];
                }
            }
        }
        env = matmul(&a_conj_t, &tmp2_rows);
    }
    let value = env[[0, 0]];
    debug_assert!(
        value.im.abs() <= 1e-9 * value.re.abs().max(1.0),
        "projector sandwich has imaginary residue {value}"
    );
    value.re
}

fn truncate_rank(s: &[f64], policy: &TruncationPolicy) -> (usize, f64) {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total <= 0.0 {
        return (0, 0.0);
    }
    // Numerical-rank floor: even at cutoff = 0, singular values at the
    // roundoff scale of the leading one carry no information.
    let floor = s[0] * 4.0 * f64::EPSILON;
    let thresh = (policy.cutoff * policy.cutoff * total).max(floor * floor);
    let mut keep = s
        .iter()
        .take(policy.chi_max.min(s.len()))
        .take_while(|&&x| x * x >= thresh)
        .count();
    // Never drop everything while weight remains.
    if keep == 0 && total > 0.0 {
        keep = 1;
    }
    let dropped: f64 = s[keep..].iter().map(|x| x * x).sum::<f64>() / total;
    (keep, dropped)
}

// ---------------------------------------------------------------------------
// faer-backed kernels. Tensors stay in ndarray form for index ergonomics;
// the O(n³) pieces run through faer.
// ---------------------------------------------------------------------------

fn to_faer(a: &Array2<Complex64>) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(a.dim().0, a.dim().1, |i, j| a[[i, j]])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub(crate) fn matmul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    debug_assert_eq!(a.dim().1, b.dim().0);
    let fa = to_faer(a);
    let fb = to_faer(b);
    let prod = fa * fb;
    from_faer(prod.as_ref())
}

/// Thin SVD `a = U · diag(s) · Vh` with singular values descending.
pub(crate) fn svd_thin(
    a: &Array2<Complex64>,
) -> Result<(Array2<Complex64>, Vec<f64>, Array2<Complex64>), MpsError> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(MpsError::NonFinite);
    }
    let fa = to_faer(a);
    let svd = fa
        .thin_svd()
        .map_err(|e| MpsError::SvdFailed(format!("{e:?}")))?;
    let u = from_faer(svd.U());
    let s: Vec<f64> = (0..svd.S().dim())
        .map(|i| svd.S().column_vector()[i].re)
        .collect();
    let v = svd.V();
    let mut vh = Array2::<Complex64>::zeros((v.ncols(), v.nrows()));
    for i in 0..v.ncols() {
        for j in 0..v.nrows() {
            vh[[i, j]] = v[(j, i)].conj();
        }
    }
    Ok((u, s, vh))
}

fn reshape_lp_r(t: &Array3<Complex64>, rows: usize, cols: usize) -> Array2<Complex64> {
    let flat: Vec<Complex64> = t.iter().copied().collect();
    Array2::from_shape_vec((rows, cols), flat).expect("reshape shape mismatch")
}

fn reshape_to_lpr(m: &Array2<Complex64>, l: usize, p: usize, r: usize) -> Array3<Complex64> {
    let flat: Vec<Complex64> = m.iter().copied().collect();
    Array3::from_shape_vec((l, p, r), flat).expect("reshape shape mismatch")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_product(rng: &mut impl Rng, n: usize) -> ProductState {
        ProductState {
            sites: (0..n)
                .map(|_| {
                    [
                        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    ]
                })
                .collect(),
            log_scale: 0.0,
        }
    }

    fn random_gate(rng: &mut impl Rng, span: usize) -> Array2<Complex64> {
        let dim = 1 << span;
        Array2::from_shape_fn((dim, dim), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn assert_states_close(state: &ChainState, dense: &dense::DenseState, tol: f64) {
        let a = state.to_dense();
        let b = dense.amplitudes();
        let scale = b.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1e-300);
        for (x, y) in a.iter().zip(b) {
            assert!(
                (x - y).norm() <= tol * scale,
                "mismatch {x} vs {y} (scale {scale})"
            );
        }
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Array2::from_shape_fn((6, 4), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let (u, s, vh) = svd_thin(&a).unwrap();
        let mut us = u.clone();
        for (j, sv) in s.iter().enumerate() {
            for i in 0..us.dim().0 {
                us[[i, j]] *= c(*sv, 0.0);
            }
        }
        let back = matmul(&us, &vh);
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        // Descending singular values.
        for w in s.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn identity_gate_leaves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prod = random_product(&mut rng, 5);
        let mut state = prod.to_mps();
        let before = state.to_dense();
        let dims = state.bond_dims();
        let mut eye = Array2::zeros((8, 8));
        for i in 0..8 {
            eye[[i, i]] = c(1.0, 0.0);
        }
        apply_gate(&mut state, 1, 3, &eye, &TruncationPolicy::exact()).unwrap();
        let after = state.to_dense();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).norm() < 1e-12);
        }
        assert_eq!(state.bond_dims(), dims);
    }

    #[test]
    fn outer_diagonal_gate_keeps_outer_bonds_small() {
        // A 3-site gate diagonal in the outer sites on a product state
        // cannot raise the outer Schmidt rank above 2.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prod = random_product(&mut rng, 5);
        let mut state = prod.to_mps();
        let mut gate = Array2::zeros((8, 8));
        for out in 0..8usize {
            for inp in 0..8usize {
                if (out & 0b101) == (inp & 0b101) {
                    gate[[out, inp]] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        apply_gate(&mut state, 1, 3, &gate, &TruncationPolicy::exact()).unwrap();
        for d in state.bond_dims() {
            assert!(d <= 2, "bond dims {:?}", state.bond_dims());
        }
    }

    #[test]
    fn gate_application_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..8 {
            let n = rng.gen_range(4..7);
            let prod = random_product(&mut rng, n);
            let mut state = prod.to_mps();
            let mut dstate = dense::DenseState::from_product(&prod);
            for _ in 0..6 {
                let span = if rng.gen_bool(0.5) { 2 } else { 3 };
                let first = rng.gen_range(0..=n - span);
                let gate = random_gate(&mut rng, span);
                apply_gate(&mut state, first, span, &gate, &TruncationPolicy::exact()).unwrap();
                dstate.apply_gate(first, span, &gate);
            }
            assert_eq!(state.discarded_weight(), 0.0);
            assert_states_close(&state, &dstate, 1e-12);
            let _ = trial;
        }
    }

    #[test]
    fn overlap_matches_dense_and_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 5;
        let prod = random_product(&mut rng, n);
        let reference = random_product(&mut rng, n);
        let mut state = prod.to_mps();
        let mut dstate = dense::DenseState::from_product(&prod);
        for _ in 0..5 {
            let first = rng.gen_range(0..=n - 3);
            let gate = random_gate(&mut rng, 3);
            apply_gate(&mut state, first, 3, &gate, &TruncationPolicy::exact()).unwrap();
            dstate.apply_gate(first, 3, &gate);
        }
        let got = overlap(&state, &reference).to_complex();
        let want = dstate.overlap(&reference);
        assert!((got - want).norm() < 1e-12 * want.norm().max(1.0));
    }

    #[test]
    fn orthogonal_reference_gives_zero_sentinel() {
        let up = ProductState {
            sites: vec![[c(1.0, 0.0), c(0.0, 0.0)]; 3],
            log_scale: 0.0,
        };
        let down = ProductState {
            sites: vec![[c(0.0, 0.0), c(1.0, 0.0)]; 3],
            log_scale: 0.0,
        };
        let amp = overlap(&up.to_mps(), &down);
        assert!(amp.is_zero());
    }

    #[test]
    fn entropy_product_bell_and_dense() {
        // Product state: zero at every cut.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let prod = random_product(&mut rng, 5);
        let mut state = prod.to_mps();
        for cut in 1..5 {
            assert!(half_chain_entropy(&mut state, cut).unwrap() < 1e-12);
        }

        // Bell-like pair: log 2 across the middle.
        let pair = ProductState {
            sites: vec![[c(1.0, 0.0), c(0.0, 0.0)]; 2],
            log_scale: 0.0,
        };
        let mut bell = pair.to_mps();
        let mut gate = Array2::zeros((4, 4));
        gate[[0, 0]] = c(1.0, 0.0); // |00> -> (|00> + |11>)/sqrt2
        gate[[3, 0]] = c(1.0, 0.0);
        apply_gate(&mut bell, 0, 2, &gate, &TruncationPolicy::exact()).unwrap();
        let s = half_chain_entropy(&mut bell, 1).unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12);

        // Random evolved state vs dense reduced-density-matrix entropy.
        let n = 6;
        let prod = random_product(&mut rng, n);
        let mut state = prod.to_mps();
        let mut dstate = dense::DenseState::from_product(&prod);
        for _ in 0..7 {
            let first = rng.gen_range(0..=n - 3);
            let gate = random_gate(&mut rng, 3);
            apply_gate(&mut state, first, 3, &gate, &TruncationPolicy::exact()).unwrap();
            dstate.apply_gate(first, 3, &gate);
        }
        for cut in 1..n {
            let got = half_chain_entropy(&mut state, cut).unwrap();
            let want = dstate.entropy(cut);
            assert!((got - want).abs() < 1e-10, "cut {cut}: {got} vs {want}");
        }
    }

    #[test]
    fn projector_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let prod = random_product(&mut rng, n);
        let mut state = prod.to_mps();
        let mut dstate = dense::DenseState::from_product(&prod);
        for _ in 0..4 {
            let first = rng.gen_range(0..=n - 3);
            let gate = random_gate(&mut rng, 3);
            apply_gate(&mut state, first, 3, &gate, &TruncationPolicy::exact()).unwrap();
            dstate.apply_gate(first, 3, &gate);
        }
        let all_id = vec![ProjFactor::Identity; n];
        let norm2 = expect_projector_product(&state, &all_id);
        assert!((norm2 - state.log_squared_norm().exp()).abs() < 1e-9 * norm2.abs().max(1.0));
        for factors in [
            vec![
                ProjFactor::ZPlus,
                ProjFactor::XPlus,
                ProjFactor::Identity,
                ProjFactor::XPlus,
                ProjFactor::ZPlus,
            ],
            vec![
                ProjFactor::Identity,
                ProjFactor::ZPlus,
                ProjFactor::ZPlus,
                ProjFactor::Identity,
                ProjFactor::XPlus,
            ],
        ] {
            let got = expect_projector_product(&state, &factors);
            let want = dstate.expect_projector_product(&factors);
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn boundary_projectors_fix_boundary_state() {
        // The boundary state is an eigenstate of its own defining
        // projectors, so the sandwich equals the squared norm.
        let sites: Vec<[Complex64; 2]> = (0..5)
            .map(|m| {
                if m % 2 == 0 {
                    [c(1.0, 0.0), c(0.0, 0.0)]
                } else {
                    [c(0.5f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0)]
                }
            })
            .collect();
        let prod = ProductState {
            sites,
            log_scale: 2.0f64.ln(),
        };
        let state = prod.to_mps();
        let factors = vec![
            ProjFactor::ZPlus,
            ProjFactor::XPlus,
            ProjFactor::ZPlus,
            ProjFactor::XPlus,
            ProjFactor::ZPlus,
        ];
        let got = expect_projector_product(&state, &factors);
        let norm2 = state.log_squared_norm().exp();
        assert!((got - norm2).abs() < 1e-12 * norm2);
    }

    #[test]
    fn truncation_bounds_bond_dimension_and_records_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 6;
        let prod = random_product(&mut rng, n);
        let mut state = prod.to_mps();
        let policy = TruncationPolicy::new(2, 0.0);
        let mut last_discarded = 0.0;
        for _ in 0..6 {
            let first = rng.gen_range(0..=n - 3);
            let gate = random_gate(&mut rng, 3);
            apply_gate(&mut state, first, 3, &gate, &policy).unwrap();
            assert!(state.max_bond_dim() <= 2);
            assert!(state.discarded_weight() >= last_discarded);
            last_discarded = state.discarded_weight();
        }
        assert!(last_discarded > 0.0, "random gates should truncate at chi=2");
    }

    #[test]
    fn lognorm_factorization_is_invariant() {
        // Scaling all tensors while adjusting log_norm changes nothing
        // observable.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let prod = random_product(&mut rng, n);
        let reference = random_product(&mut rng, n);
        let mut a = prod.to_mps();
        let mut b = prod.to_mps();
        // Scale the first tensor up and compensate in log_norm.
        b.log_norm -= 3.0;
        b.tensors[0].mapv_inplace(|z| z * c(3.0f64.exp(), 0.0));
        let gate = random_gate(&mut rng, 3);
        apply_gate(&mut a, 0, 3, &gate, &TruncationPolicy::exact()).unwrap();
        apply_gate(&mut b, 0, 3, &gate, &TruncationPolicy::exact()).unwrap();
        let oa = overlap(&a, &reference);
        let ob = overlap(&b, &reference);
        assert!((oa.to_complex() - ob.to_complex()).norm() < 1e-9 * oa.to_complex().norm());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let prod = ProductState {
            sites: vec![[c(1.0, 0.0), c(0.0, 0.0)]; 3],
            log_scale: 0.0,
        };
        let mut state = prod.to_mps();
        let mut gate = Array2::zeros((8, 8));
        gate[[0, 0]] = c(f64::NAN, 0.0);
        let err = apply_gate(&mut state, 0, 3, &gate, &TruncationPolicy::exact());
        assert!(matches!(err, Err(MpsError::NonFinite) | Err(MpsError::SvdFailed(_))));
    }
}
