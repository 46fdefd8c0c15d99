//! C ABI for the coherent-error surface-code simulator.
//!
//! The API follows the usual opaque-handle pattern: a [`CohsurfLayout`]
//! is created once and shared (it is immutable), evaluation functions
//! fill caller-provided buffers, and every call returns a [`CohsurfStatus`].
//! A thread-local message for the last error is available through
//! [`cohsurf_last_error`]. The generated header lands in
//! `include/cohsurf.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use cohsurf::couplings::{pauli_coefficients, RotationSpec, ValidationMode};
use cohsurf::decode::{ml_verdict, mwpm_decode, mwpm_error_term};
use cohsurf::experiment::{config_from_text, run_sweep, write_records_csv, write_summary_csv};
use cohsurf::lattice::{build_layout, logical_class, CodeLayout, EtaConfig};
use cohsurf::mps::TruncationPolicy;
use cohsurf::sampler::{sample_error_string_with, SampleOptions};

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CohsurfStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericalFailure = 2,
    BufferTooSmall = 3,
    IoError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap());
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cohsurf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cohsurf_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Opaque planar surface-code layout handle.
pub struct CohsurfLayout {
    inner: CodeLayout,
}

/// Build an `L x M` planar layout. On success writes a heap-allocated
/// handle to `out`; release it with [`cohsurf_layout_free`].
///
/// # Safety
/// `out` must be a valid pointer to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cohsurf_layout_new(
    l: u32,
    m: u32,
    out: *mut *mut CohsurfLayout,
) -> CohsurfStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return CohsurfStatus::InvalidArgument;
    }
    match build_layout(l as usize, m as usize) {
        Ok(inner) => {
            let handle = Box::new(CohsurfLayout { inner });
            unsafe { *out = Box::into_raw(handle) };
            CohsurfStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CohsurfStatus::InvalidArgument
        }
    }
}

/// Release a layout handle created by [`cohsurf_layout_new`].
///
/// # Safety
/// `layout` must be a pointer previously returned by
/// [`cohsurf_layout_new`] that has not been freed, or null.
#[no_mangle]
pub unsafe extern "C" fn cohsurf_layout_free(layout: *mut CohsurfLayout) {
    if !layout.is_null() {
        drop(unsafe { Box::from_raw(layout) });
    }
}

/// Number of data qubits of a layout.
///
/// # Safety
/// `layout` must be a live handle from [`cohsurf_layout_new`].
#[no_mangle]
pub unsafe extern "C" fn cohsurf_layout_num_qubits(layout: *const CohsurfLayout) -> u32 {
    if layout.is_null() {
        return 0;
    }
    unsafe { &*layout }.inner.num_qubits() as u32
}

/// Vertex and plaquette stabilizer counts.
///
/// # Safety
/// All pointers must be valid; `layout` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cohsurf_layout_stabilizer_counts(
    layout: *const CohsurfLayout,
    vertices: *mut u32,
    plaquettes: *mut u32,
) -> CohsurfStatus {
    if layout.is_null() || vertices.is_null() || plaquettes.is_null() {
        set_error("null pointer argument");
        return CohsurfStatus::InvalidArgument;
    }
    let inner = &unsafe { &*layout }.inner;
    unsafe {
        *vertices = inner.vertices().len() as u32;
        *plaquettes = inner.plaquettes().len() as u32;
    }
    CohsurfStatus::Ok
}

/// Write the layout debug table into `buf` as a NUL-terminated string.
/// `written` receives the required length including the terminator.
///
/// # Safety
/// `buf` must point to `len` writable bytes; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cohsurf_layout_dump(
    layout: *const CohsurfLayout,
    buf: *mut c_char,
    len: usize,
    written: *mut usize,
) -> CohsurfStatus {
    if layout.is_null() || written.is_null() {
        set_error("null pointer argument");
        return CohsurfStatus::InvalidArgument;
    }
    let dump = unsafe { &*layout }.inner.dump();
    let needed = dump.len() + 1;
    unsafe { *written = needed };
    if buf.is_null() || len < needed {
        set_error(format!("buffer of {len} bytes, need {needed}"));
        return CohsurfStatus::BufferTooSmall;
    }
    unsafe {
        std::ptr::copy_nonoverlapping(dump.as_ptr(), buf as *mut u8, dump.len());
        *buf.add(dump.len()) = 0;
    }
    CohsurfStatus::Ok
}

fn eta_from_codes(layout: &CodeLayout, codes: &[u8]) -> Result<EtaConfig, String> {
    if codes.len() != layout.num_qubits() {
        return Err(format!(
            "eta has {} codes, layout has {} qubits",
            codes.len(),
            layout.num_qubits()
        ));
    }
    let mut eta = EtaConfig::identity(layout.num_qubits());
    for (j, &c) in codes.iter().enumerate() {
        if c > 3 {
            return Err(format!("eta code {c} at qubit {j} out of range"));
        }
        eta.set_code(j, c as usize);
    }
    Ok(eta)
}

/// Evaluate the four class amplitudes `(Z_I, Z_X, Z_Y, Z_Z)` for a
/// reference string given as per-qubit slot codes
/// (`0 = I, 1 = X, 2 = XZ, 3 = Z`). Log-magnitudes and phases are written
/// to the four-element output arrays; a zero amplitude reports
/// `-INFINITY`.
///
/// # Safety
/// `eta_codes` must point to `num_qubits` bytes; the output pointers must
/// each reference four (or one) writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cohsurf_evaluate_partitions(
    layout: *const CohsurfLayout,
    alpha: f64,
    theta: f64,
    phi: f64,
    eta_codes: *const u8,
    chi_max: u32,
    svd_cutoff: f64,
    out_log_mag: *mut f64,
    out_phase: *mut f64,
    out_entropy: *mut f64,
    out_discarded: *mut f64,
) -> CohsurfStatus {
    if layout.is_null()
        || eta_codes.is_null()
        || out_log_mag.is_null()
        || out_phase.is_null()
        || out_entropy.is_null()
        || out_discarded.is_null()
    {
        set_error("null pointer argument");
        return CohsurfStatus::InvalidArgument;
    }
    if chi_max < 2 || !svd_cutoff.is_finite() || svd_cutoff < 0.0 {
        set_error("chi_max must be >= 2 and svd_cutoff non-negative");
        return CohsurfStatus::InvalidArgument;
    }
    let inner = &unsafe { &*layout }.inner;
    let codes = unsafe { std::slice::from_raw_parts(eta_codes, inner.num_qubits()) };
    let eta = match eta_from_codes(inner, codes) {
        Ok(e) => e,
        Err(msg) => {
            set_error(msg);
            return CohsurfStatus::InvalidArgument;
        }
    };
    let rot = RotationSpec::uniform(inner.num_qubits(), alpha, theta, phi);
    let policy = TruncationPolicy::new(chi_max as usize, svd_cutoff);
    match cohsurf::circuit::evaluate_partitions(inner, &rot, &eta, &policy) {
        Ok(parts) => {
            for k in 0..4 {
                unsafe {
                    *out_log_mag.add(k) = parts.z[k].log_mag;
                    *out_phase.add(k) = parts.z[k].phase;
                }
            }
            unsafe {
                *out_entropy = parts.entropy_half;
                *out_discarded = parts.discarded_weight;
            }
            CohsurfStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CohsurfStatus::NumericalFailure
        }
    }
}

/// Decoder outputs for one sampled error string.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CohsurfSampleResult {
    /// `log |Z_mu|^2` shifted so the maximum entry is zero, in class
    /// order I, X, Y, Z.
    pub log_weight2: [f64; 4],
    /// Maximum-likelihood class (0..3 = I, X, Y, Z).
    pub mu_ml: u8,
    /// MWPM class relative to the sampled string.
    pub mu_mwpm: u8,
    pub min_infidelity: f64,
    pub mwpm_error: f64,
    pub entropy_half: f64,
    pub discarded_weight: f64,
    pub syndrome_hash: u64,
}

/// Draw one error string by its Born probability and decode it. The
/// sampled slot codes are written to `out_eta_codes` (`num_qubits`
/// bytes); the RNG stream is derived from `(seed, index)` so calls are
/// reproducible and order-independent.
///
/// # Safety
/// `out_eta_codes` must point to `num_qubits` writable bytes and `out`
/// to a writable [`CohsurfSampleResult`].
#[no_mangle]
pub unsafe extern "C" fn cohsurf_sample(
    layout: *const CohsurfLayout,
    alpha: f64,
    theta: f64,
    phi: f64,
    chi_max: u32,
    svd_cutoff: f64,
    seed: u64,
    index: u64,
    out_eta_codes: *mut u8,
    out: *mut CohsurfSampleResult,
) -> CohsurfStatus {
    if layout.is_null() || out_eta_codes.is_null() || out.is_null() {
        set_error("null pointer argument");
        return CohsurfStatus::InvalidArgument;
    }
    if chi_max < 2 || !svd_cutoff.is_finite() || svd_cutoff < 0.0 {
        set_error("chi_max must be >= 2 and svd_cutoff non-negative");
        return CohsurfStatus::InvalidArgument;
    }
    let inner = &unsafe { &*layout }.inner;
    let rot = RotationSpec::uniform(inner.num_qubits(), alpha, theta, phi);
    let coeffs = match pauli_coefficients(&rot, ValidationMode::Strict) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return CohsurfStatus::InvalidArgument;
        }
    };
    let policy = TruncationPolicy::new(chi_max as usize, svd_cutoff);
    let stream =
        cohsurf::experiment::sample_stream_seed(seed, alpha, inner.l_len(), cohsurf::experiment::RunMode::Coherent, index);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(stream);
    let rec = match sample_error_string_with(
        inner,
        &coeffs,
        &policy,
        &mut rng,
        SampleOptions {
            seed,
            index,
            keep_conditionals: false,
        },
    ) {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return CohsurfStatus::NumericalFailure;
        }
    };
    let verdict = match ml_verdict(&rec.z) {
        Ok(v) => v,
        Err(e) => {
            set_error(e.to_string());
            return CohsurfStatus::NumericalFailure;
        }
    };
    let correction = mwpm_decode(inner, &rec.syndrome);
    let mu_mwpm = match logical_class(inner, &rec.eta, &correction) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return CohsurfStatus::NumericalFailure;
        }
    };
    let mwpm_error = match mwpm_error_term(&rec.z, mu_mwpm) {
        Ok(v) => v,
        Err(e) => {
            set_error(e.to_string());
            return CohsurfStatus::NumericalFailure;
        }
    };
    let max_lw = rec
        .z
        .iter()
        .map(|z| z.log_weight2())
        .fold(f64::NEG_INFINITY, f64::max);
    for j in 0..inner.num_qubits() {
        unsafe { *out_eta_codes.add(j) = rec.eta.code(j) as u8 };
    }
    let result = CohsurfSampleResult {
        log_weight2: std::array::from_fn(|k| rec.z[k].log_weight2() - max_lw),
        mu_ml: verdict.class.index() as u8,
        mu_mwpm: mu_mwpm.index() as u8,
        min_infidelity: verdict.min_infidelity,
        mwpm_error,
        entropy_half: rec.entropy_half,
        discarded_weight: rec.discarded_weight,
        syndrome_hash: rec.syndrome.hash64(),
    };
    unsafe { *out = result };
    CohsurfStatus::Ok
}

/// Run a full sweep from a configuration in the flat `key = value`
/// format and write the records and summary CSV files.
///
/// # Safety
/// All three pointers must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cohsurf_run_sweep_csv(
    config_text: *const c_char,
    records_path: *const c_char,
    summary_path: *const c_char,
) -> CohsurfStatus {
    if config_text.is_null() || records_path.is_null() || summary_path.is_null() {
        set_error("null pointer argument");
        return CohsurfStatus::InvalidArgument;
    }
    let text = match unsafe { CStr::from_ptr(config_text) }.to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config text is not valid UTF-8");
            return CohsurfStatus::InvalidArgument;
        }
    };
    let parse_path = |p: *const c_char| -> Result<PathBuf, CohsurfStatus> {
        unsafe { CStr::from_ptr(p) }
            .to_str()
            .map(PathBuf::from)
            .map_err(|_| {
                set_error("path is not valid UTF-8");
                CohsurfStatus::InvalidArgument
            })
    };
    let records = match parse_path(records_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let summary = match parse_path(summary_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let cfg = match config_from_text(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return CohsurfStatus::InvalidArgument;
        }
    };
    match run_sweep(&cfg) {
        Ok(out) => {
            if let Err(e) = write_records_csv(&records, &cfg, &out.records) {
                set_error(e.to_string());
                return CohsurfStatus::IoError;
            }
            if let Err(e) = write_summary_csv(&summary, &cfg, &out.summaries) {
                set_error(e.to_string());
                return CohsurfStatus::IoError;
            }
            CohsurfStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CohsurfStatus::NumericalFailure
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn layout_lifecycle_and_counts() {
        let mut handle: *mut CohsurfLayout = std::ptr::null_mut();
        let status = unsafe { cohsurf_layout_new(3, 3, &mut handle) };
        assert_eq!(status, CohsurfStatus::Ok);
        assert_eq!(unsafe { cohsurf_layout_num_qubits(handle) }, 13);
        let (mut v, mut p) = (0u32, 0u32);
        assert_eq!(
            unsafe { cohsurf_layout_stabilizer_counts(handle, &mut v, &mut p) },
            CohsurfStatus::Ok
        );
        assert_eq!((v, p), (6, 6));

        let mut needed = 0usize;
        let status =
            unsafe { cohsurf_layout_dump(handle, std::ptr::null_mut(), 0, &mut needed) };
        assert_eq!(status, CohsurfStatus::BufferTooSmall);
        let mut buf = vec![0i8; needed];
        let status =
            unsafe { cohsurf_layout_dump(handle, buf.as_mut_ptr(), needed, &mut needed) };
        assert_eq!(status, CohsurfStatus::Ok);
        unsafe { cohsurf_layout_free(handle) };

        let mut bad: *mut CohsurfLayout = std::ptr::null_mut();
        let status = unsafe { cohsurf_layout_new(1, 3, &mut bad) };
        assert_eq!(status, CohsurfStatus::InvalidArgument);
        let msg = unsafe { CStr::from_ptr(cohsurf_last_error()) };
        assert!(!msg.to_bytes().is_empty());
    }

    #[test]
    fn evaluate_matches_core() {
        let mut handle: *mut CohsurfLayout = std::ptr::null_mut();
        unsafe { cohsurf_layout_new(2, 2, &mut handle) };
        let n = unsafe { cohsurf_layout_num_qubits(handle) } as usize;
        let codes: Vec<u8> = vec![0, 1, 3, 2, 0];
        assert_eq!(codes.len(), n);
        let mut log_mag = [0.0f64; 4];
        let mut phase = [0.0f64; 4];
        let (mut entropy, mut discarded) = (0.0f64, 0.0f64);
        let status = unsafe {
            cohsurf_evaluate_partitions(
                handle,
                0.2 * PI,
                0.3 * PI,
                0.25 * PI,
                codes.as_ptr(),
                64,
                0.0,
                log_mag.as_mut_ptr(),
                phase.as_mut_ptr(),
                &mut entropy,
                &mut discarded,
            )
        };
        assert_eq!(status, CohsurfStatus::Ok);

        // Against the library path.
        let layout = build_layout(2, 2).unwrap();
        let mut eta = EtaConfig::identity(n);
        for (j, &c) in codes.iter().enumerate() {
            eta.set_code(j, c as usize);
        }
        let rot = RotationSpec::uniform(n, 0.2 * PI, 0.3 * PI, 0.25 * PI);
        let parts = cohsurf::circuit::evaluate_partitions(
            &layout,
            &rot,
            &eta,
            &TruncationPolicy::new(64, 0.0),
        )
        .unwrap();
        for k in 0..4 {
            assert!((parts.z[k].log_mag - log_mag[k]).abs() < 1e-12);
            assert!((parts.z[k].phase - phase[k]).abs() < 1e-12);
        }
        unsafe { cohsurf_layout_free(handle) };
    }

    #[test]
    fn sample_is_reproducible() {
        let mut handle: *mut CohsurfLayout = std::ptr::null_mut();
        unsafe { cohsurf_layout_new(3, 3, &mut handle) };
        let n = unsafe { cohsurf_layout_num_qubits(handle) } as usize;
        let mut run = |seed: u64, index: u64| -> (Vec<u8>, CohsurfSampleResult) {
            let mut eta = vec![0u8; n];
            let mut out = CohsurfSampleResult {
                log_weight2: [0.0; 4],
                mu_ml: 9,
                mu_mwpm: 9,
                min_infidelity: -1.0,
                mwpm_error: -1.0,
                entropy_half: -1.0,
                discarded_weight: -1.0,
                syndrome_hash: 0,
            };
            let status = unsafe {
                cohsurf_sample(
                    handle,
                    0.12 * PI,
                    0.304 * PI,
                    0.25 * PI,
                    32,
                    1e-10,
                    seed,
                    index,
                    eta.as_mut_ptr(),
                    &mut out,
                )
            };
            assert_eq!(status, CohsurfStatus::Ok);
            (eta, out)
        };
        let (eta_a, out_a) = run(5, 0);
        let (eta_b, out_b) = run(5, 0);
        assert_eq!(eta_a, eta_b);
        assert_eq!(out_a.min_infidelity, out_b.min_infidelity);
        assert!(out_a.mu_ml <= 3 && out_a.mu_mwpm <= 3);
        assert!(out_a.min_infidelity >= 0.0 && out_a.min_infidelity <= 0.5 + 1e-12);
        let (eta_c, _) = run(5, 1);
        assert_ne!(eta_a, eta_c, "different stream index should differ");
        unsafe { cohsurf_layout_free(handle) };
    }

    #[test]
    fn sweep_via_config_text() {
        let dir = std::env::temp_dir();
        let records = dir.join("cohsurf_ffi_records.csv");
        let summary = dir.join("cohsurf_ffi_summary.csv");
        let config = CString::new(
            "alphas = 0.1pi\ntheta = 0.304pi\nphi = 0.25pi\ndistances = 2\nsamples = 4\nseed = 3\nworkers = 1\n",
        )
        .unwrap();
        let rec_c = CString::new(records.to_str().unwrap()).unwrap();
        let sum_c = CString::new(summary.to_str().unwrap()).unwrap();
        let status = unsafe {
            cohsurf_run_sweep_csv(config.as_ptr(), rec_c.as_ptr(), sum_c.as_ptr())
        };
        assert_eq!(status, CohsurfStatus::Ok);
        let text = std::fs::read_to_string(&records).unwrap();
        assert!(text.contains("seed,sample,alpha"));
        assert_eq!(text.lines().filter(|l| l.contains("coherent")).count(), 4);
        let _ = std::fs::remove_file(records);
        let _ = std::fs::remove_file(summary);
    }
}
