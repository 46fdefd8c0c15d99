//! Log-magnitude/phase representation of complex amplitudes.
//!
//! Partition functions grow or shrink exponentially with the number of
//! qubits, so raw `f64` complex numbers overflow well before interesting
//! system sizes. All partition values are therefore carried as
//! `z = exp(log_mag) · exp(i·phase)` and compared in log space.

use num_complex::Complex64;

/// A complex amplitude stored as `(log|z|, arg z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplitudeLog {
    pub log_mag: f64,
    pub phase: f64,
}

impl AmplitudeLog {
    /// The zero amplitude (`log_mag = -inf`).
    pub const ZERO: AmplitudeLog = AmplitudeLog {
        log_mag: f64::NEG_INFINITY,
        phase: 0.0,
    };

    pub fn new(log_mag: f64, phase: f64) -> Self {
        Self { log_mag, phase }
    }

    /// Exact conversion from a finite complex number.
    pub fn from_complex(z: Complex64) -> Self {
        if z == Complex64::new(0.0, 0.0) {
            Self::ZERO
        } else {
            Self {
                log_mag: z.norm().ln(),
                phase: z.arg(),
            }
        }
    }

    /// `z` scaled by `exp(log_scale)`, as when a state carries an
    /// accumulated log-norm.
    pub fn from_complex_scaled(z: Complex64, log_scale: f64, phase_offset: f64) -> Self {
        let base = Self::from_complex(z);
        if base.is_zero() {
            base
        } else {
            Self {
                log_mag: base.log_mag + log_scale,
                phase: wrap_phase(base.phase + phase_offset),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_mag == f64::NEG_INFINITY
    }

    /// Materialize the complex value. Overflows to infinity if `log_mag`
    /// exceeds the `f64` range; callers that care stay in log space.
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(self.log_mag.exp(), self.phase)
        }
    }

    /// `log |z|^2`, the natural weight for Born-rule comparisons.
    pub fn log_weight2(&self) -> f64 {
        2.0 * self.log_mag
    }

    pub fn mul(&self, other: &AmplitudeLog) -> AmplitudeLog {
        if self.is_zero() || other.is_zero() {
            return AmplitudeLog::ZERO;
        }
        AmplitudeLog {
            log_mag: self.log_mag + other.log_mag,
            phase: wrap_phase(self.phase + other.phase),
        }
    }

    /// Relative error |a - b| / max(|a|, |b|), computed stably in log space.
    pub fn relative_error(&self, other: &AmplitudeLog) -> f64 {
        if self.is_zero() && other.is_zero() {
            return 0.0;
        }
        let ref_log = self.log_mag.max(other.log_mag);
        let a = Complex64::from_polar((self.log_mag - ref_log).exp(), self.phase);
        let b = Complex64::from_polar((other.log_mag - ref_log).exp(), other.phase);
        (a - b).norm()
    }
}

/// Wrap into `(-pi, pi]`.
pub fn wrap_phase(p: f64) -> f64 {
    let mut x = p.rem_euclid(2.0 * std::f64::consts::PI);
    if x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    x
}

/// Normalized weights `|z_i|^2 / Σ|z_j|^2` computed without leaving log
/// space until after the common scale is removed.
pub fn normalized_weights2(zs: &[AmplitudeLog; 4]) -> Option<[f64; 4]> {
    let max = zs
        .iter()
        .map(|z| z.log_weight2())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut w = [0.0; 4];
    let mut total = 0.0;
    for (wi, z) in w.iter_mut().zip(zs.iter()) {
        *wi = (z.log_weight2() - max).exp();
        total += *wi;
    }
    for wi in &mut w {
        *wi /= total;
    }
    Some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_product() {
        let a = Complex64::new(-3.25, 1.5);
        let b = Complex64::new(0.125, -2.0);
        let la = AmplitudeLog::from_complex(a);
        let lb = AmplitudeLog::from_complex(b);
        assert!((la.to_complex() - a).norm() < 1e-14);
        assert!((la.mul(&lb).to_complex() - a * b).norm() < 1e-13);
    }

    #[test]
    fn zero_is_sentinel() {
        let z = AmplitudeLog::from_complex(Complex64::new(0.0, 0.0));
        assert!(z.is_zero());
        assert_eq!(z.to_complex(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn weights_are_scale_invariant() {
        let zs = [
            AmplitudeLog::new(0.0, 0.1),
            AmplitudeLog::new(-1.0, 0.2),
            AmplitudeLog::new(-2.0, 0.3),
            AmplitudeLog::new(-3.0, 0.4),
        ];
        let shifted = [
            AmplitudeLog::new(1000.0, 0.1),
            AmplitudeLog::new(999.0, 0.2),
            AmplitudeLog::new(998.0, 0.3),
            AmplitudeLog::new(997.0, 0.4),
        ];
        let w0 = normalized_weights2(&zs).unwrap();
        let w1 = normalized_weights2(&shifted).unwrap();
        for (a, b) in w0.iter().zip(w1.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
