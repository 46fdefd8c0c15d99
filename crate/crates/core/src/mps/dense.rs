//! Exact dense statevector backend for small chains, used to
//! cross-validate the MPS engine. Site 0 occupies the most significant
//! bit of the amplitude index, matching the MPS contraction order.

use ndarray::Array2;
use num_complex::Complex64;

use super::{svd_thin, ProductState, ProjFactor};

#[derive(Clone, Debug)]
pub struct DenseState {
    n: usize,
    amps: Vec<Complex64>,
}

impl DenseState {
    pub fn from_product(p: &ProductState) -> Self {
        let n = p.len();
        let scale = Complex64::new(p.log_scale.exp(), 0.0);
        let mut amps = vec![scale];
        for site in &p.sites {
            let mut next = Vec::with_capacity(amps.len() * 2);
            for a in &amps {
                next.push(a * site[0]);
                next.push(a * site[1]);
            }
            amps = next;
        }
        Self { n, amps }
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    fn site_shift(&self, site: usize) -> usize {
        self.n - 1 - site
    }

    pub fn apply_gate(&mut self, first: usize, span: usize, gate: &Array2<Complex64>) {
        let dim = 1usize << span;
        assert_eq!(gate.dim(), (dim, dim));
        assert!(first + span <= self.n);
        let group_shift = self.n - first - span;
        let group_mask = (dim - 1) << group_shift;
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            if *amp == Complex64::new(0.0, 0.0) {
                continue;
            }
            let p = (idx & group_mask) >> group_shift;
            let base = idx & !group_mask;
            for q in 0..dim {
                let g = gate[[q, p]];
                if g != Complex64::new(0.0, 0.0) {
                    out[base | (q << group_shift)] += g * amp;
                }
            }
        }
        self.amps = out;
    }

    pub fn apply_single_site(&mut self, site: usize, m: &[[Complex64; 2]; 2]) {
        let shift = self.site_shift(site);
        let mask = 1usize << shift;
        for idx in 0..self.amps.len() {
            if idx & mask == 0 {
                let a = self.amps[idx];
                let b = self.amps[idx | mask];
                self.amps[idx] = m[0][0] * a + m[0][1] * b;
                self.amps[idx | mask] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    pub fn overlap(&self, reference: &ProductState) -> Complex64 {
        assert_eq!(reference.len(), self.n);
        let scale = Complex64::new(reference.log_scale.exp(), 0.0);
        self.amps
            .iter()
            .enumerate()
            .map(|(idx, amp)| {
                let mut r = scale;
                for site in 0..self.n {
                    let bit = idx >> self.site_shift(site) & 1;
                    r *= reference.sites[site][bit].conj();
                }
                r * amp
            })
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Entanglement entropy of the bipartition with `cut` sites left.
    pub fn entropy(&self, cut: usize) -> f64 {
        assert!(cut >= 1 && cut < self.n);
        let rows = 1usize << cut;
        let cols = 1usize << (self.n - cut);
        let mat = Array2::from_shape_fn((rows, cols), |(i, j)| self.amps[i * cols + j]);
        let (_, s, _) = svd_thin(&mat).expect("dense entropy SVD");
        let total: f64 = s.iter().map(|x| x * x).sum();
        let mut entropy = 0.0;
        for x in &s {
            let w = x * x / total;
            if w > 1e-300 {
                entropy -= w * w.ln();
            }
        }
        entropy
    }

    pub fn expect_projector_product(&self, factors: &[ProjFactor]) -> f64 {
        assert_eq!(factors.len(), self.n);
        let mut acted = self.clone();
        for (site, f) in factors.iter().enumerate() {
            acted.apply_single_site(site, &f.matrix());
        }
        self.amps
            .iter()
            .zip(&acted.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .re
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_amplitudes_and_norm() {
        let p = ProductState {
            sites: vec![
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)],
            ],
            log_scale: 0.0,
        };
        let d = DenseState::from_product(&p);
        // |0> on site 0, 0.5|1> on site 1 -> amplitude at index 0b01.
        assert_eq!(d.amplitudes()[0b01], Complex64::new(0.5, 0.0));
        assert!((d.squared_norm() - 0.25).abs() < 1e-15);
    }
}
