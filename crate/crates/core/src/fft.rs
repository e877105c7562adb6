//! Three-dimensional real FFT on the `n^3` lattice.
//!
//! Layout conventions used everywhere in this crate:
//!
//! * physical data: `f[(i*n + j)*n + k]`, k fastest,
//! * half spectrum: `c[(i*n + j)*nc + kc]` with `nc = n/2 + 1`; the k axis
//!   is stored in Hermitian-compressed form, the i and j axes carry full
//!   unsigned DFT indices (fold with [`fold_mode`] to get signed modes),
//! * the forward transform is normalized by `1/n^3`, the inverse is a plain
//!   sum, so `inverse(forward(f)) == f` up to rounding.
//!
//! The machine this targets has a single core, so the axis passes are
//! written to be cache-friendly rather than parallel: the j axis works on
//! one L2-resident i-plane at a time and the i axis runs over blocked
//! column bundles through a small scratch buffer instead of a whole-array
//! transpose. `inverse_mult` fuses a per-mode multiplier into the first
//! pass, which is how derivative and semigroup operators avoid an extra
//! sweep over the spectrum.

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub use rustfft::num_complex::Complex64;

/// Unsigned DFT index -> signed mode, with the Nyquist index kept positive.
#[inline]
pub fn fold_mode(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Parseval weight of a Hermitian-compressed k-bin.
#[inline]
pub fn herm_weight(kc: usize, n: usize) -> f64 {
    if kc == 0 || 2 * kc == n {
        1.0
    } else {
        2.0
    }
}

const BLOCK: usize = 32;

pub struct Fft3 {
    n: usize,
    nc: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    cfwd: Arc<dyn Fft<f64>>,
    cinv: Arc<dyn Fft<f64>>,
    line_r: Vec<f64>,
    line_c: Vec<Complex64>,
    batch: Vec<Complex64>,
    blk: Vec<Complex64>,
    work: Vec<Complex64>,
    scratch_r: Vec<Complex64>,
    scratch_c: Vec<Complex64>,
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "fft size must be even, got {n}");
        let nc = n / 2 + 1;
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(n);
        let c2r = rp.plan_fft_inverse(n);
        let cfwd = cp.plan_fft_forward(n);
        let cinv = cp.plan_fft_inverse(n);
        let scratch_r_len = r2c.get_scratch_len().max(c2r.get_scratch_len());
        let scratch_c_len = cfwd
            .get_inplace_scratch_len()
            .max(cinv.get_inplace_scratch_len());
        Fft3 {
            n,
            nc,
            r2c,
            c2r,
            cfwd,
            cinv,
            line_r: vec![0.0; n],
            line_c: vec![Complex64::default(); nc],
            batch: vec![Complex64::default(); n * nc],
            blk: vec![Complex64::default(); BLOCK * n],
            work: vec![Complex64::default(); n * n * nc],
            scratch_r: vec![Complex64::default(); scratch_r_len],
            scratch_c: vec![Complex64::default(); scratch_c_len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec_len(&self) -> usize {
        self.n * self.n * self.nc
    }

    /// Real field -> normalized half spectrum.
    pub fn forward(&mut self, real: &[f64], spec: &mut [Complex64]) {
        let (n, nc) = (self.n, self.nc);
        assert_eq!(real.len(), n * n * n);
        assert_eq!(spec.len(), self.spec_len());

        // k axis: real lines are contiguous
        for l in 0..n * n {
            self.line_r.copy_from_slice(&real[l * n..(l + 1) * n]);
            self.r2c
                .process_with_scratch(
                    &mut self.line_r,
                    &mut spec[l * nc..(l + 1) * nc],
                    &mut self.scratch_r,
                )
                .expect("r2c");
        }

        // j axis: one i-plane at a time, lines gathered across the stride
        for i in 0..n {
            let plane = &mut spec[i * n * nc..(i + 1) * n * nc];
            for kc in 0..nc {
                for j in 0..n {
                    self.batch[kc * n + j] = plane[j * nc + kc];
                }
            }
            self.cfwd
                .process_with_scratch(&mut self.batch[..nc * n], &mut self.scratch_c);
            for kc in 0..nc {
                for j in 0..n {
                    plane[j * nc + kc] = self.batch[kc * n + j];
                }
            }
        }

        // i axis: blocked columns, normalization applied on write-back
        let m = n * nc;
        let scale = 1.0 / (n as f64 * n as f64 * n as f64);
        let mut jk0 = 0;
        while jk0 < m {
            let b = BLOCK.min(m - jk0);
            for i in 0..n {
                let row = &spec[i * m + jk0..i * m + jk0 + b];
                for (bb, &v) in row.iter().enumerate() {
                    self.blk[bb * n + i] = v;
                }
            }
            self.cfwd
                .process_with_scratch(&mut self.blk[..b * n], &mut self.scratch_c);
            for i in 0..n {
                let row = &mut spec[i * m + jk0..i * m + jk0 + b];
                for (bb, v) in row.iter_mut().enumerate() {
                    *v = self.blk[bb * n + i] * scale;
                }
            }
            jk0 += b;
        }
    }

    /// Half spectrum -> real field.
    pub fn inverse(&mut self, spec: &[Complex64], real: &mut [f64]) {
        self.inverse_mult(spec, |_, _, _| Complex64::new(1.0, 0.0), real);
    }

    /// Half spectrum -> real field, multiplying mode `(i, j, kc)` (raw
    /// unsigned indices) by `mult(i, j, kc)` on the fly.
    pub fn inverse_mult<F>(&mut self, spec: &[Complex64], mult: F, real: &mut [f64])
    where
        F: Fn(usize, usize, usize) -> Complex64,
    {
        let (n, nc) = (self.n, self.nc);
        assert_eq!(real.len(), n * n * n);
        assert_eq!(spec.len(), self.spec_len());

        // i axis first, fusing the multiplier into the block load
        let m = n * nc;
        let mut jk0 = 0;
        while jk0 < m {
            let b = BLOCK.min(m - jk0);
            for i in 0..n {
                let row = &spec[i * m + jk0..i * m + jk0 + b];
                for (bb, &v) in row.iter().enumerate() {
                    let jk = jk0 + bb;
                    self.blk[bb * n + i] = v * mult(i, jk / nc, jk % nc);
                }
            }
            self.cinv
                .process_with_scratch(&mut self.blk[..b * n], &mut self.scratch_c);
            for i in 0..n {
                let row = &mut self.work[i * m + jk0..i * m + jk0 + b];
                for (bb, v) in row.iter_mut().enumerate() {
                    *v = self.blk[bb * n + i];
                }
            }
            jk0 += b;
        }

        // j axis
        for i in 0..n {
            let plane = &mut self.work[i * n * nc..(i + 1) * n * nc];
            for kc in 0..nc {
                for j in 0..n {
                    self.batch[kc * n + j] = plane[j * nc + kc];
                }
            }
            self.cinv
                .process_with_scratch(&mut self.batch[..nc * n], &mut self.scratch_c);
            for kc in 0..nc {
                for j in 0..n {
                    plane[j * nc + kc] = self.batch[kc * n + j];
                }
            }
        }

        // k axis: the DC and Nyquist bins must be exactly real for c2r
        for l in 0..n * n {
            self.line_c
                .copy_from_slice(&self.work[l * nc..(l + 1) * nc]);
            self.line_c[0].im = 0.0;
            self.line_c[nc - 1].im = 0.0;
            self.c2r
                .process_with_scratch(
                    &mut self.line_c,
                    &mut real[l * n..(l + 1) * n],
                    &mut self.scratch_r,
                )
                .expect("c2r");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field(n: usize) -> Vec<f64> {
        (0..n * n * n)
            .map(|t| {
                let i = t / (n * n);
                let j = (t / n) % n;
                let k = t % n;
                (0.3 + i as f64 * 0.17).sin() * (1.1 + j as f64 * 0.43).cos()
                    + 0.2 * (k as f64 * 0.71).sin()
                    + 0.05 * (i as f64 + 2.0 * j as f64 + 3.0 * k as f64)
            })
            .collect()
    }

    #[test]
    fn roundtrip_is_identity() {
        for &n in &[16, 32] {
            let mut fft = Fft3::new(n);
            let f = sample_field(n);
            let mut spec = vec![Complex64::default(); fft.spec_len()];
            let mut back = vec![0.0; n * n * n];
            fft.forward(&f, &mut spec);
            fft.inverse(&spec, &mut back);
            let err = f
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "roundtrip error {err} at n={n}");
        }
    }

    #[test]
    fn single_cosine_lands_on_one_bin() {
        let n = 16;
        let nc = n / 2 + 1;
        let mut fft = Fft3::new(n);
        let f: Vec<f64> = (0..n * n * n)
            .map(|t| {
                let k = t % n;
                (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()
            })
            .collect();
        let mut spec = vec![Complex64::default(); fft.spec_len()];
        fft.forward(&f, &mut spec);
        // cos(theta_k): c[0,0,1] = 1/2, everything else ~ 0
        for i in 0..n {
            for j in 0..n {
                for kc in 0..nc {
                    let c = spec[(i * n + j) * nc + kc];
                    let want = if i == 0 && j == 0 && kc == 1 { 0.5 } else { 0.0 };
                    assert!(
                        (c.re - want).abs() < 1e-13 && c.im.abs() < 1e-13,
                        "bin ({i},{j},{kc}) = {c}"
                    );
                }
            }
        }
    }

    #[test]
    fn parseval_with_hermitian_weights() {
        let n = 16;
        let nc = n / 2 + 1;
        let mut fft = Fft3::new(n);
        let f = sample_field(n);
        let mut spec = vec![Complex64::default(); fft.spec_len()];
        fft.forward(&f, &mut spec);
        let sum_phys: f64 = f.iter().map(|v| v * v).sum::<f64>() / (n * n * n) as f64;
        let mut sum_spec = 0.0;
        for i in 0..n {
            for j in 0..n {
                for kc in 0..nc {
                    sum_spec += herm_weight(kc, n) * spec[(i * n + j) * nc + kc].norm_sqr();
                }
            }
        }
        assert!(
            (sum_phys - sum_spec).abs() < 1e-12 * sum_phys.max(1.0),
            "{sum_phys} vs {sum_spec}"
        );
    }

    #[test]
    fn inverse_mult_shifts_phase() {
        // multiplying by exp(-2 pi i j0/n * m_j) translates the field by j0 cells
        let n = 16;
        let mut fft = Fft3::new(n);
        let f = sample_field(n);
        let mut spec = vec![Complex64::default(); fft.spec_len()];
        fft.forward(&f, &mut spec);
        let j0 = 3usize;
        let mut shifted = vec![0.0; n * n * n];
        fft.inverse_mult(
            &spec,
            |_, j, _| {
                let mj = fold_mode(j, n) as f64;
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * j0 as f64 * mj / n as f64)
            },
            &mut shifted,
        );
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let jj = (j + n - j0) % n;
                    let a = shifted[(i * n + j) * n + k];
                    let b = f[(i * n + jj) * n + k];
                    err = err.max((a - b).abs());
                }
            }
        }
        assert!(err < 1e-11, "shift error {err}");
    }
}
