//! Fourier-side operators on the periodic box.
//!
//! All symbols use the odd-derivative convention (first-order wavenumbers
//! vanish on Nyquist planes), so compositions like the Leray projection
//! followed by a spectral divergence cancel exactly, mode by mode. Zero
//! modes of Riesz-type symbols map to zero; the reconstructed pressure is
//! therefore always mean free. Quadratic products feeding the pressure are
//! dealiased with the 2/3 rule before any multiplier is applied.

use serde::Serialize;
use crate::error::{ElkError, Result};
use crate::fft::{fold_mode, Complex64, Fft3};
use crate::grid::{xi_table, Grid3, ScalarField, VectorField};

pub struct SpectralPlan {
    grid: Grid3,
    fft: Fft3,
    /// Odd-symbol wavenumbers, Nyquist zeroed; indexed by raw DFT index.
    xi1: Vec<f64>,
    /// Even-symbol wavenumbers, Nyquist kept.
    xi2: Vec<f64>,
    /// 2/3-rule keep flags by raw DFT index.
    keep: Vec<bool>,
}

impl SpectralPlan {
    pub fn new(grid: Grid3) -> Self {
        let n = grid.n();
        let keep = (0..n)
            .map(|m| fold_mode(m, n).unsigned_abs() as usize * 3 <= n)
            .collect();
        SpectralPlan {
            grid,
            fft: Fft3::new(n),
            xi1: xi_table(n, grid.box_half(), true),
            xi2: xi_table(n, grid.box_half(), false),
            keep,
        }
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn spec_len(&self) -> usize {
        self.fft.spec_len()
    }

    /// Frequency tables by raw DFT index: `(odd-symbol, even-symbol)`.
    /// The odd symbol zeroes the Nyquist mode (used for first derivatives),
    /// the even one keeps it (used for the Laplacian and heat factors).
    pub(crate) fn xi_tables(&self) -> (&[f64], &[f64]) {
        (&self.xi1, &self.xi2)
    }

    pub fn forward(&mut self, f: &ScalarField) -> Vec<Complex64> {
        let mut spec = vec![Complex64::default(); self.fft.spec_len()];
        self.fft.forward(&f.data, &mut spec);
        spec
    }

    pub fn inverse(&mut self, spec: &[Complex64]) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        self.fft.inverse(spec, &mut out.data);
        out
    }

    pub fn inverse_mult<F>(&mut self, spec: &[Complex64], mult: F) -> ScalarField
    where
        F: Fn(usize, usize, usize) -> Complex64,
    {
        let mut out = ScalarField::zeros(self.grid);
        self.fft.inverse_mult(spec, mult, &mut out.data);
        out
    }

    /// Zero every mode outside the 2/3 ball (per axis).
    pub fn dealias(&self, spec: &mut [Complex64]) {
        let n = self.grid.n();
        let nc = n / 2 + 1;
        let mut t = 0;
        for i in 0..n {
            let ki = self.keep[i];
            for j in 0..n {
                let kj = ki && self.keep[j];
                for kc in 0..nc {
                    if !(kj && self.keep[kc]) {
                        spec[t] = Complex64::default();
                    }
                    t += 1;
                }
            }
        }
    }

    /// Riesz transform along `axis`: symbol `i xi_a / |xi|`, zero mode to 0.
    pub fn riesz(&mut self, f: &ScalarField, axis: usize) -> ScalarField {
        assert!(axis < 3);
        let spec = self.forward(f);
        let xi1 = self.xi1.clone();
        let xi2 = self.xi2.clone();
        self.inverse_mult(&spec, move |i, j, kc| {
            let norm2 = xi2[i] * xi2[i] + xi2[j] * xi2[j] + xi2[kc] * xi2[kc];
            if norm2 == 0.0 {
                Complex64::default()
            } else {
                Complex64::new(0.0, xi1[[i, j, kc][axis]] / norm2.sqrt())
            }
        })
    }

    fn forward_vec(&mut self, v: &VectorField) -> [Vec<Complex64>; 3] {
        [
            self.forward(&v.comps[0]),
            self.forward(&v.comps[1]),
            self.forward(&v.comps[2]),
        ]
    }

    /// Project onto divergence-free fields: `u - xi (xi . u)/|xi|^2`.
    /// Rows where the odd-symbol wavenumber vanishes pass through.
    pub fn leray_project(&mut self, v: &VectorField) -> VectorField {
        let mut spec = self.forward_vec(v);
        self.leray_project_spec(&mut spec);
        VectorField {
            comps: [
                self.inverse(&spec[0]),
                self.inverse(&spec[1]),
                self.inverse(&spec[2]),
            ],
        }
    }

    pub(crate) fn leray_project_spec(&self, spec: &mut [Vec<Complex64>; 3]) {
        let n = self.grid.n();
        let nc = n / 2 + 1;
        let xi1 = &self.xi1;
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                for kc in 0..nc {
                    let xs = [xi1[i], xi1[j], xi1[kc]];
                    let norm2 = xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2];
                    if norm2 > 0.0 {
                        let dot = spec[0][t] * xs[0] + spec[1][t] * xs[1] + spec[2][t] * xs[2];
                        let f = dot / norm2;
                        spec[0][t] -= f * xs[0];
                        spec[1][t] -= f * xs[1];
                        spec[2][t] -= f * xs[2];
                    }
                    t += 1;
                }
            }
        }
    }

    /// Max norm of the spectral divergence.
    pub fn divergence_max(&mut self, v: &VectorField) -> f64 {
        let spec = self.forward_vec(v);
        let n = self.grid.n();
        let nc = n / 2 + 1;
        let mut acc = vec![Complex64::default(); self.fft.spec_len()];
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                for kc in 0..nc {
                    let d = spec[0][t] * self.xi1[i]
                        + spec[1][t] * self.xi1[j]
                        + spec[2][t] * self.xi1[kc];
                    acc[t] = Complex64::new(0.0, 1.0) * d;
                    t += 1;
                }
            }
        }
        self.inverse(&acc).max_abs()
    }

    /// Heat semigroup at time `t > 0`.
    pub fn heat_convolve(&mut self, f: &ScalarField, t: f64) -> Result<ScalarField> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(ElkError::BadParameter(format!(
                "heat time must be positive, got {t}"
            )));
        }
        let spec = self.forward(f);
        Ok(self.heat_from_spec(&spec, t))
    }

    fn heat_from_spec(&mut self, spec: &[Complex64], t: f64) -> ScalarField {
        let xi2 = self.xi2.clone();
        self.inverse_mult(spec, move |i, j, kc| {
            let s = xi2[i] * xi2[i] + xi2[j] * xi2[j] + xi2[kc] * xi2[kc];
            Complex64::new((-s * t).exp(), 0.0)
        })
    }

    /// Dyadic lower bound for `sup_t sqrt(t) |heat(f, t)|_inf`.
    pub fn besov_minus1_norm(&mut self, f: &ScalarField, ladder: &BesovLadder) -> BesovReport {
        let spec = self.forward(f);
        let mut entries = Vec::new();
        let mut best = (0.0f64, ladder.t_min);
        let mut t = ladder.t_min;
        while t <= ladder.t_max * (1.0 + 1e-12) {
            let sup = self.heat_from_spec(&spec, t).max_abs();
            let val = t.sqrt() * sup;
            entries.push(BesovEntry { t, sup_norm: sup, value: val });
            if val > best.0 {
                best = (val, t);
            }
            t *= 2.0;
        }
        BesovReport {
            value: best.0,
            argmax_t: best.1,
            entries,
        }
    }

    /// Pressure from the quadratic stresses: solves
    /// `-lap q = div div (u (x) u + grad v (.) grad v)` with zero mean.
    pub fn pressure_q(
        &mut self,
        u: &VectorField,
        v: Option<&VectorField>,
        div_tol: f64,
    ) -> Result<PressureResult> {
        let div_max = self.divergence_max(u);
        if div_max > div_tol {
            return Err(ElkError::Precondition(format!(
                "pressure needs a divergence-free velocity: max |div u| = {div_max:.3e} > {div_tol:.3e}"
            )));
        }

        // velocity part: dealiased spectra of u_i u_j
        let nvel = self.quadratic_stress_vel(u);
        let q_vel_spec = self.q_from_stress(&nvel);

        // director part: dealiased spectra of sum_k d_i v_k d_j v_k
        let q_dir_spec = match v {
            Some(v) => {
                let ndir = self.quadratic_stress_dir(v);
                Some(self.q_from_stress(&ndir))
            }
            None => None,
        };

        let mut q_spec = q_vel_spec.clone();
        if let Some(d) = &q_dir_spec {
            for (a, b) in q_spec.iter_mut().zip(d) {
                *a += *b;
            }
        }

        let q = self.inverse(&q_spec);
        let xi1 = self.xi1.clone();
        let grad_q = VectorField {
            comps: std::array::from_fn(|axis| {
                let xi1 = xi1.clone();
                self.inverse_mult(&q_spec, move |i, j, kc| {
                    Complex64::new(0.0, xi1[[i, j, kc][axis]])
                })
            }),
        };
        let q_velocity = self.inverse(&q_vel_spec);
        let q_director = match &q_dir_spec {
            Some(d) => self.inverse(d),
            None => ScalarField::zeros(self.grid),
        };
        Ok(PressureResult {
            q,
            grad_q,
            q_velocity,
            q_director,
            div_max,
        })
    }

    /// Dealiased spectra of the six independent entries of `u (x) u`
    /// (order 00, 01, 02, 11, 12, 22).
    fn quadratic_stress_vel(&mut self, u: &VectorField) -> [Vec<Complex64>; 6] {
        let g = self.grid;
        let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        let mut out: [Vec<Complex64>; 6] = std::array::from_fn(|_| Vec::new());
        for (s, &(a, b)) in pairs.iter().enumerate() {
            let mut prod = ScalarField::zeros(g);
            for (o, (x, y)) in prod
                .data
                .iter_mut()
                .zip(u.comps[a].data.iter().zip(&u.comps[b].data))
            {
                *o = x * y;
            }
            let mut spec = self.forward(&prod);
            self.dealias(&mut spec);
            out[s] = spec;
        }
        out
    }

    fn quadratic_stress_dir(&mut self, v: &VectorField) -> [Vec<Complex64>; 6] {
        let g = self.grid;
        // grad v first: nine physical derivative fields
        let specs = self.forward_vec(v);
        let xi1 = self.xi1.clone();
        let mut dv: Vec<ScalarField> = Vec::with_capacity(9);
        for axis in 0..3 {
            for comp in 0..3 {
                let xi1 = xi1.clone();
                dv.push(self.inverse_mult(&specs[comp], move |i, j, kc| {
                    Complex64::new(0.0, xi1[[i, j, kc][axis]])
                }));
            }
        }
        let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        let mut out: [Vec<Complex64>; 6] = std::array::from_fn(|_| Vec::new());
        for (s, &(a, b)) in pairs.iter().enumerate() {
            let mut prod = ScalarField::zeros(g);
            for k in 0..3 {
                let da = &dv[a * 3 + k];
                let db = &dv[b * 3 + k];
                for (o, (x, y)) in prod.data.iter_mut().zip(da.data.iter().zip(&db.data)) {
                    *o += x * y;
                }
            }
            let mut spec = self.forward(&prod);
            self.dealias(&mut spec);
            out[s] = spec;
        }
        out
    }

    /// `q^ = - sum_ij xi_i xi_j N^_ij / |xi|^2`, zero where the odd-symbol
    /// wavenumber vanishes (in particular the mean). Stress spectra come in
    /// the symmetric pair order `(0,0),(0,1),(0,2),(1,1),(1,2),(2,2)`.
    pub(crate) fn q_from_stress(&self, stress: &[Vec<Complex64>; 6]) -> Vec<Complex64> {
        let n = self.grid.n();
        let nc = n / 2 + 1;
        let mut q = vec![Complex64::default(); self.fft.spec_len()];
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                for kc in 0..nc {
                    let xs = [self.xi1[i], self.xi1[j], self.xi1[kc]];
                    let norm2 = xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2];
                    if norm2 > 0.0 {
                        // symmetric contraction, off-diagonals doubled
                        let c = xs[0] * xs[0] * stress[0][t]
                            + 2.0 * xs[0] * xs[1] * stress[1][t]
                            + 2.0 * xs[0] * xs[2] * stress[2][t]
                            + xs[1] * xs[1] * stress[3][t]
                            + 2.0 * xs[1] * xs[2] * stress[4][t]
                            + xs[2] * xs[2] * stress[5][t];
                        q[t] = -c / norm2;
                    }
                    t += 1;
                }
            }
        }
        q
    }

    /// Max-norm residual of `-lap q - div div N` with the same dealiased
    /// stresses the solver used.
    pub fn poisson_residual(&mut self, u: &VectorField, v: Option<&VectorField>, q: &ScalarField) -> f64 {
        let nvel = self.quadratic_stress_vel(u);
        let mut stress = nvel;
        if let Some(v) = v {
            let ndir = self.quadratic_stress_dir(v);
            for (a, b) in stress.iter_mut().zip(&ndir) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += *y;
                }
            }
        }
        let qspec = self.forward(q);
        let n = self.grid.n();
        let nc = n / 2 + 1;
        let mut res = vec![Complex64::default(); self.fft.spec_len()];
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                for kc in 0..nc {
                    let xs = [self.xi1[i], self.xi1[j], self.xi1[kc]];
                    let norm2 = xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2];
                    // div div N has symbol -xi_i xi_j on each stress entry
                    let dd = -(xs[0] * xs[0] * stress[0][t]
                        + 2.0 * xs[0] * xs[1] * stress[1][t]
                        + 2.0 * xs[0] * xs[2] * stress[2][t]
                        + xs[1] * xs[1] * stress[3][t]
                        + 2.0 * xs[1] * xs[2] * stress[4][t]
                        + xs[2] * xs[2] * stress[5][t]);
                    res[t] = norm2 * qspec[t] - dd;
                    t += 1;
                }
            }
        }
        self.inverse(&res).max_abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BesovLadder {
    pub t_min: f64,
    pub t_max: f64,
}

impl BesovLadder {
    /// Declared default: `t_min = h^2`, `t_max = (L/2)^2`.
    pub fn for_grid(grid: Grid3) -> Self {
        BesovLadder {
            t_min: grid.h() * grid.h(),
            t_max: 0.25 * grid.box_half() * grid.box_half(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BesovEntry {
    pub t: f64,
    pub sup_norm: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BesovReport {
    pub value: f64,
    pub argmax_t: f64,
    pub entries: Vec<BesovEntry>,
}

#[derive(Debug, Clone)]
pub struct PressureResult {
    /// Zero-mean reconstructed pressure.
    pub q: ScalarField,
    pub grad_q: VectorField,
    /// Part sourced by `u (x) u`.
    pub q_velocity: ScalarField,
    /// Part sourced by the director stresses.
    pub q_director: ScalarField,
    /// Divergence of the input velocity, for the record.
    pub div_max: f64,
}
