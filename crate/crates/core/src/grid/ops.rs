//! Derivative operators and radial quadrature.
//!
//! Two derivative schemes: `Spectral` (exact for resolved periodic data)
//! and `Fd4` (fourth-order central stencils with periodic wraparound, the
//! right tool for fields that are smooth inside a window but not periodic
//! across the box, evaluated away from the faces).

use super::{SampledField, ScalarField, TensorField, VectorField};
use crate::fft::{Complex64, Fft3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Spectral,
    Fd4,
}

/// Wavenumber along one axis by raw DFT index. `zero_nyquist` is the odd
/// derivative convention; keep the Nyquist mode for even symbols.
pub(crate) fn xi_table(n: usize, box_half: f64, zero_nyquist: bool) -> Vec<f64> {
    let base = std::f64::consts::PI / box_half;
    (0..n)
        .map(|m| {
            let f = crate::fft::fold_mode(m, n);
            if zero_nyquist && 2 * m == n {
                0.0
            } else {
                base * f as f64
            }
        })
        .collect()
}

fn spectral_partials(f: &ScalarField, axes: &[usize]) -> Vec<ScalarField> {
    let g = f.grid;
    let n = g.n();
    let mut fft = Fft3::new(n);
    let mut spec = vec![Complex64::default(); fft.spec_len()];
    fft.forward(&f.data, &mut spec);
    let xi = xi_table(n, g.box_half(), true);
    axes.iter()
        .map(|&axis| {
            let mut out = ScalarField::zeros(g);
            fft.inverse_mult(
                &spec,
                |i, j, kc| {
                    let m = [i, j, kc][axis];
                    Complex64::new(0.0, xi[m])
                },
                &mut out.data,
            );
            out
        })
        .collect()
}

fn fd4_partial(f: &ScalarField, axis: usize) -> ScalarField {
    let g = f.grid;
    let n = g.n();
    let inv12h = 1.0 / (12.0 * g.h());
    let mut out = ScalarField::zeros(g);
    let stride = match axis {
        0 => n * n,
        1 => n,
        _ => 1,
    };
    let wrap = |m: usize, d: isize| -> usize { ((m as isize + d).rem_euclid(n as isize)) as usize };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let m = [i, j, k][axis];
                let base = g.idx(i, j, k) as isize - (m * stride) as isize;
                let at = |d: isize| f.data[(base + (wrap(m, d) * stride) as isize) as usize];
                out.data[g.idx(i, j, k)] =
                    (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) * inv12h;
            }
        }
    }
    out
}

fn fd4_second(f: &ScalarField, axis: usize) -> ScalarField {
    let g = f.grid;
    let n = g.n();
    let h2 = g.h() * g.h();
    let inv12h2 = 1.0 / (12.0 * h2);
    let mut out = ScalarField::zeros(g);
    let stride = match axis {
        0 => n * n,
        1 => n,
        _ => 1,
    };
    let wrap = |m: usize, d: isize| -> usize { ((m as isize + d).rem_euclid(n as isize)) as usize };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let m = [i, j, k][axis];
                let base = g.idx(i, j, k) as isize - (m * stride) as isize;
                let at = |d: isize| f.data[(base + (wrap(m, d) * stride) as isize) as usize];
                out.data[g.idx(i, j, k)] =
                    (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) * inv12h2;
            }
        }
    }
    out
}

pub fn gradient(f: &ScalarField, scheme: Scheme) -> VectorField {
    match scheme {
        Scheme::Spectral => {
            let mut parts = spectral_partials(f, &[0, 1, 2]);
            let c2 = parts.pop().unwrap();
            let c1 = parts.pop().unwrap();
            let c0 = parts.pop().unwrap();
            VectorField { comps: [c0, c1, c2] }
        }
        Scheme::Fd4 => VectorField {
            comps: [fd4_partial(f, 0), fd4_partial(f, 1), fd4_partial(f, 2)],
        },
    }
}

/// Jacobian with entry `(i, j)` = derivative of component j along axis i.
pub fn jacobian(v: &VectorField, scheme: Scheme) -> TensorField {
    let g = v.grid();
    let mut out = TensorField::zeros(g);
    for jc in 0..3 {
        let grad = gradient(&v.comps[jc], scheme);
        for (axis, part) in grad.comps.into_iter().enumerate() {
            out.comps[axis][jc] = part;
        }
    }
    out
}

pub fn laplacian(f: &ScalarField, scheme: Scheme) -> ScalarField {
    match scheme {
        Scheme::Spectral => {
            let g = f.grid;
            let n = g.n();
            let mut fft = Fft3::new(n);
            let mut spec = vec![Complex64::default(); fft.spec_len()];
            fft.forward(&f.data, &mut spec);
            let xi = xi_table(n, g.box_half(), false);
            let mut out = ScalarField::zeros(g);
            fft.inverse_mult(
                &spec,
                |i, j, kc| {
                    let s = xi[i] * xi[i] + xi[j] * xi[j] + xi[kc] * xi[kc];
                    Complex64::new(-s, 0.0)
                },
                &mut out.data,
            );
            out
        }
        Scheme::Fd4 => {
            let mut out = fd4_second(f, 0);
            for axis in 1..3 {
                let part = fd4_second(f, axis);
                for (o, p) in out.data.iter_mut().zip(&part.data) {
                    *o += p;
                }
            }
            out
        }
    }
}

pub fn laplacian_vector(v: &VectorField, scheme: Scheme) -> VectorField {
    VectorField {
        comps: [
            laplacian(&v.comps[0], scheme),
            laplacian(&v.comps[1], scheme),
            laplacian(&v.comps[2], scheme),
        ],
    }
}

pub fn divergence(v: &VectorField, scheme: Scheme) -> ScalarField {
    match scheme {
        Scheme::Spectral => {
            let g = v.grid();
            let n = g.n();
            let mut fft = Fft3::new(n);
            let mut acc = vec![Complex64::default(); fft.spec_len()];
            let mut spec = vec![Complex64::default(); fft.spec_len()];
            let xi = xi_table(n, g.box_half(), true);
            let nc = n / 2 + 1;
            for axis in 0..3 {
                fft.forward(&v.comps[axis].data, &mut spec);
                let mut t = 0;
                for i in 0..n {
                    for j in 0..n {
                        for kc in 0..nc {
                            let m = [i, j, kc][axis];
                            acc[t] += Complex64::new(0.0, xi[m]) * spec[t];
                            t += 1;
                        }
                    }
                }
            }
            let mut out = ScalarField::zeros(g);
            fft.inverse(&acc, &mut out.data);
            out
        }
        Scheme::Fd4 => {
            let mut out = fd4_partial(&v.comps[0], 0);
            for axis in 1..3 {
                let part = fd4_partial(&v.comps[axis], axis);
                for (o, p) in out.data.iter_mut().zip(&part.data) {
                    *o += p;
                }
            }
            out
        }
    }
}

/// Component i of the result is `sum_j d_j T(i, j)`.
pub fn tensor_divergence(t: &TensorField, scheme: Scheme) -> VectorField {
    let g = t.grid();
    let mut out = VectorField::zeros(g);
    for i in 0..3 {
        let row = VectorField {
            comps: [
                t.comps[i][0].clone(),
                t.comps[i][1].clone(),
                t.comps[i][2].clone(),
            ],
        };
        out.comps[i] = divergence(&row, scheme);
    }
    out
}

/// Result of a masked radial quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    /// One-cell linear ramp across each sphere.
    pub smoothed: f64,
    /// Sharp indicator values for comparison.
    pub sharp: f64,
    /// Shell or ball thinner than four cells.
    pub under_resolved: bool,
    /// Part of the mask leaves the inscribed sphere of the box.
    pub boundary_clipped: bool,
}

fn radial_quad<F: SampledField>(
    f: &F,
    inner: Option<f64>,
    outer: f64,
    p: f64,
) -> QuadResult {
    let g = f.grid();
    let n = g.n();
    let h = g.h();
    let coords = g.axis_coords();
    let pow = |v: f64| -> f64 {
        if p == 1.0 {
            v
        } else if p == 2.0 {
            v * v
        } else if p == 3.0 {
            v * v * v
        } else {
            v.powf(p)
        }
    };
    let out_lo = outer - 0.5 * h;
    let out_hi = outer + 0.5 * h;
    let (in_lo, in_hi) = match inner {
        Some(r) => (r - 0.5 * h, r + 0.5 * h),
        None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
    };
    let mut sm = 0.0;
    let mut sh = 0.0;
    let mut t = 0;
    for i in 0..n {
        let x2 = coords[i] * coords[i];
        for j in 0..n {
            let y2 = coords[j] * coords[j];
            for k in 0..n {
                let z2 = coords[k] * coords[k];
                let r2 = x2 + y2 + z2;
                // outer mask
                let mo;
                let so;
                if r2 <= out_lo * out_lo {
                    mo = 1.0;
                    so = true;
                } else if r2 >= out_hi * out_hi {
                    t += 1;
                    continue;
                } else {
                    let r = r2.sqrt();
                    mo = (out_hi - r) / h;
                    so = r < outer;
                }
                // inner mask (1 - ball(inner))
                let mut m = mo;
                let mut s = so;
                if let Some(ri) = inner {
                    if r2 <= in_lo * in_lo {
                        t += 1;
                        continue;
                    }
                    if r2 < in_hi * in_hi {
                        let r = r2.sqrt();
                        m *= 1.0 - (in_hi - r) / h;
                        s = s && r >= ri;
                    }
                }
                if m > 0.0 || s {
                    let v = pow(f.abs_at(t));
                    sm += m * v;
                    if s {
                        sh += v;
                    }
                }
                t += 1;
            }
        }
    }
    let vol = g.cell_volume();
    let thin = match inner {
        Some(ri) => (outer - ri) < 4.0 * h,
        None => outer < 4.0 * h,
    };
    QuadResult {
        smoothed: sm * vol,
        sharp: sh * vol,
        under_resolved: thin,
        boundary_clipped: out_hi > g.box_half(),
    }
}

/// Integral of `|f|^p` over the ball `|x| < radius`.
pub fn ball_integral<F: SampledField>(f: &F, radius: f64, p: f64) -> QuadResult {
    radial_quad(f, None, radius, p)
}

/// Integral of `|f|^p` over the shell `outer/2 < |x| < outer`.
pub fn annulus_integral<F: SampledField>(f: &F, outer: f64, p: f64) -> QuadResult {
    radial_quad(f, Some(0.5 * outer), outer, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid3;
    use std::f64::consts::PI;

    #[test]
    fn spectral_gradient_of_plane_wave() {
        let g = Grid3::new(32, PI).unwrap();
        let f = ScalarField::from_fn(g, |x| (2.0 * x[0]).sin() * (3.0 * x[2]).cos());
        let grad = gradient(&f, Scheme::Spectral);
        let want0 = ScalarField::from_fn(g, |x| 2.0 * (2.0 * x[0]).cos() * (3.0 * x[2]).cos());
        let want2 = ScalarField::from_fn(g, |x| -3.0 * (2.0 * x[0]).sin() * (3.0 * x[2]).sin());
        let e0 = grad.comps[0]
            .data
            .iter()
            .zip(&want0.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let e1 = grad.comps[1].max_abs();
        let e2 = grad.comps[2]
            .data
            .iter()
            .zip(&want2.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(e0 < 1e-12 && e1 < 1e-12 && e2 < 1e-12, "{e0} {e1} {e2}");
    }

    #[test]
    fn spectral_gradient_of_gaussian() {
        let g = Grid3::new(64, 8.0).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()
        });
        let grad = gradient(&f, Scheme::Spectral);
        let mut err: f64 = 0.0;
        let n = g.n();
        let coords = g.axis_coords();
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let r2 = coords[i] * coords[i] + coords[j] * coords[j] + coords[k] * coords[k];
                    let w0 = -2.0 * coords[i] * (-r2).exp();
                    err = err.max((grad.comps[0].data[t] - w0).abs());
                    t += 1;
                }
            }
        }
        assert!(err < 1e-11, "gaussian gradient err {err}");
    }

    #[test]
    fn laplacian_matches_divergence_of_gradient() {
        let g = Grid3::new(32, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            (PI * x[0] / 2.0).sin() * (PI * x[1]).cos() + 0.3 * (PI * x[2] / 2.0).cos()
        });
        let lap = laplacian(&f, Scheme::Spectral);
        let div_grad = divergence(&gradient(&f, Scheme::Spectral), Scheme::Spectral);
        let err = lap
            .data
            .iter()
            .zip(&div_grad.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn tensor_divergence_of_jacobian_is_gradient_of_divergence() {
        let g = Grid3::new(32, PI).unwrap();
        let v = VectorField::from_fn(g, |x| {
            [
                (x[0]).sin() * (x[1]).cos(),
                (2.0 * x[1]).sin(),
                (x[0] + x[2]).cos(),
            ]
        });
        let lhs = tensor_divergence(&jacobian(&v, Scheme::Spectral), Scheme::Spectral);
        let rhs = gradient(&divergence(&v, Scheme::Spectral), Scheme::Spectral);
        for c in 0..3 {
            let err = lhs.comps[c]
                .data
                .iter()
                .zip(&rhs.comps[c].data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "component {c}: {err}");
        }
    }

    #[test]
    fn fd4_exact_on_cubics_in_the_interior() {
        let g = Grid3::new(32, 4.0).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            x[0] * x[0] * x[0] + 2.0 * x[0] * x[1] - x[2] * x[2] + 5.0
        });
        let grad = gradient(&f, Scheme::Fd4);
        let lap = laplacian(&f, Scheme::Fd4);
        let n = g.n();
        let coords = g.axis_coords();
        let mut egrad: f64 = 0.0;
        let mut elap: f64 = 0.0;
        for i in 2..n - 2 {
            for j in 2..n - 2 {
                for k in 2..n - 2 {
                    let t = g.idx(i, j, k);
                    let (x, y) = (coords[i], coords[j]);
                    egrad = egrad.max((grad.comps[0].data[t] - (3.0 * x * x + 2.0 * y)).abs());
                    egrad = egrad.max((grad.comps[1].data[t] - 2.0 * x).abs());
                    egrad = egrad.max((grad.comps[2].data[t] + 2.0 * coords[k]).abs());
                    elap = elap.max((lap.data[t] - (6.0 * x - 2.0)).abs());
                }
            }
        }
        assert!(egrad < 1e-11 && elap < 1e-10, "{egrad} {elap}");
    }

    #[test]
    fn shell_volume_oracle() {
        // integral of 1 over {R/2 < |x| < R} is (7/6) pi R^3
        let g = Grid3::new(128, 8.0).unwrap();
        let one = ScalarField::from_fn(g, |_| 1.0);
        let r = 4.0;
        let q = annulus_integral(&one, r, 1.0);
        let want = 7.0 / 6.0 * PI * r * r * r;
        let rel = (q.smoothed - want).abs() / want;
        assert!(rel < 5e-3, "smoothed shell volume off by {rel}");
        assert!(!q.under_resolved && !q.boundary_clipped);
    }

    #[test]
    fn ball_volume_oracle() {
        let g = Grid3::new(64, 2.0).unwrap();
        let one = ScalarField::from_fn(g, |_| 1.0);
        let q = ball_integral(&one, 1.0, 1.0);
        let want = 4.0 / 3.0 * PI;
        assert!((q.smoothed - want).abs() / want < 5e-3);
    }

    #[test]
    fn annulus_flags() {
        let g = Grid3::new(16, 8.0).unwrap();
        let one = ScalarField::from_fn(g, |_| 1.0);
        assert!(annulus_integral(&one, 2.0, 1.0).under_resolved); // shell width 1 < 4h = 4
        assert!(annulus_integral(&one, 9.0, 1.0).boundary_clipped);
    }
}
