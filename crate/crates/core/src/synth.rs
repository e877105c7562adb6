//! Deterministic and seeded test-field constructors.
//!
//! Random fields are sums of a few Gaussian blobs with centers confined to
//! the inner half of the box, so everything decays well inside the decay
//! margin. Solenoidal velocities are analytic curls of random potentials
//! (divergence free by construction, not by projection); unit directors are
//! normalized perturbations of a constant axis, so the unit constraint is
//! exact at the nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid3, ScalarField, VectorField};

/// Sum of Gaussian blobs with analytic derivatives.
#[derive(Debug, Clone)]
pub struct BlobSum {
    terms: Vec<Blob>,
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    amp: f64,
    center: [f64; 3],
    inv_w2: f64,
}

impl BlobSum {
    /// Centers stay within 0.2 L of the origin and widths within
    /// [0.11, 0.15] L: narrow enough that the samples are periodic and below
    /// the decay margin to machine-level accuracy, wide enough that grids
    /// with n >= 64 resolve the spectrum to rounding.
    fn random(rng: &mut ChaCha8Rng, grid: Grid3, terms: usize, amp: f64) -> Self {
        let half = 0.115 * grid.box_half();
        let terms = (0..terms)
            .map(|_| Blob {
                amp: rng.gen_range(-amp..amp),
                center: [
                    rng.gen_range(-half..half),
                    rng.gen_range(-half..half),
                    rng.gen_range(-half..half),
                ],
                inv_w2: {
                    let w = rng.gen_range(0.11..0.15) * grid.box_half();
                    1.0 / (w * w)
                },
            })
            .collect();
        BlobSum { terms }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|b| {
                let d0 = x[0] - b.center[0];
                let d1 = x[1] - b.center[1];
                let d2 = x[2] - b.center[2];
                b.amp * (-(d0 * d0 + d1 * d1 + d2 * d2) * b.inv_w2).exp()
            })
            .sum()
    }

    pub fn grad(&self, x: [f64; 3]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for b in &self.terms {
            let d = [
                x[0] - b.center[0],
                x[1] - b.center[1],
                x[2] - b.center[2],
            ];
            let e = b.amp * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * b.inv_w2).exp();
            for a in 0..3 {
                g[a] -= 2.0 * d[a] * b.inv_w2 * e;
            }
        }
        g
    }
}

/// Seeded smooth decaying scalar.
pub fn random_scalar(grid: Grid3, seed: u64, terms: usize) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = BlobSum::random(&mut rng, grid, terms, 1.0);
    ScalarField::from_fn(grid, |x| f.eval(x))
}

/// Seeded smooth decaying vector field (no divergence constraint).
pub fn random_vector(grid: Grid3, seed: u64, terms: usize) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs: [BlobSum; 3] = std::array::from_fn(|_| BlobSum::random(&mut rng, grid, terms, 1.0));
    VectorField::from_fn(grid, |x| [fs[0].eval(x), fs[1].eval(x), fs[2].eval(x)])
}

/// Seeded solenoidal velocity: the analytic curl of a random potential.
pub fn random_solenoidal(grid: Grid3, seed: u64, terms: usize) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let pot: [BlobSum; 3] = std::array::from_fn(|_| BlobSum::random(&mut rng, grid, terms, 1.0));
    VectorField::from_fn(grid, |x| {
        let g0 = pot[0].grad(x);
        let g1 = pot[1].grad(x);
        let g2 = pot[2].grad(x);
        [g1[2] - g2[1], g2[0] - g0[2], g0[1] - g1[0]]
    })
}

/// Seeded unit director: a constant axis plus a decaying perturbation,
/// normalized at every node. The perturbation stays below 0.4 in magnitude,
/// so the normalization never divides by anything small.
pub fn random_unit_director(grid: Grid3, seed: u64, terms: usize) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xd14));
    let fs: [BlobSum; 3] = std::array::from_fn(|_| BlobSum::random(&mut rng, grid, terms, 0.2));
    VectorField::from_fn(grid, |x| {
        let w = [fs[0].eval(x), fs[1].eval(x), fs[2].eval(x)];
        let v = [w[0], w[1], 1.0 + w[2]];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / norm, v[1] / norm, v[2] / norm]
    })
}

/// Classical cellular vortex, divergence free in closed form. One full
/// period across the box on each axis.
pub fn taylor_green(grid: Grid3, amp: f64) -> VectorField {
    let k = std::f64::consts::PI / grid.box_half();
    VectorField::from_fn(grid, |x| {
        [
            amp * (k * x[0]).sin() * (k * x[1]).cos() * (k * x[2]).cos(),
            -amp * (k * x[0]).cos() * (k * x[1]).sin() * (k * x[2]).cos(),
            0.0,
        ]
    })
}

/// Unit director winding in the plane by a smooth periodic phase.
pub fn director_winding(grid: Grid3, strength: f64) -> VectorField {
    let k = std::f64::consts::PI / grid.box_half();
    VectorField::from_fn(grid, |x| {
        let phase = strength * (k * x[0]).sin() * (k * x[1]).sin() * (k * x[2]).cos();
        [phase.cos(), phase.sin(), 0.0]
    })
}

/// Radial plateau bump: 1 inside `radius - width`, quintic rolloff to 0 at
/// `radius`.
pub fn plateau_bump(grid: Grid3, radius: f64, width: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let lo = radius - width;
        if r <= lo {
            1.0
        } else if r >= radius {
            0.0
        } else {
            let s = (r - lo) / width;
            1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{divergence, SampledField, Scheme};
    use crate::spectral::SpectralPlan;

    #[test]
    fn random_fields_are_reproducible() {
        let g = Grid3::new(16, 4.0).unwrap();
        let a = random_scalar(g, 7, 4);
        let b = random_scalar(g, 7, 4);
        assert_eq!(a.data, b.data);
        let c = random_scalar(g, 8, 4);
        assert!(a.data != c.data);
    }

    #[test]
    fn solenoidal_fields_have_tiny_divergence() {
        let g = Grid3::new(64, 4.0).unwrap();
        for seed in 0..4 {
            let u = random_solenoidal(g, seed, 4);
            let d = divergence(&u, Scheme::Spectral);
            let scale = u.max_abs().max(1e-30);
            assert!(
                d.max_abs() / scale < 1e-9,
                "seed {seed}: div {} scale {}",
                d.max_abs(),
                scale
            );
        }
    }

    #[test]
    fn solenoidal_fields_survive_projection_unchanged() {
        let g = Grid3::new(64, 4.0).unwrap();
        let u = random_solenoidal(g, 3, 4);
        let mut plan = SpectralPlan::new(g);
        let pu = plan.leray_project(&u);
        for c in 0..3 {
            let err = u.comps[c]
                .data
                .iter()
                .zip(&pu.comps[c].data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9 * u.max_abs().max(1.0), "comp {c} changed by {err}");
        }
    }

    #[test]
    fn director_is_unit_at_every_node() {
        let g = Grid3::new(16, 4.0).unwrap();
        for seed in 0..4 {
            let v = random_unit_director(g, seed, 4);
            for t in 0..g.n() * g.n() * g.n() {
                assert!((v.mag_at(t) - 1.0).abs() < 1e-14);
            }
        }
        let w = director_winding(g, 1.5);
        for t in 0..g.n() * g.n() * g.n() {
            assert!((w.mag_at(t) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn taylor_green_is_divergence_free() {
        let g = Grid3::new(32, std::f64::consts::PI).unwrap();
        let u = taylor_green(g, 1.0);
        let d = divergence(&u, Scheme::Spectral);
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn random_fields_respect_the_decay_margin() {
        let g = Grid3::new(32, 4.0).unwrap();
        assert!(!random_scalar(g, 1, 4).boundary_contaminated());
        let u = random_solenoidal(g, 1, 4);
        assert!(!u.comps[0].boundary_contaminated() || u.comps[0].max_abs() == 0.0);
    }

    #[test]
    fn bump_is_plateau_then_zero() {
        let g = Grid3::new(32, 2.0).unwrap();
        let f = plateau_bump(g, 1.0, 0.2);
        let at = |p: [f64; 3]| {
            let idx = |x: f64| ((x + 2.0) / g.h()).round() as usize;
            f.data[g.idx(idx(p[0]), idx(p[1]), idx(p[2]))]
        };
        assert_eq!(at([0.0, 0.0, 0.0]), 1.0);
        assert_eq!(at([0.5, 0.0, 0.0]), 1.0);
        assert_eq!(at([1.5, 0.0, 0.0]), 0.0);
    }
}
