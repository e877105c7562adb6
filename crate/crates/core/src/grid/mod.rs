//! Periodic cubic lattice and the field types that live on it.
//!
//! The box is `[-L, L)^3` sampled at `n` equispaced nodes per axis
//! (`n` a power of two, at least 16), node `(i, j, k)` sitting at
//! `(-L + i h, -L + j h, -L + k h)` with `h = 2L/n`. Data is stored flat
//! with k fastest; every integral in the crate is the plain `h^3` sum,
//! which is spectrally accurate for smooth periodic integrands.

mod cutoff;
mod io;
mod ops;

pub use cutoff::Cutoff;
pub(crate) use cutoff::{smoothstep, smoothstep_d1};
pub use io::{read_field, write_field, AnyField, ELF3_HEADER_LEN};
pub use ops::{
    annulus_integral, ball_integral, divergence, gradient, jacobian, laplacian,
    laplacian_vector, tensor_divergence, QuadResult, Scheme,
};
pub(crate) use ops::xi_table;

use crate::error::{ElkError, Result};

/// Decay margin: fields fed to whole-space interpretations should be below
/// `1e-8 * max|f|` outside the ball `|x| > 0.9 L`.
pub const DECAY_MARGIN_RADIUS: f64 = 0.9;
pub const DECAY_MARGIN_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    n: usize,
    box_half: f64,
}

impl Grid3 {
    pub fn new(n: usize, box_half: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(ElkError::BadGridSize(n));
        }
        if !(box_half > 0.0) || !box_half.is_finite() {
            return Err(ElkError::BadBoxHalf(box_half));
        }
        Ok(Grid3 { n, box_half })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn box_half(&self) -> f64 {
        self.box_half
    }

    /// Grid spacing `h = 2L/n`.
    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.box_half / self.n as f64
    }

    /// Quadrature weight of one node.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let h = self.h();
        h * h * h
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// Coordinate of index `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.box_half + i as f64 * self.h()
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Decompose a flat index.
    #[inline]
    pub fn unravel(&self, t: usize) -> (usize, usize, usize) {
        let n = self.n;
        (t / (n * n), (t / n) % n, t % n)
    }

    pub fn same_as(&self, other: &Grid3) -> Result<()> {
        if self.n != other.n || self.box_half != other.box_half {
            return Err(ElkError::GridMismatch(self.n, other.n));
        }
        Ok(())
    }

    /// Coordinates along one axis, precomputed.
    pub fn axis_coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Grid3,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VectorField {
    pub comps: [ScalarField; 3],
}

#[derive(Debug, Clone)]
pub struct TensorField {
    /// Entry `(i, j)` holds the field whose continuum meaning, for a
    /// jacobian of `v`, is the derivative of component j along axis i.
    pub comps: [[ScalarField; 3]; 3],
}

impl ScalarField {
    pub fn zeros(grid: Grid3) -> Self {
        ScalarField {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn<F: FnMut([f64; 3]) -> f64>(grid: Grid3, mut f: F) -> Self {
        let n = grid.n();
        let coords = grid.axis_coords();
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    data.push(f([coords[i], coords[j], coords[k]]));
                }
            }
        }
        ScalarField { grid, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// Plain `h^3` sum of the samples.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }
}

impl VectorField {
    pub fn zeros(grid: Grid3) -> Self {
        VectorField {
            comps: [
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
            ],
        }
    }

    pub fn from_fn<F: FnMut([f64; 3]) -> [f64; 3]>(grid: Grid3, mut f: F) -> Self {
        let n = grid.n();
        let coords = grid.axis_coords();
        let mut out = VectorField::zeros(grid);
        let mut t = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = f([coords[i], coords[j], coords[k]]);
                    out.comps[0].data[t] = v[0];
                    out.comps[1].data[t] = v[1];
                    out.comps[2].data[t] = v[2];
                    t += 1;
                }
            }
        }
        out
    }

    #[inline]
    pub fn grid(&self) -> Grid3 {
        self.comps[0].grid
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// Pointwise Euclidean magnitude at flat index `t`.
    #[inline]
    pub fn mag_at(&self, t: usize) -> f64 {
        let a = self.comps[0].data[t];
        let b = self.comps[1].data[t];
        let c = self.comps[2].data[t];
        (a * a + b * b + c * c).sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.comps.iter().map(|c| c.l2_norm_sq()).sum()
    }
}

impl TensorField {
    pub fn zeros(grid: Grid3) -> Self {
        TensorField {
            comps: std::array::from_fn(|_| std::array::from_fn(|_| ScalarField::zeros(grid))),
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid3 {
        self.comps[0][0].grid
    }

    /// Pointwise Frobenius magnitude at flat index `t`.
    #[inline]
    pub fn mag_at(&self, t: usize) -> f64 {
        let mut s = 0.0;
        for row in &self.comps {
            for c in row {
                let v = c.data[t];
                s += v * v;
            }
        }
        s.sqrt()
    }

    /// `h^3` sum of the squared Frobenius norm.
    pub fn frobenius_sq_integral(&self) -> f64 {
        let mut s = 0.0;
        for row in &self.comps {
            for c in row {
                s += c.data.iter().map(|v| v * v).sum::<f64>();
            }
        }
        s * self.grid().cell_volume()
    }
}

/// Pointwise magnitude view shared by the quadrature and norm routines.
pub trait SampledField {
    fn grid(&self) -> Grid3;
    fn abs_at(&self, t: usize) -> f64;

    /// True when the magnitudes fail the whole-space decay margin.
    fn boundary_contaminated(&self) -> bool {
        boundary_contaminated(self.grid(), |t| self.abs_at(t))
    }
}

impl SampledField for ScalarField {
    fn grid(&self) -> Grid3 {
        self.grid
    }
    #[inline]
    fn abs_at(&self, t: usize) -> f64 {
        self.data[t].abs()
    }
}

impl SampledField for VectorField {
    fn grid(&self) -> Grid3 {
        self.grid()
    }
    #[inline]
    fn abs_at(&self, t: usize) -> f64 {
        self.mag_at(t)
    }
}

impl SampledField for TensorField {
    fn grid(&self) -> Grid3 {
        self.grid()
    }
    #[inline]
    fn abs_at(&self, t: usize) -> f64 {
        self.mag_at(t)
    }
}

fn boundary_contaminated(grid: Grid3, abs_at: impl Fn(usize) -> f64) -> bool {
    let n = grid.n();
    let coords = grid.axis_coords();
    let r0 = DECAY_MARGIN_RADIUS * grid.box_half();
    let mut max_all: f64 = 0.0;
    let mut max_out: f64 = 0.0;
    let mut t = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = abs_at(t);
                max_all = max_all.max(v);
                let r2 = coords[i] * coords[i] + coords[j] * coords[j] + coords[k] * coords[k];
                if r2 > r0 * r0 {
                    max_out = max_out.max(v);
                }
                t += 1;
            }
        }
    }
    max_out > DECAY_MARGIN_REL * max_all && max_all > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid3::new(8, 1.0).is_err());
        assert!(Grid3::new(48, 1.0).is_err());
        assert!(Grid3::new(16, 0.0).is_err());
        assert!(Grid3::new(16, -2.0).is_err());
        assert!(Grid3::new(16, 1.0).is_ok());
    }

    #[test]
    fn node_layout() {
        let g = Grid3::new(16, 4.0).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.node(0, 0, 0), [-4.0, -4.0, -4.0]);
        assert_eq!(g.node(8, 8, 8), [0.0, 0.0, 0.0]);
        assert_eq!(g.cell_volume(), 0.125);
        // k fastest
        assert_eq!(g.idx(0, 0, 1), 1);
        assert_eq!(g.idx(0, 1, 0), 16);
        assert_eq!(g.idx(1, 0, 0), 256);
        for t in [0usize, 1, 17, 255, 4095] {
            let (i, j, k) = g.unravel(t);
            assert_eq!(g.idx(i, j, k), t);
        }
    }

    #[test]
    fn integral_of_one_is_box_volume() {
        let g = Grid3::new(16, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |_| 1.0);
        assert!((f.integral() - 64.0).abs() < 1e-12);
    }

    #[test]
    fn decay_margin_flags_growing_field() {
        let g = Grid3::new(16, 4.0).unwrap();
        let grow = ScalarField::from_fn(g, |x| x[0]);
        assert!(grow.boundary_contaminated());
        let local = ScalarField::from_fn(g, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            (-4.0 * r2).exp()
        });
        assert!(!local.boundary_contaminated());
    }
}
