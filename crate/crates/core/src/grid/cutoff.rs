//! Radial cutoff with closed-form gradient and Laplacian.
//!
//! `theta_R` equals 1 on the ball `|x| < R/2`, 0 outside `|x| > R`, and
//! descends through a C^2 quintic smoothstep in between, so
//! `|grad theta_R| <= c/R` and `|lap theta_R| <= c/R^2` with R-independent
//! constants. The derivative fields are evaluated from the closed forms,
//! never by differencing, which keeps annulus-supported test integrals
//! exact in the profile.

use super::{Grid3, ScalarField, VectorField};
use crate::error::{ElkError, Result};

#[derive(Debug, Clone, Copy)]
pub struct Cutoff {
    radius: f64,
}

#[inline]
pub(crate) fn smoothstep(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

#[inline]
pub(crate) fn smoothstep_d1(s: f64) -> f64 {
    30.0 * s * s * (s - 1.0) * (s - 1.0)
}

#[inline]
fn smoothstep_d2(s: f64) -> f64 {
    s * (60.0 + s * (-180.0 + 120.0 * s))
}

impl Cutoff {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius >= 1.0) || !radius.is_finite() {
            return Err(ElkError::BadParameter(format!(
                "cutoff radius must be >= 1, got {radius}"
            )));
        }
        Ok(Cutoff { radius })
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    fn s(&self, r: f64) -> f64 {
        (2.0 * r - self.radius) / self.radius
    }

    pub fn theta_radial(&self, r: f64) -> f64 {
        if r <= 0.5 * self.radius {
            1.0
        } else if r >= self.radius {
            0.0
        } else {
            1.0 - smoothstep(self.s(r))
        }
    }

    /// d theta / dr.
    pub fn dtheta_radial(&self, r: f64) -> f64 {
        if r <= 0.5 * self.radius || r >= self.radius {
            0.0
        } else {
            -smoothstep_d1(self.s(r)) * 2.0 / self.radius
        }
    }

    fn d2theta_radial(&self, r: f64) -> f64 {
        if r <= 0.5 * self.radius || r >= self.radius {
            0.0
        } else {
            -smoothstep_d2(self.s(r)) * 4.0 / (self.radius * self.radius)
        }
    }

    pub fn theta(&self, x: [f64; 3]) -> f64 {
        self.theta_radial((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
    }

    pub fn grad(&self, x: [f64; 3]) -> [f64; 3] {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let d = self.dtheta_radial(r);
        if d == 0.0 {
            [0.0; 3]
        } else {
            [d * x[0] / r, d * x[1] / r, d * x[2] / r]
        }
    }

    pub fn laplacian(&self, x: [f64; 3]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r <= 0.5 * self.radius || r >= self.radius {
            0.0
        } else {
            self.d2theta_radial(r) + 2.0 * self.dtheta_radial(r) / r
        }
    }

    pub fn theta_field(&self, grid: Grid3) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.theta(x))
    }

    pub fn grad_field(&self, grid: Grid3) -> VectorField {
        VectorField::from_fn(grid, |x| self.grad(x))
    }

    pub fn laplacian_field(&self, grid: Grid3) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.laplacian(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_support_and_junctions() {
        let c = Cutoff::new(3.0).unwrap();
        assert_eq!(c.theta_radial(0.0), 1.0);
        assert_eq!(c.theta_radial(1.49), 1.0);
        assert_eq!(c.theta_radial(3.0), 0.0);
        assert_eq!(c.theta_radial(17.0), 0.0);
        // C^2 junctions: value, slope and curvature all meet
        for r in [1.5, 3.0] {
            assert!((c.theta_radial(r) - c.theta_radial(r - 1e-12)).abs() < 1e-9);
            assert!(c.dtheta_radial(r + 1e-12).abs() < 1e-9);
            assert!(c.d2theta_radial(r - 1e-9).abs() < 1e-5);
        }
        assert!((c.theta_radial(2.25) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_match_difference_quotients() {
        let c = Cutoff::new(2.0).unwrap();
        let dr = 1e-6;
        for &r in &[1.1, 1.3, 1.5, 1.7, 1.9] {
            let num1 = (c.theta_radial(r + dr) - c.theta_radial(r - dr)) / (2.0 * dr);
            assert!((num1 - c.dtheta_radial(r)).abs() < 1e-6, "r={r}");
            let num2 = (c.theta_radial(r + dr) - 2.0 * c.theta_radial(r)
                + c.theta_radial(r - dr))
                / (dr * dr);
            assert!((num2 - c.d2theta_radial(r)).abs() < 1e-3, "r={r}");
        }
    }

    #[test]
    fn scaled_derivative_bounds() {
        // sup |grad| * R and sup |lap| * R^2 are the same for every R
        let mut refs = None;
        for &radius in &[1.0, 2.0, 4.0, 8.0] {
            let c = Cutoff::new(radius).unwrap();
            let mut g: f64 = 0.0;
            let mut l: f64 = 0.0;
            for t in 0..4000 {
                let r = radius * (0.5 + 0.5 * (t as f64 + 0.5) / 4000.0);
                g = g.max(c.dtheta_radial(r).abs());
                l = l.max((c.d2theta_radial(r) + 2.0 * c.dtheta_radial(r) / r).abs());
            }
            let scaled = (g * radius, l * radius * radius);
            // quintic smoothstep: max slope 15/8 over a transition of width R/2
            assert!((scaled.0 - 3.75).abs() < 1e-6, "grad bound {}", scaled.0);
            match refs {
                None => refs = Some(scaled),
                Some((g0, l0)) => {
                    assert!((scaled.0 - g0).abs() < 1e-9 && (scaled.1 - l0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn gradient_points_inward() {
        let c = Cutoff::new(2.0).unwrap();
        let g = c.grad([1.5, 0.0, 0.0]);
        assert!(g[0] < 0.0 && g[1] == 0.0 && g[2] == 0.0);
        assert_eq!(c.grad([0.1, 0.2, -0.1]), [0.0; 3]);
    }
}
