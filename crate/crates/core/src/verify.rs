//! Report-producing checkers for the coupled flow.
//!
//! Everything here audits a claim about fields or time series and returns a
//! serializable report: cutoff energy estimates on balls, an
//! integration-by-parts identity battery, annulus embedding surveys with
//! fitted constants, global and windowed energy-balance audits, an endpoint
//! interpolation ratio, and the classification rule for bounded stationary
//! candidates. Checkers never mutate their inputs and never decide policy:
//! each one records both sides of its inequality and a single `holds`-style
//! verdict, so a caller (or a regression test) can pin the numbers.
//!
//! Two tolerance regimes are used throughout. Exact discrete identities —
//! regroupings and integration by parts under a smooth cutoff — are held to
//! [`IDENTITY_TOL`] in absolute terms at adequate resolution, since their
//! defects shrink at spectral order. Genuine inequalities are given a
//! relative slack of [`INEQ_REL_TOL`] against the dominant scale of the
//! report, plus a tiny absolute floor so that identically zero data passes.
//! Checkers that only make sense on near-solutions refuse inputs whose
//! equation residual exceeds [`RESIDUAL_GATE`], reporting the residual in
//! the error.

use serde::Serialize;

use crate::ericksen::{
    advect, director_stress, stationary_residual, EnergyLedger, ProbeSeries, StationaryState,
};
use crate::error::{ElkError, Result};
use crate::grid::{
    annulus_integral, ball_integral, gradient, jacobian, laplacian_vector, smoothstep,
    smoothstep_d1, tensor_divergence, Cutoff, Grid3, ScalarField, Scheme,
    TensorField, VectorField,
};
use crate::morrey::{
    annulus_profile, default_ladder, local_morrey_norm, shell_energy_sup, weighted_lebesgue_norm,
    MorreyParams, RadialReport,
};
use crate::spectral::{BesovLadder, SpectralPlan};

/// Residual ceiling for checkers that only accept near-solutions.
pub const RESIDUAL_GATE: f64 = 1e-6;
/// Absolute defect ceiling for exact discrete identities at `n >= 64`.
pub const IDENTITY_TOL: f64 = 1e-7;
/// Relative slack granted to inequality verdicts against the dominant scale.
pub const INEQ_REL_TOL: f64 = 1e-3;
/// Sup-norm level above which a stationary candidate counts as non-constant.
pub const FLAG_TOL: f64 = 1e-6;

/// Unit-length gate for director-specific pointwise identities.
const UNIT_GATE: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Time window
// ---------------------------------------------------------------------------

/// C^2 window in time built from two shifted quintic ramps.
///
/// `alpha` rises from 0 at `t0 + eps/2` to 1 at `t0 + eps`, holds the
/// plateau, and descends back to 0 between `t1 + eps/2` and `t1 + eps`. The
/// derivative comes from the closed form, never from differencing. The four
/// junction times separate the polynomial pieces, which is what lets the
/// windowed quadrature integrate ramp sections exactly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeCutoff {
    t0: f64,
    t1: f64,
    eps: f64,
}

impl TimeCutoff {
    pub fn new(t0: f64, t1: f64, eps: f64) -> Result<Self> {
        if !t0.is_finite() || !t1.is_finite() || !eps.is_finite() {
            return Err(ElkError::BadParameter(
                "time window parameters must be finite".into(),
            ));
        }
        if t0 < 0.0 {
            return Err(ElkError::BadParameter(format!(
                "window start must be nonnegative, got {t0}"
            )));
        }
        if !(eps > 0.0) {
            return Err(ElkError::BadParameter(format!(
                "ramp width must be positive, got {eps}"
            )));
        }
        if !(t1 - t0 > eps) {
            return Err(ElkError::BadParameter(format!(
                "window needs t1 - t0 > eps for a plateau, got t0={t0}, t1={t1}, eps={eps}"
            )));
        }
        Ok(TimeCutoff { t0, t1, eps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Quintic ramp: 0 for `s <= 1/2`, 1 for `s >= 1`.
    fn psi(s: f64) -> f64 {
        if s <= 0.5 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else {
            smoothstep(2.0 * s - 1.0)
        }
    }

    fn psi_d1(s: f64) -> f64 {
        if s <= 0.5 || s >= 1.0 {
            0.0
        } else {
            2.0 * smoothstep_d1(2.0 * s - 1.0)
        }
    }

    pub fn alpha(&self, t: f64) -> f64 {
        Self::psi((t - self.t0) / self.eps) - Self::psi((t - self.t1) / self.eps)
    }

    pub fn alpha_d1(&self, t: f64) -> f64 {
        (Self::psi_d1((t - self.t0) / self.eps) - Self::psi_d1((t - self.t1) / self.eps)) / self.eps
    }

    /// Open interval outside of which `alpha` vanishes identically.
    pub fn support(&self) -> (f64, f64) {
        (self.t0 + 0.5 * self.eps, self.t1 + self.eps)
    }

    /// Piece boundaries of the two ramps, in increasing order.
    pub fn junctions(&self) -> [f64; 4] {
        [
            self.t0 + 0.5 * self.eps,
            self.t0 + self.eps,
            self.t1 + 0.5 * self.eps,
            self.t1 + self.eps,
        ]
    }
}

/// Four-point Gauss-Legendre nodes and weights on `[-1, 1]`, exact through
/// degree seven — enough for a quintic ramp derivative times a linear
/// interpolant on every split piece.
const GL4_NODES: [f64; 2] = [0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL4_WEIGHTS: [f64; 2] = [0.652_145_154_862_546_1, 0.347_854_845_137_453_8];

fn gl4<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..2 {
        let x = half * GL4_NODES[i];
        acc += GL4_WEIGHTS[i] * (f(mid - x) + f(mid + x));
    }
    acc * half
}

// ---------------------------------------------------------------------------
// Integration-by-parts battery
// ---------------------------------------------------------------------------

/// One pairing identity: both routes, their signed defect, and the defect
/// relative to the dominant magnitude.
#[derive(Debug, Clone, Serialize)]
pub struct IbpIdentity {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
    pub rel: f64,
}

/// Outcome of [`ibp_identity_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct IbpReport {
    pub n: usize,
    pub box_half: f64,
    pub radius: f64,
    /// Largest pointwise change the solenoidal projection made to `u`.
    pub projection_shift: f64,
    pub identities: Vec<IbpIdentity>,
    /// Pointwise defect of the stress-divergence splitting.
    pub tensor_identity_max: f64,
    /// Pointwise defect of the unit-length Laplacian relation; `None` when
    /// the director is not unit to within the gate.
    pub unit_identity_max: Option<f64>,
    pub max_abs_defect: f64,
    pub max_rel_defect: f64,
}

struct DotArrays {
    th: Vec<f64>,
    gth: [Vec<f64>; 3],
    lth: Vec<f64>,
}

fn cutoff_arrays(cut: &Cutoff, g: Grid3) -> DotArrays {
    let th = cut.theta_field(g).data;
    let gv = cut.grad_field(g);
    let lth = cut.laplacian_field(g).data;
    let gth = std::array::from_fn(|c| gv.comps[c].data.clone());
    DotArrays { th, gth, lth }
}

/// Integration-by-parts battery under a radial cutoff.
///
/// The velocity is projected onto its solenoidal part before anything else,
/// so the advective pairings see an exactly divergence-free field. The first
/// seven identities pair one equation term against the cutoff and compare it
/// with its boundary-free form; the cancellation entry checks that the two
/// cross terms produced by the stress and director pairings are the same sum
/// with indices renamed; the two assembled entries recombine everything and
/// keep the full equation residuals as explicit terms, so they hold for
/// arbitrary smooth fields, not just solutions. Defects are quadrature
/// leakage only and shrink at spectral order under refinement.
pub fn ibp_identity_suite(
    u_raw: &VectorField,
    v: &VectorField,
    p: &ScalarField,
    radius: f64,
) -> Result<IbpReport> {
    let g = u_raw.grid();
    g.same_as(&v.grid())?;
    g.same_as(&p.grid)?;
    let cut = Cutoff::new(radius)?;
    if radius > g.box_half() {
        return Err(ElkError::BadParameter(format!(
            "cutoff radius {radius} exceeds the box half-width {}",
            g.box_half()
        )));
    }
    for f in [u_raw.max_abs(), v.max_abs(), p.max_abs()] {
        if !f.is_finite() {
            return Err(ElkError::Precondition("fields must be finite".into()));
        }
    }

    let mut plan = SpectralPlan::new(g);
    let u = plan.leray_project(u_raw);
    let mut projection_shift = 0.0f64;
    for c in 0..3 {
        for t in 0..g.len() {
            projection_shift = projection_shift.max((u.comps[c].data[t] - u_raw.comps[c].data[t]).abs());
        }
    }

    let len = g.len();
    let w = g.cell_volume();
    let ca = cutoff_arrays(&cut, g);

    let ju = jacobian(&u, Scheme::Spectral);
    let jv = jacobian(v, Scheme::Spectral);
    let lap_u = laplacian_vector(&u, Scheme::Spectral);
    let lap_v = laplacian_vector(v, Scheme::Spectral);
    let gp = gradient(p, Scheme::Spectral);

    // Conservative-form divergences of the two transport tensors and the
    // director stress; the tensors themselves are dropped right away.
    let div_uu = {
        let mut t_uu = TensorField::zeros(g);
        for i in 0..3 {
            for j in 0..3 {
                for t in 0..len {
                    t_uu.comps[i][j].data[t] = u.comps[i].data[t] * u.comps[j].data[t];
                }
            }
        }
        tensor_divergence(&t_uu, Scheme::Spectral)
    };
    let div_vu = {
        let mut t_vu = TensorField::zeros(g);
        for i in 0..3 {
            for j in 0..3 {
                for t in 0..len {
                    t_vu.comps[i][j].data[t] = v.comps[i].data[t] * u.comps[j].data[t];
                }
            }
        }
        tensor_divergence(&t_vu, Scheme::Spectral)
    };
    let div_stress = tensor_divergence(&director_stress(&jv), Scheme::Spectral);

    // Pointwise combinations reused across identities.
    let mut u2 = vec![0.0f64; len];
    let mut gv2 = vec![0.0f64; len];
    let mut gu2 = vec![0.0f64; len];
    let mut lv2 = vec![0.0f64; len];
    let mut vdlv = vec![0.0f64; len];
    let mut udgth = vec![0.0f64; len];
    for t in 0..len {
        let mut a = 0.0;
        let mut b = 0.0;
        for c in 0..3 {
            a += u.comps[c].data[t] * u.comps[c].data[t];
            b += u.comps[c].data[t] * ca.gth[c][t];
        }
        u2[t] = a;
        udgth[t] = b;
        let mut s = 0.0;
        let mut su = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += jv.comps[i][j].data[t] * jv.comps[i][j].data[t];
                su += ju.comps[i][j].data[t] * ju.comps[i][j].data[t];
            }
        }
        gv2[t] = s;
        gu2[t] = su;
        let mut l = 0.0;
        let mut vd = 0.0;
        for c in 0..3 {
            l += lap_v.comps[c].data[t] * lap_v.comps[c].data[t];
            vd += v.comps[c].data[t] * lap_v.comps[c].data[t];
        }
        lv2[t] = l;
        vdlv[t] = vd;
    }

    // Cross terms from the stress and director pairings, accumulated by
    // independent loops so the battery sees two genuinely different sums.
    let mut cross_m = vec![0.0f64; len];
    for i in 0..3 {
        for j in 0..3 {
            for t in 0..len {
                cross_m[t] += lap_v.comps[j].data[t] * jv.comps[i][j].data[t] * u.comps[i].data[t];
            }
        }
    }
    let mut cross_d = vec![0.0f64; len];
    for j in 0..3 {
        for i in 0..3 {
            for t in 0..len {
                cross_d[t] += lap_v.comps[i].data[t] * jv.comps[j][i].data[t] * u.comps[j].data[t];
            }
        }
    }

    // Full equation residuals, kept as explicit terms in the assembled rows.
    let conv_u = advect(&u, &ju);
    let conv_v = advect(&u, &jv);
    let mut res_m = VectorField::zeros(g);
    let mut res_d = VectorField::zeros(g);
    for c in 0..3 {
        for t in 0..len {
            res_m.comps[c].data[t] = -lap_u.comps[c].data[t]
                + conv_u.comps[c].data[t]
                + div_stress.comps[c].data[t]
                + gp.comps[c].data[t];
            res_d.comps[c].data[t] = -lap_v.comps[c].data[t] + conv_v.comps[c].data[t]
                - gv2[t] * v.comps[c].data[t];
        }
    }

    let sum = |f: &dyn Fn(usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for t in 0..len {
            acc += f(t);
        }
        acc * w
    };
    let dot_u = |f: &VectorField, t: usize| -> f64 {
        f.comps[0].data[t] * u.comps[0].data[t]
            + f.comps[1].data[t] * u.comps[1].data[t]
            + f.comps[2].data[t] * u.comps[2].data[t]
    };
    let dot_lv = |f: &VectorField, t: usize| -> f64 {
        f.comps[0].data[t] * lap_v.comps[0].data[t]
            + f.comps[1].data[t] * lap_v.comps[1].data[t]
            + f.comps[2].data[t] * lap_v.comps[2].data[t]
    };

    let mut identities = Vec::new();
    let mut push = |name: &str, lhs: f64, rhs: f64| {
        let defect = lhs - rhs;
        let scale = lhs.abs().max(rhs.abs());
        let rel = if scale == 0.0 { 0.0 } else { defect.abs() / scale };
        identities.push(IbpIdentity {
            name: name.to_string(),
            lhs,
            rhs,
            defect,
            rel,
        });
    };

    // Viscous pairing: -int lap(u) . theta u = -1/2 int |u|^2 lap(theta)
    //                                          + int |grad u|^2 theta.
    push(
        "laplacian-pairing",
        sum(&|t| -dot_u(&lap_u, t) * ca.th[t]),
        sum(&|t| -0.5 * u2[t] * ca.lth[t] + gu2[t] * ca.th[t]),
    );
    // Advective pairing in conservative form against the cutoff gradient.
    push(
        "advection-pairing",
        sum(&|t| dot_u(&div_uu, t) * ca.th[t]),
        sum(&|t| -0.5 * u2[t] * udgth[t]),
    );
    // Stress pairing: the divergence of the director stress against theta u.
    push(
        "stress-pairing",
        sum(&|t| dot_u(&div_stress, t) * ca.th[t]),
        sum(&|t| -0.5 * gv2[t] * udgth[t] + cross_m[t] * ca.th[t]),
    );
    // Pressure pairing: the gradient moves onto the cutoff.
    push(
        "pressure-pairing",
        sum(&|t| dot_u(&gp, t) * ca.th[t]),
        sum(&|t| -p.data[t] * udgth[t]),
    );
    // Dissipation regrouping for the director block.
    push(
        "director-laplacian-pairing",
        sum(&|t| dot_lv(&lap_v, t) * ca.th[t]),
        sum(&|t| lv2[t] * ca.th[t]),
    );
    // Director transport in conservative form against theta lap(v).
    push(
        "director-advection-pairing",
        sum(&|t| dot_lv(&div_vu, t) * ca.th[t]),
        sum(&|t| cross_d[t] * ca.th[t]),
    );
    // Cubic term regrouping.
    push(
        "director-cubic-pairing",
        sum(&|t| {
            let mut s = 0.0;
            for c in 0..3 {
                s += gv2[t] * v.comps[c].data[t] * lap_v.comps[c].data[t];
            }
            s * ca.th[t]
        }),
        sum(&|t| gv2[t] * vdlv[t] * ca.th[t]),
    );
    // The stress pairing and the director transport pairing produce the same
    // cross sum with opposite signs; their total must vanish.
    push(
        "cross-term-cancellation",
        sum(&|t| -cross_m[t] * ca.th[t]),
        sum(&|t| -cross_d[t] * ca.th[t]),
    );
    // Assembled momentum row. The equation residual is kept as a term, so
    // the identity is exact for arbitrary smooth fields.
    push(
        "momentum-assembled",
        sum(&|t| gu2[t] * ca.th[t]),
        sum(&|t| {
            (0.5 * u2[t] + 0.5 * gv2[t] + p.data[t]) * udgth[t] + 0.5 * u2[t] * ca.lth[t]
                - cross_m[t] * ca.th[t]
                + dot_u(&res_m, t) * ca.th[t]
        }),
    );
    // Assembled director row, paired against theta lap(v).
    push(
        "director-assembled",
        sum(&|t| lv2[t] * ca.th[t]),
        sum(&|t| {
            cross_d[t] * ca.th[t] - gv2[t] * vdlv[t] * ca.th[t] - dot_lv(&res_d, t) * ca.th[t]
        }),
    );

    // Pointwise splitting of the stress divergence into a gradient part and
    // the cross vector.
    let tensor_identity_max = {
        let mut half_gv2 = ScalarField::zeros(g);
        for t in 0..len {
            half_gv2.data[t] = 0.5 * gv2[t];
        }
        let grad_half = gradient(&half_gv2, Scheme::Spectral);
        let mut worst = 0.0f64;
        for c in 0..3 {
            for t in 0..len {
                let mut cross = 0.0;
                for j in 0..3 {
                    cross += lap_v.comps[j].data[t] * jv.comps[c][j].data[t];
                }
                let d = div_stress.comps[c].data[t] - grad_half.comps[c].data[t] - cross;
                worst = worst.max(d.abs());
            }
        }
        worst
    };

    // Unit-length consequence: v . lap(v) = -|grad v|^2, meaningful only
    // when the director is actually unit.
    let mut unit_dev = 0.0f64;
    for t in 0..len {
        let m = (v.comps[0].data[t] * v.comps[0].data[t]
            + v.comps[1].data[t] * v.comps[1].data[t]
            + v.comps[2].data[t] * v.comps[2].data[t])
            .sqrt();
        unit_dev = unit_dev.max((m - 1.0).abs());
    }
    let unit_identity_max = if unit_dev <= UNIT_GATE {
        let mut worst = 0.0f64;
        for t in 0..len {
            worst = worst.max((gv2[t] + vdlv[t]).abs());
        }
        Some(worst)
    } else {
        None
    };

    let max_abs_defect = identities
        .iter()
        .map(|i| i.defect.abs())
        .fold(0.0f64, f64::max);
    let max_rel_defect = identities.iter().map(|i| i.rel).fold(0.0f64, f64::max);

    Ok(IbpReport {
        n: g.n(),
        box_half: g.box_half(),
        radius,
        projection_shift,
        identities,
        tensor_identity_max,
        unit_identity_max,
        max_abs_defect,
        max_rel_defect,
    })
}

// ---------------------------------------------------------------------------
// Cutoff energy estimate on balls
// ---------------------------------------------------------------------------

/// Outcome of [`caccioppoli_check`]: the ball gradient energy against the
/// four cutoff terms and against the closed-form annulus bound.
#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliReport {
    pub radius: f64,
    pub p: f64,
    pub gamma: f64,
    /// Residual bound under which the state was admitted.
    pub residual_bound: f64,
    /// Gradient energy of the velocity over the half-radius ball.
    pub lhs: f64,
    /// The same energy weighted by the cutoff; this is the exact left side
    /// of the pairing inequality and dominates `lhs`.
    pub lhs_weighted: f64,
    /// Kinetic transport term through the cutoff gradient.
    pub i1: f64,
    /// Director-energy transport term.
    pub i2: f64,
    /// Pressure transport term.
    pub i3: f64,
    /// Kinetic term against the cutoff Laplacian.
    pub i4: f64,
    pub rhs_eq: f64,
    pub tol: f64,
    pub holds: bool,
    /// Annulus-norm bounds dominating each transport term with unit
    /// constant, and their sum.
    pub bounds: [f64; 4],
    pub rhs_closed: f64,
    /// Measured ratio of each term to its bound.
    pub implied: [f64; 4],
    /// Measured ratio of the weighted energy to the closed-form sum.
    pub implied_closed: f64,
    pub under_resolved: bool,
    pub boundary_clipped: bool,
}

/// Ball energy estimate for an admitted stationary state.
///
/// Refuses any state whose equation residual exceeds [`RESIDUAL_GATE`]; the
/// inequality means nothing away from solutions. The left side is the
/// velocity gradient energy over the half-radius ball, the right side is
/// the four transport terms through the cutoff derivatives, and the
/// closed-form route dominates each term by annulus norms with the radius
/// weight `R^{2 - 9/p}` for `R >= 1`. Both routes and the measured implied
/// constants are recorded; `holds` compares the ball energy against the
/// term sum with relative slack.
pub fn caccioppoli_check(
    s: &StationaryState,
    radius: f64,
    params: &MorreyParams,
) -> Result<CaccioppoliReport> {
    let g = s.grid();
    let residual_bound = admitted_residual(s)?;
    let cut = Cutoff::new(radius)?;
    if radius > g.box_half() {
        return Err(ElkError::BadParameter(format!(
            "cutoff radius {radius} exceeds the box half-width {}",
            g.box_half()
        )));
    }
    let p = params.p();

    let ju = s.velocity_jacobian();
    let jv = s.director_jacobian();
    let len = g.len();
    let w = g.cell_volume();
    let ca = cutoff_arrays(&cut, g);

    let lhs_ball = ball_integral(&ju, 0.5 * radius, 2.0);
    let mut lhs_weighted = 0.0;
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    let mut i3 = 0.0;
    let mut i4 = 0.0;
    for t in 0..len {
        let th = ca.th[t];
        let lth = ca.lth[t];
        let mut udg = 0.0;
        let mut uu = 0.0;
        for c in 0..3 {
            let uc = s.u.comps[c].data[t];
            udg += uc * ca.gth[c][t];
            uu += uc * uc;
        }
        if th != 0.0 {
            let gm = ju.mag_at(t);
            lhs_weighted += gm * gm * th;
        }
        if udg != 0.0 {
            let gv = jv.mag_at(t);
            i1 += 0.5 * uu * udg;
            i2 += 0.5 * gv * gv * udg;
            i3 += s.p.data[t] * udg;
        }
        if lth != 0.0 {
            i4 += 0.5 * uu * lth;
        }
    }
    lhs_weighted *= w;
    i1 *= w;
    i2 *= w;
    i3 *= w;
    i4 *= w;
    let rhs_eq = i1 + i2 + i3 + i4;

    let au_p = annulus_integral(&s.u, radius, p);
    let av_p = annulus_integral(&jv, radius, p);
    let ap_half = annulus_integral(&s.p, radius, 0.5 * p);
    let au_2 = annulus_integral(&s.u, radius, 2.0);
    let rw = radius.powf(2.0 - 9.0 / p);
    let bounds = [
        au_p.smoothed.powf(3.0 / p) * rw,
        av_p.smoothed.powf(2.0 / p) * rw * au_p.smoothed.powf(1.0 / p),
        ap_half.smoothed.powf(2.0 / p) * rw * au_p.smoothed.powf(1.0 / p),
        au_2.smoothed / (radius * radius),
    ];
    let rhs_closed = bounds.iter().sum::<f64>();
    let terms = [i1, i2, i3, i4];
    let implied = std::array::from_fn(|k| {
        if bounds[k] > 0.0 {
            terms[k].abs() / bounds[k]
        } else {
            0.0
        }
    });
    let implied_closed = if rhs_closed > 0.0 {
        lhs_weighted / rhs_closed
    } else {
        0.0
    };

    let scale = lhs_ball
        .smoothed
        .abs()
        .max(rhs_eq.abs())
        .max(terms.iter().fold(0.0f64, |m, t| m.max(t.abs())));
    let tol = INEQ_REL_TOL * scale + 1e-12;
    let holds = lhs_ball.smoothed <= rhs_eq + tol;

    Ok(CaccioppoliReport {
        radius,
        p,
        gamma: params.gamma(),
        residual_bound,
        lhs: lhs_ball.smoothed,
        lhs_weighted,
        i1,
        i2,
        i3,
        i4,
        rhs_eq,
        tol,
        holds,
        bounds,
        rhs_closed,
        implied,
        implied_closed,
        under_resolved: lhs_ball.under_resolved
            || au_p.under_resolved
            || av_p.under_resolved
            || ap_half.under_resolved
            || au_2.under_resolved,
        boundary_clipped: lhs_ball.boundary_clipped
            || au_p.boundary_clipped
            || av_p.boundary_clipped
            || ap_half.boundary_clipped
            || au_2.boundary_clipped,
    })
}

fn admitted_residual(s: &StationaryState) -> Result<f64> {
    let bound = match s.residual_hint() {
        Some(b) => b,
        None => {
            let m = stationary_residual(s, Scheme::Spectral).maxes();
            m.momentum.max(m.director).max(m.divergence)
        }
    };
    if !(bound <= RESIDUAL_GATE) {
        return Err(ElkError::Precondition(format!(
            "state is not a solution: residual bound {bound:.3e} exceeds the gate {RESIDUAL_GATE:.1e}"
        )));
    }
    Ok(bound)
}

// ---------------------------------------------------------------------------
// Director-only interior estimate
// ---------------------------------------------------------------------------

/// One rung of the director interior estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticEntry {
    pub radius: f64,
    /// Director gradient energy over the half-radius ball.
    pub inner: f64,
    /// The same energy over the surrounding annulus.
    pub annulus: f64,
    /// Ratio of the two; `None` when the annulus energy vanishes.
    pub c: Option<f64>,
    pub under_resolved: bool,
    pub boundary_clipped: bool,
}

/// Outcome of [`elliptic_v_check`].
#[derive(Debug, Clone, Serialize)]
pub struct EllipticReport {
    pub residual_max: f64,
    pub entries: Vec<EllipticEntry>,
    pub sup_c: Option<f64>,
    /// Set when the ratio ladder climbs without bound instead of settling.
    pub diverging: bool,
}

/// Interior gradient estimate for a director equilibrium with no flow.
///
/// Admits only fields that satisfy the zero-velocity director equation to
/// within [`RESIDUAL_GATE`], then reports, rung by rung, the ball-to-annulus
/// ratio of gradient energy. The estimate asserts the ratio stays bounded;
/// the report flags it only when the ladder diverges.
pub fn elliptic_v_check(v: &VectorField, radii: &[f64]) -> Result<EllipticReport> {
    let g = v.grid();
    let jv = jacobian(v, Scheme::Spectral);
    let lap_v = laplacian_vector(v, Scheme::Spectral);
    let len = g.len();
    let mut residual_max = 0.0f64;
    for t in 0..len {
        let mut gv = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                gv += jv.comps[i][j].data[t] * jv.comps[i][j].data[t];
            }
        }
        for c in 0..3 {
            let r = -lap_v.comps[c].data[t] - gv * v.comps[c].data[t];
            residual_max = residual_max.max(r.abs());
        }
    }
    if !(residual_max <= RESIDUAL_GATE) {
        return Err(ElkError::Precondition(format!(
            "director is not an equilibrium: residual {residual_max:.3e} exceeds the gate {RESIDUAL_GATE:.1e}"
        )));
    }
    if radii.is_empty() {
        return Err(ElkError::BadParameter("radius ladder is empty".into()));
    }
    let mut last = 0.0f64;
    for &r in radii {
        if !(r >= 1.0) || r > g.box_half() || r <= last {
            return Err(ElkError::BadParameter(format!(
                "radii must increase within [1, box half-width], got {r}"
            )));
        }
        last = r;
    }

    let mut entries = Vec::with_capacity(radii.len());
    let mut cs: Vec<f64> = Vec::new();
    for &r in radii {
        let inner = ball_integral(&jv, 0.5 * r, 2.0);
        let ann = annulus_integral(&jv, r, 2.0);
        let c = if ann.smoothed > 0.0 {
            let ratio = inner.smoothed / ann.smoothed;
            cs.push(ratio);
            Some(ratio)
        } else {
            None
        };
        entries.push(EllipticEntry {
            radius: r,
            inner: inner.smoothed,
            annulus: ann.smoothed,
            c,
            under_resolved: inner.under_resolved || ann.under_resolved,
            boundary_clipped: inner.boundary_clipped || ann.boundary_clipped,
        });
    }
    let sup_c = cs.iter().copied().fold(None, |m: Option<f64>, c| {
        Some(m.map_or(c, |v| v.max(c)))
    });
    let diverging = cs.len() >= 3 && {
        let k = cs.len();
        cs[k - 3] < cs[k - 2] && cs[k - 2] < cs[k - 1] && cs[k - 1] > 10.0 * cs[0]
    };

    Ok(EllipticReport {
        residual_max,
        entries,
        sup_c,
        diverging,
    })
}

// ---------------------------------------------------------------------------
// Energy-balance audits
// ---------------------------------------------------------------------------

/// Whole-box energy audit of an evolution ledger.
#[derive(Debug, Clone, Serialize)]
pub struct GlobalEnergySection {
    pub e0: f64,
    pub t_final: f64,
    pub rows: usize,
    /// Largest signed balance defect over the run.
    pub max_defect: f64,
    pub max_abs_defect: f64,
    pub tol: f64,
    pub holds: bool,
}

/// One window-and-radius entry of the local audit.
#[derive(Debug, Clone, Serialize)]
pub struct MuHatEntry {
    pub radius: f64,
    /// Time integrals of the seven probe channels against the window: the
    /// first against the window derivative, the rest against the window.
    pub terms: [f64; 7],
    /// Signed defect of the windowed balance; nonnegative for admissible
    /// weak evolutions, zero up to quadrature for smooth ones.
    pub mu_hat: f64,
    pub scale: f64,
    pub rel: f64,
    pub degenerate: bool,
}

/// Windowed energy audit over a probe series.
#[derive(Debug, Clone, Serialize)]
pub struct LocalEnergySection {
    pub t0: f64,
    pub t1: f64,
    pub eps: f64,
    pub entries: Vec<MuHatEntry>,
    pub min_mu_hat: f64,
    pub max_abs_rel: f64,
    pub tol_rel: f64,
    pub holds: bool,
}

/// Energy audit report; either section may be present depending on which
/// checker produced it.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EnergyInequalityReport {
    pub global: Option<GlobalEnergySection>,
    pub local: Option<LocalEnergySection>,
}

/// Whole-box energy audit: the ledger defect must stay below `tol` times
/// the initial energy at every recorded time.
pub fn global_energy_check(ledger: &EnergyLedger, tol: f64) -> Result<EnergyInequalityReport> {
    if ledger.rows.is_empty() {
        return Err(ElkError::BadParameter("ledger has no rows".into()));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(ElkError::BadParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut prev = f64::NEG_INFINITY;
    for row in &ledger.rows {
        if !(row.t > prev) {
            return Err(ElkError::Precondition(format!(
                "ledger times must increase strictly, got {} after {}",
                row.t, prev
            )));
        }
        if !row.defect.is_finite() {
            return Err(ElkError::Precondition("ledger defect is not finite".into()));
        }
        prev = row.t;
    }
    let e0 = ledger.e0();
    let max_defect = ledger.max_defect();
    let max_abs_defect = ledger
        .rows
        .iter()
        .map(|r| r.defect.abs())
        .fold(0.0f64, f64::max);
    // The absolute floor admits identically zero data, where every defect
    // is exactly zero and e0 vanishes.
    let holds = max_defect <= tol * e0 + 1e-14;
    Ok(EnergyInequalityReport {
        global: Some(GlobalEnergySection {
            e0,
            t_final: prev,
            rows: ledger.rows.len(),
            max_defect,
            max_abs_defect,
            tol,
            holds,
        }),
        local: None,
    })
}

/// Windowed energy audit against a smooth time window.
///
/// For every probe radius the seven recorded channels are integrated in
/// time — the energy channel against the window derivative, the others
/// against the window — by Gauss quadrature on pieces split at both the
/// sample times and the window junctions, with the channels interpolated
/// linearly between samples. The signed combination `mu_hat` vanishes up to
/// quadrature error for smooth evolutions and is nonnegative for admissible
/// ones; `holds` asserts the relative defect stays below `tol_rel`.
pub fn local_energy_defect(
    probes: &ProbeSeries,
    window: &TimeCutoff,
    tol_rel: f64,
) -> Result<EnergyInequalityReport> {
    if !(tol_rel > 0.0) || !tol_rel.is_finite() {
        return Err(ElkError::BadParameter(format!(
            "relative tolerance must be positive, got {tol_rel}"
        )));
    }
    if probes.radii.is_empty() {
        return Err(ElkError::BadParameter("probe series has no radii".into()));
    }
    if probes.samples.len() < 2 {
        return Err(ElkError::Precondition(
            "probe series needs at least two samples".into(),
        ));
    }
    let times: Vec<f64> = probes.samples.iter().map(|s| s.t).collect();
    for k in 1..times.len() {
        if !(times[k] > times[k - 1]) {
            return Err(ElkError::Precondition(format!(
                "probe times must increase strictly, got {} after {}",
                times[k],
                times[k - 1]
            )));
        }
    }
    for s in &probes.samples {
        if s.per_radius.len() != probes.radii.len() {
            return Err(ElkError::Precondition(
                "probe sample does not cover every radius".into(),
            ));
        }
    }
    let (lo, hi) = window.support();
    let slack = 1e-12 * (1.0 + hi.abs());
    if times[0] > lo + slack || times[times.len() - 1] < hi - slack {
        return Err(ElkError::Precondition(format!(
            "window support [{lo:.6}, {hi:.6}] is not covered by samples [{:.6}, {:.6}]",
            times[0],
            times[times.len() - 1]
        )));
    }
    let junctions = window.junctions();

    let mut entries = Vec::with_capacity(probes.radii.len());
    for (ri, &radius) in probes.radii.iter().enumerate() {
        let mut terms = [0.0f64; 7];
        for k in 0..times.len() - 1 {
            let (ta, tb) = (times[k], times[k + 1]);
            let a = ta.max(lo);
            let b = tb.min(hi);
            if !(b > a) {
                continue;
            }
            let pa = &probes.samples[k].per_radius[ri];
            let pb = &probes.samples[k + 1].per_radius[ri];
            let mut cuts = vec![a];
            for &j in &junctions {
                if j > a && j < b {
                    cuts.push(j);
                }
            }
            cuts.push(b);
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for piece in cuts.windows(2) {
                for (j, term) in terms.iter_mut().enumerate() {
                    *term += gl4(piece[0], piece[1], |t| {
                        let frac = (t - ta) / (tb - ta);
                        let pj = pa[j] + (pb[j] - pa[j]) * frac;
                        let wgt = if j == 0 {
                            window.alpha_d1(t)
                        } else {
                            window.alpha(t)
                        };
                        wgt * pj
                    });
                }
            }
        }
        let mu_hat = terms[0] + terms[1] + terms[2] + terms[3] - terms[4] - terms[5] - terms[6];
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let degenerate = scale == 0.0;
        let rel = if degenerate { 0.0 } else { mu_hat.abs() / scale };
        entries.push(MuHatEntry {
            radius,
            terms,
            mu_hat,
            scale,
            rel,
            degenerate,
        });
    }

    let min_mu_hat = entries
        .iter()
        .map(|e| e.mu_hat)
        .fold(f64::INFINITY, f64::min);
    let max_abs_rel = entries.iter().map(|e| e.rel).fold(0.0f64, f64::max);
    let holds = max_abs_rel <= tol_rel;
    Ok(EnergyInequalityReport {
        global: None,
        local: Some(LocalEnergySection {
            t0: window.t0(),
            t1: window.t1(),
            eps: window.eps(),
            entries,
            min_mu_hat,
            max_abs_rel,
            tol_rel,
            holds,
        }),
    })
}

// ---------------------------------------------------------------------------
// Embedding survey
// ---------------------------------------------------------------------------

/// One member of the embedding survey family.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingMember {
    pub name: String,
    /// Plain Lebesgue norm with exponent 9/2.
    pub l92_norm: f64,
    /// Weighted Lebesgue norm at the threshold pair.
    pub weighted_norm: f64,
    /// Scaled local norm over the origin ladder at `p = 3`, `gamma = 1`.
    pub morrey_value: f64,
    pub ratio_l92: f64,
    pub ratio_weighted: f64,
    /// Mass fraction of the norm integrand outside `0.9` of the box
    /// half-width; a member whose fraction exceeds the margin is dropped
    /// from the fitted constant.
    pub cap_fraction_l92: f64,
    pub cap_fraction_weighted: f64,
    pub dropped_l92: bool,
    pub dropped_weighted: bool,
    pub profile: RadialReport,
    pub profile_decaying: bool,
    /// Frozen expectation for this member on an adequate box.
    pub expected_decaying: bool,
    pub consistent: bool,
}

/// Entrywise comparison of two ladder reports at different weights.
#[derive(Debug, Clone, Serialize)]
pub struct GammaOrderCheck {
    pub member: String,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub rungs: usize,
    /// Rungs where the heavier weight failed to dominate; must be zero for
    /// ladders starting at radius one.
    pub violations: usize,
}

/// Outcome of [`embedding_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    pub n: usize,
    pub box_half: f64,
    pub radii: Vec<f64>,
    pub members: Vec<EmbeddingMember>,
    /// Largest kept ratio of local norm to Lebesgue norm, and who attained
    /// it.
    pub fitted_c_l92: f64,
    pub fitted_c_l92_member: String,
    /// Same for the weighted route at the threshold pair.
    pub fitted_c_weighted: f64,
    pub fitted_c_weighted_member: String,
    pub weight_p: f64,
    pub weight_gamma: f64,
    pub gamma_ordering: Vec<GammaOrderCheck>,
    pub notices: Vec<String>,
}

/// Fraction of the cap-shell margin allowed before a member is dropped
/// from the fitted constants.
const CAP_DROP_FRACTION: f64 = 0.2;

/// Embedding survey over a fixed family of radial profiles.
///
/// Each member is measured three ways: the plain Lebesgue norm at exponent
/// 9/2, the weighted Lebesgue norm at the threshold pair `p = 3`,
/// `gamma = 1`, and the scaled local norm over the origin ladder. The two
/// fitted constants are the largest local-to-Lebesgue ratios across members
/// whose norm mass is actually captured by the box; members with more than
/// a fifth of their integrand beyond `0.9` of the half-width are excluded
/// from the fit and listed in the notices. Annulus profiles decide the
/// vanishing-at-infinity verdicts, which are compared against frozen
/// expectations, and ladders at two weights are compared rung by rung: for
/// radii at or beyond one, the heavier weight can never exceed the lighter
/// one.
pub fn embedding_suite(grid: Grid3) -> Result<EmbeddingReport> {
    if grid.box_half() < 2.0 {
        return Err(ElkError::BadParameter(format!(
            "embedding survey needs a box half-width of at least 2, got {}",
            grid.box_half()
        )));
    }
    let radii = default_ladder(grid);
    if radii.len() < 3 {
        return Err(ElkError::BadParameter(
            "embedding survey needs at least three ladder rungs".into(),
        ));
    }
    let m31 = MorreyParams::new(3.0, 1.0)?;

    let powers: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
    // Frozen on the reference survey box of half-width ten: only the cubic
    // tail and the compactly supported bump drop below a tenth of their peak
    // annulus value within the ladder; the slower tails keep their final
    // rung above the rule's threshold and are refused at this size.
    let expected: &[(&str, bool)] = &[
        ("inv-power-0.5", false),
        ("inv-power-1", false),
        ("inv-power-1.5", false),
        ("inv-power-2", false),
        ("inv-power-3", true),
        ("plateau-bump", true),
        ("oscillatory", false),
    ];

    let mut fields: Vec<(String, ScalarField)> = Vec::new();
    for &a in &powers {
        let name = if a == a.trunc() {
            format!("inv-power-{}", a as i64)
        } else {
            format!("inv-power-{a}")
        };
        fields.push((
            name,
            ScalarField::from_fn(grid, |x| {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                (1.0 + r).powf(-a)
            }),
        ));
    }
    fields.push((
        "plateau-bump".to_string(),
        crate::synth::plateau_bump(grid, 1.2, 0.4),
    ));
    fields.push((
        "oscillatory".to_string(),
        ScalarField::from_fn(grid, |x| {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            (3.0 * r).cos() * (1.0 + r).powi(-2)
        }),
    ));

    let cap_radius = 0.9 * grid.box_half();
    let mut members = Vec::new();
    let mut notices = Vec::new();
    let mut fit92 = (0.0f64, String::new());
    let mut fit_w = (0.0f64, String::new());
    for (name, f) in &fields {
        let l92 = weighted_lebesgue_norm(f, 4.5, 0.0);
        let wnorm = weighted_lebesgue_norm(f, 3.0, 1.0);
        let local = local_morrey_norm(f, &m31, &radii)?;
        let profile = annulus_profile(f, &m31, &radii)?;

        let mut tot92 = 0.0;
        let mut cap92 = 0.0;
        let mut tot_w = 0.0;
        let mut cap_w = 0.0;
        for t in 0..grid.len() {
            let (i, j, k) = grid.unravel(t);
            let x = grid.node(i, j, k);
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let fa = f.data[t].abs();
            let m92 = fa.powf(4.5);
            let mw = fa.powi(3) * (1.0 + r).powi(-1);
            tot92 += m92;
            tot_w += mw;
            if r > cap_radius {
                cap92 += m92;
                cap_w += mw;
            }
        }
        let frac92 = if tot92 > 0.0 { cap92 / tot92 } else { 0.0 };
        let frac_w = if tot_w > 0.0 { cap_w / tot_w } else { 0.0 };
        let dropped_l92 = frac92 > CAP_DROP_FRACTION;
        let dropped_weighted = frac_w > CAP_DROP_FRACTION;
        if dropped_l92 {
            notices.push(format!(
                "{name}: {:.0}% of the Lebesgue mass sits in the cap shell; excluded from the fit",
                100.0 * frac92
            ));
        }
        if dropped_weighted {
            notices.push(format!(
                "{name}: {:.0}% of the weighted mass sits in the cap shell; excluded from the fit",
                100.0 * frac_w
            ));
        }

        let ratio_l92 = if l92 > 0.0 { local.value / l92 } else { 0.0 };
        let ratio_weighted = if wnorm > 0.0 { local.value / wnorm } else { 0.0 };
        if !dropped_l92 && ratio_l92 > fit92.0 {
            fit92 = (ratio_l92, name.clone());
        }
        if !dropped_weighted && ratio_weighted > fit_w.0 {
            fit_w = (ratio_weighted, name.clone());
        }

        let profile_decaying = profile.decaying();
        let expected_decaying = expected
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| *e)
            .unwrap_or(false);
        members.push(EmbeddingMember {
            name: name.clone(),
            l92_norm: l92,
            weighted_norm: wnorm,
            morrey_value: local.value,
            ratio_l92,
            ratio_weighted,
            cap_fraction_l92: frac92,
            cap_fraction_weighted: frac_w,
            dropped_l92,
            dropped_weighted,
            profile,
            profile_decaying,
            expected_decaying,
            consistent: profile_decaying == expected_decaying,
        });
    }

    // Rung-by-rung weight ordering on a cleanly decaying member.
    let order_field = &fields
        .iter()
        .find(|(n, _)| n == "inv-power-1.5")
        .expect("fixed family member")
        .1;
    let mut gamma_ordering = Vec::new();
    for (glo, ghi) in [(0.5, 1.0), (1.0, 2.0)] {
        let lo = local_morrey_norm(order_field, &MorreyParams::new(3.0, glo)?, &radii)?;
        let hi = local_morrey_norm(order_field, &MorreyParams::new(3.0, ghi)?, &radii)?;
        let mut violations = 0;
        for (el, eh) in lo.entries.iter().zip(hi.entries.iter()) {
            if eh.value > el.value * (1.0 + 1e-12) {
                violations += 1;
            }
        }
        gamma_ordering.push(GammaOrderCheck {
            member: "inv-power-1.5".to_string(),
            gamma_lo: glo,
            gamma_hi: ghi,
            rungs: lo.entries.len(),
            violations,
        });
    }

    Ok(EmbeddingReport {
        n: grid.n(),
        box_half: grid.box_half(),
        radii,
        members,
        fitted_c_l92: fit92.0,
        fitted_c_l92_member: fit92.1,
        fitted_c_weighted: fit_w.0,
        fitted_c_weighted_member: fit_w.1,
        weight_p: 3.0,
        weight_gamma: 1.0,
        gamma_ordering,
        notices,
    })
}

// ---------------------------------------------------------------------------
// Endpoint interpolation ratio
// ---------------------------------------------------------------------------

/// Outcome of [`improved_sobolev_check`].
#[derive(Debug, Clone, Serialize)]
pub struct SobolevReport {
    /// Lebesgue norm of the field at exponent four.
    pub l4: f64,
    /// Gradient energy norm.
    pub grad_l2: f64,
    /// Heat-smoothed sup ladder value over all components.
    pub besov: f64,
    pub besov_argmax_t: f64,
    /// `l4 / (grad_l2^{1/2} besov^{1/2})`; zero when degenerate.
    pub ratio: f64,
    pub degenerate: bool,
}

/// Endpoint interpolation ratio between the Lebesgue norm at exponent four,
/// the gradient energy, and the heat-smoothed sup ladder.
///
/// The ladder value is the vector analogue of the scalar smoothing norm:
/// each component is heat-convolved at geometrically spaced times and the
/// scaled pointwise magnitude is maximized over the ladder. A zero field is
/// reported as degenerate rather than as a ratio.
pub fn improved_sobolev_check(u: &VectorField) -> Result<SobolevReport> {
    let g = u.grid();
    if !u.max_abs().is_finite() {
        return Err(ElkError::Precondition("field must be finite".into()));
    }
    let l4 = weighted_lebesgue_norm(u, 4.0, 0.0);
    let ju = jacobian(u, Scheme::Spectral);
    let grad_l2 = ju.frobenius_sq_integral().sqrt();

    let ladder = BesovLadder::for_grid(g);
    let mut plan = SpectralPlan::new(g);
    let mut besov = 0.0f64;
    let mut besov_argmax_t = ladder.t_min;
    let mut t = ladder.t_min;
    while t <= ladder.t_max * (1.0 + 1e-12) {
        let smoothed: [ScalarField; 3] =
            std::array::from_fn(|c| plan.heat_convolve(&u.comps[c], t).expect("valid heat time"));
        let mut sup = 0.0f64;
        for idx in 0..g.len() {
            let m = smoothed[0].data[idx] * smoothed[0].data[idx]
                + smoothed[1].data[idx] * smoothed[1].data[idx]
                + smoothed[2].data[idx] * smoothed[2].data[idx];
            sup = sup.max(m);
        }
        let value = t.sqrt() * sup.sqrt();
        if value > besov {
            besov = value;
            besov_argmax_t = t;
        }
        t *= 2.0;
    }

    let denom_sq = grad_l2 * besov;
    let degenerate = denom_sq <= 0.0;
    let ratio = if degenerate { 0.0 } else { l4 / denom_sq.sqrt() };
    Ok(SobolevReport {
        l4,
        grad_l2,
        besov,
        besov_argmax_t,
        ratio,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Bounded-state classification
// ---------------------------------------------------------------------------

/// Classification outcome for a bounded stationary candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Hypotheses hold and the state is constant to within the tolerance.
    Consistent,
    /// Hypotheses hold yet the state is visibly non-constant.
    CounterexampleFlag,
    /// At least one hypothesis fails; the rigidity statement is silent.
    HypothesesNotMet,
}

/// Measured hypotheses of the rigidity statement.
#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleHypotheses {
    pub gamma: f64,
    pub p: f64,
    pub eta: f64,
    /// Annulus profile of the velocity at the chosen pair.
    pub u_profile: RadialReport,
    pub u_decaying: bool,
    pub u_scaled_decaying: bool,
    /// Scaled local ladder of the director gradient.
    pub gradv_report: RadialReport,
    pub gradv_finite: bool,
    /// Largest unweighted shell energy of the director gradient.
    pub derv_sup: f64,
    pub derv_finite: bool,
    pub met: bool,
}

/// Measured conclusion side: sup norms of the velocity, the director
/// gradient, and the pressure gradient.
#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleConclusion {
    pub u_inf: f64,
    pub grad_v_inf: f64,
    pub grad_q_inf: f64,
    pub tol: f64,
}

/// Outcome of [`liouville_check`].
#[derive(Debug, Clone, Serialize)]
pub struct LiouvilleVerdict {
    pub hypotheses: LiouvilleHypotheses,
    pub conclusion: LiouvilleConclusion,
    pub verdict: Verdict,
}

/// The classification rule alone, as a total function of the two records —
/// auditable without rerunning any measurement.
pub fn liouville_verdict(h: &LiouvilleHypotheses, c: &LiouvilleConclusion) -> Verdict {
    if !h.met {
        Verdict::HypothesesNotMet
    } else if c.u_inf > c.tol {
        Verdict::CounterexampleFlag
    } else {
        Verdict::Consistent
    }
}

fn hypotheses_met(eta: f64, u_dec: bool, u_scaled: bool, gradv: bool, derv: bool) -> bool {
    let base = u_dec && gradv && derv;
    if eta <= 0.0 {
        base
    } else {
        base && u_scaled
    }
}

/// Rigidity audit for an admitted stationary state.
///
/// Measures the hypothesis side — vanishing annulus profile of the velocity
/// (with the additional scaled decay when the exponent is positive), finite
/// scaled ladder of the director gradient, bounded shell energies — and the
/// conclusion side sup norms, then applies [`liouville_verdict`]. A state
/// that meets every hypothesis while staying visibly non-constant is
/// flagged, never silently accepted.
pub fn liouville_check(s: &StationaryState, params: &MorreyParams) -> Result<LiouvilleVerdict> {
    let g = s.grid();
    admitted_residual(s)?;
    let radii = default_ladder(g);
    if radii.len() < 3 {
        return Err(ElkError::BadParameter(
            "rigidity audit needs at least three ladder rungs".into(),
        ));
    }

    let u_profile = annulus_profile(&s.u, params, &radii)?;
    let jv = s.director_jacobian();
    let gradv_report = local_morrey_norm(&jv, params, &radii)?;
    let derv_sup = shell_energy_sup(&jv, &radii)?;

    let eta = params.eta();
    let u_decaying = u_profile.decaying();
    let u_scaled_decaying = u_profile.scaled_decaying();
    let gradv_finite = gradv_report.value.is_finite();
    let derv_finite = derv_sup.is_finite();
    let met = hypotheses_met(eta, u_decaying, u_scaled_decaying, gradv_finite, derv_finite);

    let mut grad_v_inf = 0.0f64;
    for t in 0..g.len() {
        grad_v_inf = grad_v_inf.max(jv.mag_at(t));
    }
    let scheme = if s.band().is_some() {
        Scheme::Fd4
    } else {
        Scheme::Spectral
    };
    let gq = gradient(&s.p, scheme);
    let grad_q_inf = gq.max_abs();

    let hypotheses = LiouvilleHypotheses {
        gamma: params.gamma(),
        p: params.p(),
        eta,
        u_profile,
        u_decaying,
        u_scaled_decaying,
        gradv_report,
        gradv_finite,
        derv_sup,
        derv_finite,
        met,
    };
    let conclusion = LiouvilleConclusion {
        u_inf: s.u.max_abs(),
        grad_v_inf,
        grad_q_inf,
        tol: FLAG_TOL,
    };
    let verdict = liouville_verdict(&hypotheses, &conclusion);
    Ok(LiouvilleVerdict {
        hypotheses,
        conclusion,
        verdict,
    })
}
