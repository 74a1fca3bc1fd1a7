//! Discrete trace norms, boundary-condition error norms, convergence rates and
//! interior errors.
//!
//! The fractional norms are realised by the assembled operators on the mesh
//! of the solve: `‖μ‖_{-1/2} ≈ ⟨Vμ, μ⟩^{1/2}` and
//! `‖v‖_{1/2} ≈ (⟨Wv, v⟩ + v̄² |Γ|)^{1/2}`. Both are equivalent to the true
//! norms, so convergence rates are unaffected.

use nalgebra::DVector;

use crate::error::{BemError, Result};
use crate::formulations::{BcKind, PenaltyParameters};
use crate::mesh::{Point, Region};
use crate::operators::{evaluate_interior, OperatorMatrix, OperatorSet};
use crate::spaces::{assemble_weighted_mass, mean_value, Coefficients, FunctionSpace};

fn check_len(space: &FunctionSpace, c: &Coefficients) -> Result<()> {
    if c.len() != space.dof_count() {
        return Err(BemError::DimensionMismatch {
            expected: space.dof_count(),
            found: c.len(),
        });
    }
    Ok(())
}

/// Clamped square root of a quadratic form that is non-negative up to rounding.
fn root(q: f64) -> f64 {
    q.max(0.0).sqrt()
}

/// `⟨Vμ, μ⟩^{1/2}`.
pub fn dual_norm(v: &OperatorMatrix, mu: &Coefficients) -> Result<f64> {
    check_len(v.trial(), mu)?;
    Ok(root(mu.dot(&v.apply(mu))))
}

/// `(⟨Wv, v⟩ + v̄² ⟨1, 1⟩)^{1/2}`.
pub fn half_norm(w: &OperatorMatrix, v: &Coefficients) -> Result<f64> {
    check_len(w.trial(), v)?;
    let space = w.trial();
    let mean = mean_value(space, v);
    Ok(root(
        v.dot(&w.apply(v)) + mean * mean * space.mesh().total_area(),
    ))
}

/// `(∫ w |v|²)^{1/2}` with a piecewise constant weight per region.
pub fn weighted_l2_norm<F: Fn(Region) -> f64>(
    space: &FunctionSpace,
    v: &Coefficients,
    weight: F,
) -> Result<f64> {
    check_len(space, v)?;
    let m = assemble_weighted_mass(space, space, weight)?;
    let mut mv = DVector::zeros(v.len());
    crate::formulations::csr_gemv(mv.as_mut_slice(), 1.0, &m, v.as_slice());
    Ok(root(v.dot(&mv)))
}

/// Components of a boundary-condition error norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBreakdown {
    pub h: f64,
    /// `‖λ − λ_h‖_{-1/2}` surrogate.
    pub dual_norm_flux: f64,
    /// `‖u − u_h‖_{1/2}` surrogate.
    pub half_norm_primal: f64,
    /// Weighted `L²` term on the primal error: `β_D` on Dirichlet, `ωβ_R` on Robin triangles.
    pub l2_primal: f64,
    /// Weighted `L²` term on the flux error: `β_N` on Neumann, `εω` on Robin triangles.
    pub l2_flux: f64,
    pub b_norm_total: f64,
    pub interior_errors: Vec<(Point, f64)>,
}

impl ErrorBreakdown {
    /// The trace-pair norm `‖u − u_h‖_{1/2} + ‖λ − λ_h‖_{-1/2}`.
    pub fn v_norm(&self) -> f64 {
        self.half_norm_primal + self.dual_norm_flux
    }
}

fn primal_weight(r: Region, p: &PenaltyParameters) -> f64 {
    match r {
        Region::Dirichlet => p.beta_d,
        Region::Neumann => 0.0,
        Region::Robin => p.omega() * p.beta_r,
    }
}

fn flux_weight(r: Region, p: &PenaltyParameters) -> f64 {
    match r {
        Region::Dirichlet => 0.0,
        Region::Neumann => p.beta_n,
        Region::Robin => p.omega() * p.epsilon,
    }
}

/// The error norm matching the mesh labels: the trace-pair norm plus the
/// penalty-weighted `L²` terms of each region. Without parameters only the
/// trace-pair norm is formed.
pub fn b_norm(
    ops: &OperatorSet,
    kind: BcKind,
    params: Option<&PenaltyParameters>,
    u_err: &Coefficients,
    lambda_err: &Coefficients,
) -> Result<ErrorBreakdown> {
    let mesh = ops.mesh();
    let allowed: &[Region] = match kind {
        BcKind::Dirichlet | BcKind::StdDirichlet => &[Region::Dirichlet],
        BcKind::Neumann => &[Region::Neumann],
        BcKind::Mixed => &[Region::Dirichlet, Region::Neumann],
        BcKind::Robin | BcKind::StdRobin => &[Region::Robin],
    };
    if let Some(r) = Region::ALL
        .into_iter()
        .find(|r| !allowed.contains(r) && mesh.region_triangle_count(*r) > 0)
    {
        return Err(BemError::RegionMismatch(format!(
            "{r} triangles in a {kind} error norm"
        )));
    }
    let dual = dual_norm(&ops.v, lambda_err)?;
    let half = half_norm(&ops.w, u_err)?;
    let (l2_primal, l2_flux) = match params {
        Some(p) => (
            weighted_l2_norm(&ops.primal, u_err, |r| primal_weight(r, p))?,
            weighted_l2_norm(&ops.flux, lambda_err, |r| flux_weight(r, p))?,
        ),
        None => (0.0, 0.0),
    };
    Ok(ErrorBreakdown {
        h: mesh.mesh_size(),
        dual_norm_flux: dual,
        half_norm_primal: half,
        l2_primal,
        l2_flux,
        b_norm_total: dual + half + l2_primal + l2_flux,
        interior_errors: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EocSlopes {
    /// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for consecutive records.
    pub successive: Vec<f64>,
    /// Slope of the least-squares line through `(log h, log e)`.
    pub least_squares: f64,
}

/// Convergence rates from `(h, error)` records ordered from coarse to fine.
pub fn eoc(records: &[(f64, f64)]) -> Result<EocSlopes> {
    if records.len() < 3 {
        return Err(BemError::Unsupported {
            what: "rate estimate",
            detail: format!("needs at least 3 records, got {}", records.len()),
        });
    }
    for &(h, e) in records {
        if !(h.is_finite() && h > 0.0) {
            return Err(BemError::InvalidParameter {
                name: "h",
                value: h,
            });
        }
        if !(e.is_finite() && e > 0.0) {
            return Err(BemError::InvalidParameter {
                name: "error",
                value: e,
            });
        }
    }
    if records.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(BemError::Unsupported {
            what: "rate estimate",
            detail: "mesh sizes must be strictly decreasing".into(),
        });
    }
    let successive = records
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let n = records.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = records.iter().map(|&(h, e)| (h.ln(), e.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(EocSlopes {
        successive,
        least_squares: sxy / sxx,
    })
}

/// Points inside the unit ball used for interior errors.
pub const INTERIOR_POINTS: [[f64; 3]; 3] = [[0.3, 0.2, 0.1], [0.0, 0.0, 0.0], [-0.4, 0.1, 0.2]];

pub fn interior_points() -> Vec<Point> {
    INTERIOR_POINTS
        .iter()
        .map(|p| Point::new(p[0], p[1], p[2]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorErrors {
    pub points: Vec<Point>,
    pub errors: Vec<f64>,
    /// Points too close to the surface for reliable quadrature, with their distance.
    pub proximity_warnings: Vec<(usize, f64)>,
}

impl InteriorErrors {
    pub fn pairs(&self) -> Vec<(Point, f64)> {
        self.points
            .iter()
            .copied()
            .zip(self.errors.iter().copied())
            .collect()
    }
}

/// `|ũ_h(p) − u(p)|` with `ũ_h` from the representation formula.
pub fn interior_error<F: Fn(&Point) -> f64>(
    primal: &FunctionSpace,
    u_h: &Coefficients,
    flux: &FunctionSpace,
    lambda_h: &Coefficients,
    exact: F,
    points: &[Point],
) -> Result<InteriorErrors> {
    let values = evaluate_interior(primal, u_h, flux, lambda_h, points)?;
    let errors = points
        .iter()
        .zip(&values.values)
        .map(|(p, v)| (v - exact(p)).abs())
        .collect();
    Ok(InteriorErrors {
        points: points.to_vec(),
        errors,
        proximity_warnings: values.proximity_warnings,
    })
}
