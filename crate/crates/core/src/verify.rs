//! Operator sanity checks against identities that hold on the unit sphere.
//!
//! Each check reports a value, the bound it is compared with and whether it
//! passed. The suite is cheap enough to run at refinement level 3.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{BemError, Result};
use crate::formulations::{csr_gemv, manufactured, BcKind};
use crate::mesh::{Point, SphereFamily, TriangleSurfaceMesh};
use crate::operators::{load_operator, save_operator, OperatorKind, OperatorMatrix, OperatorSet};
use crate::spaces::{assemble_mass, build_space, FunctionSpace, SpaceFamily};
use crate::study::OperatorCache;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-2`.
    pub bound: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: impl Into<String>, value: f64, limit: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {limit:e}"),
            passed: value.is_finite() && value <= limit,
            detail,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {limit:e}"),
            passed: value.is_finite() && value >= limit,
            detail,
        }
    }

    fn positive(name: impl Into<String>, value: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            bound: "> 0".into(),
            passed: value.is_finite() && value > 0.0,
            detail,
        }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            passed: value.is_finite() && (lo..=hi).contains(&value),
            detail,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<32} {:>12.4e}  {:<14} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.bound,
                c.detail
            )?;
        }
        let failed = self.failed().len();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn mass_dense(test: &FunctionSpace, trial: &FunctionSpace) -> Result<DMatrix<f64>> {
    let m = assemble_mass(test, trial, None)?;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        out[(i, j)] += v;
    }
    Ok(out)
}

fn mass_apply(space: &FunctionSpace, x: &DVector<f64>) -> Result<DVector<f64>> {
    let m = assemble_mass(space, space, None)?;
    let mut y = DVector::zeros(x.len());
    csr_gemv(y.as_mut_slice(), 1.0, &m, x.as_slice());
    Ok(y)
}

fn rayleigh(op: &OperatorMatrix, x: &DVector<f64>) -> Result<f64> {
    Ok(x.dot(&op.apply(x)) / x.dot(&mass_apply(op.trial(), x)?))
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    DVector::from_vec(e)
}

fn z_coordinate(space: &FunctionSpace) -> Result<DVector<f64>> {
    space.interpolate(|p: &Point| p.z)
}

/// Checks on the single layer, double layer and adjoint of one operator set.
pub fn flux_checks(ops: &OperatorSet) -> Result<Vec<CheckResult>> {
    let tag = ops.flux.family().to_string();
    let mut out = Vec::new();
    let v = ops.v.matrix();
    let area = ops.mesh().total_area();
    let m_flux = ops.flux.integrals();

    // 1 = Σ φ_i in both flux spaces, so ⟨V1,1⟩ is the sum of all entries.
    let ones = DVector::from_element(ops.flux.dof_count(), 1.0);
    let v11 = ones.dot(&(v * &ones));
    out.push(CheckResult::within(
        format!("v_constant_ratio_{tag}"),
        v11 / area,
        0.98,
        1.02,
        format!("<V1,1> = {v11:.6}, |Γ| = {area:.6}"),
    ));

    // ⟨K1, μ_i⟩ = −½⟨1, μ_i⟩ for every flux basis function.
    let k1 = ops
        .k
        .apply(&DVector::from_element(ops.primal.dof_count(), 1.0));
    let k_dev = (0..k1.len())
        .map(|i| (k1[i] + 0.5 * m_flux[i]).abs() / (0.5 * m_flux[i]))
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(
        format!("k_constant_identity_{tag}"),
        k_dev,
        1e-2,
        "max relative deviation of <K1,mu> from -<1,mu>/2".into(),
    ));

    // ⟨K'μ_j, 1⟩ = −½⟨μ_j, 1⟩: column sums of K'.
    let kp = ops.kp.matrix();
    let kp_dev = (0..kp.ncols())
        .map(|j| (kp.column(j).sum() + 0.5 * m_flux[j]).abs() / (0.5 * m_flux[j]))
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(
        format!("kp_constant_identity_{tag}"),
        kp_dev,
        1e-2,
        "max relative deviation of <K'mu,1> from -<mu,1>/2".into(),
    ));

    let kmax = ops.k.matrix().amax();
    let duality = (ops.k.matrix() - kp.transpose()).amax() / kmax;
    out.push(CheckResult::at_most(
        format!("k_kp_duality_{tag}"),
        duality,
        1e-5,
        "max |K - K'^T| / max |K|".into(),
    ));

    let asym = (v - v.transpose()).amax() / v.amax();
    out.push(CheckResult::at_most(
        format!("v_symmetry_{tag}"),
        asym,
        1e-10,
        "max |V - V^T| / max |V|".into(),
    ));

    let ev = symmetric_eigenvalues(v);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    out.push(CheckResult::positive(
        format!("v_positive_definite_{tag}"),
        lo / hi,
        format!("lambda_min = {lo:.3e}, lambda_max = {hi:.3e}"),
    ));

    let z = z_coordinate(&ops.flux)?;
    let vz = rayleigh(&ops.v, &z)?;
    out.push(CheckResult::at_most(
        format!("v_rayleigh_z_{tag}"),
        (3.0 * vz - 1.0).abs(),
        2e-2,
        format!("<Vz,z>/<z,z> = {vz:.6}, sphere value 1/3"),
    ));
    Ok(out)
}

/// Checks on the hypersingular operator. With a continuous P1 flux set the
/// Rayleigh quotient on `z` is compared with the value implied by the
/// identity `VW = ¼ − K²` applied to the discrete `V` and `K` quotients.
pub fn hypersingular_checks(
    w: &OperatorMatrix,
    p1_set: Option<&OperatorSet>,
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let wm = w.matrix();
    let ones = DVector::from_element(wm.ncols(), 1.0);
    let w1 = (wm * &ones).amax();
    let winf = wm
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(
        "w_constant_kernel",
        w1 / winf,
        1e-8,
        "||W1||_inf / ||W||_inf".into(),
    ));

    let ev = symmetric_eigenvalues(wm);
    let hi = ev[ev.len() - 1];
    out.push(CheckResult::at_least(
        "w_positive_semidefinite",
        ev[0] / hi,
        -1e-10,
        format!("lambda_min / lambda_max with lambda_max = {hi:.3e}"),
    ));
    let near_null = ev.iter().filter(|x| x.abs() <= 1e-8 * hi).count();
    out.push(CheckResult::within(
        "w_null_space_dimension",
        near_null as f64,
        1.0,
        1.0,
        format!(
            "eigenvalues below 1e-8 lambda_max; next is {:.3e} lambda_max",
            ev[1] / hi
        ),
    ));

    let z = z_coordinate(w.trial())?;
    let wz = rayleigh(w, &z)?;
    let (reference, how) = match p1_set {
        Some(set) => {
            let a = rayleigh(&set.v, &z)?;
            let mm = mass_dense(&set.flux, &set.primal)?;
            let k = z.dot(&set.k.apply(&z)) / z.dot(&(&mm * &z));
            (
                (0.25 - k * k) / a,
                format!("(1/4 - k^2)/a with a = {a:.6}, k = {k:.6}"),
            )
        }
        None => (2.0 / 3.0, "sphere value 2/3".to_string()),
    };
    out.push(CheckResult::at_most(
        "w_rayleigh_z",
        (wz / reference - 1.0).abs(),
        2e-2,
        format!("<Wz,z>/<z,z> = {wz:.6}, reference {reference:.6} from {how}"),
    ));
    Ok(out)
}

/// `‖A(u, λ) − ½(M λ, M u)‖₂` for interpolated traces of the harmonic test solution.
pub fn calderon_residual(ops: &OperatorSet) -> Result<f64> {
    let sol = manufactured(BcKind::Dirichlet, None);
    let (u, lambda) = sol.traces(&ops.primal, &ops.flux)?;
    let m_vl = mass_dense(&ops.primal, &ops.flux)?;
    let r_v = ops.w.apply(&u) + ops.kp.apply(&lambda) - (&m_vl * &lambda) * 0.5;
    let r_mu = ops.v.apply(&lambda) - ops.k.apply(&u) - (m_vl.transpose() * &u) * 0.5;
    Ok((r_v.norm_squared() + r_mu.norm_squared()).sqrt())
}

pub fn calderon_check(residuals: &[(usize, f64)], tag: &str) -> CheckResult {
    let worst = residuals
        .windows(2)
        .map(|w| w[1].1 / w[0].1)
        .fold(0.0, f64::max);
    let detail = residuals
        .iter()
        .map(|(l, r)| format!("L{l}: {r:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut c = CheckResult::at_most(format!("calderon_residual_decay_{tag}"), worst, 1.0, detail);
    c.bound = "< 1".into();
    c.passed = residuals.len() >= 2 && worst < 1.0;
    c
}

/// Flux checks for every set plus the hypersingular checks, which use the
/// first set with a P1-continuous flux when there is one.
pub fn single_level_checks(sets: &[OperatorSet]) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for set in sets {
        report.checks.extend(flux_checks(set)?);
    }
    if let Some(first) = sets.first() {
        let p1 = sets
            .iter()
            .find(|s| s.flux.family() == SpaceFamily::P1Continuous);
        report.checks.extend(hypersingular_checks(&first.w, p1)?);
    }
    Ok(report)
}

pub const VERIFY_FLUXES: [SpaceFamily; 2] =
    [SpaceFamily::P1Continuous, SpaceFamily::P0Discontinuous];

/// The full suite on icosahedral spheres: single-level checks at `level`,
/// Calderón residual decay over `calderon_levels`.
pub fn run_verification(
    cache: &mut OperatorCache,
    level: usize,
    calderon_levels: &[usize],
) -> Result<VerifyReport> {
    let family = SphereFamily::Icosahedral;
    cache.prefetch(family, level, &VERIFY_FLUXES)?;
    let (p0, _) = cache.get(family, level, SpaceFamily::P0Discontinuous)?;
    let (p1, _) = cache.get(family, level, SpaceFamily::P1Continuous)?;
    let mut report = single_level_checks(&[p0, p1])?;
    for flux in VERIFY_FLUXES {
        let mut residuals = Vec::new();
        for &l in calderon_levels {
            cache.prefetch(family, l, &VERIFY_FLUXES)?;
            let (set, _) = cache.get(family, l, flux)?;
            residuals.push((l, calderon_residual(&set)?));
        }
        report
            .checks
            .push(calderon_check(&residuals, &flux.to_string()));
    }
    Ok(report)
}

fn file_name(op: &OperatorMatrix) -> String {
    let kind = match op.kind() {
        OperatorKind::SingleLayer => "V",
        OperatorKind::DoubleLayer => "K",
        OperatorKind::AdjointDoubleLayer => "Kp",
        OperatorKind::Hypersingular => "W",
    };
    format!("{kind}_{}_{}.nbop", op.test().family(), op.trial().family())
}

/// Writes every operator of the sets into `dir`; the shared hypersingular
/// matrix is written once.
pub fn dump_operator_sets(dir: &Path, sets: &[OperatorSet]) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for set in sets {
        for op in [&set.v, &set.k, &set.kp, &set.w] {
            let name = file_name(op);
            if written.contains(&name) {
                continue;
            }
            let mut out = BufWriter::new(File::create(dir.join(&name))?);
            save_operator(op, &mut out)?;
            out.flush()?;
            written.push(name);
        }
    }
    Ok(written)
}

/// Reads the operator sets written by [`dump_operator_sets`] for `mesh`.
pub fn load_operator_sets(
    dir: &Path,
    mesh: &TriangleSurfaceMesh,
    fluxes: &[SpaceFamily],
) -> Result<Vec<OperatorSet>> {
    let primal = build_space(mesh, SpaceFamily::P1Continuous)?;
    let read =
        |kind: &str, test: &FunctionSpace, trial: &FunctionSpace| -> Result<OperatorMatrix> {
            let path = dir.join(format!("{kind}_{}_{}.nbop", test.family(), trial.family()));
            let file = File::open(&path).map_err(|e| {
                BemError::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            OperatorMatrix::from_raw(load_operator(BufReader::new(file))?, test, trial)
        };
    let w = read("W", &primal, &primal)?;
    fluxes
        .iter()
        .map(|&f| {
            let flux = build_space(mesh, f)?;
            OperatorSet::from_parts(
                read("V", &flux, &flux)?,
                read("K", &flux, &primal)?,
                read("Kp", &primal, &flux)?,
                w.clone(),
            )
        })
        .collect()
}
