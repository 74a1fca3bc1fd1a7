//! GMRES with block mass-matrix preconditioning, and a dense LU solve.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;

use crate::error::{BemError, Result};
use crate::formulations::BlockSystem;
use crate::spaces::{assemble_mass, FunctionSpace};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>);
}

impl LinearOperator for BlockSystem {
    fn dim(&self) -> usize {
        BlockSystem::dim(self)
    }

    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        BlockSystem::apply_into(self, x, y)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        assert!(self.is_square(), "linear operator must be square");
        self.nrows()
    }

    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        y.gemv(1.0, self, x, 0.0);
    }
}

pub trait Preconditioner {
    /// `z = P⁻¹ r`; `z` is overwritten.
    fn apply_into(&self, r: &DVector<f64>, z: &mut DVector<f64>);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply_into(&self, r: &DVector<f64>, z: &mut DVector<f64>) {
        z.copy_from(r);
    }
}

/// Inverse of `diag(M_1, …, M_k)`, one sparse Cholesky factor per space.
pub struct BlockMassPreconditioner {
    factors: Vec<(usize, CscCholesky<f64>)>,
    dim: usize,
}

impl fmt::Debug for BlockMassPreconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockMassPreconditioner")
            .field("blocks", &self.factors.len())
            .field("dim", &self.dim)
            .finish()
    }
}

pub fn block_mass_preconditioner(spaces: &[FunctionSpace]) -> Result<BlockMassPreconditioner> {
    let mut factors = Vec::with_capacity(spaces.len());
    let mut offset = 0;
    for s in spaces {
        let mass = assemble_mass(s, s, None)?;
        let chol =
            CscCholesky::factor(&CscMatrix::from(&mass)).map_err(|_| BemError::SingularMass)?;
        factors.push((offset, chol));
        offset += s.dof_count();
    }
    Ok(BlockMassPreconditioner {
        factors,
        dim: offset,
    })
}

impl BlockMassPreconditioner {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Preconditioner for BlockMassPreconditioner {
    fn apply_into(&self, r: &DVector<f64>, z: &mut DVector<f64>) {
        assert_eq!(
            r.len(),
            self.dim,
            "vector length does not match the preconditioner"
        );
        z.copy_from(r);
        for (offset, chol) in &self.factors {
            let n = chol.l().nrows();
            let mut seg = z.rows_mut(*offset, n);
            chol.solve_mut(&mut seg);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PreconditionerKind {
    None,
    #[default]
    BlockMass,
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreconditionerKind::None => "none",
            PreconditionerKind::BlockMass => "block-mass",
        })
    }
}

impl FromStr for PreconditionerKind {
    type Err = BemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "identity" => Ok(PreconditionerKind::None),
            "block-mass" | "mass" => Ok(PreconditionerKind::BlockMass),
            _ => Err(BemError::Unsupported {
                what: "preconditioner",
                detail: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Target for the relative preconditioned residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Restart length; `None` runs full GMRES.
    pub restart: Option<usize>,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            restart: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// `‖P⁻¹(b − Ax)‖ / ‖P⁻¹b‖`.
    pub relative_residual: f64,
    /// `‖b − Ax‖ / ‖b‖`.
    pub true_relative_residual: f64,
    /// Relative preconditioned residual after each iteration, starting with 1.
    pub history: Vec<f64>,
    pub preconditioner: PreconditionerKind,
    pub wall_time: Duration,
}

fn true_residual<A: LinearOperator + ?Sized>(a: &A, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let mut ax = DVector::zeros(b.len());
    a.apply_into(x, &mut ax);
    let nb = b.norm();
    if nb == 0.0 {
        ax.norm()
    } else {
        (b - ax).norm() / nb
    }
}

/// Left-preconditioned GMRES with modified Gram–Schmidt and Givens rotations,
/// starting from zero.
pub fn gmres<A, P>(
    a: &A,
    b: &DVector<f64>,
    precond: &P,
    kind: PreconditionerKind,
    options: &GmresOptions,
) -> Result<SolveReport>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let start = Instant::now();
    let n = a.dim();
    if b.len() != n {
        return Err(BemError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if !(options.tol > 0.0 && options.tol < 1.0) {
        return Err(BemError::InvalidParameter {
            name: "tol",
            value: options.tol,
        });
    }
    if let Some(v) = b.iter().find(|v| !v.is_finite()) {
        return Err(BemError::NonFinite {
            value: *v,
            location: "right-hand side".into(),
        });
    }
    let m = options
        .restart
        .unwrap_or(options.max_iter)
        .clamp(1, n.max(1));

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    precond.apply_into(b, &mut z);
    let pb = z.norm();
    let mut history = vec![1.0];
    if pb == 0.0 {
        return Ok(SolveReport {
            true_relative_residual: true_residual(a, b, &x),
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            history: vec![0.0],
            preconditioner: kind,
            wall_time: start.elapsed(),
        });
    }

    let mut iterations = 0;
    let mut best = (1.0, x.clone());
    let mut converged = false;
    loop {
        // r = P⁻¹(b − A x), recomputed explicitly at every (re)start.
        a.apply_into(&x, &mut w);
        let r0 = b - &w;
        precond.apply_into(&r0, &mut z);
        let beta = z.norm();
        let rel = beta / pb;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= options.tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iter || !rel.is_finite() {
            break;
        }
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
        basis.push(&z / beta);
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = DVector::<f64>::zeros(m + 1);
        g[0] = beta;
        let mut k = 0;
        let mut estimate = rel;
        while k < m && iterations < options.max_iter {
            a.apply_into(&basis[k], &mut w);
            precond.apply_into(&w, &mut z);
            for (i, q) in basis.iter().enumerate() {
                let hik = z.dot(q);
                h[(i, k)] = hik;
                z.axpy(-hik, q, 1.0);
            }
            let hnext = z.norm();
            h[(k + 1, k)] = hnext;
            for i in 0..k {
                let (hi, hj) = (h[(i, k)], h[(i + 1, k)]);
                h[(i, k)] = cs[i] * hi + sn[i] * hj;
                h[(i + 1, k)] = -sn[i] * hi + cs[i] * hj;
            }
            let (hk, hk1) = (h[(k, k)], h[(k + 1, k)]);
            let denom = hk.hypot(hk1);
            if denom == 0.0 || !denom.is_finite() {
                log::warn!("GMRES breakdown at iteration {iterations}");
                break;
            }
            cs[k] = hk / denom;
            sn[k] = hk1 / denom;
            h[(k, k)] = denom;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            iterations += 1;
            estimate = g[k].abs() / pb;
            history.push(estimate);
            if estimate <= options.tol || hnext <= f64::EPSILON * denom {
                break;
            }
            basis.push(&z / hnext);
        }
        if k == 0 {
            break;
        }
        // Back substitution for the k×k triangle.
        let mut y = DVector::<f64>::zeros(k);
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (j, q) in basis.iter().take(k).enumerate() {
            x.axpy(y[j], q, 1.0);
        }
        if estimate > options.tol && estimate >= rel * (1.0 - 1e-12) {
            log::warn!("GMRES stagnated at relative residual {estimate:e}");
            break;
        }
    }

    if !converged {
        return Err(BemError::NotConverged {
            iterations,
            residual: best.0,
            best: Box::new(best.1),
        });
    }
    Ok(SolveReport {
        true_relative_residual: true_residual(a, b, &x),
        solution: x,
        iterations,
        relative_residual: best.0,
        history,
        preconditioner: kind,
        wall_time: start.elapsed(),
    })
}

/// Solves a block system with the requested preconditioner.
pub fn solve_system(
    system: &BlockSystem,
    kind: PreconditionerKind,
    options: &GmresOptions,
) -> Result<SolveReport> {
    match kind {
        PreconditionerKind::None => {
            gmres(system, system.rhs(), &IdentityPreconditioner, kind, options)
        }
        PreconditionerKind::BlockMass => {
            let p = block_mass_preconditioner(system.spaces())?;
            gmres(system, system.rhs(), &p, kind, options)
        }
    }
}

/// Systems with an estimated reciprocal 1-norm condition number below this
/// are reported as singular.
pub const SINGULAR_RCOND: f64 = 1e-10;

/// Largest system [`direct_solve`] accepts.
pub const DIRECT_SOLVE_MAX_DIM: usize = 10_000;

/// Dense LU factors with a transpose solve, for condition estimation.
struct DenseLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    l: DMatrix<f64>,
    u: DMatrix<f64>,
    p: nalgebra::PermutationSequence<nalgebra::Dyn>,
}

impl DenseLu {
    fn new(a: DMatrix<f64>) -> Self {
        let lu = nalgebra::LU::new(a);
        let (p, l, u) = lu.clone().unpack();
        Self { lu, l, u, p }
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        self.lu.solve(b)
    }

    fn solve_transpose(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let y = self.u.tr_solve_upper_triangular(b)?;
        let mut z = self.l.tr_solve_lower_triangular(&y)?;
        self.p.inv_permute_rows(&mut z);
        Some(z)
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// Hager's estimate of `‖A⁻¹‖₁` from the LU factors.
fn inverse_one_norm(lu: &DenseLu, n: usize) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x)?;
        estimate = y.lp_norm(1);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi)?;
        let j = z.iamax();
        if z[j].abs() <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[j] = 1.0;
    }
    Some(estimate)
}

/// Reciprocal condition number estimate in the 1-norm; zero when singular.
pub fn rcond_estimate(a: &DMatrix<f64>) -> f64 {
    let lu = DenseLu::new(a.clone());
    rcond_from_lu(a, &lu)
}

fn rcond_from_lu(a: &DMatrix<f64>, lu: &DenseLu) -> f64 {
    let anorm = one_norm(a);
    match inverse_one_norm(lu, a.nrows()) {
        Some(inv) if anorm > 0.0 && inv.is_finite() && inv > 0.0 => 1.0 / (anorm * inv),
        _ => 0.0,
    }
}

/// Dense LU with partial pivoting. Fails with [`BemError::SingularMatrix`]
/// when the estimated reciprocal condition number is below [`SINGULAR_RCOND`].
pub fn direct_solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(BemError::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    if a.nrows() > DIRECT_SOLVE_MAX_DIM {
        return Err(BemError::Unsupported {
            what: "direct solve",
            detail: format!("dimension {} exceeds {DIRECT_SOLVE_MAX_DIM}", a.nrows()),
        });
    }
    let lu = DenseLu::new(a.clone());
    let rcond = rcond_from_lu(a, &lu);
    log::debug!("direct solve: n = {}, rcond ≈ {rcond:.3e}", a.nrows());
    if rcond < SINGULAR_RCOND {
        return Err(BemError::SingularMatrix);
    }
    let x = lu.solve(b).ok_or(BemError::SingularMatrix)?;
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(BemError::NonFinite {
            value: *v,
            location: "direct solve".into(),
        });
    }
    Ok(x)
}

pub fn direct_solve(system: &BlockSystem) -> Result<DVector<f64>> {
    if system.dim() > DIRECT_SOLVE_MAX_DIM {
        return Err(BemError::Unsupported {
            what: "direct solve",
            detail: format!("dimension {} exceeds {DIRECT_SOLVE_MAX_DIM}", system.dim()),
        });
    }
    direct_solve_dense(&system.to_dense(), system.rhs())
}
