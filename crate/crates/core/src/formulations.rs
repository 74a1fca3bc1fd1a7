//! Block systems for the multitrace form with Nitsche-type boundary terms.
//!
//! Unknowns are ordered `(u, λ)` and test functions `(v, μ)`, with `u, v` in
//! the continuous P1 primal space and `λ, μ` in the flux space. The
//! multitrace form has the block layout
//!
//! ```text
//!            u      λ
//!   v  [    W      K'   ]
//!   μ  [   -K      V    ]
//! ```
//!
//! and every penalty block below is documented against it. Penalty blocks are
//! sparse mass matrices restricted to the triangles of their region.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use nalgebra_sparse::CsrMatrix;

use crate::error::{BemError, Result};
use crate::mesh::{Point, Region};
use crate::operators::OperatorSet;
use crate::spaces::{assemble_weighted_mass, Coefficients, FunctionSpace, SpaceFamily};

/// How the penalty parameters depend on the mesh size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalingLaw {
    /// `β_D = β / h`, `β_N = β h`.
    HScaled,
    /// `β_D = β_N = β`.
    Constant,
    /// `β_D` and `β_N` given directly.
    Explicit,
}

impl fmt::Display for ScalingLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingLaw::HScaled => "h-scaled",
            ScalingLaw::Constant => "constant",
            ScalingLaw::Explicit => "explicit",
        })
    }
}

impl FromStr for ScalingLaw {
    type Err = BemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h-scaled" | "hscaled" | "h" => Ok(ScalingLaw::HScaled),
            "constant" | "const" => Ok(ScalingLaw::Constant),
            "explicit" => Ok(ScalingLaw::Explicit),
            _ => Err(BemError::Unsupported {
                what: "scaling law",
                detail: s.to_string(),
            }),
        }
    }
}

/// Which Robin penalty law to use. The two differ in whether `β_N` or its
/// inverse enters; `Numerical` matches the experiments, `Theory` the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RobinBetaVariant {
    /// `β_R = (ε β_N + β_D) / (ε + 1)`.
    #[default]
    Numerical,
    /// `β_R = (ε / β_N + β_D) / (ε + 1)`.
    Theory,
}

impl fmt::Display for RobinBetaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RobinBetaVariant::Numerical => "numerical",
            RobinBetaVariant::Theory => "theory",
        })
    }
}

impl FromStr for RobinBetaVariant {
    type Err = BemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "numerical" => Ok(RobinBetaVariant::Numerical),
            "theory" => Ok(RobinBetaVariant::Theory),
            _ => Err(BemError::Unsupported {
                what: "Robin penalty variant",
                detail: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParameters {
    pub beta: f64,
    pub beta_d: f64,
    pub beta_n: f64,
    pub beta_r: f64,
    pub epsilon: f64,
    pub law: ScalingLaw,
    pub variant: RobinBetaVariant,
}

fn check_nonneg(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(BemError::InvalidParameter { name, value })
    }
}

impl PenaltyParameters {
    /// Parameters from a base constant `beta` and mesh size `h`.
    /// `law` must not be [`ScalingLaw::Explicit`]; use [`Self::explicit`].
    pub fn new(
        beta: f64,
        law: ScalingLaw,
        h: f64,
        epsilon: f64,
        variant: RobinBetaVariant,
    ) -> Result<Self> {
        check_nonneg("beta", beta)?;
        if !(h.is_finite() && h > 0.0) {
            return Err(BemError::InvalidParameter {
                name: "h",
                value: h,
            });
        }
        let (beta_d, beta_n) = match law {
            ScalingLaw::HScaled => (beta / h, beta * h),
            ScalingLaw::Constant => (beta, beta),
            ScalingLaw::Explicit => {
                return Err(BemError::Unsupported {
                    what: "scaling law",
                    detail: "explicit parameters need β_D and β_N".into(),
                })
            }
        };
        Self::build(beta, beta_d, beta_n, epsilon, law, variant)
    }

    pub fn explicit(
        beta_d: f64,
        beta_n: f64,
        epsilon: f64,
        variant: RobinBetaVariant,
    ) -> Result<Self> {
        Self::build(
            beta_d,
            beta_d,
            beta_n,
            epsilon,
            ScalingLaw::Explicit,
            variant,
        )
    }

    fn build(
        beta: f64,
        beta_d: f64,
        beta_n: f64,
        epsilon: f64,
        law: ScalingLaw,
        variant: RobinBetaVariant,
    ) -> Result<Self> {
        check_nonneg("beta_d", beta_d)?;
        check_nonneg("beta_n", beta_n)?;
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(BemError::InvalidParameter {
                name: "epsilon",
                value: epsilon,
            });
        }
        let beta_r = match variant {
            RobinBetaVariant::Numerical => (epsilon * beta_n + beta_d) / (epsilon + 1.0),
            RobinBetaVariant::Theory => {
                if beta_n == 0.0 {
                    return Err(BemError::InvalidParameter {
                        name: "beta_n",
                        value: beta_n,
                    });
                }
                (epsilon / beta_n + beta_d) / (epsilon + 1.0)
            }
        };
        check_nonneg("beta_r", beta_r)?;
        Ok(Self {
            beta,
            beta_d,
            beta_n,
            beta_r,
            epsilon,
            law,
            variant,
        })
    }

    /// Overrides `β_R`, keeping everything else.
    pub fn with_beta_r(mut self, beta_r: f64) -> Result<Self> {
        check_nonneg("beta_r", beta_r)?;
        self.beta_r = beta_r;
        Ok(self)
    }

    /// `ω = 1 / (ε β_R + 1)`.
    pub fn omega(&self) -> f64 {
        1.0 / (self.epsilon * self.beta_r + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    Dirichlet,
    Neumann,
    Mixed,
    Robin,
    StdDirichlet,
    StdRobin,
}

impl BcKind {
    pub const ALL: [BcKind; 6] = [
        BcKind::Dirichlet,
        BcKind::Neumann,
        BcKind::Mixed,
        BcKind::Robin,
        BcKind::StdDirichlet,
        BcKind::StdRobin,
    ];

    /// Whether the system couples both traces.
    pub fn is_multitrace(self) -> bool {
        !matches!(self, BcKind::StdDirichlet | BcKind::StdRobin)
    }
}

impl fmt::Display for BcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcKind::Dirichlet => "dirichlet",
            BcKind::Neumann => "neumann",
            BcKind::Mixed => "mixed",
            BcKind::Robin => "robin",
            BcKind::StdDirichlet => "std-dirichlet",
            BcKind::StdRobin => "std-robin",
        })
    }
}

impl FromStr for BcKind {
    type Err = BemError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        BcKind::ALL
            .into_iter()
            .find(|k| k.to_string() == lower)
            .ok_or_else(|| BemError::Unsupported {
                what: "boundary condition",
                detail: s.to_string(),
            })
    }
}

/// A scaled dense operator placed in block `(row, col)`.
#[derive(Debug, Clone)]
pub struct DenseTerm {
    pub block: (usize, usize),
    pub scale: f64,
    pub matrix: Arc<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct SparseTerm {
    pub block: (usize, usize),
    pub matrix: CsrMatrix<f64>,
}

/// `c · m mᵀ` in block `(0, 0)`.
#[derive(Debug, Clone)]
pub struct RankOneTerm {
    pub scale: f64,
    pub vector: DVector<f64>,
}

/// `y[rows] += alpha · M x[cols]`.
pub(crate) fn csr_gemv(y: &mut [f64], alpha: f64, m: &CsrMatrix<f64>, x: &[f64]) {
    let (offsets, cols, values) = (m.row_offsets(), m.col_indices(), m.values());
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in offsets[i]..offsets[i + 1] {
            acc += values[k] * x[cols[k]];
        }
        *yi += alpha * acc;
    }
}

/// An immutable linear system `(A + B) x = L` over one or two trace spaces.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    kind: BcKind,
    spaces: Vec<FunctionSpace>,
    offsets: Vec<usize>,
    dense: Vec<DenseTerm>,
    sparse: Vec<SparseTerm>,
    rank_one: Option<RankOneTerm>,
    rhs: DVector<f64>,
    params: Option<PenaltyParameters>,
}

impl BlockSystem {
    fn empty(kind: BcKind, spaces: Vec<FunctionSpace>, params: Option<PenaltyParameters>) -> Self {
        let mut offsets = vec![0];
        for s in &spaces {
            offsets.push(offsets.last().unwrap() + s.dof_count());
        }
        let n = *offsets.last().unwrap();
        Self {
            kind,
            spaces,
            offsets,
            dense: Vec::new(),
            sparse: Vec::new(),
            rank_one: None,
            rhs: DVector::zeros(n),
            params,
        }
    }

    fn check_block(&self, block: (usize, usize), rows: usize, cols: usize) -> Result<()> {
        let want_r = self.spaces[block.0].dof_count();
        let want_c = self.spaces[block.1].dof_count();
        if rows != want_r {
            return Err(BemError::DimensionMismatch {
                expected: want_r,
                found: rows,
            });
        }
        if cols != want_c {
            return Err(BemError::DimensionMismatch {
                expected: want_c,
                found: cols,
            });
        }
        Ok(())
    }

    fn push_dense(
        &mut self,
        block: (usize, usize),
        scale: f64,
        matrix: Arc<DMatrix<f64>>,
    ) -> Result<()> {
        self.check_block(block, matrix.nrows(), matrix.ncols())?;
        self.dense.push(DenseTerm {
            block,
            scale,
            matrix,
        });
        Ok(())
    }

    fn push_sparse(&mut self, block: (usize, usize), matrix: CsrMatrix<f64>) -> Result<()> {
        self.check_block(block, matrix.nrows(), matrix.ncols())?;
        if matrix.nnz() > 0 {
            self.sparse.push(SparseTerm { block, matrix });
        }
        Ok(())
    }

    fn add_rhs(&mut self, block: usize, values: &DVector<f64>) {
        let (o, n) = (self.offsets[block], self.spaces[block].dof_count());
        let mut seg = self.rhs.rows_mut(o, n);
        seg += values;
    }

    pub fn kind(&self) -> BcKind {
        self.kind
    }

    /// Unknown spaces in order: `[primal, flux]`, or a single space for the
    /// standard formulations.
    pub fn spaces(&self) -> &[FunctionSpace] {
        &self.spaces
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.spaces.iter().map(|s| s.dof_count()).collect()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn params(&self) -> Option<&PenaltyParameters> {
        self.params.as_ref()
    }

    pub fn dense_terms(&self) -> &[DenseTerm] {
        &self.dense
    }

    pub fn sparse_terms(&self) -> &[SparseTerm] {
        &self.sparse
    }

    pub fn rank_one(&self) -> Option<&RankOneTerm> {
        self.rank_one.as_ref()
    }

    /// Splits a full coefficient vector into per-block pieces.
    pub fn split(&self, x: &DVector<f64>) -> Vec<Coefficients> {
        (0..self.spaces.len())
            .map(|b| {
                x.rows(self.offsets[b], self.spaces[b].dof_count())
                    .into_owned()
            })
            .collect()
    }

    pub fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        assert_eq!(
            x.len(),
            self.dim(),
            "vector length does not match the system"
        );
        y.fill(0.0);
        for t in &self.dense {
            let (r0, c0) = (self.offsets[t.block.0], self.offsets[t.block.1]);
            let xs = x.rows(c0, t.matrix.ncols());
            y.rows_mut(r0, t.matrix.nrows())
                .gemv(t.scale, &*t.matrix, &xs, 1.0);
        }
        for t in &self.sparse {
            let (r0, c0) = (self.offsets[t.block.0], self.offsets[t.block.1]);
            let xs = &x.as_slice()[c0..c0 + t.matrix.ncols()];
            csr_gemv(
                &mut y.as_mut_slice()[r0..r0 + t.matrix.nrows()],
                1.0,
                &t.matrix,
                xs,
            );
        }
        if let Some(r) = &self.rank_one {
            let n = r.vector.len();
            let s = r.scale * r.vector.dot(&x.rows(0, n));
            y.rows_mut(0, n).axpy(s, &r.vector, 1.0);
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.apply_into(x, &mut y);
        y
    }

    /// Dense copy of the sparse and rank-one parts only.
    pub fn penalty_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for t in &self.sparse {
            let (r0, c0) = (self.offsets[t.block.0], self.offsets[t.block.1]);
            for (i, j, v) in t.matrix.triplet_iter() {
                out[(r0 + i, c0 + j)] += v;
            }
        }
        if let Some(r) = &self.rank_one {
            let m = &r.vector;
            let mut blk = out.view_mut((0, 0), (m.len(), m.len()));
            blk.ger(r.scale, m, m, 1.0);
        }
        out
    }

    /// Full dense matrix. Costs a copy of every operator.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = self.penalty_dense();
        for t in &self.dense {
            let (r0, c0) = (self.offsets[t.block.0], self.offsets[t.block.1]);
            let mut blk = out.view_mut((r0, c0), (t.matrix.nrows(), t.matrix.ncols()));
            blk.zip_apply(&*t.matrix, |a, b| *a += t.scale * b);
        }
        out
    }
}

/// The four dense blocks of the multitrace form, as `(block, scale, matrix)`.
pub fn multitrace_blocks(ops: &OperatorSet) -> Result<Vec<DenseTerm>> {
    if !ops.primal.same_mesh(&ops.flux) {
        return Err(BemError::MeshMismatch);
    }
    Ok(vec![
        DenseTerm {
            block: (0, 0),
            scale: 1.0,
            matrix: ops.w.shared_matrix(),
        },
        DenseTerm {
            block: (0, 1),
            scale: 1.0,
            matrix: ops.kp.shared_matrix(),
        },
        DenseTerm {
            block: (1, 0),
            scale: -1.0,
            matrix: ops.k.shared_matrix(),
        },
        DenseTerm {
            block: (1, 1),
            scale: 1.0,
            matrix: ops.v.shared_matrix(),
        },
    ])
}

fn check_data(space: &FunctionSpace, data: &Coefficients, name: &str) -> Result<()> {
    if data.len() != space.dof_count() {
        return Err(BemError::DimensionMismatch {
            expected: space.dof_count(),
            found: data.len(),
        });
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(BemError::NonFinite {
            value: *v,
            location: format!("{name} data"),
        });
    }
    Ok(())
}

fn sparse_apply(m: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(m.nrows());
    csr_gemv(y.as_mut_slice(), 1.0, m, x.as_slice());
    y
}

/// Per-region weights of the four penalty blocks and the two data terms.
#[derive(Debug, Clone, Copy, Default)]
struct RegionWeights {
    b11: f64,
    b12: f64,
    b21: f64,
    b22: f64,
    /// `(primal-test, flux-test)` weights on `g_D`.
    gd: (f64, f64),
    /// `(primal-test, flux-test)` weights on `g_N`.
    gn: (f64, f64),
}

fn region_weights(region: Region, p: &PenaltyParameters) -> RegionWeights {
    match region {
        // −½⟨λ,v⟩ + ½⟨u,μ⟩ + β_D⟨u,v⟩ ; ⟨g_D, β_D v + μ⟩
        Region::Dirichlet => RegionWeights {
            b11: p.beta_d,
            b12: -0.5,
            b21: 0.5,
            b22: 0.0,
            gd: (p.beta_d, 1.0),
            gn: (0.0, 0.0),
        },
        // ½⟨λ,v⟩ − ½⟨u,μ⟩ + β_N⟨λ,μ⟩ ; ⟨g_N, v + β_N μ⟩
        Region::Neumann => RegionWeights {
            b11: 0.0,
            b12: 0.5,
            b21: -0.5,
            b22: p.beta_n,
            gd: (0.0, 0.0),
            gn: (1.0, p.beta_n),
        },
        // ⟨(ω−½)u,μ⟩ − ⟨(ω−½)λ,v⟩ + ⟨ωβ_R u,v⟩ + ⟨ωε λ,μ⟩ ; ⟨ω(g_D + ε g_N), β_R v + μ⟩
        Region::Robin => {
            let w = p.omega();
            RegionWeights {
                b11: w * p.beta_r,
                b12: -(w - 0.5),
                b21: w - 0.5,
                b22: w * p.epsilon,
                gd: (w * p.beta_r, w),
                gn: (w * p.beta_r * p.epsilon, w * p.epsilon),
            }
        }
    }
}

/// Penalty blocks for whatever labels the mesh carries, each region with its
/// own terms. Empty regions are allowed; data for a non-empty region is required.
pub fn build_region_penalty(
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_d: Option<&Coefficients>,
    g_n: Option<&Coefficients>,
    kind: BcKind,
) -> Result<BlockSystem> {
    let (primal, flux) = (&ops.primal, &ops.flux);
    let mesh = ops.mesh();
    let has = |r: Region| mesh.region_triangle_count(r) > 0;
    let needs_gd = has(Region::Dirichlet) || has(Region::Robin);
    let needs_gn = has(Region::Neumann) || has(Region::Robin);
    let zero_p = DVector::zeros(primal.dof_count());
    let zero_f = DVector::zeros(flux.dof_count());
    let g_d = match g_d {
        Some(g) => {
            check_data(primal, g, "Dirichlet")?;
            g
        }
        None if needs_gd => return Err(BemError::RegionMismatch("Dirichlet data missing".into())),
        None => &zero_p,
    };
    let g_n = match g_n {
        Some(g) => {
            check_data(flux, g, "Neumann")?;
            g
        }
        None if needs_gn => return Err(BemError::RegionMismatch("Neumann data missing".into())),
        None => &zero_f,
    };

    let mut sys = BlockSystem::empty(kind, vec![primal.clone(), flux.clone()], Some(*params));
    for t in multitrace_blocks(ops)? {
        sys.push_dense(t.block, t.scale, t.matrix)?;
    }
    let wt = |f: fn(&RegionWeights) -> f64| move |r: Region| f(&region_weights(r, params));
    sys.push_sparse(
        (0, 0),
        assemble_weighted_mass(primal, primal, wt(|w| w.b11))?,
    )?;
    sys.push_sparse((0, 1), assemble_weighted_mass(primal, flux, wt(|w| w.b12))?)?;
    sys.push_sparse((1, 0), assemble_weighted_mass(flux, primal, wt(|w| w.b21))?)?;
    sys.push_sparse((1, 1), assemble_weighted_mass(flux, flux, wt(|w| w.b22))?)?;

    let rhs_v = sparse_apply(
        &assemble_weighted_mass(primal, primal, wt(|w| w.gd.0))?,
        g_d,
    ) + sparse_apply(&assemble_weighted_mass(primal, flux, wt(|w| w.gn.0))?, g_n);
    let rhs_mu = sparse_apply(&assemble_weighted_mass(flux, primal, wt(|w| w.gd.1))?, g_d)
        + sparse_apply(&assemble_weighted_mass(flux, flux, wt(|w| w.gn.1))?, g_n);
    sys.add_rhs(0, &rhs_v);
    sys.add_rhs(1, &rhs_mu);
    Ok(sys)
}

fn require_only(ops: &OperatorSet, allowed: &[Region]) -> Result<()> {
    let mesh = ops.mesh();
    for r in Region::ALL {
        if !allowed.contains(&r) && mesh.region_triangle_count(r) > 0 {
            return Err(BemError::RegionMismatch(format!(
                "{} triangles labelled {r}",
                mesh.region_triangle_count(r)
            )));
        }
    }
    Ok(())
}

fn require_nonempty(ops: &OperatorSet, r: Region) -> Result<()> {
    if ops.mesh().region_triangle_count(r) == 0 {
        return Err(BemError::EmptyRegion(r));
    }
    Ok(())
}

pub fn build_dirichlet(
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_d: &Coefficients,
) -> Result<BlockSystem> {
    require_only(ops, &[Region::Dirichlet])?;
    build_region_penalty(ops, params, Some(g_d), None, BcKind::Dirichlet)
}

/// Relative tolerance for `|∫g_N| ≤ tol · ∫|g_N|`.
pub const NEUMANN_COMPATIBILITY_TOLERANCE: f64 = 1e-2;

/// Pure Neumann problem. With `augment` the constant mode is removed by adding
/// `m mᵀ` to the primal block, `m` being the integrals of the primal basis;
/// the computed primal trace then has zero mean.
pub fn build_neumann(
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_n: &Coefficients,
    augment: bool,
) -> Result<BlockSystem> {
    require_only(ops, &[Region::Neumann])?;
    check_data(&ops.flux, g_n, "Neumann")?;
    let m = ops.flux.integrals();
    let integral = m.dot(g_n);
    let scale = m.dot(&g_n.abs());
    let tolerance = NEUMANN_COMPATIBILITY_TOLERANCE * scale;
    if integral.abs() > tolerance {
        return Err(BemError::IncompatibleData {
            integral,
            tolerance,
        });
    }
    let mut sys = build_region_penalty(ops, params, None, Some(g_n), BcKind::Neumann)?;
    if augment {
        sys.rank_one = Some(RankOneTerm {
            scale: 1.0,
            vector: ops.primal.integrals(),
        });
    }
    Ok(sys)
}

/// Mixed problem; both regions must be present and nothing may be labelled Robin.
pub fn build_mixed(
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_d: &Coefficients,
    g_n: &Coefficients,
) -> Result<BlockSystem> {
    require_only(ops, &[Region::Dirichlet, Region::Neumann])?;
    require_nonempty(ops, Region::Dirichlet)?;
    require_nonempty(ops, Region::Neumann)?;
    build_region_penalty(ops, params, Some(g_d), Some(g_n), BcKind::Mixed)
}

/// Robin condition `∂_ν u = (g_D − u)/ε + g_N` on the whole boundary.
pub fn build_robin(
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_d: &Coefficients,
    g_n: &Coefficients,
) -> Result<BlockSystem> {
    require_only(ops, &[Region::Robin])?;
    build_region_penalty(ops, params, Some(g_d), Some(g_n), BcKind::Robin)
}

/// `⟨Vλ, μ⟩ = ⟨(½ Id + K) g_D, μ⟩`, a single block in the flux.
pub fn build_standard_dirichlet(ops: &OperatorSet, g_d: &Coefficients) -> Result<BlockSystem> {
    require_only(ops, &[Region::Dirichlet])?;
    check_data(&ops.primal, g_d, "Dirichlet")?;
    let mut sys = BlockSystem::empty(BcKind::StdDirichlet, vec![ops.flux.clone()], None);
    sys.push_dense((0, 0), 1.0, ops.v.shared_matrix())?;
    let m = assemble_weighted_mass(&ops.flux, &ops.primal, |_| 0.5)?;
    let rhs = sparse_apply(&m, g_d) + ops.k.apply(g_d);
    sys.add_rhs(0, &rhs);
    Ok(sys)
}

/// `⟨Wu, v⟩ + ε⁻¹⟨(½ Id − K')u, v⟩ = ⟨(½ Id − K')(g_D/ε + g_N), v⟩`, a
/// single block in the primal trace. Needs a continuous P1 flux space so that
/// `K'` acts on primal functions.
pub fn build_standard_robin(
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_d: &Coefficients,
    g_n: &Coefficients,
) -> Result<BlockSystem> {
    if ops.flux.family() != SpaceFamily::P1Continuous {
        return Err(BemError::Unsupported {
            what: "standard Robin formulation",
            detail: format!(
                "needs a continuous P1 flux space, got {}",
                ops.flux.family()
            ),
        });
    }
    require_only(ops, &[Region::Robin])?;
    check_data(&ops.primal, g_d, "Dirichlet")?;
    check_data(&ops.flux, g_n, "Neumann")?;
    let eps = params.epsilon;
    let mut sys = BlockSystem::empty(BcKind::StdRobin, vec![ops.primal.clone()], Some(*params));
    sys.push_dense((0, 0), 1.0, ops.w.shared_matrix())?;
    sys.push_dense((0, 0), -1.0 / eps, ops.kp.shared_matrix())?;
    sys.push_sparse(
        (0, 0),
        assemble_weighted_mass(&ops.primal, &ops.primal, |_| 0.5 / eps)?,
    )?;
    let data = g_d / eps + g_n;
    let half_mass = assemble_weighted_mass(&ops.primal, &ops.primal, |_| 0.5)?;
    let rhs = sparse_apply(&half_mass, &data) - ops.kp.apply(&data);
    sys.add_rhs(0, &rhs);
    Ok(sys)
}

/// The harmonic function `u = sin(πx) sin(πy) sinh(√2 π z)` and its traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub kind: BcKind,
    pub epsilon: Option<f64>,
}

pub fn manufactured(kind: BcKind, epsilon: Option<f64>) -> ManufacturedSolution {
    ManufacturedSolution { kind, epsilon }
}

impl ManufacturedSolution {
    /// Coefficients `(a, b, c)` of the separable form; `a² + b² = c²` makes it harmonic.
    pub const WAVE_NUMBERS: (f64, f64, f64) = (
        std::f64::consts::PI,
        std::f64::consts::PI,
        std::f64::consts::SQRT_2 * std::f64::consts::PI,
    );

    pub fn u(&self, p: &Point) -> f64 {
        let (a, b, c) = Self::WAVE_NUMBERS;
        (a * p.x).sin() * (b * p.y).sin() * (c * p.z).sinh()
    }

    pub fn gradient(&self, p: &Point) -> Vector3<f64> {
        let (a, b, c) = Self::WAVE_NUMBERS;
        let (sx, cx) = (a * p.x).sin_cos();
        let (sy, cy) = (b * p.y).sin_cos();
        let (sz, cz) = ((c * p.z).sinh(), (c * p.z).cosh());
        Vector3::new(a * cx * sy * sz, b * sx * cy * sz, c * sx * sy * cz)
    }

    /// `Δu`, evaluated from the closed-form second derivatives.
    pub fn laplacian(&self, p: &Point) -> f64 {
        let (a, b, c) = Self::WAVE_NUMBERS;
        (c * c - a * a - b * b) * self.u(p)
    }

    pub fn g_d(&self, p: &Point) -> f64 {
        self.u(p)
    }

    pub fn g_n(&self, p: &Point, normal: &Vector3<f64>) -> f64 {
        self.gradient(p).dot(normal)
    }

    /// Interpolated `(g_D, g_N)` in the primal and flux spaces.
    pub fn traces(
        &self,
        primal: &FunctionSpace,
        flux: &FunctionSpace,
    ) -> Result<(Coefficients, Coefficients)> {
        Ok((
            primal.interpolate(|p| self.g_d(p))?,
            flux.interpolate_with_normal(|p, n| self.g_n(p, n))?,
        ))
    }
}
