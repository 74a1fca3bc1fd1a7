//! Dense Galerkin matrices of the Laplace boundary operators and the
//! representation formula for interior values.
//!
//! All requested operators on a mesh are filled by one sweep over triangle
//! pairs. Each pair yields local P1×P1 integrals of the three kernels
//! `G`, `∂G/∂ν_y` and `∂G/∂ν_x`; P0 entries are sums over local indices and the
//! hypersingular operator uses the surface-curl form
//! `⟨Wu, v⟩ = ∫∫ G(x, y) curl u(y) · curl v(x)`.
//!
//! Only pairs `(a, b)` with `b >= a` are integrated: the kernel is symmetric,
//! so the mirrored pair is the transposed local block with the two normal
//! derivatives exchanged. This keeps same-space `V` and `W` exactly symmetric
//! and `K'` exactly the transpose of `K`. Pair integrals are computed in
//! parallel over chunks of test triangles and scattered sequentially in a
//! fixed order, so results do not depend on the number of threads.

mod dump;

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use crate::error::{BemError, Result};
use crate::mesh::{Point, TriangleSurfaceMesh};
use crate::quadrature::{
    check_finite, classify, integrate_regular, integrate_singular, triangle_rule, LocalMatrices,
    MappedRule, PairRules, QuadratureOptions,
};
use crate::spaces::{Coefficients, FunctionSpace, SpaceFamily};

pub use dump::{load_operator, save_operator, RawOperator};

const INV_FOUR_PI: f64 = 0.25 / PI;

/// Laplace Green's function and its normal derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreensKernel;

impl GreensKernel {
    #[inline]
    pub fn value(x: &Point, y: &Point) -> f64 {
        INV_FOUR_PI / (x - y).norm()
    }

    /// `∂G/∂ν_y = (x − y)·ν_y / (4π|x − y|³)`.
    #[inline]
    pub fn normal_derivative_y(x: &Point, y: &Point, ny: &Vector3<f64>) -> f64 {
        let r = x - y;
        INV_FOUR_PI * r.dot(ny) / r.norm().powi(3)
    }

    /// `∂G/∂ν_x = (y − x)·ν_x / (4π|x − y|³)`.
    #[inline]
    pub fn normal_derivative_x(x: &Point, y: &Point, nx: &Vector3<f64>) -> f64 {
        let r = y - x;
        INV_FOUR_PI * r.dot(nx) / r.norm().powi(3)
    }

    /// `[G, ∂G/∂ν_y, ∂G/∂ν_x]` sharing one distance computation.
    #[inline(always)]
    fn all(x: &Point, y: &Point, nx: &Vector3<f64>, ny: &Vector3<f64>) -> [f64; 3] {
        let r = x - y;
        let inv = 1.0 / r.norm_squared().sqrt();
        let g = INV_FOUR_PI * inv;
        let g3 = g * inv * inv;
        [g, r.dot(ny) * g3, -r.dot(nx) * g3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    SingleLayer,
    DoubleLayer,
    AdjointDoubleLayer,
    Hypersingular,
}

impl OperatorKind {
    pub fn code(self) -> u8 {
        match self {
            OperatorKind::SingleLayer => 0,
            OperatorKind::DoubleLayer => 1,
            OperatorKind::AdjointDoubleLayer => 2,
            OperatorKind::Hypersingular => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(OperatorKind::SingleLayer),
            1 => Some(OperatorKind::DoubleLayer),
            2 => Some(OperatorKind::AdjointDoubleLayer),
            3 => Some(OperatorKind::Hypersingular),
            _ => None,
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::SingleLayer => "V",
            OperatorKind::DoubleLayer => "K",
            OperatorKind::AdjointDoubleLayer => "K'",
            OperatorKind::Hypersingular => "W",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "V" | "v" | "single-layer" => Ok(OperatorKind::SingleLayer),
            "K" | "k" | "double-layer" => Ok(OperatorKind::DoubleLayer),
            "K'" | "k'" | "Kp" | "kp" | "adjoint-double-layer" => {
                Ok(OperatorKind::AdjointDoubleLayer)
            }
            "W" | "w" | "hypersingular" => Ok(OperatorKind::Hypersingular),
            other => Err(format!("unknown operator `{other}`")),
        }
    }
}

/// Dense Galerkin matrix `M[i, j] = ⟨A ψ_j, φ_i⟩` with φ from `test` and ψ from `trial`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    kind: OperatorKind,
    test: FunctionSpace,
    trial: FunctionSpace,
    matrix: Arc<DMatrix<f64>>,
}

impl OperatorMatrix {
    pub fn new(
        kind: OperatorKind,
        test: FunctionSpace,
        trial: FunctionSpace,
        matrix: DMatrix<f64>,
    ) -> Result<Self> {
        Self::from_shared(kind, test, trial, Arc::new(matrix))
    }

    fn from_shared(
        kind: OperatorKind,
        test: FunctionSpace,
        trial: FunctionSpace,
        matrix: Arc<DMatrix<f64>>,
    ) -> Result<Self> {
        if matrix.nrows() != test.dof_count() {
            return Err(BemError::DimensionMismatch {
                expected: test.dof_count(),
                found: matrix.nrows(),
            });
        }
        if matrix.ncols() != trial.dof_count() {
            return Err(BemError::DimensionMismatch {
                expected: trial.dof_count(),
                found: matrix.ncols(),
            });
        }
        if let Some(bad) = matrix.iter().find(|v| !v.is_finite()) {
            return Err(BemError::NonFinite {
                value: *bad,
                location: format!("{kind} operator matrix"),
            });
        }
        Ok(Self {
            kind,
            test,
            trial,
            matrix,
        })
    }

    /// Combines a loaded matrix with the spaces it was assembled on.
    pub fn from_raw(raw: RawOperator, test: &FunctionSpace, trial: &FunctionSpace) -> Result<Self> {
        if raw.test_family != test.family() || raw.trial_family != trial.family() {
            return Err(BemError::Unsupported {
                what: "operator spaces",
                detail: format!(
                    "stored {}x{}, requested {}x{}",
                    raw.test_family,
                    raw.trial_family,
                    test.family(),
                    trial.family()
                ),
            });
        }
        Self::new(raw.kind, test.clone(), trial.clone(), raw.matrix)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn test(&self) -> &FunctionSpace {
        &self.test
    }

    pub fn trial(&self) -> &FunctionSpace {
        &self.trial
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shared_matrix(&self) -> Arc<DMatrix<f64>> {
        Arc::clone(&self.matrix)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &*self.matrix * x
    }

    /// Same matrix on relabelled spaces sharing the geometry.
    pub fn on_spaces(&self, test: &FunctionSpace, trial: &FunctionSpace) -> Result<Self> {
        if !self.test.same_mesh(test) || !self.trial.same_mesh(trial) {
            return Err(BemError::MeshMismatch);
        }
        if test.family() != self.test.family() || trial.family() != self.trial.family() {
            return Err(BemError::Unsupported {
                what: "operator spaces",
                detail: "relabelling cannot change space families".into(),
            });
        }
        Ok(Self {
            kind: self.kind,
            test: test.clone(),
            trial: trial.clone(),
            matrix: Arc::clone(&self.matrix),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorRequest {
    pub kind: OperatorKind,
    pub test: SpaceFamily,
    pub trial: SpaceFamily,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub quadrature: QuadratureOptions,
    /// Test triangles per parallel work item.
    pub chunk_size: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureOptions::default(),
            chunk_size: 8,
        }
    }
}

fn check_request(request: &OperatorRequest) -> Result<()> {
    let primal = |f: SpaceFamily, role: &str| {
        if f == SpaceFamily::P1Continuous {
            Ok(())
        } else {
            Err(BemError::Unsupported {
                what: "operator space",
                detail: format!(
                    "{} needs a continuous P1 {role} space, got {f}",
                    request.kind
                ),
            })
        }
    };
    match request.kind {
        OperatorKind::SingleLayer => Ok(()),
        OperatorKind::DoubleLayer => primal(request.trial, "trial"),
        OperatorKind::AdjointDoubleLayer => primal(request.test, "test"),
        OperatorKind::Hypersingular => {
            primal(request.test, "test")?;
            primal(request.trial, "trial")
        }
    }
}

/// Surface curls of the three P1 basis functions on each triangle.
fn surface_curls(mesh: &TriangleSurfaceMesh) -> Vec<[Vector3<f64>; 3]> {
    (0..mesh.triangle_count())
        .map(|t| {
            let p = mesh.triangle_vertices(t);
            let scale = 1.0 / (2.0 * mesh.area(t));
            [
                (p[1] - p[2]) * scale,
                (p[2] - p[0]) * scale,
                (p[0] - p[1]) * scale,
            ]
        })
        .collect()
}

struct Sweep<'a> {
    mesh: &'a TriangleSurfaceMesh,
    rules: PairRules,
    regular: Vec<MappedRule>,
    near: Vec<MappedRule>,
}

impl<'a> Sweep<'a> {
    fn new(mesh: &'a TriangleSurfaceMesh, options: &QuadratureOptions) -> Result<Self> {
        let rules = PairRules::new(*options)?;
        let map = |rule| {
            (0..mesh.triangle_count())
                .map(|t| MappedRule::new(rule, &mesh.triangle_vertices(t)))
                .collect::<Vec<_>>()
        };
        let regular = map(&rules.regular);
        let near = map(&rules.near);
        Ok(Self {
            mesh,
            rules,
            regular,
            near,
        })
    }

    fn pair(&self, a: usize, b: usize) -> LocalMatrices<3> {
        let mesh = self.mesh;
        let (na, nb) = (mesh.normal(a), mesh.normal(b));
        let kernel = move |x: &Point, y: &Point| GreensKernel::all(x, y, &na, &nb);
        let adjacency = classify(&mesh.triangles()[a], &mesh.triangles()[b]);
        match self.rules.singular(adjacency.class) {
            Some(rule) => integrate_singular(
                &kernel,
                &mesh.triangle_vertices(a),
                &mesh.triangle_vertices(b),
                &adjacency,
                rule,
            ),
            None => {
                let near = (mesh.centroid(a) - mesh.centroid(b)).norm()
                    < self.rules.near_factor * mesh.diameter(a).max(mesh.diameter(b));
                let rules = if near { &self.near } else { &self.regular };
                integrate_regular(&kernel, &rules[a], &rules[b])
            }
        }
    }

    fn chunk(&self, tests: Range<usize>) -> Result<Vec<LocalMatrices<3>>> {
        let nt = self.mesh.triangle_count();
        let mut out = Vec::with_capacity(tests.len() * (nt - tests.start));
        for a in tests {
            for b in a..nt {
                let mut local = self.pair(a, b);
                if a == b {
                    symmetrize_coincident(&mut local);
                }
                check_finite(&local).map_err(|_| BemError::NonFinite {
                    value: f64::NAN,
                    location: format!("pair integral of triangles ({a}, {b})"),
                })?;
                out.push(local);
            }
        }
        Ok(out)
    }
}

/// Forces the exact symmetries of a coincident pair onto its local blocks.
#[allow(clippy::needless_range_loop)]
fn symmetrize_coincident(local: &mut LocalMatrices<3>) {
    for i in 0..3 {
        for j in i..3 {
            let v = 0.5 * (local[0][i][j] + local[0][j][i]);
            local[0][i][j] = v;
            local[0][j][i] = v;
        }
    }
    let (k, kp) = (local[1], local[2]);
    for i in 0..3 {
        for j in 0..3 {
            local[1][i][j] = 0.5 * (k[i][j] + kp[j][i]);
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            local[2][i][j] = local[1][j][i];
        }
    }
}

/// Local blocks of the pair `(b, a)` from those of `(a, b)`.
#[allow(clippy::needless_range_loop)]
fn mirrored(local: &LocalMatrices<3>) -> LocalMatrices<3> {
    let mut out = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[0][i][j] = local[0][j][i];
            out[1][i][j] = local[2][j][i];
            out[2][i][j] = local[1][j][i];
        }
    }
    out
}

/// Assembles every requested operator on `mesh` in one pass over triangle pairs.
pub fn assemble_operators(
    mesh: &TriangleSurfaceMesh,
    requests: &[OperatorRequest],
    options: &AssemblyOptions,
) -> Result<Vec<OperatorMatrix>> {
    for r in requests {
        check_request(r)?;
    }
    let space = |f: SpaceFamily| FunctionSpace::new(mesh, f);
    let mut targets: Vec<(OperatorRequest, FunctionSpace, FunctionSpace, DMatrix<f64>)> = requests
        .iter()
        .map(|r| {
            let test = space(r.test)?;
            let trial = space(r.trial)?;
            let m = DMatrix::zeros(test.dof_count(), trial.dof_count());
            Ok((*r, test, trial, m))
        })
        .collect::<Result<_>>()?;

    let sweep = Sweep::new(mesh, &options.quadrature)?;
    let curls = surface_curls(mesh);
    let nt = mesh.triangle_count();
    let chunk = options.chunk_size.max(1);
    let per_batch = chunk * 4 * rayon::current_num_threads();
    let started = std::time::Instant::now();

    let mut batch_start = 0;
    while batch_start < nt {
        let batch_end = (batch_start + per_batch).min(nt);
        let ranges: Vec<Range<usize>> = (batch_start..batch_end)
            .step_by(chunk)
            .map(|s| s..(s + chunk).min(batch_end))
            .collect();
        let results: Vec<Result<Vec<LocalMatrices<3>>>> =
            ranges.par_iter().map(|r| sweep.chunk(r.clone())).collect();
        for (range, locals) in ranges.iter().zip(results) {
            let locals = locals?;
            let mut next = 0;
            for a in range.clone() {
                for b in a..nt {
                    let local = &locals[next];
                    next += 1;
                    let swapped = (b != a).then(|| mirrored(local));
                    for (request, test, trial, m) in targets.iter_mut() {
                        scatter(request, test, trial, m, a, b, local, &curls);
                        if let Some(swapped) = &swapped {
                            scatter(request, test, trial, m, b, a, swapped, &curls);
                        }
                    }
                }
            }
        }
        batch_start = batch_end;
    }
    log::debug!(
        "assembled {} operators on {} triangles in {:.2?}",
        requests.len(),
        nt,
        started.elapsed()
    );
    targets
        .into_iter()
        .map(|(r, test, trial, m)| OperatorMatrix::new(r.kind, test, trial, m))
        .collect()
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn scatter(
    request: &OperatorRequest,
    test: &FunctionSpace,
    trial: &FunctionSpace,
    m: &mut DMatrix<f64>,
    a: usize,
    b: usize,
    local: &LocalMatrices<3>,
    curls: &[[Vector3<f64>; 3]],
) {
    let rows = test.local_dofs(a);
    let cols = trial.local_dofs(b);
    if request.kind == OperatorKind::Hypersingular {
        let g: f64 = local[0].iter().flatten().sum();
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                m[(r, c)] += g * curls[a][i].dot(&curls[b][j]);
            }
        }
        return;
    }
    let l = match request.kind {
        OperatorKind::SingleLayer => &local[0],
        OperatorKind::DoubleLayer => &local[1],
        _ => &local[2],
    };
    match (rows.len(), cols.len()) {
        (3, 3) => {
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    m[(r, c)] += l[i][j];
                }
            }
        }
        (1, 3) => {
            for (j, &c) in cols.iter().enumerate() {
                m[(rows[0], c)] += l[0][j] + l[1][j] + l[2][j];
            }
        }
        (3, 1) => {
            for (i, &r) in rows.iter().enumerate() {
                m[(r, cols[0])] += l[i][0] + l[i][1] + l[i][2];
            }
        }
        _ => m[(rows[0], cols[0])] += l.iter().flatten().sum::<f64>(),
    }
}

fn assemble_one(
    kind: OperatorKind,
    test: &FunctionSpace,
    trial: &FunctionSpace,
) -> Result<OperatorMatrix> {
    if !test.same_mesh(trial) {
        return Err(BemError::MeshMismatch);
    }
    let request = OperatorRequest {
        kind,
        test: test.family(),
        trial: trial.family(),
    };
    let op = assemble_operators(test.mesh(), &[request], &AssemblyOptions::default())?
        .pop()
        .expect("one request yields one operator");
    op.on_spaces(test, trial)
}

/// `⟨Vψ_j, φ_i⟩` with kernel G.
pub fn assemble_single_layer(
    test: &FunctionSpace,
    trial: &FunctionSpace,
) -> Result<OperatorMatrix> {
    assemble_one(OperatorKind::SingleLayer, test, trial)
}

/// `⟨Kψ_j, φ_i⟩` with kernel ∂G/∂ν_y; the trial space must be continuous P1.
pub fn assemble_double_layer(
    test: &FunctionSpace,
    trial: &FunctionSpace,
) -> Result<OperatorMatrix> {
    assemble_one(OperatorKind::DoubleLayer, test, trial)
}

/// `⟨K′ψ_j, φ_i⟩` with kernel ∂G/∂ν_x; the test space must be continuous P1.
pub fn assemble_adjoint_double_layer(
    test: &FunctionSpace,
    trial: &FunctionSpace,
) -> Result<OperatorMatrix> {
    assemble_one(OperatorKind::AdjointDoubleLayer, test, trial)
}

/// `⟨Wψ_j, φ_i⟩` in the surface-curl form; both spaces continuous P1.
pub fn assemble_hypersingular(
    test: &FunctionSpace,
    trial: &FunctionSpace,
) -> Result<OperatorMatrix> {
    assemble_one(OperatorKind::Hypersingular, test, trial)
}

/// The four operators of the multitrace form for one choice of flux space:
/// primal space continuous P1, flux space `flux`.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub primal: FunctionSpace,
    pub flux: FunctionSpace,
    /// Flux × flux.
    pub v: OperatorMatrix,
    /// Flux test × primal trial.
    pub k: OperatorMatrix,
    /// Primal test × flux trial.
    pub kp: OperatorMatrix,
    /// Primal × primal.
    pub w: OperatorMatrix,
}

impl OperatorSet {
    pub fn assemble(
        mesh: &TriangleSurfaceMesh,
        flux: SpaceFamily,
        options: &AssemblyOptions,
    ) -> Result<Self> {
        Ok(assemble_operator_sets(mesh, &[flux], options)?.remove(0))
    }

    pub fn mesh(&self) -> &TriangleSurfaceMesh {
        self.primal.mesh()
    }

    /// The same set on a relabelled copy of the mesh; matrices are shared.
    pub fn relabeled(&self, mesh: &TriangleSurfaceMesh) -> Result<Self> {
        let primal = self.primal.on_mesh(mesh)?;
        let flux = self.flux.on_mesh(mesh)?;
        Ok(Self {
            v: self.v.on_spaces(&flux, &flux)?,
            k: self.k.on_spaces(&flux, &primal)?,
            kp: self.kp.on_spaces(&primal, &flux)?,
            w: self.w.on_spaces(&primal, &primal)?,
            primal,
            flux,
        })
    }

    pub fn from_parts(
        v: OperatorMatrix,
        k: OperatorMatrix,
        kp: OperatorMatrix,
        w: OperatorMatrix,
    ) -> Result<Self> {
        let primal = w.test().clone();
        let flux = v.test().clone();
        let ok = v.kind() == OperatorKind::SingleLayer
            && k.kind() == OperatorKind::DoubleLayer
            && kp.kind() == OperatorKind::AdjointDoubleLayer
            && w.kind() == OperatorKind::Hypersingular
            && primal.family() == SpaceFamily::P1Continuous
            && v.trial().family() == flux.family()
            && k.test().family() == flux.family()
            && k.trial().family() == SpaceFamily::P1Continuous
            && kp.trial().family() == flux.family()
            && [v.test(), k.test(), kp.test(), w.trial()]
                .iter()
                .all(|s| s.same_mesh(&primal));
        if !ok {
            return Err(BemError::Unsupported {
                what: "operator set",
                detail: "operators do not form a multitrace set".into(),
            });
        }
        Ok(Self {
            v: v.on_spaces(&flux, &flux)?,
            k: k.on_spaces(&flux, &primal)?,
            kp: kp.on_spaces(&primal, &flux)?,
            w: w.on_spaces(&primal, &primal)?,
            primal,
            flux,
        })
    }
}

/// Assembles operator sets for several flux families in one sweep; the
/// hypersingular matrix is shared between them.
pub fn assemble_operator_sets(
    mesh: &TriangleSurfaceMesh,
    fluxes: &[SpaceFamily],
    options: &AssemblyOptions,
) -> Result<Vec<OperatorSet>> {
    let p1 = SpaceFamily::P1Continuous;
    let mut requests = vec![OperatorRequest {
        kind: OperatorKind::Hypersingular,
        test: p1,
        trial: p1,
    }];
    for &flux in fluxes {
        requests.push(OperatorRequest {
            kind: OperatorKind::SingleLayer,
            test: flux,
            trial: flux,
        });
        requests.push(OperatorRequest {
            kind: OperatorKind::DoubleLayer,
            test: flux,
            trial: p1,
        });
        requests.push(OperatorRequest {
            kind: OperatorKind::AdjointDoubleLayer,
            test: p1,
            trial: flux,
        });
    }
    let mut ops = assemble_operators(mesh, &requests, options)?.into_iter();
    let w = ops.next().expect("hypersingular requested");
    let primal = w.test().clone();
    let mut sets = Vec::with_capacity(fluxes.len());
    for _ in fluxes {
        let v = ops.next().expect("single layer requested");
        let k = ops.next().expect("double layer requested");
        let kp = ops.next().expect("adjoint double layer requested");
        // Rebind everything to one pair of space objects.
        let flux = v.test().clone();
        sets.push(OperatorSet {
            v: v.on_spaces(&flux, &flux)?,
            k: k.on_spaces(&flux, &primal)?,
            kp: kp.on_spaces(&primal, &flux)?,
            w: w.clone(),
            primal: primal.clone(),
            flux,
        });
    }
    Ok(sets)
}

/// Values of the representation formula `ũ = −𝒦u + 𝒱λ` at interior points.
#[derive(Debug, Clone)]
pub struct InteriorValues {
    pub values: Vec<f64>,
    /// Indices of points closer to the surface than half the mesh size, with their distance.
    pub proximity_warnings: Vec<(usize, f64)>,
}

/// Triangle rule order used for potential evaluation.
pub const POTENTIAL_RULE_ORDER: usize = 8;

pub fn evaluate_interior(
    primal: &FunctionSpace,
    u: &Coefficients,
    flux: &FunctionSpace,
    lambda: &Coefficients,
    points: &[Point],
) -> Result<InteriorValues> {
    if !primal.same_mesh(flux) {
        return Err(BemError::MeshMismatch);
    }
    for (space, c) in [(primal, u), (flux, lambda)] {
        if c.len() != space.dof_count() {
            return Err(BemError::DimensionMismatch {
                expected: space.dof_count(),
                found: c.len(),
            });
        }
    }
    let mesh = primal.mesh();
    let rule = triangle_rule(POTENTIAL_RULE_ORDER)?;
    let h = mesh.mesh_size();
    let mut warnings = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let d = distance_to_surface(mesh, p);
        if d < 0.5 * h {
            log::warn!(
                "point {i} at {:?} is {d:.3e} from the surface (h = {h:.3e}); potential quadrature is unreliable",
                p.as_slice()
            );
            warnings.push((i, d));
        }
    }
    let values = points
        .par_iter()
        .map(|x| {
            let mut total = 0.0;
            for t in 0..mesh.triangle_count() {
                let q = MappedRule::new(&rule, &mesh.triangle_vertices(t));
                let n = mesh.normal(t);
                for ((y, w), bary) in q.points.iter().zip(&q.weights).zip(&q.barycentric) {
                    let uy = primal.evaluate(u, t, *bary);
                    let ly = flux.evaluate(lambda, t, *bary);
                    total += w
                        * (ly * GreensKernel::value(x, y)
                            - uy * GreensKernel::normal_derivative_y(x, y, &n));
                }
            }
            total
        })
        .collect::<Vec<f64>>();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(BemError::NonFinite {
            value: *bad,
            location: "potential evaluation".into(),
        });
    }
    Ok(InteriorValues {
        values,
        proximity_warnings: warnings,
    })
}

/// Euclidean distance from `p` to the closest triangle of the mesh.
pub fn distance_to_surface(mesh: &TriangleSurfaceMesh, p: &Point) -> f64 {
    (0..mesh.triangle_count())
        .map(|t| point_triangle_distance(p, &mesh.triangle_vertices(t)))
        .fold(f64::INFINITY, f64::min)
}

fn point_triangle_distance(p: &Point, t: &[Point; 3]) -> f64 {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let n2 = n.norm_squared();
    let q = p - n * ((p - t[0]).dot(&n) / n2);
    let inside = (0..3).all(|k| {
        let e = t[(k + 1) % 3] - t[k];
        e.cross(&(q - t[k])).dot(&n) >= 0.0
    });
    if inside {
        return (p - q).norm();
    }
    (0..3)
        .map(|k| {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let e = b - a;
            let s = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            (p - (a + e * s)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
