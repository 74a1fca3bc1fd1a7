//! Discrete trace spaces: continuous P1 for primal traces, P0 or P1 for fluxes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector3};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{BemError, Result};
use crate::mesh::{Point, Region, TriangleSurfaceMesh};

pub type Coefficients = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceFamily {
    P1Continuous,
    P0Discontinuous,
    P1Discontinuous,
}

impl SpaceFamily {
    /// Number of local basis functions per triangle.
    pub fn local_dim(self) -> usize {
        match self {
            SpaceFamily::P0Discontinuous => 1,
            SpaceFamily::P1Continuous | SpaceFamily::P1Discontinuous => 3,
        }
    }

    pub fn is_piecewise_linear(self) -> bool {
        self.local_dim() == 3
    }
}

impl fmt::Display for SpaceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpaceFamily::P1Continuous => "p1",
            SpaceFamily::P0Discontinuous => "dp0",
            SpaceFamily::P1Discontinuous => "dp1",
        })
    }
}

impl FromStr for SpaceFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "p1c" | "p1-continuous" => Ok(SpaceFamily::P1Continuous),
            "p0" | "dp0" | "p0-discontinuous" => Ok(SpaceFamily::P0Discontinuous),
            "dp1" | "p1d" | "p1-discontinuous" => Ok(SpaceFamily::P1Discontinuous),
            other => Err(format!("unknown space family `{other}`")),
        }
    }
}

/// Location where a nodal value is sampled.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub dof: usize,
    pub triangle: usize,
    pub barycentric: [f64; 3],
    pub point: Point,
    /// Averaged vertex normal for continuous P1, the triangle normal otherwise.
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: TriangleSurfaceMesh,
    family: SpaceFamily,
    dof_count: usize,
    local_to_global: Vec<usize>,
}

pub fn build_space(mesh: &TriangleSurfaceMesh, family: SpaceFamily) -> Result<FunctionSpace> {
    FunctionSpace::new(mesh, family)
}

impl FunctionSpace {
    pub fn new(mesh: &TriangleSurfaceMesh, family: SpaceFamily) -> Result<Self> {
        if mesh.triangle_count() == 0 {
            return Err(BemError::InvalidMesh("mesh has no triangles".into()));
        }
        let nt = mesh.triangle_count();
        let (dof_count, local_to_global) = match family {
            SpaceFamily::P1Continuous => (
                mesh.vertex_count(),
                mesh.triangles().iter().flatten().copied().collect(),
            ),
            SpaceFamily::P0Discontinuous => (nt, (0..nt).collect()),
            SpaceFamily::P1Discontinuous => (3 * nt, (0..3 * nt).collect()),
        };
        Ok(Self {
            mesh: mesh.clone(),
            family,
            dof_count,
            local_to_global,
        })
    }

    pub fn mesh(&self) -> &TriangleSurfaceMesh {
        &self.mesh
    }

    pub fn family(&self) -> SpaceFamily {
        self.family
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    /// Global indices of the local basis functions on triangle `t`, in vertex order.
    pub fn local_dofs(&self, t: usize) -> &[usize] {
        let n = self.family.local_dim();
        &self.local_to_global[n * t..n * (t + 1)]
    }

    /// Same space on a relabelled copy of the mesh (geometry must be shared).
    pub fn on_mesh(&self, mesh: &TriangleSurfaceMesh) -> Result<Self> {
        if !self.mesh.same_geometry(mesh) {
            return Err(BemError::MeshMismatch);
        }
        let mut space = self.clone();
        space.mesh = mesh.clone();
        Ok(space)
    }

    pub fn same_mesh(&self, other: &FunctionSpace) -> bool {
        self.mesh.same_geometry(&other.mesh)
    }

    pub fn nodes(&self) -> Vec<Node> {
        let mesh = &self.mesh;
        match self.family {
            SpaceFamily::P1Continuous => {
                let normals = mesh.vertex_normals();
                let mut owner = vec![None; mesh.vertex_count()];
                for (t, tri) in mesh.triangles().iter().enumerate() {
                    for (k, &v) in tri.iter().enumerate() {
                        owner[v].get_or_insert((t, k));
                    }
                }
                (0..mesh.vertex_count())
                    .filter_map(|v| {
                        owner[v].map(|(t, k)| {
                            let mut barycentric = [0.0; 3];
                            barycentric[k] = 1.0;
                            Node {
                                dof: v,
                                triangle: t,
                                barycentric,
                                point: mesh.vertices()[v],
                                normal: normals[v],
                            }
                        })
                    })
                    .collect()
            }
            SpaceFamily::P0Discontinuous => (0..mesh.triangle_count())
                .map(|t| Node {
                    dof: t,
                    triangle: t,
                    barycentric: [1.0 / 3.0; 3],
                    point: mesh.centroid(t),
                    normal: mesh.normal(t),
                })
                .collect(),
            SpaceFamily::P1Discontinuous => (0..mesh.triangle_count())
                .flat_map(|t| {
                    let tri = mesh.triangles()[t];
                    (0..3).map(move |k| (t, k, tri[k]))
                })
                .map(|(t, k, v)| {
                    let mut barycentric = [0.0; 3];
                    barycentric[k] = 1.0;
                    Node {
                        dof: 3 * t + k,
                        triangle: t,
                        barycentric,
                        point: mesh.vertices()[v],
                        normal: mesh.normal(t),
                    }
                })
                .collect(),
        }
    }

    /// Nodal interpolation of a field that only depends on position.
    pub fn interpolate<F: Fn(&Point) -> f64>(&self, f: F) -> Result<Coefficients> {
        self.interpolate_with_normal(|p, _| f(p))
    }

    /// Nodal interpolation of a field that may depend on the outward normal.
    pub fn interpolate_with_normal<F: Fn(&Point, &Vector3<f64>) -> f64>(
        &self,
        f: F,
    ) -> Result<Coefficients> {
        let mut coeffs = DVector::zeros(self.dof_count);
        for node in self.nodes() {
            let value = f(&node.point, &node.normal);
            if !value.is_finite() {
                return Err(BemError::NonFinite {
                    value,
                    location: format!("node {} at {:?}", node.dof, node.point.as_slice()),
                });
            }
            coeffs[node.dof] = value;
        }
        Ok(coeffs)
    }

    /// Value of the discrete function on triangle `t` at barycentric coordinates `bary`.
    pub fn evaluate(&self, coeffs: &Coefficients, t: usize, bary: [f64; 3]) -> f64 {
        let dofs = self.local_dofs(t);
        match self.family {
            SpaceFamily::P0Discontinuous => coeffs[dofs[0]],
            _ => (0..3).map(|k| bary[k] * coeffs[dofs[k]]).sum(),
        }
    }

    /// `m_i = ∫_Γ φ_i`, the mass matrix applied to the constant one.
    pub fn integrals(&self) -> Coefficients {
        let mut m = DVector::zeros(self.dof_count);
        let share = 1.0 / self.family.local_dim() as f64;
        for t in 0..self.mesh.triangle_count() {
            let a = self.mesh.area(t);
            for &d in self.local_dofs(t) {
                m[d] += a * share;
            }
        }
        m
    }

    /// DOFs whose support meets at least one triangle in `regions`.
    pub fn dofs_touching(&self, regions: &[Region]) -> Vec<bool> {
        let mut mask = vec![false; self.dof_count];
        for t in 0..self.mesh.triangle_count() {
            if regions.contains(&self.mesh.region(t)) {
                for &d in self.local_dofs(t) {
                    mask[d] = true;
                }
            }
        }
        mask
    }
}

/// Exact integral of the product of local basis functions on a triangle of area `area`.
fn local_mass(test: SpaceFamily, trial: SpaceFamily, area: f64, i: usize, j: usize) -> f64 {
    match (test.local_dim(), trial.local_dim()) {
        (1, 1) => area,
        (1, 3) | (3, 1) => area / 3.0,
        _ => {
            if i == j {
                area / 6.0
            } else {
                area / 12.0
            }
        }
    }
}

/// `M[i, j] = ∫_{Γ'} φ_i ψ_j` with φ from `test`, ψ from `trial`, and Γ' the
/// triangles whose label is in `filter` (all of Γ when `None`).
pub fn assemble_mass(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    filter: Option<&[Region]>,
) -> Result<CsrMatrix<f64>> {
    assemble_weighted_mass(test, trial, |r| match filter {
        Some(labels) if !labels.contains(&r) => 0.0,
        _ => 1.0,
    })
}

/// Mass matrix with a piecewise constant weight per region. Triangles with
/// zero weight contribute no structural entries.
pub fn assemble_weighted_mass<F: Fn(Region) -> f64>(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    weight: F,
) -> Result<CsrMatrix<f64>> {
    if !test.same_mesh(trial) {
        return Err(BemError::MeshMismatch);
    }
    let mesh = test.mesh();
    let mut coo = CooMatrix::new(test.dof_count(), trial.dof_count());
    for t in 0..mesh.triangle_count() {
        let w = weight(mesh.region(t));
        if w == 0.0 {
            continue;
        }
        let area = mesh.area(t);
        for (i, &r) in test.local_dofs(t).iter().enumerate() {
            for (j, &c) in trial.local_dofs(t).iter().enumerate() {
                coo.push(
                    r,
                    c,
                    w * local_mass(test.family(), trial.family(), area, i, j),
                );
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// `⟨v, 1⟩ / ⟨1, 1⟩` with exact integration.
pub fn mean_value(space: &FunctionSpace, v: &Coefficients) -> f64 {
    space.integrals().dot(v) / space.mesh().total_area()
}
