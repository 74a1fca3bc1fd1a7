//! Closed, outward-oriented triangulated surfaces and their region labels.
//!
//! Geometry (vertices, connectivity, per-triangle normals and areas) is held
//! behind an [`Arc`] so that relabelling a surface never copies or perturbs
//! it; operators assembled on one labelling stay valid for every other.

mod io;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{BemError, Result};

pub use io::{read_ascii, write_ascii};

pub type Point = Vector3<f64>;

/// Largest refinement level accepted by the sphere generators.
pub const MAX_SPHERE_LEVEL: usize = 8;

/// Relative tolerance (in units of the mesh size) for a vertex to count as lying on a plane.
pub const PLANE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Dirichlet,
    Neumann,
    Robin,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Dirichlet, Region::Neumann, Region::Robin];

    pub fn code(self) -> char {
        match self {
            Region::Dirichlet => 'D',
            Region::Neumann => 'N',
            Region::Robin => 'R',
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Region::Dirichlet => "dirichlet",
            Region::Neumann => "neumann",
            Region::Robin => "robin",
        };
        f.write_str(name)
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d" | "dirichlet" => Ok(Region::Dirichlet),
            "n" | "neumann" => Ok(Region::Neumann),
            "r" | "robin" => Ok(Region::Robin),
            other => Err(format!("unknown region label `{other}`")),
        }
    }
}

/// Immutable geometric data of a triangulated surface.
#[derive(Debug)]
pub struct SurfaceGeometry {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector3<f64>>,
    areas: Vec<f64>,
    centroids: Vec<Point>,
    diameters: Vec<f64>,
}

impl SurfaceGeometry {
    fn build(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(BemError::InvalidMesh(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            if !norm.is_normal() {
                return Err(BemError::InvalidMesh(format!("triangle {t} is degenerate")));
            }
            normals.push(cross / norm);
            areas.push(0.5 * norm);
            centroids.push((a + b + c) / 3.0);
            diameters.push((b - a).norm().max((c - b).norm()).max((a - c).norm()));
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
            areas,
            centroids,
            diameters,
        })
    }
}

/// A triangulated surface with a region label on every triangle.
#[derive(Debug, Clone)]
pub struct TriangleSurfaceMesh {
    geometry: Arc<SurfaceGeometry>,
    regions: Vec<Region>,
}

impl TriangleSurfaceMesh {
    /// Builds a mesh and checks that it is closed and consistently oriented.
    /// All triangles start out labelled Dirichlet.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self::new_unchecked(vertices, triangles)?;
        let diag = mesh.validate();
        if !diag.closed {
            return Err(BemError::InvalidMesh(format!(
                "surface is not closed ({} boundary edges, {} non-manifold edges)",
                diag.boundary_edges, diag.non_manifold_edges
            )));
        }
        if !diag.consistently_oriented {
            return Err(BemError::InvalidMesh(
                "triangle orientation is inconsistent".into(),
            ));
        }
        Ok(mesh)
    }

    /// Builds a mesh without topological validation. Triangles must still be
    /// non-degenerate and reference existing vertices.
    pub fn new_unchecked(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let geometry = SurfaceGeometry::build(vertices, triangles)?;
        let regions = vec![Region::Dirichlet; geometry.triangles.len()];
        Ok(Self {
            geometry: Arc::new(geometry),
            regions,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.geometry.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.geometry.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.geometry.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.geometry.triangles.len()
    }

    pub fn normal(&self, t: usize) -> Vector3<f64> {
        self.geometry.normals[t]
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.geometry.normals
    }

    pub fn area(&self, t: usize) -> f64 {
        self.geometry.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.geometry.areas
    }

    pub fn centroid(&self, t: usize) -> Point {
        self.geometry.centroids[t]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.geometry.diameters[t]
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        self.geometry.triangles[t].map(|i| self.geometry.vertices[i])
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.areas.iter().sum()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, t: usize) -> Region {
        self.regions[t]
    }

    pub fn region_triangle_count(&self, region: Region) -> usize {
        self.regions.iter().filter(|&&r| r == region).count()
    }

    /// True when both meshes share the same geometry (labels may differ).
    pub fn same_geometry(&self, other: &TriangleSurfaceMesh) -> bool {
        Arc::ptr_eq(&self.geometry, &other.geometry)
    }

    /// Returns a copy with explicit labels, sharing the geometry.
    pub fn with_regions(&self, regions: Vec<Region>) -> Result<Self> {
        if regions.len() != self.triangle_count() {
            return Err(BemError::DimensionMismatch {
                expected: self.triangle_count(),
                found: regions.len(),
            });
        }
        Ok(Self {
            geometry: Arc::clone(&self.geometry),
            regions,
        })
    }

    /// Area-weighted average of the normals of the triangles around each vertex.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertex_count()];
        for (t, tri) in self.triangles().iter().enumerate() {
            let weighted = self.normal(t) * self.area(t);
            for &v in tri {
                acc[v] += weighted;
            }
        }
        acc.into_iter()
            .map(|n| {
                let norm = n.norm();
                if norm > 0.0 {
                    n / norm
                } else {
                    n
                }
            })
            .collect()
    }

    /// Largest edge length over all triangles.
    pub fn mesh_size(&self) -> f64 {
        self.geometry.diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Assigns region labels according to `rule`.
    pub fn tag_regions(&self, rule: &RegionRule) -> Result<Self> {
        let regions = match *rule {
            RegionRule::Whole(region) => vec![region; self.triangle_count()],
            RegionRule::HalfSpace {
                normal,
                offset,
                inside,
                outside,
            } => {
                let tol = PLANE_TOLERANCE * self.mesh_size();
                let mut labels = Vec::with_capacity(self.triangle_count());
                for (t, tri) in self.triangles().iter().enumerate() {
                    let side = tri.map(|v| normal.dot(&self.vertices()[v]) - offset);
                    let above = side.iter().any(|&s| s > tol);
                    let below = side.iter().any(|&s| s < -tol);
                    if above && below {
                        return Err(BemError::UnfittedMesh { triangle: t });
                    }
                    let c = normal.dot(&self.centroid(t)) - offset;
                    labels.push(if c > 0.0 { inside } else { outside });
                }
                labels
            }
        };
        self.with_regions(regions)
    }

    pub fn validate(&self) -> MeshDiagnostics {
        let mut edges: HashMap<(usize, usize), Vec<bool>> = HashMap::new();
        for tri in self.triangles() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let forward = a < b;
                edges.entry((a.min(b), a.max(b))).or_default().push(forward);
            }
        }
        let mut boundary_edges = 0;
        let mut non_manifold_edges = 0;
        let mut consistently_oriented = true;
        for dirs in edges.values() {
            match dirs.len() {
                1 => boundary_edges += 1,
                2 => {
                    if dirs[0] == dirs[1] {
                        consistently_oriented = false;
                    }
                }
                _ => non_manifold_edges += 1,
            }
        }
        let outward_star_shaped =
            (0..self.triangle_count()).all(|t| self.normal(t).dot(&self.centroid(t)) > 0.0);
        let (mut min_aspect, mut max_aspect) = (f64::INFINITY, 0.0_f64);
        for t in 0..self.triangle_count() {
            let ratio = aspect_ratio(&self.triangle_vertices(t));
            min_aspect = min_aspect.min(ratio);
            max_aspect = max_aspect.max(ratio);
        }
        let euler_characteristic =
            self.vertex_count() as i64 - edges.len() as i64 + self.triangle_count() as i64;
        MeshDiagnostics {
            closed: boundary_edges == 0 && non_manifold_edges == 0,
            consistently_oriented,
            outward_star_shaped,
            euler_characteristic,
            edge_count: edges.len(),
            boundary_edges,
            non_manifold_edges,
            min_aspect_ratio: min_aspect,
            max_aspect_ratio: max_aspect,
        }
    }
}

/// Circumradius over twice the inradius; 1 for an equilateral triangle.
pub fn aspect_ratio(p: &[Point; 3]) -> f64 {
    let a = (p[1] - p[0]).norm();
    let b = (p[2] - p[1]).norm();
    let c = (p[0] - p[2]).norm();
    let s = 0.5 * (a + b + c);
    let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
    a * b * c * s / (8.0 * area * area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshDiagnostics {
    pub closed: bool,
    pub consistently_oriented: bool,
    /// All normals satisfy `ν · centroid > 0`.
    pub outward_star_shaped: bool,
    pub euler_characteristic: i64,
    pub edge_count: usize,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    pub min_aspect_ratio: f64,
    pub max_aspect_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionRule {
    Whole(Region),
    /// Triangles whose centroid satisfies `normal · x > offset` get `inside`, the rest `outside`.
    HalfSpace {
        normal: Vector3<f64>,
        offset: f64,
        inside: Region,
        outside: Region,
    },
}

impl RegionRule {
    /// Neumann on `x > 0`, Dirichlet elsewhere.
    pub fn mixed_x_positive() -> Self {
        RegionRule::HalfSpace {
            normal: Vector3::x(),
            offset: 0.0,
            inside: Region::Neumann,
            outside: Region::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SphereFamily {
    /// Subdivided icosahedron, 20·4^level triangles.
    Icosahedral,
    /// Subdivided octahedron, 8·4^level triangles. Its coordinate planes are
    /// unions of mesh edges, so it is fitted to the half-space rule `x > 0`.
    Octahedral,
}

impl fmt::Display for SphereFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SphereFamily::Icosahedral => "icosahedral",
            SphereFamily::Octahedral => "octahedral",
        })
    }
}

impl FromStr for SphereFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ico" | "icosahedral" | "icosphere" => Ok(SphereFamily::Icosahedral),
            "octa" | "octahedral" | "octasphere" => Ok(SphereFamily::Octahedral),
            other => Err(format!("unknown sphere family `{other}`")),
        }
    }
}

/// Unit icosphere. The base icosahedron is placed with the coordinate planes
/// as mirror planes.
pub fn make_icosphere(level: usize) -> Result<TriangleSurfaceMesh> {
    make_sphere(SphereFamily::Icosahedral, level)
}

pub fn make_octasphere(level: usize) -> Result<TriangleSurfaceMesh> {
    make_sphere(SphereFamily::Octahedral, level)
}

pub fn make_sphere(family: SphereFamily, level: usize) -> Result<TriangleSurfaceMesh> {
    if level > MAX_SPHERE_LEVEL {
        return Err(BemError::SizeLimit {
            level,
            max: MAX_SPHERE_LEVEL,
        });
    }
    let (mut vertices, mut triangles) = match family {
        SphereFamily::Icosahedral => icosahedron(),
        SphereFamily::Octahedral => octahedron(),
    };
    for v in vertices.iter_mut() {
        *v = v.normalize();
    }
    for _ in 0..level {
        (vertices, triangles) = subdivide(&vertices, &triangles);
    }
    for tri in triangles.iter_mut() {
        let [a, b, c] = tri.map(|i| vertices[i]);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            tri.swap(1, 2);
        }
    }
    TriangleSurfaceMesh::new(vertices, triangles)
}

fn icosahedron() -> (Vec<Point>, Vec<[usize; 3]>) {
    let phi = 0.5 * (1.0 + 5.0_f64.sqrt());
    let vertices = vec![
        Point::new(-1.0, phi, 0.0),
        Point::new(1.0, phi, 0.0),
        Point::new(-1.0, -phi, 0.0),
        Point::new(1.0, -phi, 0.0),
        Point::new(0.0, -1.0, phi),
        Point::new(0.0, 1.0, phi),
        Point::new(0.0, -1.0, -phi),
        Point::new(0.0, 1.0, -phi),
        Point::new(phi, 0.0, -1.0),
        Point::new(phi, 0.0, 1.0),
        Point::new(-phi, 0.0, -1.0),
        Point::new(-phi, 0.0, 1.0),
    ];
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, triangles)
}

fn octahedron() -> (Vec<Point>, Vec<[usize; 3]>) {
    let vertices = vec![
        Point::new(1.0, 0.0, 0.0),
        Point::new(-1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, -1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
        Point::new(0.0, 0.0, -1.0),
    ];
    let triangles = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    (vertices, triangles)
}

/// 1-to-4 midpoint subdivision with projection onto the unit sphere.
fn subdivide(vertices: &[Point], triangles: &[[usize; 3]]) -> (Vec<Point>, Vec<[usize; 3]>) {
    let mut out_vertices = vertices.to_vec();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point>| -> usize {
        *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
            let m = (verts[a] + verts[b]).normalize();
            verts.push(m);
            verts.len() - 1
        })
    };
    let mut out_triangles = Vec::with_capacity(4 * triangles.len());
    for &[a, b, c] in triangles {
        let ab = midpoint(a, b, &mut out_vertices);
        let bc = midpoint(b, c, &mut out_vertices);
        let ca = midpoint(c, a, &mut out_vertices);
        out_triangles.push([a, ab, ca]);
        out_triangles.push([ab, b, bc]);
        out_triangles.push([ca, bc, c]);
        out_triangles.push([ab, bc, ca]);
    }
    (out_vertices, out_triangles)
}
