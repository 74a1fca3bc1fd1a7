//! Triangle quadrature and singular quadrature for pairs of touching triangles.
//!
//! Reference triangle for the pair rules is `T̂ = {0 ≤ x₂ ≤ x₁ ≤ 1}`, mapped to
//! a physical triangle `(A, B, C)` by `χ(x) = (1 − x₁)A + (x₁ − x₂)B + x₂C`.
//! Barycentric coordinates of a reference point are therefore
//! `(1 − x₁, x₁ − x₂, x₂)`. Singular pair rules follow Sauter and Schwab: the
//! product domain is split into subregions on which a Duffy-type substitution
//! cancels the `1/|x − y|` singularity.

use std::fmt;

use crate::error::{BemError, Result};
use crate::mesh::Point;

pub const MAX_TRIANGLE_ORDER: usize = 20;

/// Rule on the reference triangle in barycentric form; weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

/// Symmetric orbit generators: (barycentric generator, weight on a unit-area triangle).
type Orbit = ([f64; 3], f64);

const DEGREE_4: [Orbit; 2] = [
    (
        [0.445948490915965, 0.445948490915965, 0.108103018168070],
        0.223381589678011,
    ),
    (
        [0.091576213509771, 0.091576213509771, 0.816847572980459],
        0.109951743655322,
    ),
];

const DEGREE_5: [Orbit; 3] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    (
        [0.470142064105115, 0.470142064105115, 0.059715871789770],
        0.132394152788506,
    ),
    (
        [0.101286507323456, 0.101286507323456, 0.797426985353087],
        0.125939180544827,
    ),
];

const DEGREE_6: [Orbit; 3] = [
    (
        [0.249286745170910, 0.249286745170910, 0.501426509658179],
        0.116786275726379,
    ),
    (
        [0.063089014491502, 0.063089014491502, 0.873821971016996],
        0.050844906370207,
    ),
    (
        [0.053145049844817, 0.310352451033784, 0.636502499121399],
        0.082851075618374,
    ),
];

fn expand_orbits(orbits: &[Orbit], degree: usize) -> TriangleRule {
    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut weights = Vec::new();
    for &(g, w) in orbits {
        let perms = [
            [g[0], g[1], g[2]],
            [g[1], g[2], g[0]],
            [g[2], g[0], g[1]],
            [g[1], g[0], g[2]],
            [g[0], g[2], g[1]],
            [g[2], g[1], g[0]],
        ];
        let start = points.len();
        for p in perms {
            if !points[start..]
                .iter()
                .any(|q| (0..3).all(|k| (q[k] - p[k]).abs() < 1e-14))
            {
                points.push(p);
            }
        }
        let count = points.len() - start;
        weights.extend(std::iter::repeat_n(0.5 * w, count));
    }
    TriangleRule {
        points,
        weights,
        degree,
    }
}

/// Symmetric rules up to degree 6; collapsed Gauss products above that.
pub fn triangle_rule(order: usize) -> Result<TriangleRule> {
    let rule = match order {
        1 => TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            degree: 1,
        },
        2 => TriangleRule {
            points: vec![
                [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            ],
            weights: vec![1.0 / 6.0; 3],
            degree: 2,
        },
        3 | 4 => expand_orbits(&DEGREE_4, 4),
        5 => expand_orbits(&DEGREE_5, 5),
        6 => expand_orbits(&DEGREE_6, 6),
        7..=MAX_TRIANGLE_ORDER => collapsed_rule(order),
        _ => {
            return Err(BemError::Unsupported {
                what: "triangle rule order",
                detail: format!("{order} is outside 1..={MAX_TRIANGLE_ORDER}"),
            })
        }
    };
    Ok(rule)
}

/// Duffy-collapsed Gauss–Legendre product, exact to `degree`.
fn collapsed_rule(degree: usize) -> TriangleRule {
    let n = (degree + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&u, &wu) in x.iter().zip(&w) {
        for (&v, &wv) in x.iter().zip(&w) {
            let (x1, x2) = (u, u * v);
            points.push([1.0 - x1, x1 - x2, x2]);
            weights.push(wu * wv * u);
        }
    }
    TriangleRule {
        points,
        weights,
        degree,
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjacencyClass {
    Disjoint,
    Vertex,
    Edge,
    Coincident,
}

impl AdjacencyClass {
    pub fn subregions(self) -> usize {
        match self {
            AdjacencyClass::Disjoint => 1,
            AdjacencyClass::Vertex => 2,
            AdjacencyClass::Edge => 5,
            AdjacencyClass::Coincident => 6,
        }
    }
}

impl fmt::Display for AdjacencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjacencyClass::Disjoint => "disjoint",
            AdjacencyClass::Vertex => "vertex",
            AdjacencyClass::Edge => "edge",
            AdjacencyClass::Coincident => "coincident",
        })
    }
}

/// Adjacency of two triangles together with local vertex orderings that put
/// the shared vertices first, in matching order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacency {
    pub class: AdjacencyClass,
    /// `perm_a[k]` is the local vertex of triangle a used as reference vertex k.
    pub perm_a: [usize; 3],
    pub perm_b: [usize; 3],
}

pub fn classify(a: &[usize; 3], b: &[usize; 3]) -> Adjacency {
    let mut shared = [(0usize, 0usize); 3];
    let mut count = 0;
    for (i, va) in a.iter().enumerate() {
        if let Some(j) = b.iter().position(|vb| vb == va) {
            shared[count] = (i, j);
            count += 1;
        }
    }
    let complete = |first: &[usize]| -> [usize; 3] {
        let mut perm = [0; 3];
        perm[..first.len()].copy_from_slice(first);
        let mut k = first.len();
        for start in 0..3 {
            let cand = (first.first().copied().unwrap_or(0) + start) % 3;
            if !perm[..k].contains(&cand) {
                perm[k] = cand;
                k += 1;
            }
        }
        perm
    };
    match count {
        0 => Adjacency {
            class: AdjacencyClass::Disjoint,
            perm_a: [0, 1, 2],
            perm_b: [0, 1, 2],
        },
        1 => Adjacency {
            class: AdjacencyClass::Vertex,
            perm_a: complete(&[shared[0].0]),
            perm_b: complete(&[shared[0].1]),
        },
        2 => Adjacency {
            class: AdjacencyClass::Edge,
            perm_a: complete(&[shared[0].0, shared[1].0]),
            perm_b: complete(&[shared[0].1, shared[1].1]),
        },
        _ => Adjacency {
            class: AdjacencyClass::Coincident,
            perm_a: [0, 1, 2],
            perm_b: [shared[0].1, shared[1].1, shared[2].1],
        },
    }
}

/// Rule on `T̂ × T̂`; nodes are `(x₁, x₂, y₁, y₂)` in reference coordinates.
#[derive(Debug, Clone)]
pub struct PairRule {
    pub class: AdjacencyClass,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

pub fn singular_pair_rule(class: AdjacencyClass, order: usize) -> Result<PairRule> {
    if class == AdjacencyClass::Disjoint {
        return Err(BemError::Unsupported {
            what: "pair rule class",
            detail: "disjoint pairs use regular rules".into(),
        });
    }
    if order == 0 || order > 64 {
        return Err(BemError::Unsupported {
            what: "pair rule order",
            detail: format!("{order} Gauss points per dimension"),
        });
    }
    let (g, gw) = gauss_legendre(order);
    let mut points = Vec::with_capacity(order.pow(4) * class.subregions());
    let mut weights = Vec::with_capacity(points.capacity());
    for region in 0..class.subregions() {
        for (&xi, &w0) in g.iter().zip(&gw) {
            for (&e1, &w1) in g.iter().zip(&gw) {
                for (&e2, &w2) in g.iter().zip(&gw) {
                    for (&e3, &w3) in g.iter().zip(&gw) {
                        let (p, jac) = map_region(class, region, xi, e1, e2, e3);
                        points.push(p);
                        weights.push(w0 * w1 * w2 * w3 * jac);
                    }
                }
            }
        }
    }
    Ok(PairRule {
        class,
        points,
        weights,
    })
}

fn map_region(
    class: AdjacencyClass,
    region: usize,
    xi: f64,
    e1: f64,
    e2: f64,
    e3: f64,
) -> ([f64; 4], f64) {
    let pair = |x: [f64; 2], y: [f64; 2]| [xi * x[0], xi * x[1], xi * y[0], xi * y[1]];
    let swap = |p: [f64; 4]| [p[2], p[3], p[0], p[1]];
    let xi3 = xi * xi * xi;
    match class {
        AdjacencyClass::Coincident => {
            let jac = xi3 * e1 * e1 * e2;
            let base = match region / 2 {
                0 => pair([1.0, 1.0 - e1 + e1 * e2], [1.0 - e1 * e2 * e3, 1.0 - e1]),
                1 => pair(
                    [1.0, e1 * (1.0 - e2 + e2 * e3)],
                    [1.0 - e1 * e2, e1 * (1.0 - e2)],
                ),
                _ => pair(
                    [1.0 - e1 * e2 * e3, e1 * (1.0 - e2 * e3)],
                    [1.0, e1 * (1.0 - e2)],
                ),
            };
            (
                if region.is_multiple_of(2) {
                    base
                } else {
                    swap(base)
                },
                jac,
            )
        }
        AdjacencyClass::Edge => match region {
            0 => (
                pair([1.0, e1 * e3], [1.0 - e1 * e2, e1 * (1.0 - e2)]),
                xi3 * e1 * e1,
            ),
            1 => (
                pair([1.0, e1], [1.0 - e1 * e2 * e3, e1 * e2 * (1.0 - e3)]),
                xi3 * e1 * e1 * e2,
            ),
            2 => (
                pair([1.0 - e1 * e2, e1 * (1.0 - e2)], [1.0, e1 * e2 * e3]),
                xi3 * e1 * e1 * e2,
            ),
            3 => (
                pair([1.0 - e1 * e2 * e3, e1 * e2 * (1.0 - e3)], [1.0, e1]),
                xi3 * e1 * e1 * e2,
            ),
            _ => (
                pair([1.0 - e1 * e2 * e3, e1 * (1.0 - e2 * e3)], [1.0, e1 * e2]),
                xi3 * e1 * e1 * e2,
            ),
        },
        AdjacencyClass::Vertex => {
            let base = [xi, xi * e1, xi * e2, xi * e2 * e3];
            (if region == 0 { base } else { swap(base) }, xi3 * e2)
        }
        AdjacencyClass::Disjoint => unreachable!("disjoint pairs have no singular map"),
    }
}

/// Reference coordinates `(x₁, x₂)` to barycentric `(1 − x₁, x₁ − x₂, x₂)`.
#[inline]
pub fn reference_barycentric(x1: f64, x2: f64) -> [f64; 3] {
    [1.0 - x1, x1 - x2, x2]
}

/// Quadrature orders used for the Galerkin pair integrals.
#[derive(Debug, Clone)]
pub struct PairRules {
    pub regular: TriangleRule,
    pub near: TriangleRule,
    /// Pairs closer than `near_factor · max(diam_a, diam_b)` (centroid distance) use `near`.
    pub near_factor: f64,
    pub coincident: PairRule,
    pub edge: PairRule,
    pub vertex: PairRule,
}

/// Defaults keep a doubling of every order below 1e-6 relative change on
/// sphere meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Triangle rule order for well-separated pairs.
    pub regular: usize,
    /// Triangle rule order for close, non-touching pairs.
    pub near: usize,
    /// Gauss points per dimension of the singular pair rules.
    pub singular: usize,
    /// Centroid distance below `near_factor · max(diam_a, diam_b)` counts as close.
    pub near_factor: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            regular: 4,
            near: 8,
            singular: 7,
            near_factor: 4.0,
        }
    }
}

impl PairRules {
    pub fn new(orders: QuadratureOptions) -> Result<Self> {
        if orders.near_factor.is_nan() || orders.near_factor < 0.0 {
            return Err(BemError::InvalidParameter {
                name: "near_factor",
                value: orders.near_factor,
            });
        }
        Ok(Self {
            regular: triangle_rule(orders.regular)?,
            near: triangle_rule(orders.near)?,
            near_factor: orders.near_factor,
            coincident: singular_pair_rule(AdjacencyClass::Coincident, orders.singular)?,
            edge: singular_pair_rule(AdjacencyClass::Edge, orders.singular)?,
            vertex: singular_pair_rule(AdjacencyClass::Vertex, orders.singular)?,
        })
    }

    pub fn singular(&self, class: AdjacencyClass) -> Option<&PairRule> {
        match class {
            AdjacencyClass::Coincident => Some(&self.coincident),
            AdjacencyClass::Edge => Some(&self.edge),
            AdjacencyClass::Vertex => Some(&self.vertex),
            AdjacencyClass::Disjoint => None,
        }
    }
}

impl Default for PairRules {
    fn default() -> Self {
        Self::new(QuadratureOptions::default()).expect("default quadrature orders are valid")
    }
}

/// A triangle rule pushed forward to a physical triangle; weights include the Jacobian.
#[derive(Debug, Clone)]
pub struct MappedRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub barycentric: Vec<[f64; 3]>,
}

impl MappedRule {
    pub fn new(rule: &TriangleRule, vertices: &[Point; 3]) -> Self {
        let jac = (vertices[1] - vertices[0])
            .cross(&(vertices[2] - vertices[0]))
            .norm();
        Self {
            points: rule
                .points
                .iter()
                .map(|b| vertices[0] * b[0] + vertices[1] * b[1] + vertices[2] * b[2])
                .collect(),
            weights: rule.weights.iter().map(|w| w * jac).collect(),
            barycentric: rule.points.clone(),
        }
    }
}

/// Local P1×P1 matrices for `K` kernels: `out[k][i][j] = ∫∫ kernel_k(x, y) λ_i(x) λ_j(y)`.
pub type LocalMatrices<const K: usize> = [[[f64; 3]; 3]; K];

/// Regular (tensor) integration of a pair from pre-mapped rules.
#[inline]
pub fn integrate_regular<const K: usize, F>(
    kernel: &F,
    qa: &MappedRule,
    qb: &MappedRule,
) -> LocalMatrices<K>
where
    F: Fn(&Point, &Point) -> [f64; K],
{
    let mut out = [[[0.0; 3]; 3]; K];
    for (x, (&wa, ba)) in qa.points.iter().zip(qa.weights.iter().zip(&qa.barycentric)) {
        let mut inner = [[0.0; 3]; K];
        for (y, (&wb, bb)) in qb.points.iter().zip(qb.weights.iter().zip(&qb.barycentric)) {
            let values = kernel(x, y);
            for k in 0..K {
                let v = values[k] * wb;
                for j in 0..3 {
                    inner[k][j] += v * bb[j];
                }
            }
        }
        for k in 0..K {
            for i in 0..3 {
                let s = wa * ba[i];
                for j in 0..3 {
                    out[k][i][j] += s * inner[k][j];
                }
            }
        }
    }
    out
}

/// Singular integration of a touching pair with a Sauter–Schwab rule.
pub fn integrate_singular<const K: usize, F>(
    kernel: &F,
    pa: &[Point; 3],
    pb: &[Point; 3],
    adjacency: &Adjacency,
    rule: &PairRule,
) -> LocalMatrices<K>
where
    F: Fn(&Point, &Point) -> [f64; K],
{
    let a = adjacency.perm_a.map(|i| pa[i]);
    let b = adjacency.perm_b.map(|i| pb[i]);
    let jac_a = (a[1] - a[0]).cross(&(a[2] - a[0])).norm();
    let jac_b = (b[1] - b[0]).cross(&(b[2] - b[0])).norm();
    let mut acc = [[[0.0; 3]; 3]; K];
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let ba = reference_barycentric(p[0], p[1]);
        let bb = reference_barycentric(p[2], p[3]);
        let x = a[0] * ba[0] + a[1] * ba[1] + a[2] * ba[2];
        let y = b[0] * bb[0] + b[1] * bb[1] + b[2] * bb[2];
        let values = kernel(&x, &y);
        for k in 0..K {
            let v = values[k] * w;
            for i in 0..3 {
                for j in 0..3 {
                    acc[k][i][j] += v * ba[i] * bb[j];
                }
            }
        }
    }
    // Undo the vertex permutation so indices refer to the original local order.
    let scale = jac_a * jac_b;
    let mut out = [[[0.0; 3]; 3]; K];
    for k in 0..K {
        for i in 0..3 {
            for j in 0..3 {
                out[k][adjacency.perm_a[i]][adjacency.perm_b[j]] = scale * acc[k][i][j];
            }
        }
    }
    out
}

/// Galerkin pair integral with P1 basis products on both triangles. P0 values
/// are the sums over the local indices. Dispatches on the adjacency class
/// computed from the vertex indices.
pub fn integrate_pair<const K: usize, F>(
    kernel: F,
    tri_a: (&[usize; 3], &[Point; 3]),
    tri_b: (&[usize; 3], &[Point; 3]),
    rules: &PairRules,
) -> Result<LocalMatrices<K>>
where
    F: Fn(&Point, &Point) -> [f64; K],
{
    let adjacency = classify(tri_a.0, tri_b.0);
    let out = match rules.singular(adjacency.class) {
        Some(rule) => integrate_singular(&kernel, tri_a.1, tri_b.1, &adjacency, rule),
        None => {
            let rule = if is_near(tri_a.1, tri_b.1, rules.near_factor) {
                &rules.near
            } else {
                &rules.regular
            };
            integrate_regular(
                &kernel,
                &MappedRule::new(rule, tri_a.1),
                &MappedRule::new(rule, tri_b.1),
            )
        }
    };
    check_finite(&out)?;
    Ok(out)
}

pub(crate) fn is_near(a: &[Point; 3], b: &[Point; 3], factor: f64) -> bool {
    let diam = |p: &[Point; 3]| {
        (p[1] - p[0])
            .norm()
            .max((p[2] - p[1]).norm())
            .max((p[0] - p[2]).norm())
    };
    let ca = (a[0] + a[1] + a[2]) / 3.0;
    let cb = (b[0] + b[1] + b[2]) / 3.0;
    (ca - cb).norm() < factor * diam(a).max(diam(b))
}

pub(crate) fn check_finite<const K: usize>(m: &LocalMatrices<K>) -> Result<()> {
    for (k, block) in m.iter().enumerate() {
        for row in block {
            for &v in row {
                if !v.is_finite() {
                    return Err(BemError::NonFinite {
                        value: v,
                        location: format!("pair integral of kernel {k}"),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Sum over local indices, turning P1 local matrices into P0 ones.
pub fn p0_sum(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().sum()
}
