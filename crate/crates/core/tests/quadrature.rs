//! Validation of the singular pair rules against independent references.

use nitsche_bem::mesh::{make_icosphere, Point};
use nitsche_bem::quadrature::{
    classify, integrate_pair, p0_sum, singular_pair_rule, AdjacencyClass, PairRules,
    QuadratureOptions,
};
use std::f64::consts::PI;

/// ∫ over {0 ≤ x₂ ≤ x₁ ≤ 1} of x₁^a x₂^b.
fn reference_monomial(a: i32, b: i32) -> f64 {
    1.0 / ((b as f64 + 1.0) * (a as f64 + b as f64 + 2.0))
}

#[test]
fn pair_rules_tile_the_product_domain() {
    // A tiling error shows up as a wrong integral of some low-degree polynomial.
    for class in [
        AdjacencyClass::Vertex,
        AdjacencyClass::Edge,
        AdjacencyClass::Coincident,
    ] {
        let rule = singular_pair_rule(class, 6).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let s: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, w)| {
                                w * p[0].powi(a) * p[1].powi(b) * p[2].powi(c) * p[3].powi(d)
                            })
                            .sum();
                        let exact = reference_monomial(a, b) * reference_monomial(c, d);
                        assert!(
                            (s - exact).abs() < 1e-12,
                            "{class}: x1^{a} x2^{b} y1^{c} y2^{d}: {s} vs {exact}"
                        );
                    }
                }
            }
        }
    }
}

fn green(x: &Point, y: &Point) -> [f64; 1] {
    [1.0 / (4.0 * PI * (x - y).norm())]
}

/// Adaptive subdivision oracle: splits both triangles into four, integrates
/// well-separated pairs with a high-order product rule, and recurses on close
/// pairs. Splitting is self-similar, so the dropped close-pair mass after
/// `d` levels is a sum of powers 2^{-d}, 4^{-d}, 8^{-d} and is removed by
/// Richardson extrapolation in depth.
mod oracle {
    use super::*;
    use nitsche_bem::quadrature::{triangle_rule, MappedRule};

    fn split(t: &[Point; 3]) -> [[Point; 3]; 4] {
        let m01 = (t[0] + t[1]) / 2.0;
        let m12 = (t[1] + t[2]) / 2.0;
        let m20 = (t[2] + t[0]) / 2.0;
        [
            [t[0], m01, m20],
            [m01, t[1], m12],
            [m20, m12, t[2]],
            [m01, m12, m20],
        ]
    }

    fn close(a: &[Point; 3], b: &[Point; 3]) -> bool {
        let diam = |t: &[Point; 3]| {
            (t[1] - t[0])
                .norm()
                .max((t[2] - t[1]).norm())
                .max((t[0] - t[2]).norm())
        };
        let ca = (a[0] + a[1] + a[2]) / 3.0;
        let cb = (b[0] + b[1] + b[2]) / 3.0;
        (ca - cb).norm() < 1.5 * diam(a).max(diam(b))
    }

    fn regular(a: &[Point; 3], b: &[Point; 3]) -> f64 {
        let rule = triangle_rule(10).unwrap();
        let qa = MappedRule::new(&rule, a);
        let qb = MappedRule::new(&rule, b);
        let mut s = 0.0;
        for (x, wa) in qa.points.iter().zip(&qa.weights) {
            for (y, wb) in qb.points.iter().zip(&qb.weights) {
                s += wa * wb * green(x, y)[0];
            }
        }
        s
    }

    /// Integral with close sub-pairs below `depth` dropped.
    fn truncated(a: &[Point; 3], b: &[Point; 3], depth: usize) -> f64 {
        if !close(a, b) {
            return regular(a, b);
        }
        if depth == 0 {
            return 0.0;
        }
        let mut s = 0.0;
        for sa in split(a).iter() {
            for sb in split(b).iter() {
                s += truncated(sa, sb, depth - 1);
            }
        }
        s
    }

    pub fn integral(a: &[Point; 3], b: &[Point; 3]) -> f64 {
        let levels: Vec<f64> = (2..=5).map(|d| truncated(a, b, d)).collect();
        let r1: Vec<f64> = levels.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
        let r2: Vec<f64> = r1.windows(2).map(|w| (4.0 * w[1] - w[0]) / 3.0).collect();
        let r3: Vec<f64> = r2.windows(2).map(|w| (8.0 * w[1] - w[0]) / 7.0).collect();
        r3[0]
    }
}

fn unit_pair() -> ([Point; 3], [Point; 3], [Point; 3], [Point; 3]) {
    let a = Point::new(0.0, 0.0, 0.0);
    let b = Point::new(1.0, 0.0, 0.0);
    let c = Point::new(0.0, 1.0, 0.0);
    let d = Point::new(1.0, -0.8, 0.3);
    let e = Point::new(-0.7, -0.6, -0.2);
    (
        [a, b, c],
        [b, a, d],
        [a, e, Point::new(-0.2, -0.9, 0.4)],
        [a, b, c],
    )
}

fn singular_value(class: AdjacencyClass, order: usize) -> f64 {
    let (t, edge, vertex, same) = unit_pair();
    let rules = PairRules::new(QuadratureOptions {
        singular: order,
        ..QuadratureOptions::default()
    })
    .unwrap();
    let (ib, pb) = match class {
        AdjacencyClass::Coincident => ([0, 1, 2], same),
        AdjacencyClass::Edge => ([1, 0, 3], edge),
        _ => ([0, 4, 5], vertex),
    };
    p0_sum(&integrate_pair(green, (&[0, 1, 2], &t), (&ib, &pb), &rules).unwrap()[0])
}

#[test]
fn singular_rules_match_adaptive_oracle() {
    let (t, edge, vertex, same) = unit_pair();
    for (class, other) in [
        (AdjacencyClass::Coincident, same),
        (AdjacencyClass::Edge, edge),
        (AdjacencyClass::Vertex, vertex),
    ] {
        let reference = oracle::integral(&t, &other);
        let value = singular_value(class, 8);
        let rel = (value - reference).abs() / reference.abs();
        assert!(
            rel < 1e-6,
            "{class}: {value} vs oracle {reference} (rel {rel:e})"
        );
    }
}

#[test]
fn singular_rules_converge_with_order() {
    let default = QuadratureOptions::default().singular;
    for class in [
        AdjacencyClass::Coincident,
        AdjacencyClass::Edge,
        AdjacencyClass::Vertex,
    ] {
        let reference = singular_value(class, 16);
        let errors: Vec<f64> = [3, 4, 5, 6, 8]
            .iter()
            .map(|&n| (singular_value(class, n) - reference).abs() / reference)
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] < w[0], "{class}: errors {errors:?}");
        }
        let doubled =
            (singular_value(class, 2 * default) - singular_value(class, default)).abs() / reference;
        assert!(
            doubled < 1e-6,
            "{class}: order doubling changes by {doubled:e}"
        );
    }
}

/// With the default orders, doubling every order changes the integral by less than 1e-6.
#[test]
fn self_convergence_with_default_orders_on_mesh_pairs() {
    let mesh = make_icosphere(2).unwrap();
    let base = PairRules::default();
    let orders = QuadratureOptions::default();
    let fine = PairRules::new(QuadratureOptions {
        regular: 2 * orders.regular,
        near: 2 * orders.near,
        singular: 2 * orders.singular,
        ..orders
    })
    .unwrap();
    let t0 = 0;
    let mut seen = std::collections::HashSet::new();
    for t1 in 0..mesh.triangle_count() {
        let class = classify(&mesh.triangles()[t0], &mesh.triangles()[t1]).class;
        if !seen.insert(class) && class != AdjacencyClass::Disjoint {
            continue;
        }
        let a = (&mesh.triangles()[t0], &mesh.triangle_vertices(t0));
        let b = (&mesh.triangles()[t1], &mesh.triangle_vertices(t1));
        let coarse = p0_sum(&integrate_pair(green, (a.0, a.1), (b.0, b.1), &base).unwrap()[0]);
        let refined = p0_sum(&integrate_pair(green, (a.0, a.1), (b.0, b.1), &fine).unwrap()[0]);
        let rel = (coarse - refined).abs() / refined.abs();
        assert!(rel < 1e-6, "{class} pair (0,{t1}): rel change {rel:e}");
    }
}

#[test]
fn far_pair_matches_centroid_approximation() {
    let small = |c: Point| {
        [
            c,
            c + Point::new(0.01, 0.0, 0.0),
            c + Point::new(0.0, 0.01, 0.0),
        ]
    };
    let a = small(Point::new(0.0, 0.0, 0.0));
    let b = small(Point::new(3.0, 1.0, -2.0));
    let area = 0.5e-4;
    let ca = (a[0] + a[1] + a[2]) / 3.0;
    let cb = (b[0] + b[1] + b[2]) / 3.0;
    let approx = area * area * green(&ca, &cb)[0];
    let rules = PairRules::default();
    let value =
        p0_sum(&integrate_pair(green, (&[0, 1, 2], &a), (&[3, 4, 5], &b), &rules).unwrap()[0]);
    let high = p0_sum(
        &integrate_pair(
            green,
            (&[0, 1, 2], &a),
            (&[3, 4, 5], &b),
            &PairRules::new(QuadratureOptions {
                regular: 12,
                near: 12,
                ..QuadratureOptions::default()
            })
            .unwrap(),
        )
        .unwrap()[0],
    );
    assert!((value - approx).abs() < 0.01 * approx);
    assert!((value - high).abs() < 1e-12 * high);
}

#[test]
fn adjacency_classes_on_icosphere_match_brute_force() {
    let mesh = make_icosphere(1).unwrap();
    for (i, a) in mesh.triangles().iter().enumerate() {
        for (j, b) in mesh.triangles().iter().enumerate() {
            let shared = a.iter().filter(|v| b.contains(v)).count();
            let expected = match shared {
                0 => AdjacencyClass::Disjoint,
                1 => AdjacencyClass::Vertex,
                2 => AdjacencyClass::Edge,
                _ => AdjacencyClass::Coincident,
            };
            assert_eq!(classify(a, b).class, expected, "pair ({i},{j})");
            assert_eq!(shared == 3, i == j);
        }
    }
}

#[test]
fn misclassified_pair_is_reported() {
    // Same triangle presented with disjoint indices forces the regular rule
    // onto a singular integrand with a node on the diagonal (centroid rule).
    let (t, _, _, _) = unit_pair();
    let rules = PairRules::new(QuadratureOptions {
        regular: 1,
        near: 1,
        ..QuadratureOptions::default()
    })
    .unwrap();
    let result = integrate_pair(green, (&[0, 1, 2], &t), (&[3, 4, 5], &t), &rules);
    assert!(result.is_err());
}
