use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;

use nitsche_bem::analysis::{dual_norm, eoc, half_norm, weighted_l2_norm};
use nitsche_bem::formulations::{
    build_robin, manufactured, BcKind, PenaltyParameters, RobinBetaVariant, ScalingLaw,
};
use nitsche_bem::mesh::make_icosphere;
use nitsche_bem::operators::{AssemblyOptions, OperatorSet};
use nitsche_bem::solver::{
    block_mass_preconditioner, direct_solve_dense, gmres, GmresOptions, IdentityPreconditioner,
    Preconditioner, PreconditionerKind,
};
use nitsche_bem::spaces::{assemble_mass, assemble_weighted_mass, build_space};
use nitsche_bem::study::{log_grid, read_records, write_records, StudyRecord};
use nitsche_bem::{Region, RegionRule, SpaceFamily, TriangleSurfaceMesh};

const FAMILIES: [SpaceFamily; 3] = [
    SpaceFamily::P1Continuous,
    SpaceFamily::P0Discontinuous,
    SpaceFamily::P1Discontinuous,
];

fn level_one(flux: SpaceFamily) -> &'static OperatorSet {
    static P1: OnceLock<OperatorSet> = OnceLock::new();
    static P0: OnceLock<OperatorSet> = OnceLock::new();
    let cell = if flux == SpaceFamily::P1Continuous {
        &P1
    } else {
        &P0
    };
    cell.get_or_init(|| {
        let base = OperatorSet::assemble(
            &make_icosphere(1).unwrap(),
            flux,
            &AssemblyOptions::default(),
        )
        .unwrap();
        let mesh = base
            .mesh()
            .tag_regions(&RegionRule::Whole(Region::Robin))
            .unwrap();
        base.relabeled(&mesh).unwrap()
    })
}

fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(DVector::from_vec)
}

fn flux_family() -> impl Strategy<Value = SpaceFamily> {
    prop::sample::select(vec![
        SpaceFamily::P1Continuous,
        SpaceFamily::P0Discontinuous,
    ])
}

/// Tetrahedron with vertices on the positive axes and at the origin.
fn tetrahedron(a: f64, b: f64, c: f64) -> TriangleSurfaceMesh {
    let v = vec![
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(a, 0.0, 0.0),
        Vector3::new(0.0, b, 0.0),
        Vector3::new(0.0, 0.0, c),
    ];
    TriangleSurfaceMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap()
}

fn sum(m: &nalgebra_sparse::CsrMatrix<f64>) -> f64 {
    m.values().iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn total_mass_is_surface_area(a in 0.2..3.0f64, b in 0.2..3.0f64, c in 0.2..3.0f64, i in 0..3usize, j in 0..3usize) {
        let mesh = tetrahedron(a, b, c);
        let test = build_space(&mesh, FAMILIES[i]).unwrap();
        let trial = build_space(&mesh, FAMILIES[j]).unwrap();
        let area = mesh.total_area();
        prop_assert!((sum(&assemble_mass(&test, &trial, None).unwrap()) - area).abs() <= 1e-12 * area);
    }

    #[test]
    fn weighted_mass_sums_region_areas(
        labels in prop::collection::vec(0..3usize, 4),
        w in prop::collection::vec(0.0..5.0f64, 3),
        scale in 0.3..2.0f64,
    ) {
        let regions = [Region::Dirichlet, Region::Neumann, Region::Robin];
        let mesh = tetrahedron(scale, 1.0, 1.5)
            .with_regions(labels.iter().map(|&l| regions[l]).collect())
            .unwrap();
        let space = build_space(&mesh, SpaceFamily::P1Continuous).unwrap();
        let weight = |r: Region| w[regions.iter().position(|&x| x == r).unwrap()];
        let expected: f64 = (0..4).map(|t| weight(mesh.region(t)) * mesh.area(t)).sum();
        let m = assemble_weighted_mass(&space, &space, weight).unwrap();
        prop_assert!((sum(&m) - expected).abs() <= 1e-12 * mesh.total_area() * 5.0);
    }

    #[test]
    fn discrete_norms_are_homogeneous(flux in flux_family(), c in -10.0..10.0f64, seed in vector(80)) {
        let ops = level_one(flux);
        let mu = seed.rows(0, ops.flux.dof_count()).into_owned();
        let v = seed.rows(0, ops.primal.dof_count()).into_owned();
        let tol = 1e-10 * (1.0 + c.abs());
        let d = dual_norm(&ops.v, &mu).unwrap();
        prop_assert!((dual_norm(&ops.v, &(&mu * c)).unwrap() - c.abs() * d).abs() <= tol * d.max(1.0));
        let h = half_norm(&ops.w, &v).unwrap();
        prop_assert!((half_norm(&ops.w, &(&v * c)).unwrap() - c.abs() * h).abs() <= tol * h.max(1.0));
        let l = weighted_l2_norm(&ops.primal, &v, |_| 2.0).unwrap();
        prop_assert!((weighted_l2_norm(&ops.primal, &(&v * c), |_| 2.0).unwrap() - c.abs() * l).abs() <= tol * l.max(1.0));
    }

    #[test]
    fn discrete_norms_satisfy_the_triangle_inequality(flux in flux_family(), x in vector(80), y in vector(80)) {
        let ops = level_one(flux);
        let (nf, np) = (ops.flux.dof_count(), ops.primal.dof_count());
        let (a, b) = (x.rows(0, nf).into_owned(), y.rows(0, nf).into_owned());
        let n = |m: &DVector<f64>| dual_norm(&ops.v, m).unwrap();
        prop_assert!(n(&(&a + &b)) <= n(&a) + n(&b) + 1e-10);
        let (a, b) = (x.rows(0, np).into_owned(), y.rows(0, np).into_owned());
        let n = |m: &DVector<f64>| half_norm(&ops.w, m).unwrap();
        prop_assert!(n(&(&a + &b)) <= n(&a) + n(&b) + 1e-10);
    }

    #[test]
    fn multitrace_form_is_nonnegative(flux in flux_family(), x in vector(80), y in vector(80)) {
        let ops = level_one(flux);
        let u = x.rows(0, ops.primal.dof_count()).into_owned();
        let lambda = y.rows(0, ops.flux.dof_count()).into_owned();
        let form = u.dot(&ops.w.apply(&u)) + u.dot(&ops.kp.apply(&lambda)) - lambda.dot(&ops.k.apply(&u))
            + lambda.dot(&ops.v.apply(&lambda));
        prop_assert!(form >= -1e-12);
    }

    #[test]
    fn robin_weights_stay_in_range(
        beta in 1e-4..1e2f64,
        eps_exp in -4.0..4.0f64,
        h in 0.01..1.0f64,
        hscaled in any::<bool>(),
        theory in any::<bool>(),
    ) {
        let law = if hscaled { ScalingLaw::HScaled } else { ScalingLaw::Constant };
        let variant = if theory { RobinBetaVariant::Theory } else { RobinBetaVariant::Numerical };
        let p = PenaltyParameters::new(beta, law, h, 10f64.powf(eps_exp), variant).unwrap();
        let omega = p.omega();
        prop_assert!(omega > 0.0 && omega <= 1.0);
        prop_assert!(omega * p.epsilon * p.beta_r < 1.0);
    }

    #[test]
    fn block_system_is_linear_and_matches_its_dense_form(
        flux in flux_family(),
        eps_exp in -2.0..2.0f64,
        a in -3.0..3.0f64,
        x in vector(160),
        y in vector(160),
    ) {
        let ops = level_one(flux);
        let eps = 10f64.powf(eps_exp);
        let p = PenaltyParameters::new(0.01, ScalingLaw::Constant, 1.0, eps, Default::default()).unwrap();
        let (g_d, g_n) = manufactured(BcKind::Robin, Some(eps)).traces(&ops.primal, &ops.flux).unwrap();
        let sys = build_robin(ops, &p, &g_d, &g_n).unwrap();
        let n = sys.dim();
        let (x, y) = (x.rows(0, n).into_owned(), y.rows(0, n).into_owned());
        let lhs = sys.matvec(&(&x * a + &y));
        let rhs = sys.matvec(&x) * a + sys.matvec(&y);
        let scale = sys.to_dense().amax() * n as f64;
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * scale * (1.0 + a.abs()));
        prop_assert!((sys.to_dense() * &x - sys.matvec(&x)).amax() <= 1e-12 * scale);
    }

    #[test]
    fn block_mass_preconditioner_is_linear(flux in flux_family(), a in -3.0..3.0f64, b in -3.0..3.0f64, x in vector(122), y in vector(122)) {
        let ops = level_one(flux);
        let p = block_mass_preconditioner(&[ops.primal.clone(), ops.flux.clone()]).unwrap();
        let n = p.dim();
        let (x, y) = (x.rows(0, n).into_owned(), y.rows(0, n).into_owned());
        let apply = |v: &DVector<f64>| {
            let mut z = DVector::zeros(n);
            p.apply_into(v, &mut z);
            z
        };
        let combined = apply(&(&x * a + &y * b));
        let separate = apply(&x) * a + apply(&y) * b;
        prop_assert!((&combined - &separate).amax() <= 1e-12 * separate.amax().max(1.0) * 10.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gmres_residuals_never_increase_and_match_lu(n in 2..30usize, entries in prop::collection::vec(-1.0..1.0f64, 900), shift in 0.5..4.0f64) {
        let mut a = DMatrix::from_fn(n, n, |i, j| entries[i * 30 + j]);
        for i in 0..n {
            a[(i, i)] += shift * n as f64 / 4.0;
        }
        let b = DVector::from_fn(n, |i, _| entries[899 - i]);
        prop_assume!(b.norm() > 1e-3);
        let options = GmresOptions { tol: 1e-10, max_iter: 200, restart: None };
        let report = gmres(&a, &b, &IdentityPreconditioner, PreconditionerKind::None, &options).unwrap();
        prop_assert!(report.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(report.iterations <= n);
        let exact = direct_solve_dense(&a, &b).unwrap();
        prop_assert!((&report.solution - &exact).norm() <= 1e-6 * exact.norm());
    }

    #[test]
    fn rates_of_exact_powers_are_recovered(p in 0.5..3.0f64, c in 1e-3..1e3f64, h0 in 0.2..1.0f64, ratios in prop::collection::vec(1.2..2.5f64, 2..6)) {
        let mut h = h0;
        let mut pts = vec![(h, c * h.powf(p))];
        for r in ratios {
            h /= r;
            pts.push((h, c * h.powf(p)));
        }
        let slopes = eoc(&pts).unwrap();
        prop_assert!((slopes.least_squares - p).abs() < 1e-9);
        prop_assert!(slopes.successive.iter().all(|s| (s - p).abs() < 1e-9));
    }

    #[test]
    fn log_grids_are_increasing(lo_exp in -8.0..2.0f64, span in 0.0..10.0f64, count in 1..30usize) {
        let (lo, hi) = (10f64.powf(lo_exp), 10f64.powf(lo_exp + span));
        let g = log_grid(lo, hi, count).unwrap();
        prop_assert_eq!(g.len(), count);
        prop_assert!((g[0] - lo).abs() <= 1e-12 * lo);
        prop_assert!(g.windows(2).all(|w| w[1] >= w[0]));
        if count > 1 {
            prop_assert!((g[count - 1] - hi).abs() <= 1e-9 * hi);
        }
    }

    #[test]
    fn study_records_round_trip_through_csv(
        level in prop::option::of(0..9usize),
        h in prop::option::of(1e-3..2.0f64),
        errors in prop::collection::vec(prop::option::of(1e-12..1e3f64), 9),
        beta in 0.0..1e6f64,
        iterations in prop::option::of(0..1000usize),
        converged in prop::option::of(any::<bool>()),
    ) {
        let rec = StudyRecord {
            row: "level".into(),
            bc_kind: "robin".into(),
            k: 1,
            l: 0,
            level,
            mesh_family: "icosahedral".into(),
            h,
            dofs: Some(123),
            beta,
            beta_d: errors[0],
            beta_n: errors[1],
            beta_r: None,
            epsilon: 1.0 / 3.0,
            law: "h-scaled".into(),
            robin_variant: "numerical".into(),
            error_flux: errors[2],
            error_primal: errors[3],
            error_l2_primal: errors[4],
            error_l2_flux: errors[5],
            error_total: errors[6],
            interior_error_1: errors[7],
            interior_error_2: None,
            interior_error_3: errors[8],
            eoc: h,
            iterations,
            iterations_unpreconditioned: None,
            converged,
            relative_residual: errors[2],
            preconditioner: "block-mass".into(),
            assembly_seconds: h,
            solve_seconds: None,
        };
        let mut buf = Vec::new();
        write_records(std::slice::from_ref(&rec), &mut buf).unwrap();
        prop_assert_eq!(read_records(buf.as_slice()).unwrap(), vec![rec]);
    }
}
