//! Shared fixtures for the benchmarks.

use nitsche_bem::formulations::{
    build_dirichlet, manufactured, BcKind, BlockSystem, PenaltyParameters,
};
use nitsche_bem::mesh::make_icosphere;
use nitsche_bem::operators::{AssemblyOptions, OperatorSet};
use nitsche_bem::{Region, RegionRule, SpaceFamily, TriangleSurfaceMesh};

pub fn sphere(level: usize) -> TriangleSurfaceMesh {
    make_icosphere(level).expect("icosphere")
}

pub fn operator_set(level: usize, flux: SpaceFamily) -> OperatorSet {
    OperatorSet::assemble(&sphere(level), flux, &AssemblyOptions::default()).expect("assembly")
}

/// Penalty Dirichlet system with `β_D = 0.1` and the manufactured data.
pub fn dirichlet_system(level: usize, flux: SpaceFamily) -> BlockSystem {
    let base = operator_set(level, flux);
    let mesh = base
        .mesh()
        .tag_regions(&RegionRule::Whole(Region::Dirichlet))
        .expect("labels");
    let ops = base.relabeled(&mesh).expect("relabel");
    let params =
        PenaltyParameters::explicit(0.1, 0.1, 1.0, Default::default()).expect("parameters");
    let (g_d, _) = manufactured(BcKind::Dirichlet, None)
        .traces(&ops.primal, &ops.flux)
        .expect("traces");
    build_dirichlet(&ops, &params, &g_d).expect("system")
}
