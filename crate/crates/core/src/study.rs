//! Convergence and parameter studies on the unit sphere with the manufactured
//! solution, producing one [`StudyRecord`] per configuration and level.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{b_norm, eoc, interior_error, interior_points};
use crate::error::{BemError, Result};
use crate::formulations::{
    build_dirichlet, build_mixed, build_neumann, build_robin, build_standard_dirichlet,
    build_standard_robin, manufactured, BcKind, BlockSystem, PenaltyParameters, RobinBetaVariant,
    ScalingLaw,
};
use crate::mesh::{make_sphere, Region, RegionRule, SphereFamily, TriangleSurfaceMesh};
use crate::operators::{assemble_operator_sets, AssemblyOptions, OperatorSet};
use crate::solver::{solve_system, GmresOptions, PreconditionerKind, SolveReport};
use crate::spaces::{mean_value, Coefficients, SpaceFamily};

/// Flux space for polynomial degrees `k` (primal) and `l` (flux).
pub fn flux_family(k: usize, l: usize) -> Result<SpaceFamily> {
    match (k, l) {
        (1, 1) => Ok(SpaceFamily::P1Continuous),
        (1, 0) => Ok(SpaceFamily::P0Discontinuous),
        _ => Err(BemError::Unsupported {
            what: "degree pair",
            detail: format!("k = {k}, l = {l}; only (1, 0) and (1, 1) are available"),
        }),
    }
}

/// Labels used for each boundary condition.
pub fn region_rule(bc: BcKind) -> RegionRule {
    match bc {
        BcKind::Dirichlet | BcKind::StdDirichlet => RegionRule::Whole(Region::Dirichlet),
        BcKind::Neumann => RegionRule::Whole(Region::Neumann),
        BcKind::Mixed => RegionRule::mixed_x_positive(),
        BcKind::Robin | BcKind::StdRobin => RegionRule::Whole(Region::Robin),
    }
}

/// Mesh family used when none is requested: the octahedral sphere is fitted
/// to the mixed split, the icosahedral one is more uniform.
pub fn default_sphere_family(bc: BcKind) -> SphereFamily {
    match bc {
        BcKind::Mixed => SphereFamily::Octahedral,
        _ => SphereFamily::Icosahedral,
    }
}

/// Scaling law used by the experiments: `h`-scaled for a lower-order flux,
/// constant for equal orders.
pub fn default_scaling_law(l: usize) -> ScalingLaw {
    if l == 0 {
        ScalingLaw::HScaled
    } else {
        ScalingLaw::Constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub bc: BcKind,
    pub k: usize,
    pub l: usize,
    pub beta: f64,
    pub law: ScalingLaw,
    /// Used with [`ScalingLaw::Explicit`]; `beta_d` defaults to `beta`, `beta_n` to `beta_d`.
    pub beta_d: Option<f64>,
    pub beta_n: Option<f64>,
    pub epsilon: f64,
    pub variant: RobinBetaVariant,
    pub levels: Vec<usize>,
    pub family: SphereFamily,
    pub preconditioner: PreconditionerKind,
    /// Also solve without preconditioning to record that iteration count.
    pub compare_unpreconditioned: bool,
    pub gmres: GmresOptions,
    /// Add the rank-one constant-mode term for pure Neumann problems.
    pub neumann_augment: bool,
}

impl StudyConfig {
    pub fn new(bc: BcKind, k: usize, l: usize, beta: f64) -> Self {
        Self {
            bc,
            k,
            l,
            beta,
            law: default_scaling_law(l),
            beta_d: None,
            beta_n: None,
            epsilon: 1.0,
            variant: RobinBetaVariant::Numerical,
            levels: vec![1, 2, 3],
            family: default_sphere_family(bc),
            preconditioner: PreconditionerKind::BlockMass,
            compare_unpreconditioned: false,
            gmres: GmresOptions::default(),
            neumann_augment: true,
        }
    }

    pub fn flux_family(&self) -> Result<SpaceFamily> {
        flux_family(self.k, self.l)
    }

    pub fn validate(&self) -> Result<()> {
        let flux = self.flux_family()?;
        if self.bc == BcKind::StdRobin && flux != SpaceFamily::P1Continuous {
            return Err(BemError::Unsupported {
                what: "standard Robin formulation",
                detail: "needs k = l = 1".into(),
            });
        }
        if self.levels.is_empty() {
            return Err(BemError::Unsupported {
                what: "study",
                detail: "no levels requested".into(),
            });
        }
        self.params(1.0)?;
        Ok(())
    }

    pub fn params(&self, h: f64) -> Result<PenaltyParameters> {
        match self.law {
            ScalingLaw::Explicit => {
                let d = self.beta_d.unwrap_or(self.beta);
                let n = self.beta_n.unwrap_or(d);
                let mut p = PenaltyParameters::explicit(d, n, self.epsilon, self.variant)?;
                p.beta = self.beta;
                Ok(p)
            }
            law => PenaltyParameters::new(self.beta, law, h, self.epsilon, self.variant),
        }
    }
}

/// One row of a study. Summary rows (`row == "eoc"`) hold least-squares rates
/// in the error columns and leave per-level columns empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub row: String,
    pub bc_kind: String,
    pub k: usize,
    pub l: usize,
    pub level: Option<usize>,
    pub mesh_family: String,
    pub h: Option<f64>,
    pub dofs: Option<usize>,
    pub beta: f64,
    pub beta_d: Option<f64>,
    pub beta_n: Option<f64>,
    pub beta_r: Option<f64>,
    pub epsilon: f64,
    pub law: String,
    pub robin_variant: String,
    pub error_flux: Option<f64>,
    pub error_primal: Option<f64>,
    pub error_l2_primal: Option<f64>,
    pub error_l2_flux: Option<f64>,
    pub error_total: Option<f64>,
    pub interior_error_1: Option<f64>,
    pub interior_error_2: Option<f64>,
    pub interior_error_3: Option<f64>,
    /// Rate against the previous level on level rows, least-squares rate on summary rows.
    pub eoc: Option<f64>,
    pub iterations: Option<usize>,
    pub iterations_unpreconditioned: Option<usize>,
    pub converged: Option<bool>,
    pub relative_residual: Option<f64>,
    pub preconditioner: String,
    pub assembly_seconds: Option<f64>,
    pub solve_seconds: Option<f64>,
}

impl StudyRecord {
    pub fn is_summary(&self) -> bool {
        self.row == "eoc"
    }
}

pub fn write_records<W: Write>(records: &[StudyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<StudyRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize()
        .map(|r| r.map_err(BemError::from))
        .collect()
}

struct CacheEntry {
    mesh: TriangleSurfaceMesh,
    sets: HashMap<SpaceFamily, OperatorSet>,
    seconds: HashMap<SpaceFamily, f64>,
}

/// Assembled operator sets keyed by mesh family and level, shared across
/// studies. Assembly is by far the most expensive step.
pub struct OperatorCache {
    options: AssemblyOptions,
    entries: HashMap<(SphereFamily, usize), CacheEntry>,
}

impl OperatorCache {
    pub fn new(options: AssemblyOptions) -> Self {
        Self {
            options,
            entries: HashMap::new(),
        }
    }

    /// Assembles every missing flux family for one level in a single sweep.
    pub fn prefetch(
        &mut self,
        family: SphereFamily,
        level: usize,
        fluxes: &[SpaceFamily],
    ) -> Result<()> {
        if let Entry::Vacant(e) = self.entries.entry((family, level)) {
            let mesh = make_sphere(family, level)?;
            e.insert(CacheEntry {
                mesh,
                sets: HashMap::new(),
                seconds: HashMap::new(),
            });
        }
        let entry = self
            .entries
            .get_mut(&(family, level))
            .expect("inserted above");
        let mut missing: Vec<SpaceFamily> = fluxes
            .iter()
            .copied()
            .filter(|f| !entry.sets.contains_key(f))
            .collect();
        missing.dedup();
        if missing.is_empty() {
            return Ok(());
        }
        let start = Instant::now();
        log::info!(
            "assembling {family} level {level} ({} triangles) for {missing:?}",
            entry.mesh.triangle_count()
        );
        let sets = assemble_operator_sets(&entry.mesh, &missing, &self.options)?;
        let seconds = start.elapsed().as_secs_f64();
        for (f, s) in missing.into_iter().zip(sets) {
            entry.sets.insert(f, s);
            entry.seconds.insert(f, seconds);
        }
        Ok(())
    }

    /// Operator set and the wall time its assembly took.
    pub fn get(
        &mut self,
        family: SphereFamily,
        level: usize,
        flux: SpaceFamily,
    ) -> Result<(OperatorSet, f64)> {
        self.prefetch(family, level, &[flux])?;
        let entry = &self.entries[&(family, level)];
        Ok((entry.sets[&flux].clone(), entry.seconds[&flux]))
    }

    /// Stores externally obtained operators, e.g. loaded from files.
    pub fn insert(&mut self, family: SphereFamily, level: usize, set: OperatorSet) {
        let entry = self
            .entries
            .entry((family, level))
            .or_insert_with(|| CacheEntry {
                mesh: set.mesh().clone(),
                sets: HashMap::new(),
                seconds: HashMap::new(),
            });
        entry.seconds.insert(set.flux.family(), 0.0);
        entry.sets.insert(set.flux.family(), set);
    }

    pub fn evict(&mut self, family: SphereFamily, level: usize) {
        self.entries.remove(&(family, level));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Builds the system for `config` on an operator set that already carries
/// the right labels.
pub fn build_system(
    config: &StudyConfig,
    ops: &OperatorSet,
    params: &PenaltyParameters,
    g_d: &Coefficients,
    g_n: &Coefficients,
) -> Result<BlockSystem> {
    match config.bc {
        BcKind::Dirichlet => build_dirichlet(ops, params, g_d),
        BcKind::Neumann => build_neumann(ops, params, g_n, config.neumann_augment),
        BcKind::Mixed => build_mixed(ops, params, g_d, g_n),
        BcKind::Robin => build_robin(ops, params, g_d, g_n),
        BcKind::StdDirichlet => build_standard_dirichlet(ops, g_d),
        BcKind::StdRobin => build_standard_robin(ops, params, g_d, g_n),
    }
}

/// Primal and flux traces from a solution vector.
pub fn recover_traces(
    config: &StudyConfig,
    system: &BlockSystem,
    x: &Coefficients,
    params: &PenaltyParameters,
    g_d: &Coefficients,
    g_n: &Coefficients,
) -> (Coefficients, Coefficients) {
    match config.bc {
        BcKind::StdDirichlet => (g_d.clone(), x.clone()),
        // λ = (g_D − u)/ε + g_N, with both traces in the same P1 space.
        BcKind::StdRobin => (x.clone(), (g_d - x) / params.epsilon + g_n),
        _ => {
            let mut parts = system.split(x);
            let l = parts.pop().expect("two blocks");
            (parts.pop().expect("two blocks"), l)
        }
    }
}

/// Result of one solve with everything needed for a record.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub record: StudyRecord,
    pub u_h: Coefficients,
    pub lambda_h: Coefficients,
    pub report: SolveReport,
}

fn solve_tolerant(
    system: &BlockSystem,
    kind: PreconditionerKind,
    options: &GmresOptions,
) -> Result<(SolveReport, bool)> {
    match solve_system(system, kind, options) {
        Ok(r) => Ok((r, true)),
        Err(BemError::NotConverged {
            iterations,
            residual,
            best,
        }) => {
            log::warn!(
                "{kind} GMRES stopped after {iterations} iterations at residual {residual:.3e}"
            );
            Ok((
                SolveReport {
                    solution: *best,
                    iterations,
                    relative_residual: residual,
                    true_relative_residual: f64::NAN,
                    history: Vec::new(),
                    preconditioner: kind,
                    wall_time: std::time::Duration::ZERO,
                },
                false,
            ))
        }
        Err(e) => Err(e),
    }
}

/// Assembles (or reuses), solves and measures one level.
pub fn run_level(
    config: &StudyConfig,
    cache: &mut OperatorCache,
    level: usize,
) -> Result<LevelResult> {
    config.validate()?;
    let flux = config.flux_family()?;
    let (base, assembly_seconds) = cache.get(config.family, level, flux)?;
    let mesh = base.mesh().tag_regions(&region_rule(config.bc))?;
    let ops = base.relabeled(&mesh)?;
    let h = mesh.mesh_size();
    let params = config.params(h)?;
    let solution = manufactured(config.bc, Some(config.epsilon));
    let (g_d, g_n) = solution.traces(&ops.primal, &ops.flux)?;
    let system = build_system(config, &ops, &params, &g_d, &g_n)?;

    let start = Instant::now();
    let (report, converged) = solve_tolerant(&system, config.preconditioner, &config.gmres)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let unpreconditioned =
        if config.compare_unpreconditioned && config.preconditioner != PreconditionerKind::None {
            Some(
                solve_tolerant(&system, PreconditionerKind::None, &config.gmres)?
                    .0
                    .iterations,
            )
        } else {
            None
        };

    let (mut u_h, lambda_h) =
        recover_traces(config, &system, &report.solution, &params, &g_d, &g_n);
    if config.bc == BcKind::Neumann {
        // The primal trace is determined up to a constant; match the mean of the data.
        let shift = mean_value(&ops.primal, &g_d) - mean_value(&ops.primal, &u_h);
        u_h.add_scalar_mut(shift);
    }
    let norm_params = (config.bc != BcKind::StdDirichlet).then_some(&params);
    let breakdown = b_norm(
        &ops,
        config.bc,
        norm_params,
        &(&g_d - &u_h),
        &(&g_n - &lambda_h),
    )?;
    let interior = interior_error(
        &ops.primal,
        &u_h,
        &ops.flux,
        &lambda_h,
        |p| solution.u(p),
        &interior_points(),
    )?;

    let record = StudyRecord {
        row: "level".into(),
        bc_kind: config.bc.to_string(),
        k: config.k,
        l: config.l,
        level: Some(level),
        mesh_family: config.family.to_string(),
        h: Some(h),
        dofs: Some(system.dim()),
        beta: config.beta,
        beta_d: Some(params.beta_d),
        beta_n: Some(params.beta_n),
        beta_r: Some(params.beta_r),
        epsilon: config.epsilon,
        law: params.law.to_string(),
        robin_variant: params.variant.to_string(),
        error_flux: Some(breakdown.dual_norm_flux),
        error_primal: Some(breakdown.half_norm_primal),
        error_l2_primal: Some(breakdown.l2_primal),
        error_l2_flux: Some(breakdown.l2_flux),
        error_total: Some(breakdown.b_norm_total),
        interior_error_1: Some(interior.errors[0]),
        interior_error_2: Some(interior.errors[1]),
        interior_error_3: Some(interior.errors[2]),
        eoc: None,
        iterations: Some(report.iterations),
        iterations_unpreconditioned: unpreconditioned,
        converged: Some(converged),
        relative_residual: Some(report.relative_residual),
        preconditioner: config.preconditioner.to_string(),
        assembly_seconds: Some(assembly_seconds),
        solve_seconds: Some(solve_seconds),
    };
    log::info!(
        "{} level {level}: h = {h:.4}, error = {:.4e}, iterations = {}",
        config.bc,
        breakdown.b_norm_total,
        report.iterations
    );
    Ok(LevelResult {
        record,
        u_h,
        lambda_h,
        report,
    })
}

fn slope_of(records: &[StudyRecord], f: impl Fn(&StudyRecord) -> Option<f64>) -> Option<f64> {
    let pts: Option<Vec<(f64, f64)>> = records.iter().map(|r| Some((r.h?, f(r)?))).collect();
    eoc(&pts?).ok().map(|s| s.least_squares)
}

/// Fills the per-level rate column and returns the least-squares summary row.
pub fn summarize(records: &mut [StudyRecord]) -> Option<StudyRecord> {
    for i in 1..records.len() {
        let (prev, cur) = (&records[i - 1], &records[i]);
        if let (Some(h0), Some(h1), Some(e0), Some(e1)) =
            (prev.h, cur.h, prev.error_total, cur.error_total)
        {
            if e0 > 0.0 && e1 > 0.0 && h0 > h1 {
                records[i].eoc = Some((e0 / e1).ln() / (h0 / h1).ln());
            }
        }
    }
    if records.len() < 3 {
        return None;
    }
    let first = &records[0];
    let total = slope_of(records, |r| r.error_total);
    Some(StudyRecord {
        row: "eoc".into(),
        level: None,
        h: None,
        dofs: None,
        beta_d: None,
        beta_n: None,
        beta_r: None,
        error_flux: slope_of(records, |r| r.error_flux),
        error_primal: slope_of(records, |r| r.error_primal),
        error_l2_primal: slope_of(records, |r| r.error_l2_primal),
        error_l2_flux: slope_of(records, |r| r.error_l2_flux),
        error_total: total,
        interior_error_1: slope_of(records, |r| r.interior_error_1),
        interior_error_2: slope_of(records, |r| r.interior_error_2),
        interior_error_3: slope_of(records, |r| r.interior_error_3),
        eoc: total,
        iterations: None,
        iterations_unpreconditioned: None,
        converged: None,
        relative_residual: None,
        assembly_seconds: None,
        solve_seconds: None,
        ..first.clone()
    })
}

/// One record per level followed by a rate summary when there are three or more levels.
pub fn run_convergence(
    config: &StudyConfig,
    cache: &mut OperatorCache,
) -> Result<Vec<StudyRecord>> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.levels.len() + 1);
    for &level in &config.levels {
        records.push(run_level(config, cache, level)?.record);
    }
    if let Some(summary) = summarize(&mut records) {
        records.push(summary);
    }
    Ok(records)
}

/// One record per `(β, level)`, levels outermost so operators are reused.
pub fn run_beta_sweep(
    config: &StudyConfig,
    betas: &[f64],
    cache: &mut OperatorCache,
) -> Result<Vec<StudyRecord>> {
    run_eps_beta_sweep(config, &[config.epsilon], betas, cache)
}

/// Full `(ε, β)` grid for every level.
pub fn run_eps_beta_sweep(
    config: &StudyConfig,
    epsilons: &[f64],
    betas: &[f64],
    cache: &mut OperatorCache,
) -> Result<Vec<StudyRecord>> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.levels.len() * epsilons.len() * betas.len());
    for &level in &config.levels {
        for &epsilon in epsilons {
            for &beta in betas {
                let c = StudyConfig {
                    beta,
                    epsilon,
                    ..config.clone()
                };
                records.push(run_level(&c, cache, level)?.record);
            }
        }
    }
    Ok(records)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || count == 0 {
        return Err(BemError::InvalidParameter {
            name: "grid bounds",
            value: lo,
        });
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect())
}
