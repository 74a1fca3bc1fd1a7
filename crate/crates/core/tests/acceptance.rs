//! End-to-end acceptance run on the unit sphere.
//!
//! Prints one PASS/FAIL line per criterion. Failures are reported but only
//! change the exit status when `NITSCHE_BEM_STRICT_ACCEPTANCE=1`, so the
//! regular test run stays usable while the numbers remain visible.

use std::time::Instant;

use nitsche_bem::analysis::eoc;
use nitsche_bem::formulations::{
    build_dirichlet, build_neumann, build_robin, manufactured, BcKind, PenaltyParameters,
    RobinBetaVariant, ScalingLaw,
};
use nitsche_bem::operators::{AssemblyOptions, OperatorSet};
use nitsche_bem::study::{
    run_beta_sweep, run_convergence, OperatorCache, StudyConfig, StudyRecord,
};
use nitsche_bem::verify::run_verification;
use nitsche_bem::{Region, RegionRule, SpaceFamily, SphereFamily};

const ICO_LEVELS: [usize; 4] = [1, 2, 3, 4];
/// Octasphere level 1 interpolates the manufactured solution to zero, and
/// levels 2..5 cover the same h range as icosphere levels 1..4.
const OCTA_LEVELS: [usize; 4] = [2, 3, 4, 5];
const EPSILONS: [f64; 3] = [1.0 / 300.0, 1.0, 300.0];

struct Line {
    id: usize,
    passed: bool,
    text: String,
}

#[derive(Default)]
struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn push(&mut self, id: usize, passed: bool, text: String) {
        eprintln!(
            "[{}] criterion {id}: {text}",
            if passed { "pass" } else { "fail" }
        );
        self.lines.push(Line { id, passed, text });
    }
}

fn levels(records: &[StudyRecord]) -> impl Iterator<Item = &StudyRecord> {
    records.iter().filter(|r| !r.is_summary())
}

fn slope(records: &[StudyRecord]) -> f64 {
    records
        .iter()
        .find(|r| r.is_summary())
        .and_then(|r| r.eoc)
        .unwrap_or(f64::NAN)
}

fn successive(records: &[StudyRecord]) -> String {
    let rates: Vec<String> = levels(records)
        .filter_map(|r| r.eoc)
        .map(|e| format!("{e:.2}"))
        .collect();
    rates.join(", ")
}

fn all_converged(records: &[StudyRecord]) -> bool {
    levels(records).all(|r| r.converged == Some(true))
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    x.is_finite() && (lo..=hi).contains(&x)
}

fn study(bc: BcKind, l: usize, beta: f64, levels: &[usize]) -> StudyConfig {
    let mut c = StudyConfig::new(bc, 1, l, beta);
    c.levels = levels.to_vec();
    c
}

fn dirichlet_criteria(cache: &mut OperatorCache, report: &mut Report) {
    let mut c = study(BcKind::Dirichlet, 1, 0.1, &ICO_LEVELS);
    c.law = ScalingLaw::Explicit;
    c.beta_d = Some(0.1);
    c.compare_unpreconditioned = true;
    let start = Instant::now();
    let recs = run_convergence(&c, cache).expect("Dirichlet study");
    let seconds = start.elapsed().as_secs_f64();

    let s = slope(&recs);
    report.push(
        1,
        in_band(s, 1.7, 2.3) && seconds <= 600.0 && all_converged(&recs),
        format!(
            "Dirichlet k=l=1 EOC {s:.3} in [1.7, 2.3] (successive {}), runtime {seconds:.0} s <= 600 s",
            successive(&recs)
        ),
    );

    let mut ok = true;
    let mut counts = Vec::new();
    for r in levels(&recs).filter(|r| r.level >= Some(2)) {
        let (p, u) = (
            r.iterations.unwrap_or(usize::MAX),
            r.iterations_unpreconditioned.unwrap_or(0),
        );
        ok &= p < u;
        counts.push(format!("L{}: {p} vs {u}", r.level.unwrap()));
    }
    report.push(
        6,
        ok,
        format!(
            "block-mass vs unpreconditioned GMRES iterations, Dirichlet ({})",
            counts.join(", ")
        ),
    );

    let pts: Vec<(f64, f64)> = levels(&recs)
        .filter(|r| r.level.is_some_and(|l| l <= 3))
        .map(|r| (r.h.unwrap(), r.interior_error_1.unwrap()))
        .collect();
    let rate = eoc(&pts).map(|e| e.least_squares).unwrap_or(f64::NAN);
    let errs: Vec<String> = pts.iter().map(|p| format!("{:.3e}", p.1)).collect();
    report.push(
        10,
        rate >= 1.7,
        format!(
            "interior error at (0.3, 0.2, 0.1), levels 1-3: EOC {rate:.3} >= 1.7 (errors {})",
            errs.join(", ")
        ),
    );
}

fn robin_criteria(cache: &mut OperatorCache, report: &mut Report) {
    let mut rates = Vec::new();
    let mut rates_ok = true;
    let mut spread_ok = true;
    let mut spreads = Vec::new();
    for (l, lo, hi) in [(0, 1.3, 1.8), (1, 1.7, 2.3)] {
        let mut finest = Vec::new();
        for eps in EPSILONS {
            let mut c = study(BcKind::Robin, l, 0.01, &ICO_LEVELS);
            c.epsilon = eps;
            let recs = run_convergence(&c, cache).expect("Robin study");
            let s = slope(&recs);
            rates_ok &= in_band(s, lo, hi) && all_converged(&recs);
            rates.push(format!("k=1,l={l},eps={eps:.4}: {s:.3} in [{lo}, {hi}]"));
            finest.push(
                levels(&recs)
                    .last()
                    .and_then(|r| r.iterations)
                    .unwrap_or(usize::MAX),
            );
        }
        let (min, max) = (*finest.iter().min().unwrap(), *finest.iter().max().unwrap());
        spread_ok &= (max as f64) < 2.0 * min as f64;
        spreads.push(format!("l={l}: {finest:?}"));
    }
    report.push(4, rates_ok, format!("Robin EOC, {}", rates.join("; ")));
    report.push(
        5,
        spread_ok,
        format!(
            "Robin iterations at level 4 for eps = 1/300, 1, 300 differ by < 2x ({})",
            spreads.join("; ")
        ),
    );
}

fn beta_criterion(cache: &mut OperatorCache, report: &mut Report) {
    let mut c = study(BcKind::Dirichlet, 1, 0.1, &[2]);
    c.law = ScalingLaw::Explicit;
    let recs = run_beta_sweep(&c, &[1e-6, 0.1, 1e4], cache).expect("beta sweep");
    let e: Vec<f64> = recs.iter().map(|r| r.error_total.unwrap()).collect();
    let (tiny, base, huge) = (e[0], e[1], e[2]);
    report.push(
        7,
        huge >= 2.0 * base && tiny <= 2.0 * base && tiny >= 0.5 * base,
        format!(
            "Dirichlet level 2 errors: beta_D=1e4 gives {huge:.3e}, needs >= 2 x {base:.3e} (beta_D=0.1); beta_D=1e-6 gives {tiny:.3e}, needs within 2x"
        ),
    );
}

fn relabeled(cache: &mut OperatorCache, level: usize, region: Region) -> OperatorSet {
    let (base, _) = cache
        .get(SphereFamily::Icosahedral, level, SpaceFamily::P1Continuous)
        .expect("operators");
    let mesh = base.mesh().tag_regions(&RegionRule::Whole(region)).unwrap();
    base.relabeled(&mesh).unwrap()
}

fn limit_criterion(cache: &mut OperatorCache, report: &mut Report) {
    let robin = relabeled(cache, 2, Region::Robin);
    let dirichlet = relabeled(cache, 2, Region::Dirichlet);
    let neumann = relabeled(cache, 2, Region::Neumann);
    let (gd, gn) = manufactured(BcKind::Robin, None)
        .traces(&robin.primal, &robin.flux)
        .unwrap();
    let rel = |a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>| (a - b).amax() / b.amax();
    let rel_v = |a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>| (a - b).amax() / b.amax();
    let variant = RobinBetaVariant::Numerical;

    let small = PenaltyParameters::new(0.01, ScalingLaw::Constant, 1.0, 1e-12, variant).unwrap();
    let r = build_robin(&robin, &small, &gd, &gn).unwrap();
    let d_params = PenaltyParameters::explicit(small.beta_r, small.beta_n, 1.0, variant).unwrap();
    let d = build_dirichlet(&dirichlet, &d_params, &gd).unwrap();
    let to_d = rel(&r.to_dense(), &d.to_dense()).max(rel_v(r.rhs(), d.rhs()));

    let large = PenaltyParameters::new(0.01, ScalingLaw::Constant, 1.0, 1e12, variant).unwrap();
    let r = build_robin(&robin, &large, &gd, &gn).unwrap();
    let n_params = PenaltyParameters::explicit(0.0, 1.0 / large.beta_r, 1.0, variant).unwrap();
    let n = build_neumann(&neumann, &n_params, &gn, false).unwrap();
    let to_n = rel(&r.to_dense(), &n.to_dense()).max(rel_v(r.rhs(), n.rhs()));

    report.push(
        11,
        to_d <= 1e-8 && to_n <= 1e-6,
        format!("Robin limits at level 2: eps=1e-12 vs Dirichlet {to_d:.2e} <= 1e-8, eps=1e12 vs Neumann {to_n:.2e} <= 1e-6"),
    );
}

fn operator_criteria(report: &mut Report) {
    // Fresh cache so the timing includes assembly.
    let mut cache = OperatorCache::new(AssemblyOptions::default());
    let start = Instant::now();
    let suite = run_verification(&mut cache, 3, &[1, 2, 3]).expect("verification");
    let seconds = start.elapsed().as_secs_f64();
    println!("{suite}");
    let (calderon, sanity): (Vec<_>, Vec<_>) = suite
        .checks
        .iter()
        .partition(|c| c.name.starts_with("calderon"));
    let failed: Vec<&str> = sanity
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    report.push(
        8,
        failed.is_empty() && seconds <= 300.0,
        format!(
            "operator sanity suite at level 3: {} of {} checks pass{}, runtime {seconds:.0} s <= 300 s",
            sanity.len() - failed.len(),
            sanity.len(),
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) }
        ),
    );
    let details: Vec<String> = calderon
        .iter()
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    report.push(
        9,
        calderon.iter().all(|c| c.passed),
        format!(
            "Calderon residual decays over levels 1-3 ({})",
            details.join("; ")
        ),
    );
}

fn mixed_criteria(cache: &mut OperatorCache, report: &mut Report) {
    let mut c = study(BcKind::Mixed, 0, 0.01, &OCTA_LEVELS);
    c.law = ScalingLaw::HScaled;
    let recs = run_convergence(&c, cache).expect("mixed l=0 study");
    let s = slope(&recs);
    report.push(
        2,
        in_band(s, 1.3, 1.8) && all_converged(&recs),
        format!(
            "mixed k=1,l=0 EOC {s:.3} in [1.3, 1.8] (octasphere levels 2-5, successive {})",
            successive(&recs)
        ),
    );
    for level in OCTA_LEVELS {
        cache.evict(SphereFamily::Octahedral, level);
    }

    let mut c = study(BcKind::Mixed, 1, 0.01, &OCTA_LEVELS);
    c.law = ScalingLaw::Explicit;
    c.beta_d = Some(0.01);
    c.beta_n = Some(0.01);
    let recs = run_convergence(&c, cache).expect("mixed l=1 study");
    let s = slope(&recs);
    report.push(
        3,
        in_band(s, 1.7, 2.3) && all_converged(&recs),
        format!(
            "mixed k=l=1 EOC {s:.3} in [1.7, 2.3] (octasphere levels 2-5, successive {})",
            successive(&recs)
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut report = Report::default();
    let mut cache = OperatorCache::new(AssemblyOptions::default());

    dirichlet_criteria(&mut cache, &mut report);
    beta_criterion(&mut cache, &mut report);
    limit_criterion(&mut cache, &mut report);
    robin_criteria(&mut cache, &mut report);
    cache.clear();
    operator_criteria(&mut report);
    mixed_criteria(&mut cache, &mut report);

    report.lines.sort_by_key(|l| l.id);
    println!();
    for l in &report.lines {
        println!(
            "{} {:>2}. {}",
            if l.passed { "PASS" } else { "FAIL" },
            l.id,
            l.text
        );
    }
    let passed = report.lines.iter().filter(|l| l.passed).count();
    println!(
        "acceptance: {passed} of {} criteria passed in {:.0} s",
        report.lines.len(),
        start.elapsed().as_secs_f64()
    );
    let strict = std::env::var("NITSCHE_BEM_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    if strict && passed < report.lines.len() {
        std::process::exit(1);
    }
}
