//! Command-line driver for the sphere studies.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
//! 3 failed verification.

mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use nitsche_bem::formulations::BcKind;
use nitsche_bem::operators::AssemblyOptions;
use nitsche_bem::study::{
    log_grid, run_beta_sweep, run_convergence, run_eps_beta_sweep, write_records, OperatorCache,
    StudyRecord,
};
use nitsche_bem::verify::{
    dump_operator_sets, load_operator_sets, run_verification, single_level_checks, VERIFY_FLUXES,
};
use nitsche_bem::{BemError, SphereFamily};

use args::{BetaGrid, Cli, Command, ConvergenceArgs, SweepBetaArgs, SweepEpsBetaArgs, VerifyArgs};

const THREADS_VAR: &str = "NITSCHE_BEM_THREADS";

/// A run that finished but whose outcome should not exit with 0.
#[derive(Debug)]
enum Outcome {
    Ok,
    Numerical,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Numerical) => ExitCode::from(2),
        Ok(Outcome::VerificationFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<BemError>() {
        Some(
            BemError::NotConverged { .. }
            | BemError::SingularMatrix
            | BemError::SingularMass
            | BemError::NonFinite { .. },
        ) => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a thread count, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the assembly thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Convergence(a) => convergence(a),
        Command::SweepBeta(a) => sweep_beta(a),
        Command::SweepEpsBeta(a) => sweep_eps_beta(a),
        Command::Verify(a) => verify(a),
    }
}

fn cache() -> OperatorCache {
    OperatorCache::new(AssemblyOptions::default())
}

fn emit(records: &[StudyRecord], output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_records(records, BufWriter::new(file))?;
        }
        None => write_records(records, io::stdout().lock())?,
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> Result<Outcome> {
    let config = a.problem.config(a.levels.as_ref());
    let records = run_convergence(&config, &mut cache())?;
    emit(&records, a.problem.output.as_deref())?;
    let failed = records
        .iter()
        .filter(|r| r.converged == Some(false))
        .count();
    if failed > 0 {
        log::error!("GMRES did not converge on {failed} level(s)");
        return Ok(Outcome::Numerical);
    }
    Ok(Outcome::Ok)
}

/// Log grid, preceded by the penalty-free value for the formulations with a
/// meaningful `β = 0`.
fn betas(grid: &BetaGrid, bc: BcKind) -> Result<Vec<f64>> {
    let mut betas = log_grid(grid.beta_min, grid.beta_max, grid.beta_count)?;
    if !grid.no_zero && bc.is_multitrace() {
        betas.insert(0, 0.0);
    }
    Ok(betas)
}

fn sweep_beta(a: SweepBetaArgs) -> Result<Outcome> {
    let config = a.problem.config(Some(&a.levels));
    let records = run_beta_sweep(&config, &betas(&a.grid, config.bc)?, &mut cache())?;
    emit(&records, a.problem.output.as_deref())?;
    Ok(Outcome::Ok)
}

fn sweep_eps_beta(a: SweepEpsBetaArgs) -> Result<Outcome> {
    let config = a.problem.config(Some(&a.levels));
    let epsilons = log_grid(a.eps_min, a.eps_max, a.eps_count)?;
    let records = run_eps_beta_sweep(
        &config,
        &epsilons,
        &betas(&a.grid, config.bc)?,
        &mut cache(),
    )?;
    emit(&records, a.problem.output.as_deref())?;
    Ok(Outcome::Ok)
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    let started = std::time::Instant::now();
    let mut cache = cache();
    let report = match &a.operators {
        Some(dir) => {
            let mesh = nitsche_bem::mesh::make_sphere(SphereFamily::Icosahedral, a.level)?;
            let sets = load_operator_sets(dir, &mesh, &VERIFY_FLUXES).with_context(|| {
                format!(
                    "reading operators for level {} from {}",
                    a.level,
                    dir.display()
                )
            })?;
            single_level_checks(&sets)?
        }
        None => {
            let report = run_verification(&mut cache, a.level, &a.calderon_levels.0)?;
            if let Some(dir) = &a.dump {
                let sets: Vec<_> = VERIFY_FLUXES
                    .iter()
                    .map(|&f| {
                        cache
                            .get(SphereFamily::Icosahedral, a.level, f)
                            .map(|(s, _)| s)
                    })
                    .collect::<nitsche_bem::Result<_>>()?;
                let names = dump_operator_sets(dir, &sets)?;
                log::info!("wrote {} operators to {}", names.len(), dir.display());
            }
            report
        }
    };
    let mut out = io::stdout().lock();
    writeln!(out, "{report}")?;
    writeln!(out, "elapsed {:.1} s", started.elapsed().as_secs_f64())?;
    if let Some(path) = &a.csv {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(BufWriter::new(file))?;
    }
    Ok(if report.all_passed() {
        Outcome::Ok
    } else {
        Outcome::VerificationFailed
    })
}
