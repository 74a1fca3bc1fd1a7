use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use nitsche_bem::formulations::{BcKind, RobinBetaVariant, ScalingLaw};
use nitsche_bem::solver::{GmresOptions, PreconditionerKind};
use nitsche_bem::study::{default_scaling_law, StudyConfig};
use nitsche_bem::SphereFamily;

#[derive(Debug, Parser)]
#[command(
    name = "nitsche-bem",
    version,
    about = "Boundary element studies with weakly imposed boundary conditions"
)]
pub struct Cli {
    /// Log progress to stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve on a sequence of meshes and report errors with convergence rates.
    Convergence(ConvergenceArgs),
    /// Sweep the penalty parameter β on fixed levels.
    SweepBeta(SweepBetaArgs),
    /// Sweep the (ε, β) grid of the Robin problem.
    SweepEpsBeta(SweepEpsBetaArgs),
    /// Run the operator sanity checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Boundary condition and formulation.
    #[arg(long, value_parser = parse_from_str::<BcKind>)]
    pub bc: BcKind,

    /// Polynomial degree of the primal trace space.
    #[arg(long, default_value_t = 1)]
    pub k: usize,

    /// Polynomial degree of the flux space (0 or 1).
    #[arg(long, default_value_t = 1)]
    pub l: usize,

    /// Penalty scale β.
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,

    /// Dirichlet penalty; implies `--law explicit`.
    #[arg(long)]
    pub beta_d: Option<f64>,

    /// Neumann penalty; implies `--law explicit`.
    #[arg(long)]
    pub beta_n: Option<f64>,

    /// Robin parameter ε.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,

    /// How β_D and β_N scale with h: h-scaled, constant or explicit.
    /// Defaults to h-scaled for l = 0 and constant for l = 1.
    #[arg(long, value_parser = parse_from_str::<ScalingLaw>)]
    pub law: Option<ScalingLaw>,

    /// Formula for the Robin penalty β_R.
    #[arg(long, value_parser = parse_from_str::<RobinBetaVariant>, default_value = "numerical")]
    pub robin_variant: RobinBetaVariant,

    /// Sphere family, icosahedral or octahedral. Mixed problems need octahedral.
    #[arg(long, value_parser = parse_from_str::<SphereFamily>)]
    pub mesh: Option<SphereFamily>,

    #[arg(long, value_parser = parse_from_str::<PreconditionerKind>, default_value = "block-mass")]
    pub preconditioner: PreconditionerKind,

    /// Also count iterations without preconditioning.
    #[arg(long)]
    pub compare_unpreconditioned: bool,

    /// Relative residual tolerance for GMRES.
    #[arg(long, default_value_t = GmresOptions::default().tol)]
    pub tol: f64,

    #[arg(long, default_value_t = GmresOptions::default().max_iter)]
    pub max_iter: usize,

    /// GMRES restart length; full GMRES when absent.
    #[arg(long)]
    pub restart: Option<usize>,

    /// Drop the rank-one mean constraint of the pure Neumann problem.
    #[arg(long)]
    pub no_augment: bool,

    /// Output CSV path; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

impl ProblemArgs {
    pub fn config(&self, levels: Option<&Levels>) -> StudyConfig {
        let mut c = StudyConfig::new(self.bc, self.k, self.l, self.beta);
        c.law = match (self.law, self.beta_d.or(self.beta_n)) {
            (Some(law), _) => law,
            (None, Some(_)) => ScalingLaw::Explicit,
            (None, None) => default_scaling_law(self.l),
        };
        c.beta_d = self.beta_d;
        c.beta_n = self.beta_n;
        c.epsilon = self.eps;
        c.variant = self.robin_variant;
        if let Some(family) = self.mesh {
            c.family = family;
        }
        c.preconditioner = self.preconditioner;
        c.compare_unpreconditioned = self.compare_unpreconditioned;
        c.gmres = GmresOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            restart: self.restart,
        };
        c.neumann_augment = !self.no_augment;
        c.levels = levels.map_or_else(|| default_levels(c.family), |l| l.0.clone());
        c
    }
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// Refinement levels: `1..4` (inclusive), `2,3,5` or a single level.
    /// Defaults to 1..4 on icosahedral and 2..5 on octahedral spheres.
    #[arg(long, value_parser = parse_levels)]
    pub levels: Option<Levels>,
}

#[derive(Debug, Args)]
pub struct BetaGrid {
    #[arg(long, default_value_t = 1e-6)]
    pub beta_min: f64,

    #[arg(long, default_value_t = 1e6)]
    pub beta_max: f64,

    /// Number of log-spaced β values.
    #[arg(long, default_value_t = 13)]
    pub beta_count: usize,

    /// Leave out the penalty-free β = 0 run.
    #[arg(long)]
    pub no_zero: bool,
}

#[derive(Debug, Args)]
pub struct SweepBetaArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[arg(long, value_parser = parse_levels, default_value = "2")]
    pub levels: Levels,

    #[command(flatten)]
    pub grid: BetaGrid,
}

#[derive(Debug, Args)]
pub struct SweepEpsBetaArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[arg(long, value_parser = parse_levels, default_value = "2")]
    pub levels: Levels,

    #[command(flatten)]
    pub grid: BetaGrid,

    #[arg(long, default_value_t = 1e-3)]
    pub eps_min: f64,

    #[arg(long, default_value_t = 1e3)]
    pub eps_max: f64,

    /// Number of log-spaced ε values.
    #[arg(long, default_value_t = 7)]
    pub eps_count: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Level of the single-mesh checks.
    #[arg(long, default_value_t = 3)]
    pub level: usize,

    /// Levels for the Calderón residual decay check.
    #[arg(long, value_parser = parse_levels, default_value = "1..3")]
    pub calderon_levels: Levels,

    /// Write the assembled level operators into this directory.
    #[arg(long)]
    pub dump: Option<PathBuf>,

    /// Check operators read from this directory instead of assembling them.
    /// Only the single-mesh checks run.
    #[arg(long, conflicts_with = "dump")]
    pub operators: Option<PathBuf>,

    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Octasphere level 1 has a zero coordinate at every vertex, so the
/// manufactured solution interpolates to zero there.
pub fn default_levels(family: SphereFamily) -> Vec<usize> {
    match family {
        SphereFamily::Icosahedral => (1..=4).collect(),
        SphereFamily::Octahedral => (2..=5).collect(),
    }
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

/// A list of refinement levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels(pub Vec<usize>);

pub fn parse_levels(s: &str) -> Result<Levels, String> {
    let num = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid level `{x}`"))
    };
    let levels = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if b < a {
            return Err(format!("empty level range `{s}`"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if levels.is_empty() {
        return Err("no levels given".into());
    }
    Ok(Levels(levels))
}
