use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (data formats v1, manifest v1)");

#[derive(Debug, Parser)]
#[command(name = "sirmix", version = VERSION, about = "Stochastic SIR inference with non-homogeneous mixing")]
pub struct Cli {
    /// Master seed; every random stream of the run is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel replicates.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Single-table commands print to stdout without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the SIR process and sample it on a regular grid.
    Simulate(SimulateArgs),
    /// Compare engine transition probabilities of j new infections.
    Transprob(TransprobArgs),
    /// Reconstruct susceptibles and true cases from reported incidence.
    Reconstruct(ReconstructArgs),
    /// Sample the posterior of the rates given an observed path.
    Fit(FitArgs),
    /// Run a scripted study.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub i: Option<u64>,
    #[arg(long)]
    pub r: Option<u64>,
    /// Population size in the rates; defaults to S + I + R.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Infection rates, one per season.
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Grid step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// End time, or `extinction`.
    #[arg(long)]
    pub horizon: Option<String>,
    /// Also write the event-level trajectory.
    #[arg(long)]
    pub trajectory: bool,
    /// Also write binomially thinned incidence at this reporting rate.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SirColumnArg {
    NoRemovals,
    NoRemovalsRaw,
    Marginal,
}

#[derive(Debug, Args)]
pub struct TransprobArgs {
    /// `all` or a comma-separated list of engine names.
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub i: Option<u64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Largest count of new infections tabulated.
    #[arg(long)]
    pub max_j: Option<u64>,
    /// Reduction of the joint SIR law to new infections.
    #[arg(long, value_enum)]
    pub sir_column: Option<SirColumnArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    CasesOnBirths,
    BirthsOnCases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Incidence,
    Chained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepairArg {
    Clamp,
    Strict,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Observed series CSV (`time,cases,births,population[,label]`).
    #[arg(long, conflicts_with = "bundled")]
    pub data: Option<PathBuf>,
    /// Use the bundled biweekly series.
    #[arg(long)]
    pub bundled: bool,
    /// Divide cases, births and population by this factor first.
    #[arg(long)]
    pub rescale: Option<f64>,
    /// Fixed mean susceptible count; by default it is chosen by profile search.
    #[arg(long)]
    pub sbar: Option<f64>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    #[arg(long)]
    pub birth_lag: Option<usize>,
    #[arg(long, value_enum)]
    pub convention: Option<ConventionArg>,
    #[arg(long, value_enum)]
    pub repair: Option<RepairArg>,
    /// Length of one period in model time units.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Grid series CSV (`time,S,I,R,nSI,nIR`) or path table CSV (`period,elapsed,from_S,...`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Likelihood engine.
    #[arg(long)]
    pub engine: Option<String>,
    /// Named fitter (BayesSIR, BayesPureBirth, BayesTSIR); sets the engine.
    #[arg(long, conflicts_with = "engine")]
    pub fitter: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Hold gamma at this value instead of sampling it.
    #[arg(long)]
    pub fix_gamma: Option<f64>,
    /// Credibility levels of the reported intervals.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    TransprobCompare,
    Coverage,
    Measles,
    PosteriorPredictive,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Replicate count of the coverage study.
    #[arg(long)]
    pub replicates: Option<usize>,
}
