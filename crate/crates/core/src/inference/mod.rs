//! Likelihood assembly and Metropolis–Hastings posterior sampling.

pub mod config;
pub mod likelihood;
pub mod mcmc;
pub mod predictive;
pub mod summary;

pub use config::{ChainConfig, FitConfig, Fitter, LogNormalPrior, Priors, ProposalConfig};
pub use likelihood::{check_increments, log_likelihood, LogLikelihood, PathData};
pub use mcmc::{fit, moment_start, run_chain, ChainOutput, PosteriorSample};
pub use predictive::{
    band_coverage, posterior_predictive, predictive_bands, read_bands_csv, write_bands_csv, BandRow,
    PredictiveEnsemble, PredictiveSettings,
};
pub use summary::{
    effective_sample_size, quantile, quantile_sorted, summarize, ChainSummary, CredibleInterval, ParamSummary,
    DEFAULT_LEVELS,
};
