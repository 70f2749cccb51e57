//! Interval transition probabilities under four formulations.
//!
//! | engine            | law of the new infections over one interval               |
//! |-------------------|-----------------------------------------------------------|
//! | `negbin`          | negative binomial, mean `beta S I^alpha dt / N`           |
//! | `negbin-exp`      | negative binomial, mean `I^alpha (exp(beta S dt / N) - 1)`|
//! | `purebirth-exact` | non-linear pure birth chain with `S` frozen               |
//! | `sir-exact`       | bivariate (nSI, nIR) chain equivalent to the SIR process  |
//!
//! The first three ignore removals. The exact engines solve the forward
//! Kolmogorov equations on a finite lattice, by uniformization by default or by
//! adaptive Runge–Kutta integration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActiveRates, CumulativeState, SirState};

pub mod negbin;
pub mod ode;
pub mod purebirth;
pub mod sir;
pub mod uniformization;

pub use negbin::{negbin_distribution, negbin_exp_pmf, negbin_ln_pmf, negbin_pmf, NegBinMean};
pub use purebirth::{purebirth_auto, purebirth_exact};
pub use sir::{sir_exact, sir_exact_auto, SirBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "negbin")]
    NegBin,
    #[serde(rename = "negbin-exp")]
    NegBinExp,
    #[serde(rename = "purebirth-exact")]
    PureBirthExact,
    #[serde(rename = "sir-exact")]
    SirExact,
}

impl Engine {
    pub const ALL: [Engine; 4] = [
        Engine::NegBin,
        Engine::NegBinExp,
        Engine::PureBirthExact,
        Engine::SirExact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Engine::NegBin => "negbin",
            Engine::NegBinExp => "negbin-exp",
            Engine::PureBirthExact => "purebirth-exact",
            Engine::SirExact => "sir-exact",
        }
    }

    /// Whether the engine models removals (and so needs `gamma`).
    pub fn models_removals(self) -> bool {
        matches!(self, Engine::SirExact)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown engine `{s}`")))
    }
}

/// Solver used by the exact engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Uniformization,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineOptions {
    /// Largest acceptable probability mass outside the enumerated support.
    pub truncation_tol: f64,
    /// Hard cap on lattice size for auto-sized supports.
    pub max_states: usize,
    /// Cap on the estimated operation count of one auto-sized solve.
    pub max_work: f64,
    /// Omitted Poisson tail mass in uniformization.
    pub poisson_tail: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// Use `I^alpha` instead of `I` as the negative binomial size.
    pub negbin_size_on_alpha: bool,
    pub purebirth_method: Method,
    pub sir_method: Method,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            truncation_tol: 1e-10,
            max_states: 2_000_000,
            max_work: 2e9,
            poisson_tail: 1e-13,
            ode_rtol: 1e-11,
            ode_atol: 1e-15,
            negbin_size_on_alpha: false,
            purebirth_method: Method::Uniformization,
            sir_method: Method::Uniformization,
        }
    }
}

impl EngineOptions {
    pub(crate) fn ode(&self) -> ode::OdeOptions {
        ode::OdeOptions {
            rtol: self.ode_rtol,
            atol: self.ode_atol,
            ..ode::OdeOptions::default()
        }
    }
}

/// A single-interval question: where does the chain go from `from` in `elapsed`?
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionQuery {
    pub from: SirState,
    pub elapsed: f64,
    pub rates: ActiveRates,
}

impl TransitionQuery {
    pub fn new(from: SirState, elapsed: f64, rates: ActiveRates) -> Result<Self> {
        if !(elapsed.is_finite() && elapsed > 0.0) {
            return Err(Error::invalid("elapsed", format!("must be > 0, got {elapsed}")));
        }
        rates.validate()?;
        Ok(TransitionQuery {
            from,
            elapsed,
            rates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Counts of new infections `0..=J`.
    Births(Vec<u64>),
    /// Cumulative `(nSI, nIR)` pairs.
    Joint(Vec<(u64, u64)>),
}

impl Support {
    pub fn len(&self) -> usize {
        match self {
            Support::Births(v) => v.len(),
            Support::Joint(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row key used in CSV output: `j` or `(nSI,nIR)`.
    pub fn key(&self, idx: usize) -> String {
        match self {
            Support::Births(v) => v[idx].to_string(),
            Support::Joint(v) => format!("({},{})", v[idx].0, v[idx].1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDistribution {
    pub support: Support,
    pub probabilities: Vec<f64>,
    pub truncated_mass: f64,
}

impl TransitionDistribution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum::<f64>()
    }

    /// Probability of `j` new infections (pure-birth supports) or of `nSI = j`
    /// summed over removals (joint supports).
    pub fn births_marginal(&self, j: u64) -> f64 {
        match &self.support {
            Support::Births(v) => v
                .iter()
                .position(|&x| x == j)
                .map_or(0.0, |idx| self.probabilities[idx]),
            Support::Joint(v) => v
                .iter()
                .zip(&self.probabilities)
                .filter(|((a, _), _)| *a == j)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    pub fn joint(&self, n_si: u64, n_ir: u64) -> f64 {
        match &self.support {
            Support::Births(v) if n_ir == 0 => v
                .iter()
                .position(|&x| x == n_si)
                .map_or(0.0, |idx| self.probabilities[idx]),
            Support::Births(_) => 0.0,
            Support::Joint(v) => v
                .iter()
                .position(|&x| x == (n_si, n_ir))
                .map_or(0.0, |idx| self.probabilities[idx]),
        }
    }

    /// `P(nSI = j, nIR = 0)` for `j = 0..=max_j`.
    pub fn no_removal_slice(&self, max_j: u64) -> Vec<f64> {
        (0..=max_j).map(|j| self.joint(j, 0)).collect()
    }

    /// `P(nIR = 0)` over the whole support.
    pub fn no_removal_mass(&self) -> f64 {
        match &self.support {
            Support::Births(_) => self.total(),
            Support::Joint(v) => v
                .iter()
                .zip(&self.probabilities)
                .filter(|((_, b), _)| *b == 0)
                .map(|(_, p)| p)
                .sum(),
        }
    }
}

/// Full distribution for one engine, with automatically sized support.
pub fn distribution(
    engine: Engine,
    query: &TransitionQuery,
    opts: &EngineOptions,
) -> Result<TransitionDistribution> {
    match engine {
        Engine::NegBin => negbin_distribution(query, NegBinMean::Linear, opts),
        Engine::NegBinExp => negbin_distribution(query, NegBinMean::Exponential, opts),
        Engine::PureBirthExact => purebirth_auto(query, opts),
        Engine::SirExact => sir_exact_auto(query, opts),
    }
}

/// Single transition probability `P(X(t + dt) = to | X(t) = from)`.
///
/// The pure-birth engines read the observed number of new infections
/// `nSI = from.s - to.s` as the birth count; `sir-exact` uses the full
/// `(nSI, nIR)` increment. `interval` is only used to label errors.
pub fn path_transition_prob(
    from: SirState,
    to: SirState,
    elapsed: f64,
    rates: ActiveRates,
    engine: Engine,
    opts: &EngineOptions,
    interval: usize,
) -> Result<f64> {
    Ok(path_transition_ln_prob(from, to, elapsed, rates, engine, opts, interval)?.exp())
}

/// Natural log of [`path_transition_prob`]; `-inf` for impossible moves.
pub fn path_transition_ln_prob(
    from: SirState,
    to: SirState,
    elapsed: f64,
    rates: ActiveRates,
    engine: Engine,
    opts: &EngineOptions,
    interval: usize,
) -> Result<f64> {
    let inc = CumulativeState::between(from, to, interval)?;
    let query = TransitionQuery::new(from, elapsed, rates)?;
    match engine {
        Engine::NegBin => Ok(negbin_ln_pmf(&query, inc.n_si, NegBinMean::Linear, opts)),
        Engine::NegBinExp => Ok(negbin_ln_pmf(&query, inc.n_si, NegBinMean::Exponential, opts)),
        Engine::PureBirthExact => Ok(purebirth::target_probability(&query, inc.n_si, opts)?.ln()),
        Engine::SirExact => {
            if !inc.is_valid_for(from) {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(sir::target_probability(&query, inc, opts)?.ln())
        }
    }
}
