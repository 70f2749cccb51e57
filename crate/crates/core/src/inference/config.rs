use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engines::{Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::model::SeasonalityMap;

/// Named fitters and the engine each one uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fitter {
    #[serde(rename = "BayesTSIR")]
    BayesTsir,
    #[serde(rename = "BayesPureBirth")]
    BayesPureBirth,
    #[serde(rename = "BayesSIR")]
    BayesSir,
}

impl Fitter {
    pub const ALL: [Fitter; 3] = [Fitter::BayesSir, Fitter::BayesPureBirth, Fitter::BayesTsir];

    pub fn engine(self) -> Engine {
        match self {
            Fitter::BayesTsir => Engine::NegBin,
            Fitter::BayesPureBirth => Engine::PureBirthExact,
            Fitter::BayesSir => Engine::SirExact,
        }
    }

    /// Fitters whose engine ignores removals fix `gamma = 1`.
    pub fn fixed_gamma(self) -> Option<f64> {
        match self {
            Fitter::BayesSir => None,
            Fitter::BayesTsir | Fitter::BayesPureBirth => Some(1.0),
        }
    }

    pub fn from_engine(engine: Engine) -> Option<Fitter> {
        Fitter::ALL.into_iter().find(|f| f.engine() == engine)
    }

    pub fn name(self) -> &'static str {
        match self {
            Fitter::BayesTsir => "BayesTSIR",
            Fitter::BayesPureBirth => "BayesPureBirth",
            Fitter::BayesSir => "BayesSIR",
        }
    }
}

impl fmt::Display for Fitter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fitter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Fitter::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown fitter `{s}`")))
    }
}

/// Log-normal prior: `log(theta) ~ Normal(location, scale^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub location: f64,
    pub scale: f64,
}

impl Default for LogNormalPrior {
    fn default() -> Self {
        LogNormalPrior {
            location: 0.0,
            scale: 100.0,
        }
    }
}

impl LogNormalPrior {
    /// Log density of `theta` on the natural scale.
    pub fn ln_pdf(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = (theta.ln() - self.location) / self.scale;
        -0.5 * z * z - theta.ln() - self.scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Priors {
    pub default: LogNormalPrior,
    /// Per-parameter overrides keyed by parameter name.
    pub overrides: BTreeMap<String, LogNormalPrior>,
}

impl Priors {
    pub fn get(&self, name: &str) -> LogNormalPrior {
        self.overrides.get(name).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    /// Starting random-walk standard deviation on the log scale.
    pub initial_scale: f64,
    pub target_acceptance: f64,
    /// Iterations between scale updates during burn-in.
    pub adapt_interval: usize,
    /// Switch to a joint proposal built from the burn-in covariance.
    pub covariance_adaptation: bool,
    /// Fraction of burn-in after which the covariance is estimated.
    pub covariance_start: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            initial_scale: 0.05,
            target_acceptance: 0.234,
            adapt_interval: 50,
            covariance_adaptation: true,
            covariance_start: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub engine: Engine,
    #[serde(default = "SeasonalityMap::constant")]
    pub seasonality: SeasonalityMap,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub fix_gamma: Option<f64>,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub proposal: ProposalConfig,
    #[serde(default)]
    pub engine_options: EngineOptions,
    /// Population size in the rates; defaults to the data's compartment sum.
    #[serde(default)]
    pub population: Option<u64>,
}

impl FitConfig {
    pub fn new(engine: Engine) -> Self {
        FitConfig {
            engine,
            seasonality: SeasonalityMap::constant(),
            priors: Priors::default(),
            fix_gamma: None,
            chain: ChainConfig::default(),
            proposal: ProposalConfig::default(),
            engine_options: EngineOptions::default(),
            population: None,
        }
    }

    pub fn for_fitter(fitter: Fitter) -> Self {
        FitConfig {
            fix_gamma: fitter.fixed_gamma(),
            ..FitConfig::new(fitter.engine())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.chain;
        // equality is allowed and yields an empty sample
        if c.burn_in > c.iterations {
            return Err(Error::Config(format!(
                "iterations ({}) must not be below burn-in ({})",
                c.iterations, c.burn_in
            )));
        }
        if c.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        let priors = std::iter::once(&self.priors.default).chain(self.priors.overrides.values());
        for p in priors {
            if !(p.scale.is_finite() && p.scale > 0.0 && p.location.is_finite()) {
                return Err(Error::Config(format!("invalid prior {p:?}")));
            }
        }
        if let Some(g) = self.fix_gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("fix_gamma must be >= 0, got {g}")));
            }
        }
        let p = &self.proposal;
        if !(p.initial_scale > 0.0 && p.target_acceptance > 0.0 && p.target_acceptance < 1.0 && p.adapt_interval > 0) {
            return Err(Error::Config(format!("invalid proposal settings {p:?}")));
        }
        if !(0.0..1.0).contains(&p.covariance_start) {
            return Err(Error::Config("covariance_start must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Parameter names in draw order: `alpha`, the betas, `gamma`.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["alpha".to_string()];
        names.extend(self.seasonality.names().iter().cloned());
        names.push("gamma".to_string());
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fitter_engine_table() {
        assert_eq!(Fitter::BayesTsir.engine(), Engine::NegBin);
        assert_eq!(Fitter::BayesPureBirth.engine(), Engine::PureBirthExact);
        assert_eq!(Fitter::BayesSir.engine(), Engine::SirExact);
        assert_eq!(Fitter::from_engine(Engine::NegBinExp), None);
        assert_eq!(Fitter::BayesTsir.fixed_gamma(), Some(1.0));
        assert_eq!("bayessir".parse::<Fitter>().unwrap(), Fitter::BayesSir);
    }

    #[test]
    fn lognormal_density() {
        let p = LogNormalPrior {
            location: 0.3,
            scale: 0.7,
        };
        use statrs::distribution::{Continuous, LogNormal};
        let reference = LogNormal::new(0.3, 0.7).unwrap();
        for x in [0.1, 1.0, 2.5] {
            assert_relative_eq!(p.ln_pdf(x), reference.ln_pdf(x), max_relative = 1e-12);
        }
    }

    #[test]
    fn config_json_defaults() {
        let cfg: FitConfig = serde_json::from_str(r#"{"engine":"sir-exact"}"#).unwrap();
        assert_eq!(cfg.chain.iterations, 20_000);
        assert_eq!(cfg.chain.burn_in, 5_000);
        assert_eq!(cfg.chain.thin, 5);
        assert_eq!(cfg.priors.get("alpha").scale, 100.0);
        cfg.validate().unwrap();
        let bad = FitConfig {
            chain: ChainConfig {
                iterations: 10,
                burn_in: 20,
                thin: 1,
                seed: 0,
            },
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
    }
}
