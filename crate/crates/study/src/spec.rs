use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sirmix_core::{Error, Result};

use crate::coverage::CoverageSpec;
use crate::measles::MeaslesSpec;
use crate::predictive::PredictiveSpec;
use crate::transprob::TransprobSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    TransprobCompare,
    Coverage,
    Measles,
    PosteriorPredictive,
}

impl StudyKind {
    pub const ALL: [StudyKind; 4] = [
        StudyKind::TransprobCompare,
        StudyKind::Coverage,
        StudyKind::Measles,
        StudyKind::PosteriorPredictive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::TransprobCompare => "transprob-compare",
            StudyKind::Coverage => "coverage",
            StudyKind::Measles => "measles",
            StudyKind::PosteriorPredictive => "posterior-predictive",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown study kind `{s}`")))
    }
}

/// Everything one study run depends on. Only the section matching `kind` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub kind: StudyKind,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the replicate count of the coverage section.
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub transprob: TransprobSpec,
    #[serde(default)]
    pub coverage: CoverageSpec,
    #[serde(default)]
    pub measles: MeaslesSpec,
    #[serde(default)]
    pub predictive: PredictiveSpec,
}

impl StudySpec {
    pub fn new(kind: StudyKind) -> Self {
        StudySpec {
            kind,
            seed: 0,
            replicates: None,
            transprob: TransprobSpec::default(),
            coverage: CoverageSpec::default(),
            measles: MeaslesSpec::default(),
            predictive: PredictiveSpec::default(),
        }
    }

    /// Folds the top-level overrides into the per-kind sections.
    pub fn resolved(mut self) -> Result<Self> {
        if let Some(r) = self.replicates {
            self.coverage.replicates = r;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == Some(0) {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        match self.kind {
            StudyKind::TransprobCompare => {
                let t = &self.transprob;
                if t.alphas.is_empty() || t.gammas.is_empty() || t.engines.is_empty() {
                    return Err(Error::Config("transprob grids must be nonempty".into()));
                }
            }
            StudyKind::Coverage => self.coverage.validate()?,
            StudyKind::Measles => {
                let m = &self.measles;
                if m.models.is_empty() || m.fitters.is_empty() {
                    return Err(Error::Config("measles models and fitters must be nonempty".into()));
                }
            }
            StudyKind::PosteriorPredictive => {
                if self.predictive.max_draws == 0 {
                    return Err(Error::Config("max_draws must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}
