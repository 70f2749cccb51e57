//! Scripted study harnesses: transition-probability comparisons, coverage of
//! credible intervals over simulated outbreaks, the seasonal measles analysis
//! and posterior predictive checks.

pub mod coverage;
pub mod measles;
pub mod predictive;
pub mod spec;
pub mod surrogate;
pub mod transprob;

use std::path::{Path, PathBuf};

use serde_json::json;
use sirmix_core::{Error, Result};

pub use spec::{StudyKind, StudySpec};

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Files written by a study and a short machine-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Runs the study described by `spec` and writes its tables into `out`.
pub fn run_study(spec: &StudySpec, out: &Path) -> Result<StudyOutcome> {
    spec.validate()?;
    match spec.kind {
        StudyKind::TransprobCompare => {
            let cells = transprob::run_transprob_compare(&spec.transprob)?;
            let files = transprob::write_outputs(&cells, out)?;
            Ok(StudyOutcome {
                files,
                summary: json!({ "cells": cells.len() }),
            })
        }
        StudyKind::Coverage => {
            let run = coverage::run_coverage_study(&spec.coverage, spec.seed)?;
            let files = coverage::write_outputs(&run, &spec.coverage, out)?;
            Ok(StudyOutcome {
                files,
                summary: json!({
                    "replicates": run.report.replicates,
                    "total_redraws": run.report.total_redraws,
                    "failures": run.report.failures,
                }),
            })
        }
        StudyKind::Measles => {
            let obs = measles::load_observed(&spec.measles)?;
            let run = measles::run_measles_study(&spec.measles, &obs, spec.seed)?;
            let files = measles::write_outputs(&run, out)?;
            Ok(StudyOutcome {
                files,
                summary: json!({
                    "rho": run.reconstructed.meta.rho,
                    "sbar": run.reconstructed.meta.sbar,
                    "repairs": run.integer.repairs.len(),
                    "fits": run.fits.len(),
                }),
            })
        }
        StudyKind::PosteriorPredictive => {
            let run = predictive::run_posterior_predictive(&spec.predictive, spec.seed)?;
            let files = predictive::write_outputs(&run, out)?;
            let cov: serde_json::Map<String, serde_json::Value> =
                run.methods.iter().map(|m| (m.method.clone(), json!(m.coverage_95))).collect();
            Ok(StudyOutcome {
                files,
                summary: json!({ "coverage_95": cov }),
            })
        }
    }
}
