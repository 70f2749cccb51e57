//! Posterior summaries: medians, equal-tailed credible intervals and
//! effective sample sizes.
//!
//! Quantiles use linear interpolation between order statistics
//! (`h = (n - 1) p`, the "type 7" rule), so draws `1..=100` have median 50.5
//! and 95% interval `(3.475, 97.525)`.

use serde::{Deserialize, Serialize};

use super::mcmc::PosteriorSample;
use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: [f64; 3] = [0.80, 0.90, 0.95];

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, p)
}

/// Effective sample size with Geyer's initial positive sequence estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acov = |lag: usize| -> f64 {
        (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / n as f64 / var
    };
    let mut sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acov(lag) + acov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CredibleInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub intervals: Vec<CredibleInterval>,
    pub ess: f64,
    /// Monte Carlo standard error of the median.
    pub mcse_median: f64,
}

impl ParamSummary {
    pub fn interval(&self, level: f64) -> Option<&CredibleInterval> {
        self.intervals.iter().find(|c| (c.level - level).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub params: Vec<ParamSummary>,
    pub draws: usize,
    pub acceptance_rate: f64,
}

impl ChainSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn summarize_column(name: &str, values: &[f64], levels: &[f64]) -> ParamSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let ess = effective_sample_size(values);
    let intervals = levels
        .iter()
        .map(|&level| {
            let tail = (1.0 - level) / 2.0;
            CredibleInterval {
                level,
                lower: quantile_sorted(&sorted, tail),
                upper: quantile_sorted(&sorted, 1.0 - tail),
            }
        })
        .collect();
    ParamSummary {
        name: name.to_string(),
        median: quantile_sorted(&sorted, 0.5),
        mean,
        sd,
        intervals,
        ess,
        mcse_median: sd * (std::f64::consts::PI / 2.0).sqrt() / ess.max(1.0).sqrt(),
    }
}

/// Summaries of the sampled (non-fixed) parameters at the given levels.
pub fn summarize(sample: &PosteriorSample, levels: &[f64]) -> Result<ChainSummary> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Config(format!("credibility level {l} must be in (0, 1)")));
    }
    let params = (0..sample.names.len())
        .filter(|&j| sample.free[j])
        .map(|j| summarize_column(&sample.names[j], &sample.column(j), levels))
        .collect();
    Ok(ChainSummary {
        params,
        draws: sample.len(),
        acceptance_rate: sample.acceptance_rate,
    })
}
