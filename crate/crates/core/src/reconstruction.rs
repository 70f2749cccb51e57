//! Susceptible reconstruction from reported incidence and births.
//!
//! Cumulative reported cases `Y_t` are regressed on cumulative births `X_t`.
//! The slope is the reporting rate `rho`, the true cases are `Z_t / rho`, and
//! the cumulative residuals trace the susceptible deviations `D_t` around an
//! unknown mean level `S̄`. `S̄` is either given or picked by a grid search
//! that minimises the residual sum of squares of the log-linear recursion
//! `ln I_{t+1} = ln beta_{season(t)} + alpha ln I_t + ln S_t`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PathData;
use crate::model::{SeasonalityMap, SirState};
use crate::sim::fmt_time;

/// Reported incidence with births and population per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub times: Vec<f64>,
    pub cases: Vec<u64>,
    pub births: Vec<f64>,
    pub population: Vec<f64>,
    /// Seasonality label per period, such as biweek of year or term flag.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

impl ObservedSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.cases.len() != n || self.births.len() != n || self.population.len() != n {
            return Err(Error::Data("observed columns have different lengths".into()));
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::Data("label column has the wrong length".into()));
            }
        }
        for t in 0..n {
            let (z, b, p) = (self.cases[t] as f64, self.births[t], self.population[t]);
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Data(format!("births at period {t} must be >= 0, got {b}")));
            }
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Data(format!("population at period {t} must be > 0, got {p}")));
            }
            if z > p {
                return Err(Error::Data(format!("cases {z} exceed population {p} at period {t}")));
            }
        }
        Ok(())
    }

    /// Divides every count by `factor`, rounding cases to the nearest integer.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid("factor", format!("must be > 0, got {factor}")));
        }
        Ok(ObservedSeries {
            times: self.times.clone(),
            cases: self.cases.iter().map(|&z| (z as f64 / factor).round() as u64).collect(),
            births: self.births.iter().map(|b| b / factor).collect(),
            population: self.population.iter().map(|p| p / factor).collect(),
            labels: self.labels.clone(),
        })
    }

    pub fn mean_population(&self) -> f64 {
        self.population.iter().sum::<f64>() / self.len() as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time", "cases", "births", "population"];
        if self.labels.is_some() {
            header.push("label");
        }
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![
                fmt_time(self.times[t]),
                self.cases[t].to_string(),
                format!("{}", self.births[t]),
                format!("{}", self.population[t]),
            ];
            if let Some(l) = &self.labels {
                row.push(l[t].clone());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let has_label = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["time", "cases", "births", "population"] => false,
            ["time", "cases", "births", "population", "label"] => true,
            _ => {
                return Err(Error::Data(format!(
                    "observed CSV header must be time,cases,births,population[,label], got {}",
                    header.join(",")
                )))
            }
        };
        let mut obs = ObservedSeries {
            times: vec![],
            cases: vec![],
            births: vec![],
            population: vec![],
            labels: has_label.then(Vec::new),
        };
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {}: bad value `{}`: {e}", row + 1, &rec[k])))
            };
            obs.times.push(num(0)?);
            let z = rec[1].trim();
            obs.cases.push(
                z.parse::<u64>()
                    .map_err(|e| Error::Data(format!("row {}: cases `{z}` must be a nonnegative integer: {e}", row + 1)))?,
            );
            obs.births.push(num(2)?);
            obs.population.push(num(3)?);
            if let Some(l) = obs.labels.as_mut() {
                l.push(rec[4].trim().to_string());
            }
        }
        obs.validate()?;
        Ok(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionDirection {
    /// Cumulative cases on cumulative births; the slope is `rho`.
    #[default]
    CasesOnBirths,
    /// Cumulative births on cumulative cases; the slope is `1 / rho`.
    BirthsOnCases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbarPolicy {
    /// Mean susceptible count, in individuals.
    Fixed(f64),
    /// Candidate values of `S̄` as fractions of the mean population.
    GridSearch(Vec<f64>),
}

impl Default for SbarPolicy {
    fn default() -> Self {
        SbarPolicy::GridSearch((2..=20).map(|p| p as f64 / 100.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub sbar: SbarPolicy,
    pub direction: RegressionDirection,
    /// Births enter the susceptible pool this many periods late.
    pub birth_lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMeta {
    pub rho: f64,
    pub sbar: f64,
    /// Mean population, used as `N` in the transition rates.
    pub population: f64,
    pub slope: f64,
    pub intercept: f64,
    pub direction: RegressionDirection,
    pub birth_lag: usize,
    /// Residual sum of squares of the recursion at the chosen `S̄`, when searched.
    pub profile_rss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedSeries {
    pub times: Vec<f64>,
    pub susceptible: Vec<f64>,
    pub true_cases: Vec<f64>,
    pub labels: Option<Vec<String>>,
    pub meta: ReconstructionMeta,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    let beta = svd
        .solve(y, 1e-12)
        .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?;
    Ok(beta)
}

fn simple_regression(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Reconstruction("cumulative regressor is constant".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

fn cumsum(v: impl Iterator<Item = f64>) -> Vec<f64> {
    v.scan(0.0, |acc, x| {
        *acc += x;
        Some(*acc)
    })
    .collect()
}

/// Residual sum of squares of the log-linear recursion, or `None` when some
/// susceptible value is not positive.
fn recursion_rss(susceptible: &[f64], true_cases: &[f64], season: &[usize], k: usize) -> Result<Option<f64>> {
    if susceptible.iter().any(|&s| s <= 0.0) {
        return Ok(None);
    }
    let n = susceptible.len() - 1;
    let mut x = DMatrix::<f64>::zeros(n, k + 1);
    let mut y = DVector::<f64>::zeros(n);
    for t in 0..n {
        x[(t, season[t])] = 1.0;
        x[(t, k)] = (true_cases[t] + 1.0).ln();
        y[t] = (true_cases[t + 1] + 1.0).ln() - susceptible[t].ln();
    }
    let b = ols(&x, &y)?;
    let resid = y - x * b;
    Ok(Some(resid.norm_squared()))
}

pub fn reconstruct(obs: &ObservedSeries, cfg: &ReconstructionConfig) -> Result<ReconstructedSeries> {
    obs.validate()?;
    let n = obs.len();
    if n < 3 {
        return Err(Error::Reconstruction(format!("need at least 3 periods, got {n}")));
    }
    if obs.cases.iter().all(|&z| z == 0) {
        return Err(Error::Reconstruction("no reported cases".into()));
    }
    if obs.cases.iter().all(|&z| z == obs.cases[0]) {
        return Err(Error::Reconstruction("reported cases are constant".into()));
    }
    let lagged = (0..n).map(|t| obs.births[t.saturating_sub(cfg.birth_lag)]);
    let x = cumsum(lagged);
    let y = cumsum(obs.cases.iter().map(|&z| z as f64));

    let (intercept, slope, deviations): (f64, f64, Vec<f64>) = match cfg.direction {
        RegressionDirection::CasesOnBirths => {
            let (a, b) = simple_regression(&x, &y)?;
            let dev = (0..n).map(|t| -(y[t] - a - b * x[t]) / b).collect();
            (a, b, dev)
        }
        RegressionDirection::BirthsOnCases => {
            let (a, c) = simple_regression(&y, &x)?;
            let dev = (0..n).map(|t| x[t] - a - c * y[t]).collect();
            (a, c, dev)
        }
    };
    let raw_rho = match cfg.direction {
        RegressionDirection::CasesOnBirths => slope,
        RegressionDirection::BirthsOnCases => 1.0 / slope,
    };
    if !(raw_rho.is_finite() && raw_rho > 0.0 && raw_rho <= 1.0 + 1e-9) {
        return Err(Error::Reconstruction(format!(
            "regression slope {slope} implies reporting rate {raw_rho}, outside (0, 1]"
        )));
    }
    let rho = raw_rho.min(1.0);
    let true_cases: Vec<f64> = obs.cases.iter().map(|&z| z as f64 / rho).collect();
    let population = obs.mean_population();

    let (sbar, profile_rss) = match &cfg.sbar {
        SbarPolicy::Fixed(v) => {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Config(format!("fixed S̄ must be > 0, got {v}")));
            }
            (*v, None)
        }
        SbarPolicy::GridSearch(fractions) => {
            if fractions.is_empty() {
                return Err(Error::Config("S̄ grid is empty".into()));
            }
            let season = match &obs.labels {
                Some(l) => SeasonalityMap::from_labels(l)?,
                None => SeasonalityMap::constant(),
            };
            let idx: Vec<usize> = (0..n).map(|t| season.beta_index(t)).collect();
            let mut best: Option<(f64, f64)> = None;
            for &f in fractions {
                let sbar = f * population;
                let s: Vec<f64> = deviations.iter().map(|d| sbar + d).collect();
                if let Some(rss) = recursion_rss(&s, &true_cases, &idx, season.k())? {
                    if best.is_none_or(|(_, r)| rss < r) {
                        best = Some((sbar, rss));
                    }
                }
            }
            let (sbar, rss) = best.ok_or_else(|| {
                Error::Reconstruction("every S̄ candidate gives a nonpositive susceptible count".into())
            })?;
            (sbar, Some(rss))
        }
    };
    let susceptible: Vec<f64> = deviations.iter().map(|d| sbar + d).collect();
    if let Some(t) = susceptible.iter().position(|&s| s <= 0.0) {
        return Err(Error::Reconstruction(format!(
            "S̄ = {sbar} gives a nonpositive susceptible count at period {t}"
        )));
    }
    Ok(ReconstructedSeries {
        times: obs.times.clone(),
        susceptible,
        true_cases,
        labels: obs.labels.clone(),
        meta: ReconstructionMeta {
            rho,
            sbar,
            population,
            slope,
            intercept,
            direction: cfg.direction,
            birth_lag: cfg.birth_lag,
            profile_rss,
        },
    })
}

impl ReconstructedSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Seasonality map from the period labels, or a single rate without them.
    pub fn seasonality(&self) -> Result<SeasonalityMap> {
        match &self.labels {
            Some(l) => SeasonalityMap::from_labels(l),
            None => Ok(SeasonalityMap::constant()),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time", "S_tilde", "I_tilde"];
        if self.labels.is_some() {
            header.push("label");
        }
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![
                fmt_time(self.times[t]),
                format!("{}", self.susceptible[t]),
                format!("{}", self.true_cases[t]),
            ];
            if let Some(l) = &self.labels {
                row.push(l[t].clone());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.meta)?;
        Ok(())
    }

    /// Reads the series CSV together with its JSON sidecar.
    pub fn read<R1: Read, R2: Read>(csv_reader: R1, meta_reader: R2) -> Result<Self> {
        let meta: ReconstructionMeta = serde_json::from_reader(meta_reader)?;
        let mut rd = csv::Reader::from_reader(csv_reader);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let has_label = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["time", "S_tilde", "I_tilde"] => false,
            ["time", "S_tilde", "I_tilde", "label"] => true,
            _ => {
                return Err(Error::Data(format!(
                    "reconstructed CSV header must be time,S_tilde,I_tilde[,label], got {}",
                    header.join(",")
                )))
            }
        };
        let mut rec = ReconstructedSeries {
            times: vec![],
            susceptible: vec![],
            true_cases: vec![],
            labels: has_label.then(Vec::new),
            meta,
        };
        for (row, r) in rd.records().enumerate() {
            let r = r?;
            let num = |k: usize| -> Result<f64> {
                r[k].trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {}: bad value `{}`: {e}", row + 1, &r[k])))
            };
            rec.times.push(num(0)?);
            rec.susceptible.push(num(1)?);
            rec.true_cases.push(num(2)?);
            if let Some(l) = rec.labels.as_mut() {
                l.push(r[3].trim().to_string());
            }
        }
        Ok(rec)
    }
}

/// How consecutive reconstructed periods become interval transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StateConvention {
    /// The true cases of period `t + 1` are the infections during interval
    /// `t`, and the cases of period `t` are removed by its end. Births top up
    /// the susceptibles between intervals.
    #[default]
    Incidence,
    /// Consecutive rounded states are the endpoints of each interval.
    Chained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RepairPolicy {
    #[default]
    Clamp,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct IntegerizeConfig {
    pub convention: StateConvention,
    pub repair: RepairPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    /// Negative new infections set to zero.
    NegativeInfections,
    /// Negative removals set to zero.
    NegativeRemovals,
    /// More new infections than susceptibles, capped at the susceptible count.
    InfectionsExceedSusceptibles,
    /// New infections without infectives; one imported infective is added.
    NoInfectives,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub interval: usize,
    pub kind: RepairKind,
    pub original: i64,
    pub repaired: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegerSeries {
    pub s: Vec<u64>,
    pub i: Vec<u64>,
    pub population: u64,
    pub path: PathData,
    pub repairs: Vec<Repair>,
}

/// Rounds the reconstruction to integer compartments and builds the interval
/// transitions used by the likelihood.
pub fn integerize(rec: &ReconstructedSeries, cfg: &IntegerizeConfig, elapsed: f64) -> Result<IntegerSeries> {
    let n = rec.len();
    if n < 2 || rec.susceptible.len() != n || rec.true_cases.len() != n {
        return Err(Error::Data("reconstructed series needs at least two complete periods".into()));
    }
    let round = |v: f64, what: &str, t: usize| -> Result<u64> {
        if !v.is_finite() {
            return Err(Error::Data(format!("{what} at period {t} is not finite")));
        }
        Ok(v.round().max(0.0) as u64)
    };
    let s: Vec<u64> = (0..n).map(|t| round(rec.susceptible[t], "S_tilde", t)).collect::<Result<_>>()?;
    let i: Vec<u64> = (0..n).map(|t| round(rec.true_cases[t], "I_tilde", t)).collect::<Result<_>>()?;
    let population = rec.meta.population.round() as u64;
    if let Some(t) = (0..n).find(|&t| s[t] + i[t] > population) {
        return Err(Error::Data(format!(
            "S + I = {} exceeds the population {population} at period {t}",
            s[t] + i[t]
        )));
    }
    let state = |s: u64, i: u64| SirState::new(s, i, population - s - i);
    let mut repairs = Vec::new();
    let mut repair = |interval: usize, kind: RepairKind, original: i64, repaired: i64| -> Result<()> {
        if cfg.repair == RepairPolicy::Strict {
            return Err(match kind {
                RepairKind::InfectionsExceedSusceptibles => Error::Data(format!(
                    "interval {interval}: {original} new infections exceed the susceptible count {repaired}"
                )),
                RepairKind::NoInfectives => Error::Data(format!(
                    "interval {interval}: new infections while no one is infectious"
                )),
                _ => Error::DataInconsistency {
                    interval,
                    n_si: if kind == RepairKind::NegativeInfections { original } else { 0 },
                    n_ir: if kind == RepairKind::NegativeRemovals { original } else { 0 },
                },
            });
        }
        repairs.push(Repair {
            interval,
            kind,
            original,
            repaired,
        });
        Ok(())
    };

    let mut from = Vec::with_capacity(n - 1);
    let mut to = Vec::with_capacity(n - 1);
    for t in 0..n - 1 {
        let wanted = match cfg.convention {
            StateConvention::Chained => s[t] > s[t + 1],
            StateConvention::Incidence => i[t + 1] > 0,
        };
        let mut i_from = i[t];
        if i_from == 0 && wanted && s[t] < population {
            repair(t, RepairKind::NoInfectives, 0, 1)?;
            i_from = 1;
        }
        let (n_si, n_ir) = match cfg.convention {
            StateConvention::Chained => {
                let mut n_si = s[t] as i64 - s[t + 1] as i64;
                if n_si < 0 {
                    repair(t, RepairKind::NegativeInfections, n_si, 0)?;
                    n_si = 0;
                }
                let mut n_ir = i_from as i64 + n_si - i[t + 1] as i64;
                if n_ir < 0 {
                    repair(t, RepairKind::NegativeRemovals, n_ir, 0)?;
                    n_ir = 0;
                }
                (n_si as u64, n_ir as u64)
            }
            StateConvention::Incidence => {
                let mut n_si = i[t + 1];
                if n_si > s[t] {
                    repair(t, RepairKind::InfectionsExceedSusceptibles, n_si as i64, s[t] as i64)?;
                    n_si = s[t];
                }
                (n_si, i_from)
            }
        };
        from.push(state(s[t], i_from));
        to.push(state(s[t] - n_si, i_from + n_si - n_ir));
    }
    let path = PathData::from_pairs(from, to, elapsed)?;
    Ok(IntegerSeries {
        s,
        i,
        population,
        path,
        repairs,
    })
}
