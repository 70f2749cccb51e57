//! Path log-likelihood: the sum of interval log transition probabilities.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engines::{path_transition_ln_prob, Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::model::{ModelParams, SeasonalityMap, SirState};
use crate::sim::GridSeries;

/// Interval transitions on a regular grid, ready for likelihood evaluation.
///
/// Interval `t` goes from `from[t]` to `to[t]`. For a simulated path
/// `to[t] = from[t + 1]`; for reconstructed incidence data the susceptible
/// count may be topped up by births between `to[t]` and `from[t + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathData {
    pub from: Vec<SirState>,
    pub to: Vec<SirState>,
    /// Grid step, the elapsed time of every interval.
    pub elapsed: f64,
    /// Period index of the first interval, for seasonal rate lookup.
    #[serde(default)]
    pub first_period: usize,
}

impl PathData {
    /// Consecutive observations of one path.
    pub fn new(states: Vec<SirState>, elapsed: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Data(format!(
                "a path needs at least two observations, got {}",
                states.len()
            )));
        }
        let from = states[..states.len() - 1].to_vec();
        let to = states[1..].to_vec();
        PathData::from_pairs(from, to, elapsed)
    }

    pub fn from_pairs(from: Vec<SirState>, to: Vec<SirState>, elapsed: f64) -> Result<Self> {
        if from.is_empty() || from.len() != to.len() {
            return Err(Error::Data(format!(
                "need matching nonempty interval endpoints, got {} and {}",
                from.len(),
                to.len()
            )));
        }
        if !(elapsed.is_finite() && elapsed > 0.0) {
            return Err(Error::invalid("elapsed", format!("must be > 0, got {elapsed}")));
        }
        let n = from[0].population();
        let all = from.iter().chain(&to);
        if let Some(st) = all.clone().find(|s| s.population() != n) {
            return Err(Error::Data(format!(
                "compartments {st:?} sum to {} instead of {n}",
                st.population()
            )));
        }
        Ok(PathData {
            from,
            to,
            elapsed,
            first_period: 0,
        })
    }

    pub fn from_grid(grid: &GridSeries) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Data("grid series has fewer than two points".into()));
        }
        let dt = grid.times[1] - grid.times[0];
        for w in grid.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Data("grid series is not regularly spaced".into()));
            }
        }
        PathData::new(grid.states(), dt)
    }

    pub fn intervals(&self) -> usize {
        self.from.len()
    }

    pub fn population(&self) -> u64 {
        self.from[0].population()
    }

    /// Intervals `start..end`, keeping the seasonal phase.
    pub fn segment(&self, start: usize, end: usize) -> Result<Self> {
        let mut seg = PathData::from_pairs(
            self.from[start..end].to_vec(),
            self.to[start..end].to_vec(),
            self.elapsed,
        )?;
        seg.first_period = self.first_period + start;
        Ok(seg)
    }
}

/// Interval table of a path, optionally labelled by season.
///
/// Header `period,elapsed,from_S,from_I,from_R,to_S,to_I,to_R[,label]`.
/// Periods must be consecutive and `elapsed` the same on every row.
impl PathData {
    pub fn write_csv<W: Write>(&self, labels: Option<&[String]>, writer: W) -> Result<()> {
        if let Some(l) = labels {
            if l.len() != self.intervals() {
                return Err(Error::Data(format!(
                    "{} labels for {} intervals",
                    l.len(),
                    self.intervals()
                )));
            }
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["period", "elapsed", "from_S", "from_I", "from_R", "to_S", "to_I", "to_R"];
        if labels.is_some() {
            header.push("label");
        }
        w.write_record(&header)?;
        for k in 0..self.intervals() {
            let (a, b) = (self.from[k], self.to[k]);
            let mut row = vec![(self.first_period + k).to_string(), crate::sim::fmt_time(self.elapsed)];
            row.extend([a.s, a.i, a.r, b.s, b.i, b.r].map(|x| x.to_string()));
            if let Some(l) = labels {
                row.push(l[k].clone());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<(PathData, Option<Vec<String>>)> {
        #[derive(Deserialize)]
        struct Row {
            period: usize,
            elapsed: f64,
            #[serde(rename = "from_S")]
            from_s: u64,
            #[serde(rename = "from_I")]
            from_i: u64,
            #[serde(rename = "from_R")]
            from_r: u64,
            #[serde(rename = "to_S")]
            to_s: u64,
            #[serde(rename = "to_I")]
            to_i: u64,
            #[serde(rename = "to_R")]
            to_r: u64,
            label: Option<String>,
        }
        let mut rd = csv::Reader::from_reader(reader);
        let has_label = rd.headers()?.iter().any(|h| h == "label");
        let rows: Vec<Row> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
        let Some(first) = rows.first() else {
            return Err(Error::Data("path table has no intervals".into()));
        };
        let (p0, dt) = (first.period, first.elapsed);
        for (k, r) in rows.iter().enumerate() {
            if r.period != p0 + k {
                return Err(Error::Data(format!("row {k}: period {} is not consecutive", r.period)));
            }
            if r.elapsed != dt {
                return Err(Error::Data(format!("row {k}: elapsed {} differs from {dt}", r.elapsed)));
            }
        }
        let from = rows.iter().map(|r| SirState::new(r.from_s, r.from_i, r.from_r)).collect();
        let to = rows.iter().map(|r| SirState::new(r.to_s, r.to_i, r.to_r)).collect();
        let mut path = PathData::from_pairs(from, to, dt)?;
        path.first_period = p0;
        let labels = has_label.then(|| rows.into_iter().map(|r| r.label.unwrap_or_default()).collect());
        Ok((path, labels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    /// First interval with zero probability, when `value` is `-inf`.
    pub first_zero_interval: Option<usize>,
}

impl LogLikelihood {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `sum_t log P(X_t -> X_{t+1})` with the seasonal rate of each interval.
pub fn log_likelihood(
    data: &PathData,
    params: &ModelParams,
    seasonality: &SeasonalityMap,
    engine: Engine,
    opts: &EngineOptions,
) -> Result<LogLikelihood> {
    let mut total = 0.0;
    for k in 0..data.intervals() {
        let period = data.first_period + k;
        let rates = params.active(seasonality.beta_index(period))?;
        let lp = path_transition_ln_prob(
            data.from[k],
            data.to[k],
            data.elapsed,
            rates,
            engine,
            opts,
            period,
        )?;
        if lp == f64::NEG_INFINITY || lp.is_nan() {
            return Ok(LogLikelihood {
                value: f64::NEG_INFINITY,
                first_zero_interval: Some(period),
            });
        }
        total += lp;
    }
    Ok(LogLikelihood {
        value: total,
        first_zero_interval: None,
    })
}

/// Checks the increments of every interval once, so data errors surface
/// before sampling starts.
pub fn check_increments(data: &PathData, engine: Engine) -> Result<()> {
    for k in 0..data.intervals() {
        let (a, b) = (data.from[k], data.to[k]);
        let inc = crate::model::CumulativeState::between(a, b, data.first_period + k)?;
        if engine.models_removals() && !inc.is_valid_for(a) {
            return Err(Error::DataInconsistency {
                interval: data.first_period + k,
                n_si: inc.n_si as i64,
                n_ir: inc.n_ir as i64,
            });
        }
    }
    Ok(())
}
