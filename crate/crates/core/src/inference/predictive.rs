//! Posterior predictive simulation and pointwise quantile bands.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::mcmc::PosteriorSample;
use super::summary::quantile_sorted;
use crate::error::{Error, Result};
use crate::model::{SeasonalityMap, SirState};
use crate::rng::stream;
use crate::sim::{fmt_time, simulate_with, GridSeries, Horizon, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSettings {
    pub initial: SirState,
    pub horizon: Horizon,
    pub grid_step: f64,
    pub seasonality: SeasonalityMap,
    pub seed: u64,
    /// Use at most this many draws, evenly spaced through the sample.
    pub max_draws: Option<usize>,
}

/// Pointwise 2.5%, 50% and 97.5% quantiles of S and I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub time: f64,
    pub i_lower: f64,
    pub i_median: f64,
    pub i_upper: f64,
    pub s_lower: f64,
    pub s_median: f64,
    pub s_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    pub series: Vec<GridSeries>,
    pub bands: Vec<BandRow>,
}

/// Extends a series that stopped early by repeating its final state.
fn padded(series: &GridSeries, k: usize) -> SirState {
    series.state(k.min(series.len() - 1))
}

pub fn predictive_bands(series: &[GridSeries], grid_step: f64) -> Vec<BandRow> {
    let len = series.iter().map(GridSeries::len).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let mut i: Vec<f64> = series.iter().map(|g| padded(g, k).i as f64).collect();
            let mut s: Vec<f64> = series.iter().map(|g| padded(g, k).s as f64).collect();
            i.sort_by(|a, b| a.total_cmp(b));
            s.sort_by(|a, b| a.total_cmp(b));
            BandRow {
                time: k as f64 * grid_step,
                i_lower: quantile_sorted(&i, 0.025),
                i_median: quantile_sorted(&i, 0.5),
                i_upper: quantile_sorted(&i, 0.975),
                s_lower: quantile_sorted(&s, 0.025),
                s_median: quantile_sorted(&s, 0.5),
                s_upper: quantile_sorted(&s, 0.975),
            }
        })
        .collect()
}

/// One Gillespie run per retained draw; run `d` uses the stream
/// `(seed, "predictive", d)`.
pub fn posterior_predictive(sample: &PosteriorSample, settings: &PredictiveSettings) -> Result<PredictiveEnsemble> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let population = settings.initial.population();
    let n = sample.len();
    let take = settings.max_draws.unwrap_or(n).clamp(1, n);
    let mut series = Vec::with_capacity(take);
    for d in 0..take {
        let idx = d * n / take;
        let cfg = SimConfig {
            initial: settings.initial,
            params: sample.params(idx, population)?,
            seasonality: settings.seasonality.clone(),
            horizon: settings.horizon,
            grid_step: settings.grid_step,
            seed: 0,
        };
        let mut rng = stream(settings.seed, "predictive", d as u64);
        let (_, grid) = simulate_with(&cfg, &mut rng, false)?;
        series.push(grid);
    }
    let bands = predictive_bands(&series, settings.grid_step);
    Ok(PredictiveEnsemble { series, bands })
}

/// Fraction of observed points inside the 95% band for I.
pub fn band_coverage(bands: &[BandRow], observed: &GridSeries) -> f64 {
    let n = bands.len().min(observed.len());
    if n == 0 {
        return f64::NAN;
    }
    let inside = (0..n)
        .filter(|&k| {
            let i = observed.i[k] as f64;
            bands[k].i_lower <= i && i <= bands[k].i_upper
        })
        .count();
    inside as f64 / n as f64
}

const BAND_HEADER: [&str; 7] = ["time", "I_q025", "I_q500", "I_q975", "S_q025", "S_q500", "S_q975"];

pub fn write_bands_csv<W: Write>(bands: &[BandRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BAND_HEADER)?;
    for b in bands {
        w.write_record([
            fmt_time(b.time),
            format!("{}", b.i_lower),
            format!("{}", b.i_median),
            format!("{}", b.i_upper),
            format!("{}", b.s_lower),
            format!("{}", b.s_median),
            format!("{}", b.s_upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bands_csv<R: Read>(reader: R) -> Result<Vec<BandRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    if rd.headers()?.iter().ne(BAND_HEADER) {
        return Err(Error::Data(format!("band CSV header must be {}", BAND_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| Error::Data(format!("bad number `{x}`: {e}"))))
            .collect::<Result<_>>()?;
        out.push(BandRow {
            time: v[0],
            i_lower: v[1],
            i_median: v[2],
            i_upper: v[3],
            s_lower: v[4],
            s_median: v[5],
            s_upper: v[6],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn point_mass(n: usize, alpha: f64, beta: Vec<f64>, gamma: f64) -> PosteriorSample {
        let mut draw = vec![alpha];
        let k = beta.len();
        draw.extend(beta);
        draw.push(gamma);
        let mut names = vec!["alpha".to_string()];
        names.extend((1..=k).map(|j| format!("beta_{j}")));
        names.push("gamma".into());
        PosteriorSample {
            free: vec![true; names.len()],
            names,
            draws: vec![draw; n],
            log_posterior: vec![0.0; n],
            iterations: (1..=n).collect(),
            acceptance_rate: 0.25,
        }
    }

    fn settings(seed: u64) -> PredictiveSettings {
        PredictiveSettings {
            initial: SirState::new(190, 10, 0),
            horizon: Horizon::Until(10.0),
            grid_step: 1.0,
            seasonality: SeasonalityMap::constant(),
            seed,
            max_draws: None,
        }
    }

    #[test]
    fn point_mass_matches_plain_simulation() {
        let sample = point_mass(40, 0.9, vec![2.0], 1.0);
        let ens = posterior_predictive(&sample, &settings(8)).unwrap();
        let params = ModelParams::constant(0.9, 2.0, 1.0, 200).unwrap();
        for (d, g) in ens.series.iter().enumerate() {
            let cfg = SimConfig {
                initial: SirState::new(190, 10, 0),
                params: params.clone(),
                seasonality: SeasonalityMap::constant(),
                horizon: Horizon::Until(10.0),
                grid_step: 1.0,
                seed: 0,
            };
            let mut rng = stream(8, "predictive", d as u64);
            assert_eq!(&simulate_with(&cfg, &mut rng, false).unwrap().1, g);
        }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let sample = point_mass(30, 0.9, vec![2.0], 1.0);
        let a = posterior_predictive(&sample, &settings(2)).unwrap();
        let b = posterior_predictive(&sample, &settings(2)).unwrap();
        assert_eq!(a.bands, b.bands);
        let mut buf = Vec::new();
        write_bands_csv(&a.bands, &mut buf).unwrap();
        let back = read_bands_csv(&buf[..]).unwrap();
        assert_eq!(back, a.bands);
        let mut again = Vec::new();
        write_bands_csv(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn bands_widen_with_posterior_spread() {
        // two-point beta posterior with the same mean and growing spread
        let width_at = |spread: f64| {
            let mut s = point_mass(400, 1.0, vec![1.5], 1.0);
            for (j, d) in s.draws.iter_mut().enumerate() {
                d[1] = if j % 2 == 0 { 1.5 - spread } else { 1.5 + spread };
            }
            let ens = posterior_predictive(&s, &settings(5)).unwrap();
            ens.bands[4].i_upper - ens.bands[4].i_lower
        };
        let w: Vec<f64> = [0.0, 0.4, 0.8].iter().map(|&x| width_at(x)).collect();
        assert!(w[0] < w[1] && w[1] < w[2], "{w:?}");
    }

    #[test]
    fn empty_sample_errors() {
        let s = point_mass(0, 1.0, vec![1.0], 1.0);
        assert!(posterior_predictive(&s, &settings(1)).is_err());
    }
}
