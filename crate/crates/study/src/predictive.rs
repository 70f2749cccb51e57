//! Posterior predictive checks: whole-trajectory bands from an initial state,
//! or one-interval-ahead bands along an observed path.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sirmix_core::inference::{
    band_coverage, fit, posterior_predictive, write_bands_csv, BandRow, ChainConfig, FitConfig, Fitter, PathData,
    PosteriorSample, PredictiveSettings,
};
use sirmix_core::rng::stream;
use sirmix_core::sim::{simulate_with, GridSeries, Horizon, SimConfig};
use sirmix_core::{Error, Result, SeasonalityMap};

use crate::coverage::{simulate_replicate, CoverageSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PredictiveMode {
    /// Simulate each draw from the first observed state over the whole window.
    #[default]
    Trajectory,
    /// Simulate each interval from its observed starting state.
    OneStep,
}

/// Observed series and per-method posterior draws read from files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSources {
    /// Grid series CSV (`time,S,I,R,nSI,nIR`).
    pub observed: PathBuf,
    /// Draws CSV per method name.
    pub draws: BTreeMap<String, PathBuf>,
    #[serde(default = "SeasonalityMap::constant")]
    pub seasonality: SeasonalityMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictiveSpec {
    pub mode: PredictiveMode,
    pub max_draws: usize,
    /// When absent, one outbreak is simulated from the coverage setup and fitted.
    pub sources: Option<PredictiveSources>,
    pub fitters: Vec<Fitter>,
    pub chain: ChainConfig,
}

impl Default for PredictiveSpec {
    fn default() -> Self {
        PredictiveSpec {
            mode: PredictiveMode::Trajectory,
            max_draws: 200,
            sources: None,
            fitters: vec![Fitter::BayesSir, Fitter::BayesTsir],
            chain: ChainConfig {
                iterations: 2_500,
                burn_in: 750,
                thin: 1,
                seed: 0,
            },
        }
    }
}

/// `(time, observed I)` pairs the bands are compared against.
fn observed_points(path: &PathData, mode: PredictiveMode) -> Vec<(f64, u64)> {
    let dt = path.elapsed;
    match mode {
        PredictiveMode::Trajectory => std::iter::once((0.0, path.from[0].i))
            .chain(path.to.iter().enumerate().map(|(t, s)| ((t + 1) as f64 * dt, s.i)))
            .collect(),
        PredictiveMode::OneStep => path.to.iter().enumerate().map(|(t, s)| ((t + 1) as f64 * dt, s.i)).collect(),
    }
}

/// Bands of `S` and `I` at the end of each interval, simulating every interval
/// from its observed start. Draw `d` on interval `t` uses the stream
/// `(seed, "predictive-step/t", d)`.
pub fn one_step_bands(
    sample: &PosteriorSample,
    path: &PathData,
    seasonality: &SeasonalityMap,
    seed: u64,
    max_draws: usize,
) -> Result<Vec<BandRow>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let population = path.population();
    let n = sample.len();
    let take = max_draws.clamp(1, n);
    let params: Vec<_> = (0..take).map(|d| sample.params(d * n / take, population)).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(path.intervals());
    for t in 0..path.intervals() {
        let label = format!("predictive-step/{}", path.first_period + t);
        let mut finals = Vec::with_capacity(take);
        for (d, p) in params.iter().enumerate() {
            let beta = p.beta(seasonality.beta_index(path.first_period + t))?;
            let cfg = SimConfig {
                initial: path.from[t],
                params: sirmix_core::ModelParams::constant(p.alpha(), beta, p.gamma(), population)?,
                seasonality: SeasonalityMap::constant(),
                horizon: Horizon::Until(path.elapsed),
                grid_step: path.elapsed,
                seed: 0,
            };
            let mut rng = stream(seed, &label, d as u64);
            let (_, g) = simulate_with(&cfg, &mut rng, false)?;
            finals.push(g);
        }
        let mut band = sirmix_core::inference::predictive_bands(&finals, path.elapsed);
        let mut last = band.pop().expect("one-interval simulations have two grid points");
        last.time = (t + 1) as f64 * path.elapsed;
        rows.push(last);
    }
    Ok(rows)
}

/// Fraction of observed points inside the 95% band for `I`.
pub fn path_band_coverage(bands: &[BandRow], path: &PathData, mode: PredictiveMode) -> f64 {
    let obs = observed_points(path, mode);
    let n = bands.len().min(obs.len());
    if n == 0 {
        return f64::NAN;
    }
    let inside = (0..n)
        .filter(|&k| {
            let i = obs[k].1 as f64;
            bands[k].i_lower <= i && i <= bands[k].i_upper
        })
        .count();
    inside as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodBands {
    pub method: String,
    pub bands: Vec<BandRow>,
    pub coverage_95: f64,
}

pub fn bands_for(
    method: &str,
    sample: &PosteriorSample,
    observed: &GridSeries,
    seasonality: &SeasonalityMap,
    mode: PredictiveMode,
    seed: u64,
    max_draws: usize,
) -> Result<MethodBands> {
    let path = PathData::from_grid(observed)?;
    let bands = match mode {
        PredictiveMode::Trajectory => {
            let settings = PredictiveSettings {
                initial: observed.state(0),
                horizon: Horizon::Until(*observed.times.last().unwrap() - observed.times[0]),
                grid_step: path.elapsed,
                seasonality: seasonality.clone(),
                seed,
                max_draws: Some(max_draws),
            };
            let ens = posterior_predictive(sample, &settings)?;
            ens.bands
        }
        PredictiveMode::OneStep => one_step_bands(sample, &path, seasonality, seed, max_draws)?,
    };
    let coverage_95 = match mode {
        PredictiveMode::Trajectory => band_coverage(&bands, observed),
        PredictiveMode::OneStep => path_band_coverage(&bands, &path, mode),
    };
    Ok(MethodBands {
        method: method.to_string(),
        bands,
        coverage_95,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveRun {
    pub observed: GridSeries,
    pub methods: Vec<MethodBands>,
}

pub fn run_posterior_predictive(spec: &PredictiveSpec, seed: u64) -> Result<PredictiveRun> {
    if spec.max_draws == 0 {
        return Err(Error::Config("max_draws must be >= 1".into()));
    }
    match &spec.sources {
        Some(src) => {
            let observed = GridSeries::read_csv(fs::File::open(&src.observed)?)?;
            let mut methods = Vec::new();
            for (d, (name, file)) in src.draws.iter().enumerate() {
                let sample = PosteriorSample::read_csv(fs::File::open(file)?)?;
                let s = sirmix_core::rng::derive_seed(seed, "predictive-method", d as u64);
                methods.push(bands_for(name, &sample, &observed, &src.seasonality, spec.mode, s, spec.max_draws)?);
            }
            Ok(PredictiveRun { observed, methods })
        }
        None => {
            let coverage = CoverageSpec::default();
            let (observed, _, _) = simulate_replicate(&coverage, seed, 0)?;
            let path = PathData::from_grid(&observed)?;
            let mut methods = Vec::new();
            for (d, &f) in spec.fitters.iter().enumerate() {
                let cfg = FitConfig {
                    chain: ChainConfig {
                        seed: sirmix_core::rng::derive_seed(seed, "predictive-fit", d as u64),
                        ..spec.chain
                    },
                    ..FitConfig::for_fitter(f)
                };
                let sample = fit(&path, &cfg)?;
                let s = sirmix_core::rng::derive_seed(seed, "predictive-method", d as u64);
                methods.push(bands_for(
                    f.name(),
                    &sample,
                    &observed,
                    &SeasonalityMap::constant(),
                    spec.mode,
                    s,
                    spec.max_draws,
                )?);
            }
            Ok(PredictiveRun { observed, methods })
        }
    }
}

pub fn write_outputs(run: &PredictiveRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let path = dir.join("observed_series.csv");
    let mut buf = Vec::new();
    run.observed.write_csv(&mut buf)?;
    fs::write(&path, buf)?;
    files.push(path);
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["method", "points", "coverage_95"])?;
    for m in &run.methods {
        let path = dir.join(format!("predictive_{}.csv", m.method));
        let mut buf = Vec::new();
        write_bands_csv(&m.bands, &mut buf)?;
        fs::write(&path, buf)?;
        files.push(path);
        summary.write_record([m.method.clone(), m.bands.len().to_string(), format!("{:.4}", m.coverage_95)])?;
    }
    let path = dir.join("predictive_summary.csv");
    fs::write(&path, crate::finish_csv(summary)?)?;
    files.push(path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sirmix_core::SirState;

    fn point_mass(alpha: f64, beta: f64, gamma: f64, n: usize) -> PosteriorSample {
        PosteriorSample {
            names: vec!["alpha".into(), "beta_1".into(), "gamma".into()],
            free: vec![true; 3],
            draws: vec![vec![alpha, beta, gamma]; n],
            log_posterior: vec![0.0; n],
            iterations: (1..=n).collect(),
            acceptance_rate: 0.3,
        }
    }

    #[test]
    fn one_step_bands_bracket_a_frozen_path() {
        // gamma tiny and beta tiny: nothing happens in one interval
        let a = SirState::new(90, 10, 0);
        let path = PathData::new(vec![a, a, a], 1.0).unwrap();
        let s = point_mass(1.0, 1e-9, 1e-9, 20);
        let bands = one_step_bands(&s, &path, &SeasonalityMap::constant(), 3, 20).unwrap();
        assert_eq!(bands.len(), 2);
        assert_eq!(bands[1].time, 2.0);
        assert!(bands.iter().all(|b| b.i_lower == 10.0 && b.i_upper == 10.0));
        assert_eq!(path_band_coverage(&bands, &path, PredictiveMode::OneStep), 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = SirState::new(90, 10, 0);
        let b = SirState::new(84, 12, 4);
        let path = PathData::new(vec![a, b], 1.0).unwrap();
        let s = point_mass(0.9, 2.0, 0.5, 30);
        let x = one_step_bands(&s, &path, &SeasonalityMap::constant(), 5, 30).unwrap();
        let y = one_step_bands(&s, &path, &SeasonalityMap::constant(), 5, 30).unwrap();
        assert_eq!(x, y);
    }
}
