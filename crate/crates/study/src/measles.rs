//! Seasonal transmission from biweekly incidence: rescale, reconstruct,
//! then fit under a school-calendar and a four-week-block seasonality.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sirmix_core::engines::EngineOptions;
use sirmix_core::inference::{
    fit, summarize, write_bands_csv, BandRow, ChainConfig, ChainSummary, FitConfig, Fitter, PathData,
    PosteriorSample, ProposalConfig,
};
use sirmix_core::reconstruction::{
    integerize, reconstruct, IntegerSeries, IntegerizeConfig, ObservedSeries, ReconstructedSeries,
    ReconstructionConfig,
};
use sirmix_core::rng::derive_seed;
use sirmix_core::{Error, Result, SeasonalityMap};

use crate::predictive::{one_step_bands, path_band_coverage, PredictiveMode};

/// Bundled surrogate series, see `data/README.md`.
pub const BUNDLED_SERIES: &str = include_str!("../data/london_surrogate_1944_1951.csv");

pub fn bundled_series() -> Result<ObservedSeries> {
    ObservedSeries::read_csv(BUNDLED_SERIES.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeasonModel {
    /// Two rates: school break and school term.
    Schoolterm,
    /// Thirteen rates, one per four-week block.
    Standard,
}

impl SeasonModel {
    pub fn name(self) -> &'static str {
        match self {
            SeasonModel::Schoolterm => "schoolterm",
            SeasonModel::Standard => "standard",
        }
    }

    /// Label of biweek `b` (1 to 26) under this model.
    pub fn label(self, biweek: u32, school_breaks: &[u32]) -> String {
        match self {
            SeasonModel::Schoolterm if school_breaks.contains(&biweek) => "schoolbreak".into(),
            SeasonModel::Schoolterm => "schoolterm".into(),
            SeasonModel::Standard => format!("{:02}", (biweek - 1) / 2 + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeaslesSpec {
    /// Observed series CSV; the bundled series when absent.
    pub data: Option<PathBuf>,
    pub rescale: f64,
    pub reconstruction: ReconstructionConfig,
    pub integerize: IntegerizeConfig,
    pub models: Vec<SeasonModel>,
    pub fitters: Vec<Fitter>,
    /// Biweeks of the year (1 to 26) that fall in school holidays.
    pub school_breaks: Vec<u32>,
    pub chain: ChainConfig,
    pub proposal: ProposalConfig,
    pub engine_options: EngineOptions,
    /// Posterior draws used for one-step predictive bands; 0 skips them.
    pub predictive_draws: usize,
}

impl Default for MeaslesSpec {
    fn default() -> Self {
        MeaslesSpec {
            data: None,
            rescale: 100.0,
            reconstruction: ReconstructionConfig::default(),
            integerize: IntegerizeConfig::default(),
            models: vec![SeasonModel::Schoolterm, SeasonModel::Standard],
            fitters: vec![Fitter::BayesSir, Fitter::BayesTsir],
            school_breaks: vec![1, 8, 16, 17, 18, 26],
            chain: ChainConfig {
                iterations: 5_000,
                burn_in: 1_500,
                thin: 1,
                seed: 0,
            },
            proposal: ProposalConfig::default(),
            engine_options: EngineOptions::default(),
            predictive_draws: 100,
        }
    }
}

/// Biweek of year per period, from numeric labels or the position in the series.
pub fn biweeks(obs: &ObservedSeries) -> Result<Vec<u32>> {
    match &obs.labels {
        Some(labels) => labels
            .iter()
            .enumerate()
            .map(|(t, l)| match l.trim().parse::<u32>() {
                Ok(b) if (1..=26).contains(&b) => Ok(b),
                _ => Err(Error::Data(format!("period {t}: label `{l}` is not a biweek between 1 and 26"))),
            })
            .collect(),
        None => Ok((0..obs.len()).map(|t| (t % 26) as u32 + 1).collect()),
    }
}

pub fn seasonality_for(model: SeasonModel, biweeks: &[u32], school_breaks: &[u32]) -> Result<SeasonalityMap> {
    let labels: Vec<String> = biweeks.iter().map(|&b| model.label(b, school_breaks)).collect();
    SeasonalityMap::from_labels(&labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeaslesFit {
    pub model: SeasonModel,
    pub fitter: Fitter,
    pub sample: PosteriorSample,
    pub summary: ChainSummary,
    pub predictive: Option<(Vec<BandRow>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeaslesRun {
    pub rescaled: ObservedSeries,
    pub reconstructed: ReconstructedSeries,
    pub integer: IntegerSeries,
    pub fits: Vec<MeaslesFit>,
}

impl MeaslesRun {
    pub fn get(&self, model: SeasonModel, fitter: Fitter) -> Option<&MeaslesFit> {
        self.fits.iter().find(|f| f.model == model && f.fitter == fitter)
    }
}

pub fn load_observed(spec: &MeaslesSpec) -> Result<ObservedSeries> {
    match &spec.data {
        Some(p) => ObservedSeries::read_csv(fs::File::open(p)?),
        None => bundled_series(),
    }
}

pub fn prepare(spec: &MeaslesSpec, obs: &ObservedSeries) -> Result<(ObservedSeries, ReconstructedSeries, IntegerSeries)> {
    let rescaled = obs.rescaled(spec.rescale)?;
    let rec = reconstruct(&rescaled, &spec.reconstruction)?;
    let integer = integerize(&rec, &spec.integerize, 1.0)?;
    Ok((rescaled, rec, integer))
}

pub fn run_measles_study(spec: &MeaslesSpec, obs: &ObservedSeries, seed: u64) -> Result<MeaslesRun> {
    if spec.models.is_empty() || spec.fitters.is_empty() {
        return Err(Error::Config("measles study needs at least one model and one fitter".into()));
    }
    let weeks = biweeks(obs)?;
    let (rescaled, reconstructed, integer) = prepare(spec, obs)?;
    let path: &PathData = &integer.path;
    let mut fits = Vec::new();
    for (mi, &model) in spec.models.iter().enumerate() {
        let seasonality = seasonality_for(model, &weeks, &spec.school_breaks)?;
        for (fi, &fitter) in spec.fitters.iter().enumerate() {
            let label = format!("measles/{}/{}", model.name(), fitter.name());
            let cfg = FitConfig {
                seasonality: seasonality.clone(),
                chain: ChainConfig {
                    seed: derive_seed(seed, &label, 0),
                    ..spec.chain
                },
                proposal: spec.proposal,
                engine_options: spec.engine_options,
                ..FitConfig::for_fitter(fitter)
            };
            let sample = fit(path, &cfg)?;
            let summary = summarize(&sample, &[0.95])?;
            let predictive = if spec.predictive_draws > 0 {
                let s = derive_seed(seed, "measles-predictive", (mi * spec.fitters.len() + fi) as u64);
                let bands = one_step_bands(&sample, path, &seasonality, s, spec.predictive_draws)?;
                let cov = path_band_coverage(&bands, path, PredictiveMode::OneStep);
                Some((bands, cov))
            } else {
                None
            };
            fits.push(MeaslesFit {
                model,
                fitter,
                sample,
                summary,
                predictive,
            });
        }
    }
    Ok(MeaslesRun {
        rescaled,
        reconstructed,
        integer,
        fits,
    })
}

fn or_na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

/// Mixing and removal rate medians with 95% intervals, one row per model and method.
pub fn mixing_table_csv(run: &MeaslesRun) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "seasonality",
        "method",
        "alpha_median",
        "alpha_lower_95",
        "alpha_upper_95",
        "gamma_median",
        "gamma_lower_95",
        "gamma_upper_95",
    ])?;
    for f in &run.fits {
        let a = f.summary.get("alpha");
        let g = f.summary.get("gamma");
        w.write_record([
            f.model.name().to_string(),
            f.fitter.name().to_string(),
            or_na(a.map(|p| p.median)),
            or_na(a.and_then(|p| p.interval(0.95)).map(|c| c.lower)),
            or_na(a.and_then(|p| p.interval(0.95)).map(|c| c.upper)),
            or_na(g.map(|p| p.median)),
            or_na(g.and_then(|p| p.interval(0.95)).map(|c| c.lower)),
            or_na(g.and_then(|p| p.interval(0.95)).map(|c| c.upper)),
        ])?;
    }
    crate::finish_csv(w)
}

/// Posterior mean and 95% interval of every infection rate.
pub fn infection_rates_csv(run: &MeaslesRun) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seasonality", "method", "parameter", "mean", "median", "lower_95", "upper_95"])?;
    for f in &run.fits {
        for p in f.summary.params.iter().filter(|p| p.name.starts_with("beta")) {
            let ci = p.interval(0.95);
            w.write_record([
                f.model.name().to_string(),
                f.fitter.name().to_string(),
                p.name.clone(),
                format!("{:.6}", p.mean),
                format!("{:.6}", p.median),
                or_na(ci.map(|c| c.lower)),
                or_na(ci.map(|c| c.upper)),
            ])?;
        }
    }
    crate::finish_csv(w)
}

/// Ratio of posterior median break to term rates, per schoolterm fit.
pub fn break_term_ratio(fit: &MeaslesFit) -> Option<f64> {
    let b = fit.summary.get("beta_schoolbreak")?.median;
    let t = fit.summary.get("beta_schoolterm")?.median;
    Some(b / t)
}

pub fn write_outputs(run: &MeaslesRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    let mut buf = Vec::new();
    run.rescaled.write_csv(&mut buf)?;
    put("rescaled_series.csv".into(), buf)?;
    let mut buf = Vec::new();
    run.reconstructed.write_csv(&mut buf)?;
    put("reconstructed.csv".into(), buf)?;
    let mut buf = Vec::new();
    run.reconstructed.write_meta(&mut buf)?;
    put("reconstructed.json".into(), buf)?;
    put("repairs.json".into(), serde_json::to_vec_pretty(&run.integer.repairs)?)?;
    put("mixing_recovery_summary.csv".into(), mixing_table_csv(run)?)?;
    put("infection_rates.csv".into(), infection_rates_csv(run)?)?;
    for f in &run.fits {
        let stem = format!("{}_{}", f.model.name(), f.fitter.name());
        let mut buf = Vec::new();
        f.sample.write_csv(&mut buf)?;
        put(format!("draws_{stem}.csv"), buf)?;
        put(format!("summary_{stem}.json"), serde_json::to_vec_pretty(&f.summary)?)?;
        if let Some((bands, _)) = &f.predictive {
            let mut buf = Vec::new();
            write_bands_csv(bands, &mut buf)?;
            put(format!("predictive_{stem}.csv"), buf)?;
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seasonality", "method", "acceptance_rate", "break_term_ratio", "predictive_coverage_95"])?;
    for f in &run.fits {
        w.write_record([
            f.model.name().to_string(),
            f.fitter.name().to_string(),
            format!("{:.4}", f.summary.acceptance_rate),
            or_na(break_term_ratio(f)),
            or_na(f.predictive.as_ref().map(|p| p.1)),
        ])?;
    }
    put("fit_diagnostics.csv".into(), crate::finish_csv(w)?)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_per_model() {
        let breaks = [1, 8, 16, 17, 18, 26];
        assert_eq!(SeasonModel::Schoolterm.label(8, &breaks), "schoolbreak");
        assert_eq!(SeasonModel::Schoolterm.label(9, &breaks), "schoolterm");
        assert_eq!(SeasonModel::Standard.label(1, &breaks), "01");
        assert_eq!(SeasonModel::Standard.label(2, &breaks), "01");
        assert_eq!(SeasonModel::Standard.label(26, &breaks), "13");
        let weeks: Vec<u32> = (1..=26).collect();
        let st = seasonality_for(SeasonModel::Standard, &weeks, &breaks).unwrap();
        assert_eq!(st.k(), 13);
        let sc = seasonality_for(SeasonModel::Schoolterm, &weeks, &breaks).unwrap();
        assert_eq!(sc.names(), ["beta_schoolbreak", "beta_schoolterm"]);
    }

    #[test]
    fn bundled_series_reconstructs() {
        let obs = bundled_series().unwrap();
        assert_eq!(obs.len(), 208);
        let (rescaled, rec, integer) = prepare(&MeaslesSpec::default(), &obs).unwrap();
        assert!(rescaled.cases.iter().sum::<u64>() > 0);
        assert!(rec.meta.rho > 0.0 && rec.meta.rho <= 1.0);
        assert!(rec.susceptible.iter().all(|&s| s > 0.0));
        assert_eq!(integer.path.intervals(), 207);
    }

    #[test]
    fn bad_labels_are_data_errors() {
        let mut obs = bundled_series().unwrap();
        obs.labels.as_mut().unwrap()[3] = "27".into();
        assert!(matches!(biweeks(&obs), Err(Error::Data(_))));
    }
}
