//! Frequentist coverage of posterior credible intervals over simulated
//! outbreaks, for each fitter.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sirmix_core::engines::EngineOptions;
use sirmix_core::inference::{
    fit, summarize, ChainConfig, ChainSummary, FitConfig, Fitter, PathData, PosteriorSample, ProposalConfig,
};
use sirmix_core::rng::derive_seed;
use sirmix_core::sim::{simulate_with, GridSeries, Horizon, SimConfig};
use sirmix_core::{Error, ModelParams, Result, SeasonalityMap, SirState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub alpha: f64,
    /// Infection rate in the `(beta / N) S I^alpha` convention.
    pub beta: f64,
    pub gamma: f64,
    pub s0: u64,
    pub i0: u64,
}

impl Default for Truth {
    fn default() -> Self {
        Truth {
            alpha: 0.8,
            beta: 4.5,
            gamma: 1.0,
            s0: 999,
            i0: 1,
        }
    }
}

impl Truth {
    pub fn value(&self, parameter: &str) -> Option<f64> {
        match parameter {
            "alpha" => Some(self.alpha),
            "beta" | "beta_1" => Some(self.beta),
            "gamma" => Some(self.gamma),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageSpec {
    pub replicates: usize,
    pub truth: Truth,
    pub grid_step: f64,
    /// Simulations with fewer total infections are redrawn.
    pub min_infections: u64,
    /// Give up on a replicate after this many redraws.
    pub max_redraws: usize,
    pub fitters: Vec<Fitter>,
    pub chain: ChainConfig,
    pub proposal: ProposalConfig,
    pub engine_options: EngineOptions,
    pub levels: Vec<f64>,
}

impl Default for CoverageSpec {
    fn default() -> Self {
        CoverageSpec {
            replicates: 50,
            truth: Truth::default(),
            grid_step: 1.0,
            min_infections: 50,
            max_redraws: 10_000,
            fitters: Fitter::ALL.to_vec(),
            chain: ChainConfig {
                iterations: 2_500,
                burn_in: 750,
                thin: 1,
                seed: 0,
            },
            proposal: ProposalConfig::default(),
            engine_options: EngineOptions::default(),
            levels: vec![0.80, 0.90, 0.95],
        }
    }
}

impl CoverageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.fitters.is_empty() || self.levels.is_empty() {
            return Err(Error::Config("fitters and levels must be nonempty".into()));
        }
        if !self.levels.contains(&0.95) {
            return Err(Error::Config("levels must include 0.95".into()));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config("levels must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn sim_config(&self) -> Result<SimConfig> {
        let t = &self.truth;
        let n = t.s0 + t.i0;
        Ok(SimConfig {
            initial: SirState::new(t.s0, t.i0, 0),
            params: ModelParams::constant(t.alpha, t.beta, t.gamma, n)?,
            seasonality: SeasonalityMap::constant(),
            horizon: Horizon::Extinction,
            grid_step: self.grid_step,
            seed: 0,
        })
    }

    fn fit_config(&self, fitter: Fitter, seed: u64) -> FitConfig {
        FitConfig {
            chain: ChainConfig { seed, ..self.chain },
            proposal: self.proposal,
            engine_options: self.engine_options,
            ..FitConfig::for_fitter(fitter)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub fitter: Fitter,
    pub summary: Option<ChainSummary>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub sim_seed: u64,
    /// Minor outbreaks discarded before this one.
    pub redraws: usize,
    pub total_infections: u64,
    pub intervals: usize,
    pub fits: Vec<FitRecord>,
}

/// Seeds of replicate `r`: the `a`-th simulation attempt uses
/// `derive_seed(seed, "coverage-sim/r", a)`, and fitter `f` uses
/// `derive_seed(seed, "coverage-fit/f", r)`.
pub fn simulate_replicate(spec: &CoverageSpec, seed: u64, r: usize) -> Result<(GridSeries, u64, usize)> {
    let cfg = spec.sim_config()?;
    let label = format!("coverage-sim/{r}");
    for attempt in 0..=spec.max_redraws {
        let s = derive_seed(seed, &label, attempt as u64);
        let mut rng = sirmix_core::rng::rng_from_seed(s);
        let (_, grid) = simulate_with(&cfg, &mut rng, false)?;
        if grid.total_infections() >= spec.min_infections && grid.len() >= 2 {
            return Ok((grid, s, attempt));
        }
    }
    Err(Error::Config(format!(
        "no outbreak with at least {} infections in {} attempts",
        spec.min_infections,
        spec.max_redraws + 1
    )))
}

pub fn fit_seed(seed: u64, fitter: Fitter, r: usize) -> u64 {
    derive_seed(seed, &format!("coverage-fit/{}", fitter.name()), r as u64)
}

/// Simulates and fits replicate `r`, also returning the series and samples.
pub fn run_replicate(
    spec: &CoverageSpec,
    seed: u64,
    r: usize,
) -> Result<(Replicate, GridSeries, Vec<Option<PosteriorSample>>)> {
    let (grid, sim_seed, redraws) = simulate_replicate(spec, seed, r)?;
    let data = PathData::from_grid(&grid)?;
    let mut fits = Vec::new();
    let mut samples = Vec::new();
    for &fitter in &spec.fitters {
        let start = Instant::now();
        let cfg = spec.fit_config(fitter, fit_seed(seed, fitter, r));
        let outcome = fit(&data, &cfg).and_then(|s| summarize(&s, &spec.levels).map(|m| (s, m)));
        let seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok((s, m)) => {
                fits.push(FitRecord {
                    fitter,
                    summary: Some(m),
                    error: None,
                    seconds,
                });
                samples.push(Some(s));
            }
            Err(e) => {
                fits.push(FitRecord {
                    fitter,
                    summary: None,
                    error: Some(e.to_string()),
                    seconds,
                });
                samples.push(None);
            }
        }
    }
    let rep = Replicate {
        index: r,
        sim_seed,
        redraws,
        total_infections: grid.total_infections(),
        intervals: data.intervals(),
        fits,
    };
    Ok((rep, grid, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub parameter: String,
    pub method: Fitter,
    pub truth: f64,
    pub fits: usize,
    pub rmse: f64,
    pub mean_width_95: f64,
    /// `(level, coverage)` in ascending level order.
    pub coverage: Vec<(f64, f64)>,
}

impl CoverageRow {
    pub fn coverage_at(&self, level: f64) -> Option<f64> {
        self.coverage.iter().find(|(l, _)| (l - level).abs() < 1e-9).map(|c| c.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replicates: usize,
    pub total_redraws: usize,
    /// Failed fits per method; these replicates are excluded from that method's rows.
    pub failures: BTreeMap<String, usize>,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn row(&self, parameter: &str, method: Fitter) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.parameter == parameter && r.method == method)
    }
}

/// Display name of a sampled parameter in the report.
fn report_name(name: &str) -> &str {
    if name.starts_with("beta") {
        "beta"
    } else {
        name
    }
}

pub fn aggregate(spec: &CoverageSpec, replicates: &[Replicate]) -> CoverageReport {
    let mut levels = spec.levels.clone();
    levels.sort_by(|a, b| a.total_cmp(b));
    let mut failures = BTreeMap::new();
    let mut rows = Vec::new();
    for &method in &spec.fitters {
        let summaries: Vec<&ChainSummary> = replicates
            .iter()
            .filter_map(|r| r.fits.iter().find(|f| f.fitter == method))
            .filter_map(|f| f.summary.as_ref())
            .collect();
        failures.insert(method.name().to_string(), replicates.len() - summaries.len());
        let Some(first) = summaries.first() else { continue };
        for p in &first.params {
            let name = report_name(&p.name).to_string();
            let Some(truth) = spec.truth.value(&p.name) else { continue };
            let ps: Vec<_> = summaries.iter().filter_map(|s| s.get(&p.name)).collect();
            let n = ps.len() as f64;
            let rmse = (ps.iter().map(|q| (q.median - truth).powi(2)).sum::<f64>() / n).sqrt();
            let mean_width_95 = ps.iter().filter_map(|q| q.interval(0.95)).map(|c| c.width()).sum::<f64>() / n;
            let coverage = levels
                .iter()
                .map(|&l| {
                    let hit = ps
                        .iter()
                        .filter(|q| q.interval(l).is_some_and(|c| c.contains(truth)))
                        .count();
                    (l, hit as f64 / n)
                })
                .collect();
            rows.push(CoverageRow {
                parameter: name,
                method,
                truth,
                fits: ps.len(),
                rmse,
                mean_width_95,
                coverage,
            });
        }
    }
    CoverageReport {
        replicates: replicates.len(),
        total_redraws: replicates.iter().map(|r| r.redraws).sum(),
        failures,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRun {
    pub replicates: Vec<Replicate>,
    pub report: CoverageReport,
    /// Series and samples of replicate 0, for the example-fit figure.
    pub example: Option<(GridSeries, Vec<Option<PosteriorSample>>)>,
}

/// Replicates run in parallel on the current rayon pool and are collected
/// in index order, so results do not depend on the thread count.
pub fn run_coverage_study(spec: &CoverageSpec, seed: u64) -> Result<CoverageRun> {
    spec.validate()?;
    let results: Vec<_> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(spec, seed, r))
        .collect::<Result<_>>()?;
    let mut replicates = Vec::with_capacity(results.len());
    let mut example = None;
    for (idx, (rep, grid, samples)) in results.into_iter().enumerate() {
        if idx == 0 {
            example = Some((grid, samples));
        }
        replicates.push(rep);
    }
    let report = aggregate(spec, &replicates);
    Ok(CoverageRun {
        replicates,
        report,
        example,
    })
}

/// Rows of statistics by parameter, one column per method.
pub fn table_csv(report: &CoverageReport, fitters: &[Fitter]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["parameter".to_string(), "statistic".to_string()];
    header.extend(fitters.iter().map(|f| f.name().to_string()));
    w.write_record(&header)?;
    let mut params: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !params.contains(&r.parameter.as_str()) {
            params.push(&r.parameter);
        }
    }
    let levels: Vec<f64> = report.rows.first().map(|r| r.coverage.iter().map(|c| c.0).collect()).unwrap_or_default();
    for p in params {
        let mut stats: Vec<(String, Box<dyn Fn(&CoverageRow) -> f64>)> = vec![
            ("rmse".into(), Box::new(|r: &CoverageRow| r.rmse)),
            ("mean_width_95".into(), Box::new(|r: &CoverageRow| r.mean_width_95)),
        ];
        for &l in &levels {
            stats.push((
                format!("coverage_{}", (l * 100.0).round()),
                Box::new(move |r: &CoverageRow| r.coverage_at(l).unwrap_or(f64::NAN)),
            ));
        }
        for (label, f) in &stats {
            let mut row = vec![p.to_string(), label.clone()];
            for &m in fitters {
                row.push(report.row(p, m).map_or_else(|| "NA".to_string(), |r| format!("{:.4}", f(r))));
            }
            w.write_record(&row)?;
        }
    }
    crate::finish_csv(w)
}

/// One row per replicate, method and parameter.
pub fn replicates_csv(replicates: &[Replicate], truth: &Truth) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "replicate",
        "sim_seed",
        "redraws",
        "total_infections",
        "intervals",
        "method",
        "parameter",
        "truth",
        "median",
        "lower_95",
        "upper_95",
        "ess",
        "acceptance_rate",
        "error",
    ])?;
    for r in replicates {
        let base = [
            r.index.to_string(),
            r.sim_seed.to_string(),
            r.redraws.to_string(),
            r.total_infections.to_string(),
            r.intervals.to_string(),
        ];
        for f in &r.fits {
            match &f.summary {
                Some(s) => {
                    for p in &s.params {
                        let ci = p.interval(0.95);
                        let mut row = base.to_vec();
                        row.extend([
                            f.fitter.name().to_string(),
                            report_name(&p.name).to_string(),
                            truth.value(&p.name).map_or("NA".into(), |v| format!("{v}")),
                            format!("{}", p.median),
                            ci.map_or("NA".into(), |c| format!("{}", c.lower)),
                            ci.map_or("NA".into(), |c| format!("{}", c.upper)),
                            format!("{:.1}", p.ess),
                            format!("{}", s.acceptance_rate),
                            String::new(),
                        ]);
                        w.write_record(&row)?;
                    }
                }
                None => {
                    let mut row = base.to_vec();
                    row.extend([f.fitter.name().to_string()]);
                    row.extend(std::iter::repeat_n("NA".to_string(), 7));
                    row.push(f.error.clone().unwrap_or_default());
                    w.write_record(&row)?;
                }
            }
        }
    }
    crate::finish_csv(w)
}

pub fn write_outputs(run: &CoverageRun, spec: &CoverageSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    put("coverage_table.csv", table_csv(&run.report, &spec.fitters)?)?;
    put("coverage_replicates.csv", replicates_csv(&run.replicates, &spec.truth)?)?;
    put("coverage_report.json", serde_json::to_vec_pretty(&run.report)?)?;
    if let Some((grid, samples)) = &run.example {
        let mut buf = Vec::new();
        grid.write_csv(&mut buf)?;
        put("example_series.csv", buf)?;
        for (f, s) in spec.fitters.iter().zip(samples) {
            if let Some(s) = s {
                let mut buf = Vec::new();
                s.write_csv(&mut buf)?;
                put(&format!("example_draws_{}.csv", f.name()), buf)?;
            }
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CoverageSpec {
        CoverageSpec {
            replicates: 3,
            fitters: vec![Fitter::BayesTsir],
            chain: ChainConfig {
                iterations: 600,
                burn_in: 200,
                thin: 1,
                seed: 0,
            },
            ..CoverageSpec::default()
        }
    }

    #[test]
    fn redraws_minor_outbreaks() {
        let spec = tiny();
        for r in 0..5 {
            let (grid, _, _) = simulate_replicate(&spec, 11, r).unwrap();
            assert!(grid.total_infections() >= 50);
        }
    }

    #[test]
    fn coverage_is_monotone_and_in_range() {
        let spec = tiny();
        let run = run_coverage_study(&spec, 4).unwrap();
        assert_eq!(run.replicates.len(), 3);
        for row in &run.report.rows {
            for w in row.coverage.windows(2) {
                assert!(w[0].1 <= w[1].1);
            }
            assert!(row.coverage.iter().all(|(_, c)| (0.0..=1.0).contains(c)));
        }
        assert!(run.report.row("alpha", Fitter::BayesTsir).is_some());
        assert!(run.report.row("gamma", Fitter::BayesTsir).is_none());
    }

    #[test]
    fn aggregate_counts_failures() {
        let spec = tiny();
        let reps = vec![Replicate {
            index: 0,
            sim_seed: 1,
            redraws: 2,
            total_infections: 100,
            intervals: 10,
            fits: vec![FitRecord {
                fitter: Fitter::BayesTsir,
                summary: None,
                error: Some("boom".into()),
                seconds: 0.0,
            }],
        }];
        let report = aggregate(&spec, &reps);
        assert_eq!(report.failures["BayesTSIR"], 1);
        assert_eq!(report.total_redraws, 2);
        assert!(report.rows.is_empty());
    }
}
