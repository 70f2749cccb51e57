//! Subcommand implementations. Each one loads its JSON settings, applies the
//! command-line overrides, runs, and records everything in the run manifest.
//!
//! Seeds: the master seed is `--seed`, else the `seed` of the settings file,
//! else 0. Streams are derived from it with `derive_seed(master, label, 0)`:
//! `simulate` and `thinning` for `simulate`, `fit` for the chain of `fit`.
//! Studies derive their own streams from the master seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sirmix_core::engines::{Engine, EngineOptions};
use sirmix_core::inference::{
    fit, summarize, ChainConfig, ChainSummary, FitConfig, Fitter, PathData, Priors, ProposalConfig, DEFAULT_LEVELS,
};
use sirmix_core::reconstruction::{
    integerize, reconstruct, IntegerizeConfig, ObservedSeries, RegressionDirection, RepairPolicy,
    ReconstructionConfig, SbarPolicy, StateConvention,
};
use sirmix_core::rng::derive_seed;
use sirmix_core::sim::{fmt_time, simulate_with, thin_with, write_trajectory_csv, Horizon, SimConfig};
use sirmix_core::{ModelParams, SeasonalityMap, SirState};
use sirmix_study::transprob::{self, SirColumn, TransprobSpec};
use sirmix_study::{measles, run_study, StudyKind, StudySpec};

use crate::args::*;
use crate::error::{Category, CliError, CliResult};
use crate::manifest::Run;

pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn load_settings<T: DeserializeOwned + Default>(run: &mut Run, path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let bytes = run
        .read_input(path)
        .map_err(|e| CliError::new(Category::Config, e.message))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("settings serialize to JSON")
}

fn print_stdout(bytes: &[u8]) -> CliResult<()> {
    std::io::stdout()
        .lock()
        .write_all(bytes)
        .map_err(|e| CliError::data(format!("cannot write to stdout: {e}")))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> sirmix_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn dispatch(command: Command, g: Globals) -> CliResult<()> {
    match command {
        Command::Simulate(a) => simulate_cmd(a, g),
        Command::Transprob(a) => transprob_cmd(a, g),
        Command::Reconstruct(a) => reconstruct_cmd(a, g),
        Command::Fit(a) => fit_cmd(a, g),
        Command::Study(a) => study_cmd(a, g),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub s: u64,
    pub i: u64,
    pub r: u64,
    pub population: Option<u64>,
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub gamma: f64,
    /// Defaults to cycling through the betas period by period.
    pub seasonality: Option<SeasonalityMap>,
    pub horizon: Horizon,
    pub dt: f64,
    pub trajectory: bool,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            s: 999,
            i: 1,
            r: 0,
            population: None,
            alpha: 0.8,
            betas: vec![4.5],
            gamma: 1.0,
            seasonality: None,
            horizon: Horizon::Extinction,
            dt: 1.0,
            trajectory: false,
            rho: None,
            seed: None,
        }
    }
}

fn parse_horizon(s: &str) -> CliResult<Horizon> {
    if s == "extinction" {
        return Ok(Horizon::Extinction);
    }
    s.parse::<f64>()
        .map(Horizon::Until)
        .map_err(|_| CliError::usage(format!("--horizon expects a time or `extinction`, got `{s}`")))
}

fn simulate_cmd(a: SimulateArgs, g: Globals) -> CliResult<()> {
    let mut run = Run::new("simulate", g.out.clone());
    let mut st: SimulateSettings = load_settings(&mut run, g.config.as_deref())?;
    macro_rules! set {
        ($($field:ident <- $flag:expr),*) => { $(if let Some(v) = $flag { st.$field = v; })* };
    }
    set!(s <- a.s, i <- a.i, r <- a.r, alpha <- a.alpha, betas <- a.beta, gamma <- a.gamma, dt <- a.dt);
    if a.n.is_some() {
        st.population = a.n;
    }
    if let Some(h) = &a.horizon {
        st.horizon = parse_horizon(h)?;
    }
    st.trajectory |= a.trajectory;
    if a.rho.is_some() {
        st.rho = a.rho;
    }
    let master = g.seed.or(st.seed).unwrap_or(0);
    st.seed = Some(master);
    if run.out_dir().is_none() && (st.trajectory || st.rho.is_some()) {
        return Err(CliError::usage("--trajectory and --rho write extra files and need --out"));
    }

    let initial = SirState::new(st.s, st.i, st.r);
    let population = st.population.unwrap_or(initial.population());
    let seasonality = match &st.seasonality {
        Some(m) => m.clone(),
        None => SeasonalityMap::new((0..st.betas.len()).collect(), st.betas.len())?,
    };
    let sim_seed = derive_seed(master, "simulate", 0);
    let cfg = SimConfig {
        initial,
        params: ModelParams::new(st.alpha, st.betas.clone(), st.gamma, population)?,
        seasonality,
        horizon: st.horizon,
        grid_step: st.dt,
        seed: sim_seed,
    };
    cfg.validate()?;
    run.seeds.insert("master".into(), master);
    run.seeds.insert("simulate".into(), sim_seed);
    let mut rng = sirmix_core::rng::rng_from_seed(sim_seed);
    let (traj, grid) = simulate_with(&cfg, &mut rng, st.trajectory)?;
    let grid_csv = csv_bytes(|b| grid.write_csv(b))?;
    if run.out_dir().is_none() {
        return print_stdout(&grid_csv);
    }
    run.write("grid.csv", &grid_csv)?;
    if let Some(traj) = &traj {
        run.write("trajectory.csv", &csv_bytes(|b| write_trajectory_csv(traj, b))?)?;
    }
    if let Some(rho) = st.rho {
        let thin_seed = derive_seed(master, "thinning", 0);
        run.seeds.insert("thinning".into(), thin_seed);
        let reported = thin_with(&grid.n_si, rho, &mut sirmix_core::rng::rng_from_seed(thin_seed))?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["time", "new_infections", "reported"];
        w.write_record(header).map_err(sirmix_core::Error::from)?;
        for (k, (n, c)) in grid.n_si.iter().zip(&reported).enumerate() {
            w.write_record([fmt_time(grid.times[k + 1]), n.to_string(), c.to_string()])
                .map_err(sirmix_core::Error::from)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
        run.write("incidence.csv", &bytes)?;
    }
    let summary = json!({
        "grid_points": grid.len(),
        "total_infections": grid.total_infections(),
        "final_time": grid.times.last(),
    });
    run.finish(to_json(&st), summary)?;
    Ok(())
}

fn parse_engines(s: &str) -> CliResult<Vec<Engine>> {
    if s == "all" {
        return Ok(Engine::ALL.to_vec());
    }
    s.split(',')
        .map(|e| e.trim().parse::<Engine>().map_err(|_| CliError::usage(format!("unknown engine `{e}`"))))
        .collect()
}

fn transprob_cmd(a: TransprobArgs, g: Globals) -> CliResult<()> {
    let mut run = Run::new("transprob", g.out.clone());
    let mut spec: TransprobSpec = load_settings(&mut run, g.config.as_deref())?;
    if let Some(e) = &a.engine {
        spec.engines = parse_engines(e)?;
    }
    macro_rules! set {
        ($($field:ident <- $flag:expr),*) => { $(if let Some(v) = $flag { spec.$field = v; })* };
    }
    set!(alphas <- a.alpha, gammas <- a.gamma, s0 <- a.s, i0 <- a.i, beta <- a.beta, dt <- a.dt, max_j <- a.max_j);
    if a.n.is_some() {
        spec.population = a.n;
    }
    if let Some(c) = a.sir_column {
        spec.sir_column = match c {
            SirColumnArg::NoRemovals => SirColumn::NoRemovals,
            SirColumnArg::NoRemovalsRaw => SirColumn::NoRemovalsRaw,
            SirColumnArg::Marginal => SirColumn::Marginal,
        };
    }
    if spec.alphas.is_empty() || spec.gammas.is_empty() || spec.engines.is_empty() {
        return Err(CliError::config("alpha, gamma and engine lists must be nonempty"));
    }
    let cells = transprob::run_transprob_compare(&spec)?;
    if run.out_dir().is_none() {
        let bytes = if cells.len() == 1 {
            transprob::cell_csv(&cells[0])?
        } else {
            transprob::long_csv(&cells)?
        };
        return print_stdout(&bytes);
    }
    if cells.len() == 1 {
        run.write("transprob.csv", &transprob::cell_csv(&cells[0])?)?;
    } else {
        for cell in &cells {
            run.write(&transprob::cell_file_name(cell), &transprob::cell_csv(cell)?)?;
        }
    }
    run.write("transprob_long.csv", &transprob::long_csv(&cells)?)?;
    let worst_truncation = cells
        .iter()
        .flat_map(|c| &c.columns)
        .map(|c| c.truncated_mass)
        .fold(0.0, f64::max);
    run.finish(to_json(&spec), json!({ "cells": cells.len(), "max_truncated_mass": worst_truncation }))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructSettings {
    pub data: Option<PathBuf>,
    pub bundled: bool,
    pub rescale: f64,
    pub reconstruction: ReconstructionConfig,
    pub integerize: IntegerizeConfig,
    pub dt: f64,
}

impl Default for ReconstructSettings {
    fn default() -> Self {
        ReconstructSettings {
            data: None,
            bundled: false,
            rescale: 1.0,
            reconstruction: ReconstructionConfig::default(),
            integerize: IntegerizeConfig::default(),
            dt: 1.0,
        }
    }
}

fn reconstruct_cmd(a: ReconstructArgs, g: Globals) -> CliResult<()> {
    let mut run = Run::new("reconstruct", g.out.clone());
    run.require_out()?;
    let mut st: ReconstructSettings = load_settings(&mut run, g.config.as_deref())?;
    if a.data.is_some() {
        st.data = a.data;
        st.bundled = false;
    }
    if a.bundled {
        st.data = None;
        st.bundled = true;
    }
    if let Some(v) = a.rescale {
        st.rescale = v;
    }
    if let Some(v) = a.sbar {
        st.reconstruction.sbar = SbarPolicy::Fixed(v);
    }
    if let Some(d) = a.direction {
        st.reconstruction.direction = match d {
            DirectionArg::CasesOnBirths => RegressionDirection::CasesOnBirths,
            DirectionArg::BirthsOnCases => RegressionDirection::BirthsOnCases,
        };
    }
    if let Some(v) = a.birth_lag {
        st.reconstruction.birth_lag = v;
    }
    if let Some(c) = a.convention {
        st.integerize.convention = match c {
            ConventionArg::Incidence => StateConvention::Incidence,
            ConventionArg::Chained => StateConvention::Chained,
        };
    }
    if let Some(r) = a.repair {
        st.integerize.repair = match r {
            RepairArg::Clamp => RepairPolicy::Clamp,
            RepairArg::Strict => RepairPolicy::Strict,
        };
    }
    if let Some(v) = a.dt {
        st.dt = v;
    }

    let obs = match (&st.data, st.bundled) {
        (Some(path), _) => ObservedSeries::read_csv(run.read_input(path)?.as_slice())?,
        (None, true) => {
            run.note_input("bundled:london_surrogate_1944_1951.csv", measles::BUNDLED_SERIES.as_bytes());
            measles::bundled_series()?
        }
        (None, false) => return Err(CliError::usage("`reconstruct` needs --data or --bundled")),
    };
    let obs = if st.rescale == 1.0 { obs } else { obs.rescaled(st.rescale)? };
    let rec = reconstruct(&obs, &st.reconstruction)?;
    let int = integerize(&rec, &st.integerize, st.dt)?;

    run.write("observed.csv", &csv_bytes(|b| obs.write_csv(b))?)?;
    run.write("reconstructed.csv", &csv_bytes(|b| rec.write_csv(b))?)?;
    run.write("reconstructed.json", &csv_bytes(|b| rec.write_meta(b))?)?;
    let labels = rec.labels.as_ref().map(|l| l[..int.path.intervals()].to_vec());
    run.write("path.csv", &csv_bytes(|b| int.path.write_csv(labels.as_deref(), b))?)?;
    let repairs = serde_json::to_vec_pretty(&int.repairs).map_err(sirmix_core::Error::from)?;
    run.write("repairs.json", &repairs)?;
    let summary = json!({
        "rho": rec.meta.rho,
        "sbar": rec.meta.sbar,
        "population": int.population,
        "intervals": int.path.intervals(),
        "repairs": int.repairs.len(),
    });
    run.finish(to_json(&st), summary)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub data: Option<PathBuf>,
    pub engine: Option<Engine>,
    pub fitter: Option<Fitter>,
    /// Defaults to the data's season labels, or one rate throughout.
    pub seasonality: Option<SeasonalityMap>,
    pub priors: Priors,
    /// Defaults to 1 for engines that ignore removals.
    pub fix_gamma: Option<f64>,
    pub chain: ChainConfig,
    pub proposal: ProposalConfig,
    pub engine_options: EngineOptions,
    pub population: Option<u64>,
    pub levels: Vec<f64>,
    pub seed: Option<u64>,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            data: None,
            engine: None,
            fitter: None,
            seasonality: None,
            priors: Priors::default(),
            fix_gamma: None,
            chain: ChainConfig::default(),
            proposal: ProposalConfig::default(),
            engine_options: EngineOptions::default(),
            population: None,
            levels: DEFAULT_LEVELS.to_vec(),
            seed: None,
        }
    }
}

/// Reads a grid series or a path table, telling them apart by the header.
fn read_path(bytes: &[u8]) -> CliResult<(PathData, Option<Vec<String>>)> {
    let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    if header.starts_with(b"time,") {
        let grid = sirmix_core::sim::GridSeries::read_csv(bytes)?;
        Ok((PathData::from_grid(&grid)?, None))
    } else if header.starts_with(b"period,") {
        Ok(PathData::read_csv(bytes)?)
    } else {
        Err(CliError::data(
            "unrecognised data file: expected a grid series (`time,S,I,R,nSI,nIR`) or a path table (`period,...`)",
        ))
    }
}

/// Seasonality whose period lookup reproduces the per-interval labels.
fn seasonality_from_labels(labels: &[String], first_period: usize) -> CliResult<SeasonalityMap> {
    let n = labels.len();
    let mut by_period = vec![String::new(); n];
    for (k, l) in labels.iter().enumerate() {
        by_period[(first_period + k) % n] = l.clone();
    }
    Ok(SeasonalityMap::from_labels(&by_period)?)
}

pub fn summary_csv(summary: &ChainSummary, levels: &[f64]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["parameter", "median", "mean", "sd", "ess", "mcse_median"]
        .map(String::from)
        .to_vec();
    for l in levels {
        let pct = fmt_time(l * 100.0);
        header.push(format!("lower_{pct}"));
        header.push(format!("upper_{pct}"));
    }
    w.write_record(&header).map_err(sirmix_core::Error::from)?;
    for p in &summary.params {
        let mut row = vec![
            p.name.clone(),
            p.median.to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
            p.ess.to_string(),
            p.mcse_median.to_string(),
        ];
        for ci in &p.intervals {
            row.push(ci.lower.to_string());
            row.push(ci.upper.to_string());
        }
        w.write_record(&row).map_err(sirmix_core::Error::from)?;
    }
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

fn fit_cmd(a: FitArgs, g: Globals) -> CliResult<()> {
    let mut run = Run::new("fit", g.out.clone());
    run.require_out()?;
    let mut st: FitSettings = load_settings(&mut run, g.config.as_deref())?;
    if let Some(f) = &a.fitter {
        st.fitter = Some(f.parse().map_err(|_| CliError::usage(format!("unknown fitter `{f}`")))?);
        st.engine = None;
    }
    if let Some(e) = &a.engine {
        st.engine = Some(e.parse().map_err(|_| CliError::usage(format!("unknown engine `{e}`")))?);
        st.fitter = None;
    }
    if a.data.is_some() {
        st.data = a.data;
    }
    if let Some(v) = a.iterations {
        st.chain.iterations = v;
    }
    if let Some(v) = a.burn_in {
        st.chain.burn_in = v;
    }
    if let Some(v) = a.thin {
        st.chain.thin = v;
    }
    if a.fix_gamma.is_some() {
        st.fix_gamma = a.fix_gamma;
    }
    if let Some(l) = a.levels {
        st.levels = l;
    }
    let engine = match (st.fitter, st.engine) {
        (Some(f), _) => f.engine(),
        (None, Some(e)) => e,
        (None, None) => return Err(CliError::usage("`fit` needs --engine or --fitter")),
    };
    if st.fix_gamma.is_none() && !engine.models_removals() {
        st.fix_gamma = Some(1.0);
    }
    let master = g.seed.or(st.seed).unwrap_or(0);
    st.seed = Some(master);
    let chain_seed = derive_seed(master, "fit", 0);
    st.chain.seed = chain_seed;
    run.seeds.insert("master".into(), master);
    run.seeds.insert("fit".into(), chain_seed);

    let Some(data_path) = st.data.clone() else {
        return Err(CliError::usage("`fit` needs --data"));
    };
    let (path, labels) = read_path(&run.read_input(&data_path)?)?;
    if st.seasonality.is_none() {
        if let Some(l) = labels.filter(|l| l.iter().all(|x| !x.is_empty())) {
            st.seasonality = Some(seasonality_from_labels(&l, path.first_period)?);
        }
    }
    let cfg = FitConfig {
        engine,
        seasonality: st.seasonality.clone().unwrap_or_else(SeasonalityMap::constant),
        priors: st.priors.clone(),
        fix_gamma: st.fix_gamma,
        chain: st.chain,
        proposal: st.proposal,
        engine_options: st.engine_options,
        population: st.population,
    };
    let sample = fit(&path, &cfg)?;
    let summary = summarize(&sample, &st.levels)?;
    run.write("draws.csv", &csv_bytes(|b| sample.write_csv(b))?)?;
    run.write("summary.csv", &summary_csv(&summary, &st.levels)?)?;
    let json_summary = serde_json::to_vec_pretty(&summary).map_err(sirmix_core::Error::from)?;
    run.write("summary.json", &json_summary)?;
    let brief: serde_json::Map<String, serde_json::Value> =
        summary.params.iter().map(|p| (p.name.clone(), json!(p.median))).collect();
    run.finish(
        to_json(&st),
        json!({
            "engine": engine.name(),
            "intervals": path.intervals(),
            "draws": summary.draws,
            "acceptance_rate": summary.acceptance_rate,
            "medians": brief,
        }),
    )?;
    Ok(())
}

fn study_cmd(a: StudyArgs, g: Globals) -> CliResult<()> {
    let mut run = Run::new("study", g.out.clone());
    let out = run.require_out()?.to_path_buf();
    let mut value = match g.config.as_deref() {
        Some(p) => load_settings::<serde_json::Value>(&mut run, Some(p))?,
        None => json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::config("study settings must be a JSON object"))?;
    if let Some(k) = a.kind {
        let kind = match k {
            KindArg::TransprobCompare => StudyKind::TransprobCompare,
            KindArg::Coverage => StudyKind::Coverage,
            KindArg::Measles => StudyKind::Measles,
            KindArg::PosteriorPredictive => StudyKind::PosteriorPredictive,
        };
        obj.insert("kind".into(), json!(kind.name()));
    }
    if !obj.contains_key("kind") {
        return Err(CliError::usage("`study` needs --kind or a `kind` in the settings file"));
    }
    let mut spec: StudySpec = serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))?;
    if a.replicates.is_some() {
        spec.replicates = a.replicates;
    }
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    let spec = spec.resolved()?;
    run.seeds.insert("master".into(), spec.seed);
    match spec.kind {
        StudyKind::Measles => match &spec.measles.data {
            Some(p) => {
                run.read_input(p)?;
            }
            None => run.note_input("bundled:london_surrogate_1944_1951.csv", measles::BUNDLED_SERIES.as_bytes()),
        },
        StudyKind::PosteriorPredictive => {
            if let Some(src) = &spec.predictive.sources {
                run.read_input(&src.observed)?;
                for p in src.draws.values() {
                    run.read_input(p)?;
                }
            }
        }
        _ => {}
    }
    let outcome = run_study(&spec, &out)?;
    run.adopt(&outcome.files)?;
    run.finish(to_json(&spec), outcome.summary)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_parsing() {
        assert_eq!(parse_horizon("extinction").unwrap(), Horizon::Extinction);
        assert_eq!(parse_horizon("12.5").unwrap(), Horizon::Until(12.5));
        assert_eq!(parse_horizon("soon").unwrap_err().category, Category::Usage);
    }

    #[test]
    fn engine_lists() {
        assert_eq!(parse_engines("all").unwrap().len(), 4);
        assert_eq!(parse_engines("negbin,sir-exact").unwrap(), vec![Engine::NegBin, Engine::SirExact]);
        assert!(parse_engines("poisson").is_err());
    }

    #[test]
    fn labels_follow_the_period_phase() {
        let labels: Vec<String> = ["b", "a", "a"].map(String::from).to_vec();
        let m = seasonality_from_labels(&labels, 4).unwrap();
        // interval k has period 4 + k
        let named: Vec<&str> = (0..3)
            .map(|k| m.names()[m.beta_index(4 + k)].as_str())
            .collect();
        assert_eq!(named, ["beta_b", "beta_a", "beta_a"]);
    }

    #[test]
    fn data_kind_is_sniffed_from_the_header() {
        let grid = "time,S,I,R,nSI,nIR\n0,9,1,0,0,0\n1,8,2,0,1,0\n";
        assert_eq!(read_path(grid.as_bytes()).unwrap().0.intervals(), 1);
        assert_eq!(read_path(b"x,y\n1,2\n").unwrap_err().category, Category::Data);
    }
}
