//! Transition probabilities of `j` new infections across engines and a grid
//! of mixing and removal rates.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sirmix_core::engines::{distribution, Engine, EngineOptions, TransitionQuery};
use sirmix_core::sim::fmt_time;
use sirmix_core::{ActiveRates, Result, SirState};

/// How the SIR column reduces the joint `(nSI, nIR)` law to new infections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SirColumn {
    /// `P(nSI = j | nIR = 0)`: the no-removal slice divided by its total mass.
    #[default]
    NoRemovals,
    /// `P(nSI = j, nIR = 0)` as is.
    NoRemovalsRaw,
    /// `P(nSI = j)` summed over removals.
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransprobSpec {
    pub s0: u64,
    pub i0: u64,
    pub beta: f64,
    /// Population in the rates; defaults to `s0 + i0`.
    pub population: Option<u64>,
    pub dt: f64,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub engines: Vec<Engine>,
    pub max_j: u64,
    pub sir_column: SirColumn,
    pub engine_options: EngineOptions,
}

impl Default for TransprobSpec {
    fn default() -> Self {
        TransprobSpec {
            s0: 500,
            i0: 25,
            beta: 1.0,
            population: None,
            dt: 1.0,
            alphas: vec![1.1, 1.0, 0.9],
            gammas: vec![1.0, 0.01, 0.0001],
            engines: Engine::ALL.to_vec(),
            max_j: 9,
            sir_column: SirColumn::NoRemovals,
            engine_options: EngineOptions::default(),
        }
    }
}

impl TransprobSpec {
    /// Large susceptible pool with one infective under homogeneous mixing.
    pub fn large_population() -> Self {
        TransprobSpec {
            s0: 999_999,
            i0: 1,
            alphas: vec![1.0],
            ..TransprobSpec::default()
        }
    }

    pub fn population(&self) -> u64 {
        self.population.unwrap_or(self.s0 + self.i0)
    }
}

/// One engine at one `(alpha, gamma)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineColumn {
    pub engine: Engine,
    /// Probabilities of `0..=max_j` new infections.
    pub probabilities: Vec<f64>,
    /// Mass beyond the enumerated support of the engine.
    pub truncated_mass: f64,
    /// Mass of the full distribution outside `0..=max_j` (before any renormalisation).
    pub outside_window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransprobCell {
    pub alpha: f64,
    pub gamma: f64,
    pub columns: Vec<EngineColumn>,
}

impl TransprobCell {
    pub fn column(&self, engine: Engine) -> Option<&EngineColumn> {
        self.columns.iter().find(|c| c.engine == engine)
    }

    /// `max_j |p_a(j) - p_b(j)|` over the window.
    pub fn sup_gap(&self, a: Engine, b: Engine) -> Option<f64> {
        let (a, b) = (self.column(a)?, self.column(b)?);
        Some(
            a.probabilities
                .iter()
                .zip(&b.probabilities)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    }
}

pub fn engine_column(
    engine: Engine,
    q: &TransitionQuery,
    max_j: u64,
    sir_column: SirColumn,
    opts: &EngineOptions,
) -> Result<EngineColumn> {
    let d = distribution(engine, q, opts)?;
    let mut probabilities: Vec<f64> = match (engine, sir_column) {
        (Engine::SirExact, SirColumn::Marginal) => (0..=max_j).map(|j| d.births_marginal(j)).collect(),
        (Engine::SirExact, _) => d.no_removal_slice(max_j),
        _ => (0..=max_j).map(|j| d.births_marginal(j)).collect(),
    };
    let inside: f64 = probabilities.iter().sum();
    let outside_window = (d.total() - inside).max(0.0);
    let slice = d.no_removal_mass();
    if engine == Engine::SirExact && sir_column == SirColumn::NoRemovals && slice > 0.0 {
        probabilities.iter_mut().for_each(|p| *p /= slice);
    }
    Ok(EngineColumn {
        engine,
        probabilities,
        truncated_mass: d.truncated_mass,
        outside_window,
    })
}

pub fn run_transprob_compare(spec: &TransprobSpec) -> Result<Vec<TransprobCell>> {
    let n = spec.population();
    let from = SirState::with_population(spec.s0, spec.i0, n)?;
    let mut cells = Vec::new();
    for &alpha in &spec.alphas {
        for &gamma in &spec.gammas {
            let rates = ActiveRates::new(alpha, spec.beta, gamma, n)?;
            let q = TransitionQuery::new(from, spec.dt, rates)?;
            let columns = spec
                .engines
                .iter()
                .map(|&e| engine_column(e, &q, spec.max_j, spec.sir_column, &spec.engine_options))
                .collect::<Result<_>>()?;
            cells.push(TransprobCell { alpha, gamma, columns });
        }
    }
    Ok(cells)
}

/// CSV with one row per `j` and one column per engine.
pub fn cell_csv(cell: &TransprobCell) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["j".to_string()];
    header.extend(cell.columns.iter().map(|c| c.engine.name().to_string()));
    w.write_record(&header)?;
    let rows = cell.columns.first().map_or(0, |c| c.probabilities.len());
    for j in 0..rows {
        let mut row = vec![j.to_string()];
        row.extend(cell.columns.iter().map(|c| format!("{:e}", c.probabilities[j])));
        w.write_record(&row)?;
    }
    crate::finish_csv(w)
}

/// Long-format table of every cell with truncation accounting.
pub fn long_csv(cells: &[TransprobCell]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "gamma", "engine", "j", "probability", "truncated_mass", "outside_window"])?;
    for cell in cells {
        for c in &cell.columns {
            for (j, p) in c.probabilities.iter().enumerate() {
                w.write_record([
                    fmt_time(cell.alpha),
                    fmt_time(cell.gamma),
                    c.engine.name().to_string(),
                    j.to_string(),
                    format!("{p:e}"),
                    format!("{:e}", c.truncated_mass),
                    format!("{:e}", c.outside_window),
                ])?;
            }
        }
    }
    crate::finish_csv(w)
}

pub fn cell_file_name(cell: &TransprobCell) -> String {
    format!("transprob_alpha{}_gamma{}.csv", fmt_time(cell.alpha), fmt_time(cell.gamma))
}

pub fn write_outputs(cells: &[TransprobCell], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for cell in cells {
        let path = dir.join(cell_file_name(cell));
        fs::write(&path, cell_csv(cell)?)?;
        files.push(path);
    }
    let path = dir.join("transprob_long.csv");
    fs::write(&path, long_csv(cells)?)?;
    files.push(path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_one_cell_per_pair() {
        let spec = TransprobSpec {
            alphas: vec![1.0, 0.9],
            gammas: vec![1.0],
            engines: vec![Engine::NegBin, Engine::NegBinExp],
            ..TransprobSpec::default()
        };
        let cells = run_transprob_compare(&spec).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[1].alpha, 0.9);
        assert_eq!(cells[0].columns[0].probabilities.len(), 10);
    }

    #[test]
    fn renormalised_slice_is_a_conditional_law() {
        let spec = TransprobSpec {
            s0: 40,
            i0: 3,
            alphas: vec![0.9],
            gammas: vec![1.0],
            engines: vec![Engine::SirExact],
            max_j: 40,
            ..TransprobSpec::default()
        };
        let cell = &run_transprob_compare(&spec).unwrap()[0];
        let total: f64 = cell.columns[0].probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        let raw = TransprobSpec {
            sir_column: SirColumn::NoRemovalsRaw,
            ..spec
        };
        let raw_cell = &run_transprob_compare(&raw).unwrap()[0];
        assert!(raw_cell.columns[0].probabilities.iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn csv_layout() {
        let spec = TransprobSpec {
            alphas: vec![1.0],
            gammas: vec![0.01],
            engines: vec![Engine::NegBin, Engine::PureBirthExact],
            ..TransprobSpec::default()
        };
        let cells = run_transprob_compare(&spec).unwrap();
        let text = String::from_utf8(cell_csv(&cells[0]).unwrap()).unwrap();
        assert!(text.starts_with("j,negbin,purebirth-exact\n0,"));
        assert_eq!(text.lines().count(), 11);
        assert_eq!(cell_file_name(&cells[0]), "transprob_alpha1_gamma0.01.csv");
    }
}
