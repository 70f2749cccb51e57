//! Direct-method Gillespie simulation of the SIR process.
//!
//! The infection rate in force changes only at grid boundaries: events in
//! interval `p` use `beta[seasonality.beta_index(p)]`. Because waiting times
//! are memoryless, the clock is simply redrawn at every boundary.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventKind, ModelParams, SeasonalityMap, SirState, Trajectory};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Simulate up to this time (a multiple of the grid step is recommended).
    Until(f64),
    /// Stop at the first grid time at or after the last infectious removal.
    Extinction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial: SirState,
    pub params: ModelParams,
    #[serde(default = "SeasonalityMap::constant")]
    pub seasonality: SeasonalityMap,
    pub horizon: Horizon,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid_step() -> f64 {
    1.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return Err(Error::Config(format!("grid_step must be > 0, got {}", self.grid_step)));
        }
        if self.initial.population() != self.params.population() {
            return Err(Error::Config(format!(
                "initial state sums to {} but population is {}",
                self.initial.population(),
                self.params.population()
            )));
        }
        if self.seasonality.k() != self.params.k() {
            return Err(Error::Config(format!(
                "seasonality uses {} infection rates but {} are given",
                self.seasonality.k(),
                self.params.k()
            )));
        }
        match self.horizon {
            Horizon::Until(h) => {
                if !(h.is_finite() && h >= self.grid_step) {
                    return Err(Error::Config(format!(
                        "horizon {h} must be finite and at least one grid step"
                    )));
                }
            }
            Horizon::Extinction => {
                if self.params.gamma() == 0.0 && self.initial.i > 0 {
                    return Err(Error::Config(
                        "run to extinction with gamma = 0 never terminates".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Compartments sampled on the observation grid with exact per-interval
/// event counts. `n_si[k]` and `n_ir[k]` count events in `(times[k], times[k+1]]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSeries {
    pub times: Vec<f64>,
    pub s: Vec<u64>,
    pub i: Vec<u64>,
    pub r: Vec<u64>,
    pub n_si: Vec<u64>,
    pub n_ir: Vec<u64>,
}

impl GridSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> SirState {
        SirState::new(self.s[k], self.i[k], self.r[k])
    }

    pub fn states(&self) -> Vec<SirState> {
        (0..self.len()).map(|k| self.state(k)).collect()
    }

    pub fn total_infections(&self) -> u64 {
        self.n_si.iter().sum()
    }

    fn push_point(&mut self, t: f64, st: SirState) {
        self.times.push(t);
        self.s.push(st.s);
        self.i.push(st.i);
        self.r.push(st.r);
    }

    /// Checks `S_{t+1} = S_t - nSI_t` and `I_{t+1} = I_t + nSI_t - nIR_t`.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if [self.s.len(), self.i.len(), self.r.len()].iter().any(|&l| l != n)
            || (n > 0 && (self.n_si.len() != n - 1 || self.n_ir.len() != n - 1))
        {
            return Err(Error::Data("grid series columns have inconsistent lengths".into()));
        }
        for k in 1..n {
            if self.times[k] <= self.times[k - 1] {
                return Err(Error::Data(format!("times not increasing at row {k}")));
            }
            let ok = self.s[k - 1].checked_sub(self.n_si[k - 1]) == Some(self.s[k])
                && (self.i[k - 1] + self.n_si[k - 1]).checked_sub(self.n_ir[k - 1]) == Some(self.i[k])
                && self.r[k - 1] + self.n_ir[k - 1] == self.r[k];
            if !ok {
                return Err(Error::Data(format!(
                    "inconsistent increments at interval {}: nSI = {}, nIR = {} do not carry {:?} to {:?}",
                    k - 1,
                    self.n_si[k - 1],
                    self.n_ir[k - 1],
                    self.state(k - 1),
                    self.state(k)
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `time,S,I,R,nSI,nIR`. Row `k` carries the increments
    /// of the interval ending at `times[k]`; row 0 carries zeros.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "S", "I", "R", "nSI", "nIR"])?;
        for k in 0..self.len() {
            let (a, b) = if k == 0 {
                (0, 0)
            } else {
                (self.n_si[k - 1], self.n_ir[k - 1])
            };
            w.write_record([
                fmt_time(self.times[k]),
                self.s[k].to_string(),
                self.i[k].to_string(),
                self.r[k].to_string(),
                a.to_string(),
                b.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            time: f64,
            #[serde(rename = "S")]
            s: u64,
            #[serde(rename = "I")]
            i: u64,
            #[serde(rename = "R")]
            r: u64,
            #[serde(rename = "nSI")]
            n_si: u64,
            #[serde(rename = "nIR")]
            n_ir: u64,
        }
        let mut rd = csv::Reader::from_reader(reader);
        let mut g = GridSeries::default();
        for (k, row) in rd.deserialize::<Row>().enumerate() {
            let row = row?;
            g.push_point(row.time, SirState::new(row.s, row.i, row.r));
            if k > 0 {
                g.n_si.push(row.n_si);
                g.n_ir.push(row.n_ir);
            }
        }
        g.validate()?;
        Ok(g)
    }
}

/// Shortest decimal that round-trips, without a trailing `.0` on integers.
pub fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "event", "S", "I", "R"])?;
    for k in 0..traj.len() {
        let st = traj.states[k];
        w.write_record([
            format!("{}", traj.times[k]),
            traj.events[k].as_str().to_string(),
            st.s.to_string(),
            st.i.to_string(),
            st.r.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Simulates with the RNG seeded from `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<(Trajectory, GridSeries)> {
    let mut rng = rng_from_seed(config.seed);
    let (traj, grid) = simulate_with(config, &mut rng, true)?;
    Ok((traj.unwrap_or_default(), grid))
}

/// Simulates with a caller-supplied stream; skips the event log unless
/// `record_events` is set.
pub fn simulate_with(
    config: &SimConfig,
    rng: &mut SimRng,
    record_events: bool,
) -> Result<(Option<Trajectory>, GridSeries)> {
    config.validate()?;
    let dt = config.grid_step;
    let last_period = match config.horizon {
        Horizon::Until(h) => Some(((h / dt) * (1.0 + 1e-12)).floor() as usize),
        Horizon::Extinction => None,
    };

    let mut state = config.initial;
    let mut traj = record_events.then(Trajectory::default);
    if let Some(tr) = traj.as_mut() {
        tr.push(0.0, EventKind::Start, state);
    }
    let mut grid = GridSeries::default();
    grid.push_point(0.0, state);

    if last_period.is_none() && state.i == 0 {
        return Ok((traj, grid));
    }

    let gamma = config.params.gamma();
    let mut period = 0usize;
    loop {
        let rates = config.params.active(config.seasonality.beta_index(period))?;
        let start = period as f64 * dt;
        let end = (period + 1) as f64 * dt;
        let mut t = start;
        let (mut n_si, mut n_ir) = (0u64, 0u64);
        loop {
            let inf = rates.infection(state.s, state.i);
            let rem = gamma * state.i as f64;
            let total = inf + rem;
            if total == 0.0 {
                break;
            }
            let wait: f64 = Exp1.sample(rng);
            let next = t + wait / total;
            if next > end {
                break;
            }
            t = next;
            let u: f64 = rng.random::<f64>() * total;
            let kind = if u < inf {
                state = state.infect();
                n_si += 1;
                EventKind::Infection
            } else {
                state = state.remove();
                n_ir += 1;
                EventKind::Removal
            };
            if let Some(tr) = traj.as_mut() {
                tr.push(t, kind, state);
            }
        }
        grid.push_point(end, state);
        grid.n_si.push(n_si);
        grid.n_ir.push(n_ir);
        period += 1;
        match last_period {
            Some(lp) if period >= lp => break,
            None if state.i == 0 => break,
            _ => {}
        }
    }
    Ok((traj, grid))
}

/// Reported incidence `Z_t ~ Binomial(nSI_t, rho)`, independently per interval.
pub fn thin_to_incidence(new_infections: &[u64], rho: f64, seed: u64) -> Result<Vec<u64>> {
    let mut rng = rng_from_seed(seed);
    thin_with(new_infections, rho, &mut rng)
}

pub fn thin_with(new_infections: &[u64], rho: f64, rng: &mut SimRng) -> Result<Vec<u64>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("reporting probability must be in (0, 1], got {rho}")));
    }
    if rho == 1.0 {
        return Ok(new_infections.to_vec());
    }
    new_infections
        .iter()
        .map(|&n| {
            Binomial::new(n, rho)
                .map(|b| b.sample(rng))
                .map_err(|e| Error::Domain(e.to_string()))
        })
        .collect()
}
