//! Random-walk Metropolis–Hastings on log-parameters.
//!
//! Proposal scales adapt toward the target acceptance rate during burn-in
//! only. With covariance adaptation on, the proposal becomes a joint Gaussian
//! with the empirical burn-in covariance (scaled by `2.38^2 / d`) once
//! `covariance_start * burn_in` iterations have passed; otherwise each
//! component is updated in turn with its own scale. Everything is frozen after
//! burn-in, so the retained draws come from a fixed Markov kernel.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ChainConfig, FitConfig, ProposalConfig};
use super::likelihood::{check_increments, log_likelihood, PathData};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{rng_from_seed, SimRng};

/// Raw chain output on the sampling (log) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub log_target: Vec<f64>,
    /// One-based iteration number of each retained draw.
    pub iterations: Vec<usize>,
    /// Acceptance over the retained phase (burn-in when nothing is retained).
    pub acceptance_rate: f64,
}

fn propose_joint(current: &[f64], chol: &DMatrix<f64>, scale: f64, rng: &mut SimRng) -> Vec<f64> {
    let d = current.len();
    let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let step = chol * z;
    current.iter().zip(step.iter()).map(|(c, s)| c + scale * s).collect()
}

fn covariance_cholesky(history: &[Vec<f64>], fallback: &[f64]) -> DMatrix<f64> {
    let d = fallback.len();
    let n = history.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| history.iter().map(|h| h[j]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for h in history {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (h[a] - mean[a]) * (h[b] - mean[b]);
            }
        }
    }
    let factor = 2.38 * 2.38 / d as f64 / (n - 1.0).max(1.0);
    cov *= factor;
    for a in 0..d {
        // keeps the matrix positive definite when a component barely moved
        cov[(a, a)] += 1e-10 + 1e-4 * fallback[a] * fallback[a];
    }
    match cov.clone().cholesky() {
        Some(ch) => ch.l(),
        None => DMatrix::from_diagonal(&DVector::from_column_slice(fallback)),
    }
}

/// Runs a chain targeting `log_target` (on the sampling scale) from `init`.
pub fn run_chain<F>(
    mut log_target: F,
    init: Vec<f64>,
    chain: &ChainConfig,
    proposal: &ProposalConfig,
    rng: &mut SimRng,
) -> Result<ChainOutput>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = init.len();
    let mut current = init;
    let mut current_lp = log_target(&current)?;
    if current_lp == f64::NEG_INFINITY || current_lp.is_nan() {
        return Err(Error::Diagnostics(
            "initial value has zero posterior density; supply a different starting point".into(),
        ));
    }

    let target = proposal.target_acceptance;
    let mut scales = vec![proposal.initial_scale; d];
    let mut global = 1.0f64;
    let mut chol = DMatrix::from_diagonal(&DVector::from_element(d, proposal.initial_scale));
    let cov_from = (proposal.covariance_start * chain.burn_in as f64) as usize;
    let history_from = cov_from / 2;
    let mut history: Vec<Vec<f64>> = Vec::new();

    let mut batch_accepts = vec![0usize; d.max(1)];
    let mut batch_len = 0usize;
    let mut batches = 0usize;
    let (mut kept_accepts, mut kept_trials) = (0usize, 0usize);
    let (mut burn_accepts, mut burn_trials) = (0usize, 0usize);

    let mut out = ChainOutput {
        draws: Vec::new(),
        log_target: Vec::new(),
        iterations: Vec::new(),
        acceptance_rate: 0.0,
    };

    for it in 0..chain.iterations {
        let burning = it < chain.burn_in;
        let mut accepted = 0usize;
        let mut trials = 0usize;

        if proposal.covariance_adaptation {
            let prop = propose_joint(&current, &chol, global, rng);
            let lp = log_target(&prop)?;
            trials += 1;
            if accept(lp, current_lp, rng) {
                current = prop;
                current_lp = lp;
                accepted += 1;
                batch_accepts[0] += 1;
            }
        } else {
            for c in 0..d {
                let mut prop = current.clone();
                prop[c] += scales[c] * rng.sample::<f64, _>(StandardNormal);
                let lp = log_target(&prop)?;
                trials += 1;
                if accept(lp, current_lp, rng) {
                    current = prop;
                    current_lp = lp;
                    accepted += 1;
                    batch_accepts[c] += 1;
                }
            }
        }

        if burning {
            burn_accepts += accepted;
            burn_trials += trials;
            batch_len += 1;
            if proposal.covariance_adaptation && it >= history_from {
                history.push(current.clone());
            }
            if batch_len == proposal.adapt_interval {
                batches += 1;
                let step = (1.0 / (batches as f64).sqrt()).min(0.5);
                if proposal.covariance_adaptation {
                    let rate = batch_accepts[0] as f64 / batch_len as f64;
                    global *= (step * (rate - target) * 3.0).exp();
                    if it + 1 >= cov_from && history.len() > 2 * d + 2 {
                        chol = covariance_cholesky(&history, &scales);
                    }
                } else {
                    for c in 0..d {
                        let rate = batch_accepts[c] as f64 / batch_len as f64;
                        scales[c] *= (step * (rate - target) * 3.0).exp();
                    }
                }
                batch_accepts.iter_mut().for_each(|x| *x = 0);
                batch_len = 0;
            }
        } else {
            kept_accepts += accepted;
            kept_trials += trials;
            let since = it - chain.burn_in + 1;
            if since % chain.thin == 0 {
                out.draws.push(current.clone());
                out.log_target.push(current_lp);
                out.iterations.push(it + 1);
            }
        }
    }

    out.acceptance_rate = if kept_trials > 0 {
        kept_accepts as f64 / kept_trials as f64
    } else if burn_trials > 0 {
        burn_accepts as f64 / burn_trials as f64
    } else {
        0.0
    };
    if kept_trials > 0 && out.acceptance_rate < 0.001 {
        return Err(Error::Diagnostics(format!(
            "acceptance rate {:.2e} after burn-in; retune the proposal (initial_scale, adapt_interval or a longer burn-in)",
            out.acceptance_rate
        )));
    }
    Ok(out)
}

fn accept(proposed: f64, current: f64, rng: &mut SimRng) -> bool {
    if proposed.is_nan() || proposed == f64::NEG_INFINITY {
        return false;
    }
    let log_ratio = proposed - current;
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Posterior draws on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub names: Vec<String>,
    /// Whether each parameter was sampled (false for a fixed gamma).
    pub free: Vec<bool>,
    pub draws: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub iterations: Vec<usize>,
    pub acceptance_rate: f64,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of infection rates in each draw.
    pub fn k(&self) -> usize {
        self.names.len() - 2
    }

    /// Model parameters of draw `idx`.
    pub fn params(&self, idx: usize, population: u64) -> Result<ModelParams> {
        let d = &self.draws[idx];
        let k = self.k();
        ModelParams::new(d[0], d[1..=k].to_vec(), d[k + 1], population)
    }

    /// CSV `iteration,alpha,<betas>,gamma,log_posterior`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("log_posterior".into());
        w.write_record(&header)?;
        for (idx, d) in self.draws.iter().enumerate() {
            let mut row = vec![self.iterations[idx].to_string()];
            row.extend(d.iter().map(|x| format!("{x}")));
            row.push(format!("{}", self.log_posterior[idx]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads draws written by [`write_csv`](Self::write_csv). `free` is
    /// inferred: a constant column is treated as fixed.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header = rd.headers()?.clone();
        let n = header.len();
        if n < 4 || &header[0] != "iteration" || &header[n - 1] != "log_posterior" || &header[1] != "alpha" || &header[n - 2] != "gamma" {
            return Err(Error::Data("draws CSV must have columns iteration,alpha,...,gamma,log_posterior".into()));
        }
        let names: Vec<String> = header.iter().skip(1).take(n - 2).map(String::from).collect();
        let mut s = PosteriorSample {
            free: vec![true; names.len()],
            names,
            draws: Vec::new(),
            log_posterior: Vec::new(),
            iterations: Vec::new(),
            acceptance_rate: f64::NAN,
        };
        for rec in rd.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Data(format!("bad number `{}`: {e}", &rec[i])))
            };
            s.iterations.push(parse(0)? as usize);
            s.draws.push((1..n - 1).map(parse).collect::<Result<_>>()?);
            s.log_posterior.push(parse(n - 1)?);
        }
        for j in 0..s.names.len() {
            let col = s.column(j);
            s.free[j] = !(col.len() > 1 && col.iter().all(|&x| x == col[0]));
        }
        Ok(s)
    }
}

/// Starting values from simple moment matching at `alpha = 1`:
/// `gamma = sum nIR / sum I dt`, `beta_j = sum nSI / sum S I dt / N` per rate.
pub fn moment_start(data: &PathData, cfg: &FitConfig, population: u64) -> Vec<f64> {
    let k = cfg.seasonality.k();
    let n = population as f64;
    let dt = data.elapsed;
    let (mut removals, mut exposure) = (0.0, 0.0);
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for t in 0..data.intervals() {
        let (a, b) = (data.from[t], data.to[t]);
        let n_si = a.s.saturating_sub(b.s) as f64;
        let n_ir = (a.i as f64 + n_si - b.i as f64).max(0.0);
        removals += n_ir;
        exposure += a.i as f64 * dt;
        let j = cfg.seasonality.beta_index(data.first_period + t);
        num[j] += n_si;
        den[j] += a.s as f64 * a.i as f64 * dt / n;
    }
    let overall = if den.iter().sum::<f64>() > 0.0 {
        (num.iter().sum::<f64>() / den.iter().sum::<f64>()).max(1e-6)
    } else {
        1.0
    };
    let mut theta = vec![1.0];
    for j in 0..k {
        let b = if num[j] > 0.0 && den[j] > 0.0 { num[j] / den[j] } else { overall };
        theta.push(b.clamp(1e-8, 1e8));
    }
    if cfg.fix_gamma.is_none() {
        let g = if exposure > 0.0 && removals > 0.0 { removals / exposure } else { 1.0 };
        theta.push(g.clamp(1e-6, 1e6));
    }
    theta
}

/// Samples the posterior of `(alpha, betas, gamma)` given a path.
pub fn fit(data: &PathData, cfg: &FitConfig) -> Result<PosteriorSample> {
    cfg.validate()?;
    check_increments(data, cfg.engine)?;
    let population = cfg.population.unwrap_or_else(|| data.population());
    let k = cfg.seasonality.k();
    let names = cfg.parameter_names();
    let free_gamma = cfg.fix_gamma.is_none();
    let priors: Vec<_> = names.iter().map(|n| cfg.priors.get(n)).collect();

    let unpack = |phi: &[f64]| -> Vec<f64> {
        let mut theta: Vec<f64> = phi.iter().map(|x| x.exp()).collect();
        if let Some(g) = cfg.fix_gamma {
            theta.push(g);
        }
        theta
    };
    let log_target = |phi: &[f64]| -> Result<f64> {
        let theta = unpack(phi);
        let Ok(params) = ModelParams::new(theta[0], theta[1..=k].to_vec(), theta[k + 1], population) else {
            return Ok(f64::NEG_INFINITY);
        };
        let mut lp = 0.0;
        for (j, prior) in priors.iter().enumerate() {
            if j == k + 1 && !free_gamma {
                continue;
            }
            // density of log(theta) = density of theta times the Jacobian theta
            lp += prior.ln_pdf(theta[j]) + phi[j];
        }
        match log_likelihood(data, &params, &cfg.seasonality, cfg.engine, &cfg.engine_options) {
            Ok(ll) => Ok(lp + ll.value),
            Err(Error::Numeric(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    };

    let init: Vec<f64> = moment_start(data, cfg, population).iter().map(|x| x.ln()).collect();
    let mut rng = rng_from_seed(cfg.chain.seed);
    let out = run_chain(log_target, init, &cfg.chain, &cfg.proposal, &mut rng)?;

    let mut free = vec![true; names.len()];
    free[k + 1] = free_gamma;
    Ok(PosteriorSample {
        names,
        free,
        draws: out.draws.iter().map(|phi| unpack(phi)).collect(),
        log_posterior: out.log_target,
        iterations: out.iterations,
        acceptance_rate: out.acceptance_rate,
    })
}
