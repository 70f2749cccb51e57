//! Non-linear pure birth chain for new infections with the susceptible count
//! frozen at its value at the start of the interval.
//!
//! State `j` counts births; it jumps to `j + 1` at rate
//! `lambda_j = (beta / N) * s * (i + j)^alpha`. The forward equations
//! `P'_j = lambda_{j-1} P_{j-1} - lambda_j P_j` are solved on `0..=J` with the
//! flow out of `J` collected in a sink, whose mass is the truncated mass.

use super::ode::{self, LinearFlow};
use super::uniformization::PoissonWeights;
use super::{EngineOptions, Method, Support, TransitionDistribution, TransitionQuery};
use crate::error::{Error, Result};

/// Birth rates `lambda_0 ..= lambda_max_births`.
pub fn birth_rates(q: &TransitionQuery, max_births: u64) -> Vec<f64> {
    (0..=max_births)
        .map(|j| q.rates.infection(q.from.s, q.from.i + j))
        .collect()
}

struct BirthFlow<'a> {
    rates: &'a [f64],
}

impl LinearFlow for BirthFlow<'_> {
    fn dim(&self) -> usize {
        self.rates.len() + 1
    }

    fn derivative(&self, p: &[f64], dp: &mut [f64]) {
        let n = self.rates.len();
        dp[0] = -self.rates[0] * p[0];
        for j in 1..n {
            dp[j] = self.rates[j - 1] * p[j - 1] - self.rates[j] * p[j];
        }
        dp[n] = self.rates[n - 1] * p[n - 1];
    }
}

/// Uniformized transient solution started from state 0. With `target`, only
/// states that can still reach it are updated and the returned vector is only
/// meaningful at that index.
fn uniformized(rates: &[f64], t: f64, tail_tol: f64, target: Option<usize>) -> Vec<f64> {
    let n = rates.len();
    let lambda = rates.iter().cloned().fold(0.0, f64::max);
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    if lambda == 0.0 {
        return p;
    }
    let stay: Vec<f64> = rates.iter().map(|r| 1.0 - r / lambda).collect();
    let up: Vec<f64> = rates.iter().map(|r| r / lambda).collect();
    let weights = PoissonWeights::new(lambda * t, tail_tol);
    let right = weights.right();
    let mut acc = vec![0.0; n];

    for k in 0..=right {
        let hi = k.min(n - 1);
        let lo = match target {
            Some(tgt) => tgt.saturating_sub(right - k),
            None => 0,
        };
        if k >= weights.left {
            let w = weights.get(k);
            if let Some(tgt) = target {
                acc[tgt] += w * p[tgt];
            } else {
                for j in 0..=hi {
                    acc[j] += w * p[j];
                }
            }
        }
        if k == right {
            break;
        }
        let hi_next = (k + 1).min(n - 1);
        for j in (lo.max(1)..=hi_next).rev() {
            p[j] = p[j] * stay[j] + p[j - 1] * up[j - 1];
        }
        if lo == 0 {
            p[0] *= stay[0];
        }
    }
    acc
}

fn solve(rates: &[f64], t: f64, opts: &EngineOptions, target: Option<usize>) -> Result<Vec<f64>> {
    let mut p = match opts.purebirth_method {
        Method::Uniformization => uniformized(rates, t, opts.poisson_tail, target),
        Method::Ode => {
            let flow = BirthFlow { rates };
            let mut y0 = vec![0.0; flow.dim()];
            y0[0] = 1.0;
            let (mut y, _) = ode::integrate(&flow, &y0, t, opts.ode())?;
            y.truncate(rates.len());
            y
        }
    };
    // rounding can leave entries a few ulp outside [0, 1]
    for v in &mut p {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(p)
}

/// Distribution of new infections on the fixed support `0..=max_births`.
pub fn purebirth_exact(
    q: &TransitionQuery,
    max_births: u64,
    opts: &EngineOptions,
) -> Result<TransitionDistribution> {
    let dist = purebirth_unchecked(q, max_births, opts)?;
    if dist.truncated_mass > opts.truncation_tol {
        return Err(Error::Truncation {
            what: "pure birth support",
            achieved: dist.truncated_mass,
            tolerance: opts.truncation_tol,
            hint: format!("increase max_births beyond {max_births}"),
        });
    }
    Ok(dist)
}

fn purebirth_unchecked(
    q: &TransitionQuery,
    max_births: u64,
    opts: &EngineOptions,
) -> Result<TransitionDistribution> {
    let rates = birth_rates(q, max_births);
    let probabilities = solve(&rates, q.elapsed, opts, None)?;
    let total: f64 = probabilities.iter().sum();
    Ok(TransitionDistribution {
        support: Support::Births((0..=max_births).collect()),
        probabilities,
        truncated_mass: (1.0 - total).max(0.0),
    })
}

/// Initial support guess from the linear (Yule) chain with the starting
/// per-capita rate.
fn initial_support(q: &TransitionQuery) -> u64 {
    let i = q.from.i.max(1) as f64;
    let per_capita = q.rates.infection(q.from.s, q.from.i) / i;
    let growth = (per_capita * q.elapsed).exp_m1();
    let mean = i * growth;
    let var = i * growth * (1.0 + growth);
    (mean + 12.0 * var.sqrt()).min(1e12).ceil() as u64 + 10
}

/// Rough operation count of one transient solve: states times expected jumps.
fn solve_work(rates: &[f64], t: f64) -> f64 {
    let lambda = rates.iter().cloned().fold(0.0, f64::max);
    rates.len() as f64 * (lambda * t + 1.0)
}

/// Lower bound on the mass that escapes to infinity by `t` when `alpha > 1`,
/// from the mass past `max_births` at `t / 2` and a Markov bound on the
/// remaining explosion time `sum_{k > J} 1 / lambda_k`.
fn escape_lower_bound(q: &TransitionQuery, rates: &[f64], opts: &EngineOptions) -> Result<f64> {
    let alpha = q.rates.alpha;
    let c = q.rates.infection(q.from.s, 1);
    if alpha <= 1.0 || c <= 0.0 {
        return Ok(0.0);
    }
    let m = (q.from.i + rates.len() as u64) as f64;
    let tail_time = (m.powf(-alpha) + m.powf(1.0 - alpha) / (alpha - 1.0)) / c;
    let late = (2.0 * tail_time / q.elapsed).min(1.0);
    if late >= 1.0 {
        return Ok(0.0);
    }
    let kept: f64 = solve(rates, q.elapsed / 2.0, opts, None)?.iter().sum();
    Ok((1.0 - kept).max(0.0) * (1.0 - late))
}

/// Distribution of new infections with the support doubled until the leaked
/// mass is below tolerance.
pub fn purebirth_auto(q: &TransitionQuery, opts: &EngineOptions) -> Result<TransitionDistribution> {
    let cap = opts.max_states.saturating_sub(1) as u64;
    let mut j = initial_support(q).min(cap);
    loop {
        let rates = birth_rates(q, j);
        let work = solve_work(&rates, q.elapsed);
        if work > opts.max_work {
            return Err(Error::Truncation {
                what: "pure birth support",
                achieved: f64::NAN,
                tolerance: opts.truncation_tol,
                hint: format!("a support of {} births needs about {work:.1e} operations; raise max_work", j + 1),
            });
        }
        let dist = purebirth_unchecked(q, j, opts)?;
        if dist.truncated_mass <= opts.truncation_tol {
            return Ok(dist);
        }
        let escaped = escape_lower_bound(q, &rates, opts)?;
        if escaped > opts.truncation_tol {
            return Err(Error::Truncation {
                what: "pure birth support",
                achieved: dist.truncated_mass,
                tolerance: opts.truncation_tol,
                hint: format!("the chain explodes: at least {escaped:.2e} of the mass leaves every finite support"),
            });
        }
        if j >= cap {
            return Err(Error::Truncation {
                what: "pure birth support",
                achieved: dist.truncated_mass,
                tolerance: opts.truncation_tol,
                hint: format!("state cap {} reached; raise max_states", opts.max_states),
            });
        }
        j = (j * 2).min(cap);
    }
}

/// `P(j new infections)`, computed on the exact sub-chain `0..=j`.
pub fn target_probability(q: &TransitionQuery, births: u64, opts: &EngineOptions) -> Result<f64> {
    if births as usize >= opts.max_states {
        return Err(Error::Truncation {
            what: "pure birth target",
            achieved: 1.0,
            tolerance: opts.truncation_tol,
            hint: format!("{births} births exceeds the state cap {}", opts.max_states),
        });
    }
    let rates = birth_rates(q, births);
    let p = solve(&rates, q.elapsed, opts, Some(births as usize))?;
    Ok(p[births as usize].clamp(0.0, 1.0))
}
