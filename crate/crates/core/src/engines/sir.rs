//! Exact SIR transition probabilities on the `(nSI, nIR)` lattice.
//!
//! In cumulative coordinates the SIR process only moves up:
//! `(a, b) -> (a + 1, b)` at rate `(beta / N) (s0 - a) (i0 + a - b)^alpha` and
//! `(a, b) -> (a, b + 1)` at rate `gamma (i0 + a - b)`. The forward equations
//! are solved on a rectangular box; flow leaving the box goes to a sink.
//!
//! Because every move raises the level `a + b`, the probability of a single
//! target cell only needs the box `[0, a*] x [0, b*]`, and during
//! uniformization only cells whose level can still reach the target are kept.

use super::ode::{self, LinearFlow};
use super::uniformization::PoissonWeights;
use super::{EngineOptions, Method, Support, TransitionDistribution, TransitionQuery};
use crate::error::{Error, Result};
use crate::model::CumulativeState;

/// Inclusive bounds on `(nSI, nIR)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SirBox {
    pub max_si: u64,
    pub max_ir: u64,
}

impl SirBox {
    pub fn states(&self) -> usize {
        (self.max_si as usize + 1) * (self.max_ir as usize + 1)
    }
}

struct Lattice {
    rows: usize,
    cols: usize,
    i0: usize,
    infection: Vec<f64>,
    removal: Vec<f64>,
}

impl Lattice {
    fn new(q: &TransitionQuery, bx: SirBox) -> Self {
        let rows = bx.max_si as usize + 1;
        let cols = bx.max_ir as usize + 1;
        let i0 = q.from.i as usize;
        let mut infection = vec![0.0; rows * cols];
        let mut removal = vec![0.0; rows * cols];
        for a in 0..rows {
            let s = q.from.s - a as u64;
            for b in 0..cols.min(i0 + a + 1) {
                let i = (i0 + a - b) as u64;
                infection[a * cols + b] = q.rates.infection(s, i);
                removal[a * cols + b] = q.rates.removal(i);
            }
        }
        Lattice {
            rows,
            cols,
            i0,
            infection,
            removal,
        }
    }

    /// Last reachable column in row `a` (where `i` hits zero).
    #[inline]
    fn b_max(&self, a: usize) -> usize {
        (self.cols - 1).min(self.i0 + a)
    }

    fn uniformization_rate(&self) -> f64 {
        self.infection
            .iter()
            .zip(&self.removal)
            .map(|(x, y)| x + y)
            .fold(0.0, f64::max)
    }
}

/// Uniformized solution from `(0, 0)`. With a target, only the returned
/// entry at the target index is meaningful.
fn uniformized(lat: &Lattice, t: f64, tail_tol: f64, target: Option<(usize, usize)>) -> Vec<f64> {
    let (rows, cols) = (lat.rows, lat.cols);
    let n = rows * cols;
    let lambda = lat.uniformization_rate();
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    if lambda == 0.0 {
        return p;
    }
    let stay: Vec<f64> = lat
        .infection
        .iter()
        .zip(&lat.removal)
        .map(|(x, y)| 1.0 - (x + y) / lambda)
        .collect();
    let up: Vec<f64> = lat.infection.iter().map(|x| x / lambda).collect();
    let right_move: Vec<f64> = lat.removal.iter().map(|x| x / lambda).collect();

    let weights = PoissonWeights::new(lambda * t, tail_tol);
    let last = weights.right();
    let target_level = target.map(|(a, b)| a + b);
    let max_level = rows - 1 + cols - 1;
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];

    for k in 0..=last {
        if k >= weights.left {
            let w = weights.get(k);
            match target {
                Some((a, b)) => acc[a * cols + b] += w * p[a * cols + b],
                None => {
                    for (x, y) in acc.iter_mut().zip(&p) {
                        *x += w * y;
                    }
                }
            }
        }
        if k == last {
            break;
        }
        // levels that may be nonzero after this step and can still reach the target
        let hi = (k + 1).min(max_level);
        let lo = target_level.map_or(0, |lvl| lvl.saturating_sub(last - k));
        for a in 0..rows.min(hi + 1) {
            let b_lo = lo.saturating_sub(a);
            let b_hi = lat.b_max(a).min(hi - a);
            if b_lo > b_hi {
                continue;
            }
            let row = a * cols;
            let (newer, older) = (&mut next[row + b_lo..=row + b_hi], &p[row + b_lo..=row + b_hi]);
            let stay_r = &stay[row + b_lo..=row + b_hi];
            for ((x, y), s) in newer.iter_mut().zip(older).zip(stay_r) {
                *x = y * s;
            }
            if a > 0 {
                let prev = row - cols;
                let from = &p[prev + b_lo..=prev + b_hi];
                let rates = &up[prev + b_lo..=prev + b_hi];
                for ((x, y), r) in newer.iter_mut().zip(from).zip(rates) {
                    *x += y * r;
                }
            }
            // removals from the left neighbour in the same row
            let start = b_lo.max(1);
            if start <= b_hi {
                let off = start - b_lo;
                let from = &p[row + start - 1..row + b_hi];
                let rates = &right_move[row + start - 1..row + b_hi];
                for ((x, y), r) in newer[off..].iter_mut().zip(from).zip(rates) {
                    *x += y * r;
                }
            }
        }
        std::mem::swap(&mut p, &mut next);
    }
    acc
}

struct SirFlow<'a> {
    lat: &'a Lattice,
}

impl LinearFlow for SirFlow<'_> {
    fn dim(&self) -> usize {
        self.lat.rows * self.lat.cols + 1
    }

    fn derivative(&self, p: &[f64], dp: &mut [f64]) {
        let lat = self.lat;
        let cols = lat.cols;
        let n = lat.rows * cols;
        let mut sink = 0.0;
        for a in 0..lat.rows {
            for b in 0..cols {
                let idx = a * cols + b;
                let mut d = -(lat.infection[idx] + lat.removal[idx]) * p[idx];
                if a > 0 {
                    d += lat.infection[idx - cols] * p[idx - cols];
                }
                if b > 0 {
                    d += lat.removal[idx - 1] * p[idx - 1];
                }
                dp[idx] = d;
                if a + 1 == lat.rows {
                    sink += lat.infection[idx] * p[idx];
                }
                if b + 1 == cols {
                    sink += lat.removal[idx] * p[idx];
                }
            }
        }
        dp[n] = sink;
    }
}

fn solve(
    lat: &Lattice,
    t: f64,
    opts: &EngineOptions,
    target: Option<(usize, usize)>,
) -> Result<Vec<f64>> {
    let mut p = match opts.sir_method {
        Method::Uniformization => uniformized(lat, t, opts.poisson_tail, target),
        Method::Ode => {
            let flow = SirFlow { lat };
            let mut y0 = vec![0.0; flow.dim()];
            y0[0] = 1.0;
            let (mut y, _) = ode::integrate(&flow, &y0, t, opts.ode())?;
            y.truncate(lat.rows * lat.cols);
            y
        }
    };
    // rounding can leave entries a few ulp outside [0, 1]
    for v in &mut p {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(p)
}

fn check_box(q: &TransitionQuery, bx: SirBox, opts: &EngineOptions) -> Result<()> {
    if bx.max_si > q.from.s {
        return Err(Error::invalid(
            "truncation",
            format!("nSI bound {} exceeds initial susceptibles {}", bx.max_si, q.from.s),
        ));
    }
    if bx.max_ir > q.from.i + bx.max_si {
        return Err(Error::invalid(
            "truncation",
            format!(
                "nIR bound {} exceeds initial infectious plus nSI bound {}",
                bx.max_ir,
                q.from.i + bx.max_si
            ),
        ));
    }
    if bx.states() > opts.max_states {
        return Err(Error::Truncation {
            what: "sir lattice",
            achieved: 1.0,
            tolerance: opts.truncation_tol,
            hint: format!(
                "box {}x{} exceeds the state cap {}",
                bx.max_si + 1,
                bx.max_ir + 1,
                opts.max_states
            ),
        });
    }
    Ok(())
}

fn sir_unchecked(q: &TransitionQuery, bx: SirBox, opts: &EngineOptions) -> Result<TransitionDistribution> {
    let lat = Lattice::new(q, bx);
    let p = solve(&lat, q.elapsed, opts, None)?;
    let mut support = Vec::new();
    let mut probabilities = Vec::new();
    for a in 0..lat.rows {
        for b in 0..=lat.b_max(a) {
            support.push((a as u64, b as u64));
            probabilities.push(p[a * lat.cols + b]);
        }
    }
    let total: f64 = probabilities.iter().sum();
    Ok(TransitionDistribution {
        support: Support::Joint(support),
        probabilities,
        truncated_mass: (1.0 - total).max(0.0),
    })
}

/// Joint `(nSI, nIR)` distribution on a given box.
pub fn sir_exact(q: &TransitionQuery, bx: SirBox, opts: &EngineOptions) -> Result<TransitionDistribution> {
    check_box(q, bx, opts)?;
    let dist = sir_unchecked(q, bx, opts)?;
    if dist.truncated_mass > opts.truncation_tol {
        return Err(Error::Truncation {
            what: "sir truncation box",
            achieved: dist.truncated_mass,
            tolerance: opts.truncation_tol,
            hint: format!("enlarge the box beyond nSI <= {}, nIR <= {}", bx.max_si, bx.max_ir),
        });
    }
    Ok(dist)
}

fn initial_box(q: &TransitionQuery) -> SirBox {
    let i = q.from.i.max(1) as f64;
    let per_capita = q.rates.infection(q.from.s, q.from.i) / i;
    let growth = (per_capita * q.elapsed).exp_m1();
    let births = i * growth + 12.0 * (i * growth * (1.0 + growth)).sqrt() + 10.0;
    let max_si = (births.min(1e12).ceil() as u64).min(q.from.s);
    // removals from a population no larger than the largest infectious count
    let exposure = q.rates.gamma * (q.from.i + max_si) as f64 * q.elapsed;
    let removals = exposure + 12.0 * exposure.sqrt() + 10.0;
    let max_ir = (removals.min(1e12).ceil() as u64).min(q.from.i + max_si);
    SirBox { max_si, max_ir }
}

/// Joint distribution with the box doubled until the leak is below tolerance.
pub fn sir_exact_auto(q: &TransitionQuery, opts: &EngineOptions) -> Result<TransitionDistribution> {
    let mut bx = initial_box(q);
    loop {
        if bx.states() > opts.max_states {
            return Err(Error::Truncation {
                what: "sir truncation box",
                achieved: f64::NAN,
                tolerance: opts.truncation_tol,
                hint: format!(
                    "box {}x{} exceeds the state cap {}; raise max_states",
                    bx.max_si + 1,
                    bx.max_ir + 1,
                    opts.max_states
                ),
            });
        }
        let dist = sir_unchecked(q, bx, opts)?;
        if dist.truncated_mass <= opts.truncation_tol {
            return Ok(dist);
        }
        let grown = SirBox {
            max_si: (bx.max_si * 2).min(q.from.s),
            max_ir: 0,
        };
        let grown = SirBox {
            max_ir: (bx.max_ir * 2).min(q.from.i + grown.max_si),
            ..grown
        };
        if grown == bx || grown.states() > opts.max_states {
            return Err(Error::Truncation {
                what: "sir truncation box",
                achieved: dist.truncated_mass,
                tolerance: opts.truncation_tol,
                hint: format!(
                    "box {}x{} cannot grow within the state cap {}",
                    bx.max_si + 1,
                    bx.max_ir + 1,
                    opts.max_states
                ),
            });
        }
        bx = grown;
    }
}

/// `P(nSI = a, nIR = b)` computed on the minimal box `[0, a] x [0, b]`.
pub fn target_probability(q: &TransitionQuery, inc: CumulativeState, opts: &EngineOptions) -> Result<f64> {
    if !inc.is_valid_for(q.from) {
        return Ok(0.0);
    }
    let bx = SirBox {
        max_si: inc.n_si,
        max_ir: inc.n_ir,
    };
    check_box(q, bx, opts)?;
    let lat = Lattice::new(q, bx);
    let (a, b) = (inc.n_si as usize, inc.n_ir as usize);
    let p = solve(&lat, q.elapsed, opts, Some((a, b)))?;
    Ok(p[a * lat.cols + b].clamp(0.0, 1.0))
}
