//! Engines against oracles built independently in this file.

use nalgebra::DMatrix;
use sirmix_core::engines::{distribution, negbin_pmf, Engine, EngineOptions, TransitionQuery};
use sirmix_core::{ActiveRates, SirState};
use statrs::distribution::{Discrete, NegativeBinomial};

/// `exp(Q t)` by scaling and squaring a Taylor series.
fn expm(q: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let norm = q.iter().map(|x| x.abs()).fold(0.0, f64::max) * q.nrows() as f64 * t;
    let squarings = norm.log2().ceil().max(0.0) as u32 + 4;
    let a = q * (t / 2f64.powi(squarings as i32));
    let n = q.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Joint law of `(nSI, nIR)` from the full SIR generator on `(s, i)` states.
fn sir_oracle(from: SirState, rates: ActiveRates, t: f64) -> Vec<((u64, u64), f64)> {
    let mut states = Vec::new();
    for s in 0..=from.s {
        for i in 0..=(from.i + from.s - s) {
            states.push((s, i));
        }
    }
    let idx = |s: u64, i: u64| states.iter().position(|&x| x == (s, i));
    let n = states.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (k, &(s, i)) in states.iter().enumerate() {
        let inf = rates.infection(s, i);
        let rem = rates.removal(i);
        if s > 0 && inf > 0.0 {
            q[(k, idx(s - 1, i + 1).unwrap())] += inf;
        }
        if i > 0 && rem > 0.0 {
            q[(k, idx(s, i - 1).unwrap())] += rem;
        }
        q[(k, k)] = -(inf + rem);
    }
    let p = expm(&q, t);
    let start = idx(from.s, from.i).unwrap();
    states
        .iter()
        .enumerate()
        .map(|(k, &(s, i))| {
            let n_si = from.s - s;
            let n_ir = from.i + n_si - i;
            ((n_si, n_ir), p[(start, k)])
        })
        .collect()
}

#[test]
fn sir_exact_matches_the_full_generator() {
    for (alpha, gamma, dt) in [(0.8, 1.0, 0.5), (1.2, 0.3, 1.0), (1.0, 2.0, 0.25)] {
        let from = SirState::new(6, 2, 1);
        let rates = ActiveRates::new(alpha, 1.5, gamma, 9).unwrap();
        let q = TransitionQuery::new(from, dt, rates).unwrap();
        let d = distribution(Engine::SirExact, &q, &EngineOptions::default()).unwrap();
        for ((a, b), p) in sir_oracle(from, rates, dt) {
            assert!((d.joint(a, b) - p).abs() < 1e-10, "({a},{b}): {} vs {p}", d.joint(a, b));
        }
    }
}

#[test]
fn negbin_agrees_with_statrs() {
    let from = SirState::new(500, 25, 0);
    for alpha in [0.9, 1.0, 1.1] {
        let rates = ActiveRates::new(alpha, 1.0, 1.0, 525).unwrap();
        let q = TransitionQuery::new(from, 1.0, rates).unwrap();
        let size = 25.0;
        let mean = 500.0 * 25f64.powf(alpha) / 525.0;
        let oracle = NegativeBinomial::new(size, size / (size + mean)).unwrap();
        for j in 0..60 {
            let ours = negbin_pmf(&q, j);
            let theirs = oracle.pmf(j);
            assert!((ours - theirs).abs() <= 1e-12 * theirs.max(1e-300) + 1e-15, "j={j}");
        }
    }
}

#[test]
fn purebirth_matches_a_frozen_susceptible_generator() {
    // births only, s frozen: a chain on the infectious count
    let from = SirState::new(30, 3, 0);
    let rates = ActiveRates::new(0.9, 2.0, 0.0, 33).unwrap();
    let q = TransitionQuery::new(from, 0.4, rates).unwrap();
    let d = distribution(Engine::PureBirthExact, &q, &EngineOptions::default()).unwrap();
    let m = 60;
    let mut gen = DMatrix::<f64>::zeros(m + 1, m + 1);
    for j in 0..=m {
        let lam = rates.infection(from.s, from.i + j as u64);
        gen[(j, j)] = -lam;
        if j < m {
            gen[(j, j + 1)] = lam;
        }
    }
    let p = expm(&gen, 0.4);
    for j in 0..20 {
        assert!((d.births_marginal(j as u64) - p[(0, j)]).abs() < 1e-10, "j={j}");
    }
}

#[test]
fn engines_coincide_at_homogeneous_mixing_in_a_large_population() {
    let from = SirState::new(999_999, 1, 0);
    let rates = ActiveRates::new(1.0, 1.0, 0.0, 1_000_000).unwrap();
    let q = TransitionQuery::new(from, 1.0, rates).unwrap();
    let opts = EngineOptions::default();
    let a = distribution(Engine::NegBinExp, &q, &opts).unwrap();
    let b = distribution(Engine::PureBirthExact, &q, &opts).unwrap();
    for j in 0..10 {
        assert!((a.births_marginal(j) - b.births_marginal(j)).abs() < 1e-9);
    }
}

#[test]
fn every_engine_accounts_for_all_mass() {
    let opts = EngineOptions::default();
    for (s, i, alpha, beta, gamma, dt) in [
        (40, 5, 0.7, 3.0, 1.0, 1.0),
        (200, 1, 1.1, 0.5, 0.2, 2.0),
        (10, 10, 1.0, 8.0, 4.0, 0.1),
    ] {
        let from = SirState::new(s, i, 0);
        let rates = ActiveRates::new(alpha, beta, gamma, s + i).unwrap();
        let q = TransitionQuery::new(from, dt, rates).unwrap();
        for engine in Engine::ALL {
            let d = distribution(engine, &q, &opts).unwrap();
            assert!((d.total() + d.truncated_mass - 1.0).abs() < 1e-8, "{engine}");
            assert!(d.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
