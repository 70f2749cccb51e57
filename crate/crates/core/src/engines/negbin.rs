//! Negative binomial approximations to the number of new infections.
//!
//! Both engines use size `r = I` (or `I^alpha` when configured) and differ in
//! the mean: the linear TSIR mean `beta S I^alpha dt / N`, or the exact Yule
//! mean `I^alpha (exp(beta S dt / N) - 1)`.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use super::{EngineOptions, Support, TransitionDistribution, TransitionQuery};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegBinMean {
    Linear,
    Exponential,
}

/// `(size, mean)`; `None` when the law is a point mass at zero.
fn size_and_mean(q: &TransitionQuery, kind: NegBinMean, opts: &EngineOptions) -> Option<(f64, f64)> {
    let s = q.from.s as f64;
    let i = q.from.i;
    let r = &q.rates;
    if i == 0 || q.from.s == 0 || r.beta == 0.0 {
        return None;
    }
    let i_pow = if r.alpha == 1.0 {
        i as f64
    } else {
        (i as f64).powf(r.alpha)
    };
    let n = r.population as f64;
    let m = match kind {
        NegBinMean::Linear => r.beta * s * i_pow * q.elapsed / n,
        NegBinMean::Exponential => i_pow * (r.beta * s * q.elapsed / n).exp_m1(),
    };
    let size = if opts.negbin_size_on_alpha { i_pow } else { i as f64 };
    Some((size, m))
}

fn ln_pmf_sized(j: u64, size: f64, m: f64) -> f64 {
    let jf = j as f64;
    let ln_choose = ln_gamma(jf + size) - ln_gamma(size) - ln_gamma(jf + 1.0);
    // size * ln(size / (size + m)) + j * ln(m / (size + m))
    let zero_part = -size * (m / size).ln_1p();
    if j == 0 {
        return zero_part;
    }
    ln_choose + zero_part + jf * (m.ln() - (size + m).ln())
}

/// Log pmf of `j` new infections.
pub fn negbin_ln_pmf(q: &TransitionQuery, j: u64, kind: NegBinMean, opts: &EngineOptions) -> f64 {
    match size_and_mean(q, kind, opts) {
        None => {
            if j == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        Some((size, m)) => ln_pmf_sized(j, size, m),
    }
}

/// Linear-mean negative binomial pmf with size `I`.
pub fn negbin_pmf(q: &TransitionQuery, j: u64) -> f64 {
    negbin_ln_pmf(q, j, NegBinMean::Linear, &EngineOptions::default()).exp()
}

/// Exponential-mean negative binomial pmf with size `I`.
pub fn negbin_exp_pmf(q: &TransitionQuery, j: u64) -> f64 {
    negbin_ln_pmf(q, j, NegBinMean::Exponential, &EngineOptions::default()).exp()
}

/// `P(X > j)` for the negative binomial with the given size and mean.
fn upper_tail(j: u64, size: f64, m: f64) -> f64 {
    let p = size / (size + m);
    beta_reg(j as f64 + 1.0, size, 1.0 - p)
}

/// Pmf over `0..=J`, with `J` the first cut whose upper tail is below the
/// truncation tolerance.
pub fn negbin_distribution(
    q: &TransitionQuery,
    kind: NegBinMean,
    opts: &EngineOptions,
) -> Result<TransitionDistribution> {
    let Some((size, m)) = size_and_mean(q, kind, opts) else {
        return Ok(TransitionDistribution {
            support: Support::Births(vec![0]),
            probabilities: vec![1.0],
            truncated_mass: 0.0,
        });
    };
    let sd = (m + m * m / size).sqrt();
    let mut cut = (m + 12.0 * sd).ceil() as u64 + 10;
    let mut tail = upper_tail(cut, size, m);
    while tail >= opts.truncation_tol {
        if cut as usize >= opts.max_states {
            return Err(Error::Truncation {
                what: "negative binomial support",
                achieved: tail,
                tolerance: opts.truncation_tol,
                hint: format!("raise max_states above {}", opts.max_states),
            });
        }
        cut = (cut * 2).min(opts.max_states as u64);
        tail = upper_tail(cut, size, m);
    }
    let probabilities: Vec<f64> = (0..=cut).map(|j| ln_pmf_sized(j, size, m).exp()).collect();
    Ok(TransitionDistribution {
        support: Support::Births((0..=cut).collect()),
        probabilities,
        truncated_mass: tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActiveRates, SirState};
    use approx::assert_relative_eq;

    fn query(s: u64, i: u64, alpha: f64, beta: f64, n: u64, dt: f64) -> TransitionQuery {
        TransitionQuery::new(
            SirState::new(s, i, n - s - i),
            dt,
            ActiveRates::new(alpha, beta, 0.0, n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn geometric_with_unit_size() {
        let q = query(999_999, 1, 1.0, 1.0, 1_000_000, 1.0);
        let m = 0.999999;
        assert_relative_eq!(negbin_pmf(&q, 0), 1.0 / (1.0 + m), max_relative = 1e-13);
        assert_relative_eq!(negbin_pmf(&q, 0), 0.5, epsilon = 1e-6);
        for j in 0..10 {
            let geo = (1.0 / (1.0 + m)) * (m / (1.0 + m)).powi(j as i32);
            assert_relative_eq!(negbin_pmf(&q, j), geo, max_relative = 1e-12);
        }
    }

    #[test]
    fn exponential_mean_zero_term_is_yule() {
        let q = query(999_999, 1, 1.0, 1.0, 1_000_000, 1.0);
        assert_relative_eq!(negbin_exp_pmf(&q, 0), (-0.999999f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(negbin_exp_pmf(&q, 0), 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_cases_are_point_masses() {
        let mut q = query(100, 5, 0.9, 1.0, 110, 1.0);
        q.rates.beta = 0.0;
        assert_eq!(negbin_pmf(&q, 0), 1.0);
        assert_eq!(negbin_exp_pmf(&q, 0), 1.0);
        assert_eq!(negbin_pmf(&q, 1), 0.0);
        let q = query(100, 0, 0.9, 1.0, 110, 1.0);
        assert_eq!(negbin_pmf(&q, 0), 1.0);
        assert_eq!(negbin_exp_pmf(&q, 3), 0.0);
        let q = query(0, 5, 0.9, 1.0, 110, 1.0);
        assert_eq!(negbin_exp_pmf(&q, 0), 1.0);
    }

    #[test]
    fn pmf_matches_statrs_reference() {
        use statrs::distribution::{Discrete, NegativeBinomial};
        let q = query(500, 25, 0.9, 1.0, 525, 1.0);
        let opts = EngineOptions::default();
        let (size, m) = size_and_mean(&q, NegBinMean::Linear, &opts).unwrap();
        // statrs counts failures before `r` successes with success probability p
        let reference = NegativeBinomial::new(size, size / (size + m)).unwrap();
        for j in [0u64, 1, 5, 17, 40, 120] {
            assert_relative_eq!(negbin_pmf(&q, j), reference.pmf(j), max_relative = 1e-10);
        }
    }

    #[test]
    fn distribution_normalises_and_reports_tail() {
        let opts = EngineOptions::default();
        for kind in [NegBinMean::Linear, NegBinMean::Exponential] {
            let q = query(500, 25, 1.1, 1.0, 525, 1.0);
            let d = negbin_distribution(&q, kind, &opts).unwrap();
            assert!(d.truncated_mass < opts.truncation_tol);
            assert!((d.total() + d.truncated_mass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn size_on_alpha_flag_changes_size_only() {
        let q = query(500, 25, 0.9, 1.0, 525, 1.0);
        let opts = EngineOptions {
            negbin_size_on_alpha: true,
            ..EngineOptions::default()
        };
        let (size, m) = size_and_mean(&q, NegBinMean::Linear, &opts).unwrap();
        let (size0, m0) = size_and_mean(&q, NegBinMean::Linear, &EngineOptions::default()).unwrap();
        assert_eq!(m, m0);
        assert_eq!(size0, 25.0);
        assert_relative_eq!(size, 25f64.powf(0.9), max_relative = 1e-15);
    }
}
