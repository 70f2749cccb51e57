//! Generator of the bundled biweekly series: a term-time forced TSIR
//! recursion at the scale of a large city, thinned at half reporting.

use sirmix_core::reconstruction::ObservedSeries;
use sirmix_core::synthetic::{simulate_endemic, EndemicConfig, Offspring};
use sirmix_core::Result;

pub const SURROGATE_SEED: u64 = 1944;
pub const SURROGATE_RHO: f64 = 0.5;
pub const SURROGATE_BREAKS: [u32; 6] = [1, 8, 16, 17, 18, 26];

pub fn surrogate_config() -> EndemicConfig {
    let betas = (1..=26)
        .map(|b| if SURROGATE_BREAKS.contains(&b) { 12.0 } else { 40.0 })
        .collect();
    EndemicConfig {
        population: 3_300_000,
        periods: 208,
        // 20 years less one period, so the first recorded period is biweek 1
        burn_in: 519,
        births_per_period: 2_600.0,
        betas,
        alpha: 0.97,
        immigration: 5.0,
        initial_susceptible: 115_000,
        initial_infected: 2_600,
        offspring: Offspring::NegBin,
        seed: SURROGATE_SEED,
    }
}

/// Eight years of biweekly reports labelled by biweek of year.
pub fn surrogate_series() -> Result<ObservedSeries> {
    let series = simulate_endemic(&surrogate_config())?;
    let mut obs = series.observe(SURROGATE_RHO, SURROGATE_SEED)?;
    obs.times = (0..obs.len()).map(|k| 1944.0 + k as f64 / 26.0).collect();
    Ok(obs)
}
