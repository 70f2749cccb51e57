use sirmix_core::engines::{Engine, EngineOptions};
use sirmix_core::inference::{fit, log_likelihood, summarize, ChainConfig, FitConfig, Fitter, PathData};
use sirmix_core::reconstruction::{integerize, reconstruct, IntegerizeConfig, ReconstructionConfig};
use sirmix_core::sim::{simulate, GridSeries, Horizon, SimConfig};
use sirmix_core::synthetic::{simulate_endemic, EndemicConfig};
use sirmix_core::{ModelParams, SeasonalityMap, SirState};

fn outbreak(seed: u64) -> (GridSeries, ModelParams) {
    let params = ModelParams::constant(0.8, 4.5, 1.0, 1000).unwrap();
    for attempt in 0..100 {
        let cfg = SimConfig {
            initial: SirState::new(999, 1, 0),
            params: params.clone(),
            seasonality: SeasonalityMap::constant(),
            horizon: Horizon::Extinction,
            grid_step: 1.0,
            seed: seed * 1000 + attempt,
        };
        let (_, grid) = simulate(&cfg).unwrap();
        if grid.total_infections() >= 50 {
            return (grid, params);
        }
    }
    panic!("no major outbreak");
}

#[test]
fn simulated_path_has_finite_likelihood_under_every_engine() {
    let (grid, params) = outbreak(1);
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).unwrap();
    let back = GridSeries::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, grid);
    let path = PathData::from_grid(&back).unwrap();
    for engine in Engine::ALL {
        let ll = log_likelihood(&path, &params, &SeasonalityMap::constant(), engine, &EngineOptions::default())
            .unwrap();
        assert!(ll.is_finite(), "{engine}: {ll:?}");
    }
}

#[test]
fn tsir_fit_is_reproducible_and_sees_the_outbreak() {
    let (grid, _) = outbreak(2);
    let path = PathData::from_grid(&grid).unwrap();
    let cfg = FitConfig {
        chain: ChainConfig {
            iterations: 1500,
            burn_in: 500,
            thin: 1,
            seed: 17,
        },
        ..FitConfig::for_fitter(Fitter::BayesTsir)
    };
    let a = fit(&path, &cfg).unwrap();
    let b = fit(&path, &cfg).unwrap();
    assert_eq!(a, b);
    let s = summarize(&a, &[0.95]).unwrap();
    assert!(s.get("gamma").is_none());
    let alpha = s.get("alpha").unwrap();
    assert!(alpha.median > 0.3 && alpha.median < 1.5, "{alpha:?}");
}

#[test]
fn endemic_series_reconstructs_into_a_usable_path() {
    let series = simulate_endemic(&EndemicConfig::default()).unwrap();
    let obs = series.observe(0.4, 5).unwrap();
    let rec = reconstruct(&obs, &ReconstructionConfig::default()).unwrap();
    assert!((rec.meta.rho - 0.4).abs() < 0.05, "rho = {}", rec.meta.rho);
    let int = integerize(&rec, &IntegerizeConfig::default(), 1.0).unwrap();
    assert_eq!(int.path.intervals(), obs.len() - 1);
    let seasonality = rec.seasonality().unwrap();
    let betas = vec![30.0; seasonality.k()];
    let params = ModelParams::new(0.97, betas, 1.0, int.population).unwrap();
    let ll = log_likelihood(&int.path, &params, &seasonality, Engine::NegBin, &EngineOptions::default()).unwrap();
    assert!(ll.is_finite());
}
