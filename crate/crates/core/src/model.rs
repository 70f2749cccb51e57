//! Epidemic model domain types and the two SIR event rates.
//!
//! The infection rate generalises mass action with a mixing exponent on the
//! infectious count: `(beta_j / N) * s * i^alpha`. With `alpha = 1` this is the
//! classical homogeneous-mixing SIR model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the non-homogeneous mixing SIR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    alpha: f64,
    betas: Vec<f64>,
    gamma: f64,
    population: u64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    betas: Vec<f64>,
    gamma: f64,
    population: u64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.alpha, raw.betas, raw.gamma, raw.population)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            alpha: p.alpha,
            betas: p.betas,
            gamma: p.gamma,
            population: p.population,
        }
    }
}

impl ModelParams {
    pub fn new(alpha: f64, betas: Vec<f64>, gamma: f64, population: u64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if betas.is_empty() {
            return Err(Error::invalid("betas", "at least one infection rate is required"));
        }
        if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::invalid("betas", format!("every beta must be > 0, got {b}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
        }
        if population == 0 {
            return Err(Error::invalid("population", "must be >= 1"));
        }
        Ok(ModelParams {
            alpha,
            betas,
            gamma,
            population,
        })
    }

    /// Convenience constructor for a single, constant infection rate.
    pub fn constant(alpha: f64, beta: f64, gamma: f64, population: u64) -> Result<Self> {
        Self::new(alpha, vec![beta], gamma, population)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn population(&self) -> u64 {
        self.population
    }
    /// Number of distinct infection rates `k`.
    pub fn k(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, index: usize) -> Result<f64> {
        self.betas.get(index).copied().ok_or(Error::BetaIndex {
            index,
            k: self.betas.len(),
        })
    }

    /// Rates in force for one observation period.
    pub fn active(&self, beta_index: usize) -> Result<ActiveRates> {
        Ok(ActiveRates {
            alpha: self.alpha,
            beta: self.beta(beta_index)?,
            gamma: self.gamma,
            population: self.population,
        })
    }
}

/// Model parameters restricted to the single infection rate active in one
/// period. Unlike [`ModelParams`], `beta = 0` is allowed here: it is the
/// degenerate "no infection" chain used by several engine checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveRates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub population: u64,
}

impl ActiveRates {
    pub fn new(alpha: f64, beta: f64, gamma: f64, population: u64) -> Result<Self> {
        let rates = ActiveRates {
            alpha,
            beta,
            gamma,
            population,
        };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if self.population == 0 {
            return Err(Error::invalid("population", "must be >= 1"));
        }
        Ok(())
    }

    /// `(beta / N) * s * i^alpha`, exactly zero when `s = 0` or `i = 0`.
    #[inline]
    pub fn infection(&self, s: u64, i: u64) -> f64 {
        if s == 0 || i == 0 || self.beta == 0.0 {
            return 0.0;
        }
        let i_pow = if self.alpha == 1.0 {
            i as f64
        } else {
            (i as f64).powf(self.alpha)
        };
        self.beta * s as f64 * i_pow / self.population as f64
    }

    #[inline]
    pub fn removal(&self, i: u64) -> f64 {
        self.gamma * i as f64
    }
}

/// Maps observation period `i` to the index of the infection rate in force.
///
/// The assignment is extended periodically: period `i` uses
/// `assignment[i % assignment.len()]`, so a 26-entry biweekly calendar covers
/// any number of years.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSeasonality", into = "RawSeasonality")]
pub struct SeasonalityMap {
    assignment: Vec<usize>,
    k: usize,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawSeasonality {
    assignment: Vec<usize>,
    #[serde(default)]
    names: Vec<String>,
}

impl TryFrom<RawSeasonality> for SeasonalityMap {
    type Error = Error;
    fn try_from(raw: RawSeasonality) -> Result<Self> {
        let k = raw.assignment.iter().max().map_or(0, |m| m + 1);
        let map = SeasonalityMap::new(raw.assignment, k)?;
        if raw.names.is_empty() {
            Ok(map)
        } else {
            map.with_names(raw.names)
        }
    }
}

impl From<SeasonalityMap> for RawSeasonality {
    fn from(m: SeasonalityMap) -> Self {
        RawSeasonality {
            assignment: m.assignment,
            names: m.names,
        }
    }
}

impl SeasonalityMap {
    /// `assignment` holds zero-based beta indices; every index in `0..k` must
    /// be used at least once.
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if assignment.is_empty() || k == 0 {
            return Err(Error::invalid("seasonality", "assignment must be nonempty"));
        }
        let mut used = vec![false; k];
        for &j in &assignment {
            if j >= k {
                return Err(Error::BetaIndex { index: j, k });
            }
            used[j] = true;
        }
        if let Some(unused) = used.iter().position(|u| !u) {
            return Err(Error::invalid(
                "seasonality",
                format!("beta index {unused} is never used (map must be surjective)"),
            ));
        }
        let names = (1..=k).map(|j| format!("beta_{j}")).collect();
        Ok(SeasonalityMap { assignment, k, names })
    }

    /// One infection rate for every period.
    pub fn constant() -> Self {
        SeasonalityMap {
            assignment: vec![0],
            k: 1,
            names: vec!["beta_1".to_string()],
        }
    }

    /// Builds a map from per-period labels. Distinct labels become beta indices
    /// in sorted label order, and the labels become the parameter names.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut distinct: Vec<&str> = labels.iter().map(|l| l.as_ref()).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let assignment = labels
            .iter()
            .map(|l| distinct.binary_search(&l.as_ref()).unwrap())
            .collect();
        let names = distinct.iter().map(|l| format!("beta_{l}")).collect();
        SeasonalityMap::new(assignment, distinct.len())?.with_names(names)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k {
            return Err(Error::invalid(
                "seasonality",
                format!("{} names given for {} infection rates", names.len(), self.k),
            ));
        }
        self.names = names;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn beta_index(&self, period: usize) -> usize {
        self.assignment[period % self.assignment.len()]
    }
}

/// Compartment counts. `s + i + r` equals the population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SirState {
    pub s: u64,
    pub i: u64,
    pub r: u64,
}

impl SirState {
    pub fn new(s: u64, i: u64, r: u64) -> Self {
        SirState { s, i, r }
    }

    /// State with `r = population - s - i`.
    pub fn with_population(s: u64, i: u64, population: u64) -> Result<Self> {
        let r = population
            .checked_sub(s + i)
            .ok_or_else(|| Error::Data(format!("s + i = {} exceeds population {population}", s + i)))?;
        Ok(SirState { s, i, r })
    }

    pub fn population(&self) -> u64 {
        self.s + self.i + self.r
    }

    pub fn infect(self) -> Self {
        SirState {
            s: self.s - 1,
            i: self.i + 1,
            r: self.r,
        }
    }

    pub fn remove(self) -> Self {
        SirState {
            s: self.s,
            i: self.i - 1,
            r: self.r + 1,
        }
    }
}

/// Cumulative infections and removals since the start of a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CumulativeState {
    pub n_si: u64,
    pub n_ir: u64,
}

impl CumulativeState {
    /// Increments implied by two states; fails when either is negative.
    pub fn between(from: SirState, to: SirState, interval: usize) -> Result<Self> {
        let n_si = from.s as i64 - to.s as i64;
        let n_ir = from.i as i64 + n_si - to.i as i64;
        if n_si < 0 || n_ir < 0 {
            return Err(Error::DataInconsistency {
                interval,
                n_si,
                n_ir,
            });
        }
        Ok(CumulativeState {
            n_si: n_si as u64,
            n_ir: n_ir as u64,
        })
    }

    /// Whether these increments are reachable from `initial`.
    pub fn is_valid_for(&self, initial: SirState) -> bool {
        self.n_si <= initial.s && self.n_ir <= initial.i + self.n_si
    }

    /// Recovers `S(t) = S(0) - nSI`, `I(t) = I(0) + nSI - nIR`.
    pub fn apply(&self, initial: SirState) -> Result<SirState> {
        if !self.is_valid_for(initial) {
            return Err(Error::Domain(format!(
                "increments (nSI={}, nIR={}) not reachable from {initial:?}",
                self.n_si, self.n_ir
            )));
        }
        Ok(SirState {
            s: initial.s - self.n_si,
            i: initial.i + self.n_si - self.n_ir,
            r: initial.r + self.n_ir,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Start,
    Infection,
    Removal,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Infection => "infection",
            EventKind::Removal => "removal",
        }
    }
}

/// Event-resolved path: one entry per event plus the starting state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub events: Vec<EventKind>,
    pub states: Vec<SirState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, event: EventKind, state: SirState) {
        self.times.push(t);
        self.events.push(event);
        self.states.push(state);
    }
}

/// Infection rate in force for `beta_index`.
pub fn infection_rate(state: SirState, params: &ModelParams, beta_index: usize) -> Result<f64> {
    Ok(params.active(beta_index)?.infection(state.s, state.i))
}

pub fn removal_rate(state: SirState, params: &ModelParams) -> f64 {
    params.gamma * state.i as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn infection_rate_examples() {
        let p = ModelParams::constant(0.8, 0.0045, 1.0, 1000).unwrap();
        let r = infection_rate(SirState::new(999, 1, 0), &p, 0).unwrap();
        assert_relative_eq!(r, 0.0044955, max_relative = 1e-12);

        let r = infection_rate(SirState::new(0, 5, 995), &p, 0).unwrap();
        assert_eq!(r, 0.0);

        let p = ModelParams::constant(1.0, 1.0, 1.0, 525).unwrap();
        let r = infection_rate(SirState::new(500, 25, 0), &p, 0).unwrap();
        assert_relative_eq!(r, 500.0 * 25.0 / 525.0, max_relative = 1e-14);
        assert!((r - 23.8095).abs() < 1e-4);
    }

    #[test]
    fn bad_beta_index() {
        let p = ModelParams::constant(1.0, 1.0, 1.0, 10).unwrap();
        assert!(matches!(
            infection_rate(SirState::new(5, 5, 0), &p, 1),
            Err(Error::BetaIndex { index: 1, k: 1 })
        ));
    }

    #[test]
    fn removal_rate_examples() {
        let p = ModelParams::constant(1.0, 1.0, 1.0, 100).unwrap();
        assert_eq!(removal_rate(SirState::new(90, 10, 0), &p), 10.0);
        assert_eq!(removal_rate(SirState::new(100, 0, 0), &p), 0.0);
        let p = ModelParams::constant(1.0, 1.0, 0.0001, 525).unwrap();
        assert_relative_eq!(removal_rate(SirState::new(500, 25, 0), &p), 0.0025, max_relative = 1e-12);
    }

    #[test]
    fn zero_infectious_is_exactly_zero_for_any_alpha() {
        let rates = ActiveRates::new(1e-9, 3.0, 1.0, 10).unwrap();
        assert_eq!(rates.infection(10, 0), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, vec![1.0], 1.0, 10).is_err());
        assert!(ModelParams::new(1.0, vec![], 1.0, 10).is_err());
        assert!(ModelParams::new(1.0, vec![1.0, 0.0], 1.0, 10).is_err());
        assert!(ModelParams::new(1.0, vec![1.0], -1.0, 10).is_err());
        assert!(ModelParams::new(1.0, vec![1.0], 1.0, 0).is_err());
        assert!(ModelParams::new(1.0, vec![1.0], 0.0, 10).is_ok());
    }

    #[test]
    fn params_json_validates() {
        let ok: ModelParams =
            serde_json::from_str(r#"{"alpha":0.8,"betas":[1.0,2.0],"gamma":1.0,"population":50}"#)
                .unwrap();
        assert_eq!(ok.k(), 2);
        let bad = serde_json::from_str::<ModelParams>(
            r#"{"alpha":-1,"betas":[1.0],"gamma":1.0,"population":50}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn seasonality_surjective_and_periodic() {
        assert!(SeasonalityMap::new(vec![0, 0, 2], 3).is_err());
        assert!(SeasonalityMap::new(vec![0, 3], 3).is_err());
        let m = SeasonalityMap::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(m.beta_index(4), 1);
        assert_eq!(m.beta_index(3), 0);
        let m = SeasonalityMap::from_labels(&["term", "break", "term"]).unwrap();
        assert_eq!(m.assignment(), &[1, 0, 1]);
        assert_eq!(m.names(), &["beta_break", "beta_term"]);
    }

    #[test]
    fn cumulative_state_round_trip() {
        let a = SirState::new(10, 3, 0);
        let b = SirState::new(7, 4, 2);
        let c = CumulativeState::between(a, b, 0).unwrap();
        assert_eq!(c, CumulativeState { n_si: 3, n_ir: 2 });
        assert_eq!(c.apply(a).unwrap(), b);
        let bad = CumulativeState::between(b, a, 5);
        assert!(matches!(bad, Err(Error::DataInconsistency { interval: 5, .. })));
    }

    proptest! {
        #[test]
        fn infection_rate_monotone(s in 0u64..500, i in 0u64..500, alpha in 0.1f64..2.0, beta in 0.01f64..5.0) {
            let r = ActiveRates::new(alpha, beta, 1.0, 1000).unwrap();
            prop_assert!(r.infection(s + 1, i) >= r.infection(s, i));
            prop_assert!(r.infection(s, i + 1) >= r.infection(s, i));
        }

        #[test]
        fn mass_action_at_alpha_one(s in 0u64..1000, i in 0u64..1000, beta in 0.01f64..5.0) {
            let r = ActiveRates::new(1.0, beta, 1.0, 2000).unwrap();
            prop_assert_eq!(r.infection(s, i), beta * s as f64 * i as f64 / 2000.0);
        }

        #[test]
        fn sub_homogeneous_mixing_is_slower(s in 1u64..1000, i in 2u64..1000, alpha in 0.05f64..0.999, beta in 0.01f64..5.0) {
            let slow = ActiveRates::new(alpha, beta, 1.0, 2000).unwrap();
            let mass = ActiveRates::new(1.0, beta, 1.0, 2000).unwrap();
            prop_assert!(slow.infection(s, i) < mass.infection(s, i));
        }
    }
}
