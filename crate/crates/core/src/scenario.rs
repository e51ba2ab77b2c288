//! Exogenous user events: per-service arrival flags and per-slice departure flags.
//!
//! Arrivals come from drawing a sample of a service's distribution, evaluating
//! its density (or mass) at the sample and comparing against a threshold.
//! Departures are independent per-slice coins, dropped whenever the slice would
//! be empty at the previous step when replayed through the simulator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Discrete};
use thiserror::Error;

use crate::model::NetworkConfig;
use crate::oracle::Stepper;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("threshold {0} must lie strictly between 0 and 1")]
    Threshold(f64),
    #[error("invalid {kind} parameter: {detail}")]
    Parameter { kind: &'static str, detail: String },
    #[error("horizon must be >= 1")]
    EmptyHorizon,
    #[error("no arrival distribution for service {0}")]
    MissingService(u32),
    #[error("departure rate {0} must lie in [0, 1]")]
    DepartureRate(f64),
    #[error("scenario shape mismatch: {0}")]
    Shape(String),
    #[error("config has no scenario_profile")]
    NoProfile,
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Lognormal { mu: f64, sigma: f64 },
    Poisson { rate: f64 },
    Bernoulli { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub distribution: Distribution,
    pub threshold: f64,
}

impl DistributionSpec {
    pub fn new(distribution: Distribution, threshold: f64) -> Result<Self, ScenarioError> {
        let spec = Self {
            distribution,
            threshold,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ScenarioError::Threshold(self.threshold));
        }
        match self.distribution {
            Distribution::Lognormal { mu, sigma } => {
                if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                    return Err(ScenarioError::Parameter {
                        kind: "lognormal",
                        detail: format!("mu={mu}, sigma={sigma}"),
                    });
                }
            }
            Distribution::Poisson { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(ScenarioError::Parameter {
                        kind: "poisson",
                        detail: format!("rate={rate}"),
                    });
                }
            }
            Distribution::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ScenarioError::Parameter {
                        kind: "bernoulli",
                        detail: format!("p={p}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Draws one sample and returns the value compared against the threshold:
    /// the density at the sample for lognormal, the mass at the sample for
    /// poisson, and the 0/1 draw itself for bernoulli.
    fn draw_value<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.distribution {
            Distribution::Lognormal { mu, sigma } => {
                let x = LogNormal::new(mu, sigma).expect("validated").sample(rng);
                statrs::distribution::LogNormal::new(mu, sigma)
                    .expect("validated")
                    .pdf(x)
            }
            Distribution::Poisson { rate } => {
                let k = Poisson::new(rate).expect("validated").sample(rng);
                statrs::distribution::Poisson::new(rate)
                    .expect("validated")
                    .pmf(k as u64)
            }
            Distribution::Bernoulli { p } => {
                if rng.gen_bool(p) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-service arrival distributions plus the departure coin, stored in the
/// config so that scenario intensities are data rather than code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    /// Service id -> arrival distribution.
    pub per_service: BTreeMap<u32, DistributionSpec>,
    pub departure_rate: f64,
}

impl ScenarioProfile {
    pub fn validate(&self, config: &NetworkConfig) -> Result<(), ScenarioError> {
        for service in &config.services {
            self.per_service
                .get(&service.service_id)
                .ok_or(ScenarioError::MissingService(service.service_id))?
                .validate()?;
        }
        if !(0.0..=1.0).contains(&self.departure_rate) {
            return Err(ScenarioError::DepartureRate(self.departure_rate));
        }
        Ok(())
    }
}

/// Exogenous input for one run. `arrivals[mu][j-1]` is the entry flag of
/// service `mu+1` at step `j`; `departures[i][j-1]` the exit flag of slice `i+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub seed: u64,
    #[serde(with = "flag_matrix")]
    pub arrivals: Vec<Vec<bool>>,
    #[serde(with = "flag_matrix")]
    pub departures: Vec<Vec<bool>>,
}

impl ScenarioTrace {
    /// No arrivals and no departures.
    pub fn empty(config: &NetworkConfig) -> Self {
        let t = config.horizon();
        Self {
            seed: 0,
            arrivals: vec![vec![false; t]; config.num_services()],
            departures: vec![vec![false; t]; config.num_slices()],
        }
    }

    pub fn horizon(&self) -> usize {
        self.arrivals.first().map_or(0, Vec::len)
    }

    /// Arrival flag of service index `service` at step `j >= 1`.
    pub fn arrival(&self, service: usize, j: usize) -> bool {
        self.arrivals[service][j - 1]
    }

    pub fn departure(&self, slice: usize, j: usize) -> bool {
        self.departures[slice][j - 1]
    }

    pub fn arrivals_at(&self, j: usize) -> Vec<bool> {
        self.arrivals.iter().map(|row| row[j - 1]).collect()
    }

    pub fn departures_at(&self, j: usize) -> Vec<bool> {
        self.departures.iter().map(|row| row[j - 1]).collect()
    }

    pub fn check_shape(&self, config: &NetworkConfig) -> Result<(), ScenarioError> {
        let t = config.horizon();
        if self.arrivals.len() != config.num_services() {
            return Err(ScenarioError::Shape(format!(
                "{} arrival rows for {} services",
                self.arrivals.len(),
                config.num_services()
            )));
        }
        if self.departures.len() != config.num_slices() {
            return Err(ScenarioError::Shape(format!(
                "{} departure rows for {} slices",
                self.departures.len(),
                config.num_slices()
            )));
        }
        for row in self.arrivals.iter().chain(&self.departures) {
            if row.len() != t {
                return Err(ScenarioError::Shape(format!(
                    "row of length {} for horizon {t}",
                    row.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

mod flag_matrix {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<bool>], s: S) -> Result<S::Ok, S::Error> {
        let bits: Vec<Vec<u8>> = rows
            .iter()
            .map(|row| row.iter().map(|&b| u8::from(b)).collect())
            .collect();
        bits.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<bool>>, D::Error> {
        let bits = Vec::<Vec<u8>>::deserialize(d)?;
        bits.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(D::Error::custom(format!("flag must be 0 or 1, got {other}"))),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Derives an independent sub-seed for stream `stream` of a run seeded with `seed`.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const DEPARTURE_STREAM: u64 = 1 << 32;

/// Thresholded arrival flags for steps `1..=horizon`.
pub fn gen_arrivals(
    spec: &DistributionSpec,
    seed: u64,
    horizon: usize,
) -> Result<Vec<bool>, ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::EmptyHorizon);
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..horizon)
        .map(|_| spec.draw_value(&mut rng) > spec.threshold)
        .collect())
}

/// Generates an admissible scenario for `config`.
pub fn gen_scenario(
    config: &NetworkConfig,
    per_service: &BTreeMap<u32, DistributionSpec>,
    departure_rate: f64,
    seed: u64,
) -> Result<ScenarioTrace, ScenarioError> {
    let horizon = config.horizon();
    if !(0.0..=1.0).contains(&departure_rate) {
        return Err(ScenarioError::DepartureRate(departure_rate));
    }
    let mut arrivals = Vec::with_capacity(config.num_services());
    for service in &config.services {
        let spec = per_service
            .get(&service.service_id)
            .ok_or(ScenarioError::MissingService(service.service_id))?;
        spec.validate()?;
        if horizon == 0 {
            arrivals.push(Vec::new());
        } else {
            let sub = sub_seed(seed, u64::from(service.service_id));
            arrivals.push(gen_arrivals(spec, sub, horizon)?);
        }
    }

    // Coins are drawn up front so the random stream does not depend on the replay.
    let mut coins = Vec::with_capacity(config.num_slices());
    for slice in &config.slices {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(
            seed,
            DEPARTURE_STREAM + u64::from(slice.slice_id),
        ));
        coins.push(
            (0..horizon)
                .map(|_| rng.gen_bool(departure_rate))
                .collect::<Vec<_>>(),
        );
    }

    let mut departures = vec![vec![false; horizon]; config.num_slices()];
    let mut stepper = Stepper::new(config);
    for j in 1..=horizon {
        let wanted: Vec<bool> = (0..config.num_slices())
            .map(|i| coins[i][j - 1] && stepper.state().slices[i].usr > 0)
            .collect();
        for (i, &flag) in wanted.iter().enumerate() {
            departures[i][j - 1] = flag;
        }
        let arrivals_j: Vec<bool> = arrivals.iter().map(|row| row[j - 1]).collect();
        stepper.step_lenient(&arrivals_j, &wanted);
    }

    Ok(ScenarioTrace {
        seed,
        arrivals,
        departures,
    })
}

/// Generates from the config's own `scenario_profile`.
pub fn gen_from_profile(config: &NetworkConfig, seed: u64) -> Result<ScenarioTrace, ScenarioError> {
    let profile = config
        .scenario_profile
        .as_ref()
        .ok_or(ScenarioError::NoProfile)?;
    gen_scenario(config, &profile.per_service, profile.departure_rate, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::simulate;
    use crate::presets;

    fn bernoulli(p: f64) -> DistributionSpec {
        DistributionSpec::new(Distribution::Bernoulli { p }, 0.5).unwrap()
    }

    #[test]
    fn degenerate_bernoulli() {
        for seed in [0, 1, 99] {
            assert_eq!(gen_arrivals(&bernoulli(1.0), seed, 5).unwrap(), vec![true; 5]);
            assert_eq!(gen_arrivals(&bernoulli(0.0), seed, 5).unwrap(), vec![false; 5]);
        }
    }

    /// Mass of `{k : pmf(k) > t}` for a Poisson law, by direct enumeration.
    fn poisson_tail_mass(rate: f64, t: f64) -> f64 {
        let mut pmf = (-rate).exp();
        let mut mass = 0.0;
        for k in 0..200u32 {
            if k > 0 {
                pmf *= rate / f64::from(k);
            }
            if pmf > t {
                mass += pmf;
            }
        }
        mass
    }

    #[test]
    fn poisson_flags_track_tail_mass() {
        let threshold = 0.15;
        let expected = poisson_tail_mass(3.0, threshold);
        // pmf(2) = pmf(3) = 0.2240, pmf(4) = 0.1680 exceed 0.15; pmf(1) = 0.1494 does not
        assert!((expected - 0.6161).abs() < 1e-3, "{expected}");
        let spec = DistributionSpec::new(Distribution::Poisson { rate: 3.0 }, threshold).unwrap();
        let flags = gen_arrivals(&spec, 42, 30).unwrap();
        let frac = flags.iter().filter(|&&f| f).count() as f64 / 30.0;
        assert!((frac - expected).abs() <= 0.15, "{frac} vs {expected}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DistributionSpec::new(Distribution::Bernoulli { p: 0.5 }, 1.0).is_err());
        assert!(DistributionSpec::new(Distribution::Bernoulli { p: 0.5 }, 0.0).is_err());
        assert!(DistributionSpec::new(Distribution::Poisson { rate: 0.0 }, 0.5).is_err());
        assert!(DistributionSpec::new(Distribution::Lognormal { mu: 0.0, sigma: 0.0 }, 0.5).is_err());
        assert!(DistributionSpec::new(Distribution::Bernoulli { p: 1.5 }, 0.5).is_err());
        assert!(matches!(
            gen_arrivals(&bernoulli(0.5), 1, 0),
            Err(ScenarioError::EmptyHorizon)
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = presets::load("3-3-7").unwrap();
        let a = gen_from_profile(&cfg, 17).unwrap();
        let b = gen_from_profile(&cfg, 17).unwrap();
        assert_eq!(a, b);
        let c = gen_from_profile(&cfg, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_departure_rate_means_no_departures() {
        let cfg = presets::load("3-2-4").unwrap();
        let profile = cfg.scenario_profile.clone().unwrap();
        let s = gen_scenario(&cfg, &profile.per_service, 0.0, 5).unwrap();
        assert!(s.departures.iter().flatten().all(|&f| !f));
    }

    #[test]
    fn silent_services_leave_network_empty() {
        let cfg = presets::load("3-2-4").unwrap();
        let per_service = cfg
            .services
            .iter()
            .map(|s| (s.service_id, bernoulli(0.0)))
            .collect();
        let s = gen_scenario(&cfg, &per_service, 0.9, 3).unwrap();
        let trace = simulate(&cfg, &s).unwrap();
        assert!(trace.states.iter().all(|st| st.slices.iter().all(|sl| sl.usr == 0)));
    }

    #[test]
    fn generated_occupancy_never_negative() {
        let cfg = presets::load("3-2-4").unwrap();
        let s = gen_from_profile(&cfg, 1).unwrap();
        let trace = simulate(&cfg, &s).unwrap();
        for state in &trace.states {
            for slice in &state.slices {
                assert!(slice.usr >= 0);
            }
        }
    }

    #[test]
    fn missing_service_is_an_error() {
        let cfg = presets::load("3-2-4").unwrap();
        let mut per_service = cfg.scenario_profile.clone().unwrap().per_service;
        per_service.remove(&2);
        assert!(matches!(
            gen_scenario(&cfg, &per_service, 0.1, 1),
            Err(ScenarioError::MissingService(2))
        ));
    }

    #[test]
    fn json_uses_bit_arrays() {
        let cfg = presets::load("3-2-4").unwrap();
        let s = gen_from_profile(&cfg, 4).unwrap();
        let text = s.to_json();
        assert!(!text.contains("true"));
        assert_eq!(ScenarioTrace::from_json(&text).unwrap(), s);
        assert!(ScenarioTrace::from_json(r#"{"seed":1,"arrivals":[[2]],"departures":[]}"#).is_err());
    }
}
