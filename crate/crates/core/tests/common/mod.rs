#![allow(dead_code)]

use std::collections::BTreeMap;
use std::process::{Command, Stdio};

use proptest::prelude::*;
use slicealloc_core::scenario::{gen_scenario, Distribution, DistributionSpec};
use slicealloc_core::{NetworkConfig, ScenarioTrace, ServiceSpec, SliceSpec};

/// True when `z3` can be spawned from `PATH`.
pub fn z3_available() -> bool {
    Command::new("z3")
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

/// Raw choices for one generated config.
#[derive(Debug, Clone)]
pub struct Shape {
    /// Per service, the PRB consumption `m`, sorted ascending.
    pub m: Vec<u32>,
    /// Per partition, `(service index, t_win)` per slice.
    pub partitions: Vec<Vec<(usize, u32)>>,
    pub extra_prbs: u32,
    pub horizon: u32,
}

pub fn shape() -> impl Strategy<Value = Shape> {
    (1usize..=3)
        .prop_flat_map(|services| {
            (
                proptest::collection::vec(1u32..=4, services),
                proptest::collection::vec(
                    proptest::collection::vec((0..services, 1u32..=12), 1..=3),
                    1..=3,
                ),
                0u32..=30,
                1u32..=16,
            )
        })
        .prop_map(|(mut m, partitions, extra_prbs, horizon)| {
            m.sort_unstable();
            Shape {
                m,
                partitions,
                extra_prbs,
                horizon,
            }
        })
}

/// Builds a valid config from `shape`; services without a slice get one in the
/// first partition.
pub fn build(shape: &Shape) -> NetworkConfig {
    let mut parts = shape.partitions.clone();
    for mu in 0..shape.m.len() {
        if !parts.iter().flatten().any(|&(s, _)| s == mu) {
            parts[0].push((mu, 4));
        }
    }
    let mut slices = Vec::new();
    let mut partitions = BTreeMap::new();
    for (k, members) in parts.iter().enumerate() {
        let mut ids = Vec::new();
        for &(mu, t_win) in members {
            let id = slices.len() as u32 + 1;
            slices.push(SliceSpec {
                slice_id: id,
                service_id: mu as u32 + 1,
                partition_id: k as u32 + 1,
                t_win,
                m: shape.m[mu],
            });
            ids.push(id);
        }
        partitions.insert(k as u32 + 1, ids);
    }
    let services = (0..shape.m.len())
        .map(|mu| ServiceSpec {
            service_id: mu as u32 + 1,
            name: format!("svc{}", mu + 1),
            priority_rank: mu as u32 + 1,
            provision: slices.iter().filter(|s| s.service_id == mu as u32 + 1).count() >= 2,
        })
        .collect();
    let w: u32 = slices.iter().map(|s: &SliceSpec| s.w_hat()).sum();
    let config = NetworkConfig {
        name: "generated".into(),
        services,
        slices,
        partitions,
        total_prbs: 2 * w + shape.extra_prbs,
        horizon: shape.horizon,
        overuse_fraction: slicealloc_core::ratio::Ratio::new(1, 2),
        timestep_minutes: slicealloc_core::ratio::Ratio::from_integer(1),
        scenario_profile: None,
    };
    config.validate().expect("generated config is valid");
    config
}

/// Scenario with Bernoulli arrivals of probability `p` per service.
pub fn scenario(config: &NetworkConfig, p: &[f64], departure_rate: f64, seed: u64) -> ScenarioTrace {
    let per_service = config
        .services
        .iter()
        .zip(p.iter().cycle())
        .map(|(s, &p)| {
            (
                s.service_id,
                DistributionSpec::new(Distribution::Bernoulli { p }, 0.5).unwrap(),
            )
        })
        .collect();
    gen_scenario(config, &per_service, departure_rate, seed).unwrap()
}
