//! Network topology, configuration validation and closed-form formulas.
//!
//! A [`NetworkConfig`] describes services, partitions and slices together with
//! the PRB budget and horizon. All identifiers are 1-based and contiguous; the
//! rest of the crate indexes slices, services and partitions by `id - 1`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio::{self, Ratio};
use crate::scenario::ScenarioProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{what} ids must be contiguous 1..{expected}, found id {found} at position {position}")]
    NonContiguous {
        what: &'static str,
        expected: usize,
        found: u32,
        position: usize,
    },
    #[error("config has no {0}")]
    Empty(&'static str),
    #[error("slice {slice} references unknown service {service}")]
    UnknownService { slice: u32, service: u32 },
    #[error("slice {slice} references unknown partition {partition}")]
    UnknownPartition { slice: u32, partition: u32 },
    #[error("slice {slice} is listed in partition {listed} but declares partition {declared}")]
    PartitionMismatch {
        slice: u32,
        listed: u32,
        declared: u32,
    },
    #[error("slice {0} appears in more than one partition list")]
    DuplicateMembership(u32),
    #[error("slice {0} is not a member of any partition")]
    Unassigned(u32),
    #[error("partition list references unknown slice {0}")]
    UnknownSlice(u32),
    #[error("slice {slice}: {field} must be >= 1")]
    NonPositive { slice: u32, field: &'static str },
    #[error("service {service} declares provision={declared} but owns {owned} slice(s)")]
    ProvisionMismatch {
        service: u32,
        declared: bool,
        owned: usize,
    },
    #[error("service {0} owns no slices")]
    ServiceWithoutSlices(u32),
    #[error(
        "priority ordering violated: slice {high} (rank {high_rank}, m={high_m}) has larger \
         consumption than slice {low} (rank {low_rank}, m={low_m})"
    )]
    PriorityOrdering {
        high: u32,
        high_rank: u32,
        high_m: u32,
        low: u32,
        low_rank: u32,
        low_m: u32,
    },
    #[error("overuse fraction {0} must lie in (0, 1]")]
    OveruseFraction(Ratio),
    #[error("timestep length {0} must be positive")]
    TimestepLength(Ratio),
    #[error("total_prbs must be positive")]
    ZeroBudget,
    #[error(
        "PRB budget infeasible: initial slice shares {initial} plus residual floor {floor} \
         exceed total {total}"
    )]
    BudgetInfeasible { initial: u64, floor: u64, total: u64 },
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("scenario profile: {0}")]
    Profile(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("{0} must be >= 1")]
    NonPositive(&'static str),
    #[error("overhead {0} must lie in [0, 1)")]
    Overhead(f64),
    #[error("derate {0} must lie in (0, 1]")]
    Derate(f64),
    #[error("throughput parameter {0} must be positive")]
    Parameter(&'static str),
    #[error("constraint count overflows u64")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub service_id: u32,
    pub name: String,
    /// Lower rank means higher priority.
    pub priority_rank: u32,
    /// True iff the service owns slices in more than one partition.
    pub provision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub slice_id: u32,
    pub service_id: u32,
    pub partition_id: u32,
    /// Window length in timesteps; shares only move at multiples of it.
    pub t_win: u32,
    /// Users sharing one PRB.
    pub m: u32,
}

impl SliceSpec {
    /// Share granted or removed by one top-up or ramp-down action.
    pub fn w_hat(&self) -> u32 {
        self.t_win.div_ceil(self.m.max(1))
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        j >= 1 && j % self.t_win as usize == 0
    }
}

fn default_overuse() -> Ratio {
    Ratio::new(1, 2)
}

fn default_timestep() -> Ratio {
    Ratio::from_integer(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub services: Vec<ServiceSpec>,
    pub slices: Vec<SliceSpec>,
    /// Partition id -> ordered member slice ids.
    pub partitions: BTreeMap<u32, Vec<u32>>,
    pub total_prbs: u32,
    pub horizon: u32,
    #[serde(default = "default_overuse", with = "ratio::serde_str")]
    pub overuse_fraction: Ratio,
    /// Wall-clock length of one timestep in minutes. Metadata only.
    #[serde(default = "default_timestep", with = "ratio::serde_str")]
    pub timestep_minutes: Ratio,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_profile: Option<ScenarioProfile>,
}

impl NetworkConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: NetworkConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn num_services(&self) -> usize {
        self.services.len()
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon as usize
    }

    /// `(S, K, N)` triple.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_services(), self.num_partitions(), self.num_slices())
    }

    pub fn w_hat(&self, slice_idx: usize) -> i64 {
        i64::from(self.slices[slice_idx].w_hat())
    }

    pub fn total_w_hat(&self) -> u64 {
        self.slices.iter().map(|s| u64::from(s.w_hat())).sum()
    }

    /// Minimum residual share `ceil(x * T_P)` below which the residual
    /// partition counts as overused.
    pub fn residual_floor(&self) -> u64 {
        let floor = (self.overuse_fraction * Ratio::from_integer(i64::from(self.total_prbs))).ceil();
        floor.to_integer().max(0) as u64
    }

    /// `rp < x * T_P`, evaluated exactly.
    pub fn is_overused(&self, rp_shr: i64) -> bool {
        let x = self.overuse_fraction;
        i128::from(rp_shr) * i128::from(*x.denom())
            < i128::from(*x.numer()) * i128::from(self.total_prbs)
    }

    /// Zero-based slice indices of partition `k` (1-based id), in list order.
    pub fn partition_members(&self, partition_id: u32) -> Vec<usize> {
        self.partitions
            .get(&partition_id)
            .map(|ids| ids.iter().map(|&id| id as usize - 1).collect())
            .unwrap_or_default()
    }

    /// Zero-based slice indices per partition, ordered by partition id.
    pub fn partition_index(&self) -> Vec<Vec<usize>> {
        self.partitions
            .values()
            .map(|ids| ids.iter().map(|&id| id as usize - 1).collect())
            .collect()
    }

    /// Zero-based slice indices owned by each service, ascending slice id.
    pub fn service_index(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_services()];
        for (idx, slice) in self.slices.iter().enumerate() {
            out[slice.service_id as usize - 1].push(idx);
        }
        out
    }

    /// Services sharing the best (lowest) priority rank.
    pub fn premium_services(&self) -> Vec<u32> {
        let best = self.services.iter().map(|s| s.priority_rank).min();
        self.services
            .iter()
            .filter(|s| Some(s.priority_rank) == best)
            .map(|s| s.service_id)
            .collect()
    }

    pub fn premium_slices(&self) -> Vec<usize> {
        let premium = self.premium_services();
        self.slices
            .iter()
            .enumerate()
            .filter(|(_, s)| premium.contains(&s.service_id))
            .map(|(idx, _)| idx)
            .collect()
    }

    pub fn initial_residual(&self) -> i64 {
        i64::from(self.total_prbs) - self.total_w_hat() as i64
    }

    /// Same topology under a different budget and horizon.
    pub fn with_overrides(&self, total_prbs: Option<u32>, horizon: Option<u32>) -> Self {
        let mut out = self.clone();
        if let Some(tp) = total_prbs {
            out.total_prbs = tp;
        }
        if let Some(t) = horizon {
            out.horizon = t;
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.services.is_empty() {
            return Err(ConfigError::Empty("services"));
        }
        if self.slices.is_empty() {
            return Err(ConfigError::Empty("slices"));
        }
        if self.partitions.is_empty() {
            return Err(ConfigError::Empty("partitions"));
        }
        check_contiguous("service", self.services.iter().map(|s| s.service_id))?;
        check_contiguous("slice", self.slices.iter().map(|s| s.slice_id))?;
        check_contiguous("partition", self.partitions.keys().copied())?;

        let n = self.slices.len();
        for slice in &self.slices {
            if slice.t_win == 0 {
                return Err(ConfigError::NonPositive {
                    slice: slice.slice_id,
                    field: "t_win",
                });
            }
            if slice.m == 0 {
                return Err(ConfigError::NonPositive {
                    slice: slice.slice_id,
                    field: "m",
                });
            }
            if slice.service_id == 0 || slice.service_id as usize > self.services.len() {
                return Err(ConfigError::UnknownService {
                    slice: slice.slice_id,
                    service: slice.service_id,
                });
            }
            if !self.partitions.contains_key(&slice.partition_id) {
                return Err(ConfigError::UnknownPartition {
                    slice: slice.slice_id,
                    partition: slice.partition_id,
                });
            }
        }

        let mut owner = vec![None; n];
        for (&k, members) in &self.partitions {
            for &id in members {
                if id == 0 || id as usize > n {
                    return Err(ConfigError::UnknownSlice(id));
                }
                let slot = &mut owner[id as usize - 1];
                if slot.is_some() {
                    return Err(ConfigError::DuplicateMembership(id));
                }
                *slot = Some(k);
                let declared = self.slices[id as usize - 1].partition_id;
                if declared != k {
                    return Err(ConfigError::PartitionMismatch {
                        slice: id,
                        listed: k,
                        declared,
                    });
                }
            }
        }
        if let Some(idx) = owner.iter().position(Option::is_none) {
            return Err(ConfigError::Unassigned(idx as u32 + 1));
        }

        for (service, owned) in self.services.iter().zip(self.service_index()) {
            if owned.is_empty() {
                return Err(ConfigError::ServiceWithoutSlices(service.service_id));
            }
            if service.provision != (owned.len() >= 2) {
                return Err(ConfigError::ProvisionMismatch {
                    service: service.service_id,
                    declared: service.provision,
                    owned: owned.len(),
                });
            }
        }

        // Higher priority never consumes a PRB with more users than lower priority.
        for a in &self.slices {
            for b in &self.slices {
                let rank_a = self.services[a.service_id as usize - 1].priority_rank;
                let rank_b = self.services[b.service_id as usize - 1].priority_rank;
                if rank_a < rank_b && a.m > b.m {
                    return Err(ConfigError::PriorityOrdering {
                        high: a.slice_id,
                        high_rank: rank_a,
                        high_m: a.m,
                        low: b.slice_id,
                        low_rank: rank_b,
                        low_m: b.m,
                    });
                }
            }
        }

        let x = self.overuse_fraction;
        if x <= Ratio::zero() || x > Ratio::from_integer(1) {
            return Err(ConfigError::OveruseFraction(x));
        }
        if self.timestep_minutes <= Ratio::zero() {
            return Err(ConfigError::TimestepLength(self.timestep_minutes));
        }
        if self.total_prbs == 0 {
            return Err(ConfigError::ZeroBudget);
        }
        let initial = self.total_w_hat();
        let floor = self.residual_floor();
        let total = u64::from(self.total_prbs);
        if initial + floor > total {
            return Err(ConfigError::BudgetInfeasible {
                initial,
                floor,
                total,
            });
        }
        if let Some(profile) = &self.scenario_profile {
            profile
                .validate(self)
                .map_err(|e| ConfigError::Profile(e.to_string()))?;
        }
        Ok(())
    }
}

fn check_contiguous(
    what: &'static str,
    ids: impl ExactSizeIterator<Item = u32>,
) -> Result<(), ConfigError> {
    let expected = ids.len();
    for (position, id) in ids.enumerate() {
        if id as usize != position + 1 {
            return Err(ConfigError::NonContiguous {
                what,
                expected,
                found: id,
                position,
            });
        }
    }
    Ok(())
}

/// Largest PRB usage a slice can reach within one window, `ceil(t_win / m)`.
pub fn max_window_usage(t_win: u32, m: u32) -> Result<u32, FormulaError> {
    if t_win == 0 {
        return Err(FormulaError::NonPositive("t_win"));
    }
    if m == 0 {
        return Err(FormulaError::NonPositive("m"));
    }
    Ok(t_win.div_ceil(m))
}

/// Link parameters of the peak-rate throughput formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputParams {
    pub mimo_layers: u32,
    pub modulation_order: f64,
    pub scaling: f64,
    pub r_max: f64,
    pub numerology: u32,
    pub n_prb_bw: u32,
    pub overhead: f64,
    /// Fraction of peak rate treated as the offered rate.
    pub derate: f64,
}

impl Default for ThroughputParams {
    fn default() -> Self {
        Self {
            mimo_layers: 8,
            modulation_order: 64.0,
            scaling: 1.0,
            r_max: 948.0 / 1024.0,
            numerology: 1,
            n_prb_bw: 38,
            overhead: 0.14,
            derate: 0.8,
        }
    }
}

impl ThroughputParams {
    pub fn validate(&self) -> Result<(), FormulaError> {
        if !(0.0..1.0).contains(&self.overhead) {
            return Err(FormulaError::Overhead(self.overhead));
        }
        if !(self.derate > 0.0 && self.derate <= 1.0) {
            return Err(FormulaError::Derate(self.derate));
        }
        if self.mimo_layers == 0 {
            return Err(FormulaError::Parameter("mimo_layers"));
        }
        if self.n_prb_bw == 0 {
            return Err(FormulaError::Parameter("n_prb_bw"));
        }
        for (name, value) in [
            ("modulation_order", self.modulation_order),
            ("scaling", self.scaling),
            ("r_max", self.r_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(FormulaError::Parameter(name));
            }
        }
        Ok(())
    }

    /// Average OFDM symbol duration in seconds.
    pub fn symbol_duration(&self) -> f64 {
        1e-3 / (14.0 * f64::from(1u32 << self.numerology))
    }

    /// Derated throughput contributed by a single PRB, in Mbps.
    pub fn per_prb_mbps(&self) -> f64 {
        let per_symbol = f64::from(self.mimo_layers)
            * self.modulation_order
            * self.scaling
            * self.r_max
            * (f64::from(self.n_prb_bw) * 12.0 / self.symbol_duration())
            * (1.0 - self.overhead);
        1e-6 * per_symbol * self.derate
    }
}

/// Throughput summed over `prbs` identical PRB terms.
pub fn nominal_throughput(params: &ThroughputParams, prbs: u64) -> Result<f64, FormulaError> {
    params.validate()?;
    let per_prb = params.per_prb_mbps();
    Ok((0..prbs).map(|_| per_prb).sum())
}

/// Offered throughput per PRB under the default link parameters (~4163.798 Mbps).
pub static THROUGHPUT_PER_PRB: LazyLock<f64> =
    LazyLock::new(|| ThroughputParams::default().per_prb_mbps());

/// Offered throughput in Mbps for a PRB usage of `prbs`.
pub fn throughput(prbs: u64) -> f64 {
    *THROUGHPUT_PER_PRB * prbs as f64
}

/// Asymptotic constraint count `T * (6N + sum 3^r_k + 3^K + sum 2 n_mu)`.
pub fn constraint_count_bound(config: &NetworkConfig) -> Result<u64, FormulaError> {
    let t = u64::from(config.horizon);
    let n = config.num_slices() as u64;
    let mut per_step = n.checked_mul(6).ok_or(FormulaError::Overflow)?;
    for members in config.partitions.values() {
        let r = u32::try_from(members.len()).map_err(|_| FormulaError::Overflow)?;
        let term = 3u64.checked_pow(r).ok_or(FormulaError::Overflow)?;
        per_step = per_step.checked_add(term).ok_or(FormulaError::Overflow)?;
    }
    let k = u32::try_from(config.num_partitions()).map_err(|_| FormulaError::Overflow)?;
    per_step = per_step
        .checked_add(3u64.checked_pow(k).ok_or(FormulaError::Overflow)?)
        .ok_or(FormulaError::Overflow)?;
    for owned in config.service_index() {
        per_step = per_step
            .checked_add(2 * owned.len() as u64)
            .ok_or(FormulaError::Overflow)?;
    }
    t.checked_mul(per_step).ok_or(FormulaError::Overflow)
}

/// Fraction helper used by metrics.
pub fn fraction_of(value: i64, total: u32) -> f64 {
    value.to_f64().unwrap_or(f64::NAN) / f64::from(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn window_usage_examples() {
        assert_eq!(max_window_usage(28, 2), Ok(14));
        assert_eq!(max_window_usage(40, 3), Ok(14));
        assert_eq!(max_window_usage(1, 1), Ok(1));
        assert!(max_window_usage(0, 2).is_err());
        assert!(max_window_usage(3, 0).is_err());
    }

    #[test]
    fn window_usage_is_a_ceiling() {
        for t in 1..=60 {
            for m in 1..=12 {
                let w = max_window_usage(t, m).unwrap();
                assert!(w * m >= t);
                assert!((w - 1) * m < t);
            }
        }
    }

    #[test]
    fn throughput_examples() {
        assert!((throughput(1) - 4163.798).abs() < 1e-3);
        assert_eq!(throughput(0), 0.0);
        assert!((throughput(14) - 58293.172).abs() < 1e-3);
    }

    #[test]
    fn nominal_throughput_examples() {
        let params = ThroughputParams::default();
        assert!((nominal_throughput(&params, 1).unwrap() - 4163.798).abs() < 1e-3);
        assert_eq!(nominal_throughput(&params, 0).unwrap(), 0.0);
        let peak = ThroughputParams {
            derate: 1.0,
            ..params
        };
        assert!((nominal_throughput(&peak, 1).unwrap() - 5204.7475).abs() < 1e-3);
    }

    #[test]
    fn nominal_throughput_rejects_bad_params() {
        let params = ThroughputParams {
            overhead: 1.0,
            ..Default::default()
        };
        assert_eq!(nominal_throughput(&params, 3), Err(FormulaError::Overhead(1.0)));
        let params = ThroughputParams {
            n_prb_bw: 0,
            ..Default::default()
        };
        assert!(nominal_throughput(&params, 3).is_err());
        let params = ThroughputParams {
            derate: 0.0,
            ..Default::default()
        };
        assert!(nominal_throughput(&params, 3).is_err());
    }

    #[test]
    fn nominal_and_offered_agree() {
        let params = ThroughputParams::default();
        for j in 0..=1000u64 {
            let a = nominal_throughput(&params, j).unwrap();
            assert!((a - throughput(j)).abs() < 1e-3, "j={j}");
        }
    }

    #[test]
    fn throughput_is_linear() {
        for a in 0..50u64 {
            for b in 0..50u64 {
                let lhs = throughput(a + b);
                let rhs = throughput(a) + throughput(b);
                assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
            }
        }
    }

    #[test]
    fn constraint_bound_examples() {
        let cfg = presets::load("3-2-4").unwrap();
        assert_eq!(cfg.horizon, 30);
        assert_eq!(constraint_count_bound(&cfg), Ok(1770));
        let cfg = presets::load("3-3-7").unwrap();
        assert_eq!(constraint_count_bound(&cfg), Ok(3840));
        let cfg = presets::load("3-2-4").unwrap().with_overrides(None, Some(0));
        assert_eq!(constraint_count_bound(&cfg), Ok(0));
    }

    #[test]
    fn constraint_bound_overflow_is_reported() {
        let mut cfg = presets::load("3-2-4").unwrap();
        let all: Vec<u32> = (1..=4).collect();
        // 3^45 overflows u64; build a fake partition list of that length.
        cfg.partitions.insert(1, all.iter().cycle().take(45).copied().collect());
        assert_eq!(constraint_count_bound(&cfg), Err(FormulaError::Overflow));
    }

    #[test]
    fn budget_rule() {
        let cfg = presets::load("5-4-13").unwrap();
        assert!(cfg.validate().is_ok());
        let small = cfg.with_overrides(Some(100), None);
        assert!(matches!(
            small.validate(),
            Err(ConfigError::BudgetInfeasible { .. })
        ));
        for name in presets::NAMES {
            let cfg = presets::load(name).unwrap();
            let initial = cfg.total_w_hat();
            for tp in [1u32, 50, 99, 100, 150, 200, 300] {
                let c = cfg.with_overrides(Some(tp), None);
                let feasible = initial + c.residual_floor() <= u64::from(tp);
                assert_eq!(c.validate().is_ok(), feasible, "{name} T_P={tp}");
            }
        }
    }

    #[test]
    fn validation_catches_topology_errors() {
        let base = presets::load("3-2-4").unwrap();

        let mut cfg = base.clone();
        cfg.slices[1].m = 1; // normal slice now cheaper than premium (m=2)
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::PriorityOrdering { .. })
        ));

        let mut cfg = base.clone();
        cfg.services[0].provision = false;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::ProvisionMismatch { .. })
        ));

        let mut cfg = base.clone();
        cfg.partitions.get_mut(&2).unwrap().push(1);
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::DuplicateMembership(1))
        ));

        let mut cfg = base.clone();
        cfg.partitions.get_mut(&2).unwrap().retain(|&id| id != 4);
        assert!(matches!(cfg.validate(), Err(ConfigError::Unassigned(4))));

        let mut cfg = base.clone();
        cfg.slices[0].t_win = 0;
        assert!(matches!(cfg.validate(), Err(ConfigError::NonPositive { .. })));

        let mut cfg = base.clone();
        cfg.slices.swap(0, 1);
        assert!(matches!(cfg.validate(), Err(ConfigError::NonContiguous { .. })));

        let mut cfg = base;
        cfg.overuse_fraction = Ratio::new(3, 2);
        assert!(matches!(cfg.validate(), Err(ConfigError::OveruseFraction(_))));
    }

    #[test]
    fn overuse_test_is_exact() {
        let mut cfg = presets::load("3-2-4").unwrap();
        cfg.total_prbs = 201;
        // floor is 100.5: 100 is overused, 101 is not
        assert!(cfg.is_overused(100));
        assert!(!cfg.is_overused(101));
        assert_eq!(cfg.residual_floor(), 101);
    }

    #[test]
    fn json_round_trip() {
        let cfg = presets::load("3-3-7").unwrap();
        let back = NetworkConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }
}
