//! Experiment metrics over a finished trace, and the static over-provisioning
//! baseline used for premium-share comparisons.

use std::io::{Read, Write};

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{fraction_of, NetworkConfig, ThroughputParams};
use crate::oracle::{simulate, SimError};
use crate::ratio::Ratio;
use crate::scenario::ScenarioTrace;
use crate::trace::{AllocationTrace, SliceState, SystemState, TraceIoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub config_name: String,
    pub seed: u64,
    pub total_prbs: u32,
    /// `rp_shr` per timestep.
    pub residual_share: Vec<i64>,
    pub residual_fraction: Vec<f64>,
    pub topup_count: Vec<u64>,
    pub rampdown_count: Vec<u64>,
    pub topup_total: u64,
    pub rampdown_total: u64,
    /// Mbps indexed `[j][slice]`.
    pub throughput_offered: Vec<Vec<f64>>,
    pub premium_share_pct: Vec<f64>,
    /// Arrivals dropped because the residual partition was overused.
    pub blocked_entries: u64,
}

/// One `(j, slice)` line of the metrics series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub j: usize,
    pub slice_id: u32,
    pub shr: i64,
    pub usg: i64,
    pub throughput_mbps: f64,
    pub rp_shr: i64,
    pub residual_fraction: f64,
    pub premium_share_pct: f64,
}

impl MetricsBundle {
    pub fn final_residual_fraction(&self) -> f64 {
        self.residual_fraction.last().copied().unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Series rows with share and usage filled from `trace`.
pub fn series_rows(metrics: &MetricsBundle, trace: &AllocationTrace, config: &NetworkConfig) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for (j, state) in trace.states.iter().enumerate() {
        for (i, s) in state.slices.iter().enumerate() {
            rows.push(SeriesRow {
                j,
                slice_id: config.slices[i].slice_id,
                shr: s.shr,
                usg: s.usg,
                throughput_mbps: metrics.throughput_offered[j][i],
                rp_shr: metrics.residual_share[j],
                residual_fraction: metrics.residual_fraction[j],
                premium_share_pct: metrics.premium_share_pct[j],
            });
        }
    }
    rows
}

pub fn write_series_csv<W: Write>(rows: &[SeriesRow], out: W) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<SeriesRow>, TraceIoError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn premium_total(state: &SystemState, premium: &[usize]) -> i64 {
    premium.iter().map(|&i| state.slices[i].shr).sum()
}

/// Computes the metrics of `trace`. Blocked entries need the scenario; without
/// one they are reported as zero.
pub fn compute_metrics(
    trace: &AllocationTrace,
    config: &NetworkConfig,
    scenario: Option<&ScenarioTrace>,
    params: &ThroughputParams,
) -> MetricsBundle {
    let n = config.num_slices();
    let tp = config.total_prbs;
    let premium = config.premium_slices();
    let per_prb = params.per_prb_mbps();

    let mut topup_count = vec![0; n];
    let mut rampdown_count = vec![0; n];
    for pair in trace.states.windows(2) {
        for i in 0..n {
            let delta = pair[1].slices[i].shr - pair[0].slices[i].shr;
            if delta > 0 {
                topup_count[i] += 1;
            } else if delta < 0 {
                rampdown_count[i] += 1;
            }
        }
    }

    let blocked_entries = scenario.map_or(0, |sc| {
        trace
            .states
            .iter()
            .skip(1)
            .filter(|s| s.rp_ovr && s.j <= sc.horizon())
            .map(|s| sc.arrivals_at(s.j).iter().filter(|&&a| a).count() as u64)
            .sum()
    });

    MetricsBundle {
        config_name: trace.config_name.clone(),
        seed: trace.seed,
        total_prbs: tp,
        residual_share: trace.states.iter().map(|s| s.rp_shr).collect(),
        residual_fraction: trace.states.iter().map(|s| fraction_of(s.rp_shr, tp)).collect(),
        topup_total: topup_count.iter().sum(),
        rampdown_total: rampdown_count.iter().sum(),
        topup_count,
        rampdown_count,
        throughput_offered: trace
            .states
            .iter()
            .map(|s| s.slices.iter().map(|sl| per_prb * sl.usg as f64).collect())
            .collect(),
        premium_share_pct: trace
            .states
            .iter()
            .map(|s| 100.0 * fraction_of(premium_total(s, &premium), tp))
            .collect(),
        blocked_entries,
    }
}

/// Largest premium share of `T_P` reached anywhere in `trace`, exactly.
pub fn running_max_premium_fraction(trace: &AllocationTrace, config: &NetworkConfig) -> Ratio {
    let premium = config.premium_slices();
    let peak = trace
        .states
        .iter()
        .map(|s| premium_total(s, &premium))
        .max()
        .unwrap_or(0);
    Ratio::new(peak, i64::from(config.total_prbs))
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("premium fraction {fraction} of {total_prbs} PRBs gives {granted}, below the premium minimum {needed}")]
    TooSmall {
        fraction: String,
        total_prbs: u32,
        granted: i64,
        needed: i64,
    },
    #[error("premium fraction {fraction} leaves {left} PRBs for slices needing {needed}")]
    TooLarge {
        fraction: String,
        left: i64,
        needed: i64,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Static allocation: premium slices jointly hold `ceil(fraction * T_P)` PRBs
/// from `j = 0` on, every other slice holds its `Ŵ`, and nothing is ever
/// returned. User, usage and window dynamics are copied from the oracle run.
pub fn baseline_overprovision(
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
    premium_fraction: Ratio,
) -> Result<AllocationTrace, BaselineError> {
    let tp = i64::from(config.total_prbs);
    let premium = config.premium_slices();
    let granted = (premium_fraction * Ratio::from_integer(tp))
        .ceil()
        .to_integer();
    let needed: i64 = premium.iter().map(|&i| config.w_hat(i)).sum();
    if granted < needed {
        return Err(BaselineError::TooSmall {
            fraction: premium_fraction.to_string(),
            total_prbs: config.total_prbs,
            granted,
            needed,
        });
    }
    let others: i64 = (0..config.num_slices())
        .filter(|i| !premium.contains(i))
        .map(|i| config.w_hat(i))
        .sum();
    if granted + others > tp {
        return Err(BaselineError::TooLarge {
            fraction: premium_fraction.to_string(),
            left: tp - granted,
            needed: others,
        });
    }

    let mut shares: Vec<i64> = (0..config.num_slices()).map(|i| config.w_hat(i)).collect();
    // round-robin from the lowest premium slice id
    let extra = granted - needed;
    let count = premium.len().max(1) as i64;
    for (rank, &i) in premium.iter().enumerate() {
        shares[i] += extra / count + i64::from((rank as i64) < extra % count);
    }
    let partitions = config.partition_index();
    let pt_shr: Vec<i64> = partitions
        .iter()
        .map(|members| members.iter().map(|&i| shares[i]).sum())
        .collect();
    let rp_shr = tp - shares.iter().sum::<i64>();
    let rp_ovr = config.is_overused(rp_shr);

    let replayed = simulate(config, scenario)?;
    let states = replayed
        .states
        .iter()
        .map(|s| SystemState {
            j: s.j,
            slices: s
                .slices
                .iter()
                .zip(&shares)
                .map(|(sl, &shr)| SliceState {
                    shr,
                    resi: shr - sl.usg,
                    top: false,
                    ramp: false,
                    ..*sl
                })
                .collect(),
            pt_shr: pt_shr.clone(),
            rp_shr,
            rp_ovr,
        })
        .collect();
    Ok(AllocationTrace {
        config_name: format!("{}-baseline", config.name),
        seed: replayed.seed,
        states,
    })
}

/// One timestep of a premium-share comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub j: usize,
    pub allocator_pct: f64,
    pub baseline_pct: f64,
    /// `baseline_pct - allocator_pct`.
    pub gap: f64,
}

pub fn compare_premium(allocator: &MetricsBundle, baseline: &MetricsBundle) -> Vec<ComparisonRow> {
    allocator
        .premium_share_pct
        .iter()
        .zip(&baseline.premium_share_pct)
        .enumerate()
        .map(|(j, (&a, &b))| ComparisonRow {
            j,
            allocator_pct: a,
            baseline_pct: b,
            gap: b - a,
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_comparison_csv<R: Read>(input: R) -> Result<Vec<ComparisonRow>, TraceIoError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Mean, min and max of a series; `None` when empty.
pub fn summarize(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((mean, min, max))
}

/// Converts an exact ratio to `f64` for reporting.
pub fn ratio_to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::scenario::gen_from_profile;

    fn run(seed: u64) -> (NetworkConfig, ScenarioTrace, AllocationTrace) {
        let cfg = presets::load("3-2-4").unwrap();
        let sc = gen_from_profile(&cfg, seed).unwrap();
        let tr = simulate(&cfg, &sc).unwrap();
        (cfg, sc, tr)
    }

    #[test]
    fn constant_trace_has_no_actions() {
        let (cfg, _, mut tr) = run(1);
        let first = tr.states[0].clone();
        for (j, s) in tr.states.iter_mut().enumerate() {
            *s = SystemState { j, ..first.clone() };
        }
        let m = compute_metrics(&tr, &cfg, None, &ThroughputParams::default());
        assert_eq!((m.topup_total, m.rampdown_total), (0, 0));
        assert!(m.topup_count.iter().chain(&m.rampdown_count).all(|&c| c == 0));
    }

    #[test]
    fn premium_top_up_moves_share_pct() {
        let (cfg, _, mut tr) = run(1);
        let first = tr.states[0].clone();
        for (j, s) in tr.states.iter_mut().enumerate() {
            *s = SystemState { j, ..first.clone() };
        }
        let p = cfg.premium_slices()[0];
        for s in &mut tr.states[7..] {
            s.slices[p].shr += 14;
        }
        let m = compute_metrics(&tr, &cfg, None, &ThroughputParams::default());
        let rise = m.premium_share_pct[7] - m.premium_share_pct[6];
        assert!((rise - 1400.0 / f64::from(cfg.total_prbs)).abs() < 1e-9);
        assert_eq!(m.topup_count[p], 1);
    }

    #[test]
    fn counts_match_signed_deltas() {
        for seed in 1..6 {
            let (cfg, sc, tr) = run(seed);
            let m = compute_metrics(&tr, &cfg, Some(&sc), &ThroughputParams::default());
            let mut ups = 0;
            let mut downs = 0;
            for pair in tr.states.windows(2) {
                for i in 0..cfg.num_slices() {
                    let d = pair[1].slices[i].shr - pair[0].slices[i].shr;
                    ups += u64::from(d == cfg.w_hat(i));
                    downs += u64::from(d == -cfg.w_hat(i));
                }
            }
            assert_eq!((m.topup_total, m.rampdown_total), (ups, downs));
        }
    }

    #[test]
    fn throughput_is_per_prb_times_usage() {
        let (cfg, sc, tr) = run(2);
        let params = ThroughputParams::default();
        let m = compute_metrics(&tr, &cfg, Some(&sc), &params);
        let s = &tr.states[20].slices[0];
        assert!((m.throughput_offered[20][0] - s.usg as f64 * params.per_prb_mbps()).abs() < 1e-6);
    }

    #[test]
    fn blocked_entries_count_arrivals_under_overuse() {
        let (cfg, sc, mut tr) = run(3);
        let base = compute_metrics(&tr, &cfg, Some(&sc), &ThroughputParams::default());
        assert_eq!(base.blocked_entries, 0);
        tr.states[4].rp_ovr = true;
        let m = compute_metrics(&tr, &cfg, Some(&sc), &ThroughputParams::default());
        let arrivals = sc.arrivals_at(4).iter().filter(|&&a| a).count() as u64;
        assert_eq!(m.blocked_entries, arrivals);
    }

    #[test]
    fn json_and_series_round_trip() {
        let (cfg, sc, tr) = run(4);
        let m = compute_metrics(&tr, &cfg, Some(&sc), &ThroughputParams::default());
        assert_eq!(MetricsBundle::from_json(&m.to_json()).unwrap(), m);
        let rows = series_rows(&m, &tr, &cfg);
        assert_eq!(rows.len(), 31 * 4);
        let mut buf = Vec::new();
        write_series_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_series_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn baseline_at_exact_minimum_matches_initial_share() {
        let (cfg, sc, tr) = run(1);
        let needed: i64 = cfg.premium_slices().iter().map(|&i| cfg.w_hat(i)).sum();
        let frac = Ratio::new(needed, i64::from(cfg.total_prbs));
        let base = baseline_overprovision(&cfg, &sc, frac).unwrap();
        let params = ThroughputParams::default();
        let a = compute_metrics(&tr, &cfg, None, &params);
        let b = compute_metrics(&base, &cfg, None, &params);
        assert_eq!(a.premium_share_pct[0], b.premium_share_pct[0]);
    }

    #[test]
    fn baseline_is_static_and_replays_users() {
        let (cfg, sc, tr) = run(2);
        let base = baseline_overprovision(&cfg, &sc, Ratio::new(2, 5)).unwrap();
        let premium: i64 = cfg.premium_slices().iter().map(|&i| base.states[0].slices[i].shr).sum();
        assert_eq!(premium, 80);
        for (b, o) in base.states.iter().zip(&tr.states) {
            assert_eq!(b.rp_shr, base.states[0].rp_shr);
            for (bs, os) in b.slices.iter().zip(&o.slices) {
                assert_eq!((bs.usr, bs.usg, bs.entries), (os.usr, os.usg, os.entries));
                assert_eq!(bs.resi, bs.shr - bs.usg);
            }
            assert_eq!(b.rp_shr + b.pt_shr.iter().sum::<i64>(), i64::from(cfg.total_prbs));
        }
    }

    #[test]
    fn baseline_on_empty_scenario_is_constant() {
        let cfg = presets::load("3-2-4").unwrap();
        let base = baseline_overprovision(&cfg, &ScenarioTrace::empty(&cfg), Ratio::new(1, 4)).unwrap();
        assert!(base.states.windows(2).all(|p| p[0].slices == p[1].slices && p[0].rp_shr == p[1].rp_shr));
    }

    #[test]
    fn baseline_rejects_infeasible_fractions() {
        let cfg = presets::load("3-2-4").unwrap();
        let sc = ScenarioTrace::empty(&cfg);
        assert!(matches!(
            baseline_overprovision(&cfg, &sc, Ratio::new(1, 100)),
            Err(BaselineError::TooSmall { .. })
        ));
        assert!(matches!(
            baseline_overprovision(&cfg, &sc, Ratio::from_integer(1)),
            Err(BaselineError::TooLarge { .. })
        ));
    }

    #[test]
    fn baseline_dominates_at_running_max() {
        for seed in 1..11 {
            let (cfg, sc, tr) = run(seed);
            let frac = running_max_premium_fraction(&tr, &cfg);
            let base = baseline_overprovision(&cfg, &sc, frac).unwrap();
            let params = ThroughputParams::default();
            let rows = compare_premium(
                &compute_metrics(&tr, &cfg, None, &params),
                &compute_metrics(&base, &cfg, None, &params),
            );
            assert_eq!(rows.len(), 31);
            assert!(rows.iter().all(|r| r.gap >= 0.0), "seed {seed}");
            let mut buf = Vec::new();
            write_comparison_csv(&rows, &mut buf).unwrap();
            assert_eq!(read_comparison_csv(buf.as_slice()).unwrap(), rows);
        }
    }
}
