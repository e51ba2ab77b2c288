//! Trace-level property checks.
//!
//! [`check_all`] evaluates the ten allocation invariants listed in
//! [`PROPERTIES`] plus the supporting checks in [`SUPPORTING`], recording for
//! each the first offending timestep and the offending values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::model::NetworkConfig;
use crate::trace::{AllocationTrace, SystemState, TraceIoError};

pub const PROPERTIES: [&str; 10] = [
    "conservation",
    "partition_consistency",
    "slice_accounting",
    "share_immobility",
    "share_quantization",
    "signal_exclusion",
    "fairness",
    "optimality",
    "topup_gating",
    "argmin_assignment",
];

pub const SUPPORTING: [&str; 5] = [
    "trace_shape",
    "initial_state",
    "nonnegativity",
    "overuse_flag",
    "user_count_step",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub first_violation_timestep: Option<usize>,
    /// Number of timesteps with at least one violation.
    pub violations: usize,
    /// Offending values at the first violation.
    pub details: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub results: Vec<PropertyResult>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TraceIoError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.results {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TraceIoError> {
        let mut r = csv::Reader::from_reader(input);
        let results = r.deserialize().collect::<Result<_, _>>()?;
        Ok(Self { results })
    }
}

type Check<'a> = dyn Fn(usize) -> Option<String> + 'a;

fn scan(name: &str, steps: impl Iterator<Item = usize>, check: &Check<'_>) -> PropertyResult {
    let mut first = None;
    let mut violations = 0;
    for j in steps {
        if let Some(detail) = check(j) {
            violations += 1;
            if first.is_none() {
                first = Some((j, detail));
            }
        }
    }
    PropertyResult {
        name: name.to_string(),
        passed: first.is_none(),
        first_violation_timestep: first.as_ref().map(|(j, _)| *j),
        violations,
        details: first.map(|(_, d)| d),
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b) + i64::from(a.rem_euclid(b) != 0)
}

/// First failing slice check at state `s`, formatted with the slice id.
fn per_slice(s: &SystemState, f: impl Fn(usize) -> Option<String>) -> Option<String> {
    (0..s.slices.len()).find_map(|i| f(i).map(|d| format!("slice {}: {d}", i + 1)))
}

fn shape_problem(trace: &AllocationTrace, config: &NetworkConfig) -> Option<(usize, String)> {
    if trace.states.len() != config.horizon() + 1 {
        return Some((
            0,
            format!("{} states for horizon {}", trace.states.len(), config.horizon()),
        ));
    }
    trace.states.iter().enumerate().find_map(|(j, s)| {
        if s.j != j {
            Some((j, format!("state {j} labelled j={}", s.j)))
        } else if s.slices.len() != config.num_slices() || s.pt_shr.len() != config.num_partitions() {
            Some((
                j,
                format!("{} slices / {} partitions", s.slices.len(), s.pt_shr.len()),
            ))
        } else {
            None
        }
    })
}

/// Evaluates every property on `trace`.
pub fn check_all(trace: &AllocationTrace, config: &NetworkConfig) -> PropertyReport {
    if let Some((j, detail)) = shape_problem(trace, config) {
        let results = SUPPORTING
            .iter()
            .chain(PROPERTIES.iter())
            .map(|name| PropertyResult {
                name: name.to_string(),
                passed: false,
                first_violation_timestep: Some(j),
                violations: 1,
                details: Some(if *name == "trace_shape" {
                    detail.clone()
                } else {
                    "not evaluated: malformed trace".into()
                }),
            })
            .collect();
        return PropertyReport { results };
    }

    let st = &trace.states;
    let w: Vec<i64> = (0..config.num_slices()).map(|i| config.w_hat(i)).collect();
    let partitions = config.partition_index();
    let services = config.service_index();
    let total = i64::from(config.total_prbs);
    let all = || 0..st.len();
    let steps = || 1..st.len();
    let delta = |j: usize, i: usize| st[j].slices[i].shr - st[j - 1].slices[i].shr;

    let mut results = vec![PropertyResult {
        name: "trace_shape".into(),
        passed: true,
        first_violation_timestep: None,
        violations: 0,
        details: None,
    }];

    let initial = crate::trace::SystemState::initial(config);
    results.push(scan("initial_state", 0..1, &|_| {
        (st[0] != initial).then(|| format!("expected {initial:?}, got {:?}", st[0]))
    }));

    results.push(scan("nonnegativity", all(), &|j| {
        let s = &st[j];
        per_slice(s, |i| {
            let x = &s.slices[i];
            [("usr", x.usr), ("shr", x.shr), ("usg", x.usg), ("E", x.entries)]
                .into_iter()
                .find(|(_, v)| *v < 0)
                .map(|(n, v)| format!("{n} = {v}"))
        })
        .or_else(|| {
            s.pt_shr
                .iter()
                .position(|&p| p < 0)
                .map(|k| format!("pt_shr_{} = {}", k + 1, s.pt_shr[k]))
        })
        .or_else(|| (s.rp_shr < 0).then(|| format!("rp_shr = {}", s.rp_shr)))
    }));

    results.push(scan("overuse_flag", all(), &|j| {
        let basis = if j == 0 { st[0].rp_shr } else { st[j - 1].rp_shr };
        let expected = config.is_overused(basis);
        (st[j].rp_ovr != expected).then(|| {
            format!(
                "rp_ovr = {} but residual {basis} vs floor {}",
                st[j].rp_ovr,
                config.overuse_fraction * crate::ratio::Ratio::from_integer(total)
            )
        })
    }));

    results.push(scan("user_count_step", steps(), &|j| {
        per_slice(&st[j], |i| {
            let (p, s) = (&st[j - 1].slices[i], &st[j].slices[i]);
            let expected = match (s.en, s.lv) {
                (true, false) => p.usr + 1,
                (false, true) => p.usr - 1,
                _ => p.usr,
            };
            (s.usr != expected).then(|| {
                format!("usr {} -> {} with en={} lv={}", p.usr, s.usr, s.en, s.lv)
            })
        })
    }));

    results.push(scan("conservation", all(), &|j| {
        let by_partition: i64 = st[j].pt_shr.iter().sum::<i64>() + st[j].rp_shr;
        let by_slice: i64 = st[j].total_slice_share() + st[j].rp_shr;
        if by_partition != total {
            Some(format!(
                "sum pt_shr {:?} + rp_shr {} = {by_partition} != {total}",
                st[j].pt_shr, st[j].rp_shr
            ))
        } else if by_slice != total {
            Some(format!(
                "sum shr {} + rp_shr {} = {by_slice} != {total}",
                st[j].total_slice_share(),
                st[j].rp_shr
            ))
        } else {
            None
        }
    }));

    results.push(scan("partition_consistency", all(), &|j| {
        partitions.iter().enumerate().find_map(|(k, members)| {
            let sum: i64 = members.iter().map(|&i| st[j].slices[i].shr).sum();
            (st[j].pt_shr[k] != sum)
                .then(|| format!("pt_shr_{} = {} but members hold {sum}", k + 1, st[j].pt_shr[k]))
        })
    }));

    results.push(scan("slice_accounting", all(), &|j| {
        per_slice(&st[j], |i| {
            let s = &st[j].slices[i];
            let m = i64::from(config.slices[i].m);
            if s.shr != s.usg + s.resi {
                Some(format!("shr {} != usg {} + resi {}", s.shr, s.usg, s.resi))
            } else if s.usg != ceil_div(s.usr, m) {
                Some(format!("usg {} != ceil(usr {} / {m})", s.usg, s.usr))
            } else {
                None
            }
        })
    }));

    results.push(scan("share_immobility", steps(), &|j| {
        per_slice(&st[j], |i| {
            (!config.slices[i].is_boundary(j) && delta(j, i) != 0)
                .then(|| format!("shr moved by {} mid-window", delta(j, i)))
        })
    }));

    results.push(scan("share_quantization", steps(), &|j| {
        per_slice(&st[j], |i| {
            let d = delta(j, i);
            (d != 0 && d.abs() != w[i]).then(|| format!("shr moved by {d}, W = {}", w[i]))
        })
    }));

    results.push(scan("signal_exclusion", all(), &|j| {
        per_slice(&st[j], |i| {
            let s = &st[j].slices[i];
            (s.top && s.ramp).then(|| "top and ramp both set".to_string())
        })
    }));

    results.push(scan("fairness", all(), &|j| {
        per_slice(&st[j], |i| {
            let s = &st[j].slices[i];
            if s.resi < 0 {
                return Some(format!("resi = {}", s.resi));
            }
            if j == 0 || !config.slices[i].is_boundary(j) || st[j].rp_ovr {
                return None;
            }
            let before_adjust = s.resi - delta(j, i);
            (before_adjust <= w[i] && delta(j, i) != w[i]).then(|| {
                format!(
                    "residual {before_adjust} <= W = {} at an ungated boundary but shr moved by {}",
                    w[i],
                    delta(j, i)
                )
            })
        })
    }));

    // A single ramp-down removes W, so the post-ramp band [W, 2W) is reached
    // whenever the residual before adjustment is below 3W.
    results.push(scan("optimality", steps(), &|j| {
        per_slice(&st[j], |i| {
            if !config.slices[i].is_boundary(j) {
                return None;
            }
            let s = &st[j].slices[i];
            let d = delta(j, i);
            let before_adjust = s.resi - d;
            let idle = before_adjust >= 2 * w[i] && s.entries == 0;
            if d == -w[i] && !idle {
                Some(format!(
                    "ramp-down from residual {before_adjust} with E = {} (needs >= {} and E = 0)",
                    s.entries,
                    2 * w[i]
                ))
            } else if d == 0 && idle {
                Some(format!(
                    "residual {before_adjust} >= {} with no entries but no ramp-down",
                    2 * w[i]
                ))
            } else {
                None
            }
        })
    }));

    results.push(scan("topup_gating", all(), &|j| {
        per_slice(&st[j], |i| {
            let grew = j > 0 && delta(j, i) > 0;
            ((st[j].slices[i].top || grew) && st[j].rp_ovr)
                .then(|| format!("top-up while rp_ovr (rp_shr at j-1 = {})", st[j.max(1) - 1].rp_shr))
        })
    }));

    results.push(scan("argmin_assignment", steps(), &|j| {
        services.iter().enumerate().find_map(|(mu, owned)| {
            let chosen: Vec<usize> = owned.iter().copied().filter(|&i| st[j].slices[i].en).collect();
            if chosen.len() > 1 {
                return Some(format!("service {} admitted into {} slices", mu + 1, chosen.len()));
            }
            let &c = chosen.first()?;
            let usr_c = st[j - 1].slices[c].usr;
            owned.iter().find_map(|&o| {
                let usr_o = st[j - 1].slices[o].usr;
                let wrong = (o < c && usr_o <= usr_c) || (o > c && usr_o < usr_c);
                wrong.then(|| {
                    format!(
                        "service {} chose slice {} (usr {usr_c}) over slice {} (usr {usr_o})",
                        mu + 1,
                        c + 1,
                        o + 1
                    )
                })
            })
        })
    }));

    PropertyReport { results }
}
