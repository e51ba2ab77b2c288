//! Per-timestep system state, allocation traces and their file formats.
//!
//! CSV layout, one row per `(j, slice)`:
//!
//! ```text
//! j,slice_id,partition_id,usr,shr,usg,resi,entries,en,lv,top,ramp,pt_shr_1..pt_shr_K,rp_shr,rp_ovr
//! ```
//!
//! Flags are written as `0`/`1`. The `pt_shr_k` and residual columns repeat on
//! every row of the same timestep.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NetworkConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceState {
    pub usr: i64,
    pub shr: i64,
    pub usg: i64,
    pub resi: i64,
    /// Users admitted since the current window opened.
    pub entries: i64,
    pub en: bool,
    pub lv: bool,
    pub top: bool,
    pub ramp: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub j: usize,
    pub slices: Vec<SliceState>,
    /// Partition shares ordered by partition id.
    pub pt_shr: Vec<i64>,
    pub rp_shr: i64,
    pub rp_ovr: bool,
}

impl SystemState {
    /// Canonical state at `j = 0`: empty slices holding one window's worth of PRBs.
    pub fn initial(config: &NetworkConfig) -> Self {
        let slices = config
            .slices
            .iter()
            .map(|s| {
                let w = i64::from(s.w_hat());
                SliceState {
                    shr: w,
                    resi: w,
                    ..SliceState::default()
                }
            })
            .collect::<Vec<_>>();
        let pt_shr = config
            .partition_index()
            .iter()
            .map(|members| members.iter().map(|&i| slices[i].shr).sum())
            .collect();
        let rp_shr = config.initial_residual();
        Self {
            j: 0,
            slices,
            pt_shr,
            rp_shr,
            rp_ovr: config.is_overused(rp_shr),
        }
    }

    pub fn total_slice_share(&self) -> i64 {
        self.slices.iter().map(|s| s.shr).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationTrace {
    #[serde(default)]
    pub config_name: String,
    #[serde(default)]
    pub seed: u64,
    pub states: Vec<SystemState>,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad trace csv: {0}")]
    Format(String),
}

fn bit(flag: bool) -> &'static str {
    if flag {
        "1"
    } else {
        "0"
    }
}

impl AllocationTrace {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("trace holds at least the initial state")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TraceIoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn csv_header(num_partitions: usize) -> Vec<String> {
        let mut header: Vec<String> = [
            "j",
            "slice_id",
            "partition_id",
            "usr",
            "shr",
            "usg",
            "resi",
            "entries",
            "en",
            "lv",
            "top",
            "ramp",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=num_partitions).map(|k| format!("pt_shr_{k}")));
        header.push("rp_shr".into());
        header.push("rp_ovr".into());
        header
    }

    pub fn write_csv<W: Write>(&self, config: &NetworkConfig, out: W) -> Result<(), TraceIoError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(config.num_partitions()))?;
        for state in &self.states {
            for (i, s) in state.slices.iter().enumerate() {
                let mut row = vec![
                    state.j.to_string(),
                    (i + 1).to_string(),
                    config.slices[i].partition_id.to_string(),
                    s.usr.to_string(),
                    s.shr.to_string(),
                    s.usg.to_string(),
                    s.resi.to_string(),
                    s.entries.to_string(),
                    bit(s.en).into(),
                    bit(s.lv).into(),
                    bit(s.top).into(),
                    bit(s.ramp).into(),
                ];
                row.extend(state.pt_shr.iter().map(i64::to_string));
                row.push(state.rp_shr.to_string());
                row.push(bit(state.rp_ovr).into());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self, config: &NetworkConfig) -> String {
        let mut buf = Vec::new();
        self.write_csv(config, &mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads a trace written by [`AllocationTrace::write_csv`]. Config name and
    /// seed are not part of the CSV and come back empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, TraceIoError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let k = header.iter().filter(|h| h.starts_with("pt_shr_")).count();
        let expected = Self::csv_header(k);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(TraceIoError::Format(format!("unexpected header {header:?}")));
        }
        let int = |rec: &csv::StringRecord, col: usize| -> Result<i64, TraceIoError> {
            rec[col]
                .parse()
                .map_err(|_| TraceIoError::Format(format!("column {col}: {:?}", &rec[col])))
        };
        let flag = |rec: &csv::StringRecord, col: usize| -> Result<bool, TraceIoError> {
            match &rec[col] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(TraceIoError::Format(format!("flag column {col}: {other:?}"))),
            }
        };
        let mut states: Vec<SystemState> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let j = int(&rec, 0)? as usize;
            let slice = SliceState {
                usr: int(&rec, 3)?,
                shr: int(&rec, 4)?,
                usg: int(&rec, 5)?,
                resi: int(&rec, 6)?,
                entries: int(&rec, 7)?,
                en: flag(&rec, 8)?,
                lv: flag(&rec, 9)?,
                top: flag(&rec, 10)?,
                ramp: flag(&rec, 11)?,
            };
            if states.last().map(|s| s.j) != Some(j) {
                if j != states.len() {
                    return Err(TraceIoError::Format(format!("timestep {j} out of order")));
                }
                let pt_shr = (0..k).map(|c| int(&rec, 12 + c)).collect::<Result<_, _>>()?;
                states.push(SystemState {
                    j,
                    slices: Vec::new(),
                    pt_shr,
                    rp_shr: int(&rec, 12 + k)?,
                    rp_ovr: flag(&rec, 13 + k)?,
                });
            }
            states.last_mut().expect("pushed above").slices.push(slice);
        }
        Ok(Self {
            config_name: String::new(),
            seed: 0,
            states,
        })
    }
}

/// One mismatching cell between two traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDifference {
    pub j: usize,
    pub field: String,
    pub left: String,
    pub right: String,
}

impl fmt::Display for TraceDifference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j={} {}: {} != {}", self.j, self.field, self.left, self.right)
    }
}

/// Cell-by-cell comparison. An empty result means the traces are equal.
pub fn diff_traces(left: &AllocationTrace, right: &AllocationTrace) -> Vec<TraceDifference> {
    let mut out = Vec::new();
    if left.states.len() != right.states.len() {
        out.push(TraceDifference {
            j: left.states.len().min(right.states.len()),
            field: "length".into(),
            left: left.states.len().to_string(),
            right: right.states.len().to_string(),
        });
    }
    for (a, b) in left.states.iter().zip(&right.states) {
        let j = a.j;
        let mut push = |field: String, l: String, r: String| {
            if l != r {
                out.push(TraceDifference {
                    j,
                    field,
                    left: l,
                    right: r,
                });
            }
        };
        push("j".into(), a.j.to_string(), b.j.to_string());
        push("rp_shr".into(), a.rp_shr.to_string(), b.rp_shr.to_string());
        push("rp_ovr".into(), a.rp_ovr.to_string(), b.rp_ovr.to_string());
        push(
            "pt_shr".into(),
            format!("{:?}", a.pt_shr),
            format!("{:?}", b.pt_shr),
        );
        if a.slices.len() != b.slices.len() {
            push(
                "slices".into(),
                a.slices.len().to_string(),
                b.slices.len().to_string(),
            );
            continue;
        }
        for (i, (x, y)) in a.slices.iter().zip(&b.slices).enumerate() {
            let fields: [(&str, String, String); 9] = [
                ("usr", x.usr.to_string(), y.usr.to_string()),
                ("shr", x.shr.to_string(), y.shr.to_string()),
                ("usg", x.usg.to_string(), y.usg.to_string()),
                ("resi", x.resi.to_string(), y.resi.to_string()),
                ("entries", x.entries.to_string(), y.entries.to_string()),
                ("en", x.en.to_string(), y.en.to_string()),
                ("lv", x.lv.to_string(), y.lv.to_string()),
                ("top", x.top.to_string(), y.top.to_string()),
                ("ramp", x.ramp.to_string(), y.ramp.to_string()),
            ];
            for (name, l, r) in fields {
                push(format!("slice{}.{name}", i + 1), l, r);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::simulate;
    use crate::presets;
    use crate::scenario::gen_from_profile;

    #[test]
    fn initial_state_is_canonical() {
        let cfg = presets::load("3-2-4").unwrap();
        let s = SystemState::initial(&cfg);
        for (slice, spec) in s.slices.iter().zip(&cfg.slices) {
            assert_eq!(slice.shr, i64::from(spec.w_hat()));
            assert_eq!(slice.resi, slice.shr);
            assert_eq!(slice.usr, 0);
        }
        assert_eq!(s.pt_shr.iter().sum::<i64>() + s.rp_shr, i64::from(cfg.total_prbs));
        assert!(!s.rp_ovr);
    }

    #[test]
    fn csv_round_trip_and_stable_header() {
        let cfg = presets::load("3-2-4").unwrap();
        let trace = simulate(&cfg, &gen_from_profile(&cfg, 3).unwrap()).unwrap();
        let text = trace.to_csv(&cfg);
        assert!(text.starts_with(
            "j,slice_id,partition_id,usr,shr,usg,resi,entries,en,lv,top,ramp,pt_shr_1,pt_shr_2,rp_shr,rp_ovr\n"
        ));
        assert_eq!(text.lines().count(), 1 + 31 * 4);
        let back = AllocationTrace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.states, trace.states);
    }

    #[test]
    fn diff_reports_mismatch() {
        let cfg = presets::load("3-2-4").unwrap();
        let trace = simulate(&cfg, &gen_from_profile(&cfg, 3).unwrap()).unwrap();
        assert!(diff_traces(&trace, &trace).is_empty());
        let mut other = trace.clone();
        other.states[7].slices[2].shr += 1;
        let d = diff_traces(&trace, &other);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].j, 7);
        assert_eq!(d[0].field, "slice3.shr");
    }
}
