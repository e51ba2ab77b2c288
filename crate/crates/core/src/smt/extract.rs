use thiserror::Error;

use super::names;
use super::solver::{Model, SolverVerdict, Status, Value};
use crate::model::NetworkConfig;
use crate::scenario::ScenarioTrace;
use crate::trace::{AllocationTrace, SliceState, SystemState};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("cannot decode a {0:?} verdict; only sat verdicts carry a model")]
    NotSat(Status),
    #[error("sat verdict without a model")]
    NoModel,
    #[error("model has no value for {0}")]
    Missing(String),
    #[error("model value for {0} has the wrong sort")]
    Sort(String),
}

fn int(model: &Model, name: String) -> Result<i64, ExtractError> {
    match model.get(&name) {
        Some(Value::Int(v)) => Ok(*v),
        Some(Value::Bool(_)) => Err(ExtractError::Sort(name)),
        None => Err(ExtractError::Missing(name)),
    }
}

fn flag(model: &Model, name: String) -> Result<bool, ExtractError> {
    match model.get(&name) {
        Some(Value::Bool(v)) => Ok(*v),
        Some(Value::Int(_)) => Err(ExtractError::Sort(name)),
        None => Err(ExtractError::Missing(name)),
    }
}

/// Rebuilds the state sequence `j = 0..T` from a sat verdict.
pub fn extract_trace(
    verdict: &SolverVerdict,
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
) -> Result<AllocationTrace, ExtractError> {
    if verdict.status != Status::Sat {
        return Err(ExtractError::NotSat(verdict.status));
    }
    let model = verdict.model.as_ref().ok_or(ExtractError::NoModel)?;
    let mut states = Vec::with_capacity(config.horizon() + 1);
    for j in 0..=config.horizon() {
        let mut slices = Vec::with_capacity(config.num_slices());
        for i in 1..=config.num_slices() {
            let s = |v: &str| names::slice(v, i, j);
            let mut st = SliceState {
                usr: int(model, s("usr"))?,
                shr: int(model, s("shr"))?,
                usg: int(model, s("usg"))?,
                resi: int(model, s("resi"))?,
                entries: int(model, s("ent"))?,
                ..SliceState::default()
            };
            if j > 0 {
                st.en = flag(model, s("en"))?;
                st.lv = flag(model, s("lv"))?;
                st.top = flag(model, s("top"))?;
                st.ramp = flag(model, s("ramp"))?;
            }
            slices.push(st);
        }
        let pt_shr = (1..=config.num_partitions())
            .map(|k| int(model, names::pt(k, j)))
            .collect::<Result<_, _>>()?;
        states.push(SystemState {
            j,
            slices,
            pt_shr,
            rp_shr: int(model, names::rp(j))?,
            rp_ovr: flag(model, names::ovr(j))?,
        });
    }
    Ok(AllocationTrace {
        config_name: config.name.clone(),
        seed: scenario.seed,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn refuses_non_sat() {
        let cfg = presets::load("3-2-4").unwrap();
        let s = ScenarioTrace::empty(&cfg);
        for status in [Status::Unsat, Status::Unknown, Status::Timeout] {
            let v = SolverVerdict {
                status,
                model: None,
                wall_time: 0.0,
            };
            assert_eq!(extract_trace(&v, &cfg, &s), Err(ExtractError::NotSat(status)));
        }
    }

    #[test]
    fn names_the_missing_variable() {
        let cfg = presets::load("3-2-4").unwrap();
        let s = ScenarioTrace::empty(&cfg);
        let mut model = Model::new();
        model.insert("usr_1_0".into(), Value::Int(0));
        let v = SolverVerdict {
            status: Status::Sat,
            model: Some(model),
            wall_time: 0.0,
        };
        assert_eq!(
            extract_trace(&v, &cfg, &s),
            Err(ExtractError::Missing("shr_1_0".into()))
        );
    }
}
