//! Deterministic forward execution of the three-layer allocation rules.
//!
//! One step `j-1 -> j` runs, in order:
//!
//! 1. `rp_ovr_j = rp_shr_{j-1} < x * T_P`
//! 2. user assignment (entries blocked while overused)
//! 3. user count, window entries, usage and an intermediate residual per slice
//! 4. top-up / ramp-down signals from the intermediate residual
//! 5. per-partition share adjustment
//! 6. residual-partition adjustment
//!
//! The free functions are the individual rules; [`Stepper`] composes them and
//! [`simulate`] runs a whole scenario while checking the state invariants.

use std::fmt;

use thiserror::Error;

use crate::model::NetworkConfig;
use crate::scenario::{ScenarioError, ScenarioTrace};
use crate::trace::{AllocationTrace, SliceState, SystemState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("slice {slice}: departure from an empty slice")]
    Underflow { slice: u32 },
    #[error("slice {slice}: usage increment with residual {resi} (fairness violated)")]
    Fairness { slice: u32, resi: i64 },
    #[error("slice {slice}: ramp-down would leave residual {resi}")]
    NegativeRamp { slice: u32, resi: i64 },
    #[error("residual partition share would become {0}; PRB budget exhausted")]
    ResidualExhausted(i64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("step {j}: {source}\n{dump}")]
    Step {
        j: usize,
        source: StepError,
        dump: StateDump,
    },
    #[error("step {j}: invariant broken: {detail}\n{dump}")]
    Invariant {
        j: usize,
        detail: String,
        dump: StateDump,
    },
}

impl SimError {
    pub fn timestep(&self) -> Option<usize> {
        match self {
            SimError::Scenario(_) => None,
            SimError::Step { j, .. } | SimError::Invariant { j, .. } => Some(*j),
        }
    }
}

/// Human-readable snapshot of a state, attached to simulation errors.
#[derive(Debug, Clone)]
pub struct StateDump(pub SystemState);

impl fmt::Display for StateDump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.0;
        writeln!(
            f,
            "  j={} rp_shr={} rp_ovr={} pt_shr={:?}",
            s.j, s.rp_shr, s.rp_ovr, s.pt_shr
        )?;
        for (i, sl) in s.slices.iter().enumerate() {
            writeln!(
                f,
                "  slice {}: usr={} shr={} usg={} resi={} E={} en={} lv={} top={} ramp={}",
                i + 1,
                sl.usr,
                sl.shr,
                sl.usg,
                sl.resi,
                sl.entries,
                sl.en,
                sl.lv,
                sl.top,
                sl.ramp
            )?;
        }
        Ok(())
    }
}

/// Entry flags per slice. Arrivals are indexed by service, `prev_usr` by slice.
///
/// A service with several slices admits into the one with the fewest users at
/// `j-1`, ties going to the lowest slice id.
pub fn assign_users(
    config: &NetworkConfig,
    prev_usr: &[i64],
    arrivals: &[bool],
    rp_ovr: bool,
) -> Vec<bool> {
    let mut en = vec![false; config.num_slices()];
    if rp_ovr {
        return en;
    }
    for (owned, &arrived) in config.service_index().iter().zip(arrivals) {
        if !arrived {
            continue;
        }
        // min_by_key keeps the first minimum, i.e. the lowest slice id
        if let Some(&pick) = owned.iter().min_by_key(|&&i| prev_usr[i]) {
            en[pick] = true;
        }
    }
    en
}

pub fn step_user_count(prev: i64, en: bool, lv: bool) -> Option<i64> {
    match (en, lv) {
        (true, false) => Some(prev + 1),
        (false, true) if prev > 0 => Some(prev - 1),
        (false, true) => None,
        _ => Some(prev),
    }
}

pub fn step_window_entries(prev: i64, en: bool, j: usize, t_win: u32) -> i64 {
    let fresh = j % t_win as usize == 1 % t_win as usize;
    match (fresh, en) {
        (true, true) => 1,
        (true, false) => 0,
        (false, true) => prev + 1,
        (false, false) => prev,
    }
}

/// `(usg, resi)` after a user event. `usr` is the count at `j`.
pub fn step_usage_residual(
    prev_usg: i64,
    prev_resi: i64,
    usr: i64,
    en: bool,
    lv: bool,
    m: u32,
) -> (i64, i64) {
    let m = i64::from(m);
    if en && !lv && (usr - 1).rem_euclid(m) == 0 {
        (prev_usg + 1, prev_resi - 1)
    } else if !en && lv && usr.rem_euclid(m) == 0 {
        (prev_usg - 1, prev_resi + 1)
    } else {
        (prev_usg, prev_resi)
    }
}

/// `(top, ramp)` for a slice whose intermediate residual is `resi`.
pub fn eval_signals(
    resi: i64,
    entries: i64,
    j: usize,
    t_win: u32,
    m: u32,
    rp_ovr: bool,
) -> (bool, bool) {
    if j == 0 || j % t_win as usize != 0 {
        return (false, false);
    }
    let w = i64::from(t_win.div_ceil(m));
    let top = !rp_ovr && resi <= w;
    let ramp = resi - w >= w && entries == 0;
    (top, ramp)
}

/// Net movement of one partition at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionAdjustment {
    /// PRBs granted to top-up slices.
    pub eta1: i64,
    /// PRBs released by ramp-down slices.
    pub eta2: i64,
    pub pt_shr: i64,
}

/// Applies the signals of `members` to their shares and residuals.
/// `w_hat` is indexed like `slices`.
pub fn partition_adjust(
    prev_pt: i64,
    slices: &mut [SliceState],
    members: &[usize],
    w_hat: &[i64],
) -> Result<PartitionAdjustment, StepError> {
    let (mut eta1, mut eta2) = (0, 0);
    for &i in members {
        let s = &mut slices[i];
        if s.top {
            s.shr += w_hat[i];
            s.resi += w_hat[i];
            eta1 += w_hat[i];
        } else if s.ramp {
            s.shr -= w_hat[i];
            s.resi -= w_hat[i];
            eta2 += w_hat[i];
            if s.resi < 0 {
                return Err(StepError::NegativeRamp {
                    slice: i as u32 + 1,
                    resi: s.resi,
                });
            }
        }
    }
    Ok(PartitionAdjustment {
        eta1,
        eta2,
        pt_shr: prev_pt + eta1 - eta2,
    })
}

/// Residual share after partitions moved from `.0` to `.1`.
pub fn residual_adjust(prev_rp: i64, partitions: &[(i64, i64)]) -> Result<i64, StepError> {
    let zeta1: i64 = partitions
        .iter()
        .filter(|(before, after)| after > before)
        .map(|(before, after)| after - before)
        .sum();
    let zeta2: i64 = partitions
        .iter()
        .filter(|(before, after)| after < before)
        .map(|(before, after)| before - after)
        .sum();
    let rp = prev_rp - (zeta1 - zeta2);
    if rp < 0 {
        return Err(StepError::ResidualExhausted(rp));
    }
    Ok(rp)
}

/// Incremental simulator holding the current state.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    config: &'a NetworkConfig,
    partitions: Vec<Vec<usize>>,
    w_hat: Vec<i64>,
    state: SystemState,
}

impl<'a> Stepper<'a> {
    pub fn new(config: &'a NetworkConfig) -> Self {
        Self {
            config,
            partitions: config.partition_index(),
            w_hat: (0..config.num_slices()).map(|i| config.w_hat(i)).collect(),
            state: SystemState::initial(config),
        }
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn into_state(self) -> SystemState {
        self.state
    }

    /// Advances one step, rejecting contract violations.
    pub fn step(&mut self, arrivals: &[bool], departures: &[bool]) -> Result<&SystemState, StepError> {
        self.state = self.next(arrivals, departures, true)?;
        Ok(&self.state)
    }

    /// Advances one step without contract checks; a departure from an empty
    /// slice is ignored.
    pub fn step_lenient(&mut self, arrivals: &[bool], departures: &[bool]) -> &SystemState {
        self.state = self
            .next(arrivals, departures, false)
            .expect("lenient step cannot fail");
        &self.state
    }

    fn next(&self, arrivals: &[bool], departures: &[bool], strict: bool) -> Result<SystemState, StepError> {
        let cfg = self.config;
        let prev = &self.state;
        let j = prev.j + 1;
        let rp_ovr = cfg.is_overused(prev.rp_shr);
        let prev_usr: Vec<i64> = prev.slices.iter().map(|s| s.usr).collect();
        let en = assign_users(cfg, &prev_usr, arrivals, rp_ovr);

        let mut slices = Vec::with_capacity(prev.slices.len());
        for (i, (p, spec)) in prev.slices.iter().zip(&cfg.slices).enumerate() {
            let slice = i as u32 + 1;
            let mut lv = departures[i];
            let usr = match step_user_count(p.usr, en[i], lv) {
                Some(u) => u,
                None if strict => return Err(StepError::Underflow { slice }),
                None => {
                    lv = false;
                    p.usr
                }
            };
            let entries = step_window_entries(p.entries, en[i], j, spec.t_win);
            let (usg, resi) = step_usage_residual(p.usg, p.resi, usr, en[i], lv, spec.m);
            if strict && resi < 0 {
                return Err(StepError::Fairness { slice, resi: p.resi });
            }
            let (top, ramp) = eval_signals(resi, entries, j, spec.t_win, spec.m, rp_ovr);
            slices.push(SliceState {
                usr,
                shr: p.shr,
                usg,
                resi,
                entries,
                en: en[i],
                lv,
                top,
                ramp,
            });
        }

        let mut pt_shr = Vec::with_capacity(self.partitions.len());
        let mut moves = Vec::with_capacity(self.partitions.len());
        for (k, members) in self.partitions.iter().enumerate() {
            let adj = partition_adjust(prev.pt_shr[k], &mut slices, members, &self.w_hat)?;
            moves.push((prev.pt_shr[k], adj.pt_shr));
            pt_shr.push(adj.pt_shr);
        }
        let rp_shr = if strict {
            residual_adjust(prev.rp_shr, &moves)?
        } else {
            let net: i64 = moves.iter().map(|(a, b)| b - a).sum();
            prev.rp_shr - net
        };

        Ok(SystemState {
            j,
            slices,
            pt_shr,
            rp_shr,
            rp_ovr,
        })
    }
}

/// State invariants that must hold after every step.
pub fn check_state(config: &NetworkConfig, state: &SystemState) -> Result<(), String> {
    for (i, (s, spec)) in state.slices.iter().zip(&config.slices).enumerate() {
        let id = i + 1;
        for (name, v) in [
            ("usr", s.usr),
            ("shr", s.shr),
            ("usg", s.usg),
            ("resi", s.resi),
            ("E", s.entries),
        ] {
            if v < 0 {
                return Err(format!("slice {id}: {name} = {v} < 0"));
            }
        }
        if s.shr != s.usg + s.resi {
            return Err(format!(
                "slice {id}: shr {} != usg {} + resi {}",
                s.shr, s.usg, s.resi
            ));
        }
        let expected = s.usr.div_euclid(i64::from(spec.m))
            + i64::from(s.usr.rem_euclid(i64::from(spec.m)) != 0);
        if s.usg != expected {
            return Err(format!("slice {id}: usg {} != ceil(usr {} / m)", s.usg, s.usr));
        }
        if s.top && s.ramp {
            return Err(format!("slice {id}: top and ramp both set"));
        }
    }
    for (k, members) in config.partition_index().iter().enumerate() {
        let sum: i64 = members.iter().map(|&i| state.slices[i].shr).sum();
        if state.pt_shr[k] != sum {
            return Err(format!(
                "partition {}: pt_shr {} != member sum {sum}",
                k + 1,
                state.pt_shr[k]
            ));
        }
        if state.pt_shr[k] < 0 {
            return Err(format!("partition {}: pt_shr {} < 0", k + 1, state.pt_shr[k]));
        }
    }
    if state.rp_shr < 0 {
        return Err(format!("rp_shr {} < 0", state.rp_shr));
    }
    let total: i64 = state.pt_shr.iter().sum::<i64>() + state.rp_shr;
    if total != i64::from(config.total_prbs) {
        return Err(format!("shares sum to {total}, budget is {}", config.total_prbs));
    }
    Ok(())
}

/// Runs `scenario` from the initial state through `j = T`.
pub fn simulate(config: &NetworkConfig, scenario: &ScenarioTrace) -> Result<AllocationTrace, SimError> {
    scenario.check_shape(config)?;
    let mut stepper = Stepper::new(config);
    let mut states = Vec::with_capacity(config.horizon() + 1);
    states.push(stepper.state().clone());
    for j in 1..=config.horizon() {
        let before = stepper.state().clone();
        stepper
            .step(&scenario.arrivals_at(j), &scenario.departures_at(j))
            .map_err(|source| SimError::Step {
                j,
                source,
                dump: StateDump(before),
            })?;
        let state = stepper.state();
        check_state(config, state).map_err(|detail| SimError::Invariant {
            j,
            detail,
            dump: StateDump(state.clone()),
        })?;
        states.push(state.clone());
    }
    Ok(AllocationTrace {
        config_name: config.name.clone(),
        seed: scenario.seed,
        states,
    })
}
