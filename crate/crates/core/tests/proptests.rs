mod common;

use std::time::Duration;

use proptest::prelude::*;
use slicealloc_core::metrics::compute_metrics;
use slicealloc_core::model::constraint_count_bound;
use slicealloc_core::oracle::{simulate, SimError, StepError};
use slicealloc_core::properties::check_all;
use slicealloc_core::smt::{self, emit_smtlib, encode, extract_trace, SolverCommand, COUNT_CONSTANT};
use slicealloc_core::trace::diff_traces;
use slicealloc_core::{AllocationTrace, ThroughputParams};

fn inputs() -> impl Strategy<Value = (common::Shape, Vec<f64>, f64, u64)> {
    (
        common::shape(),
        proptest::collection::vec(0.0f64..=1.0, 3),
        0.0f64..0.6,
        any::<u64>(),
    )
}

/// The oracle either succeeds, or stops on a usage increment at zero residual
/// after the residual partition was overused (a top-up withheld by gating).
fn run(config: &slicealloc_core::NetworkConfig, sc: &slicealloc_core::ScenarioTrace) -> Option<AllocationTrace> {
    match simulate(config, sc) {
        Ok(t) => Some(t),
        Err(SimError::Step {
            source: StepError::Fairness { .. },
            j,
            ..
        }) => {
            let mut stepper = slicealloc_core::oracle::Stepper::new(config);
            let mut overused = false;
            for k in 1..j {
                stepper.step_lenient(&sc.arrivals_at(k), &sc.departures_at(k));
                overused |= stepper.state().rp_ovr;
            }
            assert!(overused, "fairness stop at j={j} without prior overuse");
            None
        }
        Err(e) => panic!("unexpected simulation error: {e}"),
    }
}

/// Full run that does not stop on a negative residual.
fn replay(config: &slicealloc_core::NetworkConfig, sc: &slicealloc_core::ScenarioTrace) -> AllocationTrace {
    let mut stepper = slicealloc_core::oracle::Stepper::new(config);
    let mut states = vec![stepper.state().clone()];
    for j in 1..=config.horizon() {
        stepper.step_lenient(&sc.arrivals_at(j), &sc.departures_at(j));
        states.push(stepper.state().clone());
    }
    AllocationTrace {
        config_name: config.name.clone(),
        seed: sc.seed,
        states,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn oracle_traces_satisfy_every_property((shape, p, dep, seed) in inputs()) {
        let cfg = common::build(&shape);
        let sc = common::scenario(&cfg, &p, dep, seed);
        if let Some(trace) = run(&cfg, &sc) {
            let report = check_all(&trace, &cfg);
            let failures: Vec<_> = report.failures().map(|r| (&r.name, r.first_violation_timestep, &r.details)).collect();
            prop_assert!(report.all_passed(), "{failures:?}");
        }
    }

    #[test]
    fn traces_round_trip_through_csv_and_json((shape, p, dep, seed) in inputs()) {
        let cfg = common::build(&shape);
        let sc = common::scenario(&cfg, &p, dep, seed);
        if let Some(trace) = run(&cfg, &sc) {
            prop_assert_eq!(&AllocationTrace::from_json(&trace.to_json()).unwrap(), &trace);
            let back = AllocationTrace::read_csv(trace.to_csv(&cfg).as_bytes()).unwrap();
            prop_assert!(diff_traces(&back, &trace).is_empty());
        }
    }

    #[test]
    fn action_counts_are_quantized_share_moves((shape, p, dep, seed) in inputs()) {
        let cfg = common::build(&shape);
        let sc = common::scenario(&cfg, &p, dep, seed);
        if let Some(trace) = run(&cfg, &sc) {
            let m = compute_metrics(&trace, &cfg, Some(&sc), &ThroughputParams::default());
            for i in 0..cfg.num_slices() {
                let w = cfg.w_hat(i);
                let (mut ups, mut downs) = (0, 0);
                for pair in trace.states.windows(2) {
                    let d = pair[1].slices[i].shr - pair[0].slices[i].shr;
                    ups += u64::from(d == w);
                    downs += u64::from(d == -w);
                }
                prop_assert_eq!((m.topup_count[i], m.rampdown_count[i]), (ups, downs));
            }
        }
    }

    #[test]
    fn encodings_are_closed_and_within_the_count_bound((shape, p, dep, seed) in inputs()) {
        let cfg = common::build(&shape);
        let sc = common::scenario(&cfg, &p, dep, seed);
        let cs = encode(&cfg, &sc).unwrap();
        prop_assert_eq!(cs.check_declarations(), Ok(()));
        let bound = constraint_count_bound(&cfg).unwrap();
        prop_assert!(cs.assertion_count() as u64 <= COUNT_CONSTANT * bound);
    }

    #[test]
    fn scenario_generation_is_deterministic((shape, p, dep, seed) in inputs()) {
        let cfg = common::build(&shape);
        prop_assert_eq!(common::scenario(&cfg, &p, dep, seed), common::scenario(&cfg, &p, dep, seed));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_model_matches_oracle((shape, p, dep, seed) in inputs()) {
        if !common::z3_available() {
            eprintln!("z3 not on PATH; skipping");
            return Ok(());
        }
        let cfg = common::build(&shape);
        let sc = common::scenario(&cfg, &p, dep, seed);
        let script = emit_smtlib(&encode(&cfg, &sc).unwrap());
        let verdict = smt::solve(&SolverCommand::parse("z3 -in -smt2").unwrap(), &script, Duration::from_secs(60)).unwrap();
        match run(&cfg, &sc) {
            Some(oracle) => {
                prop_assert_eq!(verdict.status, smt::Status::Sat);
                let decoded = extract_trace(&verdict, &cfg, &sc).unwrap();
                let diff = diff_traces(&oracle, &decoded);
                prop_assert!(diff.is_empty(), "{}", diff.iter().take(5).map(|d| d.to_string()).collect::<Vec<_>>().join("; "));
            }
            None => {
                // the encoding carries no nonnegativity assertion, so it follows the replay
                prop_assert_eq!(verdict.status, smt::Status::Sat);
                let decoded = extract_trace(&verdict, &cfg, &sc).unwrap();
                prop_assert!(diff_traces(&replay(&cfg, &sc), &decoded).is_empty());
            }
        }
    }
}
