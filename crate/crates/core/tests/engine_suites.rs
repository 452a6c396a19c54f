mod common;

use common::params;
use metric_serve::deadline_engine::{audit_deadline, run_deadline, DeadlineOptions};
use metric_serve::delay_engine::{audit_delay, run_delay, DelayOptions};
use metric_serve::generate::generate;
use metric_serve::instance::Mode;

#[test]
fn deadline_suite_passes_audit() {
    for regime in [false, true] {
        for seed in 0..500 {
            let inst = generate(seed, &params(seed, Mode::Deadline, 10))
                .normalize_deadlines()
                .unwrap();
            let trace = run_deadline(
                &inst,
                DeadlineOptions {
                    request_regime: regime,
                },
            )
            .unwrap();
            let v = audit_deadline(&inst, &trace).unwrap();
            assert!(v.is_empty(), "seed {seed} regime {regime}: {v:?}");
            assert_eq!(trace.requests.len(), inst.requests.len());
        }
    }
}

#[test]
fn delay_suite_passes_audit() {
    for regime in [false, true] {
        for seed in 0..300 {
            let inst = generate(seed, &params(seed, Mode::Delay, 10));
            let trace = run_delay(
                &inst,
                DelayOptions {
                    request_regime: regime,
                    horizon: None,
                },
            )
            .unwrap();
            let v = audit_delay(&inst, &trace).unwrap();
            assert!(v.is_empty(), "seed {seed} regime {regime}: {v:?}");
            assert!(trace.unserved.is_empty());
            assert!(
                trace.total_cost
                    <= trace.movement_cost + trace.counter_cost + 1e-9 * trace.total_cost.max(1.0)
            );
        }
    }
}

#[test]
fn burst_suites_pass_audit() {
    for regime in [false, true] {
        for seed in 0..200 {
            let inst = common::deadline_bursts(seed);
            let trace = run_deadline(
                &inst,
                DeadlineOptions {
                    request_regime: regime,
                },
            )
            .unwrap();
            let v = audit_deadline(&inst, &trace).unwrap();
            assert!(v.is_empty(), "deadline burst {seed} regime {regime}: {v:?}");
            let inst = common::delay_bursts(seed);
            let trace = run_delay(
                &inst,
                DelayOptions {
                    request_regime: regime,
                    horizon: None,
                },
            )
            .unwrap();
            let v = audit_delay(&inst, &trace).unwrap();
            assert!(v.is_empty(), "delay burst {seed} regime {regime}: {v:?}");
        }
    }
}
