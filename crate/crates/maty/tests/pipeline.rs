//! End-to-end checks for the bundled programs: parse, typecheck, run, and
//! spot-check traces against the worked examples.

use maty::corpus;
use maty::metatheory::Verifier;
use maty::runtime::{
    canonical_idle_check, run, RunOptions, SchedulerPolicy, StopReason, ThreadState,
};

fn quick_opts(seed: u64) -> RunOptions {
    RunOptions {
        policy: SchedulerPolicy::UniformRandom,
        seed,
        max_steps: 2_000,
        ..Default::default()
    }
}

#[test]
fn pingpong_runs_to_quiescence() {
    let (mut config, _) = corpus::load_checked("pingpong");
    let (trace, stop) = run(&mut config, &quick_opts(1));
    assert_eq!(stop, StopReason::Quiescent, "trace:\n{}", trace.render());
    assert!(canonical_idle_check(&config), "final config not canonical");
    // Both actors finished idle, queues drained, session collected.
    assert!(config.sessions.is_empty());
    for node in config.actors.values() {
        assert!(matches!(node.thread, ThreadState::Idle(_)));
    }
    // The exchange is visible in the trace.
    let ping = trace.find("ESend", "Ping to").expect("no Ping send");
    let react_ping = trace.find("EReact", "Ping from").expect("no Ping react");
    let pong = trace.find("ESend", "Pong to").expect("no Pong send");
    let react_pong = trace.find("EReact", "Pong from").expect("no Pong react");
    assert!(ping < react_ping && react_ping < pong && pong < react_pong);
}

#[test]
fn pingpong_preservation_oracle_accepts() {
    let (config, _) = corpus::load_checked("pingpong");
    let verifier = Verifier::new(4);
    let report = verifier.preservation_harness(config, &quick_opts(7));
    assert!(
        report.violations.is_empty(),
        "violations: {:?}",
        report.violations
    );
    assert_eq!(report.stop, StopReason::Quiescent);
    assert_eq!(report.quiescent_canonical, Some(true));
}

#[test]
fn pingpong_deterministic_traces() {
    for seed in [0, 3, 9] {
        let (mut c1, _) = corpus::load_checked("pingpong");
        let (mut c2, _) = corpus::load_checked("pingpong");
        let (t1, _) = run(&mut c1, &quick_opts(seed));
        let (t2, _) = run(&mut c2, &quick_opts(seed));
        assert_eq!(t1.render(), t2.render());
    }
}

#[test]
fn corrupted_send_is_caught() {
    let (config, _) = corpus::load_checked("pingpong");
    let verifier = Verifier::new(4);
    let mut opts = quick_opts(1);
    opts.corrupt_send_payload = true;
    opts.max_steps = 100;
    let report = verifier.preservation_harness(config, &opts);
    assert!(
        !report.violations.is_empty(),
        "the oracle failed to notice a corrupted payload"
    );
}
