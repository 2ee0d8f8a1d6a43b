//! Deterministic, seedable schedulers over the nondeterministic reduction
//! relation, and the top-level run loop.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::syntax::terms::{CompKind, Computation};

use super::config::{Configuration, ThreadState};
use super::redex::Redex;
use super::step::{enabled_redexes, step, StepError, StepOptions};
use super::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerPolicy {
    /// Uniformly random among enabled redexes, driven by the seed.
    UniformRandom,
    /// Rotate through the enabled list by step index.
    RoundRobin,
    /// Oldest-enabled-first: every persistently enabled redex eventually
    /// fires.
    FairQueue,
}

impl std::str::FromStr for SchedulerPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" | "uniform" => Ok(SchedulerPolicy::UniformRandom),
            "round-robin" | "rr" => Ok(SchedulerPolicy::RoundRobin),
            "fair" | "fair-queue" => Ok(SchedulerPolicy::FairQueue),
            other => Err(format!("unknown policy {other:?} (random, round-robin, fair)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No redex is enabled.
    Quiescent,
    /// The step budget ran out.
    Budget,
    /// A stuck term was encountered (ill-typed or corrupted program).
    Stuck,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub policy: SchedulerPolicy,
    pub seed: u64,
    pub max_steps: u64,
    /// Force a `raise` into the named actor at the given step.
    pub inject_raise: Option<(String, u64)>,
    /// Deliberately corrupt send payloads (testing aid for the
    /// preservation oracle).
    pub corrupt_send_payload: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: SchedulerPolicy::UniformRandom,
            seed: 0,
            max_steps: 100_000,
            inject_raise: None,
            corrupt_send_payload: false,
        }
    }
}

pub struct Scheduler {
    policy: SchedulerPolicy,
    rng: ChaCha8Rng,
    /// FairQueue state: step at which each redex first became enabled.
    ages: BTreeMap<Redex, u64>,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy, seed: u64) -> Self {
        Scheduler {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ages: BTreeMap::new(),
        }
    }

    /// Pick one redex from a non-empty enabled list.
    pub fn pick(&mut self, enabled: &[Redex], step_idx: u64) -> Redex {
        debug_assert!(!enabled.is_empty());
        match self.policy {
            SchedulerPolicy::UniformRandom => {
                let i = self.rng.gen_range(0..enabled.len());
                enabled[i].clone()
            }
            SchedulerPolicy::RoundRobin => {
                enabled[(step_idx as usize) % enabled.len()].clone()
            }
            SchedulerPolicy::FairQueue => {
                self.ages.retain(|r, _| enabled.contains(r));
                for r in enabled {
                    self.ages.entry(r.clone()).or_insert(step_idx);
                }
                enabled
                    .iter()
                    .min_by_key(|r| (self.ages[*r], (*r).clone()))
                    .unwrap()
                    .clone()
            }
        }
    }
}

/// Run a configuration to quiescence or budget exhaustion under the given
/// policy, producing a complete replayable trace. Identical options on an
/// identical initial configuration yield byte-identical traces.
pub fn run(
    config: &mut Configuration,
    opts: &RunOptions,
) -> (Trace, StopReason) {
    run_observed(config, opts, |_, _| {})
}

/// As [`run`], invoking `observe(config, event)` after every applied step.
pub fn run_observed(
    config: &mut Configuration,
    opts: &RunOptions,
    mut observe: impl FnMut(&Configuration, &TraceEvent),
) -> (Trace, StopReason) {
    let mut sched = Scheduler::new(opts.policy, opts.seed);
    let mut trace = Trace::default();
    let step_opts = StepOptions {
        corrupt_send_payload: opts.corrupt_send_payload,
    };
    let mut idx: u64 = 0;
    loop {
        if idx >= opts.max_steps {
            return (trace, StopReason::Budget);
        }
        if let Some((target, at)) = &opts.inject_raise {
            if *at == idx {
                inject_raise(config, target);
            }
        }
        let enabled = enabled_redexes(config);
        if enabled.is_empty() {
            return (trace, StopReason::Quiescent);
        }
        let redex = sched.pick(&enabled, idx);
        match step(config, &redex, idx, step_opts) {
            Ok(event) => {
                observe(config, &event);
                trace.events.push(event);
            }
            Err(StepError::Stuck(actor, what)) => {
                let event = TraceEvent {
                    idx,
                    rule: "STUCK",
                    session: None,
                    actor,
                    detail: what,
                    redex,
                };
                trace.events.push(event);
                return (trace, StopReason::Stuck);
            }
            Err(StepError::StaleRedex(_)) => {
                // The scheduler contract prevents this; treat as stuck so
                // the anomaly is visible rather than silently skipped.
                return (trace, StopReason::Stuck);
            }
        }
        idx += 1;
    }
}

/// Replay a trace against an initial configuration by re-firing each
/// recorded redex. Fails if any redex is no longer enabled, which would
/// indicate nondeterminism.
pub fn replay(config: &mut Configuration, trace: &Trace) -> Result<(), StepError> {
    for event in &trace.events {
        step(config, &event.redex, event.idx, StepOptions::default())?;
    }
    Ok(())
}

/// Force the named actor's next action to be `raise`: an active thread's
/// computation is replaced wholesale, an idle actor wakes into a
/// standalone raising thread.
fn inject_raise(config: &mut Configuration, target: &str) {
    let Some(actor) = config.actor_by_label(target) else {
        return;
    };
    let Some(node) = config.actors.get_mut(&actor) else {
        return;
    };
    let raise = Computation::new(CompKind::Raise);
    match &mut node.thread {
        ThreadState::InSession { comp, .. } => *comp = raise,
        ThreadState::NoSession(comp) => *comp = raise,
        ThreadState::Idle(_) => node.thread = ThreadState::NoSession(raise),
    }
}

/// Quiescent-shape check mirroring the progress theorems: a quiescent
/// configuration must contain only access points and idle actors. In
/// failure-handling mode residual referenced actor zaps are allowed; in
/// switching mode sessions may remain whose only pending endpoints are
/// send-suspended with no matching switch request.
pub fn canonical_idle_check(config: &Configuration) -> bool {
    for node in config.actors.values() {
        if !node.thread.is_idle() {
            return false;
        }
    }
    for (&session, state) in &config.sessions {
        if !state.is_empty() {
            return false;
        }
        if !config.mode.switch {
            return false; // a session survived without pending messages
        }
        // Progress-up-to: every surviving session must be send-suspended
        // somewhere with no matching switch request queued.
        let mut explained = false;
        for node in config.actors.values() {
            for (sname, fifo) in &node.send_suspended {
                if fifo.iter().any(|e| e.session == session)
                    && !node.switch_queue.iter().any(|(n, _)| n == sname)
                {
                    explained = true;
                }
            }
        }
        if !explained {
            return false;
        }
    }
    // Receive handlers imply an ongoing session, which quiescence rules
    // out (their messages would be reactable or cancellable).
    for node in config.actors.values() {
        for (s, _) in node.handlers.keys() {
            if !config.mode.switch || !config.sessions.contains_key(s) {
                return false;
            }
        }
    }
    if !config.mode.zap && !config.zaps.actors.is_empty() {
        return false;
    }
    if !config.zaps.endpoints.is_empty() {
        return false;
    }
    true
}
