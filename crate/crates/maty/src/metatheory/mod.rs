//! Extrinsic configuration typing and environment-reduction search: the
//! dynamic oracle for preservation, progress, and global progress.
//!
//! Configuration typing re-derives every judgement from the configuration
//! itself (terms are re-checked against the session types the runtime
//! carries; queued values are re-checked against recorded payload types;
//! per-session environments are re-checked for compliance). Environment
//! advancement searches the type-level LTS for a matching step, so a
//! faulty reduction shows up either as an untypable configuration or as an
//! impossible environment transition.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;

use crate::compliance::{
    compliant_env, ComplianceVerdict, EndpointType, RuntimeEnv, StepMode, SyncLabel,
};
use crate::runtime::{
    canonical_idle_check, run_observed, Configuration, RunOptions, StopReason, ThreadState,
};
use crate::syntax::terms::{Computation, Value, ValueKind};
use crate::syntax::types::{
    payload_equal, session_equal, PayloadType, SessionType,
};
use crate::typecheck::{check_computation, check_value, Ctx, Mode, TypeEnv};

#[derive(Debug, Clone)]
pub struct TypingVerdict {
    pub accepted: bool,
    pub env: Option<RuntimeEnv>,
    /// (node, rule, reason) for the first failing judgement.
    pub failure: Option<(String, String, String)>,
}

impl TypingVerdict {
    fn reject(node: impl Into<String>, rule: impl Into<String>, reason: impl Into<String>) -> Self {
        TypingVerdict {
            accepted: false,
            env: None,
            failure: Some((node.into(), rule.into(), reason.into())),
        }
    }
}

/// The oracle. Caches per-session compliance verdicts (keyed by the
/// canonical session environment) because loops revisit the same
/// environments every iteration.
pub struct Verifier {
    pub bound: usize,
    compliance_cache: RefCell<HashMap<(RuntimeEnv, bool), bool>>,
}

impl Default for Verifier {
    fn default() -> Self {
        Verifier::new(4)
    }
}

impl Verifier {
    pub fn new(bound: usize) -> Self {
        Verifier {
            bound,
            compliance_cache: RefCell::new(HashMap::new()),
        }
    }

    fn ctx_for(&self, config: &Configuration) -> Result<Ctx, (String, String, String)> {
        let mut ctx = Ctx::new(config.mode);
        ctx.bound = self.bound;
        ctx.sig = config.sig.clone();
        for (ap, state) in &config.aps {
            ctx.ap_protocols.insert(ap.0, state.protocol.clone());
        }
        for (name, value) in &config.defs {
            let ty = ascription_type(value).ok_or_else(|| {
                (
                    name.clone(),
                    "defs".to_string(),
                    "definition without a derivable ascription".to_string(),
                )
            })?;
            ctx.defs.insert(name.clone(), ty);
        }
        Ok(ctx)
    }

    fn session_compliant(&self, env: &RuntimeEnv, zap: bool) -> bool {
        let key = (env.clone(), zap);
        if let Some(&v) = self.compliance_cache.borrow().get(&key) {
            return v;
        }
        let verdict = compliant_env(env, self.bound, zap);
        let ok = matches!(verdict, ComplianceVerdict::Compliant);
        self.compliance_cache.borrow_mut().insert(key, ok);
        ok
    }

    /// Type a configuration, synthesizing its runtime environment from the
    /// carried types and re-checking every judgement.
    pub fn type_config(&self, config: &Configuration) -> TypingVerdict {
        let ctx = match self.ctx_for(config) {
            Ok(c) => c,
            Err((node, rule, reason)) => return TypingVerdict::reject(node, rule, reason),
        };
        let env0 = TypeEnv::default();
        let mut env = RuntimeEnv::default();

        let add_endpoint = |env: &mut RuntimeEnv,
                                s: u32,
                                role: &crate::syntax::types::Role,
                                ep: EndpointType|
         -> Result<(), String> {
            let key = (s, role.clone());
            if env.endpoints.iter().any(|(k, _)| *k == key) {
                return Err(format!("endpoint s{s}[{role}] is not linear"));
            }
            env.endpoints.push((key, ep));
            Ok(())
        };

        for (&name, node) in &config.actors {
            let who = config.actor_display(name);
            let state_ty = &node.state_ty;
            env.actors.push(name.0);
            match &node.thread {
                ThreadState::Idle(v) => match check_value(&ctx, &env0, v) {
                    Ok(ty) => {
                        if !payload_equal(&ty, state_ty) {
                            return TypingVerdict::reject(
                                who,
                                "TT-Idle",
                                format!("idle state has wrong type: {ty:?}"),
                            );
                        }
                    }
                    Err(e) => return TypingVerdict::reject(who, "TT-Idle", e.to_string()),
                },
                ThreadState::NoSession(comp) => {
                    match check_computation(&ctx, &env0, state_ty, &SessionType::End, comp) {
                        Ok((ty, post)) => {
                            if !(result_ok(&ty, state_ty) && post_is_end(&post)) {
                                return TypingVerdict::reject(
                                    who,
                                    "TT-NoSess",
                                    "standalone thread must produce the actor state at end",
                                );
                            }
                        }
                        Err(e) => return TypingVerdict::reject(who, "TT-NoSess", e.to_string()),
                    }
                }
                ThreadState::InSession {
                    session,
                    role,
                    comp,
                    ty,
                } => {
                    match check_computation(&ctx, &env0, state_ty, ty, comp) {
                        Ok((result, post)) => {
                            if !(result_ok(&result, state_ty) && post_is_end(&post)) {
                                return TypingVerdict::reject(
                                    who,
                                    "TT-Sess",
                                    "session thread must produce the actor state at end",
                                );
                            }
                        }
                        Err(e) => return TypingVerdict::reject(who, "TT-Sess", e.to_string()),
                    }
                    if let Err(e) =
                        add_endpoint(&mut env, session.0, role, EndpointType::Ty(ty.clone()))
                    {
                        return TypingVerdict::reject(who, "TT-Sess", e);
                    }
                }
            }
            for ((session, role), stored) in &node.handlers {
                let handler_ty = match check_value(&ctx, &env0, &stored.handler) {
                    Ok(t) => t,
                    Err(e) => return TypingVerdict::reject(who, "TH-Handler", e.to_string()),
                };
                let PayloadType::Handler { input, state } = handler_ty else {
                    return TypingVerdict::reject(who, "TH-Handler", "stored value is not a handler");
                };
                if !payload_equal(&state, state_ty) {
                    return TypingVerdict::reject(
                        who,
                        "TH-Handler",
                        "handler state type differs from actor state type",
                    );
                }
                if config.mode.zap {
                    let Some(on_fail) = &stored.on_fail else {
                        return TypingVerdict::reject(who, "TH-Handler", "missing failure callback");
                    };
                    if let Err(e) = self.check_plain_callback(&ctx, state_ty, on_fail) {
                        return TypingVerdict::reject(who, "TH-Handler", e);
                    }
                }
                if let Err(e) = add_endpoint(&mut env, session.0, role, EndpointType::Ty(input)) {
                    return TypingVerdict::reject(who, "TH-Handler", e);
                }
            }
            for (token, cb) in &node.init_callbacks {
                let cb_ty = match check_value(&ctx, &env0, cb) {
                    Ok(t) => t,
                    Err(e) => return TypingVerdict::reject(who, "TI-Callback", e.to_string()),
                };
                let PayloadType::Fun {
                    arg,
                    result,
                    pre,
                    post,
                    state,
                } = cb_ty
                else {
                    return TypingVerdict::reject(who, "TI-Callback", "callback is not a function");
                };
                let ok = payload_equal(&arg, state_ty)
                    && payload_equal(&result, state_ty)
                    && payload_equal(&state, state_ty)
                    && session_equal(&post, &SessionType::End);
                if !ok {
                    return TypingVerdict::reject(
                        who,
                        "TI-Callback",
                        "initialisation callback has the wrong shape",
                    );
                }
                env.tokens.push(((token.0, true), pre));
            }
            for (watched, cb) in &node.monitors {
                if !config.mode.zap {
                    return TypingVerdict::reject(who, "T-Actor", "monitors outside failure mode");
                }
                let watched_known = config.actors.contains_key(watched)
                    || config.zaps.actors.contains(watched);
                if !watched_known {
                    return TypingVerdict::reject(who, "T-Actor", "monitor of unknown actor");
                }
                if let Err(e) = self.check_plain_callback(&ctx, state_ty, cb) {
                    return TypingVerdict::reject(who, "T-Monitor", e);
                }
            }
            for (sname, fifo) in &node.send_suspended {
                let Some((sig_ty, sig_payload)) = ctx.sig.get(sname) else {
                    return TypingVerdict::reject(who, "TH-SendHandler", "unknown static name");
                };
                let want = PayloadType::fun(
                    PayloadType::pair(sig_payload.clone(), state_ty.clone()),
                    state_ty.clone(),
                    sig_ty.clone(),
                    SessionType::End,
                    state_ty.clone(),
                );
                for entry in fifo {
                    let func_ty = match check_value(&ctx, &env0, &entry.func) {
                        Ok(t) => t,
                        Err(e) => return TypingVerdict::reject(who, "TH-SendHandler", e.to_string()),
                    };
                    if !payload_equal(&func_ty, &want) {
                        return TypingVerdict::reject(
                            who,
                            "TH-SendHandler",
                            "send-suspension function has the wrong type",
                        );
                    }
                    if let Err(e) = add_endpoint(
                        &mut env,
                        entry.session.0,
                        &entry.role,
                        EndpointType::Ty(sig_ty.clone()),
                    ) {
                        return TypingVerdict::reject(who, "TH-SendHandler", e);
                    }
                }
            }
            for (sname, payload) in &node.switch_queue {
                let Some((_, sig_payload)) = ctx.sig.get(sname) else {
                    return TypingVerdict::reject(who, "TR-Request", "unknown static name");
                };
                match check_value(&ctx, &env0, payload) {
                    Ok(t) if payload_equal(&t, sig_payload) => {}
                    Ok(t) => {
                        return TypingVerdict::reject(
                            who,
                            "TR-Request",
                            format!("switch payload has type {t:?}"),
                        )
                    }
                    Err(e) => return TypingVerdict::reject(who, "TR-Request", e.to_string()),
                }
            }
        }

        for a in &config.zaps.actors {
            env.actors.push(a.0);
        }
        for (session, role) in &config.zaps.endpoints {
            if let Err(e) = add_endpoint(&mut env, session.0, role, EndpointType::Cancelled) {
                return TypingVerdict::reject(session.to_string(), "T-ZapRole", e);
            }
        }
        for (token, ty) in &config.zaps.tokens {
            env.tokens.push(((token.0, true), ty.clone()));
        }

        for (&ap, state) in &config.aps {
            env.aps.push(ap.0);
            if !self.session_compliant(&RuntimeEnv::for_protocol(&state.protocol), config.mode.zap)
            {
                return TypingVerdict::reject(ap.to_string(), "T-AP", "protocol is not compliant");
            }
            for (role, tokens) in &state.pending {
                let Some(role_ty) = state.protocol.get(role) else {
                    return TypingVerdict::reject(ap.to_string(), "TA-Entry", "unknown role");
                };
                for (token, _) in tokens {
                    env.tokens.push(((token.0, false), role_ty.clone()));
                }
            }
        }

        // Tokens must pair up with equal session types.
        {
            let mut by_token: HashMap<u32, Vec<(bool, SessionType)>> = HashMap::new();
            for ((t, pol), ty) in &env.tokens {
                by_token.entry(*t).or_default().push((*pol, ty.clone()));
            }
            for (t, entries) in by_token {
                match entries.len() {
                    2 => {
                        if entries[0].0 == entries[1].0 {
                            return TypingVerdict::reject(
                                format!("i{t}"),
                                "T-InitName",
                                "token polarities duplicated",
                            );
                        }
                        if !session_equal(&entries[0].1, &entries[1].1) {
                            return TypingVerdict::reject(
                                format!("i{t}"),
                                "T-InitName",
                                "token polarities disagree on the session type",
                            );
                        }
                    }
                    n => {
                        return TypingVerdict::reject(
                            format!("i{t}"),
                            "T-InitName",
                            format!("token has {n} entries"),
                        )
                    }
                }
            }
        }

        for (&session, state) in &config.sessions {
            let mut pairs = Vec::new();
            for ((from, to), q) in &state.queues {
                let mut tyq = std::collections::VecDeque::new();
                for msg in q {
                    match check_value(&ctx, &env0, &msg.value) {
                        Ok(t) if payload_equal(&t, &msg.payload_ty) => {}
                        Ok(t) => {
                            return TypingVerdict::reject(
                                session.to_string(),
                                "T-ConsQueue",
                                format!(
                                    "queued {} from {from} to {to} has type {t:?}, recorded {:?}",
                                    msg.label, msg.payload_ty
                                ),
                            )
                        }
                        Err(e) => {
                            return TypingVerdict::reject(
                                session.to_string(),
                                "T-ConsQueue",
                                e.to_string(),
                            )
                        }
                    }
                    tyq.push_back((msg.label.clone(), msg.payload_ty.clone()));
                }
                pairs.push(((from.clone(), to.clone()), tyq));
            }
            env.queues.push((session.0, pairs));
        }

        // Every endpoint's session must have a queue entry.
        for ((s, _), _) in &env.endpoints {
            if !env.queues.iter().any(|(qs, _)| qs == s) {
                return TypingVerdict::reject(
                    format!("s{s}"),
                    "T-SessionName",
                    "endpoint without a session queue",
                );
            }
        }

        env.normalize();

        // T-SessionName: every session environment must be compliant.
        for s in env.sessions() {
            let session_env = env.session_env(s);
            if !self.session_compliant(&session_env, config.mode.zap) {
                return TypingVerdict::reject(
                    format!("s{s}"),
                    "T-SessionName",
                    "session environment is not compliant",
                );
            }
        }

        TypingVerdict {
            accepted: true,
            env: Some(env),
            failure: None,
        }
    }

    fn check_plain_callback(
        &self,
        ctx: &Ctx,
        state_ty: &PayloadType,
        cb: &Value,
    ) -> Result<(), String> {
        let ty = check_value(ctx, &TypeEnv::default(), cb).map_err(|e| e.to_string())?;
        let want = PayloadType::fun(
            state_ty.clone(),
            state_ty.clone(),
            SessionType::End,
            SessionType::End,
            state_ty.clone(),
        );
        if payload_equal(&ty, &want) {
            Ok(())
        } else {
            Err("callback is not state -> state at end".to_string())
        }
    }

    /// Whether `d2` is reachable from `d1` by at most one communication
    /// step (plus, in failure mode, any number of spontaneous
    /// cancellations), up to queue congruence, end-endpoint garbage,
    /// token-pair introduction and elimination, fresh names, and fresh
    /// compliant sessions.
    pub fn env_advances(&self, d1: &RuntimeEnv, d2: &RuntimeEnv, zap: bool) -> bool {
        if !tokens_advance(d1, d2) {
            return false;
        }
        if !zap && !subset(&d1.actors, &d2.actors) {
            return false;
        }
        if !subset(&d1.aps, &d2.aps) {
            return false;
        }
        let mut budget_used = false;
        let s1 = d1.sessions();
        let s2 = d2.sessions();
        for s in &s1 {
            let e1 = d1.session_env(*s);
            if !s2.contains(s) {
                // Garbage-collected session: nothing live may remain.
                let gone_ok = e1.endpoints.iter().all(|(_, e)| {
                    matches!(e, EndpointType::Cancelled)
                }) && e1.total_messages() == 0;
                if !gone_ok {
                    return false;
                }
                continue;
            }
            let e2 = d2.session_env(*s);
            if envs_equal(&e1, &e2) {
                continue;
            }
            if zap && zap_close_matches(&e1, &e2) {
                continue;
            }
            // One gamma step, then cancellation closure.
            let mut matched = false;
            for (_, succ) in crate::compliance::env_step(
                &e1,
                StepMode {
                    zap,
                    spontaneous_zap: false,
                },
            ) {
                if envs_equal(&succ, &e2) || (zap && zap_close_matches(&succ, &e2)) {
                    matched = true;
                    break;
                }
            }
            if !matched || budget_used {
                return false;
            }
            budget_used = true;
        }
        // Sessions only in d2 are fresh; their compliance was established
        // by configuration typing.
        true
    }

    /// Run a program under the given options, checking configuration
    /// typability and environment advancement after every step.
    pub fn preservation_harness(
        &self,
        mut config: Configuration,
        opts: &RunOptions,
    ) -> HarnessReport {
        let zap = config.mode.zap;
        let initial_verdict = self.type_config(&config);
        let mut violations = Vec::new();
        if !initial_verdict.accepted {
            violations.push(Violation {
                step: 0,
                kind: "type_config".into(),
                detail: format!("{:?}", initial_verdict.failure),
                event: "<initial>".into(),
            });
        }
        let mut prev_env = initial_verdict.env.unwrap_or_default();
        let (trace, stop) = run_observed(&mut config, opts, |cfg, event| {
            if violations.len() >= 10 {
                return;
            }
            let verdict = self.type_config(cfg);
            match verdict {
                TypingVerdict {
                    accepted: true,
                    env: Some(env),
                    ..
                } => {
                    if !self.env_advances(&prev_env, &env, zap) {
                        violations.push(Violation {
                            step: event.idx,
                            kind: "env_advances".into(),
                            detail: "no matching environment transition".into(),
                            event: event.to_string(),
                        });
                    }
                    prev_env = env;
                }
                TypingVerdict { failure, .. } => {
                    violations.push(Violation {
                        step: event.idx,
                        kind: "type_config".into(),
                        detail: format!("{failure:?}"),
                        event: event.to_string(),
                    });
                }
            }
        });
        let quiescent_canonical = match stop {
            StopReason::Quiescent => Some(canonical_idle_check(&config)),
            _ => None,
        };
        HarnessReport {
            steps: trace.events.len() as u64,
            stop,
            violations,
            quiescent_canonical,
            trace,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub step: u64,
    pub kind: String,
    pub detail: String,
    pub event: String,
}

#[derive(Debug)]
pub struct HarnessReport {
    pub steps: u64,
    pub stop: StopReason,
    pub violations: Vec<Violation>,
    /// For quiescent stops, whether the final configuration has the
    /// canonical shape the progress theorems predict.
    pub quiescent_canonical: Option<bool>,
    pub trace: crate::runtime::Trace,
}

impl HarnessReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.quiescent_canonical.unwrap_or(true)
    }
}

fn result_ok(found: &PayloadType, want: &PayloadType) -> bool {
    matches!(found, PayloadType::Bottom) || payload_equal(found, want)
}

fn post_is_end(post: &crate::typecheck::Eff) -> bool {
    match post {
        crate::typecheck::Eff::Bot => true,
        crate::typecheck::Eff::Ty(s) => session_equal(s, &SessionType::End),
    }
}

/// The declared type of a definition, read off its ascriptions.
pub fn ascription_type(v: &Value) -> Option<PayloadType> {
    match &v.kind {
        ValueKind::Lam { sig, .. } | ValueKind::Rec { sig, .. } => Some(sig.to_type()),
        ValueKind::Handler {
            input, state_ty, ..
        } => Some(PayloadType::handler(input.clone(), state_ty.clone())),
        ValueKind::Const(c) => Some(match c {
            crate::syntax::terms::Const::Unit => PayloadType::UNIT,
            crate::syntax::terms::Const::Bool(_) => PayloadType::BOOL,
            crate::syntax::terms::Const::Int(_) => PayloadType::INT,
            crate::syntax::terms::Const::Str(_) => PayloadType::STR,
        }),
        ValueKind::Pair(a, b) => Some(PayloadType::pair(ascription_type(a)?, ascription_type(b)?)),
        _ => None,
    }
}

fn subset(a: &[u32], b: &[u32]) -> bool {
    a.iter().all(|x| b.contains(x))
}

fn tokens_advance(d1: &RuntimeEnv, d2: &RuntimeEnv) -> bool {
    // Tokens shared by both environments keep their types; additions and
    // removals happen in matched polarized pairs, which the typing pass
    // has already validated.
    for (key, ty) in &d1.tokens {
        if let Some((_, ty2)) = d2.tokens.iter().find(|(k, _)| k == key) {
            if !session_equal(ty, ty2) {
                return false;
            }
        }
    }
    true
}

fn envs_equal(a: &RuntimeEnv, b: &RuntimeEnv) -> bool {
    if a.endpoints.len() != b.endpoints.len() {
        return false;
    }
    for ((key, ea), (key2, eb)) in a.endpoints.iter().zip(b.endpoints.iter()) {
        if key != key2 || !endpoint_equal(ea, eb) {
            return false;
        }
    }
    queues_equal(a, b)
}

fn endpoint_equal(a: &EndpointType, b: &EndpointType) -> bool {
    match (a, b) {
        (EndpointType::Cancelled, EndpointType::Cancelled) => true,
        (EndpointType::Ty(x), EndpointType::Ty(y)) => session_equal(x, y),
        _ => false,
    }
}

/// `b` equals `a` after cancelling some subset of `a`'s live endpoints.
fn zap_close_matches(a: &RuntimeEnv, b: &RuntimeEnv) -> bool {
    if a.endpoints.len() != b.endpoints.len() {
        return false;
    }
    for ((key, ea), (key2, eb)) in a.endpoints.iter().zip(b.endpoints.iter()) {
        if key != key2 {
            return false;
        }
        let ok = match (ea, eb) {
            (EndpointType::Cancelled, EndpointType::Cancelled) => true,
            (EndpointType::Ty(x), EndpointType::Ty(y)) => session_equal(x, y),
            (EndpointType::Ty(_), EndpointType::Cancelled) => true,
            (EndpointType::Cancelled, EndpointType::Ty(_)) => false,
        };
        if !ok {
            return false;
        }
    }
    queues_equal(a, b)
}

fn queues_equal(a: &RuntimeEnv, b: &RuntimeEnv) -> bool {
    let collect = |e: &RuntimeEnv| -> Vec<((u32, crate::syntax::types::Role, crate::syntax::types::Role), Vec<(crate::syntax::types::Label, PayloadType)>)> {
        let mut out = Vec::new();
        for (s, pairs) in &e.queues {
            for ((from, to), q) in pairs {
                if !q.is_empty() {
                    out.push(((*s, from.clone(), to.clone()), q.iter().cloned().collect()));
                }
            }
        }
        out
    };
    let qa = collect(a);
    let qb = collect(b);
    if qa.len() != qb.len() {
        return false;
    }
    qa.iter().zip(qb.iter()).all(|((ka, va), (kb, vb))| {
        ka == kb
            && va.len() == vb.len()
            && va
                .iter()
                .zip(vb.iter())
                .all(|((la, ta), (lb, tb))| la == lb && payload_equal(ta, tb))
    })
}

// Re-exported so harness callers can name the label type in assertions.
pub use crate::compliance::SyncLabel as EnvLabel;

#[allow(unused)]
fn _def_use(_: &SyncLabel, _: &Computation, _: Mode) {}
