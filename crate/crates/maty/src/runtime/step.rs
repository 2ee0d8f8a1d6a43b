//! The small-step reduction rules: redex enumeration and application,
//! including the failure-handling and session-switching rules.

use thiserror::Error;

use crate::syntax::terms::{
    subst_comp, BinOp, CompKind, Computation, Const, Value, ValueKind,
};
use crate::syntax::types::{unfold, PayloadType, Role, SessionType};

use super::config::{
    ActorName, ActorNode, ApState, Configuration, Msg, SendSuspension, SessionName, SessionState,
    StoredHandler, ThreadState, TokenId,
};
use super::redex::Redex;
use super::trace::TraceEvent;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("stale redex: {0}")]
    StaleRedex(String),
    #[error("stuck term in actor {0}: {1}")]
    Stuck(String, String),
}

/// Resolve definition references to the underlying value.
pub fn resolve_value(config: &Configuration, v: &Value) -> Value {
    let mut cur = v.clone();
    let mut steps = 0;
    while let ValueKind::Def(name) = &cur.kind {
        match config.defs.get(name) {
            Some(next) => cur = next.clone(),
            None => break,
        }
        steps += 1;
        if steps > 1000 {
            break;
        }
    }
    cur
}

/// What sits at the evaluation-context hole of a computation.
enum Head<'a> {
    /// A pure term reduction is possible.
    Pure,
    /// The hole holds a communication or effect construct.
    Comm(&'a Computation),
    /// The whole computation is `return V`.
    Done,
    /// No rule applies (ill-typed or corrupted term).
    Stuck,
}

fn head_of<'a>(config: &Configuration, m: &'a Computation) -> Head<'a> {
    match &m.kind {
        CompKind::Let { bound, .. } => match &bound.kind {
            CompKind::Return(_) => Head::Pure,
            _ => match head_of(config, bound) {
                Head::Done => Head::Stuck, // unreachable: covered above
                other => other,
            },
        },
        CompKind::Return(_) => Head::Done,
        CompKind::App(f, _) => {
            let f = resolve_value(config, f);
            match f.kind {
                ValueKind::Lam { .. } | ValueKind::Rec { .. } => Head::Pure,
                _ => Head::Stuck,
            }
        }
        CompKind::If(c, _, _) => match &c.kind {
            ValueKind::Const(Const::Bool(_)) => Head::Pure,
            _ => Head::Stuck,
        },
        CompKind::LetPair { pair, .. } => match &pair.kind {
            ValueKind::Pair(_, _) => Head::Pure,
            _ => Head::Stuck,
        },
        CompKind::BinOp(_, _, _) => Head::Pure,
        _ => Head::Comm(m),
    }
}

/// One beta step at the hole. Callers guarantee `head_of` said `Pure`.
fn beta(config: &Configuration, m: &Computation) -> Result<Computation, String> {
    match &m.kind {
        CompKind::Let {
            binder,
            bound,
            body,
        } => match &bound.kind {
            CompKind::Return(v) => Ok(subst_comp(body, binder, v)),
            _ => {
                let reduced = beta(config, bound)?;
                Ok(Computation {
                    kind: CompKind::Let {
                        binder: binder.clone(),
                        bound: Box::new(reduced),
                        body: body.clone(),
                    },
                    span: m.span,
                })
            }
        },
        CompKind::App(f, a) => {
            let f = resolve_value(config, f);
            match &f.kind {
                ValueKind::Lam { param, body, .. } => Ok(subst_comp(body, param, a)),
                ValueKind::Rec {
                    fname,
                    param,
                    body,
                    ..
                } => {
                    let unrolled = subst_comp(body, fname, &f);
                    Ok(subst_comp(&unrolled, param, a))
                }
                other => Err(format!("application of non-function {other:?}")),
            }
        }
        CompKind::If(c, t, e) => match &c.kind {
            ValueKind::Const(Const::Bool(true)) => Ok((**t).clone()),
            ValueKind::Const(Const::Bool(false)) => Ok((**e).clone()),
            other => Err(format!("if on non-boolean {other:?}")),
        },
        CompKind::LetPair {
            left,
            right,
            pair,
            body,
        } => match &pair.kind {
            ValueKind::Pair(a, b) => {
                let with_left = subst_comp(body, left, a);
                Ok(subst_comp(&with_left, right, b))
            }
            other => Err(format!("let-pair on non-pair {other:?}")),
        },
        CompKind::BinOp(op, a, b) => {
            let v = eval_op(*op, a, b)?;
            Ok(Computation {
                kind: CompKind::Return(v),
                span: m.span,
            })
        }
        other => Err(format!("no pure step for {other:?}")),
    }
}

fn eval_op(op: BinOp, a: &Value, b: &Value) -> Result<Value, String> {
    use Const::*;
    let err = || format!("operands {a:?} {op} {b:?}");
    let (ca, cb) = match (&a.kind, &b.kind) {
        (ValueKind::Const(x), ValueKind::Const(y)) => (x, y),
        _ => return Err(err()),
    };
    let out = match (op, ca, cb) {
        (BinOp::Add, Int(x), Int(y)) => Int(x + y),
        (BinOp::Sub, Int(x), Int(y)) => Int(x - y),
        (BinOp::Mul, Int(x), Int(y)) => Int(x * y),
        (BinOp::Eq, Int(x), Int(y)) => Bool(x == y),
        (BinOp::Lt, Int(x), Int(y)) => Bool(x < y),
        (BinOp::Leq, Int(x), Int(y)) => Bool(x <= y),
        (BinOp::And, Bool(x), Bool(y)) => Bool(*x && *y),
        (BinOp::Or, Bool(x), Bool(y)) => Bool(*x || *y),
        (BinOp::Concat, Str(x), Str(y)) => Str(format!("{x}{y}")),
        _ => return Err(err()),
    };
    Ok(Value::new(ValueKind::Const(out)))
}

/// Replace the computation at the evaluation-context hole with `return ()`
/// (the residue of a communication action).
fn fill_hole_with_unit(m: &Computation) -> Computation {
    fill_hole(m, Computation::ret(Value::unit()))
}

fn fill_hole(m: &Computation, replacement: Computation) -> Computation {
    match &m.kind {
        CompKind::Let {
            binder,
            bound,
            body,
        } if !matches!(bound.kind, CompKind::Return(_)) => Computation {
            kind: CompKind::Let {
                binder: binder.clone(),
                bound: Box::new(fill_hole(bound, replacement)),
                body: body.clone(),
            },
            span: m.span,
        },
        _ => replacement,
    }
}

/// The computation at the hole (the innermost non-let position).
fn at_hole(m: &Computation) -> &Computation {
    match &m.kind {
        CompKind::Let { bound, .. } if !matches!(bound.kind, CompKind::Return(_)) => at_hole(bound),
        _ => m,
    }
}

/// All rule instances firable in the current configuration, in a
/// deterministic order.
pub fn enabled_redexes(config: &Configuration) -> Vec<Redex> {
    let mut out = Vec::new();
    for (&name, node) in &config.actors {
        match &node.thread {
            ThreadState::NoSession(comp) | ThreadState::InSession { comp, .. } => {
                let in_session = matches!(node.thread, ThreadState::InSession { .. });
                let session_role = match &node.thread {
                    ThreadState::InSession { session, role, .. } => {
                        Some((*session, role.clone()))
                    }
                    _ => None,
                };
                match head_of(config, comp) {
                    Head::Pure => out.push(Redex::Lift { actor: name }),
                    Head::Done => out.push(Redex::Reset { actor: name }),
                    Head::Stuck => {}
                    Head::Comm(hole) => match &hole.kind {
                        CompKind::Send { to, label, .. } => {
                            if let Some((session, _)) = &session_role {
                                out.push(Redex::Send {
                                    actor: name,
                                    session: *session,
                                    to: to.clone(),
                                    label: label.clone(),
                                });
                            }
                        }
                        CompKind::Suspend { .. } => {
                            if in_session {
                                out.push(Redex::Suspend { actor: name });
                            }
                        }
                        CompKind::Spawn { .. } => out.push(Redex::Spawn { actor: name }),
                        CompKind::NewAp(_) => out.push(Redex::NewAp { actor: name }),
                        CompKind::Register { ap, role, .. } => {
                            if let ValueKind::ApRef(ap_id) =
                                resolve_value(config, ap).kind
                            {
                                let ap_name = super::config::ApName(ap_id);
                                if config.aps.contains_key(&ap_name) {
                                    out.push(Redex::Register {
                                        actor: name,
                                        ap: ap_name,
                                        role: role.clone(),
                                    });
                                }
                            }
                        }
                        CompKind::Monitor { .. } => {
                            if config.mode.zap {
                                out.push(Redex::Monitor { actor: name });
                            }
                        }
                        CompKind::Raise => {
                            if config.mode.zap {
                                match &session_role {
                                    Some((session, role)) => out.push(Redex::RaiseS {
                                        actor: name,
                                        session: *session,
                                        role: role.clone(),
                                    }),
                                    None => out.push(Redex::Raise { actor: name }),
                                }
                            }
                        }
                        CompKind::Leave(_) => {
                            if config.mode.zap {
                                if let Some((session, role)) = &session_role {
                                    out.push(Redex::Leave {
                                        actor: name,
                                        session: *session,
                                        role: role.clone(),
                                    });
                                }
                            }
                        }
                        CompKind::SuspendSend { name: sname, .. } => {
                            if config.mode.switch && in_session {
                                out.push(Redex::SuspendSend {
                                    actor: name,
                                    name: sname.clone(),
                                    fresh: !node.send_suspended.contains_key(sname),
                                });
                            }
                        }
                        CompKind::Become { name: sname, .. } => {
                            if config.mode.switch {
                                out.push(Redex::Become {
                                    actor: name,
                                    name: sname.clone(),
                                });
                            }
                        }
                        _ => {}
                    },
                }
            }
            ThreadState::Idle(_) => {
                // E-React: a stored handler with a matching head message.
                for ((session, role), stored) in &node.handlers {
                    let handler = resolve_value(config, &stored.handler);
                    let ValueKind::Handler { from, clauses, .. } = &handler.kind else {
                        continue;
                    };
                    if let Some(state) = config.sessions.get(session) {
                        if let Some(msg) = state.front(from, role) {
                            if clauses.iter().any(|c| c.label == msg.label) {
                                out.push(Redex::React {
                                    actor: name,
                                    session: *session,
                                    role: role.clone(),
                                    from: from.clone(),
                                    label: msg.label.clone(),
                                });
                            }
                        }
                    }
                    // E-CancelH: awaited sender cancelled, no pending
                    // message from it.
                    if config.mode.zap {
                        let sender_zapped =
                            config.zaps.endpoints.contains(&(*session, from.clone()));
                        let no_pending = config
                            .sessions
                            .get(session)
                            .map_or(true, |st| st.messages_between(from, role) == 0);
                        if sender_zapped && no_pending && stored.on_fail.is_some() {
                            out.push(Redex::CancelH {
                                actor: name,
                                session: *session,
                                role: role.clone(),
                                sender: from.clone(),
                            });
                        }
                    }
                }
                // E-InvokeM: a monitored actor has crashed.
                if config.mode.zap {
                    for (watched, _) in &node.monitors {
                        if config.zaps.actors.contains(watched) {
                            out.push(Redex::InvokeM {
                                actor: name,
                                watched: *watched,
                            });
                            break;
                        }
                    }
                }
                // E-Activate / orphaned switch requests.
                if config.mode.switch {
                    if let Some((sname, _)) = node.switch_queue.front() {
                        let available = node
                            .send_suspended
                            .get(sname)
                            .map_or(false, |fifo| !fifo.is_empty());
                        if available {
                            let entry = &node.send_suspended[sname][0];
                            out.push(Redex::Activate {
                                actor: name,
                                name: sname.clone(),
                                session: entry.session,
                                role: entry.role.clone(),
                            });
                        } else if node.orphaned_switches.contains(sname) {
                            out.push(Redex::OrphanSwitch {
                                actor: name,
                                name: sname.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    // E-Init: one redex per access point whose minimal assignment exists.
    for (&ap_name, ap) in &config.aps {
        if let Some(choices) = init_assignment(config, ap) {
            out.push(Redex::Init {
                ap: ap_name,
                choices,
            });
        }
    }
    if config.mode.zap {
        // E-CancelMsg: head messages to cancelled endpoints.
        for (&session, state) in &config.sessions {
            for ((from, to), q) in &state.queues {
                if config.zaps.endpoints.contains(&(session, to.clone())) {
                    if let Some(msg) = q.front() {
                        out.push(Redex::CancelMsg {
                            session,
                            from: from.clone(),
                            to: to.clone(),
                            label: msg.label.clone(),
                        });
                    }
                }
            }
        }
        // E-CancelAP: registered tokens whose registration was cancelled.
        for (&ap_name, ap) in &config.aps {
            for (role, tokens) in &ap.pending {
                for (token, _) in tokens {
                    if config.zaps.tokens.contains_key(token) {
                        out.push(Redex::CancelAp {
                            ap: ap_name,
                            role: role.clone(),
                            token: *token,
                        });
                    }
                }
            }
        }
    }
    out
}

/// The lexicographically minimal per-role token assignment for a session
/// initiation: every role gets the lowest registered token whose owner is
/// idle, still holds the callback, and is not already chosen.
fn init_assignment(
    config: &Configuration,
    ap: &ApState,
) -> Option<Vec<(Role, TokenId, ActorName)>> {
    let roles: Vec<&Role> = ap.protocol.roles().collect();
    if roles.is_empty() {
        return None;
    }
    let mut chosen: Vec<(Role, TokenId, ActorName)> = Vec::new();
    fn assign(
        config: &Configuration,
        ap: &ApState,
        roles: &[&Role],
        idx: usize,
        chosen: &mut Vec<(Role, TokenId, ActorName)>,
    ) -> bool {
        if idx == roles.len() {
            return true;
        }
        let role = roles[idx];
        let Some(tokens) = ap.pending.get(role) else {
            return false;
        };
        for (token, owner) in tokens {
            let valid = config
                .actors
                .get(owner)
                .map_or(false, |node| {
                    node.thread.is_idle() && node.init_callbacks.contains_key(token)
                })
                && !chosen.iter().any(|(_, _, a)| a == owner);
            if !valid {
                continue;
            }
            chosen.push((role.clone(), *token, *owner));
            if assign(config, ap, roles, idx + 1, chosen) {
                return true;
            }
            chosen.pop();
        }
        false
    }
    if assign(config, ap, &roles, 0, &mut chosen) {
        Some(chosen)
    } else {
        None
    }
}

/// Options threaded through stepping; the payload corruption switch exists
/// so tests can demonstrate that the preservation oracle detects a broken
/// stepper.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    pub corrupt_send_payload: bool,
}

/// Apply one rule instance. Returns the trace event; the configuration is
/// updated in place and garbage-collected.
pub fn step(
    config: &mut Configuration,
    redex: &Redex,
    idx: u64,
    opts: StepOptions,
) -> Result<TraceEvent, StepError> {
    let stale = |what: &str| StepError::StaleRedex(what.to_string());
    let mut label: Option<SessionName> = None;
    let mut detail = String::new();
    let actor_display = redex
        .thread_actor()
        .map(|a| config.actor_display(a))
        .unwrap_or_default();
    let mut event_actor = actor_display.clone();

    match redex {
        Redex::Lift { actor } => {
            let node = config.actors.get_mut(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c.clone(),
                _ => return Err(stale("thread")),
            };
            let reduced = beta(config, &comp)
                .map_err(|e| StepError::Stuck(actor_display.clone(), e))?;
            let node = config.actors.get_mut(actor).unwrap();
            match &mut node.thread {
                ThreadState::NoSession(c) => *c = reduced,
                ThreadState::InSession { comp, .. } => *comp = reduced,
                _ => unreachable!(),
            }
        }
        Redex::Send {
            actor,
            session,
            to,
            label: msg_label,
        } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let ThreadState::InSession {
                session: s,
                role,
                comp,
                ty,
            } = &node.thread
            else {
                return Err(stale("not in session"));
            };
            if s != session {
                return Err(stale("session"));
            }
            let hole = at_hole(comp);
            let CompKind::Send { to: hto, label: hlabel, payload } = &hole.kind else {
                return Err(stale("hole is not a send"));
            };
            if hto != to || hlabel != msg_label {
                return Err(stale("send shape"));
            }
            let unfolded = unfold(ty);
            let SessionType::Select { to: t_to, branches } = &unfolded else {
                return Err(stale("carried type is not a selection"));
            };
            if t_to != to {
                return Err(stale("selection target"));
            }
            let arm = branches.get(msg_label).ok_or_else(|| stale("label"))?;
            let mut value = payload.clone();
            if opts.corrupt_send_payload {
                value = Value::int(42);
            }
            let msg = Msg {
                label: msg_label.clone(),
                value,
                payload_ty: arm.payload.clone(),
            };
            let role = role.clone();
            let next_ty = arm.cont.clone();
            let next_comp = fill_hole_with_unit(comp);
            config
                .sessions
                .get_mut(session)
                .ok_or_else(|| stale("session state"))?
                .push(&role, to, msg);
            let node = config.actors.get_mut(actor).unwrap();
            node.thread = ThreadState::InSession {
                session: *session,
                role,
                comp: next_comp,
                ty: next_ty,
            };
            label = Some(*session);
            detail = format!("{msg_label} to {to}");
        }
        Redex::Suspend { actor } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let ThreadState::InSession {
                session,
                role,
                comp,
                ..
            } = &node.thread
            else {
                return Err(stale("not in session"));
            };
            let (session, role) = (*session, role.clone());
            let hole = at_hole(comp);
            let CompKind::Suspend {
                handler,
                state,
                on_fail,
            } = &hole.kind
            else {
                return Err(stale("hole is not a suspend"));
            };
            let handler = resolve_value(config, handler);
            let state = state.clone();
            let on_fail = if config.mode.zap {
                Some(match on_fail {
                    Some(cb) => resolve_value(config, cb),
                    None => default_fail_callback(&node.state_ty),
                })
            } else {
                None
            };
            let node = config.actors.get_mut(actor).unwrap();
            node.handlers
                .insert((session, role), StoredHandler { handler, on_fail });
            node.thread = ThreadState::Idle(state);
            detail = format!("installed handler for {session}");
        }
        Redex::Reset { actor } => {
            let node = config.actors.get_mut(actor).ok_or_else(|| stale("actor"))?;
            let value = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => {
                    match &c.kind {
                        CompKind::Return(v) => v.clone(),
                        _ => return Err(stale("thread is not a return")),
                    }
                }
                _ => return Err(stale("thread")),
            };
            node.thread = ThreadState::Idle(value);
        }
        Redex::Spawn { actor } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => return Err(stale("thread")),
            };
            let hole = at_hole(comp);
            let CompKind::Spawn {
                body,
                state_ty,
                name_hint,
            } = &hole.kind
            else {
                return Err(stale("hole is not a spawn"));
            };
            let body = (**body).clone();
            let state_ty = state_ty.clone();
            let hint = name_hint.clone();
            let new_name = ActorName(config.fresh_name());
            if let Some(h) = &hint {
                config.assign_label(new_name, h);
            }
            let result = if config.mode.zap {
                Value::new(ValueKind::ActorRef(new_name.0))
            } else {
                Value::unit()
            };
            let node = config.actors.get_mut(actor).unwrap();
            let comp = match &mut node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => unreachable!(),
            };
            *comp = fill_hole(comp, Computation::ret(result));
            config
                .actors
                .insert(new_name, ActorNode::new(state_ty, ThreadState::NoSession(body)));
            detail = format!("spawned {}", config.actor_display(new_name));
        }
        Redex::NewAp { actor } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => return Err(stale("thread")),
            };
            let hole = at_hole(comp);
            let CompKind::NewAp(protocol) = &hole.kind else {
                return Err(stale("hole is not newAP"));
            };
            let protocol = protocol.clone();
            let ap_name = super::config::ApName(config.fresh_name());
            let pending = protocol
                .roles()
                .map(|r| (r.clone(), Default::default()))
                .collect();
            config.aps.insert(
                ap_name,
                ApState {
                    protocol,
                    pending,
                },
            );
            let node = config.actors.get_mut(actor).unwrap();
            let comp = match &mut node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => unreachable!(),
            };
            *comp = fill_hole(
                comp,
                Computation::ret(Value::new(ValueKind::ApRef(ap_name.0))),
            );
            detail = format!("created {ap_name}");
        }
        Redex::Register { actor, ap, role } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => return Err(stale("thread")),
            };
            let hole = at_hole(comp);
            let CompKind::Register {
                role: hrole,
                callback,
                ..
            } = &hole.kind
            else {
                return Err(stale("hole is not a register"));
            };
            if hrole != role {
                return Err(stale("role"));
            }
            let callback = resolve_value(config, callback);
            let token = TokenId(config.fresh_name());
            let ap_state = config.aps.get_mut(ap).ok_or_else(|| stale("ap"))?;
            ap_state
                .pending
                .get_mut(role)
                .ok_or_else(|| stale("role entry"))?
                .insert((token, *actor));
            let node = config.actors.get_mut(actor).unwrap();
            node.init_callbacks.insert(token, callback);
            let comp = match &mut node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => unreachable!(),
            };
            *comp = fill_hole_with_unit(comp);
            detail = format!("{role} at {ap} token {token}");
        }
        Redex::Init { ap, choices } => {
            // Validate the assignment is still current.
            for (_, token, owner) in choices {
                let ok = config
                    .aps
                    .get(ap)
                    .map_or(false, |a| {
                        a.pending
                            .values()
                            .any(|set| set.contains(&(*token, *owner)))
                    })
                    && config
                        .actors
                        .get(owner)
                        .map_or(false, |n| {
                            n.thread.is_idle() && n.init_callbacks.contains_key(token)
                        });
                if !ok {
                    return Err(stale("init choice"));
                }
            }
            let session = SessionName(config.fresh_name());
            config.sessions.insert(session, SessionState::default());
            let protocol = config.aps[ap].protocol.clone();
            let mut participants = Vec::new();
            for (role, token, owner) in choices {
                let ap_state = config.aps.get_mut(ap).unwrap();
                ap_state
                    .pending
                    .get_mut(role)
                    .unwrap()
                    .remove(&(*token, *owner));
                let node = config.actors.get_mut(owner).unwrap();
                let callback = node.init_callbacks.remove(token).unwrap();
                let ThreadState::Idle(state) = &node.thread else {
                    unreachable!()
                };
                let comp = Computation::app(callback, state.clone());
                let ty = protocol.get(role).cloned().ok_or_else(|| stale("role type"))?;
                node.thread = ThreadState::InSession {
                    session,
                    role: role.clone(),
                    comp,
                    ty,
                };
                participants.push(format!("{}:{role}", config.actor_display(*owner)));
            }
            event_actor = String::new();
            detail = format!("{session} at {ap} with {}", participants.join(", "));
        }
        Redex::React {
            actor,
            session,
            role,
            from,
            label: msg_label,
        } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            if !node.thread.is_idle() {
                return Err(stale("not idle"));
            }
            let stored = node
                .handlers
                .get(&(*session, role.clone()))
                .ok_or_else(|| stale("handler"))?;
            let handler = resolve_value(config, &stored.handler);
            let ValueKind::Handler {
                from: h_from,
                state_var,
                clauses,
                input,
                ..
            } = &handler.kind
            else {
                return Err(stale("stored value is not a handler"));
            };
            if h_from != from {
                return Err(stale("sender role"));
            }
            let state = config
                .sessions
                .get_mut(session)
                .ok_or_else(|| stale("session state"))?;
            let msg = state.pop(from, role).ok_or_else(|| stale("message"))?;
            if msg.label != *msg_label {
                return Err(stale("label"));
            }
            let clause = clauses
                .iter()
                .find(|c| c.label == msg.label)
                .ok_or_else(|| stale("clause"))?;
            let unfolded = unfold(input);
            let SessionType::Branch { branches, .. } = &unfolded else {
                return Err(stale("handler type"));
            };
            let cont_ty = branches
                .get(&msg.label)
                .ok_or_else(|| stale("branch type"))?
                .cont
                .clone();
            let body = subst_comp(&clause.body, &clause.binder, &msg.value);
            let node = config.actors.get_mut(actor).unwrap();
            let ThreadState::Idle(actor_state) = &node.thread else {
                unreachable!()
            };
            let body = subst_comp(&body, state_var, actor_state);
            node.handlers.remove(&(*session, role.clone()));
            node.thread = ThreadState::InSession {
                session: *session,
                role: role.clone(),
                comp: body,
                ty: cont_ty,
            };
            label = Some(*session);
            detail = format!("{msg_label} from {from}");
        }
        Redex::Monitor { actor } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => return Err(stale("thread")),
            };
            let hole = at_hole(comp);
            let CompKind::Monitor { pid, callback } = &hole.kind else {
                return Err(stale("hole is not a monitor"));
            };
            let pid = resolve_value(config, pid);
            let ValueKind::ActorRef(watched) = pid.kind else {
                return Err(stale("pid"));
            };
            let callback = resolve_value(config, callback);
            let node = config.actors.get_mut(actor).unwrap();
            node.monitors.push((ActorName(watched), callback));
            let comp = match &mut node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => unreachable!(),
            };
            *comp = fill_hole_with_unit(comp);
            detail = format!("watching {}", config.actor_display(ActorName(watched)));
        }
        Redex::SuspendSend {
            actor,
            name: sname,
            ..
        } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let ThreadState::InSession {
                session,
                role,
                comp,
                ..
            } = &node.thread
            else {
                return Err(stale("not in session"));
            };
            let (session, role) = (*session, role.clone());
            let hole = at_hole(comp);
            let CompKind::SuspendSend {
                name: hname,
                func,
                state,
            } = &hole.kind
            else {
                return Err(stale("hole is not a send-suspend"));
            };
            if hname != sname {
                return Err(stale("static name"));
            }
            let func = resolve_value(config, func);
            let state = state.clone();
            let node = config.actors.get_mut(actor).unwrap();
            node.send_suspended
                .entry(sname.clone())
                .or_default()
                .push_back(SendSuspension {
                    session,
                    role,
                    func,
                });
            node.orphaned_switches.remove(sname);
            node.thread = ThreadState::Idle(state);
            detail = format!("{sname} now holds {session}");
        }
        Redex::Become {
            actor,
            name: sname,
        } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => return Err(stale("thread")),
            };
            let hole = at_hole(comp);
            let CompKind::Become {
                name: hname,
                payload,
            } = &hole.kind
            else {
                return Err(stale("hole is not a become"));
            };
            if hname != sname {
                return Err(stale("static name"));
            }
            let payload = payload.clone();
            let node = config.actors.get_mut(actor).unwrap();
            node.switch_queue.push_back((sname.clone(), payload));
            let comp = match &mut node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => unreachable!(),
            };
            *comp = fill_hole_with_unit(comp);
            detail = format!("queued request for {sname}");
        }
        Redex::Activate {
            actor,
            name: sname,
            ..
        } => {
            let node = config.actors.get_mut(actor).ok_or_else(|| stale("actor"))?;
            let ThreadState::Idle(idle_state) = &node.thread else {
                return Err(stale("not idle"));
            };
            let idle_state = idle_state.clone();
            let Some((head_name, payload)) = node.switch_queue.front().cloned() else {
                return Err(stale("empty switch queue"));
            };
            if &head_name != sname {
                return Err(stale("switch head"));
            }
            let fifo = node
                .send_suspended
                .get_mut(sname)
                .ok_or_else(|| stale("no suspension"))?;
            let entry = fifo.pop_front().ok_or_else(|| stale("empty fifo"))?;
            if fifo.is_empty() {
                node.send_suspended.remove(sname);
            }
            node.switch_queue.pop_front();
            let sig_ty = config
                .sig
                .get(sname)
                .map(|(s, _)| s.clone())
                .ok_or_else(|| stale("signature"))?;
            let comp = Computation::app(entry.func, Value::pair(payload, idle_state));
            let node = config.actors.get_mut(actor).unwrap();
            node.thread = ThreadState::InSession {
                session: entry.session,
                role: entry.role,
                comp,
                ty: sig_ty,
            };
            detail = format!("woke {sname}");
        }
        Redex::OrphanSwitch {
            actor,
            name: sname,
        } => {
            let node = config.actors.get_mut(actor).ok_or_else(|| stale("actor"))?;
            match node.switch_queue.front() {
                Some((head, _)) if head == sname => {
                    node.switch_queue.pop_front();
                }
                _ => return Err(stale("switch head")),
            }
            detail = format!("dropped request for cancelled {sname}");
        }
        Redex::Raise { actor } | Redex::RaiseS { actor, .. } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let comp = match &node.thread {
                ThreadState::NoSession(c) | ThreadState::InSession { comp: c, .. } => c,
                _ => return Err(stale("thread")),
            };
            if !matches!(at_hole(comp).kind, CompKind::Raise) {
                return Err(stale("hole is not a raise"));
            }
            let node = config.actors.remove(actor).unwrap();
            config.zaps.actors.insert(*actor);
            if let ThreadState::InSession { session, role, .. } = &node.thread {
                config.zaps.endpoints.insert((*session, role.clone()));
            }
            // The sugar for zapping the whole handler and initialisation
            // states: a crashed actor abandons all its sessions and
            // registrations.
            for ((s, r), _) in node.handlers {
                config.zaps.endpoints.insert((s, r));
            }
            for fifo in node.send_suspended.values() {
                for entry in fifo {
                    config.zaps.endpoints.insert((entry.session, entry.role.clone()));
                }
            }
            for (token, cb) in node.init_callbacks {
                let ty = callback_pre(config, &cb);
                config.zaps.tokens.insert(token, ty);
            }
            detail = "crashed".to_string();
        }
        Redex::Leave { actor, session, role } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            let ThreadState::InSession { comp, .. } = &node.thread else {
                return Err(stale("not in session"));
            };
            let hole = at_hole(comp);
            let CompKind::Leave(state) = &hole.kind else {
                return Err(stale("hole is not a leave"));
            };
            let state = state.clone();
            config.zaps.endpoints.insert((*session, role.clone()));
            let node = config.actors.get_mut(actor).unwrap();
            node.thread = ThreadState::Idle(state);
            detail = format!("left {session}");
        }
        Redex::CancelMsg {
            session,
            from,
            to,
            label: msg_label,
        } => {
            if !config.zaps.endpoints.contains(&(*session, to.clone())) {
                return Err(stale("receiver not cancelled"));
            }
            let state = config
                .sessions
                .get_mut(session)
                .ok_or_else(|| stale("session"))?;
            let msg = state.pop(from, to).ok_or_else(|| stale("message"))?;
            if msg.label != *msg_label {
                return Err(stale("label"));
            }
            event_actor = String::new();
            detail = format!("dropped {msg_label} from {from} to cancelled {to} in {session}");
        }
        Redex::CancelH {
            actor,
            session,
            role,
            sender,
        } => {
            let node = config.actors.get(actor).ok_or_else(|| stale("actor"))?;
            if !node.thread.is_idle() {
                return Err(stale("not idle"));
            }
            if !config.zaps.endpoints.contains(&(*session, sender.clone())) {
                return Err(stale("sender not cancelled"));
            }
            let pending = config
                .sessions
                .get(session)
                .map_or(0, |st| st.messages_between(sender, role));
            if pending != 0 {
                return Err(stale("messages pending"));
            }
            let node = config.actors.get_mut(actor).unwrap();
            let stored = node
                .handlers
                .remove(&(*session, role.clone()))
                .ok_or_else(|| stale("handler"))?;
            let on_fail = stored.on_fail.ok_or_else(|| stale("no failure callback"))?;
            let ThreadState::Idle(state) = &node.thread else {
                unreachable!()
            };
            let comp = Computation::app(on_fail, state.clone());
            node.thread = ThreadState::NoSession(comp);
            config.zaps.endpoints.insert((*session, role.clone()));
            detail = format!("failure callback for {session} ({sender} cancelled)");
        }
        Redex::InvokeM { actor, watched } => {
            let node = config.actors.get_mut(actor).ok_or_else(|| stale("actor"))?;
            if !node.thread.is_idle() {
                return Err(stale("not idle"));
            }
            let pos = node
                .monitors
                .iter()
                .position(|(w, _)| w == watched)
                .ok_or_else(|| stale("monitor entry"))?;
            if !config.zaps.actors.contains(watched) {
                return Err(stale("watched actor alive"));
            }
            let (_, callback) = node.monitors.remove(pos);
            let ThreadState::Idle(state) = &node.thread else {
                unreachable!()
            };
            let comp = Computation::app(callback, state.clone());
            node.thread = ThreadState::NoSession(comp);
            detail = format!("monitor fired for {}", config.actor_display(*watched));
        }
        Redex::CancelAp { ap, role, token } => {
            if !config.zaps.tokens.contains_key(token) {
                return Err(stale("token not cancelled"));
            }
            let ap_state = config.aps.get_mut(ap).ok_or_else(|| stale("ap"))?;
            let set = ap_state
                .pending
                .get_mut(role)
                .ok_or_else(|| stale("role"))?;
            let entry = set
                .iter()
                .find(|(t, _)| t == token)
                .copied()
                .ok_or_else(|| stale("pending token"))?;
            set.remove(&entry);
            config.zaps.tokens.remove(token);
            event_actor = String::new();
            detail = format!("removed cancelled {token} for {role} at {ap}");
        }
    }

    let collected = config.normalize();
    if !collected.is_empty() {
        let names: Vec<String> = collected.iter().map(|s| s.to_string()).collect();
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!("gc={}", names.join(",")));
    }
    Ok(TraceEvent {
        idx,
        rule: redex.rule_name(),
        session: label,
        actor: event_actor,
        detail,
        redex: redex.clone(),
    })
}

/// The default failure continuation `fun st -> raise`: propagate the crash.
fn default_fail_callback(state_ty: &PayloadType) -> Value {
    use crate::syntax::terms::FunSig;
    Value::new(ValueKind::Lam {
        param: "st".to_string(),
        sig: FunSig {
            arg: state_ty.clone(),
            result: state_ty.clone(),
            pre: SessionType::End,
            post: SessionType::End,
            state: state_ty.clone(),
        },
        body: Box::new(Computation::new(CompKind::Raise)),
    })
}

/// The session precondition of a callback value (its ascribed `pre`),
/// recorded when a registration token is cancelled.
fn callback_pre(config: &Configuration, cb: &Value) -> SessionType {
    let resolved = resolve_value(config, cb);
    match &resolved.kind {
        ValueKind::Lam { sig, .. } | ValueKind::Rec { sig, .. } => sig.pre.clone(),
        _ => SessionType::End,
    }
}
