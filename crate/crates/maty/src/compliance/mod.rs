//! The labelled transition system on runtime type environments and the
//! bounded compliance checker (safety plus deadlock-freedom).
//!
//! Compliance of asynchronous protocols is undecidable in general, so the
//! checker is a bounded model checker: exploration is exhaustive up to a
//! per-pair queue bound, and exceeding the bound yields an explicit
//! `Unknown` verdict rather than a guess.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use crate::syntax::types::{
    payload_equal, unfold, Label, PayloadType, Protocol, Role, SessionType,
};

/// Name of the single session instantiated for whole-protocol checks, and
/// of sessions inside extracted runtime environments.
pub type SessionId = u32;

/// An endpoint entry: a live session type or a cancellation marker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EndpointType {
    Ty(SessionType),
    Cancelled,
}

/// Per-pair FIFO queue types. The per-pair representation bakes in the
/// queue-type structural congruence, which only permits commuting messages
/// between distinct pairs.
pub type PairQueues = Vec<((Role, Role), VecDeque<(Label, PayloadType)>)>;

/// A runtime type environment: linear endpoint entries, per-session queue
/// types, polarised token entries, and name sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct RuntimeEnv {
    /// (session, role) -> endpoint type; sorted by key.
    pub endpoints: Vec<((SessionId, Role), EndpointType)>,
    /// session -> per-pair queues; sorted by session then pair.
    pub queues: Vec<(SessionId, PairQueues)>,
    /// (token, polarity:+ is true) -> session type.
    pub tokens: Vec<((u32, bool), SessionType)>,
    pub actors: Vec<u32>,
    pub aps: Vec<u32>,
}

impl RuntimeEnv {
    pub fn for_protocol(p: &Protocol) -> RuntimeEnv {
        let s: SessionId = 0;
        let mut env = RuntimeEnv::default();
        for (role, ty) in p.iter() {
            env.endpoints
                .push(((s, role.clone()), EndpointType::Ty(ty.clone())));
        }
        env.queues.push((s, Vec::new()));
        env.normalize();
        env
    }

    pub fn endpoint(&self, s: SessionId, r: &Role) -> Option<&EndpointType> {
        self.endpoints
            .iter()
            .find(|((si, ri), _)| *si == s && ri == r)
            .map(|(_, e)| e)
    }

    fn endpoint_mut(&mut self, s: SessionId, r: &Role) -> Option<&mut EndpointType> {
        self.endpoints
            .iter_mut()
            .find(|((si, ri), _)| *si == s && ri == r)
            .map(|(_, e)| e)
    }

    pub fn queue(&self, s: SessionId, from: &Role, to: &Role) -> Option<&VecDeque<(Label, PayloadType)>> {
        self.queues
            .iter()
            .find(|(si, _)| *si == s)
            .and_then(|(_, pairs)| {
                pairs
                    .iter()
                    .find(|((f, t), _)| f == from && t == to)
                    .map(|(_, q)| q)
            })
    }

    fn queue_mut(&mut self, s: SessionId, from: &Role, to: &Role) -> &mut VecDeque<(Label, PayloadType)> {
        let pairs = match self.queues.iter_mut().position(|(si, _)| *si == s) {
            Some(i) => &mut self.queues[i].1,
            None => {
                self.queues.push((s, Vec::new()));
                let i = self.queues.len() - 1;
                &mut self.queues[i].1
            }
        };
        if let Some(i) = pairs
            .iter()
            .position(|((f, t), _)| f == from && t == to)
        {
            &mut pairs[i].1
        } else {
            pairs.push(((from.clone(), to.clone()), VecDeque::new()));
            let i = pairs.len() - 1;
            &mut pairs[i].1
        }
    }

    pub fn sessions(&self) -> Vec<SessionId> {
        let mut out: Vec<SessionId> = self.queues.iter().map(|(s, _)| *s).collect();
        for ((s, _), _) in &self.endpoints {
            if !out.contains(s) {
                out.push(*s);
            }
        }
        out.sort_unstable();
        out
    }

    /// Restriction of the environment to one session (its endpoints and
    /// queues), as used by per-session compliance checks.
    pub fn session_env(&self, s: SessionId) -> RuntimeEnv {
        let mut env = RuntimeEnv::default();
        for (key, ep) in &self.endpoints {
            if key.0 == s {
                env.endpoints.push(((0, key.1.clone()), ep.clone()));
            }
        }
        let pairs = self
            .queues
            .iter()
            .find(|(si, _)| *si == s)
            .map(|(_, p)| p.clone())
            .unwrap_or_default();
        env.queues.push((0, pairs));
        env.normalize();
        env
    }

    /// Canonical form: entries sorted, empty pair-queues dropped, and
    /// `end`-typed endpoints discarded (the closure of Lbl-End, which is
    /// always applicable).
    pub fn normalize(&mut self) {
        self.endpoints
            .retain(|(_, e)| !matches!(e, EndpointType::Ty(t) if t.is_end()));
        self.endpoints.sort();
        for (_, pairs) in self.queues.iter_mut() {
            pairs.retain(|(_, q)| !q.is_empty());
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
        }
        self.queues.sort_by(|a, b| a.0.cmp(&b.0));
        self.tokens.sort();
        self.actors.sort_unstable();
        self.aps.sort_unstable();
    }

    pub fn total_messages(&self) -> usize {
        self.queues
            .iter()
            .map(|(_, pairs)| pairs.iter().map(|(_, q)| q.len()).sum::<usize>())
            .sum()
    }

    fn is_drained(&self) -> bool {
        self.endpoints.is_empty() && self.total_messages() == 0
    }

    fn all_cancelled(&self) -> bool {
        !self.endpoints.is_empty()
            && self
                .endpoints
                .iter()
                .all(|(_, e)| matches!(e, EndpointType::Cancelled))
            && self.total_messages() == 0
    }
}

/// Synchronisation labels of the environment LTS.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyncLabel {
    Send {
        session: SessionId,
        from: Role,
        to: Role,
        label: Label,
    },
    Recv {
        session: SessionId,
        from: Role,
        to: Role,
        label: Label,
    },
    EndEp {
        session: SessionId,
        role: Role,
    },
    /// Drop the head message to a cancelled receiver.
    ZapMsg {
        session: SessionId,
        from: Role,
        to: Role,
        label: Label,
    },
    /// Cancel a receiver whose awaited sender is cancelled and whose
    /// incoming queue is empty.
    ZapRecv {
        session: SessionId,
        receiver: Role,
        sender: Role,
    },
    /// Spontaneous cancellation of an endpoint.
    Zap {
        session: SessionId,
        role: Role,
    },
}

impl fmt::Display for SyncLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncLabel::Send {
                session,
                from,
                to,
                label,
            } => write!(f, "s{session}!{from}->{to}:{label}"),
            SyncLabel::Recv {
                session,
                from,
                to,
                label,
            } => write!(f, "s{session}?{from}->{to}:{label}"),
            SyncLabel::EndEp { session, role } => write!(f, "s{session} end {role}"),
            SyncLabel::ZapMsg {
                session,
                from,
                to,
                label,
            } => write!(f, "s{session} zapmsg {from}->{to}:{label}"),
            SyncLabel::ZapRecv {
                session,
                receiver,
                sender,
            } => write!(f, "s{session} zaprecv {receiver} (sender {sender})"),
            SyncLabel::Zap { session, role } => write!(f, "s{session} zap {role}"),
        }
    }
}

/// Stepping options: whether cancellation-aware transitions are included,
/// and whether endpoints may cancel spontaneously.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepMode {
    pub zap: bool,
    pub spontaneous_zap: bool,
}

/// All one-step successors of an environment. Recursion is unfolded at
/// match time; `end` endpoints have already been discarded by
/// normalization, so no explicit Lbl-End successors arise here.
pub fn env_step(env: &RuntimeEnv, mode: StepMode) -> Vec<(SyncLabel, RuntimeEnv)> {
    let mut out = Vec::new();
    for ((s, role), ep) in env.endpoints.clone() {
        match ep {
            EndpointType::Ty(ty) => {
                match unfold(&ty) {
                    SessionType::Select { to, branches } => {
                        for (label, arm) in branches.iter() {
                            let mut next = env.clone();
                            *next.endpoint_mut(s, &role).unwrap() =
                                EndpointType::Ty(arm.cont.clone());
                            next.queue_mut(s, &role, &to)
                                .push_back((label.clone(), arm.payload.clone()));
                            next.normalize();
                            out.push((
                                SyncLabel::Send {
                                    session: s,
                                    from: role.clone(),
                                    to: to.clone(),
                                    label: label.clone(),
                                },
                                next,
                            ));
                        }
                    }
                    SessionType::Branch { from, branches } => {
                        if let Some(q) = env.queue(s, &from, &role) {
                            if let Some((label, payload)) = q.front() {
                                if let Some(arm) = branches.get(label) {
                                    if payload_equal(&arm.payload, payload) {
                                        let mut next = env.clone();
                                        *next.endpoint_mut(s, &role).unwrap() =
                                            EndpointType::Ty(arm.cont.clone());
                                        next.queue_mut(s, &from, &role).pop_front();
                                        next.normalize();
                                        out.push((
                                            SyncLabel::Recv {
                                                session: s,
                                                from: from.clone(),
                                                to: role.clone(),
                                                label: label.clone(),
                                            },
                                            next,
                                        ));
                                    }
                                }
                                // A head message whose label or payload does
                                // not match yields no successor; the safety
                                // check reports it separately.
                            }
                        }
                        if mode.zap {
                            // Lbl-ZapRecv: the awaited sender is cancelled
                            // and no message from it is pending.
                            let sender_cancelled = matches!(
                                env.endpoint(s, &from),
                                Some(EndpointType::Cancelled)
                            );
                            let no_pending =
                                env.queue(s, &from, &role).map_or(true, |q| q.is_empty());
                            if sender_cancelled && no_pending {
                                let mut next = env.clone();
                                *next.endpoint_mut(s, &role).unwrap() = EndpointType::Cancelled;
                                next.normalize();
                                out.push((
                                    SyncLabel::ZapRecv {
                                        session: s,
                                        receiver: role.clone(),
                                        sender: from.clone(),
                                    },
                                    next,
                                ));
                            }
                        }
                    }
                    SessionType::End => {
                        // Normalization drops end endpoints eagerly, but an
                        // un-normalized input can still carry them.
                        let mut next = env.clone();
                        next.endpoints.retain(|(k, _)| !(k.0 == s && k.1 == role));
                        next.normalize();
                        out.push((
                            SyncLabel::EndEp {
                                session: s,
                                role: role.clone(),
                            },
                            next,
                        ));
                    }
                    SessionType::Rec(_, _) | SessionType::Var(_) => {}
                }
                if mode.zap && mode.spontaneous_zap {
                    let mut next = env.clone();
                    *next.endpoint_mut(s, &role).unwrap() = EndpointType::Cancelled;
                    next.normalize();
                    out.push((
                        SyncLabel::Zap {
                            session: s,
                            role: role.clone(),
                        },
                        next,
                    ));
                }
            }
            EndpointType::Cancelled => {
                if mode.zap {
                    // Lbl-ZapMsg: drop head messages addressed to the
                    // cancelled endpoint.
                    if let Some((_, pairs)) = env.queues.iter().find(|(si, _)| *si == s) {
                        for ((from, to), q) in pairs {
                            if to == &role {
                                if let Some((label, _)) = q.front() {
                                    let mut next = env.clone();
                                    next.queue_mut(s, from, to).pop_front();
                                    next.normalize();
                                    out.push((
                                        SyncLabel::ZapMsg {
                                            session: s,
                                            from: from.clone(),
                                            to: to.clone(),
                                            label: label.clone(),
                                        },
                                        next,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    UnsafeComm,
    Deadlock,
    OrphanQueue,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::UnsafeComm => write!(f, "unsafe communication"),
            ViolationKind::Deadlock => write!(f, "deadlock"),
            ViolationKind::OrphanQueue => write!(f, "orphan queue"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComplianceVerdict {
    Compliant,
    Violation {
        witness: Vec<SyncLabel>,
        kind: ViolationKind,
    },
    Unknown,
}

impl ComplianceVerdict {
    pub fn is_compliant(&self) -> bool {
        matches!(self, ComplianceVerdict::Compliant)
    }
}

impl fmt::Display for ComplianceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComplianceVerdict::Compliant => write!(f, "Compliant"),
            ComplianceVerdict::Violation { kind, witness } => {
                write!(f, "Violation({kind}) after {} steps", witness.len())
            }
            ComplianceVerdict::Unknown => write!(f, "Unknown (queue bound exceeded)"),
        }
    }
}

/// Local safety of one state: every input endpoint facing a head message
/// must have the message's label in its branch set with an equal payload
/// type.
fn locally_safe(env: &RuntimeEnv) -> bool {
    for ((s, role), ep) in &env.endpoints {
        if let EndpointType::Ty(ty) = ep {
            if let SessionType::Branch { from, branches } = unfold(ty) {
                if let Some(q) = env.queue(*s, &from, role) {
                    if let Some((label, payload)) = q.front() {
                        match branches.get(label) {
                            Some(arm) if payload_equal(&arm.payload, payload) => {}
                            _ => return false,
                        }
                    }
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy)]
struct CheckWhat {
    safety: bool,
    deadlock: bool,
}

/// Shared BFS exploration with memoized canonical states. Queue bound is
/// the maximum explored per-pair queue length; a send that would exceed it
/// marks the verdict `Unknown` unless a definite violation is found first.
fn explore(env0: RuntimeEnv, bound: usize, mode: StepMode, what: CheckWhat) -> ComplianceVerdict {
    let mut init = env0;
    init.normalize();
    let mut visited: HashSet<RuntimeEnv> = HashSet::new();
    let mut parents: HashMap<RuntimeEnv, (RuntimeEnv, SyncLabel)> = HashMap::new();
    let mut work: VecDeque<RuntimeEnv> = VecDeque::new();
    visited.insert(init.clone());
    work.push_back(init.clone());
    let mut bound_hit = false;

    let witness = |parents: &HashMap<RuntimeEnv, (RuntimeEnv, SyncLabel)>, state: &RuntimeEnv| {
        let mut trace = Vec::new();
        let mut cur = state.clone();
        while let Some((prev, label)) = parents.get(&cur) {
            trace.push(label.clone());
            cur = prev.clone();
        }
        trace.reverse();
        trace
    };

    while let Some(env) = work.pop_front() {
        if what.safety && !locally_safe(&env) {
            return ComplianceVerdict::Violation {
                witness: witness(&parents, &env),
                kind: ViolationKind::UnsafeComm,
            };
        }
        let succs = env_step(&env, mode);
        if succs.is_empty() {
            if what.deadlock {
                let ok = env.is_drained() || (mode.zap && env.all_cancelled());
                if !ok {
                    let kind = if env.endpoints.is_empty() {
                        ViolationKind::OrphanQueue
                    } else {
                        ViolationKind::Deadlock
                    };
                    return ComplianceVerdict::Violation {
                        witness: witness(&parents, &env),
                        kind,
                    };
                }
            }
            continue;
        }
        for (label, next) in succs {
            if let SyncLabel::Send {
                session, from, to, ..
            } = &label
            {
                if next
                    .queue(*session, from, to)
                    .map_or(0, |q| q.len())
                    > bound
                {
                    bound_hit = true;
                    continue;
                }
            }
            if visited.insert(next.clone()) {
                parents.insert(next.clone(), (env.clone(), label));
                work.push_back(next);
            }
        }
    }
    if bound_hit {
        ComplianceVerdict::Unknown
    } else {
        ComplianceVerdict::Compliant
    }
}

/// Safety only: no reachable receive faces a head message outside its
/// branch set or with a mismatched payload type.
pub fn safe(p: &Protocol, bound: usize) -> ComplianceVerdict {
    explore(
        RuntimeEnv::for_protocol(p),
        bound,
        StepMode::default(),
        CheckWhat {
            safety: true,
            deadlock: false,
        },
    )
}

/// Deadlock-freedom only: the only terminal environment is the fully
/// drained one.
pub fn deadlock_free(p: &Protocol, bound: usize) -> ComplianceVerdict {
    explore(
        RuntimeEnv::for_protocol(p),
        bound,
        StepMode::default(),
        CheckWhat {
            safety: false,
            deadlock: true,
        },
    )
}

/// Compliance: safety and deadlock-freedom over a single shared
/// exploration.
pub fn compliant(p: &Protocol, bound: usize) -> ComplianceVerdict {
    explore(
        RuntimeEnv::for_protocol(p),
        bound,
        StepMode::default(),
        CheckWhat {
            safety: true,
            deadlock: true,
        },
    )
}

/// Cancellation-aware compliance: exploration over the extended LTS where
/// any endpoint may spontaneously cancel; terminals may additionally be
/// all-cancelled environments with empty queues.
pub fn compliant_zap(p: &Protocol, bound: usize) -> ComplianceVerdict {
    explore(
        RuntimeEnv::for_protocol(p),
        bound,
        StepMode {
            zap: true,
            spontaneous_zap: true,
        },
        CheckWhat {
            safety: true,
            deadlock: true,
        },
    )
}

/// Compliance of an arbitrary runtime environment (used by configuration
/// typing, where mid-session environments with cancellations must be
/// re-validated).
pub fn compliant_env(env: &RuntimeEnv, bound: usize, zap: bool) -> ComplianceVerdict {
    explore(
        env.clone(),
        bound,
        StepMode {
            zap,
            spontaneous_zap: zap,
        },
        CheckWhat {
            safety: true,
            deadlock: true,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: &str) -> Role {
        Role::new(n)
    }
    fn l(n: &str) -> Label {
        Label::new(n)
    }

    fn two_role(p_ty: SessionType, q_ty: SessionType) -> Protocol {
        Protocol::new(vec![(r("p"), p_ty), (r("q"), q_ty)])
    }

    #[test]
    fn payload_mismatch_is_unsafe() {
        let p = two_role(
            SessionType::branch(r("q"), vec![(l("l"), PayloadType::INT, SessionType::End)]),
            SessionType::select(r("p"), vec![(l("l"), PayloadType::BOOL, SessionType::End)]),
        );
        match safe(&p, 2) {
            ComplianceVerdict::Violation { kind, witness } => {
                assert_eq!(kind, ViolationKind::UnsafeComm);
                assert_eq!(witness.len(), 1);
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn label_mismatch_is_unsafe() {
        let p = two_role(
            SessionType::select(r("q"), vec![(l("a"), PayloadType::INT, SessionType::End)]),
            SessionType::branch(r("p"), vec![(l("b"), PayloadType::INT, SessionType::End)]),
        );
        match compliant(&p, 2) {
            ComplianceVerdict::Violation { kind, .. } => assert_eq!(kind, ViolationKind::UnsafeComm),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn ended_protocol_is_compliant() {
        let p = two_role(SessionType::End, SessionType::End);
        assert!(safe(&p, 1).is_compliant());
        assert!(compliant(&p, 1).is_compliant());
    }

    #[test]
    fn input_input_deadlocks() {
        let p = two_role(
            SessionType::branch(r("q"), vec![(l("l"), PayloadType::UNIT, SessionType::End)]),
            SessionType::branch(r("p"), vec![(l("l"), PayloadType::UNIT, SessionType::End)]),
        );
        match deadlock_free(&p, 2) {
            ComplianceVerdict::Violation { kind, witness } => {
                assert_eq!(kind, ViolationKind::Deadlock);
                assert!(witness.is_empty());
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn trivially_deadlock_free_pairs() {
        let one = two_role(
            SessionType::branch(r("q"), vec![(l("l1"), PayloadType::UNIT, SessionType::End)]),
            SessionType::select(r("p"), vec![(l("l1"), PayloadType::UNIT, SessionType::End)]),
        );
        let two = Protocol::new(vec![
            (
                r("r"),
                SessionType::branch(r("s"), vec![(l("l2"), PayloadType::UNIT, SessionType::End)]),
            ),
            (
                r("s"),
                SessionType::select(r("r"), vec![(l("l2"), PayloadType::UNIT, SessionType::End)]),
            ),
        ]);
        assert!(deadlock_free(&one, 2).is_compliant());
        assert!(deadlock_free(&two, 2).is_compliant());
    }

    #[test]
    fn ping_pong_state_space_is_small() {
        let p = two_role(
            SessionType::select(
                r("q"),
                vec![(
                    l("Ping"),
                    PayloadType::UNIT,
                    SessionType::branch(
                        r("q"),
                        vec![(l("Pong"), PayloadType::UNIT, SessionType::End)],
                    ),
                )],
            ),
            SessionType::branch(
                r("p"),
                vec![(
                    l("Ping"),
                    PayloadType::UNIT,
                    SessionType::select(
                        r("p"),
                        vec![(l("Pong"), PayloadType::UNIT, SessionType::End)],
                    ),
                )],
            ),
        );
        assert!(compliant(&p, 2).is_compliant());
        // Count canonical states by re-running the exploration by hand.
        let mut visited = HashSet::new();
        let mut work = vec![RuntimeEnv::for_protocol(&p)];
        while let Some(env) = work.pop() {
            if !visited.insert(env.clone()) {
                continue;
            }
            for (_, next) in env_step(&env, StepMode::default()) {
                work.push(next);
            }
        }
        assert!(visited.len() <= 8, "state space was {}", visited.len());
    }

    #[test]
    fn recursive_protocol_closes() {
        // A request/ack loop: the reply keeps the queues bounded, so the
        // exploration closes and the protocol is compliant.
        let p_ty = SessionType::rec(
            "X",
            SessionType::select(
                r("q"),
                vec![
                    (
                        l("l"),
                        PayloadType::INT,
                        SessionType::branch(
                            r("q"),
                            vec![(l("ack"), PayloadType::UNIT, SessionType::var("X"))],
                        ),
                    ),
                    (l("stop"), PayloadType::UNIT, SessionType::End),
                ],
            ),
        );
        let q_ty = SessionType::rec(
            "X",
            SessionType::branch(
                r("p"),
                vec![
                    (
                        l("l"),
                        PayloadType::INT,
                        SessionType::select(
                            r("p"),
                            vec![(l("ack"), PayloadType::UNIT, SessionType::var("X"))],
                        ),
                    ),
                    (l("stop"), PayloadType::UNIT, SessionType::End),
                ],
            ),
        );
        assert!(compliant(&two_role(p_ty, q_ty), 3).is_compliant());
    }

    #[test]
    fn unbounded_sender_hits_unknown() {
        // p sends forever and q never receives from p's pace: a one-way
        // stream overruns any bound.
        let p_ty = SessionType::rec(
            "X",
            SessionType::select(r("q"), vec![(l("l"), PayloadType::UNIT, SessionType::var("X"))]),
        );
        let q_ty = SessionType::rec(
            "X",
            SessionType::branch(r("p"), vec![(l("l"), PayloadType::UNIT, SessionType::var("X"))]),
        );
        // Still compliant in truth, but the receiver can lag behind the
        // sender by more than the bound, so the checker reports Unknown.
        assert_eq!(compliant(&two_role(p_ty, q_ty), 2), ComplianceVerdict::Unknown);
    }

    #[test]
    fn zap_mode_accepts_all_cancelled_terminal() {
        let mut env = RuntimeEnv::default();
        env.endpoints.push(((0, r("p")), EndpointType::Cancelled));
        env.endpoints.push(((0, r("q")), EndpointType::Cancelled));
        env.queues.push((0, Vec::new()));
        assert!(compliant_env(&env, 2, true).is_compliant());
    }

    #[test]
    fn zap_mode_preserves_unsafety() {
        let p = two_role(
            SessionType::branch(r("q"), vec![(l("l"), PayloadType::INT, SessionType::End)]),
            SessionType::select(r("p"), vec![(l("l"), PayloadType::BOOL, SessionType::End)]),
        );
        match compliant_zap(&p, 2) {
            ComplianceVerdict::Violation { kind, .. } => {
                assert_eq!(kind, ViolationKind::UnsafeComm)
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn zap_mode_ping_pong_drains() {
        let p = two_role(
            SessionType::select(
                r("q"),
                vec![(
                    l("Ping"),
                    PayloadType::UNIT,
                    SessionType::branch(
                        r("q"),
                        vec![(l("Pong"), PayloadType::UNIT, SessionType::End)],
                    ),
                )],
            ),
            SessionType::branch(
                r("p"),
                vec![(
                    l("Ping"),
                    PayloadType::UNIT,
                    SessionType::select(
                        r("p"),
                        vec![(l("Pong"), PayloadType::UNIT, SessionType::End)],
                    ),
                )],
            ),
        );
        assert!(compliant_zap(&p, 2).is_compliant());
    }
}
