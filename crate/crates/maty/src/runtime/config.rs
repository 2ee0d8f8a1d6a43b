//! Runtime configurations: the flat soup of actors, access points, session
//! queues, and zapper markers, with a global fresh-name counter.
//!
//! Name binders and scope extrusion from the operational semantics become
//! representation invariants here: all names are globally fresh, and the
//! garbage congruences (finished empty sessions, unreferenced actor zaps)
//! are applied eagerly by [`Configuration::normalize`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::syntax::terms::{comp_mentions_actor, value_mentions_actor, Computation, Value};
use crate::syntax::types::{Label, PayloadType, Protocol, Role, SessionType, SigEnv, StaticName};
use crate::typecheck::Mode;

macro_rules! name_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }
    };
}

name_type!(ActorName, "a");
name_type!(SessionName, "s");
name_type!(ApName, "ap");
name_type!(TokenId, "i");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThreadState {
    Idle(Value),
    InSession {
        session: SessionName,
        role: Role,
        comp: Computation,
        /// Current session precondition of the running computation,
        /// maintained by the stepper and re-validated by configuration
        /// typing.
        ty: SessionType,
    },
    NoSession(Computation),
}

impl ThreadState {
    pub fn is_idle(&self) -> bool {
        matches!(self, ThreadState::Idle(_))
    }
}

/// A stored message handler; the failure callback is present in
/// failure-handling mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredHandler {
    pub handler: Value,
    pub on_fail: Option<Value>,
}

/// A send-suspended session entry (switching extension).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendSuspension {
    pub session: SessionName,
    pub role: Role,
    pub func: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorNode {
    pub state_ty: PayloadType,
    pub thread: ThreadState,
    pub handlers: BTreeMap<(SessionName, Role), StoredHandler>,
    pub init_callbacks: BTreeMap<TokenId, Value>,
    pub monitors: Vec<(ActorName, Value)>,
    pub switch_queue: VecDeque<(StaticName, Value)>,
    pub send_suspended: BTreeMap<StaticName, VecDeque<SendSuspension>>,
    /// Static names whose suspensions were destroyed by cancellation;
    /// matching switch requests are dropped rather than blocking.
    pub orphaned_switches: BTreeSet<StaticName>,
}

impl ActorNode {
    pub fn new(state_ty: PayloadType, thread: ThreadState) -> Self {
        ActorNode {
            state_ty,
            thread,
            handlers: BTreeMap::new(),
            init_callbacks: BTreeMap::new(),
            monitors: Vec::new(),
            switch_queue: VecDeque::new(),
            send_suspended: BTreeMap::new(),
            orphaned_switches: BTreeSet::new(),
        }
    }

    pub fn references_session(&self, s: SessionName) -> bool {
        if let ThreadState::InSession { session, .. } = &self.thread {
            if *session == s {
                return true;
            }
        }
        self.handlers.keys().any(|(hs, _)| *hs == s)
            || self
                .send_suspended
                .values()
                .any(|fifo| fifo.iter().any(|e| e.session == s))
    }
}

/// A queued message: label, payload value, and the payload type recorded at
/// send time (from the sender's session type).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg {
    pub label: Label,
    pub value: Value,
    pub payload_ty: PayloadType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionState {
    /// Per ordered (from, to) pair FIFO; per-pair order is never reordered.
    pub queues: BTreeMap<(Role, Role), VecDeque<Msg>>,
}

impl SessionState {
    pub fn push(&mut self, from: &Role, to: &Role, msg: Msg) {
        self.queues
            .entry((from.clone(), to.clone()))
            .or_default()
            .push_back(msg);
    }

    pub fn front(&self, from: &Role, to: &Role) -> Option<&Msg> {
        self.queues
            .get(&(from.clone(), to.clone()))
            .and_then(|q| q.front())
    }

    pub fn pop(&mut self, from: &Role, to: &Role) -> Option<Msg> {
        self.queues
            .get_mut(&(from.clone(), to.clone()))
            .and_then(|q| q.pop_front())
    }

    pub fn is_empty(&self) -> bool {
        self.queues.values().all(|q| q.is_empty())
    }

    /// Messages from `from` to `to` (empty or not), mirroring the
    /// `messages(p, q)` side condition of the cancellation rules.
    pub fn messages_between(&self, from: &Role, to: &Role) -> usize {
        self.queues
            .get(&(from.clone(), to.clone()))
            .map_or(0, |q| q.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApState {
    pub protocol: Protocol,
    /// role -> registered (token, owning actor) pairs, ordered by token id.
    pub pending: BTreeMap<Role, BTreeSet<(TokenId, ActorName)>>,
}

/// Zapper markers for cancelled actors, endpoints, and tokens. A zapped
/// token remembers its session type (the registered callback's
/// precondition) for configuration typing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Zaps {
    pub actors: BTreeSet<ActorName>,
    pub endpoints: BTreeSet<(SessionName, Role)>,
    pub tokens: BTreeMap<TokenId, SessionType>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub actors: BTreeMap<ActorName, ActorNode>,
    pub aps: BTreeMap<ApName, ApState>,
    pub sessions: BTreeMap<SessionName, SessionState>,
    pub zaps: Zaps,
    /// Fresh-name supply shared by all name kinds.
    pub fresh: u32,
    pub mode: Mode,
    /// Top-level definitions, resolved lazily during reduction.
    pub defs: BTreeMap<String, Value>,
    /// Signature environment for static session names (switching mode).
    pub sig: SigEnv,
    /// Human-readable actor labels for traces and fault injection.
    pub labels: BTreeMap<ActorName, String>,
}

impl Configuration {
    /// The initial configuration: one standalone actor running the program.
    pub fn initial(main: Computation, mode: Mode) -> Configuration {
        let mut actors = BTreeMap::new();
        let name = ActorName(0);
        actors.insert(
            name,
            ActorNode::new(PayloadType::UNIT, ThreadState::NoSession(main)),
        );
        let mut labels = BTreeMap::new();
        labels.insert(name, "main".to_string());
        Configuration {
            actors,
            aps: BTreeMap::new(),
            sessions: BTreeMap::new(),
            zaps: Zaps::default(),
            fresh: 1,
            mode,
            defs: BTreeMap::new(),
            sig: SigEnv::default(),
            labels,
        }
    }

    pub fn fresh_name(&mut self) -> u32 {
        let n = self.fresh;
        self.fresh += 1;
        n
    }

    pub fn actor_display(&self, a: ActorName) -> String {
        self.labels.get(&a).cloned().unwrap_or_else(|| a.to_string())
    }

    pub fn actor_by_label(&self, label: &str) -> Option<ActorName> {
        self.labels
            .iter()
            .find(|(_, l)| l.as_str() == label)
            .map(|(a, _)| *a)
    }

    /// Assign a display label, appending primes for reused hints
    /// (`shop`, `shop'`, `shop''`, ...).
    pub fn assign_label(&mut self, a: ActorName, hint: &str) {
        let mut label = hint.to_string();
        while self.labels.values().any(|l| l == &label) {
            label.push('\'');
        }
        self.labels.insert(a, label);
    }

    /// Whether an actor name occurs in any monitor entry or live term.
    pub fn actor_referenced(&self, a: ActorName) -> bool {
        for node in self.actors.values() {
            if node.monitors.iter().any(|(watched, cb)| {
                *watched == a || value_mentions_actor(cb, a.0)
            }) {
                return true;
            }
            match &node.thread {
                ThreadState::Idle(v) => {
                    if value_mentions_actor(v, a.0) {
                        return true;
                    }
                }
                ThreadState::InSession { comp, .. } | ThreadState::NoSession(comp) => {
                    if comp_mentions_actor(comp, a.0) {
                        return true;
                    }
                }
            }
            if node
                .handlers
                .values()
                .any(|h| {
                    value_mentions_actor(&h.handler, a.0)
                        || h.on_fail
                            .as_ref()
                            .map_or(false, |f| value_mentions_actor(f, a.0))
                })
                || node
                    .init_callbacks
                    .values()
                    .any(|cb| value_mentions_actor(cb, a.0))
                || node
                    .switch_queue
                    .iter()
                    .any(|(_, v)| value_mentions_actor(v, a.0))
                || node
                    .send_suspended
                    .values()
                    .any(|fifo| fifo.iter().any(|e| value_mentions_actor(&e.func, a.0)))
            {
                return true;
            }
        }
        for session in self.sessions.values() {
            for q in session.queues.values() {
                if q.iter().any(|m| value_mentions_actor(&m.value, a.0)) {
                    return true;
                }
            }
        }
        false
    }

    /// Apply the garbage congruences eagerly: drop empty per-pair queues,
    /// finished or fully-cancelled empty sessions, and unreferenced actor
    /// zaps. Returns the names of collected sessions.
    pub fn normalize(&mut self) -> Vec<SessionName> {
        for session in self.sessions.values_mut() {
            session.queues.retain(|_, q| !q.is_empty());
        }
        let mut collected = Vec::new();
        let session_names: Vec<SessionName> = self.sessions.keys().copied().collect();
        for s in session_names {
            let queue_empty = self.sessions[&s].is_empty();
            let referenced = self.actors.values().any(|a| a.references_session(s));
            if queue_empty && !referenced {
                self.sessions.remove(&s);
                self.zaps.endpoints.retain(|(zs, _)| *zs != s);
                collected.push(s);
            }
        }
        let zapped: Vec<ActorName> = self.zaps.actors.iter().copied().collect();
        for a in zapped {
            if !self.actor_referenced(a) {
                self.zaps.actors.remove(&a);
            }
        }
        collected
    }
}
