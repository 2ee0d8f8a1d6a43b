//! Rule instances. A redex names one applicable reduction rule together
//! with its participants; the scheduler picks one enabled redex per step.
//!
//! The `Ord` derive gives redexes a stable priority used to break ties in
//! the fair scheduling policy; the cancellation rules are ordered so a
//! failure cascade drains messages before failure callbacks and invokes
//! monitors last.

use crate::syntax::types::{Label, Role, StaticName};

use super::config::{ActorName, ApName, SessionName, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Redex {
    /// One step of term reduction inside an active thread.
    Lift { actor: ActorName },
    Send {
        actor: ActorName,
        session: SessionName,
        to: Role,
        label: Label,
    },
    Suspend { actor: ActorName },
    Reset { actor: ActorName },
    Spawn { actor: ActorName },
    NewAp { actor: ActorName },
    Register { actor: ActorName, ap: ApName, role: Role },
    Init {
        ap: ApName,
        choices: Vec<(Role, TokenId, ActorName)>,
    },
    React {
        actor: ActorName,
        session: SessionName,
        role: Role,
        from: Role,
        label: Label,
    },
    Monitor { actor: ActorName },
    SuspendSend {
        actor: ActorName,
        name: StaticName,
        fresh: bool,
    },
    Become { actor: ActorName, name: StaticName },
    Activate {
        actor: ActorName,
        name: StaticName,
        session: SessionName,
        role: Role,
    },
    /// Drop a switch request whose suspensions were destroyed by
    /// cancellation.
    OrphanSwitch { actor: ActorName, name: StaticName },
    Raise { actor: ActorName },
    RaiseS {
        actor: ActorName,
        session: SessionName,
        role: Role,
    },
    Leave {
        actor: ActorName,
        session: SessionName,
        role: Role,
    },
    CancelMsg {
        session: SessionName,
        from: Role,
        to: Role,
        label: Label,
    },
    CancelH {
        actor: ActorName,
        session: SessionName,
        role: Role,
        sender: Role,
    },
    InvokeM { actor: ActorName, watched: ActorName },
    CancelAp { ap: ApName, role: Role, token: TokenId },
}

impl Redex {
    pub fn rule_name(&self) -> &'static str {
        match self {
            Redex::Lift { .. } => "ELift",
            Redex::Send { .. } => "ESend",
            Redex::Suspend { .. } => "ESuspend",
            Redex::Reset { .. } => "EReset",
            Redex::Spawn { .. } => "ESpawn",
            Redex::NewAp { .. } => "ENewAP",
            Redex::Register { .. } => "ERegister",
            Redex::Init { .. } => "EInit",
            Redex::React { .. } => "EReact",
            Redex::Monitor { .. } => "EMonitor",
            Redex::SuspendSend { fresh: true, .. } => "ESuspendSend1",
            Redex::SuspendSend { fresh: false, .. } => "ESuspendSend2",
            Redex::Become { .. } => "EBecome",
            Redex::Activate { .. } => "EActivate",
            Redex::OrphanSwitch { .. } => "EOrphanSwitch",
            Redex::Raise { .. } => "ERaise",
            Redex::RaiseS { .. } => "ERaiseS",
            Redex::Leave { .. } => "ELeave",
            Redex::CancelMsg { .. } => "ECancelMsg",
            Redex::CancelH { .. } => "ECancelH",
            Redex::InvokeM { .. } => "EInvokeM",
            Redex::CancelAp { .. } => "ECancelAP",
        }
    }

    /// The actor whose thread this redex reduces, if it is a thread
    /// reduction.
    pub fn thread_actor(&self) -> Option<ActorName> {
        match self {
            Redex::Lift { actor }
            | Redex::Send { actor, .. }
            | Redex::Suspend { actor }
            | Redex::Reset { actor }
            | Redex::Spawn { actor }
            | Redex::NewAp { actor }
            | Redex::Register { actor, .. }
            | Redex::Monitor { actor }
            | Redex::SuspendSend { actor, .. }
            | Redex::Become { actor, .. }
            | Redex::Raise { actor }
            | Redex::RaiseS { actor, .. }
            | Redex::Leave { actor, .. } => Some(*actor),
            _ => None,
        }
    }
}
