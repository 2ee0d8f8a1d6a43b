//! Abstract syntax and well-formedness for types, protocols, and programs,
//! with equi-recursive session-type machinery.

pub mod print;
pub mod terms;
pub mod types;
pub mod wf;

pub use terms::{
    BinOp, CompKind, Computation, Const, FunSig, HandlerClause, Span, Value, ValueKind,
};
pub use types::{
    payload_equal, protocol_equal, session_equal, subst_global, subst_session, unfold,
    unfold_global, BaseType, BranchArm, Branches, GlobalType, Label, PayloadType, Protocol, Role,
    SessionType, SigEnv, StaticName,
};
pub use wf::{well_formed_global, well_formed_protocol, well_formed_session, WfError, WfErrorKind};
