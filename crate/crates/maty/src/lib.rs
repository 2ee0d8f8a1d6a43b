//! An executable toolkit for a multiparty-session-typed actor calculus:
//! parse protocols and programs, project global types, check protocol
//! compliance, typecheck programs with a flow-sensitive effect system, and
//! run them on a deterministic actor-runtime interpreter whose metatheory
//! (preservation, progress, global progress) is checked dynamically.

pub mod compliance;
pub mod corpus;
pub mod loader;
pub mod metatheory;
pub mod runtime;
pub mod parser;
pub mod projection;
pub mod syntax;
pub mod typecheck;
