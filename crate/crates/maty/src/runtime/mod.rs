//! The configuration-level operational semantics: a deterministic,
//! seedable interpreter over the actor soup, with replayable traces.

pub mod config;
pub mod redex;
pub mod sched;
pub mod step;
pub mod trace;

pub use config::{
    ActorName, ActorNode, ApName, ApState, Configuration, Msg, SendSuspension, SessionName,
    SessionState, StoredHandler, ThreadState, TokenId, Zaps,
};
pub use redex::Redex;
pub use sched::{
    canonical_idle_check, replay, run, run_observed, RunOptions, Scheduler, SchedulerPolicy,
    StopReason,
};
pub use step::{enabled_redexes, resolve_value, step, StepError, StepOptions};
pub use trace::{Trace, TraceEvent};

use crate::syntax::terms::Computation;
use crate::typecheck::Mode;

/// Place a program in its initial configuration: a single standalone actor
/// evaluating the main computation.
pub fn initial_config(main: Computation, mode: Mode) -> Configuration {
    Configuration::initial(main, mode)
}
