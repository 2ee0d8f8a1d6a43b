//! Deterministic, replayable traces. One line per event:
//! `#<idx> <RULE> session=<s|tau> actor=<a> detail=<...>`.

use std::fmt;

use super::config::SessionName;
use super::redex::Redex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub idx: u64,
    pub rule: &'static str,
    /// The session label for communication rules; `None` renders as tau.
    pub session: Option<SessionName>,
    pub actor: String,
    pub detail: String,
    /// The fired rule instance, kept for replay.
    pub redex: Redex,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let session = match self.session {
            Some(s) => s.to_string(),
            None => "tau".to_string(),
        };
        let actor = if self.actor.is_empty() { "-" } else { &self.actor };
        write!(
            f,
            "#{} {} session={} actor={} detail={}",
            self.idx, self.rule, session, actor, self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&event.to_string());
            out.push('\n');
        }
        out
    }

    /// Index of the first event matching a rule name and a substring of the
    /// rendered line, for trace assertions.
    pub fn find(&self, rule: &str, needle: &str) -> Option<usize> {
        self.events
            .iter()
            .position(|e| e.rule == rule && e.to_string().contains(needle))
    }

    pub fn find_after(&self, start: usize, rule: &str, needle: &str) -> Option<usize> {
        self.events[start..]
            .iter()
            .position(|e| e.rule == rule && e.to_string().contains(needle))
            .map(|i| i + start)
    }
}
