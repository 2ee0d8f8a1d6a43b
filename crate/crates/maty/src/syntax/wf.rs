//! Well-formedness: closedness, guarded recursion, and branch sanity for
//! local and global types and protocols.

use std::collections::HashSet;

use thiserror::Error;

use super::types::{GlobalType, Protocol, Role, SessionType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WfErrorKind {
    #[error("unguarded recursion variable {0}")]
    UnguardedRecursion(String),
    #[error("free type variable {0}")]
    FreeTypeVariable(String),
    #[error("duplicate label {0}")]
    DuplicateLabel(String),
    #[error("empty branch set")]
    EmptyBranch,
    #[error("message from {0} to itself")]
    SelfMessage(String),
    #[error("protocol needs at least two roles")]
    TooFewRoles,
    #[error("role {0} is mentioned but has no protocol entry")]
    RoleAbsent(String),
}

/// A rejected type, with a path of descent steps to the offending subterm.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at {}", path_display(.path))]
pub struct WfError {
    pub path: Vec<String>,
    pub kind: WfErrorKind,
}

fn path_display(path: &[String]) -> String {
    if path.is_empty() {
        "top level".to_string()
    } else {
        path.join("/")
    }
}

struct WfCtx {
    path: Vec<String>,
    /// All variables in scope.
    bound: Vec<String>,
    /// Variables bound by a `rec` not yet guarded by a communication.
    unguarded: Vec<String>,
}

impl WfCtx {
    fn new() -> Self {
        WfCtx {
            path: Vec::new(),
            bound: Vec::new(),
            unguarded: Vec::new(),
        }
    }

    fn fail(&self, kind: WfErrorKind) -> WfError {
        WfError {
            path: self.path.clone(),
            kind,
        }
    }
}

/// Accepts iff the type is closed and guarded with nonempty, duplicate-free
/// branch sets.
pub fn well_formed_session(s: &SessionType) -> Result<(), WfError> {
    let mut ctx = WfCtx::new();
    wf_session(s, &mut ctx)
}

fn wf_session(s: &SessionType, ctx: &mut WfCtx) -> Result<(), WfError> {
    match s {
        SessionType::Select { to, branches } | SessionType::Branch { from: to, branches } => {
            let step = match s {
                SessionType::Select { .. } => format!("{to}!"),
                _ => format!("{to}?"),
            };
            ctx.path.push(step);
            if branches.is_empty() {
                return Err(ctx.fail(WfErrorKind::EmptyBranch));
            }
            let mut seen: HashSet<&str> = HashSet::new();
            for (label, _) in branches.iter() {
                if !seen.insert(&label.0) {
                    return Err(ctx.fail(WfErrorKind::DuplicateLabel(label.0.clone())));
                }
            }
            let saved_unguarded = std::mem::take(&mut ctx.unguarded);
            for (label, arm) in branches.iter() {
                ctx.path.push(label.0.clone());
                wf_session(&arm.cont, ctx)?;
                ctx.path.pop();
            }
            ctx.unguarded = saved_unguarded;
            ctx.path.pop();
            Ok(())
        }
        SessionType::Rec(x, body) => {
            ctx.path.push(format!("rec {x}"));
            ctx.bound.push(x.clone());
            ctx.unguarded.push(x.clone());
            wf_session(body, ctx)?;
            ctx.unguarded.retain(|v| v != x);
            ctx.bound.pop();
            ctx.path.pop();
            Ok(())
        }
        SessionType::Var(x) => {
            if ctx.unguarded.iter().any(|v| v == x) {
                Err(ctx.fail(WfErrorKind::UnguardedRecursion(x.clone())))
            } else if !ctx.bound.iter().any(|v| v == x) {
                Err(ctx.fail(WfErrorKind::FreeTypeVariable(x.clone())))
            } else {
                Ok(())
            }
        }
        SessionType::End => Ok(()),
    }
}

/// Global type well-formedness: as for session types, plus sender and
/// receiver of each message must differ.
pub fn well_formed_global(g: &GlobalType) -> Result<(), WfError> {
    let mut ctx = WfCtx::new();
    wf_global(g, &mut ctx)
}

fn wf_global(g: &GlobalType, ctx: &mut WfCtx) -> Result<(), WfError> {
    match g {
        GlobalType::Msg { from, to, branches } => {
            ctx.path.push(format!("{from}->{to}"));
            if from == to {
                return Err(ctx.fail(WfErrorKind::SelfMessage(from.0.clone())));
            }
            if branches.is_empty() {
                return Err(ctx.fail(WfErrorKind::EmptyBranch));
            }
            let mut seen: HashSet<&str> = HashSet::new();
            for (label, _) in branches.iter() {
                if !seen.insert(&label.0) {
                    return Err(ctx.fail(WfErrorKind::DuplicateLabel(label.0.clone())));
                }
            }
            let saved_unguarded = std::mem::take(&mut ctx.unguarded);
            for (label, arm) in branches.iter() {
                ctx.path.push(label.0.clone());
                wf_global(&arm.cont, ctx)?;
                ctx.path.pop();
            }
            ctx.unguarded = saved_unguarded;
            ctx.path.pop();
            Ok(())
        }
        GlobalType::Rec(x, body) => {
            ctx.path.push(format!("rec {x}"));
            ctx.bound.push(x.clone());
            ctx.unguarded.push(x.clone());
            wf_global(body, ctx)?;
            ctx.unguarded.retain(|v| v != x);
            ctx.bound.pop();
            ctx.path.pop();
            Ok(())
        }
        GlobalType::Var(x) => {
            if ctx.unguarded.iter().any(|v| v == x) {
                Err(ctx.fail(WfErrorKind::UnguardedRecursion(x.clone())))
            } else if !ctx.bound.iter().any(|v| v == x) {
                Err(ctx.fail(WfErrorKind::FreeTypeVariable(x.clone())))
            } else {
                Ok(())
            }
        }
        GlobalType::End => Ok(()),
    }
}

/// Protocol well-formedness: at least two roles, well-formed entries, and
/// every role mentioned inside any entry must be a key of the map.
pub fn well_formed_protocol(p: &Protocol) -> Result<(), WfError> {
    if p.entries.len() < 2 {
        return Err(WfError {
            path: Vec::new(),
            kind: WfErrorKind::TooFewRoles,
        });
    }
    for (role, ty) in p.iter() {
        well_formed_session(ty).map_err(|mut e| {
            e.path.insert(0, role.0.clone());
            e
        })?;
        for mentioned in mentioned_roles(ty) {
            if p.get(&mentioned).is_none() {
                return Err(WfError {
                    path: vec![role.0.clone()],
                    kind: WfErrorKind::RoleAbsent(mentioned.0),
                });
            }
        }
    }
    Ok(())
}

fn mentioned_roles(s: &SessionType) -> Vec<Role> {
    let mut out = Vec::new();
    fn go(s: &SessionType, out: &mut Vec<Role>) {
        match s {
            SessionType::Select { to: r, branches } | SessionType::Branch { from: r, branches } => {
                if !out.contains(r) {
                    out.push(r.clone());
                }
                for (_, arm) in branches.iter() {
                    go(&arm.cont, out);
                }
            }
            SessionType::Rec(_, body) => go(body, out),
            SessionType::Var(_) | SessionType::End => {}
        }
    }
    go(s, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::types::{Branches, BranchArm, Label, PayloadType};

    #[test]
    fn rec_var_is_unguarded() {
        let t = SessionType::rec("X", SessionType::var("X"));
        let err = well_formed_session(&t).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::UnguardedRecursion("X".into()));
    }

    #[test]
    fn rec_rec_var_is_unguarded() {
        let t = SessionType::rec("X", SessionType::rec("Y", SessionType::var("X")));
        let err = well_formed_session(&t).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::UnguardedRecursion("X".into()));
    }

    #[test]
    fn guarded_loop_is_ok() {
        let t = SessionType::rec(
            "X",
            SessionType::select(
                Role::new("q"),
                vec![(Label::new("l"), PayloadType::UNIT, SessionType::var("X"))],
            ),
        );
        assert!(well_formed_session(&t).is_ok());
    }

    #[test]
    fn duplicate_label_rejected() {
        let dup = SessionType::Branch {
            from: Role::new("p"),
            branches: Branches::new(vec![
                (
                    Label::new("l"),
                    BranchArm {
                        payload: PayloadType::INT,
                        cont: SessionType::End,
                    },
                ),
                (
                    Label::new("l"),
                    BranchArm {
                        payload: PayloadType::BOOL,
                        cont: SessionType::End,
                    },
                ),
            ]),
        };
        let err = well_formed_session(&dup).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::DuplicateLabel("l".into()));
    }

    #[test]
    fn free_variable_rejected() {
        let err = well_formed_session(&SessionType::var("X")).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::FreeTypeVariable("X".into()));
    }

    #[test]
    fn self_message_rejected() {
        let g = GlobalType::msg(
            Role::new("p"),
            Role::new("p"),
            vec![(Label::new("l"), PayloadType::UNIT, GlobalType::End)],
        );
        let err = well_formed_global(&g).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::SelfMessage("p".into()));
    }
}
