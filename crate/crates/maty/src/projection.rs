//! Projection of global types onto roles, producing protocols of local
//! types.
//!
//! The projector works on the graph of global-type states (states are
//! global types up to unfolding). For an uninvolved role the projection of
//! a choice is the full merge of the branch projections; operationally this
//! is a subset construction: the projection of a *set* of global states is
//! computed, input states from a common peer merge by uniting their label
//! sets, and revisiting a set under computation introduces a recursion
//! binder. Full merging of inputs is used; outputs and terminated states
//! merge only when their projections are equal.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::syntax::types::{
    payload_equal, session_equal, unfold, unfold_global, BranchArm, Branches,
    GlobalType, Label, PayloadType, Protocol, Role, SessionType,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProjectionErrorKind {
    #[error("branch projections cannot be merged: {0}")]
    NonMergeable(String),
    #[error("role {0} does not occur in the global type")]
    RoleAbsent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("projecting onto {role} at {}: {kind}", if .path.is_empty() { "top level".to_string() } else { .path.join("/") })]
pub struct ProjectionError {
    pub role: Role,
    pub path: Vec<String>,
    pub kind: ProjectionErrorKind,
}

/// Project a global type onto one role.
pub fn project(g: &GlobalType, role: &Role) -> Result<SessionType, ProjectionError> {
    let mut proj = Projector::new(role.clone());
    proj.project_set(state_closure(vec![g.clone()], role))
}

/// Project a global type onto one role, also reporting whether any merging
/// of distinct branch behaviours actually occurred.
pub fn project_flagged(
    g: &GlobalType,
    role: &Role,
) -> Result<(SessionType, bool), ProjectionError> {
    let mut proj = Projector::new(role.clone());
    let ty = proj.project_set(state_closure(vec![g.clone()], role))?;
    Ok((ty, proj.merged))
}

/// Project a global type onto every role in `roles`, which must be exactly
/// the roles occurring in the type.
pub fn project_all(g: &GlobalType, roles: &[Role]) -> Result<Protocol, ProjectionError> {
    let occurring = g.roles();
    for r in roles {
        if !occurring.contains(r) {
            return Err(ProjectionError {
                role: r.clone(),
                path: Vec::new(),
                kind: ProjectionErrorKind::RoleAbsent(r.0.clone()),
            });
        }
    }
    for r in &occurring {
        if !roles.contains(r) {
            return Err(ProjectionError {
                role: r.clone(),
                path: Vec::new(),
                kind: ProjectionErrorKind::RoleAbsent(r.0.clone()),
            });
        }
    }
    let mut entries = Vec::new();
    for r in roles {
        entries.push((r.clone(), project(g, r)?));
    }
    Ok(Protocol::new(entries))
}

/// A projection state set: global types (unfolded, with the projected role
/// involved, or `End`) whose projections are to be merged.
type StateSet = BTreeSet<GlobalType>;

/// Expand a set of global states by replacing every state in which the role
/// is uninvolved by its branch continuations, to a fixpoint.
fn state_closure(init: Vec<GlobalType>, role: &Role) -> StateSet {
    let mut frontier: Vec<GlobalType> = init.into_iter().map(|g| unfold_global(&g)).collect();
    let mut seen: BTreeSet<GlobalType> = BTreeSet::new();
    let mut out = BTreeSet::new();
    while let Some(g) = frontier.pop() {
        if !seen.insert(g.clone()) {
            continue;
        }
        match &g {
            GlobalType::Msg { from, to, branches } => {
                if from == role || to == role {
                    out.insert(g.clone());
                } else {
                    for (_, arm) in branches.iter() {
                        frontier.push(unfold_global(&arm.cont));
                    }
                }
            }
            GlobalType::End => {
                out.insert(g.clone());
            }
            // Free variables cannot appear in closed global types and Rec
            // heads are removed by unfolding.
            GlobalType::Var(_) | GlobalType::Rec(_, _) => unreachable!(),
        }
    }
    out
}

struct Projector {
    role: Role,
    /// Recursion variables assigned to state sets currently on the stack,
    /// paired with a flag recording whether the variable was used.
    in_progress: Vec<(StateSet, String, bool)>,
    next_var: u32,
    merged: bool,
}

impl Projector {
    fn new(role: Role) -> Self {
        Projector {
            role,
            in_progress: Vec::new(),
            next_var: 0,
            merged: false,
        }
    }

    fn fail(&self, msg: String) -> ProjectionError {
        ProjectionError {
            role: self.role.clone(),
            path: Vec::new(),
            kind: ProjectionErrorKind::NonMergeable(msg),
        }
    }

    fn project_set(&mut self, states: StateSet) -> Result<SessionType, ProjectionError> {
        if let Some(entry) = self.in_progress.iter_mut().find(|(s, _, _)| *s == states) {
            entry.2 = true;
            return Ok(SessionType::Var(entry.1.clone()));
        }
        let var = format!("X{}", self.next_var);
        self.next_var += 1;
        self.in_progress.push((states.clone(), var.clone(), false));
        let body = self.project_frontier(&states);
        let (_, _, used) = self.in_progress.pop().unwrap();
        let body = body?;
        if used {
            Ok(SessionType::Rec(var, Box::new(body)))
        } else {
            Ok(body)
        }
    }

    fn project_frontier(&mut self, states: &StateSet) -> Result<SessionType, ProjectionError> {
        // A pure cycle with no involvement collapses to end.
        if states.is_empty() {
            return Ok(SessionType::End);
        }
        if states.iter().all(|g| matches!(g, GlobalType::End)) {
            return Ok(SessionType::End);
        }
        if states.len() == 1 {
            return self.project_single(states.iter().next().unwrap());
        }
        self.merged = true;
        // Input states from a common peer merge by label union; anything
        // else must project to equal types.
        let all_inputs_from = states
            .iter()
            .filter_map(|g| match g {
                GlobalType::Msg { from, to, .. } if to == &self.role => Some(from.clone()),
                _ => None,
            })
            .collect::<BTreeSet<_>>();
        let input_count = states
            .iter()
            .filter(|g| matches!(g, GlobalType::Msg { to, .. } if to == &self.role))
            .count();
        if input_count == states.len() && all_inputs_from.len() == 1 {
            let from = all_inputs_from.into_iter().next().unwrap();
            return self.merge_inputs(&from, states);
        }
        // Fall back: each state projects independently and all results must
        // coincide.
        let mut projections = Vec::new();
        for g in states {
            let single: StateSet = std::iter::once(g.clone()).collect();
            projections.push(self.project_set(single)?);
        }
        let first = projections[0].clone();
        for other in &projections[1..] {
            if !session_equal(&first, other) {
                return Err(self.fail(format!(
                    "a choice treats {} inconsistently: {} vs {}",
                    self.role,
                    crate::syntax::print::session_to_string(&first),
                    crate::syntax::print::session_to_string(other)
                )));
            }
        }
        Ok(first)
    }

    fn merge_inputs(
        &mut self,
        from: &Role,
        states: &StateSet,
    ) -> Result<SessionType, ProjectionError> {
        // label -> (payload, continuation states)
        let mut merged: Vec<(Label, PayloadType, Vec<GlobalType>)> = Vec::new();
        for g in states {
            let GlobalType::Msg { branches, .. } = g else {
                unreachable!()
            };
            for (label, arm) in branches.iter() {
                match merged.iter_mut().find(|(l, _, _)| l == label) {
                    Some((_, payload, conts)) => {
                        if !payload_equal(payload, &arm.payload) {
                            return Err(self.fail(format!(
                                "label {label} received from {from} with differing payloads"
                            )));
                        }
                        conts.push(arm.cont.clone());
                    }
                    None => {
                        merged.push((label.clone(), arm.payload.clone(), vec![arm.cont.clone()]));
                    }
                }
            }
        }
        let mut arms = Vec::new();
        for (label, payload, conts) in merged {
            let cont = self.project_set(state_closure(conts, &self.role.clone()))?;
            arms.push((
                label,
                BranchArm {
                    payload,
                    cont,
                },
            ));
        }
        Ok(SessionType::Branch {
            from: from.clone(),
            branches: Branches::new(arms.into_iter().collect()),
        })
    }

    fn project_single(&mut self, g: &GlobalType) -> Result<SessionType, ProjectionError> {
        match g {
            GlobalType::End => Ok(SessionType::End),
            GlobalType::Msg { from, to, branches } => {
                let role = self.role.clone();
                let mut arms = Vec::new();
                for (label, arm) in branches.iter() {
                    let cont = self.project_set(state_closure(vec![arm.cont.clone()], &role))?;
                    arms.push((
                        label.clone(),
                        BranchArm {
                            payload: arm.payload.clone(),
                            cont,
                        },
                    ));
                }
                let branches = Branches::new(arms);
                if from == &role {
                    Ok(SessionType::Select {
                        to: to.clone(),
                        branches,
                    })
                } else {
                    debug_assert_eq!(to, &role);
                    Ok(SessionType::Branch {
                        from: from.clone(),
                        branches,
                    })
                }
            }
            GlobalType::Var(_) | GlobalType::Rec(_, _) => unreachable!(),
        }
    }
}

/// Full merge of two local types. Identical types merge to themselves; two
/// input types from the same role merge by uniting their branches and
/// recursively merging continuations of shared labels. Recursion is handled
/// coinductively: revisiting a pair introduces a fresh binder.
pub fn merge(a: &SessionType, b: &SessionType) -> Result<SessionType, ProjectionError> {
    let mut m = Merger {
        in_progress: Vec::new(),
        next_var: 0,
    };
    m.merge(a, b)
}

struct Merger {
    in_progress: Vec<((SessionType, SessionType), String, bool)>,
    next_var: u32,
}

impl Merger {
    fn merge(&mut self, a: &SessionType, b: &SessionType) -> Result<SessionType, ProjectionError> {
        if session_equal(a, b) {
            return Ok(a.clone());
        }
        let key = (a.clone(), b.clone());
        if let Some(entry) = self.in_progress.iter_mut().find(|(k, _, _)| *k == key) {
            entry.2 = true;
            return Ok(SessionType::Var(entry.1.clone()));
        }
        let var = format!("M{}", self.next_var);
        self.next_var += 1;
        self.in_progress.push((key, var.clone(), false));
        let result = self.merge_heads(&unfold(a), &unfold(b));
        let (_, _, used) = self.in_progress.pop().unwrap();
        let body = result?;
        if used {
            Ok(SessionType::Rec(var, Box::new(body)))
        } else {
            Ok(body)
        }
    }

    fn merge_heads(
        &mut self,
        a: &SessionType,
        b: &SessionType,
    ) -> Result<SessionType, ProjectionError> {
        match (a, b) {
            (
                SessionType::Branch {
                    from: fa,
                    branches: ba,
                },
                SessionType::Branch {
                    from: fb,
                    branches: bb,
                },
            ) if fa == fb => {
                let mut arms: Vec<(Label, BranchArm<SessionType>)> = Vec::new();
                for (label, arm) in ba.iter() {
                    arms.push((label.clone(), arm.clone()));
                }
                for (label, arm) in bb.iter() {
                    match arms.iter_mut().find(|(l, _)| l == label) {
                        Some((_, existing)) => {
                            if !payload_equal(&existing.payload, &arm.payload) {
                                return Err(ProjectionError {
                                    role: fa.clone(),
                                    path: Vec::new(),
                                    kind: ProjectionErrorKind::NonMergeable(format!(
                                        "shared label {label} with differing payloads"
                                    )),
                                });
                            }
                            existing.cont = self.merge(&existing.cont.clone(), &arm.cont)?;
                        }
                        None => arms.push((label.clone(), arm.clone())),
                    }
                }
                Ok(SessionType::Branch {
                    from: fa.clone(),
                    branches: Branches::new(arms),
                })
            }
            _ => Err(ProjectionError {
                role: Role::new("?"),
                path: Vec::new(),
                kind: ProjectionErrorKind::NonMergeable(format!(
                    "{} and {} merge only when equal",
                    crate::syntax::print::session_to_string(a),
                    crate::syntax::print::session_to_string(b)
                )),
            }),
        }
    }
}

/// Structural dual of a two-party local type: swaps Select and Branch,
/// keeping labels and payloads. Used to cross-check two-role projections.
pub fn dual(s: &SessionType) -> SessionType {
    match s {
        SessionType::Select { to, branches } => SessionType::Branch {
            from: to.clone(),
            branches: branches.map(dual),
        },
        SessionType::Branch { from, branches } => SessionType::Select {
            to: from.clone(),
            branches: branches.map(dual),
        },
        SessionType::Rec(x, body) => SessionType::Rec(x.clone(), Box::new(dual(body))),
        SessionType::Var(x) => SessionType::Var(x.clone()),
        SessionType::End => SessionType::End,
    }
}

/// Rename the peer role inside a two-party local type; duality of a
/// projection `g|p` is checked against `dual(g|q)` with roles swapped.
pub fn rename_peer(s: &SessionType, from: &Role, to: &Role) -> SessionType {
    match s {
        SessionType::Select { to: peer, branches } => SessionType::Select {
            to: if peer == from { to.clone() } else { peer.clone() },
            branches: branches.map(|c| rename_peer(c, from, to)),
        },
        SessionType::Branch { from: peer, branches } => SessionType::Branch {
            from: if peer == from { to.clone() } else { peer.clone() },
            branches: branches.map(|c| rename_peer(c, from, to)),
        },
        SessionType::Rec(x, body) => {
            SessionType::Rec(x.clone(), Box::new(rename_peer(body, from, to)))
        }
        SessionType::Var(x) => SessionType::Var(x.clone()),
        SessionType::End => SessionType::End,
    }
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

    #[test]
    fn uninvolved_role_projects_to_end() {
        let g = GlobalType::msg(
            r("p"),
            r("q"),
            vec![(l("l"), PayloadType::INT, GlobalType::End)],
        );
        assert_eq!(project(&g, &r("r")).unwrap(), SessionType::End);
    }

    #[test]
    fn sender_and_receiver_project_dually() {
        let g = GlobalType::msg(
            r("p"),
            r("q"),
            vec![
                (l("a"), PayloadType::INT, GlobalType::End),
                (l("b"), PayloadType::UNIT, GlobalType::End),
            ],
        );
        let sp = project(&g, &r("p")).unwrap();
        let sq = project(&g, &r("q")).unwrap();
        assert_eq!(
            sp,
            SessionType::select(
                r("q"),
                vec![
                    (l("a"), PayloadType::INT, SessionType::End),
                    (l("b"), PayloadType::UNIT, SessionType::End)
                ]
            )
        );
        assert_eq!(rename_peer(&dual(&sp), &r("q"), &r("p")), sq);
    }

    #[test]
    fn merge_unites_inputs() {
        let a = SessionType::branch(r("p"), vec![(l("a"), PayloadType::INT, SessionType::End)]);
        let b = SessionType::branch(r("p"), vec![(l("b"), PayloadType::BOOL, SessionType::End)]);
        let m = merge(&a, &b).unwrap();
        assert_eq!(
            m,
            SessionType::branch(
                r("p"),
                vec![
                    (l("a"), PayloadType::INT, SessionType::End),
                    (l("b"), PayloadType::BOOL, SessionType::End)
                ]
            )
        );
    }

    #[test]
    fn merge_end_end() {
        assert_eq!(merge(&SessionType::End, &SessionType::End).unwrap(), SessionType::End);
    }

    #[test]
    fn merge_rejects_distinct_outputs() {
        let a = SessionType::select(r("p"), vec![(l("a"), PayloadType::INT, SessionType::End)]);
        let b = SessionType::select(r("p"), vec![(l("b"), PayloadType::INT, SessionType::End)]);
        assert!(merge(&a, &b).is_err());
    }

    #[test]
    fn merge_recursive_inputs() {
        let a = SessionType::rec(
            "X",
            SessionType::branch(r("p"), vec![(l("a"), PayloadType::UNIT, SessionType::var("X"))]),
        );
        let b = SessionType::rec(
            "Y",
            SessionType::branch(r("p"), vec![(l("b"), PayloadType::UNIT, SessionType::var("Y"))]),
        );
        let m = merge(&a, &b).unwrap();
        crate::syntax::wf::well_formed_session(&m).unwrap();
        // The merged type offers both labels at the top.
        match unfold(&m) {
            SessionType::Branch { branches, .. } => {
                assert_eq!(branches.len(), 2);
            }
            other => panic!("expected branch, got {other:?}"),
        }
    }
}
