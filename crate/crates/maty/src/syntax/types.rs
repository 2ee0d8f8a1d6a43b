//! Behavioural types: local and global session types, payload types, and
//! protocols, with equi-recursive equality.

use std::collections::HashSet;
use std::fmt;

/// A protocol role. Roles compare by name and must be distinct within a
/// protocol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Role(pub String);

impl Role {
    pub fn new(name: impl Into<String>) -> Self {
        Role(name.into())
    }
    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A message label. Labels within one branch or selection are pairwise
/// distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub String);

impl Label {
    pub fn new(name: impl Into<String>) -> Self {
        Label(name.into())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseType {
    Unit,
    Bool,
    Int,
    Str,
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseType::Unit => write!(f, "Unit"),
            BaseType::Bool => write!(f, "Bool"),
            BaseType::Int => write!(f, "Int"),
            BaseType::Str => write!(f, "String"),
        }
    }
}

/// Payload and value types. `Bottom` is an internal device for the
/// control-operator typing of `suspend`/`raise`; it is never writable in
/// source syntax and is eliminated at joins.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadType {
    Base(BaseType),
    /// Function type `A ->{S; T; C} B`: argument, result, session
    /// precondition, postcondition, and actor state type.
    Fun {
        arg: Box<PayloadType>,
        result: Box<PayloadType>,
        pre: SessionType,
        post: SessionType,
        state: Box<PayloadType>,
    },
    Pair(Box<PayloadType>, Box<PayloadType>),
    AccessPoint(Protocol),
    /// Message handler type: input session type plus actor state type.
    Handler {
        input: SessionType,
        state: Box<PayloadType>,
    },
    Pid,
    Bottom,
}

impl PayloadType {
    pub const UNIT: PayloadType = PayloadType::Base(BaseType::Unit);
    pub const BOOL: PayloadType = PayloadType::Base(BaseType::Bool);
    pub const INT: PayloadType = PayloadType::Base(BaseType::Int);
    pub const STR: PayloadType = PayloadType::Base(BaseType::Str);

    pub fn pair(a: PayloadType, b: PayloadType) -> PayloadType {
        PayloadType::Pair(Box::new(a), Box::new(b))
    }

    pub fn fun(
        arg: PayloadType,
        result: PayloadType,
        pre: SessionType,
        post: SessionType,
        state: PayloadType,
    ) -> PayloadType {
        PayloadType::Fun {
            arg: Box::new(arg),
            result: Box::new(result),
            pre,
            post,
            state: Box::new(state),
        }
    }

    pub fn handler(input: SessionType, state: PayloadType) -> PayloadType {
        PayloadType::Handler {
            input,
            state: Box::new(state),
        }
    }
}

/// One labelled branch of a selection, branching, or global message.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchArm<C> {
    pub payload: PayloadType,
    pub cont: C,
}

/// A label-indexed branch list, kept sorted by label for deterministic
/// printing and hashing. Duplicates can be represented (so well-formedness
/// checking can report them) but are rejected by validation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Branches<C>(Vec<(Label, BranchArm<C>)>);

impl<C> Branches<C> {
    pub fn new(mut arms: Vec<(Label, BranchArm<C>)>) -> Self {
        arms.sort_by(|a, b| a.0.cmp(&b.0));
        Branches(arms)
    }

    pub fn get(&self, label: &Label) -> Option<&BranchArm<C>> {
        self.0
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, arm)| arm)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Label, BranchArm<C>)> {
        self.0.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.0.iter().map(|(l, _)| l)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map<D>(&self, mut f: impl FnMut(&C) -> D) -> Branches<D> {
        Branches(
            self.0
                .iter()
                .map(|(l, arm)| {
                    (
                        l.clone(),
                        BranchArm {
                            payload: arm.payload.clone(),
                            cont: f(&arm.cont),
                        },
                    )
                })
                .collect(),
        )
    }
}

impl<C> IntoIterator for Branches<C> {
    type Item = (Label, BranchArm<C>);
    type IntoIter = std::vec::IntoIter<(Label, BranchArm<C>)>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Local session types. `Select` is the output form (`p!{...}`), `Branch`
/// the input form (`p?{...}`). Recursion is equi-recursive: a `Rec` is
/// identified with its unfolding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SessionType {
    Select {
        to: Role,
        branches: Branches<SessionType>,
    },
    Branch {
        from: Role,
        branches: Branches<SessionType>,
    },
    Rec(String, Box<SessionType>),
    Var(String),
    End,
}

impl SessionType {
    pub fn select(to: Role, arms: Vec<(Label, PayloadType, SessionType)>) -> SessionType {
        SessionType::Select {
            to,
            branches: Branches::new(
                arms.into_iter()
                    .map(|(l, payload, cont)| (l, BranchArm { payload, cont }))
                    .collect(),
            ),
        }
    }

    pub fn branch(from: Role, arms: Vec<(Label, PayloadType, SessionType)>) -> SessionType {
        SessionType::Branch {
            from,
            branches: Branches::new(
                arms.into_iter()
                    .map(|(l, payload, cont)| (l, BranchArm { payload, cont }))
                    .collect(),
            ),
        }
    }

    pub fn rec(var: impl Into<String>, body: SessionType) -> SessionType {
        SessionType::Rec(var.into(), Box::new(body))
    }

    pub fn var(name: impl Into<String>) -> SessionType {
        SessionType::Var(name.into())
    }

    pub fn is_end(&self) -> bool {
        matches!(unfold(self), SessionType::End)
    }

    /// Free recursion variables.
    pub fn free_vars(&self) -> HashSet<String> {
        let mut out = HashSet::new();
        free_vars_into(self, &mut Vec::new(), &mut out);
        out
    }
}

fn free_vars_into(s: &SessionType, bound: &mut Vec<String>, out: &mut HashSet<String>) {
    match s {
        SessionType::Select { branches, .. } | SessionType::Branch { branches, .. } => {
            for (_, arm) in branches.iter() {
                free_vars_into(&arm.cont, bound, out);
            }
        }
        SessionType::Rec(x, body) => {
            bound.push(x.clone());
            free_vars_into(body, bound, out);
            bound.pop();
        }
        SessionType::Var(x) => {
            if !bound.iter().any(|b| b == x) {
                out.insert(x.clone());
            }
        }
        SessionType::End => {}
    }
}

/// Substitute `replacement` for free occurrences of `var` in `s`. Payload
/// types never contain free session variables in well-formed source, so
/// substitution does not descend into them.
pub fn subst_session(s: &SessionType, var: &str, replacement: &SessionType) -> SessionType {
    match s {
        SessionType::Select { to, branches } => SessionType::Select {
            to: to.clone(),
            branches: branches.map(|c| subst_session(c, var, replacement)),
        },
        SessionType::Branch { from, branches } => SessionType::Branch {
            from: from.clone(),
            branches: branches.map(|c| subst_session(c, var, replacement)),
        },
        SessionType::Rec(x, body) => {
            if x == var {
                s.clone()
            } else {
                SessionType::Rec(x.clone(), Box::new(subst_session(body, var, replacement)))
            }
        }
        SessionType::Var(x) => {
            if x == var {
                replacement.clone()
            } else {
                s.clone()
            }
        }
        SessionType::End => SessionType::End,
    }
}

/// Unfold top-level recursion until the head is a communication action,
/// `end`, or a free variable. Guardedness of well-formed types guarantees
/// termination.
pub fn unfold(s: &SessionType) -> SessionType {
    let mut cur = s.clone();
    while let SessionType::Rec(x, body) = &cur {
        let unrolled = subst_session(body, x, &cur);
        cur = unrolled;
    }
    cur
}

/// Equi-recursive equality: `a` and `b` denote the same regular tree.
/// Decided by bisimulation with a memoized assumption set of visited pairs.
pub fn session_equal(a: &SessionType, b: &SessionType) -> bool {
    let mut seen = HashSet::new();
    session_equal_rec(a, b, &mut seen)
}

fn session_equal_rec(
    a: &SessionType,
    b: &SessionType,
    seen: &mut HashSet<(SessionType, SessionType)>,
) -> bool {
    if a == b {
        return true;
    }
    let key = (a.clone(), b.clone());
    if !seen.insert(key) {
        return true;
    }
    let ua = unfold(a);
    let ub = unfold(b);
    match (&ua, &ub) {
        (SessionType::End, SessionType::End) => true,
        (SessionType::Var(x), SessionType::Var(y)) => x == y,
        (
            SessionType::Select {
                to: ta,
                branches: ba,
            },
            SessionType::Select {
                to: tb,
                branches: bb,
            },
        ) => ta == tb && branches_equal(ba, bb, seen),
        (
            SessionType::Branch {
                from: fa,
                branches: ba,
            },
            SessionType::Branch {
                from: fb,
                branches: bb,
            },
        ) => fa == fb && branches_equal(ba, bb, seen),
        _ => false,
    }
}

fn branches_equal(
    a: &Branches<SessionType>,
    b: &Branches<SessionType>,
    seen: &mut HashSet<(SessionType, SessionType)>,
) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((la, aa), (lb, ab))| {
            la == lb
                && payload_equal_rec(&aa.payload, &ab.payload, seen)
                && session_equal_rec(&aa.cont, &ab.cont, seen)
        })
}

/// Structural payload equality with session components compared
/// equi-recursively. `Bottom` equals only `Bottom`.
pub fn payload_equal(a: &PayloadType, b: &PayloadType) -> bool {
    let mut seen = HashSet::new();
    payload_equal_rec(a, b, &mut seen)
}

fn payload_equal_rec(
    a: &PayloadType,
    b: &PayloadType,
    seen: &mut HashSet<(SessionType, SessionType)>,
) -> bool {
    match (a, b) {
        (PayloadType::Base(x), PayloadType::Base(y)) => x == y,
        (PayloadType::Pid, PayloadType::Pid) => true,
        (PayloadType::Bottom, PayloadType::Bottom) => true,
        (PayloadType::Pair(a1, a2), PayloadType::Pair(b1, b2)) => {
            payload_equal_rec(a1, b1, seen) && payload_equal_rec(a2, b2, seen)
        }
        (
            PayloadType::Fun {
                arg: aa,
                result: ar,
                pre: ap,
                post: aq,
                state: ac,
            },
            PayloadType::Fun {
                arg: ba,
                result: br,
                pre: bp,
                post: bq,
                state: bc,
            },
        ) => {
            payload_equal_rec(aa, ba, seen)
                && payload_equal_rec(ar, br, seen)
                && session_equal_rec(ap, bp, seen)
                && session_equal_rec(aq, bq, seen)
                && payload_equal_rec(ac, bc, seen)
        }
        (PayloadType::AccessPoint(pa), PayloadType::AccessPoint(pb)) => {
            protocol_equal_rec(pa, pb, seen)
        }
        (
            PayloadType::Handler {
                input: ia,
                state: sa,
            },
            PayloadType::Handler {
                input: ib,
                state: sb,
            },
        ) => session_equal_rec(ia, ib, seen) && payload_equal_rec(sa, sb, seen),
        _ => false,
    }
}

fn protocol_equal_rec(
    a: &Protocol,
    b: &Protocol,
    seen: &mut HashSet<(SessionType, SessionType)>,
) -> bool {
    a.entries.len() == b.entries.len()
        && a.entries.iter().zip(b.entries.iter()).all(|(ea, eb)| {
            ea.0 == eb.0 && session_equal_rec(&ea.1, &eb.1, seen)
        })
}

/// Protocol equality up to equi-recursive equality of the per-role types.
pub fn protocol_equal(a: &Protocol, b: &Protocol) -> bool {
    let mut seen = HashSet::new();
    protocol_equal_rec(a, b, &mut seen)
}

/// Global types in the directed-choice style: `Msg` is a message from one
/// role to another with one continuation per label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GlobalType {
    Msg {
        from: Role,
        to: Role,
        branches: Branches<GlobalType>,
    },
    Rec(String, Box<GlobalType>),
    Var(String),
    End,
}

impl GlobalType {
    pub fn msg(
        from: Role,
        to: Role,
        arms: Vec<(Label, PayloadType, GlobalType)>,
    ) -> GlobalType {
        GlobalType::Msg {
            from,
            to,
            branches: Branches::new(
                arms.into_iter()
                    .map(|(l, payload, cont)| (l, BranchArm { payload, cont }))
                    .collect(),
            ),
        }
    }

    pub fn rec(var: impl Into<String>, body: GlobalType) -> GlobalType {
        GlobalType::Rec(var.into(), Box::new(body))
    }

    /// Roles occurring as sender or receiver anywhere in the type.
    pub fn roles(&self) -> Vec<Role> {
        let mut out = Vec::new();
        fn go(g: &GlobalType, out: &mut Vec<Role>) {
            match g {
                GlobalType::Msg { from, to, branches } => {
                    if !out.contains(from) {
                        out.push(from.clone());
                    }
                    if !out.contains(to) {
                        out.push(to.clone());
                    }
                    for (_, arm) in branches.iter() {
                        go(&arm.cont, out);
                    }
                }
                GlobalType::Rec(_, body) => go(body, out),
                GlobalType::Var(_) | GlobalType::End => {}
            }
        }
        go(self, &mut out);
        out.sort();
        out
    }
}

pub fn subst_global(g: &GlobalType, var: &str, replacement: &GlobalType) -> GlobalType {
    match g {
        GlobalType::Msg { from, to, branches } => GlobalType::Msg {
            from: from.clone(),
            to: to.clone(),
            branches: branches.map(|c| subst_global(c, var, replacement)),
        },
        GlobalType::Rec(x, body) => {
            if x == var {
                g.clone()
            } else {
                GlobalType::Rec(x.clone(), Box::new(subst_global(body, var, replacement)))
            }
        }
        GlobalType::Var(x) => {
            if x == var {
                replacement.clone()
            } else {
                g.clone()
            }
        }
        GlobalType::End => GlobalType::End,
    }
}

/// Unfold top-level global recursion until the head is `Msg`, `End`, or a
/// free variable.
pub fn unfold_global(g: &GlobalType) -> GlobalType {
    let mut cur = g.clone();
    while let GlobalType::Rec(x, body) = &cur {
        let unrolled = subst_global(body, x, &cur);
        cur = unrolled;
    }
    cur
}

/// A protocol: the role-to-local-type map used by access points and
/// compliance checking. Entries are kept sorted by role.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Protocol {
    pub entries: Vec<(Role, SessionType)>,
}

impl Protocol {
    pub fn new(mut entries: Vec<(Role, SessionType)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Protocol { entries }
    }

    pub fn get(&self, role: &Role) -> Option<&SessionType> {
        self.entries
            .iter()
            .find(|(r, _)| r == role)
            .map(|(_, s)| s)
    }

    pub fn roles(&self) -> impl Iterator<Item = &Role> {
        self.entries.iter().map(|(r, _)| r)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Role, SessionType)> {
        self.entries.iter()
    }
}

/// Static session names for the session-switching extension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StaticName(pub String);

impl fmt::Display for StaticName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Signature environment for send-suspended sessions: maps each static name
/// to the session type at which the session suspends (an output type after
/// unfolding) and the payload type supplied when switching back in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SigEnv {
    pub entries: Vec<(StaticName, SessionType, PayloadType)>,
}

impl SigEnv {
    pub fn get(&self, name: &StaticName) -> Option<(&SessionType, &PayloadType)> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, p)| (s, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> Role {
        Role::new("q")
    }

    #[test]
    fn unfold_end_is_end() {
        assert_eq!(unfold(&SessionType::End), SessionType::End);
    }

    #[test]
    fn unfold_substitutes_one_level() {
        // rec X. q!{l(Int). X}
        let t = SessionType::rec(
            "X",
            SessionType::select(
                q(),
                vec![(Label::new("l"), PayloadType::INT, SessionType::var("X"))],
            ),
        );
        let u = unfold(&t);
        match &u {
            SessionType::Select { to, branches } => {
                assert_eq!(to, &q());
                let arm = branches.get(&Label::new("l")).unwrap();
                assert_eq!(arm.cont, t);
            }
            other => panic!("expected select, got {other:?}"),
        }
    }

    #[test]
    fn equal_type_and_unfolding() {
        let t = SessionType::rec(
            "X",
            SessionType::select(
                q(),
                vec![(Label::new("l"), PayloadType::UNIT, SessionType::var("X"))],
            ),
        );
        assert!(session_equal(&t, &unfold(&t)));
    }

    #[test]
    fn distinct_heads_unequal() {
        let s = SessionType::select(
            q(),
            vec![(Label::new("l"), PayloadType::UNIT, SessionType::End)],
        );
        assert!(!session_equal(&SessionType::End, &s));
    }

    #[test]
    fn bisimilar_one_and_two_step_loops() {
        // rec X. q!{l(Unit). X}  ==  rec Y. q!{l(Unit). q!{l(Unit). Y}}
        let one = SessionType::rec(
            "X",
            SessionType::select(
                q(),
                vec![(Label::new("l"), PayloadType::UNIT, SessionType::var("X"))],
            ),
        );
        let two = SessionType::rec(
            "Y",
            SessionType::select(
                q(),
                vec![(
                    Label::new("l"),
                    PayloadType::UNIT,
                    SessionType::select(
                        q(),
                        vec![(Label::new("l"), PayloadType::UNIT, SessionType::var("Y"))],
                    ),
                )],
            ),
        );
        assert!(session_equal(&one, &two));
        assert!(session_equal(&two, &one));
    }

    #[test]
    fn payload_equal_int_bool() {
        assert!(payload_equal(&PayloadType::INT, &PayloadType::INT));
        assert!(!payload_equal(&PayloadType::INT, &PayloadType::BOOL));
        assert!(payload_equal(&PayloadType::Bottom, &PayloadType::Bottom));
        assert!(!payload_equal(&PayloadType::Bottom, &PayloadType::UNIT));
    }
}
