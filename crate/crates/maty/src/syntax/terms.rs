//! Term syntax: fine-grain call-by-value values and computations, including
//! the failure-handling and session-switching constructs.

use std::fmt;

use super::types::{Label, PayloadType, Protocol, Role, SessionType, StaticName};

/// Source position, tracked for error reporting. Runtime-substituted terms
/// keep the spans of their source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Const {
    Unit,
    Bool(bool),
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
    Leq,
    And,
    Or,
    Concat,
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Lt => "<",
            BinOp::Leq => "<=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Concat => "^",
        };
        write!(f, "{s}")
    }
}

/// Function ascription: the full arrow type `A ->{S; T; C} B` carried by
/// lambdas and recursive functions so checking is syntax-directed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunSig {
    pub arg: PayloadType,
    pub result: PayloadType,
    pub pre: SessionType,
    pub post: SessionType,
    pub state: PayloadType,
}

impl FunSig {
    pub fn to_type(&self) -> PayloadType {
        PayloadType::fun(
            self.arg.clone(),
            self.result.clone(),
            self.pre.clone(),
            self.post.clone(),
            self.state.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HandlerClause {
    pub label: Label,
    pub binder: String,
    pub body: Computation,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value {
    pub kind: ValueKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueKind {
    Var(String),
    /// Reference to a top-level definition; resolved lazily against the
    /// program's definition table, which is the usual encoding of mutually
    /// recursive definitions.
    Def(String),
    Lam {
        param: String,
        sig: FunSig,
        body: Box<Computation>,
    },
    Rec {
        fname: String,
        param: String,
        sig: FunSig,
        body: Box<Computation>,
    },
    Const(Const),
    Pair(Box<Value>, Box<Value>),
    Handler {
        from: Role,
        state_var: String,
        clauses: Vec<HandlerClause>,
        /// Declared handler type `Handler(input, state)`.
        input: SessionType,
        state_ty: PayloadType,
    },
    /// Runtime access point name.
    ApRef(u32),
    /// Runtime actor name (a PID value).
    ActorRef(u32),
}

impl Value {
    pub fn new(kind: ValueKind) -> Self {
        Value {
            kind,
            span: Span::default(),
        }
    }
    pub fn unit() -> Self {
        Value::new(ValueKind::Const(Const::Unit))
    }
    pub fn bool(b: bool) -> Self {
        Value::new(ValueKind::Const(Const::Bool(b)))
    }
    pub fn int(n: i64) -> Self {
        Value::new(ValueKind::Const(Const::Int(n)))
    }
    pub fn str(s: impl Into<String>) -> Self {
        Value::new(ValueKind::Const(Const::Str(s.into())))
    }
    pub fn var(x: impl Into<String>) -> Self {
        Value::new(ValueKind::Var(x.into()))
    }
    pub fn def(x: impl Into<String>) -> Self {
        Value::new(ValueKind::Def(x.into()))
    }
    pub fn pair(a: Value, b: Value) -> Self {
        Value::new(ValueKind::Pair(Box::new(a), Box::new(b)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Computation {
    pub kind: CompKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CompKind {
    Let {
        binder: String,
        bound: Box<Computation>,
        body: Box<Computation>,
    },
    Return(Value),
    App(Value, Value),
    If(Value, Box<Computation>, Box<Computation>),
    LetPair {
        left: String,
        right: String,
        pair: Value,
        body: Box<Computation>,
    },
    BinOp(BinOp, Value, Value),
    Spawn {
        body: Box<Computation>,
        state_ty: PayloadType,
        /// Optional human-readable actor name for traces and fault injection.
        name_hint: Option<String>,
    },
    Send {
        to: Role,
        label: Label,
        payload: Value,
    },
    /// `suspend V W` installs handler `V` and idles with state `W`. The
    /// failure callback is the lightning-mode extension; a plain suspend run
    /// in that mode defaults it to `fun st -> raise`.
    Suspend {
        handler: Value,
        state: Value,
        on_fail: Option<Value>,
    },
    NewAp(Protocol),
    Register {
        ap: Value,
        role: Role,
        callback: Value,
    },
    Raise,
    Monitor {
        pid: Value,
        callback: Value,
    },
    Leave(Value),
    SuspendSend {
        name: StaticName,
        func: Value,
        state: Value,
    },
    Become {
        name: StaticName,
        payload: Value,
    },
}

impl Computation {
    pub fn new(kind: CompKind) -> Self {
        Computation {
            kind,
            span: Span::default(),
        }
    }
    pub fn ret(v: Value) -> Self {
        Computation::new(CompKind::Return(v))
    }
    pub fn app(f: Value, a: Value) -> Self {
        Computation::new(CompKind::App(f, a))
    }
    pub fn let_in(binder: impl Into<String>, bound: Computation, body: Computation) -> Self {
        Computation::new(CompKind::Let {
            binder: binder.into(),
            bound: Box::new(bound),
            body: Box::new(body),
        })
    }
    /// `M; N` sequencing sugar.
    pub fn seq(first: Computation, second: Computation) -> Self {
        Computation::let_in("_", first, second)
    }
    pub fn send(to: Role, label: Label, payload: Value) -> Self {
        Computation::new(CompKind::Send { to, label, payload })
    }
}

/// Substitute closed value `v` for free occurrences of `x`. Runtime values
/// are closed, so no capture can occur; substitution stops at shadowing
/// binders.
pub fn subst_comp(m: &Computation, x: &str, v: &Value) -> Computation {
    let kind = match &m.kind {
        CompKind::Let {
            binder,
            bound,
            body,
        } => CompKind::Let {
            binder: binder.clone(),
            bound: Box::new(subst_comp(bound, x, v)),
            body: if binder == x {
                body.clone()
            } else {
                Box::new(subst_comp(body, x, v))
            },
        },
        CompKind::Return(w) => CompKind::Return(subst_value(w, x, v)),
        CompKind::App(f, a) => CompKind::App(subst_value(f, x, v), subst_value(a, x, v)),
        CompKind::If(c, t, e) => CompKind::If(
            subst_value(c, x, v),
            Box::new(subst_comp(t, x, v)),
            Box::new(subst_comp(e, x, v)),
        ),
        CompKind::LetPair {
            left,
            right,
            pair,
            body,
        } => CompKind::LetPair {
            left: left.clone(),
            right: right.clone(),
            pair: subst_value(pair, x, v),
            body: if left == x || right == x {
                body.clone()
            } else {
                Box::new(subst_comp(body, x, v))
            },
        },
        CompKind::BinOp(op, a, b) => {
            CompKind::BinOp(*op, subst_value(a, x, v), subst_value(b, x, v))
        }
        CompKind::Spawn {
            body,
            state_ty,
            name_hint,
        } => CompKind::Spawn {
            body: Box::new(subst_comp(body, x, v)),
            state_ty: state_ty.clone(),
            name_hint: name_hint.clone(),
        },
        CompKind::Send { to, label, payload } => CompKind::Send {
            to: to.clone(),
            label: label.clone(),
            payload: subst_value(payload, x, v),
        },
        CompKind::Suspend {
            handler,
            state,
            on_fail,
        } => CompKind::Suspend {
            handler: subst_value(handler, x, v),
            state: subst_value(state, x, v),
            on_fail: on_fail.as_ref().map(|w| subst_value(w, x, v)),
        },
        CompKind::NewAp(p) => CompKind::NewAp(p.clone()),
        CompKind::Register { ap, role, callback } => CompKind::Register {
            ap: subst_value(ap, x, v),
            role: role.clone(),
            callback: subst_value(callback, x, v),
        },
        CompKind::Raise => CompKind::Raise,
        CompKind::Monitor { pid, callback } => CompKind::Monitor {
            pid: subst_value(pid, x, v),
            callback: subst_value(callback, x, v),
        },
        CompKind::Leave(w) => CompKind::Leave(subst_value(w, x, v)),
        CompKind::SuspendSend { name, func, state } => CompKind::SuspendSend {
            name: name.clone(),
            func: subst_value(func, x, v),
            state: subst_value(state, x, v),
        },
        CompKind::Become { name, payload } => CompKind::Become {
            name: name.clone(),
            payload: subst_value(payload, x, v),
        },
    };
    Computation { kind, span: m.span }
}

pub fn subst_value(w: &Value, x: &str, v: &Value) -> Value {
    let kind = match &w.kind {
        ValueKind::Var(y) => {
            if y == x {
                return v.clone();
            }
            ValueKind::Var(y.clone())
        }
        ValueKind::Def(d) => ValueKind::Def(d.clone()),
        ValueKind::Lam { param, sig, body } => ValueKind::Lam {
            param: param.clone(),
            sig: sig.clone(),
            body: if param == x {
                body.clone()
            } else {
                Box::new(subst_comp(body, x, v))
            },
        },
        ValueKind::Rec {
            fname,
            param,
            sig,
            body,
        } => ValueKind::Rec {
            fname: fname.clone(),
            param: param.clone(),
            sig: sig.clone(),
            body: if fname == x || param == x {
                body.clone()
            } else {
                Box::new(subst_comp(body, x, v))
            },
        },
        ValueKind::Const(c) => ValueKind::Const(c.clone()),
        ValueKind::Pair(a, b) => {
            ValueKind::Pair(Box::new(subst_value(a, x, v)), Box::new(subst_value(b, x, v)))
        }
        ValueKind::Handler {
            from,
            state_var,
            clauses,
            input,
            state_ty,
        } => ValueKind::Handler {
            from: from.clone(),
            state_var: state_var.clone(),
            clauses: clauses
                .iter()
                .map(|c| HandlerClause {
                    label: c.label.clone(),
                    binder: c.binder.clone(),
                    body: if c.binder == x || state_var == x {
                        c.body.clone()
                    } else {
                        subst_comp(&c.body, x, v)
                    },
                    span: c.span,
                })
                .collect(),
            input: input.clone(),
            state_ty: state_ty.clone(),
        },
        ValueKind::ApRef(n) => ValueKind::ApRef(*n),
        ValueKind::ActorRef(n) => ValueKind::ActorRef(*n),
    };
    Value { kind, span: w.span }
}

/// Whether a runtime actor name occurs anywhere in the value.
pub fn value_mentions_actor(v: &Value, actor: u32) -> bool {
    match &v.kind {
        ValueKind::ActorRef(n) => *n == actor,
        ValueKind::Var(_) | ValueKind::Def(_) | ValueKind::Const(_) | ValueKind::ApRef(_) => false,
        ValueKind::Pair(a, b) => value_mentions_actor(a, actor) || value_mentions_actor(b, actor),
        ValueKind::Lam { body, .. } | ValueKind::Rec { body, .. } => {
            comp_mentions_actor(body, actor)
        }
        ValueKind::Handler { clauses, .. } => clauses
            .iter()
            .any(|c| comp_mentions_actor(&c.body, actor)),
    }
}

pub fn comp_mentions_actor(m: &Computation, actor: u32) -> bool {
    match &m.kind {
        CompKind::Let { bound, body, .. } => {
            comp_mentions_actor(bound, actor) || comp_mentions_actor(body, actor)
        }
        CompKind::Return(v) => value_mentions_actor(v, actor),
        CompKind::App(a, b) | CompKind::BinOp(_, a, b) => {
            value_mentions_actor(a, actor) || value_mentions_actor(b, actor)
        }
        CompKind::If(c, t, e) => {
            value_mentions_actor(c, actor)
                || comp_mentions_actor(t, actor)
                || comp_mentions_actor(e, actor)
        }
        CompKind::LetPair { pair, body, .. } => {
            value_mentions_actor(pair, actor) || comp_mentions_actor(body, actor)
        }
        CompKind::Spawn { body, .. } => comp_mentions_actor(body, actor),
        CompKind::Send { payload, .. } => value_mentions_actor(payload, actor),
        CompKind::Suspend {
            handler,
            state,
            on_fail,
        } => {
            value_mentions_actor(handler, actor)
                || value_mentions_actor(state, actor)
                || on_fail
                    .as_ref()
                    .map_or(false, |w| value_mentions_actor(w, actor))
        }
        CompKind::NewAp(_) | CompKind::Raise => false,
        CompKind::Register { ap, callback, .. } => {
            value_mentions_actor(ap, actor) || value_mentions_actor(callback, actor)
        }
        CompKind::Monitor { pid, callback } => {
            value_mentions_actor(pid, actor) || value_mentions_actor(callback, actor)
        }
        CompKind::Leave(v) => value_mentions_actor(v, actor),
        CompKind::SuspendSend { func, state, .. } => {
            value_mentions_actor(func, actor) || value_mentions_actor(state, actor)
        }
        CompKind::Become { payload, .. } => value_mentions_actor(payload, actor),
    }
}
