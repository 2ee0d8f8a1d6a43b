//! The flow-sensitive effect typechecker for values and computations,
//! including the failure-handling and session-switching rules.
//!
//! Checking is algorithmic: lambdas, recursive functions, and handlers
//! carry full type ascriptions, and the control-operator rules for
//! `suspend`/`raise` synthesize an absorbing bottom effect that is
//! eliminated at joins.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::compliance::{compliant, ComplianceVerdict};
use crate::syntax::print::{payload_to_string, session_to_string};
use crate::syntax::terms::{
    BinOp, CompKind, Computation, Const, FunSig, Span, Value, ValueKind,
};
use crate::syntax::types::{
    payload_equal, session_equal, unfold, PayloadType, Protocol, SessionType,
    SigEnv,
};
use crate::syntax::wf::well_formed_protocol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCode {
    UnboundVar,
    LabelNotInSelection,
    PayloadMismatch,
    NotASelection,
    NotABranch,
    HandlerRoleMismatch,
    StateTypeMismatch,
    PrePostMismatch,
    NonCompliantProtocol,
    RegisterRoleUnknown,
    BranchJoinMismatch,
    /// A construct outside the enabled language mode: lightning constructs
    /// in core mode, switching constructs without the switching extension,
    /// or an unknown static session name.
    UnsupportedConstruct,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code} at {span}: expected {expected}, found {found}")]
pub struct TypeError {
    pub code: ErrorCode,
    pub span: Span,
    pub expected: String,
    pub found: String,
}

impl TypeError {
    fn new(code: ErrorCode, span: Span, expected: impl Into<String>, found: impl Into<String>) -> Self {
        TypeError {
            code,
            span,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

/// Language mode: which extensions are enabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mode {
    pub zap: bool,
    pub switch: bool,
}

/// Effect position: a session type, or the absorbing bottom produced by
/// control operators (`suspend`, `raise`, send-suspension).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Eff {
    Ty(SessionType),
    Bot,
}

impl Eff {
    pub fn end() -> Eff {
        Eff::Ty(SessionType::End)
    }

    fn show(&self) -> String {
        match self {
            Eff::Ty(s) => session_to_string(s),
            Eff::Bot => "<bottom>".to_string(),
        }
    }

    /// Whether this effect satisfies a required postcondition.
    fn conforms(&self, required: &SessionType) -> bool {
        match self {
            Eff::Bot => true,
            Eff::Ty(s) => session_equal(s, required),
        }
    }
}

/// Unrestricted type environment with shadowing.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    bindings: Vec<(String, PayloadType)>,
}

impl TypeEnv {
    pub fn lookup(&self, x: &str) -> Option<&PayloadType> {
        self.bindings.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t)
    }

    pub fn bind(&self, x: impl Into<String>, t: PayloadType) -> TypeEnv {
        let mut next = self.clone();
        next.bindings.push((x.into(), t));
        next
    }
}

/// Checker context: top-level definition types, the signature environment
/// for static session names, runtime name tables (for configuration
/// typing), the language mode, and the compliance bound used by `newAP`.
pub struct Ctx {
    pub defs: HashMap<String, PayloadType>,
    pub sig: SigEnv,
    pub mode: Mode,
    pub bound: usize,
    /// Accept `Unknown` compliance verdicts at `newAP` instead of failing.
    pub allow_unknown: bool,
    /// Protocols of live access points, for typing runtime AP names.
    pub ap_protocols: HashMap<u32, Protocol>,
}

impl Ctx {
    pub fn new(mode: Mode) -> Ctx {
        Ctx {
            defs: HashMap::new(),
            sig: SigEnv::default(),
            mode,
            bound: 4,
            allow_unknown: false,
            ap_protocols: HashMap::new(),
        }
    }
}

/// Synthesize the type of a value.
pub fn check_value(ctx: &Ctx, env: &TypeEnv, v: &Value) -> Result<PayloadType, TypeError> {
    match &v.kind {
        ValueKind::Var(x) => env.lookup(x).cloned().ok_or_else(|| {
            TypeError::new(ErrorCode::UnboundVar, v.span, "a bound variable", x.clone())
        }),
        ValueKind::Def(d) => ctx.defs.get(d).cloned().ok_or_else(|| {
            TypeError::new(ErrorCode::UnboundVar, v.span, "a defined name", d.clone())
        }),
        ValueKind::Const(c) => Ok(match c {
            Const::Unit => PayloadType::UNIT,
            Const::Bool(_) => PayloadType::BOOL,
            Const::Int(_) => PayloadType::INT,
            Const::Str(_) => PayloadType::STR,
        }),
        ValueKind::Pair(a, b) => Ok(PayloadType::pair(
            check_value(ctx, env, a)?,
            check_value(ctx, env, b)?,
        )),
        ValueKind::Lam { param, sig, body } => {
            check_fun_body(ctx, env, sig, None, param, body, v.span)?;
            Ok(sig.to_type())
        }
        ValueKind::Rec {
            fname,
            param,
            sig,
            body,
        } => {
            check_fun_body(ctx, env, sig, Some(fname), param, body, v.span)?;
            Ok(sig.to_type())
        }
        ValueKind::Handler {
            from,
            state_var,
            clauses,
            input,
            state_ty,
        } => {
            let unfolded = unfold(input);
            let SessionType::Branch {
                from: declared_from,
                branches,
            } = &unfolded
            else {
                return Err(TypeError::new(
                    ErrorCode::NotABranch,
                    v.span,
                    "an input session type in the handler ascription",
                    session_to_string(input),
                ));
            };
            if declared_from != from {
                return Err(TypeError::new(
                    ErrorCode::HandlerRoleMismatch,
                    v.span,
                    format!("handler receiving from {declared_from}"),
                    format!("handler receiving from {from}"),
                ));
            }
            if clauses.len() != branches.len()
                || clauses.iter().any(|c| branches.get(&c.label).is_none())
            {
                let expected: Vec<String> =
                    branches.labels().map(|l| l.0.clone()).collect();
                let found: Vec<String> = clauses.iter().map(|c| c.label.0.clone()).collect();
                return Err(TypeError::new(
                    ErrorCode::LabelNotInSelection,
                    v.span,
                    format!("clauses for {{{}}}", expected.join(", ")),
                    format!("clauses for {{{}}}", found.join(", ")),
                ));
            }
            for clause in clauses {
                let arm = branches.get(&clause.label).unwrap();
                let clause_env = env
                    .bind(clause.binder.clone(), arm.payload.clone())
                    .bind(state_var.clone(), state_ty.clone());
                let (result, post) =
                    check_computation_eff(ctx, &clause_env, state_ty, &Eff::Ty(arm.cont.clone()), &clause.body)?;
                if !post.conforms(&SessionType::End) {
                    return Err(TypeError::new(
                        ErrorCode::PrePostMismatch,
                        clause.span,
                        "handler clause postcondition end",
                        post.show(),
                    ));
                }
                if !result_matches(&result, state_ty) {
                    return Err(TypeError::new(
                        ErrorCode::StateTypeMismatch,
                        clause.span,
                        payload_to_string(state_ty),
                        payload_to_string(&result),
                    ));
                }
            }
            Ok(PayloadType::handler(input.clone(), state_ty.clone()))
        }
        ValueKind::ApRef(n) => match ctx.ap_protocols.get(n) {
            Some(p) => Ok(PayloadType::AccessPoint(p.clone())),
            None => Err(TypeError::new(
                ErrorCode::UnboundVar,
                v.span,
                "a live access point",
                format!("ap{n}"),
            )),
        },
        ValueKind::ActorRef(_) => {
            if ctx.mode.zap {
                Ok(PayloadType::Pid)
            } else {
                Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    v.span,
                    "core mode has no first-class actor names",
                    "a pid value",
                ))
            }
        }
    }
}

fn check_fun_body(
    ctx: &Ctx,
    env: &TypeEnv,
    sig: &FunSig,
    fname: Option<&str>,
    param: &str,
    body: &Computation,
    span: Span,
) -> Result<(), TypeError> {
    let mut env = env.bind(param, sig.arg.clone());
    if let Some(f) = fname {
        env = env.bind(f, sig.to_type());
    }
    let (result, post) =
        check_computation_eff(ctx, &env, &sig.state, &Eff::Ty(sig.pre.clone()), body)?;
    if !result_matches(&result, &sig.result) {
        return Err(TypeError::new(
            ErrorCode::PayloadMismatch,
            span,
            payload_to_string(&sig.result),
            payload_to_string(&result),
        ));
    }
    if !post.conforms(&sig.post) {
        return Err(TypeError::new(
            ErrorCode::PrePostMismatch,
            span,
            session_to_string(&sig.post),
            post.show(),
        ));
    }
    Ok(())
}

/// Whether a synthesized result type satisfies a declared one; bottom is
/// below every type.
fn result_matches(found: &PayloadType, declared: &PayloadType) -> bool {
    matches!(found, PayloadType::Bottom) || payload_equal(found, declared)
}

fn join_payload(a: &PayloadType, b: &PayloadType) -> Option<PayloadType> {
    match (a, b) {
        (PayloadType::Bottom, other) | (other, PayloadType::Bottom) => Some(other.clone()),
        _ if payload_equal(a, b) => Some(a.clone()),
        _ => None,
    }
}

fn join_eff(a: &Eff, b: &Eff) -> Option<Eff> {
    match (a, b) {
        (Eff::Bot, other) | (other, Eff::Bot) => Some(other.clone()),
        (Eff::Ty(x), Eff::Ty(y)) if session_equal(x, y) => Some(a.clone()),
        _ => None,
    }
}

/// Check a computation with the given session precondition, synthesizing
/// its type and postcondition.
pub fn check_computation(
    ctx: &Ctx,
    env: &TypeEnv,
    state_ty: &PayloadType,
    pre: &SessionType,
    m: &Computation,
) -> Result<(PayloadType, Eff), TypeError> {
    check_computation_eff(ctx, env, state_ty, &Eff::Ty(pre.clone()), m)
}

fn check_computation_eff(
    ctx: &Ctx,
    env: &TypeEnv,
    state_ty: &PayloadType,
    pre: &Eff,
    m: &Computation,
) -> Result<(PayloadType, Eff), TypeError> {
    match &m.kind {
        CompKind::Return(v) => Ok((check_value(ctx, env, v)?, pre.clone())),
        CompKind::Let {
            binder,
            bound,
            body,
        } => {
            let (bound_ty, mid) = check_computation_eff(ctx, env, state_ty, pre, bound)?;
            let body_env = env.bind(binder.clone(), bound_ty);
            check_computation_eff(ctx, &body_env, state_ty, &mid, body)
        }
        CompKind::App(f, a) => {
            let f_ty = check_value(ctx, env, f)?;
            let PayloadType::Fun {
                arg,
                result,
                pre: f_pre,
                post: f_post,
                state,
            } = f_ty
            else {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "a function",
                    payload_to_string(&f_ty),
                ));
            };
            let a_ty = check_value(ctx, env, a)?;
            if !result_matches(&a_ty, &arg) {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    payload_to_string(&arg),
                    payload_to_string(&a_ty),
                ));
            }
            if !payload_equal(&state, state_ty) {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    payload_to_string(state_ty),
                    payload_to_string(&state),
                ));
            }
            if !pre_matches(pre, &f_pre) {
                return Err(TypeError::new(
                    ErrorCode::PrePostMismatch,
                    m.span,
                    session_to_string(&f_pre),
                    pre.show(),
                ));
            }
            let post = match pre {
                Eff::Bot => Eff::Bot,
                Eff::Ty(_) => Eff::Ty(f_post),
            };
            Ok((*result, post))
        }
        CompKind::If(cond, then_c, else_c) => {
            let cond_ty = check_value(ctx, env, cond)?;
            if !result_matches(&cond_ty, &PayloadType::BOOL) {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "Bool",
                    payload_to_string(&cond_ty),
                ));
            }
            let (t_ty, t_post) = check_computation_eff(ctx, env, state_ty, pre, then_c)?;
            let (e_ty, e_post) = check_computation_eff(ctx, env, state_ty, pre, else_c)?;
            let ty = join_payload(&t_ty, &e_ty).ok_or_else(|| {
                TypeError::new(
                    ErrorCode::BranchJoinMismatch,
                    m.span,
                    payload_to_string(&t_ty),
                    payload_to_string(&e_ty),
                )
            })?;
            let post = join_eff(&t_post, &e_post).ok_or_else(|| {
                TypeError::new(
                    ErrorCode::BranchJoinMismatch,
                    m.span,
                    t_post.show(),
                    e_post.show(),
                )
            })?;
            Ok((ty, post))
        }
        CompKind::LetPair {
            left,
            right,
            pair,
            body,
        } => {
            let pair_ty = check_value(ctx, env, pair)?;
            let PayloadType::Pair(a, b) = pair_ty else {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "a pair",
                    payload_to_string(&pair_ty),
                ));
            };
            let body_env = env.bind(left.clone(), *a).bind(right.clone(), *b);
            check_computation_eff(ctx, &body_env, state_ty, pre, body)
        }
        CompKind::BinOp(op, a, b) => {
            let a_ty = check_value(ctx, env, a)?;
            let b_ty = check_value(ctx, env, b)?;
            let (want, out) = match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul => (PayloadType::INT, PayloadType::INT),
                BinOp::Eq | BinOp::Lt | BinOp::Leq => (PayloadType::INT, PayloadType::BOOL),
                BinOp::And | BinOp::Or => (PayloadType::BOOL, PayloadType::BOOL),
                BinOp::Concat => (PayloadType::STR, PayloadType::STR),
            };
            for (side, ty) in [("left", &a_ty), ("right", &b_ty)] {
                if !result_matches(ty, &want) {
                    return Err(TypeError::new(
                        ErrorCode::PayloadMismatch,
                        m.span,
                        format!("{} on the {side} of {op}", payload_to_string(&want)),
                        payload_to_string(ty),
                    ));
                }
            }
            Ok((out, pre.clone()))
        }
        CompKind::Spawn { body, state_ty: spawned, .. } => {
            let (result, post) =
                check_computation_eff(ctx, env, spawned, &Eff::end(), body)?;
            if !result_matches(&result, spawned) {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    payload_to_string(spawned),
                    payload_to_string(&result),
                ));
            }
            if !post.conforms(&SessionType::End) {
                return Err(TypeError::new(
                    ErrorCode::PrePostMismatch,
                    m.span,
                    "end",
                    post.show(),
                ));
            }
            let ty = if ctx.mode.zap {
                PayloadType::Pid
            } else {
                PayloadType::UNIT
            };
            Ok((ty, pre.clone()))
        }
        CompKind::Send { to, label, payload } => {
            let payload_ty = check_value(ctx, env, payload)?;
            match pre {
                Eff::Bot => Ok((PayloadType::UNIT, Eff::Bot)),
                Eff::Ty(s) => {
                    let unfolded = unfold(s);
                    let SessionType::Select { to: declared, branches } = &unfolded else {
                        return Err(TypeError::new(
                            ErrorCode::NotASelection,
                            m.span,
                            format!("a selection towards {to}"),
                            session_to_string(s),
                        ));
                    };
                    if declared != to {
                        return Err(TypeError::new(
                            ErrorCode::NotASelection,
                            m.span,
                            format!("a selection towards {to}"),
                            session_to_string(s),
                        ));
                    }
                    let Some(arm) = branches.get(label) else {
                        let labels: Vec<String> = branches.labels().map(|l| l.0.clone()).collect();
                        return Err(TypeError::new(
                            ErrorCode::LabelNotInSelection,
                            m.span,
                            format!("one of {{{}}}", labels.join(", ")),
                            label.0.clone(),
                        ));
                    };
                    if !result_matches(&payload_ty, &arm.payload) {
                        return Err(TypeError::new(
                            ErrorCode::PayloadMismatch,
                            m.span,
                            payload_to_string(&arm.payload),
                            payload_to_string(&payload_ty),
                        ));
                    }
                    Ok((PayloadType::UNIT, Eff::Ty(arm.cont.clone())))
                }
            }
        }
        CompKind::Suspend {
            handler,
            state,
            on_fail,
        } => {
            if on_fail.is_some() && !ctx.mode.zap {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "core mode (failure callbacks need the failure extension)",
                    "suspend ... catch ...",
                ));
            }
            let handler_ty = check_value(ctx, env, handler)?;
            let PayloadType::Handler { input, state: h_state } = handler_ty else {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "a handler",
                    payload_to_string(&handler_ty),
                ));
            };
            match pre {
                Eff::Bot => {}
                Eff::Ty(s) => {
                    if !matches!(unfold(s), SessionType::Branch { .. }) {
                        return Err(TypeError::new(
                            ErrorCode::NotABranch,
                            m.span,
                            "an input session type before suspend",
                            session_to_string(s),
                        ));
                    }
                    if !session_equal(s, &input) {
                        return Err(TypeError::new(
                            ErrorCode::PrePostMismatch,
                            m.span,
                            session_to_string(s),
                            session_to_string(&input),
                        ));
                    }
                }
            }
            if !payload_equal(&h_state, state_ty) {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    payload_to_string(state_ty),
                    payload_to_string(&h_state),
                ));
            }
            let state_val_ty = check_value(ctx, env, state)?;
            if !result_matches(&state_val_ty, state_ty) {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    payload_to_string(state_ty),
                    payload_to_string(&state_val_ty),
                ));
            }
            if let Some(cb) = on_fail {
                check_failure_callback(ctx, env, state_ty, cb, m.span)?;
            }
            Ok((PayloadType::Bottom, Eff::Bot))
        }
        CompKind::NewAp(protocol) => {
            if let Err(e) = well_formed_protocol(protocol) {
                return Err(TypeError::new(
                    ErrorCode::NonCompliantProtocol,
                    m.span,
                    "a well-formed protocol",
                    e.to_string(),
                ));
            }
            match compliant(protocol, ctx.bound) {
                ComplianceVerdict::Compliant => {}
                ComplianceVerdict::Unknown if ctx.allow_unknown => {}
                verdict => {
                    return Err(TypeError::new(
                        ErrorCode::NonCompliantProtocol,
                        m.span,
                        "a compliant protocol",
                        verdict.to_string(),
                    ));
                }
            }
            Ok((PayloadType::AccessPoint(protocol.clone()), pre.clone()))
        }
        CompKind::Register { ap, role, callback } => {
            let ap_ty = check_value(ctx, env, ap)?;
            let PayloadType::AccessPoint(protocol) = ap_ty else {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "an access point",
                    payload_to_string(&ap_ty),
                ));
            };
            let Some(role_ty) = protocol.get(role) else {
                return Err(TypeError::new(
                    ErrorCode::RegisterRoleUnknown,
                    m.span,
                    format!(
                        "one of {{{}}}",
                        protocol
                            .roles()
                            .map(|r| r.0.clone())
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                    role.0.clone(),
                ));
            };
            let cb_ty = check_value(ctx, env, callback)?;
            let PayloadType::Fun {
                arg,
                result,
                pre: cb_pre,
                post: cb_post,
                state,
            } = cb_ty
            else {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "an initialisation callback",
                    payload_to_string(&cb_ty),
                ));
            };
            if !(payload_equal(&arg, state_ty)
                && payload_equal(&result, state_ty)
                && payload_equal(&state, state_ty))
            {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    format!(
                        "callback over actor state {}",
                        payload_to_string(state_ty)
                    ),
                    format!(
                        "callback {} -> {} with state {}",
                        payload_to_string(&arg),
                        payload_to_string(&result),
                        payload_to_string(&state)
                    ),
                ));
            }
            if !(session_equal(&cb_pre, role_ty) && session_equal(&cb_post, &SessionType::End)) {
                return Err(TypeError::new(
                    ErrorCode::PrePostMismatch,
                    m.span,
                    format!("callback from {} to end", session_to_string(role_ty)),
                    format!(
                        "callback from {} to {}",
                        session_to_string(&cb_pre),
                        session_to_string(&cb_post)
                    ),
                ));
            }
            Ok((PayloadType::UNIT, pre.clone()))
        }
        CompKind::Raise => {
            if !ctx.mode.zap {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "core mode (raise needs the failure extension)",
                    "raise",
                ));
            }
            Ok((PayloadType::Bottom, Eff::Bot))
        }
        CompKind::Monitor { pid, callback } => {
            if !ctx.mode.zap {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "core mode (monitor needs the failure extension)",
                    "monitor",
                ));
            }
            let pid_ty = check_value(ctx, env, pid)?;
            if !result_matches(&pid_ty, &PayloadType::Pid) {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    "Pid",
                    payload_to_string(&pid_ty),
                ));
            }
            check_failure_callback(ctx, env, state_ty, callback, m.span)?;
            Ok((PayloadType::UNIT, pre.clone()))
        }
        CompKind::Leave(v) => {
            if !ctx.mode.zap {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "core mode (leave needs the failure extension)",
                    "leave",
                ));
            }
            let v_ty = check_value(ctx, env, v)?;
            if !result_matches(&v_ty, state_ty) {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    payload_to_string(state_ty),
                    payload_to_string(&v_ty),
                ));
            }
            Ok((PayloadType::Bottom, Eff::Bot))
        }
        CompKind::SuspendSend { name, func, state } => {
            if !ctx.mode.switch {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "the switching extension",
                    "suspendSend",
                ));
            }
            let Some((sig_ty, sig_payload)) = ctx.sig.get(name) else {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "a declared static session name",
                    name.to_string(),
                ));
            };
            match pre {
                Eff::Bot => {}
                Eff::Ty(s) => {
                    if !session_equal(s, sig_ty) {
                        return Err(TypeError::new(
                            ErrorCode::PrePostMismatch,
                            m.span,
                            session_to_string(sig_ty),
                            session_to_string(s),
                        ));
                    }
                }
            }
            let func_ty = check_value(ctx, env, func)?;
            let want = PayloadType::fun(
                PayloadType::pair(sig_payload.clone(), state_ty.clone()),
                state_ty.clone(),
                sig_ty.clone(),
                SessionType::End,
                state_ty.clone(),
            );
            if !payload_equal(&func_ty, &want) {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    payload_to_string(&want),
                    payload_to_string(&func_ty),
                ));
            }
            let state_val_ty = check_value(ctx, env, state)?;
            if !result_matches(&state_val_ty, state_ty) {
                return Err(TypeError::new(
                    ErrorCode::StateTypeMismatch,
                    m.span,
                    payload_to_string(state_ty),
                    payload_to_string(&state_val_ty),
                ));
            }
            Ok((PayloadType::Bottom, Eff::Bot))
        }
        CompKind::Become { name, payload } => {
            if !ctx.mode.switch {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "the switching extension",
                    "become",
                ));
            }
            let Some((_, sig_payload)) = ctx.sig.get(name) else {
                return Err(TypeError::new(
                    ErrorCode::UnsupportedConstruct,
                    m.span,
                    "a declared static session name",
                    name.to_string(),
                ));
            };
            let payload_ty = check_value(ctx, env, payload)?;
            if !result_matches(&payload_ty, sig_payload) {
                return Err(TypeError::new(
                    ErrorCode::PayloadMismatch,
                    m.span,
                    payload_to_string(sig_payload),
                    payload_to_string(&payload_ty),
                ));
            }
            Ok((PayloadType::UNIT, pre.clone()))
        }
    }
}

fn pre_matches(pre: &Eff, required: &SessionType) -> bool {
    match pre {
        Eff::Bot => true,
        Eff::Ty(s) => session_equal(s, required),
    }
}

/// Failure callbacks run outside any session: `C ->{end; end; C} C`.
fn check_failure_callback(
    ctx: &Ctx,
    env: &TypeEnv,
    state_ty: &PayloadType,
    cb: &Value,
    span: Span,
) -> Result<(), TypeError> {
    let cb_ty = check_value(ctx, env, cb)?;
    let want = PayloadType::fun(
        state_ty.clone(),
        state_ty.clone(),
        SessionType::End,
        SessionType::End,
        state_ty.clone(),
    );
    if !payload_equal(&cb_ty, &want) {
        return Err(TypeError::new(
            ErrorCode::PayloadMismatch,
            span,
            payload_to_string(&want),
            payload_to_string(&cb_ty),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::types::{Label, Role};

    fn client() -> Role {
        Role::new("Client")
    }

    /// The ID server's local type from the worked example: offers
    /// IDRequest / LockRequest / Quit.
    fn server_ty() -> SessionType {
        let reply_loop = |lock: bool| {
            let cont = if lock {
                SessionType::branch(
                    client(),
                    vec![(Label::new("Unlock"), PayloadType::UNIT, SessionType::var("ST"))],
                )
            } else {
                SessionType::var("ST")
            };
            SessionType::select(
                client(),
                vec![
                    (
                        Label::new(if lock { "Locked" } else { "IDResponse" }),
                        if lock { PayloadType::UNIT } else { PayloadType::INT },
                        cont,
                    ),
                    (Label::new("Unavailable"), PayloadType::UNIT, SessionType::var("ST")),
                ],
            )
        };
        SessionType::rec(
            "ST",
            SessionType::branch(
                client(),
                vec![
                    (Label::new("IDRequest"), PayloadType::UNIT, reply_loop(false)),
                    (Label::new("LockRequest"), PayloadType::UNIT, reply_loop(true)),
                    (Label::new("Quit"), PayloadType::UNIT, SessionType::End),
                ],
            ),
        )
    }

    fn ctx() -> Ctx {
        Ctx::new(Mode::default())
    }

    #[test]
    fn const_types_as_base() {
        let t = check_value(&ctx(), &TypeEnv::default(), &Value::unit()).unwrap();
        assert_eq!(t, PayloadType::UNIT);
    }

    #[test]
    fn return_leaves_session_unchanged() {
        let s = server_ty();
        let (ty, post) = check_computation(
            &ctx(),
            &TypeEnv::default(),
            &PayloadType::UNIT,
            &s,
            &Computation::ret(Value::int(5)),
        )
        .unwrap();
        assert_eq!(ty, PayloadType::INT);
        assert!(post.conforms(&s));
    }

    #[test]
    fn send_advances_to_continuation() {
        // Precondition Client!{IDResponse(Int). ServerTy, Unavailable(). ServerTy}
        let pre = SessionType::select(
            client(),
            vec![
                (Label::new("IDResponse"), PayloadType::INT, server_ty()),
                (Label::new("Unavailable"), PayloadType::UNIT, server_ty()),
            ],
        );
        let env = TypeEnv::default().bind("curID", PayloadType::INT);
        let state = PayloadType::pair(PayloadType::INT, PayloadType::BOOL);
        let (ty, post) = check_computation(
            &ctx(),
            &env,
            &state,
            &pre,
            &Computation::send(client(), Label::new("IDResponse"), Value::var("curID")),
        )
        .unwrap();
        assert_eq!(ty, PayloadType::UNIT);
        assert!(post.conforms(&server_ty()));
    }

    #[test]
    fn send_label_not_in_selection() {
        let pre = SessionType::select(
            client(),
            vec![(Label::new("IDResponse"), PayloadType::INT, SessionType::End)],
        );
        let err = check_computation(
            &ctx(),
            &TypeEnv::default(),
            &PayloadType::UNIT,
            &pre,
            &Computation::send(client(), Label::new("Quit"), Value::unit()),
        )
        .unwrap_err();
        assert_eq!(err.code, ErrorCode::LabelNotInSelection);
    }

    #[test]
    fn if_joins_suspend_with_return() {
        // One branch suspends, the other returns the state: joins via
        // bottom even though the branch postconditions differ.
        let state = PayloadType::INT;
        let input = SessionType::branch(
            client(),
            vec![(Label::new("Go"), PayloadType::UNIT, SessionType::End)],
        );
        let handler = Value::new(ValueKind::Handler {
            from: client(),
            state_var: "st".into(),
            clauses: vec![crate::syntax::terms::HandlerClause {
                label: Label::new("Go"),
                binder: "x".into(),
                body: Computation::ret(Value::var("st")),
                span: Span::default(),
            }],
            input: input.clone(),
            state_ty: state.clone(),
        });
        let m = Computation::new(CompKind::If(
            Value::bool(true),
            Box::new(Computation::new(CompKind::Suspend {
                handler,
                state: Value::int(1),
                on_fail: None,
            })),
            Box::new(Computation::ret(Value::int(2))),
        ));
        let (ty, post) = check_computation(&ctx(), &TypeEnv::default(), &state, &input, &m).unwrap();
        assert_eq!(ty, PayloadType::INT);
        assert!(matches!(post, Eff::Ty(ref s) if session_equal(s, &input)));
    }

    #[test]
    fn handler_clause_must_end() {
        // A clause body that leaves the session mid-flight without
        // suspending is a pre/post mismatch.
        let input = SessionType::branch(
            client(),
            vec![(
                Label::new("Go"),
                PayloadType::UNIT,
                SessionType::select(
                    client(),
                    vec![(Label::new("Done"), PayloadType::UNIT, SessionType::End)],
                ),
            )],
        );
        let handler = Value::new(ValueKind::Handler {
            from: client(),
            state_var: "st".into(),
            clauses: vec![crate::syntax::terms::HandlerClause {
                label: Label::new("Go"),
                binder: "x".into(),
                body: Computation::ret(Value::var("st")),
                span: Span::default(),
            }],
            input,
            state_ty: PayloadType::UNIT,
        });
        let err = check_value(&ctx(), &TypeEnv::default(), &handler).unwrap_err();
        assert_eq!(err.code, ErrorCode::PrePostMismatch);
    }

    #[test]
    fn raise_needs_zap_mode() {
        let err = check_computation(
            &ctx(),
            &TypeEnv::default(),
            &PayloadType::UNIT,
            &SessionType::End,
            &Computation::new(CompKind::Raise),
        )
        .unwrap_err();
        assert_eq!(err.code, ErrorCode::UnsupportedConstruct);
        let mut zap_ctx = Ctx::new(Mode { zap: true, switch: false });
        zap_ctx.bound = 4;
        let (ty, post) = check_computation(
            &zap_ctx,
            &TypeEnv::default(),
            &PayloadType::UNIT,
            &SessionType::End,
            &Computation::new(CompKind::Raise),
        )
        .unwrap();
        assert_eq!(ty, PayloadType::Bottom);
        assert_eq!(post, Eff::Bot);
    }

    #[test]
    fn unfolding_transparency() {
        let rec_pre = SessionType::rec(
            "X",
            SessionType::select(
                client(),
                vec![(Label::new("l"), PayloadType::UNIT, SessionType::var("X"))],
            ),
        );
        let unfolded = unfold(&rec_pre);
        let m = Computation::send(client(), Label::new("l"), Value::unit());
        let (_, post1) =
            check_computation(&ctx(), &TypeEnv::default(), &PayloadType::UNIT, &rec_pre, &m)
                .unwrap();
        let (_, post2) =
            check_computation(&ctx(), &TypeEnv::default(), &PayloadType::UNIT, &unfolded, &m)
                .unwrap();
        match (post1, post2) {
            (Eff::Ty(a), Eff::Ty(b)) => assert!(session_equal(&a, &b)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
