//! From parsed source units to checked programs and initial
//! configurations.

use std::collections::HashSet;

use crate::metatheory::ascription_type;
use crate::parser::SourceUnit;
use crate::runtime::Configuration;
use crate::syntax::terms::{CompKind, Computation, HandlerClause, Value, ValueKind};
use crate::syntax::types::{unfold, SessionType};
use crate::syntax::types::PayloadType;
use crate::typecheck::{
    check_computation, check_value, Ctx, Eff, ErrorCode, Mode, TypeEnv, TypeError,
};

/// Rewrite free variables that name top-level definitions into definition
/// references, respecting shadowing.
pub fn resolve_defs(unit: &mut SourceUnit) {
    let names: HashSet<String> = unit.defs.iter().map(|(n, _)| n.clone()).collect();
    let defs: Vec<(String, Value)> = unit
        .defs
        .iter()
        .map(|(n, v)| {
            let mut bound = Vec::new();
            (n.clone(), resolve_value(v, &names, &mut bound))
        })
        .collect();
    unit.defs = defs;
    if let Some(main) = &unit.main {
        let mut bound = Vec::new();
        unit.main = Some(resolve_comp(main, &names, &mut bound));
    }
}

fn resolve_value(v: &Value, defs: &HashSet<String>, bound: &mut Vec<String>) -> Value {
    let kind = match &v.kind {
        ValueKind::Var(x) => {
            if defs.contains(x) && !bound.iter().any(|b| b == x) {
                ValueKind::Def(x.clone())
            } else {
                ValueKind::Var(x.clone())
            }
        }
        ValueKind::Def(d) => ValueKind::Def(d.clone()),
        ValueKind::Lam { param, sig, body } => {
            bound.push(param.clone());
            let body = resolve_comp(body, defs, bound);
            bound.pop();
            ValueKind::Lam {
                param: param.clone(),
                sig: sig.clone(),
                body: Box::new(body),
            }
        }
        ValueKind::Rec {
            fname,
            param,
            sig,
            body,
        } => {
            bound.push(fname.clone());
            bound.push(param.clone());
            let body = resolve_comp(body, defs, bound);
            bound.pop();
            bound.pop();
            ValueKind::Rec {
                fname: fname.clone(),
                param: param.clone(),
                sig: sig.clone(),
                body: Box::new(body),
            }
        }
        ValueKind::Const(c) => ValueKind::Const(c.clone()),
        ValueKind::Pair(a, b) => ValueKind::Pair(
            Box::new(resolve_value(a, defs, bound)),
            Box::new(resolve_value(b, defs, bound)),
        ),
        ValueKind::Handler {
            from,
            state_var,
            clauses,
            input,
            state_ty,
        } => {
            let clauses = clauses
                .iter()
                .map(|c| {
                    bound.push(state_var.clone());
                    bound.push(c.binder.clone());
                    let body = resolve_comp(&c.body, defs, bound);
                    bound.pop();
                    bound.pop();
                    HandlerClause {
                        label: c.label.clone(),
                        binder: c.binder.clone(),
                        body,
                        span: c.span,
                    }
                })
                .collect();
            ValueKind::Handler {
                from: from.clone(),
                state_var: state_var.clone(),
                clauses,
                input: input.clone(),
                state_ty: state_ty.clone(),
            }
        }
        ValueKind::ApRef(n) => ValueKind::ApRef(*n),
        ValueKind::ActorRef(n) => ValueKind::ActorRef(*n),
    };
    Value { kind, span: v.span }
}

fn resolve_comp(m: &Computation, defs: &HashSet<String>, bound: &mut Vec<String>) -> Computation {
    let kind = match &m.kind {
        CompKind::Let {
            binder,
            bound: b,
            body,
        } => {
            let b = resolve_comp(b, defs, bound);
            bound.push(binder.clone());
            let body = resolve_comp(body, defs, bound);
            bound.pop();
            CompKind::Let {
                binder: binder.clone(),
                bound: Box::new(b),
                body: Box::new(body),
            }
        }
        CompKind::Return(v) => CompKind::Return(resolve_value(v, defs, bound)),
        CompKind::App(f, a) => CompKind::App(
            resolve_value(f, defs, bound),
            resolve_value(a, defs, bound),
        ),
        CompKind::If(c, t, e) => CompKind::If(
            resolve_value(c, defs, bound),
            Box::new(resolve_comp(t, defs, bound)),
            Box::new(resolve_comp(e, defs, bound)),
        ),
        CompKind::LetPair {
            left,
            right,
            pair,
            body,
        } => {
            let pair = resolve_value(pair, defs, bound);
            bound.push(left.clone());
            bound.push(right.clone());
            let body = resolve_comp(body, defs, bound);
            bound.pop();
            bound.pop();
            CompKind::LetPair {
                left: left.clone(),
                right: right.clone(),
                pair,
                body: Box::new(body),
            }
        }
        CompKind::BinOp(op, a, b) => CompKind::BinOp(
            *op,
            resolve_value(a, defs, bound),
            resolve_value(b, defs, bound),
        ),
        CompKind::Spawn {
            body,
            state_ty,
            name_hint,
        } => CompKind::Spawn {
            body: Box::new(resolve_comp(body, defs, bound)),
            state_ty: state_ty.clone(),
            name_hint: name_hint.clone(),
        },
        CompKind::Send { to, label, payload } => CompKind::Send {
            to: to.clone(),
            label: label.clone(),
            payload: resolve_value(payload, defs, bound),
        },
        CompKind::Suspend {
            handler,
            state,
            on_fail,
        } => CompKind::Suspend {
            handler: resolve_value(handler, defs, bound),
            state: resolve_value(state, defs, bound),
            on_fail: on_fail.as_ref().map(|f| resolve_value(f, defs, bound)),
        },
        CompKind::NewAp(p) => CompKind::NewAp(p.clone()),
        CompKind::Register { ap, role, callback } => CompKind::Register {
            ap: resolve_value(ap, defs, bound),
            role: role.clone(),
            callback: resolve_value(callback, defs, bound),
        },
        CompKind::Raise => CompKind::Raise,
        CompKind::Monitor { pid, callback } => CompKind::Monitor {
            pid: resolve_value(pid, defs, bound),
            callback: resolve_value(callback, defs, bound),
        },
        CompKind::Leave(v) => CompKind::Leave(resolve_value(v, defs, bound)),
        CompKind::SuspendSend { name, func, state } => CompKind::SuspendSend {
            name: name.clone(),
            func: resolve_value(func, defs, bound),
            state: resolve_value(state, defs, bound),
        },
        CompKind::Become { name, payload } => CompKind::Become {
            name: name.clone(),
            payload: resolve_value(payload, defs, bound),
        },
    };
    Computation { kind, span: m.span }
}

/// Typecheck a whole program: the signature environment, every top-level
/// definition, and the main computation (at state type Unit, pre- and
/// postcondition `end`).
pub fn check_program(unit: &SourceUnit, mode: Mode, bound: usize) -> Result<(), Vec<TypeError>> {
    let mut errors = Vec::new();
    let mut ctx = Ctx::new(mode);
    ctx.bound = bound;
    ctx.sig = unit.sig.clone();
    for (name, value) in &unit.defs {
        match ascription_type(value) {
            Some(ty) => {
                ctx.defs.insert(name.clone(), ty);
            }
            None => errors.push(TypeError {
                code: ErrorCode::UnboundVar,
                span: value.span,
                expected: "an ascribed definition (fun, rec, handler, or constant)".into(),
                found: name.clone(),
            }),
        }
    }
    for (name, ty, _) in &unit.sig.entries {
        if !matches!(unfold(ty), SessionType::Select { .. }) {
            errors.push(TypeError {
                code: ErrorCode::NotASelection,
                span: Default::default(),
                expected: format!("an output session type for static session {name}"),
                found: crate::syntax::print::session_to_string(ty),
            });
        }
    }
    let env = TypeEnv::default();
    for (_, value) in &unit.defs {
        if let Err(e) = check_value(&ctx, &env, value) {
            errors.push(e);
        }
    }
    match &unit.main {
        Some(main) => {
            match check_computation(&ctx, &env, &PayloadType::UNIT, &SessionType::End, main) {
                Ok((_, post)) => {
                    if !matches!(&post, Eff::Bot)
                        && !matches!(&post, Eff::Ty(s) if s.is_end())
                    {
                        errors.push(TypeError {
                            code: ErrorCode::PrePostMismatch,
                            span: main.span,
                            expected: "main ending at end".into(),
                            found: "a dangling session".into(),
                        });
                    }
                }
                Err(e) => errors.push(e),
            }
        }
        None => {}
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Build the initial configuration for a checked program.
pub fn build_config(unit: &SourceUnit, mode: Mode) -> Configuration {
    let main = unit
        .main
        .clone()
        .unwrap_or_else(|| Computation::ret(Value::unit()));
    let mut config = Configuration::initial(main, mode);
    config.defs = unit.defs.iter().cloned().collect();
    config.sig = unit.sig.clone();
    config
}
