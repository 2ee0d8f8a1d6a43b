//! Pretty-printers for types. Local types print in the `p!{ l(A). S }`
//! notation; global types print in the Scribble-like protocol notation.

use std::fmt::Write;

use super::types::{GlobalType, PayloadType, Protocol, Role, SessionType};

pub fn session_to_string(s: &SessionType) -> String {
    let mut out = String::new();
    write_session(&mut out, s);
    out
}

fn write_session(out: &mut String, s: &SessionType) {
    match s {
        SessionType::Select { to, branches } => {
            write!(out, "{to}!{{").unwrap();
            write_arms(out, branches);
            out.push('}');
        }
        SessionType::Branch { from, branches } => {
            write!(out, "{from}?{{").unwrap();
            write_arms(out, branches);
            out.push('}');
        }
        SessionType::Rec(x, body) => {
            write!(out, "rec {x}. ").unwrap();
            write_session(out, body);
        }
        SessionType::Var(x) => out.push_str(x),
        SessionType::End => out.push_str("end"),
    }
}

fn write_arms(out: &mut String, branches: &super::types::Branches<SessionType>) {
    let mut first = true;
    for (label, arm) in branches.iter() {
        if !first {
            out.push_str(", ");
        }
        first = false;
        write!(out, "{label}(").unwrap();
        if arm.payload != PayloadType::UNIT {
            write_payload(out, &arm.payload);
        }
        out.push_str("). ");
        write_session(out, &arm.cont);
    }
}

pub fn payload_to_string(t: &PayloadType) -> String {
    let mut out = String::new();
    write_payload(&mut out, t);
    out
}

fn write_payload(out: &mut String, t: &PayloadType) {
    match t {
        PayloadType::Base(b) => write!(out, "{b}").unwrap(),
        PayloadType::Pair(a, b) => {
            out.push('(');
            write_payload(out, a);
            out.push_str(" * ");
            write_payload(out, b);
            out.push(')');
        }
        PayloadType::Fun {
            arg,
            result,
            pre,
            post,
            state,
        } => {
            out.push('(');
            write_payload(out, arg);
            out.push_str(" ->{");
            write_session(out, pre);
            out.push_str("; ");
            write_session(out, post);
            out.push_str("; ");
            write_payload(out, state);
            out.push_str("} ");
            write_payload(out, result);
            out.push(')');
        }
        PayloadType::AccessPoint(p) => {
            out.push_str("AP{");
            let mut first = true;
            for (role, ty) in p.iter() {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                write!(out, "{role}: ").unwrap();
                write_session(out, ty);
            }
            out.push('}');
        }
        PayloadType::Handler { input, state } => {
            out.push_str("Handler(");
            write_session(out, input);
            out.push_str(", ");
            write_payload(out, state);
            out.push(')');
        }
        PayloadType::Pid => out.push_str("Pid"),
        PayloadType::Bottom => out.push_str("<bottom>"),
    }
}

pub fn protocol_to_string(p: &Protocol) -> String {
    let mut out = String::from("{\n");
    for (role, ty) in p.iter() {
        out.push_str("  ");
        out.push_str(role.name());
        out.push_str(": ");
        write_session(&mut out, ty);
        out.push_str(",\n");
    }
    out.push('}');
    out
}

/// Print a global type as a Scribble-like protocol body. Recursion prints
/// as `rec X { ... }` / `continue X;`.
pub fn global_to_scribble(name: &str, roles: &[Role], g: &GlobalType) -> String {
    let mut out = String::new();
    write!(out, "global protocol {name}(").unwrap();
    let mut first = true;
    for r in roles {
        if !first {
            out.push_str(", ");
        }
        first = false;
        write!(out, "role {r}").unwrap();
    }
    out.push_str(") {\n");
    write_global_body(&mut out, g, 1);
    out.push_str("}\n");
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_global_body(out: &mut String, g: &GlobalType, depth: usize) {
    match g {
        GlobalType::End => {}
        GlobalType::Var(x) => {
            indent(out, depth);
            writeln!(out, "continue {x};").unwrap();
        }
        GlobalType::Rec(x, body) => {
            indent(out, depth);
            writeln!(out, "rec {x} {{").unwrap();
            write_global_body(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        GlobalType::Msg { from, to, branches } => {
            if branches.len() == 1 {
                let (label, arm) = branches.iter().next().unwrap();
                indent(out, depth);
                write!(out, "{label}(").unwrap();
                if arm.payload != PayloadType::UNIT {
                    write_payload(out, &arm.payload);
                }
                writeln!(out, ") from {from} to {to};").unwrap();
                write_global_body(out, &arm.cont, depth);
            } else {
                indent(out, depth);
                write!(out, "choice at {from} ").unwrap();
                let mut first = true;
                for (label, arm) in branches.iter() {
                    if !first {
                        indent(out, depth);
                        out.push_str("or ");
                    }
                    first = false;
                    out.push_str("{\n");
                    indent(out, depth + 1);
                    write!(out, "{label}(").unwrap();
                    if arm.payload != PayloadType::UNIT {
                        write_payload(out, &arm.payload);
                    }
                    writeln!(out, ") from {from} to {to};").unwrap();
                    write_global_body(out, &arm.cont, depth + 1);
                    indent(out, depth);
                    out.push_str("} ");
                }
                out.push('\n');
            }
        }
    }
}
