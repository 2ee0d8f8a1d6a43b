//! Parsers for the three surface syntaxes: local-type text, Scribble-like
//! global protocol files (`.scr`), and program files (`.maty`).

pub mod lexer;

use std::collections::HashMap;

use crate::projection::project_all;
use crate::syntax::terms::{
    BinOp, CompKind, Computation, FunSig, HandlerClause, Span, Value, ValueKind,
};
use crate::syntax::types::{
    BaseType, GlobalType, Label, PayloadType, Protocol, Role, SessionType, SigEnv, StaticName,

};
use crate::syntax::wf::{well_formed_global, well_formed_protocol, well_formed_session};

pub use lexer::ParseError;
use lexer::{lex, Tok};

/// Payload sort registry: named sorts in protocol files resolve to the
/// fixed base-type set.
fn base_sort(name: &str) -> Option<BaseType> {
    match name {
        "Unit" => Some(BaseType::Unit),
        "Bool" => Some(BaseType::Bool),
        "Int" | "ItemID" | "Price" | "Quantity" | "Port" | "PartNum" | "DeliveryDate" => {
            Some(BaseType::Int)
        }
        "String" | "ItemName" | "Description" | "PaymentDetails" | "RoomName" | "StringList" => {
            Some(BaseType::Str)
        }
        _ => None,
    }
}

/// A named global protocol together with its declared role order.
#[derive(Debug, Clone)]
pub struct NamedGlobal {
    pub name: String,
    pub roles: Vec<Role>,
    pub global: GlobalType,
}

/// A parsed program file: protocol declarations, the signature environment
/// for static session names, top-level definitions, and the main
/// computation.
#[derive(Debug, Clone, Default)]
pub struct SourceUnit {
    pub globals: Vec<NamedGlobal>,
    pub protocols: Vec<(String, Protocol)>,
    pub sig: SigEnv,
    pub defs: Vec<(String, Value)>,
    pub main: Option<Computation>,
}

impl SourceUnit {
    /// Look up a protocol by name: explicit protocol declarations first,
    /// then projections of global declarations.
    pub fn protocol(&self, name: &str) -> Option<Protocol> {
        if let Some((_, p)) = self.protocols.iter().find(|(n, _)| n == name) {
            return Some(p.clone());
        }
        let g = self.globals.iter().find(|g| g.name == name)?;
        project_all(&g.global, &g.roles).ok()
    }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    /// Local-type abbreviations from `type` declarations.
    type_aliases: HashMap<String, SessionType>,
    /// Protocols visible to `newAP(Name)` and `AP(Name)`.
    protocol_table: HashMap<String, Protocol>,
    /// Raw global bodies pending `do` resolution.
    raw_globals: Vec<(String, Vec<Role>, RawGlobal)>,
}

/// Global-type body before recursion resolution.
#[derive(Debug, Clone)]
enum RawGlobal {
    Msg {
        from: Role,
        to: Role,
        branches: Vec<(Label, PayloadType, RawGlobal)>,
    },
    Choice {
        at: Role,
        branches: Vec<RawGlobal>,
    },
    Do {
        name: String,
        args: Vec<Role>,
        span: Span,
    },
    Rec {
        var: String,
        body: Box<RawGlobal>,
    },
    Continue {
        var: String,
    },
    End,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            type_aliases: HashMap::new(),
            protocol_table: HashMap::new(),
            raw_globals: Vec::new(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _)| t)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|(_, s)| *s)
            .unwrap_or_else(|| {
                self.toks
                    .last()
                    .map(|(_, s)| *s)
                    .unwrap_or_default()
            })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(msg, self.span())
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(ParseError::new(
                format!("expected {tok}, found {t}"),
                self.toks[self.pos - 1].1,
            )),
            None => Err(self.err(format!("expected {tok}, found end of input"))),
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            Some(t) => Err(ParseError::new(
                format!("expected identifier, found {t}"),
                self.toks[self.pos - 1].1,
            )),
            None => Err(self.err("expected identifier, found end of input")),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected keyword {kw:?}")))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    // ---- session and payload types -------------------------------------

    fn parse_session(&mut self) -> Result<SessionType, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "end" => {
                self.next();
                Ok(SessionType::End)
            }
            Some(Tok::Ident(s)) if s == "rec" => {
                self.next();
                let var = self.expect_ident()?;
                self.expect(Tok::Dot)?;
                let body = self.parse_session()?;
                Ok(SessionType::rec(var, body))
            }
            Some(Tok::Ident(_)) => {
                let name = self.expect_ident()?;
                match self.peek() {
                    Some(Tok::Bang) => {
                        self.next();
                        let arms = self.parse_type_arms()?;
                        Ok(SessionType::select(Role::new(name), arms))
                    }
                    Some(Tok::Query) => {
                        self.next();
                        let arms = self.parse_type_arms()?;
                        Ok(SessionType::branch(Role::new(name), arms))
                    }
                    _ => {
                        if let Some(alias) = self.type_aliases.get(&name) {
                            Ok(alias.clone())
                        } else {
                            // A bare identifier is a recursion variable.
                            Ok(SessionType::var(name))
                        }
                    }
                }
            }
            _ => Err(self.err("expected a session type")),
        }
    }

    fn parse_type_arms(
        &mut self,
    ) -> Result<Vec<(Label, PayloadType, SessionType)>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut arms = Vec::new();
        loop {
            let label = self.expect_ident()?;
            self.expect(Tok::LParen)?;
            let payload = if matches!(self.peek(), Some(Tok::RParen)) {
                PayloadType::UNIT
            } else {
                self.parse_payload()?
            };
            self.expect(Tok::RParen)?;
            self.expect(Tok::Dot)?;
            let cont = self.parse_session()?;
            arms.push((Label::new(label), payload, cont));
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBrace) => break,
                _ => return Err(self.err("expected ',' or '}' in branch list")),
            }
        }
        Ok(arms)
    }

    fn parse_payload(&mut self) -> Result<PayloadType, ParseError> {
        let first = self.parse_payload_atom()?;
        match self.peek() {
            Some(Tok::Star) => {
                self.next();
                let rest = self.parse_payload()?;
                Ok(PayloadType::pair(first, rest))
            }
            Some(Tok::Arrow) => {
                self.next();
                self.expect(Tok::LBrace)?;
                let pre = self.parse_session()?;
                self.expect(Tok::Semi)?;
                let post = self.parse_session()?;
                self.expect(Tok::Semi)?;
                let state = self.parse_payload()?;
                self.expect(Tok::RBrace)?;
                let result = self.parse_payload()?;
                Ok(PayloadType::fun(first, result, pre, post, state))
            }
            _ => Ok(first),
        }
    }

    fn parse_payload_atom(&mut self) -> Result<PayloadType, ParseError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.next();
                let t = self.parse_payload()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Some(Tok::Ident(s)) if s == "Pid" => {
                self.next();
                Ok(PayloadType::Pid)
            }
            Some(Tok::Ident(s)) if s == "Handler" => {
                self.next();
                self.expect(Tok::LParen)?;
                let input = self.parse_session()?;
                self.expect(Tok::Comma)?;
                let state = self.parse_payload()?;
                self.expect(Tok::RParen)?;
                Ok(PayloadType::handler(input, state))
            }
            Some(Tok::Ident(s)) if s == "AP" => {
                self.next();
                self.expect(Tok::LParen)?;
                let name = self.expect_ident()?;
                self.expect(Tok::RParen)?;
                let p = self
                    .protocol_table
                    .get(&name)
                    .cloned()
                    .ok_or_else(|| self.err(format!("unknown protocol {name}")))?;
                Ok(PayloadType::AccessPoint(p))
            }
            Some(Tok::Ident(_)) => {
                let name = self.expect_ident()?;
                base_sort(&name)
                    .map(PayloadType::Base)
                    .ok_or_else(|| self.err(format!("unknown payload sort {name}")))
            }
            _ => Err(self.err("expected a payload type")),
        }
    }

    // ---- global protocols (.scr) ----------------------------------------

    fn parse_global_decl(&mut self) -> Result<(), ParseError> {
        self.expect_keyword("global")?;
        self.expect_keyword("protocol")?;
        let name = self.expect_ident()?;
        self.expect(Tok::LParen)?;
        let mut roles = Vec::new();
        loop {
            self.expect_keyword("role")?;
            roles.push(Role::new(self.expect_ident()?));
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => break,
                _ => return Err(self.err("expected ',' or ')' in role list")),
            }
        }
        self.expect(Tok::LBrace)?;
        let body = self.parse_global_body()?;
        self.expect(Tok::RBrace)?;
        self.raw_globals.push((name, roles, body));
        Ok(())
    }

    fn parse_global_body(&mut self) -> Result<RawGlobal, ParseError> {
        if matches!(self.peek(), Some(Tok::RBrace) | None) {
            return Ok(RawGlobal::End);
        }
        let span = self.span();
        let item = self.parse_global_item()?;
        let rest = self.parse_global_body()?;
        graft_global(item, rest, span)
    }

    fn parse_global_item(&mut self) -> Result<RawGlobal, ParseError> {
        if self.at_keyword("choice") {
            self.next();
            self.expect_keyword("at")?;
            let at = Role::new(self.expect_ident()?);
            let mut branches = Vec::new();
            self.expect(Tok::LBrace)?;
            branches.push(self.parse_global_body()?);
            self.expect(Tok::RBrace)?;
            while self.at_keyword("or") {
                self.next();
                self.expect(Tok::LBrace)?;
                branches.push(self.parse_global_body()?);
                self.expect(Tok::RBrace)?;
            }
            return Ok(RawGlobal::Choice { at, branches });
        }
        if self.at_keyword("rec") {
            self.next();
            let var = self.expect_ident()?;
            self.expect(Tok::LBrace)?;
            let body = self.parse_global_body()?;
            self.expect(Tok::RBrace)?;
            return Ok(RawGlobal::Rec {
                var,
                body: Box::new(body),
            });
        }
        if self.at_keyword("continue") {
            self.next();
            let var = self.expect_ident()?;
            self.expect(Tok::Semi)?;
            return Ok(RawGlobal::Continue { var });
        }
        if self.at_keyword("do") {
            self.next();
            let span = self.span();
            let name = self.expect_ident()?;
            self.expect(Tok::LParen)?;
            let mut args = Vec::new();
            loop {
                args.push(Role::new(self.expect_ident()?));
                match self.next() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => return Err(self.err("expected ',' or ')' in do-arguments")),
                }
            }
            self.expect(Tok::Semi)?;
            return Ok(RawGlobal::Do { name, args, span });
        }
        // A message interaction: Label(sorts) from A to B;
        let label = self.expect_ident()?;
        self.expect(Tok::LParen)?;
        let mut sorts = Vec::new();
        if !matches!(self.peek(), Some(Tok::RParen)) {
            loop {
                sorts.push(self.parse_payload()?);
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.next();
                    }
                    _ => break,
                }
            }
        }
        self.expect(Tok::RParen)?;
        self.expect_keyword("from")?;
        let from = Role::new(self.expect_ident()?);
        self.expect_keyword("to")?;
        let to = Role::new(self.expect_ident()?);
        self.expect(Tok::Semi)?;
        let payload = sorts_to_payload(sorts);
        Ok(RawGlobal::Msg {
            from,
            to,
            branches: vec![(Label::new(label), payload, RawGlobal::End)],
        })
    }

    /// Resolve `do` references, encoding self-recursion as a single
    /// recursive binder named after the protocol and inlining references to
    /// other protocols (mutual recursion between protocols is not
    /// supported).
    fn resolve_globals(&self) -> Result<Vec<NamedGlobal>, ParseError> {
        let mut out = Vec::new();
        for (name, roles, raw) in &self.raw_globals {
            let mut uses_self = false;
            let mut stack = vec![name.clone()];
            let g = self.resolve_global(raw, name, roles, &mut uses_self, &mut stack)?;
            let global = if uses_self {
                GlobalType::Rec(name.clone(), Box::new(g))
            } else {
                g
            };
            well_formed_global(&global).map_err(|e| {
                ParseError::new(format!("protocol {name}: {e}"), Span::default())
            })?;
            out.push(NamedGlobal {
                name: name.clone(),
                roles: roles.clone(),
                global,
            });
        }
        Ok(out)
    }

    fn resolve_global(
        &self,
        raw: &RawGlobal,
        root: &str,
        root_roles: &[Role],
        uses_self: &mut bool,
        stack: &mut Vec<String>,
    ) -> Result<GlobalType, ParseError> {
        match raw {
            RawGlobal::End => Ok(GlobalType::End),
            RawGlobal::Continue { var } => Ok(GlobalType::Var(var.clone())),
            RawGlobal::Rec { var, body } => Ok(GlobalType::Rec(
                var.clone(),
                Box::new(self.resolve_global(body, root, root_roles, uses_self, stack)?),
            )),
            RawGlobal::Msg { from, to, branches } => {
                let mut arms = Vec::new();
                for (label, payload, cont) in branches {
                    arms.push((
                        label.clone(),
                        payload.clone(),
                        self.resolve_global(cont, root, root_roles, uses_self, stack)?,
                    ));
                }
                Ok(GlobalType::msg(from.clone(), to.clone(), arms))
            }
            RawGlobal::Choice { at, branches } => {
                // Each branch must begin with a message from the chooser to
                // a common receiver; the choice becomes one directed
                // message node.
                let mut to: Option<Role> = None;
                let mut arms = Vec::new();
                for branch in branches {
                    let RawGlobal::Msg { from, to: bto, branches: inner } = branch else {
                        return Err(ParseError::new(
                            format!("a branch of a choice at {at} does not start with a message from {at}"),
                            Span::default(),
                        ));
                    };
                    if from != at {
                        return Err(ParseError::new(
                            format!("choice at {at} has a branch starting with a message from {from}"),
                            Span::default(),
                        ));
                    }
                    match &to {
                        None => to = Some(bto.clone()),
                        Some(t) if t == bto => {}
                        Some(t) => {
                            return Err(ParseError::new(
                                format!("choice at {at} mixes receivers {t} and {bto}"),
                                Span::default(),
                            ))
                        }
                    }
                    for (label, payload, cont) in inner {
                        arms.push((
                            label.clone(),
                            payload.clone(),
                            self.resolve_global(cont, root, root_roles, uses_self, stack)?,
                        ));
                    }
                }
                Ok(GlobalType::msg(at.clone(), to.unwrap(), arms))
            }
            RawGlobal::Do { name, args, span } => {
                if name == root {
                    if args != root_roles {
                        return Err(ParseError::new(
                            format!("do {name}(...) must repeat the declared roles in order"),
                            *span,
                        ));
                    }
                    *uses_self = true;
                    return Ok(GlobalType::Var(root.to_string()));
                }
                if stack.contains(name) {
                    return Err(ParseError::new(
                        format!("mutually recursive protocols are not supported ({name})"),
                        *span,
                    ));
                }
                let Some((_, params, body)) =
                    self.raw_globals.iter().find(|(n, _, _)| n == name)
                else {
                    return Err(ParseError::new(format!("unknown protocol {name}"), *span));
                };
                if params.len() != args.len() {
                    return Err(ParseError::new(
                        format!("do {name}(...) passes {} roles, expected {}", args.len(), params.len()),
                        *span,
                    ));
                }
                stack.push(name.clone());
                let mut inner_uses_self = false;
                let resolved =
                    self.resolve_global(body, name, params, &mut inner_uses_self, stack)?;
                stack.pop();
                let resolved = if inner_uses_self {
                    GlobalType::Rec(name.clone(), Box::new(resolved))
                } else {
                    resolved
                };
                Ok(rename_global_roles(&resolved, params, args))
            }
        }
    }

    // ---- programs (.maty) ------------------------------------------------

    fn parse_unit(&mut self) -> Result<SourceUnit, ParseError> {
        let mut unit = SourceUnit::default();
        while self.peek().is_some() {
            if self.at_keyword("global") {
                self.parse_global_decl()?;
                // Resolve incrementally so later declarations can project.
                let resolved = self.resolve_globals()?;
                for g in &resolved {
                    if let Ok(p) = project_all(&g.global, &g.roles) {
                        self.protocol_table.insert(g.name.clone(), p);
                    }
                }
                unit.globals = resolved;
            } else if self.at_keyword("protocol") {
                self.next();
                let name = self.expect_ident()?;
                self.expect(Tok::Eq)?;
                self.expect(Tok::LBrace)?;
                let mut entries = Vec::new();
                loop {
                    let role = self.expect_ident()?;
                    self.expect(Tok::Colon)?;
                    let ty = self.parse_session()?;
                    entries.push((Role::new(role), ty));
                    match self.next() {
                        Some(Tok::Comma) => {
                            if matches!(self.peek(), Some(Tok::RBrace)) {
                                self.next();
                                break;
                            }
                        }
                        Some(Tok::RBrace) => break,
                        _ => return Err(self.err("expected ',' or '}' in protocol")),
                    }
                }
                let protocol = Protocol::new(entries);
                well_formed_protocol(&protocol).map_err(|e| {
                    ParseError::new(format!("protocol {name}: {e}"), Span::default())
                })?;
                self.protocol_table.insert(name.clone(), protocol.clone());
                unit.protocols.push((name, protocol));
            } else if self.at_keyword("type") {
                self.next();
                let name = self.expect_ident()?;
                self.expect(Tok::Eq)?;
                let ty = self.parse_session()?;
                well_formed_session(&ty).map_err(|e| {
                    ParseError::new(format!("type {name}: {e}"), Span::default())
                })?;
                self.type_aliases.insert(name, ty);
            } else if self.at_keyword("session") {
                self.next();
                let name = self.expect_ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.parse_session()?;
                self.expect_keyword("carrying")?;
                let payload = self.parse_payload()?;
                unit.sig
                    .entries
                    .push((StaticName(name), ty, payload));
            } else if self.at_keyword("def") {
                self.next();
                let name = self.expect_ident()?;
                self.expect(Tok::Eq)?;
                let value = self.parse_value()?;
                unit.defs.push((name, value));
            } else if self.at_keyword("main") {
                self.next();
                self.expect(Tok::LBrace)?;
                let m = self.parse_comp()?;
                self.expect(Tok::RBrace)?;
                if unit.main.is_some() {
                    return Err(self.err("duplicate main"));
                }
                unit.main = Some(m);
            } else {
                return Err(self.err("expected a top-level declaration"));
            }
        }
        Ok(unit)
    }

    fn parse_fun_sig(&mut self) -> Result<(String, FunSig), ParseError> {
        self.expect(Tok::LParen)?;
        let param = self.expect_ident()?;
        self.expect(Tok::Colon)?;
        let arg = self.parse_payload()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Arrow)?;
        self.expect(Tok::LBrace)?;
        let pre = self.parse_session()?;
        self.expect(Tok::Semi)?;
        let post = self.parse_session()?;
        self.expect(Tok::Semi)?;
        let state = self.parse_payload()?;
        self.expect(Tok::RBrace)?;
        let result = self.parse_payload()?;
        Ok((
            param,
            FunSig {
                arg,
                result,
                pre,
                post,
                state,
            },
        ))
    }

    fn parse_value(&mut self) -> Result<Value, ParseError> {
        let span = self.span();
        let mut v = match self.peek() {
            Some(Tok::Int(_)) => {
                let Some(Tok::Int(n)) = self.next() else { unreachable!() };
                Value::int(n)
            }
            Some(Tok::Str(_)) => {
                let Some(Tok::Str(s)) = self.next() else { unreachable!() };
                Value::str(s)
            }
            Some(Tok::Minus) => {
                self.next();
                match self.next() {
                    Some(Tok::Int(n)) => Value::int(-n),
                    _ => return Err(self.err("expected an integer after '-'")),
                }
            }
            Some(Tok::LParen) => {
                self.next();
                if matches!(self.peek(), Some(Tok::RParen)) {
                    self.next();
                    Value::unit()
                } else {
                    let a = self.parse_value()?;
                    match self.next() {
                        Some(Tok::Comma) => {
                            let b = self.parse_value()?;
                            self.expect(Tok::RParen)?;
                            Value::pair(a, b)
                        }
                        Some(Tok::RParen) => a,
                        _ => return Err(self.err("expected ',' or ')'")),
                    }
                }
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.next();
                Value::bool(true)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.next();
                Value::bool(false)
            }
            Some(Tok::Ident(s)) if s == "fun" => {
                self.next();
                let (param, sig) = self.parse_fun_sig()?;
                self.expect(Tok::LBrace)?;
                let body = self.parse_comp()?;
                self.expect(Tok::RBrace)?;
                Value::new(ValueKind::Lam {
                    param,
                    sig,
                    body: Box::new(body),
                })
            }
            Some(Tok::Ident(s)) if s == "rec" => {
                self.next();
                let fname = self.expect_ident()?;
                let (param, sig) = self.parse_fun_sig()?;
                self.expect(Tok::LBrace)?;
                let body = self.parse_comp()?;
                self.expect(Tok::RBrace)?;
                Value::new(ValueKind::Rec {
                    fname,
                    param,
                    sig,
                    body: Box::new(body),
                })
            }
            Some(Tok::Ident(s)) if s == "handler" => {
                self.next();
                let from = Role::new(self.expect_ident()?);
                let state_var = self.expect_ident()?;
                self.expect(Tok::Colon)?;
                self.expect_keyword("Handler")?;
                self.expect(Tok::LParen)?;
                let input = self.parse_session()?;
                self.expect(Tok::Comma)?;
                let state_ty = self.parse_payload()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::LBrace)?;
                let mut clauses = Vec::new();
                while !matches!(self.peek(), Some(Tok::RBrace)) {
                    let clause_span = self.span();
                    let label = self.expect_ident()?;
                    self.expect(Tok::LParen)?;
                    let binder = if matches!(self.peek(), Some(Tok::RParen)) {
                        "_".to_string()
                    } else {
                        self.expect_ident()?
                    };
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::FatArrow)?;
                    self.expect(Tok::LBrace)?;
                    let body = self.parse_comp()?;
                    self.expect(Tok::RBrace)?;
                    clauses.push(HandlerClause {
                        label: Label::new(label),
                        binder,
                        body,
                        span: clause_span,
                    });
                }
                self.expect(Tok::RBrace)?;
                Value::new(ValueKind::Handler {
                    from,
                    state_var,
                    clauses,
                    input,
                    state_ty,
                })
            }
            Some(Tok::Ident(_)) => {
                let name = self.expect_ident()?;
                Value::var(name)
            }
            _ => return Err(self.err("expected a value")),
        };
        v.span = span;
        Ok(v)
    }

    /// Whether the next token can begin a value.
    fn at_value_start(&self) -> bool {
        match self.peek() {
            Some(Tok::Int(_)) | Some(Tok::Str(_)) | Some(Tok::LParen) | Some(Tok::Minus) => true,
            Some(Tok::Ident(s)) => !matches!(
                s.as_str(),
                "in" | "else" | "then" | "catch" | "as"
            ),
            _ => false,
        }
    }

    fn parse_comp(&mut self) -> Result<Computation, ParseError> {
        let first = self.parse_stmt()?;
        if matches!(self.peek(), Some(Tok::Semi)) {
            self.next();
            let rest = self.parse_comp()?;
            let span = first.span;
            let mut seq = Computation::seq(first, rest);
            seq.span = span;
            Ok(seq)
        } else {
            Ok(first)
        }
    }

    fn parse_stmt(&mut self) -> Result<Computation, ParseError> {
        let span = self.span();
        let mut c = match self.peek() {
            Some(Tok::LBrace) => {
                self.next();
                let inner = self.parse_comp()?;
                self.expect(Tok::RBrace)?;
                inner
            }
            Some(Tok::Ident(s)) => match s.as_str() {
                "let" => {
                    self.next();
                    if matches!(self.peek(), Some(Tok::LParen)) {
                        self.next();
                        let left = self.expect_ident()?;
                        self.expect(Tok::Comma)?;
                        let right = self.expect_ident()?;
                        self.expect(Tok::RParen)?;
                        self.expect(Tok::Eq)?;
                        let pair = self.parse_value()?;
                        self.expect_keyword("in")?;
                        let body = self.parse_comp()?;
                        Computation::new(CompKind::LetPair {
                            left,
                            right,
                            pair,
                            body: Box::new(body),
                        })
                    } else {
                        let binder = self.expect_ident()?;
                        self.expect(Tok::Eq)?;
                        let bound = self.parse_stmt()?;
                        self.expect_keyword("in")?;
                        let body = self.parse_comp()?;
                        Computation::let_in(binder, bound, body)
                    }
                }
                "if" => {
                    self.next();
                    let cond = self.parse_value()?;
                    // Comparison conditions desugar to a let-bound test,
                    // keeping conditions in value position.
                    let test = match self.peek() {
                        Some(Tok::EqEq) | Some(Tok::Lt) | Some(Tok::Leq) | Some(Tok::AndAnd)
                        | Some(Tok::OrOr) => {
                            let op = match self.next().unwrap() {
                                Tok::EqEq => BinOp::Eq,
                                Tok::Lt => BinOp::Lt,
                                Tok::Leq => BinOp::Leq,
                                Tok::AndAnd => BinOp::And,
                                Tok::OrOr => BinOp::Or,
                                _ => unreachable!(),
                            };
                            let rhs = self.parse_value()?;
                            Some(Computation::new(CompKind::BinOp(op, cond.clone(), rhs)))
                        }
                        _ => None,
                    };
                    self.expect(Tok::LBrace)?;
                    let then_c = self.parse_comp()?;
                    self.expect(Tok::RBrace)?;
                    self.expect_keyword("else")?;
                    self.expect(Tok::LBrace)?;
                    let else_c = self.parse_comp()?;
                    self.expect(Tok::RBrace)?;
                    match test {
                        None => {
                            Computation::new(CompKind::If(cond, Box::new(then_c), Box::new(else_c)))
                        }
                        Some(bound) => Computation::let_in(
                            "%cond",
                            bound,
                            Computation::new(CompKind::If(
                                Value::var("%cond"),
                                Box::new(then_c),
                                Box::new(else_c),
                            )),
                        ),
                    }
                }
                "return" => {
                    self.next();
                    let v = self.parse_value()?;
                    Computation::ret(v)
                }
                "spawn" => {
                    self.next();
                    let name_hint = if matches!(self.peek(), Some(Tok::Ident(_)))
                        && matches!(self.peek2(), Some(Tok::Colon))
                    {
                        Some(self.expect_ident()?)
                    } else {
                        None
                    };
                    self.expect(Tok::Colon)?;
                    let state_ty = self.parse_payload()?;
                    self.expect(Tok::LBrace)?;
                    let body = self.parse_comp()?;
                    self.expect(Tok::RBrace)?;
                    Computation::new(CompKind::Spawn {
                        body: Box::new(body),
                        state_ty,
                        name_hint,
                    })
                }
                "suspend" => {
                    self.next();
                    let handler = self.parse_value()?;
                    let state = self.parse_value()?;
                    let on_fail = if self.at_keyword("catch") {
                        self.next();
                        Some(self.parse_value()?)
                    } else {
                        None
                    };
                    Computation::new(CompKind::Suspend {
                        handler,
                        state,
                        on_fail,
                    })
                }
                "newAP" => {
                    self.next();
                    self.expect(Tok::LParen)?;
                    let name = self.expect_ident()?;
                    self.expect(Tok::RParen)?;
                    let p = self
                        .protocol_table
                        .get(&name)
                        .cloned()
                        .ok_or_else(|| self.err(format!("unknown protocol {name}")))?;
                    Computation::new(CompKind::NewAp(p))
                }
                "register" => {
                    self.next();
                    let ap = self.parse_value()?;
                    let role = Role::new(self.expect_ident()?);
                    let callback = self.parse_value()?;
                    Computation::new(CompKind::Register { ap, role, callback })
                }
                "raise" => {
                    self.next();
                    Computation::new(CompKind::Raise)
                }
                "monitor" => {
                    self.next();
                    let pid = self.parse_value()?;
                    let callback = self.parse_value()?;
                    Computation::new(CompKind::Monitor { pid, callback })
                }
                "leave" => {
                    self.next();
                    let v = self.parse_value()?;
                    Computation::new(CompKind::Leave(v))
                }
                "suspendSend" => {
                    self.next();
                    let name = StaticName(self.expect_ident()?);
                    let func = self.parse_value()?;
                    let state = self.parse_value()?;
                    Computation::new(CompKind::SuspendSend { name, func, state })
                }
                "become" => {
                    self.next();
                    let name = StaticName(self.expect_ident()?);
                    let payload = self.parse_value()?;
                    Computation::new(CompKind::Become { name, payload })
                }
                _ => self.parse_value_led()?,
            },
            _ => self.parse_value_led()?,
        };
        c.span = span;
        Ok(c)
    }

    /// Statements that start with a value: send, application, binary
    /// operation, or a bare value (sugar for `return`).
    fn parse_value_led(&mut self) -> Result<Computation, ParseError> {
        let v = self.parse_value()?;
        match self.peek() {
            Some(Tok::Bang) => {
                let ValueKind::Var(role) = &v.kind else {
                    return Err(self.err("send target must be a role name"));
                };
                let role = Role::new(role.clone());
                self.next();
                let label = self.expect_ident()?;
                self.expect(Tok::LParen)?;
                let payload = if matches!(self.peek(), Some(Tok::RParen)) {
                    Value::unit()
                } else {
                    self.parse_value()?
                };
                self.expect(Tok::RParen)?;
                Ok(Computation::send(role, Label::new(label), payload))
            }
            Some(Tok::Plus) | Some(Tok::Minus) | Some(Tok::Star) | Some(Tok::EqEq)
            | Some(Tok::Lt) | Some(Tok::Leq) | Some(Tok::AndAnd) | Some(Tok::OrOr)
            | Some(Tok::Caret) => {
                let op = match self.next().unwrap() {
                    Tok::Plus => BinOp::Add,
                    Tok::Minus => BinOp::Sub,
                    Tok::Star => BinOp::Mul,
                    Tok::EqEq => BinOp::Eq,
                    Tok::Lt => BinOp::Lt,
                    Tok::Leq => BinOp::Leq,
                    Tok::AndAnd => BinOp::And,
                    Tok::OrOr => BinOp::Or,
                    Tok::Caret => BinOp::Concat,
                    _ => unreachable!(),
                };
                let rhs = self.parse_value()?;
                Ok(Computation::new(CompKind::BinOp(op, v, rhs)))
            }
            _ if self.at_value_start() => {
                let arg = self.parse_value()?;
                Ok(Computation::app(v, arg))
            }
            _ => Ok(Computation::ret(v)),
        }
    }
}

/// Sequential composition of global fragments: the continuation is grafted
/// onto every falling-through leaf of the first item. Recursion blocks and
/// jumps do not fall through, so a nonempty continuation after them is
/// rejected.
fn graft_global(item: RawGlobal, rest: RawGlobal, span: Span) -> Result<RawGlobal, ParseError> {
    if matches!(rest, RawGlobal::End) {
        return Ok(item);
    }
    match item {
        RawGlobal::End => Ok(rest),
        RawGlobal::Msg { from, to, branches } => {
            let mut out = Vec::new();
            for (label, payload, cont) in branches {
                out.push((label, payload, graft_global(cont, rest.clone(), span)?));
            }
            Ok(RawGlobal::Msg {
                from,
                to,
                branches: out,
            })
        }
        RawGlobal::Choice { at, branches } => {
            let mut out = Vec::new();
            for branch in branches {
                out.push(graft_global(branch, rest.clone(), span)?);
            }
            Ok(RawGlobal::Choice { at, branches: out })
        }
        RawGlobal::Rec { .. } | RawGlobal::Do { .. } | RawGlobal::Continue { .. } => Err(
            ParseError::new("unreachable code after a recursion or jump", span),
        ),
    }
}

fn sorts_to_payload(mut sorts: Vec<PayloadType>) -> PayloadType {
    match sorts.len() {
        0 => PayloadType::UNIT,
        1 => sorts.pop().unwrap(),
        _ => {
            let mut it = sorts.into_iter().rev();
            let mut acc = it.next().unwrap();
            for t in it {
                acc = PayloadType::pair(t, acc);
            }
            acc
        }
    }
}

fn rename_global_roles(g: &GlobalType, from: &[Role], to: &[Role]) -> GlobalType {
    let rename = |r: &Role| -> Role {
        from.iter()
            .position(|f| f == r)
            .map(|i| to[i].clone())
            .unwrap_or_else(|| r.clone())
    };
    match g {
        GlobalType::Msg { from: f, to: t, branches } => GlobalType::Msg {
            from: rename(f),
            to: rename(t),
            branches: branches.map(|c| rename_global_roles(c, from, to)),
        },
        GlobalType::Rec(x, body) => {
            GlobalType::Rec(x.clone(), Box::new(rename_global_roles(body, from, to)))
        }
        GlobalType::Var(x) => GlobalType::Var(x.clone()),
        GlobalType::End => GlobalType::End,
    }
}

/// Parse a `.scr` file: a list of global protocol declarations.
pub fn parse_protocol_file(src: &str) -> Result<Vec<NamedGlobal>, ParseError> {
    let mut p = Parser::new(src)?;
    while p.peek().is_some() {
        p.parse_global_decl()?;
    }
    p.resolve_globals()
}

/// Parse a `.maty` program file. `extra_protocols` supplies protocols
/// loaded from elsewhere (e.g. a protocol directory) for `newAP(Name)` and
/// `AP(Name)` references.
pub fn parse_program(
    src: &str,
    extra_protocols: &[(String, Protocol)],
) -> Result<SourceUnit, ParseError> {
    let mut p = Parser::new(src)?;
    for (name, protocol) in extra_protocols {
        p.protocol_table.insert(name.clone(), protocol.clone());
    }
    p.parse_unit()
}

/// Parse a local session type from text.
pub fn parse_session_type(src: &str) -> Result<SessionType, ParseError> {
    let mut p = Parser::new(src)?;
    let ty = p.parse_session()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input after session type"));
    }
    Ok(ty)
}

/// Parse a `.mpst` protocol map: `{ Role: S, ... }`.
pub fn parse_protocol_map(src: &str) -> Result<Protocol, ParseError> {
    let framed = format!("protocol __anon = {src}");
    let mut p = Parser::new(&framed)?;
    let unit = p.parse_unit()?;
    unit.protocols
        .into_iter()
        .next()
        .map(|(_, p)| p)
        .ok_or_else(|| ParseError::new("expected a protocol map", Span::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::terms::Const;
    use crate::syntax::types::{session_equal, unfold};

    #[test]
    fn session_round_trip() {
        let src = "rec X. q!{l(Int). X, stop(). end}";
        let ty = parse_session_type(src).unwrap();
        let printed = crate::syntax::print::session_to_string(&ty);
        let again = parse_session_type(&printed).unwrap();
        assert!(session_equal(&ty, &again));
    }

    #[test]
    fn empty_protocol_body_is_end() {
        let gs = parse_protocol_file("global protocol P(role A, role B) { }").unwrap();
        assert_eq!(gs[0].global, GlobalType::End);
    }

    #[test]
    fn simple_message() {
        let gs =
            parse_protocol_file("global protocol P(role A, role B) { Hello(Int) from A to B; }")
                .unwrap();
        match &gs[0].global {
            GlobalType::Msg { from, to, branches } => {
                assert_eq!(from.0, "A");
                assert_eq!(to.0, "B");
                assert_eq!(branches.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn do_becomes_recursion() {
        let src = r#"
            global protocol Loop(role A, role B) {
              Ping() from A to B;
              Pong() from B to A;
              do Loop(A, B);
            }
        "#;
        let gs = parse_protocol_file(src).unwrap();
        let g = &gs[0].global;
        assert!(matches!(g, GlobalType::Rec(name, _) if name == "Loop"));
        assert!(matches!(unfold(&crate::projection::project(g, &Role::new("A")).unwrap()),
            SessionType::Select { .. }));
    }

    #[test]
    fn choice_with_common_receiver() {
        let src = r#"
            global protocol P(role A, role B) {
              choice at A { Yes() from A to B; } or { No(Int) from A to B; }
            }
        "#;
        let gs = parse_protocol_file(src).unwrap();
        match &gs[0].global {
            GlobalType::Msg { branches, .. } => assert_eq!(branches.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_receiver_choice_rejected() {
        let src = r#"
            global protocol P(role A, role B, role C) {
              choice at A { Yes() from A to B; } or { No() from A to C; }
            }
        "#;
        assert!(parse_protocol_file(src).is_err());
    }

    #[test]
    fn minimal_program() {
        let unit = parse_program("main { return () }", &[]).unwrap();
        assert!(matches!(
            unit.main.unwrap().kind,
            CompKind::Return(Value {
                kind: ValueKind::Const(Const::Unit),
                ..
            })
        ));
    }

    #[test]
    fn send_sugar_and_sequencing() {
        let unit = parse_program(
            r#"
              main {
                Client ! IDResponse(5);
                return ()
              }
            "#,
            &[],
        )
        .unwrap();
        match unit.main.unwrap().kind {
            CompKind::Let { bound, .. } => {
                assert!(matches!(bound.kind, CompKind::Send { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
