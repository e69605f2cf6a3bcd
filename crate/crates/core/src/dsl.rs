//! The protocol description language.
//!
//! ```text
//! symbols enc/2, dec/2, h/1.
//! public ok.
//! theory { dec(enc(x,y),y) -> x. }
//! process P = out(c, enc(n,k)). in(c, x). if dec(x,k) = h(n) then out(c, ok) else 0.
//! process S = !a[c; n] P.
//! query q = equiv(P, S) [semantics=reduced, depth=2].
//! ```
//!
//! A `.` ends the current item when it is followed by an item keyword or
//! the end of input; otherwise it sequences actions. `|` binds loosest and
//! a missing `else` means `0`. Identifiers not bound by an input and not
//! declared as symbols are private names.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::process_calculus::Process;
use crate::term_algebra::{atom, Atom, RewriteSystem, Rule, Signature, Term, TermError, Theory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Pos {
    line: usize,
    col: usize,
}

impl Pos {
    fn err(self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

const PUNCT: [&str; 14] = ["->", "(", ")", ",", ".", "=", "|", "!", "[", "]", ";", "{", "}", "/"];
const ITEM_KEYWORDS: [&str; 5] = ["theory", "symbols", "public", "process", "query"];
const RESERVED: [&str; 8] = ["in", "out", "if", "then", "else", "with", "theory", "process"];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += i - start;
            let s: String = chars[start..i].iter().collect();
            let n = s.parse().map_err(|_| pos.err("integer literal too large"))?;
            out.push((Tok::Int(n), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push((Tok::Punct(p), pos));
            }
            None => return Err(pos.err(format!("unexpected character `{c}`"))),
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

#[derive(Debug, Clone)]
enum RTerm {
    Id(String, Pos),
    App(String, Vec<RTerm>, Pos),
}

#[derive(Debug, Clone)]
enum RProc {
    Zero,
    Par(Vec<RProc>),
    In(String, String, Box<RProc>),
    Out(String, RTerm, Box<RProc>),
    If(RTerm, RTerm, Box<RProc>, Box<RProc>),
    Bang(String, Vec<String>, Vec<String>, Box<RProc>),
    Ref(String, Pos),
}

/// Operand of a query: a named process, optionally over an initial frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub process: String,
    pub frame: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryKind {
    Equiv(Operand, Operand),
    ActionDeterminism(Operand),
    Explore(Operand),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub name: String,
    pub kind: QueryKind,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ProtocolFile {
    pub theory: Arc<Theory>,
    pub processes: Vec<(String, Process)>,
    pub queries: Vec<Query>,
}

impl ProtocolFile {
    pub fn process(&self, name: &str) -> Option<&Process> {
        self.processes.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn query(&self, name: &str) -> Option<&Query> {
        self.queries.iter().find(|q| q.name == name)
    }
}

#[derive(Debug, Clone)]
enum RQueryKind {
    Equiv(ROperand, ROperand),
    ActDet(ROperand),
    Explore(ROperand),
}

#[derive(Debug, Clone)]
struct ROperand {
    name: String,
    pos: Pos,
    frame: Vec<RTerm>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn expect(&mut self, p: &str) -> Result<(), ParseError> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            Err(self.pos().err(format!("expected `{p}`, found {}", self.peek())))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            Err(self.pos().err(format!("expected `{k}`, found {}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => Err(self.pos().err(format!("expected identifier, found {t}"))),
        }
    }

    /// A `.` that terminates the current item rather than sequencing.
    fn at_item_end(&self) -> bool {
        self.is_punct(".")
            && match self.peek_at(1) {
                Tok::Eof => true,
                Tok::Ident(s) => ITEM_KEYWORDS.contains(&s.as_str()),
                _ => false,
            }
    }

    fn term(&mut self) -> Result<RTerm, ParseError> {
        let pos = self.pos();
        let f = self.ident()?;
        if self.is_punct("(") {
            self.bump();
            let mut args = vec![self.term()?];
            while self.is_punct(",") {
                self.bump();
                args.push(self.term()?);
            }
            self.expect(")")?;
            Ok(RTerm::App(f, args, pos))
        } else {
            Ok(RTerm::Id(f, pos))
        }
    }

    fn ident_list(&mut self, stop: &str) -> Result<Vec<String>, ParseError> {
        let mut v = Vec::new();
        if self.is_punct(stop) {
            return Ok(v);
        }
        v.push(self.ident()?);
        while self.is_punct(",") {
            self.bump();
            v.push(self.ident()?);
        }
        Ok(v)
    }

    fn process(&mut self) -> Result<RProc, ParseError> {
        let mut parts = vec![self.seq()?];
        while self.is_punct("|") {
            self.bump();
            parts.push(self.seq()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            RProc::Par(parts)
        })
    }

    fn continuation(&mut self) -> Result<RProc, ParseError> {
        if self.is_punct(".") && !self.at_item_end() {
            self.bump();
            self.seq()
        } else {
            Ok(RProc::Zero)
        }
    }

    fn seq(&mut self) -> Result<RProc, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(0) => {
                self.bump();
                Ok(RProc::Zero)
            }
            Tok::Punct("(") => {
                self.bump();
                let p = self.process()?;
                self.expect(")")?;
                Ok(p)
            }
            Tok::Punct("!") => {
                self.bump();
                let a = self.ident()?;
                self.expect("[")?;
                let chans = self.ident_list(";")?;
                let names = if self.is_punct(";") {
                    self.bump();
                    self.ident_list("]")?
                } else {
                    Vec::new()
                };
                self.expect("]")?;
                let body = self.seq()?;
                Ok(RProc::Bang(a, chans, names, Box::new(body)))
            }
            Tok::Ident(k) if k == "in" => {
                self.bump();
                self.expect("(")?;
                let c = self.ident()?;
                self.expect(",")?;
                let x = self.ident()?;
                self.expect(")")?;
                Ok(RProc::In(c, x, Box::new(self.continuation()?)))
            }
            Tok::Ident(k) if k == "out" => {
                self.bump();
                self.expect("(")?;
                let c = self.ident()?;
                self.expect(",")?;
                let t = self.term()?;
                self.expect(")")?;
                Ok(RProc::Out(c, t, Box::new(self.continuation()?)))
            }
            Tok::Ident(k) if k == "if" => {
                self.bump();
                let l = self.term()?;
                self.expect("=")?;
                let r = self.term()?;
                self.expect_kw("then")?;
                let t = self.seq()?;
                let e = if self.is_kw("else") {
                    self.bump();
                    self.seq()?
                } else {
                    RProc::Zero
                };
                Ok(RProc::If(l, r, Box::new(t), Box::new(e)))
            }
            Tok::Ident(_) => Ok(RProc::Ref(self.ident()?, pos)),
            t => Err(pos.err(format!("expected a process, found {t}"))),
        }
    }

    fn operand(&mut self) -> Result<ROperand, ParseError> {
        let pos = self.pos();
        let name = self.ident()?;
        let mut frame = Vec::new();
        if self.is_kw("with") {
            self.bump();
            self.expect("{")?;
            if !self.is_punct("}") {
                frame.push(self.term()?);
                while self.is_punct(",") {
                    self.bump();
                    frame.push(self.term()?);
                }
            }
            self.expect("}")?;
        }
        Ok(ROperand { name, pos, frame })
    }

    fn end_item(&mut self) -> Result<(), ParseError> {
        if self.is_punct(".") {
            self.bump();
            Ok(())
        } else {
            Err(self.pos().err(format!("expected `.` ending the item, found {}", self.peek())))
        }
    }
}

struct Resolver<'a> {
    sig: &'a Signature,
    procs: &'a [(String, Process)],
}

impl Resolver<'_> {
    fn term(&self, t: &RTerm, bound: &[String], rule: bool) -> Result<Term, ParseError> {
        match t {
            RTerm::Id(x, pos) => {
                if bound.iter().any(|b| b == x) {
                    return Ok(Term::var(x));
                }
                match self.sig.arity(x) {
                    Some(0) => Ok(Term::constant(x)),
                    Some(n) => Err(pos.err(format!("symbol `{x}` expects {n} arguments, got 0"))),
                    None if rule => Ok(Term::var(x)),
                    None => Ok(Term::name(x)),
                }
            }
            RTerm::App(f, args, pos) => match self.sig.arity(f) {
                None => Err(pos.err(format!("unknown symbol `{f}`"))),
                Some(n) if n != args.len() => Err(pos.err(format!(
                    "symbol `{f}` expects {n} arguments, got {}",
                    args.len()
                ))),
                Some(_) => {
                    let args = args
                        .iter()
                        .map(|a| self.term(a, bound, rule))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Term::App(atom(f), Arc::from(args)))
                }
            },
        }
    }

    fn process(&self, p: &RProc, bound: &mut Vec<String>) -> Result<Process, ParseError> {
        Ok(match p {
            RProc::Zero => Process::Zero,
            RProc::Par(ps) => Process::Par(
                ps.iter()
                    .map(|q| self.process(q, bound))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            RProc::In(c, x, k) => {
                bound.push(x.clone());
                let k = self.process(k, bound);
                bound.pop();
                Process::input(c, x, k?)
            }
            RProc::Out(c, t, k) => Process::output(c, self.term(t, bound, false)?, self.process(k, bound)?),
            RProc::If(l, r, t, e) => Process::test(
                self.term(l, bound, false)?,
                self.term(r, bound, false)?,
                self.process(t, bound)?,
                self.process(e, bound)?,
            ),
            RProc::Bang(a, cs, ns, body) => Process::Bang {
                chan: atom(a),
                channels: cs.iter().map(|c| atom(c)).collect(),
                names: ns.iter().map(|n| atom(n)).collect(),
                body: Arc::new(self.process(body, bound)?),
            },
            RProc::Ref(name, pos) => match self.procs.iter().find(|(n, _)| n == name) {
                Some((_, q)) => q.clone(),
                None => return Err(pos.err(format!("undeclared process `{name}`"))),
            },
        })
    }

    fn operand(&self, o: &ROperand) -> Result<Operand, ParseError> {
        if !self.procs.iter().any(|(n, _)| *n == o.name) {
            return Err(o.pos.err(format!("undeclared process `{}`", o.name)));
        }
        Ok(Operand {
            process: o.name.clone(),
            frame: o
                .frame
                .iter()
                .map(|t| self.term(t, &[], false))
                .collect::<Result<_, _>>()?,
        })
    }
}

fn term_error(pos: Pos, e: TermError) -> ParseError {
    pos.err(e.to_string())
}

/// Parses a protocol file. Declarations may appear in any order; a
/// process may refer to processes defined before it.
pub fn parse_file(src: &str) -> Result<ProtocolFile, ParseError> {
    let mut p = Parser { toks: lex(src)?, i: 0 };
    let mut symbols: Vec<(Atom, usize, Pos)> = Vec::new();
    let mut public: Vec<(Atom, Pos)> = Vec::new();
    let mut rules: Vec<(RTerm, RTerm, Pos)> = Vec::new();
    let mut theory_pos = Pos::default();
    let mut rprocs: Vec<(String, RProc, Pos)> = Vec::new();
    let mut rqueries: Vec<(String, RQueryKind, BTreeMap<String, String>)> = Vec::new();

    while *p.peek() != Tok::Eof {
        let pos = p.pos();
        let kw = match p.peek() {
            Tok::Ident(s) if ITEM_KEYWORDS.contains(&s.as_str()) => s.clone(),
            t => return Err(pos.err(format!("expected a declaration, found {t}"))),
        };
        p.bump();
        match kw.as_str() {
            "symbols" => {
                loop {
                    let spos = p.pos();
                    let s = p.ident()?;
                    p.expect("/")?;
                    let n = match p.bump() {
                        Tok::Int(n) => n as usize,
                        t => return Err(spos.err(format!("expected an arity, found {t}"))),
                    };
                    symbols.push((atom(&s), n, spos));
                    if !p.is_punct(",") {
                        break;
                    }
                    p.bump();
                }
                p.end_item()?;
            }
            "public" => {
                loop {
                    let cpos = p.pos();
                    public.push((atom(&p.ident()?), cpos));
                    if !p.is_punct(",") {
                        break;
                    }
                    p.bump();
                }
                p.end_item()?;
            }
            "theory" => {
                theory_pos = pos;
                p.expect("{")?;
                while !p.is_punct("}") {
                    let rpos = p.pos();
                    let l = p.term()?;
                    p.expect("->")?;
                    let r = p.term()?;
                    rules.push((l, r, rpos));
                    if p.is_punct(".") {
                        p.bump();
                    } else if !p.is_punct("}") {
                        return Err(p.pos().err(format!("expected `.` or `}}`, found {}", p.peek())));
                    }
                }
                p.bump();
                if p.is_punct(".") {
                    p.bump();
                }
            }
            "process" => {
                let name = p.ident()?;
                p.expect("=")?;
                let body = p.process()?;
                p.end_item()?;
                rprocs.push((name, body, pos));
            }
            "query" => {
                let name = p.ident()?;
                p.expect("=")?;
                let qpos = p.pos();
                let kind = p.ident()?;
                p.expect("(")?;
                let kind = match kind.as_str() {
                    "equiv" => {
                        let a = p.operand()?;
                        p.expect(",")?;
                        RQueryKind::Equiv(a, p.operand()?)
                    }
                    "actdet" => RQueryKind::ActDet(p.operand()?),
                    "explore" => RQueryKind::Explore(p.operand()?),
                    k => return Err(qpos.err(format!("unknown query kind `{k}`"))),
                };
                p.expect(")")?;
                let mut params = BTreeMap::new();
                if p.is_punct("[") {
                    p.bump();
                    while !p.is_punct("]") {
                        let key = p.ident()?;
                        let value = if p.is_punct("=") {
                            p.bump();
                            match p.bump() {
                                Tok::Ident(s) => s,
                                Tok::Int(n) => n.to_string(),
                                t => return Err(p.pos().err(format!("expected a parameter value, found {t}"))),
                            }
                        } else {
                            "true".to_string()
                        };
                        params.insert(key, value);
                        if !p.is_punct(",") {
                            break;
                        }
                        p.bump();
                    }
                    p.expect("]")?;
                }
                p.end_item()?;
                rqueries.push((name, kind, params));
            }
            _ => unreachable!(),
        }
    }

    // signature: declared symbols plus the public constants
    let mut syms: Vec<(Atom, usize)> = Vec::new();
    for (s, n, pos) in &symbols {
        if syms.iter().any(|(o, _)| o == s) {
            return Err(pos.err(format!("symbol `{s}` declared twice")));
        }
        syms.push((s.clone(), *n));
    }
    for (c, pos) in &public {
        match syms.iter().find(|(s, _)| s == c) {
            Some((_, 0)) => {}
            Some(_) => return Err(pos.err(format!("public constant `{c}` is declared with positive arity"))),
            None => syms.push((c.clone(), 0)),
        }
    }
    let mut pubs: Vec<Atom> = Vec::new();
    for (c, _) in public {
        if !pubs.contains(&c) {
            pubs.push(c);
        }
    }
    let sig = Signature::new(syms, pubs).map_err(|e| term_error(Pos::default(), e))?;
    let empty: Vec<(String, Process)> = Vec::new();
    let res = Resolver { sig: &sig, procs: &empty };
    let mut rs = RewriteSystem::default();
    for (l, r, pos) in &rules {
        rs.rules.push(Rule {
            lhs: res.term(l, &[], true)?,
            rhs: res.term(r, &[], true).map_err(|e| {
                let _ = pos;
                e
            })?,
        });
    }
    let theory = Theory::new(sig.clone(), rs).map_err(|e| term_error(theory_pos, e))?;

    let mut processes: Vec<(String, Process)> = Vec::new();
    for (name, rp, pos) in &rprocs {
        if processes.iter().any(|(n, _)| n == name) {
            return Err(pos.err(format!("process `{name}` defined twice")));
        }
        let res = Resolver {
            sig: &sig,
            procs: &processes,
        };
        let body = res.process(rp, &mut Vec::new())?;
        processes.push((name.clone(), body));
    }
    let res = Resolver {
        sig: &sig,
        procs: &processes,
    };
    let mut queries = Vec::new();
    for (name, kind, params) in rqueries {
        let kind = match kind {
            RQueryKind::Equiv(a, b) => QueryKind::Equiv(res.operand(&a)?, res.operand(&b)?),
            RQueryKind::ActDet(a) => QueryKind::ActionDeterminism(res.operand(&a)?),
            RQueryKind::Explore(a) => QueryKind::Explore(res.operand(&a)?),
        };
        queries.push(Query { name, kind, params });
    }
    Ok(ProtocolFile {
        theory: Arc::new(theory),
        processes,
        queries,
    })
}

/// Parses a single process against an existing theory.
pub fn parse_process(th: &Theory, src: &str) -> Result<Process, ParseError> {
    let mut p = Parser { toks: lex(src)?, i: 0 };
    let rp = p.process()?;
    if *p.peek() != Tok::Eof {
        return Err(p.pos().err(format!("unexpected {} after process", p.peek())));
    }
    Resolver {
        sig: &th.sig,
        procs: &[],
    }
    .process(&rp, &mut Vec::new())
}

fn needs_parens(p: &Process) -> bool {
    matches!(p, Process::Par(_) | Process::If { .. })
}

fn wrap(p: &Process) -> String {
    if needs_parens(p) {
        format!("({})", pretty_process(p))
    } else {
        pretty_process(p)
    }
}

/// Concrete syntax that parses back to the same process.
pub fn pretty_process(p: &Process) -> String {
    match p {
        Process::Zero => "0".into(),
        Process::Par(ps) => ps.iter().map(wrap).collect::<Vec<_>>().join(" | "),
        Process::In { chan, var, cont } => match &**cont {
            Process::Zero => format!("in({chan},{var})"),
            k => format!("in({chan},{var}).{}", wrap(k)),
        },
        Process::Out { chan, msg, cont } => match &**cont {
            Process::Zero => format!("out({chan},{msg})"),
            k => format!("out({chan},{msg}).{}", wrap(k)),
        },
        Process::If { lhs, rhs, then, els } => {
            let mut s = format!("if {lhs} = {rhs} then {}", wrap(then));
            if **els != Process::Zero {
                s.push_str(&format!(" else {}", wrap(els)));
            }
            s
        }
        Process::Bang {
            chan,
            channels,
            names,
            body,
        } => {
            let join = |v: &[Atom]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
            format!("!{chan}[{}; {}] {}", join(channels), join(names), wrap(body))
        }
    }
}

fn pretty_term_list(ts: &[Term]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

fn pretty_operand(o: &Operand) -> String {
    if o.frame.is_empty() {
        o.process.clone()
    } else {
        format!("{} with {{{}}}", o.process, pretty_term_list(&o.frame))
    }
}

impl fmt::Display for ProtocolFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = &self.theory.sig;
        let decl: Vec<String> = sig
            .symbols()
            .iter()
            .filter(|(s, a)| *a > 0 || !sig.public_constants().contains(s))
            .map(|(s, a)| format!("{s}/{a}"))
            .collect();
        if !decl.is_empty() {
            writeln!(f, "symbols {}.", decl.join(", "))?;
        }
        if !sig.public_constants().is_empty() {
            let pubs: Vec<String> = sig.public_constants().iter().map(|c| c.to_string()).collect();
            writeln!(f, "public {}.", pubs.join(", "))?;
        }
        if !self.theory.rs.rules.is_empty() {
            write!(f, "theory {{")?;
            for r in &self.theory.rs.rules {
                write!(f, " {r}.")?;
            }
            writeln!(f, " }}")?;
        }
        for (n, p) in &self.processes {
            writeln!(f, "process {n} = {}.", pretty_process(p))?;
        }
        for q in &self.queries {
            let body = match &q.kind {
                QueryKind::Equiv(a, b) => format!("equiv({}, {})", pretty_operand(a), pretty_operand(b)),
                QueryKind::ActionDeterminism(a) => format!("actdet({})", pretty_operand(a)),
                QueryKind::Explore(a) => format!("explore({})", pretty_operand(a)),
            };
            write!(f, "query {} = {body}", q.name)?;
            if !q.params.is_empty() {
                let ps: Vec<String> = q.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, " [{}]", ps.join(", "))?;
            }
            writeln!(f, ".")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "symbols enc/2, dec/2, h/1.\npublic ok.\ntheory { dec(enc(x,y),y) -> x. }\n";

    #[test]
    fn example_process_round_trips() {
        let src = format!(
            "{HEADER}process P0 = out(c, enc(n,k)). in(c, x). if dec(x,k) = h(n) then out(c, ok) else 0.\n\
             process S = !a[c; n, k] P0.\n\
             query q = equiv(P0, S with {{ok, enc(n,k)}}) [semantics=reduced, depth=2, improper].\n"
        );
        let f = parse_file(&src).unwrap();
        assert_eq!(f.processes.len(), 2);
        let p0 = f.process("P0").unwrap();
        assert!(matches!(p0, Process::Out { .. }));
        let again = parse_file(&f.to_string()).unwrap();
        assert_eq!(again.processes, f.processes);
        assert_eq!(again.queries, f.queries);
        assert_eq!(f.queries[0].params["improper"], "true");
    }

    #[test]
    fn empty_file() {
        let f = parse_file("").unwrap();
        assert!(f.queries.is_empty() && f.processes.is_empty());
    }

    #[test]
    fn arity_diagnostic() {
        let e = parse_file(&format!("{HEADER}process P = out(c, enc(n)).0.")).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.msg.contains("expects 2 arguments"), "{e}");
    }

    #[test]
    fn unknown_symbol_and_process() {
        let e = parse_file(&format!("{HEADER}process P = out(c, g(n)).")).unwrap_err();
        assert!(e.msg.contains("unknown symbol"));
        let e = parse_file(&format!("{HEADER}process P = Q | 0.")).unwrap_err();
        assert!(e.msg.contains("undeclared process"));
        let e = parse_file(&format!("{HEADER}query q = actdet(Z).")).unwrap_err();
        assert!(e.msg.contains("undeclared process"));
    }

    #[test]
    fn hash_rejected_in_identifiers() {
        assert!(parse_file("process P = out(c#1, ok).").is_err());
    }

    #[test]
    fn par_binds_loosest_and_else_defaults() {
        let th = Theory::standard();
        let p = parse_process(&th, "in(a,x).out(a,x) | if ok = ok then out(b,ok)").unwrap();
        let Process::Par(ps) = &p else { panic!("{p:?}") };
        assert_eq!(ps.len(), 2);
        assert!(matches!(&ps[1], Process::If { els, .. } if **els == Process::Zero));
        let reparsed = parse_process(&th, &pretty_process(&p)).unwrap();
        assert_eq!(reparsed, p);
    }

    #[test]
    fn variables_are_scoped_by_inputs() {
        let th = Theory::standard();
        let p = parse_process(&th, "out(c, x)").unwrap();
        assert_eq!(p, Process::output("c", Term::name("x"), Process::Zero));
        let p = parse_process(&th, "in(c, x).out(c, x)").unwrap();
        assert!(p.is_ground());
    }

    #[test]
    fn non_confluent_theory_rejected() {
        let src = "symbols f/1, a/0, b/0.\ntheory { f(x) -> a. f(x) -> b. }";
        assert!(parse_file(src).is_err());
    }
}
