//! Terms, convergent rewriting, frames, recipe enumeration and bounded
//! static equivalence.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub type Atom = Arc<str>;

pub fn atom(s: &str) -> Atom {
    Arc::from(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("rewriting did not terminate within {0} steps (theory not convergent?)")]
    FuelExhausted(usize),
    #[error("handle w{0} is not bound in the frame")]
    UnboundHandle(u32),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{name}` expects {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("public constant `{0}` must be a declared 0-ary symbol")]
    BadConstant(String),
    #[error("rule `{0}`: right-hand side uses variables absent from the left-hand side")]
    UnboundRuleVariable(String),
    #[error("rule `{0}`: left-hand side must be a function application")]
    BadRuleLhs(String),
    #[error("theory is not locally confluent: critical pair ({0}, {1}) is not joinable")]
    NotConfluent(String, String),
    #[error("frames with more than 64 handles are not supported")]
    TooManyHandles,
}

pub type TResult<T> = Result<T, TermError>;

/// A first-order term. `Handle(i)` is the attacker handle `wi`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Name(Atom),
    Var(Atom),
    Handle(u32),
    App(Atom, Arc<[Term]>),
}

impl Term {
    pub fn name(s: &str) -> Term {
        Term::Name(atom(s))
    }

    pub fn var(s: &str) -> Term {
        Term::Var(atom(s))
    }

    pub fn constant(s: &str) -> Term {
        Term::App(atom(s), Arc::from(Vec::new()))
    }

    pub fn app(f: &str, args: Vec<Term>) -> Term {
        Term::App(atom(f), Arc::from(args))
    }

    /// True when the term contains neither variables nor handles.
    pub fn is_message(&self) -> bool {
        match self {
            Term::Name(_) => true,
            Term::Var(_) | Term::Handle(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_message),
        }
    }

    /// True when the term contains neither names nor variables.
    pub fn is_recipe(&self) -> bool {
        match self {
            Term::Handle(_) => true,
            Term::Name(_) | Term::Var(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_recipe),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Name(_) | Term::Handle(_) => true,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Term::App(_, args) if !args.is_empty() => {
                1 + args.iter().map(Term::height).max().unwrap_or(0)
            }
            _ => 0,
        }
    }

    pub fn handles(&self, out: &mut Vec<u32>) {
        match self {
            Term::Handle(h) => {
                if !out.contains(h) {
                    out.push(*h);
                }
            }
            Term::App(_, args) => args.iter().for_each(|a| a.handles(out)),
            _ => {}
        }
    }

    pub fn mentions_handle(&self, h: u32) -> bool {
        match self {
            Term::Handle(x) => *x == h,
            Term::App(_, args) => args.iter().any(|a| a.mentions_handle(h)),
            _ => false,
        }
    }

    pub fn mentions_var(&self, x: &str) -> bool {
        match self {
            Term::Var(v) => &**v == x,
            Term::App(_, args) => args.iter().any(|a| a.mentions_var(x)),
            _ => false,
        }
    }

    /// Replace every occurrence of variable `x` by `value`.
    pub fn subst_var(&self, x: &str, value: &Term) -> Term {
        match self {
            Term::Var(v) if &**v == x => value.clone(),
            Term::App(f, args) if args.iter().any(|a| a.mentions_var(x)) => Term::App(
                f.clone(),
                args.iter().map(|a| a.subst_var(x, value)).collect(),
            ),
            _ => self.clone(),
        }
    }

    /// Rename names according to `map` (used for fresh session names).
    pub fn rename_names(&self, map: &[(Atom, Atom)]) -> Term {
        match self {
            Term::Name(n) => match map.iter().find(|(from, _)| from == n) {
                Some((_, to)) => Term::Name(to.clone()),
                None => self.clone(),
            },
            Term::App(f, args) => Term::App(
                f.clone(),
                args.iter().map(|a| a.rename_names(map)).collect(),
            ),
            _ => self.clone(),
        }
    }

    pub fn names(&self, out: &mut Vec<Atom>) {
        match self {
            Term::Name(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Term::App(_, args) => args.iter().for_each(|a| a.names(out)),
            _ => {}
        }
    }

    pub fn vars(&self, out: &mut Vec<Atom>) {
        match self {
            Term::Var(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Term::App(_, args) => args.iter().for_each(|a| a.vars(out)),
            _ => {}
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Name(n) | Term::Var(n) => write!(f, "{n}"),
            Term::Handle(h) => write!(f, "w{h}"),
            Term::App(s, args) => {
                write!(f, "{s}")?;
                if !args.is_empty() {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

/// Function symbols with arities, plus the constants the attacker may use.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    symbols: Vec<(Atom, usize)>,
    public: Vec<Atom>,
}

impl Signature {
    pub fn new(symbols: Vec<(Atom, usize)>, public: Vec<Atom>) -> TResult<Signature> {
        for (i, (s, _)) in symbols.iter().enumerate() {
            if symbols[..i].iter().any(|(o, _)| o == s) {
                return Err(TermError::DuplicateSymbol(s.to_string()));
            }
        }
        for c in &public {
            if !symbols.iter().any(|(s, a)| s == c && *a == 0) {
                return Err(TermError::BadConstant(c.to_string()));
            }
        }
        Ok(Signature { symbols, public })
    }

    pub fn symbols(&self) -> &[(Atom, usize)] {
        &self.symbols
    }

    pub fn public_constants(&self) -> &[Atom] {
        &self.public
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.symbols
            .iter()
            .find(|(s, _)| &**s == name)
            .map(|(_, a)| *a)
    }

    /// Symbols of positive arity, in declaration order.
    pub fn functions(&self) -> impl Iterator<Item = &(Atom, usize)> {
        self.symbols.iter().filter(|(_, a)| *a > 0)
    }

    /// Checks that every application in `t` is declared with the right arity.
    pub fn check_term(&self, t: &Term) -> TResult<()> {
        if let Term::App(f, args) = t {
            match self.arity(f) {
                None => return Err(TermError::UnknownSymbol(f.to_string())),
                Some(a) if a != args.len() => {
                    return Err(TermError::Arity {
                        name: f.to_string(),
                        expected: a,
                        got: args.len(),
                    })
                }
                _ => {}
            }
            for a in args.iter() {
                self.check_term(a)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Term,
    pub rhs: Term,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.lhs, self.rhs)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RewriteSystem {
    pub rules: Vec<Rule>,
}

pub const DEFAULT_FUEL: usize = 10_000;

/// A signature together with a convergent rewrite system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    pub sig: Signature,
    pub rs: RewriteSystem,
    pub fuel: usize,
}

impl Theory {
    /// Validates the rules and checks local confluence on critical pairs.
    pub fn new(sig: Signature, rs: RewriteSystem) -> TResult<Theory> {
        for r in &rs.rules {
            if !matches!(r.lhs, Term::App(..)) {
                return Err(TermError::BadRuleLhs(r.to_string()));
            }
            sig.check_term(&r.lhs)?;
            sig.check_term(&r.rhs)?;
            let mut lv = Vec::new();
            r.lhs.vars(&mut lv);
            let mut rv = Vec::new();
            r.rhs.vars(&mut rv);
            if rv.iter().any(|v| !lv.contains(v)) {
                return Err(TermError::UnboundRuleVariable(r.to_string()));
            }
        }
        let th = Theory {
            sig,
            rs,
            fuel: DEFAULT_FUEL,
        };
        th.check_local_confluence()?;
        Ok(th)
    }

    /// The theory `dec(enc(x,y),y) -> x` over `enc/2, dec/2, h/1` and `ok`.
    pub fn standard() -> Theory {
        let sig = Signature::new(
            vec![
                (atom("enc"), 2),
                (atom("dec"), 2),
                (atom("h"), 1),
                (atom("ok"), 0),
            ],
            vec![atom("ok")],
        )
        .expect("valid signature");
        let rule = Rule {
            lhs: Term::app(
                "dec",
                vec![Term::app("enc", vec![Term::var("x"), Term::var("y")]), Term::var("y")],
            ),
            rhs: Term::var("x"),
        };
        Theory::new(sig, RewriteSystem { rules: vec![rule] }).expect("convergent theory")
    }

    pub fn normalize(&self, t: &Term) -> TResult<Term> {
        let mut fuel = self.fuel;
        self.norm(t, &mut fuel)
    }

    pub fn eq_mod(&self, a: &Term, b: &Term) -> TResult<bool> {
        Ok(self.normalize(a)? == self.normalize(b)?)
    }

    /// Normal form of `f(args)` where every argument is already normal.
    pub fn normalize_app(&self, f: &Atom, args: Vec<Term>) -> TResult<Term> {
        let mut fuel = self.fuel;
        self.rewrite_root(Term::App(f.clone(), Arc::from(args)), &mut fuel)
    }

    fn norm(&self, t: &Term, fuel: &mut usize) -> TResult<Term> {
        match t {
            Term::App(f, args) if !args.is_empty() => {
                let mut nargs = Vec::with_capacity(args.len());
                for a in args.iter() {
                    nargs.push(self.norm(a, fuel)?);
                }
                self.rewrite_root(Term::App(f.clone(), Arc::from(nargs)), fuel)
            }
            Term::App(..) if !self.rs.rules.is_empty() => self.rewrite_root(t.clone(), fuel),
            _ => Ok(t.clone()),
        }
    }

    fn rewrite_root(&self, t: Term, fuel: &mut usize) -> TResult<Term> {
        for rule in &self.rs.rules {
            let mut sub = Vec::new();
            if matches(&rule.lhs, &t, &mut sub) {
                if *fuel == 0 {
                    return Err(TermError::FuelExhausted(self.fuel));
                }
                *fuel -= 1;
                let inst = apply_subst(&rule.rhs, &sub);
                return self.norm(&inst, fuel);
            }
        }
        Ok(t)
    }

    fn check_local_confluence(&self) -> TResult<()> {
        let rules = &self.rs.rules;
        for (i, r1) in rules.iter().enumerate() {
            for (j, r2) in rules.iter().enumerate() {
                let r2 = rename_rule(r2, "'");
                let mut positions = Vec::new();
                subterm_positions(&r1.lhs, &mut Vec::new(), &mut positions);
                for pos in positions {
                    if pos.is_empty() && i == j {
                        continue;
                    }
                    let sub_t = at_position(&r1.lhs, &pos);
                    if matches!(sub_t, Term::Var(_)) {
                        continue;
                    }
                    let Some(mgu) = unify(sub_t, &r2.lhs) else {
                        continue;
                    };
                    let left = apply_subst(&r1.rhs, &mgu);
                    let right = apply_subst(&replace_at(&r1.lhs, &pos, &r2.rhs), &mgu);
                    let nl = self.normalize(&left)?;
                    let nr = self.normalize(&right)?;
                    if nl != nr {
                        return Err(TermError::NotConfluent(nl.to_string(), nr.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn matches(pat: &Term, t: &Term, sub: &mut Vec<(Atom, Term)>) -> bool {
    match (pat, t) {
        (Term::Var(x), _) => {
            if let Some((_, v)) = sub.iter().find(|(y, _)| y == x) {
                v == t
            } else {
                sub.push((x.clone(), t.clone()));
                true
            }
        }
        (Term::App(f, pa), Term::App(g, ta)) => {
            f == g
                && pa.len() == ta.len()
                && pa.iter().zip(ta.iter()).all(|(p, s)| matches(p, s, sub))
        }
        _ => pat == t,
    }
}

fn apply_subst(t: &Term, sub: &[(Atom, Term)]) -> Term {
    match t {
        Term::Var(x) => sub
            .iter()
            .find(|(y, _)| y == x)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| t.clone()),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| apply_subst(a, sub)).collect()),
        _ => t.clone(),
    }
}

fn rename_rule(r: &Rule, suffix: &str) -> Rule {
    fn go(t: &Term, suffix: &str) -> Term {
        match t {
            Term::Var(x) => Term::Var(atom(&format!("{x}{suffix}"))),
            Term::App(f, a) => Term::App(f.clone(), a.iter().map(|s| go(s, suffix)).collect()),
            _ => t.clone(),
        }
    }
    Rule {
        lhs: go(&r.lhs, suffix),
        rhs: go(&r.rhs, suffix),
    }
}

fn subterm_positions(t: &Term, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if let Term::App(_, args) = t {
        out.push(cur.clone());
        for (i, a) in args.iter().enumerate() {
            cur.push(i);
            subterm_positions(a, cur, out);
            cur.pop();
        }
    }
}

fn at_position<'a>(t: &'a Term, pos: &[usize]) -> &'a Term {
    match (t, pos.split_first()) {
        (Term::App(_, args), Some((i, rest))) => at_position(&args[*i], rest),
        _ => t,
    }
}

fn replace_at(t: &Term, pos: &[usize], by: &Term) -> Term {
    match (t, pos.split_first()) {
        (Term::App(f, args), Some((i, rest))) => {
            let mut v: Vec<Term> = args.to_vec();
            v[*i] = replace_at(&args[*i], rest, by);
            Term::App(f.clone(), Arc::from(v))
        }
        _ => by.clone(),
    }
}

fn occurs(x: &Atom, t: &Term) -> bool {
    match t {
        Term::Var(y) => x == y,
        Term::App(_, a) => a.iter().any(|s| occurs(x, s)),
        _ => false,
    }
}

/// Syntactic most general unifier, as an idempotent substitution.
fn unify(a: &Term, b: &Term) -> Option<Vec<(Atom, Term)>> {
    let mut sub: Vec<(Atom, Term)> = Vec::new();
    let mut stack = vec![(a.clone(), b.clone())];
    while let Some((s, t)) = stack.pop() {
        let s = apply_subst(&s, &sub);
        let t = apply_subst(&t, &sub);
        match (&s, &t) {
            _ if s == t => {}
            (Term::Var(x), _) | (_, Term::Var(x)) => {
                let other = if matches!(&s, Term::Var(y) if y == x) { &t } else { &s };
                if occurs(x, other) {
                    return None;
                }
                let bind = [(x.clone(), other.clone())];
                for (_, v) in sub.iter_mut() {
                    *v = apply_subst(v, &bind);
                }
                sub.push((x.clone(), other.clone()));
            }
            (Term::App(f, fa), Term::App(g, ga)) if f == g && fa.len() == ga.len() => {
                stack.extend(fa.iter().cloned().zip(ga.iter().cloned()));
            }
            _ => return None,
        }
    }
    Some(sub)
}

/// The attacker's knowledge: handles bound to normalised messages, in
/// output order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Frame {
    entries: Vec<(u32, Term)>,
}

impl Frame {
    pub fn new() -> Frame {
        Frame::default()
    }

    /// Builds `{w1 ↦ m1, …}` after normalising every message.
    pub fn from_messages(th: &Theory, msgs: &[Term]) -> TResult<Frame> {
        let mut f = Frame::new();
        for m in msgs {
            f.push(th.normalize(m)?);
        }
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The canonical next handle, `w_{|Φ|+1}`.
    pub fn next_handle(&self) -> u32 {
        self.entries.len() as u32 + 1
    }

    /// Appends a message under the canonical next handle and returns it.
    pub fn push(&mut self, m: Term) -> u32 {
        let h = self.next_handle();
        self.entries.push((h, m));
        h
    }

    /// Appends a binding under an explicit handle; `false` if it is taken.
    pub fn bind(&mut self, h: u32, m: Term) -> bool {
        if self.get(h).is_some() {
            return false;
        }
        self.entries.push((h, m));
        true
    }

    pub fn get(&self, h: u32) -> Option<&Term> {
        self.entries.iter().find(|(x, _)| *x == h).map(|(_, m)| m)
    }

    pub fn entries(&self) -> &[(u32, Term)] {
        &self.entries
    }

    pub fn domain(&self) -> Vec<u32> {
        self.entries.iter().map(|(h, _)| *h).collect()
    }

    /// Equality as substitutions (insertion order ignored).
    pub fn same_bindings(&self, other: &Frame) -> bool {
        let mut a = self.entries.clone();
        let mut b = other.entries.clone();
        a.sort();
        b.sort();
        a == b
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (h, m)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "w{h} ↦ {m}")?;
        }
        write!(f, "}}")
    }
}

/// `MΦ`: substitutes handles by their messages and normalises.
pub fn apply_recipe(th: &Theory, m: &Term, phi: &Frame) -> TResult<Term> {
    fn inst(m: &Term, phi: &Frame) -> TResult<Term> {
        Ok(match m {
            Term::Handle(h) => phi.get(*h).cloned().ok_or(TermError::UnboundHandle(*h))?,
            Term::App(f, args) => Term::App(
                f.clone(),
                args.iter().map(|a| inst(a, phi)).collect::<TResult<Vec<_>>>()?.into(),
            ),
            _ => m.clone(),
        })
    }
    th.normalize(&inst(m, phi)?)
}

#[derive(Clone, Debug)]
enum RNode {
    Handle(u32),
    Const(Atom),
    App(Atom, Vec<u32>),
}

/// Every recipe of height ≤ depth over a handle domain, in the canonical
/// order: height, then symbol order, then child order. Handles precede
/// constants among leaves.
#[derive(Debug)]
pub struct RecipeUniverse {
    nodes: Vec<RNode>,
    recipes: Vec<Term>,
    masks: Vec<u64>,
}

impl RecipeUniverse {
    pub fn build(dom: &[u32], sig: &Signature, depth: usize) -> TResult<RecipeUniverse> {
        let bit = |h: u32| -> TResult<u64> {
            if h == 0 || h > 64 {
                Err(TermError::TooManyHandles)
            } else {
                Ok(1u64 << (h - 1))
            }
        };
        let mut u = RecipeUniverse {
            nodes: Vec::new(),
            recipes: Vec::new(),
            masks: Vec::new(),
        };
        for &h in dom {
            u.nodes.push(RNode::Handle(h));
            u.recipes.push(Term::Handle(h));
            u.masks.push(bit(h)?);
        }
        for c in sig.public_constants() {
            u.nodes.push(RNode::Const(c.clone()));
            u.recipes.push(Term::App(c.clone(), Arc::from(Vec::new())));
            u.masks.push(0);
        }
        // `bounds[h]` is the number of recipes of height ≤ h.
        let mut bounds = vec![u.nodes.len()];
        for h in 1..=depth {
            let below = bounds[h - 1];
            let lower = if h >= 2 { bounds[h - 2] } else { 0 };
            for (f, arity) in sig.functions() {
                if below == 0 {
                    continue;
                }
                let mut idx = vec![0usize; *arity];
                'tuples: loop {
                    if idx.iter().any(|&i| i >= lower) {
                        let children: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
                        let term = Term::App(
                            f.clone(),
                            idx.iter().map(|&i| u.recipes[i].clone()).collect(),
                        );
                        let mask = idx.iter().fold(0, |m, &i| m | u.masks[i]);
                        u.nodes.push(RNode::App(f.clone(), children));
                        u.recipes.push(term);
                        u.masks.push(mask);
                    }
                    // odometer, last position fastest
                    let mut k = *arity;
                    loop {
                        if k == 0 {
                            break 'tuples;
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < below {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
            }
            bounds.push(u.nodes.len());
        }
        Ok(u)
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn recipes(&self) -> &[Term] {
        &self.recipes
    }

    pub fn recipe(&self, i: usize) -> &Term {
        &self.recipes[i]
    }

    /// Bitmask of the handles used by recipe `i` (bit `h-1` for `wh`).
    pub fn mask(&self, i: usize) -> u64 {
        self.masks[i]
    }
}

pub fn enumerate_recipes(dom: &[u32], sig: &Signature, depth: usize) -> TResult<Vec<Term>> {
    Ok(RecipeUniverse::build(dom, sig, depth)?.recipes)
}

/// A set of minimal handle sets (bitmasks): the ways a message can be
/// derived within the recipe bound.
pub type Fam = Vec<u64>;

fn fam_insert(fam: &mut Fam, m: u64) {
    if fam.iter().any(|&e| e & m == e) {
        return;
    }
    fam.retain(|&e| e & m != m);
    fam.push(m);
}

/// True if some recipe in the family avoids every handle in `avoid`.
pub fn fam_avoids(fam: &Fam, avoid: u64) -> bool {
    fam.iter().any(|&m| m & avoid == 0)
}

#[derive(Debug, Clone)]
pub struct MessageClass {
    pub value: Term,
    /// Least recipe (in enumeration order) deriving the value.
    pub rep: usize,
    pub fam: Fam,
}

/// Evaluation of a recipe universe under one frame, partitioned into
/// message classes.
#[derive(Debug)]
pub struct RecipeTable {
    pub universe: Arc<RecipeUniverse>,
    pub class_of: Vec<u32>,
    pub classes: Vec<MessageClass>,
}

impl RecipeTable {
    pub fn build(th: &Theory, universe: Arc<RecipeUniverse>, phi: &Frame) -> TResult<RecipeTable> {
        let n = universe.len();
        let mut values: Vec<Term> = Vec::with_capacity(n);
        let mut class_of = Vec::with_capacity(n);
        let mut classes: Vec<MessageClass> = Vec::new();
        let mut index: HashMap<Term, u32> = HashMap::new();
        for i in 0..n {
            let v = match &universe.nodes[i] {
                RNode::Handle(h) => phi.get(*h).cloned().ok_or(TermError::UnboundHandle(*h))?,
                RNode::Const(c) => th.normalize(&Term::App(c.clone(), Arc::from(Vec::new())))?,
                RNode::App(f, ch) => {
                    th.normalize_app(f, ch.iter().map(|&c| values[c as usize].clone()).collect())?
                }
            };
            let mask = universe.masks[i];
            let c = match index.get(&v) {
                Some(&c) => {
                    fam_insert(&mut classes[c as usize].fam, mask);
                    c
                }
                None => {
                    let c = classes.len() as u32;
                    classes.push(MessageClass {
                        value: v.clone(),
                        rep: i,
                        fam: vec![mask],
                    });
                    index.insert(v.clone(), c);
                    c
                }
            };
            class_of.push(c);
            values.push(v);
        }
        Ok(RecipeTable {
            universe,
            class_of,
            classes,
        })
    }

    pub fn value(&self, i: usize) -> &Term {
        &self.classes[self.class_of[i] as usize].value
    }

    pub fn class(&self, i: usize) -> &MessageClass {
        &self.classes[self.class_of[i] as usize]
    }

    pub fn class_of_value(&self, m: &Term) -> Option<&MessageClass> {
        self.classes.iter().find(|c| &c.value == m)
    }
}

/// Shared cache of recipe universes and per-frame tables for one theory
/// and recipe depth.
pub struct RecipeSpace {
    pub theory: Arc<Theory>,
    pub depth: usize,
    universes: Mutex<HashMap<Vec<u32>, Arc<RecipeUniverse>>>,
    tables: Mutex<HashMap<Frame, Arc<RecipeTable>>>,
}

const TABLE_CACHE_LIMIT: usize = 384;

impl RecipeSpace {
    pub fn new(theory: Arc<Theory>, depth: usize) -> RecipeSpace {
        RecipeSpace {
            theory,
            depth,
            universes: Mutex::new(HashMap::new()),
            tables: Mutex::new(HashMap::new()),
        }
    }

    pub fn universe(&self, dom: &[u32]) -> TResult<Arc<RecipeUniverse>> {
        if let Some(u) = self.universes.lock().unwrap().get(dom) {
            return Ok(u.clone());
        }
        let u = Arc::new(RecipeUniverse::build(dom, &self.theory.sig, self.depth)?);
        self.universes.lock().unwrap().insert(dom.to_vec(), u.clone());
        Ok(u)
    }

    pub fn table(&self, phi: &Frame) -> TResult<Arc<RecipeTable>> {
        if let Some(t) = self.tables.lock().unwrap().get(phi) {
            return Ok(t.clone());
        }
        let u = self.universe(&phi.domain())?;
        let t = Arc::new(RecipeTable::build(&self.theory, u, phi)?);
        let mut cache = self.tables.lock().unwrap();
        if cache.len() >= TABLE_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(phi.clone(), t.clone());
        Ok(t)
    }

    pub fn static_equiv(&self, phi: &Frame, psi: &Frame) -> TResult<StaticVerdict> {
        if phi.domain() != psi.domain() {
            return Ok(StaticVerdict::DomainMismatch {
                left: phi.domain(),
                right: psi.domain(),
            });
        }
        let ta = self.table(phi)?;
        let tb = self.table(psi)?;
        Ok(compare_tables(&ta, &tb, self.depth))
    }
}

/// Outcome of bounded static equivalence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StaticVerdict {
    /// No recipe pair of height ≤ the bound tells the frames apart.
    EquivalentUpTo(usize),
    /// `m = n` holds in exactly one of the two frames.
    Distinguished(Term, Term),
    DomainMismatch { left: Vec<u32>, right: Vec<u32> },
}

impl StaticVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, StaticVerdict::EquivalentUpTo(_))
    }
}

fn compare_tables(ta: &RecipeTable, tb: &RecipeTable, depth: usize) -> StaticVerdict {
    const UNSET: u32 = u32::MAX;
    let mut ab = vec![(UNSET, 0usize); ta.classes.len()];
    let mut ba = vec![(UNSET, 0usize); tb.classes.len()];
    let u = &ta.universe;
    for r in 0..u.len() {
        let ca = ta.class_of[r];
        let cb = tb.class_of[r];
        let (img, by) = ab[ca as usize];
        if img == UNSET {
            ab[ca as usize] = (cb, r);
        } else if img != cb {
            return StaticVerdict::Distinguished(u.recipe(r).clone(), u.recipe(by).clone());
        }
        let (img, by) = ba[cb as usize];
        if img == UNSET {
            ba[cb as usize] = (ca, r);
        } else if img != ca {
            return StaticVerdict::Distinguished(u.recipe(r).clone(), u.recipe(by).clone());
        }
    }
    StaticVerdict::EquivalentUpTo(depth)
}

/// Bounded static equivalence of two frames.
pub fn static_equiv(th: &Theory, phi: &Frame, psi: &Frame, depth: usize) -> TResult<StaticVerdict> {
    RecipeSpace::new(Arc::new(th.clone()), depth).static_equiv(phi, psi)
}

/// All recipes of height ≤ depth deriving the same message as `m` under `phi`.
pub fn recipe_variants(th: &Theory, m: &Term, phi: &Frame, depth: usize) -> TResult<Vec<Term>> {
    let target = apply_recipe(th, m, phi)?;
    let u = RecipeUniverse::build(&phi.domain(), &th.sig, depth)?;
    let t = RecipeTable::build(th, Arc::new(u), phi)?;
    Ok(match t.class_of_value(&target) {
        None => Vec::new(),
        Some(_) => (0..t.universe.len())
            .filter(|&i| t.value(i) == &target)
            .map(|i| t.universe.recipe(i).clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(a: Term, b: Term) -> Term {
        Term::app("enc", vec![a, b])
    }
    fn dec(a: Term, b: Term) -> Term {
        Term::app("dec", vec![a, b])
    }
    fn h(a: Term) -> Term {
        Term::app("h", vec![a])
    }
    fn w(i: u32) -> Term {
        Term::Handle(i)
    }

    #[test]
    fn normalize_examples() {
        let th = Theory::standard();
        let (n, k, k2) = (Term::name("n"), Term::name("k"), Term::name("k2"));
        assert_eq!(th.normalize(&dec(enc(n.clone(), k.clone()), k.clone())).unwrap(), n);
        assert_eq!(th.normalize(&h(n.clone())).unwrap(), h(n.clone()));
        let t = dec(enc(dec(enc(Term::name("m"), k.clone()), k), k2.clone()), k2);
        assert_eq!(th.normalize(&t).unwrap(), Term::name("m"));
    }

    #[test]
    fn eq_mod_examples() {
        let th = Theory::standard();
        let (n, k) = (Term::name("n"), Term::name("k"));
        assert!(th.eq_mod(&dec(enc(n.clone(), k.clone()), k), &n).unwrap());
        assert!(th.eq_mod(&n, &n).unwrap());
        assert!(!th.eq_mod(&n, &Term::name("n'")).unwrap());
    }

    #[test]
    fn apply_recipe_examples() {
        let th = Theory::standard();
        let (n, k) = (Term::name("n"), Term::name("k"));
        let phi = Frame::from_messages(&th, &[k.clone(), enc(n.clone(), k.clone())]).unwrap();
        let m0 = enc(h(dec(w(2), w(1))), w(1));
        assert_eq!(apply_recipe(&th, &m0, &phi).unwrap(), enc(h(n), k.clone()));
        let phi1 = Frame::from_messages(&th, &[k.clone()]).unwrap();
        assert_eq!(apply_recipe(&th, &w(1), &phi1).unwrap(), k);
        assert_eq!(
            apply_recipe(&th, &Term::constant("ok"), &phi1).unwrap(),
            Term::constant("ok")
        );
        assert_eq!(
            apply_recipe(&th, &w(3), &phi1),
            Err(TermError::UnboundHandle(3))
        );
    }

    #[test]
    fn enumerate_small_cases() {
        let th = Theory::standard();
        let r = enumerate_recipes(&[1], &th.sig, 0).unwrap();
        assert_eq!(r, vec![w(1), Term::constant("ok")]);
        let sig_h = Signature::new(vec![(atom("h"), 1), (atom("ok"), 0)], vec![atom("ok")]).unwrap();
        let r = enumerate_recipes(&[], &sig_h, 1).unwrap();
        assert_eq!(r, vec![Term::constant("ok"), h(Term::constant("ok"))]);
    }

    #[test]
    fn confluence_rejects_overlapping_rules() {
        let sig = Signature::new(
            vec![(atom("f"), 1), (atom("a"), 0), (atom("b"), 0)],
            vec![],
        )
        .unwrap();
        let rules = vec![
            Rule { lhs: Term::app("f", vec![Term::var("x")]), rhs: Term::constant("a") },
            Rule { lhs: Term::app("f", vec![Term::constant("b")]), rhs: Term::constant("b") },
        ];
        assert!(matches!(
            Theory::new(sig, RewriteSystem { rules }),
            Err(TermError::NotConfluent(..))
        ));
    }

    #[test]
    fn non_terminating_theory_runs_out_of_fuel() {
        let sig = Signature::new(vec![(atom("f"), 1)], vec![]).unwrap();
        let rules = vec![Rule {
            lhs: Term::app("f", vec![Term::var("x")]),
            rhs: Term::app("f", vec![Term::app("f", vec![Term::var("x")])]),
        }];
        // f(x) -> f(f(x)) has no critical pairs that fail, but loops.
        let th = Theory { sig, rs: RewriteSystem { rules }, fuel: 50 };
        assert!(matches!(
            th.normalize(&Term::app("f", vec![Term::name("n")])),
            Err(TermError::FuelExhausted(50))
        ));
    }

    #[test]
    fn static_equiv_reflexive() {
        let th = Theory::standard();
        let phi = Frame::from_messages(&th, &[Term::name("k"), enc(Term::name("n"), Term::name("k"))]).unwrap();
        assert_eq!(static_equiv(&th, &phi, &phi, 2).unwrap(), StaticVerdict::EquivalentUpTo(2));
    }

    #[test]
    fn static_equiv_domain_mismatch() {
        let th = Theory::standard();
        let phi = Frame::from_messages(&th, &[Term::name("k")]).unwrap();
        assert!(matches!(
            static_equiv(&th, &phi, &Frame::new(), 1).unwrap(),
            StaticVerdict::DomainMismatch { .. }
        ));
    }
}
