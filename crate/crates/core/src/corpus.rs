//! Random process pairs for the cross-semantics suites.
//!
//! A pair `(A, B)` has `A` drawn at random and `B` obtained from it by a
//! skeleton-preserving mutation or by a consistent renaming of private
//! names. Every component uses its own channels, so pairs are
//! action-deterministic by construction; at most one replication occurs
//! per process.

use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::annotated_lts::{check_action_deterministic, Bounds, Config};
use crate::equivalence_engine::{check_equiv_unchecked, Mode};
use crate::process_calculus::Process;
use crate::term_algebra::{atom, Atom, Frame, RecipeSpace, Term};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairKind {
    Renaming,
    Mutation(&'static str),
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairKind::Renaming => write!(f, "renaming"),
            PairKind::Mutation(m) => write!(f, "mutation:{m}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorpusPair {
    pub id: usize,
    pub a: Process,
    pub b: Process,
    pub kind: PairKind,
}

#[derive(Clone, Copy, Debug)]
pub struct CorpusParams {
    pub seed: u64,
    pub count: usize,
    pub max_components: usize,
    pub max_depth: usize,
    /// Pairs whose regular-semantics check exceeds this many product
    /// states are discarded.
    pub max_states: usize,
}

impl Default for CorpusParams {
    fn default() -> CorpusParams {
        CorpusParams {
            seed: 7,
            count: 50,
            max_components: 3,
            max_depth: 4,
            max_states: 1_500,
        }
    }
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    vars: usize,
}

impl Gen<'_> {
    fn leaf(&mut self, names: &[Atom], vars: &[Atom]) -> Term {
        let k = self.rng.gen_range(0..10);
        if k < 4 && !vars.is_empty() {
            Term::Var(vars[self.rng.gen_range(0..vars.len())].clone())
        } else if k < 8 {
            Term::Name(names[self.rng.gen_range(0..names.len())].clone())
        } else {
            Term::constant("ok")
        }
    }

    fn term(&mut self, names: &[Atom], vars: &[Atom], depth: usize) -> Term {
        if depth == 0 || self.rng.gen_bool(0.35) {
            return self.leaf(names, vars);
        }
        match self.rng.gen_range(0..4) {
            0 | 1 => Term::app(
                "enc",
                vec![self.term(names, vars, depth - 1), self.leaf(names, &[])],
            ),
            2 => Term::app(
                "dec",
                vec![self.term(names, vars, depth - 1), self.leaf(names, &[])],
            ),
            _ => Term::app("h", vec![self.term(names, vars, depth - 1)]),
        }
    }

    fn fresh_var(&mut self) -> Atom {
        self.vars += 1;
        atom(&format!("x{}", self.vars))
    }

    /// A sequential process on `chans` (nested parallel components take
    /// the later channels) of depth at most `depth`.
    fn seq(&mut self, chans: &[Atom], names: &[Atom], vars: &mut Vec<Atom>, depth: usize, top: bool) -> Process {
        if depth == 0 || (!top && self.rng.gen_bool(0.2)) {
            return Process::Zero;
        }
        let c = chans[0].clone();
        let choice = self.rng.gen_range(0..10);
        if !top && choice < 2 && !vars.is_empty() && depth >= 2 {
            let lhs = if self.rng.gen_bool(0.5) {
                Term::Var(vars[self.rng.gen_range(0..vars.len())].clone())
            } else {
                Term::app(
                    "dec",
                    vec![Term::Var(vars[vars.len() - 1].clone()), self.leaf(names, &[])],
                )
            };
            let rhs = self.term(names, &[], 1);
            let then = self.seq(chans, names, vars, depth - 1, false);
            let els = if self.rng.gen_bool(0.3) {
                self.seq(chans, names, vars, depth - 1, false)
            } else {
                Process::Zero
            };
            return Process::test(lhs, rhs, then, els);
        }
        if !top && choice == 2 && chans.len() >= 3 && depth >= 2 {
            let mid = 1 + (chans.len() - 1) / 2;
            let l = self.seq(&chans[..mid], names, &mut vars.clone(), depth - 1, true);
            let r = self.seq(&chans[mid..], names, &mut vars.clone(), depth - 1, true);
            return Process::Par(vec![l, r]);
        }
        if choice < 6 {
            let x = self.fresh_var();
            vars.push(x.clone());
            let k = self.seq(chans, names, vars, depth - 1, false);
            vars.pop();
            Process::In {
                chan: c,
                var: x,
                cont: Arc::new(k),
            }
        } else {
            let m = self.term(names, vars, 2);
            let k = self.seq(chans, names, vars, depth - 1, false);
            Process::Out {
                chan: c,
                msg: m,
                cont: Arc::new(k),
            }
        }
    }

    fn process(&mut self, params: &CorpusParams) -> Process {
        let n = self.rng.gen_range(1..=params.max_components);
        let comp_depth = if n == 1 { params.max_depth } else { params.max_depth - 1 };
        let bang_at = if self.rng.gen_bool(0.3) {
            Some(self.rng.gen_range(0..n))
        } else {
            None
        };
        let mut comps = Vec::new();
        for i in 0..n {
            let chans: Vec<Atom> = (0..3).map(|j| atom(&format!("c{}{}", i + 1, ["", "a", "b"][j]))).collect();
            let names = vec![atom("k"), atom(&format!("n{}", i + 1))];
            if bang_at == Some(i) {
                let d = atom(&format!("d{}", i + 1));
                let m = atom(&format!("m{}", i + 1));
                let inner_names = vec![atom("k"), m.clone()];
                let body = self.seq(&[d.clone()], &inner_names, &mut Vec::new(), comp_depth - 1, true);
                comps.push(Process::Bang {
                    chan: atom(&format!("s{}", i + 1)),
                    channels: vec![d],
                    names: vec![m],
                    body: Arc::new(body),
                });
            } else {
                comps.push(self.seq(&chans, &names, &mut Vec::new(), comp_depth, true));
            }
        }
        if comps.len() == 1 {
            comps.pop().unwrap()
        } else {
            Process::Par(comps)
        }
    }
}

/// Positions of the process tree, in pre-order, rewritten by `f` at `target`.
fn rewrite(p: &Process, target: usize, counter: &mut usize, f: &mut dyn FnMut(&Process) -> Option<Process>) -> Process {
    let here = *counter;
    *counter += 1;
    if here == target {
        if let Some(q) = f(p) {
            return q;
        }
    }
    match p {
        Process::Zero => Process::Zero,
        Process::Par(ps) => Process::Par(ps.iter().map(|q| rewrite(q, target, counter, f)).collect()),
        Process::In { chan, var, cont } => Process::In {
            chan: chan.clone(),
            var: var.clone(),
            cont: Arc::new(rewrite(cont, target, counter, f)),
        },
        Process::Out { chan, msg, cont } => Process::Out {
            chan: chan.clone(),
            msg: msg.clone(),
            cont: Arc::new(rewrite(cont, target, counter, f)),
        },
        Process::If { lhs, rhs, then, els } => Process::If {
            lhs: lhs.clone(),
            rhs: rhs.clone(),
            then: Arc::new(rewrite(then, target, counter, f)),
            els: Arc::new(rewrite(els, target, counter, f)),
        },
        Process::Bang {
            chan,
            channels,
            names,
            body,
        } => Process::Bang {
            chan: chan.clone(),
            channels: channels.clone(),
            names: names.clone(),
            body: Arc::new(rewrite(body, target, counter, f)),
        },
    }
}

fn size(p: &Process) -> usize {
    let mut n = 0;
    rewrite(p, usize::MAX, &mut n, &mut |_| None);
    n
}

/// Variables bound above position `target`.
fn bound_at(p: &Process, target: usize) -> Vec<Atom> {
    fn go(p: &Process, target: usize, counter: &mut usize, bound: &mut Vec<Atom>) -> Option<Vec<Atom>> {
        let here = *counter;
        *counter += 1;
        if here == target {
            return Some(bound.clone());
        }
        match p {
            Process::Zero => None,
            Process::Par(ps) => ps.iter().find_map(|q| go(q, target, counter, bound)),
            Process::In { var, cont, .. } => {
                bound.push(var.clone());
                let r = go(cont, target, counter, bound);
                bound.pop();
                r
            }
            Process::Out { cont, .. } => go(cont, target, counter, bound),
            Process::If { then, els, .. } => go(then, target, counter, bound).or_else(|| go(els, target, counter, bound)),
            Process::Bang { body, .. } => go(body, target, counter, bound),
        }
    }
    go(p, target, &mut 0, &mut Vec::new()).unwrap_or_default()
}

fn mutate(g: &mut Gen<'_>, a: &Process) -> (Process, PairKind) {
    if g.rng.gen_bool(0.25) {
        let mut names = Vec::new();
        collect_names(a, &mut names);
        let map: Vec<(Atom, Atom)> = names.iter().map(|n| (n.clone(), atom(&format!("{n}r")))).collect();
        return (a.rename(&[], &map), PairKind::Renaming);
    }
    let n = size(a);
    for _ in 0..32 {
        let target = g.rng.gen_range(0..n);
        let vars = bound_at(a, target);
        let which = g.rng.gen_range(0..4);
        let names = vec![atom("k"), atom("n1"), atom("n2")];
        let mut kind = "";
        let mut f = |p: &Process| -> Option<Process> {
            match (which, p) {
                (0, Process::Out { chan, cont, .. }) => {
                    kind = "payload";
                    Some(Process::Out {
                        chan: chan.clone(),
                        msg: g.term(&names, &vars, 2),
                        cont: cont.clone(),
                    })
                }
                (1, Process::If { lhs, then, els, .. }) => {
                    kind = "condition";
                    Some(Process::If {
                        lhs: lhs.clone(),
                        rhs: g.term(&names, &[], 1),
                        then: then.clone(),
                        els: els.clone(),
                    })
                }
                (2, Process::If { lhs, rhs, then, els }) => {
                    kind = "branches";
                    Some(Process::If {
                        lhs: lhs.clone(),
                        rhs: rhs.clone(),
                        then: els.clone(),
                        els: then.clone(),
                    })
                }
                (3, Process::In { chan, var, cont }) if **cont != Process::Zero => {
                    kind = "truncate";
                    Some(Process::In {
                        chan: chan.clone(),
                        var: var.clone(),
                        cont: Arc::new(Process::Zero),
                    })
                }
                (3, Process::Out { chan, msg, cont }) if **cont != Process::Zero => {
                    kind = "truncate";
                    Some(Process::Out {
                        chan: chan.clone(),
                        msg: msg.clone(),
                        cont: Arc::new(Process::Zero),
                    })
                }
                _ => None,
            }
        };
        let b = rewrite(a, target, &mut 0, &mut f);
        if !kind.is_empty() && &b != a {
            return (b, PairKind::Mutation(kind));
        }
    }
    (a.clone(), PairKind::Mutation("identity"))
}

fn collect_names(p: &Process, out: &mut Vec<Atom>) {
    let term = |t: &Term, out: &mut Vec<Atom>| {
        let mut ns = Vec::new();
        t.names(&mut ns);
        for n in ns {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    };
    match p {
        Process::Zero => {}
        Process::Par(ps) => ps.iter().for_each(|q| collect_names(q, out)),
        Process::In { cont, .. } => collect_names(cont, out),
        Process::Out { msg, cont, .. } => {
            term(msg, out);
            collect_names(cont, out);
        }
        Process::If { lhs, rhs, then, els } => {
            term(lhs, out);
            term(rhs, out);
            collect_names(then, out);
            collect_names(els, out);
        }
        Process::Bang { names, body, .. } => {
            let mut inner = Vec::new();
            collect_names(body, &mut inner);
            for n in inner {
                if !names.contains(&n) && !out.contains(&n) {
                    out.push(n);
                }
            }
        }
    }
}

/// Draws pairs until `params.count` of them pass the filters: both sides
/// action-deterministic, equal labelled skeletons, and a bounded
/// exploration cost.
pub fn generate(space: &RecipeSpace, bounds: &Bounds, params: &CorpusParams) -> Result<Vec<CorpusPair>, Error> {
    let th = &*space.theory;
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut out = Vec::new();
    let cost = Bounds {
        step_budget: params.max_states,
        ..*bounds
    };
    let mut attempts = 0;
    while out.len() < params.count {
        attempts += 1;
        if attempts > params.count * 200 {
            break;
        }
        let mut g = Gen { rng: &mut rng, vars: 0 };
        let a = g.process(params);
        let (b, kind) = mutate(&mut g, &a);
        if kind == PairKind::Mutation("identity") {
            continue;
        }
        if a.depth() > params.max_depth || b.depth() > params.max_depth || a.count_bangs() > 1 {
            continue;
        }
        let ca = Config::new(th, &a, Frame::new())?;
        let cb = Config::new(th, &b, Frame::new())?;
        if ca.labelled_skeletons() != cb.labelled_skeletons() {
            continue;
        }
        let mut fine = true;
        for c in [&ca, &cb] {
            let d = check_action_deterministic(space, c, &cost)?;
            if !d.deterministic || d.exhausted {
                fine = false;
                break;
            }
        }
        if fine && check_equiv_unchecked(space, &ca, &cb, Mode::Regular, &cost)?.stats.budget_exhausted {
            fine = false;
        }
        if fine {
            out.push(CorpusPair {
                id: out.len(),
                a,
                b,
                kind,
            });
        }
    }
    Ok(out)
}
