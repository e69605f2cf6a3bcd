//! Processes, internal reduction, skeletons and channel bookkeeping.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::term_algebra::{Atom, TResult, Term, Theory};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Process {
    Zero,
    /// n-ary parallel composition (n ≥ 2 once normalised).
    Par(Vec<Process>),
    In {
        chan: Atom,
        var: Atom,
        cont: Arc<Process>,
    },
    Out {
        chan: Atom,
        msg: Term,
        cont: Arc<Process>,
    },
    If {
        lhs: Term,
        rhs: Term,
        then: Arc<Process>,
        els: Arc<Process>,
    },
    /// `!^a_{c⃗,n⃗} body`: a session on `chan` creates fresh `channels`/`names`.
    Bang {
        chan: Atom,
        channels: Vec<Atom>,
        names: Vec<Atom>,
        body: Arc<Process>,
    },
}

impl Process {
    pub fn input(chan: &str, var: &str, cont: Process) -> Process {
        Process::In {
            chan: chan.into(),
            var: var.into(),
            cont: Arc::new(cont),
        }
    }

    pub fn output(chan: &str, msg: Term, cont: Process) -> Process {
        Process::Out {
            chan: chan.into(),
            msg,
            cont: Arc::new(cont),
        }
    }

    pub fn test(lhs: Term, rhs: Term, then: Process, els: Process) -> Process {
        Process::If {
            lhs,
            rhs,
            then: Arc::new(then),
            els: Arc::new(els),
        }
    }

    pub fn bang(chan: &str, channels: &[&str], names: &[&str], body: Process) -> Process {
        Process::Bang {
            chan: chan.into(),
            channels: channels.iter().map(|c| Atom::from(*c)).collect(),
            names: names.iter().map(|c| Atom::from(*c)).collect(),
            body: Arc::new(body),
        }
    }

    /// Positive processes are input-headed.
    pub fn is_positive(&self) -> bool {
        matches!(self, Process::In { .. })
    }

    pub fn is_replicated(&self) -> bool {
        matches!(self, Process::Bang { .. })
    }

    /// Substitutes a (ground) term for free occurrences of variable `x`.
    pub fn subst(&self, x: &str, value: &Term) -> Process {
        match self {
            Process::Zero => Process::Zero,
            Process::Par(ps) => Process::Par(ps.iter().map(|p| p.subst(x, value)).collect()),
            Process::In { chan, var, cont } => Process::In {
                chan: chan.clone(),
                var: var.clone(),
                cont: if &**var == x {
                    cont.clone()
                } else {
                    Arc::new(cont.subst(x, value))
                },
            },
            Process::Out { chan, msg, cont } => Process::Out {
                chan: chan.clone(),
                msg: msg.subst_var(x, value),
                cont: Arc::new(cont.subst(x, value)),
            },
            Process::If { lhs, rhs, then, els } => Process::If {
                lhs: lhs.subst_var(x, value),
                rhs: rhs.subst_var(x, value),
                then: Arc::new(then.subst(x, value)),
                els: Arc::new(els.subst(x, value)),
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
                body: Arc::new(body.subst(x, value)),
            },
        }
    }

    /// Renames free channels and names (used to instantiate a session).
    pub fn rename(&self, chans: &[(Atom, Atom)], names: &[(Atom, Atom)]) -> Process {
        if chans.is_empty() && names.is_empty() {
            return self.clone();
        }
        let rc = |c: &Atom| -> Atom {
            chans
                .iter()
                .find(|(from, _)| from == c)
                .map(|(_, to)| to.clone())
                .unwrap_or_else(|| c.clone())
        };
        match self {
            Process::Zero => Process::Zero,
            Process::Par(ps) => Process::Par(ps.iter().map(|p| p.rename(chans, names)).collect()),
            Process::In { chan, var, cont } => Process::In {
                chan: rc(chan),
                var: var.clone(),
                cont: Arc::new(cont.rename(chans, names)),
            },
            Process::Out { chan, msg, cont } => Process::Out {
                chan: rc(chan),
                msg: msg.rename_names(names),
                cont: Arc::new(cont.rename(chans, names)),
            },
            Process::If { lhs, rhs, then, els } => Process::If {
                lhs: lhs.rename_names(names),
                rhs: rhs.rename_names(names),
                then: Arc::new(then.rename(chans, names)),
                els: Arc::new(els.rename(chans, names)),
            },
            Process::Bang {
                chan,
                channels,
                names: bound,
                body,
            } => {
                // inner binders shadow the renaming
                let ic: Vec<_> = chans
                    .iter()
                    .filter(|(f, _)| !channels.contains(f))
                    .cloned()
                    .collect();
                let inn: Vec<_> = names
                    .iter()
                    .filter(|(f, _)| !bound.contains(f))
                    .cloned()
                    .collect();
                Process::Bang {
                    chan: rc(chan),
                    channels: channels.clone(),
                    names: bound.clone(),
                    body: Arc::new(body.rename(&ic, &inn)),
                }
            }
        }
    }

    /// Free variables of the process.
    pub fn free_vars(&self) -> Vec<Atom> {
        fn go(p: &Process, bound: &mut Vec<Atom>, out: &mut Vec<Atom>) {
            let term = |t: &Term, bound: &Vec<Atom>, out: &mut Vec<Atom>| {
                let mut vs = Vec::new();
                t.vars(&mut vs);
                for v in vs {
                    if !bound.contains(&v) && !out.contains(&v) {
                        out.push(v);
                    }
                }
            };
            match p {
                Process::Zero => {}
                Process::Par(ps) => ps.iter().for_each(|q| go(q, bound, out)),
                Process::In { var, cont, .. } => {
                    bound.push(var.clone());
                    go(cont, bound, out);
                    bound.pop();
                }
                Process::Out { msg, cont, .. } => {
                    term(msg, bound, out);
                    go(cont, bound, out);
                }
                Process::If { lhs, rhs, then, els } => {
                    term(lhs, bound, out);
                    term(rhs, bound, out);
                    go(then, bound, out);
                    go(els, bound, out);
                }
                Process::Bang { body, .. } => go(body, bound, out),
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn is_ground(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Nesting depth of the syntax tree (0 for `0`).
    pub fn depth(&self) -> usize {
        match self {
            Process::Zero => 0,
            Process::Par(ps) => 1 + ps.iter().map(Process::depth).max().unwrap_or(0),
            Process::In { cont, .. } | Process::Out { cont, .. } => 1 + cont.depth(),
            Process::If { then, els, .. } => 1 + then.depth().max(els.depth()),
            Process::Bang { body, .. } => 1 + body.depth(),
        }
    }

    pub fn count_bangs(&self) -> usize {
        match self {
            Process::Zero => 0,
            Process::Par(ps) => ps.iter().map(Process::count_bangs).sum(),
            Process::In { cont, .. } | Process::Out { cont, .. } => cont.count_bangs(),
            Process::If { then, els, .. } => then.count_bangs() + els.count_bangs(),
            Process::Bang { body, .. } => 1 + body.count_bangs(),
        }
    }
}

/// Resolves ground conditionals and flattens parallel composition at the
/// head of the process. Conditionals under an input are left for later:
/// they become ground only once the input is substituted.
pub fn internal_normalize(p: &Process, th: &Theory) -> TResult<Process> {
    match p {
        Process::If { lhs, rhs, then, els } if lhs.is_ground() && rhs.is_ground() => {
            if th.eq_mod(lhs, rhs)? {
                internal_normalize(then, th)
            } else {
                internal_normalize(els, th)
            }
        }
        Process::Par(ps) => {
            let mut out = Vec::with_capacity(ps.len());
            for q in ps {
                match internal_normalize(q, th)? {
                    Process::Zero => {}
                    Process::Par(qs) => out.extend(qs),
                    q => out.push(q),
                }
            }
            Ok(match out.len() {
                0 => Process::Zero,
                1 => out.pop().unwrap(),
                _ => Process::Par(out),
            })
        }
        _ => Ok(p.clone()),
    }
}

/// Skeletons. The derived order is the global skeleton order:
/// outputs < inputs < sessions < par < zero, ties by channel name, par by
/// lexicographic comparison of its sorted children.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub enum Skeleton {
    Out(Atom),
    In(Atom),
    Sess(Atom),
    Par(Vec<Skeleton>),
    Zero,
}

impl Skeleton {
    pub fn is_observable(&self) -> bool {
        matches!(self, Skeleton::Out(_) | Skeleton::In(_) | Skeleton::Sess(_))
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Skeleton::Out(c) => write!(f, "Out_{c}"),
            Skeleton::In(c) => write!(f, "In_{c}"),
            Skeleton::Sess(c) => write!(f, "Bang_{c}"),
            Skeleton::Par(ss) => {
                write!(f, "par(")?;
                for (i, s) in ss.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, ")")
            }
            Skeleton::Zero => write!(f, "zero"),
        }
    }
}

/// Skeleton of an internally normal process.
pub fn skeleton(p: &Process) -> Skeleton {
    match p {
        Process::In { chan, .. } => Skeleton::In(chan.clone()),
        Process::Out { chan, .. } => Skeleton::Out(chan.clone()),
        Process::Bang { chan, .. } => Skeleton::Sess(chan.clone()),
        Process::Par(ps) => {
            let mut v: Vec<Skeleton> = ps.iter().map(skeleton).collect();
            v.sort();
            Skeleton::Par(v)
        }
        // a normal configuration has no conditional at its head
        Process::Zero | Process::If { .. } => Skeleton::Zero,
    }
}

pub fn skeleton_order(a: &Skeleton, b: &Skeleton) -> Ordering {
    a.cmp(b)
}

/// Observable skeletons enabled by an internally normal process.
pub fn enable(p: &Process) -> BTreeSet<Skeleton> {
    match p {
        Process::Zero | Process::If { .. } => BTreeSet::new(),
        Process::Par(ps) => ps.iter().flat_map(enable).collect(),
        _ => std::iter::once(skeleton(p)).collect(),
    }
}

fn channels(p: &Process, bound: &mut Vec<Atom>, free: &mut BTreeSet<Atom>, bc: &mut BTreeSet<Atom>) {
    let mut use_chan = |c: &Atom, bound: &Vec<Atom>| {
        if !bound.contains(c) {
            free.insert(c.clone());
        }
    };
    match p {
        Process::Zero => {}
        Process::Par(ps) => ps.iter().for_each(|q| channels(q, bound, free, bc)),
        Process::In { chan, cont, .. } | Process::Out { chan, cont, .. } => {
            use_chan(chan, bound);
            channels(cont, bound, free, bc);
        }
        Process::If { then, els, .. } => {
            channels(then, bound, free, bc);
            channels(els, bound, free, bc);
        }
        Process::Bang {
            chan,
            channels: cs,
            body,
            ..
        } => {
            use_chan(chan, bound);
            bc.extend(cs.iter().cloned());
            let n = bound.len();
            bound.extend(cs.iter().cloned());
            channels(body, bound, free, bc);
            bound.truncate(n);
        }
    }
}

pub fn free_channels(p: &Process) -> BTreeSet<Atom> {
    let (mut f, mut b) = (BTreeSet::new(), BTreeSet::new());
    channels(p, &mut Vec::new(), &mut f, &mut b);
    f
}

pub fn bound_channels(p: &Process) -> BTreeSet<Atom> {
    let (mut f, mut b) = (BTreeSet::new(), BTreeSet::new());
    channels(p, &mut Vec::new(), &mut f, &mut b);
    b
}

/// Position of a process in the parallel structure: a word over ℕ.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize)]
pub struct Label(pub Vec<u32>);

impl Label {
    pub fn root() -> Label {
        Label(Vec::new())
    }

    pub fn child(&self, i: u32) -> Label {
        let mut v = self.0.clone();
        v.push(i);
        Label(v)
    }

    pub fn is_prefix_of(&self, other: &Label) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Labels are dependent when one is a prefix of the other.
    pub fn dependent(&self, other: &Label) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0")?;
        for i in &self.0 {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term_algebra::Term;

    fn ok() -> Term {
        Term::constant("ok")
    }

    #[test]
    fn normalize_conditionals_and_par() {
        let th = Theory::standard();
        let k = Term::name("k");
        let p = Process::output("c", ok(), Process::Zero);
        let q = Process::output("d", ok(), Process::Zero);
        let t = Process::test(
            Term::app("dec", vec![Term::app("enc", vec![ok(), k.clone()]), k]),
            ok(),
            p.clone(),
            q.clone(),
        );
        assert_eq!(internal_normalize(&t, &th).unwrap(), p);
        let t = Process::test(Term::name("n"), Term::name("n'"), p.clone(), q.clone());
        assert_eq!(internal_normalize(&t, &th).unwrap(), q);
        let nested = Process::Par(vec![Process::Par(vec![p.clone(), Process::Zero]), q.clone()]);
        assert_eq!(internal_normalize(&nested, &th).unwrap(), Process::Par(vec![p, q]));
        let zeros = Process::Par(vec![Process::Zero, Process::Par(vec![Process::Zero, Process::Zero])]);
        assert_eq!(internal_normalize(&zeros, &th).unwrap(), Process::Zero);
    }

    #[test]
    fn open_conditionals_are_deferred() {
        let th = Theory::standard();
        let t = Process::test(Term::var("x"), ok(), Process::Zero, Process::Zero);
        assert_eq!(internal_normalize(&t, &th).unwrap(), t);
    }

    #[test]
    fn skeleton_examples() {
        let a = Process::input("a", "x", Process::Zero);
        assert_eq!(skeleton(&a), Skeleton::In("a".into()));
        let p = Process::Par(vec![
            Process::input("d", "z", Process::Zero),
            Process::output("b", Term::name("m"), Process::Zero),
        ]);
        assert_eq!(
            skeleton(&p),
            Skeleton::Par(vec![Skeleton::Out("b".into()), Skeleton::In("d".into())])
        );
        assert_eq!(skeleton(&Process::Zero), Skeleton::Zero);
        assert_eq!(
            enable(&p),
            [Skeleton::Out("b".into()), Skeleton::In("d".into())].into_iter().collect()
        );
        assert!(enable(&Process::Zero).is_empty());
    }

    #[test]
    fn skeleton_order_examples() {
        use Ordering::*;
        let s = |c: &str| Skeleton::In(c.into());
        assert_eq!(skeleton_order(&Skeleton::Out("b".into()), &s("d")), Less);
        assert_eq!(skeleton_order(&s("a"), &s("a")), Equal);
        assert_eq!(skeleton_order(&s("a"), &s("b")), Less);
        assert_eq!(skeleton_order(&Skeleton::Sess("a".into()), &Skeleton::Zero), Less);
    }

    #[test]
    fn channel_sets() {
        let k = Term::name("k");
        let p0 = Process::output(
            "c",
            Term::app("enc", vec![Term::name("n"), k]),
            Process::input("c", "x", Process::Zero),
        );
        assert_eq!(free_channels(&p0), ["c".into()].into_iter().collect());
        assert!(bound_channels(&p0).is_empty());
        let b = Process::bang("a", &["c"], &["n"], p0);
        assert_eq!(free_channels(&b), ["a".into()].into_iter().collect());
        assert_eq!(bound_channels(&b), ["c".into()].into_iter().collect());
        assert!(free_channels(&Process::Zero).is_empty());
    }

    #[test]
    fn labels() {
        let r = Label::root();
        let a = r.child(1);
        let b = r.child(2);
        assert!(r.dependent(&a));
        assert!(!a.dependent(&b));
        assert_eq!(a.child(3).to_string(), "0.1.3");
    }
}
