//! Labelled configurations and the annotated transition system. The
//! regular semantics is the label-erased image of this one.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::process_calculus::{enable, internal_normalize, skeleton, Label, Process, Skeleton};
use crate::term_algebra::{apply_recipe, Atom, Frame, RecipeSpace, TResult, Term, Theory};
use crate::Error;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct LProc {
    pub label: Label,
    pub body: Process,
}

impl LProc {
    pub fn new(label: Label, body: Process) -> LProc {
        LProc { label, body }
    }
}

impl fmt::Display for LProc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.label, crate::dsl::pretty_process(&self.body))
    }
}

/// A multiset of labelled processes (kept sorted by label) and a frame.
/// `sessions` counts the sessions opened so far and drives fresh naming.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Config {
    pub procs: Vec<LProc>,
    pub frame: Frame,
    pub sessions: u32,
}

impl Config {
    /// `{P^ε}` over `frame`, with a top-level parallel composition
    /// pre-executed so that the configuration starts with its components.
    pub fn new(th: &Theory, p: &Process, frame: Frame) -> Result<Config, Error> {
        let fv = p.free_vars();
        if !fv.is_empty() {
            return Err(Error::FreeVariables(
                fv.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
            ));
        }
        let body = internal_normalize(p, th)?;
        let mut cfg = Config::from_procs(vec![LProc::new(Label::root(), body)], frame);
        if matches!(cfg.procs[0].body, Process::Par(_)) {
            let (_, next) = fire(th, &cfg, 0, &Fire::Plain, u32::MAX)?.expect("par step");
            cfg = next;
        }
        Ok(cfg)
    }

    pub fn from_procs(mut procs: Vec<LProc>, frame: Frame) -> Config {
        procs.sort();
        Config {
            procs,
            frame,
            sessions: 0,
        }
    }

    pub fn find(&self, label: &Label) -> Option<usize> {
        self.procs.iter().position(|p| &p.label == label)
    }

    /// Labelled skeletons `skl(A)`.
    pub fn labelled_skeletons(&self) -> Vec<(Label, Skeleton)> {
        self.procs
            .iter()
            .map(|p| (p.label.clone(), skeleton(&p.body)))
            .collect()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.procs.iter().enumerate() {
            if i > 0 {
                write!(f, " ⊎ ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "; {})", self.frame)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum ActionKind {
    In { chan: Atom, recipe: Term },
    Out { chan: Atom, handle: u32 },
    Sess { chan: Atom, fresh: Vec<Atom> },
    Par(Vec<Skeleton>),
    Zero,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct LAction {
    pub label: Label,
    pub kind: ActionKind,
}

impl LAction {
    pub fn new(label: Label, kind: ActionKind) -> LAction {
        LAction { label, kind }
    }

    pub fn is_observable(&self) -> bool {
        matches!(
            self.kind,
            ActionKind::In { .. } | ActionKind::Out { .. } | ActionKind::Sess { .. }
        )
    }

    /// Labelled skeleton of the action (recipes and handles erased).
    pub fn skeleton(&self) -> Skeleton {
        match &self.kind {
            ActionKind::In { chan, .. } => Skeleton::In(chan.clone()),
            ActionKind::Out { chan, .. } => Skeleton::Out(chan.clone()),
            ActionKind::Sess { chan, .. } => Skeleton::Sess(chan.clone()),
            ActionKind::Par(s) => Skeleton::Par(s.clone()),
            ActionKind::Zero => Skeleton::Zero,
        }
    }

    /// The action without its label, as in the regular semantics.
    pub fn unlabelled(&self) -> String {
        match &self.kind {
            ActionKind::In { chan, recipe } => format!("in({chan},{recipe})"),
            ActionKind::Out { chan, handle } => format!("out({chan},w{handle})"),
            ActionKind::Sess { chan, fresh } => {
                let f: Vec<&str> = fresh.iter().map(|c| &**c).collect();
                format!("sess({chan},[{}])", f.join(","))
            }
            ActionKind::Par(_) | ActionKind::Zero => "tau".to_string(),
        }
    }
}

impl fmt::Display for LAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ActionKind::Par(ss) => {
                let s: Vec<String> = ss.iter().map(|s| s.to_string()).collect();
                write!(f, "par({})", s.join(";"))?
            }
            ActionKind::Zero => write!(f, "zero")?,
            _ => write!(f, "{}", self.unlabelled())?,
        }
        write!(f, "^{}", self.label)
    }
}

pub type Trace = Vec<LAction>;

/// Exploration bounds shared by every semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub recipe_depth: usize,
    /// Maximum number of sessions (replication unfoldings) per run.
    pub sessions: u32,
    /// Maximum number of explored states before giving up.
    pub step_budget: usize,
}

impl Default for Bounds {
    fn default() -> Bounds {
        Bounds {
            recipe_depth: 2,
            sessions: 1,
            step_budget: 2_000_000,
        }
    }
}

/// How to fire a non-input process.
pub(crate) enum Fire<'a> {
    Plain,
    /// Use these names for the fresh channels of a session.
    Sess(&'a [Atom]),
    /// Bind the output under this handle instead of the canonical one.
    Out(u32),
}

fn fresh_atom(base: &Atom, k: u32) -> Atom {
    Atom::from(format!("{base}#{k}"))
}

/// Fires the non-input process at `idx`. `None` if it cannot act (an
/// input, or a replication beyond the session budget).
pub(crate) fn fire(
    th: &Theory,
    cfg: &Config,
    idx: usize,
    how: &Fire<'_>,
    max_sessions: u32,
) -> TResult<Option<(LAction, Config)>> {
    let lp = &cfg.procs[idx];
    let label = lp.label.clone();
    let mut next = cfg.clone();
    let mut added = Vec::new();
    next.procs.remove(idx);
    let kind = match &lp.body {
        Process::In { .. } | Process::If { .. } => return Ok(None),
        Process::Out { chan, msg, cont } => {
            let m = th.normalize(msg)?;
            let handle = match how {
                Fire::Out(h) => {
                    if !next.frame.bind(*h, m) {
                        return Ok(None);
                    }
                    *h
                }
                _ => next.frame.push(m),
            };
            added.push(LProc::new(label.clone(), internal_normalize(cont, th)?));
            ActionKind::Out {
                chan: chan.clone(),
                handle,
            }
        }
        Process::Bang {
            chan,
            channels,
            names,
            body,
        } => {
            if cfg.sessions >= max_sessions {
                return Ok(None);
            }
            let k = cfg.sessions + 1;
            let fresh: Vec<Atom> = match how {
                Fire::Sess(given) => {
                    if given.len() != channels.len() {
                        return Ok(None);
                    }
                    given.to_vec()
                }
                _ => channels.iter().map(|c| fresh_atom(c, k)).collect(),
            };
            let cmap: Vec<(Atom, Atom)> = channels.iter().cloned().zip(fresh.iter().cloned()).collect();
            let nmap: Vec<(Atom, Atom)> = names.iter().map(|n| (n.clone(), fresh_atom(n, k))).collect();
            let copy = internal_normalize(&body.rename(&cmap, &nmap), th)?;
            next.sessions = k;
            added.push(LProc::new(label.child(1), copy));
            added.push(LProc::new(label.child(2), lp.body.clone()));
            ActionKind::Sess {
                chan: chan.clone(),
                fresh,
            }
        }
        Process::Par(ps) => {
            let mut kids: Vec<(Skeleton, &Process)> = ps.iter().map(|p| (skeleton(p), p)).collect();
            kids.sort_by(|a, b| a.0.cmp(&b.0));
            for (i, (_, p)) in kids.iter().enumerate() {
                added.push(LProc::new(label.child(i as u32 + 1), (*p).clone()));
            }
            ActionKind::Par(kids.into_iter().map(|(s, _)| s).collect())
        }
        Process::Zero => ActionKind::Zero,
    };
    next.procs.extend(added);
    next.procs.sort();
    Ok(Some((LAction::new(label, kind), next)))
}

/// Fires the input process at `idx` on message `msg`, derived by `recipe`.
pub(crate) fn fire_input(
    th: &Theory,
    cfg: &Config,
    idx: usize,
    recipe: &Term,
    msg: &Term,
) -> TResult<(LAction, Config)> {
    let lp = &cfg.procs[idx];
    let Process::In { chan, var, cont } = &lp.body else {
        unreachable!("fire_input on a non-input process");
    };
    let body = input_continuation(th, var, cont, msg)?;
    let mut next = cfg.clone();
    next.procs[idx].body = body;
    let action = LAction::new(
        lp.label.clone(),
        ActionKind::In {
            chan: chan.clone(),
            recipe: recipe.clone(),
        },
    );
    Ok((action, next))
}

pub(crate) fn input_continuation(th: &Theory, var: &Atom, cont: &Arc<Process>, msg: &Term) -> TResult<Process> {
    internal_normalize(&cont.subst(var, msg), th)
}

/// Every annotated transition, inputs expanded over all recipes of the
/// bounded recipe space, ordered by label then recipe order.
pub fn annotated_steps(
    space: &RecipeSpace,
    cfg: &Config,
    bounds: &Bounds,
) -> TResult<Vec<(LAction, Config)>> {
    let th = &*space.theory;
    let mut out = Vec::new();
    for idx in 0..cfg.procs.len() {
        if cfg.procs[idx].body.is_positive() {
            let table = space.table(&cfg.frame)?;
            for r in 0..table.universe.len() {
                out.push(fire_input(th, cfg, idx, table.universe.recipe(r), table.value(r))?);
            }
        } else if let Some(step) = fire(th, cfg, idx, &Fire::Plain, bounds.sessions)? {
            out.push(step);
        }
    }
    Ok(out)
}

/// Replays one labelled action. `None` if the action is not executable.
pub fn apply_action(th: &Theory, cfg: &Config, a: &LAction, bounds: &Bounds) -> TResult<Option<Config>> {
    let Some(idx) = cfg.find(&a.label) else {
        return Ok(None);
    };
    let body = &cfg.procs[idx].body;
    match (&a.kind, body) {
        (ActionKind::In { chan, recipe }, Process::In { chan: c, .. }) if chan == c => {
            let mut hs = Vec::new();
            recipe.handles(&mut hs);
            if hs.iter().any(|h| cfg.frame.get(*h).is_none()) || !recipe.is_recipe() {
                return Ok(None);
            }
            let msg = apply_recipe(th, recipe, &cfg.frame)?;
            Ok(Some(fire_input(th, cfg, idx, recipe, &msg)?.1))
        }
        (ActionKind::Out { chan, handle }, Process::Out { chan: c, .. }) if chan == c => {
            Ok(fire(th, cfg, idx, &Fire::Out(*handle), u32::MAX)?.map(|(_, n)| n))
        }
        (ActionKind::Sess { chan, fresh }, Process::Bang { chan: c, .. }) if chan == c => {
            Ok(fire(th, cfg, idx, &Fire::Sess(fresh), bounds.sessions)?.map(|(_, n)| n))
        }
        (ActionKind::Par(_), Process::Par(_)) if skeleton(body) == a.skeleton() => {
            Ok(fire(th, cfg, idx, &Fire::Plain, u32::MAX)?.map(|(_, n)| n))
        }
        (ActionKind::Zero, Process::Zero) => Ok(fire(th, cfg, idx, &Fire::Plain, u32::MAX)?.map(|(_, n)| n)),
        _ => Ok(None),
    }
}

/// Replays a whole trace.
pub fn replay(th: &Theory, cfg: &Config, tr: &[LAction], bounds: &Bounds) -> TResult<Option<Config>> {
    let mut cur = cfg.clone();
    for a in tr {
        match apply_action(th, &cur, a, bounds)? {
            Some(n) => cur = n,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// Observable part of a trace (par and zero erased).
pub fn obs(tr: &[LAction]) -> Vec<LAction> {
    tr.iter().filter(|a| a.is_observable()).cloned().collect()
}

/// Labelled actions are independent unless their labels are prefix-related
/// or one inputs with a recipe mentioning the other's output handle.
pub fn independent(x: &LAction, y: &LAction) -> bool {
    if x.label.dependent(&y.label) {
        return false;
    }
    !recipe_dependent(x, y) && !recipe_dependent(y, x)
}

fn recipe_dependent(x: &LAction, y: &LAction) -> bool {
    match (&x.kind, &y.kind) {
        (ActionKind::In { recipe, .. }, ActionKind::Out { handle, .. }) => recipe.mentions_handle(*handle),
        _ => false,
    }
}

pub fn check_well_labelled(cfg: &Config) -> bool {
    let ps = &cfg.procs;
    (0..ps.len()).all(|i| (i + 1..ps.len()).all(|j| !ps[i].label.dependent(&ps[j].label)))
}

/// Two distinct processes of the multiset offering the same observable
/// skeleton, if any.
pub fn nondeterminism_witness(cfg: &Config) -> Option<Skeleton> {
    let sets: Vec<_> = cfg.procs.iter().map(|p| enable(&p.body)).collect();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if let Some(s) = sets[i].intersection(&sets[j]).next() {
                return Some(s.clone());
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActionDeterminism {
    pub deterministic: bool,
    /// The exploration hit the step budget; `deterministic` is then only a
    /// best-effort answer.
    pub exhausted: bool,
    pub states: usize,
    pub conflict: Option<String>,
}

/// Explores every reachable configuration (inputs grouped by the message
/// they deliver) and looks for two processes offering the same action.
pub fn check_action_deterministic(space: &RecipeSpace, cfg: &Config, bounds: &Bounds) -> TResult<ActionDeterminism> {
    let th = &*space.theory;
    let mut seen: HashSet<Config> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(cfg.clone());
    queue.push_back(cfg.clone());
    while let Some(c) = queue.pop_front() {
        if let Some(s) = nondeterminism_witness(&c) {
            return Ok(ActionDeterminism {
                deterministic: false,
                exhausted: false,
                states: seen.len(),
                conflict: Some(format!("{s} offered twice in {c}")),
            });
        }
        if seen.len() > bounds.step_budget {
            return Ok(ActionDeterminism {
                deterministic: true,
                exhausted: true,
                states: seen.len(),
                conflict: None,
            });
        }
        let mut succs = Vec::new();
        for idx in 0..c.procs.len() {
            if let Process::In { var, cont, .. } = &c.procs[idx].body {
                let table = space.table(&c.frame)?;
                let mut conts = HashSet::new();
                for class in &table.classes {
                    let body = input_continuation(th, var, cont, &class.value)?;
                    if conts.insert(body.clone()) {
                        let mut n = c.clone();
                        n.procs[idx].body = body;
                        succs.push(n);
                    }
                }
            } else if let Some((_, n)) = fire(th, &c, idx, &Fire::Plain, bounds.sessions)? {
                succs.push(n);
            }
        }
        for n in succs {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    Ok(ActionDeterminism {
        deterministic: true,
        exhausted: false,
        states: seen.len(),
        conflict: None,
    })
}

/// Result of executing two adjacent actions in both orders.
#[derive(Clone, Debug)]
pub struct SwapRecord {
    pub forward: Option<Config>,
    pub backward: Option<Config>,
}

impl SwapRecord {
    /// Both orders execute and reach the same multiset and frame.
    pub fn holds(&self) -> bool {
        match (&self.forward, &self.backward) {
            (Some(a), Some(b)) => {
                a.procs == b.procs && a.frame.same_bindings(&b.frame) && a.sessions == b.sessions
            }
            _ => false,
        }
    }
}

/// Executes `x.y` and `y.x` from `cfg`.
pub fn swap_adjacent(th: &Theory, cfg: &Config, x: &LAction, y: &LAction, bounds: &Bounds) -> TResult<SwapRecord> {
    let forward = replay(th, cfg, &[x.clone(), y.clone()], bounds)?;
    let backward = replay(th, cfg, &[y.clone(), x.clone()], bounds)?;
    Ok(SwapRecord { forward, backward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term_algebra::Term;

    fn th() -> Arc<Theory> {
        Arc::new(Theory::standard())
    }
    fn ok() -> Term {
        Term::constant("ok")
    }
    fn enc(a: Term, b: Term) -> Term {
        Term::app("enc", vec![a, b])
    }
    fn dec(a: Term, b: Term) -> Term {
        Term::app("dec", vec![a, b])
    }

    fn p0() -> Process {
        // out(c,enc(n,k)). in(c,x). if dec(x,k) = h(n) then out(c,ok)
        let n = Term::name("n");
        let k = Term::name("k");
        Process::output(
            "c",
            enc(n.clone(), k.clone()),
            Process::input(
                "c",
                "x",
                Process::test(
                    dec(Term::var("x"), k),
                    Term::app("h", vec![n]),
                    Process::output("c", ok(), Process::Zero),
                    Process::Zero,
                ),
            ),
        )
    }

    #[test]
    fn session_output_input_run() {
        let th = th();
        let space = RecipeSpace::new(th.clone(), 2);
        let frame = Frame::from_messages(&th, &[Term::name("k")]).unwrap();
        let cfg = Config::from_procs(
            vec![LProc::new(Label::root(), Process::bang("a", &["c"], &["n"], p0()))],
            frame,
        );
        let bounds = Bounds::default();
        let steps = annotated_steps(&space, &cfg, &bounds).unwrap();
        assert_eq!(steps.len(), 1);
        let (a, c1) = &steps[0];
        assert_eq!(a.kind, ActionKind::Sess { chan: "a".into(), fresh: vec!["c#1".into()] });
        let steps = annotated_steps(&space, c1, &bounds).unwrap();
        let (a, c2) = steps
            .iter()
            .find(|(a, _)| matches!(a.kind, ActionKind::Out { .. }))
            .unwrap();
        assert_eq!(a.kind, ActionKind::Out { chan: "c#1".into(), handle: 2 });
        assert_eq!(c2.frame.get(2), Some(&enc(Term::name("n#1"), Term::name("k"))));
        let m0 = enc(
            Term::app("h", vec![dec(Term::Handle(2), Term::Handle(1))]),
            Term::Handle(1),
        );
        let act = LAction::new(Label::root().child(1), ActionKind::In { chan: "c#1".into(), recipe: m0 });
        let c3 = apply_action(&th, c2, &act, &bounds).unwrap().unwrap();
        let copy = c3.find(&Label::root().child(1)).unwrap();
        assert_eq!(c3.procs[copy].body, Process::output("c#1", ok(), Process::Zero));
    }

    #[test]
    fn zero_and_par_rules() {
        let th = th();
        let space = RecipeSpace::new(th.clone(), 1);
        let cfg = Config::from_procs(vec![LProc::new(Label::root(), Process::Zero)], Frame::new());
        let steps = annotated_steps(&space, &cfg, &Bounds::default()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0.kind, ActionKind::Zero);
        assert!(steps[0].1.procs.is_empty());

        let par = Process::Par(vec![
            Process::output("b", Term::name("m"), Process::Zero),
            Process::input("d", "z", Process::Zero),
        ]);
        let cfg = Config::from_procs(vec![LProc::new(Label::root(), par)], Frame::new());
        let steps = annotated_steps(&space, &cfg, &Bounds::default()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(
            steps[0].0.kind,
            ActionKind::Par(vec![Skeleton::Out("b".into()), Skeleton::In("d".into())])
        );
        let next = &steps[0].1;
        assert!(matches!(next.procs[0].body, Process::Out { .. }));
        assert_eq!(next.procs[0].label, Label(vec![1]));
        assert_eq!(next.procs[1].label, Label(vec![2]));
        assert!(check_well_labelled(next));
    }

    #[test]
    fn independence() {
        let l1 = Label(vec![1]);
        let l2 = Label(vec![2]);
        let out = LAction::new(l1.clone(), ActionKind::Out { chan: "d".into(), handle: 3 });
        let inp = LAction::new(l2.clone(), ActionKind::In { chan: "c".into(), recipe: ok() });
        assert!(independent(&out, &inp));
        let dep = LAction::new(l2, ActionKind::In { chan: "c".into(), recipe: enc(ok(), Term::Handle(3)) });
        assert!(!independent(&out, &dep));
        assert!(!independent(&dep, &out));
        let root = LAction::new(Label::root(), ActionKind::Zero);
        assert!(!independent(&root, &out));
    }

    #[test]
    fn well_labelling() {
        let a = LProc::new(Label(vec![1]), Process::Zero);
        let b = LProc::new(Label(vec![2]), Process::Zero);
        let c = LProc::new(Label::root(), Process::Zero);
        assert!(check_well_labelled(&Config::from_procs(vec![a.clone(), b], Frame::new())));
        assert!(!check_well_labelled(&Config::from_procs(vec![a, c.clone()], Frame::new())));
        assert!(check_well_labelled(&Config::from_procs(vec![c], Frame::new())));
    }

    #[test]
    fn action_determinism() {
        let th = th();
        let space = RecipeSpace::new(th.clone(), 1);
        let b = Bounds::default();
        let both_c = Process::Par(vec![
            Process::input("c", "x", Process::Zero),
            Process::input("c", "y", Process::Zero),
        ]);
        let cfg = Config::new(&th, &both_c, Frame::new()).unwrap();
        assert!(!check_action_deterministic(&space, &cfg, &b).unwrap().deterministic);
        let cd = Process::Par(vec![
            Process::input("c", "x", Process::Zero),
            Process::input("d", "y", Process::Zero),
        ]);
        let cfg = Config::new(&th, &cd, Frame::new()).unwrap();
        assert!(check_action_deterministic(&space, &cfg, &b).unwrap().deterministic);
    }

    #[test]
    fn obs_erases_par_and_zero() {
        let tr = vec![
            LAction::new(Label::root(), ActionKind::Par(vec![])),
            LAction::new(Label::root(), ActionKind::In { chan: "c".into(), recipe: ok() }),
            LAction::new(Label::root(), ActionKind::Zero),
        ];
        assert_eq!(obs(&tr).len(), 1);
        assert!(obs(&[]).is_empty());
    }

    #[test]
    fn swapping_independent_zeros_and_outputs() {
        let th = th();
        let b = Bounds::default();
        let cfg = Config::from_procs(
            vec![
                LProc::new(Label(vec![1]), Process::Zero),
                LProc::new(Label(vec![2]), Process::Zero),
            ],
            Frame::new(),
        );
        let z1 = LAction::new(Label(vec![1]), ActionKind::Zero);
        let z2 = LAction::new(Label(vec![2]), ActionKind::Zero);
        assert!(swap_adjacent(&th, &cfg, &z1, &z2, &b).unwrap().holds());

        let cfg = Config::from_procs(
            vec![
                LProc::new(Label(vec![1]), Process::output("c", ok(), Process::Zero)),
                LProc::new(Label(vec![2]), Process::input("d", "x", Process::Zero)),
            ],
            Frame::new(),
        );
        let o = LAction::new(Label(vec![1]), ActionKind::Out { chan: "c".into(), handle: 1 });
        let i = LAction::new(Label(vec![2]), ActionKind::In { chan: "d".into(), recipe: ok() });
        assert!(swap_adjacent(&th, &cfg, &o, &i, &b).unwrap().holds());
    }
}
