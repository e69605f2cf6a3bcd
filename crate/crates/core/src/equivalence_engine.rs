//! Trace-equivalence checking under each semantics, with witnesses and
//! exploration statistics.
//!
//! Exploration is breadth-first over configuration pairs, one step per
//! level: a single action in the regular and annotated modes, a whole
//! block in the compressed and reduced modes. Input recipes are explored
//! one per group of recipes leading to the same continuations with the
//! same derivability families, so the least recipe of each group stands
//! for the others.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::annotated_lts::{
    check_action_deterministic, check_well_labelled, fire, input_continuation, obs, replay, ActionKind, Bounds,
    Config, Fire, LAction, LProc, Trace,
};
use crate::compressed_lts::{
    is_initial, neg_preamble, neg_step, release, replay_compressed, segment_blocks, CAction, EConfig,
};
use crate::process_calculus::{skeleton, Label, Process, Skeleton};
use crate::reduced_lts::{authorised_by_fams, block_key, replay_reduced, BlockSummary};
use crate::term_algebra::{Fam, Frame, RecipeSpace, StaticVerdict, TResult, Term, Theory};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Mode {
    Regular,
    Annotated,
    Compressed,
    CompressedImproper,
    Reduced,
    ReducedImproper,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Regular,
        Mode::Annotated,
        Mode::Compressed,
        Mode::CompressedImproper,
        Mode::Reduced,
        Mode::ReducedImproper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Regular => "regular",
            Mode::Annotated => "annotated",
            Mode::Compressed => "compressed",
            Mode::CompressedImproper => "compressed+i",
            Mode::Reduced => "reduced",
            Mode::ReducedImproper => "reduced+i",
        }
    }

    /// Base semantics plus the improper-block flag.
    pub fn from_parts(semantics: &str, improper: bool) -> Option<Mode> {
        Some(match (semantics, improper) {
            ("regular", false) => Mode::Regular,
            ("annotated", false) => Mode::Annotated,
            ("compressed", false) => Mode::Compressed,
            ("compressed", true) => Mode::CompressedImproper,
            ("reduced", false) => Mode::Reduced,
            ("reduced", true) => Mode::ReducedImproper,
            _ => return None,
        })
    }

    pub fn is_block(self) -> bool {
        !matches!(self, Mode::Regular | Mode::Annotated)
    }

    pub fn improper_opt(self) -> bool {
        matches!(self, Mode::CompressedImproper | Mode::ReducedImproper)
    }

    pub fn is_reduced(self) -> bool {
        matches!(self, Mode::Reduced | Mode::ReducedImproper)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown semantics `{s}`"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExplorationStats {
    /// Maximal paths of the explored graph (saturating).
    pub traces_explored: u128,
    /// Maximal block paths made of proper blocks only; block modes only.
    pub complete_proper_traces: Option<u128>,
    pub states_visited: usize,
    pub max_frontier: usize,
    /// Steps executed: blocks in the block modes, actions otherwise.
    pub blocks_executed: usize,
    pub pruned_by_authorised: usize,
    pub well_labelling_violations: usize,
    pub budget_exhausted: bool,
    pub wall_time_ms: f64,
}

impl ExplorationStats {
    fn absorb(&mut self, o: &ExplorationStats) {
        self.traces_explored = self.traces_explored.saturating_add(o.traces_explored);
        self.complete_proper_traces = match (self.complete_proper_traces, o.complete_proper_traces) {
            (Some(a), Some(b)) => Some(a.saturating_add(b)),
            (a, b) => a.or(b),
        };
        self.states_visited += o.states_visited;
        self.max_frontier = self.max_frontier.max(o.max_frontier);
        self.blocks_executed += o.blocks_executed;
        self.pruned_by_authorised += o.pruned_by_authorised;
        self.well_labelling_violations += o.well_labelling_violations;
        self.budget_exhausted |= o.budget_exhausted;
        self.wall_time_ms += o.wall_time_ms;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cause {
    /// The other side cannot execute the trace.
    NoMatchingTrace,
    /// Both execute it, but the recipes `m = n` hold in one frame only.
    FrameDistinguished(Term, Term),
    /// Both execute it, but the frames bind different handles.
    DomainMismatch,
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cause::NoMatchingTrace => write!(f, "no matching trace"),
            Cause::FrameDistinguished(m, n) => write!(f, "frames distinguished by {m} = {n}"),
            Cause::DomainMismatch => write!(f, "frame domains differ"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessTrace {
    Labelled(Trace),
    Compressed(Vec<CAction>),
}

impl WitnessTrace {
    pub fn len(&self) -> usize {
        match self {
            WitnessTrace::Labelled(t) => t.len(),
            WitnessTrace::Compressed(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> Vec<String> {
        match self {
            WitnessTrace::Labelled(t) => t.iter().map(|a| a.to_string()).collect(),
            WitnessTrace::Compressed(t) => t.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for WitnessTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.steps();
        if s.is_empty() {
            write!(f, "ε")
        } else {
            write!(f, "{}", s.join("."))
        }
    }
}

/// A trace performed by `side` that the other side cannot match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub side: Side,
    pub trace: WitnessTrace,
    pub cause: Cause,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Equivalent,
    Inequivalent(Witness),
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub mode: Mode,
    pub outcome: Outcome,
    pub bounds: Bounds,
    pub stats: ExplorationStats,
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        self.outcome == Outcome::Equivalent
    }

    /// Equivalent only up to an exhausted step budget.
    pub fn is_bounded(&self) -> bool {
        self.is_equivalent() && self.stats.budget_exhausted
    }

    /// 0 equivalent, 1 inequivalent, 3 budget exhausted.
    pub fn exit_code(&self) -> i32 {
        match (&self.outcome, self.stats.budget_exhausted) {
            (Outcome::Inequivalent(_), _) => 1,
            (Outcome::Equivalent, true) => 3,
            (Outcome::Equivalent, false) => 0,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.bounds;
        let bounds = format!(
            "recipe depth {}, sessions {}, step budget {}",
            b.recipe_depth, b.sessions, b.step_budget
        );
        match &self.outcome {
            Outcome::Equivalent if self.stats.budget_exhausted => {
                write!(f, "{}: no difference found before the step budget ran out ({bounds})", self.mode)
            }
            Outcome::Equivalent => write!(f, "{}: equivalent up to {bounds}", self.mode),
            Outcome::Inequivalent(w) => {
                let who = match w.side {
                    Side::Left => "left",
                    Side::Right => "right",
                };
                write!(
                    f,
                    "{}: inequivalent ({bounds})\n  {who} side performs {}\n  {}",
                    self.mode, w.trace, w.cause
                )
            }
        }
    }
}

// ---------------------------------------------------------------------------
// exploration graph

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
struct Node {
    a: Config,
    b: Option<Config>,
    hist: Vec<BlockSummary>,
}

struct Edge {
    steps: Vec<CAction>,
    proper: bool,
    next: Node,
}

struct Failure {
    steps: Vec<CAction>,
    side: Side,
    cause: Cause,
}

#[derive(Default)]
struct Expansion {
    edges: Vec<Edge>,
    failures: Vec<Failure>,
    pruned: usize,
}

struct Ctx<'a> {
    space: &'a RecipeSpace,
    th: &'a Theory,
    bounds: Bounds,
    mode: Mode,
    wl_violations: AtomicUsize,
}

struct Group {
    recipe: Term,
    drv: Process,
    fol: Option<Process>,
    fam: Fam,
}

fn frame_check(space: &RecipeSpace, phi: &Frame, psi: &Frame) -> TResult<Option<Cause>> {
    Ok(match space.static_equiv(phi, psi)? {
        StaticVerdict::EquivalentUpTo(_) => None,
        StaticVerdict::Distinguished(m, n) => Some(Cause::FrameDistinguished(m, n)),
        StaticVerdict::DomainMismatch { .. } => Some(Cause::DomainMismatch),
    })
}

fn input_parts(p: &Process) -> (&crate::term_algebra::Atom, &crate::term_algebra::Atom, &Arc<Process>) {
    match p {
        Process::In { chan, var, cont } => (chan, var, cont),
        _ => unreachable!("not an input"),
    }
}

impl Ctx<'_> {
    fn note(&self, c: &Config) {
        if !check_well_labelled(c) {
            self.wl_violations.fetch_add(1, AtomicOrdering::Relaxed);
        }
    }

    fn note_e(&self, e: &EConfig) {
        if e.focus.is_some() {
            let mut c = e.cfg.clone();
            c.procs.push(e.focus.clone().unwrap());
            self.note(&c);
        } else {
            self.note(&e.cfg);
        }
    }

    /// Recipe groups for an input of `drv` (and the matching input of
    /// `fol`): one least recipe per (continuations, derivability families).
    fn groups(&self, drv: (&Frame, &Process), fol: Option<(&Frame, &Process)>) -> TResult<Vec<Group>> {
        let ta = self.space.table(drv.0)?;
        let tb = match fol {
            Some((phi, _)) => Some(self.space.table(phi)?),
            None => None,
        };
        let (_, va, ka) = input_parts(drv.1);
        let fb = fol.map(|(_, p)| input_parts(p));
        let mut pairs = HashSet::new();
        let mut keys: HashSet<(Process, Option<Process>, Fam, Option<Fam>)> = HashSet::new();
        let mut out = Vec::new();
        for r in 0..ta.universe.len() {
            let ca = ta.class_of[r];
            let cb = tb.as_ref().map(|t| t.class_of[r]);
            if !pairs.insert((ca, cb)) {
                continue;
            }
            let pa = input_continuation(self.th, va, ka, ta.value(r))?;
            let pb = match (&tb, fb) {
                (Some(t), Some((_, vb, kb))) => Some(input_continuation(self.th, vb, kb, t.value(r))?),
                _ => None,
            };
            let fam_a = ta.class(r).fam.clone();
            let fam_b = tb.as_ref().map(|t| t.class(r).fam.clone());
            if keys.insert((pa.clone(), pb.clone(), fam_a.clone(), fam_b)) {
                out.push(Group {
                    recipe: ta.universe.recipe(r).clone(),
                    drv: pa,
                    fol: pb,
                    fam: fam_a,
                });
            }
        }
        Ok(out)
    }

    fn least_recipe(&self, phi: &Frame) -> TResult<Option<Term>> {
        let t = self.space.table(phi)?;
        Ok(t.universe.recipes().first().cloned())
    }

    // --- regular semantics: the driver explores everything, including
    // par and zero steps; the follower is kept saturated and matches
    // observable actions by channel.

    fn saturate(&self, c: &Config) -> TResult<Config> {
        let mut cur = c.clone();
        while let Some(i) = cur
            .procs
            .iter()
            .position(|p| matches!(p.body, Process::Par(_) | Process::Zero))
        {
            cur = fire(self.th, &cur, i, &Fire::Plain, u32::MAX)?.expect("par/zero step").1;
        }
        Ok(cur)
    }

    fn follower_by_skeleton(b: &Config, s: &Skeleton) -> Option<usize> {
        b.procs.iter().position(|p| &skeleton(&p.body) == s)
    }

    fn regular_expand(&self, n: &Node) -> TResult<Expansion> {
        let a = &n.a;
        self.note(a);
        let mut ex = Expansion::default();
        for idx in 0..a.procs.len() {
            let body = &a.procs[idx].body;
            let label = a.procs[idx].label.clone();
            if let Process::In { chan, .. } = body {
                let fol = match &n.b {
                    Some(b) => match Self::follower_by_skeleton(b, &Skeleton::In(chan.clone())) {
                        Some(j) => Some((b, j)),
                        None => {
                            if let Some(r) = self.least_recipe(&a.frame)? {
                                ex.failures.push(Failure {
                                    steps: vec![CAction::Act(LAction::new(
                                        label,
                                        ActionKind::In { chan: chan.clone(), recipe: r },
                                    ))],
                                    side: Side::Left,
                                    cause: Cause::NoMatchingTrace,
                                });
                            }
                            continue;
                        }
                    },
                    None => None,
                };
                let groups = self.groups(
                    (&a.frame, body),
                    fol.map(|(b, j)| (&b.frame, &b.procs[j].body)),
                )?;
                for g in groups {
                    let mut na = a.clone();
                    na.procs[idx].body = g.drv;
                    let nb = match (fol, g.fol) {
                        (Some((b, j)), Some(pb)) => {
                            let mut nb = b.clone();
                            nb.procs[j].body = pb;
                            Some(self.saturate(&nb)?)
                        }
                        _ => None,
                    };
                    ex.edges.push(Edge {
                        steps: vec![CAction::Act(LAction::new(
                            label.clone(),
                            ActionKind::In { chan: chan.clone(), recipe: g.recipe },
                        ))],
                        proper: true,
                        next: Node { a: na, b: nb, hist: vec![] },
                    });
                }
                continue;
            }
            let Some((act, na)) = fire(self.th, a, idx, &Fire::Plain, self.bounds.sessions)? else {
                continue;
            };
            let nb = match (&n.b, &act.kind) {
                (None, _) => None,
                (Some(b), ActionKind::Par(_) | ActionKind::Zero) => Some(b.clone()),
                (Some(b), kind) => {
                    let how = match kind {
                        ActionKind::Out { handle, .. } => Fire::Out(*handle),
                        ActionKind::Sess { fresh, .. } => Fire::Sess(fresh),
                        _ => unreachable!(),
                    };
                    let matched = match Self::follower_by_skeleton(b, &act.skeleton()) {
                        Some(j) => fire(self.th, b, j, &how, self.bounds.sessions)?,
                        None => None,
                    };
                    match matched {
                        None => {
                            ex.failures.push(Failure {
                                steps: vec![CAction::Act(act)],
                                side: Side::Left,
                                cause: Cause::NoMatchingTrace,
                            });
                            continue;
                        }
                        Some((_, nb)) => {
                            let nb = self.saturate(&nb)?;
                            if let Some(cause) = frame_check(self.space, &na.frame, &nb.frame)? {
                                ex.failures.push(Failure {
                                    steps: vec![CAction::Act(act)],
                                    side: Side::Left,
                                    cause,
                                });
                                continue;
                            }
                            Some(nb)
                        }
                    }
                }
            };
            ex.edges.push(Edge {
                steps: vec![CAction::Act(act)],
                proper: true,
                next: Node { a: na, b: nb, hist: vec![] },
            });
        }
        Ok(ex)
    }

    // --- annotated semantics: both sides must perform the same labelled
    // actions.

    /// Enabled actions of `c`, inputs with a placeholder recipe.
    fn annotated_moves(&self, c: &Config) -> TResult<Vec<(Label, Skeleton, Option<(LAction, Config)>)>> {
        let mut out = Vec::new();
        for idx in 0..c.procs.len() {
            let p = &c.procs[idx];
            if p.body.is_positive() {
                out.push((p.label.clone(), skeleton(&p.body), None));
            } else if let Some((a, n)) = fire(self.th, c, idx, &Fire::Plain, self.bounds.sessions)? {
                out.push((a.label.clone(), a.skeleton(), Some((a, n))));
            }
        }
        Ok(out)
    }

    fn annotated_expand(&self, n: &Node) -> TResult<Expansion> {
        let a = &n.a;
        self.note(a);
        let mut ex = Expansion::default();
        let ma = self.annotated_moves(a)?;
        let mb = match &n.b {
            Some(b) => {
                self.note(b);
                Some(self.annotated_moves(b)?)
            }
            None => None,
        };
        let in_placeholder = |c: &Config, l: &Label, s: &Skeleton| -> TResult<Option<LAction>> {
            let Skeleton::In(chan) = s else { unreachable!() };
            Ok(self.least_recipe(&c.frame)?.map(|r| {
                LAction::new(l.clone(), ActionKind::In { chan: chan.clone(), recipe: r })
            }))
        };
        if let (Some(b), Some(mb)) = (&n.b, &mb) {
            for (l, s, m) in mb {
                if !ma.iter().any(|(l2, s2, _)| l2 == l && s2 == s) {
                    let act = match m {
                        Some((x, _)) => Some(x.clone()),
                        None => in_placeholder(b, l, s)?,
                    };
                    if let Some(act) = act {
                        ex.failures.push(Failure {
                            steps: vec![CAction::Act(act)],
                            side: Side::Right,
                            cause: Cause::NoMatchingTrace,
                        });
                    }
                }
            }
        }
        for (l, s, m) in ma {
            let fol = match (&n.b, &mb) {
                (Some(b), Some(mb)) => match mb.iter().position(|(l2, s2, _)| *l2 == l && *s2 == s) {
                    Some(_) => Some(b),
                    None => {
                        let act = match m {
                            Some((x, _)) => Some(x),
                            None => in_placeholder(a, &l, &s)?,
                        };
                        if let Some(act) = act {
                            ex.failures.push(Failure {
                                steps: vec![CAction::Act(act)],
                                side: Side::Left,
                                cause: Cause::NoMatchingTrace,
                            });
                        }
                        continue;
                    }
                },
                _ => None,
            };
            match m {
                None => {
                    let ia = a.find(&l).unwrap();
                    let ib = fol.map(|b| b.find(&l).unwrap());
                    let Skeleton::In(chan) = &s else { unreachable!() };
                    let groups = self.groups(
                        (&a.frame, &a.procs[ia].body),
                        fol.map(|b| (&b.frame, &b.procs[ib.unwrap()].body)),
                    )?;
                    for g in groups {
                        let mut na = a.clone();
                        na.procs[ia].body = g.drv;
                        let nb = fol.map(|b| {
                            let mut nb = b.clone();
                            nb.procs[ib.unwrap()].body = g.fol.clone().unwrap();
                            nb
                        });
                        ex.edges.push(Edge {
                            steps: vec![CAction::Act(LAction::new(
                                l.clone(),
                                ActionKind::In { chan: chan.clone(), recipe: g.recipe },
                            ))],
                            proper: true,
                            next: Node { a: na, b: nb, hist: vec![] },
                        });
                    }
                }
                Some((act, na)) => {
                    let nb = match fol {
                        None => None,
                        Some(b) => {
                            let j = b.find(&l).unwrap();
                            let how = match &act.kind {
                                ActionKind::Out { handle, .. } => Fire::Out(*handle),
                                ActionKind::Sess { fresh, .. } => Fire::Sess(fresh),
                                _ => Fire::Plain,
                            };
                            match fire(self.th, b, j, &how, self.bounds.sessions)? {
                                Some((bact, nb)) if bact.skeleton() == act.skeleton() => {
                                    if matches!(act.kind, ActionKind::Out { .. }) {
                                        if let Some(cause) = frame_check(self.space, &na.frame, &nb.frame)? {
                                            ex.failures.push(Failure {
                                                steps: vec![CAction::Act(act)],
                                                side: Side::Left,
                                                cause,
                                            });
                                            continue;
                                        }
                                    }
                                    Some(nb)
                                }
                                _ => {
                                    ex.failures.push(Failure {
                                        steps: vec![CAction::Act(act)],
                                        side: Side::Left,
                                        cause: Cause::NoMatchingTrace,
                                    });
                                    continue;
                                }
                            }
                        }
                    };
                    ex.edges.push(Edge {
                        steps: vec![CAction::Act(act)],
                        proper: true,
                        next: Node { a: na, b: nb, hist: vec![] },
                    });
                }
            }
        }
        Ok(ex)
    }

    // --- compressed and reduced semantics: a node is a pair of initial
    // configurations and an edge is a block executed by both.

    fn block_expand(&self, n: &Node) -> TResult<Expansion> {
        let ea = EConfig::unfocused(n.a.clone());
        let eb = n.b.clone().map(EConfig::unfocused);
        self.note(&ea.cfg);
        if let Some(b) = &eb {
            self.note(&b.cfg);
        }
        let mut outcomes = Vec::new();
        let sa = self.starts(&ea);
        match &eb {
            None => {
                for &(i, _) in &sa {
                    self.start(&ea, i, None, Side::Left, None, &mut outcomes)?;
                }
            }
            Some(eb) => {
                let sb = self.starts(eb);
                for &(i, ref key) in &sa {
                    match sb.iter().find(|(_, k)| k == key) {
                        Some(&(j, _)) => self.start(&ea, i, Some((eb, j)), Side::Left, None, &mut outcomes)?,
                        None => self.start(&ea, i, None, Side::Left, Some(Cause::NoMatchingTrace), &mut outcomes)?,
                    }
                }
                for &(j, ref key) in &sb {
                    if !sa.iter().any(|(_, k)| k == key) {
                        self.start(eb, j, None, Side::Right, Some(Cause::NoMatchingTrace), &mut outcomes)?;
                    }
                }
            }
        }
        let mut ex = Expansion::default();
        for o in outcomes {
            let blocks = segment_blocks(&o.acts).expect("well-formed block");
            let block = &blocks[0];
            let summary = BlockSummary::of(block);
            if self.mode.is_reduced() {
                let fams: Vec<&Fam> = o.fams.iter().collect();
                if !authorised_by_fams(&block_key(block), &fams, &n.hist) {
                    ex.pruned += 1;
                    continue;
                }
            }
            match o.fail {
                Some(cause) => ex.failures.push(Failure {
                    steps: o.acts,
                    side: o.side,
                    cause,
                }),
                None => {
                    let mut hist = Vec::new();
                    if self.mode.is_reduced() {
                        hist = n.hist.clone();
                        hist.push(summary);
                    }
                    let proper = !block.is_improper();
                    ex.edges.push(Edge {
                        steps: o.acts,
                        proper,
                        next: Node {
                            a: o.drv.cfg,
                            b: o.fol.map(|e| e.cfg),
                            hist,
                        },
                    });
                }
            }
        }
        Ok(ex)
    }

    /// Processes that can start a block, keyed by label and skeleton.
    fn starts(&self, e: &EConfig) -> Vec<(usize, (Label, Skeleton))> {
        crate::compressed_lts::start_candidates(e, &self.bounds)
            .into_iter()
            .map(|i| (i, (e.cfg.procs[i].label.clone(), skeleton(&e.cfg.procs[i].body))))
            .collect()
    }

    fn start(
        &self,
        drv: &EConfig,
        i: usize,
        fol: Option<(&EConfig, usize)>,
        side: Side,
        fail: Option<Cause>,
        out: &mut Vec<Outcome_>,
    ) -> TResult<()> {
        let p = &drv.cfg.procs[i];
        match &p.body {
            Process::In { chan, .. } => {
                let groups = self.groups(
                    (&drv.cfg.frame, &p.body),
                    fol.map(|(f, j)| (&f.cfg.frame, &f.cfg.procs[j].body)),
                )?;
                for g in groups {
                    let act = LAction::new(
                        p.label.clone(),
                        ActionKind::In { chan: chan.clone(), recipe: g.recipe },
                    );
                    let mut d = drv.clone();
                    let lp = d.cfg.procs.remove(i);
                    d.focus = Some(LProc::new(lp.label, g.drv));
                    let f = fol.map(|(f, j)| {
                        let mut f = f.clone();
                        let lp = f.cfg.procs.remove(j);
                        f.focus = Some(LProc::new(lp.label, g.fol.clone().unwrap()));
                        f
                    });
                    self.phase(
                        Partial {
                            drv: d,
                            fol: f,
                            side,
                            fail: fail.clone(),
                            acts: vec![CAction::Foc(act)],
                            fams: vec![g.fam],
                        },
                        out,
                    )?;
                }
            }
            Process::Bang { .. } => {
                let Some((act, d)) = crate::compressed_lts::start_session(self.th, drv, i, None, &self.bounds)? else {
                    return Ok(());
                };
                let CAction::Foc(inner) = &act else { unreachable!() };
                let ActionKind::Sess { fresh, .. } = &inner.kind else { unreachable!() };
                let (f, fail) = match fol {
                    None => (None, fail),
                    Some((f, j)) => {
                        match crate::compressed_lts::start_session(self.th, f, j, Some(fresh), &self.bounds)? {
                            Some((_, f)) => (Some(f), fail),
                            None => (None, Some(Cause::NoMatchingTrace)),
                        }
                    }
                };
                self.phase(
                    Partial {
                        drv: d,
                        fol: f,
                        side,
                        fail,
                        acts: vec![act],
                        fams: vec![],
                    },
                    out,
                )?;
            }
            _ => unreachable!("not a start candidate"),
        }
        Ok(())
    }

    /// Continues a block after its focus action.
    fn phase(&self, mut st: Partial, out: &mut Vec<Outcome_>) -> TResult<()> {
        loop {
            self.note_e(&st.drv);
            if let Some(f) = &st.fol {
                self.note_e(f);
            }
            let focus = st.drv.focus.clone();
            match focus {
                Some(fp) if fp.body.is_positive() => {
                    let Process::In { chan, .. } = &fp.body else { unreachable!() };
                    let fol_ok = match &st.fol {
                        Some(f) => matches!(&f.focus, Some(q) if q.label == fp.label && skeleton(&q.body) == skeleton(&fp.body)),
                        None => false,
                    };
                    if st.fol.is_some() && !fol_ok {
                        st.fol = None;
                        st.fail = Some(Cause::NoMatchingTrace);
                    }
                    let fq = st.fol.as_ref().map(|f| f.focus.clone().unwrap());
                    let groups = self.groups(
                        (&st.drv.cfg.frame, &fp.body),
                        st.fol.as_ref().map(|f| (&f.cfg.frame, &fq.as_ref().unwrap().body)),
                    )?;
                    for g in groups {
                        let mut d = st.drv.clone();
                        d.focus = Some(LProc::new(fp.label.clone(), g.drv));
                        let f = st.fol.as_ref().map(|f| {
                            let mut f = f.clone();
                            f.focus = Some(LProc::new(fp.label.clone(), g.fol.clone().unwrap()));
                            f
                        });
                        let mut acts = st.acts.clone();
                        acts.push(CAction::Act(LAction::new(
                            fp.label.clone(),
                            ActionKind::In { chan: chan.clone(), recipe: g.recipe },
                        )));
                        let mut fams = st.fams.clone();
                        fams.push(g.fam);
                        self.phase(
                            Partial {
                                drv: d,
                                fol: f,
                                side: st.side,
                                fail: st.fail.clone(),
                                acts,
                                fams,
                            },
                            out,
                        )?;
                    }
                    return Ok(());
                }
                Some(_) => {
                    let opt = self.mode.improper_opt();
                    let (ra, d) = release(&st.drv, opt);
                    if let Some(f) = &st.fol {
                        let same = f.focus.as_ref().map(|q| (&q.label, q.body.is_positive()))
                            == st.drv.focus.as_ref().map(|q| (&q.label, false));
                        let rb = if same { Some(release(f, opt)) } else { None };
                        match rb {
                            Some((rb, nf)) if rb == ra => st.fol = Some(nf),
                            _ => {
                                st.fol = None;
                                st.fail = Some(Cause::NoMatchingTrace);
                            }
                        }
                    }
                    st.acts.push(ra);
                    st.drv = d;
                }
                None => {
                    let na = if is_initial(&st.drv.cfg.procs) {
                        None
                    } else {
                        neg_step(self.th, &st.drv)?
                    };
                    let nb = match &st.fol {
                        Some(f) if !is_initial(&f.cfg.procs) => neg_step(self.th, f)?,
                        _ => None,
                    };
                    match (na, nb) {
                        (None, None) => {
                            out.push(Outcome_ {
                                acts: st.acts,
                                fams: st.fams,
                                drv: st.drv,
                                fol: st.fol,
                                side: st.side,
                                fail: st.fail,
                            });
                            return Ok(());
                        }
                        (None, Some(_)) => {
                            // the follower goes on alone: its trace is the witness
                            let f = st.fol.take().unwrap();
                            let flipped = Partial {
                                drv: f,
                                fol: None,
                                side: st.side.flip(),
                                fail: Some(Cause::NoMatchingTrace),
                                acts: st.acts,
                                fams: st.fams,
                            };
                            return self.phase(flipped, out);
                        }
                        (Some((a, d)), nb) => {
                            match nb {
                                Some((b, f)) if b == a => {
                                    if let CAction::Act(LAction { kind: ActionKind::Out { .. }, .. }) = &a {
                                        if let Some(cause) = frame_check(self.space, &d.cfg.frame, &f.cfg.frame)? {
                                            st.fol = None;
                                            st.fail = Some(cause);
                                        } else {
                                            st.fol = Some(f);
                                        }
                                    } else {
                                        st.fol = Some(f);
                                    }
                                }
                                _ => {
                                    if st.fol.is_some() {
                                        st.fol = None;
                                        st.fail = Some(Cause::NoMatchingTrace);
                                    }
                                }
                            }
                            st.acts.push(a);
                            st.drv = d;
                        }
                    }
                }
            }
        }
    }
}

struct Partial {
    drv: EConfig,
    fol: Option<EConfig>,
    side: Side,
    fail: Option<Cause>,
    acts: Vec<CAction>,
    fams: Vec<Fam>,
}

struct Outcome_ {
    acts: Vec<CAction>,
    fams: Vec<Fam>,
    drv: EConfig,
    fol: Option<EConfig>,
    side: Side,
    fail: Option<Cause>,
}

struct Search {
    failure: Option<Failure>,
    stats: ExplorationStats,
}

/// Breadth-first exploration from `root`. Frontier nodes are kept in the
/// lexicographic order of their first paths, so the first failing node
/// yields the shortest, lexicographically least witness.
fn search(ctx: &Ctx<'_>, root: Node, prefix: Vec<CAction>) -> Result<Search, Error> {
    let started = Instant::now();
    let mut nodes: Vec<Node> = vec![root.clone()];
    let mut index: HashMap<Node, usize> = HashMap::new();
    index.insert(root, 0);
    let mut parent: Vec<Option<(usize, Vec<CAction>)>> = vec![None];
    let mut children: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
    // nodes whose every block was pruned: explored, but not complete
    let mut dead: Vec<bool> = vec![false];
    let mut frontier = vec![0usize];
    let mut stats = ExplorationStats::default();
    let mut failure = None;
    while !frontier.is_empty() {
        stats.max_frontier = stats.max_frontier.max(frontier.len());
        let results: Vec<TResult<Expansion>> = frontier
            .par_iter()
            .map(|&id| {
                let n = &nodes[id];
                match ctx.mode {
                    Mode::Regular => ctx.regular_expand(n),
                    Mode::Annotated => ctx.annotated_expand(n),
                    _ => ctx.block_expand(n),
                }
            })
            .collect();
        let mut next = Vec::new();
        for (&id, res) in frontier.iter().zip(results) {
            let mut ex = res?;
            stats.pruned_by_authorised += ex.pruned;
            dead[id] = ex.pruned > 0 && ex.edges.is_empty();
            if !ex.failures.is_empty() {
                let f = ex
                    .failures
                    .into_iter()
                    .min_by(|x, y| (x.side as u8, &x.steps).cmp(&(y.side as u8, &y.steps)))
                    .unwrap();
                let mut steps = path_to(&parent, id);
                steps.extend(f.steps);
                let mut full = prefix.clone();
                full.extend(steps);
                failure = Some(Failure {
                    steps: full,
                    side: f.side,
                    cause: f.cause,
                });
                break;
            }
            ex.edges.sort_by(|x, y| x.steps.cmp(&y.steps));
            for e in ex.edges {
                stats.blocks_executed += 1;
                let child = match index.get(&e.next) {
                    Some(&c) => c,
                    None => {
                        let c = nodes.len();
                        index.insert(e.next.clone(), c);
                        nodes.push(e.next);
                        parent.push(Some((id, e.steps)));
                        children.push(Vec::new());
                        dead.push(false);
                        next.push(c);
                        c
                    }
                };
                children[id].push((child, e.proper));
            }
            if nodes.len() > ctx.bounds.step_budget {
                stats.budget_exhausted = true;
                break;
            }
        }
        if failure.is_some() || stats.budget_exhausted {
            break;
        }
        frontier = next;
    }
    stats.states_visited = nodes.len();
    let (traces, proper) = count_paths(&children, &dead);
    stats.traces_explored = traces;
    stats.complete_proper_traces = ctx.mode.is_block().then_some(proper);
    stats.well_labelling_violations = ctx.wl_violations.load(AtomicOrdering::Relaxed);
    stats.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(Search { failure, stats })
}

fn path_to(parent: &[Option<(usize, Vec<CAction>)>], mut id: usize) -> Vec<CAction> {
    let mut segs = Vec::new();
    while let Some((p, steps)) = &parent[id] {
        segs.push(steps.clone());
        id = *p;
    }
    segs.into_iter().rev().flatten().collect()
}

/// Maximal paths from the root, and those using proper edges only.
fn count_paths(children: &[Vec<(usize, bool)>], dead: &[bool]) -> (u128, u128) {
    let n = children.len();
    let mut memo: Vec<Option<(u128, u128)>> = vec![None; n];
    let mut stack = vec![(0usize, false)];
    while let Some((id, expanded)) = stack.pop() {
        if memo[id].is_some() {
            continue;
        }
        if !expanded {
            stack.push((id, true));
            for &(c, _) in &children[id] {
                if memo[c].is_none() {
                    stack.push((c, false));
                }
            }
            continue;
        }
        let v = if children[id].is_empty() {
            (1, if dead[id] { 0 } else { 1 })
        } else {
            children[id].iter().fold((0u128, 0u128), |(t, p), &(c, proper)| {
                let (ct, cp) = memo[c].expect("child counted");
                (t.saturating_add(ct), if proper { p.saturating_add(cp) } else { p })
            })
        };
        memo[id] = Some(v);
    }
    memo[0].unwrap_or((1, 1))
}

fn ctx<'a>(space: &'a RecipeSpace, mode: Mode, bounds: &Bounds) -> Ctx<'a> {
    Ctx {
        space,
        th: &space.theory,
        bounds: *bounds,
        mode,
        wl_violations: AtomicUsize::new(0),
    }
}

fn to_witness(mode: Mode, f: Failure) -> Witness {
    let trace = if mode.is_block() {
        WitnessTrace::Compressed(f.steps)
    } else {
        WitnessTrace::Labelled(
            f.steps
                .into_iter()
                .map(|a| match a {
                    CAction::Act(x) => x,
                    _ => unreachable!(),
                })
                .collect(),
        )
    };
    Witness {
        side: f.side,
        trace,
        cause: f.cause,
    }
}

/// Runs the block-mode negative preamble on both sides; a mismatch is an
/// immediate witness.
fn preamble(ctx: &Ctx<'_>, a: &Config, b: Option<&Config>) -> TResult<Result<(Vec<CAction>, Node), Failure>> {
    let th = ctx.th;
    let (pa, ea) = neg_preamble(th, &EConfig::unfocused(a.clone()))?;
    let Some(b) = b else {
        return Ok(Ok((pa, Node { a: ea.cfg, b: None, hist: vec![] })));
    };
    let (pb, eb) = neg_preamble(th, &EConfig::unfocused(b.clone()))?;
    let common = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
    // frames along the common part
    let mut ca = EConfig::unfocused(a.clone());
    let mut cb = EConfig::unfocused(b.clone());
    for k in 0..common {
        ca = neg_step(th, &ca)?.expect("replayable").1;
        cb = neg_step(th, &cb)?.expect("replayable").1;
        if matches!(&pa[k], CAction::Act(LAction { kind: ActionKind::Out { .. }, .. })) {
            if let Some(cause) = frame_check(ctx.space, &ca.cfg.frame, &cb.cfg.frame)? {
                return Ok(Err(Failure {
                    steps: pa[..=k].to_vec(),
                    side: Side::Left,
                    cause,
                }));
            }
        }
    }
    if common < pa.len() {
        return Ok(Err(Failure {
            steps: pa[..=common].to_vec(),
            side: Side::Left,
            cause: Cause::NoMatchingTrace,
        }));
    }
    if common < pb.len() {
        return Ok(Err(Failure {
            steps: pb[..=common].to_vec(),
            side: Side::Right,
            cause: Cause::NoMatchingTrace,
        }));
    }
    Ok(Ok((pa, Node { a: ea.cfg, b: Some(eb.cfg), hist: vec![] })))
}

fn precondition(space: &RecipeSpace, mode: Mode, a: &Config, b: &Config, bounds: &Bounds) -> Result<(), Error> {
    if mode != Mode::Regular {
        let (sa, sb) = (a.labelled_skeletons(), b.labelled_skeletons());
        if sa != sb {
            let show = |s: &[(Label, Skeleton)]| {
                s.iter().map(|(l, k)| format!("{k}^{l}")).collect::<Vec<_>>().join(", ")
            };
            return Err(Error::Precondition(format!(
                "labelled skeletons differ: {{{}}} vs {{{}}}",
                show(&sa),
                show(&sb)
            )));
        }
    }
    for (side, c) in [("left", a), ("right", b)] {
        let d = check_action_deterministic(space, c, bounds)?;
        if !d.deterministic {
            return Err(Error::Precondition(format!(
                "{side} process is not action-deterministic: {}",
                d.conflict.unwrap_or_default()
            )));
        }
    }
    Ok(())
}

/// Decides `a ≈ b` under `mode` within `bounds`. Inequivalence witnesses
/// are replayed before being returned.
pub fn check_equiv(space: &RecipeSpace, a: &Config, b: &Config, mode: Mode, bounds: &Bounds) -> Result<Verdict, Error> {
    precondition(space, mode, a, b, bounds)?;
    check_equiv_unchecked(space, a, b, mode, bounds)
}

/// [`check_equiv`] without the skeleton and action-determinism checks.
pub fn check_equiv_unchecked(space: &RecipeSpace, a: &Config, b: &Config, mode: Mode, bounds: &Bounds) -> Result<Verdict, Error> {
    let started = Instant::now();
    let mut stats = ExplorationStats::default();
    let mut failure = None;
    if let Some(cause) = frame_check(space, &a.frame, &b.frame)? {
        failure = Some(Failure {
            steps: vec![],
            side: Side::Left,
            cause,
        });
    } else if mode == Mode::Regular {
        // one inclusion per direction, keeping the better witness
        for (x, y, side) in [(a, b, Side::Left), (b, a, Side::Right)] {
            let c = ctx(space, mode, bounds);
            let root = Node {
                a: x.clone(),
                b: Some(c.saturate(y)?),
                hist: vec![],
            };
            let s = search(&c, root, vec![])?;
            stats.absorb(&s.stats);
            if let Some(mut f) = s.failure {
                if side == Side::Right {
                    f.side = f.side.flip();
                }
                let better = match &failure {
                    None => true,
                    Some(g) => f.steps.len() < g.steps.len(),
                };
                if better {
                    failure = Some(f);
                }
            }
        }
    } else {
        let c = ctx(space, mode, bounds);
        let (prefix, root) = if mode.is_block() {
            match preamble(&c, a, Some(b))? {
                Ok(x) => x,
                Err(f) => {
                    failure = Some(f);
                    (vec![], Node { a: a.clone(), b: None, hist: vec![] })
                }
            }
        } else {
            (vec![], Node { a: a.clone(), b: Some(b.clone()), hist: vec![] })
        };
        if failure.is_none() {
            let s = search(&c, root, prefix)?;
            stats.absorb(&s.stats);
            failure = s.failure;
        }
    }
    stats.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    let outcome = match failure {
        None => Outcome::Equivalent,
        Some(f) => {
            let w = to_witness(mode, f);
            if !validate_witness(space, a, b, mode, bounds, &w)? {
                return Err(Error::Witness(format!("{mode} witness {} did not replay", w.trace)));
            }
            Outcome::Inequivalent(w)
        }
    };
    Ok(Verdict {
        mode,
        outcome,
        bounds: *bounds,
        stats,
    })
}

/// Single-sided exploration of `a` under `mode`, for statistics.
pub fn explore(space: &RecipeSpace, a: &Config, mode: Mode, bounds: &Bounds) -> Result<ExplorationStats, Error> {
    let c = ctx(space, mode, bounds);
    let (prefix, root) = if mode.is_block() {
        match preamble(&c, a, None)? {
            Ok(x) => x,
            Err(_) => unreachable!("single-sided preamble cannot fail"),
        }
    } else {
        (vec![], Node { a: a.clone(), b: None, hist: vec![] })
    };
    Ok(search(&c, root, prefix)?.stats)
}

/// The follower side of the regular semantics: matches observable actions
/// by channel, keeping the configuration saturated.
fn regular_follow(space: &RecipeSpace, b: &Config, tr: &[LAction], bounds: &Bounds) -> TResult<Option<Config>> {
    let c = ctx(space, Mode::Regular, bounds);
    let mut cur = c.saturate(b)?;
    for a in obs(tr) {
        let Some(j) = Ctx::follower_by_skeleton(&cur, &a.skeleton()) else {
            return Ok(None);
        };
        let next = match &a.kind {
            ActionKind::In { recipe, .. } => {
                let mut hs = Vec::new();
                recipe.handles(&mut hs);
                if hs.iter().any(|h| cur.frame.get(*h).is_none()) {
                    return Ok(None);
                }
                let msg = crate::term_algebra::apply_recipe(c.th, recipe, &cur.frame)?;
                let (_, var, cont) = input_parts(&cur.procs[j].body);
                let body = input_continuation(c.th, var, cont, &msg)?;
                let mut n = cur.clone();
                n.procs[j].body = body;
                Some(n)
            }
            ActionKind::Out { handle, .. } => fire(c.th, &cur, j, &Fire::Out(*handle), bounds.sessions)?.map(|x| x.1),
            ActionKind::Sess { fresh, .. } => fire(c.th, &cur, j, &Fire::Sess(fresh), bounds.sessions)?.map(|x| x.1),
            _ => unreachable!(),
        };
        match next {
            Some(n) => cur = c.saturate(&n)?,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

fn frames_distinguish(th: &Theory, phi: &Frame, psi: &Frame, m: &Term, n: &Term) -> TResult<bool> {
    use crate::term_algebra::apply_recipe;
    let e1 = apply_recipe(th, m, phi)? == apply_recipe(th, n, phi)?;
    let e2 = apply_recipe(th, m, psi)? == apply_recipe(th, n, psi)?;
    Ok(e1 != e2)
}

const REPLAY_CAP: usize = 1 << 16;

/// Replays a witness: the performing side executes it; the other side
/// either cannot, or reaches a frame the claimed test separates.
pub fn validate_witness(space: &RecipeSpace, a: &Config, b: &Config, mode: Mode, bounds: &Bounds, w: &Witness) -> Result<bool, Error> {
    let th = &*space.theory;
    let (me, other) = match w.side {
        Side::Left => (a, b),
        Side::Right => (b, a),
    };
    let (mine, theirs): (Option<Frame>, Option<Frame>) = match (&w.trace, mode) {
        (WitnessTrace::Labelled(tr), Mode::Regular) => (
            replay(th, me, tr, bounds)?.map(|c| c.frame),
            regular_follow(space, other, tr, bounds)?.map(|c| c.frame),
        ),
        (WitnessTrace::Labelled(tr), _) => (
            replay(th, me, tr, bounds)?.map(|c| c.frame),
            replay(th, other, tr, bounds)?.map(|c| c.frame),
        ),
        (WitnessTrace::Compressed(tr), m) => {
            let opt = m.improper_opt();
            let run = |c: &Config| -> Result<Option<Frame>, Error> {
                let e = EConfig::unfocused(c.clone());
                if !m.is_reduced() {
                    return Ok(replay_compressed(th, &e, tr, bounds, opt)?.map(|x| x.cfg.frame));
                }
                // deterministic preamble, then authorised blocks
                let (pre, e1) = neg_preamble(th, &e)?;
                if tr.len() < pre.len() || tr[..pre.len()] != pre[..] {
                    return Ok(replay_compressed(th, &e, tr, bounds, opt)?.map(|x| x.cfg.frame));
                }
                let rest = &tr[pre.len()..];
                let Ok(blocks) = segment_blocks(rest) else {
                    return Ok(None);
                };
                replay_reduced(space, &e1, &blocks, bounds, opt, REPLAY_CAP)
                    .map(|r| r.map(|x| x.cfg.frame))
                    .map_err(|e| match e {
                        crate::reduced_lts::OracleError::Term(t) => Error::Term(t),
                        o => Error::Witness(o.to_string()),
                    })
            };
            let mine = run(me)?;
            let theirs = replay_compressed(th, &EConfig::unfocused(other.clone()), tr, bounds, opt)?.map(|x| x.cfg.frame);
            (mine, theirs)
        }
    };
    let Some(mine) = mine else { return Ok(false) };
    Ok(match (&w.cause, theirs) {
        (Cause::NoMatchingTrace, t) => t.is_none(),
        (Cause::FrameDistinguished(m, n), Some(t)) => frames_distinguish(th, &mine, &t, m, n)?,
        (Cause::DomainMismatch, Some(t)) => mine.domain() != t.domain(),
        _ => false,
    })
}

/// All six semantics side by side.
#[derive(Clone, Debug)]
pub struct CrossReport {
    pub verdicts: Vec<Verdict>,
}

impl CrossReport {
    pub fn agree(&self) -> bool {
        self.verdicts
            .windows(2)
            .all(|w| w[0].is_equivalent() == w[1].is_equivalent())
    }

    pub fn discrepancy(&self) -> Option<String> {
        if self.agree() {
            return None;
        }
        Some(
            self.verdicts
                .iter()
                .map(|v| format!("{}={}", v.mode, if v.is_equivalent() { "equiv" } else { "inequiv" }))
                .collect::<Vec<_>>()
                .join(", "),
        )
    }
}

pub fn cross_validate(space: &RecipeSpace, a: &Config, b: &Config, bounds: &Bounds) -> Result<CrossReport, Error> {
    precondition(space, Mode::Annotated, a, b, bounds)?;
    let verdicts = Mode::ALL
        .par_iter()
        .map(|&m| check_equiv_unchecked(space, a, b, m, bounds))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CrossReport { verdicts })
}
