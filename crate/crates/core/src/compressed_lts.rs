//! Focused semantics: enriched configurations, positive and negative
//! phases, blocks, and the translations back to annotated form.

use std::fmt;

use thiserror::Error;

use crate::annotated_lts::{apply_action, fire, fire_input, ActionKind, Bounds, Config, Fire, LAction, LProc, Trace};
use crate::process_calculus::{skeleton, Label, Process};
use crate::term_algebra::{apply_recipe, Atom, RecipeSpace, TResult, Term, Theory};

/// `(P; F; Φ)`: a configuration plus an optional process under focus.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct EConfig {
    pub cfg: Config,
    pub focus: Option<LProc>,
}

impl EConfig {
    pub fn unfocused(cfg: Config) -> EConfig {
        EConfig { cfg, focus: None }
    }

    /// Unfocused with an initial multiset.
    pub fn is_initial(&self) -> bool {
        self.focus.is_none() && is_initial(&self.cfg.procs)
    }
}

impl fmt::Display for EConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.focus {
            None => write!(f, "{}", self.cfg),
            Some(p) => write!(f, "{} with focus {}", self.cfg, p),
        }
    }
}

/// Only positive or replicated processes.
pub fn is_initial(procs: &[LProc]) -> bool {
    procs
        .iter()
        .all(|p| p.body.is_positive() || p.body.is_replicated())
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum CAction {
    Foc(LAction),
    Act(LAction),
    /// `discard` marks the improper-block release that drops the rest of
    /// the configuration.
    Rel { label: Label, discard: bool },
}

impl fmt::Display for CAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CAction::Foc(a) => write!(f, "foc({})^{}", a.unlabelled(), a.label),
            CAction::Act(a) => write!(f, "{a}"),
            CAction::Rel { label, discard } => {
                write!(f, "rel^{label}")?;
                if *discard {
                    write!(f, "!")?;
                }
                Ok(())
            }
        }
    }
}

/// Index of the process the negative phase acts on: the negative,
/// non-replicated process with the least labelled skeleton.
pub fn neg_choice(procs: &[LProc]) -> Option<usize> {
    procs
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.body.is_positive() && !p.body.is_replicated())
        .min_by(|(_, a), (_, b)| {
            skeleton(&a.body)
                .cmp(&skeleton(&b.body))
                .then_with(|| a.label.cmp(&b.label))
        })
        .map(|(i, _)| i)
}

/// The single negative-phase step of an unfocused, non-initial configuration.
pub fn neg_step(th: &Theory, e: &EConfig) -> TResult<Option<(CAction, EConfig)>> {
    debug_assert!(e.focus.is_none());
    let Some(idx) = neg_choice(&e.cfg.procs) else {
        return Ok(None);
    };
    Ok(fire(th, &e.cfg, idx, &Fire::Plain, u32::MAX)?
        .map(|(a, cfg)| (CAction::Act(a), EConfig::unfocused(cfg))))
}

/// Processes that may start a block: inputs, and replications within the
/// session budget.
pub fn start_candidates(e: &EConfig, bounds: &Bounds) -> Vec<usize> {
    e.cfg
        .procs
        .iter()
        .enumerate()
        .filter(|(_, p)| match p.body {
            Process::In { .. } => true,
            Process::Bang { .. } => e.cfg.sessions < bounds.sessions,
            _ => false,
        })
        .map(|(i, _)| i)
        .collect()
}

/// Start/In: focus the input process at `idx` after it receives `msg`.
pub fn start_input(th: &Theory, e: &EConfig, idx: usize, recipe: &Term, msg: &Term) -> TResult<(CAction, EConfig)> {
    let (a, mut cfg) = fire_input(th, &e.cfg, idx, recipe, msg)?;
    let focus = cfg.procs.remove(idx);
    Ok((CAction::Foc(a), EConfig { cfg, focus: Some(focus) }))
}

/// Start/!: open a session and focus its fresh copy.
pub fn start_session(
    th: &Theory,
    e: &EConfig,
    idx: usize,
    fresh: Option<&[Atom]>,
    bounds: &Bounds,
) -> TResult<Option<(CAction, EConfig)>> {
    let how = match fresh {
        Some(f) => Fire::Sess(f),
        None => Fire::Plain,
    };
    let Some((a, mut cfg)) = fire(th, &e.cfg, idx, &how, bounds.sessions)? else {
        return Ok(None);
    };
    let copy_label = a.label.child(1);
    let pos = cfg.find(&copy_label).expect("session copy");
    let focus = cfg.procs.remove(pos);
    Ok(Some((CAction::Foc(a), EConfig { cfg, focus: Some(focus) })))
}

fn with_focus_alone(e: &EConfig) -> Config {
    Config {
        procs: vec![e.focus.clone().expect("focused")],
        frame: e.cfg.frame.clone(),
        sessions: e.cfg.sessions,
    }
}

/// Pos/In: the focused input receives `msg`.
pub fn pos_input(th: &Theory, e: &EConfig, recipe: &Term, msg: &Term) -> TResult<(CAction, EConfig)> {
    let alone = with_focus_alone(e);
    let (a, mut after) = fire_input(th, &alone, 0, recipe, msg)?;
    let focus = after.procs.pop();
    Ok((
        CAction::Act(a),
        EConfig {
            cfg: e.cfg.clone(),
            focus,
        },
    ))
}

/// Release (or Release_i when `improper_opt` holds and the focus is `0`).
pub fn release(e: &EConfig, improper_opt: bool) -> (CAction, EConfig) {
    let focus = e.focus.clone().expect("focused");
    let label = focus.label.clone();
    if improper_opt && focus.body == Process::Zero {
        let mut cfg = e.cfg.clone();
        cfg.procs.clear();
        return (CAction::Rel { label, discard: true }, EConfig::unfocused(cfg));
    }
    let mut cfg = e.cfg.clone();
    cfg.procs.push(focus);
    cfg.procs.sort();
    (CAction::Rel { label, discard: false }, EConfig::unfocused(cfg))
}

/// Every compressed transition, inputs expanded over the whole bounded
/// recipe space.
pub fn compressed_steps(
    space: &RecipeSpace,
    e: &EConfig,
    bounds: &Bounds,
    improper_opt: bool,
) -> TResult<Vec<(CAction, EConfig)>> {
    let th = &*space.theory;
    let mut out = Vec::new();
    match &e.focus {
        Some(f) if f.body.is_positive() => {
            let table = space.table(&e.cfg.frame)?;
            for r in 0..table.universe.len() {
                out.push(pos_input(th, e, table.universe.recipe(r), table.value(r))?);
            }
        }
        Some(_) => out.push(release(e, improper_opt)),
        None if !is_initial(&e.cfg.procs) => out.extend(neg_step(th, e)?),
        None => {
            for idx in start_candidates(e, bounds) {
                if e.cfg.procs[idx].body.is_positive() {
                    let table = space.table(&e.cfg.frame)?;
                    for r in 0..table.universe.len() {
                        out.push(start_input(th, e, idx, table.universe.recipe(r), table.value(r))?);
                    }
                } else {
                    out.extend(start_session(th, e, idx, None, bounds)?);
                }
            }
        }
    }
    Ok(out)
}

/// Replays one compressed action; `None` if it is not executable.
pub fn apply_caction(
    th: &Theory,
    e: &EConfig,
    a: &CAction,
    bounds: &Bounds,
    improper_opt: bool,
) -> TResult<Option<EConfig>> {
    let recipe_msg = |recipe: &Term| -> TResult<Option<Term>> {
        let mut hs = Vec::new();
        recipe.handles(&mut hs);
        if !recipe.is_recipe() || hs.iter().any(|h| e.cfg.frame.get(*h).is_none()) {
            return Ok(None);
        }
        apply_recipe(th, recipe, &e.cfg.frame).map(Some)
    };
    match a {
        CAction::Foc(inner) => {
            if !e.is_initial() {
                return Ok(None);
            }
            let Some(idx) = e.cfg.find(&inner.label) else {
                return Ok(None);
            };
            match (&inner.kind, &e.cfg.procs[idx].body) {
                (ActionKind::In { chan, recipe }, Process::In { chan: c, .. }) if chan == c => {
                    let Some(msg) = recipe_msg(recipe)? else {
                        return Ok(None);
                    };
                    Ok(Some(start_input(th, e, idx, recipe, &msg)?.1))
                }
                (ActionKind::Sess { chan, fresh }, Process::Bang { chan: c, .. }) if chan == c => {
                    Ok(start_session(th, e, idx, Some(fresh), bounds)?.map(|(_, n)| n))
                }
                _ => Ok(None),
            }
        }
        CAction::Act(inner) => match (&e.focus, &inner.kind) {
            (Some(f), ActionKind::In { chan, recipe }) => match &f.body {
                Process::In { chan: c, .. } if c == chan && f.label == inner.label => {
                    let Some(msg) = recipe_msg(recipe)? else {
                        return Ok(None);
                    };
                    Ok(Some(pos_input(th, e, recipe, &msg)?.1))
                }
                _ => Ok(None),
            },
            (Some(_), _) => Ok(None),
            (None, ActionKind::In { .. }) => Ok(None),
            (None, _) => {
                let Some(idx) = neg_choice(&e.cfg.procs) else {
                    return Ok(None);
                };
                if e.cfg.procs[idx].label != inner.label || is_initial(&e.cfg.procs) {
                    return Ok(None);
                }
                Ok(apply_action(th, &e.cfg, inner, bounds)?.map(EConfig::unfocused))
            }
        },
        CAction::Rel { label, discard } => match &e.focus {
            Some(f) if !f.body.is_positive() && &f.label == label => {
                let (act, next) = release(e, improper_opt);
                match act {
                    CAction::Rel { discard: d, .. } if d == *discard => Ok(Some(next)),
                    _ => Ok(None),
                }
            }
            _ => Ok(None),
        },
    }
}

pub fn replay_compressed(
    th: &Theory,
    e: &EConfig,
    tr: &[CAction],
    bounds: &Bounds,
    improper_opt: bool,
) -> TResult<Option<EConfig>> {
    let mut cur = e.clone();
    for a in tr {
        match apply_caction(th, &cur, a, bounds, improper_opt)? {
            Some(n) => cur = n,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// `⌊(P; F; Φ)⌋ = (P ⊎ F; Φ)`.
pub fn defoc_config(e: &EConfig) -> Config {
    let mut cfg = e.cfg.clone();
    if let Some(f) = &e.focus {
        cfg.procs.push(f.clone());
        cfg.procs.sort();
    }
    cfg
}

/// Drops releases and unwraps focus actions.
pub fn defoc_trace(tr: &[CAction]) -> Trace {
    tr.iter()
        .filter_map(|a| match a {
            CAction::Foc(x) | CAction::Act(x) => Some(x.clone()),
            CAction::Rel { .. } => None,
        })
        .collect()
}

/// `foc(α).tr⁺.rel.tr⁻`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Block {
    pub focus: LAction,
    pub positive: Vec<LAction>,
    pub release: Label,
    pub discard: bool,
    pub negative: Vec<LAction>,
}

impl Block {
    /// A block whose negative phase is a lone `zero` (or was discarded
    /// by the improper-block release).
    pub fn is_improper(&self) -> bool {
        self.discard || (self.negative.len() == 1 && self.negative[0].kind == ActionKind::Zero)
    }

    /// `b⁺ = α.tr⁺`.
    pub fn plus(&self) -> impl Iterator<Item = &LAction> {
        std::iter::once(&self.focus).chain(self.positive.iter())
    }

    /// Labelled actions of the block, in order.
    pub fn labelled_actions(&self) -> impl Iterator<Item = &LAction> {
        self.plus().chain(self.negative.iter())
    }

    pub fn actions(&self) -> Vec<CAction> {
        let mut v = vec![CAction::Foc(self.focus.clone())];
        v.extend(self.positive.iter().cloned().map(CAction::Act));
        v.push(CAction::Rel {
            label: self.release.clone(),
            discard: self.discard,
        });
        v.extend(self.negative.iter().cloned().map(CAction::Act));
        v
    }

    /// Input recipes of the positive part, in order.
    pub fn recipes(&self) -> Vec<&Term> {
        self.plus()
            .filter_map(|a| match &a.kind {
                ActionKind::In { recipe, .. } => Some(recipe),
                _ => None,
            })
            .collect()
    }

    /// Output handles of the negative part.
    pub fn outputs(&self) -> Vec<u32> {
        self.negative
            .iter()
            .filter_map(|a| match a.kind {
                ActionKind::Out { handle, .. } => Some(handle),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.actions().iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "]")
    }
}

pub fn blocks_to_trace(bs: &[Block]) -> Vec<CAction> {
    bs.iter().flat_map(Block::actions).collect()
}

/// Runs the deterministic negative phase until the configuration is initial.
pub fn neg_preamble(th: &Theory, e: &EConfig) -> TResult<(Vec<CAction>, EConfig)> {
    let mut cur = e.clone();
    let mut acts = Vec::new();
    while cur.focus.is_none() && !cur.is_initial() {
        match neg_step(th, &cur)? {
            Some((a, n)) => {
                acts.push(a);
                cur = n;
            }
            None => break,
        }
    }
    Ok((acts, cur))
}

/// Finishes a block whose focus is negative: release, then the negative
/// phase.
pub fn close_block(th: &Theory, e: &EConfig, improper_opt: bool) -> TResult<(Label, bool, Vec<LAction>, EConfig)> {
    let (rel, after) = release(e, improper_opt);
    let CAction::Rel { label, discard } = rel else {
        unreachable!()
    };
    let (neg, end) = neg_preamble(th, &after)?;
    let negative = neg
        .into_iter()
        .map(|a| match a {
            CAction::Act(x) => x,
            _ => unreachable!("negative phase emits plain actions"),
        })
        .collect();
    Ok((label, discard, negative, end))
}

/// Every block executable from an initial configuration, inputs expanded
/// over the whole bounded recipe space.
pub fn blocks_from(
    space: &RecipeSpace,
    e: &EConfig,
    bounds: &Bounds,
    improper_opt: bool,
) -> TResult<Vec<(Block, EConfig)>> {
    let th = &*space.theory;
    let mut out = Vec::new();
    let mut stack: Vec<(LAction, Vec<LAction>, EConfig)> = Vec::new();
    for (a, n) in compressed_steps(space, e, bounds, improper_opt)? {
        let CAction::Foc(f) = a else { continue };
        stack.push((f, Vec::new(), n));
    }
    // depth-first, keeping the output in generation order
    stack.reverse();
    while let Some((focus, positive, cur)) = stack.pop() {
        let f = cur.focus.as_ref().expect("focused");
        if f.body.is_positive() {
            let mut kids = Vec::new();
            for (a, n) in compressed_steps(space, &cur, bounds, improper_opt)? {
                let CAction::Act(x) = a else { unreachable!() };
                let mut pos = positive.clone();
                pos.push(x);
                kids.push((focus.clone(), pos, n));
            }
            stack.extend(kids.into_iter().rev());
            continue;
        }
        let (release, discard, negative, end) = close_block(th, &cur, improper_opt)?;
        out.push((
            Block {
                focus,
                positive,
                release,
                discard,
                negative,
            },
            end,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("action {0} at position {1} does not fit the block structure")]
    Unexpected(String, usize),
    #[error("trace ends inside a positive phase")]
    Unfinished,
}

/// Splits a compressed trace between initial configurations into blocks.
pub fn segment_blocks(tr: &[CAction]) -> Result<Vec<Block>, SegmentError> {
    let mut out: Vec<Block> = Vec::new();
    let mut i = 0;
    while i < tr.len() {
        let CAction::Foc(focus) = &tr[i] else {
            return Err(SegmentError::Unexpected(tr[i].to_string(), i));
        };
        i += 1;
        let mut positive = Vec::new();
        while let Some(CAction::Act(a)) = tr.get(i) {
            if !matches!(a.kind, ActionKind::In { .. }) {
                return Err(SegmentError::Unexpected(a.to_string(), i));
            }
            positive.push(a.clone());
            i += 1;
        }
        let Some(CAction::Rel { label, discard }) = tr.get(i) else {
            return match tr.get(i) {
                None => Err(SegmentError::Unfinished),
                Some(a) => Err(SegmentError::Unexpected(a.to_string(), i)),
            };
        };
        i += 1;
        let mut negative = Vec::new();
        while let Some(CAction::Act(a)) = tr.get(i) {
            if matches!(a.kind, ActionKind::In { .. } | ActionKind::Sess { .. }) {
                return Err(SegmentError::Unexpected(a.to_string(), i));
            }
            negative.push(a.clone());
            i += 1;
        }
        out.push(Block {
            focus: focus.clone(),
            positive,
            release: label.clone(),
            discard: *discard,
            negative,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term_algebra::{Frame, Term};
    use std::sync::Arc;

    fn ok() -> Term {
        Term::constant("ok")
    }

    fn lp(l: &[u32], p: Process) -> LProc {
        LProc::new(Label(l.to_vec()), p)
    }

    #[test]
    fn initial_multisets() {
        assert!(is_initial(&[lp(&[], Process::input("c", "x", Process::Zero))]));
        assert!(!is_initial(&[lp(&[], Process::output("c", ok(), Process::Zero))]));
        assert!(is_initial(&[]));
    }

    #[test]
    fn start_release_and_neg() {
        let th = Arc::new(Theory::standard());
        let space = RecipeSpace::new(th.clone(), 0);
        let b = Bounds::default();
        let cfg = Config::from_procs(
            vec![lp(&[1], Process::input("c", "x", Process::output("c", ok(), Process::Zero)))],
            Frame::new(),
        );
        let e = EConfig::unfocused(cfg);
        let steps = compressed_steps(&space, &e, &b, false).unwrap();
        // depth 0, empty frame: the only recipe is `ok`
        assert_eq!(steps.len(), 1);
        assert!(matches!(steps[0].0, CAction::Foc(_)));
        let e1 = &steps[0].1;
        let steps = compressed_steps(&space, e1, &b, false).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(matches!(steps[0].0, CAction::Rel { discard: false, .. }));
        let e2 = &steps[0].1;
        assert!(e2.focus.is_none() && !e2.is_initial());
        let steps = compressed_steps(&space, e2, &b, false).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(matches!(&steps[0].0, CAction::Act(a) if matches!(a.kind, ActionKind::Out { .. })));
    }

    #[test]
    fn negative_phase_is_deterministic_and_blocks_starts() {
        let th = Arc::new(Theory::standard());
        let space = RecipeSpace::new(th.clone(), 1);
        let cfg = Config::from_procs(
            vec![
                lp(&[1], Process::output("c", ok(), Process::Zero)),
                lp(&[2], Process::input("d", "y", Process::Zero)),
            ],
            Frame::new(),
        );
        let steps = compressed_steps(&space, &EConfig::unfocused(cfg), &Bounds::default(), false).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(matches!(&steps[0].0, CAction::Act(a) if matches!(a.kind, ActionKind::Out { .. })));
    }

    #[test]
    fn improper_release_discards() {
        let e = EConfig {
            cfg: Config::from_procs(vec![lp(&[2], Process::input("d", "y", Process::Zero))], Frame::new()),
            focus: Some(lp(&[1], Process::Zero)),
        };
        let (a, n) = release(&e, true);
        assert_eq!(a, CAction::Rel { label: Label(vec![1]), discard: true });
        assert!(n.cfg.procs.is_empty());
        let (a, n) = release(&e, false);
        assert_eq!(a, CAction::Rel { label: Label(vec![1]), discard: false });
        assert_eq!(n.cfg.procs.len(), 2);
    }

    #[test]
    fn defoc_and_segments() {
        let l = Label(vec![1]);
        let inp = LAction::new(l.clone(), ActionKind::In { chan: "c".into(), recipe: ok() });
        let out = LAction::new(l.clone(), ActionKind::Out { chan: "c".into(), handle: 1 });
        let zero = LAction::new(l.clone(), ActionKind::Zero);
        let tr = vec![
            CAction::Foc(inp.clone()),
            CAction::Rel { label: l.clone(), discard: false },
            CAction::Act(out.clone()),
        ];
        assert_eq!(defoc_trace(&tr), vec![inp.clone(), out]);
        assert!(defoc_trace(&[]).is_empty());
        let bs = segment_blocks(&tr).unwrap();
        assert_eq!(bs.len(), 1);
        assert!(!bs[0].is_improper());
        let imp = vec![
            CAction::Foc(inp.clone()),
            CAction::Rel { label: l.clone(), discard: false },
            CAction::Act(zero),
        ];
        assert!(segment_blocks(&imp).unwrap()[0].is_improper());
        let mut two = tr.clone();
        two.extend(imp);
        assert_eq!(segment_blocks(&two).unwrap().len(), 2);
        assert_eq!(segment_blocks(&[CAction::Foc(inp)]), Err(SegmentError::Unfinished));
    }
}
