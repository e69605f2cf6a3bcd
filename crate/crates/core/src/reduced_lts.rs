//! Blocks as scheduling units: independence, the block order, the
//! authorised predicate, the reduced semantics and the brute-force
//! oracles for `≡_Φ` and Φ-minimality.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::annotated_lts::{independent, ActionKind, Bounds, LAction};
use crate::compressed_lts::{blocks_from, replay_compressed, Block, EConfig};
use crate::process_calculus::{Label, Skeleton};
use crate::term_algebra::{apply_recipe, fam_avoids, recipe_variants, Fam, Frame, RecipeSpace, TResult, Term, TermError, Theory};

/// The block's labelled actions with recipes erased.
pub type BlockKey = Vec<(Label, Skeleton)>;

pub fn block_key(b: &Block) -> BlockKey {
    b.labelled_actions().map(|a| (a.label.clone(), a.skeleton())).collect()
}

pub fn blocks_independent(b1: &Block, b2: &Block) -> bool {
    b1.labelled_actions()
        .all(|x| b2.labelled_actions().all(|y| independent(x, y)))
}

/// `≺`: lexicographic on block keys.
pub fn block_order(b1: &Block, b2: &Block) -> Ordering {
    block_key(b1).cmp(&block_key(b2))
}

fn messages(th: &Theory, b: &Block, phi: &Frame) -> TResult<Vec<Term>> {
    b.recipes().into_iter().map(|r| apply_recipe(th, r, phi)).collect()
}

fn strip_recipe(a: &LAction) -> LAction {
    match &a.kind {
        ActionKind::In { chan, .. } => LAction::new(
            a.label.clone(),
            ActionKind::In {
                chan: chan.clone(),
                recipe: Term::Handle(0),
            },
        ),
        _ => a.clone(),
    }
}

/// `(b1 =_E b2)Φ`: same shape, inputs deriving equal messages under Φ, and
/// identical negative parts.
pub fn block_eq_mod_frame(th: &Theory, b1: &Block, b2: &Block, phi: &Frame) -> TResult<bool> {
    let shape = |b: &Block| -> Vec<LAction> { b.plus().map(strip_recipe).collect() };
    if shape(b1) != shape(b2) || b1.release != b2.release || b1.discard != b2.discard || b1.negative != b2.negative {
        return Ok(false);
    }
    Ok(messages(th, b1, phi)? == messages(th, b2, phi)?)
}

/// `⊢_tr b`, evaluated literally.
pub fn authorised(b: &Block, tr: &[Block]) -> bool {
    let mut rest = tr;
    while let Some((b0, tr0)) = rest.split_last() {
        if !blocks_independent(b, b0) {
            return true;
        }
        if block_order(b0, b) != Ordering::Less {
            return false;
        }
        rest = tr0;
    }
    true
}

fn with_recipes(b: &Block, rs: &[Term]) -> Block {
    let mut out = b.clone();
    let mut it = rs.iter();
    for a in std::iter::once(&mut out.focus).chain(out.positive.iter_mut()) {
        if let ActionKind::In { recipe, .. } = &mut a.kind {
            *recipe = it.next().expect("recipe count").clone();
        }
    }
    out
}

/// Every block `b'` with `(b' =_E b)Φ` whose recipes have height ≤ depth
/// and only use handles of Φ. Fails if the product exceeds `cap`.
pub fn block_variants(th: &Theory, b: &Block, phi: &Frame, depth: usize, cap: usize) -> Result<Vec<Block>, OracleError> {
    let per: Vec<Vec<Term>> = b
        .recipes()
        .into_iter()
        .map(|r| recipe_variants(th, r, phi, depth))
        .collect::<TResult<_>>()?;
    let total = per.iter().try_fold(1usize, |acc, v| acc.checked_mul(v.len().max(1)));
    if total.map_or(true, |t| t > cap) {
        return Err(OracleError::Budget(cap));
    }
    if per.iter().any(|v| v.is_empty()) {
        return Ok(vec![b.clone()]);
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; per.len()];
    loop {
        let rs: Vec<Term> = idx.iter().zip(&per).map(|(&i, v)| v[i].clone()).collect();
        out.push(with_recipes(b, &rs));
        let mut k = per.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// The Block-rule side condition: every variant of `b` under the frame
/// current at its start is authorised after `tr`.
pub fn authorised_all_variants(th: &Theory, b: &Block, tr: &[Block], phi: &Frame, depth: usize, cap: usize) -> Result<bool, OracleError> {
    Ok(block_variants(th, b, phi, depth, cap)?
        .iter()
        .all(|v| authorised(v, tr)))
}

/// A recipe-free summary of an executed block, enough to decide the
/// Block rule for future blocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockSummary {
    pub key: BlockKey,
    /// Handles output by the block, as a bit mask (bit `h-1` for `wh`).
    pub outputs: u64,
}

impl BlockSummary {
    pub fn of(b: &Block) -> BlockSummary {
        BlockSummary {
            key: block_key(b),
            outputs: handle_mask(&b.outputs()),
        }
    }
}

pub fn handle_mask(hs: &[u32]) -> u64 {
    hs.iter().fold(0, |m, &h| m | (1u64 << (h - 1)))
}

fn labels_dependent(a: &BlockKey, b: &BlockKey) -> bool {
    a.iter().any(|(l, _)| b.iter().any(|(m, _)| l.dependent(m)))
}

/// The Block rule decided from derivability families: `fams` holds, per
/// input of the new block, the minimal handle sets from which its message
/// is derivable. Equivalent to [`authorised_all_variants`] when the
/// families are computed over the same recipe bound.
pub fn authorised_by_fams(key: &BlockKey, fams: &[&Fam], hist: &[BlockSummary]) -> bool {
    let mut avoid = 0u64;
    for b0 in hist.iter().rev() {
        if labels_dependent(key, &b0.key) {
            return true;
        }
        avoid |= b0.outputs;
        if !fams.iter().all(|f| fam_avoids(f, avoid)) {
            return true;
        }
        if b0.key >= *key {
            return false;
        }
    }
    true
}

/// A reduced state: the blocks executed so far and the current initial
/// configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReducedState {
    pub trace: Vec<Block>,
    pub config: EConfig,
}

/// Reduced transitions, inputs expanded over the whole bounded recipe
/// space and the side condition checked literally.
pub fn reduced_steps(
    space: &RecipeSpace,
    s: &ReducedState,
    bounds: &Bounds,
    improper_opt: bool,
    cap: usize,
) -> Result<Vec<(Block, ReducedState)>, OracleError> {
    let th = &*space.theory;
    let phi = &s.config.cfg.frame;
    let mut out = Vec::new();
    for (b, end) in blocks_from(space, &s.config, bounds, improper_opt)? {
        if authorised_all_variants(th, &b, &s.trace, phi, space.depth, cap)? {
            let mut trace = s.trace.clone();
            trace.push(b.clone());
            out.push((b, ReducedState { trace, config: end }));
        }
    }
    Ok(out)
}

/// Replays blocks under the reduced semantics; `None` if some block is not
/// executable or not authorised.
pub fn replay_reduced(
    space: &RecipeSpace,
    e: &EConfig,
    blocks: &[Block],
    bounds: &Bounds,
    improper_opt: bool,
    cap: usize,
) -> Result<Option<EConfig>, OracleError> {
    let th = &*space.theory;
    let mut cur = e.clone();
    for (i, b) in blocks.iter().enumerate() {
        if !cur.is_initial() {
            return Ok(None);
        }
        if !authorised_all_variants(th, b, &blocks[..i], &cur.cfg.frame, space.depth, cap)? {
            return Ok(None);
        }
        match replay_compressed(th, &cur, &b.actions(), bounds, improper_opt)? {
            Some(n) if n.is_initial() => cur = n,
            _ => return Ok(None),
        }
    }
    Ok(Some(cur))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("oracle budget of {0} exceeded")]
    Budget(usize),
}

struct VariantCache<'a> {
    th: &'a Theory,
    phi: &'a Frame,
    depth: usize,
    memo: HashMap<Term, Vec<Term>>,
}

impl VariantCache<'_> {
    fn get(&mut self, r: &Term) -> TResult<&Vec<Term>> {
        if !self.memo.contains_key(r) {
            let v = recipe_variants(self.th, r, self.phi, self.depth)?;
            self.memo.insert(r.clone(), v);
        }
        Ok(&self.memo[r])
    }
}

fn handles_within(r: &Term, avail: u64) -> bool {
    let mut hs = Vec::new();
    r.handles(&mut hs);
    handle_mask(&hs) & !avail == 0
}

/// `≡_Φ`-class of a plausible block trace: closure under swaps of adjacent
/// independent blocks and under message-preserving recipe changes (recipes
/// of height ≤ depth), restricted to plausible traces. `start` lists the
/// handles available before the first block.
pub fn equiv_class(
    th: &Theory,
    tr: &[Block],
    phi: &Frame,
    depth: usize,
    start: &[u32],
    cap: usize,
) -> Result<BTreeSet<Vec<Block>>, OracleError> {
    let mut cache = VariantCache {
        th,
        phi,
        depth,
        memo: HashMap::new(),
    };
    let start_mask = handle_mask(start);
    let mut seen: BTreeSet<Vec<Block>> = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(tr.to_vec());
    queue.push_back(tr.to_vec());
    while let Some(cur) = queue.pop_front() {
        let mut next = Vec::new();
        for i in 0..cur.len().saturating_sub(1) {
            if blocks_independent(&cur[i], &cur[i + 1]) {
                let mut t = cur.clone();
                t.swap(i, i + 1);
                next.push(t);
            }
        }
        let mut avail = start_mask;
        for i in 0..cur.len() {
            let rs: Vec<Term> = cur[i].recipes().into_iter().cloned().collect();
            for (j, r) in rs.iter().enumerate() {
                for v in cache.get(r)?.clone() {
                    if &v != r && handles_within(&v, avail) {
                        let mut nrs = rs.clone();
                        nrs[j] = v;
                        let mut t = cur.clone();
                        t[i] = with_recipes(&cur[i], &nrs);
                        next.push(t);
                    }
                }
            }
            avail |= handle_mask(&cur[i].outputs());
        }
        for t in next {
            if !seen.contains(&t) {
                if seen.len() >= cap {
                    return Err(OracleError::Budget(cap));
                }
                seen.insert(t.clone());
                queue.push_back(t);
            }
        }
    }
    Ok(seen)
}

fn keys(tr: &[Block]) -> Vec<BlockKey> {
    tr.iter().map(block_key).collect()
}

/// Scans for the pattern `tr.b0…bn.b′.tr′` where some variant `b″` of `b′`
/// is independent of every `bi`, `bi ≺ b″` for `i ≥ 1` and `b″ ≺ b0`.
pub fn has_bad_pattern(th: &Theory, tr: &[Block], phi: &Frame, depth: usize, start: &[u32]) -> TResult<bool> {
    let mut cache = VariantCache {
        th,
        phi,
        depth,
        memo: HashMap::new(),
    };
    let mut before = Vec::with_capacity(tr.len() + 1);
    let mut avail = handle_mask(start);
    for b in tr {
        before.push(avail);
        avail |= handle_mask(&b.outputs());
    }
    for j in 1..tr.len() {
        let key = block_key(&tr[j]);
        let rs: Vec<Term> = tr[j].recipes().into_iter().cloned().collect();
        let mut vs = Vec::new();
        for r in &rs {
            vs.push(cache.get(r)?.clone());
        }
        for i0 in (0..j).rev() {
            let k0 = block_key(&tr[i0]);
            if labels_dependent(&key, &k0) {
                break;
            }
            // handles available before i0 exclude the outputs of tr[i0..j]
            let ok = vs.iter().all(|v| v.iter().any(|r| handles_within(r, before[i0])));
            if !ok {
                break;
            }
            if key < k0 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Φ-minimality: `tr` is `≺_lex`-least in its bounded `≡_Φ`-class. Both the
/// oracle and the pattern scan are evaluated; they must agree.
pub fn phi_minimal(th: &Theory, tr: &[Block], phi: &Frame, depth: usize, start: &[u32], cap: usize) -> Result<bool, OracleError> {
    let class = equiv_class(th, tr, phi, depth, start, cap)?;
    let k = keys(tr);
    let oracle = !class.iter().any(|m| keys(m) < k);
    debug_assert_eq!(oracle, !has_bad_pattern(th, tr, phi, depth, start)?, "pattern scan disagrees with the oracle");
    Ok(oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotated_lts::{Config, LProc};
    use crate::process_calculus::Process;
    use std::sync::Arc;

    fn ok() -> Term {
        Term::constant("ok")
    }

    fn inp(l: &[u32], c: &str, r: Term) -> LAction {
        LAction::new(Label(l.to_vec()), ActionKind::In { chan: c.into(), recipe: r })
    }

    fn out(l: &[u32], c: &str, h: u32) -> LAction {
        LAction::new(Label(l.to_vec()), ActionKind::Out { chan: c.into(), handle: h })
    }

    fn block(l: &[u32], c: &str, r: Term, outs: &[u32]) -> Block {
        Block {
            focus: inp(l, c, r),
            positive: vec![],
            release: Label(l.to_vec()),
            discard: false,
            negative: outs.iter().map(|&h| out(l, c, h)).collect(),
        }
    }

    #[test]
    fn independence_and_order() {
        let b1 = block(&[1], "c1", ok(), &[1]);
        let b2 = block(&[2], "c2", ok(), &[2]);
        assert!(blocks_independent(&b1, &b2));
        assert!(!blocks_independent(&b1, &b1));
        assert_eq!(block_order(&b1, &b2), Ordering::Less);
        let b3 = block(&[2], "c2", Term::app("enc", vec![ok(), Term::Handle(1)]), &[]);
        assert!(!blocks_independent(&b1, &b3));
    }

    #[test]
    fn authorised_cases() {
        let b1 = block(&[1], "c1", ok(), &[1]);
        let b2 = block(&[2], "c2", ok(), &[2]);
        assert!(authorised(&b1, &[]));
        assert!(!authorised(&b1, &[b2.clone()]));
        assert!(authorised(&b2, &[b1.clone()]));
        let th = Theory::standard();
        let phi = Frame::from_messages(&th, &[ok()]).unwrap();
        // with w1 ↦ ok, the recipe ok has the variant w1, dependent on b1
        let b2w = block(&[2], "c2", ok(), &[2]);
        assert!(!authorised_all_variants(&th, &b2w, &[block(&[3], "c3", ok(), &[])], &phi, 1, 1000).unwrap());
        let fam_ok: Fam = vec![0];
        assert!(!authorised_by_fams(&block_key(&b1), &[&fam_ok], &[BlockSummary::of(&b2)]));
        assert!(authorised_by_fams(&block_key(&b2), &[&fam_ok], &[BlockSummary::of(&b1)]));
        // an input only derivable from w2 is forced after the block outputting it
        let fam_w2: Fam = vec![0b10];
        assert!(authorised_by_fams(&block_key(&b1), &[&fam_w2], &[BlockSummary::of(&b2)]));
    }

    #[test]
    fn eq_mod_frame() {
        let th = Theory::standard();
        let phi = Frame::from_messages(&th, &[ok()]).unwrap();
        let b = block(&[1], "c", ok(), &[]);
        assert!(block_eq_mod_frame(&th, &b, &b, &phi).unwrap());
        assert!(block_eq_mod_frame(&th, &b, &block(&[1], "c", Term::Handle(1), &[]), &phi).unwrap());
        assert!(!block_eq_mod_frame(&th, &b, &block(&[1], "c", ok(), &[1]), &phi).unwrap());
    }

    #[test]
    fn classes_and_minimality() {
        let th = Theory::standard();
        let phi = Frame::new();
        let b1 = block(&[1], "c1", ok(), &[]);
        let b2 = block(&[2], "c2", ok(), &[]);
        let class = equiv_class(&th, &[b1.clone(), b2.clone()], &phi, 0, &[], 100).unwrap();
        assert_eq!(class.len(), 2);
        assert!(phi_minimal(&th, &[b1.clone(), b2.clone()], &phi, 0, &[], 100).unwrap());
        assert!(!phi_minimal(&th, &[b2.clone(), b1.clone()], &phi, 0, &[], 100).unwrap());
        assert!(phi_minimal(&th, &[b2.clone()], &phi, 0, &[], 100).unwrap());
        let dep = block(&[1, 1], "c1", ok(), &[]);
        assert_eq!(equiv_class(&th, &[b1.clone(), dep.clone()], &phi, 0, &[], 100).unwrap().len(), 1);
        assert!(phi_minimal(&th, &[dep, b1], &phi, 0, &[], 100).unwrap());
    }

    #[test]
    fn reduced_first_step_matches_compressed() {
        let th = Arc::new(Theory::standard());
        let space = RecipeSpace::new(th, 1);
        let r = |c: &str| Process::input(c, "x", Process::output(c, ok(), Process::Zero));
        let cfg = Config::from_procs(
            vec![LProc::new(Label(vec![1]), r("c1")), LProc::new(Label(vec![2]), r("c2"))],
            Frame::new(),
        );
        let s = ReducedState {
            trace: vec![],
            config: EConfig::unfocused(cfg),
        };
        let b = Bounds::default();
        let red = reduced_steps(&space, &s, &b, false, 10_000).unwrap();
        let comp = blocks_from(&space, &s.config, &b, false).unwrap();
        assert_eq!(red.len(), comp.len());
    }
}
