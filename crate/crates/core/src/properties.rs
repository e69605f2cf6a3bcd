//! Property suites shared by `porcheck selftest` and the integration
//! tests: action swapping, well-labelling, agreement of the semantics,
//! reduced executability versus Φ-minimality, uniqueness of the reduced
//! representative and the ordering of exploration counts.

use std::collections::BTreeSet;
use std::fmt;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::annotated_lts::{annotated_steps, independent, replay, swap_adjacent, Bounds, Config, LAction};
use crate::compressed_lts::{blocks_from, neg_preamble, Block, EConfig};
use crate::equivalence_engine::{cross_validate, explore, Mode};
use crate::reduced_lts::{equiv_class, phi_minimal, replay_reduced, OracleError};
use crate::term_algebra::RecipeSpace;
use crate::Error;

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub checked: usize,
    /// Instances abandoned because an oracle budget was exceeded.
    pub skipped: usize,
    /// Instances excluded for exceeding the enumeration limit.
    pub capped: usize,
    pub violations: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            ..SuiteReport::default()
        }
    }

    fn absorb(&mut self, o: SuiteReport) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.capped += o.capped;
        self.violations.extend(o.violations);
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} checked, {} skipped, {} capped, {} violations",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checked,
            self.skipped,
            self.capped,
            self.violations.len()
        )
    }
}

/// Samples random executions of up to `len` actions and swaps one pair of
/// adjacent independent actions in each; both orders must reach the same
/// configuration. Stops after `samples` swaps or `samples * 50` walks.
pub fn perm_suite(space: &RecipeSpace, cfgs: &[Config], bounds: &Bounds, samples: usize, len: usize, seed: u64) -> Result<SuiteReport, Error> {
    let th = &*space.theory;
    let mut rep = SuiteReport::new("perm");
    let mut rng = StdRng::seed_from_u64(seed);
    if cfgs.is_empty() {
        return Ok(rep);
    }
    let mut walks = 0;
    while rep.checked < samples && walks < samples * 50 {
        walks += 1;
        let start = &cfgs[rng.gen_range(0..cfgs.len())];
        let mut cur = start.clone();
        let mut tr: Vec<LAction> = Vec::new();
        for _ in 0..len {
            let steps = annotated_steps(space, &cur, bounds)?;
            let Some((a, n)) = steps.choose(&mut rng) else { break };
            tr.push(a.clone());
            cur = n.clone();
        }
        let spots: Vec<usize> = (0..tr.len().saturating_sub(1))
            .filter(|&i| independent(&tr[i], &tr[i + 1]))
            .collect();
        let Some(&i) = spots.choose(&mut rng) else { continue };
        let before = replay(th, start, &tr[..i], bounds)?.expect("sampled prefix replays");
        let rec = swap_adjacent(th, &before, &tr[i], &tr[i + 1], bounds)?;
        rep.checked += 1;
        if !rec.holds() {
            rep.violations
                .push(format!("{} / {} from {before}", tr[i], tr[i + 1]));
        }
    }
    Ok(rep)
}

/// Every configuration visited under each mode must be well labelled.
pub fn well_labelling_suite(space: &RecipeSpace, cfgs: &[Config], bounds: &Bounds) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("well-labelling");
    for (i, c) in cfgs.iter().enumerate() {
        for mode in Mode::ALL {
            let s = explore(space, c, mode, bounds)?;
            rep.checked += s.states_visited;
            if s.well_labelling_violations > 0 {
                rep.violations
                    .push(format!("instance {i}, {mode}: {} violations", s.well_labelling_violations));
            }
        }
    }
    Ok(rep)
}

/// All six semantics return the same verdict on every pair.
pub fn agreement_suite(space: &RecipeSpace, pairs: &[(Config, Config)], bounds: &Bounds) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("agreement");
    for (i, (a, b)) in pairs.iter().enumerate() {
        let r = cross_validate(space, a, b, bounds)?;
        rep.checked += 1;
        if let Some(d) = r.discrepancy() {
            rep.violations.push(format!("pair {i}: {d}"));
        }
        for v in &r.verdicts {
            if v.stats.well_labelling_violations > 0 {
                rep.violations.push(format!("pair {i}, {}: ill-labelled configuration", v.mode));
            }
        }
    }
    Ok(rep)
}

/// Outcome of a walk over complete block traces.
#[derive(Clone, Debug)]
pub struct TraceWalk {
    /// The initial configuration reached by the leading negative phase.
    pub start: EConfig,
    pub complete: usize,
    /// Some run was cut at the block bound before completing.
    pub truncated: bool,
    /// The walk stopped after `limit` complete traces.
    pub limit_hit: bool,
}

/// Visits the block traces from `cfg` that end where no block is
/// executable, with at most `max_blocks` blocks, depth-first in block
/// order; stops after `limit` of them.
pub fn walk_complete_traces(
    space: &RecipeSpace,
    cfg: &Config,
    bounds: &Bounds,
    max_blocks: usize,
    limit: usize,
    mut visit: impl FnMut(&EConfig, &[Block], &EConfig) -> Result<(), Error>,
) -> Result<TraceWalk, Error> {
    let th = &*space.theory;
    let (_, start) = neg_preamble(th, &EConfig::unfocused(cfg.clone()))?;
    let mut walk = TraceWalk {
        start: start.clone(),
        complete: 0,
        truncated: false,
        limit_hit: false,
    };
    let mut tr: Vec<Block> = Vec::new();
    // one pending-successor list per depth
    let mut stack: Vec<std::vec::IntoIter<(Block, EConfig)>> = Vec::new();
    let mut cur = start.clone();
    loop {
        let next = blocks_from(space, &cur, bounds, false)?;
        if next.is_empty() {
            if walk.complete == limit {
                walk.limit_hit = true;
                return Ok(walk);
            }
            walk.complete += 1;
            visit(&start, &tr, &cur)?;
        } else if tr.len() == max_blocks {
            walk.truncated = true;
        } else {
            stack.push(next.into_iter());
        }
        // advance to the next sibling, backtracking as needed
        loop {
            let Some(it) = stack.last_mut() else { return Ok(walk) };
            match it.next() {
                Some((b, e)) => {
                    tr.truncate(stack.len() - 1);
                    tr.push(b);
                    cur = e;
                    break;
                }
                None => {
                    stack.pop();
                }
            }
        }
    }
}

fn oracle<T>(r: Result<T, OracleError>, rep: &mut SuiteReport) -> Result<Option<T>, Error> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(OracleError::Budget(_)) => {
            rep.skipped += 1;
            Ok(None)
        }
        Err(OracleError::Term(e)) => Err(e.into()),
    }
}

/// Instances with more than `limit` complete traces are excluded
/// (counted as capped) by the two suites below.
fn enumerable(space: &RecipeSpace, c: &Config, bounds: &Bounds, max_blocks: usize, limit: usize) -> Result<bool, Error> {
    Ok(!walk_complete_traces(space, c, bounds, max_blocks, limit, |_, _, _| Ok(()))?.limit_hit)
}

/// On every complete trace with at most `max_blocks` blocks, reduced executability coincides with
/// Φ-minimality under the brute-force class oracle.
pub fn min_swap_suite(
    space: &RecipeSpace,
    cfgs: &[Config],
    bounds: &Bounds,
    max_blocks: usize,
    limit: usize,
    cap: usize,
) -> Result<SuiteReport, Error> {
    let th = &*space.theory;
    let mut rep = SuiteReport::new("min-swap");
    for (i, c) in cfgs.iter().enumerate() {
        if !enumerable(space, c, bounds, max_blocks, limit)? {
            rep.capped += 1;
            continue;
        }
        let mut local = SuiteReport::new("");
        let walk = walk_complete_traces(space, c, bounds, max_blocks, limit, |start, tr, end| {
            let handles = start.cfg.frame.domain();
            let Some(red) = oracle(replay_reduced(space, start, tr, bounds, false, cap), &mut local)? else { return Ok(()) };
            let Some(min) = oracle(phi_minimal(th, tr, &end.cfg.frame, space.depth, &handles, cap), &mut local)? else {
                return Ok(());
            };
            local.checked += 1;
            if red.is_some() != min {
                local.violations.push(format!(
                    "instance {i}: reduced={} minimal={min} for {}",
                    red.is_some(),
                    show(tr)
                ));
            }
            Ok(())
        })?;
        debug_assert!(!walk.limit_hit);
        rep.absorb(local);
    }
    Ok(rep)
}

/// Each recipe-rigid `≡_Φ` class (one whose members only permute the
/// blocks, with no recipe change available) contains exactly one
/// reduced-executable trace. Classes admitting recipe changes hold one
/// Φ-minimal trace per recipe choice and are skipped.
pub fn representative_suite(
    space: &RecipeSpace,
    cfgs: &[Config],
    bounds: &Bounds,
    max_blocks: usize,
    limit: usize,
    cap: usize,
) -> Result<SuiteReport, Error> {
    let th = &*space.theory;
    let mut rep = SuiteReport::new("representative");
    for (i, c) in cfgs.iter().enumerate() {
        if !enumerable(space, c, bounds, max_blocks, limit)? {
            rep.capped += 1;
            continue;
        }
        let mut local = SuiteReport::new("");
        let mut done: BTreeSet<Vec<Block>> = BTreeSet::new();
        let walk = walk_complete_traces(space, c, bounds, max_blocks, limit, |start, tr, end| {
            if done.contains(tr) {
                return Ok(());
            }
            let handles = start.cfg.frame.domain();
            let Some(class) = oracle(equiv_class(th, tr, &end.cfg.frame, space.depth, &handles, cap), &mut local)? else {
                return Ok(());
            };
            done.extend(class.iter().cloned());
            // recipe-rigid: the class only permutes the blocks of `tr`
            let sorted = |t: &[Block]| {
                let mut v = t.to_vec();
                v.sort();
                v
            };
            let own = sorted(tr);
            if class.iter().any(|m| sorted(m) != own) {
                local.skipped += 1;
                return Ok(());
            }
            let mut reps = 0;
            for m in &class {
                match oracle(replay_reduced(space, start, m, bounds, false, cap), &mut local)? {
                    Some(Some(_)) => reps += 1,
                    Some(None) => {}
                    None => return Ok(()),
                }
            }
            local.checked += 1;
            if reps != 1 {
                local.violations.push(format!(
                    "instance {i}: {reps} reduced members in the class of {} ({} members)",
                    show(tr),
                    class.len()
                ));
            }
            Ok(())
        })?;
        debug_assert!(!walk.limit_hit);
        rep.absorb(local);
    }
    Ok(rep)
}

/// `reduced ≤ compressed ≤ regular` for explored traces on every instance.
pub fn stats_order_suite(space: &RecipeSpace, cfgs: &[Config], bounds: &Bounds) -> Result<SuiteReport, Error> {
    let mut rep = SuiteReport::new("stats-order");
    for (i, c) in cfgs.iter().enumerate() {
        let reg = explore(space, c, Mode::Regular, bounds)?;
        let comp = explore(space, c, Mode::Compressed, bounds)?;
        let red = explore(space, c, Mode::Reduced, bounds)?;
        if reg.budget_exhausted || comp.budget_exhausted || red.budget_exhausted {
            rep.skipped += 1;
            continue;
        }
        rep.checked += 1;
        if !(red.traces_explored <= comp.traces_explored && comp.traces_explored <= reg.traces_explored) {
            rep.violations.push(format!(
                "instance {i}: reduced {} compressed {} regular {}",
                red.traces_explored, comp.traces_explored, reg.traces_explored
            ));
        }
    }
    Ok(rep)
}

fn show(tr: &[Block]) -> String {
    tr.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")
}
