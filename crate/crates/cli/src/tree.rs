//! Bounded trace trees for `porcheck explore`, rendered as indented text
//! or as a DOT graph.

use std::fmt::Write as _;

use porcheck_core::annotated_lts::{annotated_steps, Bounds, Config};
use porcheck_core::compressed_lts::{blocks_from, neg_preamble, Block, EConfig};
use porcheck_core::equivalence_engine::Mode;
use porcheck_core::reduced_lts::{authorised_all_variants, OracleError};
use porcheck_core::term_algebra::RecipeSpace;
use porcheck_core::Error;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct TreeNode {
    pub id: usize,
    /// Step leading here from the parent; empty at the root.
    pub step: String,
    pub state: String,
    /// Blocks executable here but refused by the reduced semantics.
    pub pruned: Vec<String>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tree {
    pub mode: String,
    /// Negative actions run before the first block.
    pub preamble: Vec<String>,
    pub nodes: Vec<TreeNode>,
    /// Expansion stopped at the node limit.
    pub truncated: bool,
}

const AUTH_CAP: usize = 1 << 16;

fn oracle<T>(r: Result<T, OracleError>) -> Result<T, Error> {
    r.map_err(|e| match e {
        OracleError::Term(t) => Error::Term(t),
        OracleError::Budget(n) => Error::Precondition(format!("authorisation check exceeded {n} variants")),
    })
}

/// Depth-first expansion of `cfg` up to `max_depth` steps (actions or
/// blocks) and at most `max_nodes` nodes.
pub fn build(space: &RecipeSpace, cfg: &Config, mode: Mode, bounds: &Bounds, max_depth: usize, max_nodes: usize) -> Result<Tree, Error> {
    let th = &*space.theory;
    let mut tree = Tree {
        mode: mode.name().to_string(),
        preamble: vec![],
        nodes: vec![],
        truncated: false,
    };
    if !mode.is_block() {
        tree.nodes.push(TreeNode {
            id: 0,
            step: String::new(),
            state: cfg.to_string(),
            pruned: vec![],
            children: vec![],
        });
        let mut stack = vec![(0usize, cfg.clone(), 0usize)];
        while let Some((id, c, d)) = stack.pop() {
            if d == max_depth {
                continue;
            }
            let mut kids = Vec::new();
            for (a, n) in annotated_steps(space, &c, bounds)? {
                if tree.nodes.len() == max_nodes {
                    tree.truncated = true;
                    break;
                }
                let step = if mode == Mode::Regular { a.unlabelled() } else { a.to_string() };
                let k = tree.nodes.len();
                tree.nodes.push(TreeNode {
                    id: k,
                    step,
                    state: n.to_string(),
                    pruned: vec![],
                    children: vec![],
                });
                tree.nodes[id].children.push(k);
                kids.push((k, n, d + 1));
            }
            stack.extend(kids.into_iter().rev());
        }
        return Ok(tree);
    }
    let (pre, start) = neg_preamble(th, &EConfig::unfocused(cfg.clone()))?;
    tree.preamble = pre.iter().map(|a| a.to_string()).collect();
    tree.nodes.push(TreeNode {
        id: 0,
        step: String::new(),
        state: start.cfg.to_string(),
        pruned: vec![],
        children: vec![],
    });
    let mut stack: Vec<(usize, EConfig, Vec<Block>)> = vec![(0, start, vec![])];
    while let Some((id, e, hist)) = stack.pop() {
        if hist.len() == max_depth {
            continue;
        }
        let mut kids = Vec::new();
        for (b, n) in blocks_from(space, &e, bounds, mode.improper_opt())? {
            if mode.is_reduced() && !oracle(authorised_all_variants(th, &b, &hist, &e.cfg.frame, space.depth, AUTH_CAP))? {
                tree.nodes[id].pruned.push(b.to_string());
                continue;
            }
            if tree.nodes.len() == max_nodes {
                tree.truncated = true;
                break;
            }
            let k = tree.nodes.len();
            tree.nodes.push(TreeNode {
                id: k,
                step: b.to_string(),
                state: n.cfg.to_string(),
                pruned: vec![],
                children: vec![],
            });
            tree.nodes[id].children.push(k);
            let mut h = hist.clone();
            h.push(b);
            kids.push((k, n, h));
        }
        stack.extend(kids.into_iter().rev());
    }
    Ok(tree)
}

pub fn to_text(t: &Tree) -> String {
    let mut s = String::new();
    writeln!(s, "semantics: {}", t.mode).unwrap();
    if !t.preamble.is_empty() {
        writeln!(s, "preamble: {}", t.preamble.join(".")).unwrap();
    }
    fn go(t: &Tree, id: usize, depth: usize, s: &mut String) {
        let n = &t.nodes[id];
        let pad = "  ".repeat(depth);
        if id == 0 {
            writeln!(s, "{pad}{}", n.state).unwrap();
        } else {
            writeln!(s, "{pad}{}  ⇒ {}", n.step, n.state).unwrap();
        }
        if !n.pruned.is_empty() {
            writeln!(s, "{pad}  pruned (not authorised): {}", n.pruned.join(" ")).unwrap();
        }
        for &c in &n.children {
            go(t, c, depth + 1, s);
        }
    }
    go(t, 0, 0, &mut s);
    if t.truncated {
        writeln!(s, "(truncated at {} nodes)", t.nodes.len()).unwrap();
    }
    s
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(t: &Tree) -> String {
    let mut s = String::new();
    writeln!(s, "digraph traces {{").unwrap();
    writeln!(s, "  node [shape=box, fontname=monospace];").unwrap();
    for n in &t.nodes {
        writeln!(s, "  n{} [label=\"{}\"];", n.id, dot_escape(&n.state)).unwrap();
        if !n.pruned.is_empty() {
            writeln!(
                s,
                "  p{} [shape=note, style=dashed, label=\"pruned: {}\"];\n  n{} -> p{} [style=dotted];",
                n.id,
                n.pruned.iter().map(|p| dot_escape(p)).collect::<Vec<_>>().join("\\n"),
                n.id,
                n.id
            )
            .unwrap();
        }
        for &c in &n.children {
            writeln!(s, "  n{} -> n{} [label=\"{}\"];", n.id, c, dot_escape(&t.nodes[c].step)).unwrap();
        }
    }
    writeln!(s, "}}").unwrap();
    s
}
