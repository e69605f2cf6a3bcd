//! Scaling benchmarks: the toy example `P_n` and a three-role stand-in
//! for a key-distribution protocol, measured as explored-trace counts.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::annotated_lts::{Bounds, Config};
use crate::equivalence_engine::{explore, Mode};
use crate::process_calculus::Process;
use crate::term_algebra::{Frame, RecipeSpace, Term, Theory};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case {
    Toy,
    DenningSaccoLike,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Toy => "toy",
            Case::DenningSaccoLike => "denning-sacco-like",
        }
    }

    pub fn parse(s: &str) -> Option<Case> {
        match s {
            "toy" => Some(Case::Toy),
            "denning-sacco-like" | "ds" => Some(Case::DenningSaccoLike),
            _ => None,
        }
    }

    pub fn process(self, n: usize) -> Process {
        match self {
            Case::Toy => toy(n),
            Case::DenningSaccoLike => ds_like(n),
        }
    }
}

fn par(mut ps: Vec<Process>) -> Process {
    match ps.len() {
        0 => Process::Zero,
        1 => ps.pop().unwrap(),
        _ => Process::Par(ps),
    }
}

/// `R_i = in(c_i,x). if x = ok then out(c_i,ok)` and `P_n = R_1 | … | R_n`.
pub fn toy(n: usize) -> Process {
    let ok = Term::constant("ok");
    par((1..=n)
        .map(|i| {
            let c = format!("c{i}");
            Process::input(
                &c,
                "x",
                Process::test(
                    Term::var("x"),
                    ok.clone(),
                    Process::output(&c, ok.clone(), Process::Zero),
                    Process::Zero,
                ),
            )
        })
        .collect())
}

/// `n` parallel runs of an initiator, a server and a responder:
///
/// ```text
/// A_i = out(a_i, enc(na_i, kas))
/// S_i = in(s_i, y). if dec(y, kas) = na_i then out(s_i, enc(na_i, kbs))
/// B_i = in(b_i, z). if dec(z, kbs) = na_i then out(b_i, ok)
/// ```
pub fn ds_like(n: usize) -> Process {
    let enc = |a: Term, b: Term| Term::app("enc", vec![a, b]);
    let dec = |a: Term, b: Term| Term::app("dec", vec![a, b]);
    let kas = Term::name("kas");
    let kbs = Term::name("kbs");
    let mut ps = Vec::new();
    for i in 1..=n {
        let na = Term::name(&format!("na{i}"));
        ps.push(Process::output(&format!("a{i}"), enc(na.clone(), kas.clone()), Process::Zero));
        ps.push(Process::input(
            &format!("s{i}"),
            "y",
            Process::test(
                dec(Term::var("y"), kas.clone()),
                na.clone(),
                Process::output(&format!("s{i}"), enc(na.clone(), kbs.clone()), Process::Zero),
                Process::Zero,
            ),
        ));
        ps.push(Process::input(
            &format!("b{i}"),
            "z",
            Process::test(
                dec(Term::var("z"), kbs.clone()),
                na.clone(),
                Process::output(&format!("b{i}"), Term::constant("ok"), Process::Zero),
                Process::Zero,
            ),
        ));
    }
    par(ps)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub case: String,
    pub n: usize,
    pub semantics: String,
    pub traces_explored: u128,
    pub states_visited: usize,
    /// Milliseconds, or `None` when timings are suppressed.
    pub wall_time: Option<f64>,
    pub complete_proper_traces: Option<u128>,
    pub budget_exhausted: bool,
}

pub const SEMANTICS: [Mode; 3] = [Mode::Regular, Mode::Compressed, Mode::Reduced];

/// One row per `(n, semantics)`; the regular semantics is skipped above
/// `regular_cap`.
pub fn run_bench(case: Case, n_max: usize, bounds: &Bounds, regular_cap: usize, timing: bool) -> Result<Vec<BenchRow>, Error> {
    let th = Arc::new(Theory::standard());
    let space = RecipeSpace::new(th.clone(), bounds.recipe_depth);
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let cfg = Config::new(&th, &case.process(n), Frame::new())?;
        for mode in SEMANTICS {
            if mode == Mode::Regular && n > regular_cap {
                continue;
            }
            let s = explore(&space, &cfg, mode, bounds)?;
            rows.push(BenchRow {
                case: case.name().to_string(),
                n,
                semantics: mode.name().to_string(),
                traces_explored: s.traces_explored,
                states_visited: s.states_visited,
                wall_time: timing.then_some(s.wall_time_ms),
                complete_proper_traces: s.complete_proper_traces,
                budget_exhausted: s.budget_exhausted,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "case,n,semantics,traces_explored,states_visited,wall_time,complete_proper_traces,budget_exhausted";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in rows {
        let wall = r.wall_time.map(|t| format!("{t:.3}")).unwrap_or_default();
        let cpt = r.complete_proper_traces.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.case, r.n, r.semantics, r.traces_explored, r.states_visited, wall, cpt, r.budget_exhausted
        )
        .unwrap();
    }
    s
}

/// A gnuplot script plotting explored traces against `n` on a log scale,
/// one curve per semantics.
pub fn gnuplot_script(csv_path: &str, case: Case) -> String {
    let mut s = String::new();
    writeln!(s, "set datafile separator ','").unwrap();
    writeln!(s, "set logscale y").unwrap();
    writeln!(s, "set xlabel 'n'").unwrap();
    writeln!(s, "set ylabel 'explored traces'").unwrap();
    writeln!(s, "set key left top").unwrap();
    writeln!(s, "set title '{}'", case.name()).unwrap();
    let curves: Vec<String> = SEMANTICS
        .iter()
        .map(|m| {
            format!(
                "'{csv_path}' using 2:(strcol(3) eq '{0}' ? $4 : 1/0) with linespoints title '{0}'",
                m.name()
            )
        })
        .collect();
    writeln!(s, "plot {}", curves.join(", \\\n     ")).unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shapes() {
        assert!(matches!(toy(1), Process::In { .. }));
        assert!(matches!(toy(3), Process::Par(ref v) if v.len() == 3));
        assert!(matches!(ds_like(2), Process::Par(ref v) if v.len() == 6));
    }

    #[test]
    fn csv_header_and_rows() {
        let b = Bounds {
            recipe_depth: 1,
            ..Bounds::default()
        };
        let rows = run_bench(Case::Toy, 2, &b, 2, false).unwrap();
        assert_eq!(rows.len(), 6);
        let csv = to_csv(&rows);
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv, to_csv(&run_bench(Case::Toy, 2, &b, 2, false).unwrap()));
    }
}
