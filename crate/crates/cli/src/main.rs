//! `porcheck`: bounded trace-equivalence checking with partial-order
//! reduction.

mod tree;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use porcheck_core::annotated_lts::{check_action_deterministic, Bounds, Config};
use porcheck_core::bench::{gnuplot_script, run_bench, to_csv, Case};
use porcheck_core::corpus::{generate, CorpusParams};
use porcheck_core::dsl::{parse_file, Operand, ProtocolFile, Query, QueryKind};
use porcheck_core::equivalence_engine::{check_equiv, cross_validate, explore, Mode, Outcome, Side, Verdict};
use porcheck_core::properties::{
    agreement_suite, min_swap_suite, perm_suite, representative_suite, stats_order_suite, well_labelling_suite, SuiteReport,
};
use porcheck_core::term_algebra::{Frame, RecipeSpace, Theory};
use porcheck_core::Error;

#[derive(Parser)]
#[command(name = "porcheck", version, about = "Trace equivalence of security protocols with partial-order reduction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an equivalence or action-determinism query.
    Check(CheckArgs),
    /// Print the bounded trace tree of a process.
    Explore(ExploreArgs),
    /// Exploration statistics of a process under each semantics.
    Stats(StatsArgs),
    /// Scaling benchmark as CSV plus a gnuplot script.
    Bench(BenchArgs),
    /// Run the property suites on a generated corpus.
    Selftest(SelftestArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// regular | annotated | compressed | reduced (optionally with +i)
    #[arg(long)]
    semantics: Option<String>,
    #[arg(long)]
    recipe_depth: Option<usize>,
    /// Maximum number of replication unfoldings.
    #[arg(long)]
    sessions: Option<u32>,
    /// Maximum number of explored states.
    #[arg(long)]
    budget: Option<usize>,
    /// Cut improper blocks (compressed and reduced semantics).
    #[arg(long)]
    improper_opt: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    #[arg(long)]
    query: String,
    /// Run all six semantics and report whether they agree.
    #[arg(long)]
    all_semantics: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Target {
    file: PathBuf,
    /// Use the (first) operand of this query.
    #[arg(long, conflicts_with = "process")]
    query: Option<String>,
    /// A process declared in the file, over the empty frame.
    #[arg(long)]
    process: Option<String>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    target: Target,
    /// Maximum number of steps (actions, or blocks in block semantics).
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 10_000)]
    max_nodes: usize,
    /// Emit a DOT graph instead of text.
    #[arg(long)]
    dot: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// toy | denning-sacco-like
    #[arg(long, default_value = "toy")]
    case: String,
    #[arg(long, default_value_t = 5)]
    n_max: usize,
    /// Largest n run under the regular semantics.
    #[arg(long, default_value_t = 5)]
    regular_cap: usize,
    #[arg(long, default_value_t = 1)]
    recipe_depth: usize,
    #[arg(long, default_value_t = 2_000_000)]
    budget: usize,
    /// Record wall-clock times (the CSV is then no longer byte-stable).
    #[arg(long)]
    timing: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot script plotting the CSV.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of generated process pairs.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    #[arg(long, default_value_t = 1)]
    recipe_depth: usize,
    #[arg(long)]
    json: bool,
}

/// Settings after merging flags over query parameters over defaults.
struct Settings {
    mode: Mode,
    bounds: Bounds,
}

fn settings(c: &Common, q: Option<&Query>, default_mode: Mode) -> Result<Settings, String> {
    let param = |k: &[&str]| q.and_then(|q| k.iter().find_map(|k| q.params.get(*k)).cloned());
    let parse_num = |s: String, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} `{s}`"));
    let defaults = Bounds::default();
    let recipe_depth = match (c.recipe_depth, param(&["recipe-depth", "depth"])) {
        (Some(d), _) => d,
        (None, Some(s)) => parse_num(s, "recipe depth")?,
        (None, None) => defaults.recipe_depth,
    };
    let sessions = match (c.sessions, param(&["sessions"])) {
        (Some(s), _) => s,
        (None, Some(s)) => parse_num(s, "session bound")? as u32,
        (None, None) => defaults.sessions,
    };
    let step_budget = match (c.budget, param(&["budget"])) {
        (Some(b), _) => b,
        (None, Some(s)) => parse_num(s, "budget")?,
        (None, None) => defaults.step_budget,
    };
    let improper = c.improper_opt || param(&["improper", "improper-opt"]).is_some_and(|v| v != "false");
    let sem = c.semantics.clone().or_else(|| param(&["semantics"]));
    let mode = match sem {
        None => Mode::from_parts(strip_i(default_mode.name()), improper).unwrap(),
        Some(s) => {
            let m: Mode = s.parse()?;
            if improper && !m.improper_opt() {
                Mode::from_parts(m.name(), true).ok_or_else(|| format!("--improper-opt does not apply to {m}"))?
            } else {
                m
            }
        }
    };
    Ok(Settings {
        mode,
        bounds: Bounds {
            recipe_depth,
            sessions,
            step_budget,
        },
    })
}

fn strip_i(s: &str) -> &str {
    s.strip_suffix("+i").unwrap_or(s)
}

fn load(path: &PathBuf) -> Result<ProtocolFile, String> {
    let src = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_file(&src).map_err(|e| format!("{}:{e}", path.display()))
}

fn operand(th: &Theory, file: &ProtocolFile, op: &Operand) -> Result<Config, Error> {
    let p = file
        .process(&op.process)
        .ok_or_else(|| Error::Precondition(format!("undeclared process {}", op.process)))?;
    Config::new(th, p, Frame::from_messages(th, &op.frame)?)
}

fn find_query<'a>(file: &'a ProtocolFile, name: &str) -> Result<&'a Query, String> {
    file.query(name).ok_or_else(|| format!("no query named `{name}`"))
}

/// The configuration designated by `--query` or `--process`.
fn target(t: &Target) -> Result<(ProtocolFile, Option<Query>, Config), String> {
    let file = load(&t.file)?;
    let th = file.theory.clone();
    let (q, op) = match (&t.query, &t.process) {
        (Some(name), _) => {
            let q = find_query(&file, name)?.clone();
            let op = match &q.kind {
                QueryKind::Equiv(a, _) | QueryKind::ActionDeterminism(a) | QueryKind::Explore(a) => a.clone(),
            };
            (Some(q), op)
        }
        (None, Some(p)) => (
            None,
            Operand {
                process: p.clone(),
                frame: vec![],
            },
        ),
        (None, None) => match file.queries.first() {
            Some(q) => {
                let op = match &q.kind {
                    QueryKind::Equiv(a, _) | QueryKind::ActionDeterminism(a) | QueryKind::Explore(a) => a.clone(),
                };
                (Some(q.clone()), op)
            }
            None => return Err("give --query or --process".into()),
        },
    };
    let cfg = operand(&th, &file, &op).map_err(|e| e.to_string())?;
    Ok((file, q, cfg))
}

fn verdict_json(v: &Verdict) -> Value {
    let witness = match &v.outcome {
        Outcome::Equivalent => Value::Null,
        Outcome::Inequivalent(w) => json!({
            "side": match w.side { Side::Left => "left", Side::Right => "right" },
            "trace": w.trace.steps(),
            "cause": w.cause.to_string(),
        }),
    };
    json!({
        "semantics": v.mode.name(),
        "equivalent": v.is_equivalent(),
        "budget_exhausted": v.stats.budget_exhausted,
        "exit_code": v.exit_code(),
        "bounds": v.bounds,
        "witness": witness,
        "stats": v.stats,
    })
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap());
}

/// Input and precondition errors exit with 2.
fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn run_check(a: CheckArgs) -> ExitCode {
    let file = match load(&a.file) {
        Ok(f) => f,
        Err(e) => return fail(e),
    };
    let q = match find_query(&file, &a.query) {
        Ok(q) => q.clone(),
        Err(e) => return fail(e),
    };
    let s = match settings(&a.common, Some(&q), Mode::Reduced) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let th = file.theory.clone();
    let space = RecipeSpace::new(th.clone(), s.bounds.recipe_depth);
    match &q.kind {
        QueryKind::Equiv(x, y) => {
            let (ca, cb) = match (operand(&th, &file, x), operand(&th, &file, y)) {
                (Ok(ca), Ok(cb)) => (ca, cb),
                (Err(e), _) | (_, Err(e)) => return fail(e),
            };
            if a.all_semantics {
                let r = match cross_validate(&space, &ca, &cb, &s.bounds) {
                    Ok(r) => r,
                    Err(e) => return fail(e),
                };
                if a.common.json {
                    print_json(&json!({
                        "query": q.name,
                        "agree": r.agree(),
                        "verdicts": r.verdicts.iter().map(verdict_json).collect::<Vec<_>>(),
                    }));
                } else {
                    for v in &r.verdicts {
                        println!("{v}");
                    }
                    match r.discrepancy() {
                        None => println!("all semantics agree"),
                        Some(d) => println!("semantics disagree: {d}"),
                    }
                }
                if !r.agree() {
                    return ExitCode::from(4);
                }
                return ExitCode::from(r.verdicts[0].exit_code() as u8);
            }
            let v = match check_equiv(&space, &ca, &cb, s.mode, &s.bounds) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            if a.common.json {
                let mut j = verdict_json(&v);
                j["query"] = json!(q.name);
                print_json(&j);
            } else {
                println!("{}: {v}", q.name);
            }
            ExitCode::from(v.exit_code() as u8)
        }
        QueryKind::ActionDeterminism(x) => {
            let c = match operand(&th, &file, x) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let d = match check_action_deterministic(&space, &c, &s.bounds) {
                Ok(d) => d,
                Err(e) => return fail(e),
            };
            if a.common.json {
                print_json(&json!({ "query": q.name, "action_determinism": d }));
            } else if d.deterministic {
                let tail = if d.exhausted { " (step budget exhausted)" } else { "" };
                println!("{}: action-deterministic over {} states{tail}", q.name, d.states);
            } else {
                println!("{}: not action-deterministic: {}", q.name, d.conflict.as_deref().unwrap_or("?"));
            }
            ExitCode::from(match (d.deterministic, d.exhausted) {
                (false, _) => 1,
                (true, true) => 3,
                (true, false) => 0,
            })
        }
        QueryKind::Explore(_) => fail(format!("query {} is an exploration; use `porcheck explore --query {}`", q.name, q.name)),
    }
}

fn run_explore(a: ExploreArgs) -> ExitCode {
    let (file, q, cfg) = match target(&a.target) {
        Ok(x) => x,
        Err(e) => return fail(e),
    };
    let s = match settings(&a.common, q.as_ref(), Mode::Annotated) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let space = RecipeSpace::new(file.theory.clone(), s.bounds.recipe_depth);
    let t = match tree::build(&space, &cfg, s.mode, &s.bounds, a.max_depth, a.max_nodes) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    if a.common.json {
        print_json(&serde_json::to_value(&t).unwrap());
    } else if a.dot {
        print!("{}", tree::to_dot(&t));
    } else {
        print!("{}", tree::to_text(&t));
    }
    ExitCode::SUCCESS
}

fn run_stats(a: StatsArgs) -> ExitCode {
    let (file, q, cfg) = match target(&a.target) {
        Ok(x) => x,
        Err(e) => return fail(e),
    };
    let s = match settings(&a.common, q.as_ref(), Mode::Reduced) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let modes: Vec<Mode> = if a.common.semantics.is_some() {
        vec![s.mode]
    } else {
        Mode::ALL.to_vec()
    };
    let space = RecipeSpace::new(file.theory.clone(), s.bounds.recipe_depth);
    let mut rows = Vec::new();
    for m in modes {
        match explore(&space, &cfg, m, &s.bounds) {
            Ok(st) => rows.push((m, st)),
            Err(e) => return fail(e),
        }
    }
    let exhausted = rows.iter().any(|(_, st)| st.budget_exhausted);
    if a.common.json {
        let j: Vec<Value> = rows
            .iter()
            .map(|(m, st)| json!({ "semantics": m.name(), "stats": st }))
            .collect();
        print_json(&Value::Array(j));
    } else {
        println!(
            "{:<13} {:>16} {:>10} {:>12} {:>10} {:>9}",
            "semantics", "traces", "states", "complete", "pruned", "budget"
        );
        for (m, st) in &rows {
            let cpt = st.complete_proper_traces.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
            println!(
                "{:<13} {:>16} {:>10} {:>12} {:>10} {:>9}",
                m.name(),
                st.traces_explored,
                st.states_visited,
                cpt,
                st.pruned_by_authorised,
                if st.budget_exhausted { "exhausted" } else { "ok" }
            );
        }
    }
    ExitCode::from(if exhausted { 3 } else { 0 })
}

fn run_bench_cmd(a: BenchArgs) -> ExitCode {
    let Some(case) = Case::parse(&a.case) else {
        return fail(format!("unknown case `{}` (toy | denning-sacco-like)", a.case));
    };
    let bounds = Bounds {
        recipe_depth: a.recipe_depth,
        sessions: 1,
        step_budget: a.budget,
    };
    let rows = match run_bench(case, a.n_max, &bounds, a.regular_cap, a.timing) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let csv = to_csv(&rows);
    let out = if a.json { serde_json::to_string_pretty(&rows).unwrap() + "\n" } else { csv.clone() };
    match &a.out {
        Some(p) => {
            if let Err(e) = fs::write(p, &csv) {
                return fail(format!("{}: {e}", p.display()));
            }
            if a.json {
                print!("{out}");
            }
        }
        None => print!("{out}"),
    }
    if let Some(g) = &a.gnuplot {
        let csv_name = a
            .out
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "bench.csv".into());
        if let Err(e) = fs::write(g, gnuplot_script(&csv_name, case)) {
            return fail(format!("{}: {e}", g.display()));
        }
    }
    ExitCode::SUCCESS
}

fn run_selftest(a: SelftestArgs) -> ExitCode {
    let th = Arc::new(Theory::standard());
    let bounds = Bounds {
        recipe_depth: a.recipe_depth,
        sessions: 1,
        ..Bounds::default()
    };
    let space = RecipeSpace::new(th.clone(), a.recipe_depth);
    let params = CorpusParams {
        seed: a.seed,
        count: a.pairs,
        ..CorpusParams::default()
    };
    let result = (|| -> Result<Vec<SuiteReport>, Error> {
        let corpus = generate(&space, &bounds, &params)?;
        let mut pairs = Vec::new();
        let mut cfgs = Vec::new();
        for p in &corpus {
            let x = Config::new(&th, &p.a, Frame::new())?;
            let y = Config::new(&th, &p.b, Frame::new())?;
            cfgs.push(x.clone());
            cfgs.push(y.clone());
            pairs.push((x, y));
        }
        Ok(vec![
            agreement_suite(&space, &pairs, &bounds)?,
            perm_suite(&space, &cfgs, &bounds, 100, 8, a.seed)?,
            well_labelling_suite(&space, &cfgs, &bounds)?,
            min_swap_suite(&space, &cfgs, &bounds, 4, 2_000, 1 << 14)?,
            representative_suite(&space, &cfgs, &bounds, 4, 2_000, 1 << 14)?,
            stats_order_suite(&space, &cfgs, &bounds)?,
        ])
    })();
    let reports = match result {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if a.json {
        print_json(&serde_json::to_value(&reports).unwrap());
    } else {
        for r in &reports {
            println!("{r}");
            for v in r.violations.iter().take(5) {
                println!("  {v}");
            }
        }
    }
    if reports.iter().all(SuiteReport::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("PORCHECK_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            _ => return fail(format!("PORCHECK_THREADS must be a positive integer, got `{n}`")),
        }
    }
    match Cli::parse().cmd {
        Cmd::Check(a) => run_check(a),
        Cmd::Explore(a) => run_explore(a),
        Cmd::Stats(a) => run_stats(a),
        Cmd::Bench(a) => run_bench_cmd(a),
        Cmd::Selftest(a) => run_selftest(a),
    }
}
