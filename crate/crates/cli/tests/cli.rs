use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_porcheck"))
}

fn protocol(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../protocols").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("porcheck-{}-{name}", std::process::id()));
    std::fs::write(&p, body).unwrap();
    p
}

const HEADER: &str = "symbols enc/2, dec/2, h/1.\npublic ok.\ntheory { dec(enc(x,y),y) -> x. }\n";

#[test]
fn check_exit_codes() {
    let f = protocol("example.por");
    let f = f.to_str().unwrap();
    assert_eq!(code(&run(&["check", f, "--query", "same"])), 0);
    let o = run(&["check", f, "--query", "leak"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("frames distinguished"));
    assert_eq!(code(&run(&["check", f, "--query", "det"])), 0);
    assert_eq!(code(&run(&["check", f, "--query", "missing"])), 2);
}

#[test]
fn skeleton_mismatch_is_exit_2() {
    let p = scratch("mismatch.por", &format!("{HEADER}process A = in(a,x).\nprocess B = out(a,ok).\nquery q = equiv(A, B).\n"));
    let o = run(&["check", p.to_str().unwrap(), "--query", "q", "--semantics", "compressed"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    // regular semantics has no skeleton precondition
    let o = run(&["check", p.to_str().unwrap(), "--query", "q", "--semantics", "regular"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn exhausted_budget_is_exit_3() {
    let f = protocol("toy.por");
    let o = run(&["check", f.to_str().unwrap(), "--query", "self", "--semantics", "regular", "--budget", "5"]);
    assert_eq!(code(&o), 3, "{}", stdout(&o));
}

#[test]
fn parse_errors_carry_positions() {
    let p = scratch("bad.por", &format!("{HEADER}process P = out(c, enc(n)).\n"));
    let o = run(&["check", p.to_str().unwrap(), "--query", "q"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains(":4:"), "{err}");
}

#[test]
fn json_mirrors_check() {
    let f = protocol("swapped.por");
    let o = run(&["check", f.to_str().unwrap(), "--query", "swap", "--all-semantics", "--json"]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["agree"], true);
    assert_eq!(v["verdicts"].as_array().unwrap().len(), 6);
    assert_eq!(v["verdicts"][0]["witness"]["side"], "left");
}

#[test]
fn bench_csv_is_byte_stable_across_workers() {
    let one = bin()
        .args(["bench", "--case", "toy", "--n-max", "3"])
        .env("PORCHECK_THREADS", "1")
        .output()
        .unwrap();
    let four = bin()
        .args(["bench", "--case", "toy", "--n-max", "3"])
        .env("PORCHECK_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one.stdout, four.stdout);
    let csv = stdout(&one);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "case,n,semantics,traces_explored,states_visited,wall_time,complete_proper_traces,budget_exhausted"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    let at = |n: &str, sem: &str| rows.iter().find(|r| r[1] == n && r[2] == sem).unwrap().clone();
    assert_eq!(at("3", "compressed")[6], "6");
    assert_eq!(at("3", "reduced")[6], "1");
    assert_eq!(at("1", "regular")[3], "2");
}

#[test]
fn bench_writes_gnuplot_script() {
    let csv = std::env::temp_dir().join(format!("porcheck-{}-bench.csv", std::process::id()));
    let gp = std::env::temp_dir().join(format!("porcheck-{}-bench.gp", std::process::id()));
    let o = run(&[
        "bench",
        "--case",
        "denning-sacco-like",
        "--n-max",
        "1",
        "--out",
        csv.to_str().unwrap(),
        "--gnuplot",
        gp.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("case,n,semantics"));
    assert!(std::fs::read_to_string(&gp).unwrap().contains("plot"));
}

#[test]
fn explore_text_and_dot() {
    let f = protocol("toy.por");
    let f = f.to_str().unwrap();
    let o = run(&["explore", f, "--process", "P3", "--semantics", "reduced", "--recipe-depth", "1", "--max-depth", "2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("semantics: reduced"));
    assert!(text.contains("pruned (not authorised)"));
    assert!(text.contains("[foc(in(c1,ok))"));
    let o = run(&["explore", f, "--process", "P3", "--semantics", "annotated", "--recipe-depth", "1", "--max-depth", "1", "--dot"]);
    assert!(stdout(&o).starts_with("digraph traces {"));
    let o = run(&["explore", f, "--process", "P3", "--semantics", "compressed", "--max-depth", "1", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["mode"], "compressed");
}

#[test]
fn stats_table() {
    let f = protocol("toy.por");
    let o = run(&["stats", f.to_str().unwrap(), "--process", "P3", "--recipe-depth", "1", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let cpt = |i: usize| rows[i]["stats"]["complete_proper_traces"].clone();
    assert_eq!(cpt(2), 6);
    assert_eq!(cpt(4), 1);
}

#[test]
fn selftest_passes_on_a_small_corpus() {
    let o = run(&["selftest", "--pairs", "4"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = bin().args(["bench", "--n-max", "1"]).env("PORCHECK_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 2);
}
