use std::sync::Arc;

use porcheck_core::annotated_lts::{ActionKind, Bounds, Config};
use porcheck_core::bench::toy;
use porcheck_core::dsl::parse_process;
use porcheck_core::equivalence_engine::{check_equiv, cross_validate, explore, Cause, Mode, Outcome, Side, WitnessTrace};
use porcheck_core::term_algebra::{Frame, RecipeSpace, Term, Theory};

fn setup(depth: usize) -> (Arc<Theory>, RecipeSpace) {
    let th = Arc::new(Theory::standard());
    let space = RecipeSpace::new(th.clone(), depth);
    (th, space)
}

fn cfg(th: &Theory, src: &str) -> Config {
    Config::new(th, &parse_process(th, src).unwrap(), Frame::new()).unwrap()
}

fn bounds(depth: usize) -> Bounds {
    Bounds {
        recipe_depth: depth,
        ..Bounds::default()
    }
}

#[test]
fn toy_counts() {
    let (th, space) = setup(1);
    let fact = [1u128, 1, 2, 6, 24];
    for n in 1..=4 {
        let c = Config::new(&th, &toy(n), Frame::new()).unwrap();
        let comp = explore(&space, &c, Mode::Compressed, &bounds(1)).unwrap();
        let red = explore(&space, &c, Mode::Reduced, &bounds(1)).unwrap();
        let reg = explore(&space, &c, Mode::Regular, &bounds(1)).unwrap();
        assert_eq!(comp.complete_proper_traces, Some(fact[n]), "n={n}");
        assert_eq!(red.complete_proper_traces, Some(1), "n={n}");
        assert!(red.traces_explored <= comp.traces_explored);
        assert!(comp.traces_explored <= reg.traces_explored);
        if n >= 2 {
            assert!(reg.traces_explored > comp.traces_explored);
        }
    }
}

#[test]
fn toy_self_equivalent_in_all_modes() {
    let (th, space) = setup(1);
    let c = Config::new(&th, &toy(3), Frame::new()).unwrap();
    let r = cross_validate(&space, &c, &c, &bounds(1)).unwrap();
    assert!(r.agree());
    assert!(r.verdicts.iter().all(|v| v.is_equivalent()));
}

#[test]
fn swapped_parallel_branches_are_distinguished() {
    let (th, space) = setup(1);
    let a = cfg(&th, "in(a,x).(out(b,m).in(c,y) | in(d,z))");
    let b = cfg(&th, "in(a,x).(out(b,m).in(d,z) | in(c,y))");
    let r = cross_validate(&space, &a, &b, &bounds(1)).unwrap();
    assert!(r.agree(), "{:?}", r.discrepancy());
    assert!(r.verdicts.iter().all(|v| !v.is_equivalent()));
    let reg = &r.verdicts[0];
    let Outcome::Inequivalent(w) = &reg.outcome else { unreachable!() };
    assert_eq!(w.side, Side::Left);
    let WitnessTrace::Labelled(tr) = &w.trace else { unreachable!() };
    let obs: Vec<String> = tr.iter().filter(|a| a.is_observable()).map(|a| a.unlabelled()).collect();
    assert_eq!(obs, vec!["in(a,ok)", "in(d,ok)"]);
}

#[test]
fn frames_distinguished_by_decryption() {
    let (th, space) = setup(2);
    let a = cfg(&th, "out(c, enc(n,k)).out(c, k)");
    let b = cfg(&th, "out(c, enc(n,k2)).out(c, k)");
    for mode in Mode::ALL {
        let v = check_equiv(&space, &a, &b, mode, &bounds(2)).unwrap();
        let Outcome::Inequivalent(w) = &v.outcome else { panic!("{mode}") };
        assert!(matches!(w.cause, Cause::FrameDistinguished(..)), "{mode}: {}", w.cause);
    }
}

#[test]
fn identical_processes_are_equivalent() {
    let (th, space) = setup(2);
    let a = cfg(&th, "out(c, enc(n,k)). in(c, x). if dec(x,k) = h(n) then out(c, ok)");
    for mode in Mode::ALL {
        assert!(check_equiv(&space, &a, &a, mode, &bounds(2)).unwrap().is_equivalent(), "{mode}");
    }
}

#[test]
fn skeleton_mismatch_is_a_precondition_failure() {
    let (th, space) = setup(1);
    let a = cfg(&th, "in(a,x)");
    let b = cfg(&th, "out(a,ok)");
    assert!(check_equiv(&space, &a, &b, Mode::Compressed, &bounds(1)).is_err());
    // the regular semantics has no such requirement
    let v = check_equiv(&space, &a, &b, Mode::Regular, &bounds(1)).unwrap();
    assert!(!v.is_equivalent());
}

#[test]
fn sessions_with_renamed_channels() {
    let (th, space) = setup(1);
    let a = cfg(&th, "!a[c; n] out(c, h(n))");
    let b = cfg(&th, "!a[d; m] out(d, h(m))");
    let r = cross_validate(&space, &a, &b, &bounds(1)).unwrap();
    assert!(r.verdicts.iter().all(|v| v.is_equivalent()), "{:?}", r.discrepancy());
}

#[test]
fn improper_blocks_are_cut() {
    let (th, space) = setup(1);
    let c = Config::new(&th, &toy(2), Frame::new()).unwrap();
    let plain = explore(&space, &c, Mode::Compressed, &bounds(1)).unwrap();
    let cut = explore(&space, &c, Mode::CompressedImproper, &bounds(1)).unwrap();
    assert!(cut.traces_explored < plain.traces_explored);
    assert_eq!(cut.complete_proper_traces, plain.complete_proper_traces);
    let _ = ActionKind::Zero;
    let _ = Term::constant("ok");
}
