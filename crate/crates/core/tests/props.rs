use std::cmp::Ordering;
use std::sync::Arc;

use proptest::prelude::*;

use porcheck_core::annotated_lts::{Bounds, Config};
use porcheck_core::corpus::{generate, CorpusParams};
use porcheck_core::dsl::{parse_process, pretty_process};
use porcheck_core::process_calculus::{skeleton_order, Label, Skeleton};
use porcheck_core::properties::perm_suite;
use porcheck_core::term_algebra::{apply_recipe, static_equiv, Frame, RecipeSpace, Term, Theory};

fn theory() -> Arc<Theory> {
    Arc::new(Theory::standard())
}

fn skel() -> impl Strategy<Value = Skeleton> {
    let chan = prop::sample::select(vec!["a", "b", "c"]);
    let leaf = prop_oneof![
        chan.clone().prop_map(|c| Skeleton::Out(c.into())),
        chan.clone().prop_map(|c| Skeleton::In(c.into())),
        chan.prop_map(|c| Skeleton::Sess(c.into())),
        Just(Skeleton::Zero),
    ];
    leaf.prop_recursive(2, 8, 3, |inner| {
        prop::collection::vec(inner, 2..4).prop_map(|mut v| {
            v.sort();
            Skeleton::Par(v)
        })
    })
}

fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        Just(Term::name("k")),
        Just(Term::name("n")),
        Just(Term::constant("ok")),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::app("enc", vec![a, b])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::app("dec", vec![a, b])),
            inner.prop_map(|a| Term::app("h", vec![a])),
        ]
    })
}

fn label() -> impl Strategy<Value = Label> {
    prop::collection::vec(0u32..3, 0..4).prop_map(Label)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skeleton_order_is_total(a in skel(), b in skel(), c in skel()) {
        let ab = skeleton_order(&a, &b);
        prop_assert_eq!(ab, skeleton_order(&b, &a).reverse());
        prop_assert_eq!(ab == Ordering::Equal, a == b);
        if ab != Ordering::Greater && skeleton_order(&b, &c) != Ordering::Greater {
            prop_assert_ne!(skeleton_order(&a, &c), Ordering::Greater);
        }
    }

    #[test]
    fn normalisation_is_idempotent(t in term()) {
        let th = theory();
        let n = th.normalize(&t).unwrap();
        prop_assert_eq!(th.normalize(&n).unwrap(), n);
    }

    #[test]
    fn label_dependence_is_prefix_relation(a in label(), b in label()) {
        prop_assert_eq!(a.dependent(&b), b.dependent(&a));
        prop_assert_eq!(a.dependent(&b), a.is_prefix_of(&b) || b.is_prefix_of(&a));
    }

    #[test]
    fn static_equivalence_is_reflexive_and_symmetric(xs in prop::collection::vec(term(), 0..3), ys in prop::collection::vec(term(), 0..3)) {
        let th = theory();
        let phi = Frame::from_messages(&th, &xs).unwrap();
        let psi = Frame::from_messages(&th, &ys).unwrap();
        prop_assert!(static_equiv(&th, &phi, &phi, 1).unwrap().is_equivalent());
        let l = static_equiv(&th, &phi, &psi, 1).unwrap();
        let r = static_equiv(&th, &psi, &phi, 1).unwrap();
        prop_assert_eq!(l.is_equivalent(), r.is_equivalent());
    }

    #[test]
    fn handles_resolve_to_frame_entries(xs in prop::collection::vec(term(), 1..4)) {
        let th = theory();
        let phi = Frame::from_messages(&th, &xs).unwrap();
        for (i, x) in xs.iter().enumerate() {
            prop_assert_eq!(apply_recipe(&th, &Term::Handle(i as u32 + 1), &phi).unwrap(), th.normalize(x).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_processes_round_trip_through_the_printer(seed in any::<u64>()) {
        let th = theory();
        let space = RecipeSpace::new(th.clone(), 1);
        let b = Bounds { recipe_depth: 1, ..Bounds::default() };
        let pairs = generate(&space, &b, &CorpusParams { seed, count: 1, ..CorpusParams::default() }).unwrap();
        for p in pairs {
            for q in [&p.a, &p.b] {
                let back = parse_process(&th, &pretty_process(q)).unwrap();
                prop_assert_eq!(&back, q);
            }
        }
    }

    #[test]
    fn adjacent_independent_actions_commute(seed in any::<u64>()) {
        let th = theory();
        let space = RecipeSpace::new(th.clone(), 1);
        let b = Bounds { recipe_depth: 1, ..Bounds::default() };
        let pairs = generate(&space, &b, &CorpusParams { seed, count: 2, ..CorpusParams::default() }).unwrap();
        let cfgs: Vec<Config> = pairs.iter().map(|p| Config::new(&th, &p.a, Frame::new()).unwrap()).collect();
        let r = perm_suite(&space, &cfgs, &b, 10, 6, seed).unwrap();
        prop_assert!(r.passed(), "{:?}", r.violations);
    }
}
