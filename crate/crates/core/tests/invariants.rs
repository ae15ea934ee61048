use std::sync::Arc;

use proptest::prelude::*;
use rational_mis::analysis::oracle::{exact_small_oracle, to_f64};
use rational_mis::analysis::{paired_deviation_test, run_batch, TrialSummary};
use rational_mis::deviations::{DeviationKind, DeviationSpec};
use rational_mis::signing::SignatureBackend;
use rational_mis::{run, Graph, NodeId, OutputValue, Protocol, RunConfig, UtilityValue, Variant};

fn protocol() -> impl Strategy<Value = Protocol> {
    prop_oneof![Just(Protocol::Rps), Just(Protocol::Rank)]
}

/// Random simple graphs on 1..=12 nodes with degree small enough that rps
/// finishes quickly.
fn small_graph() -> impl Strategy<Value = Graph> {
    (1usize..=12).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..(2 * n)).prop_map(move |pairs| {
            let mut deg = vec![0usize; n];
            let edges: Vec<_> = pairs
                .into_iter()
                .filter(|&(a, b)| a != b)
                .filter(|&(a, b)| {
                    let ok = deg[a] < 4 && deg[b] < 4;
                    if ok {
                        deg[a] += 1;
                        deg[b] += 1;
                    }
                    ok
                })
                .collect();
            Graph::from_edges(n, edges).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn honest_runs_produce_a_mis(g in small_graph(), p in protocol(), seed in any::<u64>()) {
        let rec = run(&RunConfig::new(Arc::new(g.clone()), p).with_seed(seed)).unwrap();
        prop_assert!(rec.terminated);
        prop_assert!(rec.is_valid_mis(&g));
        prop_assert!(rec.cheat_flags.iter().all(|f| !f));
        for (i, u) in rec.utilities.iter().enumerate() {
            let expect = if rec.outputs[i] == Some(OutputValue::One) { 1.0 } else { 0.0 };
            prop_assert_eq!(*u, UtilityValue::Finite(expect));
        }
    }

    #[test]
    fn full_and_honest_variants_agree(g in small_graph(), p in protocol(), seed in any::<u64>()) {
        let mut full = RunConfig::new(Arc::new(g), p).with_seed(seed);
        full.record_trace = true;
        let mut honest = full.clone();
        honest.variant = Variant::Honest;
        prop_assert_eq!(run(&full).unwrap().trace, run(&honest).unwrap().trace);
    }

    #[test]
    fn runs_are_reproducible(g in small_graph(), p in protocol(), seed in any::<u64>()) {
        let c = RunConfig::new(Arc::new(g), p).with_seed(seed);
        prop_assert_eq!(run(&c).unwrap(), run(&c).unwrap());
    }

    /// A detectable deviation that fires while some neighbour is still
    /// undecided to see it leaves the deviator with at most 0. A firing in the
    /// very round that all remaining neighbours decide reaches nobody.
    #[test]
    fn detectable_deviations_never_pay(
        g in small_graph(),
        p in protocol(),
        seed in any::<u64>(),
        pick in any::<prop::sample::Index>(),
        node in any::<prop::sample::Index>(),
        activation in 0u64..12,
    ) {
        let kinds: Vec<_> = DeviationKind::catalog(p).into_iter().filter(|k| k.is_detectable()).collect();
        let kind = kinds[pick.index(kinds.len())].clone();
        let i = NodeId::from(node.index(g.n()));
        let mut c = RunConfig::new(Arc::new(g), p).with_seed(seed);
        c.deviations = vec![DeviationSpec { node: i, kind, activation_round: activation }];
        let rec = run(&c).unwrap();
        // A deviant run may stall until the round cap (e.g. a silent node on
        // K2 under rank leaves both sides with the all-ones rank); the cap
        // zeroes every utility.
        let report = &rec.deviations[0];
        let observable = report.first_fired_round.is_some_and(|r| {
            c.graph.neighbors(i).iter().any(|j| rec.output_rounds[j.idx()].is_none_or(|o| o > r))
        });
        if observable {
            prop_assert!(rec.utilities[i.idx()] <= UtilityValue::Finite(0.0), "{:?} {:?}", c.deviations, rec);
        }
    }
}

#[test]
fn ed25519_backend_matches_ideal_outcomes() {
    let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
    let mut ideal = RunConfig::new(Arc::new(g), Protocol::Rank);
    let mut ed = ideal.clone();
    ed.signatures = SignatureBackend::Ed25519;
    for seed in 0..20 {
        ideal.master_seed = seed;
        ed.master_seed = seed;
        let (a, b) = (run(&ideal).unwrap(), run(&ed).unwrap());
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.output_rounds, b.output_rounds);
    }
}

#[test]
fn fixed_rock_matches_oracle_on_k2() {
    let g = Graph::from_edges(2, [(0, 1)]).unwrap();
    let spec: DeviationSpec = "node=0,strategy=biased_moves,rock=1,paper=0,scissors=0"
        .parse()
        .unwrap();
    let exact = exact_small_oracle(&g, Protocol::Rps, Some(&spec), 3, None).unwrap();
    let mut c = RunConfig::new(Arc::new(g.clone()), Protocol::Rps);
    c.deviations.push(spec);
    let s = TrialSummary::from_records(&g, &run_batch(&c, 5_000, 77).unwrap());
    let e = to_f64(&exact.inclusion[0]);
    assert!((s.inclusion_frequency[0] - e).abs() < 4.0 * (e * (1.0 - e) / 5_000.0).sqrt());
}

#[test]
fn silent_centre_of_p3_never_gains() {
    let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    let c = RunConfig::new(Arc::new(g), Protocol::Rank);
    let spec = DeviationSpec::new(NodeId(1), DeviationKind::Silent);
    let cmp = paired_deviation_test(&c, &spec, 2_000, 5).unwrap();
    assert_eq!(cmp.fired_positive_runs, 0);
    assert!(cmp.deviant_mean <= 0.0);
    assert_eq!(cmp.detected_runs, cmp.fired_runs);
}

#[test]
fn round_cap_zeroes_utilities() {
    let g = Graph::from_edges(8, (0..8).flat_map(|a| (a + 1..8).map(move |b| (a, b)))).unwrap();
    let mut c = RunConfig::new(Arc::new(g), Protocol::Rps);
    c.round_cap = Some(1);
    let rec = run(&c).unwrap();
    assert!(!rec.terminated);
    assert!(rec
        .utilities
        .iter()
        .all(|u| *u == UtilityValue::Finite(0.0)));
}
