//! End-to-end properties of the masked aggregation round and the coalition
//! analysis, over randomly drawn configurations and graphs.

use proptest::prelude::*;

use ppdfl::privacy::{adversary_infer, is_surrounded, surrounded_components, AdversarySet, CoordMode};
use ppdfl::protocol::{
    execute_round, initial_models, replay, run_training, ConstantTrainer, ProtocolConfig, RecordLevel,
};
use ppdfl::topology::{generate_topology, TopologyKind, TopologySchedule};
use ppdfl::transcript::Transcript;

const P: u64 = 1020431;

fn kind() -> impl Strategy<Value = TopologyKind> {
    prop_oneof![
        Just(TopologyKind::Complete),
        Just(TopologyKind::Star),
        Just(TopologyKind::Line),
        Just(TopologyKind::Ring),
        (2.0f64..5.0).prop_map(|avg_degree| TopologyKind::RandomConnected { avg_degree }),
    ]
}

/// Clamps random degrees into the range valid for `n` nodes.
fn fit(kind: TopologyKind, n: usize) -> TopologyKind {
    match kind {
        TopologyKind::RandomConnected { avg_degree } => random_kind(n, avg_degree),
        k => k,
    }
}

fn random_kind(n: usize, deg: f64) -> TopologyKind {
    let lo = 2.0 * (n as f64 - 1.0) / n as f64;
    TopologyKind::RandomConnected {
        avg_degree: deg.clamp(lo, n as f64 - 1.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decoded_matches_quantized_aggregate(
        n in 3usize..10,
        dim in 1usize..4,
        sigma in 0u32..4,
        kind in kind(),
        seed in any::<u64>(),
    ) {
        let cfg = ProtocolConfig::uniform(n, dim, sigma, P, 5.0, seed).unwrap();
        let g = generate_topology(fit(kind, n), n, seed).unwrap();
        let models = initial_models(&cfg, 5.0);
        let r = execute_round(&cfg, 1, &g, &models, RecordLevel::NoConsensus).unwrap();
        prop_assert!(r.exact);
        prop_assert!(r.rounding_margin < 0.5);
        let scale = cfg.scale() as f64;
        for learner in &r.decoded {
            prop_assert_eq!(learner, &r.decoded[0]);
            for (x, &o) in learner.iter().zip(&r.oracle) {
                prop_assert_eq!(*x, o as f64 / scale);
            }
        }
    }

    #[test]
    fn output_does_not_depend_on_topology(n in 3usize..9, deg in 2.0f64..6.0, seed in any::<u64>()) {
        let cfg = ProtocolConfig::uniform(n, 2, 2, P, 10.0, seed).unwrap();
        let models = initial_models(&cfg, 10.0);
        let kinds = [TopologyKind::Complete, TopologyKind::Line, TopologyKind::Star, random_kind(n, deg)];
        let outs: Vec<_> = kinds
            .iter()
            .map(|&k| {
                let g = generate_topology(k, n, seed).unwrap();
                execute_round(&cfg, 1, &g, &models, RecordLevel::NoConsensus).unwrap().decoded
            })
            .collect();
        for o in &outs[1..] {
            prop_assert_eq!(o, &outs[0]);
        }
    }

    #[test]
    fn transcript_replays_after_serialization(n in 3usize..7, seed in any::<u64>()) {
        let mut cfg = ProtocolConfig::uniform(n, 2, 2, P, 10.0, seed).unwrap();
        cfg.rounds = 2;
        let schedule = TopologySchedule::Generated { kind: random_kind(n, 3.0), n, seed };
        let out = run_training(&cfg, &ConstantTrainer, &schedule, initial_models(&cfg, 10.0), RecordLevel::Full)
            .unwrap();
        let mut buf = Vec::new();
        out.transcript.write_jsonl(&mut buf).unwrap();
        let back = Transcript::parse_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        let replayed = replay(&back, &cfg).unwrap();
        let decoded: Vec<_> = out.rounds.iter().map(|r| r.decoded.clone()).collect();
        prop_assert_eq!(replayed, decoded);
    }

    #[test]
    fn coalition_learns_component_sums_and_nothing_finer(
        n in 3usize..9,
        deg in 2.0f64..5.0,
        mask in any::<u16>(),
        seed in any::<u64>(),
    ) {
        let ids: Vec<usize> = (1..=n).filter(|i| mask & (1 << i) != 0).collect();
        prop_assume!(ids.len() < n);
        let adv = AdversarySet::new(n, ids).unwrap();
        let mut cfg = ProtocolConfig::uniform(n, 1, 2, P, 10.0, seed).unwrap();
        cfg.rounds = 1;
        let g = generate_topology(random_kind(n, deg), n, seed).unwrap();
        let schedule = TopologySchedule::Explicit(vec![g.clone()]);
        let out = run_training(&cfg, &ConstantTrainer, &schedule, initial_models(&cfg, 10.0), RecordLevel::Full)
            .unwrap();
        let secrets = &out.rounds[0].secrets;

        let dec = surrounded_components(&g, &adv).unwrap();
        let mut covered: Vec<usize> = dec.sets.iter().flat_map(|s| s.members.clone()).collect();
        covered.sort_unstable();
        prop_assert_eq!(&covered, &adv.benign().to_vec());
        for s in &dec.sets {
            prop_assert!(is_surrounded(&g, &adv, &s.members));
        }

        let report = adversary_infer(&out.transcript, &adv, cfg.prime, cfg.precision, CoordMode::Representative)
            .unwrap();
        let ci = &report.rounds[0].coords[0];
        prop_assert!(ci.span_is_components());
        for c in &ci.components {
            let truth = c.members.iter().map(|&j| secrets[j - 1][0]).sum::<u64>() % P;
            prop_assert!(c.inferable);
            prop_assert_eq!(c.value, Some(truth));
        }
        for f in &ci.individuals {
            let has_benign_neighbor = g.neighbors(f.learner).iter().any(|&j| !adv.is_adversary(j));
            if has_benign_neighbor {
                prop_assert!(!f.inferable);
            } else {
                prop_assert_eq!(f.value, Some(secrets[f.learner - 1][0]));
            }
        }
    }
}
