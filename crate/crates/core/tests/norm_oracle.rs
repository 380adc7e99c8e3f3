//! Power-iteration norms of recorded epoch operators against a dense SVD.

use cutgossip::analysis::{
    compose_events, epoch_study, initial_vector, spectral_norm, EpochStudyConfig, Matrix, X0Policy,
    DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_TOL,
};
use cutgossip::engine::EventRecord;
use cutgossip::graph::PartitionedGraph;
use cutgossip::rules::{UpdateCase, UpdateRule};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn svd_norm(m: &Matrix) -> f64 {
    let n = m.dim();
    let dense = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    dense.singular_values().max()
}

#[test]
fn epoch_operators_match_svd() {
    let g = PartitionedGraph::barbell(6, 9).unwrap();
    let rule = UpdateRule::AlgorithmA { period: 4, gamma: 6.0 * 9.0 / 15.0 };
    let recs = epoch_study(
        &g,
        rule,
        &initial_vector(&g, X0Policy::WorstCut, 0, 0),
        &EpochStudyConfig { epochs: 25, seed: 3, stream: 0, with_operators: true, renormalize: true, max_time: 1e6 },
    )
    .unwrap();
    assert_eq!(recs.len(), 25);
    for rec in &recs {
        let op = rec.operator.as_ref().unwrap();
        let oracle = svd_norm(&op.matrix);
        assert!((op.spectral_norm - oracle).abs() <= 1e-8 * oracle, "{} vs {oracle}", op.spectral_norm);
        let centered = op.centered_norm().unwrap();
        let oracle_c = svd_norm(&op.matrix.centered());
        assert!((centered - oracle_c).abs() <= 1e-8 * oracle_c.max(1e-12), "{centered} vs {oracle_c}");
    }
}

fn case_strategy() -> impl Strategy<Value = UpdateCase> {
    prop_oneof![
        Just(UpdateCase::Average),
        (0.05f64..0.95).prop_map(|alpha| UpdateCase::Convex { alpha }),
        (0.1f64..4.0).prop_map(|gamma| UpdateCase::CutTransfer { gamma }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_pair_products_match_svd(
        n in 2usize..9,
        raw in prop::collection::vec((0usize..64, 0usize..64, case_strategy()), 1..40),
    ) {
        let events: Vec<EventRecord> = raw
            .into_iter()
            .filter_map(|(a, b, case)| {
                let (u, v) = (a % n, b % n);
                (u != v).then_some(EventRecord { time: 0.0, edge: 0, endpoints: (u, v), case })
            })
            .collect();
        let m = compose_events(n, &events);
        let ours = spectral_norm(&m, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).unwrap();
        let oracle = svd_norm(&m);
        prop_assert!((ours - oracle).abs() <= 1e-7 * oracle.max(1.0), "{} vs {}", ours, oracle);
    }
}
