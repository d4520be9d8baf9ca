use jigsolve_core::assign::{min_cost_assignment, unary_argmin};
use jigsolve_core::cost::{row_softmax, softmax9, total_cost, BinaryTable, UnaryMatrix};
use jigsolve_core::grid::{
    ball_size, enumerate_hamming_ball, next_permutation, Configuration, GridShape, RelClass,
};
use jigsolve_core::scorer::{linear_score, oracle_score, FeatureSet, LinearScorer};
use jigsolve_core::search::{predict, refine_with_binary, SolverOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn permutation(n: usize) -> impl Strategy<Value = Configuration> {
    Just((0..n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| Configuration::new(v).unwrap())
}

fn sized_permutation(max: usize) -> impl Strategy<Value = Configuration> {
    (1..=max).prop_flat_map(permutation)
}

fn grid_2d() -> impl Strategy<Value = GridShape> {
    (1usize..=4, 1usize..=3)
        .prop_filter("at least two cells", |(w, h)| w * h >= 2)
        .prop_map(|(w, h)| GridShape::new_2d(w, h).unwrap())
}

fn tables(n: usize) -> impl Strategy<Value = (UnaryMatrix, BinaryTable)> {
    (
        prop::collection::vec(-4.0f64..4.0, n * n),
        prop::collection::vec(-4.0f64..4.0, n * n * 9),
    )
        .prop_map(move |(ul, bl)| {
            let u = row_softmax(n, &ul).unwrap();
            let dist = bl
                .chunks(9)
                .flat_map(|c| softmax9(&c.try_into().unwrap()).unwrap())
                .collect();
            (u, BinaryTable::new(n, dist).unwrap())
        })
}

proptest! {
    #[test]
    fn hamming_is_never_one(a in sized_permutation(8), seed in any::<u64>()) {
        let n = a.len();
        let mut v: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = Configuration::new(v).unwrap();
        let d = a.hamming(&b).unwrap();
        prop_assert_ne!(d, 1);
        prop_assert_eq!(d, b.hamming(&a).unwrap());
        prop_assert_eq!(d == 0, a == b);
    }

    #[test]
    fn moving_by_the_truth_solves(t in sized_permutation(9)) {
        prop_assert!(t.reorganize(&t).unwrap().is_identity());
        let ids: Vec<usize> = t.as_slice().to_vec();
        prop_assert_eq!(t.move_slots(&ids), (0..t.len()).collect::<Vec<_>>());
    }

    #[test]
    fn reorganize_tracks_the_payload(t in permutation(6), p in permutation(6)) {
        let next = t.reorganize(&p).unwrap();
        let moved = p.move_slots(t.as_slice());
        prop_assert_eq!(next.as_slice(), moved.as_slice());
    }

    #[test]
    fn relations_are_antisymmetric(g in grid_2d()) {
        let n = g.n();
        let rel = g.relation_table().unwrap();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    prop_assert_eq!(rel[a * n + b], rel[b * n + a].mirror());
                }
            }
            prop_assert_eq!(rel[a * n + a], RelClass::None);
        }
    }

    #[test]
    fn ball_members_are_distinct_and_close(c in sized_permutation(7), r in 0usize..=7) {
        let members: Vec<Configuration> = enumerate_hamming_ball(&c, r).collect();
        prop_assert_eq!(members.len() as u128, ball_size(c.len(), r));
        prop_assert_eq!(&members[0], &c);
        let mut sorted: Vec<Vec<usize>> = members.iter().map(|m| m.as_slice().to_vec()).collect();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), members.len());
        prop_assert!(members.iter().all(|m| m.hamming(&c).unwrap() <= r));
    }

    #[test]
    fn hungarian_is_optimal(n in 1usize..=5, costs in prop::collection::vec(0u8..5, 25)) {
        let costs: Vec<f64> = costs[..n * n].iter().map(|&c| c as f64).collect();
        let got = min_cost_assignment(n, &costs).unwrap();
        let mut p: Vec<usize> = (0..n).collect();
        let mut best = (p.clone(), f64::INFINITY);
        loop {
            let c: f64 = (0..n).map(|s| costs[s * n + p[s]]).sum();
            if c < best.1 {
                best = (p.clone(), c);
            }
            if !next_permutation(&mut p) {
                break;
            }
        }
        prop_assert_eq!(got.cost, best.1);
        prop_assert_eq!(got.config.as_slice(), best.0.as_slice());
    }

    #[test]
    fn refinement_never_worsens((u, v) in tables(6), seed in permutation(6), r in 0usize..=4) {
        let g = GridShape::new_2d(3, 2).unwrap();
        let out = refine_with_binary(&u, &v, &seed, &g, r).unwrap();
        let before = total_cost(&u, Some(&v), &seed, &g).unwrap().total;
        let after = total_cost(&u, Some(&v), &out, &g).unwrap().total;
        prop_assert!(after <= before);
        prop_assert!(out.hamming(&seed).unwrap() <= r);
    }

    #[test]
    fn prediction_never_worse_than_its_seed((u, v) in tables(4)) {
        let g = GridShape::new_2d(2, 2).unwrap();
        let seed = unary_argmin(&u).unwrap().config;
        let p = predict(&u, Some(&v), &g, &SolverOptions::default()).unwrap();
        prop_assert!(p.cost.total <= total_cost(&u, Some(&v), &seed, &g).unwrap().total);
    }

    #[test]
    fn oracle_tables_are_stochastic(t in permutation(6), eps in 0.0f64..=1.0, seed in any::<u64>()) {
        let g = GridShape::new_2d(2, 3).unwrap();
        let s = oracle_score(&t, eps, &mut ChaCha8Rng::seed_from_u64(seed), &g).unwrap();
        UnaryMatrix::new(6, s.unary.entries().to_vec()).unwrap();
        BinaryTable::new(6, s.binary.unwrap().raw().to_vec()).unwrap();
    }

    #[test]
    fn linear_scores_are_stochastic(seed in any::<u64>(), feats in prop::collection::vec(-2.0f64..2.0, 4 * 5)) {
        let g = GridShape::new_2d(2, 2).unwrap();
        let m = LinearScorer::random(g, 5, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let f = FeatureSet::new(4, 5, feats).unwrap();
        let s = linear_score(&m, &f).unwrap();
        UnaryMatrix::new(4, s.unary.entries().to_vec()).unwrap();
        let v = s.binary.clone().unwrap();
        for p in 0..4 {
            for q in 0..4 {
                let sum: f64 = v.pair(p, q).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        prop_assert_eq!(linear_score(&m, &f).unwrap(), s);
    }
}
