use std::collections::BTreeMap;

use matweight::dynamics::{async_blocks, build_sync_operator};
use matweight::graph::{gen_regular_ring, gen_rgg, MatrixWeightedGraph};
use matweight::linalg::{is_negative_definite, is_positive_definite};
use matweight::weights::{
    assign_weights, gen_definite, step_size_upper, Sign, WeightMode, WeightPolicy,
};
use proptest::prelude::*;

fn signed_ring(n: usize, k: usize, d: usize, seed: u64, flips: u64) -> MatrixWeightedGraph {
    let g = gen_regular_ring(n, k, d).unwrap();
    let signs: BTreeMap<_, _> = g
        .undirected_pairs()
        .into_iter()
        .enumerate()
        .map(|(e, p)| (p, if flips >> (e % 64) & 1 == 1 { Sign::Negative } else { Sign::Positive }))
        .collect();
    assign_weights(&g, &WeightPolicy::new(WeightMode::SignPattern(signs), seed)).unwrap()
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut matweight::seed::rng(seed));
    perm
}

#[test]
fn definite_generator_passes_its_own_test() {
    for d in 1..=6 {
        for seed in 0..200 {
            let p = gen_definite(d, Sign::Positive, 1.0, seed).unwrap();
            let m = gen_definite(d, Sign::Negative, 1.0, seed).unwrap();
            assert!(is_positive_definite(&p).unwrap(), "d={d} seed={seed}");
            assert!(is_negative_definite(&m).unwrap(), "d={d} seed={seed}");
            assert_eq!(p.asymmetry(), 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn upper_bound_ignores_agent_labels(
        n in 3usize..=12,
        d in 1usize..=4,
        seed in any::<u64>(),
        flips in any::<u64>(),
    ) {
        let g = signed_ring(n, 2, d, seed, flips);
        let h = g.relabel(&permutation(n, seed ^ 0x5eed)).unwrap();
        let a = step_size_upper(&g).unwrap().upper;
        let b = step_size_upper(&h).unwrap().upper;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn admissible_tau_keeps_p_diagonal_positive(
        n in 3usize..=10,
        d in 1usize..=3,
        seed in any::<u64>(),
        flips in any::<u64>(),
        fraction in 1e-6f64..(1.0 - 1e-9),
    ) {
        let g = signed_ring(n, 2, d, seed, flips);
        let range = step_size_upper(&g).unwrap();
        let tau = fraction * range.upper;
        let ops = build_sync_operator(&g, tau).unwrap();
        let floor = 1.0 - tau * range.denominator / 2.0;
        prop_assert!(floor > 0.0);
        for p in &ops.p_blocks {
            for i in 0..n {
                prop_assert!(p[(i, i)] > 0.0);
                prop_assert!(p[(i, i)] >= floor - 1e-12);
            }
        }
    }

    #[test]
    fn cooperative_p_rows_sum_to_one(
        n in 2usize..=25,
        radius in 0.3f64..0.9,
        d in 1usize..=3,
        seed in any::<u64>(),
        fraction in 1e-6f64..(1.0 - 1e-9),
    ) {
        let Ok(g) = gen_rgg(n, radius, d, seed) else { return Ok(()) };
        prop_assume!(g.edge_count() > 0);
        let g = assign_weights(&g, &WeightPolicy::new(WeightMode::AllPositiveDefinite, seed)).unwrap();
        let tau = fraction * step_size_upper(&g).unwrap().upper;
        let ops = build_sync_operator(&g, tau).unwrap();
        let mut blocks = ops.p_blocks.clone();
        for l in 0..n {
            blocks.extend(async_blocks(&ops, l).unwrap().0);
        }
        for p in &blocks {
            for i in 0..n {
                let s: f64 = p.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12, "row {i} sums to {s}");
                prop_assert!(p.row(i).iter().all(|v| *v >= 0.0));
            }
        }
    }
}

#[test]
fn witness_attains_the_denominator() {
    let g = signed_ring(9, 4, 3, 42, 0b1011_0110);
    let r = step_size_upper(&g).unwrap();
    assert_eq!(r.upper, 1.0 / r.denominator);
    let (i, k, m) = r.witness;
    let mut total = 0.0;
    for (_, w) in g.in_edges(i) {
        let s = if is_positive_definite(w).unwrap() { 1.0 } else { -1.0 };
        total += s * w[(k, m)];
    }
    assert!((2.0 * total - r.denominator).abs() <= 1e-12 * r.denominator);
}
