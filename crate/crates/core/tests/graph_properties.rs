use matweight::graph::{
    gen_regular_ring, gen_rgg, induced_graph, structural_balance, union_graphs, BalanceKind,
    DirectedGraph, MatrixWeightedGraph, Partition,
};
use matweight::scenarios::{random_partition, random_stochastic, ring_balanced, run_suite, Suite, RING_N};
use proptest::prelude::*;

/// Root of a spanning tree by transitive closure: `reach[a][b]` iff
/// information flows from `a` to `b` along some path.
fn brute_force_roots(n: usize, pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut reach = vec![vec![false; n]; n];
    for (a, row) in reach.iter_mut().enumerate() {
        row[a] = true;
    }
    for &(i, j) in pairs {
        reach[j][i] = true;
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                if reach[a][k] && reach[k][b] {
                    reach[a][b] = true;
                }
            }
        }
    }
    (0..n).filter(|&a| reach[a].iter().all(|r| *r)).collect()
}

fn agrees_with_oracle(n: usize, pairs: &[(usize, usize)]) -> bool {
    let g = DirectedGraph::from_pairs(n, pairs.iter().copied()).unwrap();
    let roots = brute_force_roots(n, pairs);
    match g.has_spanning_tree() {
        Some(r) => roots.contains(&r),
        None => roots.is_empty(),
    }
}

fn check_invariants(g: &MatrixWeightedGraph) {
    for (to, from, w) in g.edges() {
        assert_ne!(to, from, "self-loop at {to}");
        assert!(to < g.n() && from < g.n());
        assert_eq!((w.rows(), w.cols()), (g.d(), g.d()));
        assert!(w.asymmetry() <= 1e-9);
    }
}

#[test]
fn spanning_tree_matches_closure_on_every_three_agent_graph() {
    let all: Vec<(usize, usize)> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .collect();
    for mask in 0u32..(1 << all.len()) {
        let pairs: Vec<_> = all
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, p)| *p)
            .collect();
        assert!(agrees_with_oracle(3, &pairs), "mismatch on {pairs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn spanning_tree_matches_closure_on_sampled_graphs(
        (n, pairs) in (1usize..=8).prop_flat_map(|n| {
            (Just(n), prop::collection::vec((0..n, 0..n), 0..=2 * n))
        })
    ) {
        prop_assert!(agrees_with_oracle(n, &pairs));
    }

    #[test]
    fn product_graph_contains_union(
        n in 1usize..=8,
        da in 0.0f64..0.7,
        db in 0.0f64..0.7,
        sa in any::<u64>(),
        sb in any::<u64>(),
    ) {
        let a = random_stochastic(n, da, false, sa);
        let b = random_stochastic(n, db, false, sb);
        let union = union_graphs(&[induced_graph(&a).unwrap(), induced_graph(&b).unwrap()]).unwrap();
        prop_assert!(union.is_subgraph_of(&induced_graph(&(&a * &b)).unwrap()));
    }

    #[test]
    fn rgg_has_spanning_tree_when_generated(
        n in 1usize..=40,
        radius in 0.05f64..0.8,
        d in 1usize..=3,
        seed in any::<u64>(),
    ) {
        if let Ok(g) = gen_rgg(n, radius, d, seed) {
            check_invariants(&g);
            prop_assert!(g.topology().has_spanning_tree().is_some());
            for (to, from, _) in g.edges() {
                prop_assert!(g.weight(from, to).is_some(), "pair ({to}, {from}) not mirrored");
            }
        }
    }
}

#[test]
fn product_suite_holds() {
    let out = run_suite(Suite::Lemma4, 3, 100).unwrap();
    assert!(out.all_passed(), "{} of 100 passed", out.passed);
}

#[test]
fn rings_have_spanning_trees_and_degree_k() {
    for n in 3..=16 {
        for k in (2..n).step_by(2) {
            let g = gen_regular_ring(n, k, 2).unwrap();
            check_invariants(&g);
            assert!(g.topology().has_spanning_tree().is_some());
            for i in 0..n {
                assert_eq!(g.in_neighbors(i).unwrap().len(), k, "n={n} k={k} agent {i}");
            }
        }
    }
}

#[test]
fn planted_partitions_are_recovered() {
    for s in 0..60 {
        let planted = random_partition(s);
        let g = ring_balanced(&planted, s).unwrap();
        let v = structural_balance(&g);
        assert_eq!(v.kind, BalanceKind::Balanced, "seed {s}");
        let found = v.partition.unwrap();
        assert!(found.equals_up_to_swap(&planted), "seed {s}: {found:?} vs {planted:?}");
        assert!(found.v1.contains(&0));
    }
}

#[test]
fn relabelled_planting_is_recovered_relabelled() {
    let planted = random_partition(5);
    let g = ring_balanced(&planted, 5).unwrap();
    let perm: Vec<usize> = (0..RING_N).map(|i| (3 * i + 1) % RING_N).collect();
    let h = g.relabel(&perm).unwrap();
    let moved: Vec<usize> = planted.v1.iter().map(|&a| perm[a]).collect();
    let expected = Partition::from_v1(RING_N, &moved).unwrap();
    let found = structural_balance(&h).partition.unwrap();
    assert!(found.equals_up_to_swap(&expected));
}
