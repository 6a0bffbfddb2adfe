mod common;

use common::{async_oracle_gap, same_spectrum, small_signed_network, spectrum_of};
use matweight::dynamics::{
    agent_to_dim_permutation, build_sync_operator, conjugate_by_permutation, gauge_build, simulate,
    step_async_local, step_sync, Mode, StateEnsemble,
};
use matweight::graph::structural_balance;
use matweight::scenarios::{
    initial_state, midpoint_tau, random_partition, ring_balanced, ring_pd, run_config,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn permuted_full_operator_equals_block_assembly(s in any::<u64>(), fraction in 0.01f64..0.99) {
        let g = small_signed_network(s);
        let tau = fraction * matweight::weights::step_size_upper(&g).unwrap().upper;
        let ops = build_sync_operator(&g, tau).unwrap();
        let perm = agent_to_dim_permutation(g.n(), g.d());
        prop_assert_eq!(conjugate_by_permutation(&ops.p_full, &perm), ops.f_dim_major());
    }

    #[test]
    fn cross_dimension_rows_sum_to_zero(s in any::<u64>()) {
        let g = ring_pd(s).unwrap();
        let ops = build_sync_operator(&g, midpoint_tau(&g).unwrap()).unwrap();
        for i in 0..ops.d {
            prop_assert!(ops.q_block(i, i).max_abs() == 0.0);
            for j in (0..ops.d).filter(|j| *j != i) {
                let q = ops.q_block(i, j);
                for r in 0..ops.n {
                    prop_assert!(q.row(r).iter().sum::<f64>().abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn agreement_is_a_fixed_point(s in any::<u64>(), v in prop::collection::vec(-5.0f64..5.0, 3)) {
        let g = ring_pd(s).unwrap();
        let tau = midpoint_tau(&g).unwrap();
        let ops = build_sync_operator(&g, tau).unwrap();
        let x = StateEnsemble::uniform_consensus(g.n(), &v);
        prop_assert!(step_sync(&ops, &x).unwrap().max_abs_diff(&x) <= 1e-12);
        for l in 0..g.n() {
            prop_assert!(step_async_local(&g, tau, &x, l).unwrap().max_abs_diff(&x) <= 1e-12);
        }
    }

    #[test]
    fn gauge_transform_preserves_the_spectrum(s in any::<u64>()) {
        let planted = random_partition(s);
        let g = ring_balanced(&planted, s).unwrap();
        let ops = build_sync_operator(&g, midpoint_tau(&g).unwrap()).unwrap();
        let gauge = gauge_build(&g, &ops, &planted).unwrap();
        prop_assert!(same_spectrum(&spectrum_of(&gauge.d_full), &spectrum_of(&ops.p_full), 1e-9));
        let perm = agent_to_dim_permutation(g.n(), g.d());
        let permuted = conjugate_by_permutation(&gauge.d_full, &perm);
        prop_assert!(gauge.st_dim_major().max_abs_diff(&permuted) <= 1e-15);
    }
}

#[test]
fn matrix_and_local_async_stepping_agree() {
    for s in 0..20 {
        let g = small_signed_network(s);
        assert!(g.n() <= 8 && g.d() <= 3);
        let gap = async_oracle_gap(&g, s, 1_000);
        assert!(gap <= 1e-12, "instance {s}: gap {gap:e}");
    }
}

#[test]
fn gauge_blocks_differ_off_balance() {
    let planted = random_partition(9);
    let g = ring_balanced(&planted, 9).unwrap();
    assert!(structural_balance(&g).partition.unwrap().equals_up_to_swap(&planted));
    let other = random_partition(10);
    assert!(!other.equals_up_to_swap(&planted));
    let ops = build_sync_operator(&g, midpoint_tau(&g).unwrap()).unwrap();
    let gauge = gauge_build(&g, &ops, &other).unwrap();
    let perm = agent_to_dim_permutation(g.n(), g.d());
    let permuted = conjugate_by_permutation(&gauge.d_full, &perm);
    assert!(gauge.st_dim_major().max_abs_diff(&permuted) > 1e-6);
}

#[test]
fn identical_inputs_reproduce_bitwise() {
    for s in 0..5 {
        for mode in [Mode::Async, Mode::Sync] {
            let g = ring_pd(s).unwrap();
            let cfg = run_config(&g, 0.5, mode, s).unwrap();
            let x0 = initial_state(g.n(), g.d(), s);
            let a = simulate(&g, &x0, &cfg).unwrap();
            let b = simulate(&g, &x0, &cfg).unwrap();
            assert_eq!(a.agent_sequence, b.agent_sequence);
            assert_eq!(a.steps_run, b.steps_run);
            let bits = |x: &StateEnsemble| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.final_state), bits(&b.final_state));
        }
    }
}

#[test]
fn different_agent_streams_give_different_paths() {
    let g = ring_pd(1).unwrap();
    let x0 = initial_state(g.n(), g.d(), 1);
    let a = simulate(&g, &x0, &run_config(&g, 0.5, Mode::Async, 1).unwrap()).unwrap();
    let b = simulate(&g, &x0, &run_config(&g, 0.5, Mode::Async, 2).unwrap()).unwrap();
    assert_ne!(a.agent_sequence[..50], b.agent_sequence[..50]);
}
