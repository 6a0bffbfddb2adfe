#![allow(dead_code)]

use std::collections::BTreeMap;

use matweight::dynamics::{build_async_operator, build_sync_operator, LocalUpdater, StateEnsemble};
use matweight::graph::{gen_rgg, MatrixWeightedGraph};
use matweight::linalg::eigenvalues;
use matweight::seed;
use matweight::weights::{assign_weights, default_tau, step_size_upper, Sign, WeightMode, WeightPolicy};
use nalgebra::Complex;
use rand::Rng;

/// Random network with `2 ≤ n ≤ 8`, `1 ≤ d ≤ 3` and a random sign per pair.
pub fn small_signed_network(s: u64) -> MatrixWeightedGraph {
    let mut rng = seed::rng(seed::derive(s, "shape"));
    let n = rng.gen_range(2..=8);
    let d = rng.gen_range(1..=3);
    let topo = gen_rgg(n, 0.9, d, seed::derive(s, "topology")).expect("radius 0.9 connects eight points");
    let signs: BTreeMap<_, _> = topo
        .undirected_pairs()
        .into_iter()
        .map(|p| (p, if rng.gen_bool(0.5) { Sign::Positive } else { Sign::Negative }))
        .collect();
    assign_weights(&topo, &WeightPolicy::new(WeightMode::SignPattern(signs), seed::derive(s, "weights")))
        .expect("definite weights")
}

/// Largest ∞-distance between matrix stepping and local stepping over
/// `steps` random single-agent updates at the midpoint step size.
pub fn async_oracle_gap(g: &MatrixWeightedGraph, s: u64, steps: usize) -> f64 {
    let tau = default_tau(&step_size_upper(g).expect("nonempty network"));
    let ops = build_sync_operator(g, tau).expect("tau in range");
    let local = LocalUpdater::new(g, tau).expect("definite weights");
    let mats: Vec<_> = (0..g.n()).map(|l| build_async_operator(&ops, l).unwrap()).collect();
    let mut rng = seed::rng(seed::derive(s, "oracle agents"));
    let x0 = StateEnsemble::random(g.n(), g.d(), seed::derive(s, "initial"));
    let mut by_matrix = x0.as_slice().to_vec();
    let mut by_local = by_matrix.clone();
    let mut worst = 0.0_f64;
    for _ in 0..steps {
        let l = rng.gen_range(0..g.n());
        by_matrix = mats[l].mul_vec(&by_matrix);
        local.apply_agent(l, &mut by_local);
        for (a, b) in by_matrix.iter().zip(&by_local) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// True iff the two eigenvalue multisets match within `tol` under a greedy
/// nearest pairing.
pub fn same_spectrum(a: &[Complex<f64>], b: &[Complex<f64>], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for z in a {
        let best = (0..b.len())
            .filter(|j| !used[*j])
            .min_by(|&i, &j| (b[i] - z).norm().total_cmp(&(b[j] - z).norm()));
        match best {
            Some(j) if (b[j] - z).norm() <= tol => used[j] = true,
            _ => return false,
        }
    }
    true
}

pub fn spectrum_of(m: &matweight::linalg::DenseMatrix) -> Vec<Complex<f64>> {
    eigenvalues(m).expect("eigenvalues")
}
