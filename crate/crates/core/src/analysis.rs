//! Trace classification, partition recovery and numerical checks of the
//! matrix-product properties that drive each consensus outcome.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    agent_to_dim_permutation, assemble_grid, async_blocks, build_sync_operator, conjugate_by_permutation,
    Mode, RunTrace, StopReason, UpdateOperators,
};
use crate::error::{Error, Result};
use crate::graph::{induced_graph, structural_balance, BalanceKind, MatrixWeightedGraph, Partition};
use crate::linalg::{power_limit, spectrum, DenseMatrix, LimitStatus, ProductLimitResult, TOL_EIG, TOL_STEP};

/// Largest pairwise agent distance accepted as agreement.
pub const TOL_CONSENSUS: f64 = 1e-6;
/// Smallest consensus-vector norm distinguished from zero.
pub const TOL_NONZERO: f64 = 1e-3;
/// Row agreement inside each block of the limiting diagonal product.
pub const TOL_RANK_ONE: f64 = 1e-8;
/// Row-sum tolerance for stochastic products.
pub const TOL_ROW_SUM: f64 = 1e-12;
/// Slack above one allowed for eigenvalue moduli.
pub const TOL_MODULUS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    Global,
    Bipartite,
    Zero,
    Diverged,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVerdict {
    pub kind: VerdictKind,
    /// Common limit (global) or `C` (bipartite).
    pub consensus_vector: Option<Vec<f64>>,
    /// Present iff `kind` is `Bipartite`; V1 holds agent 0.
    pub partition: Option<Partition>,
    pub residual: f64,
    pub steps_to_converge: Option<usize>,
}

impl ConsensusVerdict {
    fn bare(kind: VerdictKind, residual: f64) -> Self {
        Self {
            kind,
            consensus_vector: None,
            partition: None,
            residual,
            steps_to_converge: None,
        }
    }
}

/// Classifies the final state of a trace.
pub fn classify(trace: &RunTrace) -> ConsensusVerdict {
    let mut v = classify_state(trace.final_state.as_slice(), trace.n, trace.d, trace.stop_reason);
    if trace.stop_reason == StopReason::Converged {
        v.steps_to_converge = Some(trace.steps_run);
    }
    v
}

/// Classification of an agent-major state `x` of `n` agents in dimension `d`.
pub fn classify_state(x: &[f64], n: usize, d: usize, stop: StopReason) -> ConsensusVerdict {
    match stop {
        StopReason::Diverged => {
            return ConsensusVerdict::bare(VerdictKind::Diverged, f64::INFINITY);
        }
        StopReason::MaxSteps => {
            return ConsensusVerdict::bare(VerdictKind::Undecided, f64::NAN);
        }
        StopReason::Converged => {}
    }
    if n == 0 || d == 0 {
        return ConsensusVerdict::bare(VerdictKind::Undecided, f64::NAN);
    }
    let agent = |i: usize| &x[i * d..(i + 1) * d];
    let state_norm = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let signs = vec![1.0; n];
    let (spread, mean) = signed_spread(x, n, d, &signs);
    if spread < TOL_CONSENSUS {
        if inf(&mean) < TOL_NONZERO {
            return ConsensusVerdict::bare(VerdictKind::Zero, state_norm);
        }
        return ConsensusVerdict {
            kind: VerdictKind::Global,
            consensus_vector: Some(mean),
            partition: None,
            residual: spread,
            steps_to_converge: None,
        };
    }

    let r = (0..n)
        .max_by(|&a, &b| inf(agent(a)).total_cmp(&inf(agent(b))).then(b.cmp(&a)))
        .expect("n > 0");
    let reference = agent(r);
    let same_as_r: Vec<bool> = (0..n)
        .map(|i| dot(agent(i), reference) >= 0.0)
        .collect();
    // Orient so that agent 0 lands in V1.
    let flip = !same_as_r[0];
    let in_v1: Vec<bool> = same_as_r.iter().map(|s| *s != flip).collect();
    let signs: Vec<f64> = in_v1.iter().map(|s| if *s { 1.0 } else { -1.0 }).collect();
    let (spread, c) = signed_spread(x, n, d, &signs);
    if spread < TOL_CONSENSUS {
        if inf(&c) <= TOL_NONZERO {
            return ConsensusVerdict::bare(VerdictKind::Zero, state_norm);
        }
        let v1: Vec<usize> = (0..n).filter(|i| in_v1[*i]).collect();
        let partition = Partition::from_v1(n, &v1).ok();
        return ConsensusVerdict {
            kind: VerdictKind::Bipartite,
            consensus_vector: Some(c),
            partition,
            residual: spread,
            steps_to_converge: None,
        };
    }
    ConsensusVerdict::bare(VerdictKind::Undecided, spread)
}

/// Largest per-dimension range of `s_i X_i` across agents, and its mean.
fn signed_spread(x: &[f64], n: usize, d: usize, signs: &[f64]) -> (f64, Vec<f64>) {
    let mut spread = 0.0_f64;
    let mut mean = vec![0.0; d];
    for (k, m) in mean.iter_mut().enumerate() {
        let vals = (0..n).map(|i| signs[i] * x[i * d + k]);
        let (lo, hi) = vals.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        spread = spread.max(hi - lo);
        *m = vals.sum::<f64>() / n as f64;
    }
    (spread, mean)
}

fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest `‖X_i + X_j‖∞` over pairs split by `partition`.
pub fn antisymmetry_residual(x: &[f64], d: usize, partition: &Partition) -> f64 {
    let mut worst = 0.0_f64;
    for &i in &partition.v1 {
        for &j in &partition.v2 {
            for k in 0..d {
                worst = worst.max((x[i * d + k] + x[j * d + k]).abs());
            }
        }
    }
    worst
}

/// True iff the recovered partition equals `planted` up to exchanging the
/// two parts.
pub fn verify_partition(verdict: &ConsensusVerdict, planted: &Partition) -> Result<bool> {
    if verdict.kind != VerdictKind::Bipartite {
        return Err(Error::RegimeMismatch(format!(
            "partition check needs a bipartite verdict, got {:?}",
            verdict.kind
        )));
    }
    Ok(verdict
        .partition
        .as_ref()
        .is_some_and(|p| p.equals_up_to_swap(planted)))
}

/// Exact probability that `n` independent uniform draws from `n` agents hit
/// every agent: `n! / nⁿ`.
pub fn full_coverage_probability(n: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let num: u128 = (1..=n as u128).product();
    let den: u128 = (n as u128).pow(n);
    num as f64 / den as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductNorms {
    pub p: f64,
    pub q: f64,
    pub f: f64,
}

/// Running products `𝒫(t)⋯𝒫(0)`, `𝒬(t)⋯𝒬(0)` and `ℱ(t)⋯ℱ(0)` of the
/// per-step dimension-major matrices of an async trace.
#[derive(Debug, Clone)]
pub struct ProductTracker {
    pub n: usize,
    pub d: usize,
    /// `n × n` diagonal blocks of the `𝒫` product; the off-diagonal grid
    /// cells of a product of block-diagonal matrices are zero.
    pub p_blocks: Vec<DenseMatrix>,
    pub q_product: DenseMatrix,
    pub f_product: DenseMatrix,
    /// Norms after each step; entry 0 is the empty product.
    pub norms: Vec<ProductNorms>,
    /// First step count at which every diagonal block of the `𝒫` product
    /// has an induced graph with a spanning tree.
    pub spanning_tree_time: Option<usize>,
    /// One flag per complete epoch of `n` steps: every agent was selected.
    pub epoch_coverage: Vec<bool>,
    /// Run stopped by the convergence rule.
    pub converged: bool,
    pub steps: usize,
}

impl ProductTracker {
    /// Dimension-major `𝒫` product.
    pub fn p_product(&self) -> DenseMatrix {
        let zeros = vec![DenseMatrix::zeros(self.n, self.n); self.d * self.d];
        assemble_grid(self.n, self.d, &self.p_blocks, &zeros)
    }

    fn blocks_have_spanning_tree(&self) -> bool {
        self.p_blocks
            .iter()
            .all(|b| induced_graph(b).map(|g| g.has_spanning_tree().is_some()).unwrap_or(false))
    }
}

/// Replaces rows `rows` of `prod` by `rows_of_m · prod`, where `m` agrees
/// with the identity outside `rows`.
fn left_apply_rows(prod: &mut DenseMatrix, m: &DenseMatrix, rows: &[usize]) {
    let updated: Vec<Vec<f64>> = rows.iter().map(|&r| row_times(m.row(r), prod)).collect();
    for (&r, new) in rows.iter().zip(updated) {
        prod.row_mut(r).copy_from_slice(&new);
    }
}

fn row_times(row: &[f64], prod: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; prod.cols()];
    for (k, &a) in row.iter().enumerate() {
        if a != 0.0 {
            for (o, b) in out.iter_mut().zip(prod.row(k)) {
                *o += a * b;
            }
        }
    }
    out
}

/// Replays the agent sequence of an async trace against `ops`.
pub fn track_products(trace: &RunTrace, ops: &UpdateOperators) -> Result<ProductTracker> {
    if trace.config.mode != Mode::Async {
        return Err(Error::UnsupportedMode(
            "product tracking needs an asynchronous trace".into(),
        ));
    }
    if trace.n != ops.n || trace.d != ops.d {
        return Err(Error::Dimension("trace and operators disagree on n or d".into()));
    }
    if trace.config.tau != ops.tau {
        return Err(Error::InvalidParameter(format!(
            "trace step size {} differs from operator step size {}",
            trace.config.tau, ops.tau
        )));
    }
    let (n, d) = (ops.n, ops.d);
    let nd = n * d;
    let perm = agent_to_dim_permutation(n, d);
    let mut tracker = ProductTracker {
        n,
        d,
        p_blocks: vec![DenseMatrix::identity(n); d],
        q_product: DenseMatrix::identity(nd),
        f_product: DenseMatrix::identity(nd),
        norms: vec![ProductNorms { p: 1.0, q: 1.0, f: 1.0 }],
        spanning_tree_time: None,
        epoch_coverage: Vec::new(),
        converged: trace.converged(),
        steps: trace.agent_sequence.len(),
    };
    if tracker.blocks_have_spanning_tree() {
        tracker.spanning_tree_time = Some(0);
    }

    // Per-agent dimension-major step matrices, built once.
    let mut f_steps = Vec::with_capacity(n);
    let mut q_steps = Vec::with_capacity(n);
    let mut p_steps = Vec::with_capacity(n);
    for l in 0..n {
        let (p, q) = async_blocks(ops, l)?;
        let zeros = vec![DenseMatrix::zeros(n, n); d * d];
        q_steps.push(assemble_grid(n, d, &vec![DenseMatrix::zeros(n, n); d], &q));
        f_steps.push(conjugate_by_permutation(
            &crate::dynamics::build_async_operator(ops, l)?,
            &perm,
        ));
        debug_assert_eq!(
            f_steps[l],
            &assemble_grid(n, d, &p, &zeros) + &q_steps[l]
        );
        p_steps.push(p);
    }

    let mut seen = vec![false; n];
    let mut seen_count = 0;
    for (t, &l) in trace.agent_sequence.iter().enumerate() {
        let rows: Vec<usize> = (0..d).map(|k| k * n + l).collect();
        left_apply_rows(&mut tracker.f_product, &f_steps[l], &rows);
        for (block, step) in tracker.p_blocks.iter_mut().zip(&p_steps[l]) {
            left_apply_rows(block, step, &[l]);
        }
        // 𝒬(t) is zero outside agent l's rows, so every other row vanishes.
        let mut q_next = DenseMatrix::zeros(nd, nd);
        for &r in &rows {
            q_next
                .row_mut(r)
                .copy_from_slice(&row_times(q_steps[l].row(r), &tracker.q_product));
        }
        tracker.q_product = q_next;

        let p_norm = tracker.p_blocks.iter().map(|b| b.inf_norm()).fold(0.0, f64::max);
        tracker.norms.push(ProductNorms {
            p: p_norm,
            q: tracker.q_product.inf_norm(),
            f: tracker.f_product.inf_norm(),
        });
        if tracker.spanning_tree_time.is_none() && tracker.blocks_have_spanning_tree() {
            tracker.spanning_tree_time = Some(t + 1);
        }

        if !seen[l] {
            seen[l] = true;
            seen_count += 1;
        }
        if (t + 1) % n == 0 {
            tracker.epoch_coverage.push(seen_count == n);
            seen.iter_mut().for_each(|s| *s = false);
            seen_count = 0;
        }
    }
    Ok(tracker)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub pass: bool,
    /// False when the check's preconditions did not hold; such a report is
    /// informational and never counts as a failure.
    pub precondition_met: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub note: String,
}

impl LemmaReport {
    fn new(lemma: &str, tolerance: f64) -> Self {
        Self {
            lemma: lemma.into(),
            pass: false,
            precondition_met: true,
            measured: BTreeMap::new(),
            tolerance,
            note: String::new(),
        }
    }

    fn measure(&mut self, key: &str, value: f64) {
        self.measured.insert(key.into(), value);
    }

    pub fn failed(&self) -> bool {
        self.precondition_met && !self.pass
    }
}

/// Largest deviation of any row from row 0, and largest `|row sum − 1|`.
fn rank_one_residuals(m: &DenseMatrix) -> (f64, f64) {
    let mut row_gap = 0.0_f64;
    let mut sum_gap = 0.0_f64;
    for r in 0..m.rows() {
        for (a, b) in m.row(r).iter().zip(m.row(0)) {
            row_gap = row_gap.max((a - b).abs());
        }
        sum_gap = sum_gap.max((m.row(r).iter().sum::<f64>() - 1.0).abs());
    }
    (row_gap, sum_gap)
}

/// Every diagonal block of the final `𝒫` product has identical rows (rank one)
/// and unit row sums.
pub fn verify_lemma6(tracker: &ProductTracker) -> LemmaReport {
    let mut report = LemmaReport::new("lemma6", TOL_RANK_ONE);
    report.precondition_met = tracker.converged;
    let mut row_gap = 0.0_f64;
    let mut sum_gap = 0.0_f64;
    for b in &tracker.p_blocks {
        let (rg, sg) = rank_one_residuals(b);
        row_gap = row_gap.max(rg);
        sum_gap = sum_gap.max(sg);
    }
    report.measure("max_row_difference", row_gap);
    report.measure("max_row_sum_error", sum_gap);
    report.measure("steps", tracker.steps as f64);
    report.pass = row_gap <= TOL_RANK_ONE && sum_gap <= TOL_ROW_SUM;
    if !tracker.converged {
        report.note = "run did not converge".into();
    }
    report
}

/// The `𝒬` product has vanished.
pub fn verify_lemma7(tracker: &ProductTracker) -> LemmaReport {
    let mut report = LemmaReport::new("lemma7", TOL_RANK_ONE);
    report.precondition_met = tracker.converged;
    let norm = tracker.q_product.inf_norm();
    report.measure("q_product_norm", norm);
    report.pass = norm < TOL_RANK_ONE;
    report
}

fn unit_eigen_report(lemma: &str, m: &DenseMatrix, d: usize) -> Result<LemmaReport> {
    let mut report = LemmaReport::new(lemma, TOL_EIG);
    let s = spectrum(m, TOL_EIG)?;
    report.measure("count_near_one", s.count_near_one as f64);
    report.measure("max_modulus", s.max_modulus);
    report.measure("max_modulus_excluding_near_one", s.max_modulus_excluding_near_one);
    report.measure("expected_count", d as f64);
    report.pass = s.count_near_one == d && s.max_modulus <= 1.0 + TOL_MODULUS;
    Ok(report)
}

/// Exactly `d` eigenvalues of the final `ℱ` product lie within `TOL_EIG` of
/// one and no modulus exceeds one.
pub fn verify_lemma9_10(tracker: &ProductTracker, d: usize) -> Result<LemmaReport> {
    let mut report = unit_eigen_report("lemma9_10", &tracker.f_product, d)?;
    if tracker.spanning_tree_time.is_none() {
        report.precondition_met = false;
        report.note = "product never acquired a spanning tree".into();
    }
    Ok(report)
}

/// The same spectral check on a single matrix, such as the synchronous `ℱ`.
pub fn verify_unit_spectrum(f: &DenseMatrix, d: usize) -> Result<LemmaReport> {
    unit_eigen_report("unit_spectrum", f, d)
}

/// Per-row Gershgorin radius of `𝒬` and the bound `2τ Σ_{j≠i} Σ_m |W_km[i][j]|`
/// for the row of dimension `i`, agent `k`, both in dimension-major order.
pub fn q_gershgorin_rows(g: &MatrixWeightedGraph, ops: &UpdateOperators) -> Vec<(f64, f64)> {
    let (n, d) = (ops.n, ops.d);
    let q = ops.q_dim_major();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..d {
        for k in 0..n {
            let row = q.row(i * n + k);
            let radius: f64 = row
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != i * n + k)
                .map(|(_, v)| v.abs())
                .sum();
            let bound: f64 = 2.0
                * ops.tau
                * (0..d)
                    .filter(|j| *j != i)
                    .map(|j| g.in_edges(k).map(|(_, w)| w[(i, j)].abs()).sum::<f64>())
                    .sum::<f64>();
            out.push((radius, bound));
        }
    }
    out
}

/// Spectral facts behind zero consensus: every `P_i` has spectral radius
/// below one (real positive eigenvalues when all weights are negative
/// definite) and every row of `𝒬` satisfies the Gershgorin bound below one.
pub fn verify_appendix_spectra(g: &MatrixWeightedGraph, tau: f64) -> Result<LemmaReport> {
    let kind = structural_balance(g).kind;
    let all_negative = match kind {
        BalanceKind::AllNegative => true,
        BalanceKind::Unbalanced => false,
        other => {
            return Err(Error::RegimeMismatch(format!(
                "spectral checks need an all-negative or unbalanced network, got {other:?}"
            )))
        }
    };
    let ops = build_sync_operator(g, tau)?;
    let mut report = LemmaReport::new(
        if all_negative { "spectra_all_negative" } else { "spectra_unbalanced" },
        TOL_MODULUS,
    );
    let mut radius = 0.0_f64;
    let mut max_imag = 0.0_f64;
    let mut min_real = f64::INFINITY;
    for p in &ops.p_blocks {
        let s = spectrum(p, TOL_EIG)?;
        radius = radius.max(s.spectral_radius());
        max_imag = max_imag.max(s.max_imag_abs());
        min_real = min_real.min(s.min_real());
    }
    let rows = q_gershgorin_rows(g, &ops);
    let bound = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let radius_within_bound = rows.iter().all(|(r, b)| *r <= b + 1e-15);
    let q_radius = spectrum(&ops.q_dim_major(), TOL_EIG)?.spectral_radius();
    report.measure("p_spectral_radius", radius);
    report.measure("p_max_imag", max_imag);
    report.measure("p_min_real", min_real);
    report.measure("q_gershgorin_bound", bound);
    report.measure("q_spectral_radius", q_radius);
    let mut pass = radius < 1.0 - TOL_MODULUS && bound < 1.0 && radius_within_bound && q_radius < 1.0;
    if all_negative {
        pass &= max_imag <= TOL_MODULUS && min_real > 0.0;
    }
    report.pass = pass;
    Ok(report)
}

/// Powers of the synchronous `ℱ` (dimension-major).
pub fn sync_power_limit(g: &MatrixWeightedGraph, tau: f64, max_iter: usize) -> Result<ProductLimitResult> {
    let ops = build_sync_operator(g, tau)?;
    power_limit(&ops.f_dim_major(), max_iter, TOL_STEP)
}

/// `ℱᵗ → 0` for an all-negative or unbalanced network.
pub fn verify_sync_zero(g: &MatrixWeightedGraph, tau: f64, max_iter: usize) -> Result<LemmaReport> {
    match structural_balance(g).kind {
        BalanceKind::AllNegative | BalanceKind::Unbalanced => {}
        other => {
            return Err(Error::RegimeMismatch(format!(
                "zero-limit check needs an all-negative or unbalanced network, got {other:?}"
            )))
        }
    }
    let r = sync_power_limit(g, tau, max_iter)?;
    let mut report = LemmaReport::new("sync_zero", TOL_STEP);
    report.measure("iterations", r.iterations_used as f64);
    report.measure("final_step_delta", r.final_step_delta);
    report.measure(
        "limit_norm",
        r.limit.as_ref().map_or(f64::NAN, |l| l.inf_norm()),
    );
    report.pass = r.status == LimitStatus::ConvergedToZero;
    report.note = format!("{:?}", r.status);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimConfig, StateEnsemble};
    use crate::graph::gen_regular_ring;
    use crate::weights::{assign_weights, default_tau, step_size_upper, WeightMode, WeightPolicy};

    fn conv(x: &[f64], n: usize, d: usize) -> ConsensusVerdict {
        classify_state(x, n, d, StopReason::Converged)
    }

    #[test]
    fn classify_examples() {
        let g = conv(&[0.5, -0.2, 0.5, -0.2, 0.5, -0.2], 3, 2);
        assert_eq!(g.kind, VerdictKind::Global);
        let c = g.consensus_vector.unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] + 0.2).abs() < 1e-15);

        let b = conv(&[1.0, 0.3, -1.0, -0.3, -1.0, -0.3, 1.0, 0.3], 4, 2);
        assert_eq!(b.kind, VerdictKind::Bipartite);
        assert_eq!(b.partition.unwrap(), Partition::from_v1(4, &[0, 3]).unwrap());
        assert_eq!(b.consensus_vector.unwrap(), vec![1.0, 0.3]);

        let z = conv(&[1e-9, -1e-9, 0.0, 5e-10], 2, 2);
        assert_eq!(z.kind, VerdictKind::Zero);
        assert!(z.partition.is_none());

        // ±C with ‖C‖ below the nonzero threshold is zero by design.
        let tiny = conv(&[5e-4, -5e-4], 2, 1);
        assert_eq!(tiny.kind, VerdictKind::Zero);

        let spread = conv(&[1.0, 0.2, 0.7], 3, 1);
        assert_eq!(spread.kind, VerdictKind::Undecided);

        assert_eq!(classify_state(&[1.0], 1, 1, StopReason::Diverged).kind, VerdictKind::Diverged);
        assert_eq!(classify_state(&[1.0], 1, 1, StopReason::MaxSteps).kind, VerdictKind::Undecided);
    }

    #[test]
    fn verify_partition_examples() {
        let b = conv(&[1.0, -1.0, 1.0, -1.0], 4, 1);
        let planted = Partition::from_v1(4, &[0, 2]).unwrap();
        assert!(verify_partition(&b, &planted).unwrap());
        assert!(verify_partition(&b, &planted.swapped().unwrap()).unwrap());
        assert!(!verify_partition(&b, &Partition::from_v1(4, &[0, 1]).unwrap()).unwrap());
        assert!(verify_partition(&conv(&[1.0, 1.0], 2, 1), &planted).is_err());
    }

    #[test]
    fn coverage_probability_values() {
        assert_eq!(full_coverage_probability(1), 1.0);
        assert_eq!(full_coverage_probability(2), 0.5);
        assert_eq!(full_coverage_probability(3), 6.0 / 27.0);
    }

    #[test]
    fn single_agent_tracker() {
        let g = MatrixWeightedGraph::new(1, 2).unwrap();
        let ops = build_sync_operator(&g, 0.1).unwrap();
        let init = StateEnsemble::random(1, 2, 1);
        let trace = simulate(&g, &init, &SimConfig::new(0.1, Mode::Async, 1, 1)).unwrap();
        let t = track_products(&trace, &ops).unwrap();
        assert_eq!(t.spanning_tree_time, Some(0));
        assert!(verify_lemma6(&t).pass);
        let r = verify_lemma9_10(&t, 2).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(t.f_product, DenseMatrix::identity(2));
    }

    #[test]
    fn sync_trace_is_rejected() {
        let ring = gen_regular_ring(6, 2, 1).unwrap();
        let g = assign_weights(&ring, &WeightPolicy::new(WeightMode::AllPositiveDefinite, 1)).unwrap();
        let tau = default_tau(&step_size_upper(&g).unwrap());
        let ops = build_sync_operator(&g, tau).unwrap();
        let init = StateEnsemble::random(6, 1, 1);
        let trace = simulate(&g, &init, &SimConfig::new(tau, Mode::Sync, 1, 6)).unwrap();
        assert!(matches!(track_products(&trace, &ops), Err(Error::UnsupportedMode(_))));
    }

    #[test]
    fn regime_mismatch_errors() {
        let ring = gen_regular_ring(6, 2, 2).unwrap();
        let g = assign_weights(&ring, &WeightPolicy::new(WeightMode::AllPositiveDefinite, 1)).unwrap();
        let tau = default_tau(&step_size_upper(&g).unwrap());
        assert!(matches!(verify_appendix_spectra(&g, tau), Err(Error::RegimeMismatch(_))));
        assert!(matches!(verify_sync_zero(&g, tau, 10), Err(Error::RegimeMismatch(_))));
        let r = sync_power_limit(&g, tau, 20_000).unwrap();
        assert_eq!(r.status, LimitStatus::ConvergedToMatrix);
    }
}
