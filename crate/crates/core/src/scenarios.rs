//! Reference networks and seeded run setups shared by the command-line
//! front end and the test suites.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    classify, track_products, verify_appendix_spectra, verify_lemma6, verify_lemma7, verify_lemma9_10,
    verify_partition, verify_sync_zero, VerdictKind, TOL_CONSENSUS,
};
use crate::dynamics::{build_sync_operator, simulate, Mode, RunTrace, SimConfig, StateEnsemble};
use crate::error::{Error, Result};
use crate::graph::{gen_regular_ring, gen_rgg, induced_graph, union_graphs, MatrixWeightedGraph, Partition};
use crate::io::{dimension_csvs, manifest_path, write_atomic, write_trace, NetworkFile, NetworkMetadata, ReportFile};
use crate::linalg::{sum_product_limit, DenseMatrix, TOL_STEP};
use crate::seed;
use crate::weights::{assign_weights, default_tau, step_size_upper, Sign, WeightMode, WeightPolicy};

pub const RING_N: usize = 10;
pub const RING_K: usize = 4;
pub const RING_D: usize = 3;

/// Odd-numbered agents (one-based) against even-numbered ones.
pub fn alternating_partition() -> Partition {
    Partition::from_v1(RING_N, &[0, 2, 4, 6, 8]).expect("valid partition")
}

/// Agent pairs flipped to antagonistic in the unbalanced ring (zero-based).
pub const UNBALANCED_FLIPS: [(usize, usize); 2] = [(0, 2), (5, 7)];

/// Directed five-agent network (zero-based, `(to, from)`); agent 0 has no
/// in-neighbours and reaches every other agent.
pub const FIVE_NODE_EDGES: [(usize, usize); 7] = [(1, 0), (2, 1), (1, 2), (3, 2), (4, 3), (3, 4), (4, 0)];

fn weight_seed(s: u64) -> u64 {
    seed::derive(s, "weights")
}

/// Initial states for scenario seed `s`.
pub fn initial_state(n: usize, d: usize, s: u64) -> StateEnsemble {
    StateEnsemble::random(n, d, seed::derive(s, "initial"))
}

fn ring() -> MatrixWeightedGraph {
    gen_regular_ring(RING_N, RING_K, RING_D).expect("valid ring parameters")
}

pub fn ring_pd(s: u64) -> Result<MatrixWeightedGraph> {
    assign_weights(&ring(), &WeightPolicy::new(WeightMode::AllPositiveDefinite, weight_seed(s)))
}

pub fn ring_nd(s: u64) -> Result<MatrixWeightedGraph> {
    assign_weights(&ring(), &WeightPolicy::new(WeightMode::AllNegativeDefinite, weight_seed(s)))
}

pub fn ring_balanced(partition: &Partition, s: u64) -> Result<MatrixWeightedGraph> {
    assign_weights(
        &ring(),
        &WeightPolicy::new(WeightMode::BalancedFromPartition(partition.clone()), weight_seed(s)),
    )
}

/// Alternating-partition ring with the pairs in [`UNBALANCED_FLIPS`] made
/// antagonistic.
pub fn ring_unbalanced(s: u64) -> Result<MatrixWeightedGraph> {
    let g = ring();
    let side = alternating_partition().membership();
    let mut signs = BTreeMap::new();
    for (a, b) in g.undirected_pairs() {
        let cooperative = side[a] == side[b] && !UNBALANCED_FLIPS.contains(&(a, b));
        signs.insert((a, b), if cooperative { Sign::Positive } else { Sign::Negative });
    }
    assign_weights(&g, &WeightPolicy::new(WeightMode::SignPattern(signs), weight_seed(s)))
}

/// Random two-way split of the ring agents with both parts non-empty.
pub fn random_partition(s: u64) -> Partition {
    use rand::Rng;
    let mut rng = seed::rng(seed::derive(s, "partition"));
    loop {
        let v1: Vec<usize> = (0..RING_N).filter(|_| rng.gen_bool(0.5)).collect();
        if !v1.is_empty() && v1.len() < RING_N {
            return Partition::from_v1(RING_N, &v1).expect("valid partition");
        }
    }
}

pub fn five_node(d: usize, s: u64) -> Result<MatrixWeightedGraph> {
    let mut g = MatrixWeightedGraph::new(5, d)?;
    for (to, from) in FIVE_NODE_EDGES {
        g.add_edge(to, from, DenseMatrix::identity(d))?;
    }
    assign_weights(&g, &WeightPolicy::new(WeightMode::AllPositiveDefinite, weight_seed(s)))
}

pub fn rgg_pd(n: usize, radius: f64, d: usize, s: u64) -> Result<MatrixWeightedGraph> {
    let g = gen_rgg(n, radius, d, seed::derive(s, "topology"))?;
    assign_weights(&g, &WeightPolicy::new(WeightMode::AllPositiveDefinite, weight_seed(s)))
}

/// Step size at the midpoint of the admissible range.
pub fn midpoint_tau(g: &MatrixWeightedGraph) -> Result<f64> {
    Ok(default_tau(&step_size_upper(g)?))
}

/// Default run configuration at `tau_factor × upper`; factors at or beyond
/// one set the override flag.
pub fn run_config(g: &MatrixWeightedGraph, tau_factor: f64, mode: Mode, s: u64) -> Result<SimConfig> {
    let upper = step_size_upper(g)?.upper;
    let mut cfg = SimConfig::new(tau_factor * upper, mode, s, g.n());
    cfg.override_tau = tau_factor >= 1.0;
    Ok(cfg)
}

/// Row-stochastic `n × n` matrix with positive diagonal. With
/// `spanning_chain` the agents `perm[0] → perm[1] → …` form a path in the
/// induced graph, so it has a spanning tree.
pub fn random_stochastic(n: usize, density: f64, spanning_chain: bool, s: u64) -> DenseMatrix {
    use rand::seq::SliceRandom;
    use rand::Rng;
    let mut rng = seed::rng(s);
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = rng.gen_range(0.1..1.0);
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                m[(i, j)] = rng.gen_range(0.1..1.0);
            }
        }
    }
    if spanning_chain {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for w in perm.windows(2) {
            // Row w[1] reads from w[0]: information flows w[0] → w[1].
            if m[(w[1], w[0])] == 0.0 {
                m[(w[1], w[0])] = rng.gen_range(0.1..1.0);
            }
        }
    }
    for i in 0..n {
        let total: f64 = m.row(i).iter().sum();
        m.row_mut(i).iter_mut().for_each(|v| *v /= total);
    }
    m
}

/// Zero-row-sum perturbation supported on `a`'s positive entries: each row
/// moves `δ ≤ min(a_ip, a_iq)/2` from one entry to another, so `a + b` stays
/// row-stochastic with the same induced graph and `‖b‖∞ ≤ 1/2`.
pub fn zero_sum_perturbation(a: &DenseMatrix, s: u64) -> DenseMatrix {
    use rand::seq::SliceRandom;
    use rand::Rng;
    let mut rng = seed::rng(s);
    let n = a.rows();
    let mut b = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let support: Vec<usize> = (0..n).filter(|j| a[(i, *j)] > 0.0).collect();
        if support.len() < 2 {
            continue;
        }
        let pick: Vec<usize> = support.choose_multiple(&mut rng, 2).copied().collect();
        let (p, q) = (pick[0], pick[1]);
        let delta = 0.5 * a[(i, p)].min(a[(i, q)]) * rng.gen_range(0.0..1.0);
        b[(i, p)] = delta;
        b[(i, q)] = -delta;
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Lemma3,
    Lemma4,
    Spectra,
    SyncZero,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Lemma3, Suite::Lemma4, Suite::Spectra, Suite::SyncZero];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma3 => "lemma3",
            Suite::Lemma4 => "lemma4",
            Suite::Spectra => "spectra",
            Suite::SyncZero => "sync-zero",
        }
    }
}

/// Power iterations allowed in the product-limit suites.
pub const SUITE_MAX_ITER: usize = 100_000;
/// Step deltas must stay below this once they first drop below it.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub family: String,
    pub pass: bool,
    pub measured: BTreeMap<String, f64>,
    /// Serialized instance, kept only for failing trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub trials: usize,
    pub passed: usize,
    pub records: Vec<TrialRecord>,
}

impl SuiteOutcome {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

/// True iff no step delta exceeds `tol` after the first one below it.
pub fn monotone_below(deltas: &[f64], tol: f64) -> bool {
    match deltas.iter().position(|d| *d < tol) {
        Some(first) => deltas[first..].iter().all(|d| *d < tol),
        None => false,
    }
}

/// `(A, B, family)` for a sum-product trial: even trials draw a stochastic
/// `A` with a zero-row-sum `B`, odd trials split the synchronous operator of
/// a random cooperative ring into its block-diagonal and off-diagonal parts.
pub fn lemma3_instance(trial_seed: u64, trial: usize) -> Result<(DenseMatrix, DenseMatrix, &'static str)> {
    if trial.is_multiple_of(2) {
        use rand::Rng;
        let n = seed::rng(seed::derive(trial_seed, "size")).gen_range(2..=6);
        let a = random_stochastic(n, 0.3, true, seed::derive(trial_seed, "a"));
        let b = zero_sum_perturbation(&a, seed::derive(trial_seed, "b"));
        Ok((a, b, "stochastic"))
    } else {
        let g = ring_pd(trial_seed)?;
        let ops = crate::dynamics::build_sync_operator(&g, midpoint_tau(&g)?)?;
        Ok((ops.p_dim_major(), ops.q_dim_major(), "operator"))
    }
}

fn matrix_json(m: &DenseMatrix) -> serde_json::Value {
    serde_json::to_value(m).unwrap_or(serde_json::Value::Null)
}

fn run_trial(suite: Suite, seed: u64, trial: usize) -> Result<TrialRecord> {
    let trial_seed = seed::derive_indexed(seed, suite.name(), &[trial as u64]);
    let mut measured = BTreeMap::new();
    let (family, pass, instance) = match suite {
        Suite::Lemma3 => {
            let (a, b, family) = lemma3_instance(trial_seed, trial)?;
            let r = sum_product_limit(&a, &b, SUITE_MAX_ITER, TOL_STEP)?;
            let monotone = monotone_below(&r.sum.step_deltas, MONOTONE_TOL);
            measured.insert("norm_a".into(), r.norm_a);
            measured.insert("sum_iterations".into(), r.sum.iterations_used as f64);
            measured.insert("sum_final_step_delta".into(), r.sum.final_step_delta);
            measured.insert("hypotheses_hold".into(), f64::from(u8::from(r.hypotheses_hold())));
            measured.insert("monotone_below_tolerance".into(), f64::from(u8::from(monotone)));
            let pass = r.hypotheses_hold() && r.sum.status.is_converged() && monotone;
            let inst = serde_json::json!({ "a": matrix_json(&a), "b": matrix_json(&b) });
            (family, pass, inst)
        }
        Suite::Lemma4 => {
            use rand::Rng;
            let n = seed::rng(seed::derive(trial_seed, "size")).gen_range(2..=8);
            let a = random_stochastic(n, 0.3, false, seed::derive(trial_seed, "a"));
            let b = random_stochastic(n, 0.3, false, seed::derive(trial_seed, "b"));
            let union = union_graphs(&[induced_graph(&a)?, induced_graph(&b)?])?;
            let ab = induced_graph(&(&a * &b))?;
            let ba = induced_graph(&(&b * &a))?;
            let pass = union.is_subgraph_of(&ab) && union.is_subgraph_of(&ba);
            measured.insert("n".into(), n as f64);
            measured.insert("union_edges".into(), union.pairs().len() as f64);
            measured.insert("product_edges".into(), ab.pairs().len() as f64);
            let inst = serde_json::json!({ "a": matrix_json(&a), "b": matrix_json(&b) });
            ("stochastic_pair", pass, inst)
        }
        Suite::Spectra | Suite::SyncZero => {
            let (family, g) = if trial.is_multiple_of(2) {
                ("all_negative", ring_nd(trial_seed)?)
            } else {
                ("unbalanced", ring_unbalanced(trial_seed)?)
            };
            let tau = midpoint_tau(&g)?;
            let report = if suite == Suite::Spectra {
                verify_appendix_spectra(&g, tau)?
            } else {
                verify_sync_zero(&g, tau, SUITE_MAX_ITER)?
            };
            measured = report.measured.clone();
            let inst = serde_json::to_value(NetworkFile::from_graph(&g, None))?;
            (family, report.pass, inst)
        }
    };
    Ok(TrialRecord {
        trial,
        seed: trial_seed,
        family: family.into(),
        pass,
        measured,
        instance: (!pass).then_some(instance),
    })
}

/// Runs `trials` seeded trials of `suite` in parallel; records come back in
/// trial order.
pub fn run_suite(suite: Suite, seed: u64, trials: usize) -> Result<SuiteOutcome> {
    let records = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(suite, seed, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteOutcome {
        suite: suite.name().into(),
        trials,
        passed: records.iter().filter(|r| r.pass).count(),
        records,
    })
}

/// Scenario names of the replicable examples, by id.
pub const EXAMPLES: [(u8, &str); 8] = [
    (1, "global consensus, asynchronous, cooperative ring"),
    (2, "bipartite consensus, structurally balanced ring"),
    (3, "zero consensus, all weights negative definite"),
    (4, "global consensus on a random geometric graph G(200, 0.4)"),
    (5, "zero consensus, structurally unbalanced ring"),
    (6, "different sample paths from identical initial states"),
    (7, "step size outside the admissible range"),
    (8, "global consensus on a directed five-agent network"),
];

/// Default step-size factor for example 7.
pub const DIVERGENCE_TAU_FACTOR: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub id: u8,
    pub report: ReportFile,
    pub expectation_met: bool,
    pub files: Vec<PathBuf>,
}

fn write_run(dir: &Path, stem: &str, trace: &RunTrace, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(format!("{stem}.csv"));
    write_trace(&path, trace, false)?;
    files.push(path.clone());
    files.push(manifest_path(&path));
    for (k, csv) in dimension_csvs(trace).into_iter().enumerate() {
        let p = dir.join(format!("{stem}_dim{}.csv", k + 1));
        write_atomic(&p, csv.as_bytes())?;
        files.push(p);
    }
    Ok(())
}

/// Rebuilds example `id`, runs it asynchronously and writes the network,
/// trace, per-dimension CSVs and a report into `out_dir`. `tau_factor`
/// applies to example 7 only.
pub fn replicate(id: u8, s: u64, out_dir: &Path, tau_factor: Option<f64>) -> Result<ReplicateOutcome> {
    fs::create_dir_all(out_dir)?;
    let (g, planted, generator) = match id {
        1 | 6 | 7 => (ring_pd(s)?, None, "ring"),
        2 => (ring_balanced(&alternating_partition(), s)?, Some(alternating_partition()), "ring"),
        3 => (ring_nd(s)?, None, "ring"),
        4 => (rgg_pd(200, 0.4, RING_D, s)?, None, "rgg"),
        5 => (ring_unbalanced(s)?, None, "ring"),
        8 => (five_node(2, s)?, None, "five_node"),
        _ => return Err(Error::InvalidParameter(format!("example id {id} is not in 1..=8"))),
    };
    let mut files = Vec::new();
    let meta = NetworkMetadata {
        generator: Some(generator.into()),
        seed: Some(s),
        planted_v1: planted.as_ref().map(|p| p.v1.iter().map(|v| v + 1).collect()),
    };
    let net_path = out_dir.join("network.json");
    NetworkFile::from_graph(&g, Some(meta)).write(&net_path)?;
    files.push(net_path);

    let factor = if id == 7 { tau_factor.unwrap_or(DIVERGENCE_TAU_FACTOR) } else { 0.5 };
    let mut cfg = run_config(&g, factor, Mode::Async, s)?;
    if id == 7 {
        cfg = cfg.with_max_steps(10_000);
        cfg.override_tau = true;
    }
    let init = initial_state(g.n(), g.d(), s);
    let trace = simulate(&g, &init, &cfg)?;
    write_run(out_dir, "trace", &trace, &mut files)?;
    let verdict = classify(&trace);

    let mut lemmas = Vec::new();
    let mut extra = serde_json::Map::new();
    let expectation_met = match id {
        1 | 4 | 8 => verdict.kind == VerdictKind::Global,
        2 => {
            let planted = planted.as_ref().expect("planted partition set");
            verdict.kind == VerdictKind::Bipartite && verify_partition(&verdict, planted)?
        }
        3 | 5 => verdict.kind == VerdictKind::Zero,
        6 => {
            let mut other = cfg;
            other.seed = seed::derive(s, "second path");
            let second = simulate(&g, &init, &other)?;
            write_run(out_dir, "trace_b", &second, &mut files)?;
            let v2 = classify(&second);
            let gap = match (&verdict.consensus_vector, &v2.consensus_vector) {
                (Some(a), Some(b)) => a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())),
                _ => f64::NAN,
            };
            extra.insert("second_path_verdict".into(), serde_json::to_value(&v2)?);
            extra.insert("consensus_gap".into(), serde_json::json!(gap));
            verdict.kind == VerdictKind::Global && v2.kind == VerdictKind::Global && gap > TOL_CONSENSUS
        }
        7 => {
            extra.insert("max_norm".into(), serde_json::json!(trace.max_norm));
            trace.max_norm > DIVERGENCE_NORM
        }
        _ => unreachable!("id checked above"),
    };
    if id == 1 {
        let ops = build_sync_operator(&g, cfg.tau)?;
        let tracker = track_products(&trace, &ops)?;
        lemmas.push(verify_lemma6(&tracker));
        lemmas.push(verify_lemma7(&tracker));
        lemmas.push(verify_lemma9_10(&tracker, g.d())?);
    }
    let upper = step_size_upper(&g)?.upper;
    extra.insert("example".into(), serde_json::json!(id));
    extra.insert("tau".into(), serde_json::json!(cfg.tau));
    extra.insert("tau_upper".into(), serde_json::json!(upper));
    extra.insert("expectation_met".into(), serde_json::json!(expectation_met));

    let mut report = ReportFile::new(Some(g.digest()), Some(verdict), lemmas);
    report.extra = extra;
    let report_path = out_dir.join("report.json");
    report.write(&report_path)?;
    files.push(report_path);
    Ok(ReplicateOutcome {
        id,
        report,
        expectation_met,
        files,
    })
}

/// State ∞-norm taken as evidence of divergence.
pub const DIVERGENCE_NORM: f64 = 1e6;
