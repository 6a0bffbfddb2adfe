//! Update operators, the bipartite gauge transform and the synchronous /
//! asynchronous simulation engines.
//!
//! States are stored agent-major: agent `i`'s `d` entries occupy indices
//! `i*d .. (i+1)*d`. The dimension-major layout groups the `k`-th entry of
//! every agent together, index `k*n + i`. Operators named `*_full` are
//! agent-major; block matrices (`p_blocks`, `q_blocks`, ...) live in the
//! dimension-major layout.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MatrixWeightedGraph, Partition};
use crate::linalg::{DenseMatrix, OVERFLOW_BOUND};
use crate::seed;
use crate::weights::{signed_factors, signed_weight_sum, step_size_upper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEnsemble {
    n: usize,
    d: usize,
    x: Vec<f64>,
}

impl StateEnsemble {
    pub fn new(n: usize, d: usize, x: Vec<f64>) -> Result<Self> {
        if x.len() != n * d {
            return Err(Error::Dimension(format!(
                "state has {} entries, expected n*d = {}",
                x.len(),
                n * d
            )));
        }
        Ok(Self { n, d, x })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            x: vec![0.0; n * d],
        }
    }

    /// Every agent holds `v`.
    pub fn uniform_consensus(n: usize, v: &[f64]) -> Self {
        Self {
            n,
            d: v.len(),
            x: v.repeat(n),
        }
    }

    /// Entries drawn uniformly from `(-1, 1)`.
    pub fn random(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        Self {
            n,
            d,
            x: (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn inf_norm(&self) -> f64 {
        self.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_dim_major(&self) -> Vec<f64> {
        let perm = agent_to_dim_permutation(self.n, self.d);
        let mut out = vec![0.0; self.x.len()];
        for (a, &p) in perm.iter().enumerate() {
            out[p] = self.x[a];
        }
        out
    }

    pub fn from_dim_major(n: usize, d: usize, y: &[f64]) -> Result<Self> {
        if y.len() != n * d {
            return Err(Error::Dimension("dimension-major vector length".into()));
        }
        let perm = agent_to_dim_permutation(n, d);
        Ok(Self {
            n,
            d,
            x: perm.iter().map(|&p| y[p]).collect(),
        })
    }

    pub(crate) fn check_shape(&self, n: usize, d: usize) -> Result<()> {
        if self.n != n || self.d != d {
            return Err(Error::Dimension(format!(
                "state is {}x{}, operator expects {n}x{d}",
                self.n, self.d
            )));
        }
        Ok(())
    }
}

/// `perm[agent_major_index] = dim_major_index`, i.e. `i*d + k ↦ k*n + i`.
pub fn agent_to_dim_permutation(n: usize, d: usize) -> Vec<usize> {
    let mut perm = vec![0; n * d];
    for i in 0..n {
        for k in 0..d {
            perm[i * d + k] = k * n + i;
        }
    }
    perm
}

/// `Π M Πᵀ` for the permutation matrix of `perm`: entry `(r, c)` moves to
/// `(perm[r], perm[c])`.
pub fn conjugate_by_permutation(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    assert!(m.is_square() && m.rows() == perm.len());
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out[(perm[r], perm[c])] = m[(r, c)];
        }
    }
    out
}

/// Places `diag[k]` on the `k`-th diagonal cell and `off[i*d + j]` on cell
/// `(i, j)` of a `d × d` grid of `n × n` blocks. Diagonal entries of `off`
/// are ignored.
pub fn assemble_grid(n: usize, d: usize, diag: &[DenseMatrix], off: &[DenseMatrix]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(n * d, n * d);
    for i in 0..d {
        out.set_block(i * n, i * n, &diag[i]);
        for j in 0..d {
            if i != j {
                out.set_block(i * n, j * n, &off[i * d + j]);
            }
        }
    }
    out
}

/// Assembled synchronous operators for one network and step size.
#[derive(Debug, Clone)]
pub struct UpdateOperators {
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    /// Agent-major `nd × nd` update matrix.
    pub p_full: DenseMatrix,
    /// `d` diagonal blocks of the dimension-major split, each `n × n`.
    pub p_blocks: Vec<DenseMatrix>,
    /// `d × d` grid of `n × n` cross-dimension blocks, row-major
    /// (`q_blocks[i*d + j]`); diagonal cells are zero.
    pub q_blocks: Vec<DenseMatrix>,
}

impl UpdateOperators {
    pub fn q_block(&self, i: usize, j: usize) -> &DenseMatrix {
        &self.q_blocks[i * self.d + j]
    }

    /// Block-diagonal dimension-major part.
    pub fn p_dim_major(&self) -> DenseMatrix {
        let zeros = vec![DenseMatrix::zeros(self.n, self.n); self.d * self.d];
        assemble_grid(self.n, self.d, &self.p_blocks, &zeros)
    }

    /// Off-diagonal dimension-major part.
    pub fn q_dim_major(&self) -> DenseMatrix {
        let zeros = vec![DenseMatrix::zeros(self.n, self.n); self.d];
        assemble_grid(self.n, self.d, &zeros, &self.q_blocks)
    }

    /// Dimension-major update matrix reassembled from the blocks.
    pub fn f_dim_major(&self) -> DenseMatrix {
        assemble_grid(self.n, self.d, &self.p_blocks, &self.q_blocks)
    }

    fn check_agent(&self, l: usize) -> Result<()> {
        if l >= self.n {
            return Err(Error::InvalidAgent { id: l, n: self.n });
        }
        Ok(())
    }
}

fn check_tau(g: &MatrixWeightedGraph, tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::TauOutOfRange {
            tau,
            upper: f64::INFINITY,
        });
    }
    if g.edge_count() == 0 {
        return Ok(());
    }
    let range = step_size_upper(g)?;
    if !range.contains(tau) {
        return Err(Error::TauOutOfRange {
            tau,
            upper: range.upper,
        });
    }
    Ok(())
}

/// Builds the synchronous operators; `tau` must lie in the admissible range
/// (any positive value for an edgeless network).
pub fn build_sync_operator(g: &MatrixWeightedGraph, tau: f64) -> Result<UpdateOperators> {
    check_tau(g, tau)?;
    build_sync_operator_unchecked(g, tau)
}

/// As [`build_sync_operator`] without the step-size range check.
pub fn build_sync_operator_unchecked(g: &MatrixWeightedGraph, tau: f64) -> Result<UpdateOperators> {
    let signs = signed_factors(g)?;
    let (n, d) = (g.n(), g.d());
    let sums: Vec<DenseMatrix> = (0..n).map(|i| signed_weight_sum(g, &signs, i)).collect();

    let mut p_full = DenseMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                let id = if a == b { 1.0 } else { 0.0 };
                p_full[(i * d + a, i * d + b)] = id - tau * sums[i][(a, b)];
            }
        }
        for (j, w) in g.in_edges(i) {
            for a in 0..d {
                for b in 0..d {
                    p_full[(i * d + a, j * d + b)] = tau * w[(a, b)];
                }
            }
        }
    }

    // Element formulas for the dimension-major blocks, built straight from
    // the weights rather than by permuting p_full.
    let mut p_blocks = vec![DenseMatrix::zeros(n, n); d];
    let mut q_blocks = vec![DenseMatrix::zeros(n, n); d * d];
    for (dim_i, p) in p_blocks.iter_mut().enumerate() {
        for k in 0..n {
            p[(k, k)] = 1.0 - tau * sums[k][(dim_i, dim_i)];
            for (m, w) in g.in_edges(k) {
                p[(k, m)] = tau * w[(dim_i, dim_i)];
            }
        }
    }
    for dim_i in 0..d {
        for dim_j in 0..d {
            if dim_i == dim_j {
                continue;
            }
            let q = &mut q_blocks[dim_i * d + dim_j];
            for k in 0..n {
                q[(k, k)] = 0.0 - tau * sums[k][(dim_i, dim_j)];
                for (m, w) in g.in_edges(k) {
                    q[(k, m)] = tau * w[(dim_i, dim_j)];
                }
            }
        }
    }

    Ok(UpdateOperators {
        n,
        d,
        tau,
        p_full,
        p_blocks,
        q_blocks,
    })
}

/// Matrix form of a single-agent update: agent `l`'s rows are taken from
/// `p_full`, every other row is an identity row.
pub fn build_async_operator(ops: &UpdateOperators, l: usize) -> Result<DenseMatrix> {
    ops.check_agent(l)?;
    let d = ops.d;
    let mut u = DenseMatrix::identity(ops.n * d);
    for r in l * d..(l + 1) * d {
        u.row_mut(r).copy_from_slice(ops.p_full.row(r));
    }
    Ok(u)
}

/// Dimension-major blocks of the single-agent update for agent `l`:
/// `P_i(t)` keeps row `l` of `P_i` and identity rows elsewhere, `Q_ij(t)`
/// keeps row `l` of `Q_ij` and zero rows elsewhere.
pub fn async_blocks(ops: &UpdateOperators, l: usize) -> Result<(Vec<DenseMatrix>, Vec<DenseMatrix>)> {
    ops.check_agent(l)?;
    let p = ops
        .p_blocks
        .iter()
        .map(|pi| {
            let mut m = DenseMatrix::identity(ops.n);
            m.row_mut(l).copy_from_slice(pi.row(l));
            m
        })
        .collect();
    let q = ops
        .q_blocks
        .iter()
        .map(|qij| {
            let mut m = DenseMatrix::zeros(ops.n, ops.n);
            m.row_mut(l).copy_from_slice(qij.row(l));
            m
        })
        .collect();
    Ok((p, q))
}

pub fn step_sync(ops: &UpdateOperators, state: &StateEnsemble) -> Result<StateEnsemble> {
    state.check_shape(ops.n, ops.d)?;
    Ok(StateEnsemble {
        n: ops.n,
        d: ops.d,
        x: ops.p_full.mul_vec(&state.x),
    })
}

/// Per-agent update rule, precomputed: agent `l`'s new state is
/// `M_l X_l + Σ_j τ W_lj X_j` with `M_l = I − τ Σ_j sgn(W_lj) W_lj`.
#[derive(Debug, Clone)]
pub struct LocalUpdater {
    n: usize,
    d: usize,
    self_blocks: Vec<DenseMatrix>,
    neighbor_blocks: Vec<Vec<(usize, DenseMatrix)>>,
}

impl LocalUpdater {
    pub fn new(g: &MatrixWeightedGraph, tau: f64) -> Result<Self> {
        let signs = signed_factors(g)?;
        let (n, d) = (g.n(), g.d());
        let mut self_blocks = Vec::with_capacity(n);
        let mut neighbor_blocks = Vec::with_capacity(n);
        for l in 0..n {
            let s = signed_weight_sum(g, &signs, l);
            let mut m = DenseMatrix::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    let id = if a == b { 1.0 } else { 0.0 };
                    m[(a, b)] = id - tau * s[(a, b)];
                }
            }
            self_blocks.push(m);
            neighbor_blocks.push(g.in_edges(l).map(|(j, w)| (j, w.scale(tau))).collect());
        }
        Ok(Self {
            n,
            d,
            self_blocks,
            neighbor_blocks,
        })
    }

    /// New state of agent `l` computed from `x`, written into `out`.
    fn agent_update(&self, l: usize, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let own = &x[l * d..(l + 1) * d];
        let m = &self.self_blocks[l];
        for (a, slot) in out.iter_mut().enumerate().take(d) {
            let mut acc: f64 = m.row(a).iter().zip(own).map(|(p, v)| p * v).sum();
            for (j, w) in &self.neighbor_blocks[l] {
                let xj = &x[j * d..(j + 1) * d];
                acc += w.row(a).iter().zip(xj).map(|(p, v)| p * v).sum::<f64>();
            }
            *slot = acc;
        }
    }

    /// Updates agent `l` in place and returns the ∞-norm of the change.
    pub fn apply_agent(&self, l: usize, x: &mut [f64]) -> f64 {
        let d = self.d;
        let mut new = vec![0.0; d];
        self.agent_update(l, x, &mut new);
        let mut delta = 0.0_f64;
        for (old, v) in x[l * d..(l + 1) * d].iter_mut().zip(&new) {
            delta = delta.max((v - *old).abs());
            *old = *v;
        }
        delta
    }

    /// All agents at once from the same previous state; returns the ∞-norm
    /// of the change.
    pub fn apply_all(&self, x: &mut Vec<f64>) -> f64 {
        let mut next = vec![0.0; x.len()];
        for l in 0..self.n {
            self.agent_update(l, x, &mut next[l * self.d..(l + 1) * self.d]);
        }
        let delta = x
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        *x = next;
        delta
    }
}

/// Recomputes agent `l` only; all other agents keep their state.
pub fn step_async_local(
    g: &MatrixWeightedGraph,
    tau: f64,
    state: &StateEnsemble,
    l: usize,
) -> Result<StateEnsemble> {
    state.check_shape(g.n(), g.d())?;
    if l >= g.n() {
        return Err(Error::InvalidAgent { id: l, n: g.n() });
    }
    let updater = LocalUpdater::new(g, tau)?;
    let mut next = state.clone();
    updater.apply_agent(l, &mut next.x);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Sync,
    Async,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::Async => "async",
        }
    }
}

/// Converged once `window` consecutive steps each change the state by less
/// than `tol` (∞-norm) and, in async mode, every agent has been selected
/// during that quiet stretch; diverged once any entry exceeds
/// `overflow_bound` or stops being finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub tol: f64,
    pub window: usize,
    pub max_steps: usize,
    pub overflow_bound: f64,
}

impl StopRule {
    /// Window of `n` steps and 2×10⁵ steps for async, window 1 and 10⁴ steps
    /// for sync.
    pub fn default_for(mode: Mode, n: usize) -> Self {
        match mode {
            Mode::Async => Self {
                tol: 1e-10,
                window: n.max(1),
                max_steps: 200_000,
                overflow_bound: OVERFLOW_BOUND,
            },
            Mode::Sync => Self {
                tol: 1e-10,
                window: 1,
                max_steps: 10_000,
                overflow_bound: OVERFLOW_BOUND,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tau: f64,
    pub mode: Mode,
    /// Seed of the agent-selection stream.
    pub seed: u64,
    pub stop: StopRule,
    pub record_stride: usize,
    /// Permit a step size outside the admissible range.
    pub override_tau: bool,
}

impl SimConfig {
    pub fn new(tau: f64, mode: Mode, seed: u64, n: usize) -> Self {
        let stop = StopRule::default_for(mode, n);
        Self {
            tau,
            mode,
            seed,
            stop,
            record_stride: default_record_stride(stop.max_steps),
            override_tau: false,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.stop.max_steps = max_steps;
        self.record_stride = default_record_stride(max_steps);
        self
    }
}

pub fn default_record_stride(steps: usize) -> usize {
    (steps / 1000).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    Diverged,
    MaxSteps,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::Diverged => "diverged",
            StopReason::MaxSteps => "max_steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub step: usize,
    /// Agent updated at this step; `None` for sync runs and step 0.
    pub agent: Option<usize>,
    pub state: StateEnsemble,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub config: SimConfig,
    pub graph_digest: String,
    pub n: usize,
    pub d: usize,
    pub initial: StateEnsemble,
    /// Selected agent per step (async only).
    pub agent_sequence: Vec<usize>,
    /// Step 0, every `record_stride`-th step and the final step.
    pub samples: Vec<Sample>,
    pub step_deltas: Vec<f64>,
    pub final_state: StateEnsemble,
    pub steps_run: usize,
    pub stop_reason: StopReason,
    /// Largest state ∞-norm seen over the run.
    pub max_norm: f64,
}

impl RunTrace {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }

    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }
}

/// Runs one trajectory. Async runs pick the updating agent uniformly and
/// independently each step from a stream seeded by `config.seed`.
pub fn simulate(
    g: &MatrixWeightedGraph,
    initial: &StateEnsemble,
    config: &SimConfig,
) -> Result<RunTrace> {
    let (n, d) = (g.n(), g.d());
    initial.check_shape(n, d)?;
    if config.override_tau {
        if !config.tau.is_finite() {
            return Err(Error::TauOutOfRange {
                tau: config.tau,
                upper: f64::INFINITY,
            });
        }
    } else {
        check_tau(g, config.tau)?;
    }
    if config.record_stride == 0 {
        return Err(Error::InvalidParameter("record stride must be positive".into()));
    }
    let updater = LocalUpdater::new(g, config.tau)?;
    let mut rng = seed::rng(seed::derive(config.seed, "agents"));
    let stop = config.stop;

    let mut x = initial.x.clone();
    let mut samples = vec![Sample {
        step: 0,
        agent: None,
        state: initial.clone(),
    }];
    let mut agent_sequence = Vec::new();
    let mut step_deltas = Vec::new();
    let mut quiet = 0usize;
    // Agents selected since the quiet stretch began, tagged by stretch id.
    let mut stretch = 1usize;
    let mut selected_in = vec![0usize; n];
    let mut covered = 0usize;
    let mut max_norm = initial.inf_norm();
    let mut stop_reason = StopReason::MaxSteps;
    let mut last_agent = None;
    let mut steps_run = 0;

    for step in 1..=stop.max_steps {
        let (delta, l) = match config.mode {
            Mode::Async => {
                let l = rng.gen_range(0..n);
                agent_sequence.push(l);
                last_agent = Some(l);
                (updater.apply_agent(l, &mut x), Some(l))
            }
            Mode::Sync => (updater.apply_all(&mut x), None),
        };
        steps_run = step;
        step_deltas.push(delta);
        let norm = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        max_norm = max_norm.max(norm);
        let blown = !norm.is_finite() || norm > stop.overflow_bound;
        if delta < stop.tol {
            quiet += 1;
            match l {
                Some(l) if selected_in[l] != stretch => {
                    selected_in[l] = stretch;
                    covered += 1;
                }
                Some(_) => {}
                None => covered = n,
            }
        } else {
            quiet = 0;
            stretch += 1;
            covered = 0;
        }
        let settled = quiet >= stop.window && covered == n;
        let done = blown || settled;
        if step % config.record_stride == 0 || done {
            samples.push(Sample {
                step,
                agent: last_agent,
                state: StateEnsemble { n, d, x: x.clone() },
            });
        }
        if blown {
            stop_reason = StopReason::Diverged;
            break;
        }
        if settled {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    let final_state = StateEnsemble { n, d, x };
    if samples.last().map(|s| s.step) != Some(steps_run) {
        samples.push(Sample {
            step: steps_run,
            agent: last_agent,
            state: final_state.clone(),
        });
    }

    Ok(RunTrace {
        config: *config,
        graph_digest: g.digest(),
        n,
        d,
        initial: initial.clone(),
        agent_sequence,
        samples,
        step_deltas,
        final_state,
        steps_run,
        stop_reason,
        max_norm,
    })
}

/// Similarity transform by `Δ = diag(±I_d)` (+ for V1, − for V2), which maps a
/// structurally balanced network onto an all-cooperative one.
#[derive(Debug, Clone)]
pub struct GaugeOperators {
    pub partition: Partition,
    /// Agent-major `Δ`.
    pub delta: DenseMatrix,
    /// `Δ P Δ`, agent-major.
    pub d_full: DenseMatrix,
    /// Dimension-major diagonal blocks from the same-part / cross-part
    /// element formulas.
    pub s_blocks: Vec<DenseMatrix>,
    /// Dimension-major cross-dimension blocks, `t_blocks[i*d + j]`.
    pub t_blocks: Vec<DenseMatrix>,
}

impl GaugeOperators {
    pub fn st_dim_major(&self) -> DenseMatrix {
        let n = self.partition.n();
        let d = self.s_blocks.len();
        assemble_grid(n, d, &self.s_blocks, &self.t_blocks)
    }
}

/// Builds the gauge-transformed operators. The `S`/`T` blocks treat in-
/// neighbours from the same part as cooperative and those from the other
/// part as antagonistic, so they coincide with the permuted `Δ P Δ` exactly
/// when the network is balanced with respect to `partition`.
pub fn gauge_build(
    g: &MatrixWeightedGraph,
    ops: &UpdateOperators,
    partition: &Partition,
) -> Result<GaugeOperators> {
    let (n, d) = (ops.n, ops.d);
    if g.n() != n || g.d() != d {
        return Err(Error::Dimension("graph does not match operators".into()));
    }
    if partition.n() != n {
        return Err(Error::Partition(format!(
            "partition covers {} agents, network has {n}",
            partition.n()
        )));
    }
    let side = partition.membership();
    let mut delta = DenseMatrix::zeros(n * d, n * d);
    for i in 0..n {
        let s = if side[i] { 1.0 } else { -1.0 };
        for a in 0..d {
            delta[(i * d + a, i * d + a)] = s;
        }
    }
    let d_full = &(&delta * &ops.p_full) * &delta;

    let part_sign: BTreeMap<(usize, usize), f64> = g
        .edges()
        .map(|(k, m, _)| ((k, m), if side[k] == side[m] { 1.0 } else { -1.0 }))
        .collect();
    let sums: Vec<DenseMatrix> = (0..n).map(|k| signed_weight_sum(g, &part_sign, k)).collect();
    let tau = ops.tau;
    let mut s_blocks = vec![DenseMatrix::zeros(n, n); d];
    let mut t_blocks = vec![DenseMatrix::zeros(n, n); d * d];
    for i in 0..d {
        for j in 0..d {
            let block = if i == j {
                &mut s_blocks[i]
            } else {
                &mut t_blocks[i * d + j]
            };
            for k in 0..n {
                let base = if i == j { 1.0 } else { 0.0 };
                block[(k, k)] = base - tau * sums[k][(i, j)];
                for (m, w) in g.in_edges(k) {
                    block[(k, m)] = part_sign[&(k, m)] * (tau * w[(i, j)]);
                }
            }
        }
    }
    Ok(GaugeOperators {
        partition: partition.clone(),
        delta,
        d_full,
        s_blocks,
        t_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_regular_ring;
    use crate::weights::{assign_weights, default_tau, WeightMode, WeightPolicy};

    fn two_agent() -> MatrixWeightedGraph {
        let mut g = MatrixWeightedGraph::new(2, 1).unwrap();
        g.add_pair(0, 1, DenseMatrix::from_diagonal(&[2.0])).unwrap();
        g
    }

    fn weighted_ring(mode: WeightMode, seed: u64) -> (MatrixWeightedGraph, f64) {
        let ring = gen_regular_ring(10, 4, 3).unwrap();
        let g = assign_weights(&ring, &WeightPolicy::new(mode, seed)).unwrap();
        let tau = default_tau(&step_size_upper(&g).unwrap());
        (g, tau)
    }

    #[test]
    fn two_agent_operator() {
        // With W = 2 both ways and τ = 0.25: diagonal 1 − 0.25·2, off-diagonal 0.25·2.
        let ops = build_sync_operator_unchecked(&two_agent(), 0.25).unwrap();
        assert_eq!(ops.p_full, DenseMatrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap());
        // τ = 0.25 is the open upper end of the range.
        assert!(matches!(build_sync_operator(&two_agent(), 0.25), Err(Error::TauOutOfRange { .. })));
        assert!(build_sync_operator(&two_agent(), 0.2).is_ok());
    }

    #[test]
    fn edgeless_operator_is_identity() {
        let g = MatrixWeightedGraph::new(3, 2).unwrap();
        let ops = build_sync_operator(&g, 0.3).unwrap();
        assert_eq!(ops.p_full, DenseMatrix::identity(6));
    }

    #[test]
    fn pd_blocks_are_stochastic() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 3);
        let ops = build_sync_operator(&g, tau).unwrap();
        for p in &ops.p_blocks {
            for k in 0..10 {
                let row = p.row(k);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|v| *v >= 0.0));
                assert!(row[k] > 0.0);
            }
        }
        for (idx, q) in ops.q_blocks.iter().enumerate() {
            for k in 0..10 {
                let s: f64 = q.row(k).iter().sum();
                assert!(s.abs() < 1e-12);
                if idx / 3 == idx % 3 {
                    assert!(q.row(k).iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(agent_to_dim_permutation(1, 4), vec![0, 1, 2, 3]);
        assert_eq!(agent_to_dim_permutation(4, 1), vec![0, 1, 2, 3]);
        // One-based {1→1, 2→3, 3→2, 4→4}.
        assert_eq!(agent_to_dim_permutation(2, 2), vec![0, 2, 1, 3]);
    }

    #[test]
    fn blocks_match_conjugated_full_operator_exactly() {
        for s in 0..20 {
            let mode = match s % 3 {
                0 => WeightMode::AllPositiveDefinite,
                1 => WeightMode::AllNegativeDefinite,
                _ => WeightMode::BalancedFromPartition(Partition::from_v1(10, &[0, 3, 4]).unwrap()),
            };
            let (g, tau) = weighted_ring(mode, s);
            let ops = build_sync_operator(&g, tau).unwrap();
            let perm = agent_to_dim_permutation(10, 3);
            assert_eq!(conjugate_by_permutation(&ops.p_full, &perm), ops.f_dim_major(), "seed {s}");
        }
    }

    #[test]
    fn async_operator_rows() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 1);
        let ops = build_sync_operator(&g, tau).unwrap();
        let u = build_async_operator(&ops, 4).unwrap();
        let id = DenseMatrix::identity(30);
        for r in 0..30 {
            let expect = if r / 3 == 4 { ops.p_full.row(r) } else { id.row(r) };
            assert_eq!(u.row(r), expect);
        }
        assert!(build_async_operator(&ops, 10).is_err());

        let single = MatrixWeightedGraph::new(1, 2).unwrap();
        let ops1 = build_sync_operator(&single, 0.1).unwrap();
        assert_eq!(build_async_operator(&ops1, 0).unwrap(), ops1.p_full);
    }

    #[test]
    fn async_blocks_match_conjugated_async_operator() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 2);
        let ops = build_sync_operator(&g, tau).unwrap();
        let perm = agent_to_dim_permutation(10, 3);
        for l in 0..10 {
            let u = build_async_operator(&ops, l).unwrap();
            let (p, q) = async_blocks(&ops, l).unwrap();
            assert_eq!(conjugate_by_permutation(&u, &perm), assemble_grid(10, 3, &p, &q));
            for pi in &p {
                for k in 0..10 {
                    assert!((pi.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(pi[(k, k)] > 0.0);
                    assert!(pi.row(k).iter().all(|v| *v >= 0.0));
                }
            }
            for qij in &q {
                for k in 0..10 {
                    assert!(qij.row(k).iter().sum::<f64>().abs() < 1e-12);
                    if k != l {
                        assert!(qij.row(k).iter().all(|v| *v == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn local_step_matches_matrix_step() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 5);
        let ops = build_sync_operator(&g, tau).unwrap();
        let x = StateEnsemble::random(10, 3, 1);
        for l in 0..10 {
            let local = step_async_local(&g, tau, &x, l).unwrap();
            let u = build_async_operator(&ops, l).unwrap();
            let via_matrix = StateEnsemble::new(10, 3, u.mul_vec(x.as_slice())).unwrap();
            assert!(local.max_abs_diff(&via_matrix) < 1e-12);
            for other in (0..10).filter(|o| *o != l) {
                assert_eq!(local.agent(other), x.agent(other));
            }
        }
        assert!(step_async_local(&g, tau, &x, 10).is_err());
        assert!(step_async_local(&g, tau, &StateEnsemble::zeros(9, 3), 0).is_err());
    }

    #[test]
    fn consensus_and_zero_are_fixed_points() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 6);
        let ops = build_sync_operator(&g, tau).unwrap();
        let c = StateEnsemble::uniform_consensus(10, &[0.3, -1.2, 0.7]);
        assert!(step_sync(&ops, &c).unwrap().max_abs_diff(&c) < 1e-12);
        for l in 0..10 {
            assert!(step_async_local(&g, tau, &c, l).unwrap().max_abs_diff(&c) < 1e-12);
        }
        let z = StateEnsemble::zeros(10, 3);
        assert_eq!(step_sync(&ops, &z).unwrap(), z);
        assert_eq!(step_async_local(&g, tau, &z, 3).unwrap(), z);
    }

    #[test]
    fn dim_major_round_trip() {
        let x = StateEnsemble::random(4, 3, 2);
        let y = x.to_dim_major();
        assert_eq!(y[2 * 4 + 1], x.agent(1)[2]);
        assert_eq!(StateEnsemble::from_dim_major(4, 3, &y).unwrap(), x);
    }

    #[test]
    fn simulate_is_deterministic() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 8);
        let init = StateEnsemble::random(10, 3, 8);
        let cfg = SimConfig::new(tau, Mode::Async, 99, 10);
        let a = simulate(&g, &init, &cfg).unwrap();
        let b = simulate(&g, &init, &cfg).unwrap();
        assert_eq!(a.agent_sequence, b.agent_sequence);
        assert_eq!(a.final_state, b.final_state);
        assert!(a.converged());
        assert_eq!(a.agent_sequence.len(), a.steps_run);
        assert_eq!(a.samples.first().unwrap().step, 0);
        assert_eq!(a.samples.last().unwrap().step, a.steps_run);
    }

    #[test]
    fn simulate_rejects_out_of_range_tau_without_override() {
        let (g, tau) = weighted_ring(WeightMode::AllPositiveDefinite, 8);
        let init = StateEnsemble::random(10, 3, 8);
        let cfg = SimConfig::new(tau * 4.0, Mode::Sync, 1, 10);
        assert!(matches!(simulate(&g, &init, &cfg), Err(Error::TauOutOfRange { .. })));
        let mut over = cfg;
        over.override_tau = true;
        assert!(simulate(&g, &init, &over).is_ok());
    }

    #[test]
    fn sync_sparse_step_matches_matrix_step() {
        let (g, tau) = weighted_ring(WeightMode::AllNegativeDefinite, 4);
        let ops = build_sync_operator(&g, tau).unwrap();
        let updater = LocalUpdater::new(&g, tau).unwrap();
        let x0 = StateEnsemble::random(10, 3, 4);
        let mut x = x0.as_slice().to_vec();
        updater.apply_all(&mut x);
        let dense = step_sync(&ops, &x0).unwrap();
        assert!(dense.max_abs_diff(&StateEnsemble::new(10, 3, x).unwrap()) < 1e-12);
    }

    #[test]
    fn gauge_examples() {
        let odd = Partition::from_v1(10, &[0, 2, 4, 6, 8]).unwrap();
        let (g, tau) = weighted_ring(WeightMode::BalancedFromPartition(odd.clone()), 3);
        let ops = build_sync_operator(&g, tau).unwrap();
        let gauge = gauge_build(&g, &ops, &odd).unwrap();
        assert_eq!(&gauge.delta * &gauge.delta, DenseMatrix::identity(30));
        let perm = agent_to_dim_permutation(10, 3);
        assert_eq!(conjugate_by_permutation(&gauge.d_full, &perm), gauge.st_dim_major());
        for s in &gauge.s_blocks {
            for k in 0..10 {
                assert!((s.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(s[(k, k)] > 0.0 && s.row(k).iter().all(|v| *v >= 0.0));
            }
        }
        for (idx, t) in gauge.t_blocks.iter().enumerate() {
            if idx / 3 != idx % 3 {
                for k in 0..10 {
                    assert!(t.row(k).iter().sum::<f64>().abs() < 1e-12);
                }
            }
        }
        // Transforming back recovers the original operator.
        let back = &(&gauge.delta * &gauge.d_full) * &gauge.delta;
        assert_eq!(back, ops.p_full);

        let all = Partition::from_v1(10, &(0..10).collect::<Vec<_>>()).unwrap();
        let (gp, taup) = weighted_ring(WeightMode::AllPositiveDefinite, 3);
        let opsp = build_sync_operator(&gp, taup).unwrap();
        let trivial = gauge_build(&gp, &opsp, &all).unwrap();
        assert_eq!(trivial.delta, DenseMatrix::identity(30));
        assert_eq!(trivial.d_full, opsp.p_full);

        assert!(gauge_build(&g, &ops, &Partition::from_v1(4, &[0]).unwrap()).is_err());
    }
}
