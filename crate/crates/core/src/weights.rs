//! Definite weight generation and the admissible step-size range.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MatrixWeightedGraph, Partition};
use crate::linalg::{DenseMatrix, MatrixSign};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightMode {
    AllPositiveDefinite,
    AllNegativeDefinite,
    /// Positive definite inside each part, negative definite across.
    BalancedFromPartition(Partition),
    /// One sign per unordered agent pair `(min, max)`.
    SignPattern(BTreeMap<(usize, usize), Sign>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPolicy {
    pub mode: WeightMode,
    pub magnitude_scale: f64,
    pub seed: u64,
}

impl WeightPolicy {
    pub fn new(mode: WeightMode, seed: u64) -> Self {
        Self {
            mode,
            magnitude_scale: 1.0,
            seed,
        }
    }
}

/// `sign · (G Gᵀ + 0.1·scale·I)` with `G` uniform on `(-scale, scale)`.
pub fn gen_definite(d: usize, sign: Sign, scale: f64, seed: u64) -> Result<DenseMatrix> {
    if d == 0 {
        return Err(Error::InvalidParameter("weight dimension must be at least 1".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
    }
    let mut rng = seed::rng(seed);
    let g: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-scale..scale)).collect();
    let mut w = DenseMatrix::zeros(d, d);
    for r in 0..d {
        for c in r..d {
            let mut v: f64 = (0..d).map(|k| g[r * d + k] * g[c * d + k]).sum();
            if r == c {
                v += 0.1 * scale;
            }
            w[(r, c)] = sign.factor() * v;
            w[(c, r)] = sign.factor() * v;
        }
    }
    Ok(w)
}

/// Gives every agent pair one freshly generated matrix, shared by both
/// directions. Each pair's draw depends only on `(policy.seed, min, max)`.
pub fn assign_weights(g: &MatrixWeightedGraph, policy: &WeightPolicy) -> Result<MatrixWeightedGraph> {
    let side = match &policy.mode {
        WeightMode::BalancedFromPartition(p) => {
            if p.n() != g.n() {
                return Err(Error::Partition(format!(
                    "partition covers {} agents, network has {}",
                    p.n(),
                    g.n()
                )));
            }
            Some(p.membership())
        }
        _ => None,
    };
    let mut out = MatrixWeightedGraph::new(g.n(), g.d())?;
    for (to, from, _) in g.edges() {
        let (a, b) = (to.min(from), to.max(from));
        let sign = match &policy.mode {
            WeightMode::AllPositiveDefinite => Sign::Positive,
            WeightMode::AllNegativeDefinite => Sign::Negative,
            WeightMode::BalancedFromPartition(_) => {
                let side = side.as_ref().expect("set above");
                if side[a] == side[b] {
                    Sign::Positive
                } else {
                    Sign::Negative
                }
            }
            WeightMode::SignPattern(signs) => *signs.get(&(a, b)).ok_or_else(|| {
                Error::InvalidParameter(format!("sign pattern has no entry for pair ({a}, {b})"))
            })?,
        };
        let sub = seed::derive_indexed(policy.seed, "edge", &[a as u64, b as u64]);
        let w = gen_definite(g.d(), sign, policy.magnitude_scale, sub)?;
        out.add_edge(to, from, w)?;
    }
    Ok(out)
}

/// Supremum of the admissible step sizes, `1 / D*`, where `D*` is the largest
/// value of `2 Σ_{j ∈ N_i} sgn(W_ij) W_ij[k][m]` over agents `i` and entries
/// `(k, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeRange {
    pub upper: f64,
    pub denominator: f64,
    /// `(agent, k, m)` attaining `D*`.
    pub witness: (usize, usize, usize),
}

impl StepSizeRange {
    pub fn contains(&self, tau: f64) -> bool {
        tau > 0.0 && tau < self.upper
    }
}

/// `+1.0` / `-1.0` per edge, or an error naming the first non-definite weight.
pub(crate) fn signed_factors(g: &MatrixWeightedGraph) -> Result<BTreeMap<(usize, usize), f64>> {
    g.edge_signs()
        .into_iter()
        .map(|((to, from), s)| match s {
            MatrixSign::Positive => Ok(((to, from), 1.0)),
            MatrixSign::Negative => Ok(((to, from), -1.0)),
            _ => Err(Error::IndefiniteWeight { to, from }),
        })
        .collect()
}

/// `Σ_{j ∈ N_i} sgn(W_ij) W_ij` for agent `i`, summed in ascending neighbour
/// order.
pub(crate) fn signed_weight_sum(
    g: &MatrixWeightedGraph,
    signs: &BTreeMap<(usize, usize), f64>,
    i: usize,
) -> DenseMatrix {
    let d = g.d();
    let mut s = DenseMatrix::zeros(d, d);
    for (j, w) in g.in_edges(i) {
        let f = signs[&(i, j)];
        for k in 0..d {
            for m in 0..d {
                s[(k, m)] += f * w[(k, m)];
            }
        }
    }
    s
}

pub fn step_size_upper(g: &MatrixWeightedGraph) -> Result<StepSizeRange> {
    let signs = signed_factors(g)?;
    let d = g.d();
    let mut best = f64::NEG_INFINITY;
    let mut witness = (0, 0, 0);
    for i in 0..g.n() {
        let s = signed_weight_sum(g, &signs, i);
        for k in 0..d {
            for m in 0..d {
                let v = 2.0 * s[(k, m)];
                if v > best {
                    best = v;
                    witness = (i, k, m);
                }
            }
        }
    }
    if best.is_nan() || best <= 0.0 {
        return Err(Error::NonPositiveDenominator(best));
    }
    Ok(StepSizeRange {
        upper: 1.0 / best,
        denominator: best,
        witness,
    })
}

/// Midpoint of the admissible range.
pub fn default_tau(r: &StepSizeRange) -> f64 {
    0.5 * r.upper
}
