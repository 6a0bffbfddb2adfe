//! Matrix-weighted directed graphs, induced graphs of matrices, spanning-tree
//! detection, structural balance and topology generators.
//!
//! An edge `(i, j)` means agent `i` receives information from agent `j`, so
//! information flows `j → i`. Both [`MatrixWeightedGraph`] and
//! [`DirectedGraph`] key their edges as `(receiver, sender)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{matrix_sign, DenseMatrix, MatrixSign, TOL_DEF};
use crate::seed;

/// Strict-positivity threshold for induced graphs.
pub const TOL_POS: f64 = 1e-12;
/// Draws attempted by [`gen_rgg`] before giving up.
pub const RGG_RETRY_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixWeightedGraph {
    n: usize,
    d: usize,
    edges: BTreeMap<(usize, usize), DenseMatrix>,
}

impl MatrixWeightedGraph {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "graph needs n >= 1 and d >= 1 (got n={n}, d={d})"
            )));
        }
        Ok(Self {
            n,
            d,
            edges: BTreeMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn check_agent(&self, id: usize) -> Result<()> {
        if id >= self.n {
            return Err(Error::InvalidAgent { id, n: self.n });
        }
        Ok(())
    }

    /// Adds the edge along which `to` receives from `from`.
    pub fn add_edge(&mut self, to: usize, from: usize, weight: DenseMatrix) -> Result<()> {
        self.check_agent(to)?;
        self.check_agent(from)?;
        if to == from {
            return Err(Error::InvalidEdge(format!("self-loop on agent {to}")));
        }
        if self.edges.contains_key(&(to, from)) {
            return Err(Error::InvalidEdge(format!("duplicate edge ({to}, {from})")));
        }
        self.validate_weight(&weight)?;
        self.edges.insert((to, from), weight);
        Ok(())
    }

    /// Adds `(i, j)` and `(j, i)` with the same weight.
    pub fn add_pair(&mut self, i: usize, j: usize, weight: DenseMatrix) -> Result<()> {
        self.add_edge(i, j, weight.clone())?;
        self.add_edge(j, i, weight)
    }

    /// Replaces the weight of an existing edge.
    pub fn set_weight(&mut self, to: usize, from: usize, weight: DenseMatrix) -> Result<()> {
        self.validate_weight(&weight)?;
        match self.edges.get_mut(&(to, from)) {
            Some(w) => {
                *w = weight;
                Ok(())
            }
            None => Err(Error::InvalidEdge(format!("no edge ({to}, {from})"))),
        }
    }

    fn validate_weight(&self, weight: &DenseMatrix) -> Result<()> {
        if weight.rows() != self.d || weight.cols() != self.d {
            return Err(Error::Dimension(format!(
                "edge weight is {}x{}, expected {}x{}",
                weight.rows(),
                weight.cols(),
                self.d,
                self.d
            )));
        }
        weight.check_symmetric()
    }

    pub fn weight(&self, to: usize, from: usize) -> Option<&DenseMatrix> {
        self.edges.get(&(to, from))
    }

    /// Edges as `(receiver, sender, weight)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &DenseMatrix)> {
        self.edges.iter().map(|(&(to, from), w)| (to, from, w))
    }

    /// Agents `i` receives from, ascending.
    pub fn in_neighbors(&self, i: usize) -> Result<Vec<usize>> {
        self.check_agent(i)?;
        Ok(self.in_edges(i).map(|(j, _)| j).collect())
    }

    /// `(sender, weight)` pairs for receiver `i`, ascending by sender.
    pub fn in_edges(&self, i: usize) -> impl Iterator<Item = (usize, &DenseMatrix)> {
        self.edges
            .range((i, 0)..(i + 1, 0))
            .map(|(&(_, j), w)| (j, w))
    }

    pub fn topology(&self) -> DirectedGraph {
        DirectedGraph {
            n: self.n,
            pairs: self.edges.keys().copied().collect(),
        }
    }

    /// Unordered agent pairs joined by at least one directed edge.
    pub fn undirected_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges
            .keys()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    /// Matrix sign of every edge, keyed like the edges.
    pub fn edge_signs(&self) -> BTreeMap<(usize, usize), MatrixSign> {
        self.edges
            .iter()
            .map(|(k, w)| {
                let s = matrix_sign(w, TOL_DEF).expect("edge weights are validated on insertion");
                (*k, s)
            })
            .collect()
    }

    /// Same network with agent `a` renamed to `perm[a]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let mut g = Self::new(self.n, self.d)?;
        for (to, from, w) in self.edges() {
            g.add_edge(perm[to], perm[from], w.clone())?;
        }
        Ok(g)
    }

    /// SHA-256 over the dimensions and the exact bit patterns of every
    /// weight, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for (to, from, w) in self.edges() {
            h.update((to as u64).to_le_bytes());
            h.update((from as u64).to_le_bytes());
            for v in w.entries() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidParameter("permutation length mismatch".into()));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Directed graph over `n` agents; a pair `(i, j)` means `i` receives from `j`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirectedGraph {
    n: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pairs: BTreeSet::new(),
        }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (i, j) in pairs {
            g.insert(i, j)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidAgent {
                id: i.max(j),
                n: self.n,
            });
        }
        self.pairs.insert((i, j));
        Ok(())
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i, j))
    }

    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }

    pub fn is_subgraph_of(&self, other: &Self) -> bool {
        self.n == other.n && self.pairs.is_subset(&other.pairs)
    }

    /// Successor lists along the direction of information flow, self-pairs
    /// dropped.
    fn flow_adjacency(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for &(i, j) in &self.pairs {
            if i != j {
                out[j].push(i);
            }
        }
        out
    }

    /// An agent with a directed path to every other agent, if one exists.
    ///
    /// The last vertex to start a new depth-first search over all vertices is
    /// the only possible root; one more search from it confirms or rejects.
    pub fn has_spanning_tree(&self) -> Option<usize> {
        if self.n == 0 {
            return None;
        }
        let adj = self.flow_adjacency();
        let mut visited = vec![false; self.n];
        let mut candidate = 0;
        for start in 0..self.n {
            if !visited[start] {
                candidate = start;
                mark_reachable(&adj, start, &mut visited);
            }
        }
        let mut from_candidate = vec![false; self.n];
        mark_reachable(&adj, candidate, &mut from_candidate);
        from_candidate.iter().all(|v| *v).then_some(candidate)
    }
}

fn mark_reachable(adj: &[Vec<usize>], start: usize, visited: &mut [bool]) {
    let mut stack = vec![start];
    visited[start] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !visited[w] {
                visited[w] = true;
                stack.push(w);
            }
        }
    }
}

/// Graph with `(i, j)` exactly where `m[i][j] > TOL_POS`, diagonal included.
pub fn induced_graph(m: &DenseMatrix) -> Result<DirectedGraph> {
    if !m.is_square() {
        return Err(Error::Dimension("induced graph of a non-square matrix".into()));
    }
    let mut g = DirectedGraph::new(m.rows());
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if *v > TOL_POS {
                g.pairs.insert((i, j));
            }
        }
    }
    Ok(g)
}

pub fn union_graphs(gs: &[DirectedGraph]) -> Result<DirectedGraph> {
    let Some(first) = gs.first() else {
        return Err(Error::InvalidParameter("union of no graphs".into()));
    };
    let mut out = DirectedGraph::new(first.n);
    for g in gs {
        if g.n != first.n {
            return Err(Error::Dimension(format!(
                "graph sizes differ ({} vs {})",
                g.n, first.n
            )));
        }
        out.pairs.extend(g.pairs.iter().copied());
    }
    Ok(out)
}

/// Two-way split of the agents; `v1` is never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub v1: Vec<usize>,
    pub v2: Vec<usize>,
}

impl Partition {
    /// Builds `(v1, V \ v1)`.
    pub fn from_v1(n: usize, v1: &[usize]) -> Result<Self> {
        let set: BTreeSet<usize> = v1.iter().copied().collect();
        if set.is_empty() {
            return Err(Error::Partition("V1 must not be empty".into()));
        }
        if set.len() != v1.len() {
            return Err(Error::Partition("V1 lists an agent twice".into()));
        }
        if let Some(&bad) = set.iter().find(|&&a| a >= n) {
            return Err(Error::InvalidAgent { id: bad, n });
        }
        Ok(Self {
            v1: set.iter().copied().collect(),
            v2: (0..n).filter(|a| !set.contains(a)).collect(),
        })
    }

    pub fn new(n: usize, v1: Vec<usize>, v2: Vec<usize>) -> Result<Self> {
        let p = Self::from_v1(n, &v1)?;
        let mut v2_sorted = v2;
        v2_sorted.sort_unstable();
        if p.v2 != v2_sorted {
            return Err(Error::Partition("V1 and V2 must split the agent set".into()));
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.v1.len() + self.v2.len()
    }

    /// `true` for agents in V1.
    pub fn membership(&self) -> Vec<bool> {
        let mut m = vec![false; self.n()];
        for &a in &self.v1 {
            m[a] = true;
        }
        m
    }

    pub fn swapped(&self) -> Option<Self> {
        (!self.v2.is_empty()).then(|| Self {
            v1: self.v2.clone(),
            v2: self.v1.clone(),
        })
    }

    pub fn equals_up_to_swap(&self, other: &Self) -> bool {
        (self.v1 == other.v1 && self.v2 == other.v2)
            || (self.v1 == other.v2 && self.v2 == other.v1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceKind {
    AllPositive,
    Balanced,
    Unbalanced,
    AllNegative,
    ContainsIndefinite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceVerdict {
    pub kind: BalanceKind,
    /// Present iff `kind` is `Balanced`; V1 holds the lowest-numbered agent.
    pub partition: Option<Partition>,
}

/// Parity two-colouring of the undirected skeleton with one scalar sign per
/// agent pair: positive pairs share a colour, negative pairs differ.
///
/// A uniformly negative network whose skeleton is two-colourable satisfies
/// the balance condition and is reported as `Balanced`; otherwise uniform
/// signs give `AllPositive` / `AllNegative`.
pub fn structural_balance(g: &MatrixWeightedGraph) -> BalanceVerdict {
    let signs = g.edge_signs();
    if signs.values().any(|s| !s.is_definite()) {
        return BalanceVerdict {
            kind: BalanceKind::ContainsIndefinite,
            partition: None,
        };
    }
    let positive = |s: &MatrixSign| *s == MatrixSign::Positive;
    if signs.values().all(positive) {
        return BalanceVerdict {
            kind: BalanceKind::AllPositive,
            partition: None,
        };
    }

    let mut pair_sign: BTreeMap<(usize, usize), MatrixSign> = BTreeMap::new();
    let mut conflict = false;
    for (&(a, b), s) in &signs {
        let key = (a.min(b), a.max(b));
        match pair_sign.get(&key) {
            Some(prev) if prev != s => conflict = true,
            _ => {
                pair_sign.insert(key, *s);
            }
        }
    }

    let partition = if conflict {
        None
    } else {
        two_colour(g.n(), &pair_sign)
    };
    let all_negative = signs.values().all(|s| *s == MatrixSign::Negative);
    match partition {
        Some(p) => BalanceVerdict {
            kind: BalanceKind::Balanced,
            partition: Some(p),
        },
        None if all_negative => BalanceVerdict {
            kind: BalanceKind::AllNegative,
            partition: None,
        },
        None => BalanceVerdict {
            kind: BalanceKind::Unbalanced,
            partition: None,
        },
    }
}

fn two_colour(n: usize, pair_sign: &BTreeMap<(usize, usize), MatrixSign>) -> Option<Partition> {
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for (&(a, b), s) in pair_sign {
        let flip = *s == MatrixSign::Negative;
        adj[a].push((b, flip));
        adj[b].push((a, flip));
    }
    let mut colour: Vec<Option<bool>> = vec![None; n];
    for start in 0..n {
        if colour[start].is_some() {
            continue;
        }
        colour[start] = Some(true);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let cv = colour[v].expect("queued vertices are coloured");
            for &(w, flip) in &adj[v] {
                let want = cv ^ flip;
                match colour[w] {
                    None => {
                        colour[w] = Some(want);
                        queue.push_back(w);
                    }
                    Some(cw) if cw != want => return None,
                    Some(_) => {}
                }
            }
        }
    }
    let side0 = colour[0];
    let v1: Vec<usize> = (0..n).filter(|&a| colour[a] == side0).collect();
    let v2: Vec<usize> = (0..n).filter(|&a| colour[a] != side0).collect();
    Some(Partition { v1, v2 })
}

/// Circulant graph: each agent is joined both ways to its `k / 2` nearest
/// neighbours on either side. Weights are identity placeholders.
pub fn gen_regular_ring(n: usize, k: usize, d: usize) -> Result<MatrixWeightedGraph> {
    if !k.is_multiple_of(2) || k >= n.max(1) || (n > 1 && k < 2) {
        return Err(Error::InvalidParameter(format!(
            "ring degree k={k} must be even with 2 <= k < n={n}"
        )));
    }
    let mut g = MatrixWeightedGraph::new(n, d)?;
    let w = DenseMatrix::identity(d);
    for i in 0..n {
        for s in 1..=k / 2 {
            g.add_pair(i, (i + s) % n, w.clone())?;
        }
    }
    Ok(g)
}

/// Random geometric graph on the unit square; two agents are joined both
/// ways when their distance is at most `radius`. Redraws until the result
/// has a spanning tree, up to [`RGG_RETRY_CAP`] attempts.
pub fn gen_rgg(n: usize, radius: f64, d: usize, seed: u64) -> Result<MatrixWeightedGraph> {
    if !(0.0..=std::f64::consts::SQRT_2).contains(&radius) {
        return Err(Error::InvalidParameter(format!(
            "radius {radius} outside [0, sqrt(2)]"
        )));
    }
    let w = DenseMatrix::identity(d);
    for attempt in 0..RGG_RETRY_CAP {
        let mut rng = seed::rng(seed::derive_indexed(seed, "rgg", &[attempt as u64]));
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        let mut g = MatrixWeightedGraph::new(n, d)?;
        for a in 0..n {
            for b in (a + 1)..n {
                let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
                if (dx * dx + dy * dy).sqrt() <= radius {
                    g.add_pair(a, b, w.clone())?;
                }
            }
        }
        if g.topology().has_spanning_tree().is_some() {
            return Ok(g);
        }
    }
    Err(Error::Generation(format!(
        "no spanning tree in {RGG_RETRY_CAP} draws of G({n}, {radius})"
    )))
}
