//! File formats: network descriptions and reports as JSON, trajectories as
//! CSV with a JSON manifest alongside.
//!
//! Agent ids in every file are one-based. Files are written to a temporary
//! sibling and renamed into place, so readers never see a partial file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{ConsensusVerdict, LemmaReport};
use crate::dynamics::{Mode, RunTrace, Sample, SimConfig, StateEnsemble, StopReason, StopRule};
use crate::error::{Error, Result};
use crate::graph::{MatrixWeightedGraph, Partition};
use crate::linalg::DenseMatrix;

pub const NETWORK_FORMAT_VERSION: u32 = 1;
pub const TRACE_FORMAT_VERSION: u32 = 1;

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// One directed edge: information flows from `from` to `to`, and `to`'s
/// update uses `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    /// `d²` entries, row-major.
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// First part of the planted partition, one-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_v1: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    pub n: usize,
    pub d: usize,
    /// False iff every edge has a reverse edge carrying the same weight.
    pub directed: bool,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<NetworkMetadata>,
}

impl NetworkFile {
    pub fn from_graph(g: &MatrixWeightedGraph, metadata: Option<NetworkMetadata>) -> Self {
        let directed = g
            .edges()
            .any(|(to, from, w)| g.weight(from, to) != Some(w));
        let edges = g
            .edges()
            .map(|(to, from, w)| EdgeRecord {
                from: from + 1,
                to: to + 1,
                weight: w.entries().to_vec(),
            })
            .collect();
        Self {
            version: NETWORK_FORMAT_VERSION,
            n: g.n(),
            d: g.d(),
            directed,
            edges,
            metadata,
        }
    }

    pub fn to_graph(&self) -> Result<MatrixWeightedGraph> {
        if self.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported network version {}", self.version)));
        }
        let mut g = MatrixWeightedGraph::new(self.n, self.d)?;
        for e in &self.edges {
            if e.from == 0 || e.to == 0 {
                return Err(Error::Format("agent ids are one-based".into()));
            }
            let w = DenseMatrix::new(self.d, self.d, e.weight.clone())?;
            g.add_edge(e.to - 1, e.from - 1, w)?;
        }
        if !self.directed && g.edges().any(|(to, from, w)| g.weight(from, to) != Some(w)) {
            return Err(Error::Format(
                "network marked undirected has an edge without a matching reverse".into(),
            ));
        }
        Ok(g)
    }

    /// Planted partition from the metadata, zero-based.
    pub fn planted_partition(&self) -> Result<Option<Partition>> {
        let Some(v1) = self.metadata.as_ref().and_then(|m| m.planted_v1.as_ref()) else {
            return Ok(None);
        };
        if v1.contains(&0) {
            return Err(Error::Format("agent ids are one-based".into()));
        }
        let zero_based: Vec<usize> = v1.iter().map(|v| v - 1).collect();
        Partition::from_v1(self.n, &zero_based).map(Some)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        to_json(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn manifest_path(trace_path: &Path) -> PathBuf {
    let mut p = trace_path.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub version: u32,
    pub graph_digest: String,
    pub n: usize,
    pub d: usize,
    pub mode: Mode,
    pub tau: f64,
    pub seed: u64,
    pub stop: StopRule,
    pub record_stride: usize,
    pub override_tau: bool,
    pub stop_reason: StopReason,
    pub steps_run: usize,
    pub max_norm: f64,
    /// Agent-major initial state.
    pub initial: Vec<f64>,
    /// Selected agents, one-based; present when products were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_sequence: Option<Vec<usize>>,
}

/// Column names: `step`, `selected_agent`, then `agent<i>_dim<k>` (one-based).
pub fn trace_header(n: usize, d: usize) -> String {
    let mut h = String::from("step,selected_agent");
    for i in 1..=n {
        for k in 1..=d {
            let _ = write!(h, ",agent{i}_dim{k}");
        }
    }
    h
}

fn push_values(line: &mut String, values: &[f64]) {
    for v in values {
        let _ = write!(line, ",{v:.16e}");
    }
}

/// CSV body of a trace: one row per recorded sample. `selected_agent` is the
/// one-based agent updated at that step, `-1` for sync runs and step 0.
pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = trace_header(trace.n, trace.d);
    out.push('\n');
    for s in &trace.samples {
        let agent = s.agent.map_or(-1, |a| a as i64 + 1);
        let mut line = format!("{},{agent}", s.step);
        push_values(&mut line, s.state.as_slice());
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn trace_manifest(trace: &RunTrace, include_sequence: bool) -> TraceManifest {
    TraceManifest {
        version: TRACE_FORMAT_VERSION,
        graph_digest: trace.graph_digest.clone(),
        n: trace.n,
        d: trace.d,
        mode: trace.config.mode,
        tau: trace.config.tau,
        seed: trace.config.seed,
        stop: trace.config.stop,
        record_stride: trace.config.record_stride,
        override_tau: trace.config.override_tau,
        stop_reason: trace.stop_reason,
        steps_run: trace.steps_run,
        max_norm: trace.max_norm,
        initial: trace.initial.as_slice().to_vec(),
        agent_sequence: include_sequence.then(|| trace.agent_sequence.iter().map(|a| a + 1).collect()),
    }
}

/// Writes `path` (CSV) and its manifest.
pub fn write_trace(path: &Path, trace: &RunTrace, include_sequence: bool) -> Result<()> {
    write_atomic(path, trace_csv(trace).as_bytes())?;
    write_atomic(&manifest_path(path), &to_json(&trace_manifest(trace, include_sequence))?)
}

#[derive(Debug, Clone)]
pub struct TraceData {
    pub manifest: TraceManifest,
    pub samples: Vec<Sample>,
}

impl TraceData {
    /// Rebuilds the parts of a run needed for analysis. Step deltas are not
    /// stored and come back empty.
    pub fn to_run_trace(&self) -> Result<RunTrace> {
        let m = &self.manifest;
        let final_state = self
            .samples
            .last()
            .ok_or_else(|| Error::Format("trace has no rows".into()))?
            .state
            .clone();
        let agent_sequence = match &m.agent_sequence {
            Some(seq) => seq
                .iter()
                .map(|a| {
                    a.checked_sub(1)
                        .filter(|z| *z < m.n)
                        .ok_or(Error::InvalidAgent { id: *a, n: m.n })
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Ok(RunTrace {
            config: SimConfig {
                tau: m.tau,
                mode: m.mode,
                seed: m.seed,
                stop: m.stop,
                record_stride: m.record_stride,
                override_tau: m.override_tau,
            },
            graph_digest: m.graph_digest.clone(),
            n: m.n,
            d: m.d,
            initial: StateEnsemble::new(m.n, m.d, m.initial.clone())?,
            agent_sequence,
            samples: self.samples.clone(),
            step_deltas: Vec::new(),
            final_state,
            steps_run: m.steps_run,
            stop_reason: m.stop_reason,
            max_norm: m.max_norm,
        })
    }
}

pub fn read_trace(path: &Path) -> Result<TraceData> {
    let manifest: TraceManifest = serde_json::from_slice(&fs::read(manifest_path(path))?)?;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty trace file".into()))?;
    if header != trace_header(manifest.n, manifest.d) {
        return Err(Error::Format("trace header does not match manifest".into()));
    }
    let width = 2 + manifest.n * manifest.d;
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {width}",
                row + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::Format(format!("row {}: bad {what}", row + 1));
        let step: usize = fields[0].parse().map_err(|_| bad("step"))?;
        let agent: i64 = fields[1].parse().map_err(|_| bad("agent"))?;
        let agent = match agent {
            -1 => None,
            a if a >= 1 && (a as usize) <= manifest.n => Some(a as usize - 1),
            _ => return Err(bad("agent")),
        };
        let values = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            step,
            agent,
            state: StateEnsemble::new(manifest.n, manifest.d, values)?,
        });
    }
    Ok(TraceData { manifest, samples })
}

/// One CSV per state dimension: `step`, then `agent<i>` columns.
pub fn dimension_csvs(trace: &RunTrace) -> Vec<String> {
    (0..trace.d)
        .map(|k| {
            let mut out = String::from("step");
            for i in 1..=trace.n {
                let _ = write!(out, ",agent{i}");
            }
            out.push('\n');
            for s in &trace.samples {
                let _ = write!(out, "{}", s.step);
                for i in 0..trace.n {
                    let _ = write!(out, ",{:.16e}", s.state.agent(i)[k]);
                }
                out.push('\n');
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ConsensusVerdict>,
    pub lemmas: Vec<LemmaReport>,
    /// Every lemma report with met preconditions passed.
    pub pass: bool,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ReportFile {
    pub fn new(graph_digest: Option<String>, verdict: Option<ConsensusVerdict>, lemmas: Vec<LemmaReport>) -> Self {
        let pass = lemmas.iter().all(|l| !l.failed());
        Self {
            version: 1,
            graph_digest,
            verdict,
            lemmas,
            pass,
            extra: serde_json::Map::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &to_json(self)?)
    }
}
