use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use matweight::analysis::{
    antisymmetry_residual, classify, track_products, verify_lemma6, verify_lemma7, verify_lemma9_10,
    verify_partition, VerdictKind,
};
use matweight::dynamics::{build_sync_operator, simulate, Mode, SimConfig, StopReason};
use matweight::graph::{gen_regular_ring, gen_rgg, structural_balance, BalanceKind, MatrixWeightedGraph, Partition};
use matweight::io::{read_trace, write_atomic, write_trace, NetworkFile, NetworkMetadata, ReportFile};
use matweight::scenarios::{initial_state, replicate, run_suite, Suite, EXAMPLES};
use matweight::weights::{assign_weights, default_tau, step_size_upper, WeightMode, WeightPolicy};
use matweight::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_GENERATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_TAU_RANGE: u8 = 4;
const EXIT_DIGEST: u8 = 5;
const EXIT_VERIFY: u8 = 6;

/// Vector consensus on matrix-weighted networks.
#[derive(Parser, Debug)]
#[command(name = "matweight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a weighted network file.
    Gen(GenArgs),
    /// Simulate a network and write a trace.
    Sim(SimArgs),
    /// Classify a trace and check product properties.
    Analyze(AnalyzeArgs),
    /// Run a seeded property suite.
    Verify(VerifyArgs),
    /// Rebuild and run one of the reference examples.
    Replicate(ReplicateArgs),
}

#[derive(Args, Debug, Clone, Copy)]
struct SeedArg {
    /// Seed for every random draw of the command.
    #[arg(long, env = "MATWEIGHT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Topology {
    Ring,
    Rgg,
    File,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Policy {
    /// Every weight positive definite.
    Pd,
    /// Every weight negative definite.
    Nd,
    /// Positive definite within the parts given by --v1, negative across.
    Balanced,
    /// Keep the weights of the input file.
    Keep,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Topology,
    #[arg(long)]
    n: Option<usize>,
    /// Neighbours per agent on the ring (even).
    #[arg(long)]
    k: Option<usize>,
    /// Connection radius of the geometric graph.
    #[arg(long)]
    radius: Option<f64>,
    /// State dimension.
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, value_enum, default_value = "pd")]
    policy: Policy,
    /// First part of the partition, one-based ids separated by commas.
    #[arg(long, value_delimiter = ',')]
    v1: Vec<usize>,
    /// Input network for `file`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModeArg {
    Sync,
    Async,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long, value_enum, default_value = "async")]
    mode: ModeArg,
    /// Step size; defaults to half the admissible upper bound.
    #[arg(long, conflicts_with = "tau_factor")]
    tau: Option<f64>,
    /// Step size as a multiple of the admissible upper bound.
    #[arg(long)]
    tau_factor: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    /// Step limit; defaults to the mode's limit.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Keep the agent sequence so `analyze` can replay the products.
    #[arg(long)]
    track_products: bool,
    /// Allow a step size outside the admissible range.
    #[arg(long)]
    override_tau: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SuiteArg {
    Lemma3,
    Lemma4,
    Spectra,
    SyncZero,
    All,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    /// Example id, 1 to 8.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=8))]
    id: u8,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out_dir: PathBuf,
    /// Step-size factor for example 7.
    #[arg(long)]
    tau_factor: Option<f64>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_FAILURE,
            error: e.into(),
        }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Sim(a) => cmd_sim(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Replicate(a) => cmd_replicate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn parse_v1(n: usize, v1: &[usize]) -> anyhow::Result<Partition> {
    if v1.contains(&0) {
        bail!("agent ids are one-based");
    }
    let zero_based: Vec<usize> = v1.iter().map(|v| v - 1).collect();
    Ok(Partition::from_v1(n, &zero_based)?)
}

fn build_network(a: &GenArgs) -> anyhow::Result<(MatrixWeightedGraph, NetworkMetadata)> {
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| anyhow!("--{name} is required"));
    let (topology, generator, input_meta) = match a.kind {
        Topology::Ring => (gen_regular_ring(need(a.n, "n")?, need(a.k, "k")?, a.d)?, "ring", None),
        Topology::Rgg => {
            let radius = a.radius.ok_or_else(|| anyhow!("--radius is required"))?;
            (gen_rgg(need(a.n, "n")?, radius, a.d, a.seed.seed)?, "rgg", None)
        }
        Topology::File => {
            let path = a.input.as_ref().ok_or_else(|| anyhow!("--input is required"))?;
            let file = NetworkFile::read(path).with_context(|| format!("reading {}", path.display()))?;
            (file.to_graph()?, "file", file.metadata)
        }
    };
    let n = topology.n();
    let mode = match a.policy {
        Policy::Pd => Some(WeightMode::AllPositiveDefinite),
        Policy::Nd => Some(WeightMode::AllNegativeDefinite),
        Policy::Balanced => {
            if a.v1.is_empty() {
                bail!("--policy balanced needs --v1");
            }
            Some(WeightMode::BalancedFromPartition(parse_v1(n, &a.v1)?))
        }
        Policy::Keep => {
            if a.kind != Topology::File {
                bail!("--policy keep applies to file input only");
            }
            None
        }
    };
    let g = match mode {
        Some(mode) => assign_weights(&topology, &WeightPolicy::new(mode, a.seed.seed))?,
        None => topology,
    };
    // Kept weights carry their metadata through unchanged, so a kept file
    // rewrites byte for byte.
    if let (Policy::Keep, Some(meta)) = (a.policy, &input_meta) {
        return Ok((g, meta.clone()));
    }
    let meta = NetworkMetadata {
        generator: Some(generator.into()),
        seed: Some(a.seed.seed),
        planted_v1: (a.policy == Policy::Balanced).then(|| a.v1.clone()),
    };
    Ok((g, meta))
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let (g, meta) = build_network(a).map_err(|e| fail(EXIT_GENERATION, e))?;
    NetworkFile::from_graph(&g, Some(meta)).write(&a.out)?;
    println!("agents: {}", g.n());
    println!("edges: {}", g.edge_count());
    match step_size_upper(&g) {
        Ok(r) => {
            println!("step_size_upper: {:e}", r.upper);
            println!("default_tau: {:e}", default_tau(&r));
        }
        Err(e) => println!("step_size_upper: unavailable ({e})"),
    }
    println!("digest: {}", g.digest());
    Ok(0)
}

fn read_network(path: &Path) -> anyhow::Result<(NetworkFile, MatrixWeightedGraph)> {
    let file = NetworkFile::read(path).with_context(|| format!("reading {}", path.display()))?;
    let g = file.to_graph()?;
    Ok((file, g))
}

fn cmd_sim(a: &SimArgs) -> CmdResult {
    let (_, g) = read_network(&a.net)?;
    let mode = match a.mode {
        ModeArg::Sync => Mode::Sync,
        ModeArg::Async => Mode::Async,
    };
    let tau = match (a.tau, a.tau_factor) {
        (Some(t), _) => t,
        (None, factor) => {
            let upper = step_size_upper(&g)?.upper;
            factor.unwrap_or(0.5) * upper
        }
    };
    let mut cfg = SimConfig::new(tau, mode, a.seed.seed, g.n());
    if let Some(steps) = a.steps {
        cfg = cfg.with_max_steps(steps);
    }
    cfg.override_tau = a.override_tau;
    let init = initial_state(g.n(), g.d(), a.seed.seed);
    let trace = match simulate(&g, &init, &cfg) {
        Ok(t) => t,
        Err(e @ Error::TauOutOfRange { .. }) => {
            return Err(fail(EXIT_TAU_RANGE, anyhow!(e).context("use --override-tau to run anyway")))
        }
        Err(e) => return Err(e.into()),
    };
    write_trace(&a.out, &trace, a.track_products && mode == Mode::Async)?;
    println!("tau: {:e}", trace.config.tau);
    println!("steps: {}", trace.steps_run);
    println!("stop_reason: {}", trace.stop_reason.as_str());
    println!("max_norm: {:e}", trace.max_norm);
    if trace.stop_reason == StopReason::Diverged && !a.override_tau {
        eprintln!("error: state diverged");
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn cmd_analyze(a: &AnalyzeArgs) -> CmdResult {
    let (file, g) = read_network(&a.net)?;
    let data = read_trace(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let digest = g.digest();
    if data.manifest.graph_digest != digest {
        return Err(fail(
            EXIT_DIGEST,
            anyhow!(Error::DigestMismatch {
                expected: data.manifest.graph_digest.clone(),
                actual: digest,
            }),
        ));
    }
    let trace = data.to_run_trace()?;
    let verdict = classify(&trace);
    let mut extra = serde_json::Map::new();
    if let (VerdictKind::Bipartite, Some(planted)) = (verdict.kind, file.planted_partition()?) {
        extra.insert("partition_matches_planted".into(), verify_partition(&verdict, &planted)?.into());
        extra.insert(
            "antisymmetry_residual".into(),
            antisymmetry_residual(trace.final_state.as_slice(), trace.d, &planted).into(),
        );
    }
    let mut lemmas = Vec::new();
    let cooperative = structural_balance(&g).kind == BalanceKind::AllPositive;
    if trace.config.mode == Mode::Async && !trace.agent_sequence.is_empty() && !cooperative {
        extra.insert("product_checks".into(), "skipped: network is not cooperative".into());
    }
    if cooperative && trace.config.mode == Mode::Async && !trace.agent_sequence.is_empty() {
        let ops = build_sync_operator(&g, trace.config.tau).or_else(|_| {
            matweight::dynamics::build_sync_operator_unchecked(&g, trace.config.tau)
        })?;
        let tracker = track_products(&trace, &ops)?;
        lemmas.push(verify_lemma6(&tracker));
        lemmas.push(verify_lemma7(&tracker));
        lemmas.push(verify_lemma9_10(&tracker, g.d())?);
        extra.insert("spanning_tree_time".into(), serde_json::to_value(tracker.spanning_tree_time)?);
    }
    let mut report = ReportFile::new(Some(digest), Some(verdict.clone()), lemmas);
    report.extra = extra;
    report.write(&a.out)?;
    println!("verdict: {:?}", verdict.kind);
    if let Some(c) = &verdict.consensus_vector {
        println!("consensus_vector: {c:?}");
    }
    if let Some(p) = &verdict.partition {
        let one = |v: &[usize]| v.iter().map(|x| x + 1).collect::<Vec<_>>();
        println!("partition: {:?} / {:?}", one(&p.v1), one(&p.v2));
    }
    for l in &report.lemmas {
        println!("{}: {}", l.lemma, if l.pass { "pass" } else { "fail" });
    }
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let suites: Vec<Suite> = match a.suite {
        SuiteArg::Lemma3 => vec![Suite::Lemma3],
        SuiteArg::Lemma4 => vec![Suite::Lemma4],
        SuiteArg::Spectra => vec![Suite::Spectra],
        SuiteArg::SyncZero => vec![Suite::SyncZero],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut outcomes = Vec::new();
    for suite in suites {
        let o = run_suite(suite, a.seed.seed, a.trials)?;
        println!("{}: {}/{} passed", o.suite, o.passed, o.trials);
        outcomes.push(o);
    }
    let all_passed = outcomes.iter().all(|o| o.all_passed());
    let body = serde_json::json!({
        "version": 1,
        "seed": a.seed.seed,
        "pass": all_passed,
        "suites": outcomes,
    });
    let mut bytes = serde_json::to_vec_pretty(&body)?;
    bytes.push(b'\n');
    write_atomic(&a.out, &bytes)?;
    if !all_passed {
        for o in &outcomes {
            for f in o.failures() {
                eprintln!("failed: {} trial {} (seed {})", o.suite, f.trial, f.seed);
            }
        }
        return Ok(EXIT_VERIFY);
    }
    Ok(0)
}

fn cmd_replicate(a: &ReplicateArgs) -> CmdResult {
    let outcome = replicate(a.id, a.seed.seed, &a.out_dir, a.tau_factor)?;
    let name = EXAMPLES
        .iter()
        .find(|(id, _)| *id == a.id)
        .map_or("", |(_, name)| name);
    println!("example {}: {name}", a.id);
    if let Some(v) = &outcome.report.verdict {
        println!("verdict: {:?}", v.kind);
    }
    println!("expectation_met: {}", outcome.expectation_met);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(0)
}
