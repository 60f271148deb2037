use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use flowgate::config::RunConfig;
use flowgate::flowmap;
use flowgate::io::{read_flow_map, read_trace, write_atomic};
use flowgate::policies::mlp::MlpParams;
use flowgate::policies::{AdamConfig, Policy, PolicyKind, ReinforceAgent};
use flowgate::report::{write_outputs, SummaryRow};
use flowgate::sim::{train_reinforce, FrameObservation, FrameSource, SimResult, Simulation};

const PARAMS_FILE: &str = "reinforce_params.fgmlp";

#[derive(Parser)]
#[command(
    name = "flowgate",
    version,
    about = "Flow-map thresholds and queue-aware model selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a flow field into per-cell confidence thresholds.
    ProcessFlow(ProcessFlowArgs),
    /// Run one policy and write its time series.
    Simulate(SimulateArgs),
    /// Run DPP and the three baselines on identical scenes.
    Compare(RunArgs),
}

#[derive(Args)]
struct ProcessFlowArgs {
    /// `.flo` file or comma-separated matrix.
    input: PathBuf,
    /// Output CSV, one threshold per line.
    #[arg(long)]
    out: PathBuf,
    /// Detector grid as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Boxes per cell.
    #[arg(long)]
    k: Option<usize>,
    /// Base confidence threshold.
    #[arg(long)]
    cth: Option<f64>,
    /// Take grid, K and c_th defaults from this config.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Overrides the config policy (dpp, always-odn, always-hybrid, reinforce).
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyKind>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad grid dimension `{v}`"))
    };
    Ok((parse(r)?, parse(c)?))
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.parse().map_err(|e: flowgate::Error| e.to_string())
}

/// Bad input (exit 2) versus failure while doing the work (exit 1).
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

trait Stage<T> {
    fn input(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::ProcessFlow(args) => process_flow(args),
        Command::Simulate(args) => simulate(args),
        Command::Compare(args) => compare(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).input(),
        None => Ok(RunConfig::default()),
    }
}

fn process_flow(args: ProcessFlowArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let frame = &cfg.scenario.frame;
    let (rows, cols) = args.grid.unwrap_or((frame.grid_rows, frame.grid_cols));
    let k = args.k.unwrap_or(frame.boxes);
    let c_th = args.cth.unwrap_or(cfg.scenario.detector.c_th);

    let map = read_flow_map(&args.input).input()?;
    let thresholds = flowmap::process(&map, rows, cols, k, c_th).input()?;

    let mut text = String::with_capacity(thresholds.values().len() * 20);
    for v in thresholds.values() {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    ensure_parent(&args.out)?;
    write_atomic(&args.out, text.as_bytes()).internal()?;
    println!(
        "thresholds n={} min={} max={} mean={}",
        thresholds.values().len(),
        thresholds.min(),
        thresholds.max(),
        thresholds.mean()
    );
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .internal(),
        _ => Ok(()),
    }
}

/// Config plus everything resolved from it before any work starts.
struct Prepared {
    cfg: RunConfig,
    trace: Option<Vec<FrameObservation>>,
}

fn prepare(args: &RunArgs) -> Result<Prepared, Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    let base = config_dir(args.config.as_deref());
    let trace = match &cfg.scenario.trace {
        Some(path) => Some(read_trace(&base.join(path), &cfg.scenario.frame).input()?),
        None => None,
    };
    if let Some(params) = &cfg.reinforce_params {
        cfg.reinforce_params = Some(base.join(params));
    }
    Ok(Prepared { cfg, trace })
}

fn config_dir(config: Option<&Path>) -> PathBuf {
    config
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Loads or trains the learned policy; trained weights are saved next to the outputs.
fn learned_policy(cfg: &RunConfig) -> Result<Policy, Failure> {
    let agent = match &cfg.reinforce_params {
        Some(path) => {
            let params = MlpParams::load(path).input()?;
            let adam = AdamConfig {
                lr: cfg.reinforce.lr,
                ..AdamConfig::default()
            };
            ReinforceAgent::new(params, adam, cfg.reinforce.gamma)
        }
        None => {
            let outcome = train_reinforce(&cfg.scenario, &cfg.controller, &cfg.reinforce, cfg.seed)
                .internal()?;
            std::fs::create_dir_all(&cfg.out)
                .with_context(|| format!("creating {}", cfg.out.display()))
                .internal()?;
            outcome
                .agent
                .params
                .save(&cfg.out.join(PARAMS_FILE))
                .internal()?;
            outcome.agent
        }
    };
    Ok(Policy::Reinforce(Box::new(agent)))
}

fn build_policy(kind: PolicyKind, cfg: &RunConfig) -> Result<Policy, Failure> {
    match Policy::fixed(kind) {
        Some(p) => Ok(p),
        None => learned_policy(cfg),
    }
}

fn run_policy(prepared: &Prepared, policy: &Policy) -> anyhow::Result<SimResult> {
    let cfg = &prepared.cfg;
    let source = match &prepared.trace {
        Some(frames) => FrameSource::replay(frames.clone()),
        None => FrameSource::generated(&cfg.scenario, cfg.seed),
    };
    let sim = Simulation::new(cfg.scenario.clone(), cfg.controller, source, cfg.seed)?;
    Ok(sim.run(policy, cfg.scenario.horizon)?)
}

fn finish(cfg: &RunConfig, results: &[SimResult]) -> Result<(), Failure> {
    write_outputs(&cfg.out, results, cfg.format).internal()?;
    for r in results {
        let s = SummaryRow::new(r);
        println!(
            "{} steps={} avg_q={} max_q={} avg_tpr={} drift={} hybrid={} odn={} flops/decision={} overflow={}",
            s.policy,
            s.steps,
            s.avg_q,
            s.max_q,
            s.avg_tpr,
            s.drift,
            s.hybrid_decisions,
            s.odn_decisions,
            s.flops_per_decision,
            s.overflow
        );
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut prepared = prepare(&args.run)?;
    if let Some(kind) = args.policy {
        prepared.cfg.policy = kind;
    }
    let policy = build_policy(prepared.cfg.policy, &prepared.cfg)?;
    let result = run_policy(&prepared, &policy)
        .context("simulation failed")
        .internal()?;
    finish(&prepared.cfg, &[result])
}

fn compare(args: RunArgs) -> Result<(), Failure> {
    let prepared = prepare(&args)?;
    let policies = PolicyKind::ALL
        .into_iter()
        .map(|kind| build_policy(kind, &prepared.cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = policies
            .iter()
            .map(|policy| scope.spawn(|| run_policy(&prepared, policy)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| anyhow!("simulation thread panicked"))?
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })
    .context("simulation failed")
    .internal()?;
    finish(&prepared.cfg, &results)
}
