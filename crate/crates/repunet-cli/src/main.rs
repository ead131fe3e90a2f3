use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repunet::backend::{JudgmentBackend, RemoteBackend, ScriptedBackend};
use repunet::engine::{run, run_experiment, Ablation, BackendKind, RunError, RunResult};
use repunet::events::{read_jsonl, write_jsonl};
use repunet::metrics::{
    behavior_reputation_points, gossip_frequency_points, linear_regression_with, rate_series, rounds_in, sentiment_summary, snapshot_from_log, LexiconClassifier,
    SentimentClassifier, DEFAULT_PERM_SEED, DEFAULT_SHUFFLES,
};
use repunet::network::{snapshot, to_dot};
use repunet::{RunConfig, ScenarioId, SimEvent};
use serde::Serialize;

const EXIT_STABILIZED: u8 = 0;
const EXIT_USAGE: u8 = 2;
const EXIT_MAX_ROUNDS: u8 = 3;
const EXIT_BACKEND_ABORT: u8 = 4;

#[derive(Parser)]
#[command(name = "repunet", version, about = "Reputation and gossip simulator for networked agent societies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run (or several with --repeats) and write its log and state.
    Run(RunArgs),
    /// Run all four mechanism ablations and write the comparison table.
    Ablate(AblateArgs),
    /// Recompute analyses from an event log.
    Metrics(MetricsArgs),
    /// Export the interaction network at a given round.
    Snapshot(SnapshotArgs),
    /// Check a configuration file and list every problem found.
    ValidateConfig(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// pd, participation or trading (also 1, 2, 3).
    #[arg(long)]
    scenario: Option<ScenarioId>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Bearer token for the remote backend.
    #[arg(long, env = "REPUNET_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    /// full, no_gossip, no_reputation or no_repunet.
    #[arg(long, value_parser = parse_ablation)]
    ablation: Option<Ablation>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Rounds averaged at the end of each run.
    #[arg(long, default_value_t = 5)]
    last: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SentimentSource {
    /// Valence tag recorded on each exchange.
    Tag,
    /// Word-list classifier over the summary text.
    Lexicon,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    log: PathBuf,
    /// Only the reputation/behavior regression.
    #[arg(long)]
    regression: bool,
    /// Only the gossip-frequency regression.
    #[arg(long)]
    gossip: bool,
    /// Only the sentiment summary.
    #[arg(long)]
    sentiment: bool,
    #[arg(long, value_enum, default_value = "tag")]
    sentiment_source: SentimentSource,
    #[arg(long, default_value_t = 10)]
    last_k: u32,
    #[arg(long, default_value_t = DEFAULT_SHUFFLES)]
    shuffles: usize,
    #[arg(long, default_value_t = DEFAULT_PERM_SEED)]
    perm_seed: u64,
    /// Also write CSV tables here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SnapshotFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct SnapshotArgs {
    #[arg(long)]
    log: PathBuf,
    /// Defaults to the last round in the log.
    #[arg(long)]
    round: Option<u32>,
    #[arg(long, value_enum, default_value = "dot")]
    format: SnapshotFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse()
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    match &args.config {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn resolve(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = load_config(&o.config)?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(s) = o.scenario {
        cfg.scenario = s;
    }
    if let Some(b) = o.backend {
        cfg.backend = b;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn backend_for(cfg: &RunConfig, api_key: Option<String>) -> Result<Box<dyn JudgmentBackend<f64>>, CliError> {
    Ok(match cfg.backend {
        BackendKind::Scripted => Box::new(ScriptedBackend::new(cfg.policy.clone())),
        BackendKind::Remote => {
            let key = api_key.or_else(|| std::env::var(&cfg.remote.api_key_env).ok()).filter(|k| !k.is_empty());
            Box::new(RemoteBackend::new(cfg.remote.clone(), key).map_err(|e| CliError::Usage(e.to_string()))?)
        }
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_log(path: &Path) -> Result<Vec<SimEvent>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    read_jsonl(BufReader::new(f)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SeriesRow {
    round: usize,
    rate: f64,
}

/// Writes everything a run produced into `dir`.
fn persist(dir: &Path, result: &RunResult<f64>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), &result.config)?;
    let mut log = BufWriter::new(File::create(dir.join("events.jsonl"))?);
    write_jsonl(&result.events, &mut log)?;
    write_json(&dir.join("result.json"), result)?;
    let mut w = csv::Writer::from_path(dir.join("series.csv"))?;
    for (i, rate) in result.series.iter().enumerate() {
        w.serialize(SeriesRow { round: i + 1, rate: *rate })?;
    }
    w.flush()?;
    let snap = snapshot(&result.databases, result.config.scenario, result.rounds_executed);
    write_json(&dir.join("snapshot.json"), &snap)?;
    fs::write(dir.join("snapshot.dot"), to_dot(&snap))?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<u8, CliError> {
    let mut cfg = resolve(&args.common)?;
    if let Some(a) = args.ablation {
        cfg.ablation = a;
    }
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let backend = backend_for(&cfg, args.common.api_key.clone())?;
    let out = &args.common.out_dir;
    let results = if args.repeats == 1 {
        vec![run(&cfg, backend.as_ref())]
    } else {
        run_experiment(&cfg, args.repeats, backend.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?
    };
    let mut code = EXIT_STABILIZED;
    for (k, res) in results.into_iter().enumerate() {
        let seed = cfg.seed.wrapping_add(k as u64);
        let dir = if args.repeats == 1 { out.clone() } else { out.join(format!("seed-{seed}")) };
        match res {
            Ok(r) => {
                persist(&dir, &r)?;
                let status = if r.stabilized { "stabilized" } else { "max rounds reached" };
                println!("seed {seed}: {status} after {} rounds, final rate {:.3}", r.rounds_executed, r.series.last().copied().unwrap_or(0.0));
                if !r.stabilized && code == EXIT_STABILIZED {
                    code = EXIT_MAX_ROUNDS;
                }
            }
            Err(RunError::Abort(abort)) => {
                persist(&dir, &abort.partial)?;
                eprintln!("seed {seed}: {abort}");
                code = EXIT_BACKEND_ABORT;
            }
            Err(RunError::Setup(e)) => return Err(CliError::Usage(e.to_string())),
        }
    }
    Ok(code)
}

#[derive(Serialize)]
struct AblationRow {
    ablation: String,
    scenario: String,
    repeats: usize,
    completed: usize,
    mean_final_rate: f64,
    std_final_rate: f64,
    mean_rounds: f64,
}

fn cmd_ablate(args: AblateArgs) -> Result<u8, CliError> {
    let base = resolve(&args.common)?;
    let backend = backend_for(&base, args.common.api_key.clone())?;
    fs::create_dir_all(&args.common.out_dir)?;
    let path = args.common.out_dir.join("ablation.csv");
    let mut file = csv::Writer::from_path(&path)?;
    let mut stdout = csv::Writer::from_writer(std::io::stdout());
    let mut code = EXIT_STABILIZED;
    for ablation in Ablation::ALL {
        let cfg = RunConfig { ablation, ..base.clone() };
        let results = run_experiment(&cfg, args.repeats, backend.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut finals = Vec::new();
        let mut rounds = Vec::new();
        for r in results {
            match r {
                Ok(r) => {
                    finals.push(r.tail_mean(args.last));
                    rounds.push(r.rounds_executed as f64);
                }
                Err(e) => {
                    eprintln!("{ablation}: {e}");
                    code = EXIT_BACKEND_ABORT;
                }
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let m = mean(&finals);
        let sd = if finals.len() > 1 {
            (finals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (finals.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let row = AblationRow {
            ablation: ablation.to_string(),
            scenario: cfg.scenario.to_string(),
            repeats: args.repeats,
            completed: finals.len(),
            mean_final_rate: m,
            std_final_rate: sd,
            mean_rounds: mean(&rounds),
        };
        file.serialize(&row)?;
        stdout.serialize(&row)?;
    }
    file.flush()?;
    stdout.flush()?;
    Ok(code)
}

#[derive(Serialize)]
struct PointRow {
    agent: usize,
    x: f64,
    y: f64,
}

fn cmd_metrics(args: MetricsArgs) -> Result<u8, CliError> {
    let events = read_log(&args.log)?;
    let all = !(args.regression || args.gossip || args.sentiment);
    let mut out = serde_json::Map::new();
    out.insert("rounds".into(), serde_json::json!(rounds_in(&events)));

    let series = rate_series(&events);
    if all {
        out.insert("rate_series".into(), serde_json::to_value(&series)?);
    }
    let behavior = behavior_reputation_points(&events, args.last_k);
    let gossip = gossip_frequency_points(&events);
    if all || args.regression {
        let pts: Vec<(f64, f64)> = behavior.points.iter().map(|p| (p.x, p.y)).collect();
        let reg = linear_regression_with(&pts, args.shuffles, args.perm_seed);
        out.insert(
            "regression".into(),
            match reg {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => serde_json::json!({ "error": e.to_string() }),
            },
        );
        out.insert("behavior_points".into(), serde_json::to_value(&behavior)?);
    }
    if all || args.gossip {
        let pts: Vec<(f64, f64)> = gossip.iter().filter_map(|g| g.mean_incoming_mu.map(|mu| (g.count as f64, mu))).collect();
        let reg = linear_regression_with(&pts, args.shuffles, args.perm_seed);
        out.insert(
            "gossip_regression".into(),
            match reg {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => serde_json::json!({ "error": e.to_string() }),
            },
        );
        out.insert("gossip_points".into(), serde_json::to_value(&gossip)?);
    }
    if all || args.sentiment {
        let lexicon = LexiconClassifier::default();
        let classifier: Option<&dyn SentimentClassifier> = match args.sentiment_source {
            SentimentSource::Tag => None,
            SentimentSource::Lexicon => Some(&lexicon),
        };
        out.insert("sentiment".into(), serde_json::to_value(sentiment_summary(&events, classifier))?);
    }
    println!("{}", serde_json::to_string_pretty(&out)?);

    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("series.csv"))?;
        for (i, rate) in series.iter().enumerate() {
            w.serialize(SeriesRow { round: i + 1, rate: *rate })?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("behavior_points.csv"))?;
        for p in &behavior.points {
            w.serialize(PointRow { agent: p.agent, x: p.x, y: p.y })?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("gossip_points.csv"))?;
        w.write_record(["agent", "count", "mean_incoming_mu"])?;
        for g in &gossip {
            w.write_record([g.agent.to_string(), g.count.to_string(), g.mean_incoming_mu.map(|m| m.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        write_json(&dir.join("metrics.json"), &out)?;
    }
    Ok(EXIT_STABILIZED)
}

fn cmd_snapshot(args: SnapshotArgs) -> Result<u8, CliError> {
    let events = read_log(&args.log)?;
    let last = rounds_in(&events);
    let round = args.round.unwrap_or(last);
    if round > last {
        return Err(CliError::Usage(format!("round {round} is past the end of the log ({last} rounds)")));
    }
    let snap = snapshot_from_log(&events, round);
    let text = match args.format {
        SnapshotFormat::Dot => to_dot(&snap),
        SnapshotFormat::Json => serde_json::to_string_pretty(&snap)? + "\n",
    };
    match args.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_STABILIZED)
}

fn cmd_validate(args: ConfigArgs) -> Result<u8, CliError> {
    let cfg = load_config(&args)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    println!("configuration is valid");
    Ok(EXIT_STABILIZED)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Snapshot(a) => cmd_snapshot(a),
        Command::ValidateConfig(a) => cmd_validate(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
