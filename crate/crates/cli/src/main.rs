use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ltc_core::evaluation::Criterion;
use ltc_core::models::ModelKind;
use ltc_core::pipeline::{Curation, CurationServer, PipelineConfig, Runner, Stage, Store};
use ltc_core::{Error, Result};

/// Mine contextual variables from dialogue transcripts and measure how much
/// the long tail of them improves offer-acceptance models.
#[derive(Debug, Parser)]
#[command(name = "ltc", version)]
struct Cli {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Artifact store directory.
    #[arg(long, global = true, env = "LTC_STORE", default_value = "ltc-store")]
    store: PathBuf,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run missing or stale upstream stages first.
    #[arg(long, global = true)]
    auto: bool,

    /// Restrict training and evaluation to these products (repeatable).
    #[arg(long, global = true)]
    product: Vec<String>,

    /// `frequency` or `rate` (repeatable).
    #[arg(long, global = true)]
    criterion: Vec<String>,

    /// `logreg`, `rf`, `gbdt`, `fm` or `auto`.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Comma-separated percentages, e.g. `0,10,50,100`.
    #[arg(long, global = true)]
    q_list: Option<String>,

    #[arg(long, global = true)]
    folds: Option<usize>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted variables.
    Synth,
    /// Validate the raw corpus.
    Ingest,
    /// Drop short and contradictory dialogues, merge repeat calls.
    Clean,
    /// Mine supported, significant phrases.
    Phrases,
    /// Embed significant phrases and fit PCA.
    Embed,
    /// Choose and run a clustering of the reduced phrase vectors.
    Cluster,
    /// Compute cluster statistics and prune.
    Stats,
    /// Serve the cluster review interface.
    CurateServe {
        #[arg(long)]
        port: Option<u16>,
    },
    /// Build the variable registry from accepted clusters.
    Registry,
    /// Mark registry variables in every dialogue.
    Annotate,
    /// Fit one propensity model per product.
    Train,
    /// Evaluate models across variable quantiles.
    Sweep,
    /// Write tables and figures for the sweep.
    Report,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Synth => Stage::Synth,
            Command::Ingest => Stage::Ingest,
            Command::Clean => Stage::Clean,
            Command::Phrases => Stage::Phrases,
            Command::Embed => Stage::Embed,
            Command::Cluster => Stage::Cluster,
            Command::Stats => Stage::Stats,
            Command::CurateServe { .. } => return None,
            Command::Registry => Stage::Registry,
            Command::Annotate => Stage::Annotate,
            Command::Train => Stage::Train,
            Command::Sweep => Stage::Sweep,
            Command::Report => Stage::Report,
        })
    }
}

fn parse_q_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            let q: f64 = x.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad quantile `{x}`")))?;
            if !(0.0..=100.0).contains(&q) {
                return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 100]")));
            }
            Ok(q)
        })
        .collect()
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if !cli.product.is_empty() {
        cfg.models.products = cli.product.clone();
    }
    if !cli.criterion.is_empty() {
        cfg.evaluation.criteria = cli.criterion.iter().map(|c| c.parse::<Criterion>()).collect::<Result<_>>()?;
    }
    if let Some(m) = &cli.model {
        cfg.models.model = m.parse::<ModelKind>()?;
    }
    if let Some(q) = &cli.q_list {
        cfg.evaluation.q_list = parse_q_list(q)?;
    }
    if let Some(k) = cli.folds {
        if k < 2 {
            return Err(Error::InvalidArgument("--folds must be at least 2".into()));
        }
        cfg.evaluation.folds = k;
    }
    if let Command::CurateServe { port: Some(p) } = cli.command {
        cfg.curation.port = p;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let store = Store::open(&cli.store)?;
    let mut runner = Runner::new(store, cfg);
    runner.auto = cli.auto;
    match cli.command.stage() {
        Some(stage) => {
            let outcome = runner.run(stage)?;
            let status = if outcome.skipped { "up-to-date" } else { "ran" };
            println!("stage={} status={status}", outcome.stage);
            for (alias, hash) in &outcome.outputs {
                println!("  {alias} {}", &hash[..12]);
            }
        }
        None => {
            if cli.auto {
                runner.run(Stage::Stats)?;
            }
            let port = runner.config().curation.port;
            let server = CurationServer::bind(Curation::new(runner)?, port)?;
            println!("curation server listening on http://127.0.0.1:{}/", server.port());
            server.serve();
        }
    }
    Ok(())
}

fn error_line(e: &Error) -> String {
    let mut message = e.to_string();
    if let Error::MissingArtifact { stage, .. } = e {
        if !stage.is_empty() {
            message.push_str(&format!(" (produced by `ltc {stage}`; run it first or pass --auto)"));
        }
    }
    format!("error: kind={} message={}", e.kind(), message.replace('\n', " "))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
