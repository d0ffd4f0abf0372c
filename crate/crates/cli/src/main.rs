//! `pocgen`: generate proof-of-concept exploits for npm vulnerability
//! reports, run whole corpora, and build classified report datasets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pocgen_core::dataset::{build_dataset, write_records};
use pocgen_core::explorer::PackageSource;
use pocgen_core::llm::{Gateway, OpenAiProvider};
use pocgen_core::pipeline::{run_corpus, run_pipeline, summarize, write_ledger, Clock, FixedClock, PipelineConfig, PipelineEnv, WallClock};
use pocgen_core::prompt::{load_exploit_corpus, ExploitCorpus};
use pocgen_core::refine::BudgetLimits;
use pocgen_core::report_store::{parse_advisory, read_corpus, AdvisorySource, VulnReport};
use pocgen_core::sandbox::{HarnessRunner, NoHarness, NodeHarness, ReplayRunner, DEFAULT_TIMEOUT_MS};

#[derive(Parser)]
#[command(name = "pocgen", version, about = "Proof-of-concept exploit generation for npm vulnerability reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an exploit for one advisory.
    Run(RunArgs),
    /// Run the pipeline over a JSON-Lines file of advisories.
    Corpus(CorpusArgs),
    /// Report dataset tools.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Classify and deduplicate GHSA and Snyk advisory directories.
    Build {
        #[arg(long)]
        ghsa: PathBuf,
        #[arg(long)]
        snyk: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Live,
    Replay,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "live")]
    mode: Mode,
    #[arg(long, default_value_t = 3600.0)]
    max_seconds: f64,
    #[arg(long, default_value_t = 30)]
    max_refinements: u32,
    #[arg(long, default_value_t = 300_000)]
    max_tokens_in: u64,
    #[arg(long, default_value_t = 100_000)]
    max_tokens_out: u64,
    /// JSON-Lines corpus of known exploits for few-shot retrieval.
    #[arg(long)]
    exploits: Option<PathBuf>,
    /// Harness entry script, run with node.
    #[arg(long)]
    harness: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    timeout_ms: u64,
    /// Skip the final model confirmation of a valid exploit.
    #[arg(long)]
    no_confirm: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Advisory JSON document.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    workdir: PathBuf,
    /// Transcript to replay, or to append to in live mode.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Recorded executions served instead of running the harness.
    #[arg(long)]
    executions: Option<PathBuf>,
    /// Install the package from this directory instead of the registry.
    #[arg(long)]
    package_dir: Option<PathBuf>,
    /// Where to write the outcome; defaults to WORKDIR/outcome.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CorpusArgs {
    /// JSON-Lines advisories, one per line.
    #[arg(long)]
    file: PathBuf,
    #[arg(long)]
    workdir: PathBuf,
    /// Results ledger; defaults to WORKDIR/ledger.jsonl.
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory of `<id or package>.transcript.jsonl` and
    /// `<id or package>.executions.jsonl` files for replay mode.
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    /// Directory holding package sources as `<package name>/`.
    #[arg(long)]
    packages: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn config(&self, workdir: &Path, corpus: Arc<ExploitCorpus>) -> PipelineConfig {
        let mut c = PipelineConfig::new(workdir);
        c.limits = BudgetLimits {
            max_seconds: self.max_seconds,
            max_tokens_in: self.max_tokens_in,
            max_tokens_out: self.max_tokens_out,
            max_refinements: self.max_refinements,
        };
        c.timeout_ms = self.timeout_ms;
        c.corpus = corpus;
        c.confirm_with_llm = !self.no_confirm;
        c
    }

    fn corpus(&self) -> Result<Arc<ExploitCorpus>, String> {
        let entries = match &self.exploits {
            Some(p) => load_exploit_corpus(p).map_err(|e| e.to_string())?,
            None => Vec::new(),
        };
        Ok(Arc::new(ExploitCorpus::new(entries)))
    }

    fn gateway(&self, transcript: Option<&Path>) -> Result<Gateway, String> {
        match self.mode {
            Mode::Replay => {
                let path = transcript.ok_or("replay mode needs a transcript")?;
                Gateway::replay_file(path).map_err(|e| e.to_string())
            }
            Mode::Live => {
                let provider = OpenAiProvider::from_env().map_err(|e| e.to_string())?;
                Ok(Gateway::live(Box::new(provider), transcript.map(Path::to_path_buf)))
            }
        }
    }

    fn runner(&self, executions: Option<&Path>) -> Result<Box<dyn HarnessRunner>, String> {
        if let Some(path) = executions {
            return Ok(Box::new(ReplayRunner::from_file(path).map_err(|e| e.to_string())?));
        }
        Ok(match &self.harness {
            Some(script) => Box::new(NodeHarness::new(script)),
            None => Box::new(NoHarness),
        })
    }

    fn clock(&self) -> Box<dyn Clock> {
        match self.mode {
            Mode::Replay => Box::new(FixedClock(0.0)),
            Mode::Live => Box::new(WallClock::start()),
        }
    }
}

fn read_report(path: &Path) -> Result<VulnReport, String> {
    let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_advisory(&raw, AdvisorySource::Other).map_err(|e| format!("{}: {e}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn run(args: RunArgs) -> Result<(), String> {
    let report = read_report(&args.report)?;
    std::fs::create_dir_all(&args.workdir).map_err(|e| format!("{}: {e}", args.workdir.display()))?;
    let mut config = args.common.config(&args.workdir, args.common.corpus()?);
    if let Some(dir) = &args.package_dir {
        config.package_source = PackageSource::LocalDir(dir.clone());
    }
    let mut gateway = args.common.gateway(args.transcript.as_deref())?;
    let runner = args.common.runner(args.executions.as_deref())?;
    let clock = args.common.clock();
    let outcome = run_pipeline(&report, &config, &mut gateway, runner.as_ref(), clock.as_ref());
    let text = to_json(&outcome);
    let out = args.out.unwrap_or_else(|| args.workdir.join("outcome.json"));
    std::fs::write(&out, format!("{text}\n")).map_err(|e| format!("{}: {e}", out.display()))?;
    println!("{text}");
    Ok(())
}

/// `<dir>/<id>.<kind>.jsonl`, else `<dir>/<package>.<kind>.jsonl`.
fn replay_file(dir: &Path, report: &VulnReport, kind: &str) -> Option<PathBuf> {
    [report.id.as_str(), report.package_name.as_str()]
        .iter()
        .map(|stem| dir.join(format!("{}.{kind}.jsonl", file_stem(stem))))
        .find(|p| p.is_file())
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

fn corpus(args: CorpusArgs) -> Result<(), String> {
    let (reports, rejected) = read_corpus(&args.file, AdvisorySource::Other).map_err(|e| format!("{}: {e}", args.file.display()))?;
    for r in &rejected {
        eprintln!("{}:{}: skipped: {}", args.file.display(), r.line, r.error);
    }
    std::fs::create_dir_all(&args.workdir).map_err(|e| format!("{}: {e}", args.workdir.display()))?;
    let shared = args.common.corpus()?;
    let outcomes = run_corpus(&reports, args.jobs, |report| {
        let workdir = args.workdir.join(file_stem(&report.id));
        std::fs::create_dir_all(&workdir).map_err(|e| e.to_string())?;
        let mut config = args.common.config(&workdir, shared.clone());
        if let Some(dir) = args.packages.as_ref().map(|d| d.join(&report.package_name)).filter(|d| d.is_dir()) {
            config.package_source = PackageSource::LocalDir(dir);
        }
        let (transcript, executions) = match (&args.replay_dir, args.common.mode) {
            (Some(dir), _) => (replay_file(dir, report, "transcript"), replay_file(dir, report, "executions")),
            (None, Mode::Live) => (Some(workdir.join("transcript.jsonl")), None),
            (None, Mode::Replay) => (None, None),
        };
        if args.common.mode == Mode::Replay && transcript.is_none() {
            return Err(format!("no transcript for {}", report.id));
        }
        Ok(PipelineEnv {
            config,
            gateway: args.common.gateway(transcript.as_deref())?,
            runner: args.common.runner(executions.as_deref())?,
            clock: args.common.clock(),
        })
    });
    let ledger = args.ledger.unwrap_or_else(|| args.workdir.join("ledger.jsonl"));
    write_ledger(&ledger, &outcomes).map_err(|e| format!("{}: {e}", ledger.display()))?;
    println!("{}", to_json(&summarize(&outcomes)));
    Ok(())
}

fn dataset(ghsa: PathBuf, snyk: PathBuf, out: PathBuf) -> Result<(), String> {
    let build = build_dataset(&[(ghsa, AdvisorySource::Ghsa), (snyk, AdvisorySource::Snyk)]).map_err(|e| e.to_string())?;
    for r in &build.rejected {
        eprintln!("{}: skipped: {}", r.path, r.error);
    }
    write_records(&out, &build.records).map_err(|e| format!("{}: {e}", out.display()))?;
    let summary = serde_json::json!({
        "records": build.records.len(),
        "duplicates": build.duplicates,
        "unclassified": build.unclassified,
        "rejected": build.rejected.len(),
    });
    println!("{}", to_json(&summary));
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Corpus(args) => corpus(args),
        Command::Dataset {
            command: DatasetCommand::Build { ghsa, snyk, out },
        } => dataset(ghsa, snyk, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pocgen: {e}");
            ExitCode::FAILURE
        }
    }
}
