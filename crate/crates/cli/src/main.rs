//! `quorum` command-line front end.

mod trace;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use quorum_core::bench::{run_benchmark, BenchmarkManifest};
use quorum_core::config::{Engine, EngineConfig};
use quorum_core::gateway::{load_scenario, BackendPool};
use quorum_core::lang::LanguageSet;
use quorum_core::pipeline::{
    read_ledger, replay, translate, Ledger, LiveWorkbench, OutcomeStatus, PipelineError, TranslationOutcome,
};
use quorum_core::registry::{load_registry, write_registry, ModelProfile, Registry, RegistryContext};

const EXIT_TASK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFRA: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "quorum", version, about = "Director-guided multi-model code translation")]
struct Cli {
    /// Machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    /// Log verbosity on standard error (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Translate one source file.
    Translate(TranslateArgs),
    /// Run a benchmark manifest and write a report.
    Bench(BenchArgs),
    /// Inspect or edit a model registry.
    Registry(RegistryArgs),
    /// Run a scripted scenario and print the decision trace.
    Simulate(SimulateArgs),
    /// Re-run a recorded ledger.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct TranslateArgs {
    /// Source program to translate.
    #[arg(long)]
    source: PathBuf,
    /// Source language.
    #[arg(long = "from")]
    from: String,
    /// Target language.
    #[arg(long = "to")]
    to: String,
    /// Engine config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured attempt budget.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    max_attempts: Option<u32>,
    /// Where the final code is written on success.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ledger path; defaults to `quorum-ledgers/<task id>.jsonl`.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Defaults to the source file stem.
    #[arg(long)]
    task_id: Option<String>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Benchmark manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Engine config file.
    #[arg(long)]
    config: PathBuf,
    /// Receives report.json and ledgers/.
    #[arg(long)]
    out_dir: PathBuf,
    /// Defaults to the configured worker count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

#[derive(Debug, Args)]
struct RegistryArgs {
    /// Registry file to operate on.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    registry: Option<PathBuf>,
    /// Engine config whose registry, languages and backends are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    op: RegistryOp,
}

#[derive(Debug, Subcommand)]
enum RegistryOp {
    /// List profiles.
    List,
    /// Add a profile.
    Add {
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        display_name: Option<String>,
        #[arg(long)]
        backend_ref: String,
        #[arg(long, default_value_t = 8192)]
        context_window: u32,
        /// `lang=score`, repeatable.
        #[arg(long = "score", value_parser = parse_score, required = true)]
        scores: Vec<(String, f64)>,
        #[arg(long = "tag")]
        tags: Vec<String>,
    },
    /// Set one language score.
    SetScore {
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        score: f64,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scripted scenario carrying a task.
    #[arg(long)]
    scenario: PathBuf,
    /// Engine config file.
    #[arg(long)]
    config: PathBuf,
    /// Also write the ledger here.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Recorded ledger.
    #[arg(long)]
    ledger: PathBuf,
    /// Engine config to decide with.
    #[arg(long)]
    config: PathBuf,
    /// Fail on the first decision that differs from the recording.
    #[arg(long)]
    verify: bool,
}

fn parse_score(s: &str) -> Result<(String, f64), String> {
    let (lang, score) = s.split_once('=').ok_or("expected lang=score")?;
    let score: f64 = score.parse().map_err(|e| format!("bad score `{score}`: {e}"))?;
    Ok((lang.to_string(), score))
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn infra(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INFRA,
        error: error.into(),
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::InvalidTask(_) => usage(e.into()),
        PipelineError::ReplayDivergence { .. } => Failure {
            code: EXIT_TASK_FAILED,
            error: e.into(),
        },
        other => infra(other),
    }
}

fn outcome_code(status: OutcomeStatus) -> u8 {
    match status {
        OutcomeStatus::Success => 0,
        OutcomeStatus::FailedBudget | OutcomeStatus::FailedAbort => EXIT_TASK_FAILED,
        OutcomeStatus::FailedInfra => EXIT_INFRA,
    }
}

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, value: serde_json::Value, human: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
        } else {
            print!("{}", human());
        }
    }
}

fn outcome_line(o: &TranslationOutcome) -> String {
    let mut line = format!("{} {} attempts={}", o.task_id, o.status.as_str(), o.attempts_used);
    if let Some(m) = &o.model_id {
        line += &format!(" model={m}");
    }
    if let Some(r) = &o.reason {
        line += &format!(" reason={r:?}");
    }
    line + "\n"
}

fn load_engine(path: &Path) -> Result<Engine, Failure> {
    Engine::load(path).with_context(|| format!("loading config {}", path.display())).map_err(infra)
}

fn cmd_translate(args: TranslateArgs, out: &Out) -> Result<u8, Failure> {
    if args.from == args.to {
        return Err(usage(anyhow!("--from and --to must differ (both `{}`)", args.from)));
    }
    let engine = load_engine(&args.config)?;
    let source = std::fs::read_to_string(&args.source)
        .with_context(|| format!("reading {}", args.source.display()))
        .map_err(infra)?;
    let task_id = args.task_id.clone().unwrap_or_else(|| {
        args.source
            .file_stem()
            .map_or_else(|| "task".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let mut task = engine.task(&task_id, &args.from, &args.to, &source);
    if let Some(n) = args.max_attempts {
        task.max_attempts = n;
    }
    task.validate().map_err(pipeline_failure)?;
    let ledger_path = args
        .ledger
        .clone()
        .unwrap_or_else(|| PathBuf::from("quorum-ledgers").join(format!("{task_id}.jsonl")));
    let mut ledger = Ledger::create(&task_id, &ledger_path).map_err(infra)?;
    let pool = engine.backend_pool().map_err(infra)?;
    let garden = engine.garden();
    let mut bench = LiveWorkbench::new(&engine.deps.registry, pool.instantiate(), &garden);
    let outcome = translate(&task, &engine.deps, &mut bench, &mut ledger).map_err(pipeline_failure)?;

    if let (Some(path), Some(code)) = (&args.out, &outcome.final_code) {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(infra)?;
        }
        std::fs::write(path, code)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(infra)?;
    }
    out.emit(serde_json::to_value(&outcome).expect("outcome json"), || {
        let mut text = outcome_line(&outcome);
        text += &format!("ledger: {}\n", ledger_path.display());
        if let (Some(path), true) = (&args.out, outcome.final_code.is_some()) {
            text += &format!("output: {}\n", path.display());
        }
        text
    });
    Ok(outcome_code(outcome.status))
}

fn cmd_bench(args: BenchArgs, out: &Out) -> Result<u8, Failure> {
    let engine = load_engine(&args.config)?;
    let manifest = BenchmarkManifest::load(&args.manifest).map_err(infra)?;
    let pool = engine.backend_pool().map_err(infra)?;
    let workers = args.workers.map_or(engine.config.workers, |w| w as usize);
    let report = run_benchmark(&manifest, &engine, &pool, &args.out_dir, workers).map_err(infra)?;
    out.emit(serde_json::to_value(&report).expect("report json"), || {
        format!(
            "{}\nreport: {}\n",
            report.summary_table(),
            args.out_dir.join("report.json").display()
        )
    });
    Ok(0)
}

fn registry_target(args: &RegistryArgs) -> Result<(PathBuf, RegistryContext), Failure> {
    let Some(config) = &args.config else {
        let path = args.registry.clone().expect("clap requires --registry or --config");
        return Ok((path, RegistryContext::default()));
    };
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))
        .map_err(infra)?;
    let cfg: EngineConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config.display()))
        .map_err(infra)?;
    let base = config.parent().unwrap_or(Path::new(""));
    let ctx = RegistryContext {
        languages: cfg
            .languages
            .as_ref()
            .map_or_else(LanguageSet::default, |l| LanguageSet::new(l.iter().cloned())),
        backends: Some(cfg.backends.keys().cloned().collect()),
    };
    Ok((base.join(&cfg.registry), ctx))
}

fn profile_json(p: &ModelProfile) -> serde_json::Value {
    serde_json::to_value(p).expect("profile json")
}

fn registry_table(registry: &Registry) -> String {
    let mut text = format!("registry version {}\n", registry.version());
    for p in registry.profiles() {
        let scores: Vec<String> = p.proficiency.iter().map(|(l, s)| format!("{l}={s}")).collect();
        let tags = if p.tags.is_empty() {
            String::new()
        } else {
            format!(" tags={}", p.tags.iter().cloned().collect::<Vec<_>>().join(","))
        };
        text += &format!("{}  backend={}  {}{}\n", p.model_id, p.backend_ref, scores.join(" "), tags);
    }
    text
}

fn cmd_registry(args: RegistryArgs, out: &Out) -> Result<u8, Failure> {
    let (path, ctx) = registry_target(&args)?;
    let registry = load_registry(&path, &ctx).map_err(infra)?;
    let updated = match args.op {
        RegistryOp::List => {
            let profiles: Vec<_> = registry.profiles().map(profile_json).collect();
            out.emit(json!({"version": registry.version(), "models": profiles}), || {
                registry_table(&registry)
            });
            return Ok(0);
        }
        RegistryOp::Add {
            model_id,
            display_name,
            backend_ref,
            context_window,
            scores,
            tags,
        } => {
            let profile = ModelProfile {
                display_name: display_name.unwrap_or_else(|| model_id.clone()),
                model_id,
                proficiency: scores.into_iter().collect(),
                context_window,
                backend_ref,
                tags: tags.into_iter().collect::<BTreeSet<_>>(),
            };
            registry.add_profile(profile, &ctx).map_err(|e| usage(e.into()))?
        }
        RegistryOp::SetScore { model_id, lang, score } => {
            if !ctx.languages.contains(&lang) {
                return Err(usage(anyhow!("unknown language `{lang}`")));
            }
            registry.update_profile(&model_id, &lang, score).map_err(|e| usage(e.into()))?
        }
    };
    write_registry(&updated, &path).map_err(infra)?;
    out.emit(json!({"version": updated.version(), "path": path}), || {
        format!("wrote {} (version {})\n", path.display(), updated.version())
    });
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs, out: &Out) -> Result<u8, Failure> {
    let engine = load_engine(&args.config)?;
    let scenario = load_scenario(&args.scenario).map_err(infra)?;
    let task = scenario
        .task
        .as_ref()
        .ok_or_else(|| infra(anyhow!("scenario {} declares no task", args.scenario.display())))?;
    let task = engine.scenario_task(task).map_err(infra)?;
    let refs: BTreeSet<&str> = engine
        .backends
        .keys()
        .map(String::as_str)
        .chain(engine.deps.registry.profiles().map(|p| p.backend_ref.as_str()))
        .collect();
    let pool = BackendPool::all_scripted(refs, Arc::new(scenario.clone()));
    let mut ledger = match &args.ledger {
        Some(path) => Ledger::create(&task.task_id, path).map_err(infra)?,
        None => Ledger::in_memory(&task.task_id),
    };
    let garden = engine.garden();
    let mut bench = LiveWorkbench::new(&engine.deps.registry, pool.instantiate(), &garden);
    let outcome = translate(&task, &engine.deps, &mut bench, &mut ledger).map_err(pipeline_failure)?;
    let steps = trace::steps(ledger.events());
    out.emit(json!({"outcome": outcome, "trace": steps}), || {
        trace::render(&steps) + &outcome_line(&outcome)
    });
    Ok(outcome_code(outcome.status))
}

fn cmd_replay(args: ReplayArgs, out: &Out) -> Result<u8, Failure> {
    let engine = load_engine(&args.config)?;
    // Surface ledger corruption as an infra error before replaying.
    read_ledger(&args.ledger).map_err(infra)?;
    match replay(&args.ledger, &engine.deps, args.verify) {
        Ok(outcome) => {
            out.emit(json!({"verified": args.verify, "divergence": null, "outcome": outcome}), || {
                let mut text = outcome_line(&outcome);
                if args.verify {
                    text += "verify: no divergence\n";
                }
                text
            });
            Ok(0)
        }
        Err(PipelineError::ReplayDivergence { seq, detail }) => {
            out.emit(json!({"verified": args.verify, "divergence": {"seq": seq, "detail": detail}}), || {
                format!("divergence at seq {seq}: {detail}\n")
            });
            Ok(EXIT_TASK_FAILED)
        }
        Err(e) => Err(pipeline_failure(e)),
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    init_logging(cli.verbose);
    let out = Out { json: cli.json };
    let result = match cli.command {
        Command::Translate(a) => cmd_translate(a, &out),
        Command::Bench(a) => cmd_bench(a, &out),
        Command::Registry(a) => cmd_registry(a, &out),
        Command::Simulate(a) => cmd_simulate(a, &out),
        Command::Replay(a) => cmd_replay(a, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            if out.json {
                println!("{}", json!({"error": format!("{error:#}"), "exit_code": code}));
            }
            ExitCode::from(code)
        }
    }
}
