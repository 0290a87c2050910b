use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use contractor_core::agent::{
    AgentSettings, Backend, IntentSpec, RecordingBackend, RemoteBackend, RemoteConfig, ScriptedBackend,
};
use contractor_core::audit::{consistency_v, existence_e};
use contractor_core::contract::ContractFiles;
use contractor_core::eval::{
    exec_check, read_manifest, read_scores, s_arch, s_link, s_overall, token_report, EvalReport,
};
use contractor_core::kernel::{self, project};
use contractor_core::ledger::{self, Ledger};
use contractor_core::scheduler::{run, Mode, NullSink, RunConfig, StderrSink, DEFAULT_ATTEMPT_CAP, DEFAULT_T_MAX};
use contractor_core::tokens::ByteEstimator;
use contractor_core::workspace::{AnalyzerRegistry, Workspace};

/// Metadata directory inside a generated repository.
const META_DIR: &str = ".contractor";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Parser)]
#[command(name = "contractor", version, about = "Contract-driven multi-agent repository generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a contract from an intent and build the repository.
    Generate(GenerateArgs),
    /// Check a workspace against a contract.
    Audit(AuditArgs),
    /// Score a generated repository.
    Eval(EvalArgs),
    /// Re-run a recorded generation and compare ledgers.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BackendKind {
    Remote,
    Scripted,
    Record,
}

#[derive(Args)]
struct GenerateArgs {
    /// File holding the natural-language intent.
    #[arg(long)]
    intent: PathBuf,
    /// Output directory for the repository.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Transcript to replay (scripted) or append to (record).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// PARALLEL, SEQUENTIAL or NO_CONTRACT.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    t_max: Option<u32>,
    #[arg(long)]
    attempt_cap: Option<u32>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    context_limit: Option<usize>,
    /// Chat-completions base URL for the remote backend.
    #[arg(long)]
    base_url: Option<String>,
    /// TOML file with defaults for any of the options above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suppress progress events on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct AuditArgs {
    /// Path to a `*.contract.md` file.
    #[arg(long)]
    contract: PathBuf,
    #[arg(long)]
    workspace: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Generated repository.
    #[arg(long = "gen")]
    generated: PathBuf,
    /// Reference manifest, one path per line.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// JSON with externally computed exec/inter/rule scores.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Entry in a multi-task scores file.
    #[arg(long)]
    task: Option<String>,
    /// Contract for the token report. Defaults to the one stored in the repo.
    #[arg(long)]
    contract: Option<PathBuf>,
    /// Command run in the repository as an execution smoke test.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    exec: Option<Vec<String>>,
    /// Seconds the exec command must survive or exit cleanly within.
    #[arg(long, default_value_t = 10)]
    keep_alive: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long)]
    transcript: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    backend: Option<BackendKind>,
    transcript: Option<PathBuf>,
    mode: Option<Mode>,
    t_max: Option<u32>,
    attempt_cap: Option<u32>,
    model: Option<String>,
    temperature: Option<f64>,
    context_limit: Option<usize>,
    base_url: Option<String>,
}

/// Failure with its exit code: 2 for usage, 1 for everything else.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn failed(message: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: message.to_string() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Audit(a) => audit(a),
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok((value, code)) => {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
            ExitCode::from(code)
        }
        Err(f) => {
            println!("{}", json!({ "error": f.message }));
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn read_intent(path: &Path) -> Result<IntentSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("intent {}: {e}", path.display())))?;
    IntentSpec::new(text).map_err(|e| usage(e.to_string()))
}

fn make_backend(kind: BackendKind, transcript: Option<&Path>, base_url: &str) -> Result<Box<dyn Backend>, Failure> {
    let remote = || Box::new(RemoteBackend::new(RemoteConfig::from_env(base_url)));
    match kind {
        BackendKind::Remote => Ok(remote()),
        BackendKind::Scripted => {
            let path = transcript.ok_or_else(|| usage("the scripted backend needs --transcript"))?;
            Ok(Box::new(ScriptedBackend::from_path(path).map_err(|e| usage(e.to_string()))?))
        }
        BackendKind::Record => {
            let path = transcript.ok_or_else(|| usage("the record backend needs --transcript"))?;
            Ok(Box::new(RecordingBackend::new(remote(), path).map_err(failed)?))
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(Value, u8), Failure> {
    let file = load_config(a.config.as_deref())?;
    let intent = read_intent(&a.intent)?;
    let kind = a.backend.or(file.backend).unwrap_or(BackendKind::Remote);
    let transcript = a.transcript.or(file.transcript);
    let base_url = a.base_url.or(file.base_url).unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
    let backend = make_backend(kind, transcript.as_deref(), &base_url)?;
    let defaults = AgentSettings::default();
    let config = RunConfig {
        t_max: a.t_max.or(file.t_max).unwrap_or(DEFAULT_T_MAX),
        mode: a.mode.or(file.mode).unwrap_or_default(),
        attempt_cap: a.attempt_cap.or(file.attempt_cap).unwrap_or(DEFAULT_ATTEMPT_CAP),
        settings: AgentSettings {
            model: a.model.or(file.model).unwrap_or(defaults.model.clone()),
            temperature: a.temperature.or(file.temperature).unwrap_or(defaults.temperature),
            context_limit: a.context_limit.or(file.context_limit).unwrap_or(defaults.context_limit),
            ..defaults
        },
    };
    if config.t_max == 0 {
        return Err(usage("--t-max must be at least 1"));
    }

    let meta = a.out.join(META_DIR);
    std::fs::create_dir_all(&meta).map_err(|e| failed(format!("{}: {e}", meta.display())))?;
    let ledger_path = meta.join("ledger.jsonl");
    let mut ledger = Ledger::create(&ledger_path).map_err(failed)?;
    let sink: Box<dyn contractor_core::scheduler::EventSink> =
        if a.quiet { Box::new(NullSink) } else { Box::new(StderrSink) };
    let result = run(&intent, &config, backend.as_ref(), sink.as_ref(), &mut ledger).map_err(failed)?;

    result.workspace.save_dir(&a.out).map_err(failed)?;
    let files = ContractFiles::in_dir(&meta, "repo");
    files.save(&result.contract, &result.journal).map_err(failed)?;
    let statuses: serde_json::Map<String, Value> =
        result.tasks.iter().map(|t| (t.id.clone(), json!(t.status.to_string()))).collect();
    Ok((
        json!({
            "out": a.out,
            "mode": config.mode.as_str(),
            "layers": result.layers,
            "best_effort": result.best_effort,
            "revision": result.contract.revision(),
            "statuses": statuses,
            "files": result.workspace.hashes(),
            "contract": files.contract,
            "ledger": ledger_path,
        }),
        0,
    ))
}

fn audit(a: AuditArgs) -> Result<(Value, u8), Failure> {
    let contract = ContractFiles::for_contract(&a.contract).load().map_err(failed)?;
    let kernel = project(&contract).map_err(failed)?;
    let ws = Workspace::load_dir(&a.workspace).map_err(failed)?;
    let registry = AnalyzerRegistry::default();
    let existence = existence_e(&kernel, &ws, &registry);
    let consistency = consistency_v(&kernel, &ws, &registry);
    let violations: Vec<String> = kernel::validate(&kernel).iter().map(ToString::to_string).collect();
    Ok((
        json!({
            "revision": contract.revision(),
            "existence": existence,
            "consistency": consistency,
            "violations": violations,
        }),
        0,
    ))
}

fn eval(a: EvalArgs) -> Result<(Value, u8), Failure> {
    if !a.generated.is_dir() {
        return Err(usage(format!("{} is not a directory", a.generated.display())));
    }
    let ws = Workspace::load_dir(&a.generated).map_err(failed)?;
    let mut warnings = Vec::new();

    let s_arch_value = match &a.reference {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
            let generated: BTreeSet<String> = ws.paths().map(str::to_string).collect();
            let f = s_arch(&generated, &read_manifest(&text));
            warnings.extend(f.warning);
            Some(f.value)
        }
        None => None,
    };

    let link = s_link(&ws);
    warnings.extend(link.warning.clone());
    let dangling = link.invalid.iter().map(|c| format!("{}: {}", c.file, c.module)).collect();

    let (mut s_exec, mut s_inter, mut s_rule) = (None, None, None);
    if let Some(path) = &a.scores {
        let s = read_scores(path, a.task.as_deref()).map_err(|e| usage(e.to_string()))?;
        (s_exec, s_inter, s_rule) = (Some(s.exec), Some(s.inter), Some(s.rule));
    }
    let mut exec_outcome = None;
    if let Some(cmd) = &a.exec {
        let (program, args) = cmd.split_first().ok_or_else(|| usage("--exec needs a command"))?;
        let outcome = exec_check(&a.generated, program, args, Duration::from_secs(a.keep_alive)).map_err(failed)?;
        if s_exec.is_none() {
            s_exec = Some(if outcome.passed { 1.0 } else { 0.0 });
        }
        exec_outcome = Some(outcome);
    }
    let s_overall_value = match (s_exec, s_inter, s_rule) {
        (Some(e), Some(i), Some(r)) => Some(s_overall(e, i, r).map_err(|e| usage(e.to_string()))?),
        _ => None,
    };

    let contract_path = a.contract.clone().or_else(|| {
        let p = a.generated.join(META_DIR).join("repo.contract.md");
        p.exists().then_some(p)
    });
    let tokens = match contract_path {
        Some(p) => {
            let contract = ContractFiles::for_contract(&p).load().map_err(failed)?;
            match token_report(&contract, &ws, &ByteEstimator) {
                Ok(t) => Some(t),
                Err(e) => {
                    warnings.push(e.to_string());
                    None
                }
            }
        }
        None => None,
    };

    let report = EvalReport {
        s_arch: s_arch_value,
        s_link: link.value,
        internal_imports: link.total,
        dangling_imports: dangling,
        s_exec,
        s_inter,
        s_rule,
        s_overall: s_overall_value,
        tokens,
        warnings,
    };
    let mut value = serde_json::to_value(&report).map_err(failed)?;
    if let Some(o) = exec_outcome {
        value["exec"] = serde_json::to_value(o).map_err(failed)?;
    }
    Ok((value, 0))
}

fn replay(a: ReplayArgs) -> Result<(Value, u8), Failure> {
    let recorded = Ledger::read(&a.ledger).map_err(|e| usage(e.to_string()))?;
    let header = ledger::header(&recorded).ok_or_else(|| usage("ledger has no header record"))?;
    let intent = IntentSpec::new(header.intent.clone()).map_err(|e| usage(e.to_string()))?;
    let backend = ScriptedBackend::from_path(&a.transcript).map_err(|e| usage(e.to_string()))?;
    let config = RunConfig {
        t_max: header.t_max,
        mode: header.mode,
        attempt_cap: header.attempt_cap,
        settings: AgentSettings {
            model: header.model.clone(),
            temperature: header.temperature,
            context_limit: header.context_limit,
            ..AgentSettings::default()
        },
    };
    let mut fresh = Ledger::in_memory();
    let result = run(&intent, &config, &backend, &NullSink, &mut fresh).map_err(failed)?;
    let replayed = fresh.into_records();

    let divergence = ledger::first_divergence(&recorded, &replayed);
    let folded = ledger::fold_commits(&recorded);
    let summary_matches = ledger::summary(&recorded).is_some_and(|s| s.workspace == folded);
    let workspace_matches = folded == result.workspace.hashes();
    let identical = divergence.is_none() && summary_matches && workspace_matches;
    Ok((
        json!({
            "identical": identical,
            "records": recorded.len(),
            "first_divergence": divergence,
            "commits_match_summary": summary_matches,
            "commits_match_replay": workspace_matches,
        }),
        if identical { 0 } else { 1 },
    ))
}
