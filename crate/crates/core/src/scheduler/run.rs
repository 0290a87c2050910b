use std::collections::BTreeMap;

use thiserror::Error;

use super::{plan_layer, Dispatch, Event, EventSink, InternalInconsistency, LayerPlan, Mode, Task, TaskStatus};
use crate::agent::{
    build_prompt, parse_response, synthesize_contract, AgentSettings, Backend, CompletionRequest, ContractView,
    IntentSpec, Role, SynthesisError,
};
use crate::audit::{audit_layer, AgentOutcome, DispatchResult};
use crate::contract::{field_of, ContractAction, JournalRecord, LanguageContract, SectionKey};
use crate::kernel::{self, KernelGuard, Violation};
use crate::ledger::{
    DispatchEntry, LayerRecord, Ledger, LedgerError, LedgerRecord, RunHeader, RunSummary, SynthesisRecord,
};
use crate::workspace::{AnalyzerRegistry, Workspace};

pub const DEFAULT_T_MAX: u32 = 10;
pub const DEFAULT_ATTEMPT_CAP: u32 = 3;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_max: u32,
    pub mode: Mode,
    pub attempt_cap: u32,
    pub settings: AgentSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            mode: Mode::Parallel,
            attempt_cap: DEFAULT_ATTEMPT_CAP,
            settings: AgentSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub contract: LanguageContract,
    pub workspace: Workspace,
    pub tasks: Vec<Task>,
    pub layers: u32,
    /// Stopped before every task was verified.
    pub best_effort: bool,
    /// Contract journal: synthesis actions, then one record per layer that
    /// changed the contract, then the final seal.
    pub journal: Vec<JournalRecord>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("contract synthesis failed: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Inconsistent(#[from] InternalInconsistency),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn outcome_label(o: &AgentOutcome) -> (&'static str, Option<String>) {
    match o {
        AgentOutcome::Response(_) => ("response", None),
        AgentOutcome::Failed(m) => ("failed", Some(m.clone())),
        AgentOutcome::Unparsable(m) => ("unparsable", Some(m.clone())),
    }
}

struct LayerInput<'a> {
    layer: u32,
    contract: &'a LanguageContract,
    workspace: &'a Workspace,
    tasks: &'a [Task],
    intent: &'a IntentSpec,
    paths: &'a [String],
    config: &'a RunConfig,
}

fn execute(input: &LayerInput<'_>, dispatch: &Dispatch, backend: &dyn Backend, sink: &dyn EventSink) -> DispatchResult {
    let id = dispatch.task();
    sink.emit(&Event::DispatchStart { layer: input.layer, task: id.clone(), role: dispatch.kind().into() });
    let task = input.tasks.iter().find(|t| &t.id == id);
    let (role, implementation) = match dispatch {
        Dispatch::Worker { owner, .. } => (Role::Worker(owner.clone()), None),
        Dispatch::Verifier { .. } => (Role::Critic, input.workspace.get(id).map(|u| u.body.as_str())),
    };
    let view = match input.config.mode {
        Mode::NoContract => ContractView::IntentOnly { paths: input.paths },
        _ => ContractView::Full(input.contract),
    };
    let mut request_sha256 = None;
    let outcome = match build_prompt(&role, task, view, input.intent, implementation, &[], &input.config.settings) {
        Err(e) => AgentOutcome::Failed(e.to_string()),
        Ok(bundle) => {
            let req = CompletionRequest {
                layer: input.layer,
                role: role.key().to_string(),
                task: id.clone(),
                model: input.config.settings.model.clone(),
                temperature: input.config.settings.temperature,
                system: bundle.system,
                user: bundle.user,
            };
            request_sha256 = Some(req.sha256());
            match backend.complete(&req) {
                Err(e) => AgentOutcome::Failed(e.to_string()),
                Ok(raw) => match parse_response(&raw) {
                    Ok(r) => AgentOutcome::Response(r),
                    Err(e) => AgentOutcome::Unparsable(e.to_string()),
                },
            }
        }
    };
    sink.emit(&Event::DispatchFinish {
        layer: input.layer,
        task: id.clone(),
        role: dispatch.kind().into(),
        outcome: outcome_label(&outcome).0.into(),
    });
    DispatchResult { dispatch: dispatch.clone(), request_sha256, outcome }
}

/// Executes a plan against one snapshot. Returns results in plan order and
/// the number of sequential waves used.
#[allow(clippy::too_many_arguments)]
pub fn run_layer(
    layer: u32,
    plan: &LayerPlan,
    contract: &LanguageContract,
    workspace: &Workspace,
    tasks: &[Task],
    intent: &IntentSpec,
    config: &RunConfig,
    backend: &dyn Backend,
    sink: &dyn EventSink,
) -> (Vec<DispatchResult>, usize) {
    let paths: Vec<String> = tasks.iter().map(|t| t.file_path.clone()).collect();
    let input = LayerInput { layer, contract, workspace, tasks, intent, paths: &paths, config };
    if plan.dispatches.is_empty() {
        return (Vec::new(), 0);
    }
    match config.mode {
        Mode::Sequential => {
            let results = plan.dispatches.iter().map(|d| execute(&input, d, backend, sink)).collect();
            (results, plan.dispatches.len())
        }
        Mode::Parallel | Mode::NoContract => {
            let results = std::thread::scope(|s| {
                let handles: Vec<_> = plan
                    .dispatches
                    .iter()
                    .map(|d| {
                        let input = &input;
                        s.spawn(move || execute(input, d, backend, sink))
                    })
                    .collect();
                handles
                    .into_iter()
                    .zip(&plan.dispatches)
                    .map(|(h, d)| {
                        h.join().unwrap_or_else(|_| DispatchResult {
                            dispatch: d.clone(),
                            request_sha256: None,
                            outcome: AgentOutcome::Failed("dispatch thread panicked".into()),
                        })
                    })
                    .collect()
            });
            (results, 1)
        }
    }
}

/// The full-section UPDATE that writes task statuses back into the Status
/// lines of the API section, or None when they already agree.
pub fn status_sync_action(contract: &LanguageContract, tasks: &[Task]) -> Option<ContractAction> {
    let k = kernel::project(contract).ok()?;
    let lines = contract.section(SectionKey::SymbolicApiSpecifications);
    let mut body = lines.to_vec();
    let mut inserts: Vec<(usize, String)> = Vec::new();
    let indent = |l: &str| l[..l.len() - l.trim_start().len()].to_string();
    for e in &k.entries {
        let Some(t) = tasks.iter().find(|t| t.file_path == e.file_path) else { continue };
        if e.status == t.status {
            continue;
        }
        let range = e.line..e.end.min(lines.len());
        let status_line =
            range.clone().find(|&i| field_of(&lines[i]).is_some_and(|(k, _)| k.eq_ignore_ascii_case("status")));
        match status_line {
            Some(i) => body[i] = format!("{}- **Status:** {}", indent(&lines[i]), t.status),
            None => {
                let anchor = range
                    .clone()
                    .filter(|&i| {
                        field_of(&lines[i])
                            .is_some_and(|(k, _)| k.eq_ignore_ascii_case("owner") || k.eq_ignore_ascii_case("version"))
                    })
                    .max();
                let ind = match anchor {
                    Some(a) => indent(&lines[a]),
                    None => format!("{}  ", indent(&lines[e.line])),
                };
                inserts.push((anchor.unwrap_or(e.line) + 1, format!("{ind}- **Status:** {}", t.status)));
            }
        }
    }
    for (at, line) in inserts.into_iter().rev() {
        body.insert(at, line);
    }
    (body != lines).then(|| ContractAction::update(SectionKey::SymbolicApiSpecifications, body.join("\n")))
}

/// Synthesizes the contract, then plans, executes and audits layers until
/// every task is verified, nothing can be dispatched, or `t_max` layers ran.
pub fn run(
    intent: &IntentSpec,
    config: &RunConfig,
    backend: &dyn Backend,
    sink: &dyn EventSink,
    ledger: &mut Ledger,
) -> Result<RunResult, RunError> {
    let registry = AnalyzerRegistry::default();
    ledger.append(LedgerRecord::Header(RunHeader {
        format: 1,
        intent: intent.text().to_string(),
        mode: config.mode,
        t_max: config.t_max,
        attempt_cap: config.attempt_cap,
        model: config.settings.model.clone(),
        temperature: config.settings.temperature,
        context_limit: config.settings.context_limit,
    }))?;

    let synthesis = synthesize_contract(intent, backend, &config.settings)?;
    let mut contract = synthesis.contract.clone();
    let mut journal: Vec<JournalRecord> = synthesis
        .generator
        .actions
        .iter()
        .chain(&synthesis.discriminator.actions)
        .enumerate()
        .map(|(i, a)| JournalRecord::action(i as u64 + 1, a))
        .collect();
    sink.emit(&Event::SynthesisDone { revision: contract.revision(), contract_sha256: contract.sha256() });
    ledger.append(LedgerRecord::Synthesis(SynthesisRecord {
        requests: synthesis.requests.clone(),
        draft_findings: synthesis.draft_findings.clone(),
        remaining: synthesis.remaining.iter().map(ToString::to_string).collect(),
        revision: contract.revision(),
        contract_sha256: contract.sha256(),
    }))?;

    let k = kernel::project(&contract).map_err(SynthesisError::from)?;
    let mut tasks = kernel::tasks_of(&k);
    for v in &synthesis.remaining {
        if let Violation::Incomplete { file_path, reason } = v {
            if let Some(t) = tasks.iter_mut().find(|t| &t.file_path == file_path) {
                t.note(format!("contract entry is incomplete: {reason}"));
            }
        }
    }

    let mut workspace = Workspace::new();
    let mut layers = 0;
    while layers < config.t_max {
        let plan = plan_layer(&tasks, |p| workspace.get(p).cloned(), config.attempt_cap)?;
        for id in &plan.capped {
            if let Some(t) = tasks.iter_mut().find(|t| &t.id == id) {
                t.note(format!("attempt cap of {} reached; no further worker dispatches", config.attempt_cap));
            }
        }
        if plan.is_empty() {
            break;
        }
        layers += 1;
        let layer = layers;
        for d in &plan.dispatches {
            if let Dispatch::Worker { task, .. } = d {
                if let Some(t) = tasks.iter_mut().find(|t| &t.id == task) {
                    t.attempts += 1;
                }
            }
        }
        let (results, waves) = run_layer(layer, &plan, &contract, &workspace, &tasks, intent, config, backend, sink);
        let width = match config.mode {
            Mode::Sequential => 1,
            _ => plan.dispatches.len(),
        };
        let dispatches = results
            .iter()
            .map(|r| {
                let (outcome, detail) = outcome_label(&r.outcome);
                DispatchEntry {
                    task: r.dispatch.task().clone(),
                    role: r.dispatch.kind().into(),
                    request_sha256: r.request_sha256.clone(),
                    outcome: outcome.into(),
                    detail,
                }
            })
            .collect();
        let snapshot_sha256 = contract.sha256();
        let commit = audit_layer(layer, &contract, &workspace, &tasks, &results, &registry);
        for i in &commit.report.interventions {
            sink.emit(&Event::Intervention { layer, intervention: i.clone() });
        }
        if commit.contract.revision() != contract.revision() {
            journal.push(JournalRecord::Merge {
                revision: commit.contract.revision(),
                sections_sha256: commit.contract.sha256(),
            });
        }
        contract = commit.contract;
        workspace = commit.workspace;
        tasks = commit.tasks;
        let verified = tasks.iter().filter(|t| t.status == TaskStatus::Verified).count();
        sink.emit(&Event::LayerDone { layer, width, verified, total: tasks.len() });
        ledger.append(LedgerRecord::Layer(Box::new(LayerRecord {
            layer,
            width,
            waves,
            snapshot_sha256,
            dispatches,
            capped: plan.capped,
            transitions: commit.report.status_updates.clone(),
            commits: commit.commits,
            patches: commit.patches,
            conflicts: commit.conflicts,
            merge_rejection: commit.merge_rejection,
            report_sha256: commit.report.sha256(),
            report: commit.report,
            revision: contract.revision(),
            contract_sha256: contract.sha256(),
        })))?;
        if tasks.iter().all(|t| t.status == TaskStatus::Verified) {
            break;
        }
    }

    if let Some(action) = status_sync_action(&contract, &tasks) {
        if let Ok(next) = contract.apply_action(&action, &KernelGuard) {
            journal.push(JournalRecord::action(next.revision(), &action));
            contract = next.seal();
        }
    }
    journal.push(JournalRecord::Seal { revision: contract.revision(), base_sha256: contract.base().sha256() });
    let best_effort = tasks.iter().any(|t| t.status != TaskStatus::Verified);
    ledger.append(LedgerRecord::Summary(RunSummary {
        layers,
        best_effort,
        statuses: tasks.iter().map(|t| (t.id.clone(), t.status)).collect::<BTreeMap<_, _>>(),
        workspace: workspace.hashes(),
        revision: contract.revision(),
        contract_sha256: contract.sha256(),
    }))?;
    Ok(RunResult { contract, workspace, tasks, layers, best_effort, journal })
}
