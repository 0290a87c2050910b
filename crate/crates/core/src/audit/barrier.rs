//! The layer barrier: everything that mutates run state happens here,
//! single-threaded, after all of a layer's dispatches have returned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::amend::{amendment_action, Amendment};
use super::{
    compare, consistency_v, existence_e, matches, sync_s, AuditDelta, AuditReport, DeltaKind, Detail, Intervention,
    SyncOutcome,
};
use crate::agent::{AgentResponse, Verdict};
use crate::contract::LanguageContract;
use crate::kernel::{self, KernelGuard, SymbolicKernel};
use crate::merge::{commit_merge, diff_against_base, merge_layer, AtomicPatch, Conflict};
use crate::scheduler::{Dispatch, Task, TaskId, TaskStatus};
use crate::workspace::{normalize_path, AnalyzerRegistry, FileUnit, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AgentOutcome {
    Response(AgentResponse),
    /// Backend error, timeout or prompt overflow.
    Failed(String),
    /// The raw answer did not follow the response format.
    Unparsable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub dispatch: Dispatch,
    pub request_sha256: Option<String>,
    pub outcome: AgentOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub path: String,
    pub sha256: String,
    pub writer: String,
    pub layer: u32,
}

/// State after a barrier.
#[derive(Debug, Clone)]
pub struct LayerCommit {
    pub contract: LanguageContract,
    pub workspace: Workspace,
    pub tasks: Vec<Task>,
    pub report: AuditReport,
    pub patches: Vec<AtomicPatch>,
    pub conflicts: Vec<Conflict>,
    pub commits: Vec<CommitRecord>,
    pub merge_rejection: Option<String>,
}

fn author_of(d: &Dispatch) -> String {
    match d {
        Dispatch::Worker { task, .. } => format!("worker:{task}"),
        Dispatch::Verifier { task } => format!("critic:{task}"),
    }
}

fn project_or_empty(contract: &LanguageContract, warnings: &mut Vec<String>) -> SymbolicKernel {
    kernel::project(contract).unwrap_or_else(|e| {
        warnings.push(format!("contract does not project: {e}"));
        SymbolicKernel::default()
    })
}

/// Runs the barrier for one layer. `contract` is the sealed snapshot every
/// dispatch saw; `results` may arrive in any order.
pub fn audit_layer(
    layer: u32,
    contract: &LanguageContract,
    workspace: &Workspace,
    tasks: &[Task],
    results: &[DispatchResult],
    registry: &AnalyzerRegistry,
) -> LayerCommit {
    let mut results: Vec<&DispatchResult> = results.iter().collect();
    results.sort_by(|a, b| a.dispatch.task().cmp(b.dispatch.task()).then(a.dispatch.kind().cmp(b.dispatch.kind())));
    let mut tasks: Vec<Task> = tasks.to_vec();
    let mut warnings = Vec::new();
    let mut forced: BTreeMap<TaskId, Vec<Detail>> = BTreeMap::new();

    // Contract actions become patches against the shared base.
    let mut patches = Vec::new();
    for r in &results {
        let AgentOutcome::Response(resp) = &r.outcome else { continue };
        if resp.actions.is_empty() {
            continue;
        }
        match contract.apply_batch(&resp.actions, &KernelGuard) {
            Ok(next) => {
                patches.extend(diff_against_base(contract.base(), next.sections(), &author_of(&r.dispatch), layer))
            }
            Err(rej) => match &r.dispatch {
                Dispatch::Worker { task, .. } => forced
                    .entry(task.clone())
                    .or_default()
                    .push(Detail::ActionRejected { reason: rej.reason.to_string() }),
                Dispatch::Verifier { task } => {
                    warnings.push(format!("{task}: critic contract actions rejected: {}", rej.reason))
                }
            },
        }
    }
    let mut conflicts = Vec::new();
    let mut merge_rejection = None;
    let merged = match merge_layer(contract.base(), &patches, layer) {
        Err(e) => Err(e.to_string()),
        Ok(m) => {
            conflicts = m.conflicts.clone();
            commit_merge(contract, &m, &KernelGuard).map_err(|r| r.reason.to_string())
        }
    };
    let mut current = match merged {
        Ok(c) => c,
        Err(reason) => {
            for p in &patches {
                if let Some(task) = p.author.strip_prefix("worker:") {
                    let d = Detail::ActionRejected { reason: format!("layer merge rejected: {reason}") };
                    let list = forced.entry(task.to_string()).or_default();
                    if !list.contains(&d) {
                        list.push(d);
                    }
                }
            }
            merge_rejection = Some(reason);
            contract.seal()
        }
    };
    let kernel = project_or_empty(&current, &mut warnings);

    let mut ws = workspace.clone();
    let mut commits = Vec::new();
    let mut deltas = Vec::new();
    let mut outcomes: Vec<(TaskId, SyncOutcome)> = Vec::new();
    let mut sync_interventions = Vec::new();
    let mut regressions = Vec::new();
    let mut amendments = Vec::new();

    for r in &results {
        let Dispatch::Worker { task: id, .. } = &r.dispatch else { continue };
        let Some(task) = tasks.iter().find(|t| &t.id == id) else { continue };
        let path = task.file_path.clone();
        let resp = match &r.outcome {
            AgentOutcome::Response(resp) => resp,
            AgentOutcome::Failed(msg) => {
                outcomes.push((id.clone(), SyncOutcome::Rejected(format!("backend failure: {msg}"))));
                continue;
            }
            AgentOutcome::Unparsable(msg) => {
                outcomes.push((id.clone(), SyncOutcome::Rejected(format!("unparsable response: {msg}"))));
                continue;
            }
        };
        let mut artifact = None;
        for a in &resp.artifacts {
            if normalize_path(&a.path).is_ok_and(|p| p == path) {
                artifact.get_or_insert(a);
            } else {
                warnings.push(format!("{id}: ignored artifact for `{}`", a.path));
            }
        }
        let Some(artifact) = artifact else {
            outcomes.push((id.clone(), SyncOutcome::Rejected(format!("no artifact for `{path}` in the response"))));
            continue;
        };
        let Some(entry) = kernel.entry(&path) else {
            warnings.push(format!("{id}: no contract entry, artifact ignored"));
            continue;
        };
        let unit = FileUnit { path: path.clone(), body: artifact.body.clone(), writer: id.clone(), layer };
        let mut delta = compare(&kernel, entry, Some(&unit), registry);
        if let Some(extra) = forced.remove(id) {
            let mut details = delta.details;
            details.extend(extra);
            delta = AuditDelta::from_details(id.clone(), details);
        }
        if delta.kind == DeltaKind::Patchable {
            let code = registry.extract(&unit).unwrap_or_default();
            let mut staged = current.clone();
            let mut applied = Vec::new();
            let mut rejected = None;
            for a in Amendment::derive(&kernel, &delta, &code) {
                let Some((action, added)) = amendment_action(&staged, &a) else { continue };
                match staged.apply_action(&action, &KernelGuard) {
                    Ok(next) => {
                        applied.push(Intervention::ContractAmendment {
                            source: a.source.clone(),
                            target: a.target.clone(),
                            added,
                            revision: next.revision(),
                        });
                        staged = next;
                    }
                    Err(rej) => {
                        rejected = Some(rej.reason.to_string());
                        break;
                    }
                }
            }
            match rejected {
                None => {
                    current = staged;
                    amendments.extend(applied);
                }
                Some(reason) => {
                    let mut details = delta.details;
                    details.push(Detail::ActionRejected { reason: format!("amendment rejected: {reason}") });
                    delta = AuditDelta::from_details(id.clone(), details);
                }
            }
        }
        match delta.kind {
            DeltaKind::Critical => {
                let reason = format!("contract mismatch in `{path}`: {}", delta.summary());
                sync_interventions.push(Intervention::SyncTask { task: id.clone(), reason: reason.clone() });
                outcomes.push((id.clone(), SyncOutcome::Rejected(reason)));
            }
            DeltaKind::Empty | DeltaKind::Patchable => {
                if let Ok(u) = ws.commit_file(&path, &artifact.body, id, layer) {
                    commits.push(CommitRecord {
                        path: u.path.clone(),
                        sha256: u.sha256(),
                        writer: u.writer.clone(),
                        layer,
                    });
                }
                outcomes.push((id.clone(), SyncOutcome::Committed));
            }
        }
        deltas.push(delta);
    }

    for r in &results {
        let Dispatch::Verifier { task: id } = &r.dispatch else { continue };
        let Some(task) = tasks.iter().find(|t| &t.id == id) else { continue };
        let outcome = match &r.outcome {
            AgentOutcome::Failed(msg) => SyncOutcome::CriticFailure(format!("review failed: {msg}")),
            AgentOutcome::Unparsable(msg) => SyncOutcome::Unreadable(msg.clone()),
            AgentOutcome::Response(resp) => match &resp.verdict {
                None => SyncOutcome::Unreadable("no VERDICT line".into()),
                Some(Verdict::Fail(reason)) => SyncOutcome::Fail(reason.clone()),
                Some(Verdict::Pass) => match veto(&kernel, task, &ws, registry) {
                    Some(reason) => SyncOutcome::Fail(reason),
                    None => SyncOutcome::Pass,
                },
            },
        };
        if let SyncOutcome::Fail(reason) | SyncOutcome::CriticFailure(reason) = &outcome {
            if task.status == TaskStatus::Done {
                regressions.push(Intervention::StatusRegression { task: id.clone(), reason: reason.clone() });
            }
        }
        outcomes.push((id.clone(), outcome));
    }

    let decisions = sync_s(&tasks, &outcomes);
    let mut status_updates = Vec::new();
    for d in decisions {
        let Some(task) = tasks.iter_mut().find(|t| t.id == d.task) else { continue };
        if let Some(note) = d.note {
            task.note(note);
        }
        if let Some(w) = d.warning {
            warnings.push(w);
        }
        if let Some(u) = d.update {
            if task.transition(u.to).is_ok() {
                status_updates.push(u);
            }
        }
    }

    // V is judged on the contract the layer worked against.
    let consistency = consistency_v(&kernel, &ws, registry);

    let contract_out = current.seal();
    let final_kernel = project_or_empty(&contract_out, &mut warnings);
    let mut injections = Vec::new();
    tasks.retain(|t| {
        let keep = final_kernel.entry(&t.file_path).is_some();
        if !keep {
            warnings.push(format!("{}: entry removed from the contract, task dropped", t.id));
        }
        keep
    });
    for e in &final_kernel.entries {
        if tasks.iter().all(|t| t.file_path != e.file_path) {
            tasks.push(Task::new(e.file_path.clone(), e.owner.clone(), TaskStatus::Todo));
            injections.push(Intervention::TaskInjection { path: e.file_path.clone(), effect: "created".into() });
        }
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));

    let existence = existence_e(&final_kernel, &ws, registry);
    for path in &existence.missing {
        if injections.iter().any(|i| matches!(i, Intervention::TaskInjection { path: p, .. } if p == path)) {
            continue;
        }
        let Some(task) = tasks.iter().find(|t| &t.file_path == path) else { continue };
        let effect = match task.status {
            TaskStatus::Todo | TaskStatus::Error => "pending",
            TaskStatus::Done => "verify",
            TaskStatus::Verified => {
                warnings.push(format!("{path}: verified task no longer matches its entry; not re-opened"));
                "absorbed"
            }
        };
        injections.push(Intervention::TaskInjection { path: path.clone(), effect: effect.into() });
    }
    if let Some(w) = &existence.warning {
        warnings.push(w.clone());
    }

    let mut interventions = sync_interventions;
    interventions.extend(regressions);
    interventions.extend(amendments);
    interventions.extend(injections);

    LayerCommit {
        contract: contract_out,
        workspace: ws,
        tasks,
        report: AuditReport { layer, existence, status_updates, consistency, deltas, interventions, warnings },
        patches,
        conflicts,
        commits,
        merge_rejection,
    }
}

/// Reason to overrule a PASS: the reviewed file no longer fits its entry.
fn veto(kernel: &SymbolicKernel, task: &Task, ws: &Workspace, registry: &AnalyzerRegistry) -> Option<String> {
    let entry = kernel.entry(&task.file_path)?;
    let unit = ws.get(&task.file_path);
    let delta = compare(kernel, entry, unit, registry);
    if delta.kind == DeltaKind::Critical {
        return Some(format!("audit veto: {}", delta.summary()));
    }
    if !unit.is_some_and(|u| matches(entry, u, registry)) {
        return Some(format!("audit veto: `{}` does not define everything its entry declares", task.file_path));
    }
    None
}
