//! Contract/code consistency auditing: existence `E`, status synchronization
//! `S`, consistency `V`, per-task deltas and the layer barrier.

mod amend;
mod barrier;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::{ApiSpecEntry, MethodSig, SymbolicKernel};
use crate::scheduler::{Task, TaskId, TaskStatus};
use crate::workspace::{AnalyzerRegistry, ExtractedMethod, ExtractedSymbols, FileUnit, Workspace};

pub use amend::{amendment_action, AmendItem, Amendment};
pub use barrier::{audit_layer, AgentOutcome, CommitRecord, DispatchResult, LayerCommit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeltaKind {
    Empty,
    Critical,
    Patchable,
}

/// A symbol-level difference between a contract entry and its file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "detail", rename_all = "snake_case")]
pub enum Detail {
    MissingFile,
    EmptyFile,
    Unanalyzable,
    MissingClass {
        class: String,
    },
    MissingAttribute {
        class: String,
        attribute: String,
    },
    MissingMethod {
        class: String,
        method: String,
    },
    MissingFunction {
        function: String,
    },
    SignatureMismatch {
        symbol: String,
        expected: String,
        found: String,
    },
    AttributeTypeMismatch {
        class: String,
        attribute: String,
        expected: String,
        found: String,
    },
    UndeclaredMethodCall {
        class: String,
        method: String,
    },
    ActionRejected {
        reason: String,
    },
    ExtraClass {
        class: String,
    },
    ExtraAttribute {
        class: String,
        attribute: String,
    },
    ExtraMethod {
        class: String,
        method: String,
    },
    ExtraFunction {
        function: String,
    },
    /// Code uses `value.attribute` on a contract class that does not declare it.
    UndeclaredAttributeUse {
        class: String,
        attribute: String,
    },
}

impl Detail {
    pub fn is_critical(&self) -> bool {
        !matches!(
            self,
            Detail::ExtraClass { .. }
                | Detail::ExtraAttribute { .. }
                | Detail::ExtraMethod { .. }
                | Detail::ExtraFunction { .. }
                | Detail::UndeclaredAttributeUse { .. }
        )
    }
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detail::MissingFile => f.write_str("file is missing"),
            Detail::EmptyFile => f.write_str("file is empty"),
            Detail::Unanalyzable => f.write_str("file is unanalyzable"),
            Detail::MissingClass { class } => write!(f, "class `{class}` is not defined"),
            Detail::MissingAttribute { class, attribute } => {
                write!(f, "`{class}` does not set attribute `{attribute}` in its constructor")
            }
            Detail::MissingMethod { class, method } => write!(f, "`{class}` lacks method `{method}`"),
            Detail::MissingFunction { function } => write!(f, "function `{function}` is not defined"),
            Detail::SignatureMismatch { symbol, expected, found } => {
                write!(f, "`{symbol}` is `{found}` but the contract says `{expected}`")
            }
            Detail::AttributeTypeMismatch { class, attribute, expected, found } => {
                write!(f, "`{class}.{attribute}` is annotated `{found}` but the contract says `{expected}`")
            }
            Detail::UndeclaredMethodCall { class, method } => {
                write!(f, "calls `{class}.{method}()` which the contract does not declare")
            }
            Detail::ActionRejected { reason } => write!(f, "contract change rejected: {reason}"),
            Detail::ExtraClass { class } => write!(f, "defines undeclared class `{class}`"),
            Detail::ExtraAttribute { class, attribute } => {
                write!(f, "`{class}` sets undeclared attribute `{attribute}`")
            }
            Detail::ExtraMethod { class, method } => write!(f, "`{class}` defines undeclared method `{method}`"),
            Detail::ExtraFunction { function } => write!(f, "defines undeclared function `{function}`"),
            Detail::UndeclaredAttributeUse { class, attribute } => {
                write!(f, "uses `{class}.{attribute}` which the contract does not declare")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditDelta {
    pub task: TaskId,
    pub kind: DeltaKind,
    pub details: Vec<Detail>,
}

impl AuditDelta {
    pub fn from_details(task: impl Into<TaskId>, mut details: Vec<Detail>) -> Self {
        details.sort();
        details.dedup();
        let kind = if details.is_empty() {
            DeltaKind::Empty
        } else if details.iter().any(Detail::is_critical) {
            DeltaKind::Critical
        } else {
            DeltaKind::Patchable
        };
        Self { task: task.into(), kind, details }
    }

    pub fn summary(&self) -> String {
        self.details.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
    }
}

fn is_private(name: &str) -> bool {
    name.starts_with('_')
}

/// Parameters as the contract sees them: `self`/`cls` dropped for methods.
fn visible_params(m: &ExtractedMethod, is_method: bool) -> &[crate::workspace::ExtractedParam] {
    match m.params.first() {
        Some(p) if is_method && (p.name == "self" || p.name == "cls") => &m.params[1..],
        _ => &m.params,
    }
}

fn render_code_sig(m: &ExtractedMethod, is_method: bool) -> String {
    let params: Vec<String> = visible_params(m, is_method)
        .iter()
        .map(|p| match &p.type_name {
            Some(t) => format!("{}: {t}", p.name),
            None => p.name.clone(),
        })
        .collect();
    let ret = m.return_type.as_deref().map(|r| format!(" -> {r}")).unwrap_or_default();
    format!("def {}({}){ret}", m.name, params.join(", "))
}

/// Names, order and arity must agree; annotations are compared where the
/// code has them.
fn signature_agrees(spec: &MethodSig, code: &ExtractedMethod, is_method: bool) -> bool {
    let params = visible_params(code, is_method);
    params.len() == spec.params.len()
        && params
            .iter()
            .zip(&spec.params)
            .all(|(c, s)| c.name == s.name && c.type_name.as_ref().is_none_or(|t| *t == s.type_name))
        && code.return_type.as_ref().is_none_or(|r| *r == spec.return_type)
}

/// Symbol-level comparison of one entry against the unit at its path.
pub fn compare(
    kernel: &SymbolicKernel,
    entry: &ApiSpecEntry,
    unit: Option<&FileUnit>,
    registry: &AnalyzerRegistry,
) -> AuditDelta {
    let task = entry.file_path.clone();
    let Some(unit) = unit else { return AuditDelta::from_details(task, vec![Detail::MissingFile]) };
    if unit.body.trim().is_empty() {
        return AuditDelta::from_details(task, vec![Detail::EmptyFile]);
    }
    let Some(code) = registry.extract(unit) else { return AuditDelta::from_details(task, vec![]) };
    if code.unanalyzable {
        return AuditDelta::from_details(task, vec![Detail::Unanalyzable]);
    }
    AuditDelta::from_details(task, compare_symbols(kernel, entry, &code))
}

fn compare_symbols(kernel: &SymbolicKernel, entry: &ApiSpecEntry, code: &ExtractedSymbols) -> Vec<Detail> {
    let mut out = Vec::new();
    for spec in &entry.classes {
        let Some(class) = code.class(&spec.name) else {
            out.push(Detail::MissingClass { class: spec.name.clone() });
            continue;
        };
        for attr in &spec.attributes {
            match class.attribute(&attr.name) {
                None => out.push(Detail::MissingAttribute { class: spec.name.clone(), attribute: attr.name.clone() }),
                Some(found) => {
                    if let Some(t) = &found.type_name {
                        if attr.type_name != "any" && *t != attr.type_name {
                            out.push(Detail::AttributeTypeMismatch {
                                class: spec.name.clone(),
                                attribute: attr.name.clone(),
                                expected: attr.type_name.clone(),
                                found: t.clone(),
                            });
                        }
                    }
                }
            }
        }
        for m in &spec.methods {
            match class.method(&m.sig.name) {
                None => out.push(Detail::MissingMethod { class: spec.name.clone(), method: m.sig.name.clone() }),
                Some(found) if !signature_agrees(&m.sig, found, true) => out.push(Detail::SignatureMismatch {
                    symbol: format!("{}.{}", spec.name, m.sig.name),
                    expected: m.sig.to_string(),
                    found: render_code_sig(found, true),
                }),
                Some(_) => {}
            }
        }
        for attr in &class.attributes {
            if spec.attribute(&attr.name).is_none() && !is_private(&attr.name) {
                out.push(Detail::ExtraAttribute { class: spec.name.clone(), attribute: attr.name.clone() });
            }
        }
        for m in &class.methods {
            if spec.method(&m.name).is_none() && !is_private(&m.name) {
                out.push(Detail::ExtraMethod { class: spec.name.clone(), method: m.name.clone() });
            }
        }
    }
    for f in &entry.functions {
        match code.function(&f.sig.name) {
            None => out.push(Detail::MissingFunction { function: f.sig.name.clone() }),
            Some(found) if !signature_agrees(&f.sig, found, false) => out.push(Detail::SignatureMismatch {
                symbol: f.sig.name.clone(),
                expected: f.sig.to_string(),
                found: render_code_sig(found, false),
            }),
            Some(_) => {}
        }
    }
    for class in &code.classes {
        if entry.class(&class.name).is_none() && !is_private(&class.name) {
            out.push(Detail::ExtraClass { class: class.name.clone() });
        }
    }
    for f in &code.functions {
        if entry.function(&f.name).is_none() && !is_private(&f.name) {
            out.push(Detail::ExtraFunction { function: f.name.clone() });
        }
    }
    for u in &code.member_uses {
        let Some((_, spec)) = kernel.find_class(&u.class) else { continue };
        if is_private(&u.member) || spec.attribute(&u.member).is_some() || spec.method(&u.member).is_some() {
            continue;
        }
        out.push(if u.call {
            Detail::UndeclaredMethodCall { class: u.class.clone(), method: u.member.clone() }
        } else {
            Detail::UndeclaredAttributeUse { class: u.class.clone(), attribute: u.member.clone() }
        });
    }
    out
}

/// `match(τ, u)`: same path, non-empty body, and every class, attribute,
/// method and function the entry declares is defined.
pub fn matches(entry: &ApiSpecEntry, unit: &FileUnit, registry: &AnalyzerRegistry) -> bool {
    if unit.path != entry.file_path || unit.body.trim().is_empty() {
        return false;
    }
    let Some(code) = registry.extract(unit) else { return true };
    if code.unanalyzable {
        return false;
    }
    entry.classes.iter().all(|spec| {
        code.class(&spec.name).is_some_and(|c| {
            spec.attributes.iter().all(|a| c.attribute(&a.name).is_some())
                && spec.methods.iter().all(|m| c.method(&m.sig.name).is_some())
        })
    }) && entry.functions.iter().all(|f| code.function(&f.sig.name).is_some())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Existence {
    pub value: f64,
    pub matched: usize,
    pub total: usize,
    /// Paths of unmatched tasks.
    pub missing: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `E = (1/|T|) Σ 1(∃u: match(τ, u))`. With no tasks `E = 1`.
pub fn existence_e(kernel: &SymbolicKernel, ws: &Workspace, registry: &AnalyzerRegistry) -> Existence {
    let total = kernel.entries.len();
    let missing: Vec<String> = kernel
        .entries
        .iter()
        .filter(|e| !ws.get(&e.file_path).is_some_and(|u| matches(e, u, registry)))
        .map(|e| e.file_path.clone())
        .collect();
    if total == 0 {
        return Existence {
            value: 1.0,
            matched: 0,
            total: 0,
            missing,
            warning: Some("no tasks; existence defined as 1".into()),
        };
    }
    let matched = total - missing.len();
    Existence { value: matched as f64 / total as f64, matched, total, missing, warning: None }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consistency {
    pub holds: bool,
    pub deltas: Vec<AuditDelta>,
}

/// `V`: every entry agrees with its file. Only non-empty deltas are listed.
pub fn consistency_v(kernel: &SymbolicKernel, ws: &Workspace, registry: &AnalyzerRegistry) -> Consistency {
    let deltas: Vec<AuditDelta> = kernel
        .entries
        .iter()
        .map(|e| compare(kernel, e, ws.get(&e.file_path), registry))
        .filter(|d| d.kind != DeltaKind::Empty)
        .collect();
    Consistency { holds: deltas.is_empty(), deltas }
}

/// What a dispatch produced, as far as status synchronization cares.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail", rename_all = "snake_case")]
pub enum SyncOutcome {
    /// Worker artifact accepted and committed.
    Committed,
    /// Worker produced nothing usable, or its artifact was rejected.
    Rejected(String),
    Pass,
    Fail(String),
    /// The critic's answer had no readable verdict.
    Unreadable(String),
    /// The critic's backend call failed.
    CriticFailure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusUpdate {
    pub task: TaskId,
    pub from: TaskStatus,
    pub to: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncDecision {
    pub task: TaskId,
    pub update: Option<StatusUpdate>,
    pub note: Option<String>,
    pub warning: Option<String>,
}

/// `S`: maps dispatch outcomes onto legal status transitions.
pub fn sync_s(tasks: &[Task], outcomes: &[(TaskId, SyncOutcome)]) -> Vec<SyncDecision> {
    outcomes
        .iter()
        .filter_map(|(id, outcome)| {
            let task = tasks.iter().find(|t| &t.id == id)?;
            let from = task.status;
            let step = |to: TaskStatus| from.can_become(to).then(|| StatusUpdate { task: id.clone(), from, to });
            let mut d = SyncDecision { task: id.clone(), update: None, note: None, warning: None };
            match outcome {
                SyncOutcome::Committed => d.update = step(TaskStatus::Done),
                SyncOutcome::Rejected(reason) => d.note = Some(reason.clone()),
                SyncOutcome::Pass => d.update = step(TaskStatus::Verified),
                SyncOutcome::Fail(reason) | SyncOutcome::CriticFailure(reason) => {
                    d.update = step(TaskStatus::Error);
                    d.note = Some(reason.clone());
                }
                SyncOutcome::Unreadable(why) => d.warning = Some(format!("{id}: no transition, {why}")),
            }
            if d.update.is_none()
                && matches!(outcome, SyncOutcome::Committed | SyncOutcome::Pass | SyncOutcome::Fail(_))
            {
                d.warning = Some(format!("{id}: outcome does not apply to status {from}"));
            }
            Some(d)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "intervention")]
pub enum Intervention {
    /// An unmatched task. `effect` names what the next layer does about it:
    /// `created` (new TODO task), `pending` (worker redispatch), `verify`
    /// (critic review) or `absorbed` (already verified; no cascade).
    TaskInjection {
        path: String,
        effect: String,
    },
    StatusRegression {
        task: TaskId,
        reason: String,
    },
    SyncTask {
        task: TaskId,
        reason: String,
    },
    ContractAmendment {
        source: TaskId,
        target: String,
        added: Vec<String>,
        revision: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub layer: u32,
    pub existence: Existence,
    pub status_updates: Vec<StatusUpdate>,
    /// Consistency observed at the barrier, before amendments.
    pub consistency: Consistency,
    pub deltas: Vec<AuditDelta>,
    pub interventions: Vec<Intervention>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn sha256(&self) -> String {
        crate::hash::json_sha256(self)
    }
}

/// Declared class names of the kernel, used when deciding whether a type
/// from code can be copied into the contract.
pub(crate) fn known_types(kernel: &SymbolicKernel) -> BTreeSet<String> {
    kernel.class_names().into_iter().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{body_lines, LanguageContract, SectionKey, Sections};
    use crate::kernel::project;

    const API: &str = "\
- **File:** `entities/player.py`
  - **Owner:** Backend Engineer
  - **Class:** `Player`
    - **Attribute:** `x: int` - Horizontal position.
    - **Attribute:** `y: int` - Vertical position.
    - **Attribute:** `health: int` - Hit points.
    - **Method:** `def move(dx: int, dy: int) -> None` - Move.";

    fn kernel(api: &str) -> SymbolicKernel {
        let mut s = Sections::empty();
        s.set(SectionKey::SymbolicApiSpecifications, body_lines(api));
        project(&LanguageContract::from_sections(s)).unwrap()
    }

    fn unit(path: &str, body: &str) -> FileUnit {
        FileUnit { path: path.into(), body: body.into(), writer: "w".into(), layer: 1 }
    }

    const PLAYER: &str = "\
class Player:
    def __init__(self, x: int, y: int) -> None:
        self.x = x
        self.y = y
        self.health = 100

    def move(self, dx: int, dy: int) -> None:
        self.x += dx
        self.y += dy
";

    #[test]
    fn identical_is_empty() {
        let k = kernel(API);
        let d = compare(&k, &k.entries[0], Some(&unit("entities/player.py", PLAYER)), &AnalyzerRegistry::default());
        assert_eq!(d.kind, DeltaKind::Empty, "{:?}", d.details);
    }

    #[test]
    fn extra_attributes_are_patchable() {
        let k = kernel(API);
        let body =
            PLAYER.replace("self.health = 100", "self.health = 100\n        self.width = 20\n        self.height = 20");
        let d = compare(&k, &k.entries[0], Some(&unit("entities/player.py", &body)), &AnalyzerRegistry::default());
        assert_eq!(d.kind, DeltaKind::Patchable);
        assert_eq!(d.details.len(), 2);
    }

    #[test]
    fn changed_parameter_type_is_critical() {
        let k = kernel(API);
        let body = PLAYER.replace("def move(self, dx: int", "def move(self, dx: float");
        let d = compare(&k, &k.entries[0], Some(&unit("entities/player.py", &body)), &AnalyzerRegistry::default());
        assert_eq!(d.kind, DeltaKind::Critical);
        assert!(matches!(d.details[0], Detail::SignatureMismatch { .. }));
    }

    #[test]
    fn renamed_method_is_critical() {
        let k = kernel(API);
        let body = PLAYER.replace("def move(", "def shift(");
        let d = compare(&k, &k.entries[0], Some(&unit("entities/player.py", &body)), &AnalyzerRegistry::default());
        assert_eq!(d.kind, DeltaKind::Critical);
    }

    #[test]
    fn hollow_skeleton_does_not_match() {
        let k = kernel(API);
        let reg = AnalyzerRegistry::default();
        assert!(!matches(&k.entries[0], &unit("entities/player.py", "class Player: pass\n"), &reg));
        assert!(!matches(&k.entries[0], &unit("entities/player.py", ""), &reg));
        assert!(matches(&k.entries[0], &unit("entities/player.py", PLAYER), &reg));
        assert!(!matches(&k.entries[0], &unit("player.py", PLAYER), &reg));
    }

    #[test]
    fn sync_rules() {
        let mut tasks = vec![
            Task::new("a", "E", TaskStatus::Todo),
            Task::new("b", "E", TaskStatus::Done),
            Task::new("c", "E", TaskStatus::Done),
            Task::new("d", "E", TaskStatus::Todo),
        ];
        tasks[3].status = TaskStatus::Todo;
        let out = sync_s(
            &tasks,
            &[
                ("a".into(), SyncOutcome::Committed),
                ("b".into(), SyncOutcome::Pass),
                ("c".into(), SyncOutcome::Fail("collision uses undeclared width".into())),
                ("d".into(), SyncOutcome::Unreadable("no verdict".into())),
            ],
        );
        let ups: Vec<_> =
            out.iter().filter_map(|d| d.update.as_ref()).map(|u| (u.task.as_str(), u.from, u.to)).collect();
        assert_eq!(
            ups,
            [
                ("a", TaskStatus::Todo, TaskStatus::Done),
                ("b", TaskStatus::Done, TaskStatus::Verified),
                ("c", TaskStatus::Done, TaskStatus::Error),
            ]
        );
        assert_eq!(out[2].note.as_deref(), Some("collision uses undeclared width"));
        assert!(out[3].warning.is_some() && out[3].update.is_none());
    }
}
