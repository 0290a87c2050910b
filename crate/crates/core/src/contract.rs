//! The Language Contract document.
//!
//! A contract is seven canonical markdown sections split into a product tier
//! and a technical tier. Contract values are immutable: every mutation returns
//! a new value, and a rejected mutation leaves the caller's value untouched.
//!
//! Section bodies are stored line by line; the line is the coordinate unit used
//! by [`crate::merge`] when patches are computed against the base snapshot.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;

/// One of the seven canonical contract sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectionKey {
    ProjectOverview,
    UserStories,
    Constraints,
    DirectoryStructure,
    GlobalSharedKnowledge,
    DependencyRelationships,
    SymbolicApiSpecifications,
}

impl SectionKey {
    pub const ALL: [SectionKey; 7] = [
        SectionKey::ProjectOverview,
        SectionKey::UserStories,
        SectionKey::Constraints,
        SectionKey::DirectoryStructure,
        SectionKey::GlobalSharedKnowledge,
        SectionKey::DependencyRelationships,
        SectionKey::SymbolicApiSpecifications,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Heading text used in the canonical markdown layout.
    pub fn heading(self) -> &'static str {
        match self {
            SectionKey::ProjectOverview => "Project Overview",
            SectionKey::UserStories => "User Stories (Features)",
            SectionKey::Constraints => "Constraints",
            SectionKey::DirectoryStructure => "Directory Structure",
            SectionKey::GlobalSharedKnowledge => "Global Shared Knowledge",
            SectionKey::DependencyRelationships => "Dependency Relationships",
            SectionKey::SymbolicApiSpecifications => "Symbolic API Specifications",
        }
    }

    pub fn tier(self) -> Tier {
        match self {
            SectionKey::ProjectOverview | SectionKey::UserStories | SectionKey::Constraints => Tier::Requirements,
            _ => Tier::Technical,
        }
    }

    /// Resolves a section name as written by an agent or a template.
    ///
    /// Matching ignores case, spacing, punctuation and a leading outline
    /// number (`2.4 Symbolic Api Specifications`). The older tier names
    /// `User Stories` and `Project Structure` are accepted as aliases.
    pub fn from_name(name: &str) -> Option<SectionKey> {
        let trimmed = name.trim().trim_start_matches(|c: char| c.is_ascii_digit() || c == '.').trim();
        let folded: String = trimmed.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        let key = match folded.as_str() {
            "projectoverview" => SectionKey::ProjectOverview,
            "userstoriesfeatures" | "userstories" => SectionKey::UserStories,
            "constraints" => SectionKey::Constraints,
            "directorystructure" | "projectstructure" => SectionKey::DirectoryStructure,
            "globalsharedknowledge" => SectionKey::GlobalSharedKnowledge,
            "dependencyrelationships" => SectionKey::DependencyRelationships,
            "symbolicapispecifications" | "symbolicapispecification" => SectionKey::SymbolicApiSpecifications,
            _ => return None,
        };
        Some(key)
    }
}

impl fmt::Display for SectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.heading())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Requirements,
    Technical,
}

impl Tier {
    pub fn heading(self) -> &'static str {
        match self {
            Tier::Requirements => "Requirements Document",
            Tier::Technical => "Technical Document",
        }
    }

    fn from_heading(text: &str) -> Option<Tier> {
        let folded: String = text.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match folded.as_str() {
            "requirementsdocument" | "productrequirementdocument" | "requirementdocument" => Some(Tier::Requirements),
            "technicaldocument" => Some(Tier::Technical),
            _ => None,
        }
    }
}

/// The full set of section bodies, always holding all seven keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Sections {
    bodies: [Vec<String>; 7],
}

impl Sections {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, key: SectionKey) -> &[String] {
        &self.bodies[key.index()]
    }

    pub fn set(&mut self, key: SectionKey, lines: Vec<String>) {
        self.bodies[key.index()] = lines;
    }

    pub fn text(&self, key: SectionKey) -> String {
        self.get(key).join("\n")
    }

    pub fn iter(&self) -> impl Iterator<Item = (SectionKey, &[String])> {
        SectionKey::ALL.into_iter().map(move |k| (k, self.get(k)))
    }

    /// Canonical markdown layout.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut tier = None;
        for key in SectionKey::ALL {
            if tier != Some(key.tier()) {
                if tier.is_some() {
                    out.push('\n');
                }
                tier = Some(key.tier());
                out.push_str("# ");
                out.push_str(key.tier().heading());
                out.push_str("\n\n");
            }
            out.push_str("## ");
            out.push_str(key.heading());
            out.push_str("\n\n");
            let body = self.get(key);
            if !body.is_empty() {
                for line in body {
                    out.push_str(line);
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(doc: &str) -> Result<Sections, ContractError> {
        let mut bodies: [Option<Vec<String>>; 7] = Default::default();
        let mut current: Option<SectionKey> = None;
        let mut fence: Option<usize> = None;

        for (idx, raw) in doc.lines().enumerate() {
            let line_no = idx + 1;
            if fence.is_none() {
                if let Some(heading) = heading_of(raw) {
                    match heading {
                        Heading::Tier(text) => {
                            if Tier::from_heading(text).is_none() {
                                return Err(ContractError::MalformedTemplate(format!(
                                    "line {line_no}: unknown top-level heading `{text}`"
                                )));
                            }
                            current = None;
                        }
                        Heading::Section(text) => {
                            let key = SectionKey::from_name(text).ok_or_else(|| {
                                ContractError::MalformedTemplate(format!(
                                    "line {line_no}: unknown section heading `{text}`"
                                ))
                            })?;
                            if bodies[key.index()].is_some() {
                                return Err(ContractError::MalformedTemplate(format!(
                                    "line {line_no}: duplicate section `{}`",
                                    key.heading()
                                )));
                            }
                            bodies[key.index()] = Some(Vec::new());
                            current = Some(key);
                        }
                    }
                    continue;
                }
            }
            fence = track_fence(fence, raw);
            match current {
                Some(key) => bodies[key.index()].as_mut().unwrap().push(raw.to_string()),
                None if raw.trim().is_empty() => {}
                None => {
                    return Err(ContractError::MalformedTemplate(format!("line {line_no}: text outside any section")))
                }
            }
        }

        let mut sections = Sections::empty();
        for key in SectionKey::ALL {
            match bodies[key.index()].take() {
                Some(lines) => sections.set(key, trim_blank_edges(lines)),
                None => return Err(ContractError::MalformedTemplate(format!("missing section `{}`", key.heading()))),
            }
        }
        Ok(sections)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }
}

enum Heading<'a> {
    Tier(&'a str),
    Section(&'a str),
}

fn heading_of(line: &str) -> Option<Heading<'_>> {
    if let Some(rest) = line.strip_prefix("## ") {
        Some(Heading::Section(rest.trim()))
    } else {
        line.strip_prefix("# ").map(|rest| Heading::Tier(rest.trim()))
    }
}

/// Returns the fence state after `line`. The state is the opening fence length.
fn track_fence(state: Option<usize>, line: &str) -> Option<usize> {
    let trimmed = line.trim_start();
    let ticks = trimmed.chars().take_while(|&c| c == '`').count();
    match state {
        None if ticks >= 3 => Some(ticks),
        Some(open) if ticks == open && trimmed.trim_end().len() == ticks => None,
        other => other,
    }
}

fn trim_blank_edges(mut lines: Vec<String>) -> Vec<String> {
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    let lead = lines.iter().take_while(|l| l.trim().is_empty()).count();
    lines.drain(..lead);
    lines
}

/// Splits an action payload into body lines: blank edge lines are dropped,
/// everything else is kept verbatim.
pub fn body_lines(content: &str) -> Vec<String> {
    trim_blank_edges(content.lines().map(str::to_string).collect())
}

/// Checks that a body survives a render/parse round trip unchanged.
fn check_body(key: SectionKey, lines: &[String]) -> Result<(), String> {
    let mut fence = None;
    for (i, line) in lines.iter().enumerate() {
        if fence.is_none() && heading_of(line).is_some() {
            return Err(format!("{}: line {} would be read as a document heading", key.heading(), i + 1));
        }
        fence = track_fence(fence, line);
    }
    if fence.is_some() {
        return Err(format!("{}: unterminated code fence", key.heading()));
    }
    Ok(())
}

/// Splits `**Key:** value`, `- Key: value` and similar field lines.
pub fn field_of(line: &str) -> Option<(&str, &str)> {
    let mut rest = line.trim_start();
    rest = rest.strip_prefix("- ").or_else(|| rest.strip_prefix("* ")).unwrap_or(rest).trim_start();
    let bold = rest.starts_with("**");
    if bold {
        rest = &rest[2..];
    }
    let colon = rest.find(':')?;
    let key = rest[..colon].trim();
    if key.is_empty() || !key.chars().all(|c| c.is_alphanumeric() || c == ' ' || c == '_') {
        return None;
    }
    let mut value = &rest[colon + 1..];
    if bold {
        value = value.strip_prefix("**")?;
    }
    Some((key, value.trim()))
}

/// A Symbolic API patch that sets a Status without naming the File it belongs
/// to would clobber the whole section.
pub fn is_partial_api_patch(content: &str) -> bool {
    let mut has_status = false;
    let mut has_file = false;
    for line in content.lines() {
        if let Some((key, _)) = field_of(line) {
            match key.to_ascii_lowercase().as_str() {
                "status" => has_status = true,
                "file" | "file path" => has_file = true,
                _ => {}
            }
        }
    }
    has_status && !has_file
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActionOp {
    Add,
    Update,
}

impl fmt::Display for ActionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionOp::Add => "ADD",
            ActionOp::Update => "UPDATE",
        })
    }
}

/// A single mutation `⟨op, section, content⟩`.
///
/// `UPDATE` replaces the section body with `content`; `ADD` appends the
/// content lines to the existing body.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContractAction {
    pub op: ActionOp,
    pub section: SectionKey,
    pub content: String,
}

impl ContractAction {
    pub fn update(section: SectionKey, content: impl Into<String>) -> Self {
        Self { op: ActionOp::Update, section, content: content.into() }
    }

    pub fn add(section: SectionKey, content: impl Into<String>) -> Self {
        Self { op: ActionOp::Add, section, content: content.into() }
    }

    fn apply_to(&self, sections: &mut Sections) -> Result<(), RejectReason> {
        if self.section == SectionKey::SymbolicApiSpecifications && is_partial_api_patch(&self.content) {
            return Err(RejectReason::PartialPatch);
        }
        let incoming = body_lines(&self.content);
        let lines = match self.op {
            ActionOp::Update => incoming,
            ActionOp::Add => {
                let mut lines = sections.get(self.section).to_vec();
                lines.extend(incoming);
                trim_blank_edges(lines)
            }
        };
        check_body(self.section, &lines).map_err(RejectReason::InvalidContent)?;
        sections.set(self.section, lines);
        Ok(())
    }
}

/// Validates a proposed section map before it replaces the current one.
pub trait ContractGuard {
    fn check(&self, before: &Sections, after: &Sections) -> Result<(), Vec<String>>;
}

/// Accepts everything. Used while a draft is still being assembled.
pub struct NoGuard;

impl ContractGuard for NoGuard {
    fn check(&self, _before: &Sections, _after: &Sections) -> Result<(), Vec<String>> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    KernelViolation(Vec<String>),
    PartialPatch,
    InvalidContent(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::KernelViolation(v) => write!(f, "kernel violation: {}", v.join("; ")),
            RejectReason::PartialPatch => {
                f.write_str("partial Symbolic API patch: Status given without the File it belongs to")
            }
            RejectReason::InvalidContent(msg) => write!(f, "invalid content: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action rejected: {reason}")]
pub struct Rejection {
    pub reason: RejectReason,
}

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("malformed contract template: {0}")]
    MalformedTemplate(String),
    #[error("contract io: {0}")]
    Io(#[from] std::io::Error),
    #[error("contract journal: {0}")]
    Journal(String),
}

/// The contract value: current sections, revision counter and the base
/// snapshot captured at the last layer commit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LanguageContract {
    sections: Sections,
    base: Sections,
    revision: u64,
}

impl LanguageContract {
    /// Builds a revision-0 contract from a template document.
    pub fn new(template: &str) -> Result<Self, ContractError> {
        Ok(Self::from_sections(Sections::parse(template)?))
    }

    pub fn from_sections(sections: Sections) -> Self {
        Self { base: sections.clone(), sections, revision: 0 }
    }

    /// The seven empty sections.
    pub fn skeleton() -> Self {
        Self::from_sections(Sections::empty())
    }

    pub fn parse(doc: &str) -> Result<Self, ContractError> {
        Self::new(doc)
    }

    pub fn render(&self) -> String {
        self.sections.render()
    }

    pub fn sections(&self) -> &Sections {
        &self.sections
    }

    pub fn section(&self, key: SectionKey) -> &[String] {
        self.sections.get(key)
    }

    pub fn base(&self) -> &Sections {
        &self.base
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn sha256(&self) -> String {
        self.sections.sha256()
    }

    /// `C_{t+1} = T(C_t, a_t)`. On rejection `self` is untouched.
    pub fn apply_action(
        &self,
        action: &ContractAction,
        guard: &dyn ContractGuard,
    ) -> Result<LanguageContract, Rejection> {
        self.apply_batch(std::slice::from_ref(action), guard)
    }

    /// Applies several actions as one transaction, validating only the final
    /// state. The revision advances once per action.
    pub fn apply_batch(
        &self,
        actions: &[ContractAction],
        guard: &dyn ContractGuard,
    ) -> Result<LanguageContract, Rejection> {
        let mut next = self.sections.clone();
        for action in actions {
            action.apply_to(&mut next).map_err(|reason| Rejection { reason })?;
        }
        guard.check(&self.sections, &next).map_err(|v| Rejection { reason: RejectReason::KernelViolation(v) })?;
        Ok(LanguageContract { sections: next, base: self.base.clone(), revision: self.revision + actions.len() as u64 })
    }

    /// Replaces all sections at once (a merged layer), bumping the revision
    /// and resetting the base snapshot.
    pub(crate) fn with_merged(&self, sections: Sections) -> LanguageContract {
        LanguageContract { base: sections.clone(), sections, revision: self.revision + 1 }
    }

    /// Captures the current sections as the new base coordinate system.
    pub fn seal(&self) -> LanguageContract {
        LanguageContract { base: self.sections.clone(), sections: self.sections.clone(), revision: self.revision }
    }
}

impl fmt::Display for LanguageContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// One record of the append-only contract journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JournalRecord {
    Action { revision: u64, op: ActionOp, section: SectionKey, content_sha256: String },
    Merge { revision: u64, sections_sha256: String },
    Seal { revision: u64, base_sha256: String },
}

impl JournalRecord {
    pub fn action(revision: u64, action: &ContractAction) -> Self {
        JournalRecord::Action {
            revision,
            op: action.op,
            section: action.section,
            content_sha256: sha256_hex(action.content.as_bytes()),
        }
    }

    pub fn revision(&self) -> u64 {
        match self {
            JournalRecord::Action { revision, .. }
            | JournalRecord::Merge { revision, .. }
            | JournalRecord::Seal { revision, .. } => *revision,
        }
    }
}

/// On-disk layout: `<stem>.contract.md`, `<stem>.base.contract.md` and the
/// sidecar `<stem>.journal.jsonl`.
#[derive(Debug, Clone)]
pub struct ContractFiles {
    pub contract: PathBuf,
    pub base: PathBuf,
    pub journal: PathBuf,
}

impl ContractFiles {
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        Self {
            contract: dir.join(format!("{stem}.contract.md")),
            base: dir.join(format!("{stem}.base.contract.md")),
            journal: dir.join(format!("{stem}.journal.jsonl")),
        }
    }

    /// The sidecar paths belonging to an existing `*.contract.md` file.
    pub fn for_contract(path: &Path) -> Self {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("contract.contract.md");
        let stem = name.strip_suffix(".contract.md").unwrap_or(name);
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::in_dir(dir, stem)
    }

    pub fn save(&self, contract: &LanguageContract, journal: &[JournalRecord]) -> Result<(), ContractError> {
        fs::write(&self.contract, contract.render())?;
        fs::write(&self.base, contract.base().render())?;
        let mut file = fs::File::create(&self.journal)?;
        for record in journal {
            let line = serde_json::to_string(record).map_err(|e| ContractError::Journal(e.to_string()))?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }

    /// Loads a contract; the journal and base files are optional.
    pub fn load(&self) -> Result<LanguageContract, ContractError> {
        let sections = Sections::parse(&fs::read_to_string(&self.contract)?)?;
        let base = match fs::read_to_string(&self.base) {
            Ok(text) => Sections::parse(&text)?,
            Err(_) => sections.clone(),
        };
        let mut revision = 0;
        if let Ok(text) = fs::read_to_string(&self.journal) {
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let record: JournalRecord =
                    serde_json::from_str(line).map_err(|e| ContractError::Journal(format!("line {}: {e}", i + 1)))?;
                revision = revision.max(record.revision());
            }
        }
        Ok(LanguageContract { sections, base, revision })
    }
}
