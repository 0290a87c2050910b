//! Agent roles, the tagged response format, prompt assembly and the
//! completion backends.

mod backend;
mod prompt;
mod synthesis;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::contract::{is_partial_api_patch, ActionOp, ContractAction, SectionKey};

pub use backend::{
    Backend, BackendError, CompletionRequest, RecordingBackend, RemoteBackend, RemoteConfig, ScriptedBackend,
    TranscriptRecord, API_KEY_ENV,
};
pub use prompt::{build_prompt, AgentSettings, ContractView, PromptBundle, PromptError};
pub use synthesis::{synthesize_contract, Synthesis, SynthesisError, SYNTHESIS_TASK};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", content = "owner", rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
    Worker(String),
    Critic,
}

impl Role {
    /// The transcript key of the role.
    pub fn key(&self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
            Role::Worker(_) => "worker",
            Role::Critic => "critic",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Worker(owner) => write!(f, "worker({owner})"),
            other => f.write_str(other.key()),
        }
    }
}

/// The user's raw intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSpec(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("intent is empty")]
pub struct EmptyIntent;

impl IntentSpec {
    pub fn new(text: impl Into<String>) -> Result<Self, EmptyIntent> {
        let text = text.into();
        if text.trim().is_empty() {
            Err(EmptyIntent)
        } else {
            Ok(Self(text))
        }
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentResponse {
    pub thinking: String,
    /// The output block without artifacts and verdict line.
    pub output: String,
    pub actions: Vec<ContractAction>,
    pub artifacts: Vec<Artifact>,
    pub verdict: Option<Verdict>,
    /// Verdict-like lines that could not be read.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ParseError {
    #[error("response has no <output> block")]
    MissingOutput,
    #[error("malformed document_action array: {0}")]
    MalformedActions(String),
    #[error("unknown section key `{0}`")]
    UnknownSection(String),
    #[error("partial Symbolic API patch: Status without File")]
    PartialPatch,
    #[error("unterminated file artifact `{0}`")]
    UnterminatedArtifact(String),
}

const FILE_MARKER: &str = "# FILE:";
const VERDICT_MARKER: &str = "VERDICT:";

fn tag_block<'a>(raw: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = raw.find(&open)? + open.len();
    let end = raw[start..].find(&close).map(|e| start + e).unwrap_or(raw.len());
    Some(&raw[start..end])
}

pub fn parse_response(raw: &str) -> Result<AgentResponse, ParseError> {
    let output = tag_block(raw, "output").ok_or(ParseError::MissingOutput)?;
    let thinking = tag_block(raw, "thinking").unwrap_or("").trim().to_string();
    let actions = match tag_block(raw, "document_action") {
        Some(block) if !block.trim().is_empty() => parse_actions(block)?,
        _ => Vec::new(),
    };

    let mut text = Vec::new();
    let mut artifacts = Vec::new();
    let mut verdict = None;
    let mut warnings = Vec::new();
    let lines: Vec<&str> = output.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let ticks = line.trim_start().chars().take_while(|c| *c == '`').count();
        let header = lines.get(i + 1).map(|l| l.trim());
        if ticks >= 3 && header.is_some_and(|h| h.starts_with(FILE_MARKER)) {
            let path = header.unwrap()[FILE_MARKER.len()..].trim().to_string();
            let close = (i + 2..lines.len()).find(|&j| {
                let t = lines[j].trim();
                t.len() >= ticks && t.chars().all(|c| c == '`')
            });
            let Some(close) = close else { return Err(ParseError::UnterminatedArtifact(path)) };
            let mut body = lines[i + 2..close].join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            artifacts.push(Artifact { path, body });
            i = close + 1;
            continue;
        }
        if let Some(rest) = line.trim().strip_prefix(VERDICT_MARKER) {
            let rest = rest.trim();
            let parsed = if rest == "PASS" {
                Some(Verdict::Pass)
            } else {
                rest.strip_prefix("FAIL").map(|r| Verdict::Fail(r.trim().to_string()))
            };
            match parsed {
                Some(v) if verdict.is_none() => verdict = Some(v),
                Some(_) => warnings.push("more than one verdict line; the first one counts".into()),
                None => warnings.push(format!("unreadable verdict `{}`", line.trim())),
            }
            i += 1;
            continue;
        }
        text.push(line);
        i += 1;
    }

    Ok(AgentResponse { thinking, output: text.join("\n").trim().to_string(), actions, artifacts, verdict, warnings })
}

fn op_of(kind: &str) -> Result<ActionOp, ParseError> {
    match kind.trim().to_ascii_lowercase().as_str() {
        "add" => Ok(ActionOp::Add),
        "update" | "update|add" => Ok(ActionOp::Update),
        other => Err(ParseError::MalformedActions(format!("unknown action type `{other}`"))),
    }
}

fn content_text(v: &Value) -> Result<String, ParseError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Array(items) => items
            .iter()
            .map(|i| i.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .map(|l| l.join("\n"))
            .ok_or_else(|| ParseError::MalformedActions("section body array must hold strings".into())),
        _ => Err(ParseError::MalformedActions("section body must be a string".into())),
    }
}

fn section_of(name: &str) -> Result<SectionKey, ParseError> {
    SectionKey::from_name(name).ok_or_else(|| ParseError::UnknownSection(name.to_string()))
}

/// Reads the `document_action` JSON array. Each object carries a `type`
/// and either a `section` with string `content`, an object `content` keyed
/// by section name, or a whole markdown document as `content`.
pub fn parse_actions(block: &str) -> Result<Vec<ContractAction>, ParseError> {
    let value: Value = serde_json::from_str(block.trim()).map_err(|e| ParseError::MalformedActions(e.to_string()))?;
    let items = value.as_array().ok_or_else(|| ParseError::MalformedActions("expected a JSON array".into()))?;
    let mut out = Vec::new();
    for item in items {
        let obj = item.as_object().ok_or_else(|| ParseError::MalformedActions("expected action objects".into()))?;
        let kind = obj
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| ParseError::MalformedActions("action lacks `type`".into()))?;
        let op = op_of(kind)?;
        let content =
            obj.get("content").ok_or_else(|| ParseError::MalformedActions("action lacks `content`".into()))?;
        match (obj.get("section").and_then(Value::as_str), content) {
            (Some(section), content) => {
                out.push(ContractAction { op, section: section_of(section)?, content: content_text(content)? });
            }
            (None, Value::Object(map)) => {
                let mut parsed = map
                    .iter()
                    .map(|(k, v)| Ok(ContractAction { op, section: section_of(k)?, content: content_text(v)? }))
                    .collect::<Result<Vec<_>, ParseError>>()?;
                parsed.sort_by_key(|a| a.section);
                out.extend(parsed);
            }
            (None, Value::String(doc)) => out.extend(document_actions(op, doc)?),
            (None, _) => return Err(ParseError::MalformedActions("action lacks `section`".into())),
        }
    }
    if out.iter().any(|a| a.section == SectionKey::SymbolicApiSpecifications && is_partial_api_patch(&a.content)) {
        return Err(ParseError::PartialPatch);
    }
    Ok(out)
}

/// Splits a full markdown document into one action per section heading.
fn document_actions(op: ActionOp, doc: &str) -> Result<Vec<ContractAction>, ParseError> {
    let mut out: Vec<ContractAction> = Vec::new();
    let mut fence = false;
    for line in doc.lines() {
        let t = line.trim_start();
        if t.starts_with("```") {
            fence = !fence;
        }
        if !fence && t.starts_with('#') {
            let title = t.trim_start_matches('#').trim();
            if let Some(key) = SectionKey::from_name(title) {
                out.push(ContractAction { op, section: key, content: String::new() });
                continue;
            }
            if t.starts_with("## ") {
                return Err(ParseError::UnknownSection(title.to_string()));
            }
            if out.is_empty() {
                continue;
            }
        }
        if let Some(last) = out.last_mut() {
            last.content.push_str(line);
            last.content.push('\n');
        }
    }
    if out.is_empty() {
        return Err(ParseError::MalformedActions("document content names no section".into()));
    }
    Ok(out)
}

fn fence_for(body: &str) -> String {
    let longest = body.lines().map(|l| l.trim().chars().take_while(|c| *c == '`').count()).max().unwrap_or(0);
    "`".repeat(longest.max(2) + 1)
}

fn language_of(path: &str) -> &'static str {
    match path.rsplit_once('.').map(|(_, e)| e) {
        Some("py") => "python",
        Some("js") => "javascript",
        Some("ts") => "typescript",
        Some("rs") => "rust",
        Some("json") => "json",
        Some("md") => "markdown",
        _ => "",
    }
}

/// Inverse of [`parse_response`] for well-formed responses.
pub fn format_response(r: &AgentResponse) -> String {
    let mut out = String::new();
    out.push_str("<thinking>\n");
    out.push_str(&r.thinking);
    out.push_str("\n</thinking>\n<output>\n");
    out.push_str(&r.output);
    out.push('\n');
    for a in &r.artifacts {
        let fence = fence_for(&a.body);
        out.push_str(&format!("{fence}{}\n{FILE_MARKER} {}\n", language_of(&a.path), a.path));
        out.push_str(&a.body);
        if !a.body.is_empty() && !a.body.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(&fence);
        out.push('\n');
    }
    match &r.verdict {
        Some(Verdict::Pass) => out.push_str("VERDICT: PASS\n"),
        Some(Verdict::Fail(reason)) => out.push_str(&format!("VERDICT: FAIL {reason}\n")),
        None => {}
    }
    out.push_str("</output>\n");
    if !r.actions.is_empty() {
        let arr: Vec<Value> = r
            .actions
            .iter()
            .map(|a| {
                serde_json::json!({
                    "type": match a.op { ActionOp::Add => "add", ActionOp::Update => "update" },
                    "section": a.section.heading(),
                    "content": a.content,
                })
            })
            .collect();
        out.push_str("<document_action>\n");
        out.push_str(&serde_json::to_string_pretty(&arr).expect("json"));
        out.push_str("\n</document_action>\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_add_maps_to_update() {
        let raw = "<thinking>t</thinking><output>done</output><document_action>[{\"type\":\"update|add\",\"section\":\"Constraints\",\"content\":\"- offline only\"}]</document_action>";
        let r = parse_response(raw).unwrap();
        assert_eq!(r.actions, vec![ContractAction::update(SectionKey::Constraints, "- offline only")]);
        assert_eq!(r.output, "done");
    }

    #[test]
    fn missing_output() {
        assert_eq!(parse_response("<thinking>x</thinking>"), Err(ParseError::MissingOutput));
    }

    #[test]
    fn clobber_guard() {
        let raw = r#"<output>x</output><document_action>[{"type":"update","section":"Symbolic API Specifications","content":"* **Status:** DONE"}]</document_action>"#;
        assert_eq!(parse_response(raw), Err(ParseError::PartialPatch));
    }

    #[test]
    fn object_content_expands_in_section_order() {
        let raw = r#"<output>x</output><document_action>[{"type":"add","content":{"Constraints":"- c","Project Overview":"o"}}]</document_action>"#;
        let r = parse_response(raw).unwrap();
        let keys: Vec<_> = r.actions.iter().map(|a| a.section).collect();
        assert_eq!(keys, [SectionKey::ProjectOverview, SectionKey::Constraints]);
        assert!(r.actions.iter().all(|a| a.op == ActionOp::Add));
    }

    #[test]
    fn whole_document_content() {
        let raw = "<output>x</output><document_action>[{\"type\":\"add\",\"content\":\"# Requirements Document\\n## Project Overview\\nA game.\\n## Constraints\\n- none\\n\"}]</document_action>";
        let r = parse_response(raw).unwrap();
        assert_eq!(r.actions.len(), 2);
        assert_eq!(r.actions[0].content, "A game.\n");
    }

    #[test]
    fn unknown_section() {
        let raw =
            r#"<output>x</output><document_action>[{"type":"add","section":"Budget","content":"x"}]</document_action>"#;
        assert_eq!(parse_response(raw), Err(ParseError::UnknownSection("Budget".into())));
    }

    #[test]
    fn artifacts_and_verdicts() {
        let raw = "<output>\nWrote it.\n```python\n# FILE: core/board.py\nclass Board:\n    pass\n```\nVERDICT: FAIL missing size\n</output>";
        let r = parse_response(raw).unwrap();
        assert_eq!(
            r.artifacts,
            vec![Artifact { path: "core/board.py".into(), body: "class Board:\n    pass\n".into() }]
        );
        assert_eq!(r.verdict, Some(Verdict::Fail("missing size".into())));
        assert_eq!(r.output, "Wrote it.");
        assert_eq!(r.thinking, "");

        let odd = parse_response("<output>VERDICT: MAYBE</output>").unwrap();
        assert_eq!(odd.verdict, None);
        assert_eq!(odd.warnings.len(), 1);
    }

    #[test]
    fn round_trip() {
        let r = AgentResponse {
            thinking: "Plan the board.".into(),
            output: "Implemented the board.\nAll signatures follow the contract.".into(),
            actions: vec![
                ContractAction::update(SectionKey::GlobalSharedKnowledge, "- BOARD_SIZE = 15"),
                ContractAction::add(SectionKey::Constraints, "- pure python"),
            ],
            artifacts: vec![
                Artifact { path: "core/board.py".into(), body: "```\nnested fence in a string\n```\n".into() },
                Artifact { path: "empty.py".into(), body: String::new() },
            ],
            verdict: Some(Verdict::Pass),
            warnings: vec![],
        };
        assert_eq!(parse_response(&format_response(&r)).unwrap(), r);
    }
}
