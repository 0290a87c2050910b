use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{IntentSpec, Role};
use crate::contract::LanguageContract;
use crate::scheduler::Task;
use crate::tokens::{ByteEstimator, TokenEstimator};

pub const DEFAULT_MODEL: &str = "gpt-4o-2024-11-20";
pub const DEFAULT_CONTEXT_LIMIT: usize = 16384;

#[derive(Clone)]
pub struct AgentSettings {
    pub model: String,
    pub temperature: f64,
    pub context_limit: usize,
    pub estimator: Arc<dyn TokenEstimator>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            context_limit: DEFAULT_CONTEXT_LIMIT,
            estimator: Arc::new(ByteEstimator),
        }
    }
}

impl std::fmt::Debug for AgentSettings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentSettings")
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .field("context_limit", &self.context_limit)
            .finish()
    }
}

/// What a dispatched agent sees of the shared state.
#[derive(Debug, Clone, Copy)]
pub enum ContractView<'a> {
    Full(&'a LanguageContract),
    /// Ablation: the raw intent plus the list of task paths.
    IntentOnly {
        paths: &'a [String],
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub role: Role,
    pub task: Option<String>,
    pub system: String,
    pub user: String,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt needs {tokens} tokens, limit is {limit}")]
    ContextOverflow { tokens: usize, limit: usize },
    #[error("{0} prompts need a task")]
    MissingTask(String),
    #[error("critic prompt for {0} has no implementation to review")]
    MissingImplementation(String),
}

const SYSTEM: &str = "\
You are one agent in a team that builds a software repository from a user request. \
The team shares a single Language Contract: a markdown document with seven sections. \
It is the only authoritative record of files, interfaces, types and dependencies. \
Never invent an interface that contradicts it.

Answer in three tagged blocks:
<thinking>your reasoning</thinking>
<output>a short summary of what you did, plus any file artifacts</output>
<document_action>optional JSON array of contract actions</document_action>

Contract actions look like {\"type\": \"update\", \"section\": \"Constraints\", \"content\": \"...\"}. \
`type` is `add` (append lines to the section) or `update` (replace the whole section body). \
Section names: Project Overview, User Stories (Features), Constraints, Directory Structure, \
Global Shared Knowledge, Dependency Relationships, Symbolic API Specifications. \
An update to Symbolic API Specifications must carry the complete section, File lines included; \
a patch that only changes a Status line is refused.";

const GENERATOR: &str = "\
Role: project planner. Turn the request into a first contract draft using `add` actions. \
Split the work into files. For every file write an entry in Symbolic API Specifications:

- **File:** `path/to/module.py`
  - **Owner:** <engineer role>
  - **Version:** 1
  - **Status:** TODO
  - **Class:** `ClassName`
    - **Attribute:** `name: type` - meaning
    - **Method:** `def name(param: type) -> type` - what it does
  - **Function:** `def name(param: type) -> type` - what it does

List module dependencies in Dependency Relationships as `a.py --> b.py` lines (dependent first). \
Keep the graph acyclic and use only builtin types or classes declared in the contract.";

const DISCRIMINATOR: &str = "\
Role: contract reviewer. You get the draft contract and the problems a checker found in it. \
Fix every reported problem in one pass with `update` actions that restate whole sections. \
Add missing docstrings, declare or replace unknown types, and break dependency cycles. \
Do not change anything that is not broken.";

const WORKER: &str = "\
Role: implementer. You write exactly one file, the one named in the task. \
You cannot see any other source file; rely on the contract for every interface you use. \
Implement all classes, attributes, methods and functions the contract lists for your file, \
with exactly those names and signatures, and no placeholders.

Return the complete file inside <output> as a fenced block whose first line is `# FILE: <path>`. \
If you need an interface the contract does not declare, say so in the summary.";

const CRITIC: &str = "\
Role: reviewer. Check the implementation of one file against the contract. \
Look for missing or renamed symbols, signature drift, stubs and logic errors. \
Finish <output> with one line: `VERDICT: PASS` or `VERDICT: FAIL <reason>`. \
A failure reason must tell the implementer what to change.";

fn role_prompt(role: &Role) -> &'static str {
    match role {
        Role::Generator => GENERATOR,
        Role::Discriminator => DISCRIMINATOR,
        Role::Worker(_) => WORKER,
        Role::Critic => CRITIC,
    }
}

fn render_view(view: &ContractView<'_>, intent: &IntentSpec) -> String {
    match view {
        ContractView::Full(c) => format!("## Language Contract\n\n{}", c.render()),
        ContractView::IntentOnly { paths } => {
            let mut s = format!("## User Request\n\n{}\n\n## Files\n\n", intent.text().trim());
            for p in paths.iter() {
                s.push_str(&format!("- {p}\n"));
            }
            s
        }
    }
}

/// Assembles the prompt for one dispatch. `implementation` is the body of
/// the task's own file; it is only used by critics.
pub fn build_prompt(
    role: &Role,
    task: Option<&Task>,
    view: ContractView<'_>,
    intent: &IntentSpec,
    implementation: Option<&str>,
    extra: &[String],
    settings: &AgentSettings,
) -> Result<PromptBundle, PromptError> {
    let system = format!("{SYSTEM}\n\n{}", role_prompt(role));
    let mut user = String::new();
    match role {
        Role::Generator => {
            user.push_str(&format!("## User Request\n\n{}\n\n", intent.text().trim()));
            user.push_str("## Contract Template\n\n");
            user.push_str(&LanguageContract::skeleton().render());
        }
        Role::Discriminator => {
            user.push_str(&format!("## User Request\n\n{}\n\n", intent.text().trim()));
            user.push_str(&render_view(&view, intent));
            user.push_str("\n## Checker Findings\n\n");
            if extra.is_empty() {
                user.push_str("- none\n");
            }
            for v in extra {
                user.push_str(&format!("- {v}\n"));
            }
        }
        Role::Worker(owner) => {
            let task = task.ok_or_else(|| PromptError::MissingTask(role.to_string()))?;
            user.push_str(&render_view(&view, intent));
            user.push_str(&format!(
                "\n## Task\n\nYou are the {owner}. Implement `{}` (current status {}).\n",
                task.file_path, task.status
            ));
            if !task.feedback.is_empty() {
                user.push_str("\n## Feedback To Address\n\n");
                for note in &task.feedback {
                    user.push_str(&format!("- {note}\n"));
                }
            }
        }
        Role::Critic => {
            let task = task.ok_or_else(|| PromptError::MissingTask(role.to_string()))?;
            let body = implementation.ok_or_else(|| PromptError::MissingImplementation(task.file_path.clone()))?;
            user.push_str(&render_view(&view, intent));
            user.push_str(&format!("\n## Task\n\nReview `{}`.\n\n## Implementation\n\n", task.file_path));
            let fence = if body.contains("```") { "~~~~" } else { "```" };
            user.push_str(&format!("{fence}\n{body}"));
            if !body.ends_with('\n') {
                user.push('\n');
            }
            user.push_str(fence);
            user.push('\n');
        }
    }
    let tokens = settings.estimator.count(&system) + settings.estimator.count(&user);
    if tokens > settings.context_limit {
        return Err(PromptError::ContextOverflow { tokens, limit: settings.context_limit });
    }
    Ok(PromptBundle { role: role.clone(), task: task.map(|t| t.id.clone()), system, user, tokens })
}
