//! Two-stage contract initialization: a generator drafts, a discriminator
//! rectifies once.

use thiserror::Error;

use super::{
    build_prompt, parse_response, AgentResponse, AgentSettings, Backend, BackendError, CompletionRequest, ContractView,
    IntentSpec, ParseError, PromptError, Role,
};
use crate::contract::{LanguageContract, NoGuard, Rejection, SectionKey};
use crate::kernel::{self, ProjectionError, Violation};

/// Transcript task key of both synthesis calls (layer 0).
pub const SYNTHESIS_TASK: &str = "contract";

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub contract: LanguageContract,
    pub generator: AgentResponse,
    pub discriminator: AgentResponse,
    /// What the checker reported on the draft.
    pub draft_findings: Vec<String>,
    /// Non-blocking findings left after rectification.
    pub remaining: Vec<Violation>,
    /// `(role, request sha256)` of both calls.
    pub requests: Vec<(String, String)>,
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("{role} call failed: {source}")]
    Backend { role: String, source: BackendError },
    #[error("{role} response unreadable: {source}")]
    Parse { role: String, source: ParseError },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{role} actions rejected: {source}")]
    Rejected { role: String, source: Rejection },
    #[error("generator produced no Symbolic API Specifications content")]
    NoApiContent,
    #[error("rectified contract does not project: {0}")]
    Projection(#[from] ProjectionError),
    #[error("rectified contract still has dependency cycles: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Cycle(Vec<Violation>),
}

fn call(
    backend: &dyn Backend,
    role: &Role,
    view: ContractView<'_>,
    intent: &IntentSpec,
    findings: &[String],
    settings: &AgentSettings,
    requests: &mut Vec<(String, String)>,
) -> Result<AgentResponse, SynthesisError> {
    let bundle = build_prompt(role, None, view, intent, None, findings, settings)?;
    let req = CompletionRequest {
        layer: 0,
        role: role.key().to_string(),
        task: SYNTHESIS_TASK.to_string(),
        model: settings.model.clone(),
        temperature: settings.temperature,
        system: bundle.system,
        user: bundle.user,
    };
    requests.push((role.key().to_string(), req.sha256()));
    let raw = backend.complete(&req).map_err(|source| SynthesisError::Backend { role: role.key().into(), source })?;
    parse_response(&raw).map_err(|source| SynthesisError::Parse { role: role.key().into(), source })
}

fn findings_of(contract: &LanguageContract) -> Vec<String> {
    match kernel::project(contract) {
        Err(e) => vec![e.to_string()],
        Ok(k) => kernel::validate(&k).iter().map(ToString::to_string).collect(),
    }
}

pub fn synthesize_contract(
    intent: &IntentSpec,
    backend: &dyn Backend,
    settings: &AgentSettings,
) -> Result<Synthesis, SynthesisError> {
    let mut requests = Vec::new();
    let skeleton = LanguageContract::skeleton();

    let generator =
        call(backend, &Role::Generator, ContractView::Full(&skeleton), intent, &[], settings, &mut requests)?;
    let draft = skeleton
        .apply_batch(&generator.actions, &NoGuard)
        .map_err(|source| SynthesisError::Rejected { role: "generator".into(), source })?;
    if draft.section(SectionKey::SymbolicApiSpecifications).iter().all(|l| l.trim().is_empty()) {
        return Err(SynthesisError::NoApiContent);
    }

    let draft_findings = findings_of(&draft);
    let discriminator = call(
        backend,
        &Role::Discriminator,
        ContractView::Full(&draft),
        intent,
        &draft_findings,
        settings,
        &mut requests,
    )?;
    let rectified = draft
        .apply_batch(&discriminator.actions, &NoGuard)
        .map_err(|source| SynthesisError::Rejected { role: "discriminator".into(), source })?;
    if rectified.section(SectionKey::SymbolicApiSpecifications).iter().all(|l| l.trim().is_empty()) {
        return Err(SynthesisError::NoApiContent);
    }

    let k = kernel::project(&rectified)?;
    let (cycles, remaining): (Vec<Violation>, Vec<Violation>) =
        kernel::validate(&k).into_iter().partition(|v| matches!(v, Violation::Cycle { .. }));
    if !cycles.is_empty() {
        return Err(SynthesisError::Cycle(cycles));
    }

    Ok(Synthesis { contract: rectified.seal(), generator, discriminator, draft_findings, remaining, requests })
}
