//! Static repository metrics, the overall score and token reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::LanguageContract;
use crate::tokens::TokenEstimator;
use crate::workspace::{resolve_imports, ImportCheck, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// F1 of the generated file set against the reference set.
pub fn s_arch(generated: &BTreeSet<String>, reference: &BTreeSet<String>) -> Fraction {
    let total = generated.len() + reference.len();
    if total == 0 {
        return Fraction { value: 1.0, warning: Some("both file sets are empty; S_arch defined as 1".into()) };
    }
    let common = generated.intersection(reference).count();
    Fraction { value: 2.0 * common as f64 / total as f64, warning: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkScore {
    pub value: f64,
    pub valid: usize,
    pub total: usize,
    pub invalid: Vec<ImportCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Fraction of internal imports that resolve.
pub fn s_link(ws: &Workspace) -> LinkScore {
    let checks = resolve_imports(ws);
    let total = checks.len();
    let valid = checks.iter().filter(|c| c.valid).count();
    let invalid: Vec<ImportCheck> = checks.into_iter().filter(|c| !c.valid).collect();
    if total == 0 {
        return LinkScore {
            value: 1.0,
            valid,
            total,
            invalid,
            warning: Some("no internal imports; S_link defined as 1".into()),
        };
    }
    LinkScore { value: valid as f64 / total as f64, valid, total, invalid, warning: None }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("score `{name}` = {value} is outside [0, 1]")]
pub struct ScoreRangeError {
    pub name: String,
    pub value: f64,
}

/// Mean of the three dynamic sub-scores, as a percentage.
pub fn s_overall(exec: f64, inter: f64, rule: f64) -> Result<f64, ScoreRangeError> {
    for (name, value) in [("exec", exec), ("inter", inter), ("rule", rule)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreRangeError { name: name.into(), value });
        }
    }
    Ok((exec + inter + rule) / 3.0 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub exec: f64,
    pub inter: f64,
    pub rule: f64,
}

#[derive(Debug, Error)]
pub enum ScoresError {
    #[error("scores file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scores file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scores file has no entry `{0}`")]
    MissingTask(String),
    #[error("scores file holds several tasks ({0}); pick one")]
    Ambiguous(String),
}

/// Reads `{exec, inter, rule}` or a map of task name to such objects.
pub fn read_scores(path: &Path, task: Option<&str>) -> Result<Scores, ScoresError> {
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if value.get("exec").is_some() {
        return Ok(serde_json::from_value(value)?);
    }
    let map: BTreeMap<String, Scores> = serde_json::from_value(value)?;
    match task {
        Some(t) => map.get(t).copied().ok_or_else(|| ScoresError::MissingTask(t.into())),
        None if map.len() == 1 => Ok(*map.values().next().unwrap_or(&Scores { exec: 0.0, inter: 0.0, rule: 0.0 })),
        None => Err(ScoresError::Ambiguous(map.keys().cloned().collect::<Vec<_>>().join(", "))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenReport {
    pub contract_tokens: usize,
    pub repo_tokens: usize,
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("contract has zero tokens; ratio undefined")]
pub struct RatioUndefined;

/// Tokens of the rendered contract against the sum over file bodies.
pub fn token_report(
    contract: &LanguageContract,
    ws: &Workspace,
    estimator: &dyn TokenEstimator,
) -> Result<TokenReport, RatioUndefined> {
    token_report_text(&contract.render(), ws.units().map(|u| u.body.as_str()), estimator)
}

pub fn token_report_text<'a>(
    contract: &str,
    files: impl IntoIterator<Item = &'a str>,
    estimator: &dyn TokenEstimator,
) -> Result<TokenReport, RatioUndefined> {
    let contract_tokens = estimator.count(contract);
    let repo_tokens = files.into_iter().map(|f| estimator.count(f)).sum();
    if contract_tokens == 0 {
        return Err(RatioUndefined);
    }
    Ok(TokenReport { contract_tokens, repo_tokens, compression_ratio: repo_tokens as f64 / contract_tokens as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_arch: Option<f64>,
    pub s_link: f64,
    pub internal_imports: usize,
    pub dangling_imports: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_exec: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_inter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_rule: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_overall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<TokenReport>,
    pub warnings: Vec<String>,
}

/// Reference manifest: one path per line, `#` comments and blanks skipped.
pub fn read_manifest(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| crate::workspace::normalize_path(l).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub passed: bool,
    /// Still running at the deadline.
    pub alive: bool,
    pub exit_code: Option<i32>,
    pub elapsed_ms: u128,
}

/// Starts `program args..` in `dir` and watches it for `keep_alive`. A run
/// passes if it is still alive at the deadline or exited cleanly.
pub fn exec_check(dir: &Path, program: &str, args: &[String], keep_alive: Duration) -> std::io::Result<ExecOutcome> {
    let start = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()?;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(ExecOutcome {
                passed: status.success(),
                alive: false,
                exit_code: status.code(),
                elapsed_ms: start.elapsed().as_millis(),
            });
        }
        if start.elapsed() >= keep_alive {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(ExecOutcome {
                passed: true,
                alive: true,
                exit_code: None,
                elapsed_ms: start.elapsed().as_millis(),
            });
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}
