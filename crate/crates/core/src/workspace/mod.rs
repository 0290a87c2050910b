//! The generated repository `R` and source-level symbol extraction.

mod imports;
mod python;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::sha256_hex;

pub use imports::{resolve_imports, ImportCheck};
pub use python::PythonAnalyzer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("path `{path}` escapes the workspace: {reason}")]
pub struct PathViolation {
    pub path: String,
    pub reason: &'static str,
}

/// Forward slashes, no `.`/empty segments. `..`, absolute and empty paths
/// are violations.
pub fn normalize_path(raw: &str) -> Result<String, PathViolation> {
    let violation = |reason| PathViolation { path: raw.to_string(), reason };
    let unified = raw.trim().replace('\\', "/");
    if unified.starts_with('/') {
        return Err(violation("absolute path"));
    }
    let bytes = unified.as_bytes();
    if bytes.len() >= 2 && bytes[1] == b':' && bytes[0].is_ascii_alphabetic() {
        return Err(violation("absolute path"));
    }
    let mut parts = Vec::new();
    for seg in unified.split('/') {
        match seg {
            "" | "." => {}
            ".." => return Err(violation("parent segment")),
            s => parts.push(s),
        }
    }
    if parts.is_empty() {
        return Err(violation("empty path"));
    }
    Ok(parts.join("/"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileUnit {
    pub path: String,
    pub body: String,
    pub writer: String,
    pub layer: u32,
}

impl FileUnit {
    pub fn sha256(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }

    pub fn extension(&self) -> &str {
        let name = self.path.rsplit('/').next().unwrap_or(&self.path);
        name.rsplit_once('.').map(|(_, ext)| ext).unwrap_or("")
    }
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Path(#[from] PathViolation),
    #[error("workspace io at {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Repository state: normalized path -> unit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workspace {
    units: BTreeMap<String, FileUnit>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn commit_file(
        &mut self,
        path: &str,
        body: impl Into<String>,
        writer: impl Into<String>,
        layer: u32,
    ) -> Result<&FileUnit, PathViolation> {
        let path = normalize_path(path)?;
        let unit = FileUnit { path: path.clone(), body: body.into(), writer: writer.into(), layer };
        self.units.insert(path.clone(), unit);
        Ok(&self.units[&path])
    }

    pub fn get(&self, path: &str) -> Option<&FileUnit> {
        match normalize_path(path) {
            Ok(p) => self.units.get(&p),
            Err(_) => None,
        }
    }

    pub fn units(&self) -> impl Iterator<Item = &FileUnit> {
        self.units.values()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.units.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// path -> sha256 of the body.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.units.values().map(|u| (u.path.clone(), u.sha256())).collect()
    }

    /// Reads every regular file below `dir`, skipping hidden files and
    /// directories. Writer is `disk`, layer 0. Non UTF-8 content is kept
    /// lossily and later reported as unanalyzable.
    pub fn load_dir(dir: &Path) -> Result<Workspace, WorkspaceError> {
        let mut ws = Workspace::new();
        let io = |path: &Path, source| WorkspaceError::Io { path: path.display().to_string(), source };
        let visible = |e: &walkdir::DirEntry| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.');
        for entry in walkdir::WalkDir::new(dir).sort_by_file_name().into_iter().filter_entry(visible) {
            let entry = entry.map_err(|e| {
                let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                WorkspaceError::Io { path, source: e.into() }
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(dir).expect("walkdir stays under root");
            let bytes = fs::read(entry.path()).map_err(|e| io(entry.path(), e))?;
            let body = String::from_utf8_lossy(&bytes).into_owned();
            ws.commit_file(&rel.to_string_lossy(), body, "disk", 0)?;
        }
        Ok(ws)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), WorkspaceError> {
        let io = |path: &Path, source| WorkspaceError::Io { path: path.display().to_string(), source };
        for unit in self.units.values() {
            let target = dir.join(&unit.path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            fs::write(&target, &unit.body).map_err(|e| io(&target, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtractedParam {
    pub name: String,
    pub type_name: Option<String>,
    pub has_default: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractedMethod {
    pub name: String,
    pub params: Vec<ExtractedParam>,
    pub return_type: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractedAttribute {
    pub name: String,
    pub type_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractedClass {
    pub name: String,
    pub attributes: Vec<ExtractedAttribute>,
    pub methods: Vec<ExtractedMethod>,
    pub line: usize,
}

impl ExtractedClass {
    pub fn attribute(&self, name: &str) -> Option<&ExtractedAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&ExtractedMethod> {
        self.methods.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ImportTarget {
    WholeModule,
    Symbol(String),
    /// `from m import *`
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Import {
    /// Dotted module path as written, without leading dots.
    pub module: String,
    /// Number of leading dots of a relative import.
    pub level: usize,
    pub target: ImportTarget,
    pub line: usize,
}

/// `value.member` where `value` is known to hold an instance of `class`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemberUse {
    pub class: String,
    pub member: String,
    pub call: bool,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractedSymbols {
    pub classes: Vec<ExtractedClass>,
    pub functions: Vec<ExtractedMethod>,
    pub imports: Vec<Import>,
    /// Names bound by module-level assignments.
    pub variables: Vec<String>,
    pub member_uses: Vec<MemberUse>,
    pub unanalyzable: bool,
}

impl ExtractedSymbols {
    pub fn unanalyzable() -> Self {
        Self { unanalyzable: true, ..Self::default() }
    }

    pub fn class(&self, name: &str) -> Option<&ExtractedClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&ExtractedMethod> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// True when the module binds `name` at top level.
    pub fn defines(&self, name: &str) -> bool {
        self.class(name).is_some() || self.function(name).is_some() || self.variables.iter().any(|v| v == name)
    }
}

/// Source-language symbol extractor.
pub trait Analyzer: Send + Sync {
    fn extract(&self, body: &str) -> ExtractedSymbols;
}

/// Analyzers keyed by file extension.
pub struct AnalyzerRegistry {
    by_ext: BTreeMap<String, Box<dyn Analyzer>>,
}

impl Default for AnalyzerRegistry {
    fn default() -> Self {
        let mut r = Self { by_ext: BTreeMap::new() };
        r.register("py", Box::new(PythonAnalyzer));
        r
    }
}

impl AnalyzerRegistry {
    pub fn register(&mut self, ext: &str, analyzer: Box<dyn Analyzer>) {
        self.by_ext.insert(ext.to_string(), analyzer);
    }

    pub fn supports(&self, path: &str) -> bool {
        let ext = path.rsplit('/').next().and_then(|n| n.rsplit_once('.')).map(|(_, e)| e);
        ext.is_some_and(|e| self.by_ext.contains_key(e))
    }

    /// None when no analyzer handles the extension.
    pub fn extract(&self, unit: &FileUnit) -> Option<ExtractedSymbols> {
        let analyzer = self.by_ext.get(unit.extension())?;
        if is_undecodable(&unit.body) {
            return Some(ExtractedSymbols::unanalyzable());
        }
        Some(analyzer.extract(&unit.body))
    }
}

fn is_undecodable(body: &str) -> bool {
    body.contains('\0') || body.contains('\u{FFFD}')
}

/// Extraction with the default registry. Files with an unknown extension
/// yield empty symbol sets.
pub fn extract_symbols(unit: &FileUnit) -> ExtractedSymbols {
    AnalyzerRegistry::default().extract(unit).unwrap_or_default()
}
