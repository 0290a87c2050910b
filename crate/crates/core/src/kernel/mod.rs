//! The symbolic kernel `⟨N, Σ, Δ⟩` projected from a contract.
//!
//! `N` maps module ids to file paths, `Σ` holds every attribute and method
//! signature, `Δ` is the declared dependency graph. The kernel is what the
//! scheduler and the auditor reason over; agents only ever read the contract.
//!
//! API entries are written as nested field lines:
//!
//! ```text
//! - **File:** `entities/player.py`
//!   - **Owner:** Backend Engineer
//!   - **Version:** 1
//!   - **Status:** TODO
//!   - **Class:** `Player`
//!     - **Attribute:** `x: int` - Horizontal position.
//!     - **Method:** `def move(dx: int, dy: int) -> None` - Move by a delta.
//!   - **Function:** `def main() -> None` - Entry point.
//! ```

pub mod graph;
pub mod signature;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{field_of, ContractGuard, LanguageContract, SectionKey, Sections};
use crate::scheduler::{Task, TaskStatus};
use crate::workspace::normalize_path;

pub use graph::Adjacency;
pub use signature::{normalize_type, parse_signature, print_signature, MethodSig, Param, SignatureError};

/// Types that need no declaration.
pub const PRIMITIVE_TYPES: [&str; 11] =
    ["int", "float", "str", "bool", "None", "list", "dict", "tuple", "set", "any", "object"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub type_name: String,
    pub description: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSpec {
    pub sig: MethodSig,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub attributes: Vec<AttributeSpec>,
    pub methods: Vec<MethodSpec>,
    /// Body line of the `Class` field.
    pub line: usize,
    /// One past the last body line belonging to the class.
    pub end: usize,
}

impl ClassSpec {
    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodSpec> {
        self.methods.iter().find(|m| m.sig.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiSpecEntry {
    pub file_path: String,
    pub owner: String,
    pub version: u32,
    pub status: TaskStatus,
    pub classes: Vec<ClassSpec>,
    pub functions: Vec<MethodSpec>,
    pub line: usize,
    pub end: usize,
    pub version_line: Option<usize>,
}

impl ApiSpecEntry {
    pub fn class(&self, name: &str) -> Option<&ClassSpec> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&MethodSpec> {
        self.functions.iter().find(|f| f.sig.name == name)
    }

    fn signatures(&self) -> impl Iterator<Item = &MethodSig> {
        self.classes.iter().flat_map(|c| c.methods.iter()).chain(self.functions.iter()).map(|m| &m.sig)
    }
}

/// An entry in `Σ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Symbol {
    Attribute { type_name: String },
    Method { sig: MethodSig },
    Function { sig: MethodSig },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SymbolicKernel {
    pub entries: Vec<ApiSpecEntry>,
    /// `N`: module id -> file path.
    pub nodes: BTreeMap<String, String>,
    /// `Σ`: `path::Class.member` or `path::function` -> symbol.
    pub signatures: BTreeMap<String, Symbol>,
    /// `Δ`: declared edges, dependent -> dependency.
    pub dependencies: Adjacency,
    /// Edges implied by cross-entry type references. Informational only.
    pub derived: BTreeSet<(String, String)>,
    pub warnings: Vec<String>,
}

impl SymbolicKernel {
    pub fn entry(&self, path: &str) -> Option<&ApiSpecEntry> {
        self.entries.iter().find(|e| e.file_path == path)
    }

    /// The entry and class declaring a class name.
    pub fn find_class(&self, name: &str) -> Option<(&ApiSpecEntry, &ClassSpec)> {
        self.entries.iter().find_map(|e| e.class(name).map(|c| (e, c)))
    }

    pub fn class_names(&self) -> BTreeSet<&str> {
        self.entries.iter().flat_map(|e| e.classes.iter().map(|c| c.name.as_str())).collect()
    }

    pub fn topological_order(&self) -> Option<Vec<String>> {
        graph::topological_order(&self.dependencies)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ProjectionError {
    #[error("api spec line {line}: {message}")]
    Entry { line: usize, message: String },
    #[error("dependency edge names unknown module `{name}` (line {line})")]
    UnknownEdgeEndpoint { line: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Violation {
    Cycle { nodes: Vec<String> },
    TypeUndefined { symbol: String, type_name: String },
    Incomplete { file_path: String, reason: String },
}

impl Violation {
    /// Cycles and undefined types make a kernel invalid; incompleteness is
    /// a quality signal handled by rectification and feedback.
    pub fn is_blocking(&self) -> bool {
        !matches!(self, Violation::Incomplete { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { nodes } => write!(f, "CYCLE({})", nodes.join(", ")),
            Violation::TypeUndefined { symbol, type_name } => {
                write!(f, "TYPE_UNDEFINED({symbol}: {type_name})")
            }
            Violation::Incomplete { file_path, reason } => {
                write!(f, "INCOMPLETE({file_path}: {reason})")
            }
        }
    }
}

pub fn project(contract: &LanguageContract) -> Result<SymbolicKernel, ProjectionError> {
    project_sections(contract.sections())
}

pub fn project_sections(sections: &Sections) -> Result<SymbolicKernel, ProjectionError> {
    let mut entries = parse_entries(sections.get(SectionKey::SymbolicApiSpecifications))?;
    entries.sort_by(|a, b| a.file_path.cmp(&b.file_path));

    let mut kernel = SymbolicKernel::default();
    for entry in &entries {
        kernel.nodes.insert(entry.file_path.clone(), entry.file_path.clone());
        kernel.dependencies.insert(entry.file_path.clone(), BTreeSet::new());
        for class in &entry.classes {
            for attr in &class.attributes {
                kernel.signatures.insert(
                    format!("{}::{}.{}", entry.file_path, class.name, attr.name),
                    Symbol::Attribute { type_name: attr.type_name.clone() },
                );
            }
            for m in &class.methods {
                kernel.signatures.insert(
                    format!("{}::{}.{}", entry.file_path, class.name, m.sig.name),
                    Symbol::Method { sig: m.sig.clone() },
                );
            }
        }
        for func in &entry.functions {
            kernel
                .signatures
                .insert(format!("{}::{}", entry.file_path, func.sig.name), Symbol::Function { sig: func.sig.clone() });
        }
    }

    let (edges, warnings) = parse_edges(sections.get(SectionKey::DependencyRelationships));
    kernel.warnings = warnings;
    for edge in edges {
        let from = resolve_module(&kernel.nodes, &edge.from)
            .ok_or_else(|| ProjectionError::UnknownEdgeEndpoint { line: edge.line, name: edge.from.clone() })?;
        let to = resolve_module(&kernel.nodes, &edge.to)
            .ok_or_else(|| ProjectionError::UnknownEdgeEndpoint { line: edge.line, name: edge.to.clone() })?;
        kernel.dependencies.entry(from).or_default().insert(to);
    }

    let owners: BTreeMap<&str, &str> =
        entries.iter().flat_map(|e| e.classes.iter().map(move |c| (c.name.as_str(), e.file_path.as_str()))).collect();
    for entry in &entries {
        let types = entry
            .classes
            .iter()
            .flat_map(|c| c.attributes.iter().map(|a| a.type_name.as_str()))
            .chain(entry.signatures().flat_map(|s| s.type_names()));
        for ty in types {
            for token in signature::type_tokens(ty) {
                if let Some(&owner) = owners.get(token) {
                    if owner != entry.file_path {
                        kernel.derived.insert((entry.file_path.clone(), owner.to_string()));
                    }
                }
            }
        }
    }

    kernel.entries = entries;
    Ok(kernel)
}

/// All violations of the kernel; an empty list means valid.
pub fn validate(kernel: &SymbolicKernel) -> Vec<Violation> {
    let mut out: Vec<Violation> =
        graph::cycles(&kernel.dependencies).into_iter().map(|nodes| Violation::Cycle { nodes }).collect();

    let declared = kernel.class_names();
    let known = |ty: &str| PRIMITIVE_TYPES.contains(&ty) || declared.contains(ty);
    for entry in &kernel.entries {
        let mut check = |symbol: String, ty: &str| {
            for head in signature::head_symbols(ty) {
                if !known(head) {
                    out.push(Violation::TypeUndefined { symbol: symbol.clone(), type_name: head.to_string() });
                }
            }
        };
        for class in &entry.classes {
            for attr in &class.attributes {
                check(format!("{}::{}.{}", entry.file_path, class.name, attr.name), &attr.type_name);
            }
            for m in &class.methods {
                for ty in m.sig.type_names() {
                    check(format!("{}::{}.{}", entry.file_path, class.name, m.sig.name), ty);
                }
            }
        }
        for func in &entry.functions {
            for ty in func.sig.type_names() {
                check(format!("{}::{}", entry.file_path, func.sig.name), ty);
            }
        }

        let sigs: Vec<&MethodSig> = entry.signatures().collect();
        let declares_nothing = entry.classes.is_empty() && entry.functions.is_empty();
        if declares_nothing {
            out.push(Violation::Incomplete {
                file_path: entry.file_path.clone(),
                reason: "entry declares no classes or functions".into(),
            });
        } else if !sigs.is_empty() && sigs.iter().all(|s| s.docstring.trim().is_empty()) {
            out.push(Violation::Incomplete {
                file_path: entry.file_path.clone(),
                reason: "no method carries a docstring".into(),
            });
        }
    }
    out.sort();
    out.dedup();
    out
}

/// One task per kernel node, ordered by path.
pub fn tasks_of(kernel: &SymbolicKernel) -> Vec<Task> {
    kernel.entries.iter().map(|e| Task::new(e.file_path.clone(), e.owner.clone(), e.status)).collect()
}

/// Rejects transitions that introduce a cycle, an undefined type, or an
/// unprojectable API section. Violations already present before the action
/// do not block it.
pub struct KernelGuard;

impl ContractGuard for KernelGuard {
    fn check(&self, before: &Sections, after: &Sections) -> Result<(), Vec<String>> {
        let after_kernel = match project_sections(after) {
            Ok(k) => k,
            Err(e) => {
                return match project_sections(before) {
                    Err(_) => Ok(()),
                    Ok(_) => Err(vec![e.to_string()]),
                }
            }
        };
        let blocking = |k: &SymbolicKernel| -> BTreeSet<Violation> {
            validate(k).into_iter().filter(Violation::is_blocking).collect()
        };
        let existing = project_sections(before).map(|k| blocking(&k)).unwrap_or_default();
        let introduced: Vec<String> = blocking(&after_kernel).difference(&existing).map(ToString::to_string).collect();
        if introduced.is_empty() {
            Ok(())
        } else {
            Err(introduced)
        }
    }
}

fn entry_error(line: usize, message: impl Into<String>) -> ProjectionError {
    ProjectionError::Entry { line: line + 1, message: message.into() }
}

/// Splits a field value into its code part and trailing description:
/// `` `x: int` - Horizontal position `` -> (`x: int`, `Horizontal position`).
pub fn split_code_value(value: &str) -> (String, String) {
    let value = value.trim();
    if let Some(rest) = value.strip_prefix('`') {
        if let Some(close) = rest.find('`') {
            let code = rest[..close].trim().to_string();
            let desc =
                rest[close + 1..].trim().trim_start_matches(['-', '\u{2014}', '\u{2013}', ':']).trim().to_string();
            return (code, desc);
        }
    }
    for sep in [" - ", " \u{2014} ", " \u{2013} "] {
        if let Some(i) = value.find(sep) {
            return (unquote(&value[..i]), value[i + sep.len()..].trim().to_string());
        }
    }
    (unquote(value), String::new())
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    s.strip_prefix('"').and_then(|t| t.strip_suffix('"')).unwrap_or(s).trim().to_string()
}

fn parse_entries(lines: &[String]) -> Result<Vec<ApiSpecEntry>, ProjectionError> {
    let mut entries: Vec<ApiSpecEntry> = Vec::new();
    // Which list the last signature went to, for Listing-style `Docstring:` lines.
    let mut last_sig: Option<(bool, usize)> = None;

    for (i, line) in lines.iter().enumerate() {
        let Some((key, value)) = field_of(line) else { continue };
        let key = key.to_ascii_lowercase();
        if key == "file" || key == "file path" {
            let (raw, _) = split_code_value(value);
            let path = normalize_path(&raw).map_err(|e| entry_error(i, e.to_string()))?;
            if entries.iter().any(|e| e.file_path == path) {
                return Err(entry_error(i, format!("duplicate entry for `{path}`")));
            }
            if let Some(prev) = entries.last_mut() {
                prev.end = i;
                if let Some(c) = prev.classes.last_mut() {
                    c.end = i;
                }
            }
            entries.push(ApiSpecEntry {
                file_path: path,
                owner: String::new(),
                version: 1,
                status: TaskStatus::Todo,
                classes: Vec::new(),
                functions: Vec::new(),
                line: i,
                end: lines.len(),
                version_line: None,
            });
            last_sig = None;
            continue;
        }

        let known = matches!(
            key.as_str(),
            "owner"
                | "version"
                | "status"
                | "class"
                | "class name"
                | "attribute"
                | "method"
                | "signature"
                | "function"
                | "docstring"
        );
        if !known {
            continue;
        }
        let entry = entries.last_mut().ok_or_else(|| entry_error(i, format!("`{key}` field before any File entry")))?;

        match key.as_str() {
            "owner" => entry.owner = split_code_value(value).0,
            "version" => {
                let (raw, _) = split_code_value(value);
                entry.version = raw
                    .trim_start_matches(['v', 'V'])
                    .parse()
                    .map_err(|_| entry_error(i, format!("bad version `{raw}`")))?;
                entry.version_line = Some(i);
            }
            "status" => {
                let (raw, _) = split_code_value(value);
                entry.status =
                    raw.parse().map_err(|e: crate::scheduler::UnknownStatus| entry_error(i, e.to_string()))?;
            }
            "class" | "class name" => {
                let (name, _) = split_code_value(value);
                if !signature::is_identifier(&name) {
                    return Err(entry_error(i, format!("bad class name `{name}`")));
                }
                if entry.class(&name).is_some() {
                    return Err(entry_error(i, format!("duplicate class `{name}`")));
                }
                if let Some(c) = entry.classes.last_mut() {
                    c.end = i;
                }
                entry.classes.push(ClassSpec {
                    name,
                    attributes: Vec::new(),
                    methods: Vec::new(),
                    line: i,
                    end: lines.len(),
                });
                last_sig = None;
            }
            "attribute" => {
                let (code, description) = split_code_value(value);
                let (name, ty) =
                    code.split_once(':').ok_or_else(|| entry_error(i, format!("attribute `{code}` lacks a type")))?;
                let name = name.trim().to_string();
                let type_name = normalize_type(ty);
                if !signature::is_identifier(&name) || type_name.is_empty() {
                    return Err(entry_error(i, format!("bad attribute `{code}`")));
                }
                let class = entry.classes.last_mut().ok_or_else(|| entry_error(i, "attribute outside a class"))?;
                if class.attribute(&name).is_some() {
                    return Err(entry_error(i, format!("duplicate attribute `{}.{name}`", class.name)));
                }
                class.attributes.push(AttributeSpec { name, type_name, description, line: i });
            }
            "method" | "signature" => {
                let (code, docstring) = split_code_value(value);
                let mut sig = parse_signature(&code).map_err(|e| entry_error(i, e.to_string()))?;
                sig.docstring = docstring;
                let class = entry.classes.last_mut().ok_or_else(|| entry_error(i, "method outside a class"))?;
                if class.method(&sig.name).is_some() {
                    return Err(entry_error(i, format!("duplicate method `{}.{}`", class.name, sig.name)));
                }
                class.methods.push(MethodSpec { sig, line: i });
                last_sig = Some((true, class.methods.len() - 1));
            }
            "function" => {
                let (code, docstring) = split_code_value(value);
                let mut sig = parse_signature(&code).map_err(|e| entry_error(i, e.to_string()))?;
                sig.docstring = docstring;
                if entry.function(&sig.name).is_some() {
                    return Err(entry_error(i, format!("duplicate function `{}`", sig.name)));
                }
                entry.functions.push(MethodSpec { sig, line: i });
                last_sig = Some((false, entry.functions.len() - 1));
            }
            "docstring" => {
                let text = unquote(value);
                match last_sig {
                    Some((true, idx)) => {
                        if let Some(c) = entry.classes.last_mut() {
                            c.methods[idx].sig.docstring = text;
                        }
                    }
                    Some((false, idx)) => entry.functions[idx].sig.docstring = text,
                    None => return Err(entry_error(i, "docstring without a signature")),
                }
            }
            _ => unreachable!(),
        }
    }

    for entry in &mut entries {
        if entry.owner.is_empty() {
            entry.owner = "Engineer".to_string();
        }
    }
    Ok(entries)
}

struct RawEdge {
    from: String,
    to: String,
    line: usize,
}

/// Reads `A --> B` lines (chains and `-->|label|` allowed). Node declarations
/// like `game[core/game.py]` alias the id to its label.
fn parse_edges(lines: &[String]) -> (Vec<RawEdge>, Vec<String>) {
    let mut aliases: BTreeMap<String, String> = BTreeMap::new();
    let mut chains: Vec<(usize, Vec<String>)> = Vec::new();
    let mut warnings = Vec::new();

    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        let line = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")).unwrap_or(line).trim();
        if line.is_empty() || line.starts_with("```") || line.starts_with("%%") {
            continue;
        }
        let mut ids = Vec::new();
        for (n, segment) in line.split("-->").enumerate() {
            let mut seg = segment.trim();
            if n > 0 {
                if let Some(rest) = seg.strip_prefix('|') {
                    seg = rest.split_once('|').map(|(_, r)| r.trim()).unwrap_or("");
                }
            }
            match node_token(seg) {
                Some((id, label)) => {
                    if let Some(label) = label {
                        aliases.insert(id.clone(), label);
                    }
                    ids.push(id);
                }
                None => {
                    ids.clear();
                    break;
                }
            }
        }
        if ids.len() >= 2 {
            chains.push((i, ids));
        } else if !(ids.len() == 1 && line.split("-->").count() == 1 && aliases.contains_key(&ids[0])) {
            warnings.push(format!("dependency line {} ignored: `{line}`", i + 1));
        }
    }

    let label = |id: &String| aliases.get(id).cloned().unwrap_or_else(|| id.clone());
    let edges = chains
        .into_iter()
        .flat_map(|(line, ids)| {
            ids.windows(2).map(|w| RawEdge { from: label(&w[0]), to: label(&w[1]), line: line + 1 }).collect::<Vec<_>>()
        })
        .collect();
    (edges, warnings)
}

/// `id`, `id[label]`, `id(label)`, `id{label}`, `id["label"]`.
fn node_token(seg: &str) -> Option<(String, Option<String>)> {
    let seg = seg.trim().trim_end_matches(';').trim();
    if seg.is_empty() {
        return None;
    }
    let open = seg.find(['[', '(', '{']);
    let (id, label) = match open {
        Some(i) => {
            let inner = seg[i + 1..].trim_end_matches([']', ')', '}']);
            let inner = inner.trim_matches(['[', '(', '{', '"', '\'', '`', ' ']);
            (&seg[..i], Some(inner.to_string()))
        }
        None => (seg, None),
    };
    let id = id.trim().trim_matches('`');
    let valid = !id.is_empty()
        && id.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '/' | '.' | '-'))
        && !id.contains("--");
    valid.then(|| (id.to_string(), label.filter(|l| !l.is_empty())))
}

/// Maps a diagram node name onto a module id: exact path, path without
/// extension, dotted module path, file name, or file stem (when unique).
fn resolve_module(nodes: &BTreeMap<String, String>, name: &str) -> Option<String> {
    let name = name.trim().trim_matches('`');
    if let Ok(norm) = normalize_path(name) {
        if nodes.contains_key(&norm) {
            return Some(norm);
        }
    }
    let stem_path = |p: &str| p.rsplit_once('.').map(|(s, _)| s.to_string()).unwrap_or_else(|| p.to_string());
    let views: [&dyn Fn(&str) -> String; 4] = [
        &|p| stem_path(p),
        &|p| stem_path(p).replace('/', "."),
        &|p| p.rsplit('/').next().unwrap_or(p).to_string(),
        &|p| stem_path(p.rsplit('/').next().unwrap_or(p)),
    ];
    for view in views {
        let hits: Vec<&String> = nodes.keys().filter(|p| view(p) == name).collect();
        if hits.len() == 1 {
            return Some(hits[0].clone());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractAction;

    pub(crate) fn contract_with(api: &str, deps: &str) -> LanguageContract {
        let mut s = Sections::empty();
        s.set(SectionKey::SymbolicApiSpecifications, crate::contract::body_lines(api));
        s.set(SectionKey::DependencyRelationships, crate::contract::body_lines(deps));
        LanguageContract::from_sections(s)
    }

    const PLAYER: &str = "\
- **File:** `entities/player.py`
  - **Owner:** Backend Engineer
  - **Version:** 1
  - **Status:** TODO
  - **Class:** `Player`
    - **Attribute:** `x: int` - Horizontal position.
    - **Attribute:** `y: int` - Vertical position.
    - **Attribute:** `health: int` - Remaining hit points.
    - **Method:** `def move(dx: int, dy: int) -> None` - Move by a delta.";

    #[test]
    fn player_entry_projects() {
        let k = project(&contract_with(PLAYER, "")).unwrap();
        assert_eq!(k.nodes.len(), 1);
        let attrs = k.signatures.values().filter(|s| matches!(s, Symbol::Attribute { .. })).count();
        assert_eq!(attrs, 3);
        let e = k.entry("entities/player.py").unwrap();
        assert_eq!(e.owner, "Backend Engineer");
        assert_eq!(e.classes[0].attributes[2].name, "health");
        assert_eq!((e.classes[0].line, e.classes[0].end), (4, 9));
        assert!(validate(&k).is_empty());
    }

    #[test]
    fn empty_api_section_projects_empty_kernel() {
        let k = project(&LanguageContract::skeleton()).unwrap();
        assert!(k.nodes.is_empty() && k.signatures.is_empty() && k.dependencies.is_empty());
    }

    fn three_modules(deps: &str) -> LanguageContract {
        let api = "\
- **File:** `a.py`
  - **Function:** `def run() -> None` - Entry.
- **File:** `b.py`
  - **Function:** `def helper() -> int` - Helper.
- **File:** `c.py`
  - **Function:** `def leaf() -> str` - Leaf.";
        contract_with(api, deps)
    }

    #[test]
    fn chain_topological_order() {
        let k = project(&three_modules("```mermaid\ngraph TD\n  A[a.py] --> B[b.py]\n  B --> C[c.py]\n```")).unwrap();
        assert_eq!(k.topological_order().unwrap(), ["a.py", "b.py", "c.py"]);
        assert_eq!(k.warnings.len(), 1, "{:?}", k.warnings);
        assert!(validate(&k).is_empty());
    }

    #[test]
    fn edges_resolve_by_stem_and_dotted_path() {
        let k = project(&three_modules("a --> b\nb -->|uses| c")).unwrap();
        assert!(k.dependencies["a.py"].contains("b.py"));
        assert!(k.dependencies["b.py"].contains("c.py"));
    }

    #[test]
    fn unknown_endpoint_is_an_error() {
        let err = project(&three_modules("a --> nowhere")).unwrap_err();
        assert!(matches!(err, ProjectionError::UnknownEdgeEndpoint { ref name, .. } if name == "nowhere"));
    }

    #[test]
    fn two_cycle_is_reported() {
        let k = project(&three_modules("a --> b\nb --> a")).unwrap();
        assert_eq!(validate(&k), vec![Violation::Cycle { nodes: vec!["a.py".into(), "b.py".into()] }]);
    }

    #[test]
    fn undeclared_return_type() {
        let api = "- **File:** `inv.py`\n  - **Class:** `Bag`\n    - **Method:** `def open() -> Inventory` - Open it.";
        let k = project(&contract_with(api, "")).unwrap();
        assert_eq!(
            validate(&k),
            vec![Violation::TypeUndefined { symbol: "inv.py::Bag.open".into(), type_name: "Inventory".into() }]
        );
    }

    #[test]
    fn generic_heads_only() {
        let api = "- **File:** `g.py`\n  - **Function:** `def f(xs: list[Whatever]) -> dict[str, int]` - ok.";
        assert!(validate(&project(&contract_with(api, "")).unwrap()).is_empty());
    }

    #[test]
    fn incomplete_entries() {
        let api = "- **File:** `a.py`\n  - **Function:** `def f() -> None`\n- **File:** `b.py`\n  - **Owner:** X";
        let v = validate(&project(&contract_with(api, "")).unwrap());
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| matches!(v, Violation::Incomplete { .. })));
    }

    #[test]
    fn bad_signature_reports_line() {
        let api = "- **File:** `a.py`\n  - **Class:** `A`\n    - **Method:** `def f(x int) -> None`";
        let err = project(&contract_with(api, "")).unwrap_err();
        assert!(matches!(err, ProjectionError::Entry { line: 3, .. }), "{err}");
    }

    #[test]
    fn listing_style_fields() {
        let api = "\
- File Path: \"core/engine.py\"
  Owner: \"Backend\"
  Version: \"2\"
  Status: \"DONE\"
  Classes:
    - Class Name: \"Engine\"
      Methods:
        - Signature: \"def tick() -> None\"
          Docstring: \"Advance one frame.\"";
        let k = project(&contract_with(api, "")).unwrap();
        let e = k.entry("core/engine.py").unwrap();
        assert_eq!((e.version, e.status), (2, TaskStatus::Done));
        assert_eq!(e.classes[0].methods[0].sig.docstring, "Advance one frame.");
    }

    #[test]
    fn tasks_follow_entries() {
        let api = "\
- **File:** `b.py`\n  - **Status:** DONE\n  - **Function:** `def f() -> None` - f.
- **File:** `a.py`\n  - **Status:** TODO\n  - **Function:** `def g() -> None` - g.
- **File:** `c.py`\n  - **Status:** VERIFIED\n  - **Function:** `def h() -> None` - h.";
        let tasks = tasks_of(&project(&contract_with(api, "")).unwrap());
        let got: Vec<_> = tasks.iter().map(|t| (t.id.as_str(), t.status)).collect();
        assert_eq!(got, [("a.py", TaskStatus::Todo), ("b.py", TaskStatus::Done), ("c.py", TaskStatus::Verified)]);
        assert!(tasks_of(&SymbolicKernel::default()).is_empty());
    }

    #[test]
    fn derived_edges_from_type_references() {
        let api = "\
- **File:** `board.py`\n  - **Class:** `Board`\n    - **Attribute:** `size: int` - n.
- **File:** `ai.py`\n  - **Function:** `def choose(board: Board) -> tuple` - pick.";
        let k = project(&contract_with(api, "")).unwrap();
        assert!(k.derived.contains(&("ai.py".to_string(), "board.py".to_string())));
        assert!(k.dependencies["ai.py"].is_empty());
    }

    #[test]
    fn guard_rejects_new_cycle_only() {
        let c = three_modules("a --> b");
        let bad = ContractAction::update(SectionKey::DependencyRelationships, "a --> b\nb --> a");
        let err = c.apply_action(&bad, &KernelGuard).unwrap_err();
        assert!(err.to_string().contains("CYCLE(a.py, b.py)"), "{err}");

        // With a pre-existing cycle, unrelated edits still go through.
        let cyclic = three_modules("a --> b\nb --> a");
        let ok = cyclic.apply_action(&ContractAction::update(SectionKey::Constraints, "- x"), &KernelGuard);
        assert!(ok.is_ok());
    }
}
