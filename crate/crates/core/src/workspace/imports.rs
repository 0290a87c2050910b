use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AnalyzerRegistry, ExtractedSymbols, Import, ImportTarget, Workspace};

/// One internal import and whether it resolves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportCheck {
    pub file: String,
    pub import: Import,
    /// Absolute dotted module the import refers to.
    pub module: String,
    /// The repository file the module maps to, when it exists.
    pub target: Option<String>,
    pub valid: bool,
}

struct Repo {
    symbols: BTreeMap<String, ExtractedSymbols>,
    dirs: BTreeSet<String>,
    top_names: BTreeSet<String>,
    stems: BTreeSet<String>,
}

impl Repo {
    fn new(ws: &Workspace) -> Self {
        let registry = AnalyzerRegistry::default();
        let mut symbols = BTreeMap::new();
        let mut dirs = BTreeSet::new();
        let mut top_names = BTreeSet::new();
        let mut stems = BTreeSet::new();
        for unit in ws.units() {
            let segs: Vec<&str> = unit.path.split('/').collect();
            for n in 1..segs.len() {
                dirs.insert(segs[..n].join("/"));
            }
            if let Some(stem) = segs[segs.len() - 1].strip_suffix(".py") {
                stems.insert(stem.to_string());
                if segs.len() == 1 {
                    top_names.insert(stem.to_string());
                }
                symbols.insert(unit.path.clone(), registry.extract(unit).unwrap_or_default());
            }
            if segs.len() > 1 {
                top_names.insert(segs[0].to_string());
            }
        }
        Self { symbols, dirs, top_names, stems }
    }

    /// `a.b.c` -> `a/b/c.py` or `a/b/c/__init__.py`.
    fn module_file(&self, module: &str) -> Option<String> {
        let base = module.replace('.', "/");
        [format!("{base}.py"), format!("{base}/__init__.py")].into_iter().find(|p| self.symbols.contains_key(p))
    }

    fn is_package(&self, module: &str) -> bool {
        self.dirs.contains(&module.replace('.', "/"))
    }

    fn module_exists(&self, module: &str) -> bool {
        !module.is_empty() && (self.module_file(module).is_some() || self.is_package(module))
    }
}

/// Dotted package containing `file`.
fn package_of(file: &str) -> Vec<&str> {
    let mut segs: Vec<&str> = file.split('/').collect();
    segs.pop();
    segs
}

fn absolute_module(file: &str, import: &Import) -> Option<String> {
    if import.level == 0 {
        return Some(import.module.clone());
    }
    let mut pkg = package_of(file);
    for _ in 1..import.level {
        pkg.pop()?;
    }
    if !import.module.is_empty() {
        pkg.extend(import.module.split('.'));
    }
    Some(pkg.join("."))
}

/// Checks every internal import of every Python file. An import is internal
/// when it is relative, when its top-level name is a repository directory or
/// top-level module, or when its final module name matches a repository
/// file stem. Everything else is treated as an external package.
pub fn resolve_imports(ws: &Workspace) -> Vec<ImportCheck> {
    let repo = Repo::new(ws);
    let mut out = Vec::new();
    for (file, symbols) in &repo.symbols {
        for import in &symbols.imports {
            let Some(module) = absolute_module(file, import) else {
                out.push(ImportCheck {
                    file: file.clone(),
                    import: import.clone(),
                    module: String::new(),
                    target: None,
                    valid: false,
                });
                continue;
            };
            let first = module.split('.').next().unwrap_or("");
            let last = module.rsplit('.').next().unwrap_or("");
            let internal = import.level > 0 || repo.top_names.contains(first) || repo.stems.contains(last);
            if !internal {
                continue;
            }
            let target = repo.module_file(&module);
            let valid = match &import.target {
                ImportTarget::WholeModule | ImportTarget::All => repo.module_exists(&module),
                ImportTarget::Symbol(name) => {
                    let defined = target.as_ref().is_some_and(|t| repo.symbols[t].defines(name));
                    let submodule = if module.is_empty() { name.clone() } else { format!("{module}.{name}") };
                    defined || (repo.module_exists(&module) || module.is_empty()) && repo.module_exists(&submodule)
                }
            };
            out.push(ImportCheck { file: file.clone(), import: import.clone(), module, target, valid });
        }
    }
    out
}
