//! Contract amendments that legitimize a strict superset found in code.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{known_types, AuditDelta, Detail};
use crate::contract::{field_of, ContractAction, LanguageContract, SectionKey};
use crate::kernel::signature::head_symbols;
use crate::kernel::{self, normalize_type, ApiSpecEntry, MethodSig, Param, SymbolicKernel, PRIMITIVE_TYPES};
use crate::scheduler::TaskId;
use crate::workspace::{ExtractedMethod, ExtractedSymbols};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "item", rename_all = "snake_case")]
pub enum AmendItem {
    Attribute { class: String, name: String, type_name: String, description: String },
    Method { class: String, sig: MethodSig },
    Function { sig: MethodSig },
    Class { name: String, attributes: Vec<(String, String)>, methods: Vec<MethodSig>, description: String },
}

impl AmendItem {
    pub fn label(&self) -> String {
        match self {
            AmendItem::Attribute { class, name, .. } => format!("{class}.{name}"),
            AmendItem::Method { class, sig } => format!("{class}.{}()", sig.name),
            AmendItem::Function { sig } => format!("{}()", sig.name),
            AmendItem::Class { name, .. } => name.clone(),
        }
    }
}

/// Additions to one contract entry, derived from one task's delta.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Amendment {
    pub source: TaskId,
    pub target: String,
    pub items: Vec<AmendItem>,
}

impl Amendment {
    /// Groups the patchable details of `delta` by the entry they extend.
    /// `code` is what the source file defines.
    pub fn derive(kernel: &SymbolicKernel, delta: &AuditDelta, code: &ExtractedSymbols) -> Vec<Amendment> {
        let known = known_types(kernel);
        let mut out: Vec<Amendment> = Vec::new();
        let source = delta.task.clone();
        let mut push = |target: &str, item: AmendItem| match out.iter_mut().find(|a| a.target == target) {
            Some(a) => a.items.push(item),
            None => out.push(Amendment { source: source.clone(), target: target.to_string(), items: vec![item] }),
        };
        let adopted = format!("Adopted from {}", delta.task);
        for d in &delta.details {
            match d {
                Detail::ExtraAttribute { class, attribute } => {
                    let found =
                        code.class(class).and_then(|c| c.attribute(attribute)).and_then(|a| a.type_name.clone());
                    push(
                        &delta.task,
                        AmendItem::Attribute {
                            class: class.clone(),
                            name: attribute.clone(),
                            type_name: contract_type(found.as_deref(), &known),
                            description: adopted.clone(),
                        },
                    );
                }
                Detail::ExtraMethod { class, method } => {
                    if let Some(m) = code.class(class).and_then(|c| c.method(method)) {
                        push(
                            &delta.task,
                            AmendItem::Method { class: class.clone(), sig: contract_sig(m, true, &known, &adopted) },
                        );
                    }
                }
                Detail::ExtraFunction { function } => {
                    if let Some(f) = code.function(function) {
                        push(&delta.task, AmendItem::Function { sig: contract_sig(f, false, &known, &adopted) });
                    }
                }
                Detail::ExtraClass { class } => {
                    let Some(c) = code.class(class) else { continue };
                    let attributes = c
                        .attributes
                        .iter()
                        .filter(|a| !a.name.starts_with('_'))
                        .map(|a| (a.name.clone(), contract_type(a.type_name.as_deref(), &known)))
                        .collect();
                    let methods = c
                        .methods
                        .iter()
                        .filter(|m| !m.name.starts_with('_'))
                        .map(|m| contract_sig(m, true, &known, &adopted))
                        .collect();
                    push(
                        &delta.task,
                        AmendItem::Class { name: class.clone(), attributes, methods, description: adopted.clone() },
                    );
                }
                Detail::UndeclaredAttributeUse { class, attribute } => {
                    if let Some((entry, _)) = kernel.find_class(class) {
                        push(
                            &entry.file_path.clone(),
                            AmendItem::Attribute {
                                class: class.clone(),
                                name: attribute.clone(),
                                type_name: "any".into(),
                                description: format!("Required by {}", delta.task),
                            },
                        );
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// A code annotation usable in the contract, else `any`.
fn contract_type(found: Option<&str>, known: &BTreeSet<String>) -> String {
    let Some(raw) = found else { return "any".into() };
    let t = normalize_type(raw);
    let ok = !t.is_empty() && head_symbols(&t).iter().all(|h| PRIMITIVE_TYPES.contains(h) || known.contains(*h));
    if ok {
        t
    } else {
        "any".into()
    }
}

fn contract_sig(m: &ExtractedMethod, is_method: bool, known: &BTreeSet<String>, doc: &str) -> MethodSig {
    let params = m
        .params
        .iter()
        .enumerate()
        .filter(|(i, p)| !(is_method && *i == 0 && (p.name == "self" || p.name == "cls")))
        .map(|(_, p)| Param { name: p.name.clone(), type_name: contract_type(p.type_name.as_deref(), known) })
        .collect();
    MethodSig {
        name: m.name.clone(),
        params,
        return_type: contract_type(m.return_type.as_deref(), known),
        docstring: doc.to_string(),
    }
}

fn indent_of(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

fn deeper(line: &str) -> String {
    format!("{}  ", indent_of(line))
}

fn is_docstring_line(line: &str) -> bool {
    field_of(line).is_some_and(|(k, _)| k.eq_ignore_ascii_case("docstring"))
}

/// First index after `line` and any Listing-style docstring lines under it.
fn after_member(lines: &[String], line: usize) -> usize {
    let mut i = line + 1;
    while i < lines.len() && is_docstring_line(&lines[i]) {
        i += 1;
    }
    i
}

fn attribute_line(indent: &str, name: &str, ty: &str, desc: &str) -> String {
    format!("{indent}- **Attribute:** `{name}: {ty}` - {desc}")
}

fn method_line(indent: &str, key: &str, sig: &MethodSig) -> String {
    format!("{indent}- **{key}:** `{sig}` - {}", sig.docstring)
}

/// The UPDATE that installs `amendment` into the current API section, or
/// None when everything it adds is already declared. Positions are derived
/// from `contract` itself, so amendments can be applied one after another.
pub fn amendment_action(contract: &LanguageContract, amendment: &Amendment) -> Option<(ContractAction, Vec<String>)> {
    let kernel = kernel::project(contract).ok()?;
    let entry = kernel.entry(&amendment.target)?;
    let lines = contract.section(SectionKey::SymbolicApiSpecifications);
    let mut inserts: Vec<(usize, String)> = Vec::new();
    let mut added = Vec::new();
    let mut new_classes: BTreeSet<&str> = BTreeSet::new();

    for item in &amendment.items {
        let fresh = match item {
            AmendItem::Attribute { class, name, .. } => entry.class(class).is_some_and(|c| c.attribute(name).is_none()),
            AmendItem::Method { class, sig } => entry.class(class).is_some_and(|c| c.method(&sig.name).is_none()),
            AmendItem::Function { sig } => entry.function(&sig.name).is_none(),
            AmendItem::Class { name, .. } => kernel.find_class(name).is_none() && new_classes.insert(name),
        };
        if !fresh || added.contains(&item.label()) {
            continue;
        }
        match item {
            AmendItem::Attribute { class, name, type_name, description } => {
                let c = entry.class(class)?;
                let (at, indent) = match c.attributes.last() {
                    Some(a) => (after_member(lines, a.line), indent_of(&lines[a.line]).to_string()),
                    None => {
                        let indent = c.methods.first().map(|m| indent_of(&lines[m.line]).to_string());
                        (c.line + 1, indent.unwrap_or_else(|| deeper(&lines[c.line])))
                    }
                };
                inserts.push((at, attribute_line(&indent, name, type_name, description)));
            }
            AmendItem::Method { class, sig } => {
                let c = entry.class(class)?;
                let last =
                    c.methods.last().map(|m| m.line).into_iter().chain(c.attributes.last().map(|a| a.line)).max();
                let (at, indent) = match last {
                    Some(l) => (after_member(lines, l), indent_of(&lines[l]).to_string()),
                    None => (c.line + 1, deeper(&lines[c.line])),
                };
                inserts.push((at, method_line(&indent, "Method", sig)));
            }
            AmendItem::Function { .. } | AmendItem::Class { .. } => {
                let at = entry_tail(lines, entry);
                let indent = top_field_indent(lines, entry);
                match item {
                    AmendItem::Function { sig } => inserts.push((at, method_line(&indent, "Function", sig))),
                    AmendItem::Class { name, attributes, methods, .. } => {
                        inserts.push((at, format!("{indent}- **Class:** `{name}`")));
                        let inner = format!("{indent}  ");
                        for (a, t) in attributes {
                            inserts.push((at, attribute_line(&inner, a, t, &format!("Attribute of {name}"))));
                        }
                        for m in methods {
                            inserts.push((at, method_line(&inner, "Method", m)));
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
        added.push(item.label());
    }
    if added.is_empty() {
        return None;
    }

    let mut body = lines.to_vec();
    if let Some(v) = entry.version_line {
        body[v] = format!("{}- **Version:** {}", indent_of(&lines[v]), entry.version + 1);
    }
    // Stable by position, so equal positions keep item order.
    inserts.sort_by_key(|(at, _)| *at);
    for (offset, (at, line)) in inserts.into_iter().enumerate() {
        body.insert(at + offset, line);
    }
    Some((ContractAction::update(SectionKey::SymbolicApiSpecifications, body.join("\n")), added))
}

/// One past the last non-blank line of the entry.
fn entry_tail(lines: &[String], entry: &ApiSpecEntry) -> usize {
    (entry.line..entry.end.min(lines.len()))
        .rev()
        .find(|&i| !lines[i].trim().is_empty())
        .map_or(entry.line + 1, |i| i + 1)
}

fn top_field_indent(lines: &[String], entry: &ApiSpecEntry) -> String {
    let nested = lines
        .get(entry.line + 1)
        .filter(|l| field_of(l).is_some() && indent_of(l).len() > indent_of(&lines[entry.line]).len());
    match nested {
        Some(l) => indent_of(l).to_string(),
        None => deeper(&lines[entry.line]),
    }
}
