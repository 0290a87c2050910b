//! Line-level Python analyzer. Not a parser: it recognizes class and def
//! headers, constructor attribute assignments, imports, module-level names,
//! and member accesses on values of known class type.

use std::collections::BTreeMap;

use super::{
    Analyzer, ExtractedAttribute, ExtractedClass, ExtractedMethod, ExtractedParam, ExtractedSymbols, Import,
    ImportTarget, MemberUse,
};
use crate::kernel::signature::{head_symbols, is_identifier, normalize_type};
use crate::kernel::PRIMITIVE_TYPES;

pub struct PythonAnalyzer;

impl Analyzer for PythonAnalyzer {
    fn extract(&self, body: &str) -> ExtractedSymbols {
        let mut ex = Extractor::default();
        for line in logical_lines(body) {
            ex.line(line);
        }
        ex.out.member_uses.sort();
        ex.out.member_uses.dedup_by(|a, b| a.class == b.class && a.member == b.member && a.call == b.call);
        ex.out
    }
}

#[derive(Debug, PartialEq)]
struct Logical {
    indent: usize,
    number: usize,
    text: String,
}

/// Joins bracket and backslash continuations, drops comments, and replaces
/// every string literal with `""`.
fn logical_lines(body: &str) -> Vec<Logical> {
    let chars: Vec<char> = body.chars().collect();
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut depth = 0usize;
    let mut line_no = 1usize;
    let mut start_line = 1usize;
    let mut indent = 0usize;
    let mut at_line_start = true;
    let mut i = 0;

    let flush = |buf: &mut String, out: &mut Vec<Logical>, indent, number| {
        let text = buf.trim().to_string();
        if !text.is_empty() {
            out.push(Logical { indent, number, text });
        }
        buf.clear();
    };

    while i < chars.len() {
        let c = chars[i];
        if at_line_start {
            at_line_start = false;
            if buf.is_empty() && depth == 0 {
                let mut w = 0;
                while i < chars.len() && (chars[i] == ' ' || chars[i] == '\t') {
                    w = if chars[i] == '\t' { (w / 8 + 1) * 8 } else { w + 1 };
                    i += 1;
                }
                indent = w;
                start_line = line_no;
                continue;
            }
        }
        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '"' | '\'' => {
                let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
                i += if triple { 3 } else { 1 };
                loop {
                    if i >= chars.len() {
                        break;
                    }
                    let d = chars[i];
                    if d == '\\' {
                        if chars.get(i + 1) == Some(&'\n') {
                            line_no += 1;
                        }
                        i += 2;
                        continue;
                    }
                    if d == '\n' {
                        line_no += 1;
                        if !triple {
                            break;
                        }
                    }
                    if d == c {
                        if !triple {
                            i += 1;
                            break;
                        }
                        if i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c {
                            i += 3;
                            break;
                        }
                    }
                    i += 1;
                }
                buf.push_str("\"\"");
                continue;
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => {
                buf.push(' ');
                line_no += 1;
                i += 2;
                continue;
            }
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            '\n' => {
                line_no += 1;
                at_line_start = true;
                if depth == 0 {
                    flush(&mut buf, &mut out, indent, start_line);
                } else {
                    buf.push(' ');
                }
                i += 1;
                continue;
            }
            _ => {}
        }
        buf.push(c);
        i += 1;
    }
    flush(&mut buf, &mut out, indent, start_line);
    out
}

enum ScopeKind {
    Class(usize),
    Def { class: Option<usize>, is_init: bool, vars: BTreeMap<String, String> },
    Other,
}

struct Scope {
    indent: usize,
    kind: ScopeKind,
}

#[derive(Default)]
struct Extractor {
    out: ExtractedSymbols,
    stack: Vec<Scope>,
}

impl Extractor {
    fn line(&mut self, line: Logical) {
        while self.stack.last().is_some_and(|s| s.indent >= line.indent) {
            self.stack.pop();
        }
        let text = line.text.as_str();
        if text.starts_with('@') {
            return;
        }
        let header = text.strip_prefix("async ").unwrap_or(text);

        if let Some(rest) = header.strip_prefix("class ") {
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            let kind = if self.stack.is_empty() && is_identifier(&name) {
                self.out.classes.push(ExtractedClass {
                    name,
                    attributes: Vec::new(),
                    methods: Vec::new(),
                    line: line.number,
                });
                ScopeKind::Class(self.out.classes.len() - 1)
            } else {
                ScopeKind::Other
            };
            self.stack.push(Scope { indent: line.indent, kind });
            return;
        }

        if let Some(rest) = header.strip_prefix("def ") {
            let Some(method) = parse_def(rest, line.number) else {
                self.stack.push(Scope { indent: line.indent, kind: ScopeKind::Other });
                return;
            };
            let vars = method
                .params
                .iter()
                .filter_map(|p| Some((p.name.clone(), class_of_type(p.type_name.as_deref()?)?)))
                .collect();
            let is_init = method.name == "__init__";
            let class = match self.stack.last().map(|s| &s.kind) {
                None => {
                    self.out.functions.push(method);
                    None
                }
                Some(ScopeKind::Class(idx)) => {
                    let idx = *idx;
                    self.out.classes[idx].methods.push(method);
                    Some(idx)
                }
                Some(_) => None,
            };
            self.stack.push(Scope { indent: line.indent, kind: ScopeKind::Def { class, is_init, vars } });
            return;
        }

        if header.starts_with("import ") || header.starts_with("from ") {
            self.out.imports.extend(parse_import(header, line.number));
            return;
        }

        let assignment = split_assignment(text);
        match self.stack.last_mut().map(|s| &mut s.kind) {
            None => {
                if let Some((targets, _)) = &assignment {
                    for t in targets {
                        let name = t.split(':').next().unwrap_or("").trim();
                        if is_identifier(name) && !self.out.variables.iter().any(|v| v == name) {
                            self.out.variables.push(name.to_string());
                        }
                    }
                } else if let Some((name, _)) = text.split_once(':') {
                    let name = name.trim();
                    if is_identifier(name) && !self.out.variables.iter().any(|v| v == name) {
                        self.out.variables.push(name.to_string());
                    }
                }
            }
            Some(ScopeKind::Class(idx)) => {
                // Annotated class-body fields, as used by dataclasses.
                let decl =
                    assignment.as_ref().map(|(t, _)| t.first().map(String::as_str).unwrap_or("")).unwrap_or(text);
                if let Some((name, ty)) = decl.split_once(':') {
                    let name = name.trim();
                    let class = &mut self.out.classes[*idx];
                    if is_identifier(name) && class.attribute(name).is_none() {
                        class
                            .attributes
                            .push(ExtractedAttribute { name: name.to_string(), type_name: Some(normalize_type(ty)) });
                    }
                }
            }
            Some(ScopeKind::Def { class, is_init, vars }) => {
                if let Some((targets, value)) = &assignment {
                    for target in targets {
                        let (lhs, ty) = match target.split_once(':') {
                            Some((l, t)) => (l.trim(), Some(normalize_type(t))),
                            None => (target.trim(), None),
                        };
                        if let (Some(idx), true) = (*class, *is_init) {
                            if let Some(attr) = lhs.strip_prefix("self.") {
                                let c = &mut self.out.classes[idx];
                                if is_identifier(attr) && c.attribute(attr).is_none() {
                                    c.attributes
                                        .push(ExtractedAttribute { name: attr.to_string(), type_name: ty.clone() });
                                }
                            }
                        }
                        if is_identifier(lhs) {
                            let known = ty.as_deref().and_then(class_of_type).or_else(|| constructor_call(value));
                            match known {
                                Some(cls) => {
                                    vars.insert(lhs.to_string(), cls);
                                }
                                None => {
                                    vars.remove(lhs);
                                }
                            }
                        }
                    }
                }
                let uses = member_uses(text, vars, line.number);
                self.out.member_uses.extend(uses);
            }
            Some(ScopeKind::Other) => {}
        }
    }
}

/// Parses `name(params) -> ret:` (the text after `def `).
fn parse_def(rest: &str, line: usize) -> Option<ExtractedMethod> {
    let open = rest.find('(')?;
    let name = rest[..open].trim();
    if !is_identifier(name) {
        return None;
    }
    let mut depth = 0usize;
    let mut close = None;
    for (i, c) in rest[open..].char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(open + i);
                    break;
                }
            }
            _ => {}
        }
    }
    let close = close?;
    let params = split_top_level(&rest[open + 1..close], ',')
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty() && *p != "*" && *p != "/")
        .map(|p| {
            let (decl, default) = match split_top_level(p, '=').as_slice() {
                [decl, ..] if p.contains('=') => (decl.to_string(), true),
                _ => (p.to_string(), false),
            };
            let (name, ty) = match decl.split_once(':') {
                Some((n, t)) => (n.trim().to_string(), Some(normalize_type(t))),
                None => (decl.trim().to_string(), None),
            };
            ExtractedParam { name, type_name: ty, has_default: default }
        })
        .collect();
    let tail = rest[close + 1..].trim();
    let return_type = tail.strip_prefix("->").map(|r| {
        let r = r.trim();
        // The header ends with the last top-level colon.
        let end = r.rfind(':').unwrap_or(r.len());
        normalize_type(&r[..end])
    });
    Some(ExtractedMethod { name: name.to_string(), params, return_type, line })
}

fn parse_import(text: &str, line: usize) -> Vec<Import> {
    let mut out = Vec::new();
    if let Some(rest) = text.strip_prefix("import ") {
        for part in rest.split(',') {
            let module = part.split(" as ").next().unwrap_or("").trim();
            if !module.is_empty() {
                out.push(Import { module: module.to_string(), level: 0, target: ImportTarget::WholeModule, line });
            }
        }
    } else if let Some(rest) = text.strip_prefix("from ") {
        let Some((module, names)) = rest.split_once(" import ") else { return out };
        let module = module.trim();
        let level = module.chars().take_while(|c| *c == '.').count();
        let module = module[level..].to_string();
        let names = names.trim().trim_start_matches('(').trim_end_matches(')');
        for name in names.split(',') {
            let name = name.split(" as ").next().unwrap_or("").trim();
            let target = match name {
                "" => continue,
                "*" => ImportTarget::All,
                n => ImportTarget::Symbol(n.to_string()),
            };
            out.push(Import { module: module.clone(), level, target, line });
        }
    }
    out
}

/// `(targets, value)` for a plain assignment; chained targets are all
/// returned. Augmented assignments and comparisons are not assignments.
fn split_assignment(text: &str) -> Option<(Vec<String>, String)> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut cuts = Vec::new();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth = depth.saturating_sub(1),
            b'=' if depth == 0 => {
                let prev = if i > 0 { bytes[i - 1] } else { b' ' };
                let next = bytes.get(i + 1).copied().unwrap_or(b' ');
                if next == b'=' || b"=!<>+-*/%&|^@:".contains(&prev) {
                    continue;
                }
                cuts.push(i);
            }
            _ => {}
        }
    }
    if cuts.is_empty() {
        return None;
    }
    let mut targets = Vec::new();
    let mut start = 0;
    for &cut in &cuts {
        for t in split_top_level(&text[start..cut], ',') {
            targets.push(t.trim().to_string());
        }
        start = cut + 1;
    }
    if text.starts_with("return ") || text.starts_with("if ") || text.starts_with("while ") {
        return None;
    }
    Some((targets, text[start..].trim().to_string()))
}

fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// The class an annotation refers to, if it is not a builtin.
fn class_of_type(ty: &str) -> Option<String> {
    head_symbols(ty)
        .into_iter()
        .find(|h| *h != "None" && !PRIMITIVE_TYPES.contains(h) && *h != "Optional")
        .filter(|h| is_identifier(h))
        .map(str::to_string)
}

/// `Player(...)` -> `Player`. Only capitalized callees are taken as classes.
fn constructor_call(value: &str) -> Option<String> {
    let open = value.find('(')?;
    let callee = value[..open].trim();
    let name = callee.rsplit('.').next().unwrap_or(callee);
    (is_identifier(name) && name.starts_with(|c: char| c.is_ascii_uppercase())).then(|| name.to_string())
}

fn member_uses(text: &str, vars: &BTreeMap<String, String>, line: usize) -> Vec<MemberUse> {
    if vars.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = text.chars().collect();
    let ident_char = |c: char| c.is_alphanumeric() || c == '_';
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !ident_char(chars[i]) || (i > 0 && (ident_char(chars[i - 1]) || chars[i - 1] == '.')) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && ident_char(chars[i]) {
            i += 1;
        }
        let base: String = chars[start..i].iter().collect();
        if chars.get(i) != Some(&'.') {
            continue;
        }
        let Some(class) = vars.get(&base) else { continue };
        let m_start = i + 1;
        let mut j = m_start;
        while j < chars.len() && ident_char(chars[j]) {
            j += 1;
        }
        let member: String = chars[m_start..j].iter().collect();
        if is_identifier(&member) {
            let mut k = j;
            while k < chars.len() && chars[k] == ' ' {
                k += 1;
            }
            out.push(MemberUse { class: class.clone(), member, call: chars.get(k) == Some(&'('), line });
        }
        i = j;
    }
    out
}
