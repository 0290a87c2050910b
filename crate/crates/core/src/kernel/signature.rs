//! The canonical method signature grammar:
//!
//! ```text
//! def NAME ( [NAME : TYPE {, NAME : TYPE}] ) -> TYPE
//! ```
//!
//! Whitespace between tokens is insignificant. Types are normalized so that
//! `dict[ str,int ]` and `dict[str, int]` compare equal.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSig {
    pub name: String,
    pub params: Vec<Param>,
    pub return_type: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub docstring: String,
}

impl MethodSig {
    /// True when names, parameter list and return type agree. Docstrings are
    /// not part of the interface.
    pub fn same_interface(&self, other: &MethodSig) -> bool {
        self.name == other.name && self.params == other.params && self.return_type == other.return_type
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.type_name.as_str()).chain(std::iter::once(self.return_type.as_str()))
    }
}

impl fmt::Display for MethodSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_signature(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("signature error at column {column}: {message}")]
pub struct SignatureError {
    pub column: usize,
    pub message: String,
}

pub fn print_signature(sig: &MethodSig) -> String {
    let params: Vec<String> = sig.params.iter().map(|p| format!("{}: {}", p.name, p.type_name)).collect();
    format!("def {}({}) -> {}", sig.name, params.join(", "), sig.return_type)
}

pub fn parse_signature(text: &str) -> Result<MethodSig, SignatureError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    if !cur.eat_word("def") {
        return Err(cur.error("expected `def`"));
    }
    let name = cur.ident().ok_or_else(|| cur.error("expected method name"))?;
    cur.skip_ws();
    if !cur.eat('(') {
        return Err(cur.error("expected `(`"));
    }
    let mut params = Vec::new();
    cur.skip_ws();
    if !cur.eat(')') {
        loop {
            cur.skip_ws();
            let pname = cur.ident().ok_or_else(|| cur.error("expected parameter name"))?;
            cur.skip_ws();
            if !cur.eat(':') {
                return Err(cur.error("expected `:` after parameter name"));
            }
            let type_name = cur.type_expr(&[',', ')'])?;
            params.push(Param { name: pname, type_name });
            cur.skip_ws();
            if cur.eat(')') {
                break;
            }
            if !cur.eat(',') {
                return Err(cur.error("expected `,` or `)`"));
            }
        }
    }
    cur.skip_ws();
    if !cur.eat_str("->") {
        return Err(cur.error("expected `->`"));
    }
    let return_type = cur.type_expr(&[':'])?;
    cur.skip_ws();
    cur.eat(':');
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.error("unexpected trailing text"));
    }
    Ok(MethodSig { name, params, return_type, docstring: String::new() })
}

/// Canonical spelling of a type expression: no inner whitespace, one space
/// after each comma, forward-reference quotes removed.
pub fn normalize_type(raw: &str) -> String {
    let squeezed: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    let unquoted = squeezed.trim_matches(|c| c == '"' || c == '\'');
    unquoted.replace(',', ", ")
}

/// The head symbols of a type: `list[int]` -> `list`, `int|None` -> `int`, `None`.
pub fn head_symbols(type_name: &str) -> Vec<&str> {
    let mut heads = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let bytes = type_name.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'[' => depth += 1,
            b']' => depth = depth.saturating_sub(1),
            b'|' if depth == 0 => {
                heads.push(head_of(&type_name[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    heads.push(head_of(&type_name[start..]));
    heads.into_iter().filter(|h| !h.is_empty()).collect()
}

fn head_of(alt: &str) -> &str {
    alt.split('[').next().unwrap_or("").trim()
}

/// Every identifier-like token inside a type expression.
pub fn type_tokens(type_name: &str) -> impl Iterator<Item = &str> {
    type_name.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.')).filter(|t| !t.is_empty())
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { chars: src.chars().collect(), pos: 0, _src: src }
    }

    fn error(&self, message: &str) -> SignatureError {
        SignatureError { column: self.pos + 1, message: message.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        let save = self.pos;
        if self.eat_str(word) && self.peek().is_some_and(char::is_whitespace) {
            true
        } else {
            self.pos = save;
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => self.pos += 1,
            _ => return None,
        }
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Some(self.chars[start..self.pos].iter().collect())
    }

    /// Reads a type up to one of `stops` at bracket depth zero.
    fn type_expr(&mut self, stops: &[char]) -> Result<String, SignatureError> {
        self.skip_ws();
        let start = self.pos;
        let mut depth = 0usize;
        while let Some(c) = self.peek() {
            if depth == 0 && stops.contains(&c) {
                break;
            }
            match c {
                '[' => depth += 1,
                ']' => {
                    if depth == 0 {
                        return Err(self.error("unbalanced `]`"));
                    }
                    depth -= 1;
                }
                c if c.is_alphanumeric() || c.is_whitespace() || matches!(c, '_' | '.' | ',' | '|' | '"' | '\'') => {}
                _ => return Err(self.error("unexpected character in type")),
            }
            self.pos += 1;
        }
        if depth != 0 {
            return Err(self.error("unbalanced `[`"));
        }
        let raw: String = self.chars[start..self.pos].iter().collect();
        let ty = normalize_type(&raw);
        if ty.is_empty() || !ty.starts_with(|c: char| c.is_alphabetic() || c == '_') {
            return Err(SignatureError { column: start + 1, message: "expected type".into() });
        }
        Ok(ty)
    }
}
