//! Differential interval analysis against the immutable base snapshot and
//! the union-first layer merge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{ContractGuard, LanguageContract, RejectReason, Rejection, SectionKey, Sections};

/// A line interval `[start, end)` of a base section body and its replacement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hunk {
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomicPatch {
    pub section: SectionKey,
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
    pub author: String,
    pub layer: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub section: SectionKey,
    pub start: usize,
    pub end: usize,
    pub authors: Vec<String>,
    pub resolution: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeResult {
    pub sections: Sections,
    pub conflicts: Vec<Conflict>,
    /// Always empty: no proposed line is discarded.
    pub dropped: Vec<AtomicPatch>,
    pub patch_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("stale patch from {author} (layer {patch_layer}) on {section}: {reason}")]
    StalePatch { author: String, section: SectionKey, patch_layer: u32, reason: String },
}

/// Minimal line diff (longest common subsequence) of `proposed` against
/// `base`, as non-overlapping hunks in ascending order.
pub fn diff_lines(base: &[String], proposed: &[String]) -> Vec<Hunk> {
    let prefix = base.iter().zip(proposed).take_while(|(a, b)| a == b).count();
    let suffix = base[prefix..].iter().rev().zip(proposed[prefix..].iter().rev()).take_while(|(a, b)| a == b).count();
    let a = &base[prefix..base.len() - suffix];
    let b = &proposed[prefix..proposed.len() - suffix];

    // lcs[i][j] = LCS length of a[i..], b[j..]
    let (n, m) = (a.len(), b.len());
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] { lcs[i + 1][j + 1] + 1 } else { lcs[i + 1][j].max(lcs[i][j + 1]) };
        }
    }

    let mut hunks = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<Hunk> = None;
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            if let Some(h) = open.take() {
                hunks.push(h);
            }
            i += 1;
            j += 1;
            continue;
        }
        let h = open.get_or_insert_with(|| Hunk { start: prefix + i, end: prefix + i, replacement: Vec::new() });
        if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            h.replacement.push(b[j].clone());
            j += 1;
        } else {
            i += 1;
            h.end = prefix + i;
        }
    }
    hunks.extend(open);
    hunks
}

/// Applies non-overlapping hunks to `base`.
pub fn apply_hunks(base: &[String], hunks: &[Hunk]) -> Vec<String> {
    let mut sorted: Vec<&Hunk> = hunks.iter().collect();
    sorted.sort_by_key(|h| (h.start, h.end));
    let mut out = Vec::with_capacity(base.len());
    let mut pos = 0;
    for h in sorted {
        out.extend_from_slice(&base[pos..h.start]);
        out.extend(h.replacement.iter().cloned());
        pos = h.end;
    }
    out.extend_from_slice(&base[pos..]);
    out
}

/// Patches turning `base` into `proposed`, one per hunk of every changed section.
pub fn diff_against_base(base: &Sections, proposed: &Sections, author: &str, layer: u32) -> Vec<AtomicPatch> {
    let mut out = Vec::new();
    for (key, base_lines) in base.iter() {
        for h in diff_lines(base_lines, proposed.get(key)) {
            out.push(AtomicPatch {
                section: key,
                start: h.start,
                end: h.end,
                replacement: h.replacement,
                author: author.to_string(),
                layer,
            });
        }
    }
    out
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    let empty_a = a.0 == a.1;
    let empty_b = b.0 == b.1;
    match (empty_a, empty_b) {
        (false, false) => a.0 < b.1 && b.0 < a.1,
        (true, true) => a.0 == b.0,
        (true, false) => b.0 < a.0 && a.0 < b.1,
        (false, true) => a.0 < b.0 && b.0 < a.1,
    }
}

fn line_key(line: &str) -> &str {
    line.trim_end()
}

/// Merges all patches of one layer against `base`. Overlapping patches are
/// resolved by union: every replacement line of every author is kept, with
/// exact duplicates (ignoring trailing whitespace) emitted once. The result
/// does not depend on the order of `patches`.
pub fn merge_layer(base: &Sections, patches: &[AtomicPatch], layer: u32) -> Result<MergeResult, MergeError> {
    let mut by_section: BTreeMap<SectionKey, Vec<&AtomicPatch>> = BTreeMap::new();
    for p in patches {
        let len = base.get(p.section).len();
        let stale = |reason: String| MergeError::StalePatch {
            author: p.author.clone(),
            section: p.section,
            patch_layer: p.layer,
            reason,
        };
        if p.layer != layer {
            return Err(stale(format!("base belongs to layer {layer}")));
        }
        if p.start > p.end || p.end > len {
            return Err(stale(format!("interval [{}, {}) outside base of {len} lines", p.start, p.end)));
        }
        by_section.entry(p.section).or_default().push(p);
    }

    let mut sections = base.clone();
    let mut conflicts = Vec::new();
    for (key, mut list) in by_section {
        list.sort_by(|a, b| {
            (a.start, a.end, &a.author, &a.replacement).cmp(&(b.start, b.end, &b.author, &b.replacement))
        });
        list.dedup_by(|a, b| {
            a.start == b.start && a.end == b.end && a.author == b.author && a.replacement == b.replacement
        });

        let mut clusters: Vec<((usize, usize), Vec<&AtomicPatch>)> =
            list.into_iter().map(|p| ((p.start, p.end), vec![p])).collect();
        loop {
            let mut joined = false;
            'outer: for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    if overlaps(clusters[i].0, clusters[j].0) {
                        let (span, members) = clusters.remove(j);
                        let c = &mut clusters[i];
                        c.0 = (c.0 .0.min(span.0), c.0 .1.max(span.1));
                        c.1.extend(members);
                        joined = true;
                        break 'outer;
                    }
                }
            }
            if !joined {
                break;
            }
        }
        clusters.sort_by_key(|(span, _)| *span);

        let hunks: Vec<Hunk> = clusters
            .into_iter()
            .map(|((start, end), mut members)| {
                if members.len() == 1 {
                    let p = members[0];
                    return Hunk { start, end, replacement: p.replacement.clone() };
                }
                members.sort_by(|a, b| {
                    (&a.author, a.start, a.end, &a.replacement).cmp(&(&b.author, b.start, b.end, &b.replacement))
                });
                let mut authors: Vec<String> = members.iter().map(|p| p.author.clone()).collect();
                authors.dedup();
                conflicts.push(Conflict { section: key, start, end, authors, resolution: "UNION".into() });
                Hunk { start, end, replacement: union_lines(members.iter().map(|p| &p.replacement[..])) }
            })
            .collect();
        sections.set(key, apply_hunks(base.get(key), &hunks));
    }

    Ok(MergeResult { sections, conflicts, dropped: Vec::new(), patch_count: patches.len() })
}

/// Multiset union in the given order: a line is emitted again only when a
/// later contribution holds more copies of it than already emitted.
fn union_lines<'a>(parts: impl Iterator<Item = &'a [String]>) -> Vec<String> {
    let mut out = Vec::new();
    let mut emitted: BTreeMap<String, usize> = BTreeMap::new();
    for part in parts {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for line in part {
            let key = line_key(line);
            let n = seen.entry(key).or_default();
            *n += 1;
            let have = emitted.entry(key.to_string()).or_default();
            if *n > *have {
                *have += 1;
                out.push(line.clone());
            }
        }
    }
    out
}

/// Installs a merge as the next contract: revision + 1 and the merged
/// sections become the new base. A merge that breaks the kernel is rejected
/// and the contract is left as it was. An empty merge changes nothing.
pub fn commit_merge(
    contract: &LanguageContract,
    result: &MergeResult,
    guard: &dyn ContractGuard,
) -> Result<LanguageContract, Rejection> {
    if result.patch_count == 0 || &result.sections == contract.sections() {
        return Ok(contract.seal());
    }
    guard
        .check(contract.sections(), &result.sections)
        .map_err(|v| Rejection { reason: RejectReason::KernelViolation(v) })?;
    Ok(contract.with_merged(result.sections.clone()))
}
