//! Did-you-mean suggestions by edit distance over spec names.

use serde::{Deserialize, Serialize};

use crate::cpg::OP_PREFIX;
use crate::dslspec::DslSpec;
use crate::error::{ExecError, ExecErrorKind};

pub const MAX_CANDIDATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixKind {
    RenameOperator,
    RenameStep,
    Arity,
    Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixSuggestion {
    pub kind: FixKind,
    pub original: String,
    /// Ascending by distance.
    pub candidates: Vec<Candidate>,
}

/// Largest edit distance still offered for a name of `len` characters.
pub fn threshold(len: usize) -> usize {
    3.max(len.div_ceil(3))
}

fn distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(&a.to_lowercase(), &b.to_lowercase())
}

/// Spec names within [`threshold`] of `original`, closest first. Operator
/// names are compared by both full and short form; on equal distance
/// operators rank first, then names sort alphabetically.
pub fn rank_names(original: &str, spec: &DslSpec) -> Vec<Candidate> {
    let limit = threshold(original.chars().count());
    let mut scored: Vec<(usize, bool, String)> = spec
        .suggestion_names()
        .into_iter()
        .map(|name| match name.strip_prefix(OP_PREFIX) {
            Some(short) => (distance(original, &name).min(distance(original, short)), false, name),
            None => (distance(original, &name), true, name),
        })
        .filter(|(d, _, _)| *d <= limit)
        .collect();
    scored.sort();
    scored
        .into_iter()
        .take(MAX_CANDIDATES)
        .map(|(distance, _, name)| Candidate { name, distance })
        .collect()
}

/// Suggestions for an execution error, keyed on its offending name.
pub fn suggest_fix(err: &ExecError, spec: &DslSpec) -> Vec<FixSuggestion> {
    let kind = match err.kind {
        ExecErrorKind::UnknownStep => FixKind::RenameStep,
        ExecErrorKind::UnknownOperatorName => FixKind::RenameOperator,
        ExecErrorKind::ArityMismatch => FixKind::Arity,
        ExecErrorKind::TypeMismatch => FixKind::Signature,
        ExecErrorKind::RegexError => return Vec::new(),
    };
    suggest_name(kind, &err.offending, spec).into_iter().collect()
}

/// One suggestion for `original`, or none when nothing is close enough.
pub fn suggest_name(kind: FixKind, original: &str, spec: &DslSpec) -> Option<FixSuggestion> {
    let candidates = rank_names(original, spec);
    (!candidates.is_empty()).then(|| FixSuggestion {
        kind,
        original: original.to_string(),
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dslspec::extract_spec;

    fn top(s: &str) -> Option<Candidate> {
        rank_names(s, &extract_spec()).into_iter().next()
    }

    #[test]
    fn operator_short_name_matches() {
        assert_eq!(top("assignment").unwrap().name, "<operator>.assignment");
    }

    #[test]
    fn single_deletion() {
        let c = top("reachablBy").unwrap();
        assert_eq!((c.name.as_str(), c.distance), ("reachableBy", 1));
    }

    #[test]
    fn far_names_give_nothing() {
        assert!(top("zzzzzz").is_none());
    }

    #[test]
    fn case_insensitive_and_capped() {
        assert_eq!(top("NAMEEXACT").unwrap().distance, 0);
        let spec = extract_spec();
        assert!(rank_names("a", &spec).len() <= MAX_CANDIDATES);
        for c in rank_names("nam", &spec) {
            assert!(spec.suggestion_names().contains(&c.name));
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(threshold(1), 3);
        assert_eq!(threshold(10), 4);
        assert_eq!(threshold(21), 7);
    }
}
