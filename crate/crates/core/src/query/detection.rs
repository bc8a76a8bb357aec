//! A detection query: one traversal, or a disjunction of several whose
//! results are unioned.

use std::fmt;

use super::{execute, parse_query, QueryAst};
use crate::cpg::{CodePropertyGraph, NodeSet};
use crate::error::{ExecError, GrammarError};

/// Line separating the members of a union in query files.
pub const UNION_SEPARATOR: &str = "// ==== or ====";

#[derive(Debug, Clone, PartialEq)]
pub enum DetectionQuery {
    Single(QueryAst),
    Union(Vec<QueryAst>),
}

impl DetectionQuery {
    /// Parse a query file; members of a union are separated by
    /// [`UNION_SEPARATOR`] lines.
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut parts = vec![String::new()];
        for line in text.lines() {
            if line.trim() == UNION_SEPARATOR {
                parts.push(String::new());
            } else {
                let cur = parts.last_mut().expect("nonempty");
                cur.push_str(line);
                cur.push('\n');
            }
        }
        if parts.len() == 1 {
            return parse_query(text).map(DetectionQuery::Single);
        }
        parts.iter().map(|p| parse_query(p)).collect::<Result<_, _>>().map(DetectionQuery::Union)
    }

    pub fn members(&self) -> &[QueryAst] {
        match self {
            DetectionQuery::Single(q) => std::slice::from_ref(q),
            DetectionQuery::Union(m) => m,
        }
    }

    pub fn execute(&self, g: &CodePropertyGraph) -> Result<NodeSet, ExecError> {
        let mut out = NodeSet::new();
        for q in self.members() {
            out.extend(execute(q, g, false)?.0);
        }
        Ok(out)
    }
}

impl fmt::Display for DetectionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, q) in self.members().iter().enumerate() {
            if i > 0 {
                writeln!(f, "{UNION_SEPARATOR}")?;
            }
            write!(f, "{q}")?;
        }
        Ok(())
    }
}
