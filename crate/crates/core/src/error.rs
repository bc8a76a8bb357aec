use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::cpg::NodeId;

#[derive(Debug, thiserror::Error)]
pub enum CpgError {
    #[error("unknown node id {0}")]
    InvalidNodeId(NodeId),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// First syntax error found in a MiniLang source file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{file}:{line}:{column}: syntax error: expected {}, found {found}", expected.join(" or "))]
pub struct SyntaxError {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("no node at {file}:{start}-{end}")]
    NoNodeAtLabel { file: String, start: u32, end: u32 },
    #[error("no source files in {0}")]
    NoSourceFiles(String),
    #[error("dataset: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Character span within a query text, with 1-based line/column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Query text violates the DSL grammar. `rule` names the nonterminal whose
/// expansion failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("grammar error in <{rule}> at {span}: expected {}, found {found}", expected.join(" | "))]
pub struct GrammarError {
    pub rule: String,
    pub span: Span,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecErrorKind {
    UnknownStep,
    ArityMismatch,
    TypeMismatch,
    UnknownOperatorName,
    RegexError,
}

/// Runtime failure of a query block. `offending` is the identifier the
/// failure is about (step or operator name) and feeds fix suggestions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("block {block}: {kind:?}: {message}")]
pub struct ExecError {
    pub block: usize,
    pub kind: ExecErrorKind,
    pub message: String,
    pub offending: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("dslspec json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad grammar rule `{rule}`: {message}")]
    Rule { rule: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("transcript has no entry for ({example_id}, attempt {attempt})")]
    ScriptExhausted { example_id: String, attempt: u32 },
    #[error("provider config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no passing query after {max_attempts} attempts (last verdict {last_verdict})")]
    BudgetExhausted {
        max_attempts: u32,
        last_verdict: String,
    },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("{error}{}", suggestion_suffix(.suggestions))]
    Exec {
        error: ExecError,
        suggestions: Vec<String>,
    },
    #[error(transparent)]
    Cpg(#[from] CpgError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn suggestion_suffix(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!("; did you mean {}?", s.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LocalizeError {
    #[error("node {0} is not in the query result")]
    NotAnFp(NodeId),
}
