//! Queries and fixtures shipped with the crate.

use std::path::PathBuf;

use crate::query::{parse_query, QueryAst};

macro_rules! shipped {
    ($file:literal) => {
        include_str!(concat!("../fixtures/queries/", $file))
    };
}

/// Prototype pollution: an index write whose receiver is reachable from
/// an index read on the right-hand side of another assignment.
pub const PROTOTYPE_POLLUTION: &str = shipped!("prototype_pollution.q");
/// A first attempt with a wrong root and an unqualified operator name.
pub const BROKEN_ASSIGNMENT: &str = shipped!("broken_assignment.q");
/// [`PROTOTYPE_POLLUTION`] pinned to one function name.
pub const PROTO_MERGE_OPTIONS: &str = shipped!("proto_merge_options.q");
/// Every `sql` call, safe or not.
pub const SQLI_WRITES: &str = shipped!("sqli_writes.q");
/// `sql` calls whose query argument carries user input.
pub const SQLI: &str = shipped!("sqli.q");
pub const CMDI_EXEC: &str = shipped!("cmdi_exec.q");
pub const CMDI_EVAL: &str = shipped!("cmdi_eval.q");
/// [`CMDI_EXEC`] and [`CMDI_EVAL`] merged by regex alternation.
pub const CMDI: &str = shipped!("cmdi.q");

/// The example queries the api subset must keep expressible.
pub const EXAMPLE_QUERIES: [(&str, &str); 12] = [
    ("prototype_pollution", PROTOTYPE_POLLUTION),
    ("proto_tainted_key", shipped!("proto_tainted_key.q")),
    ("sqli_writes", SQLI_WRITES),
    ("sqli", SQLI),
    ("cmdi_exec", CMDI_EXEC),
    ("cmdi_eval", CMDI_EVAL),
    ("cmdi", CMDI),
    ("unsanitized_eval", shipped!("unsanitized_eval.q")),
    ("constant_commands", shipped!("constant_commands.q")),
    ("tainted_identifiers", shipped!("tainted_identifiers.q")),
    ("tainted_parameters", shipped!("tainted_parameters.q")),
    ("sink_identifiers", shipped!("sink_identifiers.q")),
];

pub fn example_queries() -> Vec<QueryAst> {
    EXAMPLE_QUERIES
        .iter()
        .map(|(name, text)| parse_query(text).unwrap_or_else(|e| panic!("shipped query {name}: {e}")))
        .collect()
}

/// Directory holding the fixture projects, `dataset.json`, queries and
/// transcripts.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Names of the fixture project directories.
pub const FIXTURE_PROJECTS: [&str; 8] = [
    "cmdi_eval",
    "cmdi_exec",
    "extend_config",
    "merge_options",
    "proto_pollution",
    "proto_sanitized",
    "sqli_two_writes",
    "taint_chain",
];
