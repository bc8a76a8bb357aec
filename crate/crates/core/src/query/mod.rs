//! The detection-query language: parser, step registry, and an
//! instrumented interpreter over code property graphs.

mod ast;
mod detection;
mod interp;
mod parser;
mod pstate;
pub mod registry;
mod rewrite;

pub use ast::*;
pub use detection::{DetectionQuery, UNION_SEPARATOR};
pub use interp::{execute, execute_traced, execute_with_hook, reachable_by, ExecHook, Value};
pub use parser::parse_query;
pub use pstate::{PState, PStateParseError, Sample, Trace, ValueSummary, SAMPLE_LIMIT};
pub use registry::{list_api_catalog, StepRegistryEntry};
pub use rewrite::{rewrite_query, RewriteError};
