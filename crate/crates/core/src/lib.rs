//! Code property graphs for MiniLang, a traversal query language over them,
//! and a generate-validate-refine loop that synthesizes detection queries
//! with a language-model provider.

pub mod cpg;
pub mod error;
pub mod lang;
pub mod query;
pub mod provider;
pub mod dslspec;
pub mod validator;
pub mod generator;
pub mod corpus;
pub mod scan;
pub mod metrics;
pub mod config;

pub use cpg::{CodePropertyGraph, Edge, EdgeKind, Node, NodeId, NodeKind, NodeSet};
pub use error::*;
pub use lang::{Dataset, VulnExample};
