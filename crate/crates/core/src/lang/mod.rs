//! MiniLang frontend: parsing, CPG construction, slicing, and datasets.

mod ast;
mod builder;
pub mod builtins;
mod dataset;
mod parser;
mod slice;

pub use ast::*;
pub use builder::{build_cpg, build_project_cpg};
pub use dataset::{load_project, Dataset, VulnExample};
pub use parser::parse_program;
pub use slice::{slice_example, slice_lines};
