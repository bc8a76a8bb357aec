//! Running a detection query over a project and reporting findings.

use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::cpg::{CodePropertyGraph, NodeId};
use crate::error::ScanError;
use crate::lang::load_project;
use crate::query::DetectionQuery;
use crate::validator::{suggest_fix, Candidate};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    /// File path as scanned: the project directory joined with the file's
    /// path inside it.
    pub file: String,
    pub line: u32,
    pub node: NodeId,
    pub query: String,
    pub code: String,
    pub vuln_type: String,
}

/// Findings for every result node, sorted by file, line and node.
/// `prefix` is prepended to the project-relative file names.
pub fn scan_graph(
    dq: &DetectionQuery,
    g: &CodePropertyGraph,
    query_id: &str,
    vuln_type: &str,
    prefix: &str,
) -> Result<Vec<Finding>, ScanError> {
    let result = dq.execute(g).map_err(|error| {
        let spec = crate::dslspec::extract_spec();
        let suggestions = suggest_fix(&error, &spec)
            .into_iter()
            .flat_map(|s| s.candidates.into_iter().map(|Candidate { name, .. }| name))
            .collect();
        ScanError::Exec { error, suggestions }
    })?;
    let mut out: Vec<Finding> = result
        .iter()
        .filter_map(|id| g.node(*id))
        .map(|n| Finding {
            file: if prefix.is_empty() {
                n.file.clone()
            } else {
                format!("{}/{}", prefix.trim_end_matches('/'), n.file)
            },
            line: n.line,
            node: n.id,
            query: query_id.to_string(),
            code: n.code.clone(),
            vuln_type: vuln_type.to_string(),
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Parse the query file and scan the project directory.
pub fn scan(query_path: &Path, project_dir: &Path, vuln_type: &str) -> Result<Vec<Finding>, ScanError> {
    let text = std::fs::read_to_string(query_path)?;
    let dq = DetectionQuery::parse(&text)?;
    let g = load_project(project_dir)?;
    let query_id = query_path
        .file_stem()
        .map_or_else(|| query_path.display().to_string(), |s| s.to_string_lossy().into_owned());
    let prefix: Vec<String> = project_dir
        .components()
        .filter(|c| !matches!(c, Component::CurDir))
        .map(|c| match c {
            Component::RootDir => String::new(),
            c => c.as_os_str().to_string_lossy().into_owned(),
        })
        .collect();
    scan_graph(&dq, &g, &query_id, vuln_type, &prefix.join("/"))
}

pub fn findings_to_json(findings: &[Finding]) -> String {
    let mut s = serde_json::to_string_pretty(findings).expect("findings serialize");
    s.push('\n');
    s
}

pub fn findings_from_json(text: &str) -> Result<Vec<Finding>, ScanError> {
    serde_json::from_str(text).map_err(|e| ScanError::Config(format!("findings: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{fixtures_dir, PROTOTYPE_POLLUTION};

    #[test]
    fn prototype_query_finds_the_labeled_line_only() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("proto.q");
        std::fs::write(&q, PROTOTYPE_POLLUTION).unwrap();
        let f = scan(&q, &fixtures_dir().join("proto_pollution"), "prototype-pollution").unwrap();
        assert_eq!(f.len(), 1);
        assert!(f[0].file.ends_with("proto_pollution/proto_pollution.mini"));
        assert_eq!((f[0].line, f[0].query.as_str()), (3, "proto"));
        let back = findings_from_json(&findings_to_json(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn empty_project_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("q.q");
        std::fs::write(&q, "cpg.call").unwrap();
        let err = scan(&q, dir.path(), "x").unwrap_err();
        assert!(err.to_string().contains("no source files"), "{err}");
    }

    #[test]
    fn exec_errors_carry_suggestions() {
        let g = CodePropertyGraph::default();
        let dq = DetectionQuery::parse("cpg.call.reachablBy(cpg)").unwrap();
        let err = scan_graph(&dq, &g, "q", "t", "").unwrap_err();
        assert!(err.to_string().contains("did you mean reachableBy"), "{err}");
    }
}
