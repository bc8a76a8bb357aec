use std::collections::BTreeSet;
use std::fmt::Write;

use super::builtins::GLOBAL_METHOD;
use super::VulnExample;
use crate::cpg::{CodePropertyGraph, NodeId, NodeKind, NodeSet};
use crate::error::FrontendError;

/// `(file, line)` pairs of the statement-level backward slice from the
/// example's sink lines: the sink lines, every line holding a node with a
/// data-flow path into a sink node, and the signature line of each
/// enclosing function.
pub fn slice_lines(g: &CodePropertyGraph, ex: &VulnExample) -> Result<BTreeSet<(String, u32)>, FrontendError> {
    let (start, end) = ex.sink_lines;
    let sinks = g.nodes_in_lines(&ex.sink_file, start, end);
    if sinks.is_empty() {
        return Err(FrontendError::NoNodeAtLabel {
            file: ex.sink_file.clone(),
            start,
            end,
        });
    }

    let mut closure: NodeSet = sinks.clone();
    let mut stack: Vec<NodeId> = sinks.into_iter().collect();
    while let Some(n) = stack.pop() {
        for &p in g.flow_predecessors(n) {
            if closure.insert(p) {
                stack.push(p);
            }
        }
    }

    let mut lines: BTreeSet<(String, u32)> = BTreeSet::new();
    for &id in &closure {
        let node = g.node(id).expect("closure nodes exist");
        lines.insert((node.file.clone(), node.line));
        let m = g.node(g.enclosing_method(id)).expect("method exists");
        if m.kind == NodeKind::Method && m.name != GLOBAL_METHOD {
            lines.insert((m.file.clone(), m.line));
        }
    }
    Ok(lines)
}

/// Source text of [`slice_lines`], grouped per file, each line prefixed
/// with its line number.
pub fn slice_example(g: &CodePropertyGraph, ex: &VulnExample) -> Result<String, FrontendError> {
    let lines = slice_lines(g, ex)?;
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for (file, line) in &lines {
        if current != Some(file.as_str()) {
            let _ = writeln!(out, "// file: {file}");
            current = Some(file);
        }
        let text = g
            .source_files()
            .get(file)
            .and_then(|src| src.lines().nth(*line as usize - 1))
            .unwrap_or("");
        let _ = writeln!(out, "{line:>4} | {text}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cpg, parse_program};

    fn example(lines: (u32, u32)) -> VulnExample {
        VulnExample {
            id: "e".into(),
            vuln_type: "cmd-injection".into(),
            project_dir: ".".into(),
            sink_file: "t.mini".into(),
            sink_lines: lines,
            description: String::new(),
        }
    }

    fn graph(src: &str) -> CodePropertyGraph {
        build_cpg(&parse_program(src, "t.mini").unwrap())
    }

    #[test]
    fn taint_chain_slice_has_three_lines() {
        let g = graph("let a = input();\nlet b = a;\nexec(b);\n");
        let s = slice_example(&g, &example((3, 3))).unwrap();
        assert_eq!(
            s,
            "// file: t.mini\n   1 | let a = input();\n   2 | let b = a;\n   3 | exec(b);\n"
        );
    }

    #[test]
    fn isolated_sink_keeps_signature() {
        let g = graph("function f() {\n  let z = 1;\n  exec(\"ls\");\n}\n");
        let s = slice_example(&g, &example((3, 3))).unwrap();
        assert_eq!(s, "// file: t.mini\n   1 | function f() {\n   3 |   exec(\"ls\");\n");
    }

    #[test]
    fn blank_line_has_no_node() {
        let g = graph("exec(1);\n\nexec(2);\n");
        assert!(matches!(
            slice_example(&g, &example((2, 2))),
            Err(FrontendError::NoNodeAtLabel { start: 2, .. })
        ));
    }
}
