//! Canonical line-oriented CPG serialization.
//!
//! ```text
//! CPG v1
//! F <file> <text-base64>
//! N <id> <kind> <name> <line> <col> <file> <code-base64>
//! E <src> <dst> <kind> [<label>]
//! ```
//!
//! `name` and `file` are space-free tokens: `%` escapes whitespace and `%`
//! itself, and a lone `%` stands for the empty string.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::{CodePropertyGraph, Edge, Node};
use crate::error::CpgError;

const HEADER: &str = "CPG v1";

/// Render the canonical text form.
pub fn write_cpg(g: &CodePropertyGraph) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (file, text) in g.source_files() {
        let _ = writeln!(out, "F {} {}", escape_token(file), B64.encode(text));
    }
    for n in g.nodes() {
        let _ = writeln!(
            out,
            "N {} {} {} {} {} {} {}",
            n.id,
            n.kind,
            escape_token(&n.name),
            n.line,
            n.column,
            escape_token(&n.file),
            B64.encode(&n.code)
        );
    }
    for e in g.edges() {
        match e.label {
            Some(l) => {
                let _ = writeln!(out, "E {} {} {} {}", e.src, e.dst, e.kind, l);
            }
            None => {
                let _ = writeln!(out, "E {} {} {}", e.src, e.dst, e.kind);
            }
        }
    }
    out
}

/// Parse and validate the canonical text form.
pub fn read_cpg(text: &str) -> Result<CodePropertyGraph, CpgError> {
    let mut nodes: BTreeMap<u32, Node> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut files = BTreeMap::new();

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        None => return Ok(CodePropertyGraph::default()),
        Some((_, h)) if h.trim_end() == HEADER => {}
        Some((n, _)) => return Err(format_err(n, "expected header `CPG v1`")),
    }

    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        match fields[0] {
            "F" => {
                if fields.len() != 3 {
                    return Err(format_err(lineno, "file record needs 2 fields"));
                }
                let text = decode_b64(fields[2], lineno)?;
                files.insert(unescape_token(fields[1], lineno)?, text);
            }
            "N" => {
                if fields.len() != 8 {
                    return Err(format_err(lineno, "node record needs 7 fields"));
                }
                let node = Node {
                    id: parse_num(fields[1], lineno)?,
                    kind: fields[2].parse().map_err(|m| format_err(lineno, m))?,
                    name: unescape_token(fields[3], lineno)?,
                    line: parse_num(fields[4], lineno)?,
                    column: parse_num(fields[5], lineno)?,
                    file: unescape_token(fields[6], lineno)?,
                    code: decode_b64(fields[7], lineno)?,
                };
                if nodes.insert(node.id, node).is_some() {
                    return Err(CpgError::Invariant(format!(
                        "duplicate node id {}",
                        fields[1]
                    )));
                }
            }
            "E" => {
                if !(4..=5).contains(&fields.len()) {
                    return Err(format_err(lineno, "edge record needs 3 or 4 fields"));
                }
                edges.push(Edge {
                    src: parse_num(fields[1], lineno)?,
                    dst: parse_num(fields[2], lineno)?,
                    kind: fields[3].parse().map_err(|m| format_err(lineno, m))?,
                    label: match fields.get(4) {
                        Some(l) => Some(parse_num(l, lineno)?),
                        None => None,
                    },
                });
            }
            other => return Err(format_err(lineno, format!("unknown record tag `{other}`"))),
        }
    }

    let g = CodePropertyGraph::from_parts(nodes.into_values(), edges, files);
    g.validate()?;
    Ok(g)
}

pub fn export_cpg(g: &CodePropertyGraph, path: impl AsRef<Path>) -> Result<(), CpgError> {
    fs::write(path, write_cpg(g))?;
    Ok(())
}

pub fn import_cpg(path: impl AsRef<Path>) -> Result<CodePropertyGraph, CpgError> {
    read_cpg(&fs::read_to_string(path)?)
}

fn format_err(line: usize, message: impl Into<String>) -> CpgError {
    CpgError::Format {
        line,
        message: message.into(),
    }
}

fn parse_num(s: &str, line: usize) -> Result<u32, CpgError> {
    s.parse()
        .map_err(|_| format_err(line, format!("expected integer, found `{s}`")))
}

fn decode_b64(s: &str, line: usize) -> Result<String, CpgError> {
    let bytes = B64
        .decode(s)
        .map_err(|e| format_err(line, format!("bad base64: {e}")))?;
    String::from_utf8(bytes).map_err(|_| format_err(line, "code is not UTF-8"))
}

fn escape_token(s: &str) -> String {
    if s.is_empty() {
        return "%".to_string();
    }
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_token(s: &str, line: usize) -> Result<String, CpgError> {
    if s == "%" {
        return Ok(String::new());
    }
    if s.is_empty() {
        return Err(format_err(line, "empty token"));
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest
            .get(pos + 1..pos + 3)
            .ok_or_else(|| format_err(line, "truncated escape"))?;
        out.push(match code {
            "25" => '%',
            "20" => ' ',
            "09" => '\t',
            "0A" => '\n',
            "0D" => '\r',
            _ => return Err(format_err(line, format!("unknown escape %{code}"))),
        });
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::NodeKind;

    fn one_node_graph() -> CodePropertyGraph {
        CodePropertyGraph::from_parts(
            [Node {
                id: 0,
                kind: NodeKind::Method,
                name: "<global>".into(),
                code: "".into(),
                line: 1,
                column: 0,
                file: "a b.mini".into(),
            }],
            [],
            BTreeMap::new(),
        )
    }

    #[test]
    fn empty_graph_has_only_header() {
        let text = write_cpg(&CodePropertyGraph::default());
        assert_eq!(text, "CPG v1\n");
        assert!(read_cpg(&text).unwrap().is_empty());
    }

    #[test]
    fn empty_file_is_empty_graph() {
        assert!(read_cpg("").unwrap().is_empty());
    }

    #[test]
    fn single_node_record_has_seven_fields() {
        let text = write_cpg(&one_node_graph());
        let node_lines: Vec<&str> = text.lines().filter(|l| l.starts_with("N ")).collect();
        assert_eq!(node_lines.len(), 1);
        assert_eq!(node_lines[0].split(' ').count(), 8);
        assert!(node_lines[0].contains("a%20b.mini"));
        assert_eq!(read_cpg(&text).unwrap(), one_node_graph());
    }

    #[test]
    fn dangling_edge_names_the_endpoint() {
        let mut text = write_cpg(&one_node_graph());
        text.push_str("E 99 0 AST 1\n");
        let err = read_cpg(&text).unwrap_err();
        assert_eq!(err.to_string(), "invariant violated: edge src 99");
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = read_cpg("CPG v1\nN 1 METHOD\n").unwrap_err();
        assert!(matches!(err, CpgError::Format { line: 2, .. }));
    }

    #[test]
    fn token_escaping_round_trips() {
        for s in ["", "%", "a b", "x%20y", "tab\there", "<operator>.assignment"] {
            assert_eq!(unescape_token(&escape_token(s), 1).unwrap(), s);
        }
    }
}
