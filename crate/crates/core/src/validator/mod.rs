//! Trace-driven validation of a candidate query against one labeled
//! example: verdicts, program-state feedback, fix suggestions, overfitting
//! flags and false-positive localization.

mod localize;
mod overfit;
mod suggest;

use std::collections::BTreeSet;
use std::fmt::{self, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use localize::localize_fp;
pub use overfit::{detect_overfit, OverfitFlag, OverfitKind, ALLOWED_CONSTANTS, MAX_AST_DEPTH};
pub use suggest::{
    rank_names, suggest_fix, suggest_name, threshold, Candidate, FixKind, FixSuggestion, MAX_CANDIDATES,
};

use crate::cpg::{CodePropertyGraph, NodeId, NodeSet};
use crate::dslspec::{extract_spec, DslSpec};
use crate::error::{ExecError, GrammarError};
use crate::lang::{slice_lines, VulnExample};
use crate::query::{execute_traced, parse_query, Arg, DetectionQuery, PState, QueryAst, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    SyntaxError,
    ExecError,
    SemanticMiss,
    FalsePositives,
    Pass,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A block whose output was empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyStage {
    pub block: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detail {
    Grammar(GrammarError),
    Exec(ExecError),
    Semantic {
        /// Nodes on the example's sink lines.
        expected: Vec<NodeId>,
        found: Vec<NodeId>,
        empty_stage: Option<EmptyStage>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub detail: Detail,
    pub suggestions: Vec<FixSuggestion>,
    /// Present whenever the query parsed.
    pub pstate: Option<PState>,
    /// `pstate` restricted to nodes on the example's slice lines.
    pub example_states: Option<PState>,
    pub fp_nodes: NodeSet,
    pub result: NodeSet,
    pub trace: Option<Trace>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    verdict: Verdict,
    detail: &'a Detail,
    suggestions: &'a [FixSuggestion],
    pstate: Option<String>,
    example_states: Option<String>,
    fp_nodes: &'a NodeSet,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Whether the query ran and found the example.
    pub fn retrieved(&self) -> bool {
        matches!(self.verdict, Verdict::Pass | Verdict::FalsePositives)
    }

    /// `report.json` contents; program states in their text form.
    pub fn to_json(&self) -> String {
        let f = ReportFile {
            verdict: self.verdict,
            detail: &self.detail,
            suggestions: &self.suggestions,
            pstate: self.pstate.as_ref().map(PState::to_text),
            example_states: self.example_states.as_ref().map(PState::to_text),
            fp_nodes: &self.fp_nodes,
        };
        let mut s = serde_json::to_string_pretty(&f).expect("report serializes");
        s.push('\n');
        s
    }

    /// Feedback text for a model prompt.
    pub fn feedback(&self, g: &CodePropertyGraph) -> String {
        let mut out = format!("Verdict: {}\n", self.verdict);
        match &self.detail {
            Detail::Grammar(e) => {
                let _ = writeln!(out, "Syntax error: {e}");
            }
            Detail::Exec(e) => {
                let _ = writeln!(out, "Execution error: {e}");
            }
            Detail::Semantic { empty_stage, .. } => {
                match self.verdict {
                    Verdict::SemanticMiss => {
                        out.push_str("The query ran but did not retrieve the vulnerable line.\n")
                    }
                    Verdict::FalsePositives => {
                        out.push_str("The query retrieved the vulnerable line plus these unlabeled nodes:\n");
                        for n in self.fp_nodes.iter().filter_map(|id| g.node(*id)) {
                            let _ = writeln!(out, "  {}:{} {}", n.file, n.line, n.code);
                        }
                    }
                    _ => {}
                }
                if let Some(s) = empty_stage {
                    let _ = writeln!(out, "Block {} `{}` produced no nodes.", s.block, s.text);
                }
            }
        }
        for s in &self.suggestions {
            let names: Vec<_> = s.candidates.iter().map(|c| c.name.as_str()).collect();
            let _ = writeln!(out, "Did you mean {} instead of \"{}\"?", names.join(", "), s.original);
        }
        let states = match self.verdict {
            Verdict::SemanticMiss => self.example_states.as_ref(),
            _ => self.pstate.as_ref(),
        };
        if let Some(p) = states {
            out.push_str("Program states after each block:\n");
            out.push_str(&p.to_text());
        }
        out
    }
}

fn full_spec() -> &'static DslSpec {
    static SPEC: OnceLock<DslSpec> = OnceLock::new();
    SPEC.get_or_init(extract_spec)
}

/// Validate `q_text` against `ex` using the full api catalog for
/// suggestions. `labels` are all labeled sinks of the example's project.
pub fn validate(q_text: &str, g: &CodePropertyGraph, ex: &VulnExample, labels: &[VulnExample]) -> ValidationReport {
    validate_with(q_text, g, ex, labels, full_spec())
}

pub fn validate_with(
    q_text: &str,
    g: &CodePropertyGraph,
    ex: &VulnExample,
    labels: &[VulnExample],
    spec: &DslSpec,
) -> ValidationReport {
    match parse_query(q_text) {
        Ok(q) => validate_ast(&q, g, ex, labels, spec),
        Err(e) => ValidationReport {
            verdict: Verdict::SyntaxError,
            detail: Detail::Grammar(e),
            suggestions: Vec::new(),
            pstate: None,
            example_states: None,
            fp_nodes: NodeSet::new(),
            result: NodeSet::new(),
            trace: None,
        },
    }
}

pub fn validate_ast(
    q: &QueryAst,
    g: &CodePropertyGraph,
    ex: &VulnExample,
    labels: &[VulnExample],
    spec: &DslSpec,
) -> ValidationReport {
    let (res, trace) = execute_traced(q, g);
    let pstate = trace.summarize(g);
    let result = match res {
        Ok(r) => r,
        Err(e) => {
            return ValidationReport {
                verdict: Verdict::ExecError,
                suggestions: suggest_fix(&e, spec),
                detail: Detail::Exec(e),
                pstate: Some(pstate),
                example_states: None,
                fp_nodes: NodeSet::new(),
                result: NodeSet::new(),
                trace: Some(trace),
            }
        }
    };
    let (verdict, fp_nodes) = classify(&result, g, ex, labels);
    let empty_stage = (1..=trace.len()).find(|&j| trace.current(j).is_empty()).map(|j| EmptyStage {
        block: j,
        text: q.blocks[j - 1].text.clone(),
    });
    let mut suggestions = Vec::new();
    if verdict == Verdict::SemanticMiss {
        if let Some(s) = &empty_stage {
            suggestions.extend(empty_stage_suggestion(q, s.block, spec));
        }
    }
    let slice: BTreeSet<(String, u32)> = slice_lines(g, ex).unwrap_or_default();
    let example_states = trace.summarize_filtered(g, |n| slice.contains(&(n.file.clone(), n.line)));
    let (s, e) = ex.sink_lines;
    ValidationReport {
        verdict,
        detail: Detail::Semantic {
            expected: g.nodes_in_lines(&ex.sink_file, s, e).into_iter().collect(),
            found: result.iter().copied().collect(),
            empty_stage,
        },
        suggestions,
        pstate: Some(pstate),
        example_states: Some(example_states),
        fp_nodes,
        result,
        trace: Some(trace),
    }
}

/// Semantic verdict of a result set: whether it retrieves `ex`, and which
/// result nodes lie outside every label.
pub fn classify(
    result: &NodeSet,
    g: &CodePropertyGraph,
    ex: &VulnExample,
    labels: &[VulnExample],
) -> (Verdict, NodeSet) {
    let in_label = |id: &NodeId, l: &VulnExample| g.node(*id).is_some_and(|n| l.covers(&n.file, n.line));
    let retrieved = result.iter().any(|id| in_label(id, ex));
    let fp_nodes: NodeSet = result
        .iter()
        .filter(|id| !in_label(id, ex) && !labels.iter().any(|l| in_label(id, l)))
        .copied()
        .collect();
    let verdict = match (retrieved, fp_nodes.is_empty()) {
        (false, _) => Verdict::SemanticMiss,
        (true, false) => Verdict::FalsePositives,
        (true, true) => Verdict::Pass,
    };
    (verdict, fp_nodes)
}

/// Validate a possibly disjunctive query. A union is judged on the union
/// of its members' results; its states are the members' states in order.
pub fn validate_detection(
    dq: &DetectionQuery,
    g: &CodePropertyGraph,
    ex: &VulnExample,
    labels: &[VulnExample],
    spec: &DslSpec,
) -> ValidationReport {
    let members = match dq {
        DetectionQuery::Single(q) => return validate_ast(q, g, ex, labels, spec),
        DetectionQuery::Union(m) => m,
    };
    let mut result = NodeSet::new();
    let mut pstate = PState::default();
    for q in members {
        let r = validate_ast(q, g, ex, labels, spec);
        if r.verdict == Verdict::ExecError {
            return r;
        }
        pstate.states.extend(r.pstate.into_iter().flat_map(|p| p.states));
        result.extend(r.result);
    }
    let (verdict, fp_nodes) = classify(&result, g, ex, labels);
    let (s, e) = ex.sink_lines;
    ValidationReport {
        verdict,
        detail: Detail::Semantic {
            expected: g.nodes_in_lines(&ex.sink_file, s, e).into_iter().collect(),
            found: result.iter().copied().collect(),
            empty_stage: None,
        },
        suggestions: Vec::new(),
        pstate: Some(pstate),
        example_states: None,
        fp_nodes,
        result,
        trace: None,
    }
}

/// A string argument of an emptied block that names no node but resembles
/// a spec name.
fn empty_stage_suggestion(q: &QueryAst, block: usize, spec: &DslSpec) -> Option<FixSuggestion> {
    let b = &q.blocks[block - 1];
    let step = &q.chain(b.chain).steps[b.step?];
    if !matches!(step.name.as_str(), "name" | "nameExact") {
        return None;
    }
    let Some(Arg::Str(s)) = step.args.first() else { return None };
    let candidates: Vec<Candidate> = rank_names(s, spec).into_iter().filter(|c| c.name != *s).collect();
    (!candidates.is_empty()).then(|| FixSuggestion {
        kind: FixKind::RenameOperator,
        original: s.clone(),
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cpg, parse_program};

    fn setup() -> (CodePropertyGraph, VulnExample) {
        let src = "let q = input();\nexec(q);\nexec(\"ls\");\n";
        let g = build_cpg(&parse_program(src, "a.mini").unwrap());
        let ex = VulnExample {
            id: "e".into(),
            vuln_type: "cmd".into(),
            project_dir: ".".into(),
            sink_file: "a.mini".into(),
            sink_lines: (2, 2),
            description: String::new(),
        };
        (g, ex)
    }

    #[test]
    fn verdicts() {
        let (g, ex) = setup();
        let labels = [ex.clone()];
        let v = |q: &str| validate(q, &g, &ex, &labels).verdict;
        assert_eq!(v("code.call"), Verdict::SyntaxError);
        assert_eq!(v("cpg.call.reachablBy(cpg)"), Verdict::ExecError);
        assert_eq!(v("cpg.call.nameExact(\"sql\")"), Verdict::SemanticMiss);
        assert_eq!(v("cpg.call.nameExact(\"exec\")"), Verdict::FalsePositives);
        assert_eq!(
            v("cpg.call.nameExact(\"exec\").where(_.argument(1).reachableBy(cpg.call.nameExact(\"input\")))"),
            Verdict::Pass
        );
    }

    #[test]
    fn exec_error_carries_suggestion_and_states() {
        let (g, ex) = setup();
        let r = validate("cpg.call.reachablBy(cpg)", &g, &ex, &[]);
        assert_eq!(r.suggestions[0].candidates[0].name, "reachableBy");
        assert_eq!(r.pstate.as_ref().unwrap().len(), 1);
        assert!(r.feedback(&g).contains("Did you mean reachableBy"));
    }

    #[test]
    fn empty_stage_is_reported() {
        let (g, ex) = setup();
        let r = validate("cpg.call.nameExact(\"assignment\")", &g, &ex, &[]);
        let Detail::Semantic { empty_stage, .. } = &r.detail else { panic!() };
        assert_eq!(empty_stage.as_ref().unwrap().block, 2);
        assert_eq!(r.suggestions[0].candidates[0].name, "<operator>.assignment");
        let text = r.to_json();
        assert!(text.contains("\"verdict\": \"SemanticMiss\""));
    }

    #[test]
    fn other_labels_are_not_fps() {
        let (g, ex) = setup();
        let mut other = ex.clone();
        other.id = "o".into();
        other.sink_lines = (3, 3);
        let r = validate("cpg.call.nameExact(\"exec\")", &g, &ex, &[ex.clone(), other]);
        assert_eq!(r.verdict, Verdict::Pass);
    }
}
