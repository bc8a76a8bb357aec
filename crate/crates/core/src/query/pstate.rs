//! Program states recorded after every block, and their text form.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ast::Block;
use super::interp::{ExecHook, Value};
use crate::cpg::{CodePropertyGraph, Node, NodeId, NodeKind};

/// Maximum number of sample nodes kept per summarized value.
pub const SAMPLE_LIMIT: usize = 8;

/// Full-fidelity record of an instrumented run: for every block, the chain
/// it belongs to and the complete environment after it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub keys: Vec<String>,
    pub states: Vec<BTreeMap<String, Value>>,
}

impl ExecHook for Trace {
    fn after_block(&mut self, _block: &Block, key: &str, env: &BTreeMap<String, Value>) {
        self.keys.push(key.to_string());
        self.states.push(env.clone());
    }
}

impl Trace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Value of the chain block `j` (1-based) belongs to, right after it.
    pub fn current(&self, j: usize) -> &Value {
        &self.states[j - 1][&self.keys[j - 1]]
    }

    pub fn summarize(&self, g: &CodePropertyGraph) -> PState {
        self.summarize_filtered(g, |_| true)
    }

    /// Summaries counting and sampling only nodes accepted by `keep`.
    pub fn summarize_filtered(&self, g: &CodePropertyGraph, keep: impl Fn(&Node) -> bool) -> PState {
        let states = self
            .states
            .iter()
            .map(|env| {
                env.iter()
                    .map(|(k, v)| (k.clone(), ValueSummary::of(v, g, &keep)))
                    .collect()
            })
            .collect();
        PState { states }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: NodeId,
    pub kind: NodeKind,
    pub code: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub count: usize,
    /// The value is a count (from `size`), not a node set.
    pub scalar: bool,
    pub samples: Vec<Sample>,
}

impl ValueSummary {
    fn of(v: &Value, g: &CodePropertyGraph, keep: &impl Fn(&Node) -> bool) -> Self {
        match v {
            Value::Count(c) => ValueSummary {
                count: *c,
                scalar: true,
                samples: Vec::new(),
            },
            Value::Nodes(set) => {
                let nodes: Vec<&Node> = set.iter().filter_map(|id| g.node(*id)).filter(|n| keep(n)).collect();
                ValueSummary {
                    count: nodes.len(),
                    scalar: false,
                    samples: nodes
                        .iter()
                        .take(SAMPLE_LIMIT)
                        .map(|n| Sample {
                            id: n.id,
                            kind: n.kind,
                            code: n.code.clone(),
                            line: n.line,
                        })
                        .collect(),
                }
            }
        }
    }
}

/// Summarized program states S_1..S_n.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PState {
    pub states: Vec<BTreeMap<String, ValueSummary>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("pstate line {line}: {message}")]
pub struct PStateParseError {
    pub line: usize,
    pub message: String,
}

impl PState {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Line-oriented text: `S <j>` headers followed by
    /// `V <name> <count> <samples>` lines, samples written as JSON arrays
    /// `[id,"KIND",line,"code"]`, or `scalar` for counts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (j, s) in self.states.iter().enumerate() {
            let _ = writeln!(out, "S {}", j + 1);
            for (name, v) in s {
                let _ = write!(out, "V {name} {}", v.count);
                if v.scalar {
                    out.push_str(" scalar");
                }
                for smp in &v.samples {
                    let _ = write!(
                        out,
                        " [{},\"{}\",{},{}]",
                        smp.id,
                        smp.kind,
                        smp.line,
                        serde_json::to_string(&smp.code).expect("string serializes")
                    );
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PStateParseError> {
        let mut states: Vec<BTreeMap<String, ValueSummary>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let fail = |m: &str| PStateParseError {
                line: i + 1,
                message: m.to_string(),
            };
            if let Some(j) = line.strip_prefix("S ") {
                let j: usize = j.trim().parse().map_err(|_| fail("bad state index"))?;
                if j != states.len() + 1 {
                    return Err(fail("state indices must be consecutive"));
                }
                states.push(BTreeMap::new());
            } else if let Some(rest) = line.strip_prefix("V ") {
                let state = states.last_mut().ok_or_else(|| fail("value before first state"))?;
                let mut parts = rest.splitn(3, ' ');
                let name = parts.next().ok_or_else(|| fail("missing name"))?;
                let count = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| fail("bad count"))?;
                let mut tail = parts.next().unwrap_or("").trim_start();
                let scalar = tail.starts_with("scalar");
                if scalar {
                    tail = tail["scalar".len()..].trim_start();
                }
                let samples = serde_json::Deserializer::from_str(tail)
                    .into_iter::<(NodeId, String, u32, String)>()
                    .map(|r| {
                        let (id, kind, line, code) = r.map_err(|e| fail(&e.to_string()))?;
                        let kind = kind.parse().map_err(|_| fail("bad node kind"))?;
                        Ok(Sample { id, kind, code, line })
                    })
                    .collect::<Result<Vec<_>, PStateParseError>>()?;
                state.insert(
                    name.to_string(),
                    ValueSummary {
                        count,
                        scalar,
                        samples,
                    },
                );
            } else if !line.trim().is_empty() {
                return Err(fail("expected `S` or `V` record"));
            }
        }
        Ok(PState { states })
    }

    /// Hex SHA-256 of the text form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cpg, parse_program};
    use crate::query::{execute, parse_query};

    #[test]
    fn text_round_trip_with_awkward_code() {
        let g = build_cpg(&parse_program("let a = \"x y\\\"z\";\nexec(a);", "t.mini").unwrap());
        let q = parse_query("def lits = cpg.literal\ndef n = lits.size\ncpg.call").unwrap();
        let (_, ps) = execute(&q, &g, true).unwrap();
        let ps = ps.unwrap();
        let text = ps.to_text();
        assert!(text.starts_with("S 1\nV lits 1 [") , "{text}");
        assert!(text.contains("V n 1 scalar"));
        assert_eq!(PState::from_text(&text).unwrap(), ps);
    }

    #[test]
    fn samples_are_capped() {
        let src: String = (0..20).map(|i| format!("exec({i});\n")).collect();
        let g = build_cpg(&parse_program(&src, "t.mini").unwrap());
        let (_, ps) = execute(&parse_query("cpg.literal").unwrap(), &g, true).unwrap();
        let v = &ps.unwrap().states[0]["$result"];
        assert_eq!(v.count, 20);
        assert_eq!(v.samples.len(), SAMPLE_LIMIT);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(PState::from_text("V x 1\n").is_err());
        assert!(PState::from_text("S 2\n").is_err());
        assert!(PState::from_text("S 1\nV x one\n").is_err());
    }
}
