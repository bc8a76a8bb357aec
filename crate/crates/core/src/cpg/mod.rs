//! Code property graph: one node set layered with AST, CFG and data-flow edges.
//!
//! A [`CodePropertyGraph`] is immutable once built. Adjacency indices are
//! computed at construction so traversal steps never scan the edge list.

mod format;
mod oracle;
mod synth;

pub use format::{export_cpg, import_cpg, read_cpg, write_cpg};
pub use oracle::dataflow_reach_oracle;
pub use synth::random_flow_graph;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CpgError;

pub type NodeId = u32;

/// Ordered set of node ids. Ordered so every derived output is deterministic.
pub type NodeSet = BTreeSet<NodeId>;

pub const OP_PREFIX: &str = "<operator>.";
pub const OP_ASSIGNMENT: &str = "<operator>.assignment";
pub const OP_INDEX_ACCESS: &str = "<operator>.indexAccess";
pub const OP_FIELD_ACCESS: &str = "<operator>.fieldAccess";
pub const OP_ADDITION: &str = "<operator>.addition";
pub const OP_EQUALS: &str = "<operator>.equals";

/// Every operator name the frontend emits, in canonical order.
pub const OPERATOR_NAMES: [&str; 5] = [
    OP_ASSIGNMENT,
    OP_INDEX_ACCESS,
    OP_FIELD_ACCESS,
    OP_ADDITION,
    OP_EQUALS,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Method,
    Param,
    Block,
    Call,
    Identifier,
    Literal,
    Return,
}

impl NodeKind {
    pub const ALL: [NodeKind; 7] = [
        NodeKind::Method,
        NodeKind::Param,
        NodeKind::Block,
        NodeKind::Call,
        NodeKind::Identifier,
        NodeKind::Literal,
        NodeKind::Return,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Method => "METHOD",
            NodeKind::Param => "PARAM",
            NodeKind::Block => "BLOCK",
            NodeKind::Call => "CALL",
            NodeKind::Identifier => "IDENTIFIER",
            NodeKind::Literal => "LITERAL",
            NodeKind::Return => "RETURN",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    Ast,
    Cfg,
    ReachingDef,
    CallEdge,
    ArgToParam,
    ReturnToCall,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::Ast,
        EdgeKind::Cfg,
        EdgeKind::ReachingDef,
        EdgeKind::CallEdge,
        EdgeKind::ArgToParam,
        EdgeKind::ReturnToCall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Ast => "AST",
            EdgeKind::Cfg => "CFG",
            EdgeKind::ReachingDef => "REACHING_DEF",
            EdgeKind::CallEdge => "CALL_EDGE",
            EdgeKind::ArgToParam => "ARG_TO_PARAM",
            EdgeKind::ReturnToCall => "RETURN_TO_CALL",
        }
    }

    /// Edge kinds that carry data flow.
    pub fn is_data_flow(self) -> bool {
        matches!(
            self,
            EdgeKind::ReachingDef | EdgeKind::ArgToParam | EdgeKind::ReturnToCall
        )
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown edge kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Callee or operator name for calls, variable name for identifiers and
    /// parameters, function name for methods. Empty for literals.
    pub name: String,
    pub code: String,
    pub line: u32,
    pub column: u32,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    /// Argument/child order for AST edges (1-based).
    pub label: Option<u32>,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId, kind: EdgeKind) -> Self {
        Edge {
            src,
            dst,
            kind,
            label: None,
        }
    }

    pub fn ast(src: NodeId, dst: NodeId, order: u32) -> Self {
        Edge {
            src,
            dst,
            kind: EdgeKind::Ast,
            label: Some(order),
        }
    }

    /// Canonical sort key: numeric endpoints, then kind name, then label.
    fn sort_key(&self) -> (NodeId, NodeId, &'static str, Option<u32>) {
        (self.src, self.dst, self.kind.as_str(), self.label)
    }
}

#[derive(Debug, Clone, Default)]
struct Adjacency {
    ast_children: BTreeMap<NodeId, Vec<(u32, NodeId)>>,
    ast_parent: BTreeMap<NodeId, NodeId>,
    flow_out: BTreeMap<NodeId, Vec<NodeId>>,
    flow_in: BTreeMap<NodeId, Vec<NodeId>>,
}

#[derive(Debug, Clone, Default)]
pub struct CodePropertyGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    roots: Vec<NodeId>,
    source_files: BTreeMap<String, String>,
    adj: Adjacency,
}

impl PartialEq for CodePropertyGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.roots == other.roots
            && self.source_files == other.source_files
    }
}

impl Eq for CodePropertyGraph {}

impl CodePropertyGraph {
    /// Assemble a graph without checking structural invariants. Edges are
    /// put in canonical order. Use [`CodePropertyGraph::validate`] to check.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = Edge>,
        source_files: BTreeMap<String, String>,
    ) -> Self {
        let nodes: BTreeMap<NodeId, Node> = nodes.into_iter().map(|n| (n.id, n)).collect();
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        edges.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        edges.dedup();

        let mut adj = Adjacency::default();
        for e in &edges {
            match e.kind {
                EdgeKind::Ast => {
                    adj.ast_children
                        .entry(e.src)
                        .or_default()
                        .push((e.label.unwrap_or(0), e.dst));
                    adj.ast_parent.insert(e.dst, e.src);
                }
                k if k.is_data_flow() => {
                    adj.flow_out.entry(e.src).or_default().push(e.dst);
                    adj.flow_in.entry(e.dst).or_default().push(e.src);
                }
                _ => {}
            }
        }
        for children in adj.ast_children.values_mut() {
            children.sort();
        }
        let roots = nodes
            .values()
            .filter(|n| n.kind == NodeKind::Method && !adj.ast_parent.contains_key(&n.id))
            .map(|n| n.id)
            .collect();

        CodePropertyGraph {
            nodes,
            edges,
            roots,
            source_files,
            adj,
        }
    }

    /// Check every structural invariant; the first violation is returned.
    pub fn validate(&self) -> Result<(), CpgError> {
        for e in &self.edges {
            if !self.nodes.contains_key(&e.src) {
                return Err(CpgError::Invariant(format!("edge src {}", e.src)));
            }
            if !self.nodes.contains_key(&e.dst) {
                return Err(CpgError::Invariant(format!("edge dst {}", e.dst)));
            }
        }
        for n in self.nodes.values() {
            if n.kind == NodeKind::Call && n.name.is_empty() {
                return Err(CpgError::Invariant(format!("call node {} has no name", n.id)));
            }
            if n.line == 0 {
                return Err(CpgError::Invariant(format!("node {} has line 0", n.id)));
            }
        }
        for (parent, children) in &self.adj.ast_children {
            if self.nodes[parent].kind == NodeKind::Call {
                for (i, (label, child)) in children.iter().enumerate() {
                    if *label as usize != i + 1 {
                        return Err(CpgError::Invariant(format!(
                            "AST labels under call {parent} not contiguous at child {child}"
                        )));
                    }
                }
            }
        }
        let mut seen = NodeSet::new();
        let mut stack: Vec<NodeId> = self.roots.clone();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                return Err(CpgError::Invariant(format!("AST cycle through node {n}")));
            }
            stack.extend(self.ast_children(n).map(|(_, c)| c));
        }
        if let Some(orphan) = self.nodes.keys().find(|id| !seen.contains(id)) {
            return Err(CpgError::Invariant(format!(
                "node {orphan} is not reachable from any method root"
            )));
        }
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn source_files(&self) -> &BTreeMap<String, String> {
        &self.source_files
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// AST children as `(order, child)` pairs sorted by order.
    pub fn ast_children(&self, id: NodeId) -> impl Iterator<Item = (u32, NodeId)> + '_ {
        self.adj
            .ast_children
            .get(&id)
            .into_iter()
            .flat_map(|c| c.iter().copied())
    }

    pub fn ast_child(&self, id: NodeId, order: u32) -> Option<NodeId> {
        self.ast_children(id).find(|(o, _)| *o == order).map(|(_, c)| c)
    }

    pub fn ast_parent(&self, id: NodeId) -> Option<NodeId> {
        self.adj.ast_parent.get(&id).copied()
    }

    /// The METHOD root enclosing `id` (itself for a root).
    pub fn enclosing_method(&self, mut id: NodeId) -> NodeId {
        while let Some(p) = self.ast_parent(id) {
            id = p;
        }
        id
    }

    /// Data-flow successors (REACHING_DEF, ARG_TO_PARAM, RETURN_TO_CALL).
    pub fn flow_successors(&self, id: NodeId) -> &[NodeId] {
        self.adj.flow_out.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Data-flow predecessors.
    pub fn flow_predecessors(&self, id: NodeId) -> &[NodeId] {
        self.adj.flow_in.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> NodeSet {
        self.nodes
            .values()
            .filter(|n| n.kind == kind)
            .map(|n| n.id)
            .collect()
    }

    pub fn all_ids(&self) -> NodeSet {
        self.nodes.keys().copied().collect()
    }

    /// Nodes located on `file` within the inclusive line range.
    pub fn nodes_in_lines(&self, file: &str, start: u32, end: u32) -> NodeSet {
        self.nodes
            .values()
            .filter(|n| n.file == file && n.line >= start && n.line <= end)
            .map(|n| n.id)
            .collect()
    }

    pub(crate) fn check_ids<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a NodeId>,
    ) -> Result<(), CpgError> {
        match ids.into_iter().find(|id| !self.contains(**id)) {
            Some(id) => Err(CpgError::InvalidNodeId(*id)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: NodeId, kind: NodeKind, name: &str) -> Node {
        Node {
            id,
            kind,
            name: name.into(),
            code: name.into(),
            line: 1,
            column: 0,
            file: "t.mini".into(),
        }
    }

    #[test]
    fn roots_are_parentless_methods() {
        let g = CodePropertyGraph::from_parts(
            [
                node(1, NodeKind::Method, "f"),
                node(2, NodeKind::Call, "g"),
                node(3, NodeKind::Identifier, "x"),
            ],
            [Edge::ast(1, 2, 1), Edge::ast(2, 3, 1)],
            BTreeMap::new(),
        );
        assert_eq!(g.roots(), &[1]);
        assert!(g.validate().is_ok());
        assert_eq!(g.enclosing_method(3), 1);
    }

    #[test]
    fn orphan_node_fails_validation() {
        let g = CodePropertyGraph::from_parts(
            [node(1, NodeKind::Method, "f"), node(2, NodeKind::Identifier, "x")],
            [],
            BTreeMap::new(),
        );
        assert!(matches!(g.validate(), Err(CpgError::Invariant(m)) if m.contains("node 2")));
    }

    #[test]
    fn call_labels_must_be_contiguous() {
        let g = CodePropertyGraph::from_parts(
            [
                node(1, NodeKind::Method, "f"),
                node(2, NodeKind::Call, "g"),
                node(3, NodeKind::Identifier, "x"),
            ],
            [Edge::ast(1, 2, 1), Edge::ast(2, 3, 2)],
            BTreeMap::new(),
        );
        assert!(g.validate().is_err());
    }

    #[test]
    fn kinds_round_trip_through_strings() {
        for k in NodeKind::ALL {
            assert_eq!(k.as_str().parse::<NodeKind>().unwrap(), k);
        }
        for k in EdgeKind::ALL {
            assert_eq!(k.as_str().parse::<EdgeKind>().unwrap(), k);
        }
    }
}
