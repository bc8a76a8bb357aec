use std::collections::VecDeque;

use super::{CodePropertyGraph, NodeSet};
use crate::error::CpgError;

/// Reference data-flow reachability: plain forward BFS over REACHING_DEF,
/// ARG_TO_PARAM and RETURN_TO_CALL edges from every source, no pruning.
///
/// Returns the targets reachable from some source. A node reaches itself.
/// This walks the raw edge list rather than the graph's adjacency index so
/// it shares no code with the query interpreter it checks.
pub fn dataflow_reach_oracle(
    g: &CodePropertyGraph,
    sources: &NodeSet,
    targets: &NodeSet,
) -> Result<NodeSet, CpgError> {
    g.check_ids(sources)?;
    g.check_ids(targets)?;

    let mut visited = NodeSet::new();
    let mut queue: VecDeque<_> = sources.iter().copied().collect();
    visited.extend(sources.iter().copied());
    while let Some(n) = queue.pop_front() {
        for e in g.edges() {
            if e.src == n && e.kind.is_data_flow() && visited.insert(e.dst) {
                queue.push_back(e.dst);
            }
        }
    }
    Ok(targets.intersection(&visited).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{Edge, EdgeKind, Node, NodeKind};
    use std::collections::BTreeMap;

    fn chain(n: u32) -> CodePropertyGraph {
        let nodes = (0..n).map(|id| Node {
            id,
            kind: NodeKind::Identifier,
            name: format!("v{id}"),
            code: format!("v{id}"),
            line: id + 1,
            column: 0,
            file: "t".into(),
        });
        let edges = (1..n).map(|id| Edge::new(id - 1, id, EdgeKind::ReachingDef));
        CodePropertyGraph::from_parts(nodes, edges, BTreeMap::new())
    }

    #[test]
    fn empty_sources_reach_nothing() {
        let g = chain(3);
        let targets: NodeSet = [0, 1, 2].into();
        assert!(dataflow_reach_oracle(&g, &NodeSet::new(), &targets)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn zero_length_paths_count() {
        let g = chain(3);
        let s: NodeSet = [2].into();
        assert_eq!(dataflow_reach_oracle(&g, &s, &s).unwrap(), s);
    }

    #[test]
    fn flow_is_directed() {
        let g = chain(3);
        let got = dataflow_reach_oracle(&g, &[1].into(), &[0, 2].into()).unwrap();
        assert_eq!(got, [2].into());
    }

    #[test]
    fn unknown_id_is_reported() {
        let g = chain(2);
        let err = dataflow_reach_oracle(&g, &[7].into(), &NodeSet::new()).unwrap_err();
        assert!(matches!(err, CpgError::InvalidNodeId(7)));
    }

    #[test]
    fn ast_and_cfg_edges_do_not_carry_flow() {
        let mut g = chain(2);
        g = CodePropertyGraph::from_parts(
            g.nodes().cloned(),
            [Edge::new(0, 1, EdgeKind::Cfg), Edge::ast(0, 1, 1)],
            BTreeMap::new(),
        );
        assert!(dataflow_reach_oracle(&g, &[0].into(), &[1].into())
            .unwrap()
            .is_empty());
    }
}
