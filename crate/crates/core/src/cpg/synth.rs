use rand::Rng;

use super::{CodePropertyGraph, Edge, EdgeKind, Node, NodeKind};

/// A random graph of `nodes` call/identifier/literal nodes joined by
/// `edges` random edges, mostly data flow with some control flow. Cycles
/// and self loops are allowed.
pub fn random_flow_graph(rng: &mut impl Rng, nodes: usize, edges: usize) -> CodePropertyGraph {
    const KINDS: [NodeKind; 3] = [NodeKind::Call, NodeKind::Identifier, NodeKind::Literal];
    const EDGE_KINDS: [EdgeKind; 4] = [
        EdgeKind::ReachingDef,
        EdgeKind::ArgToParam,
        EdgeKind::ReturnToCall,
        EdgeKind::Cfg,
    ];
    let ns = (0..nodes as u32).map(|id| Node {
        id,
        kind: KINDS[rng.gen_range(0..KINDS.len())],
        name: format!("n{id}"),
        code: format!("n{id}"),
        line: id + 1,
        column: 1,
        file: "synthetic.mini".into(),
    });
    let ns: Vec<Node> = ns.collect();
    let es: Vec<Edge> = if nodes == 0 {
        Vec::new()
    } else {
        (0..edges)
            .map(|_| {
                let src = rng.gen_range(0..nodes as u32);
                let dst = rng.gen_range(0..nodes as u32);
                Edge::new(src, dst, EDGE_KINDS[rng.gen_range(0..EDGE_KINDS.len())])
            })
            .collect()
    };
    CodePropertyGraph::from_parts(ns, es, Default::default())
}
