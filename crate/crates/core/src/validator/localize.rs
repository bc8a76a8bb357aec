use crate::cpg::NodeId;
use crate::error::LocalizeError;
use crate::query::{ChainId, QueryAst, Start, Trace};

/// Keys of the chains whose values flow into the result, in evaluation
/// order: the result chain and, transitively, the bindings it starts from.
fn lineage(q: &QueryAst) -> Vec<String> {
    let mut keys = Vec::new();
    let mut id = q.result_chain();
    loop {
        keys.push(q.chain_key(id).to_string());
        match &q.chain(id).start {
            Start::Binding { name, .. } => match q.binding_index(name) {
                Some(i) if ChainId::Binding(i) != id => id = ChainId::Binding(i),
                _ => break,
            },
            Start::Root { .. } => break,
        }
    }
    keys
}

/// Block that introduced `fp`: the first block of the longest run of
/// result-lineage blocks, ending at the last one, whose values all hold
/// `fp`.
pub fn localize_fp(q: &QueryAst, trace: &Trace, fp: NodeId) -> Result<usize, LocalizeError> {
    let keys = lineage(q);
    let blocks: Vec<usize> = (1..=trace.len()).filter(|&j| keys.contains(&trace.keys[j - 1])).collect();
    let holds = |j: usize| trace.current(j).nodes().is_some_and(|s| s.contains(&fp));
    match blocks.last() {
        Some(&last) if holds(last) => {}
        _ => return Err(LocalizeError::NotAnFp(fp)),
    }
    let mut first = *blocks.last().expect("nonempty");
    for &j in blocks.iter().rev() {
        if !holds(j) {
            break;
        }
        first = j;
    }
    Ok(first)
}
