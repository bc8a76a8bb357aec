use std::collections::BTreeMap;

use proptest::prelude::*;
use queryforge::cpg::{dataflow_reach_oracle, random_flow_graph};
use queryforge::lang::{build_cpg, parse_program, slice_lines};
use queryforge::metrics::MetricsRow;
use queryforge::query::{execute, parse_query, reachable_by};
use queryforge::{CodePropertyGraph, NodeSet, VulnExample};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn graph(seed: u64, n: usize, e: usize) -> CodePropertyGraph {
    random_flow_graph(&mut StdRng::seed_from_u64(seed), n, e)
}

fn subset(g: &CodePropertyGraph, mask: u64) -> NodeSet {
    g.all_ids().into_iter().filter(|id| mask >> (id % 64) & 1 == 1).collect()
}

/// Transitive closure by repeated squaring of the flow adjacency matrix.
fn matrix_reach(g: &CodePropertyGraph, sources: &NodeSet, targets: &NodeSet) -> NodeSet {
    let n = g.node_count();
    let mut m = vec![vec![false; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = true;
    }
    for e in g.edges() {
        if e.kind.is_data_flow() {
            m[e.src as usize][e.dst as usize] = true;
        }
    }
    loop {
        let mut next = m.clone();
        for (i, row) in next.iter_mut().enumerate() {
            for (k, via) in m.iter().enumerate() {
                if m[i][k] {
                    for (cell, &hop) in row.iter_mut().zip(via) {
                        *cell |= hop;
                    }
                }
            }
        }
        if next == m {
            break;
        }
        m = next;
    }
    targets
        .iter()
        .copied()
        .filter(|&t| sources.iter().any(|&s| m[s as usize][t as usize]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interpreter_reachability_matches_oracle(seed: u64, n in 1usize..50, e in 0usize..120, ms: u64, mt: u64) {
        let g = graph(seed, n, e);
        let (s, t) = (subset(&g, ms), subset(&g, mt));
        let oracle = dataflow_reach_oracle(&g, &s, &t).unwrap();
        prop_assert_eq!(&reachable_by(&g, &t, &s), &oracle);
        prop_assert_eq!(&matrix_reach(&g, &s, &t), &oracle);
    }

    #[test]
    fn more_sources_reach_more(seed: u64, n in 1usize..40, e in 0usize..80, ms: u64, extra: u64, mt: u64) {
        let g = graph(seed, n, e);
        let (s, t) = (subset(&g, ms), subset(&g, mt));
        let bigger: NodeSet = s.union(&subset(&g, extra)).copied().collect();
        let small = reachable_by(&g, &t, &s);
        let large = reachable_by(&g, &t, &bigger);
        prop_assert!(small.is_subset(&large));
        prop_assert!(large.is_subset(&t));
    }

    #[test]
    fn metrics_algebra(tp_total in 0u64..500, tp_frac in 0.0f64..=1.0, fp in 0u64..500) {
        let tp = (tp_total as f64 * tp_frac).floor() as u64;
        let r = MetricsRow::from_counts("t", tp, fp, tp_total);
        prop_assert_eq!(r.tp + r.fn_, r.tp_total);
        for v in [r.recall, r.precision, r.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let (lo, hi) = (r.precision.min(r.recall), r.precision.max(r.recall));
        prop_assert!(r.f1 <= hi + 1e-12);
        prop_assert!(r.f1 <= 2.0 * lo + 1e-12);
        prop_assert!(r.f1 + 1e-12 >= lo);
    }
}

#[derive(Debug, Clone)]
enum Stmt {
    Source(usize),
    Copy(usize, usize),
    Concat(usize, usize),
    Sanitize(usize, usize),
    Const(usize),
    IfCopy(usize, usize),
}

const VARS: [&str; 4] = ["a", "b", "c", "d"];

fn stmt() -> impl Strategy<Value = Stmt> {
    let v = 0usize..4;
    prop_oneof![
        v.clone().prop_map(Stmt::Source),
        (v.clone(), v.clone()).prop_map(|(x, y)| Stmt::Copy(x, y)),
        (v.clone(), v.clone()).prop_map(|(x, y)| Stmt::Concat(x, y)),
        (v.clone(), v.clone()).prop_map(|(x, y)| Stmt::Sanitize(x, y)),
        v.clone().prop_map(Stmt::Const),
        (v.clone(), v).prop_map(|(x, y)| Stmt::IfCopy(x, y)),
    ]
}

/// Program text, with the final line `exec(sink);`, and whether `sink` is
/// tainted by a may-analysis over the straight-line semantics.
fn program(stmts: &[Stmt], sink: usize) -> (String, bool) {
    let mut src: String = VARS.iter().map(|v| format!("let {v} = \"0\";\n")).collect();
    let mut taint: BTreeMap<usize, bool> = (0..4).map(|i| (i, false)).collect();
    for s in stmts {
        let line = match *s {
            Stmt::Source(x) => {
                taint.insert(x, true);
                format!("{} = input();", VARS[x])
            }
            Stmt::Copy(x, y) => {
                taint.insert(x, taint[&y]);
                format!("{} = {};", VARS[x], VARS[y])
            }
            Stmt::Concat(x, y) => {
                taint.insert(x, taint[&y]);
                format!("{} = {} + \"k\";", VARS[x], VARS[y])
            }
            Stmt::Sanitize(x, y) => {
                taint.insert(x, false);
                format!("{} = sanitize({});", VARS[x], VARS[y])
            }
            Stmt::Const(x) => {
                taint.insert(x, false);
                format!("{} = \"lit\";", VARS[x])
            }
            Stmt::IfCopy(x, y) => {
                let t = taint[&x] || taint[&y];
                taint.insert(x, t);
                format!("if (flag) {{ {} = {}; }}", VARS[x], VARS[y])
            }
        };
        src.push_str(&line);
        src.push('\n');
    }
    src.push_str(&format!("exec({});\n", VARS[sink]));
    (src, taint[&sink])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn flow_matches_straight_line_semantics(stmts in prop::collection::vec(stmt(), 0..12), sink in 0usize..4) {
        let (src, tainted) = program(&stmts, sink);
        let g = build_cpg(&parse_program(&src, "p.mini").unwrap());
        let q = parse_query("cpg.call.nameExact(\"exec\").where(_.argument(1).reachableBy(cpg.call.nameExact(\"input\")))").unwrap();
        let found = !execute(&q, &g, false).unwrap().0.is_empty();
        prop_assert_eq!(found, tainted, "{}", src);
    }

    #[test]
    fn wider_sink_ranges_give_larger_slices(stmts in prop::collection::vec(stmt(), 1..12), sink in 0usize..4, back in 1u32..5) {
        let (src, _) = program(&stmts, sink);
        let g = build_cpg(&parse_program(&src, "p.mini").unwrap());
        let last = src.lines().count() as u32;
        let ex = |s: u32| VulnExample {
            id: "e".into(),
            vuln_type: "t".into(),
            project_dir: ".".into(),
            sink_file: "p.mini".into(),
            sink_lines: (s, last),
            description: String::new(),
        };
        let narrow = slice_lines(&g, &ex(last)).unwrap();
        let wide = slice_lines(&g, &ex(last.saturating_sub(back).max(1))).unwrap();
        prop_assert!(narrow.is_subset(&wide));
    }
}
