use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use queryforge::corpus::{example_queries, PROTOTYPE_POLLUTION, SQLI};
use queryforge::cpg::{dataflow_reach_oracle, random_flow_graph, read_cpg, write_cpg};
use queryforge::dslspec::{extract_spec, subset_spec, SubsetMode};
use queryforge::lang::{build_cpg, parse_program};
use queryforge::query::{execute, parse_query, reachable_by};
use queryforge_bench::synthetic_program;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::hint::black_box;

fn frontend(c: &mut Criterion) {
    let mut group = c.benchmark_group("frontend");
    for n in [10, 100] {
        let src = synthetic_program(n);
        group.bench_with_input(BenchmarkId::new("parse_and_build", n), &src, |b, src| {
            b.iter(|| build_cpg(&parse_program(black_box(src), "s.mini").unwrap()))
        });
    }
    let g = build_cpg(&parse_program(&synthetic_program(100), "s.mini").unwrap());
    let text = write_cpg(&g);
    group.bench_function("cpg_write", |b| b.iter(|| write_cpg(black_box(&g))));
    group.bench_function("cpg_read", |b| b.iter(|| read_cpg(black_box(&text)).unwrap()));
    group.finish();
}

fn queries(c: &mut Criterion) {
    let g = build_cpg(&parse_program(&synthetic_program(100), "s.mini").unwrap());
    let mut group = c.benchmark_group("query");
    for (name, text) in [("prototype_pollution", PROTOTYPE_POLLUTION), ("sqli", SQLI)] {
        let q = parse_query(text).unwrap();
        group.bench_function(BenchmarkId::new("plain", name), |b| b.iter(|| execute(&q, &g, false).unwrap()));
        group.bench_function(BenchmarkId::new("instrumented", name), |b| {
            b.iter(|| execute(&q, &g, true).unwrap())
        });
    }
    group.bench_function("parse", |b| b.iter(|| parse_query(black_box(PROTOTYPE_POLLUTION)).unwrap()));
    group.finish();
}

fn reachability(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(11);
    let mut group = c.benchmark_group("reachability");
    for n in [50, 500, 5000] {
        let g = random_flow_graph(&mut rng, n, 3 * n);
        let pick = |rng: &mut StdRng| g.all_ids().into_iter().filter(|_| rng.gen_bool(0.1)).collect();
        let (s, t) = (pick(&mut rng), pick(&mut rng));
        group.bench_with_input(BenchmarkId::new("reachable_by", n), &n, |b, _| {
            b.iter(|| reachable_by(&g, black_box(&t), black_box(&s)))
        });
        group.bench_with_input(BenchmarkId::new("oracle", n), &n, |b, _| {
            b.iter(|| dataflow_reach_oracle(&g, black_box(&s), black_box(&t)).unwrap())
        });
    }
    group.finish();
}

fn subsetting(c: &mut Criterion) {
    let spec = extract_spec();
    let examples = example_queries();
    c.bench_function("subset_spec", |b| {
        b.iter(|| subset_spec(black_box(&spec), &examples, SubsetMode::Deterministic))
    });
}

criterion_group!(benches, frontend, queries, reachability, subsetting);
criterion_main!(benches);
