mod common;

use common::*;
use queryforge::corpus::{fixtures_dir, FIXTURE_PROJECTS, PROTOTYPE_POLLUTION};
use queryforge::dslspec::extract_spec;
use queryforge::generator::{GenerationTask, Generator, GeneratorConfig, Log, Stage};
use queryforge::lang::load_project;
use queryforge::provider::ScriptedProvider;
use queryforge::query::{parse_query, DetectionQuery};
use queryforge::NodeSet;
use queryforge::validator::{detect_overfit, validate_ast, Verdict};
use queryforge::{GenerationError, ProviderError};

fn session(name: &str) -> queryforge::generator::Session {
    match run_scenario(name, &scripted(name)) {
        Outcome::Session(s) => s,
        Outcome::Single(..) => panic!("{name} is not a full run"),
    }
}

fn verdicts(log: &Log, stage: Stage, id: &str) -> Vec<Option<Verdict>> {
    log.iterations
        .iter()
        .filter(|i| i.stage == stage && i.key.example_id == id)
        .map(|i| i.verdict)
        .collect()
}

#[test]
fn broken_then_fixed_converges_in_two_iterations() {
    let s = session("proto_repair");
    assert_eq!(
        verdicts(&s.log, Stage::Generate, "proto-merge"),
        vec![Some(Verdict::SyntaxError), Some(Verdict::Pass)]
    );
    assert_eq!(s.subtasks.len(), 4);
    assert!(s.subtasks[0].contains("object property modifications"));
    let second = s
        .log
        .iterations
        .iter()
        .find(|i| i.key.example_id == "proto-merge" && i.key.attempt == 2)
        .unwrap();
    assert!(second.prompt.contains("grammar error in <cpg_start>"));
    assert_eq!(s.queries[0].query, parse_query(PROTOTYPE_POLLUTION).unwrap().to_string());
}

#[test]
fn verbatim_query_passes_first_time() {
    let s = session("proto_repair");
    assert_eq!(verdicts(&s.log, Stage::Generate, "proto-extend-config"), vec![Some(Verdict::Pass)]);
}

#[test]
fn all_broken_exhausts_the_budget() {
    let Outcome::Single(r, log) = run_scenario("proto_all_broken", &scripted("proto_all_broken")) else {
        panic!()
    };
    match r {
        Err(GenerationError::BudgetExhausted {
            max_attempts,
            last_verdict,
        }) => assert_eq!((max_attempts, last_verdict.as_str()), (3, "SyntaxError")),
        other => panic!("{other:?}"),
    }
    assert_eq!(Generator::generation_calls(&log, "proto-merge"), 3);
}

#[test]
fn sessions_are_byte_stable() {
    for name in ["proto_repair", "sqli_fp", "cmdi_merge_fallback"] {
        let a = session(name);
        let b = session(name);
        assert_eq!(a.stable_json(), b.stable_json());
        assert!(a.to_json().contains("started_unix_ms"));
        assert!(!a.stable_json().contains("started_unix_ms"));
    }
}

#[test]
fn generalization_clears_the_function_name() {
    let s = session("proto_repair");
    assert_eq!(
        verdicts(&s.log, Stage::Generalize, "proto-merge-options#gen"),
        vec![Some(Verdict::Pass)]
    );
    let ds = dataset();
    let q = parse_query(&s.queries.iter().find(|q| q.example_id == "proto-merge-options").unwrap().query).unwrap();
    let spec = extract_spec();
    for id in ["proto-merge-options", "proto-extend-config"] {
        let ctx = context(&ds, id);
        assert!(detect_overfit(&q, &ctx.slice).is_empty());
        assert_eq!(validate_ast(&q, &ctx.graph, &ctx.example, &ctx.labels, &spec).verdict, Verdict::Pass);
    }
    let overfit = parse_query(queryforge::corpus::PROTO_MERGE_OPTIONS).unwrap();
    let sibling = context(&ds, "proto-extend-config");
    let r = validate_ast(&overfit, &sibling.graph, &sibling.example, &sibling.labels, &spec);
    assert_eq!(r.verdict, Verdict::SemanticMiss);
    assert_eq!(s.merged.as_deref(), Some(s.queries[0].query.as_str()));
    assert!(!s.merge_fallback);
}

#[test]
fn revision_that_loses_the_example_is_rejected() {
    let ds = dataset();
    let ctx = context(&ds, "proto-merge-options");
    let proto_reply = format!("```\n{PROTOTYPE_POLLUTION}```");
    let p = ScriptedProvider::from_triples([
        ("proto-merge-options#gen", 1, "```\ncpg.call.nameExact(\"sql\")\n```"),
        ("proto-merge-options#gen", 2, proto_reply.as_str()),
    ]);
    let spec = extract_spec();
    let gen = Generator::new(&p, &spec, GeneratorConfig::default());
    let q = parse_query(queryforge::corpus::PROTO_MERGE_OPTIONS).unwrap();
    let flags = detect_overfit(&q, &ctx.slice);
    assert_eq!(flags.len(), 1);
    let mut log = Log::default();
    let out = gen.generalize(q, &flags, &ctx, &mut log).unwrap();
    assert!(detect_overfit(&out, &ctx.slice).is_empty());
    assert_eq!(log.iterations[0].verdict, Some(Verdict::SemanticMiss));
    assert!(log.iterations[0].note.as_deref().unwrap().starts_with("rejected"));
    assert!(log.iterations[1].prompt.contains("rejected"));
}

#[test]
fn fp_elimination_reaches_pass_and_keeps_the_sink() {
    let s = session("sqli_fp");
    assert_eq!(s.subtasks, vec![s.description.clone()], "nonsense reply falls back");
    let fp = verdicts(&s.log, Stage::EliminateFps, "sqli-save#fp");
    assert_eq!(fp, vec![Some(Verdict::SemanticMiss), Some(Verdict::Pass)]);
    let first = s.log.iterations.iter().find(|i| i.stage == Stage::EliminateFps).unwrap();
    assert!(first.prompt.contains("sqli_two_writes.mini:7 `sql(db, q)` enters at block 4"), "{}", first.prompt);
    let ds = dataset();
    let ctx = context(&ds, "sqli-save");
    let q = parse_query(&s.queries[0].query).unwrap();
    let r = validate_ast(&q, &ctx.graph, &ctx.example, &ctx.labels, &extract_spec());
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn merge_unions_the_sink_names() {
    let s = session("cmdi_merge");
    assert!(!s.merge_fallback);
    let merged = DetectionQuery::parse(s.merged.as_deref().unwrap()).unwrap();
    assert!(merged.to_string().contains("exec|evalCode"));
    let ds = dataset();
    let spec = extract_spec();
    for r in queryforge::generator::validate_on_all(&merged, &contexts(&ds, "command-injection"), &spec) {
        assert_eq!(r.verdict, Verdict::Pass);
    }
}

#[test]
fn failed_merges_fall_back_to_the_union() {
    let s = session("cmdi_merge_fallback");
    assert!(s.merge_fallback);
    assert_eq!(verdicts(&s.log, Stage::Merge, "merge:command-injection").len(), 5);
    let merged = DetectionQuery::parse(s.merged.as_deref().unwrap()).unwrap();
    let members: Vec<_> = s.queries.iter().map(|q| parse_query(&q.query).unwrap()).collect();
    for p in FIXTURE_PROJECTS {
        let g = load_project(fixtures_dir().join(p)).unwrap();
        let mut union = NodeSet::new();
        for m in &members {
            union.extend(queryforge::query::execute(m, &g, false).unwrap().0);
        }
        assert_eq!(merged.execute(&g).unwrap(), union, "{p}");
    }
}

#[test]
fn passing_input_skips_fp_elimination() {
    let ds = dataset();
    let ctx = context(&ds, "proto-merge");
    let p = ScriptedProvider::from_triples([]);
    let spec = extract_spec();
    let gen = Generator::new(&p, &spec, GeneratorConfig::default());
    let q = parse_query(PROTOTYPE_POLLUTION).unwrap();
    let r = validate_ast(&q, &ctx.graph, &ctx.example, &ctx.labels, &spec);
    let mut log = Log::default();
    assert_eq!(gen.eliminate_fps(q.clone(), &ctx, &r, &mut log).unwrap(), q);
    assert_eq!(gen.generalize(q.clone(), &[], &ctx, &mut log).unwrap(), q);
    assert!(log.iterations.is_empty());
}

#[test]
fn single_query_merges_to_itself() {
    let ds = dataset();
    let ctxs = vec![context(&ds, "proto-merge")];
    let p = ScriptedProvider::from_triples([]);
    let spec = extract_spec();
    let gen = Generator::new(&p, &spec, GeneratorConfig::default());
    let q = parse_query(PROTOTYPE_POLLUTION).unwrap();
    let m = gen.merge_queries("prototype-pollution", std::slice::from_ref(&q), &ctxs, &mut Log::default());
    assert_eq!(m.query, DetectionQuery::Single(q));
}

#[test]
fn provider_failures_propagate_and_are_logged() {
    let ds = dataset();
    let p = ScriptedProvider::from_triples([]);
    let spec = extract_spec();
    let gen = Generator::new(&p, &spec, GeneratorConfig::default());
    let mut task = GenerationTask::from_dataset(&ds, "sql-injection", 5).unwrap();
    let mut log = Log::default();
    let err = gen.decompose_task(&mut task, &mut log).unwrap_err();
    assert!(matches!(err, GenerationError::Provider(ProviderError::ScriptExhausted { .. })));
    assert_eq!(log.warnings.len(), 1);
    let s = gen.run(task, &contexts(&ds, "sql-injection"));
    assert_eq!(s.failures.len(), 2);
    assert!(s.merged.is_none());
}

#[test]
fn invalid_tasks_are_rejected() {
    assert!(GenerationTask::new("t", "d", vec![], 3).is_err());
    let ex = dataset().examples[0].clone();
    assert!(GenerationTask::new("t", "d", vec![ex], 0).is_err());
}
