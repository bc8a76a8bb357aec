#![allow(dead_code)]

use std::path::PathBuf;

use queryforge::corpus::fixtures_dir;
use queryforge::dslspec::{extract_spec, DslSpec};
use queryforge::generator::{ExampleContext, GenerationTask, Generator, GeneratorConfig, Log, Session};
use queryforge::provider::{read_transcript, Provider, ScriptedProvider, TranscriptRecord};
use queryforge::{Dataset, GenerationError};

pub fn dataset() -> Dataset {
    Dataset::load(fixtures_dir().join("dataset.json")).unwrap()
}

pub fn contexts(ds: &Dataset, vuln_type: &str) -> Vec<ExampleContext> {
    ds.of_type(vuln_type).map(|ex| ExampleContext::load(ds, ex).unwrap()).collect()
}

pub fn context(ds: &Dataset, id: &str) -> ExampleContext {
    ExampleContext::load(ds, ds.example(id).unwrap()).unwrap()
}

pub fn transcript_path(name: &str) -> PathBuf {
    fixtures_dir().join("transcripts").join(format!("{name}.jsonl"))
}

pub fn scripted(name: &str) -> ScriptedProvider {
    ScriptedProvider::from_file(transcript_path(name)).unwrap()
}

pub const SCENARIOS: [&str; 5] = ["proto_repair", "proto_all_broken", "sqli_fp", "cmdi_merge", "cmdi_merge_fallback"];

/// What a scenario produced.
pub enum Outcome {
    Session(Session),
    /// Decomposition plus one example's generation loop.
    Single(Result<queryforge::query::QueryAst, GenerationError>, Log),
}

/// Replay a shipped transcript through the pipeline stage it was written
/// for.
pub fn run_scenario(name: &str, provider: &dyn Provider) -> Outcome {
    let ds = dataset();
    let spec: DslSpec = extract_spec();
    let cfg = GeneratorConfig::default();
    let gen = Generator::new(provider, &spec, cfg);
    let vuln_type = match name {
        "proto_repair" | "proto_all_broken" => "prototype-pollution",
        "sqli_fp" => "sql-injection",
        _ => "command-injection",
    };
    if name == "proto_all_broken" {
        let mut task = GenerationTask::from_dataset(&ds, vuln_type, 3).unwrap();
        let mut log = Log::default();
        gen.decompose_task(&mut task, &mut log).unwrap();
        let ctx = context(&ds, "proto-merge");
        let r = gen.gen_per_example(&task, &ctx, &mut log);
        return Outcome::Single(r, log);
    }
    let task = GenerationTask::from_dataset(&ds, vuln_type, 50).unwrap();
    Outcome::Session(gen.run(task, &contexts(&ds, vuln_type)))
}

pub fn sorted(mut recs: Vec<TranscriptRecord>) -> Vec<TranscriptRecord> {
    recs.sort_by(|a, b| a.key.cmp(&b.key));
    recs
}

pub fn shipped_records(name: &str) -> Vec<TranscriptRecord> {
    sorted(read_transcript(transcript_path(name)).unwrap())
}
