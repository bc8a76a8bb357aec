//! The generate-validate-refine loop: task decomposition, per-example query
//! generation with validator feedback, false-positive elimination,
//! generalization and merging.

mod prompts;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use prompts::{extract_query, parse_subtasks};

use crate::cpg::CodePropertyGraph;
use crate::dslspec::{render_prompt, DslSpec};
use crate::error::{GenerationError, ProviderError};
use crate::lang::{load_project, slice_example, Dataset, VulnExample};
use crate::provider::{Message, Provider, RequestKey, Role};
use crate::query::{parse_query, DetectionQuery, QueryAst};
use crate::validator::{
    detect_overfit, localize_fp, validate_ast, validate_detection, validate_with, OverfitFlag, ValidationReport,
    Verdict,
};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 50;
pub const DEFAULT_PASS_BUDGET: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Generation attempts per example.
    pub max_attempts: u32,
    /// Attempts per optimization pass (FP elimination, generalization,
    /// merging).
    pub pass_budget: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            pass_budget: DEFAULT_PASS_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationTask {
    pub vuln_type: String,
    pub description: String,
    pub examples: Vec<VulnExample>,
    pub max_attempts: u32,
    pub subtasks: Vec<String>,
}

impl GenerationTask {
    pub fn new(
        vuln_type: impl Into<String>,
        description: impl Into<String>,
        examples: Vec<VulnExample>,
        max_attempts: u32,
    ) -> Result<Self, GenerationError> {
        if examples.is_empty() {
            return Err(GenerationError::InvalidTask("no examples".into()));
        }
        if max_attempts == 0 {
            return Err(GenerationError::InvalidTask("max_attempts must be at least 1".into()));
        }
        Ok(GenerationTask {
            vuln_type: vuln_type.into(),
            description: description.into(),
            examples,
            max_attempts,
            subtasks: Vec::new(),
        })
    }

    /// Task over every example of `vuln_type`, described by their
    /// descriptions.
    pub fn from_dataset(ds: &Dataset, vuln_type: &str, max_attempts: u32) -> Result<Self, GenerationError> {
        let examples: Vec<VulnExample> = ds.of_type(vuln_type).cloned().collect();
        let mut description = format!("Detect {vuln_type} vulnerabilities.");
        for ex in &examples {
            if !ex.description.is_empty() && !description.contains(&ex.description) {
                description.push(' ');
                description.push_str(&ex.description);
            }
        }
        Self::new(vuln_type, description, examples, max_attempts)
    }
}

/// One labeled example with its project graph and source slice.
#[derive(Debug, Clone)]
pub struct ExampleContext {
    pub example: VulnExample,
    pub graph: CodePropertyGraph,
    /// Every label in the example's project.
    pub labels: Vec<VulnExample>,
    pub slice: String,
}

impl ExampleContext {
    pub fn new(example: VulnExample, graph: CodePropertyGraph, labels: Vec<VulnExample>) -> Result<Self, GenerationError> {
        let slice = slice_example(&graph, &example)?;
        Ok(ExampleContext {
            example,
            graph,
            labels,
            slice,
        })
    }

    pub fn load(ds: &Dataset, ex: &VulnExample) -> Result<Self, GenerationError> {
        let g = load_project(ds.project_path(ex))?;
        Self::new(ex.clone(), g, ds.project_labels(ex))
    }

    fn validate(&self, q: &QueryAst, spec: &DslSpec) -> ValidationReport {
        validate_ast(q, &self.graph, &self.example, &self.labels, spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Decompose,
    Generate,
    EliminateFps,
    Generalize,
    Merge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationLog {
    pub stage: Stage,
    pub key: RequestKey,
    pub prompt: String,
    pub response: String,
    pub verdict: Option<Verdict>,
    pub pstate_digest: Option<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub provider_calls: u32,
    pub prompt_chars: usize,
    pub response_chars: usize,
}

/// Append-only record of one pipeline run (or one example's shard of it).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Log {
    pub iterations: Vec<IterationLog>,
    pub warnings: Vec<String>,
    pub usage: Usage,
}

impl Log {
    fn extend(&mut self, other: Log) {
        self.iterations.extend(other.iterations);
        self.warnings.extend(other.warnings);
        self.usage.provider_calls += other.usage.provider_calls;
        self.usage.prompt_chars += other.usage.prompt_chars;
        self.usage.response_chars += other.usage.response_chars;
    }

    fn judge(&mut self, r: &ValidationReport, note: Option<String>) {
        if let Some(it) = self.iterations.last_mut() {
            it.verdict = Some(r.verdict);
            it.pstate_digest = r.pstate.as_ref().map(|p| p.digest());
            it.note = note;
        }
    }

    fn calls_for(&self, stage: Stage, example_id: &str) -> usize {
        self.iterations
            .iter()
            .filter(|i| i.stage == stage && i.key.example_id == example_id)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducedQuery {
    pub example_id: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub example_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub vuln_type: String,
    pub description: String,
    pub subtasks: Vec<String>,
    pub examples: Vec<String>,
    pub max_attempts: u32,
    pub log: Log,
    pub queries: Vec<ProducedQuery>,
    /// Present only when every example produced a passing query.
    pub merged: Option<String>,
    pub merge_fallback: bool,
    pub failures: Vec<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Session {
    /// `session.json` contents.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session serializes");
        s.push('\n');
        s
    }

    /// [`Session::to_json`] without the wall-clock fields.
    pub fn stable_json(&self) -> String {
        Session {
            timing: None,
            ..self.clone()
        }
        .to_json()
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn render_messages(messages: &[Message]) -> String {
    messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            format!("[{role}]\n{}", m.content)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A merge outcome: the query and whether the OR-union fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Merged {
    pub query: DetectionQuery,
    pub fallback: bool,
}

pub struct Generator<'a> {
    provider: &'a dyn Provider,
    spec: &'a DslSpec,
    spec_prompt: String,
    cfg: GeneratorConfig,
}

impl<'a> Generator<'a> {
    pub fn new(provider: &'a dyn Provider, spec: &'a DslSpec, cfg: GeneratorConfig) -> Self {
        Generator {
            provider,
            spec,
            spec_prompt: render_prompt(spec),
            cfg,
        }
    }

    fn ask(&self, log: &mut Log, stage: Stage, key: RequestKey, messages: &[Message]) -> Result<String, ProviderError> {
        let prompt = render_messages(messages);
        match self.provider.complete(&key, messages) {
            Ok(response) => {
                log.usage.provider_calls += 1;
                log.usage.prompt_chars += prompt.chars().count();
                log.usage.response_chars += response.chars().count();
                log.iterations.push(IterationLog {
                    stage,
                    key,
                    prompt,
                    response: response.clone(),
                    verdict: None,
                    pstate_digest: None,
                    note: None,
                });
                Ok(response)
            }
            Err(e) => {
                log.warnings.push(format!("{}#{}: provider error: {e}", key.example_id, key.attempt));
                Err(e)
            }
        }
    }

    /// Split the task into ordered subtasks with one provider call; falls
    /// back to the description itself when the reply has no usable list.
    pub fn decompose_task(&self, task: &mut GenerationTask, log: &mut Log) -> Result<Vec<String>, GenerationError> {
        if task.description.trim().is_empty() {
            return Err(GenerationError::InvalidTask("empty description".into()));
        }
        let key = RequestKey::new(format!("decompose:{}", task.vuln_type), 1);
        let reply = self.ask(log, Stage::Decompose, key, &prompts::decompose(task))?;
        task.subtasks = parse_subtasks(&reply).unwrap_or_else(|| {
            log.warnings.push("decomposition reply had no 3-6 step list; using the description".into());
            vec![task.description.clone()]
        });
        Ok(task.subtasks.clone())
    }

    /// Parse and validate a reply's query against one example.
    fn check(&self, text: &str, ctx: &ExampleContext) -> (Option<QueryAst>, ValidationReport) {
        match parse_query(text) {
            Ok(q) => {
                let r = ctx.validate(&q, self.spec);
                (Some(q), r)
            }
            Err(_) => (None, validate_with(text, &ctx.graph, &ctx.example, &ctx.labels, self.spec)),
        }
    }

    /// Generate a passing query for one example, then run FP elimination
    /// and generalization on it.
    pub fn gen_per_example(
        &self,
        task: &GenerationTask,
        ctx: &ExampleContext,
        log: &mut Log,
    ) -> Result<QueryAst, GenerationError> {
        let mut retry: Option<(String, String)> = None;
        let mut last = Verdict::SyntaxError;
        for attempt in 1..=task.max_attempts {
            let messages = prompts::generation(
                &self.spec_prompt,
                task,
                ctx,
                retry.as_ref().map(|(q, f)| (q.as_str(), f.as_str())),
            );
            let reply = self.ask(log, Stage::Generate, RequestKey::new(&ctx.example.id, attempt), &messages)?;
            let text = extract_query(&reply);
            let (q, report) = self.check(&text, ctx);
            log.judge(&report, None);
            last = report.verdict;
            if let (Some(q), true) = (q, report.retrieved()) {
                let q = self.eliminate_fps(q, ctx, &report, log)?;
                let flags = detect_overfit(&q, &ctx.slice);
                return self.generalize(q, &flags, ctx, log);
            }
            retry = Some((text, report.feedback(&ctx.graph)));
        }
        Err(GenerationError::BudgetExhausted {
            max_attempts: task.max_attempts,
            last_verdict: last.to_string(),
        })
    }

    /// Revise `q` until it has no false positives, accepting only
    /// revisions that keep the example and drop at least one false
    /// positive. Returns the best query seen.
    pub fn eliminate_fps(
        &self,
        q: QueryAst,
        ctx: &ExampleContext,
        report: &ValidationReport,
        log: &mut Log,
    ) -> Result<QueryAst, GenerationError> {
        if report.verdict != Verdict::FalsePositives {
            return Ok(q);
        }
        let mut best = (q, report.clone());
        let mut rejection: Option<String> = None;
        let id = format!("{}#fp", ctx.example.id);
        for attempt in 1..=self.cfg.pass_budget {
            let evidence = self.fp_evidence(&best.0, &best.1, ctx);
            let messages = prompts::eliminate_fps(&self.spec_prompt, ctx, &best.0, &evidence, rejection.as_deref());
            let reply = self.ask(log, Stage::EliminateFps, RequestKey::new(&id, attempt), &messages)?;
            let (rev, r) = self.check(&extract_query(&reply), ctx);
            let reason = match (&rev, r.verdict) {
                (None, _) | (_, Verdict::ExecError) => Some(format!("it does not run ({})", r.verdict)),
                (_, Verdict::SemanticMiss) => Some("it no longer retrieves the vulnerable sink".to_string()),
                _ if r.fp_nodes.len() >= best.1.fp_nodes.len() => {
                    Some("it removes none of the false positives".to_string())
                }
                _ => None,
            };
            log.judge(&r, Some(reason.clone().map_or("accepted".into(), |m| format!("rejected: {m}"))));
            match (reason, rev) {
                (None, Some(rev)) => {
                    best = (rev, r);
                    rejection = None;
                    if best.1.passed() {
                        return Ok(best.0);
                    }
                }
                (reason, _) => rejection = reason,
            }
        }
        log.warnings.push(format!(
            "{}: false-positive elimination kept a query with {} false positive(s)",
            ctx.example.id,
            best.1.fp_nodes.len()
        ));
        Ok(best.0)
    }

    fn fp_evidence(&self, q: &QueryAst, r: &ValidationReport, ctx: &ExampleContext) -> Vec<prompts::FpEvidence> {
        let (Some(trace), Some(pstate)) = (&r.trace, &r.pstate) else {
            return Vec::new();
        };
        r.fp_nodes
            .iter()
            .filter_map(|&fp| {
                let node = ctx.graph.node(fp)?;
                let block = localize_fp(q, trace, fp).ok()?;
                Some(prompts::FpEvidence {
                    line: node.line,
                    file: node.file.clone(),
                    code: node.code.clone(),
                    block,
                    block_text: q.blocks[block - 1].text.clone(),
                    state: prompts::render_state(pstate, block),
                })
            })
            .collect()
    }

    /// Revise `q` to clear its overfitting flags; a revision is accepted
    /// only if it has no flags and still passes. Best effort: on budget
    /// exhaustion the flagged query is kept with a warning.
    pub fn generalize(
        &self,
        q: QueryAst,
        flags: &[OverfitFlag],
        ctx: &ExampleContext,
        log: &mut Log,
    ) -> Result<QueryAst, GenerationError> {
        if flags.is_empty() {
            return Ok(q);
        }
        let id = format!("{}#gen", ctx.example.id);
        let mut rejection: Option<String> = None;
        for attempt in 1..=self.cfg.pass_budget {
            let messages = prompts::generalize(&self.spec_prompt, ctx, &q, flags, rejection.as_deref());
            let reply = self.ask(log, Stage::Generalize, RequestKey::new(&id, attempt), &messages)?;
            let (rev, r) = self.check(&extract_query(&reply), ctx);
            let remaining = rev.as_ref().map(|rq| detect_overfit(rq, &ctx.slice));
            let reason = match (&remaining, r.verdict) {
                (_, v) if v != Verdict::Pass => Some(format!("it does not pass validation ({v})")),
                (Some(f), _) if !f.is_empty() => Some(format!("it still has {} overfitting flag(s)", f.len())),
                _ => None,
            };
            log.judge(&r, Some(reason.clone().map_or("accepted".into(), |m| format!("rejected: {m}"))));
            match (reason, rev) {
                (None, Some(rev)) => return Ok(rev),
                (reason, _) => rejection = reason,
            }
        }
        log.warnings.push(format!(
            "{}: generalization kept a query with {} overfitting flag(s)",
            ctx.example.id,
            flags.len()
        ));
        Ok(q)
    }

    /// Merge per-example queries into one that passes on every example,
    /// falling back to their OR-union.
    pub fn merge_queries(
        &self,
        vuln_type: &str,
        queries: &[QueryAst],
        ctxs: &[ExampleContext],
        log: &mut Log,
    ) -> Merged {
        if queries.len() == 1 {
            return Merged {
                query: DetectionQuery::Single(queries[0].clone()),
                fallback: false,
            };
        }
        let id = format!("merge:{vuln_type}");
        let mut failures: Option<String> = None;
        for attempt in 1..=self.cfg.pass_budget {
            let messages = prompts::merge(&self.spec_prompt, vuln_type, queries, failures.as_deref());
            let Ok(reply) = self.ask(log, Stage::Merge, RequestKey::new(&id, attempt), &messages) else {
                break;
            };
            let text = extract_query(&reply);
            let q = match parse_query(&text) {
                Ok(q) => q,
                Err(e) => {
                    failures = Some(format!("syntax error: {e}\n"));
                    log.judge(
                        &validate_with(&text, &ctxs[0].graph, &ctxs[0].example, &ctxs[0].labels, self.spec),
                        Some("rejected: syntax error".into()),
                    );
                    continue;
                }
            };
            let mut fail_text = String::new();
            let mut first_fail: Option<ValidationReport> = None;
            for ctx in ctxs {
                let r = ctx.validate(&q, self.spec);
                if !r.passed() {
                    fail_text.push_str(&format!("Example {}:\n{}", ctx.example.id, r.feedback(&ctx.graph)));
                    first_fail.get_or_insert(r);
                }
            }
            match first_fail {
                None => {
                    if let Some(it) = log.iterations.last_mut() {
                        it.verdict = Some(Verdict::Pass);
                        it.note = Some("accepted".into());
                    }
                    return Merged {
                        query: DetectionQuery::Single(q),
                        fallback: false,
                    };
                }
                Some(r) => {
                    log.judge(&r, Some("rejected".into()));
                    failures = Some(fail_text);
                }
            }
        }
        log.warnings.push(format!("{vuln_type}: merge failed; using the OR-union of per-example queries"));
        Merged {
            query: DetectionQuery::Union(queries.to_vec()),
            fallback: true,
        }
    }

    /// Whole pipeline for one task. Per-example loops run concurrently;
    /// their logs are appended in example order.
    pub fn run(&self, mut task: GenerationTask, ctxs: &[ExampleContext]) -> Session {
        let started = now_ms();
        let mut log = Log::default();
        let mut failures = Vec::new();
        if let Err(e) = self.decompose_task(&mut task, &mut log) {
            failures.push(Failure {
                example_id: format!("decompose:{}", task.vuln_type),
                error: e.to_string(),
            });
        }
        let shards: Vec<(Result<QueryAst, GenerationError>, Log)> = std::thread::scope(|s| {
            let handles: Vec<_> = ctxs
                .iter()
                .map(|ctx| {
                    let task = &task;
                    s.spawn(move || {
                        let mut shard = Log::default();
                        let r = self.gen_per_example(task, ctx, &mut shard);
                        (r, shard)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("example worker panicked")).collect()
        });
        let mut queries = Vec::new();
        let mut produced = Vec::new();
        for (ctx, (r, shard)) in ctxs.iter().zip(shards) {
            log.extend(shard);
            match r {
                Ok(q) => {
                    produced.push(ProducedQuery {
                        example_id: ctx.example.id.clone(),
                        query: q.to_string(),
                    });
                    queries.push(q);
                }
                Err(e) => failures.push(Failure {
                    example_id: ctx.example.id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        let merged = (!queries.is_empty() && queries.len() == ctxs.len())
            .then(|| self.merge_queries(&task.vuln_type, &queries, ctxs, &mut log));
        Session {
            vuln_type: task.vuln_type.clone(),
            description: task.description.clone(),
            subtasks: task.subtasks.clone(),
            examples: task.examples.iter().map(|e| e.id.clone()).collect(),
            max_attempts: task.max_attempts,
            log,
            queries: produced,
            merge_fallback: merged.as_ref().is_some_and(|m| m.fallback),
            merged: merged.map(|m| m.query.to_string()),
            failures,
            timing: Some(Timing {
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
            }),
        }
    }

    /// Provider calls the generation loop made for `example_id`.
    pub fn generation_calls(log: &Log, example_id: &str) -> usize {
        log.calls_for(Stage::Generate, example_id)
    }
}

/// Validate a merged or single query on every example.
pub fn validate_on_all(dq: &DetectionQuery, ctxs: &[ExampleContext], spec: &DslSpec) -> Vec<ValidationReport> {
    ctxs.iter()
        .map(|c| validate_detection(dq, &c.graph, &c.example, &c.labels, spec))
        .collect()
}
