//! Message composition for each generation stage, and reply parsing.

use std::fmt::Write;

use regex::Regex;

use super::{ExampleContext, GenerationTask};
use crate::provider::Message;
use crate::query::{PState, QueryAst};
use crate::validator::OverfitFlag;

const ANALYST: &str = "You are a security analyst who writes static-analysis queries.";

/// Query text in a model reply: the first fenced code block, else the
/// whole reply.
pub fn extract_query(reply: &str) -> String {
    if let Some(start) = reply.find("```") {
        let rest = &reply[start + 3..];
        let body = rest.find('\n').map_or("", |nl| &rest[nl + 1..]);
        if let Some(end) = body.find("```") {
            return body[..end].trim().to_string();
        }
    }
    reply.trim().to_string()
}

/// Subtasks from a numbered or bulleted list; `None` unless there are 3
/// to 6 of them.
pub fn parse_subtasks(reply: &str) -> Option<Vec<String>> {
    let item = Regex::new(r"^\s*(?:\d+[.)]|[-*])\s+(.+?)\s*$").expect("valid regex");
    let items: Vec<String> = reply
        .lines()
        .filter_map(|l| item.captures(l).map(|c| c[1].to_string()))
        .collect();
    (3..=6).contains(&items.len()).then_some(items)
}

pub fn decompose(task: &GenerationTask) -> Vec<Message> {
    vec![
        Message::system(ANALYST),
        Message::user(format!(
            "Break this detection task into 3 to 6 ordered steps, one numbered line each.\n\
             Vulnerability type: {}\nTask: {}\n",
            task.vuln_type, task.description
        )),
    ]
}

fn fenced(q: &str) -> String {
    format!("```\n{}\n```\n", q.trim_end())
}

fn task_header(task: &GenerationTask, out: &mut String) {
    let _ = writeln!(out, "Vulnerability type: {}", task.vuln_type);
    let _ = writeln!(out, "Task: {}", task.description);
    if !task.subtasks.is_empty() {
        out.push_str("Plan:\n");
        for (i, s) in task.subtasks.iter().enumerate() {
            let _ = writeln!(out, "{}. {s}", i + 1);
        }
    }
}

fn example_section(ctx: &ExampleContext, out: &mut String) {
    let ex = &ctx.example;
    let _ = writeln!(
        out,
        "Vulnerable code from example {} ({}, lines {}-{}):",
        ex.id, ex.sink_file, ex.sink_lines.0, ex.sink_lines.1
    );
    out.push_str(&ctx.slice);
}

/// Prompt for one generation attempt; `retry` carries the previous query
/// and its validation feedback.
pub fn generation(spec_prompt: &str, task: &GenerationTask, ctx: &ExampleContext, retry: Option<(&str, &str)>) -> Vec<Message> {
    let mut u = String::new();
    task_header(task, &mut u);
    example_section(ctx, &mut u);
    u.push_str(
        "Write one query whose result contains the vulnerable sink and nothing unrelated. \
         Reply with the query in a fenced code block.\n",
    );
    if let Some((prev, feedback)) = retry {
        u.push_str("\nYour previous query:\n");
        u.push_str(&fenced(prev));
        u.push_str(feedback);
        u.push_str("Fix the query.\n");
    }
    vec![Message::system(spec_prompt), Message::user(u)]
}

/// One program state as indented lines.
pub fn render_state(p: &PState, j: usize) -> String {
    let mut out = String::new();
    if let Some(state) = p.states.get(j - 1) {
        for (name, v) in state {
            let _ = write!(out, "  {name}: {} node(s)", v.count);
            for s in &v.samples {
                let _ = write!(out, "; line {} `{}`", s.line, s.code);
            }
            out.push('\n');
        }
    }
    out
}

pub struct FpEvidence {
    pub line: u32,
    pub file: String,
    pub code: String,
    pub block: usize,
    pub block_text: String,
    pub state: String,
}

pub fn eliminate_fps(
    spec_prompt: &str,
    ctx: &ExampleContext,
    q: &QueryAst,
    fps: &[FpEvidence],
    rejection: Option<&str>,
) -> Vec<Message> {
    let mut u = String::new();
    example_section(ctx, &mut u);
    u.push_str("This query retrieves the vulnerable sink but also unrelated code:\n");
    u.push_str(&fenced(&q.to_string()));
    for fp in fps {
        let _ = writeln!(
            u,
            "False positive {}:{} `{}` enters at block {} `{}`. State after that block:",
            fp.file, fp.line, fp.code, fp.block, fp.block_text
        );
        u.push_str(&fp.state);
    }
    if let Some(r) = rejection {
        let _ = writeln!(u, "Your last revision was rejected: {r}");
    }
    u.push_str("Revise the query to exclude the false positives while still retrieving the sink. Reply with the query in a fenced code block.\n");
    vec![Message::system(spec_prompt), Message::user(u)]
}

pub fn generalize(
    spec_prompt: &str,
    ctx: &ExampleContext,
    q: &QueryAst,
    flags: &[OverfitFlag],
    rejection: Option<&str>,
) -> Vec<Message> {
    let mut u = String::new();
    example_section(ctx, &mut u);
    u.push_str("This query works but is tied to this one example:\n");
    u.push_str(&fenced(&q.to_string()));
    for f in flags {
        let text = &q.blocks[f.block - 1].text;
        let _ = writeln!(u, "Block {} `{text}`: {:?}: {}", f.block, f.kind, f.detail);
    }
    if let Some(r) = rejection {
        let _ = writeln!(u, "Your last revision was rejected: {r}");
    }
    u.push_str("Express the query in a more general form. Reply with the query in a fenced code block.\n");
    vec![Message::system(spec_prompt), Message::user(u)]
}

pub fn merge(spec_prompt: &str, vuln_type: &str, queries: &[QueryAst], failures: Option<&str>) -> Vec<Message> {
    let mut u = format!("These queries each detect one {vuln_type} example:\n");
    for q in queries {
        u.push_str(&fenced(&q.to_string()));
    }
    if let Some(f) = failures {
        u.push_str("Your last merged query failed:\n");
        u.push_str(f);
    }
    u.push_str("Write one query that detects all of the examples. Reply with the query in a fenced code block.\n");
    vec![Message::system(spec_prompt), Message::user(u)]
}
