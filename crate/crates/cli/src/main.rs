//! `queryforge`: build code property graphs, run and validate detection
//! queries, drive query generation and score findings.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use queryforge::config::Config;
use queryforge::corpus::example_queries;
use queryforge::cpg::{export_cpg, import_cpg};
use queryforge::dslspec::{extract_spec, render_prompt, subset_spec_keeping, DslSpec, SubsetMode, SubsetReport};
use queryforge::generator::{ExampleContext, GenerationTask, Generator};
use queryforge::lang::load_project;
use queryforge::metrics::compute_metrics;
use queryforge::provider::make_provider;
use queryforge::query::{parse_query, DetectionQuery, QueryAst, UNION_SEPARATOR};
use queryforge::scan::{findings_from_json, findings_to_json, scan_graph, Finding};
use queryforge::validator::{validate_detection, validate_with, Verdict};
use queryforge::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Deterministic,
    Model,
}

#[derive(Parser)]
#[command(name = "queryforge", version, about = "Vulnerability detection queries over code property graphs")]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    /// Seed passed to the model provider.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the CPG of a project directory and write it to a file.
    Build {
        #[arg(value_parser = existing_dir)]
        dir: PathBuf,
        /// Output file; defaults to `<dir name>.cpg` in the working directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write the full query-language spec as JSON.
    ExtractSpec {
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Reduce a spec to a core subset that still covers the example queries.
    Subset {
        #[arg(long, value_enum, default_value = "deterministic")]
        mode: Mode,
        /// Spec to reduce; defaults to the full spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Directory of `.q` example queries; defaults to the built-in corpus.
        #[arg(long, value_parser = existing_dir)]
        examples: Option<PathBuf>,
        /// Config file with `[provider]` and `[subset]` sections.
        #[arg(long)]
        provider_config: Option<PathBuf>,
        /// Where to write the subset spec.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the grammar prompt for a spec.
    RenderPrompt {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Generate a detection query for one vulnerability type of a dataset.
    Generate {
        #[arg(value_parser = existing_file)]
        dataset: PathBuf,
        vuln_type: String,
        #[arg(long)]
        provider_config: Option<PathBuf>,
        /// Spec to generate against; defaults to the full spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        max_attempts: Option<u32>,
        /// Directory for `session.json` and the merged query.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Validate a query against one labeled example.
    Validate {
        #[arg(value_parser = existing_file)]
        query: PathBuf,
        /// Dataset manifest, or a directory holding `dataset.json`.
        #[arg(value_parser = existing_path)]
        project: PathBuf,
        example_id: String,
    },
    /// Run a query over a project directory or a built `.cpg` file.
    Scan {
        #[arg(value_parser = existing_file)]
        query: PathBuf,
        #[arg(value_parser = existing_path)]
        dir: PathBuf,
        /// Vulnerability type recorded on each finding.
        #[arg(long = "type", default_value = "unspecified")]
        vuln_type: String,
        /// Also write findings as JSON to this file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Score findings against a labeled dataset manifest.
    Metrics {
        #[arg(value_parser = existing_file)]
        findings: PathBuf,
        #[arg(value_parser = existing_file)]
        dataset: PathBuf,
    },
}

fn existing_path(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.exists() {
        Ok(p)
    } else {
        Err(format!("{s} does not exist"))
    }
}

fn existing_dir(s: &str) -> Result<PathBuf, String> {
    let p = existing_path(s)?;
    if p.is_dir() {
        Ok(p)
    } else {
        Err(format!("{s} is not a directory"))
    }
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = existing_path(s)?;
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("{s} is not a file"))
    }
}

fn emit(format: Format, value: &impl Serialize, text: impl FnOnce() -> String) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value).expect("output serializes")),
        Format::Text => print!("{}", text()),
    }
}

fn load_spec(path: Option<&Path>) -> Result<DslSpec> {
    match path {
        Some(p) => DslSpec::import(p).with_context(|| format!("loading spec {}", p.display())),
        None => Ok(extract_spec()),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.provider.seed = s;
    }
    Ok(cfg)
}

fn load_examples(dir: Option<&Path>) -> Result<Vec<QueryAst>> {
    let Some(dir) = dir else {
        return Ok(example_queries());
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "q"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            parse_query(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Serialize)]
struct BuildSummary {
    path: String,
    files: usize,
    nodes: usize,
    edges: usize,
}

fn build(format: Format, dir: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let g = load_project(dir)?;
    let out = out.unwrap_or_else(|| {
        let name = dir.canonicalize().ok().and_then(|d| d.file_name().map(|n| n.to_owned()));
        PathBuf::from(format!("{}.cpg", name.map_or("project".into(), |n| n.to_string_lossy().into_owned())))
    });
    export_cpg(&g, &out)?;
    let s = BuildSummary {
        path: out.display().to_string(),
        files: g.source_files().len(),
        nodes: g.node_count(),
        edges: g.edges().len(),
    };
    emit(format, &s, || format!("wrote {}: {} files, {} nodes, {} edges\n", s.path, s.files, s.nodes, s.edges));
    Ok(ExitCode::SUCCESS)
}

fn extract(out: Option<PathBuf>) -> Result<ExitCode> {
    let spec = extract_spec();
    match out {
        Some(p) => spec.export(&p)?,
        None => print!("{}", spec.to_json()),
    }
    Ok(ExitCode::SUCCESS)
}

fn report_text(r: &SubsetReport) -> String {
    let mut s = format!(
        "mode {}: kept {}, removed {} ({:.0}%)\n",
        r.mode,
        r.kept.len(),
        r.removed.len(),
        r.removed_fraction() * 100.0
    );
    for rm in &r.removed {
        s += &format!("  - {} ({})\n", rm.api, serde_json::to_value(rm.reason).unwrap().as_str().unwrap_or("?"));
    }
    for v in &r.violations {
        s += &format!("  ! {} needed by example {}: {}\n", v.api, v.query, v.reason);
    }
    for w in &r.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

fn subset(
    format: Format,
    seed: Option<u64>,
    mode: Mode,
    spec: Option<&Path>,
    examples: Option<&Path>,
    config: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let spec = load_spec(spec)?;
    let examples = load_examples(examples)?;
    let cfg = load_config(config, seed)?;
    let provider = match mode {
        Mode::Deterministic => None,
        Mode::Model => Some(make_provider(&cfg.provider)?),
    };
    let mode = match &provider {
        Some(p) => SubsetMode::Model(p.as_ref()),
        None => SubsetMode::Deterministic,
    };
    let (sub, report) = subset_spec_keeping(&spec, &examples, mode, &cfg.subset.extra_keep);
    if let Some(p) = out {
        sub.export(&p)?;
    }
    emit(format, &report, || report_text(&report));
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Prompt {
    chars: usize,
    prompt: String,
}

fn prompt(format: Format, spec: Option<&Path>) -> Result<ExitCode> {
    let prompt = render_prompt(&load_spec(spec)?);
    let p = Prompt {
        chars: prompt.chars().count(),
        prompt,
    };
    emit(format, &p, || p.prompt.clone());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GenerateSummary {
    session: String,
    query: Option<String>,
    merged: Option<String>,
    merge_fallback: bool,
    failures: usize,
    provider_calls: usize,
}

#[allow(clippy::too_many_arguments)]
fn generate(
    format: Format,
    seed: Option<u64>,
    dataset: &Path,
    vuln_type: &str,
    config: Option<&Path>,
    spec: Option<&Path>,
    max_attempts: Option<u32>,
    out: &Path,
) -> Result<ExitCode> {
    let cfg = load_config(config, seed)?;
    let spec = load_spec(spec)?;
    let ds = Dataset::load(dataset)?;
    let task = GenerationTask::from_dataset(&ds, vuln_type, max_attempts.unwrap_or(cfg.generation.max_attempts))?;
    let ctxs = task
        .examples
        .iter()
        .map(|ex| ExampleContext::load(&ds, ex))
        .collect::<Result<Vec<_>, _>>()?;
    let provider = make_provider(&cfg.provider)?;
    let gen = Generator::new(provider.as_ref(), &spec, cfg.generation.clone());
    let session = gen.run(task, &ctxs);
    std::fs::create_dir_all(out)?;
    let session_path = out.join("session.json");
    std::fs::write(&session_path, session.to_json())?;
    let query_path = match &session.merged {
        Some(q) => {
            let p = out.join(format!("{vuln_type}.q"));
            std::fs::write(&p, q)?;
            Some(p.display().to_string())
        }
        None => None,
    };
    let s = GenerateSummary {
        session: session_path.display().to_string(),
        query: query_path,
        merged: session.merged.clone(),
        merge_fallback: session.merge_fallback,
        failures: session.failures.len(),
        provider_calls: session.log.usage.provider_calls as usize,
    };
    emit(format, &s, || {
        let mut t = format!("wrote {}\n", s.session);
        match (&s.query, &s.merged) {
            (Some(p), Some(q)) => {
                let how = if s.merge_fallback { "union fallback" } else { "merged" };
                t += &format!("{how} query written to {p}:\n{q}");
            }
            _ => t += "no query produced\n",
        }
        for f in &session.failures {
            t += &format!("failed: {} ({})\n", f.example_id, f.error);
        }
        t
    });
    Ok(if session.merged.is_some() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("dataset.json")
    } else {
        p.to_path_buf()
    }
}

fn validate(format: Format, query: &Path, project: &Path, example_id: &str) -> Result<ExitCode> {
    let ds = Dataset::load(manifest_path(project))?;
    let ex = ds
        .example(example_id)
        .with_context(|| format!("no example `{example_id}` in the dataset"))?;
    let g = load_project(ds.project_path(ex))?;
    let labels = ds.project_labels(ex);
    let spec = extract_spec();
    let text = std::fs::read_to_string(query)?;
    let report = if text.contains(UNION_SEPARATOR) {
        validate_detection(&DetectionQuery::parse(&text)?, &g, ex, &labels, &spec)
    } else {
        validate_with(&text, &g, ex, &labels, &spec)
    };
    match format {
        Format::Json => print!("{}", report.to_json()),
        Format::Text => print!("{}", report.feedback(&g)),
    }
    Ok(if report.verdict == Verdict::Pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn scan(format: Format, query: &Path, target: &Path, vuln_type: &str, out: Option<PathBuf>) -> Result<ExitCode> {
    let findings: Vec<Finding> = if target.is_file() {
        let dq = DetectionQuery::parse(&std::fs::read_to_string(query)?)?;
        let g = import_cpg(target)?;
        scan_graph(&dq, &g, &stem(query), vuln_type, "")?
    } else {
        queryforge::scan::scan(query, target, vuln_type)?
    };
    let json = findings_to_json(&findings);
    if let Some(p) = out {
        std::fs::write(p, &json)?;
    }
    match format {
        Format::Json => print!("{json}"),
        Format::Text => {
            for f in &findings {
                println!("{}:{} `{}` [{}]", f.file, f.line, f.code, f.query);
            }
            println!("{} finding(s)", findings.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn metrics(format: Format, findings: &Path, dataset: &Path) -> Result<ExitCode> {
    let findings = findings_from_json(&std::fs::read_to_string(findings)?)?;
    let labels = Dataset::load_labels(dataset)?;
    let report = compute_metrics(&findings, &labels.examples);
    match format {
        Format::Json => print!("{}", report.to_json()),
        Format::Text => print!("{report}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let f = cli.format;
    match cli.command {
        Command::Build { dir, out } => build(f, &dir, out),
        Command::ExtractSpec { out } => extract(out),
        Command::Subset {
            mode,
            spec,
            examples,
            provider_config,
            out,
        } => subset(f, cli.seed, mode, spec.as_deref(), examples.as_deref(), provider_config.as_deref(), out),
        Command::RenderPrompt { spec } => prompt(f, spec.as_deref()),
        Command::Generate {
            dataset,
            vuln_type,
            provider_config,
            spec,
            max_attempts,
            out,
        } => generate(
            f,
            cli.seed,
            &dataset,
            &vuln_type,
            provider_config.as_deref(),
            spec.as_deref(),
            max_attempts,
            &out,
        ),
        Command::Validate {
            query,
            project,
            example_id,
        } => validate(f, &query, &project, &example_id),
        Command::Scan {
            query,
            dir,
            vuln_type,
            out,
        } => scan(f, &query, &dir, &vuln_type, out),
        Command::Metrics { findings, dataset } => metrics(f, &findings, &dataset),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
