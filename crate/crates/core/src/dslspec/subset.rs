//! Pruning the api catalog to a core subset that still expresses every
//! example query.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DslSpec;
use crate::provider::{Message, Provider, RequestKey};
use crate::query::registry::{lookup, Tag};
use crate::query::{list_api_catalog, parse_query, rewrite_query, QueryAst};

#[derive(Clone, Copy)]
pub enum SubsetMode<'a> {
    Deterministic,
    /// Ask the model which apis to keep; it may only prune.
    Model(&'a dyn Provider),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    RedundantRewrite,
    Debug,
    LanguageSpecific,
    ModelPruned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub api: String,
    pub reason: RemovalReason,
}

/// A prune that would have made an example inexpressible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub api: String,
    pub query: usize,
    pub reason: String,
    /// Whether the prune was cancelled (the api is back in the subset).
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub mode: String,
    pub kept: Vec<String>,
    pub removed: Vec<Removal>,
    /// Per example query: `unchanged` or the rewritten equivalent.
    pub coverage_proof: Vec<String>,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl SubsetReport {
    pub fn removed_fraction(&self) -> f64 {
        let total = self.kept.len() + self.removed.len();
        if total == 0 {
            0.0
        } else {
            self.removed.len() as f64 / total as f64
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn subset_spec(spec: &DslSpec, examples: &[QueryAst], mode: SubsetMode<'_>) -> (DslSpec, SubsetReport) {
    subset_spec_keeping(spec, examples, mode, &[])
}

/// As [`subset_spec`], additionally pinning `extra_keep` (analyst
/// additions) in the subset.
pub fn subset_spec_keeping(
    spec: &DslSpec,
    examples: &[QueryAst],
    mode: SubsetMode<'_>,
    extra_keep: &[String],
) -> (DslSpec, SubsetReport) {
    let mut warnings = Vec::new();
    let (mode_name, mut removed) = match mode {
        SubsetMode::Deterministic => ("deterministic", deterministic_removals(spec)),
        SubsetMode::Model(p) => match model_removals(spec, examples, p) {
            Ok(r) => ("model", r),
            Err(e) => {
                warnings.push(format!("model subsetting failed ({e}); used deterministic rules"));
                ("deterministic", deterministic_removals(spec))
            }
        },
    };
    for k in extra_keep {
        removed.remove(k);
    }

    let mut violations = Vec::new();
    let proof = loop {
        match check_coverage(spec, examples, &removed) {
            Ok(proof) => break proof,
            Err(v) => {
                let cancel = removed.remove(&v.api).is_some();
                let stop = !cancel;
                violations.push(Violation { cancelled: cancel, ..v });
                if stop {
                    // the api is not in this spec at all; nothing to restore
                    break coverage_best_effort(examples, &removed, spec);
                }
            }
        }
    };

    let kept: Vec<_> = spec.apis.iter().filter(|e| !removed.contains_key(&e.name)).cloned().collect();
    let version = if spec.version.ends_with("-subset") {
        spec.version.clone()
    } else {
        format!("{}-subset", spec.version)
    };
    let mut out = DslSpec::from_apis(kept, version);
    out.builtins = spec.builtins.clone();
    let report = SubsetReport {
        mode: mode_name.to_string(),
        kept: out.api_names(),
        removed: removed
            .into_iter()
            .map(|(api, reason)| Removal { api, reason })
            .collect(),
        coverage_proof: proof,
        violations,
        warnings,
    };
    (out, report)
}

/// Apis a rewrite template mentions.
fn template_deps(api: &str, template: &str) -> BTreeSet<String> {
    let parsed = if api.starts_with("cpg") {
        parse_query(template)
    } else {
        parse_query(&format!("cpg.{template}"))
    };
    let mut names = parsed.map(|q| q.api_names()).unwrap_or_default();
    if !api.starts_with("cpg") {
        names.remove("cpg");
    }
    names
}

fn deterministic_removals(spec: &DslSpec) -> BTreeMap<String, RemovalReason> {
    let mut removed = BTreeMap::new();
    for e in &spec.apis {
        if e.has_tag(Tag::Debug) {
            removed.insert(e.name.clone(), RemovalReason::Debug);
        } else if e.has_tag(Tag::LanguageSpecific) {
            removed.insert(e.name.clone(), RemovalReason::LanguageSpecific);
        }
    }
    let mut pinned = BTreeSet::new();
    for e in &spec.apis {
        let Some(t) = &e.redundancy_rewrite else { continue };
        if removed.contains_key(&e.name) || pinned.contains(&e.name) {
            continue;
        }
        let deps = template_deps(&e.name, t);
        let within = deps
            .iter()
            .all(|d| *d != e.name && spec.api(d).is_some() && !removed.contains_key(d));
        if within && !deps.is_empty() {
            removed.insert(e.name.clone(), RemovalReason::RedundantRewrite);
            pinned.extend(deps);
        }
    }
    removed
}

fn model_removals(
    spec: &DslSpec,
    examples: &[QueryAst],
    provider: &dyn Provider,
) -> Result<BTreeMap<String, RemovalReason>, String> {
    let mut catalog = String::new();
    for e in &spec.apis {
        catalog.push_str(&format!("{} - {}\n", e.signature(), e.description));
    }
    let queries: Vec<String> = examples.iter().map(|q| q.to_string()).collect();
    let messages = [
        Message::system(
            "You select the smallest set of query-language apis needed to write vulnerability \
             detection queries. Reply with a JSON array of api names to keep.",
        ),
        Message::user(format!(
            "Catalog:\n{catalog}\nExample queries:\n{}",
            queries.join("\n")
        )),
    ];
    let reply = provider
        .complete(&RequestKey::new("subset", 1), &messages)
        .map_err(|e| e.to_string())?;
    let keep = parse_keep_list(&reply, spec);
    if keep.is_empty() {
        return Err("reply names no known api".into());
    }
    Ok(spec
        .apis
        .iter()
        .filter(|e| !keep.contains(&e.name))
        .map(|e| {
            let reason = if e.has_tag(Tag::Debug) {
                RemovalReason::Debug
            } else if e.has_tag(Tag::LanguageSpecific) {
                RemovalReason::LanguageSpecific
            } else {
                RemovalReason::ModelPruned
            };
            (e.name.clone(), reason)
        })
        .collect())
}

fn parse_keep_list(reply: &str, spec: &DslSpec) -> BTreeSet<String> {
    let from_json = reply
        .find('[')
        .zip(reply.rfind(']'))
        .and_then(|(a, b)| serde_json::from_str::<Vec<String>>(&reply[a..=b]).ok());
    let names: Vec<String> = match from_json {
        Some(v) => v,
        None => reply.lines().map(|l| l.trim().trim_start_matches("- ").to_string()).collect(),
    };
    names.into_iter().filter(|n| spec.api(n).is_some()).collect()
}

/// Rewrites map for every registry api outside the kept set.
fn rewrites_outside(kept: &BTreeSet<String>) -> BTreeMap<String, String> {
    list_api_catalog()
        .into_iter()
        .filter(|e| !kept.contains(&e.name))
        .filter_map(|e| e.redundancy_rewrite.map(|t| (e.name, t)))
        .collect()
}

fn check_coverage(
    spec: &DslSpec,
    examples: &[QueryAst],
    removed: &BTreeMap<String, RemovalReason>,
) -> Result<Vec<String>, Violation> {
    let kept: BTreeSet<String> = spec
        .apis
        .iter()
        .map(|e| e.name.clone())
        .filter(|n| !removed.contains_key(n))
        .collect();
    let rewrites = rewrites_outside(&kept);
    let mut proof = Vec::new();
    for (i, q) in examples.iter().enumerate() {
        let rq = rewrite_query(q, &rewrites).map_err(|e| Violation {
            api: e.api.clone(),
            query: i,
            reason: e.reason.clone(),
            cancelled: false,
        })?;
        if let Some(bad) = rq.api_names().into_iter().find(|n| !kept.contains(n)) {
            let reason = if lookup(&bad).is_some() {
                "no rewrite into the kept subset".to_string()
            } else {
                "not a registry api".to_string()
            };
            return Err(Violation {
                api: bad,
                query: i,
                reason,
                cancelled: false,
            });
        }
        proof.push(coverage_text(q, &rq));
    }
    Ok(proof)
}

fn coverage_best_effort(
    examples: &[QueryAst],
    removed: &BTreeMap<String, RemovalReason>,
    spec: &DslSpec,
) -> Vec<String> {
    let kept: BTreeSet<String> =
        spec.api_names().into_iter().filter(|n| !removed.contains_key(n)).collect();
    let rewrites = rewrites_outside(&kept);
    examples
        .iter()
        .map(|q| match rewrite_query(q, &rewrites) {
            Ok(rq) => coverage_text(q, &rq),
            Err(e) => format!("not expressible: {e}"),
        })
        .collect()
}

fn coverage_text(q: &QueryAst, rq: &QueryAst) -> String {
    let (a, b) = (q.to_string(), rq.to_string());
    if a == b {
        "unchanged".into()
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dslspec::extract_spec;
    use crate::provider::ScriptedProvider;

    fn q(s: &str) -> QueryAst {
        parse_query(s).unwrap()
    }

    #[test]
    fn minimal_examples_keep_their_apis() {
        let spec = extract_spec();
        let (sub, rep) = subset_spec(&spec, &[q("cpg.call.nameExact(\"exec\")")], SubsetMode::Deterministic);
        assert!(sub.api("cpg.call").is_some() && sub.api("nameExact").is_some());
        assert!(rep
            .removed
            .contains(&Removal { api: "whereNot".into(), reason: RemovalReason::RedundantRewrite }));
        assert_eq!(rep.coverage_proof, vec!["unchanged".to_string()]);
    }

    #[test]
    fn empty_examples_remove_every_reducible_api() {
        let spec = extract_spec();
        let (_, rep) = subset_spec(&spec, &[], SubsetMode::Deterministic);
        assert!(rep.violations.is_empty());
        let reasons: BTreeSet<_> = rep.removed.iter().map(|r| r.reason).collect();
        assert!(reasons.contains(&RemovalReason::Debug));
        assert!(reasons.contains(&RemovalReason::LanguageSpecific));
        assert!(reasons.contains(&RemovalReason::RedundantRewrite));
        let kept_and_removed = rep.kept.len() + rep.removed.len();
        assert_eq!(kept_and_removed, spec.apis.len());
    }

    #[test]
    fn example_using_debug_api_cancels_its_prune() {
        let spec = extract_spec();
        let (sub, rep) = subset_spec(&spec, &[q("cpg.call.dump")], SubsetMode::Deterministic);
        assert!(sub.api("dump").is_some());
        assert_eq!(rep.violations.len(), 1);
        assert!(rep.violations[0].cancelled);
    }

    #[test]
    fn rewritten_examples_are_recorded() {
        let spec = extract_spec();
        let (_, rep) = subset_spec(&spec, &[q("cpg.call.whereNot(_.isCall)")], SubsetMode::Deterministic);
        assert_eq!(rep.coverage_proof[0], "cpg.call.where(not(_.label(\"CALL\")))\n");
    }

    #[test]
    fn model_mode_only_prunes_and_stays_safe() {
        let spec = extract_spec();
        let p = ScriptedProvider::from_triples([(
            "subset",
            1,
            "Keep these:\n[\"cpg\", \"cpg.call\", \"nameExact\", \"unknownThing\"]",
        )]);
        let ex = [q("cpg.call.name(\"exec\")")];
        let (sub, rep) = subset_spec(&spec, &ex, SubsetMode::Model(&p));
        assert_eq!(rep.mode, "model");
        assert!(sub.api("name").is_some(), "prune of a used api must be cancelled");
        assert!(sub.api("unknownThing").is_none());
        assert!(rep.removed.iter().any(|r| r.reason == RemovalReason::ModelPruned));
    }

    #[test]
    fn model_failure_falls_back_with_warning() {
        let spec = extract_spec();
        let p = ScriptedProvider::from_triples([]);
        let (_, rep) = subset_spec(&spec, &[], SubsetMode::Model(&p));
        assert_eq!(rep.mode, "deterministic");
        assert_eq!(rep.warnings.len(), 1);
    }
}
