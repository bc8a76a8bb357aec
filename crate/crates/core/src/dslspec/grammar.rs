//! BNF rules: text form, generation from the registry, and random
//! derivation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::SpecError;
use crate::query::registry::{Category, ParamSig};
use crate::query::StepRegistryEntry;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Terminal(String),
    NonTerminal(String),
    /// A lexical pattern written `/.../`.
    Pattern(String),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Terminal(t) => write!(f, "\"{}\"", t.replace('\\', "\\\\").replace('"', "\\\"")),
            Symbol::NonTerminal(n) => write!(f, "<{n}>"),
            Symbol::Pattern(p) => write!(f, "/{p}/"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub lhs: String,
    pub alternatives: Vec<Vec<Symbol>>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> ::=", self.lhs)?;
        for (i, alt) in self.alternatives.iter().enumerate() {
            if i > 0 {
                f.write_str(" |")?;
            }
            for s in alt {
                write!(f, " {s}")?;
            }
        }
        Ok(())
    }
}

impl Rule {
    pub fn parse(text: &str) -> Result<Rule, SpecError> {
        let bad = |m: &str| SpecError::Rule {
            rule: text.to_string(),
            message: m.to_string(),
        };
        let (lhs, rhs) = text.split_once("::=").ok_or_else(|| bad("missing `::=`"))?;
        let lhs = lhs
            .trim()
            .strip_prefix('<')
            .and_then(|l| l.strip_suffix('>'))
            .ok_or_else(|| bad("left side must be <name>"))?
            .to_string();
        let chars: Vec<char> = rhs.chars().collect();
        let mut alternatives = vec![Vec::new()];
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                c if c.is_whitespace() => i += 1,
                '|' => {
                    alternatives.push(Vec::new());
                    i += 1;
                }
                '"' => {
                    let mut s = String::new();
                    i += 1;
                    loop {
                        match chars.get(i) {
                            None => return Err(bad("unterminated terminal")),
                            Some('"') => break,
                            Some('\\') => {
                                s.push(*chars.get(i + 1).ok_or_else(|| bad("dangling escape"))?);
                                i += 2;
                            }
                            Some(c) => {
                                s.push(*c);
                                i += 1;
                            }
                        }
                    }
                    i += 1;
                    alternatives.last_mut().unwrap().push(Symbol::Terminal(s));
                }
                '<' => {
                    let end = chars[i..]
                        .iter()
                        .position(|&c| c == '>')
                        .ok_or_else(|| bad("unterminated nonterminal"))?;
                    let name: String = chars[i + 1..i + end].iter().collect();
                    alternatives.last_mut().unwrap().push(Symbol::NonTerminal(name));
                    i += end + 1;
                }
                '/' => {
                    let end = chars[i + 1..]
                        .iter()
                        .position(|&c| c == '/')
                        .ok_or_else(|| bad("unterminated pattern"))?;
                    let pat: String = chars[i + 1..i + 1 + end].iter().collect();
                    alternatives.last_mut().unwrap().push(Symbol::Pattern(pat));
                    i += end + 2;
                }
                c => return Err(bad(&format!("unexpected `{c}`"))),
            }
        }
        if alternatives.iter().any(Vec::is_empty) {
            return Err(bad("empty alternative"));
        }
        Ok(Rule { lhs, alternatives })
    }
}

fn t(s: &str) -> Symbol {
    Symbol::Terminal(s.to_string())
}

fn nt(s: &str) -> Symbol {
    Symbol::NonTerminal(s.to_string())
}

fn rule(lhs: &str, alternatives: Vec<Vec<Symbol>>) -> Rule {
    Rule {
        lhs: lhs.to_string(),
        alternatives,
    }
}

/// Grammar-position of an api in a step rule.
pub(crate) fn is_filter_step(e: &StepRegistryEntry) -> bool {
    matches!(e.category, Category::Filter | Category::Debug)
        && !matches!(e.params, ParamSig::Predicate | ParamSig::PredicatePair)
}

fn step_alternatives(e: &StepRegistryEntry) -> Vec<Vec<Symbol>> {
    let call = |arg: Vec<Symbol>| {
        let mut v = vec![t(&format!("{}(", e.name))];
        v.extend(arg);
        v.push(t(")"));
        v
    };
    match e.params {
        ParamSig::None => vec![vec![t(&e.name)]],
        ParamSig::String | ParamSig::Regex => vec![call(vec![nt("string_arg")])],
        ParamSig::Integer => vec![call(vec![nt("integer")])],
        ParamSig::OptionalInteger => vec![vec![t(&e.name)], call(vec![nt("integer")])],
        ParamSig::Predicate => vec![call(vec![nt("predicate")])],
        ParamSig::PredicatePair => vec![call(vec![nt("predicate"), t(","), nt("predicate")])],
        ParamSig::Traversal => vec![call(vec![nt("traversal")])],
    }
}

/// Derive the BNF from a set of apis.
pub fn grammar_for(apis: &[StepRegistryEntry]) -> Vec<Rule> {
    let of = |c: Category| apis.iter().filter(move |e| e.category == c);
    let mut starts: Vec<Vec<Symbol>> = of(Category::Root).map(|e| vec![t(&e.name)]).collect();
    starts.push(vec![nt("binding_name")]);
    let filters: Vec<Vec<Symbol>> = apis
        .iter()
        .filter(|e| !matches!(e.category, Category::Root | Category::Predicate | Category::Constant))
        .filter(|e| is_filter_step(e))
        .flat_map(step_alternatives)
        .collect();
    let complex: Vec<Vec<Symbol>> = apis
        .iter()
        .filter(|e| !matches!(e.category, Category::Root | Category::Predicate | Category::Constant))
        .filter(|e| !is_filter_step(e))
        .flat_map(step_alternatives)
        .collect();
    let mut preds = vec![vec![t("_")], vec![t("_."), nt("step_chain")]];
    preds.extend(of(Category::Predicate).flat_map(step_alternatives));
    let operators: Vec<Vec<Symbol>> = of(Category::Constant)
        .filter_map(|e| e.name.strip_prefix("Operators."))
        .map(|o| vec![t(o)])
        .collect();

    let mut step_alts = Vec::new();
    if !filters.is_empty() {
        step_alts.push(vec![nt("filter_step")]);
    }
    if !complex.is_empty() {
        step_alts.push(vec![nt("complex_step")]);
    }
    let mut string_arg = vec![vec![nt("string")]];
    if !operators.is_empty() {
        string_arg.push(vec![nt("reference")]);
    }

    let mut rules = vec![
        rule("query", vec![vec![nt("traversal")], vec![nt("binding")], vec![nt("binding"), nt("query")]]),
        rule(
            "binding",
            vec![
                vec![t("def"), nt("binding_name"), t("="), nt("traversal")],
                vec![t("val"), nt("binding_name"), t("="), nt("traversal")],
            ],
        ),
        rule("traversal", vec![vec![nt("cpg_start")], vec![nt("cpg_start"), t("."), nt("step_chain")]]),
        rule("cpg_start", starts),
        rule("step_chain", vec![vec![nt("step")], vec![nt("step"), t("."), nt("step_chain")]]),
        rule("step", step_alts),
    ];
    if !filters.is_empty() {
        rules.push(rule("filter_step", filters));
    }
    if !complex.is_empty() {
        rules.push(rule("complex_step", complex));
    }
    rules.push(rule("predicate", preds));
    rules.push(rule("string_arg", string_arg));
    if !operators.is_empty() {
        rules.push(rule("reference", vec![vec![t("Operators."), nt("operator")]]));
        rules.push(rule("operator", operators));
    }
    rules.push(rule("binding_name", vec![vec![nt("identifier")]]));
    rules.push(rule("identifier", vec![vec![Symbol::Pattern("[A-Za-z][A-Za-z0-9_]*".into())]]));
    rules.push(rule("string", vec![vec![Symbol::Pattern("\"([^\"\\\\]|\\\\.)*\"".into())]]));
    rules.push(rule("integer", vec![vec![Symbol::Pattern("[0-9]+".into())]]));
    rules
}

/// Api names mentioned as terminals of the step, start, predicate and
/// operator rules.
pub fn referenced_apis(rules: &[Rule]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in rules {
        for alt in &r.alternatives {
            let Some(Symbol::Terminal(first)) = alt.first() else { continue };
            let name = first.trim_end_matches('(');
            match r.lhs.as_str() {
                "cpg_start" | "filter_step" | "complex_step" => {
                    out.insert(name.to_string());
                }
                "predicate" if name != "_" && name != "_." => {
                    out.insert(name.to_string());
                }
                "operator" => {
                    out.insert(format!("Operators.{name}"));
                }
                _ => {}
            }
        }
    }
    out
}

/// Random sentence generator over a rule set. `<binding_name>` is filled
/// contextually: fresh in a binding head, previously bound elsewhere.
pub struct Deriver<'a> {
    rules: BTreeMap<&'a str, &'a Rule>,
    min_depth: BTreeMap<&'a str, usize>,
    max_depth: usize,
}

impl<'a> Deriver<'a> {
    pub fn new(rules: &'a [Rule], max_depth: usize) -> Self {
        let map: BTreeMap<&str, &Rule> = rules.iter().map(|r| (r.lhs.as_str(), r)).collect();
        // shortest derivation height per nonterminal, by fixed point
        let mut min_depth: BTreeMap<&str, usize> = BTreeMap::new();
        loop {
            let mut changed = false;
            for r in rules {
                let best = r
                    .alternatives
                    .iter()
                    .filter_map(|alt| alt_depth(alt, &min_depth))
                    .min();
                if let Some(d) = best {
                    if min_depth.get(r.lhs.as_str()).is_none_or(|&old| d < old) {
                        min_depth.insert(&r.lhs, d);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Deriver {
            rules: map,
            min_depth,
            max_depth,
        }
    }

    pub fn derive(&self, rng: &mut impl Rng) -> String {
        let mut out = Vec::new();
        let mut scope = Vec::new();
        self.expand("query", 0, rng, &mut out, &mut scope);
        out.join(" ")
    }

    fn expand(
        &self,
        sym: &str,
        depth: usize,
        rng: &mut impl Rng,
        out: &mut Vec<String>,
        scope: &mut Vec<String>,
    ) {
        let rule = self.rules[sym];
        let usable: Vec<&Vec<Symbol>> = rule
            .alternatives
            .iter()
            .filter(|alt| {
                // a start may name a binding only once one exists
                !(sym == "cpg_start"
                    && scope.is_empty()
                    && matches!(alt.as_slice(), [Symbol::NonTerminal(n)] if n == "binding_name"))
            })
            .collect();
        let alt = if depth >= self.max_depth {
            *usable
                .iter()
                .min_by_key(|a| alt_depth(a, &self.min_depth).unwrap_or(usize::MAX))
                .expect("rule has alternatives")
        } else {
            *usable.choose(rng).expect("rule has alternatives")
        };
        let mut fresh: Option<String> = None;
        for s in alt {
            match s {
                Symbol::Terminal(t) => out.push(t.clone()),
                Symbol::Pattern(p) => out.push(sample_pattern(p, rng)),
                Symbol::NonTerminal(n) if n == "binding_name" => {
                    if sym == "binding" {
                        let name = format!("v{}", scope.len() + 1);
                        out.push(name.clone());
                        fresh = Some(name);
                    } else {
                        out.push(scope.choose(rng).expect("scope checked").clone());
                    }
                }
                Symbol::NonTerminal(n) => self.expand(n, depth + 1, rng, out, scope),
            }
        }
        if let Some(name) = fresh {
            scope.push(name);
        }
    }
}

fn alt_depth(alt: &[Symbol], known: &BTreeMap<&str, usize>) -> Option<usize> {
    let mut d = 0;
    for s in alt {
        if let Symbol::NonTerminal(n) = s {
            if n != "binding_name" {
                d = d.max(*known.get(n.as_str())?);
            }
        }
    }
    Some(d + 1)
}

/// Generate a token for one of the grammar's lexical patterns.
fn sample_pattern(p: &str, rng: &mut impl Rng) -> String {
    const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
    let word = |rng: &mut dyn rand::RngCore, n: usize| -> String {
        (0..n).map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char).collect()
    };
    if p.starts_with("[0-9]") {
        rng.gen_range(0..20u32).to_string()
    } else if p.starts_with('"') {
        let n = rng.gen_range(0..6);
        format!("\"{}\"", word(rng, n))
    } else {
        let n = rng.gen_range(0..5);
        format!("x{}", word(rng, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::list_api_catalog;

    #[test]
    fn rule_text_round_trip() {
        for r in grammar_for(&list_api_catalog()) {
            let text = r.to_string();
            assert_eq!(Rule::parse(&text).unwrap(), r, "{text}");
        }
    }

    #[test]
    fn step_rule_matches_published_form() {
        let rules = grammar_for(&list_api_catalog());
        let texts: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
        assert!(texts.contains(&"<step> ::= <filter_step> | <complex_step>".to_string()));
        assert!(texts.contains(&"<reference> ::= \"Operators.\" <operator>".to_string()));
    }

    #[test]
    fn malformed_rules_are_rejected() {
        assert!(Rule::parse("step ::= x").is_err());
        assert!(Rule::parse("<a> = <b>").is_err());
        assert!(Rule::parse("<a> ::= \"x").is_err());
        assert!(Rule::parse("<a> ::= <b> |").is_err());
    }

    #[test]
    fn sampled_tokens_match_their_patterns() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for p in ["[A-Za-z][A-Za-z0-9_]*", "\"([^\"\\\\]|\\\\.)*\"", "[0-9]+"] {
            let re = regex::Regex::new(&format!("^(?:{p})$")).unwrap();
            for _ in 0..50 {
                let s = sample_pattern(p, &mut rng);
                assert!(re.is_match(&s), "{s} !~ {p}");
            }
        }
    }

    use rand::SeedableRng;
}
