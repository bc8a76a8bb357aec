//! Machine-readable description of the query language: BNF grammar, api
//! catalog, operator names and frontend builtins. Supports subsetting and
//! rendering as a model prompt.

mod grammar;
mod prompt;
mod subset;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use grammar::{grammar_for, referenced_apis, Deriver, Rule, Symbol};
pub use prompt::{render_prompt, PROMPT_BUDGET};
pub use subset::{subset_spec, subset_spec_keeping, Removal, RemovalReason, SubsetMode, SubsetReport, Violation};

use crate::cpg::OPERATOR_NAMES;
use crate::error::SpecError;
use crate::lang::builtins;
use crate::query::registry::Category;
use crate::query::{list_api_catalog, StepRegistryEntry};

pub const SPEC_VERSION: &str = "1";

/// Source, sink and sanitizer names known to the frontend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Builtins {
    pub sources: Vec<String>,
    pub sinks: Vec<String>,
    pub sanitizers: Vec<String>,
}

impl Default for Builtins {
    fn default() -> Self {
        let v = |a: &[&str]| a.iter().map(|s| s.to_string()).collect();
        Builtins {
            sources: v(&builtins::SOURCES),
            sinks: v(&builtins::SINKS),
            sanitizers: v(&builtins::SANITIZERS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DslSpec {
    pub grammar: Vec<Rule>,
    pub apis: Vec<StepRegistryEntry>,
    /// Full operator names, e.g. `<operator>.assignment`.
    pub operators: Vec<String>,
    pub builtins: Builtins,
    pub version: String,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    grammar: Vec<String>,
    apis: Vec<StepRegistryEntry>,
    operators: Vec<String>,
    #[serde(default)]
    builtins: Builtins,
    version: String,
}

/// Spec of the full registry.
pub fn extract_spec() -> DslSpec {
    DslSpec::from_apis(list_api_catalog(), SPEC_VERSION.to_string())
}

impl DslSpec {
    /// Build a spec over `apis`, deriving grammar and operator list.
    pub fn from_apis(mut apis: Vec<StepRegistryEntry>, version: String) -> Self {
        apis.sort_by(|a, b| a.name.cmp(&b.name));
        let operators = OPERATOR_NAMES
            .iter()
            .filter(|op| {
                let short = op.trim_start_matches(crate::cpg::OP_PREFIX);
                apis.iter().any(|e| e.name == format!("Operators.{short}"))
            })
            .map(|s| s.to_string())
            .collect();
        DslSpec {
            grammar: grammar_for(&apis),
            apis,
            operators,
            builtins: Builtins::default(),
            version,
        }
    }

    pub fn api(&self, name: &str) -> Option<&StepRegistryEntry> {
        self.apis.iter().find(|e| e.name == name)
    }

    pub fn api_names(&self) -> Vec<String> {
        self.apis.iter().map(|e| e.name.clone()).collect()
    }

    /// Names fix suggestions may propose: apis and full operator names.
    pub fn suggestion_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .apis
            .iter()
            .filter(|e| e.category != Category::Constant)
            .map(|e| e.name.clone())
            .collect();
        v.extend(self.operators.iter().cloned());
        v
    }

    /// Grammar and catalog agree: every api named by the grammar exists,
    /// and every api is derivable from the grammar.
    pub fn check(&self) -> Result<(), SpecError> {
        let in_grammar = referenced_apis(&self.grammar);
        for name in &in_grammar {
            if self.api(name).is_none() {
                return Err(SpecError::Rule {
                    rule: name.clone(),
                    message: "grammar references an api missing from the catalog".into(),
                });
            }
        }
        for e in &self.apis {
            if !in_grammar.contains(&e.name) {
                return Err(SpecError::Rule {
                    rule: e.name.clone(),
                    message: "api is not derivable from the grammar".into(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let f = SpecFile {
            grammar: self.grammar.iter().map(|r| r.to_string()).collect(),
            apis: self.apis.clone(),
            operators: self.operators.clone(),
            builtins: self.builtins.clone(),
            version: self.version.clone(),
        };
        let mut s = serde_json::to_string_pretty(&f).expect("spec serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let f: SpecFile = serde_json::from_str(text)?;
        let grammar = f.grammar.iter().map(|r| Rule::parse(r)).collect::<Result<_, _>>()?;
        let spec = DslSpec {
            grammar,
            apis: f.apis,
            operators: f.operators,
            builtins: f.builtins,
            version: f.version,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), SpecError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self, SpecError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use rand::SeedableRng;

    #[test]
    fn extracted_spec_is_consistent() {
        let s = extract_spec();
        s.check().unwrap();
        assert_eq!(s.apis.len(), list_api_catalog().len());
        assert_eq!(s.operators.len(), OPERATOR_NAMES.len());
    }

    #[test]
    fn json_round_trip() {
        let s = extract_spec();
        let back = DslSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), s.to_json());
    }

    #[test]
    fn inconsistent_spec_is_rejected() {
        let mut s = extract_spec();
        s.apis.retain(|e| e.name != "isCall");
        assert!(DslSpec::from_json(&s.to_json()).is_err());
    }

    #[test]
    fn random_derivations_parse() {
        let s = extract_spec();
        let d = Deriver::new(&s.grammar, 6);
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..300 {
            let q = d.derive(&mut rng);
            parse_query(&q).unwrap_or_else(|e| panic!("{q}\n{e}"));
        }
    }
}
