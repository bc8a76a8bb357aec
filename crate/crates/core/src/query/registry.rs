//! The step registry: every name the query language understands, with its
//! signature, and optional rewrite into other registry names.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Receiver {
    /// Starts a traversal.
    Root,
    NodeSet,
    /// Only valid inside a predicate argument.
    Predicate,
    /// A constant; takes no receiver.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSig {
    None,
    String,
    Regex,
    Integer,
    OptionalInteger,
    Predicate,
    PredicatePair,
    Traversal,
}

impl ParamSig {
    /// Allowed argument counts.
    pub fn arity(self) -> (usize, usize) {
        match self {
            ParamSig::None => (0, 0),
            ParamSig::OptionalInteger => (0, 1),
            ParamSig::PredicatePair => (2, 2),
            _ => (1, 1),
        }
    }
}

impl fmt::Display for ParamSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamSig::None => "",
            ParamSig::String => "string",
            ParamSig::Regex => "regex",
            ParamSig::Integer => "integer",
            ParamSig::OptionalInteger => "integer?",
            ParamSig::Predicate => "predicate",
            ParamSig::PredicatePair => "predicate, predicate",
            ParamSig::Traversal => "traversal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Returns {
    NodeSet,
    Count,
    Predicate,
    String,
}

impl fmt::Display for Returns {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Returns::NodeSet => "nodes",
            Returns::Count => "count",
            Returns::Predicate => "predicate",
            Returns::String => "string",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    Core,
    Debug,
    LanguageSpecific,
}

/// Grammar placement of an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Root,
    Filter,
    Navigation,
    Flow,
    Predicate,
    Constant,
    Debug,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRegistryEntry {
    pub name: String,
    pub receiver: Receiver,
    pub params: ParamSig,
    pub returns: Returns,
    pub description: String,
    /// Equivalent expression over other entries. For steps, `_` stands
    /// for the step's argument; root rewrites are whole traversals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redundancy_rewrite: Option<String>,
    pub tags: Vec<Tag>,
    pub category: Category,
}

impl StepRegistryEntry {
    pub fn has_tag(&self, t: Tag) -> bool {
        self.tags.contains(&t)
    }

    /// `name(signature) -> return` as shown in prompts.
    pub fn signature(&self) -> String {
        match (self.receiver, self.params) {
            (Receiver::Root | Receiver::None, ParamSig::None) => {
                format!("{} -> {}", self.name, self.returns)
            }
            _ => format!("{}({}) -> {}", self.name, self.params, self.returns),
        }
    }
}

fn entry(
    name: &str,
    category: Category,
    params: ParamSig,
    returns: Returns,
    description: &str,
    rewrite: Option<&str>,
    tag: Tag,
) -> StepRegistryEntry {
    let receiver = match category {
        Category::Root => Receiver::Root,
        Category::Predicate => Receiver::Predicate,
        Category::Constant => Receiver::None,
        _ => Receiver::NodeSet,
    };
    StepRegistryEntry {
        name: name.to_string(),
        receiver,
        params,
        returns,
        description: description.to_string(),
        redundancy_rewrite: rewrite.map(str::to_string),
        tags: vec![tag],
        category,
    }
}

fn build() -> Vec<StepRegistryEntry> {
    use Category as C;
    use ParamSig as P;
    use Returns as R;
    use Tag::*;
    let mut v = vec![
        entry("cpg", C::Root, P::None, R::NodeSet, "every node in the graph", None, Core),
        entry("cpg.call", C::Root, P::None, R::NodeSet, "all call sites, operators included", None, Core),
        entry("cpg.method", C::Root, P::None, R::NodeSet, "all methods", None, Core),
        entry("cpg.identifier", C::Root, P::None, R::NodeSet, "all identifiers",
            Some("cpg.label(\"IDENTIFIER\")"), Core),
        entry("cpg.literal", C::Root, P::None, R::NodeSet, "all literals",
            Some("cpg.label(\"LITERAL\")"), Core),
        entry("cpg.assignment", C::Root, P::None, R::NodeSet, "all assignment calls",
            Some("cpg.call.nameExact(Operators.assignment)"), Core),
        entry("name", C::Filter, P::Regex, R::NodeSet, "keep nodes whose name fully matches the regex", None, Core),
        entry("nameExact", C::Filter, P::String, R::NodeSet, "keep nodes whose name equals the string", None, Core),
        entry("code", C::Filter, P::Regex, R::NodeSet, "keep nodes whose code fully matches the regex", None, Core),
        entry("lineNumber", C::Filter, P::Integer, R::NodeSet, "keep nodes on the given line", None, Core),
        entry("label", C::Filter, P::String, R::NodeSet, "keep nodes of the given kind, e.g. CALL", None, Core),
        entry("where", C::Filter, P::Predicate, R::NodeSet, "keep nodes satisfying the predicate", None, Core),
        entry("whereNot", C::Filter, P::Predicate, R::NodeSet, "keep nodes not satisfying the predicate",
            Some("where(not(_))"), Core),
        entry("filter", C::Filter, P::Predicate, R::NodeSet, "keep nodes satisfying the predicate",
            Some("where(_)"), Core),
        entry("isCall", C::Filter, P::None, R::NodeSet, "keep call nodes", Some("label(\"CALL\")"), Core),
        entry("isLiteral", C::Filter, P::None, R::NodeSet, "keep literal nodes", Some("label(\"LITERAL\")"), Core),
        entry("isIdentifier", C::Filter, P::None, R::NodeSet, "keep identifier nodes",
            Some("label(\"IDENTIFIER\")"), Core),
        entry("arrayAccess", C::Filter, P::None, R::NodeSet, "keep index-access calls such as a[k]",
            Some("nameExact(Operators.indexAccess)"), Core),
        entry("fieldAccess", C::Filter, P::None, R::NodeSet, "keep field-access calls such as a.f",
            Some("nameExact(Operators.fieldAccess)"), Core),
        entry("argument", C::Navigation, P::OptionalInteger, R::NodeSet,
            "arguments of calls; with i, only the i-th (1-based)", None, Core),
        entry("array", C::Navigation, P::None, R::NodeSet, "receiver of index-access calls",
            Some("nameExact(Operators.indexAccess).argument(1)"), Core),
        entry("index", C::Navigation, P::None, R::NodeSet, "index expression of index-access calls",
            Some("nameExact(Operators.indexAccess).argument(2)"), Core),
        entry("astChildren", C::Navigation, P::None, R::NodeSet, "direct syntax children", None, Core),
        entry("astParent", C::Navigation, P::None, R::NodeSet, "direct syntax parent", None, Core),
        entry("inAst", C::Navigation, P::None, R::NodeSet, "all enclosing syntax nodes up to the method", None, Core),
        entry("method", C::Navigation, P::None, R::NodeSet, "enclosing method", None, Core),
        entry("parameter", C::Navigation, P::None, R::NodeSet, "parameters of methods", None, Core),
        entry("reachableBy", C::Flow, P::Traversal, R::NodeSet,
            "keep nodes that data flows into from the traversal's nodes (a node reaches itself)", None, Core),
        entry("not", C::Predicate, P::Predicate, R::Predicate, "negate a predicate", None, Core),
        entry("and", C::Predicate, P::PredicatePair, R::Predicate, "both predicates hold", None, Core),
        entry("or", C::Predicate, P::PredicatePair, R::Predicate, "either predicate holds", None, Core),
        entry("dump", C::Debug, P::None, R::NodeSet, "print nodes; passes them through", None, Debug),
        entry("size", C::Debug, P::None, R::Count, "number of nodes", None, Debug),
        entry("toList", C::Debug, P::None, R::NodeSet, "materialize the nodes", None, Debug),
        entry("address", C::Filter, P::None, R::NodeSet, "machine address of binary instructions", None,
            LanguageSpecific),
        entry("typeFullName", C::Filter, P::Regex, R::NodeSet, "keep nodes of a static type", None,
            LanguageSpecific),
    ];
    for op in crate::cpg::OPERATOR_NAMES {
        let short = op.strip_prefix(crate::cpg::OP_PREFIX).unwrap_or(op);
        v.push(entry(
            &format!("Operators.{short}"),
            C::Constant,
            P::None,
            R::String,
            &format!("the operator name \"{op}\""),
            None,
            Core,
        ));
    }
    v.sort_by(|a, b| a.name.cmp(&b.name));
    v
}

fn registry() -> &'static [StepRegistryEntry] {
    static REG: OnceLock<Vec<StepRegistryEntry>> = OnceLock::new();
    REG.get_or_init(build)
}

/// The full catalog, ordered by name.
pub fn list_api_catalog() -> Vec<StepRegistryEntry> {
    registry().to_vec()
}

pub fn lookup(name: &str) -> Option<&'static StepRegistryEntry> {
    registry()
        .binary_search_by(|e| e.name.as_str().cmp(name))
        .ok()
        .map(|i| &registry()[i])
}

/// Root names usable at the start of a traversal, longest first.
pub fn root_names() -> Vec<&'static str> {
    let mut v: Vec<&str> = registry()
        .iter()
        .filter(|e| e.category == Category::Root)
        .map(|e| e.name.as_str())
        .collect();
    v.sort_by_key(|s| std::cmp::Reverse(s.len()));
    v
}

/// Full operator name for an `Operators.<short>` reference.
pub fn operator_full_name(short: &str) -> Option<&'static str> {
    crate::cpg::OPERATOR_NAMES
        .into_iter()
        .find(|op| op.strip_prefix(crate::cpg::OP_PREFIX) == Some(short))
}
