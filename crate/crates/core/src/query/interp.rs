//! Block-by-block query evaluation with instrumentation hooks.

use std::collections::{BTreeMap, HashMap, VecDeque};

use regex::Regex;

use super::ast::*;
use super::pstate::{PState, Trace};
use super::registry::{self, Category, ParamSig, Returns};
use crate::cpg::{
    CodePropertyGraph, NodeId, NodeKind, NodeSet, OP_ASSIGNMENT, OP_FIELD_ACCESS, OP_INDEX_ACCESS,
};
use crate::error::{ExecError, ExecErrorKind};

/// Value of a chain after some number of steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Nodes(NodeSet),
    Count(usize),
}

impl Value {
    pub fn nodes(&self) -> Option<&NodeSet> {
        match self {
            Value::Nodes(s) => Some(s),
            Value::Count(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Value::Nodes(s) => s.is_empty(),
            Value::Count(c) => *c == 0,
        }
    }
}

/// Observer called by the interpreter after every block.
pub trait ExecHook {
    /// `key` names the chain the block belongs to; `env` holds every
    /// completed binding plus `key` mapped to the block's output.
    fn after_block(&mut self, block: &Block, key: &str, env: &BTreeMap<String, Value>);
}

/// Run `q` over `g`. With `instrument`, also return the per-block
/// program states.
pub fn execute(
    q: &QueryAst,
    g: &CodePropertyGraph,
    instrument: bool,
) -> Result<(NodeSet, Option<PState>), ExecError> {
    if instrument {
        let (res, trace) = execute_traced(q, g);
        res.map(|r| (r, Some(trace.summarize(g))))
    } else {
        Interp::new(g).run(q, None).map(|r| (r, None))
    }
}

/// Run with full-fidelity tracing. The trace covers every block completed
/// before a failure.
pub fn execute_traced(q: &QueryAst, g: &CodePropertyGraph) -> (Result<NodeSet, ExecError>, Trace) {
    let mut trace = Trace::default();
    let res = Interp::new(g).run(q, Some(&mut trace));
    (res, trace)
}

pub fn execute_with_hook(
    q: &QueryAst,
    g: &CodePropertyGraph,
    hook: &mut dyn ExecHook,
) -> Result<NodeSet, ExecError> {
    Interp::new(g).run(q, Some(hook))
}

/// Nodes reachable from `sources` along data-flow edges, restricted to
/// `targets`; searched backwards from each target.
pub fn reachable_by(g: &CodePropertyGraph, targets: &NodeSet, sources: &NodeSet) -> NodeSet {
    let mut keep = NodeSet::new();
    for &t in targets {
        let mut seen = NodeSet::from([t]);
        let mut queue = VecDeque::from([t]);
        while let Some(n) = queue.pop_front() {
            if sources.contains(&n) {
                keep.insert(t);
                break;
            }
            for &p in g.flow_predecessors(n) {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
    }
    keep
}

struct Interp<'g> {
    g: &'g CodePropertyGraph,
    env: BTreeMap<String, Value>,
    regexes: HashMap<String, Regex>,
    block: usize,
}

enum ArgVal<'a> {
    Text(String),
    Int(i64),
    Pred(&'a Predicate),
    Trav(&'a Chain),
}

impl<'g> Interp<'g> {
    fn new(g: &'g CodePropertyGraph) -> Self {
        Interp {
            g,
            env: BTreeMap::new(),
            regexes: HashMap::new(),
            block: 0,
        }
    }

    fn fail(&self, kind: ExecErrorKind, offending: &str, message: String) -> ExecError {
        ExecError {
            block: self.block,
            kind,
            message,
            offending: offending.to_string(),
        }
    }

    fn run(&mut self, q: &QueryAst, mut hook: Option<&mut dyn ExecHook>) -> Result<NodeSet, ExecError> {
        let mut order: Vec<ChainId> = (0..q.bindings.len()).map(ChainId::Binding).collect();
        if q.result.is_some() {
            order.push(ChainId::Result);
        }
        let mut blocks = q.blocks.iter().peekable();
        let mut result = None;
        for id in order {
            let chain = q.chain(id);
            let key = q.chain_key(id).to_string();
            let mut value = Value::Nodes(NodeSet::new());
            while let Some(b) = blocks.next_if(|b| b.chain == id) {
                self.block = b.index;
                if let Some(i) = b.step {
                    self.check_static(&chain.steps[i])?;
                }
                value = match b.step {
                    None => self.start_value(&chain.start)?,
                    Some(0) if !matches!(chain.start, Start::Root { .. }) => {
                        let v = self.start_value(&chain.start)?;
                        self.step(v, &chain.steps[0])?
                    }
                    Some(i) => self.step(value, &chain.steps[i])?,
                };
                if let Some(h) = hook.as_deref_mut() {
                    let mut env = self.env.clone();
                    env.insert(key.clone(), value.clone());
                    h.after_block(b, &key, &env);
                }
            }
            if id == ChainId::Result {
                result = Some(value);
            } else {
                self.env.insert(key, value);
            }
        }
        let result = match result {
            Some(v) => v,
            None => self.env[q.chain_key(q.result_chain())].clone(),
        };
        match result {
            Value::Nodes(s) => Ok(s),
            Value::Count(_) => Err(self.fail(
                ExecErrorKind::TypeMismatch,
                "size",
                "query result must be a node set, not a count".into(),
            )),
        }
    }

    fn start_value(&self, start: &Start) -> Result<Value, ExecError> {
        let g = self.g;
        match start {
            Start::Binding { name, .. } => self.env.get(name).cloned().ok_or_else(|| {
                self.fail(ExecErrorKind::UnknownStep, name, format!("binding `{name}` is not defined"))
            }),
            Start::Root { name, .. } => Ok(Value::Nodes(match name.as_str() {
                "cpg" => g.all_ids(),
                "cpg.call" => g.nodes_of_kind(NodeKind::Call),
                "cpg.method" => g.nodes_of_kind(NodeKind::Method),
                "cpg.identifier" => g.nodes_of_kind(NodeKind::Identifier),
                "cpg.literal" => g.nodes_of_kind(NodeKind::Literal),
                "cpg.assignment" => g
                    .nodes()
                    .filter(|n| n.kind == NodeKind::Call && n.name == OP_ASSIGNMENT)
                    .map(|n| n.id)
                    .collect(),
                other => {
                    return Err(self.fail(
                        ExecErrorKind::UnknownStep,
                        other,
                        format!("unknown root `{other}`"),
                    ))
                }
            })),
        }
    }

    fn eval_chain(&mut self, chain: &Chain) -> Result<Value, ExecError> {
        let mut v = self.start_value(&chain.start)?;
        for s in &chain.steps {
            v = self.step(v, s)?;
        }
        Ok(v)
    }

    fn check_args<'a>(&self, step: &'a Step, sig: ParamSig) -> Result<Vec<ArgVal<'a>>, ExecError> {
        let (lo, hi) = sig.arity();
        if step.args.len() < lo || step.args.len() > hi {
            let want = if lo == hi { format!("{lo}") } else { format!("{lo} to {hi}") };
            return Err(self.fail(
                ExecErrorKind::ArityMismatch,
                &step.name,
                format!("`{}` takes {want} argument(s), got {}", step.name, step.args.len()),
            ));
        }
        let mut out = Vec::new();
        for a in &step.args {
            let v = match (sig, a) {
                (ParamSig::String | ParamSig::Regex, Arg::Str(s)) => ArgVal::Text(s.clone()),
                (ParamSig::String | ParamSig::Regex, Arg::Operator(o)) => {
                    match registry::operator_full_name(o) {
                        Some(full) => ArgVal::Text(full.to_string()),
                        None => {
                            return Err(self.fail(
                                ExecErrorKind::UnknownOperatorName,
                                o,
                                format!("`Operators.{o}` is not a known operator"),
                            ))
                        }
                    }
                }
                (ParamSig::Integer | ParamSig::OptionalInteger, Arg::Int(i)) => ArgVal::Int(*i),
                (ParamSig::Predicate | ParamSig::PredicatePair, Arg::Pred(p)) => ArgVal::Pred(p),
                (ParamSig::Traversal, Arg::Traversal(c)) => ArgVal::Trav(c),
                _ => {
                    return Err(self.fail(
                        ExecErrorKind::TypeMismatch,
                        &step.name,
                        format!("`{}` expects ({sig}), got a {}", step.name, a.kind_name()),
                    ))
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Validate a step and every step nested in its arguments, so errors
    /// do not depend on whether the input happens to be empty.
    fn check_static(&mut self, step: &Step) -> Result<(), ExecError> {
        let entry = self.entry(step)?;
        let sig = entry.params;
        for a in self.check_args(step, sig)? {
            match a {
                ArgVal::Text(t) if sig == ParamSig::Regex => {
                    self.regex(&t, &step.name)?;
                }
                ArgVal::Pred(p) => self.check_pred(p)?,
                ArgVal::Trav(c) => {
                    for s in &c.steps {
                        self.check_static(s)?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_pred(&mut self, p: &Predicate) -> Result<(), ExecError> {
        match p {
            Predicate::Chain(steps) => steps.iter().try_for_each(|s| self.check_static(s)),
            Predicate::Not(a) => self.check_pred(a),
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                self.check_pred(a)?;
                self.check_pred(b)
            }
        }
    }

    fn entry(&self, step: &Step) -> Result<&'static registry::StepRegistryEntry, ExecError> {
        let Some(entry) = registry::lookup(&step.name) else {
            return Err(self.fail(
                ExecErrorKind::UnknownStep,
                &step.name,
                format!("unknown step `{}`", step.name),
            ));
        };
        if matches!(entry.category, Category::Root | Category::Constant | Category::Predicate) {
            return Err(self.fail(
                ExecErrorKind::UnknownStep,
                &step.name,
                format!("`{}` cannot be used as a step", step.name),
            ));
        }
        Ok(entry)
    }

    fn regex(&mut self, pattern: &str, step: &str) -> Result<Regex, ExecError> {
        if let Some(r) = self.regexes.get(pattern) {
            return Ok(r.clone());
        }
        let r = Regex::new(&format!("^(?:{pattern})$")).map_err(|e| {
            self.fail(ExecErrorKind::RegexError, step, format!("bad regex {pattern:?}: {e}"))
        })?;
        self.regexes.insert(pattern.to_string(), r.clone());
        Ok(r)
    }

    fn filter(&self, set: NodeSet, f: impl Fn(&crate::cpg::Node) -> bool) -> NodeSet {
        set.into_iter()
            .filter(|id| self.g.node(*id).is_some_and(&f))
            .collect()
    }

    fn step(&mut self, input: Value, step: &Step) -> Result<Value, ExecError> {
        let entry = self.entry(step)?;
        let args = self.check_args(step, entry.params)?;
        let set = match input {
            Value::Nodes(s) => s,
            Value::Count(_) => {
                return Err(self.fail(
                    ExecErrorKind::TypeMismatch,
                    &step.name,
                    format!("`{}` applied to a count, not a node set", step.name),
                ))
            }
        };
        let g = self.g;
        let text = |i: usize| match args.get(i) {
            Some(ArgVal::Text(s)) => s.clone(),
            _ => String::new(),
        };
        let out = match step.name.as_str() {
            "name" => {
                let re = self.regex(&text(0), &step.name)?;
                self.filter(set, |n| re.is_match(&n.name))
            }
            "code" => {
                let re = self.regex(&text(0), &step.name)?;
                self.filter(set, |n| re.is_match(&n.code))
            }
            "typeFullName" => {
                self.regex(&text(0), &step.name)?;
                NodeSet::new()
            }
            "nameExact" => {
                let want = text(0);
                self.filter(set, |n| n.name == want)
            }
            "label" => {
                let want = text(0);
                self.filter(set, |n| n.kind.as_str() == want)
            }
            "lineNumber" => {
                let Some(ArgVal::Int(line)) = args.first() else { unreachable!() };
                let line = *line;
                self.filter(set, |n| i64::from(n.line) == line)
            }
            "isCall" => self.filter(set, |n| n.kind == NodeKind::Call),
            "isLiteral" => self.filter(set, |n| n.kind == NodeKind::Literal),
            "isIdentifier" => self.filter(set, |n| n.kind == NodeKind::Identifier),
            "arrayAccess" => self.filter(set, |n| n.name == OP_INDEX_ACCESS),
            "fieldAccess" => self.filter(set, |n| n.name == OP_FIELD_ACCESS),
            "where" | "whereNot" | "filter" => {
                let Some(ArgVal::Pred(p)) = args.first() else { unreachable!() };
                let negate = step.name == "whereNot";
                let mut out = NodeSet::new();
                for n in set {
                    if self.holds(p, n)? != negate {
                        out.insert(n);
                    }
                }
                out
            }
            "argument" => {
                let calls = self.filter(set, |n| n.kind == NodeKind::Call);
                match args.first() {
                    Some(ArgVal::Int(i)) => {
                        let i = u32::try_from(*i).unwrap_or(0);
                        calls.iter().filter_map(|&c| g.ast_child(c, i)).collect()
                    }
                    _ => calls.iter().flat_map(|&c| g.ast_children(c).map(|(_, ch)| ch)).collect(),
                }
            }
            "array" | "index" => {
                let order = if step.name == "array" { 1 } else { 2 };
                self.filter(set, |n| n.name == OP_INDEX_ACCESS)
                    .into_iter()
                    .filter_map(|c| g.ast_child(c, order))
                    .collect()
            }
            "astChildren" => set.iter().flat_map(|&n| g.ast_children(n).map(|(_, c)| c)).collect(),
            "astParent" => set.iter().filter_map(|&n| g.ast_parent(n)).collect(),
            "inAst" => {
                let mut out = NodeSet::new();
                for &n in &set {
                    let mut cur = n;
                    while let Some(p) = g.ast_parent(cur) {
                        out.insert(p);
                        cur = p;
                    }
                }
                out
            }
            "method" => set.iter().map(|&n| g.enclosing_method(n)).collect(),
            "parameter" => self
                .filter(set, |n| n.kind == NodeKind::Method)
                .into_iter()
                .flat_map(|m| g.ast_children(m).map(|(_, c)| c))
                .filter(|c| g.node(*c).is_some_and(|n| n.kind == NodeKind::Param))
                .collect(),
            "reachableBy" => {
                let Some(ArgVal::Trav(t)) = args.first() else { unreachable!() };
                let sources = match self.eval_chain(t)? {
                    Value::Nodes(s) => s,
                    Value::Count(_) => {
                        return Err(self.fail(
                            ExecErrorKind::TypeMismatch,
                            &step.name,
                            "reachableBy source traversal yields a count".into(),
                        ))
                    }
                };
                reachable_by(g, &set, &sources)
            }
            "dump" | "toList" => set,
            "size" => return Ok(Value::Count(set.len())),
            "address" => NodeSet::new(),
            other => {
                debug_assert!(entry.returns != Returns::NodeSet, "unhandled step {other}");
                return Err(self.fail(
                    ExecErrorKind::UnknownStep,
                    other,
                    format!("step `{other}` has no implementation"),
                ));
            }
        };
        Ok(Value::Nodes(out))
    }

    fn holds(&mut self, p: &Predicate, n: NodeId) -> Result<bool, ExecError> {
        Ok(match p {
            Predicate::Chain(steps) => {
                let mut v = Value::Nodes(NodeSet::from([n]));
                for s in steps {
                    v = self.step(v, s)?;
                }
                !v.is_empty()
            }
            Predicate::Not(a) => !self.holds(a, n)?,
            Predicate::And(a, b) => self.holds(a, n)? && self.holds(b, n)?,
            Predicate::Or(a, b) => self.holds(a, n)? || self.holds(b, n)?,
        })
    }
}
