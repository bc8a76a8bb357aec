//! Parsed query representation and its canonical printer.

use std::fmt;

use crate::error::Span;

/// Key under which the result chain's intermediate values are recorded.
pub const RESULT_KEY: &str = "$result";

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub bindings: Vec<Binding>,
    /// Trailing expression; when absent the last binding is the result.
    pub result: Option<Chain>,
    /// Evaluation-ordered blocks B_1..B_n.
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    /// `def` or `val`.
    pub keyword: String,
    pub name: String,
    pub chain: Chain,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub start: Start,
    pub steps: Vec<Step>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// A root such as `cpg` or `cpg.call`.
    Root { name: String, span: Span },
    /// A previously defined binding.
    Binding { name: String, span: Span },
}

impl Start {
    pub fn name(&self) -> &str {
        match self {
            Start::Root { name, .. } | Start::Binding { name, .. } => name,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Start::Root { span, .. } | Start::Binding { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub name: String,
    pub args: Vec<Arg>,
    /// Whether the step was written with a (possibly empty) argument list.
    pub parens: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Str(String),
    Int(i64),
    /// `Operators.<name>`; holds `<name>`.
    Operator(String),
    Pred(Predicate),
    Traversal(Chain),
}

impl Arg {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Arg::Str(_) => "string",
            Arg::Int(_) => "integer",
            Arg::Operator(_) => "operator reference",
            Arg::Pred(_) => "predicate",
            Arg::Traversal(_) => "traversal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// `_` followed by zero or more steps; holds for a node if the chain
    /// applied to it yields a nonempty result.
    Chain(Vec<Step>),
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChainId {
    Binding(usize),
    Result,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// 1-based position in evaluation order.
    pub index: usize,
    pub chain: ChainId,
    /// Step index within the chain; `None` for the chain's start.
    pub step: Option<usize>,
    pub span: Span,
    pub text: String,
}

impl QueryAst {
    /// Assemble a query and number its blocks.
    pub fn new(bindings: Vec<Binding>, result: Option<Chain>) -> Self {
        let mut blocks = Vec::new();
        let push_chain = |id: ChainId, chain: &Chain, blocks: &mut Vec<Block>| {
            let counts_start =
                matches!(chain.start, Start::Root { .. }) || chain.steps.is_empty();
            if counts_start {
                blocks.push(Block {
                    index: blocks.len() + 1,
                    chain: id,
                    step: None,
                    span: chain.start.span(),
                    text: chain.start.name().to_string(),
                });
            }
            for (i, s) in chain.steps.iter().enumerate() {
                blocks.push(Block {
                    index: blocks.len() + 1,
                    chain: id,
                    step: Some(i),
                    span: s.span,
                    text: format!(".{s}"),
                });
            }
        };
        for (i, b) in bindings.iter().enumerate() {
            push_chain(ChainId::Binding(i), &b.chain, &mut blocks);
        }
        if let Some(r) = &result {
            push_chain(ChainId::Result, r, &mut blocks);
        }
        QueryAst {
            bindings,
            result,
            blocks,
        }
    }

    pub fn chain(&self, id: ChainId) -> &Chain {
        match id {
            ChainId::Binding(i) => &self.bindings[i].chain,
            ChainId::Result => self.result.as_ref().expect("result chain exists"),
        }
    }

    /// Name under which a chain's values are recorded in program states.
    pub fn chain_key(&self, id: ChainId) -> &str {
        match id {
            ChainId::Binding(i) => &self.bindings[i].name,
            ChainId::Result => RESULT_KEY,
        }
    }

    /// The chain whose value is the query result.
    pub fn result_chain(&self) -> ChainId {
        match self.result {
            Some(_) => ChainId::Result,
            None => ChainId::Binding(self.bindings.len() - 1),
        }
    }

    pub fn binding_index(&self, name: &str) -> Option<usize> {
        self.bindings.iter().position(|b| b.name == name)
    }

    /// Every chain in the query, including traversal arguments and
    /// predicate bodies, visited depth first.
    pub fn visit_steps(&self, f: &mut impl FnMut(&Step)) {
        fn pred(p: &Predicate, f: &mut impl FnMut(&Step)) {
            match p {
                Predicate::Chain(steps) => steps_rec(steps, f),
                Predicate::Not(a) => pred(a, f),
                Predicate::And(a, b) | Predicate::Or(a, b) => {
                    pred(a, f);
                    pred(b, f);
                }
            }
        }
        fn steps_rec(steps: &[Step], f: &mut impl FnMut(&Step)) {
            for s in steps {
                f(s);
                for a in &s.args {
                    match a {
                        Arg::Pred(p) => pred(p, f),
                        Arg::Traversal(c) => steps_rec(&c.steps, f),
                        _ => {}
                    }
                }
            }
        }
        for b in &self.bindings {
            steps_rec(&b.chain.steps, f);
        }
        if let Some(r) = &self.result {
            steps_rec(&r.steps, f);
        }
    }

    /// Names of every api the query mentions: roots, steps, predicate
    /// combinators and operator constants.
    pub fn api_names(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        fn chain(c: &Chain, out: &mut std::collections::BTreeSet<String>) {
            if let Start::Root { name, .. } = &c.start {
                out.insert(name.clone());
            }
            steps(&c.steps, out);
        }
        fn steps(ss: &[Step], out: &mut std::collections::BTreeSet<String>) {
            for s in ss {
                out.insert(s.name.clone());
                for a in &s.args {
                    arg(a, out);
                }
            }
        }
        fn arg(a: &Arg, out: &mut std::collections::BTreeSet<String>) {
            match a {
                Arg::Operator(o) => {
                    out.insert(format!("Operators.{o}"));
                }
                Arg::Pred(p) => pred(p, out),
                Arg::Traversal(c) => chain(c, out),
                _ => {}
            }
        }
        fn pred(p: &Predicate, out: &mut std::collections::BTreeSet<String>) {
            match p {
                Predicate::Chain(ss) => steps(ss, out),
                Predicate::Not(a) => {
                    out.insert("not".into());
                    pred(a, out);
                }
                Predicate::And(a, b) | Predicate::Or(a, b) => {
                    out.insert(if matches!(p, Predicate::And(..)) { "and" } else { "or" }.into());
                    pred(a, out);
                    pred(b, out);
                }
            }
        }
        for b in &self.bindings {
            chain(&b.chain, &mut out);
        }
        if let Some(r) = &self.result {
            chain(r, &mut out);
        }
        out
    }
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Str(s) => write_str_lit(f, s),
            Arg::Int(i) => write!(f, "{i}"),
            Arg::Operator(o) => write!(f, "Operators.{o}"),
            Arg::Pred(p) => write!(f, "{p}"),
            Arg::Traversal(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Chain(steps) => {
                f.write_str("_")?;
                for s in steps {
                    write!(f, ".{s}")?;
                }
                Ok(())
            }
            Predicate::Not(p) => write!(f, "not({p})"),
            Predicate::And(a, b) => write!(f, "and({a}, {b})"),
            Predicate::Or(a, b) => write!(f, "or({a}, {b})"),
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if self.parens || !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.start.name())?;
        for s in &self.steps {
            write!(f, ".{s}")?;
        }
        Ok(())
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bindings {
            writeln!(f, "{} {} = {}", b.keyword, b.name, b.chain)?;
        }
        if let Some(r) = &self.result {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
