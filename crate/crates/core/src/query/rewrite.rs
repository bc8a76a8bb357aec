//! Expansion of registry rewrites inside queries.

use std::collections::BTreeMap;

use super::ast::*;
use super::parser::{parse_fragment, parse_query};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot rewrite `{api}`: {reason}")]
pub struct RewriteError {
    pub api: String,
    pub reason: String,
}

/// Replace every use of an api in `rewrites` (name to template) by its
/// template, recursively through predicates and traversal arguments.
pub fn rewrite_query(
    q: &QueryAst,
    rewrites: &BTreeMap<String, String>,
) -> Result<QueryAst, RewriteError> {
    let rw = Rewriter { rewrites };
    let bindings = q
        .bindings
        .iter()
        .map(|b| {
            Ok(Binding {
                chain: rw.chain(&b.chain, 0)?,
                ..b.clone()
            })
        })
        .collect::<Result<Vec<_>, RewriteError>>()?;
    let result = q.result.as_ref().map(|c| rw.chain(c, 0)).transpose()?;
    Ok(QueryAst::new(bindings, result))
}

const MAX_DEPTH: usize = 8;

struct Rewriter<'a> {
    rewrites: &'a BTreeMap<String, String>,
}

impl Rewriter<'_> {
    fn fail(api: &str, reason: impl Into<String>) -> RewriteError {
        RewriteError {
            api: api.to_string(),
            reason: reason.into(),
        }
    }

    fn chain(&self, c: &Chain, depth: usize) -> Result<Chain, RewriteError> {
        let mut start = c.start.clone();
        let mut steps = Vec::new();
        if let Start::Root { name, .. } = &c.start {
            if let Some(t) = self.rewrites.get(name) {
                if depth > MAX_DEPTH {
                    return Err(Self::fail(name, "rewrite does not terminate"));
                }
                let tq = parse_query(t).map_err(|e| Self::fail(name, e.to_string()))?;
                let tc = match (&tq.result, tq.bindings.is_empty()) {
                    (Some(r), true) => r.clone(),
                    _ => return Err(Self::fail(name, "root rewrite must be one traversal")),
                };
                let tc = self.chain(&tc, depth + 1)?;
                start = tc.start;
                steps = tc.steps;
            }
        }
        steps.extend(self.steps(&c.steps, depth)?);
        Ok(Chain {
            start,
            steps,
            span: c.span,
        })
    }

    fn steps(&self, steps: &[Step], depth: usize) -> Result<Vec<Step>, RewriteError> {
        let mut out = Vec::new();
        for s in steps {
            let args = s
                .args
                .iter()
                .map(|a| self.arg(a, depth))
                .collect::<Result<Vec<_>, _>>()?;
            let s = Step { args, ..s.clone() };
            match self.rewrites.get(&s.name) {
                None => out.push(s),
                Some(t) => {
                    if depth > MAX_DEPTH {
                        return Err(Self::fail(&s.name, "rewrite does not terminate"));
                    }
                    let tsteps =
                        parse_fragment(t).map_err(|e| Self::fail(&s.name, e.to_string()))?;
                    let filled = tsteps
                        .into_iter()
                        .map(|ts| fill_step(ts, &s))
                        .collect::<Result<Vec<_>, _>>()?;
                    out.extend(self.steps(&filled, depth + 1)?);
                }
            }
        }
        Ok(out)
    }

    fn arg(&self, a: &Arg, depth: usize) -> Result<Arg, RewriteError> {
        Ok(match a {
            Arg::Pred(p) => Arg::Pred(self.pred(p, depth)?),
            Arg::Traversal(c) => Arg::Traversal(self.chain(c, depth)?),
            other => other.clone(),
        })
    }

    fn pred(&self, p: &Predicate, depth: usize) -> Result<Predicate, RewriteError> {
        Ok(match p {
            Predicate::Chain(steps) => Predicate::Chain(self.steps(steps, depth)?),
            Predicate::Not(a) => Predicate::Not(Box::new(self.pred(a, depth)?)),
            Predicate::And(a, b) => {
                Predicate::And(Box::new(self.pred(a, depth)?), Box::new(self.pred(b, depth)?))
            }
            Predicate::Or(a, b) => {
                Predicate::Or(Box::new(self.pred(a, depth)?), Box::new(self.pred(b, depth)?))
            }
        })
    }
}

fn is_placeholder(p: &Predicate) -> bool {
    matches!(p, Predicate::Chain(s) if s.is_empty())
}

/// Substitute the original step's argument for `_` placeholders.
fn fill_step(mut t: Step, orig: &Step) -> Result<Step, RewriteError> {
    let fill_arg = |a: Arg| -> Result<Arg, RewriteError> {
        match a {
            Arg::Pred(p) if is_placeholder(&p) => orig.args.first().cloned().ok_or_else(|| {
                Rewriter::fail(&orig.name, "template needs an argument the step does not have")
            }),
            Arg::Pred(p) => Ok(Arg::Pred(fill_pred(p, orig)?)),
            other => Ok(other),
        }
    };
    t.args = t.args.into_iter().map(fill_arg).collect::<Result<_, _>>()?;
    t.span = orig.span;
    Ok(t)
}

fn fill_pred(p: Predicate, orig: &Step) -> Result<Predicate, RewriteError> {
    if is_placeholder(&p) {
        return match orig.args.first() {
            Some(Arg::Pred(op)) => Ok(op.clone()),
            _ => Err(Rewriter::fail(&orig.name, "template needs a predicate argument")),
        };
    }
    Ok(match p {
        Predicate::Not(a) => Predicate::Not(Box::new(fill_pred(*a, orig)?)),
        Predicate::And(a, b) => {
            Predicate::And(Box::new(fill_pred(*a, orig)?), Box::new(fill_pred(*b, orig)?))
        }
        Predicate::Or(a, b) => {
            Predicate::Or(Box::new(fill_pred(*a, orig)?), Box::new(fill_pred(*b, orig)?))
        }
        chain => chain,
    })
}
