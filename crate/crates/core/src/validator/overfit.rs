//! Signs that a query is tied to one example rather than a class.

use serde::{Deserialize, Serialize};

use crate::cpg::OPERATOR_NAMES;
use crate::lang::builtins;
use crate::query::{Arg, Chain, Predicate, QueryAst, Step};

/// Constant arguments never flagged besides operator and builtin names.
pub const ALLOWED_CONSTANTS: [&str; 3] = ["__proto__", "prototype", "constructor"];

/// Longest run of consecutive `astChildren` steps not flagged.
pub const MAX_AST_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverfitKind {
    ExactConstant,
    StructuralOverSpecific,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverfitFlag {
    pub kind: OverfitKind,
    pub block: usize,
    pub detail: String,
}

fn allowed(s: &str) -> bool {
    OPERATOR_NAMES.contains(&s) || ALLOWED_CONSTANTS.contains(&s) || builtins::all_builtins().any(|b| b == s)
}

/// Flags for `q` given the source slice of the example it was written for.
pub fn detect_overfit(q: &QueryAst, slice: &str) -> Vec<OverfitFlag> {
    let mut flags = Vec::new();
    for b in &q.blocks {
        let Some(si) = b.step else { continue };
        let chain = q.chain(b.chain);
        let step = &chain.steps[si];
        let mut check = |s: &Step, run: usize| {
            if let Some(f) = step_flag(s, run, slice) {
                flags.push(OverfitFlag { block: b.index, ..f });
            }
        };
        check(step, ast_run(&chain.steps, si));
        visit_nested(step, &mut check);
    }
    flags
}

/// Length of the `astChildren` run ending at `steps[i]`.
fn ast_run(steps: &[Step], i: usize) -> usize {
    steps[..=i].iter().rev().take_while(|s| s.name == "astChildren").count()
}

fn step_flag(s: &Step, run: usize, slice: &str) -> Option<OverfitFlag> {
    let flag = |kind, detail| Some(OverfitFlag { kind, block: 0, detail });
    match s.name.as_str() {
        "lineNumber" => flag(OverfitKind::StructuralOverSpecific, format!("{s} pins a line number")),
        "astChildren" if run == MAX_AST_DEPTH + 1 => flag(
            OverfitKind::StructuralOverSpecific,
            format!("more than {MAX_AST_DEPTH} consecutive astChildren steps"),
        ),
        "nameExact" | "code" => {
            let lit = match s.args.first()? {
                Arg::Str(v) => v.clone(),
                Arg::Int(i) => i.to_string(),
                _ => return None,
            };
            (!lit.is_empty() && !allowed(&lit) && slice.contains(&lit)).then(|| OverfitFlag {
                kind: OverfitKind::ExactConstant,
                block: 0,
                detail: format!("{s} matches the constant \"{lit}\" from the example"),
            })
        }
        _ => None,
    }
}

/// Steps inside predicate and traversal arguments of `s`.
fn visit_nested(s: &Step, f: &mut impl FnMut(&Step, usize)) {
    fn steps(ss: &[Step], f: &mut impl FnMut(&Step, usize)) {
        for (i, s) in ss.iter().enumerate() {
            f(s, ast_run(ss, i));
            visit_nested(s, f);
        }
    }
    fn pred(p: &Predicate, f: &mut impl FnMut(&Step, usize)) {
        match p {
            Predicate::Chain(ss) => steps(ss, f),
            Predicate::Not(a) => pred(a, f),
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                pred(a, f);
                pred(b, f);
            }
        }
    }
    for a in &s.args {
        match a {
            Arg::Pred(p) => pred(p, f),
            Arg::Traversal(Chain { steps: ss, .. }) => steps(ss, f),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    const SLICE: &str = "   1 | fn mergeOptions(p, source) {\n   3 |     p[key] = source[key];\n";

    fn flags(q: &str) -> Vec<OverfitFlag> {
        detect_overfit(&parse_query(q).unwrap(), SLICE)
    }

    #[test]
    fn exact_function_name_is_flagged() {
        let f = flags("cpg.method.nameExact(\"mergeOptions\")");
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].kind, f[0].block), (OverfitKind::ExactConstant, 2));
    }

    #[test]
    fn constants_absent_from_slice_or_allowed_pass() {
        assert!(flags("cpg.call.nameExact(\"other\")").is_empty());
        assert!(flags("cpg.call.nameExact(\"<operator>.indexAccess\")").is_empty());
        assert!(flags("cpg.call.name(\"mergeOptions\")").is_empty());
    }

    #[test]
    fn nested_constant_is_flagged_at_its_block() {
        let f = flags("cpg.method.where(_.parameter.nameExact(\"source\"))");
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].block, 2);
    }

    #[test]
    fn structural_flags() {
        let f = flags("cpg.call.lineNumber(7)");
        assert_eq!(f[0].kind, OverfitKind::StructuralOverSpecific);
        assert!(flags("cpg.method.astChildren.astChildren.astChildren").is_empty());
        let deep = flags("cpg.method.astChildren.astChildren.astChildren.astChildren.astChildren");
        assert_eq!(deep.len(), 1);
        assert_eq!(deep[0].block, 5);
    }
}
