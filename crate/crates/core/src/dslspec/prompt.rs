use std::fmt::Write;

use super::DslSpec;

/// Character budget the shipped subset's prompt must fit in.
pub const PROMPT_BUDGET: usize = 6000;

/// Grammar-prompt text: the BNF, one rule per line, then one summary line
/// per api in the form `name(signature) -> return - description`.
pub fn render_prompt(spec: &DslSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Query language grammar (BNF)");
    for r in &spec.grammar {
        let _ = writeln!(out, "{r}");
    }
    out.push_str("A <binding_name> in <cpg_start> must name an earlier binding.\n");
    out.push_str("The result is the last traversal, or the last binding if there is none.\n\n");
    let _ = writeln!(out, "# Steps");
    for e in &spec.apis {
        let _ = writeln!(out, "{} - {}", e.signature(), e.description);
    }
    let b = &spec.builtins;
    let _ = writeln!(out, "\n# Library calls");
    let _ = writeln!(out, "sources: {}", b.sources.join(", "));
    let _ = writeln!(out, "sinks: {}", b.sinks.join(", "));
    let _ = writeln!(out, "sanitizers: {}", b.sanitizers.join(", "));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dslspec::extract_spec;

    #[test]
    fn one_summary_line_per_api() {
        let mut s = extract_spec();
        s.apis.truncate(1);
        let p = render_prompt(&s);
        let lines = p.lines().filter(|l| l.contains(" - ")).count();
        assert_eq!(lines, 1);
    }

    #[test]
    fn deterministic_and_contains_reference_rule() {
        let s = extract_spec();
        let a = render_prompt(&s);
        assert_eq!(a, render_prompt(&s));
        assert!(a.contains("<reference> ::= \"Operators.\" <operator>"));
    }
}
