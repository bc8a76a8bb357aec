//! Workload generators shared by the benchmarks.

use std::fmt::Write;

/// A MiniLang program with `functions` copies of a small handler, each
/// reading input, optionally sanitizing it, and passing it to a sink.
pub fn synthetic_program(functions: usize) -> String {
    let mut src = String::new();
    for i in 0..functions {
        let sink = ["exec", "sql", "evalCode"][i % 3];
        let value = if i % 4 == 0 { "sanitize(raw)" } else { "raw + \"!\"" };
        let _ = writeln!(src, "function handler{i}(db, key) {{");
        let _ = writeln!(src, "  let raw = input();");
        let _ = writeln!(src, "  let value = {value};");
        let _ = writeln!(src, "  let table = {{}};");
        let _ = writeln!(src, "  table[key] = value;");
        let _ = writeln!(src, "  if (key) {{ value = value + key; }}");
        let _ = writeln!(src, "  {sink}(db, value);");
        let _ = writeln!(src, "  return table;");
        let _ = writeln!(src, "}}");
    }
    src
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn program_parses_and_builds() {
        let p = queryforge::lang::parse_program(&synthetic_program(6), "s.mini").unwrap();
        let g = queryforge::lang::build_cpg(&p);
        assert!(g.node_count() > 100);
    }
}
