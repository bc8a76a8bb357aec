//! Fixed table of MiniLang library functions with security meaning.

/// Name of the synthetic method holding a file's top-level statements.
pub const GLOBAL_METHOD: &str = "<global>";

/// Calls whose return value is attacker controlled.
pub const SOURCES: [&str; 1] = ["input"];
/// Calls that must not receive attacker-controlled data.
pub const SINKS: [&str; 3] = ["exec", "sql", "evalCode"];
/// Calls whose return value carries no flow from their arguments.
pub const SANITIZERS: [&str; 1] = ["sanitize"];

pub fn is_source(name: &str) -> bool {
    SOURCES.contains(&name)
}

pub fn is_sink(name: &str) -> bool {
    SINKS.contains(&name)
}

pub fn is_sanitizer(name: &str) -> bool {
    SANITIZERS.contains(&name)
}

/// Every builtin name, sources first.
pub fn all_builtins() -> impl Iterator<Item = &'static str> {
    SOURCES.into_iter().chain(SINKS).chain(SANITIZERS)
}
