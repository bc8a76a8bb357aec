//! Recursive-descent parser for the query language.
//!
//! Errors name the grammar rule whose expansion failed, using the rule
//! names of the published BNF (`cpg_start`, `step`, `predicate`, ...).

use super::ast::*;
use super::registry;
use crate::error::{GrammarError, Span};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Punct(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of query".into(),
        }
    }
}

fn err(rule: &str, span: Span, expected: &[&str], found: String) -> GrammarError {
    GrammarError {
        rule: rule.to_string(),
        span,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found,
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Span)>, GrammarError> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let offset = |i: usize| bytes.get(i).map(|b| b.0).unwrap_or(text.len());

    while i < bytes.len() {
        let c = bytes[i].1;
        let (start, sline, scol) = (offset(i), line, col);
        let span_to = |j: usize| Span {
            start,
            end: offset(j),
            line: sline,
            column: scol,
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && bytes.get(i + 1).map(|b| b.1) == Some('/') {
            while i < bytes.len() && bytes[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < bytes.len() && (bytes[j].1.is_ascii_alphanumeric() || bytes[j].1 == '_') {
                j += 1;
            }
            let word: String = bytes[i..j].iter().map(|b| b.1).collect();
            col += (j - i) as u32;
            out.push((Tok::Ident(word), span_to(j)));
            i = j;
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && bytes[j].1.is_ascii_digit() {
                j += 1;
            }
            let digits: String = bytes[i..j].iter().map(|b| b.1).collect();
            let n = digits.parse::<i64>().map_err(|_| {
                err("integer", span_to(j), &["integer"], format!("`{digits}`"))
            })?;
            col += (j - i) as u32;
            out.push((Tok::Int(n), span_to(j)));
            i = j;
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut j = i + 1;
            let mut s = String::new();
            loop {
                match bytes.get(j).map(|b| b.1) {
                    None | Some('\n') => {
                        return Err(err("string", span_to(j), &["closing quote"], "end of line".into()))
                    }
                    Some(ch) if ch == quote => break,
                    Some('\\') => {
                        let esc = bytes.get(j + 1).map(|b| b.1).unwrap_or('\\');
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        j += 2;
                    }
                    Some(ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            j += 1;
            col += (j - i) as u32;
            out.push((Tok::Str(s), span_to(j)));
            i = j;
            continue;
        }
        if "().,=;".contains(c) {
            i += 1;
            col += 1;
            out.push((Tok::Punct(c), span_to(i)));
            continue;
        }
        return Err(err("query", span_to(i + 1), &["token"], format!("`{c}`")));
    }
    let end = Span {
        start: text.len(),
        end: text.len(),
        line,
        column: col,
    };
    out.push((Tok::Eof, end));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    at: usize,
    bound: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.at].1
    }

    fn prev_end(&self) -> usize {
        if self.at == 0 {
            0
        } else {
            self.toks[self.at - 1].1.end
        }
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_punct(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn expect_punct(&mut self, c: char, rule: &str) -> Result<(), GrammarError> {
        if self.is_punct(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(rule, &[&format!("\"{c}\"")]))
        }
    }

    fn error(&self, rule: &str, expected: &[&str]) -> GrammarError {
        err(rule, self.span(), expected, self.peek().describe())
    }

    fn skip_semis(&mut self) {
        while self.is_punct(';') {
            self.bump();
        }
    }

    fn query(&mut self) -> Result<QueryAst, GrammarError> {
        let mut bindings = Vec::new();
        let mut result = None;
        self.skip_semis();
        if *self.peek() == Tok::Eof {
            return Err(self.error("query", &["<statement>"]));
        }
        while *self.peek() != Tok::Eof {
            if result.is_some() {
                return Err(self.error("query", &["end of query"]));
            }
            match self.peek() {
                Tok::Ident(kw) if kw == "def" || kw == "val" => bindings.push(self.binding()?),
                _ => result = Some(self.traversal()?),
            }
            self.skip_semis();
        }
        Ok(QueryAst::new(bindings, result))
    }

    fn binding(&mut self) -> Result<Binding, GrammarError> {
        let (kw, kw_span) = self.bump();
        let Tok::Ident(keyword) = kw else { unreachable!() };
        let name_span = self.span();
        let name = match self.peek().clone() {
            Tok::Ident(n) if n != "cpg" && n != "_" && n != "def" && n != "val" => {
                self.bump();
                n
            }
            _ => return Err(self.error("binding", &["<binding_name>"])),
        };
        if self.bound.contains(&name) {
            return Err(err("binding", name_span, &["fresh <binding_name>"], format!("duplicate `{name}`")));
        }
        self.expect_punct('=', "binding")?;
        let chain = self.traversal()?;
        self.bound.push(name.clone());
        let span = Span {
            end: self.prev_end(),
            ..kw_span
        };
        Ok(Binding {
            keyword,
            name,
            chain,
            span,
        })
    }

    fn traversal(&mut self) -> Result<Chain, GrammarError> {
        let first = self.span();
        let start = self.cpg_start()?;
        let mut steps = Vec::new();
        while self.is_punct('.') {
            self.bump();
            steps.push(self.step()?);
        }
        Ok(Chain {
            start,
            steps,
            span: Span {
                end: self.prev_end(),
                ..first
            },
        })
    }

    fn cpg_start(&mut self) -> Result<Start, GrammarError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(w) if w == "cpg" => {
                self.bump();
                let mut name = "cpg".to_string();
                if let (Tok::Punct('.'), Tok::Ident(next)) = (self.peek().clone(), self.peek_at(1).clone()) {
                    let candidate = format!("cpg.{next}");
                    if registry::root_names().contains(&candidate.as_str()) {
                        self.bump();
                        self.bump();
                        name = candidate;
                    }
                }
                Ok(Start::Root {
                    name,
                    span: Span {
                        end: self.prev_end(),
                        ..span
                    },
                })
            }
            Tok::Ident(w) if self.bound.contains(&w) => {
                self.bump();
                Ok(Start::Binding { name: w, span })
            }
            _ => Err(self.error("cpg_start", &["\"cpg\"", "<binding_name>"])),
        }
    }

    fn step(&mut self) -> Result<Step, GrammarError> {
        let span = self.span();
        let name = match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                n
            }
            _ => return Err(self.error("step", &["<identifier>"])),
        };
        let mut args = Vec::new();
        let mut parens = false;
        if self.is_punct('(') {
            parens = true;
            self.bump();
            if !self.is_punct(')') {
                args.push(self.arg()?);
                while self.is_punct(',') {
                    self.bump();
                    args.push(self.arg()?);
                }
            }
            self.expect_punct(')', "step")?;
        }
        Ok(Step {
            name,
            args,
            parens,
            span: Span {
                end: self.prev_end(),
                ..span
            },
        })
    }

    fn arg(&mut self) -> Result<Arg, GrammarError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Arg::Str(s))
            }
            Tok::Int(i) => {
                self.bump();
                Ok(Arg::Int(i))
            }
            Tok::Ident(w) if w == "Operators" => {
                self.bump();
                self.expect_punct('.', "reference")?;
                match self.peek().clone() {
                    Tok::Ident(op) => {
                        self.bump();
                        Ok(Arg::Operator(op))
                    }
                    _ => Err(self.error("reference", &["<operator>"])),
                }
            }
            Tok::Ident(w) if self.starts_predicate(&w) => Ok(Arg::Pred(self.predicate()?)),
            Tok::Ident(_) => Ok(Arg::Traversal(self.traversal()?)),
            _ => Err(self.error("step", &["<string_arg>", "<integer>", "<predicate>", "<traversal>"])),
        }
    }

    fn starts_predicate(&self, w: &str) -> bool {
        w == "_" || (matches!(w, "not" | "and" | "or") && *self.peek_at(1) == Tok::Punct('('))
    }

    fn predicate(&mut self) -> Result<Predicate, GrammarError> {
        let w = match self.peek().clone() {
            Tok::Ident(w) if self.starts_predicate(&w) => w,
            _ => return Err(self.error("predicate", &["\"_\"", "\"not(\"", "\"and(\"", "\"or(\""])),
        };
        self.bump();
        if w == "_" {
            let mut steps = Vec::new();
            while self.is_punct('.') {
                self.bump();
                steps.push(self.step()?);
            }
            return Ok(Predicate::Chain(steps));
        }
        self.expect_punct('(', "predicate")?;
        let a = self.predicate()?;
        let p = if w == "not" {
            Predicate::Not(Box::new(a))
        } else {
            self.expect_punct(',', "predicate")?;
            let b = self.predicate()?;
            if w == "and" {
                Predicate::And(Box::new(a), Box::new(b))
            } else {
                Predicate::Or(Box::new(a), Box::new(b))
            }
        };
        self.expect_punct(')', "predicate")?;
        Ok(p)
    }
}

/// Parse query text into blocks. Binding references must be defined
/// before use.
pub fn parse_query(text: &str) -> Result<QueryAst, GrammarError> {
    let toks = lex(text)?;
    Parser {
        toks,
        at: 0,
        bound: Vec::new(),
    }
    .query()
}

/// Parse a step-chain fragment such as `where(not(_))` (as written in
/// registry rewrites) into steps.
pub(crate) fn parse_fragment(text: &str) -> Result<Vec<Step>, GrammarError> {
    let toks = lex(&format!("_.{text}"))?;
    let mut p = Parser {
        toks,
        at: 0,
        bound: Vec::new(),
    };
    let pred = p.predicate()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("step_chain", &["end of fragment"]));
    }
    match pred {
        Predicate::Chain(steps) => Ok(steps),
        _ => unreachable!("fragment starts with `_`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

const PROTO_QUERY: &str = "def objProto = cpg.call.where(_.name(Operators.assignment)).argument(2).isCall.arrayAccess
def objProp = cpg.call.where(_.name(Operators.assignment)).argument(1).isCall.arrayAccess
objProp.array.reachableBy(objProto)
";

    #[test]
    fn bare_root_is_one_block() {
        let q = parse_query("cpg.call").unwrap();
        assert!(q.bindings.is_empty());
        assert_eq!(q.blocks.len(), 1);
        assert_eq!(q.result.as_ref().unwrap().start.name(), "cpg.call");
    }

    #[test]
    fn prototype_query_blocks() {
        let q = parse_query(PROTO_QUERY).unwrap();
        assert_eq!(q.bindings.len(), 2);
        assert!(q.result.is_some());
        assert_eq!(q.blocks.len(), 12);
        assert_eq!(q.blocks[10].text, ".array");
        assert_eq!(q.blocks[11].chain, ChainId::Result);
    }

    #[test]
    fn missing_cpg_root() {
        let e = parse_query("code.call.nameExact(\"assignment\")").unwrap_err();
        assert_eq!(e.rule, "cpg_start");
        assert_eq!((e.span.line, e.span.column), (1, 1));
        let e = parse_query("val assign = code.call\n  .nameExact(\"assignment\")").unwrap_err();
        assert_eq!(e.rule, "cpg_start");
        assert_eq!(e.span.column, 14);
    }

    #[test]
    fn print_parse_round_trip() {
        let src = "def a = cpg.call.whereNot(and(_.isCall, or(_.name(\"x\\\"y\"), not(_))))\n\
                   a.argument.argument(2).reachableBy(cpg.identifier.lineNumber(3))\n";
        let q = parse_query(src).unwrap();
        assert_eq!(q.to_string(), src);
        assert_eq!(parse_query(&q.to_string()).unwrap().to_string(), src);
    }

    #[test]
    fn grammar_errors_name_rules() {
        assert_eq!(parse_query("").unwrap_err().rule, "query");
        assert_eq!(parse_query("def = cpg").unwrap_err().rule, "binding");
        assert_eq!(parse_query("cpg.").unwrap_err().rule, "step");
        assert_eq!(parse_query("cpg.call.name(Operators.)").unwrap_err().rule, "reference");
        assert_eq!(parse_query("cpg.where(not(cpg))").unwrap_err().rule, "predicate");
        assert_eq!(parse_query("cpg.name(\"x").unwrap_err().rule, "string");
        assert_eq!(parse_query("def a = cpg\ndef a = cpg").unwrap_err().rule, "binding");
        assert_eq!(parse_query("cpg cpg").unwrap_err().rule, "query");
    }

    #[test]
    fn fragments_parse() {
        let steps = parse_fragment("nameExact(Operators.indexAccess).argument(1)").unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[1].args, vec![Arg::Int(1)]);
    }
}
