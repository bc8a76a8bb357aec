//! Lexer and recursive-descent parser for MiniLang.

use super::ast::*;
use crate::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".to_string(),
        }
    }
}

const KEYWORDS: [&str; 6] = ["let", "if", "else", "while", "function", "return"];
const PUNCTS: [&str; 13] = ["==", "(", ")", "{", "}", "[", "]", ".", ",", ";", "=", "+", ":"];

fn lex(src: &str, file: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 0u32);

    let err = |line, column, expected: &str, found: String| SyntaxError {
        file: file.to_string(),
        line,
        column,
        expected: vec![expected.to_string()],
        found,
    };

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c == '\n' {
            line += 1;
            col = 0;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            col += (i - start) as u32;
            toks.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            col += (i - start) as u32;
            toks.push((Tok::Num(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err(line, col, "closing quote", "end of line".into()))
                    }
                    Some(&q) if q == quote => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let escaped = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some(&other) => other,
                            None => return Err(err(line, col, "escape", "end of file".into())),
                        };
                        s.push(escaped);
                        i += 2;
                        col += 2;
                    }
                    Some(&other) => {
                        s.push(other);
                        i += 1;
                        col += 1;
                    }
                }
            }
            toks.push((Tok::Str(s), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len() as u32;
                toks.push((Tok::Punct(p), pos));
            }
            None => return Err(err(line, col, "token", format!("`{c}`"))),
        }
    }
    toks.push((Tok::Eof, Pos { line, column: col }));
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    file: &'a str,
}

type PResult<T> = Result<T, SyntaxError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let pos = self.pos();
        Err(SyntaxError {
            file: self.file.to_string(),
            line: pos.line,
            column: pos.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, p: &'static str) -> PResult<Pos> {
        if self.is_punct(p) {
            Ok(self.bump().1)
        } else {
            self.error(&[&format!("`{p}`")])
        }
    }

    fn expect_name(&mut self) -> PResult<(String, Pos)> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let (t, p) = self.bump();
                match t {
                    Tok::Ident(s) => Ok((s, p)),
                    _ => unreachable!(),
                }
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn program(&mut self) -> PResult<(Vec<FunctionDecl>, Vec<Stmt>)> {
        let mut functions = Vec::new();
        let mut statements = Vec::new();
        while *self.peek() != Tok::Eof {
            let stmt = self.statement()?;
            match stmt.kind {
                StmtKind::Function(f) => functions.push(f),
                _ => statements.push(stmt),
            }
        }
        Ok((functions, statements))
    }

    fn block(&mut self) -> PResult<(Vec<Stmt>, u32)> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.error(&["`}`"]);
            }
            body.push(self.statement()?);
        }
        let end = self.bump().1;
        Ok((body, end.line))
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let kind = if self.is_keyword("let") {
            self.bump();
            let (name, name_pos) = self.expect_name()?;
            self.expect_punct("=")?;
            let value = self.expr()?;
            self.expect_punct(";")?;
            StmtKind::Let {
                name,
                name_pos,
                value,
            }
        } else if self.is_keyword("if") {
            self.if_tail()?
        } else if self.is_keyword("while") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let (body, _) = self.block()?;
            StmtKind::While { cond, body }
        } else if self.is_keyword("function") {
            self.bump();
            let (name, _) = self.expect_name()?;
            self.expect_punct("(")?;
            let mut params = Vec::new();
            if !self.is_punct(")") {
                loop {
                    params.push(self.expect_name()?);
                    if self.is_punct(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect_punct(")")?;
            let (body, end_line) = self.block()?;
            StmtKind::Function(FunctionDecl {
                name,
                params,
                body,
                pos,
                end_line,
            })
        } else if self.is_keyword("return") {
            self.bump();
            let value = if self.is_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            StmtKind::Return(value)
        } else {
            let e = self.expr()?;
            if self.is_punct("=") {
                if !matches!(
                    e.kind,
                    ExprKind::Ident(_) | ExprKind::Index { .. } | ExprKind::Field { .. }
                ) {
                    return self.error(&["`;`"]);
                }
                self.bump();
                let value = self.expr()?;
                self.expect_punct(";")?;
                StmtKind::Assign { target: e, value }
            } else {
                self.expect_punct(";")?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn if_tail(&mut self) -> PResult<StmtKind> {
        self.bump();
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let (then_body, _) = self.block()?;
        let else_body = if self.is_keyword("else") {
            self.bump();
            if self.is_keyword("if") {
                let pos = self.pos();
                let nested = self.if_tail()?;
                Some(vec![Stmt { kind: nested, pos }])
            } else {
                Some(self.block()?.0)
            }
        } else {
            None
        };
        Ok(StmtKind::If {
            cond,
            then_body,
            else_body,
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.additive()?;
        while self.is_punct("==") {
            self.bump();
            let rhs = self.additive()?;
            lhs = binary(BinOp::Eq, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.postfix()?;
        while self.is_punct("+") {
            self.bump();
            let rhs = self.postfix()?;
            lhs = binary(BinOp::Add, lhs, rhs);
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct("[") {
                self.bump();
                let index = self.expr()?;
                self.expect_punct("]")?;
                let pos = e.pos;
                e = Expr {
                    kind: ExprKind::Index {
                        receiver: Box::new(e),
                        index: Box::new(index),
                    },
                    pos,
                };
            } else if self.is_punct(".") {
                self.bump();
                let (field, field_pos) = self.expect_name()?;
                let pos = e.pos;
                e = Expr {
                    kind: ExprKind::Field {
                        receiver: Box::new(e),
                        field,
                        field_pos,
                    },
                    pos,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::Num(n) => {
                self.bump();
                ExprKind::Num(n)
            }
            Tok::Punct("{") => {
                self.bump();
                self.expect_punct("}")?;
                ExprKind::Object
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                return Ok(e);
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                if self.is_punct("(") {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.is_punct(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.is_punct(",") {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                    ExprKind::Call { callee: s, args }
                } else {
                    ExprKind::Ident(s)
                }
            }
            _ => return self.error(&["expression"]),
        };
        Ok(Expr { kind, pos })
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    let pos = lhs.pos;
    Expr {
        kind: ExprKind::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        },
        pos,
    }
}

/// Parse one MiniLang source file. Reports the first syntax error.
pub fn parse_program(source: &str, file: &str) -> Result<MiniLangAst, SyntaxError> {
    let toks = lex(source, file)?;
    let mut p = Parser { toks, at: 0, file };
    let (functions, statements) = p.program()?;
    Ok(MiniLangAst {
        file: file.to_string(),
        source: source.to_string(),
        functions,
        statements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_source_is_empty_ast() {
        let ast = parse_program("", "e.mini").unwrap();
        assert!(ast.functions.is_empty() && ast.statements.is_empty());
    }

    #[test]
    fn let_binding_with_number() {
        let ast = parse_program("let x = 1;", "t.mini").unwrap();
        assert_eq!(ast.statements.len(), 1);
        match &ast.statements[0].kind {
            StmtKind::Let { name, value, .. } => {
                assert_eq!(name, "x");
                assert_eq!(value.kind, ExprKind::Num("1".into()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn proto_access_assignment() {
        let ast = parse_program("p = obj[\"__proto__\"];", "t.mini").unwrap();
        let StmtKind::Assign { target, value } = &ast.statements[0].kind else {
            panic!("not an assignment");
        };
        assert_eq!(target.kind, ExprKind::Ident("p".into()));
        let ExprKind::Index { receiver, index } = &value.kind else {
            panic!("rhs not an index access");
        };
        assert_eq!(receiver.kind, ExprKind::Ident("obj".into()));
        assert_eq!(index.kind, ExprKind::Str("__proto__".into()));
    }

    #[test]
    fn positions_are_line_and_column() {
        let ast = parse_program("\n  exec(a);", "t.mini").unwrap();
        assert_eq!(ast.statements[0].pos, Pos { line: 2, column: 2 });
    }

    #[test]
    fn syntax_error_carries_location_and_expectation() {
        let err = parse_program("let = 3;", "bad.mini").unwrap_err();
        assert_eq!((err.line, err.column), (1, 4));
        assert_eq!(err.expected, vec!["identifier".to_string()]);
    }

    #[test]
    fn non_lvalue_assignment_rejected() {
        assert!(parse_program("f() = 1;", "t.mini").is_err());
    }

    #[test]
    fn functions_control_flow_and_precedence() {
        let src = "function f(a, b) {\n if (a == b + 1) { return a; } else if (b) { x.y = 2; } else { }\n while (a) { a = a + 1; }\n}";
        let ast = parse_program(src, "t.mini").unwrap();
        assert_eq!(ast.functions.len(), 1);
        let f = &ast.functions[0];
        assert_eq!(f.params.len(), 2);
        assert_eq!(f.end_line, 4);
        let StmtKind::If { cond, else_body, .. } = &f.body[0].kind else {
            panic!()
        };
        assert_eq!(cond.to_string(), "a == b + 1");
        assert!(matches!(else_body.as_deref(), Some([Stmt { kind: StmtKind::If { .. }, .. }])));
    }
}
