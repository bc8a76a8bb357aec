//! MiniLang syntax tree.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiniLangAst {
    pub file: String,
    pub source: String,
    pub functions: Vec<FunctionDecl>,
    /// Top-level statements other than function declarations.
    pub statements: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<(String, Pos)>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
    /// Line of the closing brace.
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let { name: String, name_pos: Pos, value: Expr },
    Assign { target: Expr, value: Expr },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
    },
    While { cond: Expr, body: Vec<Stmt> },
    Function(FunctionDecl),
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Str(String),
    Num(String),
    Ident(String),
    Object,
    Call { callee: String, args: Vec<Expr> },
    Index { receiver: Box<Expr>, index: Box<Expr> },
    Field { receiver: Box<Expr>, field: String, field_pos: Pos },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl Expr {
    /// Innermost identifier a chain of index/field accesses is rooted at.
    pub fn root_variable(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n),
            ExprKind::Index { receiver, .. } | ExprKind::Field { receiver, .. } => {
                receiver.root_variable()
            }
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Str(s) => write!(f, "{s:?}"),
            ExprKind::Num(n) => f.write_str(n),
            ExprKind::Ident(n) => f.write_str(n),
            ExprKind::Object => f.write_str("{}"),
            ExprKind::Call { callee, args } => {
                write!(f, "{callee}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            ExprKind::Index { receiver, index } => write!(f, "{receiver}[{index}]"),
            ExprKind::Field { receiver, field, .. } => write!(f, "{receiver}.{field}"),
            ExprKind::Binary { op, lhs, rhs } => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Eq => "==",
                };
                write!(f, "{lhs} {sym} {rhs}")
            }
        }
    }
}
