//! Surface abstract syntax.
//!
//! The parser produces this tree and the pretty-printer consumes it.
//! Desugaring lowers it to the core language in `ast`. Every node keeps
//! the source position where it started so scope and arity errors can
//! point at code.

use crate::ast::{Pattern, PrimId};
use crate::dist::DistId;

/// Source position, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A surface term with its source position.
#[derive(Clone, Debug)]
pub struct Surface {
    pub node: Node,
    pub span: Span,
}

/// Binary operators, in concrete syntax form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
}

impl BinOp {
    pub fn prim(self) -> PrimId {
        match self {
            BinOp::Add => PrimId::Add,
            BinOp::Sub => PrimId::Sub,
            BinOp::Mul => PrimId::Mul,
            BinOp::Div => PrimId::Div,
            BinOp::Lt => PrimId::Lt,
            BinOp::Le => PrimId::Le,
            BinOp::Gt => PrimId::Gt,
            BinOp::Ge => PrimId::Ge,
            BinOp::Eq => PrimId::Eq,
            BinOp::Ne => PrimId::Ne,
            BinOp::And => PrimId::And,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
        }
    }
}

/// Unary operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

/// Surface syntax nodes.
#[derive(Clone, Debug)]
pub enum Node {
    Real(f64),
    True,
    False,
    Unit,
    Var(String),
    /// `fun x y -> e` or `\x y. e`; parameters may be `_`.
    Fun { params: Vec<String>, body: Box<Surface> },
    App { func: Box<Surface>, arg: Box<Surface> },
    If { cond: Box<Surface>, then: Box<Surface>, els: Box<Surface> },
    BinOp { op: BinOp, lhs: Box<Surface>, rhs: Box<Surface> },
    UnOp { op: UnOp, operand: Box<Surface> },
    /// `log e`, `exp e`, `f_D(args)`.
    PrimCall { op: PrimId, args: Vec<Surface> },
    Sample { dist: DistId, args: Vec<Surface> },
    Weight(Box<Surface>),
    /// `logweight(e)`, sugar for `weight(exp(e))`.
    LogWeight(Box<Surface>),
    Resample,
    /// `let [rec] name p1 p2 = rhs in body`; params may be empty for a
    /// plain value binding.
    Let {
        recursive: bool,
        name: String,
        params: Vec<String>,
        rhs: Box<Surface>,
        body: Box<Surface>,
    },
    /// `a; b`, evaluates `a` for effect and discards it.
    Seq { first: Box<Surface>, second: Box<Surface> },
    ListLit(Vec<Surface>),
    RecordLit(Vec<(String, Surface)>),
    Proj { expr: Box<Surface>, field: String },
    Match { scrutinee: Box<Surface>, arms: Vec<(Pattern, Surface)> },
}

impl Surface {
    pub fn new(node: Node, span: Span) -> Surface {
        Surface { node, span }
    }
}
