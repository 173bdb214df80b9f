//! Recursive-descent parser for the surface language.
//!
//! Precedence, loosest to tightest:
//!
//! ```text
//! seq      e1 ; e2                      right associative
//! control  let / fun / if / match / weight / logweight
//! and      e1 && e2                     left associative
//! compare  e1 < e2  (also <= > >= = !=) non associative
//! additive e1 + e2, e1 - e2             left associative
//! multipl. e1 * e2, e1 / e2             left associative
//! unary    -e, !e
//! apply    f x y                        left associative
//! postfix  e.field
//! atom     literals, identifiers, sample forms, (e), [..], {..}
//! ```
//!
//! `if`/`match`/`let` branches extend as far to the right as possible;
//! keywords such as `else`, `in`, `with`, and `|` terminate them. Arms of
//! a `match` nested inside another `match` arm need parentheses.

use thiserror::Error;

use crate::ast::{Pattern, PrimId};
use crate::dist::DistId;
use crate::lexer::{lex, LexError, Tok, Token};
use crate::surface::{BinOp, Node, Span, Surface, UnOp};

/// Parse failure with source position.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("syntax error at {span}: {msg}")]
pub struct ParseError {
    pub span: Span,
    pub msg: String,
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> ParseError {
        ParseError { span: e.span, msg: e.msg }
    }
}

/// Parse a complete program.
pub fn parse(src: &str) -> Result<Surface, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let term = p.seq()?;
    p.expect(Tok::Eof, "expected end of input")?;
    Ok(term)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: Tok) -> bool {
        if *self.peek() == tok {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, msg: &str) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.next())
        } else {
            Err(self.err(msg))
        }
    }

    fn err(&self, msg: &str) -> ParseError {
        ParseError { span: self.span(), msg: format!("{msg}, found {:?}", self.peek()) }
    }

    /// seq := control (';' seq)?
    fn seq(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        let first = self.control()?;
        if self.eat(Tok::Semi) {
            let second = self.seq()?;
            Ok(Surface::new(
                Node::Seq { first: Box::new(first), second: Box::new(second) },
                span,
            ))
        } else {
            Ok(first)
        }
    }

    fn control(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        match self.peek() {
            Tok::Let => self.let_expr(),
            Tok::Fun => {
                self.next();
                let params = self.params()?;
                self.expect(Tok::Arrow, "expected `->` after fun parameters")?;
                let body = self.seq()?;
                Ok(Surface::new(Node::Fun { params, body: Box::new(body) }, span))
            }
            Tok::Backslash => {
                self.next();
                let params = self.params()?;
                self.expect(Tok::Dot, "expected `.` after lambda parameters")?;
                let body = self.seq()?;
                Ok(Surface::new(Node::Fun { params, body: Box::new(body) }, span))
            }
            Tok::If => {
                self.next();
                let cond = self.seq()?;
                self.expect(Tok::Then, "expected `then`")?;
                let then = self.seq()?;
                self.expect(Tok::Else, "expected `else`")?;
                let els = self.seq()?;
                Ok(Surface::new(
                    Node::If {
                        cond: Box::new(cond),
                        then: Box::new(then),
                        els: Box::new(els),
                    },
                    span,
                ))
            }
            Tok::Match => {
                self.next();
                let scrutinee = self.seq()?;
                self.expect(Tok::With, "expected `with`")?;
                self.eat(Tok::Bar);
                let mut arms = Vec::new();
                loop {
                    let pattern = self.pattern()?;
                    self.expect(Tok::Arrow, "expected `->` after pattern")?;
                    let body = self.seq()?;
                    arms.push((pattern, body));
                    if !self.eat(Tok::Bar) {
                        break;
                    }
                }
                Ok(Surface::new(
                    Node::Match { scrutinee: Box::new(scrutinee), arms },
                    span,
                ))
            }
            Tok::Weight => {
                self.next();
                let arg = self.postfix()?;
                Ok(Surface::new(Node::Weight(Box::new(arg)), span))
            }
            Tok::LogWeight => {
                self.next();
                let arg = self.postfix()?;
                Ok(Surface::new(Node::LogWeight(Box::new(arg)), span))
            }
            _ => self.and_level(),
        }
    }

    fn let_expr(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        self.expect(Tok::Let, "expected `let`")?;
        let recursive = self.eat(Tok::Rec);
        let name = self.ident("expected binding name")?;
        let mut params = Vec::new();
        loop {
            match self.peek() {
                Tok::Ident(_) | Tok::Underscore => params.push(self.param()?),
                _ => break,
            }
        }
        self.expect(Tok::EqSym, "expected `=` in let binding")?;
        let rhs = self.seq()?;
        self.expect(Tok::In, "expected `in`")?;
        let body = self.seq()?;
        if recursive && params.is_empty() {
            return Err(ParseError {
                span,
                msg: "`let rec` requires at least one parameter".into(),
            });
        }
        Ok(Surface::new(
            Node::Let { recursive, name, params, rhs: Box::new(rhs), body: Box::new(body) },
            span,
        ))
    }

    fn params(&mut self) -> Result<Vec<String>, ParseError> {
        let mut params = vec![self.param()?];
        while matches!(self.peek(), Tok::Ident(_) | Tok::Underscore) {
            params.push(self.param()?);
        }
        Ok(params)
    }

    fn param(&mut self) -> Result<String, ParseError> {
        match self.next().tok {
            Tok::Ident(name) => Ok(name),
            Tok::Underscore => Ok("_".into()),
            _ => Err(self.err("expected parameter name")),
        }
    }

    fn ident(&mut self, msg: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(name) => {
                let name = name.clone();
                self.next();
                Ok(name)
            }
            _ => Err(self.err(msg)),
        }
    }

    fn pattern(&mut self) -> Result<Pattern, ParseError> {
        match self.peek().clone() {
            Tok::LBrace => {
                self.next();
                let mut fields = vec![self.ident("expected field name in record pattern")?];
                while self.eat(Tok::Comma) {
                    fields.push(self.ident("expected field name in record pattern")?);
                }
                self.expect(Tok::RBrace, "expected `}`")?;
                Ok(Pattern::Record(fields.into_iter().map(Into::into).collect()))
            }
            Tok::LBracket => {
                self.next();
                self.expect(Tok::RBracket, "expected `]` (only `[]` list patterns)")?;
                Ok(Pattern::EmptyList)
            }
            Tok::Underscore => {
                self.next();
                Ok(Pattern::Wildcard)
            }
            Tok::Ident(name) => {
                self.next();
                if self.eat(Tok::ColonColon) {
                    let tail = match self.next().tok {
                        Tok::Ident(t) => t,
                        Tok::Underscore => "_".into(),
                        _ => return Err(self.err("expected tail binder after `::`")),
                    };
                    Ok(Pattern::Cons(name.into(), tail.into()))
                } else {
                    Ok(Pattern::Var(name.into()))
                }
            }
            _ => Err(self.err("expected pattern")),
        }
    }

    /// and := compare ('&&' compare)*
    fn and_level(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        let mut lhs = self.compare()?;
        while self.eat(Tok::AndAnd) {
            let rhs = self.compare()?;
            lhs = Surface::new(
                Node::BinOp { op: BinOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span,
            );
        }
        Ok(lhs)
    }

    /// compare := additive (cmp-op additive)?
    fn compare(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Lt => Some(BinOp::Lt),
            Tok::Le => Some(BinOp::Le),
            Tok::Gt => Some(BinOp::Gt),
            Tok::Ge => Some(BinOp::Ge),
            Tok::EqSym => Some(BinOp::Eq),
            Tok::NeSym => Some(BinOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.next();
            let rhs = self.additive()?;
            Ok(Surface::new(Node::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span))
        } else {
            Ok(lhs)
        }
    }

    fn additive(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.next();
            let rhs = self.multiplicative()?;
            lhs = Surface::new(Node::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Surface::new(Node::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        match self.peek() {
            Tok::Minus => {
                self.next();
                let operand = self.unary()?;
                Ok(Surface::new(Node::UnOp { op: UnOp::Neg, operand: Box::new(operand) }, span))
            }
            Tok::Bang => {
                self.next();
                let operand = self.unary()?;
                Ok(Surface::new(Node::UnOp { op: UnOp::Not, operand: Box::new(operand) }, span))
            }
            _ => self.apply(),
        }
    }

    /// apply := postfix+, with `log`/`exp`/`not` heads becoming primitive
    /// calls on their first argument.
    fn apply(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        // Unary named primitives.
        if let Tok::Ident(name) = self.peek() {
            let prim = match name.as_str() {
                "log" => Some(PrimId::Log),
                "exp" => Some(PrimId::Exp),
                "not" => Some(PrimId::Not),
                _ => None,
            };
            if let Some(op) = prim {
                self.next();
                let arg = self.postfix()?;
                let mut acc = Surface::new(Node::PrimCall { op, args: vec![arg] }, span);
                while self.starts_atom() {
                    let arg = self.postfix()?;
                    acc = Surface::new(
                        Node::App { func: Box::new(acc), arg: Box::new(arg) },
                        span,
                    );
                }
                return Ok(acc);
            }
        }
        let mut acc = self.postfix()?;
        while self.starts_atom() {
            let arg = self.postfix()?;
            acc = Surface::new(Node::App { func: Box::new(acc), arg: Box::new(arg) }, span);
        }
        Ok(acc)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Number(_)
                | Tok::Ident(_)
                | Tok::True
                | Tok::False
                | Tok::LParen
                | Tok::LBracket
                | Tok::LBrace
                | Tok::Sample
                | Tok::Resample
        )
    }

    fn postfix(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        let mut expr = self.atom()?;
        while *self.peek() == Tok::Dot {
            self.next();
            let field = self.ident("expected field name after `.`")?;
            expr = Surface::new(Node::Proj { expr: Box::new(expr), field }, span);
        }
        Ok(expr)
    }

    fn atom(&mut self) -> Result<Surface, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(x) => {
                self.next();
                Ok(Surface::new(Node::Real(x), span))
            }
            Tok::True => {
                self.next();
                Ok(Surface::new(Node::True, span))
            }
            Tok::False => {
                self.next();
                Ok(Surface::new(Node::False, span))
            }
            Tok::Resample => {
                self.next();
                Ok(Surface::new(Node::Resample, span))
            }
            Tok::Sample => {
                self.next();
                self.sample_general(span)
            }
            Tok::Ident(name) => {
                if let Some(rest) = name.strip_prefix("sample_") {
                    let dist = DistId::resolve(rest).ok_or_else(|| ParseError {
                        span,
                        msg: format!("unknown distribution `{rest}`"),
                    })?;
                    self.next();
                    let args = self.call_args()?;
                    self.check_arity(span, dist.name(), dist.arity(), args.len())?;
                    return Ok(Surface::new(Node::Sample { dist, args }, span));
                }
                if let Some(rest) = name.strip_prefix("f_") {
                    if let Some(dist) = DistId::resolve(rest) {
                        self.next();
                        let args = self.call_args()?;
                        self.check_arity(span, &format!("f_{}", dist.name()), dist.arity() + 1, args.len())?;
                        return Ok(Surface::new(
                            Node::PrimCall { op: PrimId::Density(dist), args },
                            span,
                        ));
                    }
                }
                self.next();
                Ok(Surface::new(Node::Var(name), span))
            }
            Tok::LParen => {
                self.next();
                if self.eat(Tok::RParen) {
                    return Ok(Surface::new(Node::Unit, span));
                }
                let inner = self.seq()?;
                self.expect(Tok::RParen, "expected `)`")?;
                Ok(inner)
            }
            Tok::LBracket => {
                self.next();
                let mut items = Vec::new();
                if !self.eat(Tok::RBracket) {
                    loop {
                        items.push(self.seq()?);
                        if !self.eat(Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket, "expected `]`")?;
                }
                Ok(Surface::new(Node::ListLit(items), span))
            }
            Tok::LBrace => {
                self.next();
                let mut fields = Vec::new();
                loop {
                    let name = self.ident("expected field name")?;
                    self.expect(Tok::Colon, "expected `:` after field name")?;
                    let value = self.seq()?;
                    fields.push((name, value));
                    if !self.eat(Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RBrace, "expected `}`")?;
                Ok(Surface::new(Node::RecordLit(fields), span))
            }
            _ => Err(self.err("expected an expression")),
        }
    }

    /// `sample (dist arg1 arg2)`: distribution name in prefix position.
    fn sample_general(&mut self, span: Span) -> Result<Surface, ParseError> {
        self.expect(Tok::LParen, "expected `(` after `sample`")?;
        let name = self.ident("expected distribution name")?;
        let dist = DistId::resolve(&name).ok_or_else(|| ParseError {
            span,
            msg: format!("unknown distribution `{name}`"),
        })?;
        let mut args = Vec::new();
        while *self.peek() != Tok::RParen {
            args.push(self.postfix()?);
        }
        self.expect(Tok::RParen, "expected `)`")?;
        self.check_arity(span, dist.name(), dist.arity(), args.len())?;
        Ok(Surface::new(Node::Sample { dist, args }, span))
    }

    /// `name(e1, e2, ...)` argument list; parentheses are required.
    fn call_args(&mut self) -> Result<Vec<Surface>, ParseError> {
        self.expect(Tok::LParen, "expected `(`")?;
        let mut args = Vec::new();
        if !self.eat(Tok::RParen) {
            loop {
                args.push(self.seq()?);
                if !self.eat(Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RParen, "expected `)`")?;
        }
        Ok(args)
    }

    fn check_arity(
        &self,
        span: Span,
        name: &str,
        expected: usize,
        got: usize,
    ) -> Result<(), ParseError> {
        if expected != got {
            Err(ParseError {
                span,
                msg: format!("`{name}` takes {expected} argument(s), found {got}"),
            })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(src: &str) -> Surface {
        parse(src).expect(src)
    }

    #[test]
    fn sample_form_with_explicit_distribution() {
        let t = parse_ok("sample_Beta(2, 2)");
        match t.node {
            Node::Sample { dist, args } => {
                assert_eq!(dist, DistId::Beta);
                assert_eq!(args.len(), 2);
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn sample_form_with_prefix_distribution() {
        let t = parse_ok("sample (exponential (lambda + mu))");
        match t.node {
            Node::Sample { dist, args } => {
                assert_eq!(dist, DistId::Exponential);
                assert_eq!(args.len(), 1);
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn weight_of_log_zero() {
        let t = parse_ok("weight (log 0)");
        match t.node {
            Node::Weight(arg) => match arg.node {
                Node::PrimCall { op, args } => {
                    assert_eq!(op, PrimId::Log);
                    assert!(matches!(args[0].node, Node::Real(x) if x == 0.0));
                }
                other => panic!("unexpected weight argument {other:?}"),
            },
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = parse("").unwrap_err();
        assert_eq!(err.span.line, 1);
        let err = parse("// only a comment").unwrap_err();
        assert_eq!(err.span.line, 1);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        assert!(parse("sample_Beta(2)").is_err());
        assert!(parse("f_N(0, 1)").is_err());
        assert!(parse("sample_Bogus(1)").is_err());
    }

    #[test]
    fn application_is_left_associative() {
        let t = parse_ok("f x y");
        match t.node {
            Node::App { func, arg } => {
                assert!(matches!(arg.node, Node::Var(ref v) if v == "y"));
                assert!(matches!(func.node, Node::App { .. }));
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn if_branches_absorb_sequences() {
        let t = parse_ok("if c then resample; weight 2; f 1 else weight 0");
        match t.node {
            Node::If { then, els, .. } => {
                assert!(matches!(then.node, Node::Seq { .. }));
                assert!(matches!(els.node, Node::Weight(_)));
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn let_rhs_extends_to_in() {
        let t = parse_ok("let observe x o = weight (f_N(x, 4, o)); resample in observe");
        match t.node {
            Node::Let { recursive, name, params, rhs, .. } => {
                assert!(!recursive);
                assert_eq!(name, "observe");
                assert_eq!(params, vec!["x".to_string(), "o".to_string()]);
                assert!(matches!(rhs.node, Node::Seq { .. }));
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn match_with_record_and_list_patterns() {
        let t = parse_ok("match t with | {left, right, age} -> 1 | {age} -> 2");
        match t.node {
            Node::Match { arms, .. } => {
                assert_eq!(arms.len(), 2);
                assert!(matches!(arms[0].0, Pattern::Record(ref fs) if fs.len() == 3));
            }
            other => panic!("unexpected node {other:?}"),
        }
        let t = parse_ok("match xs with [] -> 0 | h :: t -> h");
        match t.node {
            Node::Match { arms, .. } => {
                assert!(matches!(arms[0].0, Pattern::EmptyList));
                assert!(matches!(arms[1].0, Pattern::Cons(_, _)));
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn projection_binds_tighter_than_application() {
        let t = parse_ok("simTree tree.left tree");
        match t.node {
            Node::App { func, arg } => {
                assert!(matches!(arg.node, Node::Var(_)));
                match func.node {
                    Node::App { arg, .. } => assert!(matches!(arg.node, Node::Proj { .. })),
                    other => panic!("unexpected inner {other:?}"),
                }
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn unary_minus_binds_tighter_than_multiplication() {
        // -mu * x parses as (-mu) * x.
        let t = parse_ok("-mu * x");
        match t.node {
            Node::BinOp { op: BinOp::Mul, lhs, .. } => {
                assert!(matches!(lhs.node, Node::UnOp { op: UnOp::Neg, .. }));
            }
            other => panic!("unexpected node {other:?}"),
        }
    }

    #[test]
    fn let_rec_requires_parameters() {
        assert!(parse("let rec x = 1 in x").is_err());
        assert!(parse("let rec f _ = f () in f ()").is_ok());
    }

    #[test]
    fn logweight_parses_like_weight() {
        let t = parse_ok("logweight (log 2)");
        assert!(matches!(t.node, Node::LogWeight(_)));
    }
}
