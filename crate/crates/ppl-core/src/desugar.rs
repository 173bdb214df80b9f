//! Lowering from surface syntax to the core term language.
//!
//! Sugar handled here:
//! - `let x = e1 in e2` becomes `(\x. e2) e1`
//! - multi-parameter functions curry
//! - `e1; e2` becomes `(\_. e2) e1`
//! - `true`/`false`/`()` become the constants 1, 0, 0
//! - `logweight e` becomes `weight (exp e)`
//! - literal negation folds, so `-3` is the constant -3
//!
//! Unbound variable references are rejected here rather than at run time.

use thiserror::Error;

use crate::ast::{Arm, Pattern, PrimId, Term, TermRef};
use crate::surface::{Node, Span, Surface, UnOp};

/// Scope or structure error found while lowering.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("error at {span}: {msg}")]
pub struct DesugarError {
    pub span: Span,
    pub msg: String,
}

/// Lower a surface program with no free variables.
pub fn desugar(surface: &Surface) -> Result<TermRef, DesugarError> {
    lower(surface, &mut Vec::new())
}

/// Parse and lower in one step.
pub fn compile(src: &str) -> Result<TermRef, crate::CompileError> {
    let surface = crate::parser::parse(src)?;
    Ok(desugar(&surface)?)
}

fn lower(s: &Surface, scope: &mut Vec<String>) -> Result<TermRef, DesugarError> {
    let span = s.span;
    match &s.node {
        Node::Real(x) => Ok(Term::constant(*x)),
        Node::True => Ok(Term::constant(1.0)),
        Node::False => Ok(Term::constant(0.0)),
        Node::Unit => Ok(Term::constant(0.0)),
        Node::Var(name) => {
            if scope.iter().any(|bound| bound == name) {
                Ok(Term::var(name.as_str()))
            } else {
                Err(DesugarError { span, msg: format!("unbound variable `{name}`") })
            }
        }
        Node::Fun { params, body } => lower_fun(params, body, scope),
        Node::App { func, arg } => {
            let func = lower(func, scope)?;
            let arg = lower(arg, scope)?;
            Ok(Term::app(func, arg))
        }
        Node::If { cond, then, els } => {
            let cond = lower(cond, scope)?;
            let then = lower(then, scope)?;
            let els = lower(els, scope)?;
            Ok(TermRef::new(Term::If { cond, then, els }))
        }
        Node::BinOp { op, lhs, rhs } => {
            let lhs = lower(lhs, scope)?;
            let rhs = lower(rhs, scope)?;
            Ok(TermRef::new(Term::Prim { op: op.prim(), args: vec![lhs, rhs] }))
        }
        Node::UnOp { op, operand } => {
            // Fold negated literals into constants.
            if let (UnOp::Neg, Node::Real(x)) = (op, &operand.node) {
                return Ok(Term::constant(-x));
            }
            let operand = lower(operand, scope)?;
            let op = match op {
                UnOp::Neg => PrimId::Neg,
                UnOp::Not => PrimId::Not,
            };
            Ok(TermRef::new(Term::Prim { op, args: vec![operand] }))
        }
        Node::PrimCall { op, args } => {
            let args = args
                .iter()
                .map(|a| lower(a, scope))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TermRef::new(Term::Prim { op: *op, args }))
        }
        Node::Sample { dist, args } => {
            let args = args
                .iter()
                .map(|a| lower(a, scope))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TermRef::new(Term::Sample { dist: *dist, args }))
        }
        Node::Weight(arg) => {
            let arg = lower(arg, scope)?;
            Ok(TermRef::new(Term::Weight { arg }))
        }
        Node::LogWeight(arg) => {
            let arg = lower(arg, scope)?;
            let exp = TermRef::new(Term::Prim { op: PrimId::Exp, args: vec![arg] });
            Ok(TermRef::new(Term::Weight { arg: exp }))
        }
        Node::Resample => Ok(TermRef::new(Term::Resample)),
        Node::Let { recursive: false, name, params, rhs, body } => {
            let rhs = if params.is_empty() {
                lower(rhs, scope)?
            } else {
                lower_fun(params, rhs, scope)?
            };
            scope.push(name.clone());
            let body = lower(body, scope);
            scope.pop();
            Ok(Term::app(Term::lam(name.as_str(), body?), rhs))
        }
        Node::Let { recursive: true, name, params, rhs, body } => {
            // Parser guarantees at least one parameter.
            let (first, rest) = params.split_first().expect("let rec parameters");
            scope.push(name.clone());
            scope.push(first.clone());
            let fn_body = if rest.is_empty() {
                lower(rhs, scope)
            } else {
                lower_fun(rest, rhs, scope)
            };
            scope.pop();
            let body = fn_body.and_then(|fn_body| {
                let body = lower(body, scope)?;
                Ok(TermRef::new(Term::LetRec {
                    name: name.as_str().into(),
                    param: first.as_str().into(),
                    fn_body,
                    body,
                }))
            });
            scope.pop();
            body
        }
        Node::Seq { first, second } => {
            let first = lower(first, scope)?;
            scope.push("_".into());
            let second = lower(second, scope);
            scope.pop();
            Ok(Term::app(Term::lam("_", second?), first))
        }
        Node::ListLit(items) => {
            let items = items
                .iter()
                .map(|item| lower(item, scope))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TermRef::new(Term::ListLit(items)))
        }
        Node::RecordLit(fields) => {
            let mut seen: Vec<&str> = Vec::new();
            let fields = fields
                .iter()
                .map(|(name, value)| {
                    if seen.contains(&name.as_str()) {
                        return Err(DesugarError {
                            span,
                            msg: format!("duplicate record field `{name}`"),
                        });
                    }
                    seen.push(name);
                    Ok((name.as_str().into(), lower(value, scope)?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TermRef::new(Term::RecordLit(fields)))
        }
        Node::Proj { expr, field } => {
            let expr = lower(expr, scope)?;
            Ok(TermRef::new(Term::Proj { expr, field: field.as_str().into() }))
        }
        Node::Match { scrutinee, arms } => {
            let scrutinee = lower(scrutinee, scope)?;
            let arms = arms
                .iter()
                .map(|(pattern, body)| {
                    let binders: Vec<String> = pattern_binders(pattern);
                    let depth = scope.len();
                    scope.extend(binders);
                    let body = lower(body, scope);
                    scope.truncate(depth);
                    Ok(Arm { pattern: pattern.clone(), body: body? })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TermRef::new(Term::Match { scrutinee, arms }))
        }
    }
}

fn lower_fun(
    params: &[String],
    body: &Surface,
    scope: &mut Vec<String>,
) -> Result<TermRef, DesugarError> {
    let depth = scope.len();
    scope.extend(params.iter().cloned());
    let lowered = lower(body, scope);
    scope.truncate(depth);
    let mut acc = lowered?;
    for param in params.iter().rev() {
        acc = Term::lam(param.as_str(), acc);
    }
    Ok(acc)
}

fn pattern_binders(pattern: &Pattern) -> Vec<String> {
    match pattern {
        Pattern::Record(fields) => fields.iter().map(|f| f.to_string()).collect(),
        Pattern::Cons(head, tail) => vec![head.to_string(), tail.to_string()],
        Pattern::Var(name) => vec![name.to_string()],
        Pattern::EmptyList | Pattern::Wildcard => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::alpha_eq;

    fn core(src: &str) -> TermRef {
        compile(src).expect(src)
    }

    #[test]
    fn let_lowers_to_beta_redex() {
        assert!(alpha_eq(&core("let x = 3 in x + 1"), &core("(\\y. y + 1) 3")));
    }

    #[test]
    fn seq_lowers_to_discarding_application() {
        assert!(alpha_eq(&core("1; 2"), &core("(\\_. 2) 1")));
    }

    #[test]
    fn booleans_and_unit_are_constants() {
        assert!(alpha_eq(&core("true"), &core("1")));
        assert!(alpha_eq(&core("false"), &core("0")));
        assert!(alpha_eq(&core("()"), &core("0")));
    }

    #[test]
    fn logweight_is_weight_of_exp() {
        assert!(alpha_eq(&core("logweight 3"), &core("weight (exp 3)")));
    }

    #[test]
    fn multi_parameter_functions_curry() {
        assert!(alpha_eq(
            &core("fun a b -> a + b"),
            &core("\\a. \\b. a + b"),
        ));
        assert!(alpha_eq(
            &core("let add a b = a + b in add 1 2"),
            &core("(\\f. f 1 2) (\\a. \\b. a + b)"),
        ));
    }

    #[test]
    fn unbound_variables_are_rejected() {
        let err = compile("x + 1").unwrap_err();
        assert!(err.to_string().contains("unbound"));
        assert!(compile("let x = 1 in y").is_err());
        // Plain let name is not in scope in its own right-hand side.
        assert!(compile("let f n = f n in f 1").is_err());
    }

    #[test]
    fn let_rec_name_scopes_over_fn_body() {
        assert!(compile("let rec f n = f n in f 1").is_ok());
    }

    #[test]
    fn match_arms_bind_pattern_variables() {
        assert!(compile("match [1] with [] -> 0 | h :: t -> h").is_ok());
        assert!(compile("match [1] with [] -> 0 | h :: t -> q").is_err());
        assert!(compile("match {a: 1} with {a} -> a").is_ok());
    }

    #[test]
    fn duplicate_record_fields_are_rejected() {
        assert!(compile("{a: 1, a: 2}").is_err());
    }

    #[test]
    fn negated_literal_folds() {
        assert!(alpha_eq(&core("0 - 3"), &core("0 - 3")));
        assert!(matches!(*core("-3"), Term::Const(x) if x == -3.0));
    }
}
