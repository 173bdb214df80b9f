//! Pretty-printer for core terms.
//!
//! Output is concrete surface syntax: parsing it back and lowering yields a
//! term alpha-equivalent to the input (for terms whose constants are finite,
//! which is every term the parser can produce). Let and sequence sugar is
//! reconstructed from beta-redex shapes, so machine-inserted `resample`
//! wrappers print as `resample; ...` rather than as explicit applications.

use std::fmt::Write;

use crate::ast::{Pattern, PrimId, Term, TermRef};

const SEQ: u8 = 0;
const CONTROL: u8 = 1;
const AND: u8 = 2;
const CMP: u8 = 3;
const ADD: u8 = 4;
const MUL: u8 = 5;
const UNARY: u8 = 6;
const APP: u8 = 7;
const POSTFIX: u8 = 8;
const ATOM: u8 = 9;

/// Render a core term as parseable surface syntax.
pub fn pretty(term: &Term) -> String {
    let mut out = String::new();
    pp(term, SEQ, &mut out);
    out
}

fn pp(term: &Term, ctx: u8, out: &mut String) {
    let level = level_of(term);
    if level < ctx {
        out.push('(');
        pp_open(term, out);
        out.push(')');
    } else {
        pp_open(term, out);
    }
}

fn pp_open(term: &Term, out: &mut String) {
    match term {
        Term::Const(x) => {
            let _ = write!(out, "{x:?}");
        }
        Term::Var(name) => out.push_str(name),
        Term::Lam { param, body } => {
            let _ = write!(out, "\\{param}. ");
            pp(body, SEQ, out);
        }
        Term::App { func, arg } => match &**func {
            Term::Lam { param, body } if &**param == "_" => {
                // Sequencing: `arg; body`.
                if open_tail(arg) {
                    out.push('(');
                    pp_open(arg, out);
                    out.push(')');
                } else {
                    pp(arg, CONTROL, out);
                }
                out.push_str("; ");
                pp(body, SEQ, out);
            }
            Term::Lam { param, body } => {
                let _ = write!(out, "let {param} = ");
                pp(arg, SEQ, out);
                out.push_str(" in ");
                pp(body, SEQ, out);
            }
            _ => {
                pp(func, APP, out);
                out.push(' ');
                pp(arg, POSTFIX, out);
            }
        },
        Term::If { cond, then, els } => {
            out.push_str("if ");
            pp(cond, SEQ, out);
            out.push_str(" then ");
            pp(then, SEQ, out);
            out.push_str(" else ");
            pp(els, SEQ, out);
        }
        Term::Prim { op, args } => pp_prim(*op, args, out),
        Term::Sample { dist, args } => {
            let _ = write!(out, "sample_{}(", dist.name());
            pp_comma_list(args, out);
            out.push(')');
        }
        Term::Weight { arg } => {
            out.push_str("weight ");
            pp(arg, POSTFIX, out);
        }
        Term::Resample => out.push_str("resample"),
        Term::ListLit(items) => {
            out.push('[');
            pp_comma_list(items, out);
            out.push(']');
        }
        Term::RecordLit(fields) => {
            out.push('{');
            for (i, (name, value)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{name}: ");
                pp(value, SEQ, out);
            }
            out.push('}');
        }
        Term::Proj { expr, field } => {
            pp(expr, POSTFIX, out);
            let _ = write!(out, ".{field}");
        }
        Term::Match { scrutinee, arms } => {
            out.push_str("match ");
            pp(scrutinee, SEQ, out);
            out.push_str(" with ");
            for (i, arm) in arms.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                pp_pattern(&arm.pattern, out);
                out.push_str(" -> ");
                // A match in a non-final arm body would capture the
                // following arms, so parenthesize it.
                if i + 1 < arms.len() && ends_in_match(&arm.body) {
                    out.push('(');
                    pp_open(&arm.body, out);
                    out.push(')');
                } else {
                    pp(&arm.body, SEQ, out);
                }
            }
        }
        Term::LetRec { name, param, fn_body, body } => {
            let _ = write!(out, "let rec {name} {param} = ");
            pp(fn_body, SEQ, out);
            out.push_str(" in ");
            pp(body, SEQ, out);
        }
    }
}

fn pp_prim(op: PrimId, args: &[TermRef], out: &mut String) {
    match op {
        PrimId::Add | PrimId::Sub => pp_binop(op, args, ADD, MUL, out),
        PrimId::Mul | PrimId::Div => pp_binop(op, args, MUL, UNARY, out),
        PrimId::Lt | PrimId::Le | PrimId::Gt | PrimId::Ge | PrimId::Eq | PrimId::Ne => {
            pp_binop(op, args, ADD, ADD, out)
        }
        PrimId::And => pp_binop(op, args, AND, CMP, out),
        PrimId::Neg => {
            out.push('-');
            pp(&args[0], UNARY, out);
        }
        PrimId::Not => {
            out.push('!');
            pp(&args[0], UNARY, out);
        }
        PrimId::Log | PrimId::Exp => {
            out.push_str(if op == PrimId::Log { "log " } else { "exp " });
            pp(&args[0], POSTFIX, out);
        }
        PrimId::Density(dist) => {
            let _ = write!(out, "f_{}(", dist.name());
            pp_comma_list(args, out);
            out.push(')');
        }
    }
}

fn pp_binop(op: PrimId, args: &[TermRef], lhs_ctx: u8, rhs_ctx: u8, out: &mut String) {
    debug_assert_eq!(args.len(), 2);
    pp(&args[0], lhs_ctx, out);
    let _ = write!(out, " {} ", binop_symbol(op));
    pp(&args[1], rhs_ctx, out);
}

fn binop_symbol(op: PrimId) -> &'static str {
    match op {
        PrimId::Add => "+",
        PrimId::Sub => "-",
        PrimId::Mul => "*",
        PrimId::Div => "/",
        PrimId::Lt => "<",
        PrimId::Le => "<=",
        PrimId::Gt => ">",
        PrimId::Ge => ">=",
        PrimId::Eq => "=",
        PrimId::Ne => "!=",
        PrimId::And => "&&",
        _ => unreachable!("not an infix operator"),
    }
}

fn pp_comma_list(items: &[TermRef], out: &mut String) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        pp(item, SEQ, out);
    }
}

fn pp_pattern(pattern: &Pattern, out: &mut String) {
    match pattern {
        Pattern::Record(fields) => {
            out.push('{');
            for (i, f) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(f);
            }
            out.push('}');
        }
        Pattern::EmptyList => out.push_str("[]"),
        Pattern::Cons(head, tail) => {
            let _ = write!(out, "{head} :: {tail}");
        }
        Pattern::Wildcard => out.push('_'),
        Pattern::Var(name) => out.push_str(name),
    }
}

fn level_of(term: &Term) -> u8 {
    match term {
        Term::Const(x) => {
            if x.is_sign_negative() {
                UNARY
            } else {
                ATOM
            }
        }
        Term::Var(_) => ATOM,
        Term::Lam { .. } => CONTROL,
        Term::App { func, .. } => match &**func {
            Term::Lam { param, .. } if &**param == "_" => SEQ,
            Term::Lam { .. } => CONTROL,
            _ => APP,
        },
        Term::If { .. } | Term::Match { .. } | Term::LetRec { .. } | Term::Weight { .. } => {
            CONTROL
        }
        Term::Prim { op, .. } => match op {
            PrimId::Add | PrimId::Sub => ADD,
            PrimId::Mul | PrimId::Div => MUL,
            PrimId::Lt | PrimId::Le | PrimId::Gt | PrimId::Ge | PrimId::Eq | PrimId::Ne => CMP,
            PrimId::And => AND,
            PrimId::Neg | PrimId::Not => UNARY,
            PrimId::Log | PrimId::Exp => APP,
            PrimId::Density(_) => ATOM,
        },
        Term::Sample { .. } | Term::Resample | Term::ListLit(_) | Term::RecordLit(_) => ATOM,
        Term::Proj { .. } => POSTFIX,
    }
}

/// True when the printed form ends in a body that would keep absorbing a
/// `; tail` continuation, so it needs parentheses in sequence-head position.
fn open_tail(term: &Term) -> bool {
    match term {
        Term::Lam { .. } | Term::If { .. } | Term::Match { .. } | Term::LetRec { .. } => true,
        Term::App { func, .. } => matches!(&**func, Term::Lam { .. }),
        _ => false,
    }
}

/// True when the printed form's trailing open position is a `match`, which
/// would capture a following `| arm`.
fn ends_in_match(term: &Term) -> bool {
    match term {
        Term::Match { .. } => true,
        Term::Lam { body, .. } | Term::LetRec { body, .. } => ends_in_match(body),
        Term::If { els, .. } => ends_in_match(els),
        Term::App { func, .. } => match &**func {
            Term::Lam { body, .. } => ends_in_match(body),
            _ => false,
        },
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::alpha_eq;
    use crate::desugar::compile;

    fn roundtrip(src: &str) {
        let term = compile(src).expect(src);
        let printed = pretty(&term);
        let reparsed = compile(&printed)
            .unwrap_or_else(|e| panic!("reparse of {printed:?} failed: {e}"));
        assert!(
            alpha_eq(&term, &reparsed),
            "roundtrip changed term:\n  source: {src}\n printed: {printed}"
        );
    }

    #[test]
    fn sequence_head_forms() {
        assert_eq!(
            pretty(&compile("resample; weight 2; 1").unwrap()),
            "resample; weight 2.0; 1.0"
        );
        roundtrip("weight 2; 1");
    }

    #[test]
    fn open_tail_heads_are_parenthesized() {
        // An if in sequence-head position must not absorb the tail.
        let term = compile("(if 1 then 1 else 2); 3").unwrap();
        let printed = pretty(&term);
        assert_eq!(printed, "(if 1.0 then 1.0 else 2.0); 3.0");
        roundtrip("(if 1 then 1 else 2); 3");
        roundtrip("(let x = 1 in x); 3");
        roundtrip("(\\x. x); 3");
    }

    #[test]
    fn let_and_seq_sugar_reconstructed() {
        assert_eq!(pretty(&compile("let x = 1 in x + 2").unwrap()), "let x = 1.0 in x + 2.0");
        assert_eq!(pretty(&compile("1; 2").unwrap()), "1.0; 2.0");
    }

    #[test]
    fn negative_constant_in_argument_position() {
        let term = compile("let f = \\x. x in f (-3)").unwrap();
        roundtrip(&pretty(&term));
        assert!(pretty(&term).contains("(-3.0)"));
    }

    #[test]
    fn precedence_parens() {
        roundtrip("(1 + 2) * 3");
        roundtrip("1 + 2 * 3");
        roundtrip("-(1 + 2)");
        roundtrip("!(1 < 2) && 1");
        roundtrip("(1 < 2) = (3 < 4)");
        assert_eq!(pretty(&compile("(1 + 2) * 3").unwrap()), "(1.0 + 2.0) * 3.0");
        assert_eq!(pretty(&compile("1 + 2 * 3").unwrap()), "1.0 + 2.0 * 3.0");
    }

    #[test]
    fn application_and_projection() {
        roundtrip("let f = \\x. x in let r = {a: 1} in f r.a");
        roundtrip("let f = \\x. \\y. x in (f 1) 2");
        let term = compile("let f = \\x. {a: x} in (f 1).a").unwrap();
        let printed = pretty(&term);
        assert!(printed.contains("(f 1.0).a"), "{printed}");
        roundtrip(&printed);
    }

    #[test]
    fn match_in_non_final_arm_is_parenthesized() {
        let src = "match [1] with [] -> (match [] with [] -> 0 | _ -> 1) | h :: t -> h";
        roundtrip(src);
        let printed = pretty(&compile(src).unwrap());
        assert!(printed.contains("(match"), "{printed}");
    }

    #[test]
    fn weight_argument_forms() {
        roundtrip("weight (f_Bern(0.5, 1))");
        roundtrip("weight 2");
        roundtrip("let r = {w: 2} in weight r.w");
        assert_eq!(pretty(&compile("weight (1 + 1)").unwrap()), "weight (1.0 + 1.0)");
    }

    #[test]
    fn sample_and_density_forms() {
        assert_eq!(pretty(&compile("sample_Bern(0.6)").unwrap()), "sample_Bern(0.6)");
        assert_eq!(
            pretty(&compile("f_N(0, 1, 0.5)").unwrap()),
            "f_N(0.0, 1.0, 0.5)"
        );
        roundtrip("sample (exponential (0.2 + 0.1))");
    }

    #[test]
    fn log_exp_heads() {
        roundtrip("log 2");
        roundtrip("exp (log 2)");
        roundtrip("logweight (log 2)");
        let printed = pretty(&compile("let f = \\x. x in f (log 2)").unwrap());
        assert!(printed.contains("(log 2.0)"), "{printed}");
    }
}
