//! Core term language.
//!
//! The calculus is an untyped call-by-value lambda calculus over 64-bit
//! real constants, extended with primitive operations, quantile-based
//! `sample`, multiplicative `weight`, and the `resample` barrier. Native
//! lists, records, first-match-wins `match`, and a recursive `let`
//! binding are part of the core so that the example programs need no
//! encoding tricks. Booleans are the reals 1 and 0, and unit is 0.
//!
//! Terms are immutable and shared through [`Arc`], so subterm reuse is
//! free and terms can be shared across worker threads.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::dist::{self, DistId};

/// Interned-ish identifier; cloning is a refcount bump.
pub type Ident = Arc<str>;

/// Shared reference to a term.
pub type TermRef = Arc<Term>;

/// A core term.
#[derive(Debug)]
pub enum Term {
    /// Finite real constant.
    Const(f64),
    Var(Ident),
    Lam { param: Ident, body: TermRef },
    App { func: TermRef, arg: TermRef },
    /// Condition must evaluate to exactly 1 (true) or 0 (false).
    If { cond: TermRef, then: TermRef, els: TermRef },
    Prim { op: PrimId, args: Vec<TermRef> },
    Sample { dist: DistId, args: Vec<TermRef> },
    Weight { arg: TermRef },
    Resample,
    ListLit(Vec<TermRef>),
    /// Field order is preserved for paths and printing; values are
    /// label-keyed so order never affects runtime behaviour.
    RecordLit(Vec<(Ident, TermRef)>),
    Proj { expr: TermRef, field: Ident },
    Match { scrutinee: TermRef, arms: Vec<Arm> },
    /// Recursive function binding: `name` is in scope in `fn_body` and
    /// `body`, `param` only in `fn_body`.
    LetRec { name: Ident, param: Ident, fn_body: TermRef, body: TermRef },
}

/// One `match` arm.
#[derive(Debug)]
pub struct Arm {
    pub pattern: Pattern,
    pub body: TermRef,
}

/// Patterns destructure records and lists; there is no deeper nesting.
#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    /// `{a, b}`: matches any record containing at least these fields and
    /// binds each field name.
    Record(Vec<Ident>),
    /// `[]`: matches the empty list.
    EmptyList,
    /// `h :: t`: matches a non-empty list, binding head and tail.
    Cons(Ident, Ident),
    /// `_`: matches anything, binds nothing.
    Wildcard,
    /// `x`: matches anything, binds it.
    Var(Ident),
}

/// Primitive operation identifiers. All primitives are strict functions
/// from reals to a real; comparisons and logic return 1 or 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimId {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Not,
    And,
    Log,
    Exp,
    /// Density or mass function of a built-in distribution; the final
    /// argument is the point, preceding arguments are the parameters.
    Density(DistId),
}

/// A primitive application that cannot produce a value; the machine maps
/// this to a stuck state.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum PrimError {
    #[error("{0}")]
    Dist(#[from] dist::DistError),
}

impl PrimId {
    pub fn arity(self) -> usize {
        match self {
            PrimId::Neg | PrimId::Not | PrimId::Log | PrimId::Exp => 1,
            PrimId::Density(d) => d.arity() + 1,
            _ => 2,
        }
    }

    pub fn name(self) -> String {
        match self {
            PrimId::Add => "+".into(),
            PrimId::Sub => "-".into(),
            PrimId::Mul => "*".into(),
            PrimId::Div => "/".into(),
            PrimId::Neg => "neg".into(),
            PrimId::Lt => "<".into(),
            PrimId::Le => "<=".into(),
            PrimId::Gt => ">".into(),
            PrimId::Ge => ">=".into(),
            PrimId::Eq => "=".into(),
            PrimId::Ne => "!=".into(),
            PrimId::Not => "!".into(),
            PrimId::And => "&&".into(),
            PrimId::Log => "log".into(),
            PrimId::Exp => "exp".into(),
            PrimId::Density(d) => format!("f_{}", d.name()),
        }
    }

    /// Evaluate the primitive on fully reduced real arguments. NaN
    /// results are returned as-is; the machine turns them into stuck
    /// states so they never propagate into values.
    pub fn apply(self, args: &[f64]) -> Result<f64, PrimError> {
        debug_assert_eq!(args.len(), self.arity());
        let bool_of = |b: bool| if b { 1.0 } else { 0.0 };
        Ok(match self {
            PrimId::Add => args[0] + args[1],
            PrimId::Sub => args[0] - args[1],
            PrimId::Mul => args[0] * args[1],
            PrimId::Div => args[0] / args[1],
            PrimId::Neg => -args[0],
            PrimId::Lt => bool_of(args[0] < args[1]),
            PrimId::Le => bool_of(args[0] <= args[1]),
            PrimId::Gt => bool_of(args[0] > args[1]),
            PrimId::Ge => bool_of(args[0] >= args[1]),
            PrimId::Eq => bool_of(args[0] == args[1]),
            PrimId::Ne => bool_of(args[0] != args[1]),
            PrimId::Not => bool_of(args[0] == 0.0),
            PrimId::And => bool_of(args[0] != 0.0 && args[1] != 0.0),
            PrimId::Log => args[0].ln(),
            PrimId::Exp => args[0].exp(),
            PrimId::Density(d) => {
                let (params, point) = args.split_at(d.arity());
                dist::validate_params(d, params)?;
                dist::density(d, params, point[0])
            }
        })
    }
}

impl Term {
    pub fn constant(x: f64) -> TermRef {
        TermRef::new(Term::Const(x))
    }

    pub fn var(name: &str) -> TermRef {
        TermRef::new(Term::Var(name.into()))
    }

    pub fn lam(param: &str, body: TermRef) -> TermRef {
        TermRef::new(Term::Lam { param: param.into(), body })
    }

    pub fn app(func: TermRef, arg: TermRef) -> TermRef {
        TermRef::new(Term::App { func, arg })
    }

    /// Number of direct children, matching the order used by node paths.
    pub fn child_count(&self) -> usize {
        match self {
            Term::Const(_) | Term::Var(_) | Term::Resample => 0,
            Term::Lam { .. } | Term::Weight { .. } | Term::Proj { .. } => 1,
            Term::App { .. } | Term::LetRec { .. } => 2,
            Term::If { .. } => 3,
            Term::Prim { args, .. } | Term::Sample { args, .. } => args.len(),
            Term::ListLit(items) => items.len(),
            Term::RecordLit(fields) => fields.len(),
            Term::Match { arms, .. } => 1 + arms.len(),
        }
    }

    /// The `i`-th direct child. Children are ordered as evaluated, with
    /// binders last: `App` is [func, arg], `If` is [cond, then, else],
    /// `Match` is [scrutinee, arm bodies...], `LetRec` is
    /// [function body, continuation].
    pub fn child(&self, i: usize) -> Option<&TermRef> {
        match self {
            Term::Const(_) | Term::Var(_) | Term::Resample => None,
            Term::Lam { body, .. } => [body].get(i).copied(),
            Term::Weight { arg } => [arg].get(i).copied(),
            Term::Proj { expr, .. } => [expr].get(i).copied(),
            Term::App { func, arg } => [func, arg].get(i).copied(),
            Term::LetRec { fn_body, body, .. } => [fn_body, body].get(i).copied(),
            Term::If { cond, then, els } => [cond, then, els].get(i).copied(),
            Term::Prim { args, .. } | Term::Sample { args, .. } => args.get(i),
            Term::ListLit(items) => items.get(i),
            Term::RecordLit(fields) => fields.get(i).map(|(_, t)| t),
            Term::Match { scrutinee, arms } => {
                if i == 0 {
                    Some(scrutinee)
                } else {
                    arms.get(i - 1).map(|arm| &arm.body)
                }
            }
        }
    }

    /// Rebuild this node with child `i` replaced.
    fn with_child(&self, i: usize, new: TermRef) -> Term {
        match self {
            Term::Lam { param, .. } if i == 0 => {
                Term::Lam { param: param.clone(), body: new }
            }
            Term::Weight { .. } if i == 0 => Term::Weight { arg: new },
            Term::Proj { expr: _, field } if i == 0 => {
                Term::Proj { expr: new, field: field.clone() }
            }
            Term::App { func, arg } => match i {
                0 => Term::App { func: new, arg: arg.clone() },
                _ => Term::App { func: func.clone(), arg: new },
            },
            Term::LetRec { name, param, fn_body, body } => match i {
                0 => Term::LetRec {
                    name: name.clone(),
                    param: param.clone(),
                    fn_body: new,
                    body: body.clone(),
                },
                _ => Term::LetRec {
                    name: name.clone(),
                    param: param.clone(),
                    fn_body: fn_body.clone(),
                    body: new,
                },
            },
            Term::If { cond, then, els } => match i {
                0 => Term::If { cond: new, then: then.clone(), els: els.clone() },
                1 => Term::If { cond: cond.clone(), then: new, els: els.clone() },
                _ => Term::If { cond: cond.clone(), then: then.clone(), els: new },
            },
            Term::Prim { op, args } => {
                let mut args = args.clone();
                args[i] = new;
                Term::Prim { op: *op, args }
            }
            Term::Sample { dist, args } => {
                let mut args = args.clone();
                args[i] = new;
                Term::Sample { dist: *dist, args }
            }
            Term::ListLit(items) => {
                let mut items = items.clone();
                items[i] = new;
                Term::ListLit(items)
            }
            Term::RecordLit(fields) => {
                let mut fields = fields.clone();
                fields[i].1 = new;
                Term::RecordLit(fields)
            }
            Term::Match { scrutinee, arms } => {
                if i == 0 {
                    let arms = arms
                        .iter()
                        .map(|a| Arm { pattern: a.pattern.clone(), body: a.body.clone() })
                        .collect();
                    Term::Match { scrutinee: new, arms }
                } else {
                    let arms = arms
                        .iter()
                        .enumerate()
                        .map(|(k, a)| Arm {
                            pattern: a.pattern.clone(),
                            body: if k == i - 1 { new.clone() } else { a.body.clone() },
                        })
                        .collect();
                    Term::Match { scrutinee: scrutinee.clone(), arms }
                }
            }
            _ => unreachable!("with_child index out of range"),
        }
    }
}

/// A location in a term: the sequence of child indices from the root.
pub type NodePath = Vec<usize>;

/// A set of locations at which `resample;` is prepended.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlacementSpec {
    pub paths: Vec<NodePath>,
}

/// Invalid placement request.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("placement path {path:?} does not name a node")]
    BadPath { path: NodePath },
    #[error("weight site {site} does not exist (program has {count} weight sites)")]
    NoSuchWeightSite { site: usize, count: usize },
    #[error("weight site {site} has no sequenced continuation to resample after")]
    NoContinuation { site: usize },
}

/// Look up the subterm at `path`.
pub fn node_at<'t>(mut t: &'t TermRef, path: &[usize]) -> Option<&'t TermRef> {
    for &i in path {
        t = t.child(i)?;
    }
    Some(t)
}

/// All node paths of `t` in preorder.
pub fn enumerate_paths(t: &TermRef) -> Vec<NodePath> {
    let mut out = Vec::new();
    let mut stack = vec![(t.clone(), NodePath::new())];
    while let Some((node, path)) = stack.pop() {
        for i in (0..node.child_count()).rev() {
            let mut p = path.clone();
            p.push(i);
            stack.push((node.child(i).unwrap().clone(), p));
        }
        out.push(path);
    }
    out
}

/// Paths of all `weight` nodes in preorder.
pub fn weight_site_paths(t: &TermRef) -> Vec<NodePath> {
    enumerate_paths(t)
        .into_iter()
        .filter(|p| matches!(&**node_at(t, p).unwrap(), Term::Weight { .. }))
        .collect()
}

/// Count `resample` nodes.
pub fn count_resamples(t: &TermRef) -> usize {
    enumerate_paths(t)
        .iter()
        .filter(|p| matches!(&**node_at(t, p).unwrap(), Term::Resample))
        .count()
}

/// Resolve "insert a resample immediately after the k-th weight site"
/// (1-based, preorder) to the path of that weight's sequenced
/// continuation. The weight must occur as the discarded head of a
/// sequence, i.e. as `weight w; rest` which desugars to
/// `(\_ . rest) (weight w)`.
pub fn after_weight_paths(t: &TermRef, sites: &[usize]) -> Result<Vec<NodePath>, PlacementError> {
    let weights = weight_site_paths(t);
    let mut out = Vec::new();
    for &site in sites {
        if site == 0 || site > weights.len() {
            return Err(PlacementError::NoSuchWeightSite { site, count: weights.len() });
        }
        let wpath = &weights[site - 1];
        let continuation = (|| {
            // Parent must be App { func: Lam, arg: <this weight> }.
            let (parent_path, last) = wpath.split_at(wpath.len().checked_sub(1)?);
            if last != [1] {
                return None;
            }
            let parent = node_at(t, parent_path)?;
            match &**parent {
                Term::App { func, .. } if matches!(&**func, Term::Lam { .. }) => {
                    let mut p = parent_path.to_vec();
                    p.extend_from_slice(&[0, 0]);
                    Some(p)
                }
                _ => None,
            }
        })();
        out.push(continuation.ok_or(PlacementError::NoContinuation { site })?);
    }
    Ok(out)
}

/// Replace each located subterm `t'` with `resample; t'`. Deeper paths
/// are applied first so that all paths refer to positions in the input
/// term. Duplicate paths are applied once.
pub fn insert_resamples(t: &TermRef, spec: &PlacementSpec) -> Result<TermRef, PlacementError> {
    let mut paths = spec.paths.clone();
    paths.sort();
    paths.dedup();
    for p in &paths {
        if node_at(t, p).is_none() {
            return Err(PlacementError::BadPath { path: p.clone() });
        }
    }
    // Longest (deepest) first; among unrelated paths order is irrelevant.
    paths.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut result = t.clone();
    for p in &paths {
        result = insert_at(&result, p);
    }
    Ok(result)
}

fn insert_at(t: &TermRef, path: &[usize]) -> TermRef {
    match path.split_first() {
        None => {
            // resample; t  ==  (\_ . t) resample
            Arc::new(Term::App {
                func: Arc::new(Term::Lam { param: "_".into(), body: t.clone() }),
                arg: Arc::new(Term::Resample),
            })
        }
        Some((&i, rest)) => {
            let child = t.child(i).expect("validated path");
            Arc::new(t.with_child(i, insert_at(child, rest)))
        }
    }
}

/// Alpha equivalence: structural equality up to consistent renaming of
/// bound variables. Record-pattern binders are field labels and are
/// therefore not renameable; list-pattern and lambda binders are.
pub fn alpha_eq(a: &TermRef, b: &TermRef) -> bool {
    fn go(a: &Term, b: &Term, env: &mut Vec<(Ident, Ident)>) -> bool {
        let var_eq = |x: &Ident, y: &Ident, env: &Vec<(Ident, Ident)>| {
            for (xa, xb) in env.iter().rev() {
                let hit_a = xa == x;
                let hit_b = xb == y;
                if hit_a || hit_b {
                    return hit_a && hit_b;
                }
            }
            x == y
        };
        match (a, b) {
            (Term::Const(x), Term::Const(y)) => x == y,
            (Term::Var(x), Term::Var(y)) => var_eq(x, y, env),
            (Term::Lam { param: pa, body: ba }, Term::Lam { param: pb, body: bb }) => {
                env.push((pa.clone(), pb.clone()));
                let r = go(ba, bb, env);
                env.pop();
                r
            }
            (Term::App { func: fa, arg: aa }, Term::App { func: fb, arg: ab }) => {
                go(fa, fb, env) && go(aa, ab, env)
            }
            (
                Term::If { cond: ca, then: ta, els: ea },
                Term::If { cond: cb, then: tb, els: eb },
            ) => go(ca, cb, env) && go(ta, tb, env) && go(ea, eb, env),
            (Term::Prim { op: oa, args: xs }, Term::Prim { op: ob, args: ys }) => {
                oa == ob && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| go(x, y, env))
            }
            (Term::Sample { dist: da, args: xs }, Term::Sample { dist: db, args: ys }) => {
                da == db && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| go(x, y, env))
            }
            (Term::Weight { arg: x }, Term::Weight { arg: y }) => go(x, y, env),
            (Term::Resample, Term::Resample) => true,
            (Term::ListLit(xs), Term::ListLit(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| go(x, y, env))
            }
            (Term::RecordLit(xs), Term::RecordLit(ys)) => {
                xs.len() == ys.len()
                    && xs
                        .iter()
                        .zip(ys)
                        .all(|((fx, x), (fy, y))| fx == fy && go(x, y, env))
            }
            (Term::Proj { expr: xa, field: fa }, Term::Proj { expr: xb, field: fb }) => {
                fa == fb && go(xa, xb, env)
            }
            (
                Term::Match { scrutinee: sa, arms: xs },
                Term::Match { scrutinee: sb, arms: ys },
            ) => {
                if !go(sa, sb, env) || xs.len() != ys.len() {
                    return false;
                }
                xs.iter().zip(ys).all(|(ax, ay)| {
                    let before = env.len();
                    let ok = match (&ax.pattern, &ay.pattern) {
                        (Pattern::Record(fx), Pattern::Record(fy)) => {
                            if fx != fy {
                                false
                            } else {
                                for f in fx {
                                    env.push((f.clone(), f.clone()));
                                }
                                true
                            }
                        }
                        (Pattern::EmptyList, Pattern::EmptyList) => true,
                        (Pattern::Cons(hx, tx), Pattern::Cons(hy, ty)) => {
                            env.push((hx.clone(), hy.clone()));
                            env.push((tx.clone(), ty.clone()));
                            true
                        }
                        (Pattern::Wildcard, Pattern::Wildcard) => true,
                        (Pattern::Var(x), Pattern::Var(y)) => {
                            env.push((x.clone(), y.clone()));
                            true
                        }
                        _ => false,
                    };
                    let r = ok && go(&ax.body, &ay.body, env);
                    env.truncate(before);
                    r
                })
            }
            (
                Term::LetRec { name: na, param: pa, fn_body: fa, body: ba },
                Term::LetRec { name: nb, param: pb, fn_body: fb, body: bb },
            ) => {
                env.push((na.clone(), nb.clone()));
                env.push((pa.clone(), pb.clone()));
                let fn_ok = go(fa, fb, env);
                env.pop();
                let body_ok = fn_ok && go(ba, bb, env);
                env.pop();
                body_ok
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}

impl fmt::Display for Term {
    /// Compact debug rendering of core terms; the surface pretty-printer
    /// in `pretty` is the round-trippable one.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c:?}"),
            Term::Var(x) => write!(f, "{x}"),
            Term::Lam { param, body } => write!(f, "(\\{param}. {body})"),
            Term::App { func, arg } => write!(f, "({func} {arg})"),
            Term::If { cond, then, els } => {
                write!(f, "(if {cond} then {then} else {els})")
            }
            Term::Prim { op, args } => {
                write!(f, "{}(", op.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::Sample { dist, args } => {
                write!(f, "sample_{}(", dist.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::Weight { arg } => write!(f, "weight({arg})"),
            Term::Resample => write!(f, "resample"),
            Term::ListLit(items) => {
                write!(f, "[")?;
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Term::RecordLit(fields) => {
                write!(f, "{{")?;
                for (i, (name, x)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{name}: {x}")?;
                }
                write!(f, "}}")
            }
            Term::Proj { expr, field } => write!(f, "{expr}.{field}"),
            Term::Match { scrutinee, arms } => {
                write!(f, "(match {scrutinee} with")?;
                for arm in arms {
                    write!(f, " | {:?} -> {}", arm.pattern, arm.body)?;
                }
                write!(f, ")")
            }
            Term::LetRec { name, param, fn_body, body } => {
                write!(f, "(let rec {name} {param} = {fn_body} in {body})")
            }
        }
    }
}
