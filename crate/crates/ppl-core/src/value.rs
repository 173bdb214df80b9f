//! Runtime values and environments.
//!
//! Values are terms in normal form; closures capture their defining
//! environment instead of being substituted, which keeps machine states
//! cheap to clone when a particle pauses at a resample. Everything is
//! reference-counted with [`Arc`] so particles can migrate between
//! worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::ast::{Ident, TermRef};

/// A value: a real, a closure, a list, or a record. Unit is the real 0
/// and booleans are the reals 1 and 0.
#[derive(Clone, Debug)]
pub enum Value {
    Real(f64),
    Closure(Arc<Closure>),
    List(Arc<Vec<Value>>),
    Record(Arc<BTreeMap<Ident, Value>>),
}

/// A function value. `rec_name`, when set, re-binds the closure itself on
/// application, giving recursion without cyclic environments.
#[derive(Debug)]
pub struct Closure {
    pub param: Ident,
    pub body: TermRef,
    pub env: Env,
    pub rec_name: Option<Ident>,
}

impl Value {
    pub fn unit() -> Value {
        Value::Real(0.0)
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    /// Structural equality; closures compare by identity.
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a == b,
            (Value::Closure(a), Value::Closure(b)) => Arc::ptr_eq(a, b),
            (Value::List(a), Value::List(b)) => a == b,
            (Value::Record(a), Value::Record(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x:?}"),
            Value::Closure(_) => write!(f, "<closure>"),
            Value::List(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::Record(fields) => {
                write!(f, "{{")?;
                for (i, (name, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{name}: {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Persistent environment: a shared linked list of bindings. `bind` is
/// O(1) and lookup walks toward the root, so shadowing is the natural
/// innermost-wins.
#[derive(Clone, Debug, Default)]
pub struct Env(Option<Arc<EnvNode>>);

#[derive(Debug)]
struct EnvNode {
    name: Ident,
    value: Value,
    parent: Env,
}

impl Env {
    pub fn empty() -> Env {
        Env(None)
    }

    pub fn bind(&self, name: Ident, value: Value) -> Env {
        Env(Some(Arc::new(EnvNode { name, value, parent: self.clone() })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        let mut cur = self;
        while let Some(node) = &cur.0 {
            if &*node.name == name {
                return Some(&node.value);
            }
            cur = &node.parent;
        }
        None
    }
}
