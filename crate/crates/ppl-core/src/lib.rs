//! An untyped probabilistic lambda calculus with trace-based semantics
//! and a sequential Monte Carlo inference engine.
//!
//! Programs denote weighted distributions over traces of uniform draws;
//! `sample` maps draws through quantile functions and `weight` scales the
//! current run. `resample` barriers split a program into segments; the
//! inference engine in [`smc`] runs a bootstrap particle filter over those
//! segments for any placement of barriers and estimates the normalizing
//! constant alongside the posterior.

#[cfg(feature = "acceptance")]
pub mod accept;
pub mod ast;
pub mod corpus;
pub mod desugar;
pub mod dist;
pub mod lexer;
pub mod machine;
pub mod oracle;
pub mod parser;
pub mod pretty;
pub mod rng;
pub mod smc;
pub mod surface;
pub mod value;

use thiserror::Error;

/// Any front-end failure: lexing, parsing, or lowering.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Parse(#[from] parser::ParseError),
    #[error(transparent)]
    Desugar(#[from] desugar::DesugarError),
}
