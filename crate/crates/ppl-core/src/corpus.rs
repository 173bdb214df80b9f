//! The bundled example programs.
//!
//! Sources are embedded at compile time so library tests, the acceptance
//! suite, and the benchmarks agree on one set of models regardless of the
//! working directory.

use crate::ast::{enumerate_paths, node_at, Term, TermRef};
use crate::desugar::compile;
use crate::CompileError;

pub const GEOMETRIC: &str = include_str!("../../../models/geometric.ppl");
pub const GEOMETRIC_RESAMPLE: &str = include_str!("../../../models/geometric_resample.ppl");
pub const BETA: &str = include_str!("../../../models/beta.ppl");
pub const BETA_OBS: &str = include_str!("../../../models/beta_obs.ppl");
pub const SEQ: &str = include_str!("../../../models/seq.ppl");
pub const SEQ_UNROLLED: &str = include_str!("../../../models/seq_unrolled.ppl");
pub const SEQ_GAUSS: &str = include_str!("../../../models/seq_gauss.ppl");
pub const CRBD: &str = include_str!("../../../models/crbd.ppl");
pub const AIRCRAFT: &str = include_str!("../../../models/aircraft.ppl");
pub const UNIT: &str = include_str!("../../../models/unit.ppl");
pub const LOOP: &str = include_str!("../../../models/loop.ppl");

/// Every bundled program, by short name.
pub const PROGRAMS: &[(&str, &str)] = &[
    ("geometric", GEOMETRIC),
    ("geometric_resample", GEOMETRIC_RESAMPLE),
    ("beta", BETA),
    ("beta_obs", BETA_OBS),
    ("seq", SEQ),
    ("seq_unrolled", SEQ_UNROLLED),
    ("seq_gauss", SEQ_GAUSS),
    ("crbd", CRBD),
    ("aircraft", AIRCRAFT),
    ("unit", UNIT),
    ("loop", LOOP),
];

pub fn source(name: &str) -> Option<&'static str> {
    PROGRAMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Compile a bundled program by name.
pub fn term(name: &str) -> Result<TermRef, CompileError> {
    let src = source(name).unwrap_or_else(|| panic!("no bundled program named `{name}`"));
    compile(src)
}

/// All lists of numeric literals in the term, in preorder. Used to read a
/// model's observation sequence out of its own source instead of
/// duplicating the numbers elsewhere.
pub fn constant_lists(term: &TermRef) -> Vec<Vec<f64>> {
    enumerate_paths(term)
        .iter()
        .filter_map(|p| {
            let node = node_at(term, p)?;
            let Term::ListLit(items) = &**node else { return None };
            items
                .iter()
                .map(|item| match &**item {
                    Term::Const(x) => Some(*x),
                    _ => None,
                })
                .collect::<Option<Vec<f64>>>()
        })
        .collect()
}
