//! Trace-based abstract machine.
//!
//! A program runs against a *trace*: a finite sequence of numbers in
//! [0, 1]. Each `sample` consumes the next entry and transforms it through
//! the distribution's quantile function, so the trace space is the same
//! for every program and the base measure is Lebesgue on traces of each
//! length. `weight` multiplies the run's weight; nothing else does.
//!
//! Replaying a term on a trace yields the pair (result, weight) when the
//! machine reaches a value having consumed the trace exactly; every other
//! outcome (stuck state, trace too short, trace left over) is discarded as
//! (unit, 0). Runs can also be *resample-limited*: a limit of `n` lets the
//! machine pass `n` resample barriers and pauses it at the next one, with
//! the focus still on that `resample` so the paused state can be resumed
//! later under a fresh limit and trace segment.
//!
//! The machine is a heap-allocated CK machine: closures capture persistent
//! environments, the continuation is an explicit frame stack, and tail
//! calls run in constant stack space.

use std::collections::BTreeMap;
use std::sync::Arc;

use arrayvec::ArrayVec;
use thiserror::Error;

use crate::ast::{Ident, Pattern, Term, TermRef};
use crate::dist;
use crate::rng::RngStream;
use crate::value::{Closure, Env, Value};

/// Default per-segment step budget; generous enough that only genuinely
/// divergent programs hit it.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

/// Why a run cannot produce a value.
#[derive(Clone, Copy, Debug, Error, Eq, Hash, PartialEq)]
pub enum StuckReason {
    #[error("unbound variable")]
    UnboundVariable,
    #[error("applied a non-function")]
    ApplyNonFunction,
    #[error("if condition was not exactly true or false")]
    IfCondition,
    #[error("primitive applied to a non-real argument")]
    PrimArgType,
    #[error("numeric operation produced NaN")]
    NanResult,
    #[error("invalid distribution parameters")]
    InvalidDistParams,
    #[error("weight argument was not a real")]
    WeightNotReal,
    #[error("negative weight")]
    NegativeWeight,
    #[error("infinite weight")]
    InfiniteWeight,
    #[error("no match arm applied")]
    MatchFailure,
    #[error("projection from a non-record")]
    ProjNonRecord,
    #[error("record has no such field")]
    MissingField,
    #[error("trace ended before the run did")]
    TraceExhausted,
    #[error("trace entry outside [0, 1]")]
    BadTraceEntry,
    #[error("run ended with unconsumed trace entries")]
    TraceNotConsumed,
    #[error("step budget exhausted")]
    StepBudgetExhausted,
    #[error("zero weight with kill-on-zero enabled")]
    ZeroWeightKilled,
}

/// What the machine is looking at.
#[derive(Clone, Debug)]
enum Focus {
    Eval(TermRef, Env),
    Ret(Value),
}

/// One continuation frame.
#[derive(Clone, Debug)]
enum Frame {
    /// Evaluating the function part of an application.
    AppFun { arg: TermRef, env: Env },
    /// Function reduced to a closure; evaluating the argument.
    AppArg { func: Arc<Closure> },
    IfCond { then: TermRef, els: TermRef, env: Env },
    /// `node` is the `Prim` term; `done` holds reduced arguments.
    PrimArgs { node: TermRef, next: usize, done: ArrayVec<f64, 3>, env: Env },
    /// `node` is the `Sample` term; `done` holds reduced parameters.
    SampleArgs { node: TermRef, next: usize, done: ArrayVec<f64, 2>, env: Env },
    WeightArg,
    ListItems { node: TermRef, next: usize, done: Vec<Value>, env: Env },
    RecordFields { node: TermRef, next: usize, done: Vec<(Ident, Value)>, env: Env },
    ProjField { field: Ident },
    MatchScrut { node: TermRef, env: Env },
}

/// Complete machine state. Cloneable, so a paused state can be resumed
/// several times against different trace segments.
#[derive(Clone, Debug)]
pub struct MachineCore {
    focus: Focus,
    stack: Vec<Frame>,
    /// Log of the multiplicative weight accumulated in the current
    /// segment. Minus infinity encodes weight zero.
    pub log_weight: f64,
    /// Transitions taken in the current segment.
    pub steps: u64,
}

impl MachineCore {
    pub fn new(term: TermRef) -> MachineCore {
        MachineCore {
            focus: Focus::Eval(term, Env::empty()),
            stack: Vec::new(),
            log_weight: 0.0,
            steps: 0,
        }
    }
}

/// Where random numbers come from.
#[derive(Clone, Debug)]
pub enum Cursor {
    /// Consume a fixed trace; runs that need more entries get stuck.
    Replay { trace: Vec<f64>, pos: usize },
    /// Draw fresh randomness, recording every draw.
    Record { rng: RngStream, draws: Vec<f64> },
}

impl Cursor {
    pub fn replay(trace: &[f64]) -> Cursor {
        Cursor::Replay { trace: trace.to_vec(), pos: 0 }
    }

    pub fn record(rng: RngStream) -> Cursor {
        Cursor::Record { rng, draws: Vec::new() }
    }

    fn draw(&mut self) -> Result<f64, StuckReason> {
        match self {
            Cursor::Replay { trace, pos } => {
                if *pos >= trace.len() {
                    return Err(StuckReason::TraceExhausted);
                }
                let u = trace[*pos];
                *pos += 1;
                if (0.0..=1.0).contains(&u) {
                    Ok(u)
                } else {
                    Err(StuckReason::BadTraceEntry)
                }
            }
            Cursor::Record { rng, draws } => {
                let u = rng.next_unit();
                draws.push(u);
                Ok(u)
            }
        }
    }

    /// Entries consumed (replay) or drawn (record) so far.
    pub fn consumed(&self) -> usize {
        match self {
            Cursor::Replay { pos, .. } => *pos,
            Cursor::Record { draws, .. } => draws.len(),
        }
    }

    fn fully_consumed(&self) -> bool {
        match self {
            Cursor::Replay { trace, pos } => *pos == trace.len(),
            Cursor::Record { .. } => true,
        }
    }

    pub fn into_draws(self) -> Vec<f64> {
        match self {
            Cursor::Replay { trace, .. } => trace,
            Cursor::Record { draws, .. } => draws,
        }
    }
}

/// Per-run options.
#[derive(Clone, Debug)]
pub struct RunOpts {
    /// How many resample barriers the run may pass before pausing;
    /// `None` makes resample a no-op.
    pub resample_limit: Option<u64>,
    pub step_budget: u64,
    /// Treat a zero weight as immediate death. This is an engine-level
    /// optimization; the semantics functions never enable it, so a zero
    /// weight merely forces the run's weight to zero.
    pub kill_zero: bool,
}

impl Default for RunOpts {
    fn default() -> RunOpts {
        RunOpts { resample_limit: None, step_budget: DEFAULT_STEP_BUDGET, kill_zero: false }
    }
}

/// How a run stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum StopState {
    /// Reached a value with an empty continuation.
    Value(Value),
    /// Paused at a resample with the limit spent; the core can be resumed.
    AtResample,
    Stuck(StuckReason),
}

/// Drive the machine until it stops. Does not reset accumulated weight;
/// see [`run_segment`] for the engine-facing entry point.
pub fn run(core: &mut MachineCore, cursor: &mut Cursor, opts: &RunOpts) -> StopState {
    let mut resamples_left = opts.resample_limit;
    loop {
        if core.steps >= opts.step_budget {
            return StopState::Stuck(StuckReason::StepBudgetExhausted);
        }
        core.steps += 1;
        let focus = std::mem::replace(&mut core.focus, Focus::Ret(Value::unit()));
        let stepped = match focus {
            Focus::Eval(term, env) => eval_step(core, term, env, &mut resamples_left),
            Focus::Ret(value) => match core.stack.pop() {
                None => {
                    core.focus = Focus::Ret(value.clone());
                    return StopState::Value(value);
                }
                Some(frame) => ret_step(core, frame, value, cursor, opts),
            },
        };
        match stepped {
            Ok(Step::Continue) => {}
            Ok(Step::Pause) => return StopState::AtResample,
            Err(reason) => return StopState::Stuck(reason),
        }
    }
}

/// Reset segment-local state (weight, step count) and run. Used by the
/// inference engine, where each segment's weight is what matters.
pub fn run_segment(core: &mut MachineCore, cursor: &mut Cursor, opts: &RunOpts) -> StopState {
    core.log_weight = 0.0;
    core.steps = 0;
    run(core, cursor, opts)
}

enum Step {
    Continue,
    Pause,
}

fn eval_step(
    core: &mut MachineCore,
    term: TermRef,
    env: Env,
    resamples_left: &mut Option<u64>,
) -> Result<Step, StuckReason> {
    match &*term {
        Term::Const(x) => core.focus = Focus::Ret(Value::Real(*x)),
        Term::Var(name) => match env.lookup(name) {
            Some(v) => core.focus = Focus::Ret(v.clone()),
            None => return Err(StuckReason::UnboundVariable),
        },
        Term::Lam { param, body } => {
            core.focus = Focus::Ret(Value::Closure(Arc::new(Closure {
                param: param.clone(),
                body: body.clone(),
                env,
                rec_name: None,
            })));
        }
        Term::App { func, arg } => {
            core.stack.push(Frame::AppFun { arg: arg.clone(), env: env.clone() });
            core.focus = Focus::Eval(func.clone(), env);
        }
        Term::If { cond, then, els } => {
            core.stack.push(Frame::IfCond {
                then: then.clone(),
                els: els.clone(),
                env: env.clone(),
            });
            core.focus = Focus::Eval(cond.clone(), env);
        }
        Term::Prim { op, args } => {
            if args.len() != op.arity() || args.len() > 3 {
                return Err(StuckReason::PrimArgType);
            }
            let first = args[0].clone();
            core.stack.push(Frame::PrimArgs {
                node: term.clone(),
                next: 1,
                done: ArrayVec::new(),
                env: env.clone(),
            });
            core.focus = Focus::Eval(first, env);
        }
        Term::Sample { dist, args } => {
            if args.len() != dist.arity() {
                return Err(StuckReason::InvalidDistParams);
            }
            let first = args[0].clone();
            core.stack.push(Frame::SampleArgs {
                node: term.clone(),
                next: 1,
                done: ArrayVec::new(),
                env: env.clone(),
            });
            core.focus = Focus::Eval(first, env);
        }
        Term::Weight { arg } => {
            core.stack.push(Frame::WeightArg);
            core.focus = Focus::Eval(arg.clone(), env);
        }
        Term::Resample => match resamples_left {
            None => core.focus = Focus::Ret(Value::unit()),
            Some(n) if *n > 0 => {
                *n -= 1;
                core.focus = Focus::Ret(Value::unit());
            }
            Some(_) => {
                // Pause with the focus still on this resample so a
                // resumed run crosses it under the new limit.
                core.focus = Focus::Eval(term, env);
                return Ok(Step::Pause);
            }
        },
        Term::ListLit(items) => {
            if items.is_empty() {
                core.focus = Focus::Ret(Value::List(Arc::new(Vec::new())));
            } else {
                let first = items[0].clone();
                core.stack.push(Frame::ListItems {
                    node: term.clone(),
                    next: 1,
                    done: Vec::with_capacity(items.len()),
                    env: env.clone(),
                });
                core.focus = Focus::Eval(first, env);
            }
        }
        Term::RecordLit(fields) => {
            if fields.is_empty() {
                core.focus = Focus::Ret(Value::Record(Arc::new(BTreeMap::new())));
            } else {
                let first = fields[0].1.clone();
                core.stack.push(Frame::RecordFields {
                    node: term.clone(),
                    next: 1,
                    done: Vec::with_capacity(fields.len()),
                    env: env.clone(),
                });
                core.focus = Focus::Eval(first, env);
            }
        }
        Term::Proj { expr, field } => {
            core.stack.push(Frame::ProjField { field: field.clone() });
            core.focus = Focus::Eval(expr.clone(), env);
        }
        Term::Match { scrutinee, .. } => {
            let scrutinee = scrutinee.clone();
            core.stack.push(Frame::MatchScrut { node: term.clone(), env: env.clone() });
            core.focus = Focus::Eval(scrutinee, env);
        }
        Term::LetRec { name, param, fn_body, body } => {
            let closure = Value::Closure(Arc::new(Closure {
                param: param.clone(),
                body: fn_body.clone(),
                env: env.clone(),
                rec_name: Some(name.clone()),
            }));
            core.focus = Focus::Eval(body.clone(), env.bind(name.clone(), closure));
        }
    }
    Ok(Step::Continue)
}

fn ret_step(
    core: &mut MachineCore,
    frame: Frame,
    value: Value,
    cursor: &mut Cursor,
    opts: &RunOpts,
) -> Result<Step, StuckReason> {
    match frame {
        Frame::AppFun { arg, env } => match value {
            Value::Closure(func) => {
                core.stack.push(Frame::AppArg { func });
                core.focus = Focus::Eval(arg, env);
            }
            _ => return Err(StuckReason::ApplyNonFunction),
        },
        Frame::AppArg { func } => {
            let mut env = func.env.clone();
            if let Some(name) = &func.rec_name {
                env = env.bind(name.clone(), Value::Closure(func.clone()));
            }
            let env = env.bind(func.param.clone(), value);
            core.focus = Focus::Eval(func.body.clone(), env);
        }
        Frame::IfCond { then, els, env } => match value.as_real() {
            Some(x) if x == 1.0 => core.focus = Focus::Eval(then, env),
            Some(x) if x == 0.0 => core.focus = Focus::Eval(els, env),
            _ => return Err(StuckReason::IfCondition),
        },
        Frame::PrimArgs { node, next, mut done, env } => {
            done.push(real_arg(&value)?);
            let Term::Prim { op, args } = &*node else { unreachable!() };
            if next < args.len() {
                let arg = args[next].clone();
                core.stack.push(Frame::PrimArgs {
                    node: node.clone(),
                    next: next + 1,
                    done,
                    env: env.clone(),
                });
                core.focus = Focus::Eval(arg, env);
            } else {
                let result =
                    op.apply(&done).map_err(|_| StuckReason::InvalidDistParams)?;
                if result.is_nan() {
                    return Err(StuckReason::NanResult);
                }
                core.focus = Focus::Ret(Value::Real(result));
            }
        }
        Frame::SampleArgs { node, next, mut done, env } => {
            done.push(real_arg(&value)?);
            let Term::Sample { dist, args } = &*node else { unreachable!() };
            if next < args.len() {
                let arg = args[next].clone();
                core.stack.push(Frame::SampleArgs {
                    node: node.clone(),
                    next: next + 1,
                    done,
                    env: env.clone(),
                });
                core.focus = Focus::Eval(arg, env);
            } else {
                dist::validate_params(*dist, &done)
                    .map_err(|_| StuckReason::InvalidDistParams)?;
                let u = cursor.draw()?;
                let x = dist::inv_cdf(*dist, &done, u);
                if x.is_nan() {
                    return Err(StuckReason::NanResult);
                }
                core.focus = Focus::Ret(Value::Real(x));
            }
        }
        Frame::WeightArg => {
            let c = value.as_real().ok_or(StuckReason::WeightNotReal)?;
            if c.is_nan() {
                return Err(StuckReason::NanResult);
            }
            if c < 0.0 {
                return Err(StuckReason::NegativeWeight);
            }
            if c == f64::INFINITY {
                return Err(StuckReason::InfiniteWeight);
            }
            if c == 0.0 && opts.kill_zero {
                return Err(StuckReason::ZeroWeightKilled);
            }
            core.log_weight += c.ln();
            core.focus = Focus::Ret(Value::unit());
        }
        Frame::ListItems { node, next, mut done, env } => {
            done.push(value);
            let Term::ListLit(items) = &*node else { unreachable!() };
            if next < items.len() {
                let item = items[next].clone();
                core.stack.push(Frame::ListItems {
                    node: node.clone(),
                    next: next + 1,
                    done,
                    env: env.clone(),
                });
                core.focus = Focus::Eval(item, env);
            } else {
                core.focus = Focus::Ret(Value::List(Arc::new(done)));
            }
        }
        Frame::RecordFields { node, next, mut done, env } => {
            let Term::RecordLit(fields) = &*node else { unreachable!() };
            done.push((fields[next - 1].0.clone(), value));
            if next < fields.len() {
                let field = fields[next].1.clone();
                core.stack.push(Frame::RecordFields {
                    node: node.clone(),
                    next: next + 1,
                    done,
                    env: env.clone(),
                });
                core.focus = Focus::Eval(field, env);
            } else {
                core.focus =
                    Focus::Ret(Value::Record(Arc::new(done.into_iter().collect())));
            }
        }
        Frame::ProjField { field } => match value {
            Value::Record(map) => match map.get(&field) {
                Some(v) => core.focus = Focus::Ret(v.clone()),
                None => return Err(StuckReason::MissingField),
            },
            _ => return Err(StuckReason::ProjNonRecord),
        },
        Frame::MatchScrut { node, env } => {
            let Term::Match { arms, .. } = &*node else { unreachable!() };
            let Some((arm, bound)) = arms.iter().find_map(|arm| {
                match_pattern(&arm.pattern, &value, &env).map(|env| (arm, env))
            }) else {
                return Err(StuckReason::MatchFailure);
            };
            core.focus = Focus::Eval(arm.body.clone(), bound);
        }
    }
    Ok(Step::Continue)
}

fn real_arg(value: &Value) -> Result<f64, StuckReason> {
    let x = value.as_real().ok_or(StuckReason::PrimArgType)?;
    if x.is_nan() {
        Err(StuckReason::NanResult)
    } else {
        Ok(x)
    }
}

/// First-match-wins pattern matching; returns the extended environment.
fn match_pattern(pattern: &Pattern, value: &Value, env: &Env) -> Option<Env> {
    match pattern {
        Pattern::Record(fields) => {
            let Value::Record(map) = value else { return None };
            let mut env = env.clone();
            for f in fields {
                env = env.bind(f.clone(), map.get(f)?.clone());
            }
            Some(env)
        }
        Pattern::EmptyList => match value {
            Value::List(items) if items.is_empty() => Some(env.clone()),
            _ => None,
        },
        Pattern::Cons(head, tail) => {
            let Value::List(items) = value else { return None };
            let (first, rest) = items.split_first()?;
            Some(
                env.bind(head.clone(), first.clone())
                    .bind(tail.clone(), Value::List(Arc::new(rest.to_vec()))),
            )
        }
        Pattern::Wildcard => Some(env.clone()),
        Pattern::Var(name) => Some(env.bind(name.clone(), value.clone())),
    }
}

/// How a replay or recorded run ended.
#[derive(Clone, Debug)]
pub enum Outcome {
    /// Terminated in a value with the trace exactly consumed.
    Value(Value),
    /// Paused at a resample with the trace exactly consumed.
    Paused(Box<MachineCore>),
    /// Anything else; the run denotes (unit, 0).
    Discarded(StuckReason),
}

/// Result of running a term against a trace (or recording one).
#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub outcome: Outcome,
    /// Log weight of the run segment; minus infinity for discarded runs.
    pub log_weight: f64,
    /// Trace entries consumed before stopping.
    pub consumed: usize,
}

impl ReplayOutcome {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    /// The run's result: its value on normal termination, unit otherwise.
    pub fn result_value(&self) -> Value {
        match &self.outcome {
            Outcome::Value(v) => v.clone(),
            _ => Value::unit(),
        }
    }

    pub fn is_discarded(&self) -> bool {
        matches!(self.outcome, Outcome::Discarded(_))
    }
}

/// Run `term` on `trace` with resample as a no-op: the full semantics.
pub fn replay(term: &TermRef, trace: &[f64]) -> ReplayOutcome {
    replay_with(term, trace, None, DEFAULT_STEP_BUDGET)
}

/// Run `term` on `trace`, pausing after `limit` resamples.
pub fn replay_limited(term: &TermRef, trace: &[f64], limit: u64) -> ReplayOutcome {
    replay_with(term, trace, Some(limit), DEFAULT_STEP_BUDGET)
}

pub fn replay_with(
    term: &TermRef,
    trace: &[f64],
    resample_limit: Option<u64>,
    step_budget: u64,
) -> ReplayOutcome {
    let mut core = MachineCore::new(term.clone());
    let mut cursor = Cursor::replay(trace);
    let opts = RunOpts { resample_limit, step_budget, kill_zero: false };
    let stop = run(&mut core, &mut cursor, &opts);
    classify(core, stop, &cursor)
}

/// Resume a paused state against a fresh trace segment, crossing exactly
/// one resample. Weight and step count start from zero, so the outcome
/// carries the segment's own weight.
pub fn resume_replay(paused: &MachineCore, segment: &[f64]) -> ReplayOutcome {
    resume_replay_with(paused, segment, DEFAULT_STEP_BUDGET)
}

pub fn resume_replay_with(
    paused: &MachineCore,
    segment: &[f64],
    step_budget: u64,
) -> ReplayOutcome {
    let mut core = paused.clone();
    core.log_weight = 0.0;
    core.steps = 0;
    let mut cursor = Cursor::replay(segment);
    let opts = RunOpts { resample_limit: Some(1), step_budget, kill_zero: false };
    let stop = run(&mut core, &mut cursor, &opts);
    classify(core, stop, &cursor)
}

/// Record a run with fresh randomness, returning the outcome and the
/// trace it drew.
pub fn record(term: &TermRef, rng: RngStream) -> (ReplayOutcome, Vec<f64>) {
    record_with(term, rng, None, DEFAULT_STEP_BUDGET)
}

pub fn record_with(
    term: &TermRef,
    rng: RngStream,
    resample_limit: Option<u64>,
    step_budget: u64,
) -> (ReplayOutcome, Vec<f64>) {
    let mut core = MachineCore::new(term.clone());
    let mut cursor = Cursor::record(rng);
    let opts = RunOpts { resample_limit, step_budget, kill_zero: false };
    let stop = run(&mut core, &mut cursor, &opts);
    let outcome = classify(core, stop, &cursor);
    (outcome, cursor.into_draws())
}

/// Is the trace feasible for the term (weights ignored)?
pub fn feasible(term: &TermRef, trace: &[f64]) -> bool {
    !replay(term, trace).is_discarded()
}

/// Feasibility under a resample limit.
pub fn feasible_limited(term: &TermRef, trace: &[f64], limit: u64) -> bool {
    !replay_limited(term, trace, limit).is_discarded()
}

fn classify(core: MachineCore, stop: StopState, cursor: &Cursor) -> ReplayOutcome {
    let consumed = cursor.consumed();
    let discarded = |reason| ReplayOutcome {
        outcome: Outcome::Discarded(reason),
        log_weight: f64::NEG_INFINITY,
        consumed,
    };
    match stop {
        StopState::Value(v) => {
            if cursor.fully_consumed() {
                ReplayOutcome {
                    log_weight: core.log_weight,
                    outcome: Outcome::Value(v),
                    consumed,
                }
            } else {
                discarded(StuckReason::TraceNotConsumed)
            }
        }
        StopState::AtResample => {
            if cursor.fully_consumed() {
                ReplayOutcome {
                    log_weight: core.log_weight,
                    outcome: Outcome::Paused(Box::new(core)),
                    consumed,
                }
            } else {
                discarded(StuckReason::TraceNotConsumed)
            }
        }
        StopState::Stuck(reason) => discarded(reason),
    }
}
