//! Command-line front end: run the particle filter on a program, compare
//! resample placements, or run the acceptance gate.
//!
//! Exit codes: 0 success, 1 a criterion or comparison failed, 2 usage,
//! parse, or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use ppl_core::ast::{self, PlacementSpec, TermRef};
use ppl_core::corpus;
use ppl_core::desugar::compile;
use ppl_core::oracle;
use ppl_core::smc::{run_smc, Resampling, SmcConfig, SmcResult, Termination};
use ppl_core::value::Value;

#[derive(Parser)]
#[command(name = "ppl", version, about = "Trace-based probabilistic programs with SMC inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bootstrap particle filter on a model
    Run(RunArgs),
    /// Run the filter under each resample placement in a spec file
    Placements(PlacementsArgs),
    /// Run the acceptance criteria
    Accept(AcceptArgs),
    /// List the bundled models
    Models,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ResamplingArg {
    Multinomial,
    Systematic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct EngineArgs {
    /// Particle count J
    #[arg(short = 'J', long, default_value_t = 10_000)]
    particles: usize,
    /// PRNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Selection scheme
    #[arg(long, value_enum, default_value_t = ResamplingArg::Multinomial)]
    resampling: ResamplingArg,
    /// Mutation rounds before unfinished particles are given up on
    #[arg(long, default_value_t = 10_000)]
    max_rounds: u64,
    /// Machine steps allowed per segment
    #[arg(long, default_value_t = 10_000_000)]
    step_budget: u64,
    /// Let zero-weight runs finish instead of killing them early
    #[arg(long)]
    no_kill_zero: bool,
    /// Worker threads for the mutation step (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl EngineArgs {
    fn config(&self, seed: u64) -> SmcConfig {
        SmcConfig {
            particles: self.particles,
            seed,
            resampling: match self.resampling {
                ResamplingArg::Multinomial => Resampling::Multinomial,
                ResamplingArg::Systematic => Resampling::Systematic,
            },
            max_rounds: self.max_rounds,
            step_budget: self.step_budget,
            kill_zero_weight: !self.no_kill_zero,
            threads: self.threads,
        }
    }

    fn config_json(&self, seed: u64) -> serde_json::Value {
        let cfg = self.config(seed);
        json!({
            "particles": cfg.particles,
            "seed": cfg.seed,
            "resampling": match cfg.resampling {
                Resampling::Multinomial => "multinomial",
                Resampling::Systematic => "systematic",
            },
            "max_rounds": cfg.max_rounds,
            "step_budget": cfg.step_budget,
            "kill_zero_weight": cfg.kill_zero_weight,
            "threads": cfg.threads,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Bundled model name or path to a .ppl source file
    model: String,
    #[command(flatten)]
    engine: EngineArgs,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report to a file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlacementsArgs {
    /// Bundled model name or path to a .ppl source file
    model: String,
    /// JSON spec: {"placements": [{"name": ..., "after_weights": [..]}
    /// or {"name": ..., "paths": [[..]]}], "replicates": N}
    #[arg(long)]
    spec: PathBuf,
    /// Replicates per placement (overrides the spec file)
    #[arg(long)]
    replicates: Option<u64>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Write the report to a file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AcceptArgs {
    /// Run a single criterion by name
    #[arg(long)]
    only: Option<String>,
    /// List criterion names without running anything
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Placements(args) => cmd_placements(args),
        Command::Accept(args) => return cmd_accept(args),
        Command::Models => cmd_models(),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_model(model: &str) -> Result<(String, TermRef)> {
    if let Some(src) = corpus::source(model) {
        let term = compile(src).expect("bundled programs compile");
        return Ok((model.to_string(), term));
    }
    let path = PathBuf::from(model);
    if !path.exists() {
        bail!(
            "`{model}` is neither a bundled model nor an existing file; \
             run `ppl models` for the bundled list"
        );
    }
    let src = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let term = compile(&src).map_err(|e| anyhow::anyhow!("parsing {model}: {e}"))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| model.to_string());
    Ok((name, term))
}

fn json_f64(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x)
        .map(serde_json::Value::Number)
        .unwrap_or_else(|| json!(format!("{x}")))
}

fn value_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Real(x) => json_f64(*x),
        Value::List(items) => items.iter().map(value_json).collect(),
        Value::Record(fields) => serde_json::Value::Object(
            fields.iter().map(|(k, v)| (k.to_string(), value_json(v))).collect(),
        ),
        Value::Closure(_) => json!("<closure>"),
    }
}

fn termination_str(t: Termination) -> &'static str {
    match t {
        Termination::AllValues => "all-values",
        Termination::AllDead => "all-dead",
        Termination::RoundCap => "round-cap",
    }
}

fn posterior_json(result: &SmcResult) -> serde_json::Value {
    let all_real = result.posterior.iter().all(|(v, _)| matches!(v, Value::Real(_)));
    if all_real {
        result
            .real_pmf()
            .into_iter()
            .map(|(v, w)| json!({"value": json_f64(v), "weight": json_f64(w)}))
            .collect()
    } else {
        result
            .posterior
            .iter()
            .map(|(v, w)| json!({"value": value_json(v), "weight": json_f64(*w)}))
            .collect()
    }
}

/// Print a line to stdout, exiting quietly if the consumer closed the pipe
/// (e.g. `ppl run m | head`). `println!` would panic instead.
fn emit(text: &str) {
    use std::io::{ErrorKind, Write};
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => {
            eprintln!("error: writing stdout: {e}");
            std::process::exit(2);
        }
    }
}

fn write_report(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            emit(text);
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (name, term) = load_model(&args.model)?;
    let config = args.engine.config(args.engine.seed);
    let start = Instant::now();
    let result = run_smc(&term, &config);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let text = match args.format {
        Format::Json => {
            let report = json!({
                "model": name,
                "config": args.engine.config_json(args.engine.seed),
                "log_norm_const": json_f64(result.log_norm_const),
                "rounds": result.rounds,
                "termination": termination_str(result.termination),
                "ess_history": result.ess_history.iter().map(|&e| json_f64(e)).collect::<Vec<_>>(),
                "dead_count": result.dead_count,
                "posterior": posterior_json(&result),
                "wall_ms": json_f64(wall_ms),
            });
            serde_json::to_string_pretty(&report)?
        }
        Format::Csv => {
            let mut text = String::new();
            text.push_str(&format!("# model={name}\n"));
            text.push_str(&format!(
                "# particles={} seed={} resampling={:?} max_rounds={} kill_zero_weight={}\n",
                config.particles,
                config.seed,
                config.resampling,
                config.max_rounds,
                config.kill_zero_weight,
            ));
            text.push_str(&format!(
                "# log_norm_const={} rounds={} termination={} dead_count={}\n",
                result.log_norm_const,
                result.rounds,
                termination_str(result.termination),
                result.dead_count,
            ));
            text.push_str("value,weight\n");
            let all_real =
                result.posterior.iter().all(|(v, _)| matches!(v, Value::Real(_)));
            if all_real {
                for (v, w) in result.real_pmf() {
                    text.push_str(&format!("{v},{w}\n"));
                }
            } else {
                for (v, w) in &result.posterior {
                    text.push_str(&format!("{},{w}\n", value_json(v)));
                }
            }
            text
        }
    };
    write_report(args.output.as_ref(), &text)
}

#[derive(Deserialize)]
struct PlacementFile {
    placements: Vec<PlacementEntry>,
    replicates: Option<u64>,
}

#[derive(Deserialize)]
struct PlacementEntry {
    name: String,
    #[serde(default)]
    after_weights: Option<Vec<usize>>,
    #[serde(default)]
    paths: Option<Vec<Vec<usize>>>,
}

fn resolve_placement(term: &TermRef, entry: &PlacementEntry) -> Result<TermRef> {
    let paths = match (&entry.after_weights, &entry.paths) {
        (Some(sites), None) => ast::after_weight_paths(term, sites)
            .map_err(|e| anyhow::anyhow!("placement `{}`: {e}", entry.name))?,
        (None, Some(paths)) => paths.clone(),
        (None, None) => Vec::new(),
        (Some(_), Some(_)) => {
            bail!("placement `{}` sets both after_weights and paths", entry.name)
        }
    };
    ast::insert_resamples(term, &PlacementSpec { paths })
        .map_err(|e| anyhow::anyhow!("placement `{}`: {e}", entry.name))
}

fn cmd_placements(args: PlacementsArgs) -> Result<()> {
    let (name, term) = load_model(&args.model)?;
    let spec_text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: PlacementFile = serde_json::from_str(&spec_text)
        .with_context(|| format!("parsing {}", args.spec.display()))?;
    if spec.placements.is_empty() {
        bail!("spec lists no placements");
    }
    let replicates = args.replicates.or(spec.replicates).unwrap_or(1).max(1);

    let mut rows = Vec::new();
    for entry in &spec.placements {
        let placed = resolve_placement(&term, entry)?;
        let resamples = ast::count_resamples(&placed);
        let mut log_zs = Vec::new();
        let mut rounds = Vec::new();
        let mut walls = Vec::new();
        let mut runs = Vec::new();
        for rep in 0..replicates {
            let seed = args.engine.seed.wrapping_add(rep);
            let config = args.engine.config(seed);
            let start = Instant::now();
            let result = run_smc(&placed, &config);
            let wall = start.elapsed().as_secs_f64() * 1e3;
            log_zs.push(result.log_norm_const);
            rounds.push(result.rounds as f64);
            walls.push(wall);
            runs.push(json!({
                "seed": seed,
                "log_norm_const": json_f64(result.log_norm_const),
                "rounds": result.rounds,
                "termination": termination_str(result.termination),
                "wall_ms": json_f64(wall),
            }));
        }
        let (mean, se) = if log_zs.len() > 1 {
            oracle::mean_and_se(&log_zs)
        } else {
            (log_zs[0], 0.0)
        };
        walls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(json!({
            "name": entry.name,
            "resamples": resamples,
            "log_norm_const_mean": json_f64(mean),
            "log_norm_const_se": json_f64(se),
            "mean_rounds": json_f64(rounds.iter().sum::<f64>() / rounds.len() as f64),
            "wall_ms_median": json_f64(walls[walls.len() / 2]),
            "runs": runs,
        }));
    }

    let report = json!({
        "model": name,
        "replicates": replicates,
        "config": args.engine.config_json(args.engine.seed),
        "placements": rows,
    });
    write_report(args.output.as_ref(), &serde_json::to_string_pretty(&report)?)
}

fn cmd_accept(args: AcceptArgs) -> ExitCode {
    use ppl_core::accept;

    if args.list {
        for (name, _) in accept::CRITERIA {
            emit(name);
        }
        return ExitCode::SUCCESS;
    }

    let outcomes = match &args.only {
        Some(wanted) => match accept::CRITERIA.iter().find(|(name, _)| name == wanted) {
            Some((_, run)) => vec![run()],
            None => {
                eprintln!("error: no criterion named `{wanted}`; try `ppl accept --list`");
                return ExitCode::from(2);
            }
        },
        None => accept::all_criteria(),
    };

    let mut passed = 0;
    for outcome in &outcomes {
        emit(&outcome.report_line());
        if outcome.passed {
            passed += 1;
        }
    }
    emit(&format!("acceptance: {passed}/{} criteria passed", outcomes.len()));
    if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_models() -> Result<()> {
    for (name, src) in corpus::PROGRAMS {
        let first_line = src
            .lines()
            .next()
            .unwrap_or("")
            .trim_start_matches('/')
            .trim();
        emit(&format!("{name:20} {first_line}"));
    }
    Ok(())
}
