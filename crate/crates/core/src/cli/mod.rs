//! Command implementations behind the `ldjt` binary.
//!
//! Every command writes to the given sinks and returns the process exit
//! code, so the commands can be driven from tests without spawning a
//! process.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::ldjt::{ljt_unrolled, Ldjt, Options, Run};
use crate::lve::{Budget, Ctx};
use crate::model::{parse_model, GroundAtom, Pdm};
use crate::InferenceError;

pub const EXIT_PARSE: i32 = 1;
pub const EXIT_INFERENCE: i32 = 2;
pub const EXIT_IRREDUCIBLE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ldjt", version, about = "Lifted exact inference for parameterised dynamic models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Answer the model's queries at every step up to --max-t
    Infer {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        max_t: u32,
        #[arg(long, value_enum, default_value_t = Algorithm::LdjtExtended)]
        algorithm: Algorithm,
        /// Abort after this many seconds
        #[arg(long)]
        timeout_secs: Option<u64>,
    },
    /// Report detected groundings and the fusions and expansions that remove them
    Check {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Time the algorithms over a list of maximum time steps
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        /// Strictly increasing, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        max_t: Vec<u32>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Algorithm::LdjtExtended, Algorithm::LdjtOriginal, Algorithm::LjtUnrolled])]
        algorithm: Vec<Algorithm>,
        /// Seed for the generated potentials
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Per-row limit; a row over it is reported as a timeout
        #[arg(long, default_value_t = 300)]
        timeout_secs: u64,
        /// Worker threads; 1 runs the rows one after another
        #[arg(long)]
        jobs: Option<usize>,
        /// Write the CSV to this file instead of standard output
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Replace a domain by n generated constants, e.g. X=10
    #[arg(long = "domain", value_parser = parse_domain)]
    pub domains: Vec<(String, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Algorithm {
    LdjtExtended,
    LdjtOriginal,
    LjtUnrolled,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LdjtExtended => "ldjt_extended",
            Algorithm::LdjtOriginal => "ldjt_original",
            Algorithm::LjtUnrolled => "ljt_unrolled",
        }
    }

    /// Runs steps `0..=t_max`, including the construction of the trees.
    pub fn run(self, pdm: &Pdm, queries: &[GroundAtom], t_max: u32, ctx: &mut Ctx) -> Result<Run, InferenceError> {
        let opts = match self {
            Algorithm::LjtUnrolled => return ljt_unrolled(pdm, queries, t_max, true, ctx),
            Algorithm::LdjtExtended => Options::default(),
            Algorithm::LdjtOriginal => Options { fusion: true, expanding: false },
        };
        Ldjt::new(pdm, opts)?.run(pdm, queries, t_max, ctx)
    }
}

fn parse_domain(s: &str) -> Result<(String, usize), String> {
    let (name, n) = s.split_once('=').ok_or_else(|| format!("expected LOGVAR=SIZE, got `{s}`"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("invalid domain size in `{s}`"))?;
    Ok((name.trim().to_string(), n))
}

/// Formats like C's `%.12g`.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (m, e) = s.split_once('e').unwrap();
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    }
}

fn load(args: &ModelArgs) -> Result<Pdm, String> {
    let text = std::fs::read_to_string(&args.model).map_err(|e| format!("{}: {e}", args.model.display()))?;
    let mut pdm = parse_model(&text).map_err(|e| format!("{}:{e}", args.model.display()))?;
    for (name, n) in &args.domains {
        pdm.override_domain(name, *n).map_err(|e| e.to_string())?;
    }
    Ok(pdm)
}

fn budget(secs: Option<u64>) -> Budget {
    Budget { deadline: secs.map(|s| Instant::now() + Duration::from_secs(s)), ..Budget::default() }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, out, err),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            code
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let r = match &cli.command {
        Command::Infer { model, max_t, algorithm, timeout_secs } => {
            infer(model, *max_t, *algorithm, *timeout_secs, out)
        }
        Command::Check { model } => check(model, out),
        Command::Bench { model, max_t, algorithm, seed, reps, timeout_secs, jobs, csv } => {
            let config = BenchConfig {
                max_t: max_t.clone(),
                algorithms: algorithm.clone(),
                seed: *seed,
                reps: *reps,
                timeout: Duration::from_secs(*timeout_secs),
            };
            bench(model, &config, *jobs, csv.as_deref(), out)
        }
    };
    match r {
        Ok(code) => code,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

type CmdResult = Result<i32, (i32, String)>;

fn parse_failure(msg: String) -> (i32, String) {
    (EXIT_PARSE, msg)
}

fn io_failure(e: std::io::Error) -> (i32, String) {
    (EXIT_INFERENCE, e.to_string())
}

fn infer(args: &ModelArgs, max_t: u32, algorithm: Algorithm, timeout: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let pdm = load(args).map_err(parse_failure)?;
    let mut ctx = Ctx::new(budget(timeout));
    let run = algorithm.run(&pdm, &pdm.queries, max_t, &mut ctx).map_err(|e| (EXIT_INFERENCE, e.to_string()))?;
    for s in &run.steps {
        for (q, p) in pdm.queries.iter().zip(&s.answers) {
            let ps: Vec<String> = p.iter().map(|&x| sig12(x)).collect();
            writeln!(out, "t={} P({}) = {}", s.t, pdm.vocab.atom_label(q), ps.join(" ")).map_err(io_failure)?;
        }
    }
    Ok(0)
}

fn check(args: &ModelArgs, out: &mut dyn Write) -> CmdResult {
    let pdm = load(args).map_err(parse_failure)?;
    let l = Ldjt::new(&pdm, Options::default()).map_err(|e| (EXIT_INFERENCE, e.to_string()))?;
    out.write_all(l.report.render(&pdm.vocab).as_bytes()).map_err(io_failure)?;
    writeln!(out, "note: crv-propagate takes g^S as the product of every input holding S at the receiving parcluster")
        .map_err(io_failure)?;
    Ok(if l.report.irreducible.is_empty() { 0 } else { EXIT_IRREDUCIBLE })
}

/// One benchmark sweep.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub max_t: Vec<u32>,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub reps: u32,
    pub timeout: Duration,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_t.is_empty() || self.max_t.windows(2).any(|w| w[0] >= w[1]) {
            return Err("--max-t must be a strictly increasing list".into());
        }
        if self.reps == 0 {
            return Err("--reps must be at least 1".into());
        }
        Ok(())
    }
}

/// Result of one benchmark row; `seconds` is `None` after a timeout.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub algorithm: Algorithm,
    pub max_t: u32,
    pub rep: u32,
    pub seconds: Option<f64>,
    pub grounding_events: usize,
}

impl Row {
    pub fn csv(&self) -> String {
        let secs = self.seconds.map_or_else(|| "timeout".to_string(), |s| format!("{s:.6}"));
        format!("{},{},{},{},{}", self.algorithm.name(), self.max_t, self.rep, secs, self.grounding_events)
    }
}

pub const CSV_HEADER: &str = "algorithm,max_t,rep,seconds,grounding_events";

/// Runs one row: potentials drawn from `seed + rep`, evidence cleared,
/// timing from tree construction to the last step.
pub fn bench_row(
    pdm: &Pdm,
    algorithm: Algorithm,
    max_t: u32,
    rep: u32,
    seed: u64,
    timeout: Duration,
) -> Result<Row, InferenceError> {
    let mut pdm = pdm.clone();
    pdm.evidence = Default::default();
    pdm.randomize_potentials(seed.wrapping_add(rep as u64));
    let mut ctx = Ctx::new(Budget { deadline: Some(Instant::now() + timeout), ..Budget::default() });
    let clock = Instant::now();
    let r = algorithm.run(&pdm, &pdm.queries, max_t, &mut ctx);
    let seconds = clock.elapsed().as_secs_f64();
    match r {
        Ok(run) => Ok(Row { algorithm, max_t, rep, seconds: Some(seconds), grounding_events: run.grounding_events }),
        Err(InferenceError::Timeout) => {
            Ok(Row { algorithm, max_t, rep, seconds: None, grounding_events: ctx.counter.events })
        }
        Err(e) => Err(e),
    }
}

/// All rows of a sweep, ordered by algorithm, max_t and repetition.
pub fn bench_rows(pdm: &Pdm, config: &BenchConfig, jobs: Option<usize>) -> Result<Vec<Row>, InferenceError> {
    let mut cells = Vec::new();
    for &a in &config.algorithms {
        for &t in &config.max_t {
            for rep in 0..config.reps {
                cells.push((a, t, rep));
            }
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| InferenceError::Internal(e.to_string()))?;
    pool.install(|| {
        cells.par_iter().map(|&(a, t, rep)| bench_row(pdm, a, t, rep, config.seed, config.timeout)).collect()
    })
}

fn bench(
    args: &ModelArgs,
    config: &BenchConfig,
    jobs: Option<usize>,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let pdm = load(args).map_err(parse_failure)?;
    config.validate().map_err(parse_failure)?;
    let rows = bench_rows(&pdm, config, jobs).map_err(|e| (EXIT_INFERENCE, e.to_string()))?;
    let mut text = format!("{CSV_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    match csv {
        Some(path) => std::fs::write(path, text).map_err(io_failure)?,
        None => out.write_all(text.as_bytes()).map_err(io_failure)?,
    }
    Ok(0)
}
