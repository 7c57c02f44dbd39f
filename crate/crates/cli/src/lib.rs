//! Commands behind the `shir` binary. Each command writes its normal output
//! to `out`, diagnostics to `err`, and returns the process exit status.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use shir_core::concrete::{gamma_member, interpret, GammaError, GammaOptions, PointFilter};
use shir_core::fixpoint::{analyze_program, AnalysisConfig, ProgramResult};
use shir_core::precision::compare;
use shir_core::transfer::Fault;
use shir_core::{AbstractHeap, Ctx, Program, ProgramPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    AnalysisError = 1,
    InputError = 2,
    Unsound = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

pub const DEFAULT_STEPS: u64 = 100_000;

#[derive(Debug, Parser)]
#[command(name = "shir", version, about = "Storage-shape-graph heap analyzer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print normal-form abstract heaps at program points.
    Analyze(AnalyzeArgs),
    /// Run the interpreter and dump concrete heaps.
    Run(RunArgs),
    /// Score the analysis against heaps observed at run time.
    Compare(CompareArgs),
    /// Check every observed heap against the analysis result.
    Soundness(SoundnessArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub file: PathBuf,
    /// `method:block:index`; defaults to the returns of main.
    #[arg(long = "point")]
    pub points: Vec<ProgramPoint>,
    /// Write Graphviz output here; with several points the point name is
    /// added before the extension.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Write the printed heaps here as well.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step budget.
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: u64,
    #[arg(long = "point")]
    pub points: Vec<ProgramPoint>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub file: PathBuf,
    /// Runs with seeds `0..n`.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long = "point")]
    pub points: Vec<ProgramPoint>,
    /// Also write one JSON record per point here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SoundnessArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, hide = true)]
    pub inject_fault: Option<Fault>,
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let r = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, out, err),
        Command::Run(a) => cmd_run(a, out, err),
        Command::Compare(a) => cmd_compare(a, out, err),
        Command::Soundness(a) => cmd_soundness(a, out, err),
    };
    r.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e:#}");
        ExitStatus::AnalysisError
    })
}

type CmdResult = anyhow::Result<ExitStatus>;

fn load(file: &Path, err: &mut dyn Write) -> anyhow::Result<Option<Program>> {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            writeln!(err, "error: cannot read {}: {e}", file.display())?;
            return Ok(None);
        }
    };
    match Program::load(&text) {
        Ok(p) => Ok(Some(p)),
        Err(e) => {
            writeln!(err, "{}: {e}", file.display())?;
            Ok(None)
        }
    }
}

fn analyze(ctx: &Ctx, fault: Option<Fault>, err: &mut dyn Write) -> anyhow::Result<Option<ProgramResult>> {
    let mut config = match AnalysisConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            writeln!(err, "error: {e}")?;
            return Ok(None);
        }
    };
    config.fault = fault;
    match analyze_program(ctx, &config) {
        Ok(r) => Ok(Some(r)),
        Err(e) => {
            writeln!(err, "analysis failed: {e}")?;
            Ok(None)
        }
    }
}

fn filter(points: &[ProgramPoint]) -> PointFilter {
    if points.is_empty() {
        PointFilter::All
    } else {
        PointFilter::Only(points.iter().cloned().collect())
    }
}

fn dot_path(base: &Path, point: &str, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tag = point.replace(':', "_");
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    base.with_file_name(name)
}

pub fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let Some(program) = load(&a.file, err)? else {
        return Ok(ExitStatus::InputError);
    };
    let ctx = Ctx::new(&program);
    let Some(result) = analyze(&ctx, None, err)? else {
        return Ok(ExitStatus::AnalysisError);
    };
    let mut heaps: Vec<(String, AbstractHeap)> = Vec::new();
    let mut status = ExitStatus::Success;
    if a.points.is_empty() {
        match result.state_before_exit(&ctx, &program.main) {
            Some(h) => heaps.push((format!("{} exit", program.main), h)),
            None => {
                writeln!(err, "{} never returns", program.main)?;
                status = ExitStatus::AnalysisError;
            }
        }
    }
    for p in &a.points {
        let m = program.method(&p.method);
        let valid = m
            .and_then(|m| m.block(&p.block))
            .is_some_and(|b| p.index < b.stmts.len());
        if !valid {
            writeln!(err, "no statement at {p}")?;
            return Ok(ExitStatus::InputError);
        }
        match result.state_at(p) {
            Some(h) => heaps.push((p.to_string(), h.clone())),
            None => {
                writeln!(err, "{p} is unreachable")?;
                status = ExitStatus::AnalysisError;
            }
        }
    }
    let mut text = String::new();
    for (name, h) in &heaps {
        text.push_str(&format!("== {name} ==\n{}", h.canonical_text(&program)));
    }
    out.write_all(text.as_bytes())?;
    if let Some(path) = &a.dump {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(base) = &a.dot {
        for (name, h) in &heaps {
            let path = dot_path(base, name, heaps.len() > 1);
            std::fs::write(&path, h.to_dot(&program)).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(status)
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let Some(program) = load(&a.file, err)? else {
        return Ok(ExitStatus::InputError);
    };
    let run = interpret(&program, a.seed, a.steps, &filter(&a.points));
    for s in &run.snapshots {
        write!(out, "== {} ==\n{}", s.point, s.heap.dump(&program))?;
    }
    if let Some(e) = &run.error {
        writeln!(err, "runtime error at {e}")?;
        return Ok(ExitStatus::AnalysisError);
    }
    writeln!(err, "halted after {} steps", run.steps)?;
    Ok(ExitStatus::Success)
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    if a.seeds == 0 {
        writeln!(err, "error: --seeds must be at least 1")?;
        return Ok(ExitStatus::InputError);
    }
    let Some(program) = load(&a.file, err)? else {
        return Ok(ExitStatus::InputError);
    };
    let ctx = Ctx::new(&program);
    let Some(result) = analyze(&ctx, None, err)? else {
        return Ok(ExitStatus::AnalysisError);
    };
    let points = filter(&a.points);
    let runs: Vec<_> = (0..a.seeds)
        .map(|seed| interpret(&program, seed, DEFAULT_STEPS, &points))
        .collect();
    let mut status = ExitStatus::Success;
    for (seed, r) in runs.iter().enumerate() {
        if let Some(e) = &r.error {
            writeln!(err, "seed {seed}: runtime error at {e}")?;
            status = ExitStatus::AnalysisError;
        }
    }
    let name = a.file.display().to_string();
    let report = compare(&ctx, &name, &result, &runs);
    for p in &report.missing {
        writeln!(err, "{p}: reached at run time but not by the analysis")?;
        status = ExitStatus::AnalysisError;
    }
    out.write_all(report.to_tsv().as_bytes())?;
    if let Some(path) = &a.report {
        let mut text = String::new();
        let header = serde_json::json!({
            "program": report.program,
            "seeds": report.seeds,
            "summary": report.summary,
        });
        text.push_str(&serde_json::to_string(&header)?);
        text.push('\n');
        for p in &report.points {
            text.push_str(&serde_json::to_string(p)?);
            text.push('\n');
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(status)
}

/// First failing `(seed, point)` of a sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub seed: u64,
    pub point: ProgramPoint,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sweep {
    pub checked: usize,
    pub failures: usize,
    pub inconclusive: usize,
    /// Lowest seed with a failure, and its earliest failing point.
    pub first: Option<Violation>,
    pub runtime_errors: Vec<String>,
}

/// Checks every snapshot of seeds `0..seeds` against the analysis result.
pub fn soundness_sweep(program: &Program, result: &ProgramResult, seeds: u64) -> Sweep {
    let mut s = Sweep::default();
    let opts = GammaOptions::default();
    for seed in 0..seeds {
        let run = interpret(program, seed, DEFAULT_STEPS, &PointFilter::All);
        if let Some(e) = &run.error {
            s.runtime_errors.push(format!("seed {seed}: {e}"));
        }
        for snap in &run.snapshots {
            s.checked += 1;
            let reason = match result.state_at(&snap.point) {
                None => Some("no static state".to_string()),
                Some(h) => match gamma_member(&snap.heap, h, &opts) {
                    Ok(_) => None,
                    Err(GammaError::Budget(_)) => {
                        s.inconclusive += 1;
                        None
                    }
                    Err(e) => Some(e.to_string()),
                },
            };
            if let Some(reason) = reason {
                s.failures += 1;
                if s.first.is_none() {
                    s.first = Some(Violation {
                        seed,
                        point: snap.point.clone(),
                        reason,
                    });
                }
            }
        }
    }
    s
}

pub fn cmd_soundness(a: &SoundnessArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let Some(program) = load(&a.file, err)? else {
        return Ok(ExitStatus::InputError);
    };
    let ctx = Ctx::new(&program);
    let Some(result) = analyze(&ctx, a.inject_fault, err)? else {
        return Ok(ExitStatus::AnalysisError);
    };
    let sweep = soundness_sweep(&program, &result, a.seeds);
    for e in &sweep.runtime_errors {
        writeln!(err, "warning: {e}")?;
    }
    if sweep.checked == 0 {
        writeln!(err, "warning: no snapshots to check")?;
    }
    if let Some(v) = &sweep.first {
        writeln!(
            out,
            "unsound: {} of {} snapshots fail; first at {} with seed {}: {}",
            sweep.failures, sweep.checked, v.point, v.seed, v.reason
        )?;
        return Ok(ExitStatus::Unsound);
    }
    if sweep.inconclusive > 0 {
        writeln!(
            err,
            "{} of {} snapshots exceeded the embedding search budget",
            sweep.inconclusive, sweep.checked
        )?;
        return Ok(ExitStatus::AnalysisError);
    }
    writeln!(out, "sound: {} snapshots over {} seeds", sweep.checked, a.seeds)?;
    Ok(ExitStatus::Success)
}
