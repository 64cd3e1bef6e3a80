//! `roughwave`: runs the experiments from a config file and writes
//! checksummed artifacts.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 invalid configuration,
//! 3 numeric failure (including truncated sweeps), 4 self-test failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod config;
mod run;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roughwave::acceptance::{run_criterion, AcceptanceOptions, Criterion, CRITERIA};
use serde::Serialize;

use artifacts::{verify, Artifacts, Manifest, Provenance, MANIFEST};
use config::{ExperimentConfig, Kind};

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Numeric(String),
    SelfTest(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::SelfTest(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::SelfTest(m) => write!(f, "self-test failed: {m}"),
        }
    }
}

impl From<roughwave::Error> for CliError {
    fn from(e: roughwave::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "roughwave", version, about = "Wave observability experiments with rough coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Spatial cells (a power of two).
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Validate the sequence section against the unscaled scale conditions first.
    #[arg(long, global = true)]
    strict_paper: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Forward evolution: traces, energies, optional snapshots.
    Simulate,
    /// Quasimode boundary-smallness sweep over the counterexample levels.
    Quasimode,
    /// Seminorms, dyadic spectrum and regularity class of a coefficient.
    Modulus,
    /// Observability quotients along the counterexample sequence.
    Counterexample,
    /// Observability-constant estimates over mode ensembles.
    Observability,
    /// Boundary control by the Hilbert uniqueness method.
    Control,
    /// Aggregates every manifest under --out into report.json.
    Report,
    /// Runs the acceptance criteria at reduced size.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SelftestArgs {
    /// Corrupt the tolerance of this criterion; the run must then fail.
    #[arg(long)]
    inject: Option<u32>,
    /// Comma-separated criterion ids (default: all).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u32>,
    /// Full-size runs instead of the reduced ones.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("cannot set up {j} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let kind = match &cli.command {
        Command::Simulate => Kind::Simulate,
        Command::Quasimode => Kind::Quasimode,
        Command::Modulus => Kind::Modulus,
        Command::Counterexample => Kind::Counterexample,
        Command::Observability => Kind::Observability,
        Command::Control => Kind::Control,
        Command::Report => return report(&out_dir(cli)),
        Command::Selftest(a) => return selftest(cli, a),
    };
    experiment(cli, kind)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn experiment(cli: &Cli, kind: Kind) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(CliError::Config(format!("config is for `{}`, not `{}`", k.name(), kind.name())));
        }
    }
    cfg.kind = Some(kind);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.resolution {
        cfg.resolution = r;
    }
    cfg.strict_paper |= cli.strict_paper;
    cfg.validate()?;
    run::resolve(&mut cfg, kind)?;

    let provenance = Provenance {
        tool: "roughwave".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: kind.name().into(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
    };
    let dir = out_dir(cli);
    let mut out = Artifacts::create(&dir, provenance)?;
    let result = run::run(kind, &cfg, &mut out);
    if let Err(e) = &result {
        out.note(format!("aborted: {e}"));
    }
    let manifest = out.finish()?;
    let outcome = result?;
    for n in &manifest.notes {
        println!("{n}");
    }
    println!("wrote {} files to {} (config sha256 {})", manifest.files.len(), dir.display(), manifest.provenance.config_sha256);
    match outcome.truncated {
        Some(t) => Err(CliError::Numeric(t)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ReportEntry {
    directory: String,
    manifest: Manifest,
    problems: Vec<String>,
}

#[derive(Serialize)]
struct Report {
    tool: String,
    version: String,
    runs: Vec<ReportEntry>,
}

fn report(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a directory", dir.display())));
    }
    let mut runs = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
        if entry.file_name() != MANIFEST {
            continue;
        }
        let path = entry.path();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let run_dir = path.parent().unwrap_or(dir);
        let problems = verify(run_dir, &manifest);
        let rel = run_dir.strip_prefix(dir).unwrap_or(run_dir);
        runs.push(ReportEntry { directory: rel.display().to_string(), manifest, problems });
    }
    let bad: usize = runs.iter().map(|r| r.problems.len()).sum();
    for r in &runs {
        let dir = if r.directory.is_empty() { "." } else { &r.directory };
        println!("{:<16} {:<40} {} files, {} problems", r.manifest.provenance.kind, dir, r.manifest.files.len(), r.problems.len());
    }
    let rep = Report { tool: "roughwave".into(), version: env!("CARGO_PKG_VERSION").into(), runs };
    let v = serde_json::to_vec_pretty(&rep).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(dir.join("report.json"), v).map_err(|e| CliError::Io(e.to_string()))?;
    if bad > 0 {
        return Err(CliError::Io(format!("{bad} artifact checksum problems")));
    }
    Ok(())
}

fn selftest(cli: &Cli, a: &SelftestArgs) -> Result<(), CliError> {
    let ids: Vec<u32> = if a.criteria.is_empty() { (1..=CRITERIA).collect() } else { a.criteria.clone() };
    if let Some(bad) = ids.iter().chain(&a.inject).find(|i| !(1..=CRITERIA).contains(i)) {
        return Err(CliError::Config(format!("no criterion {bad}; ids run from 1 to {CRITERIA}")));
    }
    let opts = AcceptanceOptions {
        reduced: !a.full,
        seed: cli.seed.unwrap_or(0),
        corrupt: a.inject,
        enforce_runtime: false,
    };
    let results: Vec<Criterion> = ids
        .iter()
        .map(|&id| {
            let c = run_criterion(id, &opts);
            println!("{}", c.line());
            c
        })
        .collect();
    if let Some(dir) = &cli.out {
        let provenance = Provenance {
            tool: "roughwave".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: "selftest".into(),
            config_sha256: hex::encode(<sha2::Sha256 as sha2::Digest>::digest(
                serde_json::to_vec(&opts).expect("options serialize"),
            )),
            seed: opts.seed,
        };
        let mut out = Artifacts::create(dir, provenance)?;
        out.write_json("selftest.json", &results)?;
        out.finish()?;
    }
    let failed: Vec<u32> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    if failed.is_empty() {
        println!("{} criteria passed", results.len());
        Ok(())
    } else {
        Err(CliError::SelfTest(format!("criteria {failed:?} failed")))
    }
}
