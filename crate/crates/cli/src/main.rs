use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use mfo_core::error::Error;
use mfo_core::lr_schedules::{round_boundaries, CyclePlan, LrSchedule, ScheduleKind};
use mfo_core::runner::{
    logged_config, resume, run_in_dir, write_atomic, ExperimentConfig, ExperimentResult, RunOptions, Summary,
    EVENTS_FILE,
};

/// Multi-fidelity hyperparameter optimization with recurring learning-rate
/// schedules.
#[derive(Parser)]
#[command(name = "mfo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write summary.json, records.jsonl and trajectory.csv.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to the config's `output` field.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for round work (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue an interrupted run from the event log in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Run several labelled experiments and merge their trajectories.
    Compare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Dump the (global_step, lr) curve of a schedule over the full horizon.
    Curves {
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 3)]
        eta: usize,
        #[arg(long, default_value_t = 0)]
        smin: u32,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 1)]
        steps_per_epoch: usize,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print a summary.json (or the one inside a run directory).
    Inspect { path: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let level = std::env::var("MFO_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new().parse_filters(&level).init();

    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed,
            resume,
        } => cmd_run(config.as_deref(), out, workers, seed, resume),
        Command::Compare { spec, out, workers } => cmd_compare(&spec, out, workers),
        Command::Curves {
            schedule,
            r,
            eta,
            smin,
            lr,
            steps_per_epoch,
            out,
        } => cmd_curves(&schedule, r, eta, smin, lr, steps_per_epoch, out.as_deref()),
        Command::Inspect { path } => cmd_inspect(&path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn write_outputs(dir: &Path, result: &ExperimentResult) -> CliResult {
    let summary = serde_json::to_string_pretty(&result.summary()).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_atomic(&dir.join("summary.json"), format!("{summary}\n").as_bytes())?;
    write_atomic(&dir.join("records.jsonl"), result.records_jsonl()?.as_bytes())?;
    write_atomic(&dir.join("trajectory.csv"), result.trajectory_csv().as_bytes())?;
    Ok(())
}

/// Runs `cfg` in `dir`, or resumes it when the directory already holds a log
/// for the same config.
fn run_or_resume(cfg: &ExperimentConfig, dir: &Path, opts: &RunOptions) -> CliResult<ExperimentResult> {
    if dir.join(EVENTS_FILE).exists() {
        let logged = logged_config(dir)?;
        if &logged != cfg {
            return Err(Failure::Config(format!(
                "{} holds a log for a different config; choose another output directory",
                dir.display()
            )));
        }
        log::info!("resuming {}", dir.display());
        return Ok(resume(dir, opts)?);
    }
    Ok(run_in_dir(cfg, dir, opts)?)
}

fn cmd_run(config: Option<&Path>, out: Option<PathBuf>, workers: usize, seed: Option<u64>, resume_flag: bool) -> CliResult {
    let opts = RunOptions::workers(workers);
    if resume_flag {
        let dir = out.ok_or_else(|| Failure::Config("--resume needs --out".into()))?;
        if !dir.join(EVENTS_FILE).exists() {
            return Err(Failure::Config(format!("no event log in {}", dir.display())));
        }
        let result = resume(&dir, &opts)?;
        return write_outputs(&dir, &result);
    }
    let path = config.ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.base_seed = seed;
    }
    let dir = out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `output` in the config".into()))?;
    cfg.output = None;
    log::info!("running {} into {}", path.display(), dir.display());
    let result = run_in_dir(&cfg, &dir, &opts)?;
    write_outputs(&dir, &result)?;
    println!(
        "best metric {:.4} (mean {:.4} over {} repetitions), outputs in {}",
        result.summary().best_metric,
        result.mean_best,
        result.repetitions.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareSpec {
    /// Applied to every entry so all methods see the same seeds.
    base_seed: Option<u64>,
    #[serde(default)]
    output: Option<PathBuf>,
    methods: Vec<CompareEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareEntry {
    label: String,
    config: ExperimentConfig,
}

impl CompareSpec {
    fn validate(&self) -> CliResult {
        let Some(first) = self.methods.first() else {
            return Err(Failure::Config("compare spec lists no methods".into()));
        };
        let mut seen = HashSet::new();
        for m in &self.methods {
            if m.label.is_empty() || m.label.contains([',', '/', '\\', '\n']) {
                return Err(Failure::Config(format!("label `{}` must be non-empty without , / or \\", m.label)));
            }
            if !seen.insert(&m.label) {
                return Err(Failure::Config(format!("duplicate label `{}`", m.label)));
            }
            if m.config.scheduler.r != first.config.scheduler.r {
                return Err(Failure::Config(format!(
                    "`{}` uses r = {} but `{}` uses r = {}",
                    m.label, m.config.scheduler.r, first.label, first.config.scheduler.r
                )));
            }
            if m.config.trainer != first.config.trainer {
                return Err(Failure::Config(format!(
                    "`{}` and `{}` use different trainers",
                    m.label, first.label
                )));
            }
            m.config.validate()?;
        }
        Ok(())
    }
}

fn cmd_compare(spec_path: &Path, out: Option<PathBuf>, workers: usize) -> CliResult {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let mut spec: CompareSpec =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("cannot parse compare spec: {e}")))?;
    spec.validate()?;
    let dir = out
        .or_else(|| spec.output.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `output` in the spec".into()))?;

    let opts = RunOptions::workers(workers);
    let mut curves = String::from("label,repetition,consumed_epochs,best_metric\n");
    let mut table = String::from("label,mean,ci_halfwidth\n");
    for entry in &mut spec.methods {
        if let Some(seed) = spec.base_seed {
            entry.config.base_seed = seed;
        }
        entry.config.output = None;
        let run_dir = dir.join(&entry.label);
        log::info!("compare: running `{}`", entry.label);
        let result = run_or_resume(&entry.config, &run_dir, &opts)?;
        write_outputs(&run_dir, &result)?;
        for rep in &result.repetitions {
            for p in &rep.trajectory {
                writeln!(curves, "{},{},{},{}", entry.label, rep.repetition, p.consumed_epochs, p.best_metric).unwrap();
            }
        }
        let ci = result.ci_half_width.map(|c| c.to_string()).unwrap_or_default();
        writeln!(table, "{},{},{}", entry.label, result.mean_best, ci).unwrap();
        match result.ci_half_width {
            Some(c) => println!("{:<24} mean {:.4} ± {c:.4}", entry.label, result.mean_best),
            None => println!("{:<24} mean {:.4}", entry.label, result.mean_best),
        }
    }
    write_atomic(&dir.join("compare.csv"), curves.as_bytes())?;
    write_atomic(&dir.join("compare_summary.csv"), table.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_curves(
    schedule: &str,
    r: usize,
    eta: usize,
    smin: u32,
    lr: f64,
    steps_per_epoch: usize,
    out: Option<&Path>,
) -> CliResult {
    let kind = ScheduleKind::from_name(schedule)?;
    if steps_per_epoch == 0 {
        return Err(Failure::Config("--steps-per-epoch must be positive".into()));
    }
    let schedule = LrSchedule::new(kind, lr)?;
    let mut csv = String::from("global_step,lr\n");
    let mut global = 0usize;
    for b in round_boundaries(eta, smin, r)? {
        let cycle = CyclePlan::for_round(&b, steps_per_epoch, r)?;
        for k in 0..cycle.steps() {
            writeln!(csv, "{global},{}", schedule.lr_at(&cycle, k)?).unwrap();
            global += 1;
        }
    }
    match out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> CliResult {
    let file = if path.is_dir() { path.join("summary.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Failure::Config(format!("cannot read {}: {e}", file.display())))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| io_failure(&file, e))?;
    let ci = summary.ci_half_width.map(|c| format!("± {c:.4}")).unwrap_or_else(|| "(single repetition)".into());
    println!("budget          {} epochs", summary.budget);
    println!("mean best       {:.4} {ci}", summary.mean_best);
    println!("best metric     {:.4}", summary.best_metric);
    println!("best config");
    for (name, value) in &summary.best_config.values {
        println!("  {name:<6} {value:.6e}");
    }
    println!("repetitions");
    println!("  {:>3}  {:>20}  {:>6}  {:>8}  {:>9}", "rep", "seed", "trial", "best", "consumed");
    for r in &summary.repetitions {
        println!(
            "  {:>3}  {:>20}  {:>6}  {:>8.4}  {:>9}",
            r.repetition, r.seed, r.best_trial, r.best_metric, r.consumed
        );
    }
    Ok(())
}
