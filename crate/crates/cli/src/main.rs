//! `itrack`: validate datasets, synthesize suites, run evaluations, and
//! re-aggregate reports.
//!
//! Exit codes are a stable contract: 0 on success, 1 for domain or
//! validation failures, 2 for I/O and backend-protocol failures.

mod config;
mod logging;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use itrack_core::arbitration::AblationSet;
use itrack_core::dataset::{self, Scenario, Sequence, SynthSpec};
use itrack_core::harness::{
    run_suite, BackendError, EvalPolicy, GrounderSpec, HarnessError, Mode, PromptEffect, SuiteItem,
    TrackerSpec,
};
use itrack_core::metrics::aggregate;
use itrack_core::presets;
use itrack_core::report::{self, load_run_record};
use logging::Log;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_DOMAIN: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(
    name = "itrack",
    version,
    about = "Interactive tracking evaluation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check sequence files against the schema invariants.
    Validate(ValidateArgs),
    /// Generate synthetic sequence files.
    Synth(SynthArgs),
    /// Evaluate a tracker over a dataset and emit reports.
    Eval(EvalArgs),
    /// Re-aggregate stored run records into report bundles.
    Report(ReportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Sequence files or directories of them.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Tolerate unknown fields.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for sequence files.
    #[arg(long)]
    out: PathBuf,
    /// Built-in preset: ablation-suite or smoke.
    #[arg(long)]
    preset: Option<String>,
    /// A synthesis spec file (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Base name for inline-generated sequences.
    #[arg(long, default_value = "synth")]
    name: String,
    /// Scenario label for inline-generated sequences.
    #[arg(long, default_value = "other")]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 120)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    objects: usize,
    /// Pairwise feature similarity between objects, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    similarity: f64,
    /// How many inline-generated sequences to emit.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Config file with key = value lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence file, directory, or `preset:<name>`. Repeatable.
    #[arg(long)]
    dataset: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tracker backend: `synthetic:<name>` or `exec:<command line>`.
    #[arg(long)]
    tracker: Option<String>,
    /// Grounder backend: `synthetic:<name>` or `exec:<command line>`.
    #[arg(long)]
    grounder: Option<String>,
    /// Evaluation mode: gt-reinit, text-forward, first-box-only, imat.
    #[arg(long)]
    mode: Option<String>,
    /// same-frame or next-frame.
    #[arg(long)]
    prompt_effect: Option<String>,
    #[arg(long)]
    tau_init: Option<f64>,
    #[arg(long)]
    tau_reinit: Option<f64>,
    /// Drift trigger as a fraction of the frame diagonal.
    #[arg(long)]
    delta_c: Option<f64>,
    /// Disable a component: no-ipm, no-memory, no-cam, naive-iou. Repeatable.
    #[arg(long)]
    ablation: Vec<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Success comparator >= instead of strict >.
    #[arg(long)]
    inclusive_success: bool,
    /// Require IoU > 0.5 with the new target for a switch to count.
    #[arg(long)]
    require_switch_overlap: bool,
    /// Memory novelty gate epsilon.
    #[arg(long)]
    memory_epsilon: Option<f64>,
    /// Tolerate unknown fields in sequence files.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding run-record JSON files (or an eval output dir).
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// An error carrying its exit class.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn domain(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        // IO-rooted failures keep their class.
        if e.chain()
            .any(|c| c.downcast_ref::<std::io::Error>().is_some())
        {
            CliError::io(format!("{e:#}"))
        } else {
            CliError::domain(format!("{e:#}"))
        }
    }
}

fn harness_error(e: HarnessError) -> CliError {
    match &e {
        HarnessError::Backend(BackendError::Protocol { .. })
        | HarnessError::Backend(BackendError::Spawn(_))
        | HarnessError::Backend(BackendError::Crashed(_)) => CliError::io(e.to_string()),
        _ => CliError::domain(e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Log::from_env();
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(args, &log),
        Command::Synth(args) => cmd_synth(args, &log),
        Command::Eval(args) => cmd_eval(args, &log),
        Command::Report(args) => cmd_report(args, &log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn sequence_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(CliError::io(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

fn cmd_validate(args: ValidateArgs, log: &Log) -> Result<(), CliError> {
    let mut any_invalid = false;
    for root in &args.paths {
        for file in sequence_files(root)? {
            match dataset::load_with(&file, args.lenient) {
                Err(dataset::DatasetError::Io(e)) => {
                    return Err(CliError::io(format!("{}: {e}", file.display())))
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    any_invalid = true;
                }
                Ok(seq) => {
                    let violations = dataset::validate(&seq);
                    if violations.is_empty() {
                        log.debug(&format!("{}: ok", file.display()));
                    } else {
                        for v in violations {
                            eprintln!("{}: {v}", file.display());
                        }
                        any_invalid = true;
                    }
                }
            }
        }
    }
    if any_invalid {
        Err(CliError {
            code: EXIT_DOMAIN,
            message: "validation failed".to_string(),
        })
    } else {
        Ok(())
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, CliError> {
    Scenario::parse(s).ok_or_else(|| {
        CliError::domain(format!(
            "unknown scenario {s:?} (expected one of: {})",
            Scenario::ALL.map(|s| s.as_str()).join(", ")
        ))
    })
}

fn cmd_synth(args: SynthArgs, log: &Log) -> Result<(), CliError> {
    let specs: Vec<SynthSpec> = if let Some(preset) = &args.preset {
        presets::preset_specs(preset, args.seed).ok_or_else(|| {
            CliError::domain(format!(
                "unknown preset {preset:?} (expected one of: {})",
                presets::PRESET_NAMES.join(", ")
            ))
        })?
    } else if let Some(spec_path) = &args.spec {
        let text = std::fs::read_to_string(spec_path)
            .map_err(|e| CliError::io(format!("{}: {e}", spec_path.display())))?;
        let spec: SynthSpec = serde_json::from_str(&text)
            .map_err(|e| CliError::domain(format!("{}: {e}", spec_path.display())))?;
        vec![spec]
    } else {
        let scenario = parse_scenario(&args.scenario)?;
        (0..args.count.max(1))
            .map(|i| {
                SynthSpec::randomized(
                    format!("{}-{i:03}", args.name),
                    scenario,
                    args.seed.wrapping_add(i as u64),
                    args.frames,
                    args.objects,
                    args.similarity,
                )
            })
            .collect()
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("{}: {e}", args.out.display())))?;
    for spec in &specs {
        let seq = dataset::synthesize(spec)
            .map_err(|e| CliError::domain(format!("{}: {e}", spec.name)))?;
        let path = args.out.join(format!("{}.json", spec.name));
        dataset::save(&seq, &path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        log.info(&format!("wrote {}", path.display()));
    }
    Ok(())
}

fn parse_tracker(s: &str) -> Result<TrackerSpec, CliError> {
    if let Some(rest) = s.strip_prefix("synthetic:") {
        TrackerSpec::parse_synthetic(rest).map_err(CliError::domain)
    } else if let Some(rest) = s.strip_prefix("exec:") {
        let command: Vec<String> = rest.split_whitespace().map(String::from).collect();
        if command.is_empty() {
            return Err(CliError::domain("empty exec command"));
        }
        Ok(TrackerSpec::External { command })
    } else {
        Err(CliError::domain(format!(
            "tracker must be synthetic:<name> or exec:<command>, got {s:?}"
        )))
    }
}

fn parse_grounder(s: &str) -> Result<GrounderSpec, CliError> {
    if let Some(rest) = s.strip_prefix("synthetic:") {
        GrounderSpec::parse_synthetic(rest).map_err(CliError::domain)
    } else if let Some(rest) = s.strip_prefix("exec:") {
        let command: Vec<String> = rest.split_whitespace().map(String::from).collect();
        if command.is_empty() {
            return Err(CliError::domain("empty exec command"));
        }
        Ok(GrounderSpec::External { command })
    } else {
        Err(CliError::domain(format!(
            "grounder must be synthetic:<name> or exec:<command>, got {s:?}"
        )))
    }
}

fn resolve_dataset(specs: &[String], seed: u64, lenient: bool) -> Result<Vec<SuiteItem>, CliError> {
    let mut items = Vec::new();
    for entry in specs {
        if let Some(preset) = entry.strip_prefix("preset:") {
            let specs = presets::preset_specs(preset, seed).ok_or_else(|| {
                CliError::domain(format!(
                    "unknown preset {preset:?} (expected one of: {})",
                    presets::PRESET_NAMES.join(", ")
                ))
            })?;
            for spec in specs {
                items.push(
                    SuiteItem::from_spec(&spec)
                        .map_err(|e| CliError::domain(format!("{}: {e}", spec.name)))?,
                );
            }
            continue;
        }
        for file in sequence_files(Path::new(entry))? {
            let seq: Sequence = match dataset::load_with(&file, lenient) {
                Ok(seq) => seq,
                Err(dataset::DatasetError::Io(e)) => {
                    return Err(CliError::io(format!("{}: {e}", file.display())))
                }
                Err(e) => return Err(CliError::domain(format!("{}: {e}", file.display()))),
            };
            let violations = dataset::validate(&seq);
            if !violations.is_empty() {
                return Err(CliError::domain(format!(
                    "{}: {} violation(s), first: {}",
                    file.display(),
                    violations.len(),
                    violations[0]
                )));
            }
            items.push(SuiteItem::from_sequence(seq));
        }
    }
    Ok(items)
}

fn cmd_eval(mut args: EvalArgs, log: &Log) -> Result<(), CliError> {
    if let Some(path) = args.config.clone() {
        config::apply_file(&path, &mut args)?;
    }
    let out = args
        .out
        .clone()
        .ok_or_else(|| CliError::domain("--out is required"))?;
    let tracker_str = args
        .tracker
        .clone()
        .ok_or_else(|| CliError::domain("--tracker is required"))?;
    if args.dataset.is_empty() {
        return Err(CliError::domain("at least one --dataset is required"));
    }

    // Everything is type-checked before any sequence runs.
    let tracker = parse_tracker(&tracker_str)?;
    let grounder = args.grounder.as_deref().map(parse_grounder).transpose()?;
    let mode = match args.mode.as_deref() {
        None => Mode::Imat,
        Some(s) => Mode::parse(s).ok_or_else(|| CliError::domain(format!("unknown mode {s:?}")))?,
    };
    let prompt_effect = match args.prompt_effect.as_deref() {
        None => PromptEffect::SameFrame,
        Some(s) => PromptEffect::parse(s)
            .ok_or_else(|| CliError::domain(format!("unknown prompt effect {s:?}")))?,
    };
    let mut ablation = AblationSet::none();
    for name in &args.ablation {
        ablation.enable(name).map_err(CliError::domain)?;
    }

    let mut policy = EvalPolicy {
        mode,
        prompt_effect,
        ..Default::default()
    };
    policy.arbitration.ablation = ablation;
    if let Some(v) = args.tau_init {
        policy.arbitration.tau_init = v;
    }
    if let Some(v) = args.tau_reinit {
        policy.arbitration.tau_reinit = v;
    }
    if let Some(v) = args.delta_c {
        policy.arbitration.delta_c = v;
    }
    if let Some(v) = args.memory_epsilon {
        policy.memory.novelty_epsilon = v;
    }
    policy.metric.inclusive_success = args.inclusive_success;
    policy.metric.require_switch_overlap = args.require_switch_overlap;
    policy
        .arbitration
        .validate()
        .map_err(|e| CliError::domain(e.to_string()))?;
    policy
        .metric
        .validate()
        .map_err(|e| CliError::domain(e.to_string()))?;
    if policy.mode == Mode::Imat && !policy.arbitration.ablation.no_ipm && grounder.is_none() {
        return Err(CliError::domain(
            "imat mode requires --grounder (or --ablation no-ipm)",
        ));
    }

    let seed = args.seed.unwrap_or(0);
    let parallelism = args.parallelism.unwrap_or(1).max(1);
    let items = resolve_dataset(&args.dataset, seed, args.lenient)?;
    log.info(&format!(
        "evaluating {} sequence(s) with {} [mode {}, parallelism {}]",
        items.len(),
        tracker.describe(),
        mode.as_str(),
        parallelism
    ));

    let outcome = run_suite(
        &items,
        &tracker,
        grounder.as_ref(),
        &policy,
        parallelism,
        seed,
    )
    .map_err(harness_error)?;

    std::fs::create_dir_all(&out).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
    if let Some(report) = &outcome.report {
        report::write_report_bundle(&out, report, &policy.metric)
            .map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
    }
    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir)
        .map_err(|e| CliError::io(format!("{}: {e}", runs_dir.display())))?;
    let mut failures = Vec::new();
    for record in &outcome.records {
        let report_for = outcome
            .report
            .as_ref()
            .and_then(|rep| rep.sequences.iter().find(|r| r.name == record.sequence));
        let path = runs_dir.join(format!("{}.json", record.sequence));
        std::fs::write(&path, report::run_record_to_json(record, report_for))
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        if !record.trace.is_empty() {
            let trace_path = runs_dir.join(format!("{}.trace.jsonl", record.sequence));
            std::fs::write(&trace_path, report::trace_to_jsonl(record))
                .map_err(|e| CliError::io(format!("{}: {e}", trace_path.display())))?;
        }
        if let Some(reason) = &record.failed {
            failures.push(format!("{}: {}", record.sequence, reason));
        }
        log.debug(&format!(
            "{}: {} frames, {} arbitration records",
            record.sequence,
            record.predictions.len(),
            record.trace.len()
        ));
    }
    if outcome.report.is_some() {
        log.info(&format!("report written to {}", out.display()));
    }
    if !failures.is_empty() {
        return Err(CliError::io(format!(
            "{} run(s) failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(())
}

fn cmd_report(args: ReportArgs, log: &Log) -> Result<(), CliError> {
    let records_dir = if args.records.join("runs").is_dir() {
        args.records.join("runs")
    } else {
        args.records.clone()
    };
    let files = sequence_files(&records_dir)?;
    let mut reports = Vec::new();
    for file in files {
        let stored = load_run_record(&file).map_err(|e| CliError::domain(e.to_string()))?;
        if stored.failed {
            log.info(&format!("skipping failed run {}", stored.sequence));
            continue;
        }
        match stored.report {
            Some(rep) => reports.push(rep),
            None => log.info(&format!("{}: no metrics stored, skipped", stored.sequence)),
        }
    }
    if reports.is_empty() {
        return Err(CliError::domain(format!(
            "no scoreable run records under {}",
            records_dir.display()
        )));
    }
    let report = aggregate(reports).map_err(|e| CliError::domain(e.to_string()))?;
    let cfg = itrack_core::metrics::MetricConfig::default();
    report::write_report_bundle(&args.out, &report, &cfg)
        .context("writing report bundle")
        .map_err(CliError::from)?;
    log.info(&format!("report written to {}", args.out.display()));
    Ok(())
}
