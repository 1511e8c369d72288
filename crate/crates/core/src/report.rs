//! Report and run-record emission.
//!
//! Everything written here goes through the canonical JSON printer, so a
//! fixed seed and config produce byte-identical files regardless of worker
//! count. CSV output uses the same six-decimal float formatting.

use crate::dataset::FrameState;
use crate::dataset::Scenario;
use crate::harness::{ArbitrationRecord, RunRecord, TraceAction, Trigger};
use crate::jsonfmt::{self, fmt_f64};
use crate::memory::{BankPair, MemoryBank};
use crate::metrics::{
    AggregateBucket, Curves, EvalReport, MetricConfig, ScalarSet, SequenceReport,
};
use serde_json::{json, Map, Value};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const REPORT_SCHEMA: &str = "itrack-report/1";
pub const RUN_SCHEMA: &str = "itrack-run/1";

fn scalar_value(v: Option<f64>) -> Value {
    match v {
        Some(x) => json!(jsonfmt::quantize(x)),
        None => Value::Null,
    }
}

fn scalars_value(s: &ScalarSet) -> Value {
    let mut map = Map::new();
    for field in ScalarSet::FIELDS {
        map.insert(field.to_string(), scalar_value(s.get(field)));
    }
    Value::Object(map)
}

fn curve_array(values: &[f64]) -> Value {
    Value::Array(
        values
            .iter()
            .map(|v| json!(jsonfmt::quantize(*v)))
            .collect(),
    )
}

fn curves_value(curves: &Option<Curves>) -> Value {
    match curves {
        None => Value::Null,
        Some(c) => json!({
            "success": curve_array(&c.success),
            "precision": curve_array(&c.precision),
            "norm_precision": curve_array(&c.norm_precision),
        }),
    }
}

fn bucket_value(bucket: &AggregateBucket) -> Value {
    json!({
        "count": bucket.count,
        "scalars": scalars_value(&bucket.scalars),
        "curves": curves_value(&bucket.curves),
    })
}

fn config_value(cfg: &MetricConfig) -> Value {
    json!({
        "tau_perception": jsonfmt::quantize(cfg.tau_perception),
        "success_thresholds": curve_array(&cfg.success_thresholds),
        "precision_threshold_px": jsonfmt::quantize(cfg.precision_threshold_px),
        "precision_grid": curve_array(&cfg.precision_grid),
        "norm_precision_grid": curve_array(&cfg.norm_precision_grid),
        "require_switch_overlap": cfg.require_switch_overlap,
        "inclusive_success": cfg.inclusive_success,
    })
}

/// Canonical JSON for a full evaluation report.
pub fn report_to_json(report: &EvalReport, cfg: &MetricConfig) -> String {
    let mut per_scenario = Map::new();
    for (scenario, bucket) in &report.per_scenario {
        per_scenario.insert(scenario.as_str().to_string(), bucket_value(bucket));
    }
    let sequences: Vec<Value> = report
        .sequences
        .iter()
        .map(|s| {
            json!({
                "name": s.name,
                "scenario": s.scenario.as_str(),
                "scalars": scalars_value(&s.scalars),
                "curves": curves_value(&s.curves),
            })
        })
        .collect();
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "config": config_value(cfg),
        "overall": bucket_value(&report.overall),
        "per_scenario": Value::Object(per_scenario),
        "sequences": sequences,
    });
    jsonfmt::to_canonical_string(&doc)
}

/// One CSV row per sequence: name, scenario, then the seven scalars.
/// Undefined scalars serialize as empty cells.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from("name,scenario");
    for field in ScalarSet::FIELDS {
        out.push(',');
        out.push_str(field);
    }
    out.push('\n');
    for seq in &report.sequences {
        out.push_str(&csv_escape(&seq.name));
        out.push(',');
        out.push_str(seq.scenario.as_str());
        for field in ScalarSet::FIELDS {
            out.push(',');
            if let Some(v) = seq.scalars.get(field) {
                out.push_str(&fmt_f64(v));
            }
        }
        out.push('\n');
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Two-column curve CSV: grid point and value.
pub fn curve_to_csv(header: (&str, &str), grid: &[f64], values: &[f64]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (g, v) in grid.iter().zip(values) {
        out.push_str(&fmt_f64(*g));
        out.push(',');
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

/// Writes the full report bundle under `dir`: `report.json`, `report.csv`,
/// and per-bucket curve CSVs under `curves/`. Returns the written paths.
pub fn write_report_bundle(
    dir: &Path,
    report: &EvalReport,
    cfg: &MetricConfig,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let curves_dir = dir.join("curves");
    fs::create_dir_all(&curves_dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    fs::write(&json_path, report_to_json(report, cfg))?;
    written.push(json_path);

    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, report_to_csv(report))?;
    written.push(csv_path);

    let mut emit_bucket = |prefix: &str, bucket: &AggregateBucket| -> io::Result<()> {
        let Some(curves) = &bucket.curves else {
            return Ok(());
        };
        for (kind, grid, values, header) in [
            (
                "success",
                &cfg.success_thresholds,
                &curves.success,
                ("iou_threshold", "success_rate"),
            ),
            (
                "precision",
                &cfg.precision_grid,
                &curves.precision,
                ("pixel_threshold", "precision"),
            ),
            (
                "norm_precision",
                &cfg.norm_precision_grid,
                &curves.norm_precision,
                ("normalized_threshold", "norm_precision"),
            ),
        ] {
            let path = curves_dir.join(format!("{prefix}_{kind}.csv"));
            fs::write(&path, curve_to_csv(header, grid, values))?;
            written.push(path);
        }
        Ok(())
    };

    emit_bucket("overall", &report.overall)?;
    for (scenario, bucket) in &report.per_scenario {
        emit_bucket(scenario.as_str(), bucket)?;
    }
    Ok(written)
}

fn prediction_value(p: &crate::metrics::FramePrediction) -> Value {
    match &p.state {
        FrameState::Present(b) => json!({
            "t": p.t,
            "box": [
                jsonfmt::quantize(b.x),
                jsonfmt::quantize(b.y),
                jsonfmt::quantize(b.w),
                jsonfmt::quantize(b.h)
            ]
        }),
        FrameState::Absent => json!({"t": p.t, "absent": true}),
    }
}

fn trace_value(rec: &ArbitrationRecord) -> Value {
    let trigger = match rec.trigger {
        Trigger::Event(kind) => kind.as_str(),
        Trigger::Drift => "drift",
    };
    let action = match rec.action {
        TraceAction::Keep => "keep",
        TraceAction::Reinit => "reinit",
        TraceAction::Adopt => "adopt",
        TraceAction::Ignored => "ignored",
    };
    json!({
        "frame": rec.frame,
        "phase": match rec.phase {
            crate::arbitration::Phase::Init => "init",
            crate::arbitration::Phase::Runtime => "runtime",
        },
        "trigger": trigger,
        "iou": scalar_value(rec.iou),
        "tau": scalar_value(rec.tau),
        "action": action,
    })
}

fn bank_value(bank: &MemoryBank) -> Value {
    let entries: Vec<Value> = bank
        .entries()
        .iter()
        .map(|e| {
            json!({
                "frame": e.frame,
                "embedding": Value::Array(
                    e.embedding.iter().map(|v| json!(jsonfmt::quantize(*v))).collect()
                ),
            })
        })
        .collect();
    json!({"capacity": bank.capacity(), "entries": entries})
}

fn banks_value(banks: &Option<BankPair>) -> Value {
    match banks {
        None => Value::Null,
        Some(pair) => json!({
            "positive": bank_value(&pair.positive),
            "negative": bank_value(&pair.negative),
        }),
    }
}

/// Line-delimited decision trace: one JSON object per arbitration, for
/// audit and ablation analysis.
pub fn trace_to_jsonl(record: &RunRecord) -> String {
    let mut out = String::new();
    for rec in &record.trace {
        out.push_str(&trace_value(rec).to_string());
        out.push('\n');
    }
    out
}

/// Canonical JSON for one run record, with its per-sequence report when the
/// run was scoreable.
pub fn run_record_to_json(record: &RunRecord, report: Option<&SequenceReport>) -> String {
    let report_value = match report {
        None => Value::Null,
        Some(r) => json!({
            "scalars": scalars_value(&r.scalars),
            "curves": curves_value(&r.curves),
        }),
    };
    let doc = json!({
        "schema": RUN_SCHEMA,
        "sequence": record.sequence,
        "scenario": record.scenario.as_str(),
        "policy": {
            "mode": record.policy.mode,
            "prompt_effect": record.policy.prompt_effect,
            "tau_init": jsonfmt::quantize(record.policy.tau_init),
            "tau_reinit": jsonfmt::quantize(record.policy.tau_reinit),
            "delta_c": jsonfmt::quantize(record.policy.delta_c),
            "ablations": record.policy.ablations,
        },
        "duration_ms": record.duration.as_millis() as u64,
        "failed": record.failed.clone().map(Value::String).unwrap_or(Value::Null),
        "predictions": Value::Array(record.predictions.iter().map(prediction_value).collect()),
        "trace": Value::Array(record.trace.iter().map(trace_value).collect()),
        "banks": banks_value(&record.banks),
        "report": report_value,
    });
    jsonfmt::to_canonical_string(&doc)
}

/// The slice of a run-record file that `report` re-aggregation needs.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub sequence: String,
    pub scenario: Scenario,
    pub report: Option<SequenceReport>,
    pub failed: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
}

/// Loads a run-record file written by [`run_record_to_json`].
pub fn load_run_record(path: &Path) -> Result<StoredRun, RecordError> {
    let text = fs::read_to_string(path)?;
    let bad = |message: &str| RecordError::Malformed {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let value: Value =
        serde_json::from_str(&text).map_err(|e| bad(&format!("not valid JSON: {e}")))?;
    if value.get("schema").and_then(Value::as_str) != Some(RUN_SCHEMA) {
        return Err(bad("missing or unsupported run-record schema"));
    }
    let sequence = value
        .get("sequence")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing sequence name"))?
        .to_string();
    let scenario = value
        .get("scenario")
        .and_then(Value::as_str)
        .and_then(Scenario::parse)
        .ok_or_else(|| bad("missing or unknown scenario"))?;
    let failed = !value.get("failed").map(Value::is_null).unwrap_or(true);

    let report = match value.get("report") {
        None | Some(Value::Null) => None,
        Some(rep) => {
            let scalars_obj = rep
                .get("scalars")
                .and_then(Value::as_object)
                .ok_or_else(|| bad("report without scalars"))?;
            let mut scalars = ScalarSet::default();
            for field in ScalarSet::FIELDS {
                let v = scalars_obj.get(field).and_then(Value::as_f64);
                match field {
                    "interactive_score" => scalars.interactive_score = v,
                    "responsiveness" => scalars.responsiveness = v,
                    "perception_accuracy" => scalars.perception_accuracy = v,
                    "perception_precision" => scalars.perception_precision = v,
                    "auc" => scalars.auc = v,
                    "precision" => scalars.precision = v,
                    "norm_precision" => scalars.norm_precision = v,
                    _ => unreachable!(),
                }
            }
            let curves = match rep.get("curves") {
                None | Some(Value::Null) => None,
                Some(c) => {
                    let arr = |key: &str| -> Result<Vec<f64>, RecordError> {
                        c.get(key)
                            .and_then(Value::as_array)
                            .map(|a| a.iter().filter_map(Value::as_f64).collect())
                            .ok_or_else(|| bad(&format!("curve {key} malformed")))
                    };
                    Some(Curves {
                        success: arr("success")?,
                        precision: arr("precision")?,
                        norm_precision: arr("norm_precision")?,
                    })
                }
            };
            Some(SequenceReport {
                name: sequence.clone(),
                scenario,
                scalars,
                curves,
            })
        }
    };

    Ok(StoredRun {
        sequence,
        scenario,
        report,
        failed,
    })
}
