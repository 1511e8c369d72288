//! Sequence file I/O.
//!
//! One sequence per UTF-8 JSON file. Strict mode (the default) rejects
//! unknown fields; lenient mode ignores them. Writing goes through the
//! canonical printer, so numbers carry at most six fractional digits and
//! identical sequences serialize to identical bytes.

use super::{
    EventKind, FrameAnnotation, FrameState, InteractionEvent, ObjectFeatures, Scenario, Sequence,
};
use crate::geometry::{BoundingBox, FrameSize};
use crate::jsonfmt;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "itrack/1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {found:?} (expected {SCHEMA_VERSION:?})")]
    SchemaVersion { found: String },
    #[error("schema error at {locus}: {message}")]
    Schema { locus: String, message: String },
}

fn schema_err(locus: impl Into<String>, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        locus: locus.into(),
        message: message.into(),
    }
}

/// Loads a sequence in strict mode.
pub fn load(path: &Path) -> Result<Sequence, DatasetError> {
    load_with(path, false)
}

/// Loads a sequence; `lenient` tolerates unknown fields.
pub fn load_with(path: &Path, lenient: bool) -> Result<Sequence, DatasetError> {
    let text = fs::read_to_string(path)?;
    parse(&text, lenient)
}

/// Parses sequence JSON from a string.
pub fn parse(text: &str, lenient: bool) -> Result<Sequence, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_value(&value, lenient)
}

fn from_value(value: &Value, lenient: bool) -> Result<Sequence, DatasetError> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err("document", "expected a JSON object"))?;

    if !lenient {
        check_known_fields(
            obj,
            &[
                "schema", "name", "scenario", "width", "height", "frames", "events", "features",
            ],
            "document",
        )?;
    }

    let schema = get_str(obj, "schema", "document")?;
    if schema != SCHEMA_VERSION {
        return Err(DatasetError::SchemaVersion {
            found: schema.to_string(),
        });
    }

    let name = get_str(obj, "name", "document")?.to_string();
    let scenario_raw = get_str(obj, "scenario", "document")?;
    let scenario = Scenario::parse(scenario_raw)
        .ok_or_else(|| schema_err("scenario", format!("unknown scenario {scenario_raw:?}")))?;
    let width = get_u32(obj, "width", "document")?;
    let height = get_u32(obj, "height", "document")?;
    let size =
        FrameSize::new(width, height).map_err(|e| schema_err("width/height", e.to_string()))?;

    let frames_raw = obj
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| schema_err("frames", "missing or not an array"))?;
    let mut frames = Vec::with_capacity(frames_raw.len());
    for (i, fv) in frames_raw.iter().enumerate() {
        frames.push(parse_frame(fv, i, lenient)?);
    }

    let events_raw = obj
        .get("events")
        .and_then(Value::as_array)
        .ok_or_else(|| schema_err("events", "missing or not an array"))?;
    let mut events = Vec::with_capacity(events_raw.len());
    for (i, ev) in events_raw.iter().enumerate() {
        events.push(parse_event(ev, i, lenient)?);
    }

    let object_features = match obj.get("features") {
        None | Some(Value::Null) => None,
        Some(Value::Object(map)) => {
            let mut features: ObjectFeatures = BTreeMap::new();
            for (id, per_frame) in map {
                let locus = format!("features.{id}");
                let rows = per_frame
                    .as_array()
                    .ok_or_else(|| schema_err(&locus, "expected an array of vectors"))?;
                let mut out = Vec::with_capacity(rows.len());
                for (t, row) in rows.iter().enumerate() {
                    out.push(parse_f64_array(row, &format!("{locus}[{t}]"))?);
                }
                features.insert(id.clone(), out);
            }
            Some(features)
        }
        Some(_) => return Err(schema_err("features", "expected an object")),
    };

    Ok(Sequence {
        name,
        scenario,
        size,
        frames,
        events,
        object_features,
    })
}

fn parse_frame(
    value: &Value,
    index: usize,
    lenient: bool,
) -> Result<FrameAnnotation, DatasetError> {
    let locus = format!("frames[{index}]");
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err(&locus, "expected an object"))?;
    if !lenient {
        check_known_fields(obj, &["t", "box", "absent"], &locus)?;
    }
    let t = get_usize(obj, "t", &locus)?;
    let state = match (obj.get("box"), obj.get("absent")) {
        (Some(bv), None) => FrameState::Present(parse_box(bv, &format!("{locus}.box"))?),
        (None, Some(av)) => {
            if av.as_bool() != Some(true) {
                return Err(schema_err(&locus, "\"absent\" must be true when present"));
            }
            FrameState::Absent
        }
        (Some(_), Some(_)) => {
            return Err(schema_err(
                &locus,
                "frame carries both \"box\" and \"absent\"",
            ))
        }
        (None, None) => {
            return Err(schema_err(
                &locus,
                "frame needs either \"box\" or \"absent\"",
            ))
        }
    };
    Ok(FrameAnnotation { t, state })
}

fn parse_event(
    value: &Value,
    index: usize,
    lenient: bool,
) -> Result<InteractionEvent, DatasetError> {
    let locus = format!("events[{index}]");
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err(&locus, "expected an object"))?;
    if !lenient {
        check_known_fields(obj, &["t", "kind", "text", "gt_new", "gt_old"], &locus)?;
    }
    let t = get_usize(obj, "t", &locus)?;
    let kind_raw = get_str(obj, "kind", &locus)?;
    let kind = match kind_raw {
        "init" => EventKind::Init,
        "correction" => EventKind::Correction,
        "refine" => EventKind::Refine,
        "switch" => EventKind::Switch,
        other => {
            return Err(schema_err(
                format!("{locus}.kind"),
                format!("unknown event kind {other:?}"),
            ))
        }
    };
    let text = get_str(obj, "text", &locus)?.to_string();
    let gt_new = parse_box(
        obj.get("gt_new")
            .ok_or_else(|| schema_err(&locus, "missing gt_new"))?,
        &format!("{locus}.gt_new"),
    )?;
    let gt_old = match obj.get("gt_old") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_box(v, &format!("{locus}.gt_old"))?),
    };
    Ok(InteractionEvent {
        t,
        kind,
        text,
        gt_new,
        gt_old,
    })
}

fn parse_box(value: &Value, locus: &str) -> Result<BoundingBox, DatasetError> {
    let nums = parse_f64_array(value, locus)?;
    if nums.len() != 4 {
        return Err(schema_err(
            locus,
            format!("box needs 4 numbers, got {}", nums.len()),
        ));
    }
    BoundingBox::new(nums[0], nums[1], nums[2], nums[3])
        .map_err(|e| schema_err(locus, e.to_string()))
}

fn parse_f64_array(value: &Value, locus: &str) -> Result<Vec<f64>, DatasetError> {
    let arr = value
        .as_array()
        .ok_or_else(|| schema_err(locus, "expected an array of numbers"))?;
    arr.iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| schema_err(locus, "expected a number"))
        })
        .collect()
}

fn check_known_fields(
    obj: &Map<String, Value>,
    known: &[&str],
    locus: &str,
) -> Result<(), DatasetError> {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            return Err(schema_err(locus, format!("unknown field {key:?}")));
        }
    }
    Ok(())
}

fn get_str<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    locus: &str,
) -> Result<&'a str, DatasetError> {
    obj.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| schema_err(locus, format!("missing or non-string field {key:?}")))
}

fn get_u32(obj: &Map<String, Value>, key: &str, locus: &str) -> Result<u32, DatasetError> {
    obj.get(key)
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| schema_err(locus, format!("missing or invalid integer field {key:?}")))
}

fn get_usize(obj: &Map<String, Value>, key: &str, locus: &str) -> Result<usize, DatasetError> {
    obj.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| schema_err(locus, format!("missing or invalid integer field {key:?}")))
}

fn box_value(b: &BoundingBox) -> Value {
    json!([
        jsonfmt::quantize(b.x),
        jsonfmt::quantize(b.y),
        jsonfmt::quantize(b.w),
        jsonfmt::quantize(b.h)
    ])
}

/// Serializes a sequence to its canonical JSON string.
pub fn to_string(seq: &Sequence) -> String {
    let frames: Vec<Value> = seq
        .frames
        .iter()
        .map(|f| match &f.state {
            FrameState::Present(b) => json!({"t": f.t, "box": box_value(b)}),
            FrameState::Absent => json!({"t": f.t, "absent": true}),
        })
        .collect();
    let events: Vec<Value> = seq
        .events
        .iter()
        .map(|e| {
            let mut obj = Map::new();
            obj.insert("t".into(), json!(e.t));
            obj.insert("kind".into(), json!(e.kind.as_str()));
            obj.insert("text".into(), json!(e.text));
            obj.insert("gt_new".into(), box_value(&e.gt_new));
            if let Some(old) = &e.gt_old {
                obj.insert("gt_old".into(), box_value(old));
            }
            Value::Object(obj)
        })
        .collect();

    let mut doc = Map::new();
    doc.insert("schema".into(), json!(SCHEMA_VERSION));
    doc.insert("name".into(), json!(seq.name));
    doc.insert("scenario".into(), json!(seq.scenario.as_str()));
    doc.insert("width".into(), json!(seq.size.width));
    doc.insert("height".into(), json!(seq.size.height));
    doc.insert("frames".into(), Value::Array(frames));
    doc.insert("events".into(), Value::Array(events));
    if let Some(features) = &seq.object_features {
        let map: Map<String, Value> = features
            .iter()
            .map(|(id, rows)| {
                let rows: Vec<Value> = rows
                    .iter()
                    .map(|row| {
                        Value::Array(row.iter().map(|v| json!(jsonfmt::quantize(*v))).collect())
                    })
                    .collect();
                (id.clone(), Value::Array(rows))
            })
            .collect();
        doc.insert("features".into(), Value::Object(map));
    }
    jsonfmt::to_canonical_string(&Value::Object(doc))
}

/// Writes the sequence to `path`, replacing any existing file.
pub fn save(seq: &Sequence, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, to_string(seq))?;
    Ok(())
}
