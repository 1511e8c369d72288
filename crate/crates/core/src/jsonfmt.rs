//! Canonical JSON emission.
//!
//! All files the toolkit writes go through this printer so that identical
//! inputs produce byte-identical outputs: object keys are sorted, floats are
//! rounded to at most six fractional digits, and integral values print
//! without a fractional part.

use serde_json::Value;
use std::fmt::Write as _;

/// Rounds to six fractional digits (half away from zero).
pub fn quantize(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Formats a float with up to six fractional digits, trailing zeros trimmed.
///
/// Non-finite input is a caller bug; it panics rather than emitting invalid
/// JSON.
pub fn fmt_f64(v: f64) -> String {
    assert!(v.is_finite(), "cannot serialize non-finite float {v}");
    let q = quantize(v);
    let q = if q == 0.0 { 0.0 } else { q }; // normalize -0
    if q == q.trunc() && q.abs() < 1e15 {
        format!("{}", q as i64)
    } else {
        let s = format!("{q:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Prints a `serde_json::Value` canonically: keys sorted, floats via
/// [`fmt_f64`], two-space indentation.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, value: &Value, indent: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&fmt_f64(n.as_f64().expect("numeric value")));
            }
        }
        Value::String(s) => {
            let _ = write!(out, "{}", Value::String(s.clone()));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Arrays of scalars stay on one line; arrays of containers nest.
            let nested = items
                .iter()
                .any(|v| matches!(v, Value::Array(_) | Value::Object(_)));
            if nested {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    write_value(out, item, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push(']');
            } else {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, indent);
                }
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(out, indent + 1);
                let _ = write!(out, "{}: ", Value::String((*key).clone()));
                write_value(out, &map[*key], indent + 1);
            }
            out.push('\n');
            push_indent(out, indent);
            out.push('}');
        }
    }
}

fn push_indent(out: &mut String, levels: usize) {
    for _ in 0..levels {
        out.push_str("  ");
    }
}
