//! Reference backend adapter speaking the line-delimited JSON protocol.
//!
//! It memorizes the most recent box it was given (init or prompt directive)
//! and echoes it for every frame; box-less prompt queries are answered the
//! same way. Useful as a protocol conformance fixture and as a template for
//! real adapters.
//!
//! Fault-injection flags for protocol tests:
//!   --malform=out-of-order|missing-field|garbage   corrupt one reply
//!   --malform-at=N                                 which reply (1-based, default 1)
//!   --crash-at=N                                   exit before the Nth reply
//!   --box=x,y,w,h                                  initial box before any directive

use serde_json::{json, Value};
use std::io::{self, BufRead, Write};
use std::process::exit;

struct Options {
    malform: Option<String>,
    malform_at: usize,
    crash_at: Option<usize>,
    start_box: Option<[f64; 4]>,
}

fn parse_options() -> Options {
    let mut opts = Options {
        malform: None,
        malform_at: 1,
        crash_at: None,
        start_box: None,
    };
    for arg in std::env::args().skip(1) {
        if let Some(v) = arg.strip_prefix("--malform=") {
            opts.malform = Some(v.to_string());
        } else if let Some(v) = arg.strip_prefix("--malform-at=") {
            opts.malform_at = v.parse().unwrap_or(1);
        } else if let Some(v) = arg.strip_prefix("--crash-at=") {
            opts.crash_at = v.parse().ok();
        } else if let Some(v) = arg.strip_prefix("--box=") {
            let nums: Vec<f64> = v.split(',').filter_map(|p| p.parse().ok()).collect();
            if nums.len() == 4 {
                opts.start_box = Some([nums[0], nums[1], nums[2], nums[3]]);
            }
        } else {
            eprintln!("echo-backend: unknown argument {arg:?}");
            exit(2);
        }
    }
    opts
}

fn main() {
    let opts = parse_options();
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut current_box = opts.start_box;
    let mut replies_sent = 0usize;

    let mut reply = |t: u64, box_: Option<[f64; 4]>, out: &mut dyn Write| {
        replies_sent += 1;
        if opts.crash_at == Some(replies_sent) {
            exit(1);
        }
        let line = if opts.malform.as_deref().is_some() && replies_sent == opts.malform_at {
            match opts.malform.as_deref().unwrap() {
                "out-of-order" => {
                    json!({"t": t + 1, "box": box_.unwrap_or([0.0, 0.0, 1.0, 1.0])}).to_string()
                }
                "missing-field" => json!({"box": box_.unwrap_or([0.0, 0.0, 1.0, 1.0])}).to_string(),
                "garbage" => "this is not json".to_string(),
                other => {
                    eprintln!("echo-backend: unknown malform kind {other:?}");
                    exit(2);
                }
            }
        } else {
            match box_ {
                Some(b) => json!({"t": t, "box": b}).to_string(),
                None => json!({"t": t, "absent": true}).to_string(),
            }
        };
        if writeln!(out, "{line}").and_then(|_| out.flush()).is_err() {
            exit(1);
        }
    };

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let Ok(msg): Result<Value, _> = serde_json::from_str(&line) else {
            eprintln!("echo-backend: unreadable request: {line}");
            exit(2);
        };
        let cmd = msg.get("cmd").and_then(Value::as_str).unwrap_or("");
        let box_of = |v: &Value| -> Option<[f64; 4]> {
            let arr = v.get("box")?.as_array()?;
            let nums: Vec<f64> = arr.iter().filter_map(Value::as_f64).collect();
            (nums.len() == 4).then(|| [nums[0], nums[1], nums[2], nums[3]])
        };
        match cmd {
            "init" => {
                if let Some(b) = box_of(&msg) {
                    current_box = Some(b);
                }
            }
            "frame" => {
                let t = msg.get("t").and_then(Value::as_u64).unwrap_or(0);
                reply(t, current_box, &mut out);
            }
            "prompt" => {
                let t = msg.get("t").and_then(Value::as_u64).unwrap_or(0);
                match box_of(&msg) {
                    Some(b) => current_box = Some(b), // directive: no reply
                    None => reply(t, current_box.or(Some([0.0, 0.0, 1.0, 1.0])), &mut out),
                }
            }
            "end" => break,
            other => {
                eprintln!("echo-backend: unknown command {other:?}");
                exit(2);
            }
        }
    }
}
