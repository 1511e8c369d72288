//! Line-delimited JSON wire protocol for external-process backends.
//!
//! The harness talks to a backend over its standard input/output, one JSON
//! object per line. Requests are `{"cmd":"init",...}`, `{"cmd":"frame",...}`,
//! `{"cmd":"prompt",...}`, and `{"cmd":"end"}`. The backend answers every
//! `frame` with `{"t":.., "box":[x,y,w,h]}` or `{"t":.., "absent":true}`
//! (plus an optional `"score"`), and answers box-less `prompt` queries with
//! one box reply. Replies must arrive in request order; anything else is a
//! protocol violation that aborts the run and names the offending reply
//! line. A grounder backend receives only `prompt` messages and exits on
//! end-of-input.

use super::backends::{BackendError, FrameInput, Grounder, Tracker, TrackerInit};
use crate::dataset::{FrameState, Sequence};
use crate::geometry::BoundingBox;
use serde_json::{json, Map, Value};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

fn snippet(line: &str) -> String {
    let trimmed = line.trim_end();
    if trimmed.len() > 120 {
        format!("{}...", &trimmed[..120])
    } else {
        trimmed.to_string()
    }
}

/// Parses one backend reply line into a frame state, enforcing the expected
/// frame index.
pub fn parse_box_reply(
    line_no: usize,
    line: &str,
    expected_t: usize,
) -> Result<(FrameState, Option<f64>), BackendError> {
    let value: Value = serde_json::from_str(line).map_err(|_| BackendError::Protocol {
        line: line_no,
        message: format!("reply is not valid JSON: {}", snippet(line)),
    })?;
    let obj = value.as_object().ok_or_else(|| BackendError::Protocol {
        line: line_no,
        message: format!("reply is not a JSON object: {}", snippet(line)),
    })?;
    let t = obj
        .get("t")
        .and_then(Value::as_u64)
        .ok_or_else(|| BackendError::Protocol {
            line: line_no,
            message: format!("reply is missing field \"t\": {}", snippet(line)),
        })? as usize;
    if t != expected_t {
        return Err(BackendError::Protocol {
            line: line_no,
            message: format!(
                "out-of-order reply: expected t={expected_t}, got t={t}: {}",
                snippet(line)
            ),
        });
    }
    let score = obj.get("score").and_then(Value::as_f64);
    if obj.get("absent").and_then(Value::as_bool) == Some(true) {
        return Ok((FrameState::Absent, score));
    }
    let box_val = obj.get("box").ok_or_else(|| BackendError::Protocol {
        line: line_no,
        message: format!(
            "reply is missing field \"box\" or \"absent\": {}",
            snippet(line)
        ),
    })?;
    let nums: Vec<f64> = box_val
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    if nums.len() != 4 {
        return Err(BackendError::Protocol {
            line: line_no,
            message: format!("reply box must be 4 numbers: {}", snippet(line)),
        });
    }
    let b = BoundingBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| {
        BackendError::Protocol {
            line: line_no,
            message: format!("reply box invalid ({e}): {}", snippet(line)),
        }
    })?;
    Ok((FrameState::Present(b), score))
}

fn box_json(b: &BoundingBox) -> Value {
    json!([b.x, b.y, b.w, b.h])
}

struct Pipe {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    reply_line: usize,
    label: String,
}

impl Pipe {
    fn spawn(command: &[String], label: &str) -> Result<Self, BackendError> {
        if command.is_empty() {
            return Err(BackendError::Spawn("empty backend command".into()));
        }
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Spawn(format!("{}: {e}", command[0])))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| BackendError::Spawn("backend stdout unavailable".into()))?;
        Ok(Pipe {
            child,
            stdin,
            stdout: BufReader::new(stdout),
            reply_line: 0,
            label: label.to_string(),
        })
    }

    fn send(&mut self, value: &Value) -> Result<(), BackendError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| BackendError::Crashed(format!("{} stdin closed", self.label)))?;
        let line = value.to_string();
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| BackendError::Crashed(format!("{} write failed: {e}", self.label)))
    }

    fn read_reply_line(&mut self) -> Result<(usize, String), BackendError> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| BackendError::Crashed(format!("{} read failed: {e}", self.label)))?;
        if n == 0 {
            return Err(BackendError::Crashed(format!(
                "{} closed its output after {} replies",
                self.label, self.reply_line
            )));
        }
        self.reply_line += 1;
        Ok((self.reply_line, line))
    }

    fn expect_box_reply(&mut self, t: usize) -> Result<FrameState, BackendError> {
        let (line_no, line) = self.read_reply_line()?;
        parse_box_reply(line_no, &line, t).map(|(state, _)| state)
    }

    /// Closes stdin and waits briefly for a clean exit, killing stragglers.
    fn shutdown(&mut self) {
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                _ => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return;
                }
            }
        }
    }
}

impl Drop for Pipe {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Tracker backend over an external process.
pub struct ExternalTracker {
    pipe: Pipe,
    seq: Arc<Sequence>,
}

impl ExternalTracker {
    pub fn spawn(command: &[String], seq: Arc<Sequence>) -> Result<Self, BackendError> {
        Ok(ExternalTracker {
            pipe: Pipe::spawn(command, "tracker backend")?,
            seq,
        })
    }

    fn features_at(&self, t: usize) -> Option<Value> {
        let features = self.seq.object_features.as_ref()?;
        let mut map = Map::new();
        for (id, rows) in features {
            if let Some(row) = rows.get(t) {
                map.insert(
                    id.clone(),
                    Value::Array(row.iter().map(|v| json!(v)).collect()),
                );
            }
        }
        Some(Value::Object(map))
    }
}

impl Tracker for ExternalTracker {
    fn init(&mut self, init: &TrackerInit<'_>) -> Result<(), BackendError> {
        let mut msg = Map::new();
        msg.insert("cmd".into(), json!("init"));
        msg.insert("name".into(), json!(init.name));
        msg.insert("width".into(), json!(init.size.width));
        msg.insert("height".into(), json!(init.size.height));
        if let Some(b) = &init.start_box {
            msg.insert("box".into(), box_json(b));
        }
        if let Some(text) = init.text {
            msg.insert("text".into(), json!(text));
        }
        self.pipe.send(&Value::Object(msg))
    }

    fn frame(&mut self, input: &FrameInput<'_>) -> Result<FrameState, BackendError> {
        let mut msg = Map::new();
        msg.insert("cmd".into(), json!("frame"));
        msg.insert("t".into(), json!(input.t));
        if let Some(features) = self.features_at(input.t) {
            msg.insert("features".into(), features);
        }
        self.pipe.send(&Value::Object(msg))?;
        self.pipe.expect_box_reply(input.t)
    }

    fn prompt(
        &mut self,
        t: usize,
        text: &str,
        directive: Option<&BoundingBox>,
    ) -> Result<Option<BoundingBox>, BackendError> {
        let mut msg = Map::new();
        msg.insert("cmd".into(), json!("prompt"));
        msg.insert("t".into(), json!(t));
        msg.insert("text".into(), json!(text));
        if let Some(b) = directive {
            msg.insert("box".into(), box_json(b));
        }
        self.pipe.send(&Value::Object(msg))?;
        // Box-carrying prompts are directives and get no reply; box-less
        // prompts are grounding queries answered with one box.
        if directive.is_some() {
            return Ok(None);
        }
        match self.pipe.expect_box_reply(t)? {
            FrameState::Present(b) => Ok(Some(b)),
            FrameState::Absent => Ok(None),
        }
    }

    fn finish(&mut self) -> Result<(), BackendError> {
        let _ = self.pipe.send(&json!({"cmd": "end"}));
        self.pipe.shutdown();
        Ok(())
    }
}

/// Grounder backend over an external process; it receives only `prompt`
/// messages and must reply with one box per prompt.
pub struct ExternalGrounder {
    pipe: Pipe,
}

impl ExternalGrounder {
    pub fn spawn(command: &[String]) -> Result<Self, BackendError> {
        Ok(ExternalGrounder {
            pipe: Pipe::spawn(command, "grounder backend")?,
        })
    }
}

impl Grounder for ExternalGrounder {
    fn ground(&mut self, t: usize, text: &str) -> Result<BoundingBox, BackendError> {
        self.pipe
            .send(&json!({"cmd": "prompt", "t": t, "text": text}))?;
        match self.pipe.expect_box_reply(t)? {
            FrameState::Present(b) => Ok(b),
            FrameState::Absent => Err(BackendError::Protocol {
                line: self.pipe.reply_line,
                message: "grounder replied absent to a prompt".into(),
            }),
        }
    }

    fn finish(&mut self) -> Result<(), BackendError> {
        self.pipe.shutdown();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_present_and_absent_replies() {
        let (state, score) =
            parse_box_reply(1, r#"{"t":3,"box":[1.0,2.0,3.0,4.0],"score":0.9}"#, 3).unwrap();
        assert_eq!(
            state,
            FrameState::Present(BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap())
        );
        assert_eq!(score, Some(0.9));

        let (state, _) = parse_box_reply(2, r#"{"t":4,"absent":true}"#, 4).unwrap();
        assert_eq!(state, FrameState::Absent);
    }

    #[test]
    fn rejects_out_of_order_t() {
        let err = parse_box_reply(7, r#"{"t":5,"box":[0,0,1,1]}"#, 4).unwrap_err();
        match err {
            BackendError::Protocol { line, message } => {
                assert_eq!(line, 7);
                assert!(message.contains("out-of-order"));
                assert!(message.contains("expected t=4"));
            }
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_fields_and_garbage() {
        let err = parse_box_reply(1, r#"{"box":[0,0,1,1]}"#, 0).unwrap_err();
        assert!(
            matches!(err, BackendError::Protocol { ref message, .. } if message.contains("\"t\""))
        );

        let err = parse_box_reply(2, r#"{"t":0}"#, 0).unwrap_err();
        assert!(
            matches!(err, BackendError::Protocol { ref message, .. } if message.contains("\"box\""))
        );

        let err = parse_box_reply(3, "not json at all", 0).unwrap_err();
        assert!(
            matches!(err, BackendError::Protocol { ref message, .. } if message.contains("not valid JSON"))
        );
    }

    #[test]
    fn rejects_malformed_boxes() {
        let err = parse_box_reply(1, r#"{"t":0,"box":[1,2,3]}"#, 0).unwrap_err();
        assert!(matches!(err, BackendError::Protocol { .. }));
        let err = parse_box_reply(1, r#"{"t":0,"box":[1,2,-3,4]}"#, 0).unwrap_err();
        assert!(matches!(err, BackendError::Protocol { .. }));
    }
}
