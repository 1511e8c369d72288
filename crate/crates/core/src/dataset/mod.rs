//! Annotation schema for interactive tracking sequences: per-frame boxes
//! with explicit absence labels, timestamped prompt events, scenario labels,
//! validation, JSON I/O, and a deterministic synthetic generator.

mod io;
mod synth;

pub use io::{
    load, load_with, parse, save, to_string as sequence_to_json, DatasetError, SCHEMA_VERSION,
};
pub use synth::{
    synthesize, synthesize_with_world, EventScript, FeatureModel, ObjectSpec, SynthError,
    SynthSpec, TrajectoryKind, World, WorldObject,
};

use crate::geometry::{BoundingBox, FrameSize};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Dimension of the feature vectors carried by geometric-mode sequences.
pub const FEATURE_DIM: usize = 16;

/// Per-frame ground truth: either a visible box or an explicit absence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrameState {
    Present(BoundingBox),
    Absent,
}

impl FrameState {
    pub fn as_box(&self) -> Option<&BoundingBox> {
        match self {
            FrameState::Present(b) => Some(b),
            FrameState::Absent => None,
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, FrameState::Present(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub t: usize,
    pub state: FrameState,
}

/// The four prompt kinds a user can issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Init,
    Correction,
    Refine,
    Switch,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Init => "init",
            EventKind::Correction => "correction",
            EventKind::Refine => "refine",
            EventKind::Switch => "switch",
        }
    }
}

/// A timestamped user prompt.
///
/// `gt_new` is the described target's box at the event frame. `gt_old` is
/// present exactly for `Switch` events and holds the previous target's box
/// at the same frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub t: usize,
    pub kind: EventKind,
    pub text: String,
    pub gt_new: BoundingBox,
    pub gt_old: Option<BoundingBox>,
}

/// The six benchmark scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DailyActivities,
    SportsAnalysis,
    UavTracking,
    Surveillance,
    WildlifeMonitoring,
    Other,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::DailyActivities,
        Scenario::SportsAnalysis,
        Scenario::UavTracking,
        Scenario::Surveillance,
        Scenario::WildlifeMonitoring,
        Scenario::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::DailyActivities => "daily_activities",
            Scenario::SportsAnalysis => "sports_analysis",
            Scenario::UavTracking => "uav_tracking",
            Scenario::Surveillance => "surveillance",
            Scenario::WildlifeMonitoring => "wildlife_monitoring",
            Scenario::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::ALL.iter().copied().find(|sc| sc.as_str() == s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-object, per-frame feature vectors for geometric-mode backends.
pub type ObjectFeatures = BTreeMap<String, Vec<Vec<f64>>>;

/// A fully annotated sequence: frames, prompt schedule, optional features.
///
/// Sequences are immutable after load/synthesis and safe to share across
/// parallel evaluation workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub name: String,
    pub scenario: Scenario,
    pub size: FrameSize,
    pub frames: Vec<FrameAnnotation>,
    pub events: Vec<InteractionEvent>,
    pub object_features: Option<ObjectFeatures>,
}

impl Sequence {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Switch events only (the responsiveness subset).
    pub fn switch_events(&self) -> impl Iterator<Item = &InteractionEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Switch)
    }

    /// Index of the latest event at or before frame `t`, if any.
    pub fn latest_event_at(&self, t: usize) -> Option<&InteractionEvent> {
        self.events.iter().rev().find(|e| e.t <= t)
    }
}

/// Location of a validation violation within a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locus {
    Sequence,
    Frame(usize),
    Event(usize),
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Sequence => write!(f, "sequence"),
            Locus::Frame(t) => write!(f, "frame {t}"),
            Locus::Event(i) => write!(f, "event {i}"),
        }
    }
}

/// One invariant violation. Violations are data, not errors: `validate`
/// reports all of them instead of failing on the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub locus: Locus,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locus, self.message)
    }
}

/// Checks every schema invariant and returns each violation with its locus.
/// An empty list means the sequence is valid.
pub fn validate(seq: &Sequence) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, locus, message: String| {
        out.push(Violation { locus, message });
    };

    if seq.frames.is_empty() {
        push(&mut out, Locus::Sequence, "sequence has no frames".into());
    }

    for (i, frame) in seq.frames.iter().enumerate() {
        if frame.t != i {
            push(
                &mut out,
                Locus::Frame(i),
                format!("frame index {} breaks contiguity (expected {})", frame.t, i),
            );
        }
        if let FrameState::Present(b) = &frame.state {
            if !seq.size.contains(b) {
                push(
                    &mut out,
                    Locus::Frame(i),
                    format!(
                        "box ({}, {}, {}, {}) exceeds frame bounds {}x{}",
                        b.x, b.y, b.w, b.h, seq.size.width, seq.size.height
                    ),
                );
            }
        }
    }

    if seq.events.is_empty() {
        push(&mut out, Locus::Sequence, "sequence has no events".into());
    }
    for (i, ev) in seq.events.iter().enumerate() {
        if i == 0 {
            if ev.kind != EventKind::Init {
                push(
                    &mut out,
                    Locus::Event(i),
                    format!("first event must be init, got {}", ev.kind.as_str()),
                );
            }
            if ev.t != 0 {
                push(
                    &mut out,
                    Locus::Event(i),
                    format!("first event must be at frame 0, got {}", ev.t),
                );
            }
        } else if ev.t <= seq.events[i - 1].t {
            push(
                &mut out,
                Locus::Event(i),
                format!(
                    "event frames must be strictly increasing ({} after {})",
                    ev.t,
                    seq.events[i - 1].t
                ),
            );
        }
        if !seq.frames.is_empty() && ev.t >= seq.frames.len() {
            push(
                &mut out,
                Locus::Event(i),
                format!(
                    "event frame {} outside sequence of {} frames",
                    ev.t,
                    seq.frames.len()
                ),
            );
        }
        match (ev.kind, &ev.gt_old) {
            (EventKind::Switch, None) => push(
                &mut out,
                Locus::Event(i),
                "switch event is missing gt_old".into(),
            ),
            (k, Some(_)) if k != EventKind::Switch => push(
                &mut out,
                Locus::Event(i),
                format!("{} event must not carry gt_old", k.as_str()),
            ),
            _ => {}
        }
        if let Some(frame) = seq.frames.get(ev.t) {
            if let FrameState::Present(b) = &frame.state {
                if *b != ev.gt_new {
                    push(
                        &mut out,
                        Locus::Event(i),
                        format!("gt_new differs from the frame-{} annotation box", ev.t),
                    );
                }
            }
        }
    }

    if let Some(features) = &seq.object_features {
        for (id, per_frame) in features {
            if per_frame.len() != seq.frames.len() {
                push(
                    &mut out,
                    Locus::Sequence,
                    format!(
                        "features for object {} cover {} frames, sequence has {}",
                        id,
                        per_frame.len(),
                        seq.frames.len()
                    ),
                );
            }
            for (t, v) in per_frame.iter().enumerate() {
                if v.len() != FEATURE_DIM {
                    push(
                        &mut out,
                        Locus::Frame(t),
                        format!(
                            "feature vector for object {} has dimension {} (expected {})",
                            id,
                            v.len(),
                            FEATURE_DIM
                        ),
                    );
                    break;
                }
                if v.iter().any(|f| !f.is_finite()) {
                    push(
                        &mut out,
                        Locus::Frame(t),
                        format!("feature vector for object {id} has non-finite entries"),
                    );
                    break;
                }
            }
        }
    }

    out
}
