//! Deterministic synthetic sequence generator.
//!
//! A [`SynthSpec`] fully determines its output: identical specs yield
//! bit-identical sequences. The generator also produces a [`World`] holding
//! every object's per-frame box, visibility, and feature vector, which the
//! in-process synthetic backends use as their ground-truth environment.

use super::{
    EventKind, FrameAnnotation, FrameState, InteractionEvent, ObjectFeatures, Scenario, Sequence,
    FEATURE_DIM,
};
use crate::geometry::{iou, BoundingBox, FrameSize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("spec needs at least one frame")]
    NoFrames,
    #[error("spec needs at least one object")]
    NoObjects,
    #[error("at most {max} objects supported in feature mode, got {n}")]
    TooManyObjects { n: usize, max: usize },
    #[error("event {index} is at frame {t}, outside 0..{n_frames}")]
    BadEventFrame {
        index: usize,
        t: usize,
        n_frames: usize,
    },
    #[error("event {index} targets unknown object {target}")]
    BadTarget { index: usize, target: usize },
    #[error("event schedule must open with an init event at frame 0")]
    BadSchedule,
    #[error("event frames must be strictly increasing (event {index})")]
    EventsNotIncreasing { index: usize },
    #[error("event {index} changes the referent without a switch")]
    NonSwitchRetarget { index: usize },
    #[error("object {object} box size must be positive and fit the frame")]
    BadBoxSize { object: usize },
    #[error("distractor similarity must lie in [0, 1], got {0}")]
    BadSimilarity(f64),
    #[error("object {object}: {message}")]
    BadTrajectory { object: usize, message: String },
    #[error("invalid frame size: {0}x{1}")]
    BadFrameSize(u32, u32),
}

/// Center trajectory of a synthetic object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Linear {
        start: (f64, f64),
        velocity: (f64, f64),
    },
    Sinusoidal {
        center: (f64, f64),
        amplitude: (f64, f64),
        period: f64,
        phase: f64,
    },
    /// Linear interpolation between `(frame, center)` waypoints; clamped
    /// outside the covered range.
    PiecewiseLinear { waypoints: Vec<(usize, (f64, f64))> },
}

impl TrajectoryKind {
    fn center(&self, t: usize) -> (f64, f64) {
        match self {
            TrajectoryKind::Linear { start, velocity } => (
                start.0 + velocity.0 * t as f64,
                start.1 + velocity.1 * t as f64,
            ),
            TrajectoryKind::Sinusoidal {
                center,
                amplitude,
                period,
                phase,
            } => {
                let theta = TAU * t as f64 / period + phase;
                (
                    center.0 + amplitude.0 * theta.sin(),
                    center.1 + amplitude.1 * theta.cos(),
                )
            }
            TrajectoryKind::PiecewiseLinear { waypoints } => {
                let first = waypoints.first().expect("validated non-empty");
                let last = waypoints.last().expect("validated non-empty");
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                for pair in waypoints.windows(2) {
                    let (t0, p0) = pair[0];
                    let (t1, p1) = pair[1];
                    if t >= t0 && t <= t1 && t1 > t0 {
                        let a = (t - t0) as f64 / (t1 - t0) as f64;
                        return (p0.0 + (p1.0 - p0.0) * a, p0.1 + (p1.1 - p0.1) * a);
                    }
                }
                last.1
            }
        }
    }

    fn validate(&self, object: usize) -> Result<(), SynthError> {
        match self {
            TrajectoryKind::Sinusoidal { period, .. } if *period <= 0.0 => {
                Err(SynthError::BadTrajectory {
                    object,
                    message: "sinusoidal period must be positive".into(),
                })
            }
            TrajectoryKind::PiecewiseLinear { waypoints } => {
                if waypoints.is_empty() {
                    return Err(SynthError::BadTrajectory {
                        object,
                        message: "piecewise trajectory needs waypoints".into(),
                    });
                }
                if waypoints.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(SynthError::BadTrajectory {
                        object,
                        message: "waypoint frames must be strictly increasing".into(),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Appearance model of a synthetic object.
///
/// All objects share a common anchor direction weighted by the spec's
/// distractor similarity, so pairwise similarity between plain objects stays
/// at that value for every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureModel {
    /// Own orthogonal component, optionally rotating by `drift` radians per
    /// frame so the object's appearance departs from its initial embedding.
    Anchored { drift: f64 },
    /// A distractor that imitates object `of`'s *initial* appearance, offset
    /// by `angle` radians against that object's drift direction.
    MimicInit { of: usize, angle: f64 },
}

impl Default for FeatureModel {
    fn default() -> Self {
        FeatureModel::Anchored { drift: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub trajectory: TrajectoryKind,
    /// Box width and height in pixels.
    pub box_size: (f64, f64),
    /// Half-open frame ranges during which the object is invisible.
    #[serde(default)]
    pub occlusions: Vec<(usize, usize)>,
    #[serde(default)]
    pub feature: FeatureModel,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        ObjectSpec {
            trajectory: TrajectoryKind::Linear {
                start: (10.0, 10.0),
                velocity: (0.0, 0.0),
            },
            box_size: (16.0, 16.0),
            occlusions: Vec::new(),
            feature: FeatureModel::default(),
        }
    }
}

impl ObjectSpec {
    fn occluded(&self, t: usize) -> bool {
        self.occlusions.iter().any(|&(s, e)| t >= s && t < e)
    }
}

/// One scripted prompt: at frame `t`, an event of `kind` referring to object
/// `target`. Text defaults to a seed-chosen template when not given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScript {
    pub t: usize,
    pub kind: EventKind,
    pub target: usize,
    #[serde(default)]
    pub text: Option<String>,
}

impl EventScript {
    pub fn new(t: usize, kind: EventKind, target: usize) -> Self {
        EventScript {
            t,
            kind,
            target,
            text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub n_frames: usize,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectSpec>,
    pub events: Vec<EventScript>,
    /// Pairwise cosine similarity between object feature vectors, in [0, 1].
    pub distractor_similarity: f64,
}

/// Ground-truth environment behind a synthesized sequence: every object's
/// box, visibility, and feature vector per frame, plus the referent timeline.
#[derive(Debug, Clone)]
pub struct World {
    pub size: FrameSize,
    pub referent: Vec<usize>,
    pub objects: Vec<WorldObject>,
}

#[derive(Debug, Clone)]
pub struct WorldObject {
    pub boxes: Vec<BoundingBox>,
    pub visible: Vec<bool>,
    pub features: Vec<Vec<f64>>,
}

impl World {
    pub fn n_frames(&self) -> usize {
        self.referent.len()
    }

    /// Indices and boxes of objects visible at frame `t`.
    pub fn visible_objects(&self, t: usize) -> impl Iterator<Item = (usize, &BoundingBox)> {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.visible[t])
            .map(move |(i, o)| (i, &o.boxes[t]))
    }

    /// The visible object with the highest overlap against `query`, if any
    /// overlaps at all.
    pub fn best_overlap(&self, t: usize, query: &BoundingBox) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in self.visible_objects(t) {
            let v = iou(query, b);
            if v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best
    }

    /// Feature vector of the visible object best matching `query`.
    pub fn embed(&self, t: usize, query: &BoundingBox) -> Option<&[f64]> {
        self.best_overlap(t, query)
            .map(|(i, _)| self.objects[i].features[t].as_slice())
    }

    /// Feature vector of object `i` at frame `t`.
    pub fn feature(&self, i: usize, t: usize) -> &[f64] {
        &self.objects[i].features[t]
    }

    /// Trajectory box of the referent at `t`, defined even while occluded.
    pub fn referent_box(&self, t: usize) -> &BoundingBox {
        &self.objects[self.referent[t]].boxes[t]
    }
}

const MICRO: f64 = 1e-6;

/// Snaps a value to the six-decimal grid used by the file format, so that
/// in-memory sequences round-trip bit-exactly through save/load. This must
/// agree with the serializer's quantization, including its rounding
/// direction.
fn snap(v: f64) -> f64 {
    crate::jsonfmt::quantize(v)
}

fn fitted_box(center: (f64, f64), size: (f64, f64), frame: FrameSize) -> BoundingBox {
    let w = snap(size.0.min(frame.width as f64));
    let h = snap(size.1.min(frame.height as f64));
    let place = |c: f64, extent: f64, max: f64| -> f64 {
        let mut x = snap((c - extent / 2.0).clamp(0.0, max - extent));
        if x < 0.0 {
            x = 0.0;
        }
        // Guard against the snap landing a rounding step past the far edge.
        while x + extent > max && x > 0.0 {
            x = snap(x - MICRO);
        }
        x
    };
    BoundingBox {
        x: place(center.0, w, frame.width as f64),
        y: place(center.1, h, frame.height as f64),
        w,
        h,
    }
}

fn feature_vector(spec: &SynthSpec, object: usize, t: usize) -> Vec<f64> {
    let s = spec.distractor_similarity;
    let anchor = s.sqrt();
    let ortho = (1.0 - s).sqrt();
    let axes = |i: usize| (1 + 2 * i, 2 + 2 * i);
    let mut v = vec![0.0; FEATURE_DIM];
    v[0] = anchor;
    match spec.objects[object].feature {
        FeatureModel::Anchored { drift } => {
            let (a, b) = axes(object);
            let theta = drift * t as f64;
            v[a] = ortho * theta.cos();
            v[b] = ortho * theta.sin();
        }
        FeatureModel::MimicInit { of, angle } => {
            let (a, b) = axes(of);
            v[a] = ortho * angle.cos();
            v[b] = -ortho * angle.sin();
        }
    }
    for x in &mut v {
        *x = snap(*x);
    }
    v
}

fn default_text(rng: &mut ChaCha8Rng, kind: EventKind, target: usize) -> String {
    let templates: &[&str] = match kind {
        EventKind::Init => &[
            "track object {}",
            "follow object {}",
            "keep an eye on object {}",
        ],
        EventKind::Correction => &[
            "you drifted, get back on object {}",
            "re-center on object {}",
        ],
        EventKind::Refine => &["tighten the box around object {}", "focus on object {}"],
        EventKind::Switch => &["switch to object {}", "now follow object {}"],
    };
    let pick = templates[rng.gen_range(0..templates.len())];
    pick.replace("{}", &target.to_string())
}

fn check(spec: &SynthSpec) -> Result<FrameSize, SynthError> {
    if spec.n_frames == 0 {
        return Err(SynthError::NoFrames);
    }
    if spec.objects.is_empty() {
        return Err(SynthError::NoObjects);
    }
    let max_objects = (FEATURE_DIM - 2) / 2;
    if spec.objects.len() > max_objects {
        return Err(SynthError::TooManyObjects {
            n: spec.objects.len(),
            max: max_objects,
        });
    }
    if !(0.0..=1.0).contains(&spec.distractor_similarity) {
        return Err(SynthError::BadSimilarity(spec.distractor_similarity));
    }
    let size = FrameSize::new(spec.width, spec.height)
        .map_err(|_| SynthError::BadFrameSize(spec.width, spec.height))?;
    for (i, obj) in spec.objects.iter().enumerate() {
        obj.trajectory.validate(i)?;
        if obj.box_size.0 <= 0.0
            || obj.box_size.1 <= 0.0
            || obj.box_size.0 > spec.width as f64
            || obj.box_size.1 > spec.height as f64
        {
            return Err(SynthError::BadBoxSize { object: i });
        }
        if let FeatureModel::MimicInit { of, .. } = obj.feature {
            if of >= spec.objects.len() {
                return Err(SynthError::BadTrajectory {
                    object: i,
                    message: format!("mimic references unknown object {of}"),
                });
            }
        }
    }
    if spec.events.is_empty() || spec.events[0].kind != EventKind::Init || spec.events[0].t != 0 {
        return Err(SynthError::BadSchedule);
    }
    let mut referent = spec.events[0].target;
    for (i, ev) in spec.events.iter().enumerate() {
        if ev.t >= spec.n_frames {
            return Err(SynthError::BadEventFrame {
                index: i,
                t: ev.t,
                n_frames: spec.n_frames,
            });
        }
        if ev.target >= spec.objects.len() {
            return Err(SynthError::BadTarget {
                index: i,
                target: ev.target,
            });
        }
        if i > 0 {
            if ev.t <= spec.events[i - 1].t {
                return Err(SynthError::EventsNotIncreasing { index: i });
            }
            match ev.kind {
                EventKind::Switch => referent = ev.target,
                EventKind::Init => return Err(SynthError::BadSchedule),
                _ => {
                    if ev.target != referent {
                        return Err(SynthError::NonSwitchRetarget { index: i });
                    }
                }
            }
        }
    }
    Ok(size)
}

/// Generates the sequence together with its full world.
pub fn synthesize_with_world(spec: &SynthSpec) -> Result<(Sequence, World), SynthError> {
    let size = check(spec)?;
    let n = spec.n_frames;

    let objects: Vec<WorldObject> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, obj)| {
            let boxes = (0..n)
                .map(|t| fitted_box(obj.trajectory.center(t), obj.box_size, size))
                .collect();
            let visible = (0..n).map(|t| !obj.occluded(t)).collect();
            let features = (0..n).map(|t| feature_vector(spec, i, t)).collect();
            WorldObject {
                boxes,
                visible,
                features,
            }
        })
        .collect();

    let mut referent = vec![0usize; n];
    let mut current = spec.events[0].target;
    let mut next_event = 0usize;
    for (t, slot) in referent.iter_mut().enumerate() {
        while next_event < spec.events.len() && spec.events[next_event].t == t {
            let ev = &spec.events[next_event];
            if ev.kind == EventKind::Switch || ev.kind == EventKind::Init {
                current = ev.target;
            }
            next_event += 1;
        }
        *slot = current;
    }

    let frames: Vec<FrameAnnotation> = (0..n)
        .map(|t| {
            let obj = referent[t];
            let state = if objects[obj].visible[t] {
                FrameState::Present(objects[obj].boxes[t])
            } else {
                FrameState::Absent
            };
            FrameAnnotation { t, state }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::with_capacity(spec.events.len());
    let mut prev_referent = spec.events[0].target;
    for script in &spec.events {
        let gt_new = objects[script.target].boxes[script.t];
        let gt_old = if script.kind == EventKind::Switch {
            Some(objects[prev_referent].boxes[script.t])
        } else {
            None
        };
        let text = script
            .text
            .clone()
            .unwrap_or_else(|| default_text(&mut rng, script.kind, script.target));
        events.push(InteractionEvent {
            t: script.t,
            kind: script.kind,
            text,
            gt_new,
            gt_old,
        });
        if script.kind == EventKind::Switch || script.kind == EventKind::Init {
            prev_referent = script.target;
        }
    }

    let mut feature_map: ObjectFeatures = BTreeMap::new();
    for (i, obj) in objects.iter().enumerate() {
        feature_map.insert(i.to_string(), obj.features.clone());
    }

    let sequence = Sequence {
        name: spec.name.clone(),
        scenario: spec.scenario,
        size,
        frames,
        events,
        object_features: Some(feature_map),
    };
    let world = World {
        size,
        referent,
        objects,
    };
    Ok((sequence, world))
}

/// Generates only the sequence.
pub fn synthesize(spec: &SynthSpec) -> Result<Sequence, SynthError> {
    synthesize_with_world(spec).map(|(seq, _)| seq)
}

impl SynthSpec {
    /// Builds a randomized but fully deterministic spec: trajectories,
    /// occlusions, and a plausible prompt schedule are all drawn from the
    /// seed.
    pub fn randomized(
        name: impl Into<String>,
        scenario: Scenario,
        seed: u64,
        n_frames: usize,
        n_objects: usize,
        distractor_similarity: f64,
    ) -> SynthSpec {
        let n_frames = n_frames.max(4);
        let n_objects = n_objects.clamp(1, (FEATURE_DIM - 2) / 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (width, height) = (640u32, 480u32);

        let objects: Vec<ObjectSpec> = (0..n_objects)
            .map(|_| {
                let box_w = rng.gen_range(20.0..60.0);
                let box_h = rng.gen_range(20.0..60.0);
                let start = (
                    rng.gen_range(0.15..0.85) * width as f64,
                    rng.gen_range(0.15..0.85) * height as f64,
                );
                let trajectory = match rng.gen_range(0..3) {
                    0 => TrajectoryKind::Linear {
                        start,
                        velocity: (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                    },
                    1 => TrajectoryKind::Sinusoidal {
                        center: start,
                        amplitude: (rng.gen_range(20.0..80.0), rng.gen_range(20.0..80.0)),
                        period: rng.gen_range(30.0..120.0),
                        phase: rng.gen_range(0.0..TAU),
                    },
                    _ => {
                        let mid = n_frames / 2;
                        TrajectoryKind::PiecewiseLinear {
                            waypoints: vec![
                                (0, start),
                                (
                                    mid.max(1),
                                    (
                                        rng.gen_range(0.15..0.85) * width as f64,
                                        rng.gen_range(0.15..0.85) * height as f64,
                                    ),
                                ),
                                (
                                    n_frames - 1,
                                    (
                                        rng.gen_range(0.15..0.85) * width as f64,
                                        rng.gen_range(0.15..0.85) * height as f64,
                                    ),
                                ),
                            ],
                        }
                    }
                };
                let occlusions = if rng.gen_bool(0.4) && n_frames > 12 {
                    let start = rng.gen_range(2..n_frames - 6);
                    let len = rng.gen_range(2..(n_frames / 4).max(3));
                    vec![(start, (start + len).min(n_frames))]
                } else {
                    Vec::new()
                };
                ObjectSpec {
                    trajectory,
                    box_size: (box_w, box_h),
                    occlusions,
                    feature: FeatureModel::default(),
                }
            })
            .collect();

        // Init plus 2-4 follow-up prompts at spread-out frames. Frames are
        // drawn first and sorted so switch targets chain correctly.
        let extra = rng.gen_range(2..5).min(n_frames.saturating_sub(1));
        let mut frames_used: Vec<usize> = Vec::new();
        while frames_used.len() < extra {
            let t = rng.gen_range(1..n_frames);
            if !frames_used.contains(&t) {
                frames_used.push(t);
            }
        }
        frames_used.sort_unstable();
        let mut referent = rng.gen_range(0..n_objects);
        let mut events = vec![EventScript::new(0, EventKind::Init, referent)];
        for t in frames_used {
            let kind = if n_objects > 1 && rng.gen_bool(0.5) {
                EventKind::Switch
            } else if rng.gen_bool(0.5) {
                EventKind::Correction
            } else {
                EventKind::Refine
            };
            let target = if kind == EventKind::Switch {
                let mut pick = rng.gen_range(0..n_objects);
                if pick == referent {
                    pick = (pick + 1) % n_objects;
                }
                referent = pick;
                pick
            } else {
                referent
            };
            events.push(EventScript::new(t, kind, target));
        }

        SynthSpec {
            name: name.into(),
            scenario,
            seed,
            n_frames,
            width,
            height,
            objects,
            events,
            distractor_similarity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::validate;
    use super::*;

    fn two_object_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            name: "synth-unit".into(),
            scenario: Scenario::SportsAnalysis,
            seed,
            n_frames: 100,
            width: 640,
            height: 480,
            objects: vec![
                ObjectSpec {
                    trajectory: TrajectoryKind::Linear {
                        start: (100.0, 100.0),
                        velocity: (1.0, 0.5),
                    },
                    box_size: (40.0, 30.0),
                    occlusions: vec![(60, 70)],
                    ..Default::default()
                },
                ObjectSpec {
                    trajectory: TrajectoryKind::Linear {
                        start: (400.0, 300.0),
                        velocity: (-1.0, 0.0),
                    },
                    box_size: (40.0, 30.0),
                    ..Default::default()
                },
            ],
            events: vec![
                EventScript::new(0, EventKind::Init, 0),
                EventScript::new(50, EventKind::Switch, 1),
            ],
            distractor_similarity: 0.5,
        }
    }

    #[test]
    fn single_linear_object_has_collinear_centers() {
        let spec = SynthSpec {
            name: "line".into(),
            scenario: Scenario::Other,
            seed: 1,
            n_frames: 20,
            width: 640,
            height: 480,
            objects: vec![ObjectSpec {
                trajectory: TrajectoryKind::Linear {
                    start: (100.0, 100.0),
                    velocity: (2.0, 1.0),
                },
                box_size: (30.0, 30.0),
                ..Default::default()
            }],
            events: vec![EventScript::new(0, EventKind::Init, 0)],
            distractor_similarity: 0.3,
        };
        let seq = synthesize(&spec).unwrap();
        assert!(seq.frames.iter().all(|f| f.state.is_present()));
        let centers: Vec<(f64, f64)> = seq
            .frames
            .iter()
            .map(|f| f.state.as_box().unwrap().center())
            .collect();
        for w in centers.windows(3) {
            let cross =
                (w[1].0 - w[0].0) * (w[2].1 - w[0].1) - (w[1].1 - w[0].1) * (w[2].0 - w[0].0);
            assert!(cross.abs() < 1e-6, "centers not collinear: {cross}");
        }
    }

    #[test]
    fn switch_partitions_the_referent_timeline() {
        let spec = two_object_spec(3);
        let (seq, world) = synthesize_with_world(&spec).unwrap();
        for t in 0..50 {
            assert_eq!(world.referent[t], 0);
            if world.objects[0].visible[t] {
                assert_eq!(
                    seq.frames[t].state.as_box(),
                    Some(&world.objects[0].boxes[t])
                );
            }
        }
        for t in 50..100 {
            assert_eq!(world.referent[t], 1);
            assert_eq!(
                seq.frames[t].state.as_box(),
                Some(&world.objects[1].boxes[t])
            );
        }
        let sw = &seq.events[1];
        assert_eq!(sw.gt_old, Some(world.objects[0].boxes[50]));
        assert_eq!(sw.gt_new, world.objects[1].boxes[50]);
    }

    #[test]
    fn absence_mirrors_occlusion_of_the_referent() {
        let (seq, world) = synthesize_with_world(&two_object_spec(4)).unwrap();
        for t in 0..100 {
            let occluded = !world.objects[world.referent[t]].visible[t];
            assert_eq!(
                matches!(seq.frames[t].state, FrameState::Absent),
                occluded,
                "frame {t}"
            );
        }
        // The scripted occlusion of object 0 covers frames 60..70, but the
        // referent switched at 50, so no frame is absent.
        assert!(seq.frames.iter().all(|f| f.state.is_present()));
    }

    #[test]
    fn identical_seeds_give_byte_identical_output() {
        let a = synthesize(&two_object_spec(42)).unwrap();
        let b = synthesize(&two_object_spec(42)).unwrap();
        assert_eq!(
            super::super::io::to_string(&a),
            super::super::io::to_string(&b)
        );
    }

    #[test]
    fn generated_sequences_validate_clean() {
        for seed in 0..20 {
            let spec =
                SynthSpec::randomized("prop", Scenario::ALL[seed % 6], seed as u64, 120, 3, 0.6);
            let seq = synthesize(&spec).unwrap();
            assert_eq!(validate(&seq), Vec::new(), "seed {seed}");
        }
    }

    #[test]
    fn feature_similarity_structure() {
        let (_, world) = synthesize_with_world(&two_object_spec(5)).unwrap();
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let f0 = world.feature(0, 10);
        let f1 = world.feature(1, 10);
        assert!((dot(f0, f0) - 1.0).abs() < 1e-4, "unit norm");
        assert!((dot(f0, f1) - 0.5).abs() < 1e-4, "pairwise similarity");
    }

    #[test]
    fn mimic_feature_decays_against_drifting_target() {
        let mut spec = two_object_spec(6);
        spec.objects[0].feature = FeatureModel::Anchored { drift: 0.01 };
        spec.objects[1].feature = FeatureModel::MimicInit { of: 0, angle: 0.4 };
        let (_, world) = synthesize_with_world(&spec).unwrap();
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let s = 0.5;
        let q = s + (1.0 - s) * 0.4f64.cos();
        let sim_init = dot(world.feature(1, 0), world.feature(0, 0));
        assert!((sim_init - q).abs() < 1e-4);
        // Similarity of the mimic against the target decays over time while
        // the mimic-to-initial similarity stays fixed.
        let sim_late = dot(world.feature(1, 90), world.feature(0, 90));
        assert!(sim_late < sim_init - 0.05);
        let self_sim_late = dot(world.feature(0, 90), world.feature(0, 0));
        assert!(
            sim_init > self_sim_late,
            "mimic should overtake the stale template"
        );
    }

    #[test]
    fn script_errors_are_reported() {
        let mut spec = two_object_spec(7);
        spec.events[1].t = 100;
        assert_eq!(
            synthesize(&spec).unwrap_err(),
            SynthError::BadEventFrame {
                index: 1,
                t: 100,
                n_frames: 100
            }
        );
        let mut spec = two_object_spec(7);
        spec.events[1].kind = EventKind::Correction;
        assert_eq!(
            synthesize(&spec).unwrap_err(),
            SynthError::NonSwitchRetarget { index: 1 }
        );
        let mut spec = two_object_spec(7);
        spec.events[0].t = 2;
        assert_eq!(synthesize(&spec).unwrap_err(), SynthError::BadSchedule);
    }

    #[test]
    fn boxes_stay_inside_the_frame() {
        // A trajectory that runs far off-screen still produces in-bounds boxes.
        let spec = SynthSpec {
            name: "clamp".into(),
            scenario: Scenario::UavTracking,
            seed: 8,
            n_frames: 50,
            width: 100,
            height: 80,
            objects: vec![ObjectSpec {
                trajectory: TrajectoryKind::Linear {
                    start: (90.0, 70.0),
                    velocity: (5.0, 5.0),
                },
                box_size: (30.0, 30.0),
                ..Default::default()
            }],
            events: vec![EventScript::new(0, EventKind::Init, 0)],
            distractor_similarity: 0.0,
        };
        let seq = synthesize(&spec).unwrap();
        assert_eq!(validate(&seq), Vec::new());
    }
}
