//! The four-dimensional interactive-tracking metric suite.
//!
//! A prediction track is scored against a sequence along four axes:
//!
//! - **Perception**: at prompt frames, the fraction of events whose IoU
//!   against the described target exceeds a threshold (accuracy), and the
//!   mean IoU (precision).
//! - **Responsiveness**: at switch events, the fraction where the prediction
//!   overlaps the new target more than the old one.
//! - **Tracking**: conventional success/precision curves with AUC, a 20 px
//!   precision score, and a normalized-precision score.
//! - **Interactiveness**: prompts divide the video into segments; the score
//!   is the mean over segments of the segment's mean IoU over valid frames.
//!
//! Only valid frames (ground truth present) enter IoU averages. A present
//! ground truth with an absent prediction counts as IoU 0 and an infinite
//! center error. Metrics that have no qualifying frames are reported as
//! absent values rather than zeros.

use crate::dataset::{FrameState, Scenario, Sequence};
use crate::geometry::{self, BoundingBox, GeometryError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("prediction frame {pred_t} scored against annotation frame {gt_t}")]
    MismatchedFrame { pred_t: usize, gt_t: usize },
    #[error("predictions cover {got} frames, sequence has {expected}")]
    Coverage { expected: usize, got: usize },
    #[error("no input to aggregate")]
    EmptyInput,
    #[error("sequence has no events")]
    NoEvents,
    #[error("invalid metric config: {0}")]
    BadConfig(String),
    #[error("{0}")]
    Geometry(#[from] GeometryError),
}

/// Per-frame prediction: a box or an explicit absence claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub t: usize,
    pub state: FrameState,
}

impl FramePrediction {
    pub fn present(t: usize, b: BoundingBox) -> Self {
        FramePrediction {
            t,
            state: FrameState::Present(b),
        }
    }

    pub fn absent(t: usize) -> Self {
        FramePrediction {
            t,
            state: FrameState::Absent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Perception IoU threshold.
    pub tau_perception: f64,
    /// Success-curve thresholds (strictly increasing, within [0, 1]).
    pub success_thresholds: Vec<f64>,
    /// Pixel threshold for the scalar precision score.
    pub precision_threshold_px: f64,
    /// Grid for the precision curve, in pixels.
    pub precision_grid: Vec<f64>,
    /// Grid for the normalized-precision curve.
    pub norm_precision_grid: Vec<f64>,
    /// Also require IoU(pred, gt_new) > 0.5 for a switch to count.
    pub require_switch_overlap: bool,
    /// Success comparator: `>=` instead of the default strict `>`.
    pub inclusive_success: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            tau_perception: 0.5,
            success_thresholds: (0..21).map(|i| i as f64 * 0.05).collect(),
            precision_threshold_px: 20.0,
            precision_grid: (0..51).map(|i| i as f64).collect(),
            norm_precision_grid: (0..51).map(|i| i as f64 * 0.01).collect(),
            require_switch_overlap: false,
            inclusive_success: false,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.tau_perception > 0.0 && self.tau_perception < 1.0) {
            return Err(MetricError::BadConfig(format!(
                "tau_perception must lie in (0, 1), got {}",
                self.tau_perception
            )));
        }
        for (name, grid) in [
            ("success_thresholds", &self.success_thresholds),
            ("precision_grid", &self.precision_grid),
            ("norm_precision_grid", &self.norm_precision_grid),
        ] {
            if grid.is_empty() {
                return Err(MetricError::BadConfig(format!("{name} is empty")));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(MetricError::BadConfig(format!(
                    "{name} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    fn success_hit(&self, iou: f64, theta: f64) -> bool {
        if self.inclusive_success {
            iou >= theta
        } else {
            iou > theta
        }
    }
}

/// IoU of a prediction against a ground-truth state.
///
/// `None` when the ground truth is absent (the frame is excluded from IoU
/// averages); an absent prediction against a present ground truth scores 0.
pub fn state_iou(pred: &FrameState, gt: &FrameState) -> Option<f64> {
    match (gt, pred) {
        (FrameState::Absent, _) => None,
        (FrameState::Present(_), FrameState::Absent) => Some(0.0),
        (FrameState::Present(g), FrameState::Present(p)) => Some(geometry::iou(p, g)),
    }
}

/// Frame-level IoU with an index-agreement check; mismatched indices are a
/// harness bug, not data.
pub fn frame_iou(
    pred: &FramePrediction,
    gt: &crate::dataset::FrameAnnotation,
) -> Result<Option<f64>, MetricError> {
    if pred.t != gt.t {
        return Err(MetricError::MismatchedFrame {
            pred_t: pred.t,
            gt_t: gt.t,
        });
    }
    Ok(state_iou(&pred.state, &gt.state))
}

/// A half-open frame range owned by one prompt, with its valid-frame subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    /// Exclusive end.
    pub end: usize,
    /// Frames in `[start, end)` whose ground truth is present.
    pub valid: Vec<usize>,
}

/// Prompt-induced partition of the sequence; one segment per event.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn k(&self) -> usize {
        self.segments.len()
    }
}

/// Splits the sequence into one segment per event: from the event's frame to
/// the frame before the next event; the last segment runs to the end.
pub fn segment_by_prompts(seq: &Sequence) -> Result<SegmentSet, MetricError> {
    if seq.events.is_empty() {
        return Err(MetricError::NoEvents);
    }
    let n = seq.frames.len();
    let mut segments = Vec::with_capacity(seq.events.len());
    for (i, ev) in seq.events.iter().enumerate() {
        let start = ev.t;
        let end = seq.events.get(i + 1).map_or(n, |next| next.t);
        let valid = (start..end)
            .filter(|&t| seq.frames[t].state.is_present())
            .collect();
        segments.push(Segment { start, end, valid });
    }
    Ok(SegmentSet { segments })
}

fn check_coverage(preds: &[FramePrediction], seq: &Sequence) -> Result<(), MetricError> {
    if preds.len() != seq.frames.len() {
        return Err(MetricError::Coverage {
            expected: seq.frames.len(),
            got: preds.len(),
        });
    }
    for (pred, gt) in preds.iter().zip(&seq.frames) {
        if pred.t != gt.t {
            return Err(MetricError::MismatchedFrame {
                pred_t: pred.t,
                gt_t: gt.t,
            });
        }
    }
    Ok(())
}

/// Perception accuracy and precision over prompt frames.
///
/// The ground truth at an event frame is the event's `gt_new`. Event frames
/// whose sequence annotation is absent are excluded; `None` when no event
/// frame qualifies.
pub fn perception(
    preds: &[FramePrediction],
    seq: &Sequence,
    cfg: &MetricConfig,
) -> Result<Option<(f64, f64)>, MetricError> {
    check_coverage(preds, seq)?;
    if seq.events.is_empty() {
        return Err(MetricError::NoEvents);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ev in &seq.events {
        if !seq.frames[ev.t].state.is_present() {
            continue;
        }
        let iou = state_iou(&preds[ev.t].state, &FrameState::Present(ev.gt_new))
            .expect("gt present by construction");
        if iou > cfg.tau_perception {
            hits += 1;
        }
        sum += iou;
        count += 1;
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some((hits as f64 / count as f64, sum / count as f64)))
}

/// Switch accuracy: the fraction of switch events where the prediction
/// overlaps the new target strictly more than the old one. Ties count as
/// incorrect. With `require_switch_overlap`, the prediction must also
/// overlap the new target with IoU > 0.5.
pub fn responsiveness(
    preds: &[FramePrediction],
    seq: &Sequence,
    cfg: &MetricConfig,
) -> Result<Option<f64>, MetricError> {
    check_coverage(preds, seq)?;
    let mut correct = 0usize;
    let mut count = 0usize;
    for ev in seq.switch_events() {
        if !seq.frames[ev.t].state.is_present() {
            continue;
        }
        let gt_old = ev
            .gt_old
            .as_ref()
            .expect("validated switch events carry gt_old");
        let (iou_new, iou_old) = match &preds[ev.t].state {
            FrameState::Absent => (0.0, 0.0),
            FrameState::Present(p) => (geometry::iou(p, &ev.gt_new), geometry::iou(p, gt_old)),
        };
        let mut ok = iou_new > iou_old;
        if cfg.require_switch_overlap {
            ok = ok && iou_new > 0.5;
        }
        if ok {
            correct += 1;
        }
        count += 1;
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(correct as f64 / count as f64))
}

/// Inner fold of the interactive score: mean over segments of each
/// segment's mean IoU. Segments with no valid frames are dropped from the
/// outer mean; `None` when every segment is empty.
pub fn interactive_score_from_segments(segment_ious: &[Vec<f64>]) -> Option<f64> {
    let mut outer_sum = 0.0;
    let mut outer_count = 0usize;
    for seg in segment_ious {
        if seg.is_empty() {
            continue;
        }
        outer_sum += seg.iter().sum::<f64>() / seg.len() as f64;
        outer_count += 1;
    }
    if outer_count == 0 {
        None
    } else {
        Some(outer_sum / outer_count as f64)
    }
}

/// Interactive score over the prompt-induced segmentation.
pub fn interactive_score(
    preds: &[FramePrediction],
    seq: &Sequence,
) -> Result<Option<f64>, MetricError> {
    check_coverage(preds, seq)?;
    let segments = segment_by_prompts(seq)?;
    let per_segment: Vec<Vec<f64>> = segments
        .segments
        .iter()
        .map(|seg| {
            seg.valid
                .iter()
                .map(|&t| {
                    state_iou(&preds[t].state, &seq.frames[t].state)
                        .expect("valid frames have present ground truth")
                })
                .collect()
        })
        .collect();
    Ok(interactive_score_from_segments(&per_segment))
}

/// Sampled curve values; lengths match the configured grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub success: Vec<f64>,
    pub precision: Vec<f64>,
    pub norm_precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingMetrics {
    pub auc: f64,
    pub precision: f64,
    pub norm_precision: f64,
    pub curves: Curves,
}

/// Success/precision curves and their scalar summaries over valid frames.
///
/// Comparator conventions, pinned by the worked boundary cases: the success
/// curve uses strict `>` by default (a perfect track scores 20/21 on the
/// default 21-point grid), the pixel precision curve and scalar use
/// inclusive `<=`, and the normalized-precision curve uses strict `<` (a
/// perfect track scores 50/51). `None` when the sequence has no valid
/// frames.
pub fn tracking_metrics(
    preds: &[FramePrediction],
    seq: &Sequence,
    cfg: &MetricConfig,
) -> Result<Option<TrackingMetrics>, MetricError> {
    check_coverage(preds, seq)?;
    cfg.validate()?;

    let mut ious = Vec::new();
    let mut dists = Vec::new();
    let mut norm_dists = Vec::new();
    for (pred, frame) in preds.iter().zip(&seq.frames) {
        let gt = match &frame.state {
            FrameState::Absent => continue,
            FrameState::Present(g) => g,
        };
        match &pred.state {
            FrameState::Absent => {
                ious.push(0.0);
                dists.push(f64::INFINITY);
                norm_dists.push(f64::INFINITY);
            }
            FrameState::Present(p) => {
                ious.push(geometry::iou(p, gt));
                dists.push(geometry::center_distance(p, gt));
                norm_dists.push(geometry::normalized_center_distance(p, gt)?);
            }
        }
    }
    if ious.is_empty() {
        return Ok(None);
    }
    let n = ious.len() as f64;

    let success: Vec<f64> = cfg
        .success_thresholds
        .iter()
        .map(|&theta| ious.iter().filter(|&&v| cfg.success_hit(v, theta)).count() as f64 / n)
        .collect();
    let precision_curve: Vec<f64> = cfg
        .precision_grid
        .iter()
        .map(|&g| dists.iter().filter(|&&d| d <= g).count() as f64 / n)
        .collect();
    let norm_curve: Vec<f64> = cfg
        .norm_precision_grid
        .iter()
        .map(|&g| norm_dists.iter().filter(|&&d| d < g).count() as f64 / n)
        .collect();

    let auc = success.iter().sum::<f64>() / success.len() as f64;
    let precision = dists
        .iter()
        .filter(|&&d| d <= cfg.precision_threshold_px)
        .count() as f64
        / n;
    let norm_precision = norm_curve.iter().sum::<f64>() / norm_curve.len() as f64;

    Ok(Some(TrackingMetrics {
        auc,
        precision,
        norm_precision,
        curves: Curves {
            success,
            precision: precision_curve,
            norm_precision: norm_curve,
        },
    }))
}

/// The seven scalar metrics; absent when undefined for the input.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalarSet {
    pub interactive_score: Option<f64>,
    pub responsiveness: Option<f64>,
    pub perception_accuracy: Option<f64>,
    pub perception_precision: Option<f64>,
    pub auc: Option<f64>,
    pub precision: Option<f64>,
    pub norm_precision: Option<f64>,
}

impl ScalarSet {
    pub const FIELDS: [&'static str; 7] = [
        "interactive_score",
        "responsiveness",
        "perception_accuracy",
        "perception_precision",
        "auc",
        "precision",
        "norm_precision",
    ];

    pub fn get(&self, field: &str) -> Option<f64> {
        match field {
            "interactive_score" => self.interactive_score,
            "responsiveness" => self.responsiveness,
            "perception_accuracy" => self.perception_accuracy,
            "perception_precision" => self.perception_precision,
            "auc" => self.auc,
            "precision" => self.precision,
            "norm_precision" => self.norm_precision,
            _ => None,
        }
    }
}

/// Per-sequence evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub scenario: Scenario,
    pub scalars: ScalarSet,
    pub curves: Option<Curves>,
}

/// Scores one prediction track against its sequence.
pub fn evaluate_sequence(
    preds: &[FramePrediction],
    seq: &Sequence,
    cfg: &MetricConfig,
) -> Result<SequenceReport, MetricError> {
    cfg.validate()?;
    let perception = perception(preds, seq, cfg)?;
    let responsiveness = responsiveness(preds, seq, cfg)?;
    let interactive = interactive_score(preds, seq)?;
    let tracking = tracking_metrics(preds, seq, cfg)?;
    let (auc, precision, norm_precision, curves) = match tracking {
        Some(t) => (
            Some(t.auc),
            Some(t.precision),
            Some(t.norm_precision),
            Some(t.curves),
        ),
        None => (None, None, None, None),
    };
    Ok(SequenceReport {
        name: seq.name.clone(),
        scenario: seq.scenario,
        scalars: ScalarSet {
            interactive_score: interactive,
            responsiveness,
            perception_accuracy: perception.map(|(a, _)| a),
            perception_precision: perception.map(|(_, p)| p),
            auc,
            precision,
            norm_precision,
        },
        curves,
    })
}

/// Aggregated scalars and pointwise-averaged curves over a set of sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateBucket {
    pub count: usize,
    pub scalars: ScalarSet,
    pub curves: Option<Curves>,
}

/// Full evaluation report: overall bucket, per-scenario buckets, and the
/// per-sequence reports they were folded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: AggregateBucket,
    pub per_scenario: BTreeMap<Scenario, AggregateBucket>,
    pub sequences: Vec<SequenceReport>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values.flatten() {
        sum += v;
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(sum / count as f64)
    }
}

fn average_curves(reports: &[&SequenceReport]) -> Option<Curves> {
    let with: Vec<&Curves> = reports.iter().filter_map(|r| r.curves.as_ref()).collect();
    let first = *with.first()?;
    let mut out = Curves {
        success: vec![0.0; first.success.len()],
        precision: vec![0.0; first.precision.len()],
        norm_precision: vec![0.0; first.norm_precision.len()],
    };
    for c in &with {
        for (acc, v) in out.success.iter_mut().zip(&c.success) {
            *acc += v;
        }
        for (acc, v) in out.precision.iter_mut().zip(&c.precision) {
            *acc += v;
        }
        for (acc, v) in out.norm_precision.iter_mut().zip(&c.norm_precision) {
            *acc += v;
        }
    }
    let n = with.len() as f64;
    for v in out
        .success
        .iter_mut()
        .chain(out.precision.iter_mut())
        .chain(out.norm_precision.iter_mut())
    {
        *v /= n;
    }
    Some(out)
}

fn fold_bucket(reports: &[&SequenceReport]) -> AggregateBucket {
    let scalars = ScalarSet {
        interactive_score: mean_of(reports.iter().map(|r| r.scalars.interactive_score)),
        responsiveness: mean_of(reports.iter().map(|r| r.scalars.responsiveness)),
        perception_accuracy: mean_of(reports.iter().map(|r| r.scalars.perception_accuracy)),
        perception_precision: mean_of(reports.iter().map(|r| r.scalars.perception_precision)),
        auc: mean_of(reports.iter().map(|r| r.scalars.auc)),
        precision: mean_of(reports.iter().map(|r| r.scalars.precision)),
        norm_precision: mean_of(reports.iter().map(|r| r.scalars.norm_precision)),
    };
    AggregateBucket {
        count: reports.len(),
        scalars,
        curves: average_curves(reports),
    }
}

/// Unweighted mean of per-sequence scalars, overall and per scenario;
/// curves averaged pointwise. Sequences for which a scalar is undefined are
/// excluded from that scalar's mean. The fold is order-independent and the
/// `sequences` listing is canonicalized by name, so aggregation gives
/// byte-identical reports regardless of arrival order.
pub fn aggregate(mut reports: Vec<SequenceReport>) -> Result<EvalReport, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    let refs: Vec<&SequenceReport> = reports.iter().collect();
    let overall = fold_bucket(&refs);
    let mut per_scenario = BTreeMap::new();
    for scenario in Scenario::ALL {
        let bucket: Vec<&SequenceReport> =
            reports.iter().filter(|r| r.scenario == scenario).collect();
        if !bucket.is_empty() {
            per_scenario.insert(scenario, fold_bucket(&bucket));
        }
    }
    Ok(EvalReport {
        overall,
        per_scenario,
        sequences: reports,
    })
}
