//! The cognitive arbitration module: drift detection between consecutive
//! tracker boxes, the tracker-vs-grounder overlap comparison, the
//! keep-vs-reinit decision with final-box selection, and the paired memory
//! updates.
//!
//! Boundary conventions follow the wording "drops below" / "exceeds":
//! strict comparisons, with equality resolving to the non-triggering branch.

use crate::geometry::{self, BoundingBox, FrameSize};
use crate::memory::Polarity;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ArbitrationError {
    #[error("invalid arbitration config: {0}")]
    BadConfig(String),
}

/// Which components of the full pipeline are disabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSet {
    /// No grounder: prompts beyond initialization are ignored.
    pub no_ipm: bool,
    /// Decisions unchanged, but no memory updates are emitted.
    pub no_memory: bool,
    /// No arbitration at all; the harness adopts grounded boxes blindly.
    pub no_cam: bool,
    /// Bare IoU thresholding at prompt frames only: no memory updates and no
    /// drift-triggered re-verification.
    pub naive_iou: bool,
}

impl AblationSet {
    pub const NAMES: [&'static str; 4] = ["no-ipm", "no-memory", "no-cam", "naive-iou"];

    pub fn none() -> Self {
        Self::default()
    }

    pub fn enable(&mut self, name: &str) -> Result<(), String> {
        match name {
            "no-ipm" => self.no_ipm = true,
            "no-memory" => self.no_memory = true,
            "no-cam" => self.no_cam = true,
            "naive-iou" => self.naive_iou = true,
            other => return Err(format!("unknown ablation {other:?}")),
        }
        Ok(())
    }

    pub fn active(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.no_ipm {
            out.push("no-ipm");
        }
        if self.no_memory {
            out.push("no-memory");
        }
        if self.no_cam {
            out.push("no-cam");
        }
        if self.naive_iou {
            out.push("naive-iou");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationConfig {
    /// IoU threshold used at the initialization arbitration.
    pub tau_init: f64,
    /// IoU threshold used at runtime arbitrations.
    pub tau_reinit: f64,
    /// Drift trigger on consecutive centers, as a fraction of the frame
    /// diagonal.
    pub delta_c: f64,
    pub ablation: AblationSet,
}

impl Default for ArbitrationConfig {
    fn default() -> Self {
        ArbitrationConfig {
            tau_init: 0.3,
            tau_reinit: 0.6,
            delta_c: 0.1,
            ablation: AblationSet::none(),
        }
    }
}

impl ArbitrationConfig {
    pub fn validate(&self) -> Result<(), ArbitrationError> {
        if !(self.tau_init > 0.0 && self.tau_init <= self.tau_reinit && self.tau_reinit < 1.0) {
            return Err(ArbitrationError::BadConfig(format!(
                "thresholds must satisfy 0 < tau_init <= tau_reinit < 1, got {} / {}",
                self.tau_init, self.tau_reinit
            )));
        }
        if !(self.delta_c > 0.0 && self.delta_c <= 1.0) {
            return Err(ArbitrationError::BadConfig(format!(
                "delta_c must lie in (0, 1], got {}",
                self.delta_c
            )));
        }
        Ok(())
    }

    pub fn tau_for(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Init => self.tau_init,
            Phase::Runtime => self.tau_reinit,
        }
    }
}

/// Initialization vs runtime arbitration; selects the IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Runtime,
}

/// Keep the tracker's box or re-initialize onto the grounded one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Keep,
    Reinit { with: BoundingBox },
}

impl Action {
    pub fn is_reinit(&self) -> bool {
        matches!(self, Action::Reinit { .. })
    }
}

/// A memory update the caller applies to the session banks.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryOp {
    pub polarity: Polarity,
    pub embedding: Vec<f64>,
}

/// Outcome of one arbitration: the action, the final box for the frame, the
/// measured IoU and threshold, and the memory updates to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrationDecision {
    pub action: Action,
    pub final_box: BoundingBox,
    pub iou: f64,
    pub tau: f64,
    pub memory_ops: Vec<MemoryOp>,
}

/// Embeddings of the two competing boxes; either side may be unavailable
/// (no feature source for that region), in which case its memory update is
/// skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbeddingPair<'a> {
    pub track: Option<&'a [f64]>,
    pub ipm: Option<&'a [f64]>,
}

/// True when the displacement between consecutive box centers exceeds
/// `delta_c` times the frame diagonal. Equality does not trigger, and the
/// test is symmetric under swapping the two boxes.
pub fn detect_drift(
    prev_box: &BoundingBox,
    cur_box: &BoundingBox,
    frame: &FrameSize,
    cfg: &ArbitrationConfig,
) -> bool {
    geometry::center_distance(prev_box, cur_box) > cfg.delta_c * frame.diagonal()
}

/// Compares the tracker's box against the grounded box and decides.
///
/// If their IoU drops below the phase threshold the tracker is
/// re-initialized onto the grounded box: the final box is the grounded one,
/// the tracker embedding goes to the negative bank, and the grounded
/// embedding to the positive bank. Otherwise the tracker box is kept and its
/// embedding reinforces the positive bank. Equality with the threshold
/// keeps.
///
/// Ablations: `naive_iou` and `no_memory` keep the decision but emit no
/// memory updates; `no_cam` always keeps with no updates (callers normally
/// bypass arbitration entirely in that configuration).
pub fn arbitrate(
    b_track: &BoundingBox,
    b_ipm: &BoundingBox,
    embeddings: EmbeddingPair<'_>,
    cfg: &ArbitrationConfig,
    phase: Phase,
) -> Result<ArbitrationDecision, ArbitrationError> {
    cfg.validate()?;
    let tau = cfg.tau_for(phase);
    let iou = geometry::iou(b_track, b_ipm);

    if cfg.ablation.no_cam {
        return Ok(ArbitrationDecision {
            action: Action::Keep,
            final_box: *b_track,
            iou,
            tau,
            memory_ops: Vec::new(),
        });
    }

    let emit_memory = !(cfg.ablation.no_memory || cfg.ablation.naive_iou);
    let mut memory_ops = Vec::new();
    let decision = if iou < tau {
        if emit_memory {
            if let Some(e) = embeddings.track {
                memory_ops.push(MemoryOp {
                    polarity: Polarity::Negative,
                    embedding: e.to_vec(),
                });
            }
            if let Some(e) = embeddings.ipm {
                memory_ops.push(MemoryOp {
                    polarity: Polarity::Positive,
                    embedding: e.to_vec(),
                });
            }
        }
        ArbitrationDecision {
            action: Action::Reinit { with: *b_ipm },
            final_box: *b_ipm,
            iou,
            tau,
            memory_ops,
        }
    } else {
        if emit_memory {
            if let Some(e) = embeddings.track {
                memory_ops.push(MemoryOp {
                    polarity: Polarity::Positive,
                    embedding: e.to_vec(),
                });
            }
        }
        ArbitrationDecision {
            action: Action::Keep,
            final_box: *b_track,
            iou,
            tau,
            memory_ops,
        }
    };
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    /// Nested boxes with IoU exactly `k/100`.
    fn pair_with_iou(k: u32) -> (BoundingBox, BoundingBox) {
        (bb(0.0, 0.0, k as f64, 1.0), bb(0.0, 0.0, 100.0, 1.0))
    }

    fn embeddings() -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; 16];
        a[0] = 1.0;
        let mut b = vec![0.0; 16];
        b[1] = 1.0;
        (a, b)
    }

    #[test]
    fn drift_detection_cases() {
        let frame = FrameSize::new(100, 100).unwrap();
        let cfg = ArbitrationConfig::default();
        let a = bb(10.0, 10.0, 10.0, 10.0);
        assert!(!detect_drift(&a, &a, &frame, &cfg));

        // 0.2 diagonals of displacement with delta_c = 0.1.
        let jump = 0.2 * frame.diagonal();
        let b = a.translated(jump, 0.0);
        assert!(detect_drift(&a, &b, &frame, &cfg));
        assert!(detect_drift(&b, &a, &frame, &cfg), "time-reversal symmetry");

        // Exactly at the threshold: no trigger.
        let edge = a.translated(0.1 * frame.diagonal(), 0.0);
        assert!(!detect_drift(&a, &edge, &frame, &cfg));
    }

    #[test]
    fn keep_branch_at_runtime() {
        let (track, ipm) = pair_with_iou(70);
        let (te, ie) = embeddings();
        let d = arbitrate(
            &track,
            &ipm,
            EmbeddingPair {
                track: Some(&te),
                ipm: Some(&ie),
            },
            &ArbitrationConfig::default(),
            Phase::Runtime,
        )
        .unwrap();
        assert_eq!(d.action, Action::Keep);
        assert_eq!(d.final_box, track);
        assert_eq!(d.memory_ops.len(), 1);
        assert_eq!(d.memory_ops[0].polarity, Polarity::Positive);
        assert_eq!(d.memory_ops[0].embedding, te);
    }

    #[test]
    fn reinit_branch_at_runtime() {
        let (track, ipm) = pair_with_iou(50);
        let (te, ie) = embeddings();
        let d = arbitrate(
            &track,
            &ipm,
            EmbeddingPair {
                track: Some(&te),
                ipm: Some(&ie),
            },
            &ArbitrationConfig::default(),
            Phase::Runtime,
        )
        .unwrap();
        assert_eq!(d.action, Action::Reinit { with: ipm });
        assert_eq!(d.final_box, ipm);
        assert_eq!(d.memory_ops.len(), 2);
        assert_eq!(d.memory_ops[0].polarity, Polarity::Negative);
        assert_eq!(d.memory_ops[0].embedding, te);
        assert_eq!(d.memory_ops[1].polarity, Polarity::Positive);
        assert_eq!(d.memory_ops[1].embedding, ie);
    }

    #[test]
    fn identical_boxes_always_keep() {
        let b = bb(5.0, 5.0, 20.0, 20.0);
        let d = arbitrate(
            &b,
            &b,
            EmbeddingPair::default(),
            &ArbitrationConfig::default(),
            Phase::Init,
        )
        .unwrap();
        assert_eq!(d.action, Action::Keep);
        assert_eq!(d.iou, 1.0);
    }

    #[test]
    fn threshold_boundaries_by_phase() {
        // Equality keeps; strictly below re-inits. tau_init = 0.3,
        // tau_reinit = 0.6, exercised on bit-exact IoU values.
        let cases = [
            (Phase::Init, 29, true),
            (Phase::Init, 30, false),
            (Phase::Init, 31, false),
            (Phase::Runtime, 59, true),
            (Phase::Runtime, 60, false),
            (Phase::Runtime, 61, false),
        ];
        for (phase, k, expect_reinit) in cases {
            let (track, ipm) = pair_with_iou(k);
            let d = arbitrate(
                &track,
                &ipm,
                EmbeddingPair::default(),
                &ArbitrationConfig::default(),
                phase,
            )
            .unwrap();
            assert_eq!(
                d.action.is_reinit(),
                expect_reinit,
                "phase {phase:?}, iou {k}/100"
            );
            assert!(
                d.final_box == track || d.final_box == ipm,
                "final box must be one of the inputs"
            );
        }
    }

    #[test]
    fn decision_is_monotone_in_iou() {
        let cfg = ArbitrationConfig::default();
        let mut kept_at: Option<u32> = None;
        for k in 0..=100 {
            let (track, ipm) = pair_with_iou(k);
            let d =
                arbitrate(&track, &ipm, EmbeddingPair::default(), &cfg, Phase::Runtime).unwrap();
            if !d.action.is_reinit() {
                kept_at.get_or_insert(k);
            } else {
                assert!(kept_at.is_none(), "reinit after a keep at lower IoU");
            }
        }
        assert_eq!(kept_at, Some(60));
    }

    #[test]
    fn ablations_shape_the_ops() {
        let (track, ipm) = pair_with_iou(10);
        let (te, ie) = embeddings();
        let emb = EmbeddingPair {
            track: Some(&te),
            ipm: Some(&ie),
        };

        let mut cfg = ArbitrationConfig::default();
        cfg.ablation.naive_iou = true;
        let d = arbitrate(&track, &ipm, emb, &cfg, Phase::Runtime).unwrap();
        assert!(d.action.is_reinit());
        assert!(d.memory_ops.is_empty());

        let mut cfg = ArbitrationConfig::default();
        cfg.ablation.no_memory = true;
        let d = arbitrate(&track, &ipm, emb, &cfg, Phase::Runtime).unwrap();
        assert!(d.action.is_reinit());
        assert!(d.memory_ops.is_empty());

        let mut cfg = ArbitrationConfig::default();
        cfg.ablation.no_cam = true;
        let d = arbitrate(&track, &ipm, emb, &cfg, Phase::Runtime).unwrap();
        assert_eq!(d.action, Action::Keep);
        assert!(d.memory_ops.is_empty());
    }

    #[test]
    fn bad_config_is_a_contract_error() {
        let cfg = ArbitrationConfig {
            tau_init: 0.8,
            tau_reinit: 0.6,
            ..Default::default()
        };
        let (track, ipm) = pair_with_iou(50);
        assert!(arbitrate(&track, &ipm, EmbeddingPair::default(), &cfg, Phase::Init).is_err());
    }
}
