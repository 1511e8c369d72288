//! Backend traits and the in-process synthetic backends.
//!
//! Synthetic backends are deterministic stand-ins for real tracker and
//! grounder models: given the same sequence and seed they reproduce the same
//! outputs, which makes ordering and ablation behavior testable at desk
//! scale.

use crate::dataset::{FrameState, Sequence, World};
use crate::geometry::{BoundingBox, FrameSize};
use crate::memory::BankPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    /// A wire-protocol violation: the run aborts.
    #[error("protocol violation at reply line {line}: {message}")]
    Protocol { line: usize, message: String },
    /// The backend process died or closed its stream: the run is flagged
    /// failed but not aborted.
    #[error("backend crashed: {0}")]
    Crashed(String),
    #[error("failed to start backend: {0}")]
    Spawn(String),
}

/// Initialization payload delivered once per sequence.
#[derive(Debug, Clone)]
pub struct TrackerInit<'a> {
    pub name: &'a str,
    pub size: FrameSize,
    pub start_box: Option<BoundingBox>,
    pub text: Option<&'a str>,
}

/// Per-frame input; the session's memory banks are visible to backends that
/// condition on them.
pub struct FrameInput<'a> {
    pub t: usize,
    pub banks: Option<&'a BankPair>,
}

pub trait Tracker {
    fn init(&mut self, init: &TrackerInit<'_>) -> Result<(), BackendError>;

    /// One prediction per frame, in frame order.
    fn frame(&mut self, input: &FrameInput<'_>) -> Result<FrameState, BackendError>;

    /// Prompt delivery. With a box the prompt is a re-initialization
    /// directive; text-only prompts may be answered with the backend's own
    /// grounding (the reply is validated but never scored).
    fn prompt(
        &mut self,
        t: usize,
        text: &str,
        directive: Option<&BoundingBox>,
    ) -> Result<Option<BoundingBox>, BackendError>;

    /// End of sequence.
    fn finish(&mut self) -> Result<(), BackendError> {
        Ok(())
    }
}

pub trait Grounder {
    /// Maps a text prompt at frame `t` to a box.
    fn ground(&mut self, t: usize, text: &str) -> Result<BoundingBox, BackendError>;

    fn finish(&mut self) -> Result<(), BackendError> {
        Ok(())
    }
}

/// Uninhabited placeholder for runs without a grounder; pass
/// `None::<&mut NoGrounder>`.
pub enum NoGrounder {}

impl Grounder for NoGrounder {
    fn ground(&mut self, _t: usize, _text: &str) -> Result<BoundingBox, BackendError> {
        match *self {}
    }
}

/// Per-frame ground-truth centers with absences held from the last present
/// frame; shared by the trackers that follow target motion.
fn referent_centers(seq: &Sequence) -> Vec<(f64, f64)> {
    let mut centers = Vec::with_capacity(seq.frames.len());
    let mut last = seq.events.first().map(|e| e.gt_new.center());
    for frame in &seq.frames {
        if let FrameState::Present(b) = &frame.state {
            last = Some(b.center());
        }
        centers.push(last.unwrap_or((0.0, 0.0)));
    }
    centers
}

/// Replays the ground truth exactly, absences included.
pub struct OracleTracker {
    seq: Arc<Sequence>,
}

impl OracleTracker {
    pub fn new(seq: Arc<Sequence>) -> Self {
        OracleTracker { seq }
    }

    fn ground_truth_at(&self, t: usize) -> Option<BoundingBox> {
        if let Some(ev) = self.seq.events.iter().find(|e| e.t == t) {
            return Some(ev.gt_new);
        }
        self.seq
            .frames
            .get(t)
            .and_then(|f| f.state.as_box().copied())
    }
}

impl Tracker for OracleTracker {
    fn init(&mut self, _init: &TrackerInit<'_>) -> Result<(), BackendError> {
        Ok(())
    }

    fn frame(&mut self, input: &FrameInput<'_>) -> Result<FrameState, BackendError> {
        Ok(self.seq.frames[input.t].state)
    }

    fn prompt(
        &mut self,
        t: usize,
        _text: &str,
        _directive: Option<&BoundingBox>,
    ) -> Result<Option<BoundingBox>, BackendError> {
        Ok(self.ground_truth_at(t))
    }
}

/// Ground truth plus per-frame Gaussian center jitter. Zero sigma is
/// exactly the oracle.
pub struct NoisyTracker {
    seq: Arc<Sequence>,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl NoisyTracker {
    pub fn new(seq: Arc<Sequence>, sigma: f64, seed: u64) -> Self {
        NoisyTracker {
            seq,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Deterministic Box-Muller gaussian sample.
pub(crate) fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl Tracker for NoisyTracker {
    fn init(&mut self, _init: &TrackerInit<'_>) -> Result<(), BackendError> {
        Ok(())
    }

    fn frame(&mut self, input: &FrameInput<'_>) -> Result<FrameState, BackendError> {
        match &self.seq.frames[input.t].state {
            FrameState::Absent => Ok(FrameState::Absent),
            FrameState::Present(b) => {
                let dx = gaussian(&mut self.rng, self.sigma);
                let dy = gaussian(&mut self.rng, self.sigma);
                Ok(FrameState::Present(b.translated(dx, dy)))
            }
        }
    }

    fn prompt(
        &mut self,
        t: usize,
        _text: &str,
        _directive: Option<&BoundingBox>,
    ) -> Result<Option<BoundingBox>, BackendError> {
        Ok(self
            .seq
            .frames
            .get(t)
            .and_then(|f| f.state.as_box().copied()))
    }
}

/// A tracker that follows the target's motion for `freeze_after` frames
/// after each (re)initialization, then freezes, optionally accumulating a
/// constant velocity bias. `freeze_after = 0` holds whatever box it was
/// given until the next re-initialization.
///
/// `reacquire` (in (0, 1]) models how quickly the tracker locks onto the
/// object after being seeded with an offset box: the initial center offset
/// shrinks by that factor each frame. The default 1.0 keeps the offset
/// forever.
pub struct DriftTracker {
    centers: Vec<(f64, f64)>,
    freeze_after: usize,
    velocity_bias: (f64, f64),
    reacquire: f64,
    anchor: Option<(usize, BoundingBox)>,
}

impl DriftTracker {
    pub fn new(seq: &Sequence, freeze_after: usize, velocity_bias: (f64, f64)) -> Self {
        Self::with_reacquire(seq, freeze_after, velocity_bias, 1.0)
    }

    pub fn with_reacquire(
        seq: &Sequence,
        freeze_after: usize,
        velocity_bias: (f64, f64),
        reacquire: f64,
    ) -> Self {
        DriftTracker {
            centers: referent_centers(seq),
            freeze_after,
            velocity_bias,
            reacquire: reacquire.clamp(f64::MIN_POSITIVE, 1.0),
            anchor: None,
        }
    }
}

impl Tracker for DriftTracker {
    fn init(&mut self, init: &TrackerInit<'_>) -> Result<(), BackendError> {
        if let Some(b) = init.start_box {
            self.anchor = Some((0, b));
        }
        Ok(())
    }

    fn frame(&mut self, input: &FrameInput<'_>) -> Result<FrameState, BackendError> {
        let (t0, anchor_box) = match &self.anchor {
            Some(a) => *a,
            None => return Ok(FrameState::Absent),
        };
        let t = input.t;
        let follow_t = t.min(t0.saturating_add(self.freeze_after));
        let (cx0, cy0) = self.centers[t0];
        let (cx, cy) = self.centers[follow_t];
        let (ax, ay) = anchor_box.center();
        let decay = self.reacquire.powi((follow_t - t0) as i32);
        let elapsed = (t - t0) as f64;
        let center = (
            cx + (ax - cx0) * decay + self.velocity_bias.0 * elapsed,
            cy + (ay - cy0) * decay + self.velocity_bias.1 * elapsed,
        );
        Ok(FrameState::Present(BoundingBox {
            x: center.0 - anchor_box.w / 2.0,
            y: center.1 - anchor_box.h / 2.0,
            w: anchor_box.w,
            h: anchor_box.h,
        }))
    }

    fn prompt(
        &mut self,
        t: usize,
        _text: &str,
        directive: Option<&BoundingBox>,
    ) -> Result<Option<BoundingBox>, BackendError> {
        if let Some(b) = directive {
            self.anchor = Some((t, *b));
        }
        Ok(None)
    }
}

/// Chooses among the world's visible candidate boxes by memory score,
/// realizing the memory-conditioned prediction contract. Ties resolve to
/// the lowest object index; with empty banks everything ties. Directives do
/// not move it: only the memory banks steer its choice.
pub struct MemoryAwareTracker {
    world: Arc<World>,
}

impl MemoryAwareTracker {
    pub fn new(world: Arc<World>) -> Self {
        MemoryAwareTracker { world }
    }
}

impl Tracker for MemoryAwareTracker {
    fn init(&mut self, _init: &TrackerInit<'_>) -> Result<(), BackendError> {
        Ok(())
    }

    fn frame(&mut self, input: &FrameInput<'_>) -> Result<FrameState, BackendError> {
        let t = input.t;
        let mut best: Option<(usize, f64)> = None;
        for (i, _) in self.world.visible_objects(t) {
            let s = match input.banks {
                Some(banks) => banks
                    .score(self.world.feature(i, t))
                    .map_err(|e| BackendError::Crashed(e.to_string()))?,
                None => 0.0,
            };
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        Ok(match best {
            Some((i, _)) => FrameState::Present(self.world.objects[i].boxes[t]),
            None => FrameState::Absent,
        })
    }

    fn prompt(
        &mut self,
        _t: usize,
        _text: &str,
        _directive: Option<&BoundingBox>,
    ) -> Result<Option<BoundingBox>, BackendError> {
        Ok(None)
    }
}

/// Grounds any prompt to the current referent's box, with optional center
/// noise and a failure mode that returns a fixed off-target box at the
/// frame origin.
pub struct ScriptedGrounder {
    seq: Arc<Sequence>,
    world: Option<Arc<World>>,
    sigma: f64,
    failure_prob: f64,
    rng: ChaCha8Rng,
}

impl ScriptedGrounder {
    pub fn new(
        seq: Arc<Sequence>,
        world: Option<Arc<World>>,
        sigma: f64,
        failure_prob: f64,
        seed: u64,
    ) -> Self {
        ScriptedGrounder {
            seq,
            world,
            sigma,
            failure_prob,
            // Offset so the grounder never shares a stream with a tracker
            // seeded from the same run seed.
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6f75_6e64),
        }
    }

    fn base_box(&self, t: usize) -> BoundingBox {
        if let Some(world) = &self.world {
            return *world.referent_box(t);
        }
        if let Some(b) = self.seq.frames.get(t).and_then(|f| f.state.as_box()) {
            return *b;
        }
        // Occluded without world knowledge: fall back to the latest prompt's
        // target box.
        self.seq
            .latest_event_at(t)
            .map(|e| e.gt_new)
            .unwrap_or(BoundingBox {
                x: 0.0,
                y: 0.0,
                w: 1.0,
                h: 1.0,
            })
    }
}

impl Grounder for ScriptedGrounder {
    fn ground(&mut self, t: usize, _text: &str) -> Result<BoundingBox, BackendError> {
        let base = self.base_box(t);
        if self.failure_prob > 0.0 && self.rng.gen_bool(self.failure_prob.clamp(0.0, 1.0)) {
            return Ok(BoundingBox {
                x: 0.0,
                y: 0.0,
                w: base.w,
                h: base.h,
            });
        }
        let dx = gaussian(&mut self.rng, self.sigma);
        let dy = gaussian(&mut self.rng, self.sigma);
        Ok(base.translated(dx, dy))
    }
}
