//! The interaction loop: replays a sequence's prompt schedule against a
//! tracker (and optionally a grounder), applies the per-paradigm
//! re-initialization policy, runs arbitration with its memory updates, and
//! emits one prediction per frame.
//!
//! One sequence evaluation is strictly sequential; distinct sequences run on
//! parallel workers, each owning its backends and memory banks. Aggregation
//! is an order-independent fold, so worker count never changes results.

pub mod backends;
pub mod protocol;

pub use backends::{
    BackendError, DriftTracker, FrameInput, Grounder, MemoryAwareTracker, NoGrounder, NoisyTracker,
    OracleTracker, ScriptedGrounder, Tracker, TrackerInit,
};
pub use protocol::{ExternalGrounder, ExternalTracker};

use crate::arbitration::{
    arbitrate, detect_drift, Action, ArbitrationConfig, ArbitrationError, EmbeddingPair, MemoryOp,
    Phase,
};
use crate::dataset::{
    self, EventKind, FrameState, InteractionEvent, Scenario, Sequence, SynthError, SynthSpec,
    World, FEATURE_DIM,
};
use crate::geometry::{self, BoundingBox};
use crate::memory::{BankPair, MemoryConfig, MemoryError, Polarity};
use crate::metrics::{
    aggregate, evaluate_sequence, EvalReport, FramePrediction, MetricConfig, MetricError,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sequence {name}: {message}")]
    InvalidSequence { name: String, message: String },
    #[error("policy error: {0}")]
    Policy(String),
    #[error("{0}")]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Arbitration(#[from] ArbitrationError),
    #[error("{0}")]
    Memory(#[from] MemoryError),
    #[error("{0}")]
    Synth(#[from] SynthError),
}

/// Evaluated-tracker paradigms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Re-initialize the tracker with the ground-truth box at every prompt.
    GtReinit,
    /// Forward prompt text to the tracker, which grounds it itself.
    TextForward,
    /// Only the initial box; later prompts are ignored except switches,
    /// which re-initialize with the ground-truth box.
    FirstBoxOnly,
    /// The full grounder + arbitration + memory pipeline.
    Imat,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::GtReinit => "gt-reinit",
            Mode::TextForward => "text-forward",
            Mode::FirstBoxOnly => "first-box-only",
            Mode::Imat => "imat",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "gt-reinit" => Some(Mode::GtReinit),
            "text-forward" => Some(Mode::TextForward),
            "first-box-only" => Some(Mode::FirstBoxOnly),
            "imat" => Some(Mode::Imat),
            _ => None,
        }
    }
}

/// Whether a prompt takes effect at its own frame or the next one.
///
/// `SameFrame` scores the post-prompt prediction at the prompt frame (the
/// default; reflects grounding quality). `NextFrame` scores first and
/// applies the prompt afterwards; recommended for `GtReinit`, where
/// same-frame application makes perception trivially perfect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptEffect {
    SameFrame,
    NextFrame,
}

impl PromptEffect {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptEffect::SameFrame => "same-frame",
            PromptEffect::NextFrame => "next-frame",
        }
    }

    pub fn parse(s: &str) -> Option<PromptEffect> {
        match s {
            "same-frame" => Some(PromptEffect::SameFrame),
            "next-frame" => Some(PromptEffect::NextFrame),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPolicy {
    pub mode: Mode,
    pub prompt_effect: PromptEffect,
    pub arbitration: ArbitrationConfig,
    pub metric: MetricConfig,
    pub memory: MemoryConfig,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy {
            mode: Mode::Imat,
            prompt_effect: PromptEffect::SameFrame,
            arbitration: ArbitrationConfig::default(),
            metric: MetricConfig::default(),
            memory: MemoryConfig::default(),
        }
    }
}

/// What caused an arbitration (or its ablated stand-in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    Event(EventKind),
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceAction {
    Keep,
    Reinit,
    /// Grounded box adopted without arbitration (initialization, absent
    /// tracker output, or the no-cam ablation).
    Adopt,
    /// Prompt or drift signal observed but not acted on (no grounder).
    Ignored,
}

/// One line of the decision trace: frame, phase, measured IoU, the
/// threshold in force, and the resulting action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRecord {
    pub frame: usize,
    pub phase: Phase,
    pub trigger: Trigger,
    pub iou: Option<f64>,
    pub tau: Option<f64>,
    pub action: TraceAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDesc {
    pub mode: String,
    pub prompt_effect: String,
    pub tau_init: f64,
    pub tau_reinit: f64,
    pub delta_c: f64,
    pub ablations: Vec<String>,
}

impl PolicyDesc {
    fn new(policy: &EvalPolicy) -> Self {
        PolicyDesc {
            mode: policy.mode.as_str().to_string(),
            prompt_effect: policy.prompt_effect.as_str().to_string(),
            tau_init: policy.arbitration.tau_init,
            tau_reinit: policy.arbitration.tau_reinit,
            delta_c: policy.arbitration.delta_c,
            ablations: policy
                .arbitration
                .ablation
                .active()
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Output of one sequence evaluation.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub sequence: String,
    pub scenario: Scenario,
    pub predictions: Vec<FramePrediction>,
    pub trace: Vec<ArbitrationRecord>,
    pub banks: Option<BankPair>,
    pub policy: PolicyDesc,
    pub duration: Duration,
    /// Failure reason when a backend crashed mid-run; predictions are then
    /// partial and the record is excluded from metrics.
    pub failed: Option<String>,
}

/// Internal control flow: crashes finalize a partial record, everything
/// else aborts the run.
enum Interrupt {
    Crashed(String),
    Abort(HarnessError),
}

impl From<BackendError> for Interrupt {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Crashed(m) => Interrupt::Crashed(m),
            other => Interrupt::Abort(HarnessError::Backend(other)),
        }
    }
}

impl From<ArbitrationError> for Interrupt {
    fn from(e: ArbitrationError) -> Self {
        Interrupt::Abort(HarnessError::Arbitration(e))
    }
}

impl From<MemoryError> for Interrupt {
    fn from(e: MemoryError) -> Self {
        Interrupt::Abort(HarnessError::Memory(e))
    }
}

struct Session<'a, T: Tracker + ?Sized, G: Grounder + ?Sized> {
    seq: &'a Sequence,
    world: Option<&'a World>,
    policy: &'a EvalPolicy,
    tracker: &'a mut T,
    grounder: Option<&'a mut G>,
    banks: BankPair,
    trace: Vec<ArbitrationRecord>,
    predictions: Vec<FramePrediction>,
    latest_text: String,
    events_by_frame: HashMap<usize, usize>,
}

impl<'a, T: Tracker + ?Sized, G: Grounder + ?Sized> Session<'a, T, G> {
    fn ablation(&self) -> crate::arbitration::AblationSet {
        self.policy.arbitration.ablation
    }

    /// Memory updates flow only through the full arbitration pipeline.
    fn memory_enabled(&self) -> bool {
        let abl = self.ablation();
        self.policy.mode == Mode::Imat && !(abl.no_memory || abl.naive_iou || abl.no_cam)
    }

    /// Drift-triggered re-verification is part of the full pipeline; the
    /// naive-IoU variant arbitrates at prompt frames only, and without the
    /// arbitration module there is no drift detection at all.
    fn drift_enabled(&self) -> bool {
        let abl = self.ablation();
        self.policy.mode == Mode::Imat && !(abl.naive_iou || abl.no_cam)
    }

    fn embed(&self, t: usize, b: &BoundingBox) -> Option<Vec<f64>> {
        self.world.and_then(|w| w.embed(t, b)).map(|s| s.to_vec())
    }

    fn ground(&mut self, t: usize, text: &str) -> Result<BoundingBox, Interrupt> {
        let grounder = self
            .grounder
            .as_deref_mut()
            .expect("grounder presence checked before grounding");
        Ok(grounder.ground(t, text)?)
    }

    fn apply_memory_ops(&mut self, t: usize, ops: Vec<MemoryOp>) -> Result<(), Interrupt> {
        for op in ops {
            self.banks.remember(op.polarity, &op.embedding, t)?;
        }
        Ok(())
    }

    fn record(
        &mut self,
        frame: usize,
        phase: Phase,
        trigger: Trigger,
        iou: Option<f64>,
        tau: Option<f64>,
        action: TraceAction,
    ) {
        self.trace.push(ArbitrationRecord {
            frame,
            phase,
            trigger,
            iou,
            tau,
            action,
        });
    }

    fn initialize(&mut self) -> Result<(), Interrupt> {
        let ev0 = &self.seq.events[0];
        self.latest_text = ev0.text.clone();
        let name = self.seq.name.clone();
        let size = self.seq.size;
        match self.policy.mode {
            Mode::GtReinit | Mode::FirstBoxOnly => {
                self.tracker.init(&TrackerInit {
                    name: &name,
                    size,
                    start_box: Some(ev0.gt_new),
                    text: Some(&ev0.text),
                })?;
            }
            Mode::TextForward => {
                self.tracker.init(&TrackerInit {
                    name: &name,
                    size,
                    start_box: None,
                    text: Some(&ev0.text),
                })?;
            }
            Mode::Imat => {
                let init_box = if self.ablation().no_ipm {
                    ev0.gt_new
                } else {
                    let text = ev0.text.clone();
                    self.ground(0, &text)?
                };
                self.tracker.init(&TrackerInit {
                    name: &name,
                    size,
                    start_box: Some(init_box),
                    text: Some(&ev0.text),
                })?;
                self.record(
                    0,
                    Phase::Init,
                    Trigger::Event(EventKind::Init),
                    None,
                    None,
                    TraceAction::Adopt,
                );
                if self.memory_enabled() {
                    if let Some(e) = self.embed(0, &init_box) {
                        self.banks.remember(Polarity::Positive, &e, 0)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Prompt delivery for the non-arbitrating modes.
    fn deliver_simple_event(&mut self, ev: &InteractionEvent) -> Result<(), Interrupt> {
        self.latest_text = ev.text.clone();
        match self.policy.mode {
            Mode::GtReinit => {
                self.tracker.prompt(ev.t, &ev.text, Some(&ev.gt_new))?;
            }
            Mode::FirstBoxOnly => {
                if ev.kind == EventKind::Switch {
                    self.tracker.prompt(ev.t, &ev.text, Some(&ev.gt_new))?;
                }
            }
            Mode::TextForward => {
                // The reply is the backend's own grounding; it is validated
                // at the protocol layer but never scored.
                let _ = self.tracker.prompt(ev.t, &ev.text, None)?;
            }
            Mode::Imat => unreachable!("imat events go through process_imat_event"),
        }
        Ok(())
    }

    /// Grounds and arbitrates a prompt. Returns the final state for the
    /// event frame, which the caller uses under same-frame effect and
    /// discards under next-frame effect.
    fn process_imat_event(
        &mut self,
        ev: &InteractionEvent,
        raw: FrameState,
    ) -> Result<Option<FrameState>, Interrupt> {
        let t = ev.t;
        self.latest_text = ev.text.clone();
        if self.ablation().no_ipm {
            self.record(
                t,
                Phase::Runtime,
                Trigger::Event(ev.kind),
                None,
                None,
                TraceAction::Ignored,
            );
            return Ok(None);
        }
        let text = ev.text.clone();
        let b_ipm = self.ground(t, &text)?;

        if self.ablation().no_cam {
            // No arbiter between grounder and tracker: adopt blindly.
            self.tracker.prompt(t, &text, Some(&b_ipm))?;
            let iou = raw.as_box().map(|b| geometry::iou(b, &b_ipm));
            self.record(
                t,
                Phase::Runtime,
                Trigger::Event(ev.kind),
                iou,
                None,
                TraceAction::Adopt,
            );
            return Ok(Some(FrameState::Present(b_ipm)));
        }

        let b_track = match raw.as_box() {
            Some(b) => *b,
            None => {
                // Nothing to arbitrate against: adopt the grounded box.
                self.tracker.prompt(t, &text, Some(&b_ipm))?;
                if self.memory_enabled() {
                    if let Some(e) = self.embed(t, &b_ipm) {
                        self.banks.remember(Polarity::Positive, &e, t)?;
                    }
                }
                self.record(
                    t,
                    Phase::Runtime,
                    Trigger::Event(ev.kind),
                    None,
                    None,
                    TraceAction::Adopt,
                );
                return Ok(Some(FrameState::Present(b_ipm)));
            }
        };

        let track_embed = self.embed(t, &b_track);
        let ipm_embed = self.embed(t, &b_ipm);
        let decision = arbitrate(
            &b_track,
            &b_ipm,
            EmbeddingPair {
                track: track_embed.as_deref(),
                ipm: ipm_embed.as_deref(),
            },
            &self.policy.arbitration,
            Phase::Runtime,
        )?;
        let action = match decision.action {
            Action::Keep => TraceAction::Keep,
            Action::Reinit { .. } => {
                self.tracker.prompt(t, &text, Some(&b_ipm))?;
                TraceAction::Reinit
            }
        };
        let final_box = decision.final_box;
        let (iou, tau) = (decision.iou, decision.tau);
        self.apply_memory_ops(t, decision.memory_ops)?;
        self.record(
            t,
            Phase::Runtime,
            Trigger::Event(ev.kind),
            Some(iou),
            Some(tau),
            action,
        );
        Ok(Some(FrameState::Present(final_box)))
    }

    /// Between prompts the full pipeline watches for center jumps between
    /// the previous final box and the current tracker box; on a trigger it
    /// re-verifies with the latest prompt text. The correction applies at
    /// the triggering frame regardless of prompt effect: it is the
    /// pipeline's own action, not a user prompt.
    fn drift_check(&mut self, t: usize, raw: FrameState) -> Result<FrameState, Interrupt> {
        if !self.drift_enabled() || t == 0 {
            return Ok(raw);
        }
        let prev = match self.predictions[t - 1].state.as_box() {
            Some(b) => *b,
            None => return Ok(raw),
        };
        let cur = match raw.as_box() {
            Some(b) => *b,
            None => return Ok(raw),
        };
        if !detect_drift(&prev, &cur, &self.seq.size, &self.policy.arbitration) {
            return Ok(raw);
        }
        if self.ablation().no_ipm || self.grounder.is_none() {
            self.record(
                t,
                Phase::Runtime,
                Trigger::Drift,
                None,
                None,
                TraceAction::Ignored,
            );
            return Ok(raw);
        }
        let text = self.latest_text.clone();
        let b_ipm = self.ground(t, &text)?;
        let track_embed = self.embed(t, &cur);
        let ipm_embed = self.embed(t, &b_ipm);
        let decision = arbitrate(
            &cur,
            &b_ipm,
            EmbeddingPair {
                track: track_embed.as_deref(),
                ipm: ipm_embed.as_deref(),
            },
            &self.policy.arbitration,
            Phase::Runtime,
        )?;
        let action = match decision.action {
            Action::Keep => TraceAction::Keep,
            Action::Reinit { .. } => {
                self.tracker.prompt(t, &text, Some(&b_ipm))?;
                TraceAction::Reinit
            }
        };
        let final_box = decision.final_box;
        let (iou, tau) = (decision.iou, decision.tau);
        self.apply_memory_ops(t, decision.memory_ops)?;
        self.record(
            t,
            Phase::Runtime,
            Trigger::Drift,
            Some(iou),
            Some(tau),
            action,
        );
        Ok(FrameState::Present(final_box))
    }

    fn step(&mut self, t: usize) -> Result<(), Interrupt> {
        // The init event is consumed by initialization; later frames carry
        // at most one event.
        let event = if t == 0 {
            None
        } else {
            self.events_by_frame
                .get(&t)
                .map(|&i| self.seq.events[i].clone())
        };

        if self.policy.prompt_effect == PromptEffect::SameFrame && self.policy.mode != Mode::Imat {
            if let Some(ev) = &event {
                self.deliver_simple_event(ev)?;
            }
        }

        let raw = self.tracker.frame(&FrameInput {
            t,
            banks: Some(&self.banks),
        })?;

        let scored = if self.policy.mode == Mode::Imat {
            match &event {
                Some(ev) => {
                    if self.policy.prompt_effect == PromptEffect::SameFrame {
                        self.process_imat_event(ev, raw)?.unwrap_or(raw)
                    } else {
                        raw
                    }
                }
                None => self.drift_check(t, raw)?,
            }
        } else {
            raw
        };

        self.predictions.push(FramePrediction { t, state: scored });

        if self.policy.prompt_effect == PromptEffect::NextFrame {
            if let Some(ev) = &event {
                if self.policy.mode == Mode::Imat {
                    let _ = self.process_imat_event(ev, raw)?;
                } else {
                    self.deliver_simple_event(ev)?;
                }
            }
        }
        Ok(())
    }
}

/// Evaluates one sequence with the given backends and policy.
///
/// Wire-protocol violations abort with an error; a backend crash finalizes
/// a partial record flagged as failed.
pub fn run<T: Tracker + ?Sized, G: Grounder + ?Sized>(
    seq: &Sequence,
    world: Option<&World>,
    tracker: &mut T,
    grounder: Option<&mut G>,
    policy: &EvalPolicy,
) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    policy.metric.validate()?;
    policy.arbitration.validate()?;
    let violations = dataset::validate(seq);
    if !violations.is_empty() {
        return Err(HarnessError::InvalidSequence {
            name: seq.name.clone(),
            message: format!(
                "{} violation(s), first: {}",
                violations.len(),
                violations[0]
            ),
        });
    }
    if policy.mode == Mode::Imat && !policy.arbitration.ablation.no_ipm && grounder.is_none() {
        return Err(HarnessError::Policy(
            "imat mode requires a grounder backend".into(),
        ));
    }

    let events_by_frame = seq
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| (e.t, i))
        .collect();
    let mut session = Session {
        seq,
        world,
        policy,
        tracker,
        grounder,
        banks: BankPair::new(&policy.memory, FEATURE_DIM)?,
        trace: Vec::new(),
        predictions: Vec::with_capacity(seq.frames.len()),
        latest_text: String::new(),
        events_by_frame,
    };

    let mut failed = None;
    let outcome = session.initialize().and_then(|_| {
        for t in 0..seq.frames.len() {
            session.step(t)?;
        }
        Ok(())
    });
    match outcome {
        Ok(()) => {
            if let Err(e) = session.tracker.finish() {
                failed = Some(e.to_string());
            }
            if let Some(g) = session.grounder.as_deref_mut() {
                let _ = g.finish();
            }
        }
        Err(Interrupt::Crashed(message)) => failed = Some(message),
        Err(Interrupt::Abort(e)) => return Err(e),
    }

    let banks = (policy.mode == Mode::Imat).then(|| session.banks.clone());
    Ok(RunRecord {
        sequence: seq.name.clone(),
        scenario: seq.scenario,
        predictions: session.predictions,
        trace: session.trace,
        banks,
        policy: PolicyDesc::new(policy),
        duration: started.elapsed(),
        failed,
    })
}

/// A sequence plus its optional synthetic world, shareable across workers.
#[derive(Debug, Clone)]
pub struct SuiteItem {
    pub sequence: Arc<Sequence>,
    pub world: Option<Arc<World>>,
}

impl SuiteItem {
    pub fn new(sequence: Sequence, world: Option<World>) -> Self {
        SuiteItem {
            sequence: Arc::new(sequence),
            world: world.map(Arc::new),
        }
    }

    pub fn from_spec(spec: &SynthSpec) -> Result<Self, SynthError> {
        let (seq, world) = dataset::synthesize_with_world(spec)?;
        Ok(SuiteItem::new(seq, Some(world)))
    }

    pub fn from_sequence(sequence: Sequence) -> Self {
        SuiteItem::new(sequence, None)
    }
}

/// Recipe for constructing a tracker backend per sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackerSpec {
    Oracle,
    Noisy {
        sigma: f64,
    },
    Drift {
        freeze_after: usize,
        velocity_bias: (f64, f64),
        /// Per-frame decay factor of the initialization offset, in (0, 1].
        reacquire: f64,
    },
    MemoryAware,
    External {
        command: Vec<String>,
    },
}

impl TrackerSpec {
    /// Parses a synthetic tracker name: `oracle`, `noisy[:sigma]`,
    /// `drift[:freeze[,bx,by[,reacquire]]]`, `memory-aware`.
    pub fn parse_synthetic(s: &str) -> Result<TrackerSpec, String> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match name {
            "oracle" => Ok(TrackerSpec::Oracle),
            "noisy" => {
                let sigma = match args {
                    Some(a) => a.parse().map_err(|_| format!("bad noisy sigma {a:?}"))?,
                    None => 2.0,
                };
                Ok(TrackerSpec::Noisy { sigma })
            }
            "drift" => {
                let mut freeze_after = 0usize;
                let mut bias = (0.0, 0.0);
                let mut reacquire = 1.0;
                if let Some(a) = args {
                    let parts: Vec<&str> = a.split(',').collect();
                    if !parts.is_empty() && !parts[0].is_empty() {
                        freeze_after = parts[0]
                            .parse()
                            .map_err(|_| format!("bad drift freeze {:?}", parts[0]))?;
                    }
                    match parts.len() {
                        1 => {}
                        3 | 4 => {
                            bias = (
                                parts[1].parse().map_err(|_| "bad drift bias".to_string())?,
                                parts[2].parse().map_err(|_| "bad drift bias".to_string())?,
                            );
                            if parts.len() == 4 {
                                reacquire = parts[3]
                                    .parse()
                                    .map_err(|_| "bad drift reacquire".to_string())?;
                            }
                        }
                        _ => return Err(format!("bad drift args {a:?}")),
                    }
                }
                Ok(TrackerSpec::Drift {
                    freeze_after,
                    velocity_bias: bias,
                    reacquire,
                })
            }
            "memory-aware" => Ok(TrackerSpec::MemoryAware),
            other => Err(format!("unknown synthetic tracker {other:?}")),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TrackerSpec::Oracle => "synthetic:oracle".into(),
            TrackerSpec::Noisy { sigma } => format!("synthetic:noisy:{sigma}"),
            TrackerSpec::Drift {
                freeze_after,
                velocity_bias,
                reacquire,
            } => format!(
                "synthetic:drift:{freeze_after},{},{},{reacquire}",
                velocity_bias.0, velocity_bias.1
            ),
            TrackerSpec::MemoryAware => "synthetic:memory-aware".into(),
            TrackerSpec::External { command } => format!("exec:{}", command.join(" ")),
        }
    }
}

/// Recipe for constructing a grounder backend per sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum GrounderSpec {
    Scripted { sigma: f64, failure_prob: f64 },
    External { command: Vec<String> },
}

impl GrounderSpec {
    /// Parses a synthetic grounder name: `scripted[:sigma[,failure_prob]]`.
    pub fn parse_synthetic(s: &str) -> Result<GrounderSpec, String> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        if name != "scripted" {
            return Err(format!("unknown synthetic grounder {name:?}"));
        }
        let mut sigma = 0.0;
        let mut failure_prob = 0.0;
        if let Some(a) = args {
            let parts: Vec<&str> = a.split(',').collect();
            if !parts.is_empty() && !parts[0].is_empty() {
                sigma = parts[0]
                    .parse()
                    .map_err(|_| format!("bad grounder sigma {:?}", parts[0]))?;
            }
            if parts.len() == 2 {
                failure_prob = parts[1]
                    .parse()
                    .map_err(|_| format!("bad failure probability {:?}", parts[1]))?;
            } else if parts.len() > 2 {
                return Err(format!("bad grounder args {a:?}"));
            }
        }
        Ok(GrounderSpec::Scripted {
            sigma,
            failure_prob,
        })
    }
}

fn build_tracker(
    spec: &TrackerSpec,
    item: &SuiteItem,
    seed: u64,
) -> Result<Box<dyn Tracker>, HarnessError> {
    Ok(match spec {
        TrackerSpec::Oracle => Box::new(OracleTracker::new(item.sequence.clone())),
        TrackerSpec::Noisy { sigma } => {
            Box::new(NoisyTracker::new(item.sequence.clone(), *sigma, seed))
        }
        TrackerSpec::Drift {
            freeze_after,
            velocity_bias,
            reacquire,
        } => Box::new(DriftTracker::with_reacquire(
            &item.sequence,
            *freeze_after,
            *velocity_bias,
            *reacquire,
        )),
        TrackerSpec::MemoryAware => {
            let world = item.world.clone().ok_or_else(|| {
                HarnessError::Policy(
                    "memory-aware tracker needs a synthesized world (preset or synth dataset)"
                        .into(),
                )
            })?;
            Box::new(MemoryAwareTracker::new(world))
        }
        TrackerSpec::External { command } => {
            Box::new(ExternalTracker::spawn(command, item.sequence.clone())?)
        }
    })
}

fn build_grounder(
    spec: &GrounderSpec,
    item: &SuiteItem,
    seed: u64,
) -> Result<Box<dyn Grounder>, HarnessError> {
    Ok(match spec {
        GrounderSpec::Scripted {
            sigma,
            failure_prob,
        } => Box::new(ScriptedGrounder::new(
            item.sequence.clone(),
            item.world.clone(),
            *sigma,
            *failure_prob,
            seed,
        )),
        GrounderSpec::External { command } => Box::new(ExternalGrounder::spawn(command)?),
    })
}

/// Stable per-sequence seed derivation (FNV-1a over the run seed and name).
pub fn sequence_seed(run_seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in run_seed.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Builds fresh backends for the item and evaluates it.
pub fn run_one(
    item: &SuiteItem,
    tracker_spec: &TrackerSpec,
    grounder_spec: Option<&GrounderSpec>,
    policy: &EvalPolicy,
    run_seed: u64,
) -> Result<RunRecord, HarnessError> {
    let seed = sequence_seed(run_seed, &item.sequence.name);
    let mut tracker = build_tracker(tracker_spec, item, seed)?;
    let mut grounder = match grounder_spec {
        Some(g) => Some(build_grounder(g, item, seed)?),
        None => None,
    };
    run(
        &item.sequence,
        item.world.as_deref(),
        tracker.as_mut(),
        grounder.as_mut().map(|g| g.as_mut() as &mut dyn Grounder),
        policy,
    )
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub records: Vec<RunRecord>,
    /// Absent when every run failed and there is nothing to aggregate; the
    /// flagged partial records are still returned.
    pub report: Option<EvalReport>,
}

/// Evaluates a suite on a worker pool. Results are deterministic in the
/// worker count: each sequence gets its own seeded backends, and
/// aggregation folds records in input order.
pub fn run_suite(
    items: &[SuiteItem],
    tracker_spec: &TrackerSpec,
    grounder_spec: Option<&GrounderSpec>,
    policy: &EvalPolicy,
    parallelism: usize,
    run_seed: u64,
) -> Result<SuiteOutcome, HarnessError> {
    if items.is_empty() {
        return Err(HarnessError::Policy("no sequences to evaluate".into()));
    }
    let workers = parallelism.max(1).min(items.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunRecord, HarnessError>>>> =
        items.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = run_one(&items[i], tracker_spec, grounder_spec, policy, run_seed);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });

    let mut records = Vec::with_capacity(items.len());
    for slot in slots {
        let result = slot
            .into_inner()
            .expect("result slot")
            .expect("worker filled every slot");
        records.push(result?);
    }

    let mut reports = Vec::new();
    for (item, record) in items.iter().zip(&records) {
        if record.failed.is_none() {
            reports.push(evaluate_sequence(
                &record.predictions,
                &item.sequence,
                &policy.metric,
            )?);
        }
    }
    let report = if reports.is_empty() {
        None
    } else {
        Some(aggregate(reports)?)
    };
    Ok(SuiteOutcome { records, report })
}
