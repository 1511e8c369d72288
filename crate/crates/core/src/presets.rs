//! Built-in synthetic suites.
//!
//! The ablation suite is constructed so that each pipeline component's
//! removal costs measurable interactive score, making the expected ordering
//! (full > naive-IoU > no-CAM > no-IPM, full >= no-memory) hold with
//! deterministic margins. It mixes three sub-suites:
//!
//! - **drift**: a fast-moving target with a tracker that follows for a few
//!   frames after each (re)initialization and then freezes. Prompt-driven
//!   corrections are the only way to recover, so any variant that applies
//!   them beats the promptless baseline.
//! - **stability**: a stable tracker that sheds its initialization offset
//!   over time, paired with a noisy grounder. Arbitration keeps the clean
//!   tracker box, while blind adoption re-injects grounder noise at every
//!   prompt.
//! - **memory**: a memory-conditioned tracker confronted with a distractor
//!   that imitates the target's initial appearance while the target itself
//!   drifts in appearance. Only the variant that refreshes the positive
//!   bank keeps following the target.

use crate::arbitration::AblationSet;
use crate::dataset::{
    EventKind, EventScript, FeatureModel, ObjectSpec, Scenario, SynthSpec, TrajectoryKind,
};
use crate::harness::{EvalPolicy, GrounderSpec, Mode, SuiteItem, TrackerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One evaluation unit of the ablation suite: a sequence plus the backend
/// pair it is designed for.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub spec: SynthSpec,
    pub tracker: TrackerSpec,
    pub grounder: GrounderSpec,
}

impl AblationRun {
    pub fn item(&self) -> SuiteItem {
        SuiteItem::from_spec(&self.spec).expect("preset specs are valid")
    }
}

fn scenario_for(i: usize) -> Scenario {
    Scenario::ALL[i % Scenario::ALL.len()]
}

/// Drift sub-suite: a target snaking across the frame at ~4 px/frame with a
/// correction prompt every 30 frames.
fn drift_spec(index: usize, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd21f7);
    let x0 = 60.0 + rng.gen_range(0.0..30.0);
    let y0 = 50.0 + rng.gen_range(0.0..25.0);
    let step_x = 90.0 + rng.gen_range(0.0..12.0);
    let step_y = 64.0 + rng.gen_range(0.0..8.0);
    let waypoints = (0..=5)
        .map(|k| (k * 30, (x0 + step_x * k as f64, y0 + step_y * k as f64)))
        .collect();
    SynthSpec {
        name: format!("abl-drift-{index:02}"),
        scenario: scenario_for(index),
        seed,
        n_frames: 150,
        width: 640,
        height: 480,
        objects: vec![ObjectSpec {
            trajectory: TrajectoryKind::PiecewiseLinear { waypoints },
            box_size: (40.0, 40.0),
            ..Default::default()
        }],
        events: vec![
            EventScript::new(0, EventKind::Init, 0),
            EventScript::new(30, EventKind::Correction, 0),
            EventScript::new(60, EventKind::Correction, 0),
            EventScript::new(90, EventKind::Correction, 0),
            EventScript::new(120, EventKind::Correction, 0),
        ],
        distractor_similarity: 0.4,
    }
}

/// Stability sub-suite: a slow target; tracker quality hinges on not
/// re-injecting grounder noise.
fn stability_spec(index: usize, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57ab1e);
    let start = (
        120.0 + rng.gen_range(0.0..60.0),
        120.0 + rng.gen_range(0.0..60.0),
    );
    let velocity = (
        0.3 + rng.gen_range(0.0..0.3),
        0.25 + rng.gen_range(0.0..0.25),
    );
    SynthSpec {
        name: format!("abl-stability-{index:02}"),
        scenario: scenario_for(index),
        seed,
        n_frames: 150,
        width: 640,
        height: 480,
        objects: vec![ObjectSpec {
            trajectory: TrajectoryKind::Linear { start, velocity },
            box_size: (40.0, 40.0),
            ..Default::default()
        }],
        events: vec![
            EventScript::new(0, EventKind::Init, 0),
            EventScript::new(30, EventKind::Correction, 0),
            EventScript::new(60, EventKind::Correction, 0),
            EventScript::new(90, EventKind::Correction, 0),
            EventScript::new(120, EventKind::Correction, 0),
        ],
        distractor_similarity: 0.4,
    }
}

/// Memory sub-suite: object 0 is a distractor that mimics the target's
/// initial appearance; object 1 is the target with drifting appearance. The
/// two stay far apart, so picking the wrong one zeroes the frame IoU and
/// jumping between them trips the drift detector.
fn memory_spec(index: usize, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3e3027);
    let target_start = (
        120.0 + rng.gen_range(-20.0..20.0),
        320.0 + rng.gen_range(-20.0..20.0),
    );
    let mimic_start = (
        460.0 + rng.gen_range(-20.0..20.0),
        100.0 + rng.gen_range(-20.0..20.0),
    );
    SynthSpec {
        name: format!("abl-memory-{index:02}"),
        scenario: scenario_for(index),
        seed,
        n_frames: 160,
        width: 640,
        height: 480,
        objects: vec![
            // The mimic sits first so that empty-bank score ties resolve to
            // it: a variant that never learns stays confused.
            ObjectSpec {
                trajectory: TrajectoryKind::Linear {
                    start: mimic_start,
                    velocity: (-0.3, 0.4),
                },
                box_size: (40.0, 40.0),
                feature: FeatureModel::MimicInit { of: 1, angle: 0.5 },
                ..Default::default()
            },
            ObjectSpec {
                trajectory: TrajectoryKind::Linear {
                    start: target_start,
                    velocity: (0.5, -0.3),
                },
                box_size: (40.0, 40.0),
                feature: FeatureModel::Anchored { drift: 0.011 },
                ..Default::default()
            },
        ],
        events: vec![
            EventScript::new(0, EventKind::Init, 1),
            EventScript::new(40, EventKind::Correction, 1),
            EventScript::new(80, EventKind::Correction, 1),
            EventScript::new(120, EventKind::Correction, 1),
        ],
        distractor_similarity: 0.4,
    }
}

/// The 20-sequence canonical ablation suite with its per-run backends.
pub fn ablation_suite(seed: u64) -> Vec<AblationRun> {
    let mut runs = Vec::with_capacity(20);
    for i in 0..8 {
        runs.push(AblationRun {
            spec: drift_spec(i, seed.wrapping_add(i as u64)),
            tracker: TrackerSpec::Drift {
                freeze_after: 15,
                velocity_bias: (0.0, 0.0),
                reacquire: 1.0,
            },
            grounder: GrounderSpec::Scripted {
                sigma: 3.0,
                failure_prob: 0.0,
            },
        });
    }
    for i in 0..6 {
        runs.push(AblationRun {
            spec: stability_spec(i, seed.wrapping_add(100 + i as u64)),
            tracker: TrackerSpec::Drift {
                freeze_after: usize::MAX,
                velocity_bias: (0.0, 0.0),
                reacquire: 0.92,
            },
            grounder: GrounderSpec::Scripted {
                sigma: 3.0,
                failure_prob: 0.0,
            },
        });
    }
    for i in 0..6 {
        runs.push(AblationRun {
            spec: memory_spec(i, seed.wrapping_add(200 + i as u64)),
            tracker: TrackerSpec::MemoryAware,
            grounder: GrounderSpec::Scripted {
                sigma: 0.0,
                failure_prob: 0.0,
            },
        });
    }
    runs
}

/// Just the sequences of the ablation suite (for `synth --preset`).
pub fn ablation_suite_specs(seed: u64) -> Vec<SynthSpec> {
    ablation_suite(seed).into_iter().map(|r| r.spec).collect()
}

/// The policy the ablation suite is calibrated for: the full pipeline with
/// a finer memory novelty gate so that gradual appearance refreshes are
/// admitted to the positive bank.
pub fn ablation_policy(ablation: AblationSet) -> EvalPolicy {
    let mut policy = EvalPolicy {
        mode: Mode::Imat,
        ..Default::default()
    };
    policy.arbitration.ablation = ablation;
    policy.memory.novelty_epsilon = 0.02;
    policy
}

/// Small all-scenario suite with switches, corrections, refinements, and an
/// occlusion stretch; used for oracle end-to-end checks and demos.
pub fn smoke_suite_specs(seed: u64) -> Vec<SynthSpec> {
    Scenario::ALL
        .iter()
        .enumerate()
        .map(|(i, &scenario)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x50c4 + i as u64));
            let left_start = (
                80.0 + rng.gen_range(0.0..40.0),
                100.0 + rng.gen_range(0.0..60.0),
            );
            let right_start = (
                420.0 + rng.gen_range(0.0..40.0),
                280.0 + rng.gen_range(0.0..60.0),
            );
            SynthSpec {
                name: format!("smoke-{}", scenario.as_str()),
                scenario,
                seed: seed ^ i as u64,
                n_frames: 100,
                width: 640,
                height: 480,
                objects: vec![
                    ObjectSpec {
                        trajectory: TrajectoryKind::Linear {
                            start: left_start,
                            velocity: (0.8, 0.5),
                        },
                        box_size: (36.0, 30.0),
                        // Out of the way of every event frame.
                        occlusions: vec![(30, 42)],
                        ..Default::default()
                    },
                    ObjectSpec {
                        trajectory: TrajectoryKind::Sinusoidal {
                            center: right_start,
                            amplitude: (40.0, 30.0),
                            period: 60.0,
                            phase: rng.gen_range(0.0..1.0),
                        },
                        box_size: (32.0, 32.0),
                        ..Default::default()
                    },
                ],
                events: vec![
                    EventScript::new(0, EventKind::Init, 0),
                    EventScript::new(25, EventKind::Correction, 0),
                    EventScript::new(50, EventKind::Switch, 1),
                    EventScript::new(75, EventKind::Refine, 1),
                ],
                distractor_similarity: 0.5,
            }
        })
        .collect()
}

/// Resolves a preset name to its sequence specs.
pub fn preset_specs(name: &str, seed: u64) -> Option<Vec<SynthSpec>> {
    match name {
        "ablation-suite" => Some(ablation_suite_specs(seed)),
        "smoke" => Some(smoke_suite_specs(seed)),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 2] = ["ablation-suite", "smoke"];
