//! Acceptance suite: one test per criterion, each printing its own
//! pass/fail line through the harness. Criteria cover metric-formula
//! equivalence against an independent brute-force implementation, frozen
//! spot values, oracle end-to-end behavior, arbitration branch coverage,
//! ablation ordering, memory invariants, wire-protocol conformance, and
//! report determinism.

use itrack_core::arbitration::{arbitrate, AblationSet, ArbitrationConfig, EmbeddingPair, Phase};
use itrack_core::dataset::{
    synthesize, EventKind, FrameAnnotation, FrameState, InteractionEvent, Scenario, Sequence,
    SynthSpec,
};
use itrack_core::geometry::{self, BoundingBox, FrameSize};
use itrack_core::harness::{run_one, EvalPolicy, GrounderSpec, Mode, PromptEffect, TrackerSpec};
use itrack_core::memory::{score, InsertOutcome, MemoryBank, MemoryEntry, Polarity};
use itrack_core::metrics::{
    aggregate, evaluate_sequence, EvalReport, FramePrediction, MetricConfig, SequenceReport,
};
use itrack_core::presets;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const TOL: f64 = 1e-12;

fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

// ---------------------------------------------------------------------------
// Brute-force metric oracle: a direct transliteration of the metric
// formulas, independent of the metrics module. Only the geometry primitives
// are shared; those carry their own rasterization oracle.
// ---------------------------------------------------------------------------
mod brute {
    use super::*;

    pub struct BruteReport {
        pub scenario: Scenario,
        pub interactive_score: Option<f64>,
        pub responsiveness: Option<f64>,
        pub perception_accuracy: Option<f64>,
        pub perception_precision: Option<f64>,
        pub auc: Option<f64>,
        pub precision: Option<f64>,
        pub norm_precision: Option<f64>,
        pub success: Option<Vec<f64>>,
        pub precision_curve: Option<Vec<f64>>,
        pub norm_curve: Option<Vec<f64>>,
    }

    fn iou_of(pred: &FrameState, gt: &BoundingBox) -> f64 {
        match pred {
            FrameState::Absent => 0.0,
            FrameState::Present(p) => geometry::iou(p, gt),
        }
    }

    pub fn evaluate(preds: &[FramePrediction], seq: &Sequence, cfg: &MetricConfig) -> BruteReport {
        // Perception over prompt frames with present ground truth, against
        // each event's described target box.
        let mut perc_hits = 0usize;
        let mut perc_sum = 0.0;
        let mut perc_n = 0usize;
        for ev in &seq.events {
            if !seq.frames[ev.t].state.is_present() {
                continue;
            }
            let v = iou_of(&preds[ev.t].state, &ev.gt_new);
            if v > cfg.tau_perception {
                perc_hits += 1;
            }
            perc_sum += v;
            perc_n += 1;
        }

        // Switch accuracy: strictly closer to the new target.
        let mut resp_ok = 0usize;
        let mut resp_n = 0usize;
        for ev in seq.events.iter().filter(|e| e.kind == EventKind::Switch) {
            if !seq.frames[ev.t].state.is_present() {
                continue;
            }
            let old = ev.gt_old.as_ref().unwrap();
            let new_iou = iou_of(&preds[ev.t].state, &ev.gt_new);
            let old_iou = iou_of(&preds[ev.t].state, old);
            let mut ok = new_iou > old_iou;
            if cfg.require_switch_overlap {
                ok = ok && new_iou > 0.5;
            }
            if ok {
                resp_ok += 1;
            }
            resp_n += 1;
        }

        // Segment means over valid frames; empty segments dropped.
        let n = seq.frames.len();
        let mut segment_means = Vec::new();
        for (i, ev) in seq.events.iter().enumerate() {
            let end = seq.events.get(i + 1).map_or(n, |e| e.t);
            let mut sum = 0.0;
            let mut count = 0usize;
            for (frame, pred) in seq.frames[ev.t..end].iter().zip(&preds[ev.t..end]) {
                if let FrameState::Present(gt) = &frame.state {
                    sum += iou_of(&pred.state, gt);
                    count += 1;
                }
            }
            if count > 0 {
                segment_means.push(sum / count as f64);
            }
        }
        let interactive = if segment_means.is_empty() {
            None
        } else {
            Some(segment_means.iter().sum::<f64>() / segment_means.len() as f64)
        };

        // Per-valid-frame quantities for the tracking curves.
        let mut ious = Vec::new();
        let mut dists = Vec::new();
        let mut norms = Vec::new();
        for (frame, pred) in seq.frames.iter().zip(preds) {
            let gt = match &frame.state {
                FrameState::Absent => continue,
                FrameState::Present(g) => g,
            };
            match &pred.state {
                FrameState::Absent => {
                    ious.push(0.0);
                    dists.push(f64::INFINITY);
                    norms.push(f64::INFINITY);
                }
                FrameState::Present(p) => {
                    ious.push(geometry::iou(p, gt));
                    dists.push(geometry::center_distance(p, gt));
                    norms.push(geometry::normalized_center_distance(p, gt).unwrap());
                }
            }
        }

        let (auc, precision, norm_precision, success, precision_curve, norm_curve) =
            if ious.is_empty() {
                (None, None, None, None, None, None)
            } else {
                let count = ious.len() as f64;
                let success: Vec<f64> = cfg
                    .success_thresholds
                    .iter()
                    .map(|&th| {
                        ious.iter()
                            .filter(|&&v| {
                                if cfg.inclusive_success {
                                    v >= th
                                } else {
                                    v > th
                                }
                            })
                            .count() as f64
                            / count
                    })
                    .collect();
                let precision_curve: Vec<f64> = cfg
                    .precision_grid
                    .iter()
                    .map(|&g| dists.iter().filter(|&&d| d <= g).count() as f64 / count)
                    .collect();
                let norm_curve: Vec<f64> = cfg
                    .norm_precision_grid
                    .iter()
                    .map(|&g| norms.iter().filter(|&&d| d < g).count() as f64 / count)
                    .collect();
                let auc = success.iter().sum::<f64>() / success.len() as f64;
                let precision = dists
                    .iter()
                    .filter(|&&d| d <= cfg.precision_threshold_px)
                    .count() as f64
                    / count;
                let norm_precision = norm_curve.iter().sum::<f64>() / norm_curve.len() as f64;
                (
                    Some(auc),
                    Some(precision),
                    Some(norm_precision),
                    Some(success),
                    Some(precision_curve),
                    Some(norm_curve),
                )
            };

        BruteReport {
            scenario: seq.scenario,
            interactive_score: interactive,
            responsiveness: if resp_n == 0 {
                None
            } else {
                Some(resp_ok as f64 / resp_n as f64)
            },
            perception_accuracy: if perc_n == 0 {
                None
            } else {
                Some(perc_hits as f64 / perc_n as f64)
            },
            perception_precision: if perc_n == 0 {
                None
            } else {
                Some(perc_sum / perc_n as f64)
            },
            auc,
            precision,
            norm_precision,
            success,
            precision_curve,
            norm_curve,
        }
    }

    pub fn mean(values: &[Option<f64>]) -> Option<f64> {
        let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }

    pub fn mean_curves(curves: &[Option<&Vec<f64>>]) -> Option<Vec<f64>> {
        let defined: Vec<&Vec<f64>> = curves.iter().filter_map(|c| *c).collect();
        let first = defined.first()?;
        let mut out = vec![0.0; first.len()];
        for c in &defined {
            for (acc, v) in out.iter_mut().zip(c.iter()) {
                *acc += v;
            }
        }
        for v in &mut out {
            *v /= defined.len() as f64;
        }
        Some(out)
    }
}

fn assert_opt_close(label: &str, got: Option<f64>, want: Option<f64>) {
    match (got, want) {
        (None, None) => {}
        (Some(g), Some(w)) => {
            assert!((g - w).abs() <= TOL, "{label}: {g} vs {w}");
        }
        other => panic!("{label}: definedness mismatch {other:?}"),
    }
}

fn assert_curve_close(label: &str, got: Option<&Vec<f64>>, want: Option<&Vec<f64>>) {
    match (got, want) {
        (None, None) => {}
        (Some(g), Some(w)) => {
            assert_eq!(g.len(), w.len(), "{label} length");
            for (i, (a, b)) in g.iter().zip(w).enumerate() {
                assert!((a - b).abs() <= TOL, "{label}[{i}]: {a} vs {b}");
            }
        }
        (got, want) => panic!(
            "{label}: definedness mismatch ({} vs {})",
            got.is_some(),
            want.is_some()
        ),
    }
}

fn compare_sequence(report: &SequenceReport, brute: &brute::BruteReport) {
    let name = &report.name;
    assert_opt_close(
        &format!("{name} interactive"),
        report.scalars.interactive_score,
        brute.interactive_score,
    );
    assert_opt_close(
        &format!("{name} responsiveness"),
        report.scalars.responsiveness,
        brute.responsiveness,
    );
    assert_opt_close(
        &format!("{name} perception accuracy"),
        report.scalars.perception_accuracy,
        brute.perception_accuracy,
    );
    assert_opt_close(
        &format!("{name} perception precision"),
        report.scalars.perception_precision,
        brute.perception_precision,
    );
    assert_opt_close(&format!("{name} auc"), report.scalars.auc, brute.auc);
    assert_opt_close(
        &format!("{name} precision"),
        report.scalars.precision,
        brute.precision,
    );
    assert_opt_close(
        &format!("{name} norm precision"),
        report.scalars.norm_precision,
        brute.norm_precision,
    );
    let curves = report.curves.as_ref();
    assert_curve_close(
        &format!("{name} success curve"),
        curves.map(|c| &c.success),
        brute.success.as_ref(),
    );
    assert_curve_close(
        &format!("{name} precision curve"),
        curves.map(|c| &c.precision),
        brute.precision_curve.as_ref(),
    );
    assert_curve_close(
        &format!("{name} norm curve"),
        curves.map(|c| &c.norm_precision),
        brute.norm_curve.as_ref(),
    );
}

fn compare_aggregate(report: &EvalReport, brutes: &[brute::BruteReport]) {
    type Extract = fn(&brute::BruteReport) -> Option<f64>;
    let fields: [(&str, Extract); 7] = [
        ("interactive_score", |b| b.interactive_score),
        ("responsiveness", |b| b.responsiveness),
        ("perception_accuracy", |b| b.perception_accuracy),
        ("perception_precision", |b| b.perception_precision),
        ("auc", |b| b.auc),
        ("precision", |b| b.precision),
        ("norm_precision", |b| b.norm_precision),
    ];
    for (field, extract) in fields {
        let want = brute::mean(&brutes.iter().map(extract).collect::<Vec<_>>());
        assert_opt_close(
            &format!("overall {field}"),
            report.overall.scalars.get(field),
            want,
        );
        for (scenario, bucket) in &report.per_scenario {
            let in_bucket: Vec<Option<f64>> = brutes
                .iter()
                .filter(|b| b.scenario == *scenario)
                .map(extract)
                .collect();
            assert_opt_close(
                &format!("{scenario} {field}"),
                bucket.scalars.get(field),
                brute::mean(&in_bucket),
            );
        }
    }
    let want_success = brute::mean_curves(
        &brutes
            .iter()
            .map(|b| b.success.as_ref())
            .collect::<Vec<_>>(),
    );
    assert_curve_close(
        "overall success curve",
        report.overall.curves.as_ref().map(|c| &c.success),
        want_success.as_ref(),
    );
}

/// Randomized prediction track: jittered ground truth, occasional absences,
/// occasional wild boxes.
fn random_predictions(seq: &Sequence, seed: u64) -> Vec<FramePrediction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_box = seq.events[0].gt_new;
    (0..seq.frames.len())
        .map(|t| {
            if let FrameState::Present(b) = &seq.frames[t].state {
                last_box = *b;
            }
            if rng.gen_bool(0.1) {
                return FramePrediction::absent(t);
            }
            let base = last_box;
            let b = if rng.gen_bool(0.05) {
                bb(
                    rng.gen_range(0.0..600.0),
                    rng.gen_range(0.0..440.0),
                    rng.gen_range(5.0..80.0),
                    rng.gen_range(5.0..80.0),
                )
            } else {
                bb(
                    (base.x + rng.gen_range(-40.0..40.0)).max(0.0),
                    (base.y + rng.gen_range(-40.0..40.0)).max(0.0),
                    base.w * rng.gen_range(0.5..1.5),
                    base.h * rng.gen_range(0.5..1.5),
                )
            };
            FramePrediction::present(t, b)
        })
        .collect()
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let started = Instant::now();
    let cfg = MetricConfig::default();
    let mut reports = Vec::new();
    let mut brutes = Vec::new();
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xace0 + i);
        let spec = SynthSpec::randomized(
            format!("oracle-eq-{i:03}"),
            Scenario::ALL[(i % 6) as usize],
            i,
            rng.gen_range(20..=200),
            rng.gen_range(1..=3),
            rng.gen_range(0.0..0.9),
        );
        let seq = synthesize(&spec).unwrap();
        let preds = random_predictions(&seq, 0xfeed + i);
        let report = evaluate_sequence(&preds, &seq, &cfg).unwrap();
        for field in itrack_core::metrics::ScalarSet::FIELDS {
            if let Some(v) = report.scalars.get(field) {
                assert!((0.0..=1.0).contains(&v), "{field} out of range: {v}");
            }
        }
        let brute = brute::evaluate(&preds, &seq, &cfg);
        compare_sequence(&report, &brute);
        reports.push(report);
        brutes.push(brute);
    }
    let aggregated = aggregate(reports).unwrap();
    compare_aggregate(&aggregated, &brutes);
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "criterion 1 took {elapsed:?}, budget is 10 s"
    );
    println!(
        "criterion 1: 100 sequences matched the brute-force oracle within 1e-12 ({elapsed:?})"
    );
}

/// Ground truth used by the nested-box fixtures: IoU against it is exactly
/// `k/100` for a nested width-`k` prediction.
fn fixture_sequence(n: usize, events: Vec<InteractionEvent>) -> Sequence {
    let gt = bb(0.0, 0.0, 100.0, 1.0);
    Sequence {
        name: "fixture".into(),
        scenario: Scenario::Other,
        size: FrameSize::new(4000, 4000).unwrap(),
        frames: (0..n)
            .map(|t| FrameAnnotation {
                t,
                state: FrameState::Present(gt),
            })
            .collect(),
        events,
        object_features: None,
    }
}

fn event(
    t: usize,
    kind: EventKind,
    gt_new: BoundingBox,
    gt_old: Option<BoundingBox>,
) -> InteractionEvent {
    InteractionEvent {
        t,
        kind,
        text: String::from("fixture prompt"),
        gt_new,
        gt_old,
    }
}

#[test]
fn criterion_2_formula_spot_values() {
    let cfg = MetricConfig::default();
    let gt = bb(0.0, 0.0, 100.0, 1.0);
    let nested = |k: u32| bb(0.0, 0.0, k as f64, 1.0);

    // Perception on the three-event fixture: IoUs 0.6, 0.4, 0.9.
    let seq = fixture_sequence(
        30,
        vec![
            event(0, EventKind::Init, gt, None),
            event(10, EventKind::Correction, gt, None),
            event(20, EventKind::Correction, gt, None),
        ],
    );
    let preds: Vec<FramePrediction> = (0..30)
        .map(|t| match t {
            0 => FramePrediction::present(t, nested(60)),
            10 => FramePrediction::present(t, nested(40)),
            20 => FramePrediction::present(t, nested(90)),
            _ => FramePrediction::present(t, gt),
        })
        .collect();
    let report = evaluate_sequence(&preds, &seq, &cfg).unwrap();
    let acc = report.scalars.perception_accuracy.unwrap();
    let prec = report.scalars.perception_precision.unwrap();
    assert!((acc - 2.0 / 3.0).abs() <= TOL, "perception accuracy {acc}");
    assert!(
        (prec - 19.0 / 30.0).abs() <= TOL,
        "perception precision {prec}"
    );

    // Responsiveness on the two-switch fixture: one correct, one wrong.
    let new_box = bb(0.0, 0.0, 100.0, 1.0);
    let old_box = bb(200.0, 0.0, 100.0, 1.0);
    let seq = fixture_sequence(
        6,
        vec![
            event(0, EventKind::Init, gt, None),
            event(2, EventKind::Switch, new_box, Some(old_box)),
            event(4, EventKind::Switch, new_box, Some(old_box)),
        ],
    );
    let preds: Vec<FramePrediction> = (0..6)
        .map(|t| match t {
            2 => FramePrediction::present(t, bb(10.0, 0.0, 80.0, 1.0)),
            4 => FramePrediction::present(t, bb(210.0, 0.0, 80.0, 1.0)),
            _ => FramePrediction::present(t, gt),
        })
        .collect();
    let resp = evaluate_sequence(&preds, &seq, &cfg)
        .unwrap()
        .scalars
        .responsiveness
        .unwrap();
    assert!((resp - 0.5).abs() <= TOL, "responsiveness {resp}");

    // Interactive score on the two-segment fixture: segments {1.0, 0.5} and
    // {0.0}.
    let seq = fixture_sequence(
        3,
        vec![
            event(0, EventKind::Init, gt, None),
            event(2, EventKind::Correction, gt, None),
        ],
    );
    let preds = vec![
        FramePrediction::present(0, gt),
        FramePrediction::present(1, nested(50)),
        FramePrediction::absent(2),
    ];
    let score = evaluate_sequence(&preds, &seq, &cfg)
        .unwrap()
        .scalars
        .interactive_score
        .unwrap();
    assert!((score - 0.375).abs() <= TOL, "interactive score {score}");

    // AUC of a single frame with IoU 0.5 on the default 21-point grid.
    let seq = fixture_sequence(1, vec![event(0, EventKind::Init, gt, None)]);
    let preds = vec![FramePrediction::present(0, nested(50))];
    let auc = evaluate_sequence(&preds, &seq, &cfg)
        .unwrap()
        .scalars
        .auc
        .unwrap();
    assert!((auc - 10.0 / 21.0).abs() <= TOL, "auc {auc}");

    println!("criterion 2: all formula spot values exact to 1e-12");
}

#[test]
fn criterion_3_oracle_end_to_end() {
    for spec in presets::smoke_suite_specs(3) {
        let item = itrack_core::harness::SuiteItem::from_spec(&spec).unwrap();
        for mode in [
            Mode::GtReinit,
            Mode::TextForward,
            Mode::FirstBoxOnly,
            Mode::Imat,
        ] {
            for effect in [PromptEffect::SameFrame, PromptEffect::NextFrame] {
                let policy = EvalPolicy {
                    mode,
                    prompt_effect: effect,
                    ..Default::default()
                };
                let grounder = (mode == Mode::Imat).then_some(GrounderSpec::Scripted {
                    sigma: 0.0,
                    failure_prob: 0.0,
                });
                let record =
                    run_one(&item, &TrackerSpec::Oracle, grounder.as_ref(), &policy, 1).unwrap();
                assert!(record.failed.is_none());
                let report =
                    evaluate_sequence(&record.predictions, &item.sequence, &policy.metric).unwrap();
                let label = format!("{} {} {}", spec.name, mode.as_str(), effect.as_str());
                assert_eq!(report.scalars.interactive_score, Some(1.0), "{label}");
                assert_eq!(report.scalars.responsiveness, Some(1.0), "{label}");
                assert_eq!(report.scalars.perception_accuracy, Some(1.0), "{label}");
                assert_eq!(report.scalars.precision, Some(1.0), "{label}");
                assert_eq!(report.scalars.auc, Some(20.0 / 21.0), "{label}");
            }
        }
    }
    println!("criterion 3: oracle tracker maximal under every mode and prompt effect");
}

#[test]
fn criterion_4_arbitration_branch_coverage() {
    let cfg = ArbitrationConfig::default();
    assert_eq!(cfg.tau_init, 0.3);
    assert_eq!(cfg.tau_reinit, 0.6);
    let mut track_embed = vec![0.0; 16];
    track_embed[0] = 1.0;
    let mut ipm_embed = vec![0.0; 16];
    ipm_embed[1] = 1.0;

    for phase in [Phase::Init, Phase::Runtime] {
        let tau = cfg.tau_for(phase);
        for k in [0u32, 29, 30, 31, 59, 60, 61, 100] {
            // Nested integer-width boxes make the IoU bit-exactly k/100.
            let track = bb(0.0, 0.0, k.max(1) as f64, 1.0);
            let (track, ipm) = if k == 0 {
                (bb(500.0, 0.0, 1.0, 1.0), bb(0.0, 0.0, 100.0, 1.0))
            } else {
                (track, bb(0.0, 0.0, 100.0, 1.0))
            };
            let decision = arbitrate(
                &track,
                &ipm,
                EmbeddingPair {
                    track: Some(&track_embed),
                    ipm: Some(&ipm_embed),
                },
                &cfg,
                phase,
            )
            .unwrap();
            let iou = k as f64 / 100.0;
            assert_eq!(decision.iou, iou, "measured IoU at {k}/100");
            let expect_reinit = iou < tau; // equality keeps
            assert_eq!(
                decision.action.is_reinit(),
                expect_reinit,
                "{phase:?} iou {iou}"
            );
            if expect_reinit {
                assert_eq!(decision.final_box, ipm);
                assert_eq!(decision.memory_ops.len(), 2, "{phase:?} iou {iou}");
                assert_eq!(decision.memory_ops[0].polarity, Polarity::Negative);
                assert_eq!(decision.memory_ops[0].embedding, track_embed);
                assert_eq!(decision.memory_ops[1].polarity, Polarity::Positive);
                assert_eq!(decision.memory_ops[1].embedding, ipm_embed);
            } else {
                assert_eq!(decision.final_box, track);
                assert_eq!(decision.memory_ops.len(), 1, "{phase:?} iou {iou}");
                assert_eq!(decision.memory_ops[0].polarity, Polarity::Positive);
                assert_eq!(decision.memory_ops[0].embedding, track_embed);
            }
        }
    }
    println!("criterion 4: arbitration case split exact on the IoU grid for both phases");
}

#[test]
fn criterion_5_ablation_direction() {
    let started = Instant::now();
    let variants: [(&str, AblationSet); 5] = [
        ("full", AblationSet::none()),
        (
            "naive-iou",
            AblationSet {
                naive_iou: true,
                ..Default::default()
            },
        ),
        (
            "no-cam",
            AblationSet {
                no_cam: true,
                ..Default::default()
            },
        ),
        (
            "no-ipm",
            AblationSet {
                no_ipm: true,
                ..Default::default()
            },
        ),
        (
            "no-memory",
            AblationSet {
                no_memory: true,
                ..Default::default()
            },
        ),
    ];
    let suite = presets::ablation_suite(0);
    let mut means = std::collections::BTreeMap::new();
    for (name, ablation) in variants {
        let policy = presets::ablation_policy(ablation);
        let mut sum = 0.0;
        for run_cfg in &suite {
            let item = run_cfg.item();
            let record = run_one(
                &item,
                &run_cfg.tracker,
                Some(&run_cfg.grounder),
                &policy,
                42,
            )
            .unwrap();
            assert!(record.failed.is_none(), "{name} {}", run_cfg.spec.name);
            let report =
                evaluate_sequence(&record.predictions, &item.sequence, &policy.metric).unwrap();
            sum += report.scalars.interactive_score.expect("defined score");
        }
        means.insert(name, sum / suite.len() as f64);
    }
    let (full, naive, no_cam, no_ipm, no_memory) = (
        means["full"],
        means["naive-iou"],
        means["no-cam"],
        means["no-ipm"],
        means["no-memory"],
    );
    println!(
        "criterion 5: interactive score means full={full:.4} naive-iou={naive:.4} \
         no-cam={no_cam:.4} no-ipm={no_ipm:.4} no-memory={no_memory:.4}"
    );
    assert!(full > naive, "full > naive-iou");
    assert!(naive > no_cam, "naive-iou > no-cam");
    assert!(no_cam > no_ipm, "no-cam > no-ipm");
    assert!(full >= no_memory, "full >= no-memory");
    assert!(
        full - no_ipm >= 0.05,
        "full/no-ipm gap {:.4}",
        full - no_ipm
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "criterion 5 took {elapsed:?}, budget is 30 s"
    );
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[test]
fn criterion_6_memory_invariants() {
    let started = Instant::now();

    // 50 bank configurations, 2000 inserts each: capacity and pairwise
    // novelty must hold after every insert.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e6f);
    let mut total_inserts = 0usize;
    for config_index in 0..50usize {
        let capacity = 1 + config_index % 16;
        let eps = 0.05 + 0.015 * (config_index % 20) as f64;
        let polarity = if config_index % 2 == 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        let mut bank = MemoryBank::new(polarity, capacity, eps, 16).unwrap();
        for frame in 0..2000usize {
            let entry = MemoryEntry::new(random_unit(&mut rng), frame, polarity).unwrap();
            bank.insert(entry).unwrap();
            total_inserts += 1;
            assert!(bank.len() <= capacity, "capacity violated");
            bank.check_invariants().unwrap();
        }
    }
    assert_eq!(total_inserts, 100_000);

    // Monotonicity on 10^4 random (bank, candidate) probes: a successful
    // positive insert never lowers a candidate's score, a negative one
    // never raises it.
    let mut probes = 0usize;
    while probes < 10_000 {
        let mut pos = MemoryBank::new(Polarity::Positive, 64, 0.02, 16).unwrap();
        let mut neg = MemoryBank::new(Polarity::Negative, 64, 0.02, 16).unwrap();
        for frame in 0..rng.gen_range(1..6) {
            let _ = pos.insert(
                MemoryEntry::new(random_unit(&mut rng), frame, Polarity::Positive).unwrap(),
            );
            let _ = neg.insert(
                MemoryEntry::new(random_unit(&mut rng), frame, Polarity::Negative).unwrap(),
            );
        }
        let candidate = random_unit(&mut rng);
        let before = score(&candidate, &pos, &neg, 1.0).unwrap();

        let mut pos2 = pos.clone();
        if matches!(
            pos2.insert(MemoryEntry::new(random_unit(&mut rng), 99, Polarity::Positive).unwrap())
                .unwrap(),
            InsertOutcome::Added
        ) {
            let after = score(&candidate, &pos2, &neg, 1.0).unwrap();
            assert!(after >= before - TOL, "positive insert lowered score");
        }
        let mut neg2 = neg.clone();
        if matches!(
            neg2.insert(MemoryEntry::new(random_unit(&mut rng), 99, Polarity::Negative).unwrap())
                .unwrap(),
            InsertOutcome::Added
        ) {
            let after = score(&candidate, &pos, &neg2, 1.0).unwrap();
            assert!(after <= before + TOL, "negative insert raised score");
        }
        probes += 1;
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "criterion 6 took {elapsed:?}, budget is 10 s"
    );
    println!("criterion 6: 100000 inserts and 10000 probes clean ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// CLI-level criteria.
// ---------------------------------------------------------------------------

fn itrack() -> Command {
    Command::new(env!("CARGO_BIN_EXE_itrack"))
}

fn echo_backend() -> &'static str {
    env!("CARGO_BIN_EXE_itrack-echo-backend")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("itrack-accept-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_cli(cmd: &mut Command) -> Output {
    cmd.env("ITRACK_LOG", "quiet")
        .output()
        .expect("spawn itrack")
}

fn long_sequence_file(dir: &Path) -> PathBuf {
    let spec = SynthSpec {
        name: "wire-500".into(),
        scenario: Scenario::Surveillance,
        seed: 500,
        n_frames: 500,
        width: 640,
        height: 480,
        objects: vec![itrack_core::dataset::ObjectSpec {
            trajectory: itrack_core::dataset::TrajectoryKind::Linear {
                start: (50.0, 50.0),
                velocity: (1.0, 0.7),
            },
            box_size: (40.0, 40.0),
            ..Default::default()
        }],
        events: vec![
            itrack_core::dataset::EventScript::new(0, EventKind::Init, 0),
            itrack_core::dataset::EventScript::new(150, EventKind::Correction, 0),
            itrack_core::dataset::EventScript::new(300, EventKind::Correction, 0),
            itrack_core::dataset::EventScript::new(450, EventKind::Correction, 0),
        ],
        distractor_similarity: 0.0,
    };
    let seq = synthesize(&spec).unwrap();
    let path = dir.join("wire-500.json");
    itrack_core::dataset::save(&seq, &path).unwrap();
    path
}

#[test]
fn criterion_7_wire_protocol_conformance() {
    let dir = tmp_dir("wire");
    let seq_path = long_sequence_file(&dir);

    // Clean round trip over 500 frames.
    let out = dir.join("ok");
    let output = run_cli(
        itrack()
            .arg("eval")
            .arg("--dataset")
            .arg(&seq_path)
            .args([
                "--mode",
                "gt-reinit",
                "--prompt-effect",
                "next-frame",
                "--seed",
                "1",
            ])
            .arg("--tracker")
            .arg(format!("exec:{}", echo_backend()))
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(
        output.status.code(),
        Some(0),
        "round trip failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("runs/wire-500.json")).unwrap()).unwrap();
    assert_eq!(record["predictions"].as_array().unwrap().len(), 500);
    assert!(record["failed"].is_null());

    // Every malformed-message class aborts with exit code 2 and a message
    // naming the offending reply line.
    for kind in ["out-of-order", "missing-field", "garbage"] {
        let out = dir.join(format!("bad-{kind}"));
        let output = run_cli(
            itrack()
                .arg("eval")
                .arg("--dataset")
                .arg(&seq_path)
                .args([
                    "--mode",
                    "gt-reinit",
                    "--prompt-effect",
                    "next-frame",
                    "--seed",
                    "1",
                ])
                .arg("--tracker")
                .arg(format!(
                    "exec:{} --malform={kind} --malform-at=7",
                    echo_backend()
                ))
                .arg("--out")
                .arg(&out),
        );
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert_eq!(output.status.code(), Some(2), "{kind}: {stderr}");
        assert!(
            stderr.contains("line 7"),
            "{kind} should name the offending line: {stderr}"
        );
    }

    // A crashing backend also exits with the I/O class and flags the run.
    let out = dir.join("crash");
    let output = run_cli(
        itrack()
            .arg("eval")
            .arg("--dataset")
            .arg(&seq_path)
            .args([
                "--mode",
                "gt-reinit",
                "--prompt-effect",
                "next-frame",
                "--seed",
                "1",
            ])
            .arg("--tracker")
            .arg(format!("exec:{} --crash-at=9", echo_backend()))
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(output.status.code(), Some(2));

    println!("criterion 7: 500-frame round trip clean; all malformed classes abort with exit 2");
}

#[test]
fn criterion_8_determinism_across_parallelism() {
    let dir = tmp_dir("determinism");
    let mut reports = Vec::new();
    for parallelism in ["1", "8"] {
        let out = dir.join(format!("par-{parallelism}"));
        let output = run_cli(
            itrack()
                .args([
                    "eval",
                    "--dataset",
                    "preset:smoke",
                    "--dataset",
                    "preset:ablation-suite",
                    "--tracker",
                    "synthetic:noisy:3",
                    "--grounder",
                    "synthetic:scripted:2,0.05",
                    "--mode",
                    "imat",
                    "--seed",
                    "7",
                    "--parallelism",
                    parallelism,
                ])
                .arg("--out")
                .arg(&out),
        );
        assert_eq!(
            output.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert!(!reports[0].is_empty());
    assert_eq!(
        reports[0], reports[1],
        "report bytes must not depend on worker count"
    );
    println!("criterion 8: report.json byte-identical at parallelism 1 and 8");
}
