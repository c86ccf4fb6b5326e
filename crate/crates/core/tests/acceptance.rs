//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its runtime. Everything is oracle- or property-based and
//! runs on seeded synthetic data; no external dataset is required.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use faceval_core::consensus::{self, ConsensusConfig};
use faceval_core::curves::{build_curve, correct_rejection_rate, CurveKind, DEFAULT_BUDGETS};
use faceval_core::formats;
use faceval_core::geometry::{intersection_area, iou, modified_jaccard, BoundingBox};
use faceval_core::matching::{
    partition_detection_scores, partition_recognition_scores, Candidate, DetectionRecord,
    NegativeTag, RecognitionRecord, ScorePartition,
};
use faceval_core::protocol::{
    FaceAnnotation, IdentityLabel, MaskingCategory, ProtocolManifest, Split,
};
use faceval_core::report::{evaluate_detection, evaluate_recognition};
use faceval_core::synth::oracle::{
    oracle_curve, oracle_match_detection, oracle_match_recognition, same_partition,
};
use faceval_core::synth::{
    generate_scenario, DetectorModel, GaussianSpec, RecognizerModel, ScenarioSpec,
};

fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    bb(
        rng.gen_range(-50.0..950.0),
        rng.gen_range(-50.0..950.0),
        rng.gen_range(0.5..400.0),
        rng.gen_range(0.5..400.0),
    )
}

/// Criterion 1: analytic overlap regimes plus randomized ordering and
/// quarter-coverage identities.
#[test]
fn criterion_1_modified_jaccard_analytic_suite() {
    let start = Instant::now();

    // regime 1: detection inside the ground truth covering at least a quarter
    assert_eq!(
        modified_jaccard(&bb(0.0, 0.0, 20.0, 20.0), &bb(5.0, 5.0, 10.0, 10.0)),
        1.0
    );
    // regime 2: detection inside covering an eighth
    assert_eq!(
        modified_jaccard(&bb(0.0, 0.0, 40.0, 40.0), &bb(0.0, 0.0, 10.0, 20.0)),
        0.5
    );
    // regime 3: disjoint
    assert_eq!(
        modified_jaccard(&bb(0.0, 0.0, 10.0, 10.0), &bb(99.0, 99.0, 5.0, 5.0)),
        0.0
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0x4a63);
    for _ in 0..1_000 {
        let gt = random_box(&mut rng);
        // bias half the detections toward overlapping positions
        let det = if rng.gen_bool(0.5) {
            bb(
                gt.x + rng.gen_range(-0.6..0.6) * gt.width,
                gt.y + rng.gen_range(-0.6..0.6) * gt.height,
                gt.width * rng.gen_range(0.2..1.8),
                gt.height * rng.gen_range(0.2..1.8),
            )
        } else {
            random_box(&mut rng)
        };
        let i = iou(&gt, &det);
        let j = modified_jaccard(&gt, &det);
        assert!((0.0..=1.0).contains(&i), "iou {i} out of range");
        assert!((0.0..=1.0).contains(&j), "overlap {j} out of range");
        assert!(i <= j + 1e-12, "iou {i} exceeds relaxed overlap {j}");
        let inter = intersection_area(&gt, &det);
        assert!(inter <= gt.area().min(det.area()) + 1e-9);
        if inter >= gt.area() / 4.0 {
            assert!(
                (j - inter / det.area()).abs() <= 1e-12,
                "quarter-coverage identity failed: {} vs {}",
                j,
                inter / det.area()
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, limit 1 s");
    println!(
        "[PASS] criterion 1: analytic overlap suite, 1000 randomized pairs ({} ms)",
        elapsed.as_millis()
    );
}

/// Scenario shapes for the oracle-equivalence criteria: up to 50 images and
/// 20 faces per image, with half the seeds using crowded/nested layouts.
fn oracle_scenario(seed: u64) -> ScenarioSpec {
    let i = seed as usize;
    let mut spec = ScenarioSpec::medium(seed);
    spec.image_count = 5 + (i * 7) % 46;
    spec.faces_per_image = (0, 3 + i % 18);
    spec.crowded = i % 2 == 1;
    spec.known_identities = 8 + i % 25;
    spec.masked_in_training_identities = 2 + i % 3;
    spec.masked_not_in_training_identities = 1 + i % 4;
    spec.unknown_fraction = 0.3;
    spec.masked_fraction = 0.15;
    spec.detectors = vec![DetectorModel {
        name: "det".into(),
        miss_rate: 0.05 + 0.05 * (i % 5) as f64,
        false_accepts_per_image: 0.4 * (i % 4) as f64,
        box_jitter: 0.04 * (i % 8) as f64,
        true_confidence: GaussianSpec::new(5.0, 1.5),
        false_confidence: GaussianSpec::new(3.0, 1.5),
    }];
    spec.recognizers = vec![RecognizerModel {
        name: "rec".into(),
        detector: DetectorModel {
            name: "rec-det".into(),
            miss_rate: 0.1,
            false_accepts_per_image: 0.3 * (i % 5) as f64,
            box_jitter: 0.03 * (i % 6) as f64,
            true_confidence: GaussianSpec::new(5.0, 1.0),
            false_confidence: GaussianSpec::new(3.0, 1.0),
        },
        rank1_accuracy: 0.4 + 0.1 * (i % 6) as f64,
        unknown_rejection_rate: 0.3 + 0.1 * (i % 7) as f64,
        miss_as_rejection: 0.5,
        correct_score: GaussianSpec::new(8.0, 1.0),
        incorrect_score: GaussianSpec::new(6.0, 1.5),
        max_candidates: 1 + i % 10,
    }];
    spec
}

/// Criterion 2: the production matcher equals the exhaustive reference on
/// 100 seeded scenarios, as exact multisets.
#[test]
fn criterion_2_oracle_equivalence_matching() {
    let start = Instant::now();
    for seed in 0..100u64 {
        let scenario = generate_scenario(&oracle_scenario(seed)).unwrap();
        for records in scenario.detections.values() {
            let produced = partition_detection_scores(&scenario.eval, records).unwrap();
            let reference = oracle_match_detection(&scenario.eval, records).unwrap();
            assert!(
                same_partition(&produced, &reference),
                "detection partition mismatch at seed {seed}"
            );
        }
        for records in scenario.recognitions.values() {
            let produced = partition_recognition_scores(&scenario.eval, records).unwrap();
            let reference = oracle_match_recognition(&scenario.eval, records).unwrap();
            assert!(
                same_partition(&produced, &reference),
                "recognition partition mismatch at seed {seed}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, limit 30 s");
    println!(
        "[PASS] criterion 2: matcher equals exhaustive reference on 100 scenarios ({} ms)",
        elapsed.as_millis()
    );
}

fn assert_curves_equal(
    a: &faceval_core::curves::Curve,
    b: &faceval_core::curves::Curve,
    what: &str,
) {
    assert_eq!(a.denominator, b.denominator, "{what}: denominator");
    assert_eq!(a.points.len(), b.points.len(), "{what}: point count");
    for (pa, pb) in a.points.iter().zip(&b.points) {
        assert_eq!(pa.budget, pb.budget, "{what}: budget");
        assert!(
            pa.threshold == pb.threshold
                || (pa.threshold.is_infinite() && pb.threshold.is_infinite()),
            "{what}: threshold {} vs {} at budget {}",
            pa.threshold,
            pb.threshold,
            pa.budget
        );
        assert_eq!(
            pa.positive_count, pb.positive_count,
            "{what}: count at {}",
            pa.budget
        );
        assert_eq!(
            pa.negative_count, pb.negative_count,
            "{what}: negatives at {}",
            pa.budget
        );
        assert_eq!(
            pa.saturated, pb.saturated,
            "{what}: saturation at {}",
            pa.budget
        );
        assert_eq!(pa.rate, pb.rate, "{what}: rate at {}", pa.budget);
    }
}

/// Criterion 3: curve construction equals exhaustive threshold enumeration,
/// on the standard grid and a dense 50-point log grid.
#[test]
fn criterion_3_oracle_equivalence_curves() {
    let start = Instant::now();
    let dense = faceval_core::curves::log_budget_grid(50, 100_000);
    assert!(dense.windows(2).all(|p| p[0] < p[1]));
    for seed in 0..100u64 {
        let scenario = generate_scenario(&oracle_scenario(seed)).unwrap();
        let mut partitions: Vec<ScorePartition> = Vec::new();
        for records in scenario.detections.values() {
            partitions.push(partition_detection_scores(&scenario.eval, records).unwrap());
        }
        for records in scenario.recognitions.values() {
            partitions.push(partition_recognition_scores(&scenario.eval, records).unwrap());
        }
        for partition in &partitions {
            if partition.denominator == 0 {
                continue;
            }
            for grid in [&DEFAULT_BUDGETS[..], &dense[..]] {
                let produced = build_curve(partition, grid, CurveKind::Froc).unwrap();
                let reference = oracle_curve(partition, grid, CurveKind::Froc).unwrap();
                assert_curves_equal(&produced, &reference, &format!("seed {seed}"));
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, limit 30 s");
    println!(
        "[PASS] criterion 3: curves equal exhaustive sweep on 100 scenarios x 2 grids ({} ms)",
        elapsed.as_millis()
    );
}

fn random_partition(rng: &mut ChaCha8Rng) -> ScorePartition {
    let mut partition = ScorePartition::new(rng.gen_range(1..400usize));
    for _ in 0..rng.gen_range(0..200) {
        partition.positives.push(rng.gen_range(-10.0..10.0));
    }
    for _ in 0..rng.gen_range(0..200) {
        let tag = NegativeTag::ALL[rng.gen_range(0..4)];
        partition.push_negative(tag, rng.gen_range(-10.0..10.0));
    }
    partition
}

/// Criterion 4: monotonicity and invariance properties over 1000 randomized
/// partitions, with zero violations.
#[test]
fn criterion_4_monotonicity_and_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let budgets: Vec<usize> = vec![1, 3, 10, 30, 100, 300];
    let transforms: [fn(f64) -> f64; 3] = [|x| 2.0 * x + 3.0, |x| x * x * x, |x| x.exp()];

    for case in 0..1_000 {
        let partition = random_partition(&mut rng);
        let curve = build_curve(&partition, &budgets, CurveKind::Dir).unwrap();
        for pair in curve.points.windows(2) {
            assert!(
                pair[0].threshold >= pair[1].threshold,
                "case {case}: thresholds increased with budget"
            );
            assert!(
                pair[0].rate <= pair[1].rate,
                "case {case}: rate decreased with budget"
            );
        }
        // exactness at non-saturated points: admitted negatives stay under budget
        for point in &curve.points {
            if !point.saturated {
                assert!(
                    point.negative_count < point.budget,
                    "case {case}: budget exceeded"
                );
            }
        }

        // joint strictly increasing transform leaves counts and rates unchanged
        let f = transforms[case % transforms.len()];
        let mut mapped = ScorePartition::new(partition.denominator);
        mapped.positives = partition.positives.iter().map(|&s| f(s)).collect();
        for tag in NegativeTag::ALL {
            for &s in partition.tagged(tag) {
                mapped.push_negative(tag, f(s));
            }
        }
        let mapped_curve = build_curve(&mapped, &budgets, CurveKind::Dir).unwrap();
        for (a, b) in curve.points.iter().zip(&mapped_curve.points) {
            assert_eq!(
                a.positive_count, b.positive_count,
                "case {case}: count changed"
            );
            assert_eq!(a.rate, b.rate, "case {case}: rate changed");
            assert_eq!(a.saturated, b.saturated, "case {case}: saturation changed");
        }

        // rejection rate is non-decreasing in the threshold with endpoints 0 and 1
        let subset = partition.tagged(NegativeTag::FalseAccept);
        if !subset.is_empty() {
            let mut sweep: Vec<f64> = subset.to_vec();
            sweep.sort_by(f64::total_cmp);
            let mut last = correct_rejection_rate(subset, f64::NEG_INFINITY).unwrap();
            assert_eq!(last, 0.0, "case {case}: rejection rate at -inf");
            for &t in &sweep {
                let rate = correct_rejection_rate(subset, t).unwrap();
                assert!(rate >= last, "case {case}: rejection rate decreased");
                last = rate;
            }
            let top = correct_rejection_rate(subset, f64::INFINITY).unwrap();
            assert!(top >= last);
            assert_eq!(top, 1.0, "case {case}: rejection rate at +inf");
        }
    }
    let elapsed = start.elapsed();
    println!(
        "[PASS] criterion 4: monotonicity/invariance over 1000 partitions ({} ms)",
        elapsed.as_millis()
    );
}

/// Criterion 5: a submission with exactly 37 false accepts reports its total
/// positive count, flagged as saturated, at every budget of at least 100.
#[test]
fn criterion_5_results_table_saturation_semantics() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let mut partition = ScorePartition::new(40_000);
    for _ in 0..500 {
        partition.positives.push(rng.gen_range(0.0..10.0));
    }
    for _ in 0..37 {
        partition.push_negative(NegativeTag::FalseAccept, rng.gen_range(0.0..10.0));
    }
    let curve = build_curve(&partition, &DEFAULT_BUDGETS, CurveKind::Froc).unwrap();

    let at_10 = &curve.points[0];
    assert!(!at_10.saturated, "37 false accepts exceed a budget of 10");
    assert!(at_10.negative_count < 10);
    for point in &curve.points[1..] {
        assert!(point.saturated, "budget {} must saturate", point.budget);
        assert_eq!(
            point.positive_count, 500,
            "saturated cell must carry the total positive count"
        );
    }
    let elapsed = start.elapsed();
    println!(
        "[PASS] criterion 5: saturated cells report totals at budgets >= 100 ({} ms)",
        elapsed.as_millis()
    );
}

/// Criterion 6: the consensus fixture — 3-detector agreement adds a face,
/// 2-detector agreement does not, upscaling is exact, identity votes need
/// unanimity, and the audit log is byte-deterministic.
#[test]
fn criterion_6_consensus_pipeline_fixture() {
    let start = Instant::now();

    let known = FaceAnnotation {
        image_id: "img".into(),
        bbox: bb(500.0, 500.0, 40.0, 40.0),
        label: IdentityLabel::known(7).unwrap(),
        category: MaskingCategory::Known,
        day_id: "d1".into(),
    };
    let unknown_a = FaceAnnotation {
        image_id: "img".into(),
        bbox: bb(700.0, 100.0, 30.0, 30.0),
        label: IdentityLabel::UNKNOWN,
        category: MaskingCategory::Unknown,
        day_id: "d1".into(),
    };
    let unknown_b = FaceAnnotation {
        image_id: "img".into(),
        bbox: bb(800.0, 300.0, 30.0, 30.0),
        label: IdentityLabel::UNKNOWN,
        category: MaskingCategory::Unknown,
        day_id: "d1".into(),
    };
    let manifest = ProtocolManifest::new(
        Split::Test,
        vec![known.clone(), unknown_a.clone(), unknown_b.clone()],
        None,
    )
    .unwrap();

    // the face all three detectors see but ground truth misses
    let missing = bb(10.0, 10.0, 20.0, 20.0);
    // a spot only two detectors see
    let two_only = bb(200.0, 200.0, 20.0, 20.0);
    let det = |b: BoundingBox, c: f64| DetectionRecord::new("img", b, c).unwrap();
    let mut detections = BTreeMap::new();
    detections.insert(
        "da".to_string(),
        vec![det(known.bbox, 0.9), det(missing, 0.8), det(two_only, 0.7)],
    );
    detections.insert(
        "db".to_string(),
        vec![det(known.bbox, 0.8), det(missing, 0.7), det(two_only, 0.6)],
    );
    detections.insert(
        "dc".to_string(),
        vec![det(known.bbox, 0.7), det(missing, 0.6)],
    );

    let rec = |b: BoundingBox, label: i64, score: f64| {
        RecognitionRecord::new(
            "img",
            b,
            vec![Candidate {
                label: IdentityLabel::new(label).unwrap(),
                score,
            }],
        )
        .unwrap()
    };
    // unknown_a gets a unanimous vote for 17; unknown_b gets {17, 17, -1}
    let mut recognitions = BTreeMap::new();
    recognitions.insert(
        "ra".to_string(),
        vec![rec(unknown_a.bbox, 17, 0.9), rec(unknown_b.bbox, 17, 0.9)],
    );
    recognitions.insert(
        "rb".to_string(),
        vec![rec(unknown_a.bbox, 17, 0.8), rec(unknown_b.bbox, 17, 0.8)],
    );
    recognitions.insert(
        "rc".to_string(),
        vec![rec(unknown_a.bbox, 17, 0.7), rec(unknown_b.bbox, -1, 0.7)],
    );

    let config = ConsensusConfig::default();
    let run = || {
        consensus::run_augmentation(
            &manifest,
            &manifest,
            &detections,
            &detections,
            &recognitions,
            &config,
        )
        .unwrap()
    };
    let (augmented, audit) = run();

    // (a) the missing face is added, upscaled about its center
    // (c) (10,10,20,20) scaled by 1.2 is exactly (8,8,24,24)
    let added: Vec<&FaceAnnotation> = augmented
        .annotations()
        .iter()
        .filter(|a| a.bbox == bb(8.0, 8.0, 24.0, 24.0))
        .collect();
    assert_eq!(added.len(), 1, "3-detector consensus box must be added");
    assert_eq!(added[0].category, MaskingCategory::Unknown);
    assert_eq!(
        bb(10.0, 10.0, 20.0, 20.0).scaled_about_center(1.2),
        bb(8.0, 8.0, 24.0, 24.0)
    );

    // (b) the 2-detector spot is not added
    assert!(
        !augmented
            .annotations()
            .iter()
            .any(|a| iou(&a.bbox, &two_only) >= 0.25),
        "2-detector cluster must not enter the manifest"
    );

    // (d) unanimity assigns, one dissenting -1 blocks
    let relabeled_a = augmented
        .annotations()
        .iter()
        .find(|a| a.bbox == unknown_a.bbox)
        .unwrap();
    assert_eq!(relabeled_a.label.value(), 17);
    assert_eq!(relabeled_a.category, MaskingCategory::Known);
    let still_unknown_b = augmented
        .annotations()
        .iter()
        .find(|a| a.bbox == unknown_b.bbox)
        .unwrap();
    assert_eq!(still_unknown_b.label, IdentityLabel::UNKNOWN);

    // audit log and manifest are byte-deterministic across runs
    let (augmented2, audit2) = run();
    assert_eq!(audit.lines, audit2.lines);
    assert_eq!(augmented, augmented2);
    let dir = tempfile::TempDir::new().unwrap();
    let log1 = dir.path().join("a1.log");
    let log2 = dir.path().join("a2.log");
    formats::write_audit_log(&audit, &log1).unwrap();
    formats::write_audit_log(&audit2, &log2).unwrap();
    assert_eq!(std::fs::read(&log1).unwrap(), std::fs::read(&log2).unwrap());

    let elapsed = start.elapsed();
    println!(
        "[PASS] criterion 6: consensus fixture incl. byte-identical audit ({} ms)",
        elapsed.as_millis()
    );
}

/// Criterion 7: evaluation reports are byte-identical across repeated runs
/// and across worker counts 1 and 4, on a 10,000-record submission.
#[test]
fn criterion_7_end_to_end_determinism() {
    let start = Instant::now();

    let mut spec = ScenarioSpec::medium(0xC7);
    spec.image_count = 460;
    spec.faces_per_image = (8, 16);
    spec.detectors = vec![DetectorModel {
        name: "det".into(),
        miss_rate: 0.05,
        false_accepts_per_image: 12.0,
        box_jitter: 0.1,
        true_confidence: GaussianSpec::new(5.0, 1.5),
        false_confidence: GaussianSpec::new(3.0, 1.5),
    }];
    spec.recognizers = vec![RecognizerModel {
        name: "rec".into(),
        detector: DetectorModel {
            name: "rec-det".into(),
            miss_rate: 0.05,
            false_accepts_per_image: 12.0,
            box_jitter: 0.1,
            true_confidence: GaussianSpec::new(5.0, 1.0),
            false_confidence: GaussianSpec::new(3.0, 1.0),
        },
        rank1_accuracy: 0.7,
        unknown_rejection_rate: 0.6,
        miss_as_rejection: 0.5,
        correct_score: GaussianSpec::new(8.0, 1.0),
        incorrect_score: GaussianSpec::new(6.0, 1.5),
        max_candidates: 5,
    }];
    let scenario = generate_scenario(&spec).unwrap();
    let detections = &scenario.detections["det"];
    let recognitions = &scenario.recognitions["rec"];
    assert!(
        detections.len() >= 10_000,
        "fixture must reach 10,000 records, got {}",
        detections.len()
    );

    let evaluate = |workers: usize| -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        pool.install(|| {
            let froc = evaluate_detection(&scenario.eval, detections, &DEFAULT_BUDGETS).unwrap();
            let dir = evaluate_recognition(&scenario.eval, recognitions, &DEFAULT_BUDGETS).unwrap();
            let out = tempfile::TempDir::new().unwrap();
            let froc_csv = out.path().join("froc.csv");
            let froc_svg = out.path().join("froc.svg");
            let dir_csv = out.path().join("dir.csv");
            let dir_svg = out.path().join("dir.svg");
            formats::write_curve_csv(&froc.curve, &froc_csv).unwrap();
            formats::write_curve_svg(&froc.curve, "froc", &froc_svg).unwrap();
            formats::write_curve_csv(&dir.curve, &dir_csv).unwrap();
            formats::write_curve_svg(&dir.curve, "dir", &dir_svg).unwrap();
            (
                std::fs::read(froc_csv).unwrap(),
                std::fs::read(froc_svg).unwrap(),
                std::fs::read(dir_csv).unwrap(),
                std::fs::read(dir_svg).unwrap(),
            )
        })
    };

    let first = evaluate(1);
    for (label, outputs) in [
        ("repeat x1", evaluate(1)),
        ("workers=4", evaluate(4)),
        ("workers=4 repeat", evaluate(4)),
    ] {
        assert_eq!(first, outputs, "reports differ for {label}");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, limit 10 s");
    println!(
        "[PASS] criterion 7: byte-identical reports across runs and worker counts ({} ms, {} records)",
        elapsed.as_millis(),
        detections.len()
    );
}

/// Criterion 8: emit-then-parse identity on 1000 randomized records per file
/// type, and line-numbered rejection of malformed rows.
#[test]
fn criterion_8_round_trip_io() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let dir = tempfile::TempDir::new().unwrap();

    let random_id = |rng: &mut ChaCha8Rng| {
        // exercise csv quoting: commas, quotes, spaces, leading comment marker
        let decorations = ["", ",", "\"", " ", "x,y", "\"q\""];
        let prefix = if rng.gen_bool(0.1) { "#" } else { "" };
        format!(
            "{prefix}img_{}{}",
            rng.gen_range(0..100_000),
            decorations[rng.gen_range(0..decorations.len())]
        )
    };

    // detections
    let detections: Vec<DetectionRecord> = (0..1_000)
        .map(|_| {
            DetectionRecord::new(
                random_id(&mut rng),
                random_box(&mut rng),
                rng.gen_range(-1.0e6..1.0e6),
            )
            .unwrap()
        })
        .collect();
    let path = dir.path().join("det.csv");
    formats::write_detection_file(&detections, &path).unwrap();
    assert_eq!(formats::parse_detection_file(&path).unwrap(), detections);

    // recognitions
    let recognitions: Vec<RecognitionRecord> = (0..1_000)
        .map(|_| {
            let count = rng.gen_range(1..=10usize);
            let mut labels: Vec<i64> = (1..=40).collect();
            let mut score = rng.gen_range(-100.0..100.0);
            let mut candidates = Vec::new();
            for k in 0..count {
                let label = if k == 0 && rng.gen_bool(0.2) {
                    -1
                } else {
                    labels.swap_remove(rng.gen_range(0..labels.len()))
                };
                candidates.push(Candidate {
                    label: IdentityLabel::new(label).unwrap(),
                    score,
                });
                score -= rng.gen_range(0.0..2.0);
            }
            RecognitionRecord::new(random_id(&mut rng), random_box(&mut rng), candidates).unwrap()
        })
        .collect();
    let path = dir.path().join("rec.csv");
    formats::write_recognition_file(&recognitions, &path).unwrap();
    let parsed = formats::parse_recognition_file(&path).unwrap();
    assert_eq!(parsed.records, recognitions);
    assert!(parsed.warnings.is_empty());

    // manifests: random annotations across both serializations
    let mut annotations = Vec::new();
    for i in 0..1_000 {
        let category = match rng.gen_range(0..4) {
            0 => MaskingCategory::Known,
            1 => MaskingCategory::Unknown,
            2 => MaskingCategory::MaskedInTraining,
            _ => MaskingCategory::MaskedNotInTraining,
        };
        let label = match category {
            MaskingCategory::Unknown => IdentityLabel::UNKNOWN,
            _ => IdentityLabel::known(rng.gen_range(1..500)).unwrap(),
        };
        annotations.push(FaceAnnotation {
            image_id: format!("image {i}"),
            bbox: random_box(&mut rng),
            label,
            category,
            day_id: format!("day{}", rng.gen_range(0..20)),
        });
    }
    let manifest = ProtocolManifest::new(Split::Validation, annotations, None).unwrap();
    let csv_path = dir.path().join("manifest.csv");
    formats::write_manifest_csv(&manifest, &csv_path).unwrap();
    let loaded = formats::load_manifest_csv(&csv_path, Split::Validation).unwrap();
    assert_eq!(loaded.annotations(), manifest.annotations());
    assert_eq!(loaded.total_faces(), manifest.total_faces());
    assert_eq!(loaded.known_faces(), manifest.known_faces());
    let json_path = dir.path().join("manifest.json");
    formats::write_manifest_json(&manifest, &json_path).unwrap();
    assert_eq!(formats::load_manifest_json(&json_path).unwrap(), manifest);

    // malformed rows are rejected with their line numbers
    let zero_width = dir.path().join("zero-width.csv");
    std::fs::write(
        &zero_width,
        "IMAGE_ID,X,Y,WIDTH,HEIGHT,CONFIDENCE\na,0,0,5,5,1\nb,0,0,0,5,1\n",
    )
    .unwrap();
    match formats::parse_detection_file(&zero_width).unwrap_err() {
        faceval_core::Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let eleven = dir.path().join("eleven.csv");
    let mut header = "IMAGE_ID,X,Y,WIDTH,HEIGHT".to_string();
    for k in 1..=10 {
        header.push_str(&format!(",LABEL_{k},SCORE_{k}"));
    }
    let mut row = "a,0,0,5,5".to_string();
    for k in 1..=11 {
        row.push_str(&format!(",{k},{}", 100 - k));
    }
    std::fs::write(&eleven, format!("{header}\n{row}\n")).unwrap();
    match formats::parse_recognition_file(&eleven).unwrap_err() {
        faceval_core::Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let label_zero = dir.path().join("label-zero.csv");
    std::fs::write(
        &label_zero,
        "IMAGE_ID,X,Y,WIDTH,HEIGHT,LABEL_1,SCORE_1\na,0,0,5,5,1,0.5\nb,0,0,5,5,0,0.5\n",
    )
    .unwrap();
    match formats::parse_recognition_file(&label_zero).unwrap_err() {
        faceval_core::Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let elapsed = start.elapsed();
    println!(
        "[PASS] criterion 8: emit-parse identity on 1000 records per type ({} ms)",
        elapsed.as_millis()
    );
}
