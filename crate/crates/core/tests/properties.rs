//! Property tests for the invariants behind matching, calibration and the
//! protocol model.

use proptest::prelude::*;

use faceval_core::curves::{build_curve, calibrate_threshold, CurveKind};
use faceval_core::formats;
use faceval_core::geometry::{intersection_area, iou, modified_jaccard, BoundingBox};
use faceval_core::matching::{
    detection_outcome, recognition_outcome, Candidate, DetectionRecord, NegativeTag,
    RecognitionRecord, ScorePartition,
};
use faceval_core::protocol::{
    FaceAnnotation, IdentityLabel, MaskingCategory, ProtocolManifest, Split,
};

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (
        -100.0..100.0f64,
        -100.0..100.0f64,
        0.5..80.0f64,
        0.5..80.0f64,
    )
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

proptest! {
    #[test]
    fn overlap_measures_are_ordered_and_bounded(a in arb_box(), b in arb_box()) {
        let inter = intersection_area(&a, &b);
        prop_assert!(inter >= 0.0);
        prop_assert!(inter <= a.area().min(b.area()));
        prop_assert_eq!(inter, intersection_area(&b, &a));

        let i = iou(&a, &b);
        let j = modified_jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&i));
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert!(i <= j);
        if inter >= a.area() / 4.0 {
            prop_assert!((j - inter / b.area()).abs() < 1e-12);
        }
    }
}

fn arb_scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 0..max_len)
}

proptest! {
    #[test]
    fn calibrated_threshold_is_minimal_and_satisfying(
        negatives in arb_scores(60),
        extra_candidates in arb_scores(40),
        budget in 1usize..40,
    ) {
        let mut candidates = negatives.clone();
        candidates.extend(&extra_candidates);
        let theta = calibrate_threshold(&negatives, budget, &candidates).unwrap();
        let admitted = |t: f64| negatives.iter().filter(|&&n| n >= t).count();
        if theta.is_finite() {
            prop_assert!(admitted(theta) < budget);
            // no smaller candidate satisfies the budget
            for &c in &candidates {
                if c < theta {
                    prop_assert!(admitted(c) >= budget);
                }
            }
        } else {
            // no candidate at all satisfied the budget
            for &c in &candidates {
                prop_assert!(admitted(c) >= budget);
            }
        }
    }

    #[test]
    fn curve_counts_are_exact_at_unsaturated_points(
        positives in arb_scores(80),
        negatives in arb_scores(80),
        budgets in prop::collection::btree_set(1usize..200, 1..8),
    ) {
        let mut partition = ScorePartition::new(1.max(positives.len()));
        partition.positives = positives.clone();
        for &n in &negatives {
            partition.push_negative(NegativeTag::FalseAccept, n);
        }
        let grid: Vec<usize> = budgets.into_iter().collect();
        let curve = build_curve(&partition, &grid, CurveKind::Froc).unwrap();
        for point in &curve.points {
            prop_assert_eq!(point.saturated, negatives.len() < point.budget);
            if !point.saturated {
                prop_assert!(point.negative_count < point.budget);
            }
            let recount = positives.iter().filter(|&&p| p >= point.threshold).count();
            prop_assert_eq!(point.positive_count, recount);
        }
    }
}

#[derive(Debug, Clone)]
struct TinyScene {
    faces: Vec<(u8, BoundingBox, u8)>, // (image, box, category selector)
    records: Vec<(u8, BoundingBox, f64, i8)>, // (image, box, score, label selector)
}

fn arb_scene() -> impl Strategy<Value = TinyScene> {
    let face = (0u8..3, arb_box(), 0u8..4);
    let record = (0u8..3, arb_box(), -10.0..10.0f64, -1i8..4);
    (
        prop::collection::vec(face, 0..6),
        prop::collection::vec(record, 0..10),
    )
        .prop_map(|(faces, records)| TinyScene { faces, records })
}

fn scene_manifest(scene: &TinyScene) -> ProtocolManifest {
    let mut annotations = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (img, bbox, cat) in &scene.faces {
        let key = (
            *img,
            bbox.x.to_bits(),
            bbox.y.to_bits(),
            bbox.width.to_bits(),
            bbox.height.to_bits(),
        );
        if !seen.insert(key) {
            continue; // drop exact duplicates the generator may produce
        }
        let category = match cat % 4 {
            0 => MaskingCategory::Known,
            1 => MaskingCategory::Unknown,
            2 => MaskingCategory::MaskedInTraining,
            _ => MaskingCategory::MaskedNotInTraining,
        };
        let label = match category {
            MaskingCategory::Unknown => IdentityLabel::UNKNOWN,
            _ => IdentityLabel::known((cat % 4) as i64 + 1).unwrap(),
        };
        annotations.push(FaceAnnotation {
            image_id: format!("img{img}"),
            bbox: *bbox,
            label,
            category,
            day_id: "d".into(),
        });
    }
    ProtocolManifest::new(
        Split::Test,
        annotations,
        (0u8..3).map(|i| format!("img{i}")),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every record is a positive, a negative, or discarded; positives are
    /// bounded by the denominator population; permuting the input changes
    /// nothing.
    #[test]
    fn matching_reconciles_and_ignores_input_order(scene in arb_scene()) {
        let manifest = scene_manifest(&scene);

        let detections: Vec<DetectionRecord> = scene
            .records
            .iter()
            .map(|(img, bbox, score, _)| {
                DetectionRecord::new(format!("img{img}"), *bbox, *score).unwrap()
            })
            .collect();
        let outcome = detection_outcome(&manifest, &detections).unwrap();
        let d = &outcome.diagnostics;
        prop_assert_eq!(d.records_total, d.positives + d.negatives + d.discarded());
        prop_assert!(d.positives <= manifest.total_faces());
        prop_assert_eq!(d.positives, outcome.matches.claimed_count());

        let recognitions: Vec<RecognitionRecord> = scene
            .records
            .iter()
            .map(|(img, bbox, score, label)| {
                let label = if *label <= 0 { -1 } else { *label as i64 };
                RecognitionRecord::new(
                    format!("img{img}"),
                    *bbox,
                    vec![Candidate {
                        label: IdentityLabel::new(label).unwrap(),
                        score: *score,
                    }],
                )
                .unwrap()
            })
            .collect();
        let outcome = recognition_outcome(&manifest, &recognitions).unwrap();
        let d = &outcome.diagnostics;
        prop_assert_eq!(
            d.records_total,
            d.positives
                + d.negatives
                + d.duplicate_overlaps
                + d.wrong_known_label
                + d.known_rejected
                + d.correct_rejections
        );
        prop_assert!(d.positives <= manifest.known_faces());

        // reversing the submission leaves both partitions unchanged as multisets
        let mut reversed = detections.clone();
        reversed.reverse();
        let det_again = detection_outcome(&manifest, &reversed).unwrap();
        let det_first = detection_outcome(&manifest, &detections).unwrap();
        prop_assert!(faceval_core::synth::oracle::same_partition(
            &det_first.partition,
            &det_again.partition
        ));
        let mut rec_reversed = recognitions.clone();
        rec_reversed.reverse();
        let rec_again = recognition_outcome(&manifest, &rec_reversed).unwrap();
        prop_assert!(faceval_core::synth::oracle::same_partition(
            &outcome.partition,
            &rec_again.partition
        ));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A reloaded manifest reproduces counts, and the participant-facing view
    /// preserves everything but the masked labels.
    #[test]
    fn manifest_reload_and_masked_view(scene in arb_scene()) {
        let manifest = scene_manifest(&scene);
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("m.csv");
        formats::write_manifest_csv(&manifest, &path).unwrap();
        let reloaded = formats::load_manifest_csv(&path, Split::Test).unwrap();
        prop_assert_eq!(reloaded.total_faces(), manifest.total_faces());
        prop_assert_eq!(reloaded.known_faces(), manifest.known_faces());
        for category in MaskingCategory::ALL {
            prop_assert_eq!(
                reloaded.faces_in_category(category),
                manifest.faces_in_category(category)
            );
        }

        let view = manifest.masked_view();
        prop_assert_eq!(view.total_faces(), manifest.total_faces());
        prop_assert_eq!(view.masked_view(), view.clone());
        for (original, viewed) in manifest.annotations().iter().zip(view.annotations()) {
            prop_assert_eq!(&original.image_id, &viewed.image_id);
            prop_assert_eq!(original.bbox, viewed.bbox);
            prop_assert_eq!(original.category, viewed.category);
            if original.category.is_masked() {
                prop_assert_eq!(viewed.label, IdentityLabel::UNKNOWN);
            } else {
                prop_assert_eq!(viewed.label, original.label);
            }
        }
    }
}
