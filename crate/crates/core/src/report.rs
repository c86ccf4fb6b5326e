//! Evaluation pipelines tying matching and curve construction together,
//! producing what the command-line front-end prints and writes.

use std::collections::{BTreeMap, BTreeSet};

use crate::curves::{
    build_curve, build_curve_with_candidates, correct_rejection_curve, Curve, CurveKind,
};
use crate::error::{Error, Result};
use crate::matching::{
    detection_outcome, recognition_outcome, DetectionRecord, MatchDiagnostics, NegativeTag,
    RecognitionRecord, ScorePartition,
};
use crate::protocol::{MaskingCategory, ProtocolManifest};

/// A single-submission evaluation: the curve plus accounting and any
/// saturation notes worth surfacing.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub curve: Curve,
    pub diagnostics: MatchDiagnostics,
    pub notes: Vec<String>,
}

fn saturation_notes(curve: &Curve, negatives: usize) -> Vec<String> {
    curve
        .points
        .iter()
        .filter(|p| p.saturated)
        .map(|p| {
            format!(
                "budget {}: submission has only {} negatives; count {} is the total",
                p.budget, negatives, p.positive_count
            )
        })
        .collect()
}

/// Full detection evaluation: match, partition, sweep the budget grid.
pub fn evaluate_detection(
    manifest: &ProtocolManifest,
    detections: &[DetectionRecord],
    budgets: &[usize],
) -> Result<EvalReport> {
    let outcome = detection_outcome(manifest, detections)?;
    let curve = build_curve(&outcome.partition, budgets, CurveKind::Froc)?;
    let notes = saturation_notes(&curve, outcome.partition.negative_count());
    Ok(EvalReport {
        curve,
        diagnostics: outcome.diagnostics,
        notes,
    })
}

/// Full rank-1 open-set recognition evaluation.
pub fn evaluate_recognition(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
    budgets: &[usize],
) -> Result<EvalReport> {
    let outcome = recognition_outcome(manifest, records)?;
    let curve = build_curve(&outcome.partition, budgets, CurveKind::Dir)?;
    let notes = saturation_notes(&curve, outcome.partition.negative_count());
    Ok(EvalReport {
        curve,
        diagnostics: outcome.diagnostics,
        notes,
    })
}

/// Identification curves for probes captured on a training day of their
/// identity versus all other probes. One undefined half (no faces) is
/// reported as a note, not an error.
#[derive(Debug, Clone)]
pub struct DaySplitReport {
    pub same_day: Option<Curve>,
    pub different_day: Option<Curve>,
    pub same_day_faces: usize,
    pub different_day_faces: usize,
    pub notes: Vec<String>,
}

/// Splits the identification positives by capture day while reusing one
/// shared negative set and one shared threshold-candidate pool, so both
/// curves calibrate identical thresholds per budget.
pub fn evaluate_day_split(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
    budgets: &[usize],
) -> Result<DaySplitReport> {
    if manifest.training_days().is_empty()
        && manifest
            .annotations()
            .iter()
            .any(|a| a.category == MaskingCategory::Known)
    {
        return Err(Error::Validation(
            "manifest has no training-day map; supply the training manifest".into(),
        ));
    }

    let outcome = recognition_outcome(manifest, records)?;

    let mut same_faces: BTreeSet<usize> = BTreeSet::new();
    let mut same_count = 0usize;
    let mut different_count = 0usize;
    for (idx, ann) in manifest.annotations().iter().enumerate() {
        if ann.category != MaskingCategory::Known {
            continue;
        }
        if manifest.is_same_day(ann)? {
            same_faces.insert(idx);
            same_count += 1;
        } else {
            different_count += 1;
        }
    }

    let negatives = outcome.partition.negatives();
    let mut candidates = outcome.partition.positives.clone();
    candidates.extend_from_slice(&negatives);

    let build_half =
        |face_filter: &dyn Fn(usize) -> bool, denominator: usize| -> Result<Option<Curve>> {
            if denominator == 0 {
                return Ok(None);
            }
            let mut partition = ScorePartition::new(denominator);
            partition.positives = outcome
                .positives_by_face
                .iter()
                .filter(|(face, _)| face_filter(*face))
                .map(|(_, score)| *score)
                .collect();
            partition.tagged_negatives = outcome.partition.tagged_negatives.clone();
            build_curve_with_candidates(&partition, &candidates, budgets, CurveKind::Dir).map(Some)
        };

    let same_day = build_half(&|face| same_faces.contains(&face), same_count)?;
    let different_day = build_half(&|face| !same_faces.contains(&face), different_count)?;

    let mut notes = Vec::new();
    if same_day.is_none() {
        notes.push("same-day subset has no faces; its rate is undefined".to_string());
    }
    if different_day.is_none() {
        notes.push("different-day subset has no faces; its rate is undefined".to_string());
    }
    Ok(DaySplitReport {
        same_day,
        different_day,
        same_day_faces: same_count,
        different_day_faces: different_count,
        notes,
    })
}

/// Grid of correct-identification targets for rejection curves: every count
/// up to the positive total, thinned to at most `points` values.
pub fn default_rejection_grid(positive_count: usize, points: usize) -> Vec<usize> {
    if positive_count == 0 {
        return vec![1];
    }
    let points = points.max(2).min(positive_count.max(1));
    if positive_count <= points {
        return (1..=positive_count).collect();
    }
    let mut grid: Vec<usize> = (0..points)
        .map(|i| 1 + i * (positive_count - 1) / (points - 1))
        .collect();
    grid.dedup();
    grid
}

/// One rejection curve per requested tag. A requested tag with no scores in
/// the submission is an error naming that tag.
pub fn evaluate_rejections(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
    tags: &[NegativeTag],
    grid: Option<&[usize]>,
) -> Result<BTreeMap<NegativeTag, Curve>> {
    if tags.is_empty() {
        return Err(Error::InvalidArgument("no rejection tags requested".into()));
    }
    let outcome = recognition_outcome(manifest, records)?;
    let default_grid;
    let grid = match grid {
        Some(g) => g,
        None => {
            default_grid = default_rejection_grid(outcome.partition.positives.len(), 50);
            &default_grid
        }
    };
    let mut curves = BTreeMap::new();
    for &tag in tags {
        curves.insert(tag, correct_rejection_curve(&outcome.partition, tag, grid)?);
    }
    Ok(curves)
}
