//! Associates submitted boxes with ground-truth faces and splits scores into
//! the positive/negative sets behind every curve.
//!
//! Assignment is one-to-one per image: ground-truth faces are processed in
//! descending order of their best overlap, and each claims its highest-overlap
//! unclaimed record among those with overlap `>= 0.5`. A record that overlaps
//! some face but loses the assignment is discarded; it joins neither side.
//! Only records below `0.5` against *every* face of their image count as
//! false accepts.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{modified_jaccard, BoundingBox};
use crate::protocol::{IdentityLabel, MaskingCategory, ProtocolManifest};

/// Overlap at or above this value counts as detecting the face.
pub const OVERLAP_THRESHOLD: f64 = 0.5;

/// One submitted detection: a box and a confidence (higher = more face-like).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl DetectionRecord {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() {
            return Err(Error::Validation(format!(
                "detection confidence must be finite, got {confidence}"
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            confidence,
        })
    }
}

/// One (identity, similarity) guess for a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: IdentityLabel,
    pub score: f64,
}

/// One submitted recognition: a box plus 1..=10 ranked identity guesses.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionRecord {
    pub image_id: String,
    pub bbox: BoundingBox,
    /// Sorted by score descending; labels distinct. Only rank 1 feeds the
    /// metrics, the rest are carried for validation and diagnostics.
    pub candidates: Vec<Candidate>,
}

impl RecognitionRecord {
    pub const MAX_CANDIDATES: usize = 10;

    pub fn new(
        image_id: impl Into<String>,
        bbox: BoundingBox,
        candidates: Vec<Candidate>,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Validation(
                "recognition record needs at least one candidate".into(),
            ));
        }
        if candidates.len() > Self::MAX_CANDIDATES {
            return Err(Error::Validation(format!(
                "recognition record has {} candidates, at most {} allowed",
                candidates.len(),
                Self::MAX_CANDIDATES
            )));
        }
        let mut labels = Vec::with_capacity(candidates.len());
        for c in &candidates {
            if !c.score.is_finite() {
                return Err(Error::Validation(format!(
                    "candidate score must be finite, got {}",
                    c.score
                )));
            }
            if labels.contains(&c.label) {
                return Err(Error::Validation(format!(
                    "duplicate candidate label {}",
                    c.label
                )));
            }
            labels.push(c.label);
        }
        for pair in candidates.windows(2) {
            if pair[0].score < pair[1].score {
                return Err(Error::Validation(
                    "candidates must be sorted by descending score".into(),
                ));
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            candidates,
        })
    }

    pub fn top_candidate(&self) -> &Candidate {
        &self.candidates[0]
    }
}

/// Where a negative score came from, for the false-identification breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NegativeTag {
    MaskedInTraining,
    MaskedNotInTraining,
    FalseAccept,
    PlainUnknown,
}

impl NegativeTag {
    pub const ALL: [NegativeTag; 4] = [
        NegativeTag::MaskedInTraining,
        NegativeTag::MaskedNotInTraining,
        NegativeTag::FalseAccept,
        NegativeTag::PlainUnknown,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            NegativeTag::MaskedInTraining => "MIT",
            NegativeTag::MaskedNotInTraining => "MNT",
            NegativeTag::FalseAccept => "FA",
            NegativeTag::PlainUnknown => "U",
        }
    }

    pub fn from_code(code: &str) -> Result<Self> {
        match code {
            "MIT" => Ok(NegativeTag::MaskedInTraining),
            "MNT" => Ok(NegativeTag::MaskedNotInTraining),
            "FA" => Ok(NegativeTag::FalseAccept),
            "U" => Ok(NegativeTag::PlainUnknown),
            other => Err(Error::Validation(format!(
                "unknown negative tag {other:?} (expected MIT, MNT, FA or U)"
            ))),
        }
    }
}

impl std::fmt::Display for NegativeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Positive and negative score multisets of one submission, with negatives
/// broken down by origin. The denominator is M (all labeled faces) for
/// detection and N (known faces) for recognition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePartition {
    pub positives: Vec<f64>,
    pub tagged_negatives: BTreeMap<NegativeTag, Vec<f64>>,
    pub denominator: usize,
}

impl ScorePartition {
    pub fn new(denominator: usize) -> Self {
        ScorePartition {
            positives: Vec::new(),
            tagged_negatives: BTreeMap::new(),
            denominator,
        }
    }

    pub fn push_negative(&mut self, tag: NegativeTag, score: f64) {
        self.tagged_negatives.entry(tag).or_default().push(score);
    }

    /// All negatives, concatenated in tag order.
    pub fn negatives(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.negative_count());
        for tag in NegativeTag::ALL {
            if let Some(scores) = self.tagged_negatives.get(&tag) {
                all.extend_from_slice(scores);
            }
        }
        all
    }

    pub fn negative_count(&self) -> usize {
        self.tagged_negatives.values().map(Vec::len).sum()
    }

    pub fn tagged(&self, tag: NegativeTag) -> &[f64] {
        self.tagged_negatives
            .get(&tag)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// The record claimed by a ground-truth face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordMatch {
    /// Index into the submitted record slice.
    pub record: usize,
    pub jaccard: f64,
}

/// Fate of one submitted record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordStatus {
    /// Claimed by the ground-truth face at this annotation index.
    Claimed { face: usize, jaccard: f64 },
    /// Overlapped a face at `>= 0.5` but lost the one-to-one assignment.
    DuplicateOverlap,
    /// Below `0.5` against every ground-truth face of its image.
    FalseAccept,
}

/// Outcome of associating one submission with a manifest. Both vectors are
/// parallel to their inputs: `face_assignments[i]` belongs to annotation `i`,
/// `record_status[j]` to record `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub face_assignments: Vec<Option<RecordMatch>>,
    pub record_status: Vec<RecordStatus>,
}

impl MatchResult {
    pub fn claimed_count(&self) -> usize {
        self.face_assignments.iter().flatten().count()
    }
}

/// Counts that reconcile every submitted record against the partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchDiagnostics {
    pub faces_total: usize,
    pub faces_matched: usize,
    pub records_total: usize,
    /// Records that overlapped a face but lost the one-to-one assignment.
    pub duplicate_overlaps: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Recognition only: matched a known face but ranked a different known
    /// identity first. Contributes to neither score set.
    pub wrong_known_label: usize,
    /// Recognition only: matched a known face but ranked the unknown label first.
    pub known_rejected: usize,
    /// Recognition only: unknown faces or misdetections correctly labeled unknown.
    pub correct_rejections: usize,
}

impl MatchDiagnostics {
    /// Every record is a positive, a negative, or discarded.
    pub fn discarded(&self) -> usize {
        self.records_total - self.positives - self.negatives
    }
}

trait MatchableRecord: Sync {
    fn image_id(&self) -> &str;
    fn bbox(&self) -> &BoundingBox;
    /// Primary tie-break on equal overlap: higher wins.
    fn tiebreak_score(&self) -> f64;
    /// Secondary content tie-break so permuting input order cannot change
    /// which score lands where.
    fn tiebreak_label(&self) -> i64;
}

impl MatchableRecord for DetectionRecord {
    fn image_id(&self) -> &str {
        &self.image_id
    }
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn tiebreak_score(&self) -> f64 {
        self.confidence
    }
    fn tiebreak_label(&self) -> i64 {
        0
    }
}

impl MatchableRecord for RecognitionRecord {
    fn image_id(&self) -> &str {
        &self.image_id
    }
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn tiebreak_score(&self) -> f64 {
        self.top_candidate().score
    }
    fn tiebreak_label(&self) -> i64 {
        self.top_candidate().label.value()
    }
}

/// True when record `a` beats record `b` as a claim for the same face,
/// given equal overlap.
fn beats_on_tie<R: MatchableRecord>(a: &R, b: &R) -> bool {
    if a.tiebreak_score() != b.tiebreak_score() {
        return a.tiebreak_score() > b.tiebreak_score();
    }
    if a.tiebreak_label() != b.tiebreak_label() {
        return a.tiebreak_label() < b.tiebreak_label();
    }
    let (ba, bb) = (a.bbox(), b.bbox());
    let ka = [ba.x, ba.y, ba.width, ba.height];
    let kb = [bb.x, bb.y, bb.width, bb.height];
    for (va, vb) in ka.iter().zip(kb.iter()) {
        if va != vb {
            return va < vb;
        }
    }
    false // identical in every respect: keep the earlier record
}

fn validate_records<R: MatchableRecord>(manifest: &ProtocolManifest, records: &[R]) -> Result<()> {
    for (idx, record) in records.iter().enumerate() {
        if !manifest.contains_image(record.image_id()) {
            return Err(Error::Validation(format!(
                "record {} references image {:?} which is not part of the manifest",
                idx,
                record.image_id()
            )));
        }
        if !record.tiebreak_score().is_finite() {
            return Err(Error::Validation(format!(
                "record {} in image {:?} carries a non-finite score",
                idx,
                record.image_id()
            )));
        }
    }
    Ok(())
}

/// Runs the per-image greedy assignment for a whole submission. Images are
/// independent and processed in parallel; outputs are keyed by input position,
/// so the result does not depend on the worker count.
fn match_records<R: MatchableRecord>(
    manifest: &ProtocolManifest,
    records: &[R],
) -> Result<MatchResult> {
    validate_records(manifest, records)?;

    let mut faces_by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, ann) in manifest.annotations().iter().enumerate() {
        faces_by_image
            .entry(ann.image_id.as_str())
            .or_default()
            .push(idx);
    }
    let mut records_by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, record) in records.iter().enumerate() {
        records_by_image
            .entry(record.image_id())
            .or_default()
            .push(idx);
    }

    let per_image: Vec<ImageMatches> = records_by_image
        .par_iter()
        .map(|(image_id, record_idxs)| {
            let face_idxs = faces_by_image
                .get(image_id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            match_image(manifest, records, face_idxs, record_idxs)
        })
        .collect();

    let mut face_assignments = vec![None; manifest.total_faces()];
    let mut record_status = vec![RecordStatus::FalseAccept; records.len()];
    for (assignments, statuses) in per_image {
        for (face, m) in assignments {
            face_assignments[face] = Some(m);
        }
        for (record, status) in statuses {
            record_status[record] = status;
        }
    }
    Ok(MatchResult {
        face_assignments,
        record_status,
    })
}

/// One image's assignment output: (annotation index, claim) pairs and
/// (record index, status) pairs.
type ImageMatches = (Vec<(usize, RecordMatch)>, Vec<(usize, RecordStatus)>);

fn match_image<R: MatchableRecord>(
    manifest: &ProtocolManifest,
    records: &[R],
    face_idxs: &[usize],
    record_idxs: &[usize],
) -> ImageMatches {
    let nf = face_idxs.len();
    let nr = record_idxs.len();

    // overlap of every (face, record) pair
    let jmat: Vec<Vec<f64>> = face_idxs
        .iter()
        .map(|&fi| {
            let gt = &manifest.annotations()[fi].bbox;
            record_idxs
                .iter()
                .map(|&ri| modified_jaccard(gt, records[ri].bbox()))
                .collect()
        })
        .collect();

    // faces claim in descending order of their best overlap
    let max_j: Vec<f64> = jmat
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    let mut face_order: Vec<usize> = (0..nf).collect();
    face_order.sort_by(|&a, &b| {
        max_j[b]
            .partial_cmp(&max_j[a])
            .unwrap()
            .then(face_idxs[a].cmp(&face_idxs[b]))
    });

    let mut claimed = vec![false; nr];
    let mut assignments = Vec::new();
    for f in face_order {
        let mut best: Option<usize> = None;
        for r in 0..nr {
            if claimed[r] || jmat[f][r] < OVERLAP_THRESHOLD {
                continue;
            }
            best = match best {
                None => Some(r),
                Some(b) => {
                    if jmat[f][r] > jmat[f][b]
                        || (jmat[f][r] == jmat[f][b]
                            && beats_on_tie(&records[record_idxs[r]], &records[record_idxs[b]]))
                    {
                        Some(r)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        if let Some(r) = best {
            claimed[r] = true;
            assignments.push((
                face_idxs[f],
                RecordMatch {
                    record: record_idxs[r],
                    jaccard: jmat[f][r],
                },
            ));
        }
    }

    let statuses = (0..nr)
        .map(|r| {
            let status = if let Some((face, m)) = assignments
                .iter()
                .find(|(_, m)| m.record == record_idxs[r])
                .map(|(face, m)| (*face, *m))
            {
                RecordStatus::Claimed {
                    face,
                    jaccard: m.jaccard,
                }
            } else if (0..nf).any(|f| jmat[f][r] >= OVERLAP_THRESHOLD) {
                RecordStatus::DuplicateOverlap
            } else {
                RecordStatus::FalseAccept
            };
            (record_idxs[r], status)
        })
        .collect();

    (assignments, statuses)
}

/// The raw assignment for a detection submission, without scoring.
pub fn match_detection_records(
    manifest: &ProtocolManifest,
    records: &[DetectionRecord],
) -> Result<MatchResult> {
    match_records(manifest, records)
}

/// The raw assignment for a recognition submission, without scoring.
pub fn match_recognition_records(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
) -> Result<MatchResult> {
    match_records(manifest, records)
}

/// Detection outcome: the partition plus the raw assignment and its accounting.
#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub partition: ScorePartition,
    pub matches: MatchResult,
    pub diagnostics: MatchDiagnostics,
}

/// Splits detection confidences into claimed-face positives and false-accept
/// negatives. The denominator is M, the manifest's total face count.
pub fn partition_detection_scores(
    manifest: &ProtocolManifest,
    detections: &[DetectionRecord],
) -> Result<ScorePartition> {
    Ok(detection_outcome(manifest, detections)?.partition)
}

pub fn detection_outcome(
    manifest: &ProtocolManifest,
    detections: &[DetectionRecord],
) -> Result<DetectionOutcome> {
    let matches = match_records(manifest, detections)?;
    let mut partition = ScorePartition::new(manifest.total_faces());
    for assignment in matches.face_assignments.iter().flatten() {
        partition
            .positives
            .push(detections[assignment.record].confidence);
    }
    let mut duplicate_overlaps = 0;
    for (idx, status) in matches.record_status.iter().enumerate() {
        match status {
            RecordStatus::FalseAccept => {
                partition.push_negative(NegativeTag::FalseAccept, detections[idx].confidence)
            }
            RecordStatus::DuplicateOverlap => duplicate_overlaps += 1,
            RecordStatus::Claimed { .. } => {}
        }
    }
    let diagnostics = MatchDiagnostics {
        faces_total: manifest.total_faces(),
        faces_matched: matches.claimed_count(),
        records_total: detections.len(),
        duplicate_overlaps,
        positives: partition.positives.len(),
        negatives: partition.negative_count(),
        ..MatchDiagnostics::default()
    };
    Ok(DetectionOutcome {
        partition,
        matches,
        diagnostics,
    })
}

/// Recognition outcome, keeping per-face positive scores for analysis splits.
#[derive(Debug, Clone)]
pub struct RecognitionOutcome {
    pub partition: ScorePartition,
    pub matches: MatchResult,
    pub diagnostics: MatchDiagnostics,
    /// (annotation index, rank-1 score) for every correctly identified face.
    pub positives_by_face: Vec<(usize, f64)>,
}

/// Splits rank-1 similarity scores.
///
/// Known faces contribute their matched record's rank-1 score to the positives
/// when the rank-1 label is their identity. Unknown and masked faces whose
/// matched record names any enrolled identity contribute to the negatives
/// under their category tag; masked faces are judged against the `-1` label
/// participants saw, never their hidden identity. Records overlapping no face
/// and naming an identity are negatives tagged as false accepts. The
/// denominator is N, the known-face count.
pub fn partition_recognition_scores(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
) -> Result<ScorePartition> {
    Ok(recognition_outcome(manifest, records)?.partition)
}

pub fn recognition_outcome(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
) -> Result<RecognitionOutcome> {
    let matches = match_records(manifest, records)?;
    let mut partition = ScorePartition::new(manifest.known_faces());
    let mut positives_by_face = Vec::new();
    let mut diagnostics = MatchDiagnostics {
        faces_total: manifest.total_faces(),
        faces_matched: matches.claimed_count(),
        records_total: records.len(),
        ..MatchDiagnostics::default()
    };

    for (face_idx, assignment) in matches.face_assignments.iter().enumerate() {
        let Some(assignment) = assignment else {
            continue;
        };
        let face = &manifest.annotations()[face_idx];
        let top = records[assignment.record].top_candidate();
        match face.category {
            MaskingCategory::Known => {
                if top.label == face.label {
                    partition.positives.push(top.score);
                    positives_by_face.push((face_idx, top.score));
                } else if top.label.is_known_id() {
                    diagnostics.wrong_known_label += 1;
                } else {
                    diagnostics.known_rejected += 1;
                }
            }
            MaskingCategory::Unknown => {
                if top.label.is_known_id() {
                    partition.push_negative(NegativeTag::PlainUnknown, top.score);
                } else {
                    diagnostics.correct_rejections += 1;
                }
            }
            MaskingCategory::MaskedInTraining => {
                if top.label.is_known_id() {
                    partition.push_negative(NegativeTag::MaskedInTraining, top.score);
                } else {
                    diagnostics.correct_rejections += 1;
                }
            }
            MaskingCategory::MaskedNotInTraining => {
                if top.label.is_known_id() {
                    partition.push_negative(NegativeTag::MaskedNotInTraining, top.score);
                } else {
                    diagnostics.correct_rejections += 1;
                }
            }
        }
    }

    for (idx, status) in matches.record_status.iter().enumerate() {
        match status {
            RecordStatus::FalseAccept => {
                let top = records[idx].top_candidate();
                if top.label.is_known_id() {
                    partition.push_negative(NegativeTag::FalseAccept, top.score);
                } else {
                    diagnostics.correct_rejections += 1;
                }
            }
            RecordStatus::DuplicateOverlap => diagnostics.duplicate_overlaps += 1,
            RecordStatus::Claimed { .. } => {}
        }
    }

    diagnostics.positives = partition.positives.len();
    diagnostics.negatives = partition.negative_count();
    Ok(RecognitionOutcome {
        partition,
        matches,
        diagnostics,
        positives_by_face,
    })
}
