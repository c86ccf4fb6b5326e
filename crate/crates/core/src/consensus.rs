//! Automatic ground-truth clean-up by cross-algorithm agreement.
//!
//! Boxes that several independent detectors emit with high confidence in the
//! same spot become new unknown-face annotations: per-detector thresholds are
//! calibrated on a validation split, surviving detections are clustered by
//! standard IOU, clusters backed by enough distinct detectors are fused into
//! one box and slightly enlarged. Unknown faces whose matched recognition
//! records unanimously name the same enrolled identity are then relabeled.
//! Every addition, skip and relabeling is written to an audit log.

use std::collections::BTreeMap;

use crate::curves::calibrate_threshold;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::matching::{
    match_recognition_records, partition_detection_scores, DetectionRecord, RecognitionRecord,
};
use crate::protocol::{FaceAnnotation, IdentityLabel, MaskingCategory, ProtocolManifest};

/// How member boxes are averaged into a fused box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxFusion {
    /// Average position and size: (x, y, width, height).
    CenterSize,
    /// Average the (left, top, right, bottom) corners.
    Corners,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusConfig {
    /// Distinct detectors a cluster needs to survive.
    pub min_detectors: usize,
    /// Pairwise standard IOU linking detections into a cluster.
    pub overlap_iou: f64,
    /// False-accept budget for per-detector threshold calibration.
    pub calibration_budget: usize,
    /// Fused boxes grow by this factor about their center.
    pub upscale_factor: f64,
    /// Recognizers that must unanimously agree to relabel a face.
    pub min_agreeing_recognizers: usize,
    pub fusion: BoxFusion,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            min_detectors: 3,
            overlap_iou: 0.25,
            calibration_budget: 2500,
            upscale_factor: 1.2,
            min_agreeing_recognizers: 3,
            fusion: BoxFusion::CenterSize,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_detectors < 2 {
            return Err(Error::InvalidArgument(
                "consensus needs at least 2 detectors".into(),
            ));
        }
        if !(self.overlap_iou > 0.0 && self.overlap_iou <= 1.0) {
            return Err(Error::InvalidArgument(
                "cluster overlap must be in (0, 1]".into(),
            ));
        }
        if self.calibration_budget == 0 {
            return Err(Error::InvalidArgument(
                "calibration budget must be at least 1".into(),
            ));
        }
        if !(self.upscale_factor >= 1.0 && self.upscale_factor.is_finite()) {
            return Err(Error::InvalidArgument(
                "upscale factor must be at least 1".into(),
            ));
        }
        if self.min_agreeing_recognizers < 1 {
            return Err(Error::InvalidArgument(
                "at least one agreeing recognizer is required".into(),
            ));
        }
        Ok(())
    }
}

/// Image's worth of above-threshold detections with fusion weights, per detector.
pub type WeightedDetections = BTreeMap<String, Vec<(DetectionRecord, f64)>>;

/// One above-threshold detection inside a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMember {
    pub detector: String,
    pub record: DetectionRecord,
    /// Min-max normalized confidence within the detector's surviving
    /// detections; the fusion weight.
    pub weight: f64,
}

/// Cross-detector group of mutually overlapping detections in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusCluster {
    pub image_id: String,
    /// At most one member per detector, ordered by detector name.
    pub members: Vec<ClusterMember>,
}

/// A fused cluster ready to enter the manifest, with provenance for the audit.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFace {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub detectors: Vec<String>,
    /// All member weights were zero; an unweighted mean was used.
    pub unweighted_fallback: bool,
}

/// A unanimous identity vote for one unknown face.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityAssignment {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub label: IdentityLabel,
    /// (recognizer, rank-1 score) per agreeing recognizer, by recognizer name.
    pub evidence: Vec<(String, f64)>,
}

/// Outcome log of an augmentation run; `lines` is the audit log, one entry
/// per added box, skipped duplicate, relabeled face or rejected relabeling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentAudit {
    pub lines: Vec<String>,
    pub added: usize,
    pub skipped_duplicates: usize,
    pub assigned: usize,
    pub rejected_assignments: usize,
}

impl AugmentAudit {
    fn merge(&mut self, other: AugmentAudit) {
        self.lines.extend(other.lines);
        self.added += other.added;
        self.skipped_duplicates += other.skipped_duplicates;
        self.assigned += other.assigned;
        self.rejected_assignments += other.rejected_assignments;
    }
}

fn fmt_box(b: &BoundingBox) -> String {
    format!("({},{},{},{})", b.x, b.y, b.width, b.height)
}

/// Calibrates one confidence threshold per detector on the validation split,
/// at the given false-accept budget. Detectors are independent: each uses only
/// its own scores.
pub fn calibrate_detectors(
    validation: &ProtocolManifest,
    submissions: &BTreeMap<String, Vec<DetectionRecord>>,
    budget: usize,
) -> Result<BTreeMap<String, f64>> {
    if submissions.is_empty() {
        return Err(Error::InvalidArgument(
            "no detector submissions to calibrate".into(),
        ));
    }
    let mut thresholds = BTreeMap::new();
    for (name, records) in submissions {
        let partition = partition_detection_scores(validation, records)?;
        let mut candidates = partition.positives.clone();
        candidates.extend(partition.negatives());
        let theta = calibrate_threshold(&partition.negatives(), budget, &candidates)?;
        thresholds.insert(name.clone(), theta);
    }
    Ok(thresholds)
}

/// Min-max normalizes each detector's confidences over its own surviving
/// detections. A detector whose scores are all equal gets weight 1 everywhere.
pub fn normalize_confidences(
    filtered: &BTreeMap<String, Vec<DetectionRecord>>,
) -> WeightedDetections {
    let mut out = BTreeMap::new();
    for (name, records) in filtered {
        let min = records
            .iter()
            .map(|r| r.confidence)
            .fold(f64::INFINITY, f64::min);
        let max = records
            .iter()
            .map(|r| r.confidence)
            .fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        let weighted = records
            .iter()
            .map(|r| {
                let w = if span > 0.0 {
                    (r.confidence - min) / span
                } else {
                    1.0
                };
                (r.clone(), w)
            })
            .collect();
        out.insert(name.clone(), weighted);
    }
    out
}

/// Groups one image's above-threshold detections into clusters: single-link
/// over cross-detector pairs with standard IOU at or above the threshold.
/// Within a cluster each detector keeps only its highest-weight box, and
/// clusters with fewer distinct detectors than required are dropped.
pub fn cluster_detections(
    detections: &WeightedDetections,
    config: &ConsensusConfig,
) -> Vec<ConsensusCluster> {
    let mut nodes: Vec<(&str, &DetectionRecord, f64)> = Vec::new();
    for (detector, records) in detections {
        for (record, weight) in records {
            nodes.push((detector.as_str(), record, *weight));
        }
    }
    if nodes.is_empty() {
        return Vec::new();
    }

    // union-find
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if nodes[i].0 == nodes[j].0 {
                continue; // agreement is only counted across detectors
            }
            if iou(&nodes[i].1.bbox, &nodes[j].1.bbox) >= config.overlap_iou {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..nodes.len() {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }

    let mut clusters = Vec::new();
    for (_, member_idxs) in components {
        // one box per detector: the highest-weight one wins
        let mut best_per_detector: BTreeMap<&str, usize> = BTreeMap::new();
        for &idx in &member_idxs {
            let (detector, _, weight) = nodes[idx];
            match best_per_detector.get(detector) {
                Some(&current) if nodes[current].2 >= weight => {}
                _ => {
                    best_per_detector.insert(detector, idx);
                }
            }
        }
        if best_per_detector.len() < config.min_detectors {
            continue;
        }
        let members = best_per_detector
            .into_values()
            .map(|idx| ClusterMember {
                detector: nodes[idx].0.to_string(),
                record: nodes[idx].1.clone(),
                weight: nodes[idx].2,
            })
            .collect();
        clusters.push(ConsensusCluster {
            image_id: nodes[member_idxs[0]].1.image_id.clone(),
            members,
        });
    }
    clusters
}

/// Averages a cluster's boxes, weighted by normalized confidence, and grows
/// the result about its center. Zero total weight falls back to the plain
/// mean and is flagged for the audit.
pub fn fuse_cluster(cluster: &ConsensusCluster, config: &ConsensusConfig) -> FusedFace {
    let total: f64 = cluster.members.iter().map(|m| m.weight).sum();
    let unweighted_fallback = total <= 0.0;
    let weight_of = |m: &ClusterMember| if unweighted_fallback { 1.0 } else { m.weight };
    let total: f64 = cluster.members.iter().map(weight_of).sum();

    let fused = match config.fusion {
        BoxFusion::CenterSize => {
            let mut acc = [0.0f64; 4];
            for m in &cluster.members {
                let w = weight_of(m);
                acc[0] += w * m.record.bbox.x;
                acc[1] += w * m.record.bbox.y;
                acc[2] += w * m.record.bbox.width;
                acc[3] += w * m.record.bbox.height;
            }
            BoundingBox::new(
                acc[0] / total,
                acc[1] / total,
                acc[2] / total,
                acc[3] / total,
            )
        }
        BoxFusion::Corners => {
            let mut acc = [0.0f64; 4];
            for m in &cluster.members {
                let w = weight_of(m);
                acc[0] += w * m.record.bbox.x;
                acc[1] += w * m.record.bbox.y;
                acc[2] += w * m.record.bbox.right();
                acc[3] += w * m.record.bbox.bottom();
            }
            let (x0, y0, x1, y1) = (
                acc[0] / total,
                acc[1] / total,
                acc[2] / total,
                acc[3] / total,
            );
            BoundingBox::new(x0, y0, x1 - x0, y1 - y0)
        }
    }
    .expect("weighted mean of valid boxes is valid");

    FusedFace {
        image_id: cluster.image_id.clone(),
        bbox: fused.scaled_about_center(config.upscale_factor),
        detectors: cluster.members.iter().map(|m| m.detector.clone()).collect(),
        unweighted_fallback,
    }
}

/// Votes identities onto label `-1` faces: a face is assigned identity L when
/// at least the required number of recognizers matched it (overlap `>= 0.5`,
/// highest overlap wins) and every matched record has L at rank 1. A single
/// dissent, including a `-1` vote, blocks the assignment.
pub fn assign_identities(
    faces: &[FaceAnnotation],
    recognitions: &BTreeMap<String, Vec<RecognitionRecord>>,
    config: &ConsensusConfig,
) -> Result<Vec<IdentityAssignment>> {
    for face in faces {
        if face.label.is_known_id() {
            return Err(Error::InvalidArgument(format!(
                "identity voting expects label -1 faces, got label {} in image {:?}",
                face.label, face.image_id
            )));
        }
    }
    // scratch manifest holding just these faces; records may reference any
    // image of the split, so declare them all
    let mut extra_images: Vec<String> = Vec::new();
    for records in recognitions.values() {
        extra_images.extend(records.iter().map(|r| r.image_id.clone()));
    }
    let scratch =
        ProtocolManifest::new(crate::protocol::Split::Test, faces.to_vec(), extra_images)?;

    let mut votes: Vec<Vec<(String, i64, f64)>> = vec![Vec::new(); faces.len()];
    for (recognizer, records) in recognitions {
        let matches = match_recognition_records(&scratch, records)?;
        for (face_idx, assignment) in matches.face_assignments.iter().enumerate() {
            if let Some(assignment) = assignment {
                let top = records[assignment.record].top_candidate();
                votes[face_idx].push((recognizer.clone(), top.label.value(), top.score));
            }
        }
    }

    let mut assignments = Vec::new();
    for (face_idx, face_votes) in votes.iter().enumerate() {
        if face_votes.len() < config.min_agreeing_recognizers {
            continue;
        }
        let label = face_votes[0].1;
        if label < 1 || !face_votes.iter().all(|(_, l, _)| *l == label) {
            continue;
        }
        assignments.push(IdentityAssignment {
            image_id: faces[face_idx].image_id.clone(),
            bbox: faces[face_idx].bbox,
            label: IdentityLabel::known(label)?,
            evidence: face_votes
                .iter()
                .map(|(name, _, score)| (name.clone(), *score))
                .collect(),
        });
    }
    Ok(assignments)
}

/// Applies fused faces and identity assignments to a manifest, returning the
/// rebuilt manifest (counts recomputed) and the audit log.
///
/// A fused face overlapping an existing annotation of the same image at
/// standard IOU `>= 0.5` is skipped. Assignments may only relabel category
/// Unknown faces; masked and known faces are rejected with an audit entry.
pub fn augment_manifest(
    manifest: &ProtocolManifest,
    new_faces: &[FusedFace],
    assignments: &[IdentityAssignment],
) -> Result<(ProtocolManifest, AugmentAudit)> {
    let mut audit = AugmentAudit::default();
    let mut annotations = manifest.annotations().to_vec();

    // image -> day, for inherited day tags on added faces
    let mut image_day: BTreeMap<&str, &str> = BTreeMap::new();
    for ann in manifest.annotations() {
        image_day
            .entry(ann.image_id.as_str())
            .or_insert(ann.day_id.as_str());
    }

    let mut ordered_faces: Vec<&FusedFace> = new_faces.iter().collect();
    ordered_faces.sort_by(|a, b| {
        a.image_id
            .cmp(&b.image_id)
            .then(f64::total_cmp(&a.bbox.x, &b.bbox.x))
            .then(f64::total_cmp(&a.bbox.y, &b.bbox.y))
            .then(f64::total_cmp(&a.bbox.width, &b.bbox.width))
            .then(f64::total_cmp(&a.bbox.height, &b.bbox.height))
    });

    let mut accepted: Vec<FaceAnnotation> = Vec::new();
    for fused in ordered_faces {
        let duplicate = annotations
            .iter()
            .chain(accepted.iter())
            .filter(|ann| ann.image_id == fused.image_id)
            .map(|ann| iou(&ann.bbox, &fused.bbox))
            .fold(0.0, f64::max);
        if duplicate >= 0.5 {
            audit.skipped_duplicates += 1;
            audit.lines.push(format!(
                "skip-add image={} box={} reason=duplicate iou={duplicate}",
                fused.image_id,
                fmt_box(&fused.bbox)
            ));
            continue;
        }
        let day_id = image_day
            .get(fused.image_id.as_str())
            .copied()
            .unwrap_or("")
            .to_string();
        accepted.push(FaceAnnotation {
            image_id: fused.image_id.clone(),
            bbox: fused.bbox,
            label: IdentityLabel::UNKNOWN,
            category: MaskingCategory::Unknown,
            day_id,
        });
        audit.added += 1;
        let mut line = format!(
            "add image={} box={} label=-1 detectors={}",
            fused.image_id,
            fmt_box(&fused.bbox),
            fused.detectors.join(",")
        );
        if fused.unweighted_fallback {
            line.push_str(" weights=degenerate-unweighted-mean");
        }
        audit.lines.push(line);
    }
    annotations.extend(accepted);

    let mut ordered_assignments: Vec<&IdentityAssignment> = assignments.iter().collect();
    ordered_assignments.sort_by(|a, b| {
        a.image_id
            .cmp(&b.image_id)
            .then(f64::total_cmp(&a.bbox.x, &b.bbox.x))
            .then(f64::total_cmp(&a.bbox.y, &b.bbox.y))
    });
    for assignment in ordered_assignments {
        let evidence = assignment
            .evidence
            .iter()
            .map(|(name, score)| format!("{name}:{score}"))
            .collect::<Vec<_>>()
            .join(",");
        let target = annotations
            .iter_mut()
            .find(|ann| ann.image_id == assignment.image_id && ann.bbox == assignment.bbox);
        let Some(target) = target else {
            return Err(Error::InvalidArgument(format!(
                "assignment targets a face not in the manifest: image={} box={}",
                assignment.image_id,
                fmt_box(&assignment.bbox)
            )));
        };
        match target.category {
            MaskingCategory::Unknown => {
                target.label = assignment.label;
                target.category = MaskingCategory::Known;
                audit.assigned += 1;
                audit.lines.push(format!(
                    "assign image={} box={} label={} recognizers={evidence}",
                    assignment.image_id,
                    fmt_box(&assignment.bbox),
                    assignment.label
                ));
            }
            MaskingCategory::MaskedInTraining | MaskingCategory::MaskedNotInTraining => {
                audit.rejected_assignments += 1;
                audit.lines.push(format!(
                    "reject-assign image={} box={} label={} reason=masked-identity",
                    assignment.image_id,
                    fmt_box(&assignment.bbox),
                    assignment.label
                ));
            }
            MaskingCategory::Known => {
                audit.rejected_assignments += 1;
                audit.lines.push(format!(
                    "reject-assign image={} box={} label={} reason=already-known",
                    assignment.image_id,
                    fmt_box(&assignment.bbox),
                    assignment.label
                ));
            }
        }
    }

    let mut augmented = ProtocolManifest::new(
        manifest.split(),
        annotations,
        manifest.images().iter().cloned(),
    )?;
    augmented.set_training_days(manifest.training_days().clone());
    Ok((augmented, audit))
}

/// The full clean-up: calibrate on validation, filter, cluster, fuse, add,
/// then vote identities onto every Unknown face of the augmented manifest.
pub fn run_augmentation(
    manifest: &ProtocolManifest,
    validation: &ProtocolManifest,
    validation_detections: &BTreeMap<String, Vec<DetectionRecord>>,
    split_detections: &BTreeMap<String, Vec<DetectionRecord>>,
    recognitions: &BTreeMap<String, Vec<RecognitionRecord>>,
    config: &ConsensusConfig,
) -> Result<(ProtocolManifest, AugmentAudit)> {
    config.validate()?;
    if split_detections.len() < config.min_detectors {
        return Err(Error::InvalidArgument(format!(
            "consensus needs at least {} detectors, got {}",
            config.min_detectors,
            split_detections.len()
        )));
    }
    for (name, records) in split_detections {
        if !validation_detections.contains_key(name) {
            return Err(Error::Validation(format!(
                "detector {name:?} has no validation submission to calibrate on"
            )));
        }
        for record in records {
            if !manifest.contains_image(&record.image_id) {
                return Err(Error::Validation(format!(
                    "detector {name:?} references image {:?} which is not part of the manifest",
                    record.image_id
                )));
            }
        }
    }

    let thresholds =
        calibrate_detectors(validation, validation_detections, config.calibration_budget)?;

    let mut filtered: BTreeMap<String, Vec<DetectionRecord>> = BTreeMap::new();
    for (name, records) in split_detections {
        let theta = thresholds[name];
        filtered.insert(
            name.clone(),
            records
                .iter()
                .filter(|r| r.confidence >= theta)
                .cloned()
                .collect(),
        );
    }
    let weighted = normalize_confidences(&filtered);

    // cluster per image
    let mut per_image: BTreeMap<&str, WeightedDetections> = BTreeMap::new();
    for (name, records) in &weighted {
        for (record, weight) in records {
            per_image
                .entry(record.image_id.as_str())
                .or_default()
                .entry(name.clone())
                .or_default()
                .push((record.clone(), *weight));
        }
    }
    let mut fused_faces = Vec::new();
    for image_detections in per_image.values() {
        for cluster in cluster_detections(image_detections, config) {
            fused_faces.push(fuse_cluster(&cluster, config));
        }
    }

    let (augmented, mut audit) = augment_manifest(manifest, &fused_faces, &[])?;

    if recognitions.is_empty() {
        return Ok((augmented, audit));
    }
    let unknown_faces: Vec<FaceAnnotation> = augmented
        .annotations()
        .iter()
        .filter(|ann| ann.category == MaskingCategory::Unknown)
        .cloned()
        .collect();
    let assignments = assign_identities(&unknown_faces, recognitions, config)?;
    let (relabeled, assign_audit) = augment_manifest(&augmented, &[], &assignments)?;
    audit.merge(assign_audit);
    Ok((relabeled, audit))
}
