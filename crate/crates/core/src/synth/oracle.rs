//! Brute-force reference implementations of the matching and sweep logic.
//!
//! Everything here is written against the definitions directly, with plain
//! scans instead of the sorted-index machinery of the production modules, and
//! shares no overlap or threshold code with them. Quadratic cost is fine:
//! the oracle only runs on desk-scale data.

use std::collections::BTreeMap;

use crate::curves::{Curve, CurveKind, OperatingPoint};
use crate::error::{Error, Result};
use crate::matching::{DetectionRecord, NegativeTag, RecognitionRecord, ScorePartition};
use crate::protocol::{MaskingCategory, ProtocolManifest};

/// Independent rewrite of the relaxed ground-truth overlap. The overlap area
/// is capped at the smaller box area, like the production measure.
fn overlap(gt: &FaceBox, det: &FaceBox) -> f64 {
    let lx = if gt.x0 > det.x0 { gt.x0 } else { det.x0 };
    let hx = if gt.x1 < det.x1 { gt.x1 } else { det.x1 };
    let ly = if gt.y0 > det.y0 { gt.y0 } else { det.y0 };
    let hy = if gt.y1 < det.y1 { gt.y1 } else { det.y1 };
    let w = hx - lx;
    let h = hy - ly;
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let mut inter = w * h;
    if inter > gt.area {
        inter = gt.area;
    }
    if inter > det.area {
        inter = det.area;
    }
    let quarter_gt = gt.area / 4.0;
    let capped_union = if quarter_gt > inter {
        quarter_gt
    } else {
        inter
    };
    inter / (capped_union + det.area - inter)
}

struct FaceBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    area: f64,
}

impl FaceBox {
    fn of(b: &crate::geometry::BoundingBox) -> Self {
        FaceBox {
            x0: b.x,
            y0: b.y,
            x1: b.x + b.width,
            y1: b.y + b.height,
            area: b.width * b.height,
        }
    }
}

/// The greedy one-to-one assignment, replayed with plain loops.
/// Returns, per image face list, the claimed record index or none.
fn assign_naive(
    faces: &[(usize, FaceBox)],
    records: &[(usize, FaceBox, f64, i64)], // (index, box, tiebreak score, tiebreak label)
) -> Vec<Option<(usize, f64)>> {
    let mut pairs: Vec<Vec<f64>> = Vec::new();
    for (_, face) in faces {
        let mut row = Vec::new();
        for (_, rbox, _, _) in records {
            row.push(overlap(face, rbox));
        }
        pairs.push(row);
    }

    // process faces from best-overlapping to worst
    let mut remaining: Vec<usize> = (0..faces.len()).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best_pos = 0;
        for pos in 1..remaining.len() {
            let a = remaining[pos];
            let b = remaining[best_pos];
            let best_a = pairs[a].iter().cloned().fold(0.0, f64::max);
            let best_b = pairs[b].iter().cloned().fold(0.0, f64::max);
            if best_a > best_b {
                best_pos = pos;
            }
        }
        order.push(remaining.remove(best_pos));
    }

    let mut taken = vec![false; records.len()];
    let mut result = vec![None; faces.len()];
    for f in order {
        let mut chosen: Option<usize> = None;
        for r in 0..records.len() {
            if taken[r] || pairs[f][r] < 0.5 {
                continue;
            }
            let better = match chosen {
                None => true,
                Some(c) => {
                    if pairs[f][r] != pairs[f][c] {
                        pairs[f][r] > pairs[f][c]
                    } else if records[r].2 != records[c].2 {
                        records[r].2 > records[c].2
                    } else if records[r].3 != records[c].3 {
                        records[r].3 < records[c].3
                    } else {
                        let (br, bc) = (&records[r].1, &records[c].1);
                        if br.x0 != bc.x0 {
                            br.x0 < bc.x0
                        } else if br.y0 != bc.y0 {
                            br.y0 < bc.y0
                        } else if br.x1 != bc.x1 {
                            br.x1 < bc.x1
                        } else if br.y1 != bc.y1 {
                            br.y1 < bc.y1
                        } else {
                            false
                        }
                    }
                }
            };
            if better {
                chosen = Some(r);
            }
        }
        if let Some(r) = chosen {
            taken[r] = true;
            result[f] = Some((r, pairs[f][r]));
        }
    }
    result
}

fn faces_per_image(manifest: &ProtocolManifest) -> BTreeMap<&str, Vec<(usize, FaceBox)>> {
    let mut map: BTreeMap<&str, Vec<(usize, FaceBox)>> = BTreeMap::new();
    for (idx, ann) in manifest.annotations().iter().enumerate() {
        map.entry(ann.image_id.as_str())
            .or_default()
            .push((idx, FaceBox::of(&ann.bbox)));
    }
    map
}

/// Reference detection partition by exhaustive pairwise evaluation.
pub fn oracle_match_detection(
    manifest: &ProtocolManifest,
    detections: &[DetectionRecord],
) -> Result<ScorePartition> {
    for d in detections {
        if !manifest.contains_image(&d.image_id) {
            return Err(Error::Validation(format!(
                "detection references image {:?} which is not part of the manifest",
                d.image_id
            )));
        }
    }
    let faces = faces_per_image(manifest);
    let empty = Vec::new();

    let mut by_image: BTreeMap<&str, Vec<(usize, FaceBox, f64, i64)>> = BTreeMap::new();
    for (idx, d) in detections.iter().enumerate() {
        by_image.entry(d.image_id.as_str()).or_default().push((
            idx,
            FaceBox::of(&d.bbox),
            d.confidence,
            0,
        ));
    }

    let mut partition = ScorePartition::new(manifest.total_faces());
    for (image, records) in &by_image {
        let image_faces = faces.get(image).unwrap_or(&empty);
        let assigned = assign_naive(image_faces, records);
        for entry in assigned.iter().flatten() {
            partition.positives.push(records[entry.0].2);
        }
        for (_, rbox, confidence, _) in records {
            let overlaps_any = image_faces.iter().any(|(_, f)| overlap(f, rbox) >= 0.5);
            if !overlaps_any {
                partition.push_negative(NegativeTag::FalseAccept, *confidence);
            }
        }
    }
    Ok(partition)
}

/// Reference recognition partition by exhaustive pairwise evaluation.
pub fn oracle_match_recognition(
    manifest: &ProtocolManifest,
    records: &[RecognitionRecord],
) -> Result<ScorePartition> {
    for r in records {
        if !manifest.contains_image(&r.image_id) {
            return Err(Error::Validation(format!(
                "record references image {:?} which is not part of the manifest",
                r.image_id
            )));
        }
    }
    let faces = faces_per_image(manifest);
    let empty = Vec::new();

    let mut by_image: BTreeMap<&str, Vec<(usize, FaceBox, f64, i64)>> = BTreeMap::new();
    for (idx, r) in records.iter().enumerate() {
        let top = r.top_candidate();
        by_image.entry(r.image_id.as_str()).or_default().push((
            idx,
            FaceBox::of(&r.bbox),
            top.score,
            top.label.value(),
        ));
    }

    let mut partition = ScorePartition::new(manifest.known_faces());
    for (image, image_records) in &by_image {
        let image_faces = faces.get(image).unwrap_or(&empty);
        let assigned = assign_naive(image_faces, image_records);
        for (f, entry) in assigned.iter().enumerate() {
            let Some((r, _)) = entry else { continue };
            let face = &manifest.annotations()[image_faces[f].0];
            let top = records[image_records[*r].0].top_candidate();
            match face.category {
                MaskingCategory::Known => {
                    if top.label == face.label {
                        partition.positives.push(top.score);
                    }
                }
                MaskingCategory::Unknown => {
                    if top.label.is_known_id() {
                        partition.push_negative(NegativeTag::PlainUnknown, top.score);
                    }
                }
                MaskingCategory::MaskedInTraining => {
                    if top.label.is_known_id() {
                        partition.push_negative(NegativeTag::MaskedInTraining, top.score);
                    }
                }
                MaskingCategory::MaskedNotInTraining => {
                    if top.label.is_known_id() {
                        partition.push_negative(NegativeTag::MaskedNotInTraining, top.score);
                    }
                }
            }
        }
        for (_, rbox, score, label) in image_records {
            let overlaps_any = image_faces.iter().any(|(_, f)| overlap(f, rbox) >= 0.5);
            if !overlaps_any && *label >= 1 {
                partition.push_negative(NegativeTag::FalseAccept, *score);
            }
        }
    }
    Ok(partition)
}

/// Reference sweep: every distinct observed score is tried as a threshold by
/// rescanning the full negative list.
pub fn oracle_curve(
    partition: &ScorePartition,
    budgets: &[usize],
    kind: CurveKind,
) -> Result<Curve> {
    if kind == CurveKind::Crr {
        return Err(Error::InvalidArgument(
            "the reference sweep covers budget curves only".into(),
        ));
    }
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("budget grid is empty".into()));
    }
    let mut last = 0usize;
    for &b in budgets {
        if b == 0 {
            return Err(Error::InvalidArgument(
                "budget values must be at least 1".into(),
            ));
        }
        if b <= last && last != 0 {
            return Err(Error::InvalidArgument(
                "budget grid must be strictly increasing".into(),
            ));
        }
        last = b;
    }
    if partition.denominator == 0 {
        return Err(Error::InvalidArgument(
            "curve denominator must be at least 1".into(),
        ));
    }

    let negatives = partition.negatives();
    let mut candidates: Vec<f64> = Vec::new();
    for &p in &partition.positives {
        candidates.push(p);
    }
    for &n in &negatives {
        candidates.push(n);
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut points = Vec::new();
    for &budget in budgets {
        let mut threshold = f64::INFINITY;
        for &candidate in &candidates {
            let mut admitted = 0usize;
            for &n in &negatives {
                if n >= candidate {
                    admitted += 1;
                }
            }
            if admitted < budget {
                threshold = candidate;
                break;
            }
        }
        let mut positive_count = 0usize;
        for &p in &partition.positives {
            if p >= threshold {
                positive_count += 1;
            }
        }
        let mut negative_count = 0usize;
        for &n in &negatives {
            if n >= threshold {
                negative_count += 1;
            }
        }
        points.push(OperatingPoint {
            budget,
            threshold,
            rate: positive_count as f64 / partition.denominator as f64,
            positive_count,
            negative_count,
            saturated: negatives.len() < budget,
        });
    }
    Ok(Curve {
        kind,
        points,
        denominator: partition.denominator,
    })
}

/// Multiset equality on scores, for comparing partitions.
pub fn same_scores(a: &[f64], b: &[f64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(b.iter()).all(|(x, y)| x == y)
}

/// Full partition equality as multisets, tag by tag.
pub fn same_partition(a: &ScorePartition, b: &ScorePartition) -> bool {
    if a.denominator != b.denominator || !same_scores(&a.positives, &b.positives) {
        return false;
    }
    NegativeTag::ALL
        .iter()
        .all(|&tag| same_scores(a.tagged(tag), b.tagged(tag)))
}
