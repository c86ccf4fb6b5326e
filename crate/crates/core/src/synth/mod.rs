//! Seeded synthetic challenge generator.
//!
//! Builds a training manifest, an evaluation manifest, and per-participant
//! detection/recognition submissions with a recorded truth tag for every
//! emitted record. In the default sparse layout each generated box is verified
//! to overlap only the face it was generated for, so the exact score
//! partition is known by construction. Crowded mode drops that guarantee to
//! exercise nested and contested assignments; there, the brute-force oracle
//! is the reference instead.

pub mod oracle;

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::geometry::{modified_jaccard, BoundingBox};
use crate::matching::{Candidate, DetectionRecord, NegativeTag, RecognitionRecord, ScorePartition};
use crate::protocol::{FaceAnnotation, IdentityLabel, MaskingCategory, ProtocolManifest, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub mean: f64,
    pub std_dev: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, std_dev: f64) -> Self {
        GaussianSpec { mean, std_dev }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        Normal::new(self.mean, self.std_dev).unwrap().sample(rng)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !self.mean.is_finite() || !self.std_dev.is_finite() || self.std_dev < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{what} distribution must have finite mean and nonnegative deviation"
            )));
        }
        Ok(())
    }
}

/// Behavior model of one synthetic face detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub name: String,
    /// Probability of not emitting a box for a ground-truth face.
    pub miss_rate: f64,
    /// Expected number of background boxes per image.
    pub false_accepts_per_image: f64,
    /// Relative perturbation of emitted boxes (0 = exact).
    pub box_jitter: f64,
    pub true_confidence: GaussianSpec,
    pub false_confidence: GaussianSpec,
}

impl DetectorModel {
    pub fn ideal(name: impl Into<String>) -> Self {
        DetectorModel {
            name: name.into(),
            miss_rate: 0.0,
            false_accepts_per_image: 0.0,
            box_jitter: 0.0,
            true_confidence: GaussianSpec::new(5.0, 1.0),
            false_confidence: GaussianSpec::new(1.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        for (value, what) in [
            (self.miss_rate, "miss rate"),
            (self.box_jitter, "box jitter"),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument(format!(
                    "detector {:?}: {what} must be in [0, 1]",
                    self.name
                )));
            }
        }
        if self.false_accepts_per_image < 0.0 || !self.false_accepts_per_image.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "detector {:?}: false accepts per image must be finite and nonnegative",
                self.name
            )));
        }
        self.true_confidence.validate("true confidence")?;
        self.false_confidence.validate("false confidence")
    }
}

/// Behavior model of one synthetic recognizer, including the detector that
/// feeds it boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerModel {
    pub name: String,
    pub detector: DetectorModel,
    /// Probability that a known face's box gets its true identity at rank 1.
    pub rank1_accuracy: f64,
    /// Probability that an unknown face or a misdetection is labeled `-1`.
    pub unknown_rejection_rate: f64,
    /// When a known face is not identified: probability the miss is a
    /// rejection (`-1`) rather than a wrong enrolled identity.
    pub miss_as_rejection: f64,
    pub correct_score: GaussianSpec,
    pub incorrect_score: GaussianSpec,
    /// Candidate-list length cap, at most 10.
    pub max_candidates: usize,
}

impl RecognizerModel {
    pub fn ideal(name: impl Into<String>) -> Self {
        let name = name.into();
        RecognizerModel {
            detector: DetectorModel::ideal(format!("{name}-det")),
            name,
            rank1_accuracy: 1.0,
            unknown_rejection_rate: 1.0,
            miss_as_rejection: 0.5,
            correct_score: GaussianSpec::new(8.0, 1.0),
            incorrect_score: GaussianSpec::new(4.0, 1.5),
            max_candidates: 3,
        }
    }

    fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        for (value, what) in [
            (self.rank1_accuracy, "rank-1 accuracy"),
            (self.unknown_rejection_rate, "unknown rejection rate"),
            (self.miss_as_rejection, "miss-as-rejection split"),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument(format!(
                    "recognizer {:?}: {what} must be in [0, 1]",
                    self.name
                )));
            }
        }
        if self.max_candidates == 0 || self.max_candidates > RecognitionRecord::MAX_CANDIDATES {
            return Err(Error::InvalidArgument(format!(
                "recognizer {:?}: max candidates must be in 1..=10",
                self.name
            )));
        }
        self.correct_score.validate("correct score")?;
        self.incorrect_score.validate("incorrect score")
    }
}

/// Shape of a synthetic challenge. Equal specs (same seed included) generate
/// byte-identical scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub image_count: usize,
    /// Inclusive range of faces per evaluation image.
    pub faces_per_image: (usize, usize),
    pub known_identities: usize,
    pub masked_in_training_identities: usize,
    pub masked_not_in_training_identities: usize,
    /// Fraction of evaluation faces with no enrolled identity.
    pub unknown_fraction: f64,
    /// Fraction of evaluation faces drawn from the masked pools.
    pub masked_fraction: f64,
    pub day_count: usize,
    /// Chance a known face is captured on a day its identity does not appear
    /// in training.
    pub different_day_fraction: f64,
    pub image_size: (f64, f64),
    /// Inclusive range of face side lengths.
    pub face_side: (f64, f64),
    /// Allow overlapping and nested faces. Disables the placement guarantees
    /// behind exact bookkeeping.
    pub crowded: bool,
    pub detectors: Vec<DetectorModel>,
    pub recognizers: Vec<RecognizerModel>,
}

impl ScenarioSpec {
    /// A medium scenario: realistic miss/false-accept rates, three detectors
    /// and three recognizers.
    pub fn medium(seed: u64) -> Self {
        let detector = |name: &str, miss: f64, fa: f64, jitter: f64, mean: f64| DetectorModel {
            name: name.to_string(),
            miss_rate: miss,
            false_accepts_per_image: fa,
            box_jitter: jitter,
            true_confidence: GaussianSpec::new(mean, 1.0),
            false_confidence: GaussianSpec::new(mean - 3.0, 1.2),
        };
        let recognizer = |name: &str, det: DetectorModel, acc: f64, rej: f64| RecognizerModel {
            name: name.to_string(),
            detector: det,
            rank1_accuracy: acc,
            unknown_rejection_rate: rej,
            miss_as_rejection: 0.5,
            correct_score: GaussianSpec::new(8.0, 1.0),
            incorrect_score: GaussianSpec::new(5.0, 1.5),
            max_candidates: 5,
        };
        ScenarioSpec {
            seed,
            image_count: 40,
            faces_per_image: (0, 6),
            known_identities: 25,
            masked_in_training_identities: 5,
            masked_not_in_training_identities: 5,
            unknown_fraction: 0.35,
            masked_fraction: 0.15,
            day_count: 5,
            different_day_fraction: 0.3,
            image_size: (1200.0, 800.0),
            face_side: (20.0, 60.0),
            crowded: false,
            detectors: vec![
                detector("det-a", 0.05, 1.5, 0.10, 6.0),
                detector("det-b", 0.15, 0.8, 0.15, 4.0),
                detector("det-c", 0.10, 2.5, 0.08, 5.0),
            ],
            recognizers: vec![
                recognizer(
                    "rec-a",
                    detector("rec-a-det", 0.05, 1.0, 0.10, 6.0),
                    0.8,
                    0.7,
                ),
                recognizer(
                    "rec-b",
                    detector("rec-b-det", 0.10, 1.5, 0.12, 5.0),
                    0.6,
                    0.9,
                ),
                recognizer(
                    "rec-c",
                    detector("rec-c-det", 0.08, 0.5, 0.08, 5.5),
                    0.7,
                    0.5,
                ),
            ],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.image_count == 0 {
            return Err(Error::InvalidArgument(
                "scenario needs at least one image".into(),
            ));
        }
        if self.faces_per_image.0 > self.faces_per_image.1 {
            return Err(Error::InvalidArgument(
                "faces-per-image range is inverted".into(),
            ));
        }
        if self.known_identities == 0 {
            return Err(Error::InvalidArgument(
                "scenario needs at least one known identity".into(),
            ));
        }
        for (value, what) in [
            (self.unknown_fraction, "unknown fraction"),
            (self.masked_fraction, "masked fraction"),
            (self.different_day_fraction, "different-day fraction"),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument(format!("{what} must be in [0, 1]")));
            }
        }
        if self.unknown_fraction + self.masked_fraction > 1.0 {
            return Err(Error::InvalidArgument(
                "unknown and masked fractions exceed 1".into(),
            ));
        }
        if self.day_count == 0 {
            return Err(Error::InvalidArgument(
                "scenario needs at least one day".into(),
            ));
        }
        let (smin, smax) = self.face_side;
        if !(smin > 0.0 && smax >= smin && smax.is_finite()) {
            return Err(Error::InvalidArgument("face side range is invalid".into()));
        }
        if self.image_size.0 < 2.0 * smax || self.image_size.1 < 2.0 * smax {
            return Err(Error::InvalidArgument(
                "image size must fit at least one placement cell (twice the largest face side)"
                    .into(),
            ));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        for r in &self.recognizers {
            r.validate()?;
        }
        Ok(())
    }
}

/// What a detection record was generated as.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionTruth {
    /// True detection of the evaluation annotation at this index.
    Face(usize),
    Background,
}

/// What a recognition record was generated as.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecognitionTruth {
    /// Known face with its true identity at rank 1.
    CorrectIdentification,
    /// Known face with a different enrolled identity at rank 1.
    WrongIdentification,
    /// Known face labeled unknown.
    KnownRejected,
    /// Unknown/masked face or misdetection labeled with an enrolled identity.
    FalseIdentification(NegativeTag),
    /// Unknown/masked face or misdetection labeled `-1`.
    CorrectRejection,
}

/// A generated challenge with full per-record ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: ProtocolManifest,
    /// Evaluator-facing manifest with training days attached.
    pub eval: ProtocolManifest,
    pub detections: BTreeMap<String, Vec<DetectionRecord>>,
    pub detection_truths: BTreeMap<String, Vec<DetectionTruth>>,
    pub recognitions: BTreeMap<String, Vec<RecognitionRecord>>,
    pub recognition_truths: BTreeMap<String, Vec<RecognitionTruth>>,
    /// True when the sparse layout verified every record against every face,
    /// making the expected partitions exact.
    pub bookkeeping_exact: bool,
}

impl Scenario {
    /// Partition implied by the recorded truths of one detector.
    pub fn expected_detection_partition(&self, detector: &str) -> Result<ScorePartition> {
        if !self.bookkeeping_exact {
            return Err(Error::InvalidArgument(
                "bookkeeping is not exact for crowded scenarios".into(),
            ));
        }
        let records = self
            .detections
            .get(detector)
            .ok_or_else(|| Error::InvalidArgument(format!("no detector named {detector:?}")))?;
        let truths = &self.detection_truths[detector];
        let mut partition = ScorePartition::new(self.eval.total_faces());
        for (record, truth) in records.iter().zip(truths) {
            match truth {
                DetectionTruth::Face(_) => partition.positives.push(record.confidence),
                DetectionTruth::Background => {
                    partition.push_negative(NegativeTag::FalseAccept, record.confidence)
                }
            }
        }
        Ok(partition)
    }

    /// Partition implied by the recorded truths of one recognizer.
    pub fn expected_recognition_partition(&self, recognizer: &str) -> Result<ScorePartition> {
        if !self.bookkeeping_exact {
            return Err(Error::InvalidArgument(
                "bookkeeping is not exact for crowded scenarios".into(),
            ));
        }
        let records = self
            .recognitions
            .get(recognizer)
            .ok_or_else(|| Error::InvalidArgument(format!("no recognizer named {recognizer:?}")))?;
        let truths = &self.recognition_truths[recognizer];
        let mut partition = ScorePartition::new(self.eval.known_faces());
        for (record, truth) in records.iter().zip(truths) {
            let top = record.top_candidate();
            match truth {
                RecognitionTruth::CorrectIdentification => partition.positives.push(top.score),
                RecognitionTruth::FalseIdentification(tag) => {
                    partition.push_negative(*tag, top.score)
                }
                RecognitionTruth::WrongIdentification
                | RecognitionTruth::KnownRejected
                | RecognitionTruth::CorrectRejection => {}
            }
        }
        Ok(partition)
    }
}

/// Deterministically expands a spec into manifests, submissions and truths.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let day = |idx: usize| format!("day{idx:02}");
    let known_ids: Vec<i64> = (1..=spec.known_identities as i64).collect();
    let mit_ids: Vec<i64> = (spec.known_identities as i64 + 1
        ..=(spec.known_identities + spec.masked_in_training_identities) as i64)
        .collect();
    let mnt_base = (spec.known_identities + spec.masked_in_training_identities) as i64;
    let mnt_ids: Vec<i64> =
        (mnt_base + 1..=mnt_base + spec.masked_not_in_training_identities as i64).collect();

    // one training day per identity that appears in training
    let mut training_day: BTreeMap<i64, usize> = BTreeMap::new();
    for &id in known_ids.iter().chain(mit_ids.iter()) {
        training_day.insert(id, rng.gen_range(0..spec.day_count));
    }

    // training split: one image per face keeps placement trivial
    let mut train_faces: Vec<(i64, MaskingCategory, String)> = Vec::new();
    for &id in &known_ids {
        train_faces.push((id, MaskingCategory::Known, day(training_day[&id])));
    }
    for &id in &mit_ids {
        train_faces.push((
            id,
            MaskingCategory::MaskedInTraining,
            day(training_day[&id]),
        ));
    }
    for _ in 0..spec.known_identities.max(4) / 4 {
        let d = rng.gen_range(0..spec.day_count);
        train_faces.push((-1, MaskingCategory::Unknown, day(d)));
    }
    let train_annotations = train_faces
        .into_iter()
        .enumerate()
        .map(|(n, (label, category, day_id))| FaceAnnotation {
            image_id: format!("train_{n:05}"),
            bbox: BoundingBox::new(10.0, 10.0, 40.0, 40.0).unwrap(),
            label: IdentityLabel::new(label).unwrap(),
            category,
            day_id,
        })
        .collect();
    let train = ProtocolManifest::new(Split::Train, train_annotations, None)?;

    // evaluation split
    let (smin, smax) = spec.face_side;
    let cell = 2.0 * smax;
    let cells_x = (spec.image_size.0 / cell).floor() as usize;
    let cells_y = (spec.image_size.1 / cell).floor() as usize;
    let capacity = cells_x * cells_y;

    let mut annotations: Vec<FaceAnnotation> = Vec::new();
    let mut image_ids = Vec::new();
    for image_idx in 0..spec.image_count {
        let image_id = format!("img_{image_idx:05}");
        image_ids.push(image_id.clone());
        let mut count = rng.gen_range(spec.faces_per_image.0..=spec.faces_per_image.1);
        if !spec.crowded {
            count = count.min(capacity);
        }

        let mut cells =
            rand::seq::index::sample(&mut rng, capacity.max(1), count.min(capacity)).into_vec();
        cells.sort_unstable();
        let mut image_boxes: Vec<BoundingBox> = Vec::new();
        #[allow(clippy::needless_range_loop)] // cells parallels the face index in sparse mode
        for face_idx in 0..count {
            let bbox = if spec.crowded {
                if !image_boxes.is_empty() && rng.gen_bool(0.4) {
                    // nest inside an existing face
                    let parent = image_boxes[rng.gen_range(0..image_boxes.len())];
                    let side = (parent.width.min(parent.height) * rng.gen_range(0.3..0.7)).max(1.0);
                    let x = parent.x + rng.gen_range(0.0..=(parent.width - side).max(0.0));
                    let y = parent.y + rng.gen_range(0.0..=(parent.height - side).max(0.0));
                    BoundingBox::new(x, y, side, side).unwrap()
                } else {
                    let side = rng.gen_range(smin..=smax);
                    let x = rng.gen_range(0.0..spec.image_size.0 - side);
                    let y = rng.gen_range(0.0..spec.image_size.1 - side);
                    BoundingBox::new(x, y, side, side).unwrap()
                }
            } else {
                let cell_idx = cells[face_idx];
                let (cx, cy) = (
                    (cell_idx % cells_x) as f64 * cell,
                    (cell_idx / cells_x) as f64 * cell,
                );
                let margin = cell / 8.0;
                let side = rng.gen_range(smin..=smax);
                let x = cx + rng.gen_range(margin..=(cell - margin - side).max(margin));
                let y = cy + rng.gen_range(margin..=(cell - margin - side).max(margin));
                BoundingBox::new(x, y, side, side).unwrap()
            };
            image_boxes.push(bbox);

            let roll: f64 = rng.gen();
            let (label, category, day_id) = if roll < spec.unknown_fraction {
                (
                    -1,
                    MaskingCategory::Unknown,
                    day(rng.gen_range(0..spec.day_count)),
                )
            } else if roll < spec.unknown_fraction + spec.masked_fraction
                && (!mit_ids.is_empty() || !mnt_ids.is_empty())
            {
                let use_mit = !mit_ids.is_empty() && (mnt_ids.is_empty() || rng.gen_bool(0.5));
                if use_mit {
                    let id = mit_ids[rng.gen_range(0..mit_ids.len())];
                    (
                        id,
                        MaskingCategory::MaskedInTraining,
                        day(rng.gen_range(0..spec.day_count)),
                    )
                } else {
                    let id = mnt_ids[rng.gen_range(0..mnt_ids.len())];
                    (
                        id,
                        MaskingCategory::MaskedNotInTraining,
                        day(rng.gen_range(0..spec.day_count)),
                    )
                }
            } else {
                let id = known_ids[rng.gen_range(0..known_ids.len())];
                let trained_on = training_day[&id];
                let day_idx = if spec.day_count > 1 && rng.gen_bool(spec.different_day_fraction) {
                    let mut d = rng.gen_range(0..spec.day_count - 1);
                    if d >= trained_on {
                        d += 1;
                    }
                    d
                } else {
                    trained_on
                };
                (id, MaskingCategory::Known, day(day_idx))
            };
            annotations.push(FaceAnnotation {
                image_id: image_id.clone(),
                bbox,
                label: IdentityLabel::new(label).unwrap(),
                category,
                day_id,
            });
        }
    }
    let mut eval = ProtocolManifest::new(Split::Test, annotations, image_ids.clone())?;
    eval.attach_training_days(&train);

    let faces_by_image = group_faces(&eval);

    // detection submissions
    let mut detections = BTreeMap::new();
    let mut detection_truths = BTreeMap::new();
    for model in &spec.detectors {
        let (records, truths) =
            generate_detections(&mut rng, spec, &eval, &faces_by_image, &image_ids, model);
        detections.insert(model.name.clone(), records);
        detection_truths.insert(model.name.clone(), truths);
    }

    // recognition submissions
    let mut recognitions = BTreeMap::new();
    let mut recognition_truths = BTreeMap::new();
    for model in &spec.recognizers {
        let (boxes, box_truths) = generate_detections(
            &mut rng,
            spec,
            &eval,
            &faces_by_image,
            &image_ids,
            &model.detector,
        );
        let mut records = Vec::with_capacity(boxes.len());
        let mut truths = Vec::with_capacity(boxes.len());
        for (detection, truth) in boxes.into_iter().zip(box_truths) {
            let (candidates, truth) =
                generate_candidates(&mut rng, spec, &eval, model, &truth, &known_ids);
            records.push(
                RecognitionRecord::new(detection.image_id, detection.bbox, candidates)
                    .expect("generated candidates are valid"),
            );
            truths.push(truth);
        }
        recognitions.insert(model.name.clone(), records);
        recognition_truths.insert(model.name.clone(), truths);
    }

    Ok(Scenario {
        train,
        eval,
        detections,
        detection_truths,
        recognitions,
        recognition_truths,
        bookkeeping_exact: !spec.crowded,
    })
}

fn group_faces(manifest: &ProtocolManifest) -> BTreeMap<String, Vec<usize>> {
    let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, ann) in manifest.annotations().iter().enumerate() {
        map.entry(ann.image_id.clone()).or_default().push(idx);
    }
    map
}

/// Emits one detector's records image by image: true detections first, then
/// background boxes. In sparse mode every emitted box is verified to overlap
/// its own face at `>= 0.5` and every other face below, so its partition
/// destination is forced.
fn generate_detections(
    rng: &mut ChaCha8Rng,
    spec: &ScenarioSpec,
    eval: &ProtocolManifest,
    faces_by_image: &BTreeMap<String, Vec<usize>>,
    image_ids: &[String],
    model: &DetectorModel,
) -> (Vec<DetectionRecord>, Vec<DetectionTruth>) {
    let mut records = Vec::new();
    let mut truths = Vec::new();
    for image_id in image_ids {
        let face_idxs = faces_by_image
            .get(image_id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        for &face_idx in face_idxs {
            if model.miss_rate > 0.0 && rng.gen_bool(model.miss_rate) {
                continue;
            }
            let bbox = jittered_box(rng, spec, eval, face_idxs, face_idx, model.box_jitter);
            let confidence = model.true_confidence.sample(rng);
            records.push(DetectionRecord {
                image_id: image_id.clone(),
                bbox,
                confidence,
            });
            truths.push(DetectionTruth::Face(face_idx));
        }
        let lambda = model.false_accepts_per_image;
        let mut count = lambda.floor() as usize;
        if lambda.fract() > 0.0 && rng.gen_bool(lambda.fract()) {
            count += 1;
        }
        for _ in 0..count {
            if let Some(bbox) = background_box(rng, spec, eval, face_idxs) {
                records.push(DetectionRecord {
                    image_id: image_id.clone(),
                    bbox,
                    confidence: model.false_confidence.sample(rng),
                });
                truths.push(DetectionTruth::Background);
            }
        }
    }
    (records, truths)
}

/// Perturbs a face box, re-drawing until the result still pins down its own
/// face unambiguously (sparse mode). Falls back to the exact box.
fn jittered_box(
    rng: &mut ChaCha8Rng,
    spec: &ScenarioSpec,
    eval: &ProtocolManifest,
    face_idxs: &[usize],
    face_idx: usize,
    jitter: f64,
) -> BoundingBox {
    let face = &eval.annotations()[face_idx].bbox;
    if jitter == 0.0 {
        return *face;
    }
    for _ in 0..30 {
        let dx = face.width * jitter * rng.gen_range(-1.0..1.0);
        let dy = face.height * jitter * rng.gen_range(-1.0..1.0);
        let sw = 1.0 + jitter * rng.gen_range(-1.0..1.0);
        let sh = 1.0 + jitter * rng.gen_range(-1.0..1.0);
        let candidate = BoundingBox::new(
            face.x + dx,
            face.y + dy,
            (face.width * sw).max(face.width * 0.2),
            (face.height * sh).max(face.height * 0.2),
        )
        .expect("jittered dimensions stay positive");
        if spec.crowded {
            return candidate;
        }
        let own_ok = modified_jaccard(face, &candidate) >= 0.5;
        let others_clear = face_idxs.iter().all(|&other| {
            other == face_idx || modified_jaccard(&eval.annotations()[other].bbox, &candidate) < 0.5
        });
        if own_ok && others_clear {
            return candidate;
        }
    }
    *face
}

/// Samples a box overlapping no ground-truth face at `>= 0.5`. Gives up after
/// a bounded number of attempts (the image may simply be too full).
fn background_box(
    rng: &mut ChaCha8Rng,
    spec: &ScenarioSpec,
    eval: &ProtocolManifest,
    face_idxs: &[usize],
) -> Option<BoundingBox> {
    let (smin, smax) = spec.face_side;
    for _ in 0..50 {
        let side = rng.gen_range(smin..=smax);
        let x = rng.gen_range(0.0..spec.image_size.0 - side);
        let y = rng.gen_range(0.0..spec.image_size.1 - side);
        let candidate = BoundingBox::new(x, y, side, side).unwrap();
        let clear = face_idxs
            .iter()
            .all(|&f| modified_jaccard(&eval.annotations()[f].bbox, &candidate) < 0.5);
        if clear {
            return Some(candidate);
        }
    }
    None
}

/// Rolls the recognition outcome for one box and builds its candidate list.
fn generate_candidates(
    rng: &mut ChaCha8Rng,
    spec: &ScenarioSpec,
    eval: &ProtocolManifest,
    model: &RecognizerModel,
    box_truth: &DetectionTruth,
    known_ids: &[i64],
) -> (Vec<Candidate>, RecognitionTruth) {
    let negative_tag = |category: MaskingCategory| match category {
        MaskingCategory::Unknown => NegativeTag::PlainUnknown,
        MaskingCategory::MaskedInTraining => NegativeTag::MaskedInTraining,
        MaskingCategory::MaskedNotInTraining => NegativeTag::MaskedNotInTraining,
        MaskingCategory::Known => unreachable!("known faces are routed separately"),
    };

    let (top_label, top_score, truth) = match box_truth {
        DetectionTruth::Face(face_idx) => {
            let face = &eval.annotations()[*face_idx];
            if face.category == MaskingCategory::Known {
                if model.rank1_accuracy > 0.0 && rng.gen_bool(model.rank1_accuracy) {
                    (
                        face.label.value(),
                        model.correct_score.sample(rng),
                        RecognitionTruth::CorrectIdentification,
                    )
                } else if spec.known_identities < 2
                    || (model.miss_as_rejection > 0.0 && rng.gen_bool(model.miss_as_rejection))
                {
                    (
                        -1,
                        model.incorrect_score.sample(rng),
                        RecognitionTruth::KnownRejected,
                    )
                } else {
                    (
                        other_known_id(rng, known_ids, face.label.value()),
                        model.incorrect_score.sample(rng),
                        RecognitionTruth::WrongIdentification,
                    )
                }
            } else if model.unknown_rejection_rate > 0.0
                && rng.gen_bool(model.unknown_rejection_rate)
            {
                (
                    -1,
                    model.incorrect_score.sample(rng),
                    RecognitionTruth::CorrectRejection,
                )
            } else {
                (
                    known_ids[rng.gen_range(0..known_ids.len())],
                    model.incorrect_score.sample(rng),
                    RecognitionTruth::FalseIdentification(negative_tag(face.category)),
                )
            }
        }
        DetectionTruth::Background => {
            if model.unknown_rejection_rate > 0.0 && rng.gen_bool(model.unknown_rejection_rate) {
                (
                    -1,
                    model.incorrect_score.sample(rng),
                    RecognitionTruth::CorrectRejection,
                )
            } else {
                (
                    known_ids[rng.gen_range(0..known_ids.len())],
                    model.incorrect_score.sample(rng),
                    RecognitionTruth::FalseIdentification(NegativeTag::FalseAccept),
                )
            }
        }
    };

    let mut candidates = vec![Candidate {
        label: IdentityLabel::new(top_label).unwrap(),
        score: top_score,
    }];
    let extra = rng.gen_range(0..model.max_candidates);
    let mut pool: Vec<i64> = known_ids
        .iter()
        .copied()
        .filter(|&id| id != top_label)
        .collect();
    let mut score = top_score;
    for _ in 0..extra {
        if pool.is_empty() {
            break;
        }
        let pick = rng.gen_range(0..pool.len());
        let label = pool.swap_remove(pick);
        score -= rng.gen_range(0.01..0.5);
        candidates.push(Candidate {
            label: IdentityLabel::new(label).unwrap(),
            score,
        });
    }
    (candidates, truth)
}

fn other_known_id(rng: &mut ChaCha8Rng, known_ids: &[i64], not: i64) -> i64 {
    let pick = rng.gen_range(0..known_ids.len() - 1);
    if known_ids[pick] >= not {
        known_ids[pick + 1]
    } else {
        known_ids[pick]
    }
}
