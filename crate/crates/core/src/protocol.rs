//! Ground-truth data model: identity labels, masking categories, capture-day
//! tags, and the manifest whose face counts normalize every metric.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Sentinel used for faces that do not belong to any enrolled identity.
pub const UNKNOWN_LABEL: i64 = -1;

/// Subject identity: a positive integer id, or the `-1` sentinel for unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdentityLabel(i64);

impl IdentityLabel {
    pub const UNKNOWN: IdentityLabel = IdentityLabel(UNKNOWN_LABEL);

    /// Accepts positive ids and the `-1` sentinel; 0 and other negatives are invalid.
    pub fn new(value: i64) -> Result<Self> {
        if value >= 1 || value == UNKNOWN_LABEL {
            Ok(IdentityLabel(value))
        } else {
            Err(Error::Validation(format!(
                "identity label must be >= 1 or -1, got {value}"
            )))
        }
    }

    pub fn known(value: i64) -> Result<Self> {
        if value >= 1 {
            Ok(IdentityLabel(value))
        } else {
            Err(Error::Validation(format!(
                "known identity label must be >= 1, got {value}"
            )))
        }
    }

    pub fn value(&self) -> i64 {
        self.0
    }

    /// True when this is a concrete enrolled identity rather than the sentinel.
    pub fn is_known_id(&self) -> bool {
        self.0 >= 1
    }
}

impl fmt::Display for IdentityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a face's identity is exposed to participants.
///
/// `Masked*` faces have a real identity known to the evaluator but are
/// published with label `-1`, so rejection of unseen subjects can be measured
/// with ground truth. The two masked flavors distinguish subjects that do or
/// do not appear in the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaskingCategory {
    Known,
    Unknown,
    MaskedInTraining,
    MaskedNotInTraining,
}

impl MaskingCategory {
    pub const ALL: [MaskingCategory; 4] = [
        MaskingCategory::Known,
        MaskingCategory::Unknown,
        MaskingCategory::MaskedInTraining,
        MaskingCategory::MaskedNotInTraining,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            MaskingCategory::Known => "K",
            MaskingCategory::Unknown => "U",
            MaskingCategory::MaskedInTraining => "MIT",
            MaskingCategory::MaskedNotInTraining => "MNT",
        }
    }

    pub fn from_code(code: &str) -> Result<Self> {
        match code {
            "K" => Ok(MaskingCategory::Known),
            "U" => Ok(MaskingCategory::Unknown),
            "MIT" => Ok(MaskingCategory::MaskedInTraining),
            "MNT" => Ok(MaskingCategory::MaskedNotInTraining),
            other => Err(Error::Validation(format!(
                "unknown masking category code {other:?} (expected K, U, MIT or MNT)"
            ))),
        }
    }

    pub fn is_masked(&self) -> bool {
        matches!(
            self,
            MaskingCategory::MaskedInTraining | MaskingCategory::MaskedNotInTraining
        )
    }
}

impl fmt::Display for MaskingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One ground-truth face: where it is, who it is, and how it is published.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceAnnotation {
    pub image_id: String,
    pub bbox: BoundingBox,
    /// True label. For masked faces this is the real identity in the
    /// evaluator-facing manifest and `-1` in the participant-facing view.
    pub label: IdentityLabel,
    pub category: MaskingCategory,
    /// Opaque capture-day tag; equality is exact string match.
    pub day_id: String,
}

impl FaceAnnotation {
    pub fn validate(&self) -> Result<()> {
        match self.category {
            MaskingCategory::Known if !self.label.is_known_id() => Err(Error::Validation(format!(
                "face in image {:?} is categorized Known but labeled {}",
                self.image_id, self.label
            ))),
            MaskingCategory::Unknown if self.label.is_known_id() => {
                Err(Error::Validation(format!(
                    "face in image {:?} is categorized Unknown but labeled {}",
                    self.image_id, self.label
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!(
                "unknown split {other:?} (expected train, validation or test)"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A split's annotated faces plus the image universe and, once attached, the
/// per-identity training-day map used for same-day/different-day analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolManifest {
    split: Split,
    annotations: Vec<FaceAnnotation>,
    /// All image ids of the split, including images without any annotated face.
    images: BTreeSet<String>,
    /// identity -> days on which that identity appears in the training split.
    training_days: BTreeMap<i64, BTreeSet<String>>,
}

impl ProtocolManifest {
    /// Assembles and validates a manifest. `extra_images` declares images the
    /// split contains beyond those carrying annotations, so detections on
    /// face-free images can be told apart from detections on unknown images.
    pub fn new(
        split: Split,
        annotations: Vec<FaceAnnotation>,
        extra_images: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for ann in &annotations {
            ann.validate()?;
            let key = (
                ann.image_id.clone(),
                ann.bbox.x.to_bits(),
                ann.bbox.y.to_bits(),
                ann.bbox.width.to_bits(),
                ann.bbox.height.to_bits(),
            );
            if !seen.insert(key) {
                return Err(Error::Validation(format!(
                    "duplicate annotation in image {:?} at ({}, {}, {}, {})",
                    ann.image_id, ann.bbox.x, ann.bbox.y, ann.bbox.width, ann.bbox.height
                )));
            }
        }
        let mut images: BTreeSet<String> = annotations.iter().map(|a| a.image_id.clone()).collect();
        images.extend(extra_images);
        let mut manifest = ProtocolManifest {
            split,
            annotations,
            images,
            training_days: BTreeMap::new(),
        };
        // A training manifest carries its own day map.
        if split == Split::Train {
            manifest.training_days = manifest.day_occurrences();
        }
        Ok(manifest)
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn annotations(&self) -> &[FaceAnnotation] {
        &self.annotations
    }

    pub fn images(&self) -> &BTreeSet<String> {
        &self.images
    }

    pub fn contains_image(&self, image_id: &str) -> bool {
        self.images.contains(image_id)
    }

    /// M: total number of labeled faces in the split.
    pub fn total_faces(&self) -> usize {
        self.annotations.len()
    }

    /// N: number of faces of Known (unmasked, enrolled) identities.
    pub fn known_faces(&self) -> usize {
        self.annotations
            .iter()
            .filter(|a| a.category == MaskingCategory::Known)
            .count()
    }

    pub fn faces_in_category(&self, category: MaskingCategory) -> usize {
        self.annotations
            .iter()
            .filter(|a| a.category == category)
            .count()
    }

    pub fn training_days(&self) -> &BTreeMap<i64, BTreeSet<String>> {
        &self.training_days
    }

    /// Days on which each Known identity of *this* split appears.
    pub fn day_occurrences(&self) -> BTreeMap<i64, BTreeSet<String>> {
        let mut map: BTreeMap<i64, BTreeSet<String>> = BTreeMap::new();
        for ann in &self.annotations {
            if ann.category == MaskingCategory::Known {
                map.entry(ann.label.value())
                    .or_default()
                    .insert(ann.day_id.clone());
            }
        }
        map
    }

    /// Adopts the day map of a training manifest. Every Known identity of this
    /// split receives an entry, empty when the identity never appears in
    /// training, so membership tests are total.
    pub fn attach_training_days(&mut self, training: &ProtocolManifest) {
        let mut days = training.day_occurrences();
        for ann in &self.annotations {
            if ann.category == MaskingCategory::Known {
                days.entry(ann.label.value()).or_default();
            }
        }
        self.training_days = days;
    }

    /// Directly installs a day map (as loaded from a JSON manifest).
    pub fn set_training_days(&mut self, days: BTreeMap<i64, BTreeSet<String>>) {
        let mut days = days;
        for ann in &self.annotations {
            if ann.category == MaskingCategory::Known {
                days.entry(ann.label.value()).or_default();
            }
        }
        self.training_days = days;
    }

    /// Participant-facing copy: masked faces keep their category tag but their
    /// labels are replaced by `-1`. Boxes, image ids and counts are untouched,
    /// and applying the view twice changes nothing further.
    pub fn masked_view(&self) -> ProtocolManifest {
        let annotations = self
            .annotations
            .iter()
            .map(|ann| {
                let mut ann = ann.clone();
                if ann.category.is_masked() {
                    ann.label = IdentityLabel::UNKNOWN;
                }
                ann
            })
            .collect();
        ProtocolManifest {
            split: self.split,
            annotations,
            images: self.images.clone(),
            training_days: self.training_days.clone(),
        }
    }

    /// True when the probe's identity appears in training on the probe's day.
    pub fn is_same_day(&self, probe: &FaceAnnotation) -> Result<bool> {
        if probe.category != MaskingCategory::Known {
            return Err(Error::Validation(format!(
                "day split is defined for Known faces only, got category {} in image {:?}",
                probe.category, probe.image_id
            )));
        }
        Ok(self
            .training_days
            .get(&probe.label.value())
            .map(|days| days.contains(&probe.day_id))
            .unwrap_or(false))
    }

    /// Partitions Known probe faces into those captured on a day their
    /// identity also appears in training, and all others. The two halves are
    /// disjoint and together cover the probe list.
    pub fn day_split<'a>(
        &self,
        probe: &'a [FaceAnnotation],
    ) -> Result<(Vec<&'a FaceAnnotation>, Vec<&'a FaceAnnotation>)> {
        let mut same_day = Vec::new();
        let mut different_day = Vec::new();
        for ann in probe {
            if self.is_same_day(ann)? {
                same_day.push(ann);
            } else {
                different_day.push(ann);
            }
        }
        Ok((same_day, different_day))
    }

    pub fn stats(&self) -> ManifestStats {
        let mut faces = BTreeMap::new();
        let mut subjects: BTreeMap<MaskingCategory, BTreeSet<i64>> = BTreeMap::new();
        let mut days = BTreeSet::new();
        for category in MaskingCategory::ALL {
            faces.insert(category, 0usize);
        }
        for ann in &self.annotations {
            *faces.entry(ann.category).or_insert(0) += 1;
            if ann.label.is_known_id() {
                subjects
                    .entry(ann.category)
                    .or_default()
                    .insert(ann.label.value());
            }
            days.insert(ann.day_id.clone());
        }
        ManifestStats {
            split: self.split,
            total_faces: self.total_faces(),
            known_faces: self.known_faces(),
            faces_per_category: faces,
            subjects_per_category: subjects.into_iter().map(|(k, v)| (k, v.len())).collect(),
            image_count: self.images.len(),
            day_count: days.len(),
        }
    }
}

/// Population counts of a manifest, for reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestStats {
    pub split: Split,
    pub total_faces: usize,
    pub known_faces: usize,
    pub faces_per_category: BTreeMap<MaskingCategory, usize>,
    /// Distinct labeled subjects per category. Unknown faces carry no subject
    /// identity, so no entry is reported for them.
    pub subjects_per_category: BTreeMap<MaskingCategory, usize>,
    pub image_count: usize,
    pub day_count: usize,
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "split: {}", self.split)?;
        writeln!(f, "images: {}", self.image_count)?;
        writeln!(f, "days: {}", self.day_count)?;
        writeln!(f, "faces total (M): {}", self.total_faces)?;
        writeln!(f, "faces known (N): {}", self.known_faces)?;
        for category in MaskingCategory::ALL {
            let faces = self.faces_per_category.get(&category).copied().unwrap_or(0);
            match self.subjects_per_category.get(&category) {
                Some(subjects) => {
                    writeln!(f, "{}: {} faces, {} subjects", category, faces, subjects)?
                }
                None => writeln!(f, "{}: {} faces, ? subjects", category, faces)?,
            }
        }
        Ok(())
    }
}
