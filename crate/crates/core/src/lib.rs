//! Scoring library for open-set face detection and identification benchmarks.
//!
//! Submissions are matched against annotated ground truth with a relaxed
//! overlap measure, scores are split into positives and tagged negatives, and
//! thresholds are swept over false-accept budgets to produce FROC, DIR and
//! rejection curves. A consensus pipeline augments ground truth from
//! multi-detector agreement, and a seeded generator plus brute-force oracles
//! make every metric verifiable without real challenge data.

pub mod consensus;
pub mod curves;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod matching;
pub mod protocol;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::BoundingBox;
pub use matching::{Candidate, DetectionRecord, NegativeTag, RecognitionRecord, ScorePartition};
pub use protocol::{FaceAnnotation, IdentityLabel, MaskingCategory, ProtocolManifest, Split};
