//! Axis-aligned bounding boxes and the overlap measures used for matching.
//!
//! Boxes are closed-open rectangles over real coordinates, so boxes that
//! merely touch at an edge intersect with area zero. Besides the standard
//! intersection-over-union this module provides a relaxed overlap ratio
//! whose union term forgives detections that sit entirely inside an
//! oversized ground-truth region and cover at least a quarter of it.

use crate::error::{Error, Result};

/// Axis-aligned rectangle in image pixel coordinates, stored as
/// (left, top, width, height) with strictly positive dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting non-finite coordinates and non-positive dimensions.
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && width.is_finite() && height.is_finite()) {
            return Err(Error::Validation(format!(
                "bounding box has non-finite coordinates ({x}, {y}, {width}, {height})"
            )));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::Validation(format!(
                "bounding box dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self {
            x,
            y,
            width,
            height,
        })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    /// Scales width and height by `factor`, keeping the center fixed.
    pub fn scaled_about_center(&self, factor: f64) -> BoundingBox {
        let (cx, cy) = self.center();
        let width = self.width * factor;
        let height = self.height * factor;
        BoundingBox {
            x: cx - width / 2.0,
            y: cy - height / 2.0,
            width,
            height,
        }
    }
}

/// Overlap area of two boxes; zero when disjoint or edge-touching.
/// Capped at the smaller box area: the rounding of `(x + w) - x` must not
/// let a contained box overlap by more than itself.
pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.right().min(b.right()) - a.x.max(b.x);
    let h = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if w > 0.0 && h > 0.0 {
        (w * h).min(a.area()).min(b.area())
    } else {
        0.0
    }
}

/// Standard Jaccard index `|a∩b| / |a∪b|` in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Relaxed overlap of a detection `det` against a ground-truth box `gt`:
///
/// ```text
///   |gt ∩ det| / ( max{|gt|/4, |gt ∩ det|} + |det| − |gt ∩ det| )
/// ```
///
/// The union term is capped so a detection contained in `gt` that covers at
/// least a quarter of it scores exactly 1. Arguments are ordered: the measure
/// is not symmetric.
pub fn modified_jaccard(gt: &BoundingBox, det: &BoundingBox) -> f64 {
    let inter = intersection_area(gt, det);
    if inter == 0.0 {
        return 0.0;
    }
    inter / ((gt.area() / 4.0).max(inter) + det.area() - inter)
}
