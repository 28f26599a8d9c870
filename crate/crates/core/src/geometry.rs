//! Axis-aligned boxes, IoU, and the coordinate maps induced by
//! resize + horizontal-flip test-time augmentations.
//!
//! Boxes live in continuous pixel coordinates: area is `(x2 - x1) * (y2 - y1)`
//! with no inclusive-pixel `+1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::number;

/// Multi-scale test settings `(target_short, target_long_cap)` used by default
/// when synthesizing augmentation specs. Each scale is run with and without
/// horizontal flip.
pub const DEFAULT_TTA_SCALES: [(u32, u32); 3] = [(600, 1333), (800, 1333), (1000, 1333)];

/// Relative slack allowed when checking that an augmented-frame box lies
/// inside the resized image.
const FRAME_EPS: f64 = 1e-9;

/// An axis-aligned rectangle with `x1 <= x2`, `y1 <= y2` and finite
/// coordinates. Zero-area boxes are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BBox {
    #[serde(serialize_with = "number::serialize")]
    x1: f64,
    #[serde(serialize_with = "number::serialize")]
    y1: f64,
    #[serde(serialize_with = "number::serialize")]
    x2: f64,
    #[serde(serialize_with = "number::serialize")]
    y2: f64,
}

#[derive(Deserialize)]
struct RawBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = Error;

    fn try_from(r: RawBox) -> Result<Self> {
        BBox::new(r.x1, r.y1, r.x2, r.y2)
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::NonFiniteBox(x1, y1, x2, y2));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::InvertedBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from a top-left corner and a size, as scene-graph
    /// annotations store them.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }

    #[inline]
    pub fn x2(&self) -> f64 {
        self.x2
    }

    #[inline]
    pub fn y2(&self) -> f64 {
        self.y2
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Intersection area with `other` (0 when disjoint).
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    fn within(&self, width: f64, height: f64, eps: f64) -> bool {
        self.x1 >= -eps && self.y1 >= -eps && self.x2 <= width + eps && self.y2 <= height + eps
    }

    fn clamped(&self, width: f64, height: f64) -> BBox {
        let cx = |v: f64| v.clamp(0.0, width);
        let cy = |v: f64| v.clamp(0.0, height);
        BBox {
            x1: cx(self.x1),
            y1: cy(self.y1),
            x2: cx(self.x2),
            y2: cy(self.y2),
        }
    }

    fn out_of_bounds(&self, width: f64, height: f64) -> Error {
        Error::OutOfBounds {
            x1: self.x1,
            y1: self.y1,
            x2: self.x2,
            y2: self.y2,
            width,
            height,
        }
    }
}

/// Original image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSize")]
pub struct ImageSize {
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct RawSize {
    width: u32,
    height: u32,
}

impl TryFrom<RawSize> for ImageSize {
    type Error = Error;

    fn try_from(r: RawSize) -> Result<Self> {
        ImageSize::new(r.width, r.height)
    }
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImageSize { width, height });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// The whole image as a box.
    pub fn full_box(&self) -> BBox {
        BBox {
            x1: 0.0,
            y1: 0.0,
            x2: self.width as f64,
            y2: self.height as f64,
        }
    }

    pub fn contains(&self, b: &BBox) -> bool {
        b.within(self.width as f64, self.height as f64, 0.0)
    }
}

/// One test-time augmentation: an aspect-preserving resize so that the
/// shorter side reaches `target_short` unless the longer side would exceed
/// `target_long_cap`, optionally followed by a horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct AugmentationSpec {
    target_short: u32,
    target_long_cap: u32,
    hflip: bool,
    original: ImageSize,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    target_short: u32,
    target_long_cap: u32,
    hflip: bool,
    orig_w: u32,
    orig_h: u32,
}

impl TryFrom<RawSpec> for AugmentationSpec {
    type Error = Error;

    fn try_from(r: RawSpec) -> Result<Self> {
        AugmentationSpec::new(
            r.target_short,
            r.target_long_cap,
            r.hflip,
            ImageSize::new(r.orig_w, r.orig_h)?,
        )
    }
}

impl From<AugmentationSpec> for RawSpec {
    fn from(s: AugmentationSpec) -> Self {
        RawSpec {
            target_short: s.target_short,
            target_long_cap: s.target_long_cap,
            hflip: s.hflip,
            orig_w: s.original.width,
            orig_h: s.original.height,
        }
    }
}

impl AugmentationSpec {
    pub fn new(
        target_short: u32,
        target_long_cap: u32,
        hflip: bool,
        original: ImageSize,
    ) -> Result<Self> {
        if target_short == 0 {
            return Err(Error::InvalidAugmentation(
                "target_short must be >= 1".into(),
            ));
        }
        if target_long_cap < target_short {
            return Err(Error::InvalidAugmentation(format!(
                "target_long_cap {target_long_cap} is below target_short {target_short}"
            )));
        }
        Ok(Self {
            target_short,
            target_long_cap,
            hflip,
            original,
        })
    }

    /// Identity augmentation for `original`: no flip, and a target that
    /// leaves the scale ratio at exactly 1.
    pub fn identity(original: ImageSize) -> Self {
        let short = original.width.min(original.height);
        let long = original.width.max(original.height);
        Self {
            target_short: short,
            target_long_cap: long,
            hflip: false,
            original,
        }
    }

    /// Every `(scale, flip)` combination of `scales` for one image, scale-major
    /// with the unflipped variant first.
    pub fn grid(original: ImageSize, scales: &[(u32, u32)], flips: &[bool]) -> Result<Vec<Self>> {
        let mut out = Vec::with_capacity(scales.len() * flips.len());
        for &(short, cap) in scales {
            for &hflip in flips {
                out.push(Self::new(short, cap, hflip, original)?);
            }
        }
        Ok(out)
    }

    /// The six default specs: three scales, each with and without flip.
    pub fn default_tta(original: ImageSize) -> Vec<Self> {
        Self::grid(original, &DEFAULT_TTA_SCALES, &[false, true]).expect("default scales are valid")
    }

    #[inline]
    pub fn target_short(&self) -> u32 {
        self.target_short
    }

    #[inline]
    pub fn target_long_cap(&self) -> u32 {
        self.target_long_cap
    }

    #[inline]
    pub fn hflip(&self) -> bool {
        self.hflip
    }

    #[inline]
    pub fn original(&self) -> ImageSize {
        self.original
    }

    /// Width and height of the resized image (unrounded).
    pub fn augmented_extent(&self) -> (f64, f64) {
        let r = scale_ratio(self);
        (
            r * self.original.width as f64,
            r * self.original.height as f64,
        )
    }
}

/// Area-based IoU in continuous geometry. Returns 0 when the union is empty,
/// so two coincident zero-area boxes score 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// `min(target_short / shorter_side, target_long_cap / longer_side)`.
pub fn scale_ratio(spec: &AugmentationSpec) -> f64 {
    let w = spec.original.width as f64;
    let h = spec.original.height as f64;
    let short_ratio = spec.target_short as f64 / w.min(h);
    let long_ratio = spec.target_long_cap as f64 / w.max(h);
    short_ratio.min(long_ratio)
}

/// Maps a box in the original image into the augmented frame: scale by the
/// resize ratio, then mirror about the vertical midline of the resized image
/// when the spec flips.
pub fn transform_box(b: &BBox, spec: &AugmentationSpec) -> Result<BBox> {
    let size = spec.original;
    if !size.contains(b) {
        return Err(b.out_of_bounds(size.width as f64, size.height as f64));
    }
    let r = scale_ratio(spec);
    let (mut x1, y1, mut x2, y2) = (r * b.x1, r * b.y1, r * b.x2, r * b.y2);
    if spec.hflip {
        let rw = r * size.width as f64;
        (x1, x2) = (rw - x2, rw - x1);
    }
    // flip can leave a -0.0 or a rounding sliver below zero
    Ok(BBox {
        x1: x1.max(0.0),
        y1,
        x2: x2.max(x1.max(0.0)),
        y2,
    })
}

/// Inverse of [`transform_box`]: maps an augmented-frame box back into the
/// original image. Boxes that stick out of the resized image are rejected;
/// callers clip first.
pub fn detransform_box(b: &BBox, spec: &AugmentationSpec) -> Result<BBox> {
    let (rw, rh) = spec.augmented_extent();
    let eps = FRAME_EPS * rw.max(rh).max(1.0);
    if !b.within(rw, rh, eps) {
        return Err(b.out_of_bounds(rw, rh));
    }
    let r = scale_ratio(spec);
    let (mut x1, mut x2) = (b.x1, b.x2);
    if spec.hflip {
        (x1, x2) = (rw - x2, rw - x1);
    }
    let out = BBox {
        x1: x1 / r,
        y1: b.y1 / r,
        x2: x2 / r,
        y2: b.y2 / r,
    };
    let size = spec.original;
    Ok(out.clamped(size.width as f64, size.height as f64))
}

/// Clips an augmented-frame box to the resized image extent of `spec`.
pub fn clip_to_augmented(b: &BBox, spec: &AugmentationSpec) -> BBox {
    let (rw, rh) = spec.augmented_extent();
    b.clamped(rw, rh)
}

/// Clamps every coordinate to `[0, W] x [0, H]`.
pub fn clip_box(b: &BBox, size: ImageSize) -> BBox {
    b.clamped(size.width as f64, size.height as f64)
}
