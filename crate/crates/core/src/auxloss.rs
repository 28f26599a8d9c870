//! Box-to-mask rasterization and Dice losses for the segmentation-based
//! auxiliary objective, plus the weighted combination with the detector loss.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageSize};

/// Feature strides the auxiliary head segments at (1/8, 1/16, 1/32).
pub const AUX_STRIDES: [u32; 3] = [8, 16, 32];

/// A stride-aligned occupancy grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    stride: u32,
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

/// Predicted per-cell foreground probabilities on the same grid as a
/// [`BinaryMask`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    stride: u32,
    width: usize,
    height: usize,
    cells: Vec<f64>,
}

/// Grid dimensions `(ceil(W / stride), ceil(H / stride))`.
pub fn grid_shape(size: ImageSize, stride: u32) -> (usize, usize) {
    let s = stride as usize;
    (
        (size.width() as usize).div_ceil(s),
        (size.height() as usize).div_ceil(s),
    )
}

impl BinaryMask {
    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Cell at row `i`, column `j`.
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.cells[i * self.width + j] = v;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn zeros(stride: u32, width: usize, height: usize) -> Self {
        Self {
            stride,
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn from_cells(stride: u32, width: usize, height: usize, cells: Vec<bool>) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidStride(0));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        Ok(Self {
            stride,
            width,
            height,
            cells,
        })
    }

    /// Portable text form: a `stride width height` header line followed by
    /// `height` lines of `0`/`1` characters.
    pub fn to_grid_string(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1) + 16);
        let _ = writeln!(out, "{} {} {}", self.stride, self.width, self.height);
        for row in self.cells.chunks(self.width.max(1)).take(self.height) {
            out.extend(row.iter().map(|&c| if c { '1' } else { '0' }));
            out.push('\n');
        }
        if self.width == 0 {
            for _ in 0..self.height {
                out.push('\n');
            }
        }
        out
    }

    pub fn from_grid_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidGrid("missing header".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidGrid(format!("bad header `{header}`: {e}")))?;
        let [stride, width, height] = nums[..] else {
            return Err(Error::InvalidGrid(format!("bad header `{header}`")));
        };
        let mut cells = Vec::with_capacity(width * height);
        for (i, line) in lines.by_ref().take(height).enumerate() {
            if line.len() != width {
                return Err(Error::InvalidGrid(format!(
                    "row {i} has {} columns, expected {width}",
                    line.len()
                )));
            }
            for ch in line.chars() {
                match ch {
                    '0' => cells.push(false),
                    '1' => cells.push(true),
                    other => {
                        return Err(Error::InvalidGrid(format!(
                            "unexpected character `{other}`"
                        )))
                    }
                }
            }
        }
        if cells.len() != width * height || lines.next().is_some() {
            return Err(Error::InvalidGrid("row count does not match header".into()));
        }
        let stride =
            u32::try_from(stride).map_err(|_| Error::InvalidGrid("stride overflow".into()))?;
        Self::from_cells(stride, width, height, cells)
    }
}

impl ProbMask {
    pub fn new(stride: u32, width: usize, height: usize, cells: Vec<f64>) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidStride(0));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        if let Some(&bad) = cells.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidProbability(bad));
        }
        Ok(Self {
            stride,
            width,
            height,
            cells,
        })
    }

    /// Constant-valued prediction.
    pub fn filled(stride: u32, width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(stride, width, height, vec![value; width * height])
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }
}

impl From<&BinaryMask> for ProbMask {
    fn from(m: &BinaryMask) -> Self {
        Self {
            stride: m.stride,
            width: m.width,
            height: m.height,
            cells: m.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    lambda: f64,
    dice_smoothing: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            dice_smoothing: 1.0,
        }
    }
}

impl LossConfig {
    pub fn new(lambda: f64, dice_smoothing: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidLossConfig(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if !(dice_smoothing.is_finite() && dice_smoothing > 0.0) {
            return Err(Error::InvalidLossConfig(format!(
                "dice smoothing must be > 0, got {dice_smoothing}"
            )));
        }
        Ok(Self {
            lambda,
            dice_smoothing,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dice_smoothing(&self) -> f64 {
        self.dice_smoothing
    }
}

/// Marks every cell whose center lies in the box, using half-open
/// containment `x1 <= cx < x2`, `y1 <= cy < y2`. Adjacent boxes never claim
/// the same cell.
pub fn rasterize_box(b: &BBox, size: ImageSize, stride: i64) -> Result<BinaryMask> {
    let stride = u32::try_from(stride)
        .ok()
        .filter(|&s| s > 0)
        .ok_or(Error::InvalidStride(stride))?;
    let (width, height) = grid_shape(size, stride);
    let s = stride as f64;
    let center = |k: usize| (k as f64 + 0.5) * s;
    // containment is separable in x and y
    let cols: Vec<bool> = (0..width)
        .map(|j| {
            let c = center(j);
            b.x1() <= c && c < b.x2()
        })
        .collect();
    let mut mask = BinaryMask::zeros(stride, width, height);
    for i in 0..height {
        let c = center(i);
        if b.y1() <= c && c < b.y2() {
            mask.cells[i * width..(i + 1) * width].copy_from_slice(&cols);
        }
    }
    Ok(mask)
}

/// Smoothed single-class Dice loss
/// `1 - (2 * sum(p * t) + s) / (sum(p) + sum(t) + s)`.
pub fn dice_loss(pred: &ProbMask, target: &BinaryMask, cfg: &LossConfig) -> Result<f64> {
    if pred.stride != target.stride || pred.width != target.width || pred.height != target.height {
        return Err(Error::ShapeMismatch {
            pred_stride: pred.stride,
            pred_w: pred.width,
            pred_h: pred.height,
            target_stride: target.stride,
            target_w: target.width,
            target_h: target.height,
        });
    }
    let (mut inter, mut p_sum, mut t_sum) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &t) in pred.cells.iter().zip(&target.cells) {
        p_sum += p;
        if t {
            t_sum += 1.0;
            inter += p;
        }
    }
    let s = cfg.dice_smoothing;
    let coeff = (2.0 * inter + s) / (p_sum + t_sum + s);
    Ok((1.0 - coeff).clamp(0.0, 1.0))
}

/// Auxiliary loss over [`AUX_STRIDES`]: the unweighted mean of the
/// per-stride Dice losses against the rasterized box.
pub fn multi_scale_dice(
    preds: &[ProbMask],
    b: &BBox,
    size: ImageSize,
    cfg: &LossConfig,
) -> Result<f64> {
    multi_scale_dice_at(preds, &AUX_STRIDES, b, size, cfg)
}

/// [`multi_scale_dice`] over an explicit stride set. Each stride needs
/// exactly one prediction.
pub fn multi_scale_dice_at(
    preds: &[ProbMask],
    strides: &[u32],
    b: &BBox,
    size: ImageSize,
    cfg: &LossConfig,
) -> Result<f64> {
    for (k, p) in preds.iter().enumerate() {
        if !strides.contains(&p.stride) {
            return Err(Error::UnexpectedStride(p.stride));
        }
        if preds[..k].iter().any(|q| q.stride == p.stride) {
            return Err(Error::DuplicateStride(p.stride));
        }
    }
    let mut total = 0.0;
    for &stride in strides {
        let pred = preds
            .iter()
            .find(|p| p.stride == stride)
            .ok_or(Error::MissingStride(stride))?;
        let target = rasterize_box(b, size, stride as i64)?;
        total += dice_loss(pred, &target, cfg)?;
    }
    Ok(total / strides.len() as f64)
}

/// `l_o + lambda * l_aux`.
pub fn combine_loss(l_o: f64, l_aux: f64, cfg: &LossConfig) -> Result<f64> {
    for v in [l_o, l_aux] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss(v));
        }
    }
    Ok(l_o + cfg.lambda * l_aux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn size64() -> ImageSize {
        ImageSize::new(64, 64).unwrap()
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rasterize_examples() {
        let full = rasterize_box(&size64().full_box(), size64(), 8).unwrap();
        assert_eq!((full.width(), full.height()), (8, 8));
        assert_eq!(full.count_ones(), 64);

        let empty = rasterize_box(&bx(20.0, 20.0, 20.0, 40.0), size64(), 8).unwrap();
        assert_eq!(empty.count_ones(), 0);

        let one = rasterize_box(&bx(0.0, 0.0, 12.0, 12.0), size64(), 8).unwrap();
        assert_eq!(one.count_ones(), 1);
        assert!(one.get(0, 0));
    }

    #[test]
    fn grid_shape_rounds_up() {
        let s = ImageSize::new(65, 17).unwrap();
        assert_eq!(grid_shape(s, 8), (9, 3));
        assert_eq!(grid_shape(s, 32), (3, 1));
    }

    #[test]
    fn rejects_nonpositive_stride() {
        assert_eq!(
            rasterize_box(&bx(0.0, 0.0, 1.0, 1.0), size64(), 0),
            Err(Error::InvalidStride(0))
        );
        assert_eq!(
            rasterize_box(&bx(0.0, 0.0, 1.0, 1.0), size64(), -8),
            Err(Error::InvalidStride(-8))
        );
    }

    #[test]
    fn dice_examples() {
        let cfg = LossConfig::default();
        let t = rasterize_box(&bx(8.0, 8.0, 40.0, 30.0), size64(), 8).unwrap();
        assert_eq!(dice_loss(&ProbMask::from(&t), &t, &cfg).unwrap(), 0.0);

        let zeros = BinaryMask::zeros(8, 8, 8);
        let ones = ProbMask::filled(8, 8, 8, 1.0).unwrap();
        assert_eq!(dice_loss(&ones, &zeros, &cfg).unwrap(), 1.0 - 1.0 / 65.0);
        let none = ProbMask::filled(8, 8, 8, 0.0).unwrap();
        assert_eq!(dice_loss(&none, &zeros, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn dice_shape_mismatch() {
        let cfg = LossConfig::default();
        let t = BinaryMask::zeros(8, 8, 8);
        let p = ProbMask::filled(16, 4, 4, 0.5).unwrap();
        assert!(matches!(
            dice_loss(&p, &t, &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn multi_scale_examples() {
        let cfg = LossConfig::default();
        let b = bx(3.0, 7.0, 50.0, 61.0);
        let preds: Vec<ProbMask> = AUX_STRIDES
            .iter()
            .map(|&s| ProbMask::from(&rasterize_box(&b, size64(), s as i64).unwrap()))
            .collect();
        assert_eq!(multi_scale_dice(&preds, &b, size64(), &cfg).unwrap(), 0.0);

        let zero = bx(10.0, 10.0, 10.0, 10.0);
        let ones: Vec<ProbMask> = AUX_STRIDES
            .iter()
            .map(|&s| {
                let (w, h) = grid_shape(size64(), s);
                ProbMask::filled(s, w, h, 1.0).unwrap()
            })
            .collect();
        let want = ((1.0 - 1.0 / 65.0) + (1.0 - 1.0 / 17.0) + (1.0 - 1.0 / 5.0)) / 3.0;
        let got = multi_scale_dice(&ones, &zero, size64(), &cfg).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn multi_scale_stride_errors() {
        let cfg = LossConfig::default();
        let b = bx(0.0, 0.0, 10.0, 10.0);
        let mk = |s: u32| {
            let (w, h) = grid_shape(size64(), s);
            ProbMask::filled(s, w, h, 0.5).unwrap()
        };
        assert_eq!(
            multi_scale_dice(&[mk(8), mk(16)], &b, size64(), &cfg),
            Err(Error::MissingStride(32))
        );
        assert_eq!(
            multi_scale_dice(&[mk(8), mk(16), mk(16), mk(32)], &b, size64(), &cfg),
            Err(Error::DuplicateStride(16))
        );
        assert_eq!(
            multi_scale_dice(&[mk(8), mk(16), mk(32), mk(4)], &b, size64(), &cfg),
            Err(Error::UnexpectedStride(4))
        );
    }

    #[test]
    fn combine_examples() {
        let cfg = LossConfig::default();
        assert!((combine_loss(2.5, 0.4, &cfg).unwrap() - 2.9).abs() < 1e-15);
        let off = LossConfig::new(0.0, 1.0).unwrap();
        assert_eq!(combine_loss(2.5, 0.4, &off).unwrap(), 2.5);
        assert_eq!(combine_loss(2.5, 0.0, &cfg).unwrap(), 2.5);
        assert!(combine_loss(f64::NAN, 0.0, &cfg).is_err());
        assert!(combine_loss(1.0, f64::INFINITY, &cfg).is_err());
        assert!(LossConfig::new(-1.0, 1.0).is_err());
        assert!(LossConfig::new(1.0, 0.0).is_err());
    }

    #[test]
    fn grid_text_round_trip() {
        let m = rasterize_box(&bx(0.0, 0.0, 12.0, 12.0), size64(), 8).unwrap();
        let text = m.to_grid_string();
        assert!(text.starts_with("8 8 8\n10000000\n00000000\n"));
        assert_eq!(BinaryMask::from_grid_str(&text).unwrap(), m);
        assert!(BinaryMask::from_grid_str("8 2 1\n012\n").is_err());
        assert!(BinaryMask::from_grid_str("8 2 2\n01\n").is_err());
    }

    #[test]
    fn prob_mask_validation() {
        assert!(matches!(
            ProbMask::new(8, 1, 1, vec![1.5]),
            Err(Error::InvalidProbability(_))
        ));
        assert!(ProbMask::new(8, 2, 1, vec![0.5]).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..64.0f64, 0.0..64.0f64, 0.0..64.0f64, 0.0..64.0f64)
            .prop_map(|(a, b, c, d)| bx(a.min(b), c.min(d), a.max(b), c.max(d)))
    }

    proptest! {
        #[test]
        fn dice_symmetric_for_binary(a in arb_box(), b in arb_box(), s in 0.01..5.0f64) {
            let cfg = LossConfig::new(1.0, s).unwrap();
            let ma = rasterize_box(&a, size64(), 8).unwrap();
            let mb = rasterize_box(&b, size64(), 8).unwrap();
            let ab = dice_loss(&ProbMask::from(&ma), &mb, &cfg).unwrap();
            let ba = dice_loss(&ProbMask::from(&mb), &ma, &cfg).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
        }

        #[test]
        fn dice_in_unit_interval(cells in prop::collection::vec(0.0..=1.0f64, 64), t in arb_box(), s in 1e-6..10.0f64) {
            let cfg = LossConfig::new(1.0, s).unwrap();
            let target = rasterize_box(&t, size64(), 8).unwrap();
            let pred = ProbMask::new(8, 8, 8, cells).unwrap();
            let l = dice_loss(&pred, &target, &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
        }

        #[test]
        fn cell_count_tracks_area(b in arb_box(), stride in prop::sample::select(vec![8u32, 16, 32])) {
            let m = rasterize_box(&b, size64(), stride as i64).unwrap();
            let s = stride as f64;
            let expected = b.area() / (s * s);
            let perimeter = 2.0 * (b.width() + b.height());
            prop_assert!((m.count_ones() as f64 - expected).abs() <= perimeter / s + 4.0);
        }

        #[test]
        fn rasterize_monotone(b in arb_box(), grow in (0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64)) {
            let big = bx((b.x1() - grow.0).max(0.0), (b.y1() - grow.1).max(0.0), (b.x2() + grow.2).min(64.0), (b.y2() + grow.3).min(64.0));
            let small = rasterize_box(&b, size64(), 8).unwrap();
            let large = rasterize_box(&big, size64(), 8).unwrap();
            for (s, l) in small.cells().iter().zip(large.cells()) {
                prop_assert!(!s || *l);
            }
        }
    }
}
