//! Frames, masks, sequences and the patch grid that maps pixels to graph
//! vertices.

use crate::error::{Error, Result};

/// An RGB frame with channel values in `[0, 1]`, stored row-major as
/// `H x W x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invalid(format!("empty frame {height}x{width}")));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::Dimension(format!(
                "frame {height}x{width} needs {} values, got {}",
                height * width * 3,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("channel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds a frame from a per-pixel colour function. Values are clamped
    /// into `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(height > 0 && width > 0, "empty frame");
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend(f(y, x).iter().map(|c| c.clamp(0.0, 1.0)));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn rgb(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Rec. 601 luminance, row-major `H x W`.
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }
}

#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Per-pixel foreground flags, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [bool] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// Mask as `{0.0, 1.0}` reals, for use as a loss target.
    pub fn to_soft(&self) -> SoftMask {
        SoftMask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Per-pixel foreground scores in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("mask value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    // Internal constructor for values already known to lie in [0, 1].
    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
        }
    }
}

/// `value >= threshold` becomes foreground.
pub fn binarize(mask: &SoftMask, threshold: f64) -> BinaryMask {
    assert!(
        threshold > 0.0 && threshold < 1.0,
        "binarize threshold {threshold} outside (0, 1)"
    );
    BinaryMask {
        height: mask.height,
        width: mask.width,
        values: mask.values.iter().map(|&v| v >= threshold).collect(),
    }
}

/// An ordered clip with optional per-frame ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub name: String,
    frames: Vec<Frame>,
    gt_masks: Option<Vec<BinaryMask>>,
}

impl VideoSequence {
    pub fn new(name: impl Into<String>, frames: Vec<Frame>, gt_masks: Option<Vec<BinaryMask>>) -> Result<Self> {
        let name = name.into();
        if let Some(first) = frames.first() {
            if let Some((i, _)) = frames.iter().enumerate().find(|(_, f)| !f.same_dims(first)) {
                return Err(Error::Dimension(format!(
                    "{name}: frame {i} is {}x{}, expected {}x{}",
                    frames[i].height, frames[i].width, first.height, first.width
                )));
            }
        }
        if let Some(gt) = &gt_masks {
            if gt.len() != frames.len() {
                return Err(Error::Dimension(format!(
                    "{name}: {} frames but {} ground-truth masks",
                    frames.len(),
                    gt.len()
                )));
            }
            for (i, (m, f)) in gt.iter().zip(&frames).enumerate() {
                if m.height != f.height || m.width != f.width {
                    return Err(Error::Dimension(format!(
                        "{name}: mask {i} is {}x{}, frame is {}x{}",
                        m.height, m.width, f.height, f.width
                    )));
                }
            }
        }
        Ok(Self {
            name,
            frames,
            gt_masks,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn gt_masks(&self) -> Option<&[BinaryMask]> {
        self.gt_masks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(height, width)` shared by every frame.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.height, f.width))
    }
}

/// Division of a frame into non-overlapping `p_s x p_s` patches. Pixels in
/// the remainder strip (when `p_s` does not divide a dimension) are not
/// covered by any patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(patch_size: usize, height: usize, width: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::Invalid("patch size must be positive".into()));
        }
        if height < patch_size || width < patch_size {
            return Err(Error::Dimension(format!(
                "frame {height}x{width} smaller than patch size {patch_size}"
            )));
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of patch `k`.
    #[inline]
    pub fn position(&self, k: usize) -> (usize, usize) {
        (k / self.cols, k % self.cols)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn is_border(&self, k: usize) -> bool {
        let (r, c) = self.position(k);
        r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols
    }

    /// Patch owning pixel `(y, x)`; remainder pixels map to the nearest patch.
    #[inline]
    pub fn patch_of_pixel(&self, y: usize, x: usize) -> usize {
        let r = (y / self.patch_size).min(self.rows - 1);
        let c = (x / self.patch_size).min(self.cols - 1);
        self.index(r, c)
    }
}

/// Nearest-neighbour expansion of patch labels to a pixel mask.
pub fn upsample_patch_mask(patch_values: &[bool], grid: &PatchGrid, height: usize, width: usize) -> BinaryMask {
    assert_eq!(
        patch_values.len(),
        grid.len(),
        "patch label count does not match the grid"
    );
    BinaryMask::from_fn(height, width, |y, x| patch_values[grid.patch_of_pixel(y, x)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_out_of_range() {
        assert!(Frame::new(1, 1, vec![0.0, 1.2, 0.0]).is_err());
        assert!(Frame::new(1, 1, vec![0.0, 1.0]).is_err());
        assert!(Frame::new(1, 1, vec![0.0, 1.0, 0.5]).is_ok());
    }

    #[test]
    fn upsample_single_patch() {
        let grid = PatchGrid::new(8, 8, 8).unwrap();
        let m = upsample_patch_mask(&[true], &grid, 8, 8);
        assert_eq!(m.count(), 64);
    }

    #[test]
    fn upsample_two_rows() {
        let grid = PatchGrid::new(4, 8, 4).unwrap();
        assert_eq!((grid.rows, grid.cols), (2, 1));
        let m = upsample_patch_mask(&[true, false], &grid, 8, 4);
        for y in 0..8 {
            for x in 0..4 {
                assert_eq!(m.get(y, x), y < 4);
            }
        }
    }

    #[test]
    fn upsample_remainder_copies_last_column() {
        let grid = PatchGrid::new(4, 4, 10).unwrap();
        assert_eq!(grid.cols, 2);
        let m = upsample_patch_mask(&[false, true], &grid, 4, 10);
        for y in 0..4 {
            for x in 8..10 {
                assert!(m.get(y, x));
            }
            for x in 0..4 {
                assert!(!m.get(y, x));
            }
        }
    }

    #[test]
    fn binarize_examples() {
        let s = SoftMask::new(1, 3, vec![0.4, 0.5, 0.6]).unwrap();
        assert_eq!(binarize(&s, 0.5).values(), &[false, true, true]);
        assert_eq!(binarize(&SoftMask::filled(2, 2, 0.0), 0.5).count(), 0);
        assert_eq!(binarize(&SoftMask::filled(2, 2, 1.0), 0.5).count(), 4);
    }

    #[test]
    fn sequence_dims_checked() {
        let f = Frame::from_fn(40, 40, |_, _| [0.0; 3]);
        let bad = BinaryMask::filled(40, 32, false);
        assert!(matches!(
            VideoSequence::new("s", vec![f.clone()], Some(vec![bad])),
            Err(Error::Dimension(_))
        ));
        let g = Frame::from_fn(40, 41, |_, _| [0.0; 3]);
        assert!(VideoSequence::new("s", vec![f, g], None).is_err());
    }

    #[test]
    fn patch_grid_border() {
        let g = PatchGrid::new(8, 32, 32).unwrap();
        let border = (0..g.len()).filter(|&k| g.is_border(k)).count();
        assert_eq!(border, 12);
        assert!(PatchGrid::new(8, 7, 32).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn upsample_uses_only_grid_labels(
                ps in 1usize..6, gh in 1usize..5, gw in 1usize..5,
                extra_h in 0usize..5, extra_w in 0usize..5, seed in any::<u64>()
            ) {
                let h = gh * ps + extra_h.min(ps - 1);
                let w = gw * ps + extra_w.min(ps - 1);
                let grid = PatchGrid::new(ps, h, w).unwrap();
                let mut rng = crate::rng::SplitMix64::new(seed);
                let labels: Vec<bool> = (0..grid.len()).map(|_| rng.below(2) == 1).collect();
                let m = upsample_patch_mask(&labels, &grid, h, w);
                prop_assert_eq!(m.values().len(), h * w);
                let any_true = labels.iter().any(|&l| l);
                let any_false = labels.iter().any(|&l| !l);
                prop_assert!(m.values().iter().all(|&v| (v && any_true) || (!v && any_false)));
            }

            #[test]
            fn binarize_is_monotone(vals in proptest::collection::vec(0.0f64..=1.0, 1..64), t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let s = SoftMask::new(1, vals.len(), vals).unwrap();
                let a = binarize(&s, lo);
                let b = binarize(&s, hi);
                prop_assert!(a.values().iter().zip(b.values()).all(|(&x, &y)| x || !y));
            }
        }
    }
}
