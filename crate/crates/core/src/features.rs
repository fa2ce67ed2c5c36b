//! Handcrafted patch descriptors used as the patch embedding for both a frame
//! and its flow rendering.
//!
//! Each `p_s x p_s` patch yields a 12-vector:
//!
//! | index | component |
//! |-------|-----------|
//! | 0..3  | mean R, G, B |
//! | 3..6  | standard deviation R, G, B |
//! | 6..10 | luminance-gradient orientation histogram (0°, 45°, 90°, 135°), magnitude weighted, sums to 1 (all zero on flat patches) |
//! | 10    | mean gradient magnitude |
//! | 11    | luminance range (max − min) |
//!
//! Gradients are central differences on luminance with reflection at the
//! patch boundary, so a descriptor only depends on the pixels of its patch.

use std::path::Path;

use crate::error::{Error, Result};
use crate::video::{luma, Frame, PatchGrid};

pub const DESCRIPTOR_LEN: usize = 12;

/// Mean luminance gradient magnitude below which a patch counts as flat and
/// its orientation histogram is left at zero.
pub const FLAT_GRADIENT: f64 = 0.01;

/// Patch descriptors on a `rows x cols` grid, `dim` values per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::Invalid(format!("empty feature grid {rows}x{cols}x{dim}")));
        }
        if data.len() != rows * cols * dim {
            return Err(Error::Dimension(format!(
                "feature grid {rows}x{cols}x{dim} needs {} values, got {}",
                rows * cols * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite feature value".into()));
        }
        Ok(Self { rows, cols, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Descriptor of patch `k` (row-major patch index).
    #[inline]
    pub fn descriptor(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Computes the 12-d descriptor of every full patch of `image`.
pub fn featurize(image: &Frame, patch_size: usize) -> Result<FeatureGrid> {
    let grid = PatchGrid::new(patch_size, image.height(), image.width())?;
    let mut data = Vec::with_capacity(grid.len() * DESCRIPTOR_LEN);
    for k in 0..grid.len() {
        let (r, c) = grid.position(k);
        data.extend(describe_patch(image, r * patch_size, c * patch_size, patch_size).map(|v| v as f32));
    }
    FeatureGrid::new(grid.rows, grid.cols, DESCRIPTOR_LEN, data)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Descriptor of the patch with top-left pixel `(y0, x0)`.
pub fn describe_patch(image: &Frame, y0: usize, x0: usize, p: usize) -> [f64; DESCRIPTOR_LEN] {
    let n = (p * p) as f64;
    let mut lum = Vec::with_capacity(p * p);
    let mut sum = [0.0; 3];
    for y in y0..y0 + p {
        for x in x0..x0 + p {
            let px = image.rgb(y, x);
            for ch in 0..3 {
                sum[ch] += px[ch];
            }
            lum.push(luma(px[0], px[1], px[2]));
        }
    }
    let mean = sum.map(|s| s / n);
    let mut var = [0.0; 3];
    for y in y0..y0 + p {
        for x in x0..x0 + p {
            let px = image.rgb(y, x);
            for ch in 0..3 {
                var[ch] += (px[ch] - mean[ch]).powi(2);
            }
        }
    }
    let std = var.map(|v| (v / n).sqrt());

    let at = |x: isize, y: isize| lum[reflect(y, p) * p + reflect(x, p)];
    let mut hist = [0.0; 4];
    let mut mag_sum = 0.0;
    for y in 0..p as isize {
        for x in 0..p as isize {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx).to_degrees();
            if theta < 0.0 {
                theta += 180.0;
            }
            let bin = ((theta / 45.0).round() as usize) % 4;
            hist[bin] += mag;
            mag_sum += mag;
        }
    }
    if mag_sum / n >= FLAT_GRADIENT {
        for h in hist.iter_mut() {
            *h /= mag_sum;
        }
    } else {
        hist = [0.0; 4];
    }
    let (lo, hi) = lum
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    [
        mean[0],
        mean[1],
        mean[2],
        std[0],
        std[1],
        std[2],
        hist[0],
        hist[1],
        hist[2],
        hist[3],
        mag_sum / n,
        hi - lo,
    ]
}

const FGRD_MAGIC: &[u8; 4] = b"FGRD";

/// `FGRD` container: magic, `u32` rows, cols, dim, then `f32` values, all
/// little-endian.
pub fn encode_fgrd(grid: &FeatureGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * grid.data.len());
    out.extend_from_slice(FGRD_MAGIC);
    for v in [grid.rows, grid.cols, grid.dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &grid.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_fgrd(bytes: &[u8], path: &Path) -> Result<FeatureGrid> {
    if bytes.len() < 16 {
        return Err(Error::format(path, "truncated FGRD header"));
    }
    if &bytes[..4] != FGRD_MAGIC {
        return Err(Error::format(path, "bad FGRD magic"));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols, dim) = (u(4), u(8), u(12));
    let need = 16 + 4 * rows * cols * dim;
    if bytes.len() != need {
        return Err(Error::format(
            path,
            format!("FGRD payload is {} bytes, expected {need}", bytes.len()),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureGrid::new(rows, cols, dim, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_fgrd(grid: &FeatureGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_fgrd(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_fgrd(path: impl AsRef<Path>) -> Result<FeatureGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fgrd(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn uniform_gray_patch() {
        let f = Frame::from_fn(8, 8, |_, _| [0.5; 3]);
        let g = featurize(&f, 8).unwrap();
        let want = [0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(g.descriptor(0), &want.map(|v| v as f32));
    }

    #[test]
    fn vertical_step_edge() {
        let f = Frame::from_fn(8, 8, |_, x| if x < 4 { [0.0; 3] } else { [1.0; 3] });
        let d = describe_patch(&f, 0, 0, 8);
        assert!((d[6] - 1.0).abs() < 1e-12, "{d:?}");
        assert_eq!(&d[7..10], &[0.0, 0.0, 0.0]);
        assert!((d[11] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn faint_ramp_counts_as_flat() {
        let f = Frame::from_fn(8, 8, |_, x| [0.5 + 0.001 * x as f64; 3]);
        let d = describe_patch(&f, 0, 0, 8);
        assert_eq!(&d[6..10], &[0.0; 4]);
        assert!(d[10] > 0.0);
    }

    #[test]
    fn checker_patches_match() {
        // period 4 checker: patches at x=0 and x=8 see identical pixels
        let f = Frame::from_fn(8, 16, |y, x| {
            if (x / 2 + y / 2) % 2 == 0 {
                [0.9, 0.2, 0.1]
            } else {
                [0.1, 0.3, 0.8]
            }
        });
        let g = featurize(&f, 8).unwrap();
        assert_eq!(g.descriptor(0), g.descriptor(1));
        let direct = describe_patch(&f, 0, 8, 8).map(|v| v as f32);
        assert_eq!(g.descriptor(1), &direct);
    }

    #[test]
    fn too_small_image() {
        assert!(featurize(&Frame::from_fn(4, 9, |_, _| [0.0; 3]), 8).is_err());
    }

    #[test]
    fn extra_rows_outside_patches_are_ignored() {
        let mut r = SplitMix64::new(4);
        let base: Vec<f64> = (0..20 * 27 * 3).map(|_| r.next_f64()).collect();
        let big = Frame::new(20, 27, base.clone()).unwrap();
        let small = Frame::from_fn(16, 24, |y, x| big.rgb(y, x));
        assert_eq!(featurize(&big, 8).unwrap(), featurize(&small, 8).unwrap());
    }

    #[test]
    fn fgrd_errors() {
        let g = FeatureGrid::new(1, 2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = encode_fgrd(&g);
        assert_eq!(decode_fgrd(&b, Path::new("x")).unwrap(), g);
        assert!(decode_fgrd(&b[..b.len() - 2], Path::new("x")).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_fgrd(&bad, Path::new("x")).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn descriptor_bounds(seed in any::<u64>(), p in 1usize..9) {
                let mut r = SplitMix64::new(seed);
                let f = Frame::new(p, p, (0..p * p * 3).map(|_| r.next_f64()).collect()).unwrap();
                let d = describe_patch(&f, 0, 0, p);
                prop_assert!(d[..3].iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(d[3..6].iter().all(|v| (0.0..=0.5).contains(v)));
                prop_assert!(d[6..10].iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
                let hs: f64 = d[6..10].iter().sum();
                prop_assert!(hs == 0.0 || (hs - 1.0).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&d[11]));
            }

            #[test]
            fn colour_stats_ignore_pixel_order(seed in any::<u64>()) {
                let p = 6;
                let mut r = SplitMix64::new(seed);
                let px: Vec<[f64; 3]> = (0..p * p).map(|_| [r.next_f64(), r.next_f64(), r.next_f64()]).collect();
                let mut perm: Vec<usize> = (0..p * p).collect();
                for i in (1..perm.len()).rev() {
                    perm.swap(i, r.below(i + 1));
                }
                let a = Frame::from_fn(p, p, |y, x| px[y * p + x]);
                let b = Frame::from_fn(p, p, |y, x| px[perm[y * p + x]]);
                let (da, db) = (describe_patch(&a, 0, 0, p), describe_patch(&b, 0, 0, p));
                for i in (0..6).chain([11]) {
                    prop_assert!((da[i] - db[i]).abs() < 1e-12);
                }
            }
        }
    }
}
