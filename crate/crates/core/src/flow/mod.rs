//! Dense optical flow: a coarse-to-fine Horn–Schunck estimator, colour-wheel
//! rendering, backward warping of masks, and Middlebury `.flo` files.

mod color;
mod flo;
mod horn_schunck;
mod warp;

pub use color::{flow_to_rgb, hsv_to_rgb, MaxMagnitude};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_TAG};
pub use horn_schunck::{horn_schunck, HsConfig};
pub use warp::{bilinear_taps, warp_mask, warp_mask_backward, Taps};

use crate::error::{Error, Result};

/// Per-pixel motion in pixels/frame; `u` points right, `v` points down.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Invalid("empty flow field".into()));
        }
        if u.len() != height * width || v.len() != height * width {
            return Err(Error::Dimension(format!(
                "flow {height}x{width} needs {} values per component",
                height * width
            )));
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::Invalid("non-finite flow value".into()));
        }
        Ok(Self { height, width, u, v })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, u: f32, v: f32) -> Self {
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(&u, &v)| (u as f64).hypot(v as f64))
            .fold(0.0, f64::max)
    }
}
