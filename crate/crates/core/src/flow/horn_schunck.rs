//! Coarse-to-fine Horn–Schunck with incremental warping.
//!
//! At each pyramid level the second image is warped towards the first by the
//! current estimate, the brightness-constancy term is linearized around that
//! estimate and the total flow is refined by Jacobi sweeps on the
//! Euler–Lagrange equations of
//!
//! ```text
//! E(u, v) = sum (Ix u + Iy v + It)^2 + lambda (|grad u|^2 + |grad v|^2)
//! ```

use serde::{Deserialize, Serialize};

use super::warp::sample;
use super::FlowField;
use crate::error::{Error, Result};
use crate::video::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HsConfig {
    /// Smoothness weight, in 0–1 intensity units.
    pub smoothness: f64,
    /// Jacobi sweeps per warp.
    pub n_iters: usize,
    pub n_levels: usize,
    pub warps_per_level: usize,
}

impl Default for HsConfig {
    fn default() -> Self {
        Self {
            smoothness: 0.05,
            n_iters: 100,
            n_levels: 3,
            warps_per_level: 2,
        }
    }
}

impl HsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) || self.n_iters == 0 || self.n_levels == 0 || self.warps_per_level == 0 {
            return Err(Error::Invalid(format!("Horn-Schunck settings must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Gray {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Gray {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    /// Half-resolution image: bilinear sample at the centre of each 2x2 block.
    fn downsample(&self) -> Gray {
        let w = self.w.div_ceil(2);
        let h = self.h.div_ceil(2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(sample(&self.data, self.w, self.h, 2.0 * x as f64 + 0.5, 2.0 * y as f64 + 0.5));
            }
        }
        Gray { w, h, data }
    }
}

/// Bilinear upsampling of a flow component from `cw x ch` to `w x h`,
/// multiplying the sampled vectors by `gain`.
fn upsample(comp: &[f64], cw: usize, ch: usize, w: usize, h: usize, gain: f64) -> Vec<f64> {
    let sx = cw as f64 / w as f64;
    let sy = ch as f64 / h as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let cx = (x as f64 + 0.5) * sx - 0.5;
            let cy = (y as f64 + 0.5) * sy - 0.5;
            out.push(gain * sample(comp, cw, ch, cx, cy));
        }
    }
    out
}

/// Flow from `f1` to `f2`: `f2(x + u, y + v) ~ f1(x, y)`.
pub fn horn_schunck(f1: &Frame, f2: &Frame, cfg: &HsConfig) -> Result<FlowField> {
    if !f1.same_dims(f2) {
        return Err(Error::Dimension(format!(
            "frames {}x{} and {}x{}",
            f1.height(),
            f1.width(),
            f2.height(),
            f2.width()
        )));
    }
    cfg.validate()?;
    let (h, w) = (f1.height(), f1.width());
    let mut pyr1 = vec![Gray {
        w,
        h,
        data: f1.luminance(),
    }];
    let mut pyr2 = vec![Gray {
        w,
        h,
        data: f2.luminance(),
    }];
    while pyr1.len() < cfg.n_levels {
        let last = pyr1.last().unwrap();
        if last.w < 8 || last.h < 8 {
            break;
        }
        let (d1, d2) = (last.downsample(), pyr2.last().unwrap().downsample());
        pyr1.push(d1);
        pyr2.push(d2);
    }

    let coarsest = pyr1.last().unwrap();
    let (mut cw, mut ch) = (coarsest.w, coarsest.h);
    let mut u = vec![0.0; cw * ch];
    let mut v = vec![0.0; cw * ch];
    for level in (0..pyr1.len()).rev() {
        let (i1, i2) = (&pyr1[level], &pyr2[level]);
        if i1.w != cw || i1.h != ch {
            u = upsample(&u, cw, ch, i1.w, i1.h, i1.w as f64 / cw as f64);
            v = upsample(&v, cw, ch, i1.w, i1.h, i1.h as f64 / ch as f64);
            cw = i1.w;
            ch = i1.h;
        }
        for _ in 0..cfg.warps_per_level {
            refine_level(i1, i2, &mut u, &mut v, cfg);
        }
    }
    FlowField::new(
        h,
        w,
        u.into_iter().map(|x| x as f32).collect(),
        v.into_iter().map(|x| x as f32).collect(),
    )
}

fn refine_level(i1: &Gray, i2: &Gray, u: &mut Vec<f64>, v: &mut Vec<f64>, cfg: &HsConfig) {
    let (w, h) = (i1.w, i1.h);
    let n = w * h;
    let warped = Gray {
        w,
        h,
        data: (0..n)
            .map(|k| {
                let (x, y) = ((k % w) as f64, (k / w) as f64);
                sample(&i2.data, w, h, x + u[k], y + v[k])
            })
            .collect(),
    };
    let avg = Gray {
        w,
        h,
        data: i1.data.iter().zip(&warped.data).map(|(a, b)| 0.5 * (a + b)).collect(),
    };
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut c = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let k = y as usize * w + x as usize;
            ix[k] = 0.5 * (avg.at(x + 1, y) - avg.at(x - 1, y));
            iy[k] = 0.5 * (avg.at(x, y + 1) - avg.at(x, y - 1));
            // data term linearized around the current estimate (u0, v0):
            // Ix (u - u0) + Iy (v - v0) + It = Ix u + Iy v + c
            c[k] = warped.data[k] - i1.data[k] - ix[k] * u[k] - iy[k] * v[k];
        }
    }
    let reg = 4.0 * cfg.smoothness;
    let mut nu = vec![0.0; n];
    let mut nv = vec![0.0; n];
    for _ in 0..cfg.n_iters {
        for y in 0..h {
            for x in 0..w {
                let k = y * w + x;
                let l = if x > 0 { k - 1 } else { k };
                let r = if x + 1 < w { k + 1 } else { k };
                let t = if y > 0 { k - w } else { k };
                let b = if y + 1 < h { k + w } else { k };
                let ub = 0.25 * (u[l] + u[r] + u[t] + u[b]);
                let vb = 0.25 * (v[l] + v[r] + v[t] + v[b]);
                let num = ix[k] * ub + iy[k] * vb + c[k];
                let den = reg + ix[k] * ix[k] + iy[k] * iy[k];
                nu[k] = ub - ix[k] * num / den;
                nv[k] = vb - iy[k] * num / den;
            }
        }
        std::mem::swap(u, &mut nu);
        std::mem::swap(v, &mut nv);
    }
}
