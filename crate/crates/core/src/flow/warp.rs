use super::FlowField;
use crate::error::{Error, Result};
use crate::video::SoftMask;

/// The four source pixels and weights of a clamped bilinear sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl Taps {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        let [i00, i01, i10, i11] = self.index;
        let [w00, w01, w10, w11] = self.weight;
        // Row-wise form keeps zero fractions exact.
        let top = values[i00] * w00 + values[i01] * w01;
        let bot = values[i10] * w10 + values[i11] * w11;
        top + bot
    }
}

/// Bilinear taps at `(sx, sy)` with the coordinates clamped into the image.
#[inline]
pub fn bilinear_taps(width: usize, height: usize, sx: f64, sy: f64) -> Taps {
    let sx = sx.clamp(0.0, (width - 1) as f64);
    let sy = sy.clamp(0.0, (height - 1) as f64);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    Taps {
        index: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        weight: [
            (1.0 - fy) * (1.0 - fx),
            (1.0 - fy) * fx,
            fy * (1.0 - fx),
            fy * fx,
        ],
    }
}

/// Clamped bilinear sample of a row-major `height x width` grid.
#[inline]
pub(crate) fn sample(values: &[f64], width: usize, height: usize, sx: f64, sy: f64) -> f64 {
    let sx = sx.clamp(0.0, (width - 1) as f64);
    let sy = sy.clamp(0.0, (height - 1) as f64);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let top = values[y0 * width + x0] * (1.0 - fx) + values[y0 * width + x1] * fx;
    let bot = values[y1 * width + x0] * (1.0 - fx) + values[y1 * width + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

fn check_dims(mask_h: usize, mask_w: usize, flow: &FlowField) -> Result<()> {
    if mask_h != flow.height() || mask_w != flow.width() {
        return Err(Error::Dimension(format!(
            "mask {mask_h}x{mask_w} vs flow {}x{}",
            flow.height(),
            flow.width()
        )));
    }
    Ok(())
}

fn taps_at(flow: &FlowField, y: usize, x: usize) -> Taps {
    let (u, v) = flow.at(y, x);
    bilinear_taps(flow.width(), flow.height(), x as f64 + u as f64, y as f64 + v as f64)
}

/// Backward warp: `out(x, y) = mask(x + u(x, y), y + v(x, y))`, sampled
/// bilinearly with coordinates clamped to the image. `flow_bwd` must point
/// from the target frame back to the frame `mask` belongs to.
pub fn warp_mask(mask: &SoftMask, flow_bwd: &FlowField) -> Result<SoftMask> {
    let (h, w) = (mask.height(), mask.width());
    check_dims(h, w, flow_bwd)?;
    let src = mask.values();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let taps = taps_at(flow_bwd, y, x);
            let lo = taps.index.iter().map(|&i| src[i]).fold(f64::INFINITY, f64::min);
            let hi = taps.index.iter().map(|&i| src[i]).fold(f64::NEG_INFINITY, f64::max);
            // rounding must not leave the hull of the taps
            out.push(taps.apply(src).clamp(lo, hi));
        }
    }
    Ok(SoftMask::from_raw(h, w, out))
}

/// Adjoint of [`warp_mask`] with respect to the mask values: scatters
/// `upstream` (gradient w.r.t. the warped output) back onto the source grid.
pub fn warp_mask_backward(upstream: &[f64], flow_bwd: &FlowField) -> Vec<f64> {
    let (h, w) = (flow_bwd.height(), flow_bwd.width());
    assert_eq!(upstream.len(), h * w);
    let mut grad = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let g = upstream[y * w + x];
            if g == 0.0 {
                continue;
            }
            let taps = taps_at(flow_bwd, y, x);
            for (i, wt) in taps.index.iter().zip(taps.weight) {
                grad[*i] += g * wt;
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_mask(h: usize, w: usize, seed: u64) -> SoftMask {
        let mut r = SplitMix64::new(seed);
        SoftMask::new(h, w, (0..h * w).map(|_| r.next_f64()).collect()).unwrap()
    }

    #[test]
    fn zero_flow_is_bit_exact_identity() {
        let m = random_mask(9, 13, 1);
        let out = warp_mask(&m, &FlowField::zeros(9, 13)).unwrap();
        let bits = |s: &SoftMask| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out), bits(&m));
    }

    #[test]
    fn unit_shift_moves_edge_left() {
        let c = 6;
        let m = SoftMask::new(4, 12, (0..48).map(|i| if i % 12 >= c { 1.0 } else { 0.0 }).collect()).unwrap();
        let out = warp_mask(&m, &FlowField::constant(4, 12, 1.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..12 {
                let want = if x >= c - 1 { 1.0 } else { 0.0 };
                assert_eq!(out.get(y, x), want, "({y},{x})");
            }
        }
    }

    #[test]
    fn outside_flow_clamps_to_border() {
        let m = random_mask(5, 7, 2);
        let out = warp_mask(&m, &FlowField::constant(5, 7, 100.0, -100.0)).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(out.get(y, x), m.get(0, 6));
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(warp_mask(&random_mask(3, 3, 0), &FlowField::zeros(3, 4)).is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        let (h, w) = (6, 8);
        let mut r = SplitMix64::new(5);
        let u: Vec<f32> = (0..h * w).map(|_| (r.next_f64() * 6.0 - 3.0) as f32).collect();
        let v: Vec<f32> = (0..h * w).map(|_| (r.next_f64() * 6.0 - 3.0) as f32).collect();
        let flow = FlowField::new(h, w, u, v).unwrap();
        let a = random_mask(h, w, 6);
        let g: Vec<f64> = (0..h * w).map(|_| r.next_f64() - 0.5).collect();
        let lhs: f64 = warp_mask(&a, &flow).unwrap().values().iter().zip(&g).map(|(x, y)| x * y).sum();
        let rhs: f64 = warp_mask_backward(&g, &flow).iter().zip(a.values()).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_within_input_range(seed in any::<u64>(), h in 1usize..10, w in 1usize..10) {
                let m = random_mask(h, w, seed);
                let mut r = SplitMix64::new(seed ^ 1);
                let u: Vec<f32> = (0..h * w).map(|_| (r.next_f64() * 20.0 - 10.0) as f32).collect();
                let v: Vec<f32> = (0..h * w).map(|_| (r.next_f64() * 20.0 - 10.0) as f32).collect();
                let out = warp_mask(&m, &FlowField::new(h, w, u, v).unwrap()).unwrap();
                let lo = m.values().iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = m.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.values().iter().all(|&x| x >= lo && x <= hi));
            }
        }
    }
}
