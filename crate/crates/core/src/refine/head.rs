use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::video::{Frame, SoftMask};

pub const KERNEL: usize = 3;
pub const INPUT_CHANNELS: usize = 5;
/// `(c_in, c_out)` of the three convolutions.
pub const LAYERS: [(usize, usize); 3] = [(INPUT_CHANNELS, 16), (16, 16), (16, 1)];
pub const PARAM_COUNT: usize = layer_end(2);

const fn layer_start(l: usize) -> usize {
    if l == 0 {
        0
    } else {
        layer_end(l - 1)
    }
}

const fn layer_end(l: usize) -> usize {
    let (c_in, c_out) = LAYERS[l];
    layer_start(l) + c_out * c_in * KERNEL * KERNEL + c_out
}

/// Three-layer convolutional segmentation head.
///
/// Parameters are stored flat in layer order; each layer holds its kernel as
/// `[c_out][c_in][ky][kx]` followed by its `c_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct SegHead {
    params: Vec<f64>,
}

impl SegHead {
    pub fn zeros() -> Self {
        Self {
            params: vec![0.0; PARAM_COUNT],
        }
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != PARAM_COUNT {
            return Err(Error::Dimension(format!(
                "head needs {PARAM_COUNT} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite head parameter".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Kernel and bias slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (c_in, c_out) = LAYERS[l];
        let start = layer_start(l);
        let split = start + c_out * c_in * KERNEL * KERNEL;
        (&self.params[start..split], &self.params[split..layer_end(l)])
    }

    /// Copy with every parameter rounded to the nearest `f32`, i.e. exactly
    /// what a checkpoint stores.
    pub fn rounded_to_f32(&self) -> Self {
        Self {
            params: self.params.iter().map(|&p| p as f32 as f64).collect(),
        }
    }
}

/// Kernels uniform in `(-s, s)` with `s = sqrt(1 / (9 c_in))`, biases zero.
pub fn seghead_init(seed: u64) -> SegHead {
    let mut rng = SplitMix64::new(seed);
    let mut head = SegHead::zeros();
    for (l, &(c_in, c_out)) in LAYERS.iter().enumerate() {
        let bound = (1.0 / (KERNEL * KERNEL * c_in) as f64).sqrt();
        let start = layer_start(l);
        for p in &mut head.params[start..start + c_out * c_in * KERNEL * KERNEL] {
            *p = rng.symmetric(bound);
        }
    }
    head
}

/// Planar `channels × height × width` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// RGB planes followed by the coordinate planes `x / W` and `y / H`.
pub fn input_tensor(frame: &Frame) -> Tensor {
    let (h, w) = (frame.height(), frame.width());
    let n = h * w;
    let mut data = vec![0.0; INPUT_CHANNELS * n];
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        for ch in 0..3 {
            data[ch * n + i] = px[ch];
        }
        data[3 * n + i] = (i % w) as f64 / w as f64;
        data[4 * n + i] = (i / w) as f64 / h as f64;
    }
    Tensor {
        channels: INPUT_CHANNELS,
        height: h,
        width: w,
        data,
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * (n - 1) - i as usize
    } else {
        i as usize
    }
}

/// Reflect-pads every plane by one pixel.
fn pad(t: &Tensor) -> Vec<f64> {
    let (h, w) = (t.height, t.width);
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; t.channels * ph * pw];
    for c in 0..t.channels {
        let src = t.plane(c);
        let dst = &mut out[c * ph * pw..(c + 1) * ph * pw];
        for py in 0..ph {
            let sy = reflect(py as isize - 1, h);
            for px in 0..pw {
                dst[py * pw + px] = src[sy * w + reflect(px as isize - 1, w)];
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: folds padded gradients back onto their source pixels.
fn unpad(dpad: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![0.0; channels * h * w];
    for c in 0..channels {
        let src = &dpad[c * ph * pw..(c + 1) * ph * pw];
        let dst = &mut out[c * h * w..(c + 1) * h * w];
        for py in 0..ph {
            let sy = reflect(py as isize - 1, h);
            for px in 0..pw {
                dst[sy * w + reflect(px as isize - 1, w)] += src[py * pw + px];
            }
        }
    }
    out
}

fn conv(padded: &[f64], c_in: usize, h: usize, w: usize, kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let c_out = bias.len();
    let (pw, pn) = (w + 2, (h + 2) * (w + 2));
    let mut out = vec![0.0; c_out * h * w];
    for co in 0..c_out {
        let dst = &mut out[co * h * w..(co + 1) * h * w];
        dst.fill(bias[co]);
        for ci in 0..c_in {
            let src = &padded[ci * pn..(ci + 1) * pn];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let k = kernel[((co * c_in + ci) * KERNEL + ky) * KERNEL + kx];
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        for (d, s) in dst[y * w..(y + 1) * w].iter_mut().zip(row) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates kernel and bias gradients; returns the gradient with respect
/// to the padded input when `want_input` is set.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    padded: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    kernel: &[f64],
    dout: &[f64],
    grad: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let c_out = dout.len() / (h * w);
    let (pw, pn) = (w + 2, (h + 2) * (w + 2));
    let n_kernel = c_out * c_in * KERNEL * KERNEL;
    let (gk, gb) = grad.split_at_mut(n_kernel);
    let mut dpad = want_input.then(|| vec![0.0; c_in * pn]);
    for co in 0..c_out {
        let g = &dout[co * h * w..(co + 1) * h * w];
        gb[co] += g.iter().sum::<f64>();
        for ci in 0..c_in {
            let src = &padded[ci * pn..(ci + 1) * pn];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let idx = ((co * c_in + ci) * KERNEL + ky) * KERNEL + kx;
                    let mut acc = 0.0;
                    for y in 0..h {
                        let row = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        acc += g[y * w..(y + 1) * w].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gk[idx] += acc;
                    if let Some(dp) = dpad.as_mut() {
                        let k = kernel[idx];
                        let dst = &mut dp[ci * pn..(ci + 1) * pn];
                        for y in 0..h {
                            let row = &mut dst[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                            for (d, s) in row.iter_mut().zip(&g[y * w..(y + 1) * w]) {
                                *d += k * s;
                            }
                        }
                    }
                }
            }
        }
    }
    dpad
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Activations kept from a forward pass for [`SegHead::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    height: usize,
    width: usize,
    padded: [Vec<f64>; 3],
    pre: [Vec<f64>; 2],
    output: Vec<f64>,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn mask(&self) -> SoftMask {
        SoftMask::from_raw(self.height, self.width, self.output.clone())
    }
}

impl SegHead {
    pub fn forward_pass(&self, input: &Tensor) -> ForwardPass {
        assert_eq!(input.channels, INPUT_CHANNELS, "head expects {INPUT_CHANNELS} input planes");
        let (h, w) = (input.height, input.width);
        let relu_padded = |z: &[f64], c: usize| {
            pad(&Tensor {
                channels: c,
                height: h,
                width: w,
                data: z.iter().map(|v| v.max(0.0)).collect(),
            })
        };
        let p0 = pad(input);
        let (k, b) = self.layer(0);
        let z1 = conv(&p0, LAYERS[0].0, h, w, k, b);
        let p1 = relu_padded(&z1, LAYERS[0].1);
        let (k, b) = self.layer(1);
        let z2 = conv(&p1, LAYERS[1].0, h, w, k, b);
        let p2 = relu_padded(&z2, LAYERS[1].1);
        let (k, b) = self.layer(2);
        let output = conv(&p2, LAYERS[2].0, h, w, k, b).into_iter().map(sigmoid).collect();
        ForwardPass {
            height: h,
            width: w,
            padded: [p0, p1, p2],
            pre: [z1, z2],
            output,
        }
    }

    pub fn forward(&self, frame: &Frame) -> SoftMask {
        self.forward_pass(&input_tensor(frame)).mask()
    }

    /// Parameter gradient given `upstream = dL/d(output)`.
    pub fn backward(&self, pass: &ForwardPass, upstream: &[f64]) -> Vec<f64> {
        let (h, w) = (pass.height, pass.width);
        assert_eq!(upstream.len(), h * w);
        let mut grad = vec![0.0; PARAM_COUNT];
        let mut dz: Vec<f64> = upstream.iter().zip(&pass.output).map(|(g, s)| g * s * (1.0 - s)).collect();
        for l in (0..LAYERS.len()).rev() {
            let (c_in, _) = LAYERS[l];
            let (kernel, _) = self.layer(l);
            let dpad = conv_backward(
                &pass.padded[l],
                c_in,
                h,
                w,
                kernel,
                &dz,
                &mut grad[layer_start(l)..layer_end(l)],
                l > 0,
            );
            if let Some(dpad) = dpad {
                let mut da = unpad(&dpad, c_in, h, w);
                for (d, z) in da.iter_mut().zip(&pass.pre[l - 1]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                dz = da;
            }
        }
        grad
    }
}

const SEGH_MAGIC: &[u8; 4] = b"SEGH";
const SEGH_VERSION: u32 = 1;

/// `SEGH` checkpoint: magic, `u32` version, `u32` layer count, then
/// `(c_in, c_out, kernel)` per layer as `u32`, then the parameters in
/// [`SegHead`] order as `f32`. All little-endian.
pub fn encode_seghead(head: &SegHead) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 12 * LAYERS.len() + 4 * PARAM_COUNT);
    out.extend_from_slice(SEGH_MAGIC);
    out.extend_from_slice(&SEGH_VERSION.to_le_bytes());
    out.extend_from_slice(&(LAYERS.len() as u32).to_le_bytes());
    for (c_in, c_out) in LAYERS {
        for v in [c_in, c_out, KERNEL] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    for p in &head.params {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

pub fn decode_seghead(bytes: &[u8], path: &Path) -> Result<SegHead> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::format(path, "truncated SEGH header"))
    };
    if bytes.len() < 4 || &bytes[..4] != SEGH_MAGIC {
        return Err(Error::format(path, "bad SEGH magic"));
    }
    let version = word(1)?;
    if version != SEGH_VERSION {
        return Err(Error::format(path, format!("unsupported SEGH version {version}")));
    }
    if word(2)? as usize != LAYERS.len() {
        return Err(Error::format(path, "unexpected layer count"));
    }
    for (l, (c_in, c_out)) in LAYERS.iter().enumerate() {
        let got = [word(3 + 3 * l)?, word(4 + 3 * l)?, word(5 + 3 * l)?];
        if got != [*c_in as u32, *c_out as u32, KERNEL as u32] {
            return Err(Error::format(path, format!("layer {l} shape {got:?} does not match the head")));
        }
    }
    let body = &bytes[4 * (3 + 3 * LAYERS.len())..];
    if body.len() != 4 * PARAM_COUNT {
        return Err(Error::format(
            path,
            format!("expected {} parameter bytes, found {}", 4 * PARAM_COUNT, body.len()),
        ));
    }
    let params = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    SegHead::from_params(params).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_seghead(head: &SegHead, path: &Path) -> Result<()> {
    std::fs::write(path, encode_seghead(head)).map_err(|e| Error::io(path, e))
}

pub fn read_seghead(path: &Path) -> Result<SegHead> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_seghead(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(PARAM_COUNT, 3 * 3 * 5 * 16 + 16 + 3 * 3 * 16 * 16 + 16 + 3 * 3 * 16 + 1);
        assert_eq!(PARAM_COUNT, 3201);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = seghead_init(5);
        assert_eq!(a, seghead_init(5));
        assert_ne!(a, seghead_init(6));
        let s = (1.0f64 / 45.0).sqrt();
        let (k, b) = a.layer(0);
        assert!(k.iter().all(|v| v.abs() < s));
        assert!(k.iter().any(|v| v.abs() > 0.5 * s));
        for l in 0..3 {
            assert!(a.layer(l).1.iter().all(|&v| v == 0.0));
        }
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_head_outputs_half() {
        let f = Frame::from_fn(5, 7, |y, x| [(y * x) as f64 / 35.0, 0.2, 0.9]);
        let m = SegHead::zeros().forward(&f);
        assert_eq!((m.height(), m.width()), (5, 7));
        assert!(m.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn pad_and_unpad_are_adjoint() {
        let mut r = SplitMix64::new(3);
        let t = Tensor {
            channels: 2,
            height: 4,
            width: 3,
            data: (0..24).map(|_| r.symmetric(1.0)).collect(),
        };
        let p = pad(&t);
        let g: Vec<f64> = (0..p.len()).map(|_| r.symmetric(1.0)).collect();
        let lhs: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = t.data.iter().zip(unpad(&g, 2, 4, 3)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut r = SplitMix64::new(8);
        let (h, w, c_in) = (4, 5, 2);
        let t = Tensor {
            channels: c_in,
            height: h,
            width: w,
            data: (0..c_in * h * w).map(|_| r.symmetric(1.0)).collect(),
        };
        let k: Vec<f64> = (0..c_in * 9).map(|_| r.symmetric(1.0)).collect();
        let out = conv(&pad(&t), c_in, h, w, &k, &[0.25]);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.25;
                for ci in 0..c_in {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let sy = reflect(y as isize + dy as isize - 1, h);
                            let sx = reflect(x as isize + dx as isize - 1, w);
                            s += k[(ci * 3 + dy) * 3 + dx] * t.plane(ci)[sy * w + sx];
                        }
                    }
                }
                assert!((out[y * w + x] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let head = seghead_init(1);
        let f = Frame::from_fn(6, 6, |y, x| [y as f64 / 6.0, x as f64 / 6.0, 0.5]);
        let pass = head.forward_pass(&input_tensor(&f));
        assert!(head.backward(&pass, &[0.0; 36]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let head = seghead_init(9).rounded_to_f32();
        let bytes = encode_seghead(&head);
        assert_eq!(bytes.len(), 12 + 36 + 4 * PARAM_COUNT);
        let back = decode_seghead(&bytes, Path::new("h")).unwrap();
        assert_eq!(back, head);
        assert_eq!(encode_seghead(&back), bytes);
    }

    #[test]
    fn checkpoint_errors() {
        let bytes = encode_seghead(&SegHead::zeros());
        let p = Path::new("h");
        assert!(decode_seghead(&bytes[..bytes.len() - 1], p).is_err());
        assert!(decode_seghead(&bytes[..20], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_seghead(&bad, p).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_seghead(&bad, p).is_err());
        let mut bad = bytes;
        bad[12] = 6;
        assert!(decode_seghead(&bad, p).is_err());
    }
}
