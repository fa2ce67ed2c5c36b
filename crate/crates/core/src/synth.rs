//! Deterministic synthetic clips: one textured object translating at constant
//! velocity over a textured background, with exact ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::video::{BinaryMask, Frame, VideoSequence};

/// Lattice spacing of the `noise` texture, in pixels.
pub const NOISE_CELL: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    Flat { color: [f64; 3] },
    /// Squares of side `period / 2` alternating between the two colours.
    Checker { period: usize, colors: [[f64; 3]; 2] },
    /// Smooth value noise around mid-gray: bilinearly interpolated lattice of
    /// per-channel uniform values in `[-amplitude, amplitude]`.
    Noise { seed: u64, amplitude: f64 },
}

impl Texture {
    fn validate(&self) -> Result<()> {
        let in_unit = |c: &[f64; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        match self {
            Texture::Flat { color } if !in_unit(color) => Err(Error::Invalid("flat colour outside [0, 1]".into())),
            Texture::Checker { period, colors } => {
                if *period < 2 {
                    Err(Error::Invalid("checker period must be at least 2".into()))
                } else if !colors.iter().all(in_unit) {
                    Err(Error::Invalid("checker colour outside [0, 1]".into()))
                } else {
                    Ok(())
                }
            }
            Texture::Noise { amplitude, .. } if !(0.0..=0.5).contains(amplitude) => {
                Err(Error::Invalid("noise amplitude must lie in [0, 0.5]".into()))
            }
            _ => Ok(()),
        }
    }

    /// Colour at continuous texture coordinates `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        match self {
            Texture::Flat { color } => *color,
            Texture::Checker { period, colors } => {
                let half = *period as f64 / 2.0;
                let parity = ((x / half).floor() as i64 + (y / half).floor() as i64).rem_euclid(2);
                colors[parity as usize]
            }
            Texture::Noise { seed, amplitude } => {
                let gx = x / NOISE_CELL;
                let gy = y / NOISE_CELL;
                let (ix, iy) = (gx.floor() as i64, gy.floor() as i64);
                let (fx, fy) = (gx - ix as f64, gy - iy as f64);
                let mut out = [0.0; 3];
                for (c, o) in out.iter_mut().enumerate() {
                    let l = |dx: i64, dy: i64| lattice(*seed, ix + dx, iy + dy, c as u64);
                    let top = l(0, 0) * (1.0 - fx) + l(1, 0) * fx;
                    let bot = l(0, 1) * (1.0 - fx) + l(1, 1) * fx;
                    *o = 0.5 + amplitude * (top * (1.0 - fy) + bot * fy);
                }
                out
            }
        }
    }
}

// Hash of a lattice node to a value in [-1, 1).
fn lattice(seed: u64, x: i64, y: i64, channel: u64) -> f64 {
    let key = seed
        ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ channel.wrapping_mul(0x1656_67b1_9e37_79f9);
    SplitMix64::new(key).next_f64() * 2.0 - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    pub object_shape: Shape,
    /// Bounding box `[height, width]` in pixels.
    pub object_size: [usize; 2],
    /// `[vx, vy]` in pixels per frame.
    pub velocity: [f64; 2],
    /// Top-left corner `[x, y]` at frame 0. When absent the trajectory is
    /// centred in the frame.
    #[serde(default)]
    pub start: Option<[f64; 2]>,
    pub fg_texture: Texture,
    pub bg_texture: Texture,
    #[serde(default)]
    pub same_texture: bool,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    /// Top-left corner of the object at frame 0.
    pub fn start_position(&self) -> [f64; 2] {
        if let Some(s) = self.start {
            return s;
        }
        let steps = (self.n_frames.saturating_sub(1)) as f64;
        let centre = |extent: usize, size: usize, v: f64| {
            let lo = (steps * v).min(0.0);
            let hi = (steps * v).max(0.0);
            ((extent as f64 - size as f64 - (hi - lo)) / 2.0).floor() - lo
        };
        [
            centre(self.width, self.object_size[1], self.velocity[0]),
            centre(self.height, self.object_size[0], self.velocity[1]),
        ]
    }

    pub fn position(&self, t: usize) -> [f64; 2] {
        let [x0, y0] = self.start_position();
        [x0 + t as f64 * self.velocity[0], y0 + t as f64 * self.velocity[1]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 5 {
            return Err(Error::Invalid(format!(
                "n_frames = {} but at least 5 are required",
                self.n_frames
            )));
        }
        let [oh, ow] = self.object_size;
        if oh == 0 || ow == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Invalid("zero frame or object size".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Invalid("noise_sigma must be non-negative".into()));
        }
        if !self.velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("velocity must be finite".into()));
        }
        self.fg_texture.validate()?;
        self.bg_texture.validate()?;
        for t in 0..self.n_frames {
            let [x, y] = self.position(t);
            if x < 0.0 || y < 0.0 || x + ow as f64 > self.width as f64 || y + oh as f64 > self.height as f64 {
                return Err(Error::Invalid(format!(
                    "object leaves the {}x{} frame at t = {t} (top-left {x}, {y})",
                    self.height, self.width
                )));
            }
        }
        Ok(())
    }

    fn inside(&self, t: usize, px: f64, py: f64) -> bool {
        let [x0, y0] = self.position(t);
        let [oh, ow] = self.object_size;
        let (lx, ly) = (px - x0, py - y0);
        match self.object_shape {
            Shape::Rectangle => lx >= 0.0 && ly >= 0.0 && lx < ow as f64 && ly < oh as f64,
            Shape::Ellipse => {
                let (rx, ry) = (ow as f64 / 2.0, oh as f64 / 2.0);
                ((lx - rx) / rx).powi(2) + ((ly - ry) / ry).powi(2) <= 1.0
            }
        }
    }

    /// Exact object footprint at frame `t`: a pixel is foreground when its
    /// centre lies inside the placed shape.
    pub fn footprint(&self, t: usize) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |y, x| {
            self.inside(t, x as f64 + 0.5, y as f64 + 0.5)
        })
    }
}

/// Renders the clip described by `spec`. Pixel values are quantized to
/// 8 bits so that writing and re-reading the frames is lossless.
pub fn generate(spec: &SynthSpec) -> Result<VideoSequence> {
    spec.validate()?;
    let fg_tex = if spec.same_texture {
        &spec.bg_texture
    } else {
        &spec.fg_texture
    };
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut masks = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames {
        let mask = spec.footprint(t);
        let [x0, y0] = spec.position(t);
        let mut rng = SplitMix64::new(derive_seed(spec.seed, &format!("synth-noise-{t}")));
        let frame = Frame::from_fn(spec.height, spec.width, |y, x| {
            let base = if mask.get(y, x) {
                fg_tex.sample(x as f64 - x0, y as f64 - y0)
            } else {
                spec.bg_texture.sample(x as f64, y as f64)
            };
            let mut px = [0.0; 3];
            for (o, b) in px.iter_mut().zip(base) {
                let noisy = if spec.noise_sigma > 0.0 {
                    b + spec.noise_sigma * rng.gaussian()
                } else {
                    b
                };
                *o = (noisy.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            }
            px
        });
        frames.push(frame);
        masks.push(mask);
    }
    VideoSequence::new("synth", frames, Some(masks))
}

/// Erases foreground from a seeded subset of masks: in
/// `round(frame_fraction * n)` randomly chosen frames,
/// `round(erase_fraction * |fg|)` randomly chosen foreground pixels become
/// background.
pub fn corrupt_masks(masks: &[BinaryMask], erase_fraction: f64, frame_fraction: f64, seed: u64) -> Vec<BinaryMask> {
    assert!((0.0..=1.0).contains(&erase_fraction), "erase_fraction outside [0, 1]");
    assert!((0.0..=1.0).contains(&frame_fraction), "frame_fraction outside [0, 1]");
    let mut rng = SplitMix64::new(seed);
    let n_frames = (frame_fraction * masks.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..masks.len()).collect();
    partial_shuffle(&mut order, n_frames, &mut rng);
    let mut chosen = order[..n_frames].to_vec();
    chosen.sort_unstable();

    let mut out = masks.to_vec();
    for &i in &chosen {
        let mut fg: Vec<usize> = out[i]
            .values()
            .iter()
            .enumerate()
            .filter_map(|(k, &v)| v.then_some(k))
            .collect();
        let n_erase = (erase_fraction * fg.len() as f64).round() as usize;
        partial_shuffle(&mut fg, n_erase, &mut rng);
        let values = out[i].values_mut();
        for &k in &fg[..n_erase] {
            values[k] = false;
        }
    }
    out
}

// Fisher–Yates restricted to the first `k` slots.
fn partial_shuffle(items: &mut [usize], k: usize, rng: &mut SplitMix64) {
    for i in 0..k.min(items.len()) {
        let j = i + rng.below(items.len() - i);
        items.swap(i, j);
    }
}
