//! Binary PPM (P6) / PGM (P5) reading and writing, and the on-disk sequence
//! layout `<seq>/frames/%05d.ppm`, `<seq>/gt/%05d.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::video::{BinaryMask, Frame, SoftMask, VideoSequence};

/// Decoded 8-bit netpbm raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

pub fn encode(magic: &[u8; 2], width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + 20);
    out.extend_from_slice(magic);
    out.extend_from_slice(format!("\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(data);
    out
}

/// Parses a P5 or P6 image with maxval 255. Comments in the header are
/// tolerated.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Raster> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::format(path, "not a binary PPM/PGM (expected P6 or P5 magic)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "header value out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(path, format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(path, "truncated header")),
    }
    let need = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::format(
            path,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    Ok(Raster {
        width,
        height,
        channels,
        data: payload[..need].to_vec(),
    })
}

fn read_raster(path: &Path, channels: usize) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let r = decode(&bytes, path)?;
    if r.channels != channels {
        let want = if channels == 3 { "P6" } else { "P5" };
        return Err(Error::format(path, format!("expected {want} image")));
    }
    Ok(r)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[inline]
fn quantize(v: f64) -> u8 {
    // round half up
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn frame_to_bytes(frame: &Frame) -> Vec<u8> {
    let data: Vec<u8> = frame.pixels().iter().map(|&v| quantize(v)).collect();
    encode(b"P6", frame.width(), frame.height(), &data)
}

pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &frame_to_bytes(frame))
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let r = read_raster(path.as_ref(), 3)?;
    let pixels = r.data.iter().map(|&b| b as f64 / 255.0).collect();
    Frame::new(r.height, r.width, pixels)
}

/// Masks that can be stored as an 8-bit PGM.
pub trait GrayImage {
    fn dims(&self) -> (usize, usize);
    fn gray_bytes(&self) -> Vec<u8>;
}

impl GrayImage for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn gray_bytes(&self) -> Vec<u8> {
        self.values().iter().map(|&v| if v { 255 } else { 0 }).collect()
    }
}

impl GrayImage for SoftMask {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn gray_bytes(&self) -> Vec<u8> {
        self.values().iter().map(|&v| quantize(v)).collect()
    }
}

pub fn mask_to_bytes<M: GrayImage>(mask: &M) -> Vec<u8> {
    let (h, w) = mask.dims();
    encode(b"P5", w, h, &mask.gray_bytes())
}

/// Writes a mask as P5. Binary masks store 0/255; soft masks store
/// `round(v * 255)` with halves rounded up.
pub fn save_mask<M: GrayImage>(mask: &M, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &mask_to_bytes(mask))
}

/// Reads a P5 mask; bytes above 127 are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let r = read_raster(path.as_ref(), 1)?;
    BinaryMask::new(r.height, r.width, r.data.iter().map(|&b| b > 127).collect())
}

/// Sorted list of files in `dir` with the given extension.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every `.pgm` mask in `dir`, ordered by file name.
pub fn load_mask_dir(dir: impl AsRef<Path>) -> Result<Vec<BinaryMask>> {
    list_files(dir.as_ref(), "pgm")?.iter().map(load_mask).collect()
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:05}.ppm")
}

pub fn mask_file_name(index: usize) -> String {
    format!("{index:05}.pgm")
}

/// Loads `<dir>/frames/*.ppm` and, when `with_gt`, the matching
/// `<dir>/gt/*.pgm`.
pub fn load_sequence(dir: impl AsRef<Path>, with_gt: bool) -> Result<VideoSequence> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "sequence directory not found"),
        ));
    }
    let frame_paths = list_files(&dir.join("frames"), "ppm")?;
    let frames = frame_paths.iter().map(load_frame).collect::<Result<Vec<_>>>()?;
    let gt = if with_gt {
        let gt_dir = dir.join("gt");
        let masks = frame_paths
            .iter()
            .map(|p| {
                let stem = p.file_stem().expect("listed files have names");
                load_mask(gt_dir.join(stem).with_extension("pgm"))
            })
            .collect::<Result<Vec<_>>>()?;
        Some(masks)
    } else {
        None
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoSequence::new(name, frames, gt)
}

/// Writes a sequence in the directory layout read by [`load_sequence`].
pub fn save_sequence(seq: &VideoSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    for (i, f) in seq.frames().iter().enumerate() {
        save_frame(f, frames_dir.join(frame_file_name(i)))?;
    }
    if let Some(gt) = seq.gt_masks() {
        let gt_dir = dir.join("gt");
        fs::create_dir_all(&gt_dir).map_err(|e| Error::io(&gt_dir, e))?;
        for (i, m) in gt.iter().enumerate() {
            save_mask(m, gt_dir.join(mask_file_name(i)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_quantization() {
        let s = SoftMask::new(1, 3, vec![0.5, 0.0, 1.0]).unwrap();
        assert_eq!(s.gray_bytes(), vec![128, 0, 255]);
    }

    #[test]
    fn header_layout() {
        let m = BinaryMask::filled(2, 3, true);
        let bytes = mask_to_bytes(&m);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(bytes.len(), 11 + 6);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let p = Path::new("x");
        assert!(matches!(decode(b"P3\n1 1\n255\n\0\0\0", p), Err(Error::Format { .. })));
        assert!(matches!(decode(b"P6\n2 2\n255\n\0\0\0", p), Err(Error::Format { .. })));
        assert!(matches!(decode(b"P5\n1 1\n65535\n\0\0", p), Err(Error::Format { .. })));
    }

    #[test]
    fn header_comments_are_skipped() {
        let r = decode(b"P5\n# made by hand\n2 1\n255\n\x00\xff", Path::new("x")).unwrap();
        assert_eq!((r.width, r.height, r.data.clone()), (2, 1, vec![0, 255]));
    }

    #[test]
    fn mask_threshold_at_127() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        fs::write(&p, encode(b"P5", 4, 1, &[0, 127, 128, 255])).unwrap();
        assert_eq!(load_mask(&p).unwrap().values(), &[false, false, true, true]);
    }

    #[test]
    fn missing_sequence_dir() {
        assert!(matches!(load_sequence("/nonexistent/seq", false), Err(Error::Io { .. })));
    }

    #[test]
    fn sequence_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..3)
            .map(|t| Frame::from_fn(6, 5, |y, x| [(x + t) as f64 / 10.0, y as f64 / 10.0, 0.5]))
            .collect();
        let gt: Vec<BinaryMask> = (0..3).map(|t| BinaryMask::from_fn(6, 5, |y, _| y > t)).collect();
        let seq = VideoSequence::new("s", frames, Some(gt)).unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path(), true).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.gt_masks(), seq.gt_masks());
        for (a, b) in back.frames().iter().zip(seq.frames()) {
            assert_eq!(frame_to_bytes(a), frame_to_bytes(b));
        }
        // a 6x4 mask next to 6x5 frames
        save_mask(&BinaryMask::filled(6, 4, true), dir.path().join("gt").join(mask_file_name(1))).unwrap();
        assert!(matches!(load_sequence(dir.path(), true), Err(Error::Dimension(_))));
    }
}
