//! Middlebury `.flo`: `f32` tag 202021.25, `i32` width and height, then
//! row-major interleaved `(u, v)` pairs, all little-endian.

use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

pub const FLO_TAG: f32 = 202021.25;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let n = flow.height() * flow.width();
    let mut out = Vec::with_capacity(12 + 8 * n);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let word = |i: usize| -> Option<[u8; 4]> { bytes.get(4 * i..4 * i + 4).map(|b| b.try_into().unwrap()) };
    let header = (word(0), word(1), word(2));
    let (Some(tag), Some(w), Some(h)) = header else {
        return Err(Error::format(path, "truncated .flo header"));
    };
    if f32::from_le_bytes(tag) != FLO_TAG {
        return Err(Error::format(path, "bad .flo magic"));
    }
    let (w, h) = (i32::from_le_bytes(w), i32::from_le_bytes(h));
    if w <= 0 || h <= 0 {
        return Err(Error::format(path, format!("invalid .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + 8 * w * h;
    if bytes.len() < need {
        return Err(Error::format(
            path,
            format!("truncated .flo payload: {} of {need} bytes", bytes.len()),
        ));
    }
    if bytes.len() > need {
        return Err(Error::format(
            path,
            format!(".flo size mismatch: {} bytes for a {w}x{h} field", bytes.len()),
        ));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for k in 0..w * h {
        u.push(f32::from_le_bytes(word(3 + 2 * k).unwrap()));
        v.push(f32::from_le_bytes(word(4 + 2 * k).unwrap()));
    }
    FlowField::new(h, w, u, v).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, path)
}
