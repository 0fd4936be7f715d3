//! Portable float map (Middlebury ground-truth format).
//!
//! Layout: `Pf\n<w> <h>\n<scale>\n` followed by `w*h` 32-bit floats stored
//! bottom row first. A negative scale means little-endian payload. Invalid
//! pixels are stored as `+inf`.

use std::path::Path;

use super::DisparityRaster;
use crate::{Error, Result};

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DisparityRaster> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn write_pfm(raster: &DisparityRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(raster)).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_pfm(raster: &DisparityRaster) -> Vec<u8> {
    let (w, h) = (raster.width(), raster.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = raster.get(x, y);
            let v = if v.is_nan() { f32::INFINITY } else { v as f32 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) fn decode_pfm(bytes: &[u8]) -> Result<DisparityRaster> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    match magic {
        "Pf" => {}
        "PF" => {
            return Err(Error::UnsupportedFormat(
                "colour PFM (PF) files are not disparity maps".into(),
            ))
        }
        other => return Err(Error::MalformedHeader(format!("bad magic {other:?}"))),
    }
    let width: usize = parse_token(bytes, &mut pos, "width")?;
    let height: usize = parse_token(bytes, &mut pos, "height")?;
    let scale: f64 = parse_token(bytes, &mut pos, "scale")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "dimensions {width}x{height}"
        )));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("scale {scale}")));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("missing newline after scale".into())),
    }
    let payload = &bytes[pos..];
    let expected = width * height * 4;
    if payload.len() != expected {
        return Err(Error::PayloadMismatch {
            expected,
            found: payload.len(),
        });
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f64; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, x) = (i / width, i % width);
        let y = height - 1 - row;
        data[y * width + x] = if v.is_finite() { v as f64 } else { f64::NAN };
    }
    DisparityRaster::new(width, height, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("truncated header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::MalformedHeader("non-ASCII header".into()))
}

fn parse_token<T: std::str::FromStr>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<T> {
    let tok = next_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::MalformedHeader(format!("bad {what} {tok:?}")))
}
