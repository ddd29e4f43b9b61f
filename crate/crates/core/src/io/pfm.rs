use std::fs;
use std::path::Path;

use crate::error::{Result, StereoError};
use crate::grid::ScalarField;

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> StereoError {
    StereoError::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

/// Reads a single-channel PFM. Infinite samples (the missing-data
/// convention) become NaN.
pub fn read_pfm(path: &Path) -> Result<ScalarField> {
    let bytes = fs::read(path)?;
    decode_pfm(&bytes, path)
}

/// Writes a single-channel little-endian PFM; NaN is stored as `+inf`.
pub fn write_pfm(field: &ScalarField, path: &Path) -> Result<()> {
    super::atomic_write_bytes(path, &encode_pfm(field))
}

pub fn encode_pfm(field: &ScalarField) -> Vec<u8> {
    let (w, h) = (field.width(), field.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for &v in field.row(y) {
            let s = if v.is_nan() { f32::INFINITY } else { v as f32 };
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

/// Token scanner over the ASCII header that remembers byte offsets.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Header<'a> {
    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(
                self.path,
                start,
                format!("unexpected end of header, expected {what}"),
            ));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| format_err(self.path, start, format!("non-ASCII {what}")))?;
        Ok((start, text))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<(usize, T)> {
        let (at, text) = self.token(what)?;
        text.parse()
            .map(|v| (at, v))
            .map_err(|_| format_err(self.path, at, format!("bad {what} {text:?}")))
    }
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<ScalarField> {
    let mut hdr = Header { bytes, pos: 0, path };
    let (_, magic) = hdr.token("magic")?;
    match magic {
        "Pf" => {}
        "PF" => {
            return Err(format_err(
                path,
                0,
                "3-channel PFM (\"PF\") is not supported; expected single-channel \"Pf\"",
            ))
        }
        other => return Err(format_err(path, 0, format!("not a PFM file (magic {other:?})"))),
    }
    let (wat, width) = hdr.number::<usize>("width")?;
    let (hat, height) = hdr.number::<usize>("height")?;
    if width == 0 {
        return Err(format_err(path, wat, "width is zero"));
    }
    if height == 0 {
        return Err(format_err(path, hat, "height is zero"));
    }
    let (sat, scale) = hdr.number::<f64>("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(
            path,
            sat,
            format!("scale must be finite and nonzero, got {scale}"),
        ));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(format_err(path, hdr.pos, "missing newline after scale"));
    }
    let start = hdr.pos + 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err(path, wat, "dimensions overflow"))?;
    let have = bytes.len() - start;
    if have < need {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated payload: {have} of {need} bytes"),
        ));
    }
    if have > need {
        return Err(format_err(
            path,
            start + need,
            format!("{} trailing bytes after payload", have - need),
        ));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0; width * height];
    for (k, chunk) in bytes[start..].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, x) = (k / width, k % width);
        let y = height - 1 - row;
        data[y * width + x] = if v.is_infinite() { f64::NAN } else { v as f64 };
    }
    Ok(ScalarField::from_vec(width, height, data))
}
