//! Portable float map (single channel `Pf`) reading and writing.
//!
//! Files are written little-endian (scale `-1.0`) with rows stored bottom to
//! top, as the format prescribes. Big-endian files are accepted on read.

use std::fs;
use std::path::Path;

use super::SynthError;

pub fn encode_pfm(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pfm buffer size");
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    for row in data.chunks_exact(width.max(1)).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<(), SynthError> {
    fs::write(path, encode_pfm(width, height, data)).map_err(|e| SynthError::io(path, e))
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f32>), SynthError> {
    // Three whitespace-terminated header tokens, then one whitespace byte.
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(SynthError::format(path, "truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| SynthError::format(path, "non-ascii header"))?);
    }
    pos += 1;
    if tokens[0] != "Pf" {
        return Err(SynthError::format(path, format!("unsupported magic {:?}", tokens[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize, SynthError> {
        s.parse().map_err(|_| SynthError::format(path, format!("bad {what} {s:?}")))
    };
    let width = parse(tokens[1], "width")?;
    let height = parse(tokens[2], "height")?;
    let scale: f32 = tokens[3]
        .parse()
        .map_err(|_| SynthError::format(path, format!("bad scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(SynthError::format(path, "scale must be non-zero"));
    }
    let little = scale < 0.0;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| SynthError::format(path, "image too large"))?;
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != n * 4 {
        return Err(SynthError::format(
            path,
            format!("expected {} data bytes, found {}", n * 4, body.len()),
        ));
    }
    let mut data = vec![0f32; n];
    for (row_idx, row) in body.chunks_exact((width * 4).max(1)).enumerate().take(height) {
        let y = height - 1 - row_idx;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[y * width + x] = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    Ok((width, height, data))
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>), SynthError> {
    let bytes = fs::read(path).map_err(|e| SynthError::io(path, e))?;
    decode_pfm(&bytes, path)
}
