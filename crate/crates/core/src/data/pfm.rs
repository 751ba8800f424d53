use std::path::Path;

use super::DataError;
use crate::fsutil::write_atomic;
use crate::image::ImageF;

/// Little-endian Portable FloatMap, rows stored bottom-up. Samples are
/// 32-bit floats, so values round to the nearest `f32`.
pub fn encode_pfm(img: &ImageF) -> Result<Vec<u8>, DataError> {
    if !img.is_finite() {
        return Err(DataError::Format("PFM images must be finite".into()));
    }
    let magic = if img.channels() == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width(), img.height()).into_bytes();
    let row = img.width() * img.channels();
    for y in (0..img.height()).rev() {
        for v in &img.data()[y * row..(y + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn parse_err(offset: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        offset,
        message: message.into(),
    }
}

/// Reads one whitespace-delimited header token followed by one whitespace byte.
fn token(bytes: &[u8], pos: &mut usize) -> Result<(usize, String), DataError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(parse_err(start, "unexpected end of header"));
    }
    let tok = String::from_utf8_lossy(&bytes[start..*pos]).into_owned();
    if *pos >= bytes.len() {
        return Err(parse_err(*pos, "header not terminated"));
    }
    *pos += 1;
    Ok((start, tok))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageF, DataError> {
    let channels = match bytes.get(..2) {
        Some(b"PF") => 3,
        Some(b"Pf") => 1,
        _ => return Err(parse_err(0, "bad magic, expected PF or Pf")),
    };
    let mut pos = 2;
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(parse_err(pos, "expected whitespace after magic"));
    }
    let (off, w) = token(bytes, &mut pos)?;
    let width: usize = w
        .parse()
        .map_err(|_| parse_err(off, format!("bad width '{w}'")))?;
    let (off, h) = token(bytes, &mut pos)?;
    let height: usize = h
        .parse()
        .map_err(|_| parse_err(off, format!("bad height '{h}'")))?;
    let (off, s) = token(bytes, &mut pos)?;
    let scale: f64 = s
        .parse()
        .map_err(|_| parse_err(off, format!("bad scale '{s}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(parse_err(off, "scale must be non-zero"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() != 4 * n {
        return Err(parse_err(
            pos,
            format!(
                "{width}x{height}x{channels} needs {} payload bytes, found {}",
                4 * n,
                payload.len()
            ),
        ));
    }
    let row = width * channels;
    let mut data = vec![0.0; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("4 bytes");
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v as f64;
    }
    Ok(ImageF::new(width, height, channels, data)?)
}

pub fn load_pfm(path: &Path) -> Result<ImageF, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn save_pfm(img: &ImageF, path: &Path) -> Result<(), DataError> {
    let bytes = encode_pfm(img)?;
    write_atomic(path, &bytes).map_err(|e| DataError::io(path, e))
}
