use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::DataError;
use crate::fsutil::write_atomic;
use crate::image::{srgb_decode_value, srgb_encode_value, ImageF};

/// Loads an 8-bit PNG as linear light. Gray images give one channel;
/// alpha is dropped.
pub fn load_png(path: &Path) -> Result<ImageF, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let fmt = |e: png::DecodingError| DataError::Format(format!("{}: {e}", path.display()));
    let mut reader = decoder.read_info().map_err(fmt)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    if info.bit_depth != BitDepth::Eight {
        return Err(DataError::Format(format!(
            "{}: only 8-bit PNG is supported, got {:?}",
            path.display(),
            info.bit_depth
        )));
    }
    let (src_c, dst_c) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        other => {
            return Err(DataError::Format(format!(
                "{}: unsupported color type {other:?}",
                path.display()
            )))
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * dst_c);
    for y in 0..h {
        let line = &buf[y * info.line_size..y * info.line_size + w * src_c];
        for px in line.chunks_exact(src_c) {
            for &v in &px[..dst_c] {
                data.push(srgb_decode_value(v as f64 / 255.0));
            }
        }
    }
    Ok(ImageF::new(w, h, dst_c, data)?)
}

/// Clamps to `[0, 1]`, sRGB-encodes and quantizes to 8 bits.
pub fn encode_png(img: &ImageF) -> Result<Vec<u8>, DataError> {
    let color = if img.channels() == 3 {
        ColorType::Rgb
    } else {
        ColorType::Grayscale
    };
    let pixels: Vec<u8> = img
        .data()
        .iter()
        .map(|v| {
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            (srgb_encode_value(v) * 255.0 + 0.5).floor().min(255.0) as u8
        })
        .collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        let fmt = |e: png::EncodingError| DataError::Format(e.to_string());
        let mut writer = enc.write_header().map_err(fmt)?;
        writer.write_image_data(&pixels).map_err(fmt)?;
        writer.finish().map_err(fmt)?;
    }
    Ok(out)
}

pub fn save_png(img: &ImageF, path: &Path) -> Result<(), DataError> {
    let bytes = encode_png(img)?;
    write_atomic(path, &bytes).map_err(|e| DataError::io(path, e))
}
