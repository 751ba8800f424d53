use super::{ImageError, ImageF};

/// Rec. 601 luma weights, applied to linear values.
pub const GRAY_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

// linear sRGB (D65) -> XYZ
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const EPS_CIE: f64 = 216.0 / 24389.0; // (6/29)^3

fn white_point() -> [f64; 3] {
    let row = |r: [f64; 3]| r[0] + r[1] + r[2];
    [row(RGB_TO_XYZ[0]), row(RGB_TO_XYZ[1]), row(RGB_TO_XYZ[2])]
}

fn chromaticity(xyz: [f64; 3]) -> Option<(f64, f64)> {
    let d = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    (d > 0.0).then(|| (4.0 * xyz[0] / d, 9.0 * xyz[1] / d))
}

pub fn srgb_decode_value(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn srgb_encode_value(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// sRGB transfer decode of an image with values in `[0, 1]`.
pub fn srgb_decode(encoded: &ImageF) -> Result<ImageF, ImageError> {
    for y in 0..encoded.height() {
        for x in 0..encoded.width() {
            for &v in encoded.pixel(x, y) {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ImageError::Range {
                        op: "srgb_decode",
                        value: v,
                        x,
                        y,
                    });
                }
            }
        }
    }
    Ok(encoded.map(srgb_decode_value))
}

pub fn srgb_encode(linear: &ImageF) -> ImageF {
    linear.map(srgb_encode_value)
}

pub fn rgb_to_grayscale(img: &ImageF) -> Result<ImageF, ImageError> {
    img.check_channels(3, "rgb_to_grayscale")?;
    Ok(ImageF::from_fn(img.width(), img.height(), 1, |x, y, _| {
        let p = img.pixel(x, y);
        GRAY_WEIGHTS[0] * p[0] + GRAY_WEIGHTS[1] * p[1] + GRAY_WEIGHTS[2] * p[2]
    }))
}

/// CIE 1976 L*u*v* of one linear sRGB pixel under D65.
pub fn luv_from_linear(rgb: [f64; 3]) -> [f64; 3] {
    let mut xyz = [0.0; 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    let white = white_point();
    let t = xyz[1] / white[1];
    let l = if t > EPS_CIE {
        116.0 * t.cbrt() - 16.0
    } else {
        // 116 * (t / (3 (6/29)^2) + 4/29) - 16
        (24389.0 / 27.0) * t
    };
    if l <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    let (un, vn) = chromaticity(white).expect("white point");
    match chromaticity(xyz) {
        Some((u, v)) => [l, 13.0 * l * (u - un), 13.0 * l * (v - vn)],
        None => [l, 0.0, 0.0],
    }
}

pub fn rgb_to_luv(img: &ImageF) -> Result<ImageF, ImageError> {
    const OP: &str = "rgb_to_luv";
    img.check_channels(3, OP)?;
    let mut out = ImageF::filled(img.width(), img.height(), 3, 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel(x, y);
            for &value in p {
                if value < 0.0 || !value.is_finite() {
                    return Err(ImageError::Range {
                        op: OP,
                        value,
                        x,
                        y,
                    });
                }
            }
            let luv = luv_from_linear([p[0], p[1], p[2]]);
            for (c, v) in luv.iter().enumerate() {
                out.set(x, y, c, *v);
            }
        }
    }
    Ok(out)
}
