use super::{ImageError, ImageF};

/// `reflectance * shading`, with single-channel shading broadcast over color.
pub fn compose(reflectance: &ImageF, shading: &ImageF) -> Result<ImageF, ImageError> {
    const OP: &str = "compose";
    shading.check_channels(1, OP)?;
    reflectance.check_size(shading, OP)?;
    let c = reflectance.channels();
    let data = reflectance
        .data()
        .iter()
        .enumerate()
        .map(|(i, r)| r * shading.data()[i / c])
        .collect();
    ImageF::new(reflectance.width(), reflectance.height(), c, data)
}

/// `mask * (texture * shading) + (1 - mask) * original`.
pub fn retexture(
    new_texture: &ImageF,
    shading: &ImageF,
    mask: &ImageF,
    original: &ImageF,
) -> Result<ImageF, ImageError> {
    const OP: &str = "retexture";
    new_texture.check_channels(3, OP)?;
    original.check_channels(3, OP)?;
    mask.check_channels(1, OP)?;
    shading.check_channels(1, OP)?;
    for other in [shading, mask, original] {
        new_texture.check_size(other, OP)?;
    }
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let m = mask.get(x, y, 0);
            if m.abs() > 1e-6 && (m - 1.0).abs() > 1e-6 {
                return Err(ImageError::Range {
                    op: OP,
                    value: m,
                    x,
                    y,
                });
            }
        }
    }
    let shaded = compose(new_texture, shading)?;
    let data = shaded
        .data()
        .iter()
        .zip(original.data())
        .enumerate()
        .map(|(i, (s, o))| {
            let m = mask.data()[i / 3];
            m * s + (1.0 - m) * o
        })
        .collect();
    ImageF::new(original.width(), original.height(), 3, data)
}

fn resize_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resampling to an explicit size.
pub fn resize(img: &ImageF, width: usize, height: usize) -> Result<ImageF, ImageError> {
    if width == 0 || height == 0 || img.pixel_count() == 0 {
        return Err(ImageError::Contract {
            op: "resize",
            message: format!(
                "cannot resize {}x{} to {width}x{height}",
                img.width(),
                img.height()
            ),
        });
    }
    let tx = resize_taps(img.width(), width);
    let ty = resize_taps(img.height(), height);
    let c = img.channels();
    Ok(ImageF::from_fn(width, height, c, |x, y, ch| {
        let (x0, x1, fx) = tx[x];
        let (y0, y1, fy) = ty[y];
        let top = img.get(x0, y0, ch) * (1.0 - fx) + img.get(x1, y0, ch) * fx;
        let bottom = img.get(x0, y1, ch) * (1.0 - fx) + img.get(x1, y1, ch) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

/// Resizes so the larger dimension equals `target`, preserving aspect ratio.
pub fn resize_max_dim(img: &ImageF, target: usize) -> Result<ImageF, ImageError> {
    if target == 0 {
        return Err(ImageError::Contract {
            op: "resize_max_dim",
            message: "target must be at least 1".into(),
        });
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let scale = target as f64 / w.max(h);
    let nw = ((w * scale).round() as usize).max(1);
    let nh = ((h * scale).round() as usize).max(1);
    resize(img, nw, nh)
}

/// Exact copy of the `w x h` window at `(x, y)`.
pub fn crop(img: &ImageF, x: usize, y: usize, w: usize, h: usize) -> Result<ImageF, ImageError> {
    if x + w > img.width() || y + h > img.height() {
        return Err(ImageError::Range {
            op: "crop",
            value: (x + w).max(y + h) as f64,
            x,
            y,
        });
    }
    let c = img.channels();
    let mut data = Vec::with_capacity(w * h * c);
    for row in y..y + h {
        let start = (row * img.width() + x) * c;
        data.extend_from_slice(&img.data()[start..start + w * c]);
    }
    ImageF::new(w, h, c, data)
}

fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m < len as isize { m } else { period - m }) as usize
}

/// Pads right and bottom by mirroring (edge pixel not repeated).
pub fn reflect_pad(img: &ImageF, width: usize, height: usize) -> Result<ImageF, ImageError> {
    if width < img.width() || height < img.height() {
        return Err(ImageError::Contract {
            op: "reflect_pad",
            message: "padded size smaller than image".into(),
        });
    }
    Ok(ImageF::from_fn(width, height, img.channels(), |x, y, c| {
        img.get(
            reflect_index(x as isize, img.width()),
            reflect_index(y as isize, img.height()),
            c,
        )
    }))
}
