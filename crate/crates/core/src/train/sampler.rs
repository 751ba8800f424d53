use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::image::{crop, ImageF, IntrinsicTriplet, RealSceneGroup};
use crate::tensor::Tensor;

/// Where one batch item came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pick {
    pub scene: usize,
    /// Image indices within a real group; unused for synthetic items.
    pub images: (usize, usize),
    pub x: usize,
    pub y: usize,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub input: Tensor,
    pub reflectance: Tensor,
    pub shading: Tensor,
    pub picks: Vec<Pick>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub first: Tensor,
    pub second: Tensor,
    /// The cropped images, used as solver guides.
    pub guides1: Vec<ImageF>,
    pub guides2: Vec<ImageF>,
    pub picks: Vec<Pick>,
}

fn flip(img: &ImageF) -> ImageF {
    ImageF::from_fn(img.width(), img.height(), img.channels(), |x, y, c| {
        img.get(img.width() - 1 - x, y, c)
    })
}

fn window(
    rng: &mut impl Rng,
    w: usize,
    h: usize,
    size: usize,
) -> Result<(usize, usize), TrainError> {
    if size > w || size > h {
        return Err(TrainError::Config(format!(
            "crop {size} exceeds image {w}x{h}"
        )));
    }
    Ok((
        rng.random_range(0..=w - size),
        rng.random_range(0..=h - size),
    ))
}

fn cut(img: &ImageF, p: &Pick, size: usize) -> Result<ImageF, TrainError> {
    let c = crop(img, p.x, p.y, size, size)?;
    Ok(if p.flipped { flip(&c) } else { c })
}

fn stack(images: &[ImageF]) -> Result<Tensor, TrainError> {
    let refs: Vec<&ImageF> = images.iter().collect();
    Ok(ImageF::to_tensor(&refs)?)
}

/// Uniform scenes, one crop per item shared by input and ground truth.
pub fn sample_synthetic_batch(
    data: &[IntrinsicTriplet],
    batch: usize,
    size: usize,
    flip_prob: f64,
    rng: &mut impl Rng,
) -> Result<SyntheticBatch, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Config("synthetic dataset is empty".into()));
    }
    let (mut inputs, mut refl, mut shad, mut picks) = (vec![], vec![], vec![], vec![]);
    for _ in 0..batch {
        let scene = rng.random_range(0..data.len());
        let t = &data[scene];
        let (x, y) = window(rng, t.input.width(), t.input.height(), size)?;
        let flipped = flip_prob > 0.0 && rng.random_bool(flip_prob);
        let pick = Pick {
            scene,
            images: (0, 0),
            x,
            y,
            flipped,
        };
        inputs.push(cut(&t.input, &pick, size)?);
        refl.push(cut(&t.reflectance, &pick, size)?);
        shad.push(cut(&t.shading, &pick, size)?);
        picks.push(pick);
    }
    Ok(SyntheticBatch {
        input: stack(&inputs)?,
        reflectance: stack(&refl)?,
        shading: stack(&shad)?,
        picks,
    })
}

/// Uniform scenes; two distinct images per scene and one crop for both.
pub fn sample_real_pair_batch(
    groups: &[RealSceneGroup],
    batch: usize,
    size: usize,
    flip_prob: f64,
    rng: &mut impl Rng,
) -> Result<PairBatch, TrainError> {
    if groups.is_empty() {
        return Err(TrainError::Config("no real scene groups".into()));
    }
    let (mut g1, mut g2, mut picks) = (vec![], vec![], vec![]);
    for _ in 0..batch {
        let scene = rng.random_range(0..groups.len());
        let g = &groups[scene];
        let n = g.images.len();
        if n < 2 {
            return Err(TrainError::Config(format!(
                "real scene {} has fewer than 2 images",
                g.id
            )));
        }
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (x, y) = window(rng, g.width(), g.height(), size)?;
        let flipped = flip_prob > 0.0 && rng.random_bool(flip_prob);
        let pick = Pick {
            scene,
            images: (a, b),
            x,
            y,
            flipped,
        };
        g1.push(cut(&g.images[a], &pick, size)?);
        g2.push(cut(&g.images[b], &pick, size)?);
        picks.push(pick);
    }
    Ok(PairBatch {
        first: stack(&g1)?,
        second: stack(&g2)?,
        guides1: g1,
        guides2: g2,
        picks,
    })
}
