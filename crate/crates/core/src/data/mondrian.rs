use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{compose, ImageF, IntrinsicTriplet, RealSceneGroup};
use crate::metrics::{
    classify, sample_lightness, Comparison, Darker, JudgementPoint, JudgementSet,
};

/// Piecewise-constant reflectance under smooth achromatic shading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MondrianConfig {
    pub width: usize,
    pub height: usize,
    pub n_regions: usize,
    pub reflectance_range: (f64, f64),
    pub ambient_range: (f64, f64),
    pub blob_count: (usize, usize),
    pub blob_amplitude: (f64, f64),
    /// Blob standard deviation as a fraction of the larger dimension.
    pub blob_sigma: (f64, f64),
    pub gradient_max: f64,
    pub seed: u64,
}

impl Default for MondrianConfig {
    fn default() -> Self {
        MondrianConfig {
            width: 64,
            height: 64,
            n_regions: 12,
            reflectance_range: (0.1, 0.9),
            ambient_range: (0.2, 0.5),
            blob_count: (1, 4),
            blob_amplitude: (0.3, 1.0),
            blob_sigma: (0.1, 0.4),
            gradient_max: 0.5,
            seed: 0,
        }
    }
}

/// Ground truth kept alongside a generated real-style group.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGroupTruth {
    pub reflectance: ImageF,
    pub shadings: Vec<ImageF>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn gen_reflectance(cfg: &MondrianConfig, rng: &mut ChaCha8Rng) -> ImageF {
    let n = cfg.n_regions.max(1);
    let sites: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0.0..cfg.width as f64),
                rng.random_range(0.0..cfg.height as f64),
            )
        })
        .collect();
    let colors: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                uniform(rng, cfg.reflectance_range),
                uniform(rng, cfg.reflectance_range),
                uniform(rng, cfg.reflectance_range),
            ]
        })
        .collect();
    let mut owner = vec![0usize; cfg.width * cfg.height];
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = (f64::INFINITY, 0);
            for (k, (sx, sy)) in sites.iter().enumerate() {
                let d = (sx - px).powi(2) + (sy - py).powi(2);
                if d < best.0 {
                    best = (d, k);
                }
            }
            owner[y * cfg.width + x] = best.1;
        }
    }
    ImageF::from_fn(cfg.width, cfg.height, 3, |x, y, c| {
        colors[owner[y * cfg.width + x]][c]
    })
}

fn gen_shading(cfg: &MondrianConfig, rng: &mut ChaCha8Rng) -> ImageF {
    let max_dim = cfg.width.max(cfg.height) as f64;
    let ambient = uniform(rng, cfg.ambient_range);
    let (kmin, kmax) = cfg.blob_count;
    let k = if kmax > kmin {
        rng.random_range(kmin..=kmax)
    } else {
        kmin
    };
    let blobs: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.0..cfg.width as f64),
                rng.random_range(0.0..cfg.height as f64),
                uniform(rng, cfg.blob_amplitude),
                uniform(rng, cfg.blob_sigma) * max_dim,
            )
        })
        .collect();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let slope = uniform(rng, (0.0, cfg.gradient_max));
    let (cx, cy) = (cfg.width as f64 / 2.0, cfg.height as f64 / 2.0);
    let raw = ImageF::from_fn(cfg.width, cfg.height, 1, |x, y, _| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let proj = ((px - cx) * theta.cos() + (py - cy) * theta.sin()) / max_dim;
        let mut v = ambient + slope * (0.5 + proj);
        for (bx, by, a, s) in &blobs {
            let d2 = (px - bx).powi(2) + (py - by).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        v
    });
    let peak = raw.max_value();
    raw.map(|v| v / peak)
}

/// Deterministic triplet from `cfg.seed`; `input` is exactly `R * S`.
pub fn gen_mondrian(cfg: &MondrianConfig) -> IntrinsicTriplet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reflectance = gen_reflectance(cfg, &mut rng);
    let shading = gen_shading(cfg, &mut rng);
    let input = compose(&reflectance, &shading).expect("matching sizes");
    IntrinsicTriplet::new(input, reflectance, shading).expect("valid triplet")
}

/// One reflectance under `n_images` independent shadings.
pub fn gen_real_pair(
    cfg: &MondrianConfig,
    n_images: usize,
) -> Result<(RealSceneGroup, RealGroupTruth), crate::image::ImageError> {
    if !(2..=8).contains(&n_images) {
        return Err(crate::image::ImageError::Contract {
            op: "gen_real_pair",
            message: format!("n_images must lie in [2, 8], got {n_images}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reflectance = gen_reflectance(cfg, &mut rng);
    let shadings: Vec<ImageF> = (0..n_images).map(|_| gen_shading(cfg, &mut rng)).collect();
    let images = shadings
        .iter()
        .map(|s| compose(&reflectance, s))
        .collect::<Result<Vec<_>, _>>()?;
    let group = RealSceneGroup::new(format!("pair{}", cfg.seed), images)?;
    Ok((
        group,
        RealGroupTruth {
            reflectance,
            shadings,
        },
    ))
}

/// IIW-style judgements labelled from `reflectance` with the WHDR rule.
/// Points sit at pixel centers, so sampling recovers the labelled pixel.
pub fn gen_judgements(
    reflectance: &ImageF,
    n_pairs: usize,
    delta: f64,
    rng: &mut impl Rng,
) -> JudgementSet {
    let (w, h) = (reflectance.width(), reflectance.height());
    let mut set = JudgementSet::default();
    for i in 0..n_pairs {
        let mut ids = [0u64; 2];
        for (j, id) in ids.iter_mut().enumerate() {
            let px = rng.random_range(0..w);
            let py = rng.random_range(0..h);
            *id = (2 * i + j + 1) as u64;
            set.points.push(JudgementPoint {
                id: *id,
                x: (px as f64 + 0.5) / w as f64,
                y: (py as f64 + 0.5) / h as f64,
                opaque: Some(true),
            });
        }
        let p1 = &set.points[set.points.len() - 2];
        let p2 = &set.points[set.points.len() - 1];
        let label: Darker = classify(
            sample_lightness(reflectance, p1.x, p1.y),
            sample_lightness(reflectance, p2.x, p2.y),
            delta,
        );
        set.comparisons.push(Comparison {
            point1: ids[0],
            point2: ids[1],
            darker: Some(label),
            darker_score: Some(1.0),
        });
    }
    set
}
