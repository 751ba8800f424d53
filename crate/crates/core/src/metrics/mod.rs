//! Evaluation metrics: WHDR, MPRE, si-MSE and si-LMSE.

mod evaluate;
mod judgements;

pub use evaluate::{
    evaluate, evaluate_scene, Decomposer, EvalData, EvalError, EvalScene, ImageRef, Metric,
    MetricReport, MetricSummary, NetDecomposer, OracleDecomposer,
};
pub use judgements::{Comparison, Darker, JudgementPoint, JudgementSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{compose, ImageError, ImageF};
use crate::losses::si_mse_value;

/// Lightness floor used by the WHDR ratio rule.
pub const LIGHTNESS_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid metric configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub whdr_delta: f64,
    pub lmse_window_frac: f64,
    pub lmse_stride_frac: f64,
    /// Larger-dimension target for MPRE inputs; `None` keeps native size.
    pub mpre_resize: Option<usize>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            whdr_delta: 0.10,
            lmse_window_frac: 0.10,
            lmse_stride_frac: 0.05,
            mpre_resize: Some(640),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.whdr_delta > 0.0) {
            return Err(MetricError::Config(format!(
                "whdr_delta must be > 0, got {}",
                self.whdr_delta
            )));
        }
        if !(self.lmse_window_frac > 0.0 && self.lmse_window_frac <= 1.0) {
            return Err(MetricError::Config(format!(
                "lmse_window_frac must lie in (0, 1], got {}",
                self.lmse_window_frac
            )));
        }
        if !(self.lmse_stride_frac > 0.0 && self.lmse_stride_frac <= self.lmse_window_frac) {
            return Err(MetricError::Config(format!(
                "lmse_stride_frac must lie in (0, window], got {}",
                self.lmse_stride_frac
            )));
        }
        if self.mpre_resize == Some(0) {
            return Err(MetricError::Config("mpre_resize must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean RGB at the pixel containing relative coordinate `(x, y)`.
pub fn sample_lightness(img: &ImageF, x: f64, y: f64) -> f64 {
    let px = ((x * img.width() as f64).floor().max(0.0) as usize).min(img.width() - 1);
    let py = ((y * img.height() as f64).floor().max(0.0) as usize).min(img.height() - 1);
    let p = img.pixel(px, py);
    let l = p.iter().sum::<f64>() / p.len() as f64;
    l.max(LIGHTNESS_FLOOR)
}

/// Which point the ratio rule calls darker.
pub fn classify(l1: f64, l2: f64, delta: f64) -> Darker {
    if l2 < l1 / (1.0 + delta) {
        Darker::Second
    } else if l1 < l2 / (1.0 + delta) {
        Darker::First
    } else {
        Darker::Equal
    }
}

/// Weighted fraction of judgements contradicted by `reflectance`.
pub fn whdr(
    reflectance: &ImageF,
    judgements: &JudgementSet,
    delta: f64,
) -> Result<f64, MetricError> {
    if reflectance.pixel_count() == 0 {
        return Err(MetricError::Contract(
            "whdr: empty reflectance image".into(),
        ));
    }
    let points = judgements.point_map();
    let mut wrong = 0.0;
    let mut total = 0.0;
    for c in &judgements.comparisons {
        let (Some(label), Some(weight)) = (c.darker, c.darker_score) else {
            continue;
        };
        if weight <= 0.0 {
            continue;
        }
        let p1 = points
            .get(&c.point1)
            .ok_or_else(|| MetricError::Contract(format!("whdr: unknown point id {}", c.point1)))?;
        let p2 = points
            .get(&c.point2)
            .ok_or_else(|| MetricError::Contract(format!("whdr: unknown point id {}", c.point2)))?;
        if p1.opaque == Some(false) || p2.opaque == Some(false) {
            continue;
        }
        let l1 = sample_lightness(reflectance, p1.x, p1.y);
        let l2 = sample_lightness(reflectance, p2.x, p2.y);
        if classify(l1, l2, delta) != label {
            wrong += weight;
        }
        total += weight;
    }
    if total == 0.0 {
        return Err(MetricError::Undefined(
            "whdr: no weighted comparisons".into(),
        ));
    }
    Ok(wrong / total)
}

/// `(1/N^2) sum_i sum_j E_si(S_i R_j, I_i)` over `(input, reflectance, shading)`.
pub fn mpre(group: &[(ImageF, ImageF, ImageF)]) -> Result<f64, MetricError> {
    if group.is_empty() {
        return Err(MetricError::Undefined("mpre: empty group".into()));
    }
    let n = group.len();
    let mut sum = 0.0;
    for (input, _, shading) in group {
        for (_, reflectance, _) in group {
            let recon = compose(reflectance, shading)?;
            recon.check_size(input, "mpre")?;
            sum += si_mse_value(recon.data(), input.data());
        }
    }
    Ok(sum / (n * n) as f64)
}

fn check_pair(estimate: &ImageF, reference: &ImageF, op: &'static str) -> Result<(), MetricError> {
    estimate.check_size(reference, op)?;
    estimate.check_channels(reference.channels(), op)?;
    if estimate.pixel_count() == 0 {
        return Err(MetricError::Undefined(format!("{op}: empty image")));
    }
    Ok(())
}

/// Scale-invariant MSE over the whole image.
pub fn si_mse_metric(estimate: &ImageF, reference: &ImageF) -> Result<f64, MetricError> {
    check_pair(estimate, reference, "si_mse")?;
    Ok(si_mse_value(estimate.data(), reference.data()))
}

fn window_starts(dim: usize, side: usize, stride: usize) -> Vec<usize> {
    let mut starts = vec![0];
    let mut s = 0;
    while s + side < dim {
        s += stride;
        starts.push(s);
    }
    starts
}

/// Mean scale-invariant MSE over square windows, each with its own scale.
/// Windows overhanging the border are clipped.
pub fn si_lmse(
    estimate: &ImageF,
    reference: &ImageF,
    config: &MetricConfig,
) -> Result<f64, MetricError> {
    check_pair(estimate, reference, "si_lmse")?;
    let max_dim = estimate.width().max(estimate.height()) as f64;
    let side = (config.lmse_window_frac * max_dim).round() as usize;
    let stride = ((config.lmse_stride_frac * max_dim).round() as usize).max(1);
    if side < 2 {
        return Err(MetricError::Config(format!(
            "si_lmse window side {side} is below 2 pixels"
        )));
    }
    let c = estimate.channels();
    let (w, h) = (estimate.width(), estimate.height());
    let mut total = 0.0;
    let mut count = 0usize;
    let mut e = Vec::new();
    let mut r = Vec::new();
    for y0 in window_starts(h, side, stride) {
        for x0 in window_starts(w, side, stride) {
            e.clear();
            r.clear();
            for y in y0..(y0 + side).min(h) {
                let a = (y * w + x0) * c;
                let b = (y * w + (x0 + side).min(w)) * c;
                e.extend_from_slice(&estimate.data()[a..b]);
                r.extend_from_slice(&reference.data()[a..b]);
            }
            total += si_mse_value(&e, &r);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        assert_eq!(classify(1.0, 1.05, 0.10), Darker::Equal);
        assert_eq!(classify(1.0, 1.2, 0.10), Darker::First);
        assert_eq!(classify(1.2, 1.0, 0.10), Darker::Second);
    }

    #[test]
    fn window_starts_cover_dimension() {
        assert_eq!(window_starts(4, 2, 2), vec![0, 2]);
        assert_eq!(window_starts(1, 2, 1), vec![0]);
        assert_eq!(window_starts(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(window_starts(11, 4, 3), vec![0, 3, 6, 9]);
    }

    #[test]
    fn two_window_fixture() {
        let reference = ImageF::new(4, 1, 1, vec![1.0; 4]).unwrap();
        let estimate = ImageF::new(4, 1, 1, vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        let cfg = MetricConfig {
            lmse_window_frac: 0.5,
            lmse_stride_frac: 0.5,
            ..MetricConfig::default()
        };
        assert_eq!(si_lmse(&estimate, &reference, &cfg).unwrap(), 0.0);
        // alpha = 2, residuals (-1, -1, 1, 1)
        assert!((si_mse_metric(&estimate, &reference).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_window_rejected() {
        let img = ImageF::filled(8, 8, 3, 0.5);
        assert!(matches!(
            si_lmse(&img, &img, &MetricConfig::default()),
            Err(MetricError::Config(_))
        ));
    }

    #[test]
    fn mpre_hand_fixture() {
        let px = |v: [f64; 3]| ImageF::new(1, 1, 3, v.to_vec()).unwrap();
        let s = ImageF::filled(1, 1, 1, 2.0);
        let group = vec![
            (px([2.0; 3]), px([1.0; 3]), s.clone()),
            (px([4.0; 3]), px([1.0, 0.0, 0.0]), s),
        ];
        assert!((mpre(&group).unwrap() - 4.0 / 9.0).abs() < 1e-15);
    }
}
