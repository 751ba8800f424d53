use super::{BilateralParams, SolverError};
use crate::image::{rgb_to_luv, ImageF};

/// Per-pixel `(x/sx, y/sy, L/sl, u/su, v/sv)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    pub width: usize,
    pub height: usize,
    pub features: Vec<[f64; 5]>,
}

impl FeatureField {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

pub fn build_features(
    guide: &ImageF,
    params: &BilateralParams,
) -> Result<FeatureField, SolverError> {
    let luv = rgb_to_luv(guide)?;
    let s = params.sigmas();
    let mut features = Vec::with_capacity(guide.pixel_count());
    for y in 0..guide.height() {
        for x in 0..guide.width() {
            let p = luv.pixel(x, y);
            features.push([
                x as f64 / s[0],
                y as f64 / s[1],
                p[0] / s[2],
                p[1] / s[3],
                p[2] / s[4],
            ]);
        }
    }
    Ok(FeatureField {
        width: guide.width(),
        height: guide.height(),
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::luv_from_linear;

    #[test]
    fn constant_guide_differs_only_spatially() {
        let guide = ImageF::filled(4, 3, 3, 0.4);
        let f = build_features(&guide, &BilateralParams::default()).unwrap();
        assert!(f.features.iter().all(|v| v[2..] == f.features[0][2..]));
        assert!((f.features[1][0] - f.features[0][0] - 0.2).abs() < 1e-15);
        assert!((f.features[4][1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn two_pixel_guide_scaling() {
        let guide = ImageF::new(2, 1, 3, vec![0.2, 0.2, 0.2, 0.8, 0.1, 0.3]).unwrap();
        let f = build_features(&guide, &BilateralParams::default()).unwrap();
        let luv = luv_from_linear([0.8, 0.1, 0.3]);
        assert_eq!(f.features[1][0], 0.2);
        assert_eq!(f.features[1][2], luv[0] / 7.0);
        assert_eq!(f.features[1][3], luv[1] / 3.0);
        assert_eq!(f.features[1][4], luv[2] / 3.0);
    }
}
