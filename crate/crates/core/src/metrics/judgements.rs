use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Label of a pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Darker {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "E")]
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgementPoint {
    pub id: u64,
    /// Relative horizontal coordinate in `[0, 1]`.
    pub x: f64,
    /// Relative vertical coordinate in `[0, 1]`.
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opaque: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub point1: u64,
    pub point2: u64,
    /// Unlabelled comparisons are ignored.
    #[serde(default)]
    pub darker: Option<Darker>,
    /// Weight of the comparison.
    #[serde(default)]
    pub darker_score: Option<f64>,
}

/// Sparse pairwise reflectance judgements in the IIW file layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgementSet {
    #[serde(rename = "intrinsic_points")]
    pub points: Vec<JudgementPoint>,
    #[serde(rename = "intrinsic_comparisons")]
    pub comparisons: Vec<Comparison>,
}

impl JudgementSet {
    pub(crate) fn point_map(&self) -> HashMap<u64, &JudgementPoint> {
        self.points.iter().map(|p| (p.id, p)).collect()
    }

    /// Checks that ids resolve and weights are finite and non-negative.
    pub fn validate(&self) -> Result<(), String> {
        let points = self.point_map();
        for c in &self.comparisons {
            for id in [c.point1, c.point2] {
                if !points.contains_key(&id) {
                    return Err(format!("comparison refers to unknown point {id}"));
                }
            }
            if let Some(w) = c.darker_score {
                if !w.is_finite() || w < 0.0 {
                    return Err(format!(
                        "comparison ({}, {}) has weight {w}",
                        c.point1, c.point2
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_iiw_layout() {
        let json = r#"{
            "intrinsic_points": [
                {"id": 1, "x": 0.25, "y": 0.5, "opaque": true, "sRGB": "808080", "min_separation": 0.07},
                {"id": 2, "x": 0.75, "y": 0.5, "opaque": true}
            ],
            "intrinsic_comparisons": [
                {"point1": 1, "point2": 2, "darker": "E", "darker_score": 0.8, "darker_method": "user"},
                {"point1": 2, "point2": 1, "darker": null, "darker_score": null}
            ]
        }"#;
        let set: JudgementSet = serde_json::from_str(json).unwrap();
        assert_eq!(set.points.len(), 2);
        assert_eq!(set.comparisons[0].darker, Some(Darker::Equal));
        assert_eq!(set.comparisons[1].darker, None);
        set.validate().unwrap();
    }
}
