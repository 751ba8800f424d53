use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_image, to_rgb, DataError, RealGroupTruth};
use crate::fsutil::write_atomic;
use crate::image::{rgb_to_grayscale, ImageF, IntrinsicTriplet, RealSceneGroup};
use crate::metrics::JudgementSet;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneEntry {
    pub id: String,
    pub input_path: String,
    pub reflectance_path: String,
    pub shading_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSceneEntry {
    pub id: String,
    pub image_paths: Vec<String>,
    /// Optional ground truth, used only for oracle evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflectance_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shading_paths: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgementSceneEntry {
    pub id: String,
    pub image_path: String,
    pub judgement_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflectance_path: Option<String>,
}

/// Dataset index. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub synthetic_scenes: Vec<SyntheticSceneEntry>,
    #[serde(default)]
    pub real_scenes: Vec<RealSceneEntry>,
    #[serde(default)]
    pub judgement_scenes: Vec<JudgementSceneEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            synthetic_scenes: Vec::new(),
            real_scenes: Vec::new(),
            judgement_scenes: Vec::new(),
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        write_atomic(path, self.to_json().as_bytes()).map_err(|e| DataError::io(path, e))
    }

    fn all_paths(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for s in &self.synthetic_scenes {
            out.extend([s.input_path.as_str(), &s.reflectance_path, &s.shading_path]);
        }
        for s in &self.real_scenes {
            out.extend(s.image_paths.iter().map(String::as_str));
            out.extend(s.reflectance_path.as_deref());
            if let Some(p) = &s.shading_paths {
                out.extend(p.iter().map(String::as_str));
            }
        }
        for s in &self.judgement_scenes {
            out.extend([s.image_path.as_str(), &s.judgement_path]);
            out.extend(s.reflectance_path.as_deref());
        }
        out
    }
}

/// Parses and validates a manifest: version, unique ids, file existence,
/// and image count and dimensions of every real scene.
pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let version = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| DataError::Manifest(e.to_string()))?
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DataError::Manifest("missing integer field 'version'".into()))?;
    if version != MANIFEST_VERSION as u64 {
        return Err(DataError::UnknownVersion(version as u32));
    }
    let mut manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut seen = HashSet::new();
    let ids = manifest
        .synthetic_scenes
        .iter()
        .map(|s| &s.id)
        .chain(manifest.real_scenes.iter().map(|s| &s.id))
        .chain(manifest.judgement_scenes.iter().map(|s| &s.id));
    for id in ids {
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId(id.clone()));
        }
    }
    for p in manifest.all_paths() {
        let full = manifest.resolve(p);
        if !full.is_file() {
            return Err(DataError::io(
                &full,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "file listed in manifest not found",
                ),
            ));
        }
    }
    for scene in &manifest.real_scenes {
        if scene.image_paths.len() < 2 {
            return Err(DataError::TooFewImages {
                scene: scene.id.clone(),
                count: scene.image_paths.len(),
            });
        }
        let mut dims: Option<(usize, usize)> = None;
        for p in &scene.image_paths {
            let img = load_image(&manifest.resolve(p))?;
            let d = (img.width(), img.height());
            match dims {
                None => dims = Some(d),
                Some(first) if first != d => {
                    return Err(DataError::DimensionMismatch {
                        scene: scene.id.clone(),
                        detail: format!("{}x{} vs {}x{} ({p})", first.0, first.1, d.0, d.1),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(manifest)
}

fn load_rgb(m: &Manifest, p: &str) -> Result<ImageF, DataError> {
    Ok(to_rgb(&load_image(&m.resolve(p))?))
}

fn load_gray(m: &Manifest, p: &str) -> Result<ImageF, DataError> {
    let img = load_image(&m.resolve(p))?;
    Ok(if img.channels() == 3 {
        rgb_to_grayscale(&img)?
    } else {
        img
    })
}

/// Ground-truth triplets; 3-channel shading is converted to grayscale.
pub fn load_synthetic(m: &Manifest) -> Result<Vec<IntrinsicTriplet>, DataError> {
    m.synthetic_scenes
        .iter()
        .map(|s| {
            let input = load_rgb(m, &s.input_path)?;
            let reflectance = load_rgb(m, &s.reflectance_path)?;
            let shading = load_gray(m, &s.shading_path)?;
            Ok(IntrinsicTriplet::new(input, reflectance, shading)?)
        })
        .collect()
}

/// Ground truth of each real scene, when the manifest lists it.
pub fn load_real_truth(m: &Manifest) -> Result<Vec<Option<RealGroupTruth>>, DataError> {
    m.real_scenes
        .iter()
        .map(|s| match (&s.reflectance_path, &s.shading_paths) {
            (Some(r), Some(shadings)) => {
                let reflectance = load_rgb(m, r)?;
                let shadings = shadings
                    .iter()
                    .map(|p| load_gray(m, p))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Some(RealGroupTruth {
                    reflectance,
                    shadings,
                }))
            }
            _ => Ok(None),
        })
        .collect()
}

pub fn load_real_groups(m: &Manifest) -> Result<Vec<RealSceneGroup>, DataError> {
    m.real_scenes
        .iter()
        .map(|s| {
            let images = s
                .image_paths
                .iter()
                .map(|p| load_rgb(m, p))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RealSceneGroup::new(s.id.clone(), images)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgementScene {
    pub id: String,
    pub image: ImageF,
    pub judgements: JudgementSet,
    pub reflectance: Option<ImageF>,
}

pub fn load_judgement_scenes(m: &Manifest) -> Result<Vec<JudgementScene>, DataError> {
    m.judgement_scenes
        .iter()
        .map(|s| {
            let path = m.resolve(&s.judgement_path);
            let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
            let judgements: JudgementSet =
                serde_json::from_str(&text).map_err(|e| DataError::Judgements {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            judgements
                .validate()
                .map_err(|message| DataError::Judgements {
                    path: path.clone(),
                    message,
                })?;
            let reflectance = s
                .reflectance_path
                .as_deref()
                .map(|p| load_rgb(m, p))
                .transpose()?;
            Ok(JudgementScene {
                id: s.id.clone(),
                image: load_rgb(m, &s.image_path)?,
                judgements,
                reflectance,
            })
        })
        .collect()
}
