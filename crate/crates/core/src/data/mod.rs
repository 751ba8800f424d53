//! Image files, manifests and procedural datasets.

mod generate;
mod manifest;
mod mondrian;
mod pfm;
mod png_io;

pub use generate::{generate_dataset, DatasetKind, GenerateSpec};
pub use manifest::{
    load_judgement_scenes, load_manifest, load_real_groups, load_real_truth, load_synthetic,
    JudgementScene, JudgementSceneEntry, Manifest, RealSceneEntry, SyntheticSceneEntry,
    MANIFEST_VERSION,
};
pub use mondrian::{gen_judgements, gen_mondrian, gen_real_pair, MondrianConfig, RealGroupTruth};
pub use pfm::{decode_pfm, encode_pfm, load_pfm, save_pfm};
pub use png_io::{encode_png, load_png, save_png};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::{ImageError, ImageF};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported image format: {0}")]
    Format(String),
    #[error("unknown manifest version {0}")]
    UnknownVersion(u32),
    #[error("real scene {scene} requires at least 2 images, got {count}")]
    TooFewImages { scene: String, count: usize },
    #[error("scene {scene}: image dimensions differ ({detail})")]
    DimensionMismatch { scene: String, detail: String },
    #[error("duplicate scene id {0}")]
    DuplicateId(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid judgements in {path}: {message}")]
    Judgements { path: PathBuf, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Loads a `.pfm` or `.png` by extension.
pub fn load_image(path: &Path) -> Result<ImageF, DataError> {
    match extension(path).as_deref() {
        Some("pfm") => load_pfm(path),
        Some("png") => load_png(path),
        _ => Err(DataError::Format(format!(
            "{}: expected .pfm or .png",
            path.display()
        ))),
    }
}

/// Saves a `.pfm` or `.png` by extension.
pub fn save_image(img: &ImageF, path: &Path) -> Result<(), DataError> {
    match extension(path).as_deref() {
        Some("pfm") => save_pfm(img, path),
        Some("png") => save_png(img, path),
        _ => Err(DataError::Format(format!(
            "{}: expected .pfm or .png",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Replicates a single-channel image into three channels.
pub fn to_rgb(img: &ImageF) -> ImageF {
    if img.channels() == 3 {
        return img.clone();
    }
    ImageF::from_fn(img.width(), img.height(), 3, |x, y, _| img.get(x, y, 0))
}
