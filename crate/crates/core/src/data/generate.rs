use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    gen_judgements, gen_mondrian, gen_real_pair, save_pfm, DataError, JudgementSceneEntry,
    Manifest, MondrianConfig, RealSceneEntry, SyntheticSceneEntry,
};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mondrian,
    Pairs,
    Judgements,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mondrian" => Ok(DatasetKind::Mondrian),
            "pairs" => Ok(DatasetKind::Pairs),
            "judgements" => Ok(DatasetKind::Judgements),
            other => Err(format!(
                "unknown dataset kind '{other}' (expected mondrian, pairs or judgements)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSpec {
    pub kinds: Vec<DatasetKind>,
    /// Scenes per kind.
    pub count: usize,
    pub seed: u64,
    pub mondrian: MondrianConfig,
    pub images_per_group: usize,
    pub judgement_pairs: usize,
    pub delta: f64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            kinds: vec![DatasetKind::Mondrian],
            count: 10,
            seed: 0,
            mondrian: MondrianConfig::default(),
            images_per_group: 3,
            judgement_pairs: 200,
            delta: 0.10,
        }
    }
}

/// splitmix64 finalizer, used to derive independent per-scene seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn scene_seed(seed: u64, kind: DatasetKind, index: usize) -> u64 {
    let tag = match kind {
        DatasetKind::Mondrian => 1u64,
        DatasetKind::Pairs => 2,
        DatasetKind::Judgements => 3,
    };
    mix(mix(seed ^ (tag << 56)) ^ index as u64)
}

fn save(dir: &Path, rel: &str, img: &crate::image::ImageF) -> Result<String, DataError> {
    save_pfm(img, &dir.join(rel))?;
    Ok(rel.to_string())
}

/// Writes the requested scene kinds plus `manifest.json` into `out_dir`.
pub fn generate_dataset(spec: &GenerateSpec, out_dir: &Path) -> Result<Manifest, DataError> {
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let mut manifest = Manifest::new(out_dir);
    for &kind in &spec.kinds {
        let sub = match kind {
            DatasetKind::Mondrian => "synthetic",
            DatasetKind::Pairs => "real",
            DatasetKind::Judgements => "judgements",
        };
        std::fs::create_dir_all(out_dir.join(sub))
            .map_err(|e| DataError::io(&out_dir.join(sub), e))?;
        for i in 0..spec.count {
            let cfg = MondrianConfig {
                seed: scene_seed(spec.seed, kind, i),
                ..spec.mondrian.clone()
            };
            match kind {
                DatasetKind::Mondrian => {
                    let t = gen_mondrian(&cfg);
                    let id = format!("syn{i:04}");
                    manifest.synthetic_scenes.push(SyntheticSceneEntry {
                        input_path: save(out_dir, &format!("{sub}/{id}_input.pfm"), &t.input)?,
                        reflectance_path: save(
                            out_dir,
                            &format!("{sub}/{id}_reflectance.pfm"),
                            &t.reflectance,
                        )?,
                        shading_path: save(
                            out_dir,
                            &format!("{sub}/{id}_shading.pfm"),
                            &t.shading,
                        )?,
                        id,
                    });
                }
                DatasetKind::Pairs => {
                    let (group, truth) = gen_real_pair(&cfg, spec.images_per_group)?;
                    let id = format!("real{i:04}");
                    let mut image_paths = Vec::new();
                    let mut shading_paths = Vec::new();
                    for (k, (img, s)) in group.images.iter().zip(&truth.shadings).enumerate() {
                        image_paths.push(save(out_dir, &format!("{sub}/{id}_img{k}.pfm"), img)?);
                        shading_paths.push(save(
                            out_dir,
                            &format!("{sub}/{id}_shading{k}.pfm"),
                            s,
                        )?);
                    }
                    manifest.real_scenes.push(RealSceneEntry {
                        reflectance_path: Some(save(
                            out_dir,
                            &format!("{sub}/{id}_reflectance.pfm"),
                            &truth.reflectance,
                        )?),
                        shading_paths: Some(shading_paths),
                        image_paths,
                        id,
                    });
                }
                DatasetKind::Judgements => {
                    let t = gen_mondrian(&cfg);
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed));
                    let set =
                        gen_judgements(&t.reflectance, spec.judgement_pairs, spec.delta, &mut rng);
                    let id = format!("iiw{i:04}");
                    let judgement_path = format!("{sub}/{id}.json");
                    let json = serde_json::to_vec_pretty(&set).expect("judgements serialize");
                    let full = out_dir.join(&judgement_path);
                    write_atomic(&full, &json).map_err(|e| DataError::io(&full, e))?;
                    manifest.judgement_scenes.push(JudgementSceneEntry {
                        image_path: save(out_dir, &format!("{sub}/{id}_input.pfm"), &t.input)?,
                        reflectance_path: Some(save(
                            out_dir,
                            &format!("{sub}/{id}_reflectance.pfm"),
                            &t.reflectance,
                        )?),
                        judgement_path,
                        id,
                    });
                }
            }
        }
    }
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
