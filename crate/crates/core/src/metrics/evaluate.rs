use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mpre, si_lmse, si_mse_metric, whdr, MetricConfig, MetricError};
use crate::bilateral::{solve, BilateralParams, SolverError};
use crate::data::JudgementScene;
use crate::image::{resize, resize_max_dim, ImageError, ImageF, IntrinsicTriplet, RealSceneGroup};
use crate::network::{IntrinsicNet, NetError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Whdr,
    Mpre,
    Simse,
    Silmse,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Whdr, Metric::Mpre, Metric::Simse, Metric::Silmse];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Whdr => "whdr",
            Metric::Mpre => "mpre",
            Metric::Simse => "simse",
            Metric::Silmse => "silmse",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric '{s}' (expected whdr, mpre, simse or silmse)"))
    }
}

/// Where a decomposed image comes from: scene id and image index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageRef<'a> {
    pub scene: &'a str,
    pub index: usize,
}

/// Anything that splits an image into `(reflectance, shading)`.
pub trait Decomposer {
    fn decompose(&self, at: ImageRef<'_>, input: &ImageF) -> Result<(ImageF, ImageF), EvalError>;
}

/// Network inference, optionally followed by bilateral filtering of the
/// reflectance guided by the input.
pub struct NetDecomposer<'a> {
    pub net: &'a IntrinsicNet,
    pub filter: Option<BilateralParams>,
}

impl Decomposer for NetDecomposer<'_> {
    fn decompose(&self, _at: ImageRef<'_>, input: &ImageF) -> Result<(ImageF, ImageF), EvalError> {
        let (r, s) = self.net.decompose(input)?;
        let r = match &self.filter {
            Some(params) => solve(input, &r, params)?,
            None => r,
        };
        Ok((r, s))
    }
}

/// Returns stored decompositions, keyed by scene id and image index.
#[derive(Debug, Clone, Default)]
pub struct OracleDecomposer {
    table: HashMap<(String, usize), (ImageF, ImageF)>,
}

impl OracleDecomposer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scene: &str, index: usize, reflectance: ImageF, shading: ImageF) {
        self.table
            .insert((scene.to_string(), index), (reflectance, shading));
    }
}

impl Decomposer for OracleDecomposer {
    fn decompose(&self, at: ImageRef<'_>, input: &ImageF) -> Result<(ImageF, ImageF), EvalError> {
        let (r, s) = self
            .table
            .get(&(at.scene.to_string(), at.index))
            .ok_or_else(|| {
                EvalError::Config(format!(
                    "oracle has no entry for {}[{}]",
                    at.scene, at.index
                ))
            })?;
        if !r.same_size(input) {
            // inputs may have been resized for MPRE
            let (w, h) = (input.width(), input.height());
            return Ok((resize(r, w, h)?, resize(s, w, h)?));
        }
        Ok((r.clone(), s.clone()))
    }
}

/// One scene to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum EvalScene<'a> {
    Synthetic {
        id: &'a str,
        triplet: &'a IntrinsicTriplet,
    },
    Real(&'a RealSceneGroup),
    Judgement(&'a JudgementScene),
}

impl EvalScene<'_> {
    pub fn id(&self) -> &str {
        match self {
            EvalScene::Synthetic { id, .. } => id,
            EvalScene::Real(g) => &g.id,
            EvalScene::Judgement(j) => &j.id,
        }
    }

    fn supports(&self, metric: Metric) -> bool {
        matches!(
            (self, metric),
            (EvalScene::Synthetic { .. }, Metric::Simse | Metric::Silmse)
                | (EvalScene::Real(_), Metric::Mpre)
                | (EvalScene::Judgement(_), Metric::Whdr)
        )
    }
}

/// Evaluates the requested metrics that apply to `scene`. Keys are
/// `scene` for single-valued metrics and `scene/reflectance`,
/// `scene/shading` for the ground-truth comparisons.
pub fn evaluate_scene(
    decomposer: &dyn Decomposer,
    scene: EvalScene<'_>,
    metrics: &[Metric],
    config: &MetricConfig,
) -> Result<BTreeMap<Metric, BTreeMap<String, f64>>, EvalError> {
    config.validate()?;
    let mut out: BTreeMap<Metric, BTreeMap<String, f64>> = BTreeMap::new();
    let wanted: Vec<Metric> = metrics
        .iter()
        .copied()
        .filter(|m| scene.supports(*m))
        .collect();
    if wanted.is_empty() {
        return Ok(out);
    }
    let id = scene.id();
    match scene {
        EvalScene::Synthetic { triplet, .. } => {
            let (r, s) = decomposer.decompose(
                ImageRef {
                    scene: id,
                    index: 0,
                },
                &triplet.input,
            )?;
            for m in wanted {
                let f = |e: &ImageF, g: &ImageF| match m {
                    Metric::Simse => si_mse_metric(e, g),
                    _ => si_lmse(e, g, config),
                };
                let entry = out.entry(m).or_default();
                entry.insert(format!("{id}/reflectance"), f(&r, &triplet.reflectance)?);
                entry.insert(format!("{id}/shading"), f(&s, &triplet.shading)?);
            }
        }
        EvalScene::Real(group) => {
            let mut triplets = Vec::with_capacity(group.images.len());
            for (index, img) in group.images.iter().enumerate() {
                let input = match config.mpre_resize {
                    Some(target) => resize_max_dim(img, target)?,
                    None => img.clone(),
                };
                let (r, s) = decomposer.decompose(ImageRef { scene: id, index }, &input)?;
                triplets.push((input, r, s));
            }
            out.entry(Metric::Mpre)
                .or_default()
                .insert(id.to_string(), mpre(&triplets)?);
        }
        EvalScene::Judgement(scene) => {
            let (r, _) = decomposer.decompose(
                ImageRef {
                    scene: id,
                    index: 0,
                },
                &scene.image,
            )?;
            let value = whdr(&r, &scene.judgements, config.whdr_delta)?;
            out.entry(Metric::Whdr)
                .or_default()
                .insert(id.to_string(), value);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_scene: BTreeMap<String, f64>,
    pub mean: f64,
    pub median: f64,
}

impl MetricSummary {
    pub fn from_values(per_scene: BTreeMap<String, f64>) -> Result<Self, EvalError> {
        if per_scene.is_empty() {
            return Err(EvalError::Metric(MetricError::Undefined(
                "no scenes to summarize".into(),
            )));
        }
        let mut sorted: Vec<f64> = per_scene.values().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(MetricSummary {
            per_scene,
            mean,
            median,
        })
    }
}

/// Metric report keyed by metric name.
pub type MetricReport = BTreeMap<Metric, MetricSummary>;

/// Scenes available for evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalData<'a> {
    pub synthetic: &'a [(String, IntrinsicTriplet)],
    pub real: &'a [RealSceneGroup],
    pub judgements: &'a [JudgementScene],
}

impl EvalData<'_> {
    /// Fails naming the missing manifest section if a metric has no scenes.
    pub fn check(&self, metrics: &[Metric]) -> Result<(), EvalError> {
        for m in metrics {
            let (empty, section) = match m {
                Metric::Whdr => (self.judgements.is_empty(), "judgement_scenes"),
                Metric::Mpre => (self.real.is_empty(), "real_scenes"),
                Metric::Simse | Metric::Silmse => (self.synthetic.is_empty(), "synthetic_scenes"),
            };
            if empty {
                return Err(EvalError::Config(format!(
                    "metric {m} needs a non-empty '{section}' section in the manifest"
                )));
            }
        }
        Ok(())
    }

    fn scenes(&self) -> impl Iterator<Item = EvalScene<'_>> {
        let syn = self
            .synthetic
            .iter()
            .map(|(id, triplet)| EvalScene::Synthetic { id, triplet });
        syn.chain(self.real.iter().map(EvalScene::Real))
            .chain(self.judgements.iter().map(EvalScene::Judgement))
    }
}

/// Evaluates every applicable scene; the report has exactly the requested keys.
pub fn evaluate(
    decomposer: &dyn Decomposer,
    data: EvalData<'_>,
    metrics: &[Metric],
    config: &MetricConfig,
) -> Result<MetricReport, EvalError> {
    config.validate()?;
    data.check(metrics)?;
    let mut values: BTreeMap<Metric, BTreeMap<String, f64>> =
        metrics.iter().map(|m| (*m, BTreeMap::new())).collect();
    for scene in data.scenes() {
        for (m, entries) in evaluate_scene(decomposer, scene, metrics, config)? {
            values.entry(m).or_default().extend(entries);
        }
    }
    values
        .into_iter()
        .map(|(m, per_scene)| Ok((m, MetricSummary::from_values(per_scene)?)))
        .collect()
}
