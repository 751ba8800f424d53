//! Two-stage training: synthetic supervision first, then mixed batches of
//! synthetic triplets and aligned real pairs.

mod adam;
mod sampler;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use sampler::{
    sample_real_pair_batch, sample_synthetic_batch, PairBatch, Pick, SyntheticBatch,
};

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilateral::{BilateralParams, SolverError};
use crate::image::{ImageError, IntrinsicTriplet, RealSceneGroup};
use crate::losses::{
    real_pair_loss, synthetic_loss, total_loss, LossError, LossReport, LossWeights, PairFilter,
    PairVars,
};
use crate::network::{IntrinsicNet, NetError};
use crate::tensor::{BatchNormMode, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
    #[error("non-finite loss at iteration {iter}: {snapshot}")]
    NonFinite { iter: usize, snapshot: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("training output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub crop: usize,
    pub stage1_batch: usize,
    pub stage2_batch: usize,
    pub stage2_synthetic: usize,
    pub stage2_real: usize,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub omega: f64,
    pub bilateral: BilateralParams,
    /// Filter real-pair reflectances with the solver layer.
    pub filter_real: bool,
    /// Probability of a horizontal flip per item; 0 disables.
    pub flip_prob: f64,
    pub seed: u64,
    /// Save a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Emit a log entry every this many iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            crop: 64,
            stage1_batch: 4,
            stage2_batch: 8,
            stage2_synthetic: 4,
            stage2_real: 4,
            stage1_iters: 2000,
            stage2_iters: 2000,
            omega: 0.5,
            bilateral: BilateralParams::default(),
            filter_real: true,
            flip_prob: 0.0,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Checks internal consistency and fit against the network and data.
    pub fn validate(&self, multiple: usize, min_dim: Option<usize>) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be > 0".into());
        }
        if self.stage1_batch == 0 {
            return bad("stage1_batch must be >= 1".into());
        }
        if self.stage2_synthetic + self.stage2_real != self.stage2_batch {
            return bad(format!(
                "stage2_synthetic ({}) + stage2_real ({}) must equal stage2_batch ({})",
                self.stage2_synthetic, self.stage2_real, self.stage2_batch
            ));
        }
        if self.stage2_synthetic == 0 {
            return bad("stage2_synthetic must be >= 1".into());
        }
        if !(self.omega >= 0.0) {
            return bad(format!("omega must be >= 0, got {}", self.omega));
        }
        if self.crop == 0 || !self.crop.is_multiple_of(multiple) {
            return bad(format!(
                "crop {} must be a positive multiple of {multiple}",
                self.crop
            ));
        }
        if let Some(d) = min_dim {
            if self.crop > d {
                return bad(format!(
                    "crop {} exceeds the smallest training image dimension {d}",
                    self.crop
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob must lie in [0, 1]".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        self.bilateral
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }
}

/// One training log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub e_syn: f64,
    pub e_real: Option<f64>,
    pub total: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    /// Stage-2 batches dropped because the solver failed.
    pub skipped: usize,
}

impl TrainLog {
    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut *out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn snapshot(picks: &[Pick], input: &Tensor) -> String {
    let lo = input.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = input
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    format!(
        "batch of {} items {:?}, input range [{lo}, {hi}], input finite: {}",
        picks.len(),
        picks,
        input.is_finite()
    )
}

/// Model, optimizer state and sampling stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: IntrinsicNet,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub rng: ChaCha8Rng,
    /// Optimizer steps taken so far, across both stages.
    pub iter: usize,
    pub skipped: usize,
}

impl Trainer {
    pub fn new(net: IntrinsicNet, config: TrainConfig) -> Self {
        let adam = AdamState::new(&net.parameters());
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Trainer {
            net,
            adam,
            config,
            rng,
            iter: 0,
            skipped: 0,
        }
    }

    pub fn next_synthetic_batch(
        &mut self,
        data: &[IntrinsicTriplet],
        batch: usize,
    ) -> Result<SyntheticBatch, TrainError> {
        sample_synthetic_batch(
            data,
            batch,
            self.config.crop,
            self.config.flip_prob,
            &mut self.rng,
        )
    }

    pub fn next_pair_batch(
        &mut self,
        groups: &[RealSceneGroup],
        batch: usize,
    ) -> Result<PairBatch, TrainError> {
        sample_real_pair_batch(
            groups,
            batch,
            self.config.crop,
            self.config.flip_prob,
            &mut self.rng,
        )
    }

    fn update(&mut self) -> Result<(), TrainError> {
        let cfg = self.config.adam();
        let mut params = self.net.parameters_mut();
        adam_step(&mut params, &mut self.adam, &cfg)?;
        self.iter += 1;
        Ok(())
    }

    /// Synthetic loss of `batch` under `net` in train mode. Returns the
    /// report; gradients are accumulated into `net` when `learn` is set.
    fn synthetic_pass(
        net: &mut IntrinsicNet,
        batch: &SyntheticBatch,
        learn: bool,
    ) -> Result<LossReport, TrainError> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.input.clone());
        let r_gt = tape.constant(batch.reflectance.clone());
        let s_gt = tape.constant(batch.shading.clone());
        let out = net.forward(&mut tape, x, BatchNormMode::Train)?;
        let (loss, report) =
            synthetic_loss(&mut tape, out.reflectance, out.shading, r_gt, s_gt, x)?;
        if learn && report.total.is_finite() {
            let grads = tape.backward(loss)?;
            net.zero_grad();
            net.accumulate_grads(&grads, &out)?;
        }
        Ok(report)
    }

    /// Recomputes the stage-1 loss of `batch` without changing the trainer.
    pub fn synthetic_loss_of(&self, batch: &SyntheticBatch) -> Result<LossReport, TrainError> {
        let mut net = self.net.clone();
        Trainer::synthetic_pass(&mut net, batch, false)
    }

    /// One stage-1 optimizer step on a given batch.
    pub fn train_on_synthetic(&mut self, batch: &SyntheticBatch) -> Result<LossReport, TrainError> {
        let report = Trainer::synthetic_pass(&mut self.net, batch, true)?;
        if !report.total.is_finite() {
            return Err(TrainError::NonFinite {
                iter: self.iter,
                snapshot: snapshot(&batch.picks, &batch.input),
            });
        }
        self.update()?;
        Ok(report)
    }

    fn mixed_pass(
        &self,
        net: &mut IntrinsicNet,
        syn: &SyntheticBatch,
        pairs: &PairBatch,
        learn: bool,
    ) -> Result<LossReport, TrainError> {
        let ns = syn.input.shape().n;
        let np = pairs.first.shape().n;
        let filter = if self.config.filter_real {
            Some(
                PairFilter::new(&pairs.guides1, &pairs.guides2, &self.config.bilateral)
                    .map_err(LossError::from)?,
            )
        } else {
            None
        };
        let input =
            Tensor::stack_batch(&[syn.input.clone(), pairs.first.clone(), pairs.second.clone()])?;
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let out = net.forward(&mut tape, x, BatchNormMode::Train)?;
        let r = out.reflectance;
        let s = out.shading;
        let rs = tape.slice_batch(r, 0, ns)?;
        let ss = tape.slice_batch(s, 0, ns)?;
        let xs = tape.slice_batch(x, 0, ns)?;
        let r_gt = tape.constant(syn.reflectance.clone());
        let s_gt = tape.constant(syn.shading.clone());
        let (syn_loss, syn_report) = synthetic_loss(&mut tape, rs, ss, r_gt, s_gt, xs)?;
        let vars = PairVars {
            r1: tape.slice_batch(r, ns, np)?,
            s1: tape.slice_batch(s, ns, np)?,
            r2: tape.slice_batch(r, ns + np, np)?,
            s2: tape.slice_batch(s, ns + np, np)?,
            i1: tape.slice_batch(x, ns, np)?,
            i2: tape.slice_batch(x, ns + np, np)?,
        };
        let (real_loss, real_report) = real_pair_loss(&mut tape, vars, filter.as_ref())?;
        let weights = LossWeights {
            omega: self.config.omega,
        };
        let (loss, report) = total_loss(
            &mut tape,
            (syn_loss, &syn_report),
            Some((real_loss, &real_report)),
            weights,
        )?;
        if learn && report.total.is_finite() {
            let grads = tape.backward(loss)?;
            net.zero_grad();
            net.accumulate_grads(&grads, &out)?;
        }
        Ok(report)
    }

    /// Recomputes the stage-2 loss of a batch without changing the trainer.
    pub fn mixed_loss_of(
        &self,
        syn: &SyntheticBatch,
        pairs: &PairBatch,
    ) -> Result<LossReport, TrainError> {
        let mut net = self.net.clone();
        self.mixed_pass(&mut net, syn, pairs, false)
    }

    /// One stage-2 optimizer step. A solver failure skips the batch,
    /// leaving the model untouched, and returns `Ok(None)`.
    pub fn train_on_mixed(
        &mut self,
        syn: &SyntheticBatch,
        pairs: &PairBatch,
    ) -> Result<Option<LossReport>, TrainError> {
        let mut net = self.net.clone();
        let report = match self.mixed_pass(&mut net, syn, pairs, true) {
            Ok(r) => r,
            Err(TrainError::Loss(LossError::Solver(SolverError::Convergence { .. })))
            | Err(TrainError::Loss(LossError::Tensor(TensorError::Backward { .. }))) => {
                self.skipped += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        if !report.total.is_finite() {
            return Err(TrainError::NonFinite {
                iter: self.iter,
                snapshot: format!(
                    "synthetic {}; pairs {}",
                    snapshot(&syn.picks, &syn.input),
                    snapshot(&pairs.picks, &pairs.first)
                ),
            });
        }
        self.net = net;
        self.update()?;
        Ok(Some(report))
    }

    fn maybe_checkpoint(&self, stage: u8) -> Result<(), TrainError> {
        let every = self.config.checkpoint_every;
        if let Some(dir) = &self.config.checkpoint_dir {
            if every > 0 && self.iter.is_multiple_of(every) {
                std::fs::create_dir_all(dir)?;
                self.net
                    .save(&dir.join(format!("stage{stage}_iter{:06}.ckpt", self.iter)))?;
            }
        }
        Ok(())
    }

    /// Runs `stage1_iters` synthetic-only steps.
    pub fn run_stage1(
        &mut self,
        data: &[IntrinsicTriplet],
        mut on_entry: impl FnMut(&LogEntry),
    ) -> Result<TrainLog, TrainError> {
        let multiple = self.net.config().multiple();
        let min_dim = data
            .iter()
            .map(|t| t.input.width().min(t.input.height()))
            .min();
        self.config.validate(multiple, min_dim)?;
        let mut log = TrainLog::default();
        for _ in 0..self.config.stage1_iters {
            let start = Instant::now();
            let batch = self.next_synthetic_batch(data, self.config.stage1_batch)?;
            let report = self.train_on_synthetic(&batch)?;
            if self.iter.is_multiple_of(self.config.log_every) {
                let entry = LogEntry {
                    iter: self.iter,
                    e_syn: report.e_syn.unwrap_or(report.total),
                    e_real: None,
                    total: report.total,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                };
                on_entry(&entry);
                log.entries.push(entry);
            }
            self.maybe_checkpoint(1)?;
        }
        Ok(log)
    }

    /// Runs `stage2_iters` mixed steps; skipped batches still consume an
    /// iteration and are counted.
    pub fn run_stage2(
        &mut self,
        data: &[IntrinsicTriplet],
        groups: &[RealSceneGroup],
        mut on_entry: impl FnMut(&LogEntry),
    ) -> Result<TrainLog, TrainError> {
        let multiple = self.net.config().multiple();
        let min_dim = data
            .iter()
            .map(|t| t.input.width().min(t.input.height()))
            .chain(groups.iter().map(|g| g.width().min(g.height())))
            .min();
        self.config.validate(multiple, min_dim)?;
        if groups.is_empty() && self.config.stage2_real > 0 {
            return Err(TrainError::Config("stage 2 needs real scene groups".into()));
        }
        let mut log = TrainLog::default();
        let skipped_before = self.skipped;
        for _ in 0..self.config.stage2_iters {
            let start = Instant::now();
            let syn = self.next_synthetic_batch(data, self.config.stage2_synthetic)?;
            let report = if self.config.stage2_real == 0 {
                Some(self.train_on_synthetic(&syn)?)
            } else {
                let pairs = self.next_pair_batch(groups, self.config.stage2_real)?;
                self.train_on_mixed(&syn, &pairs)?
            };
            if let Some(report) = report {
                if self.iter.is_multiple_of(self.config.log_every) {
                    let entry = LogEntry {
                        iter: self.iter,
                        e_syn: report.e_syn.unwrap_or(report.total),
                        e_real: report.e_real,
                        total: report.total,
                        wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    };
                    on_entry(&entry);
                    log.entries.push(entry);
                }
                self.maybe_checkpoint(2)?;
            }
        }
        log.skipped = self.skipped - skipped_before;
        Ok(log)
    }
}

/// Stage 1 from a fresh optimizer state.
pub fn train_stage1(
    net: IntrinsicNet,
    data: &[IntrinsicTriplet],
    config: &TrainConfig,
) -> Result<(IntrinsicNet, TrainLog), TrainError> {
    let mut trainer = Trainer::new(net, config.clone());
    let log = trainer.run_stage1(data, |_| {})?;
    Ok((trainer.net, log))
}

/// Stage 2 from a fresh optimizer state.
pub fn train_stage2(
    net: IntrinsicNet,
    data: &[IntrinsicTriplet],
    groups: &[RealSceneGroup],
    config: &TrainConfig,
) -> Result<(IntrinsicNet, TrainLog), TrainError> {
    let mut trainer = Trainer::new(net, config.clone());
    let log = trainer.run_stage2(data, groups, |_| {})?;
    Ok((trainer.net, log))
}
