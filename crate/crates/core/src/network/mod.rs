//! Encoder with two decoders producing reflectance and shading.
//!
//! Each encoder level is a stride-2 3x3 convolution, batch norm and ReLU.
//! Each decoder level upsamples by two, concatenates the encoder feature of
//! the same resolution (the input image at full resolution), then applies a
//! 3x3 convolution, batch norm and ReLU. A 1x1 convolution with softplus
//! produces 3 reflectance channels and 1 shading channel.

mod checkpoint;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{crop, reflect_pad, ImageError, ImageF};
use crate::tensor::{
    BatchNormMode, Gradients, Parameter, RunningStats, Shape, Tape, Tensor, TensorError, Var,
};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input {axis} {size} is not a multiple of {multiple}")]
    Divisibility {
        axis: &'static str,
        size: usize,
        multiple: usize,
    },
    #[error("input must have {expected} channels, got {actual}")]
    Channels { expected: usize, actual: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub kernel: usize,
    pub input_channels: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            levels: 4,
            base_channels: 16,
            kernel: 3,
            input_channels: 3,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.levels == 0 {
            return Err(NetError::Config("levels must be >= 1".into()));
        }
        if self.base_channels == 0 {
            return Err(NetError::Config("base_channels must be >= 1".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(NetError::Config(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.input_channels != 3 {
            return Err(NetError::Config("input_channels must be 3".into()));
        }
        if self.levels > 16 {
            return Err(NetError::Config("levels must be <= 16".into()));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.levels
    }

    /// Output channels of encoder level `k`.
    pub fn encoder_channels(&self, k: usize) -> usize {
        self.base_channels << k
    }

    /// Output channels of decoder level `k`.
    pub fn decoder_channels(&self, k: usize) -> usize {
        if k == 0 {
            self.base_channels
        } else {
            self.base_channels << (k - 1)
        }
    }

    fn skip_channels(&self, k: usize) -> usize {
        if k == 0 {
            self.input_channels
        } else {
            self.encoder_channels(k - 1)
        }
    }

    fn decoder_input_channels(&self, k: usize) -> usize {
        let below = if k + 1 == self.levels {
            self.encoder_channels(self.levels - 1)
        } else {
            self.decoder_channels(k + 1)
        };
        below + self.skip_channels(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBlock {
    weight: Parameter,
    gamma: Parameter,
    beta: Parameter,
    stats: RunningStats,
    stride: usize,
}

impl ConvBlock {
    fn new(
        prefix: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ConvBlock {
            weight: Parameter::new(
                format!("{prefix}.conv.weight"),
                he_normal(cout, cin, k, rng),
            ),
            gamma: Parameter::new(
                format!("{prefix}.bn.gamma"),
                Tensor::full(Shape::new(1, cout, 1, 1), 1.0),
            ),
            beta: Parameter::new(
                format!("{prefix}.bn.beta"),
                Tensor::zeros(Shape::new(1, cout, 1, 1)),
            ),
            stats: RunningStats::new(cout),
            stride,
        }
    }

    fn forward(
        &mut self,
        tape: &mut Tape,
        x: Var,
        mode: BatchNormMode,
        vars: &mut Vec<Var>,
    ) -> Result<Var, NetError> {
        let w = tape.param(&self.weight);
        let g = tape.param(&self.gamma);
        let b = tape.param(&self.beta);
        vars.extend([w, g, b]);
        let pad = self.weight.value.shape().h / 2;
        let y = tape.conv2d(x, w, None, self.stride, pad)?;
        let y = tape.batch_norm2d(y, g, b, &mut self.stats, mode, BN_MOMENTUM, BN_EPSILON)?;
        Ok(tape.relu(y)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    weight: Parameter,
    bias: Parameter,
}

impl Head {
    fn new(prefix: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Head {
            weight: Parameter::new(format!("{prefix}.weight"), he_normal(cout, cin, 1, rng)),
            bias: Parameter::new(
                format!("{prefix}.bias"),
                Tensor::zeros(Shape::new(1, cout, 1, 1)),
            ),
        }
    }

    fn forward(&self, tape: &mut Tape, x: Var, vars: &mut Vec<Var>) -> Result<Var, NetError> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        vars.extend([w, b]);
        let y = tape.conv2d(x, w, Some(b), 1, 0)?;
        Ok(tape.softplus(y)?)
    }
}

fn he_normal(cout: usize, cin: usize, k: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let fan_in = (cin * k * k) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
    Tensor::from_fn(Shape::new(cout, cin, k, k), |_| normal.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
struct Decoder {
    /// Ordered as applied: level `levels - 1` first.
    blocks: Vec<ConvBlock>,
    head: Head,
}

impl Decoder {
    fn new(name: &str, config: &NetConfig, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let blocks = (0..config.levels)
            .rev()
            .map(|k| {
                ConvBlock::new(
                    &format!("{name}_decoder.block{k}"),
                    config.decoder_input_channels(k),
                    config.decoder_channels(k),
                    config.kernel,
                    1,
                    rng,
                )
            })
            .collect();
        let head = Head::new(
            &format!("{name}_head"),
            config.base_channels,
            out_channels,
            rng,
        );
        Decoder { blocks, head }
    }

    fn forward(
        &mut self,
        tape: &mut Tape,
        skips: &[Var],
        mode: BatchNormMode,
        vars: &mut Vec<Var>,
    ) -> Result<Var, NetError> {
        // skips[0] is the input, skips[k + 1] encoder level k.
        let levels = self.blocks.len();
        let mut x = skips[levels];
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let k = levels - 1 - i;
            let up = tape.bilinear_upsample2x(x)?;
            let cat = tape.concat_channels(up, skips[k])?;
            x = block.forward(tape, cat, mode, vars)?;
        }
        self.head.forward(tape, x, vars)
    }
}

/// Reflectance and shading handles from one forward pass, plus the tape
/// handles of every parameter in [`IntrinsicNet::parameters`] order.
#[derive(Debug, Clone)]
pub struct NetOutput {
    pub reflectance: Var,
    pub shading: Var,
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicNet {
    config: NetConfig,
    encoder: Vec<ConvBlock>,
    reflectance: Decoder,
    shading: Decoder,
}

impl IntrinsicNet {
    /// He-normal initialization from `config.seed`.
    pub fn new(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = (0..config.levels)
            .map(|k| {
                let cin = if k == 0 {
                    config.input_channels
                } else {
                    config.encoder_channels(k - 1)
                };
                ConvBlock::new(
                    &format!("encoder.block{k}"),
                    cin,
                    config.encoder_channels(k),
                    config.kernel,
                    2,
                    &mut rng,
                )
            })
            .collect();
        let reflectance = Decoder::new("reflectance", &config, 3, &mut rng);
        let shading = Decoder::new("shading", &config, 1, &mut rng);
        Ok(IntrinsicNet {
            config,
            encoder,
            reflectance,
            shading,
        })
    }

    /// The classic trivial baseline: reflectance proportional to the input,
    /// constant shading. Used as a known-answer model.
    pub fn baseline_passthrough(config: NetConfig) -> Result<Self, NetError> {
        let mut net = IntrinsicNet::new(config)?;
        let c = &net.config;
        let center = c.kernel / 2;
        let below = c.decoder_input_channels(0) - c.input_channels;
        for decoder in [&mut net.reflectance, &mut net.shading] {
            let block = decoder.blocks.last_mut().expect("at least one level");
            let w = &mut block.weight.value;
            let s = w.shape();
            w.data_mut().fill(0.0);
            for ch in 0..c.input_channels.min(s.n) {
                let idx = w.index(ch, below + ch, center, center);
                w.data_mut()[idx] = 1.0;
            }
        }
        let head = &mut net.reflectance.head;
        head.weight.value.data_mut().fill(0.0);
        for ch in 0..3 {
            let idx = head.weight.value.index(ch, ch, 0, 0);
            head.weight.value.data_mut()[idx] = 1000.0;
        }
        // softplus(b) = 1e-3 keeps R * S at the input's scale
        net.shading.head.weight.value.data_mut().fill(0.0);
        net.shading
            .head
            .bias
            .value
            .data_mut()
            .fill(1e-3f64.exp_m1().ln());
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    /// Parameters in a fixed declaration order.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for b in &self.encoder {
            out.extend([&b.weight, &b.gamma, &b.beta]);
        }
        for d in [&self.reflectance, &self.shading] {
            for b in &d.blocks {
                out.extend([&b.weight, &b.gamma, &b.beta]);
            }
            out.extend([&d.head.weight, &d.head.bias]);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for b in &mut self.encoder {
            out.extend([&mut b.weight, &mut b.gamma, &mut b.beta]);
        }
        for d in [&mut self.reflectance, &mut self.shading] {
            for b in &mut d.blocks {
                out.extend([&mut b.weight, &mut b.gamma, &mut b.beta]);
            }
            out.extend([&mut d.head.weight, &mut d.head.bias]);
        }
        out
    }

    fn blocks(&self) -> impl Iterator<Item = &ConvBlock> {
        self.encoder
            .iter()
            .chain(&self.reflectance.blocks)
            .chain(&self.shading.blocks)
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut ConvBlock> {
        self.encoder
            .iter_mut()
            .chain(&mut self.reflectance.blocks)
            .chain(&mut self.shading.blocks)
    }

    /// Batch-norm running statistics as `(name prefix, stats)`.
    pub fn running_stats(&self) -> Vec<(String, &RunningStats)> {
        self.blocks()
            .map(|b| {
                let prefix = b.weight.name.trim_end_matches(".conv.weight");
                (format!("{prefix}.bn"), &b.stats)
            })
            .collect()
    }

    pub(crate) fn running_stats_mut(&mut self) -> Vec<&mut RunningStats> {
        self.blocks_mut().map(|b| &mut b.stats).collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Adds the gradients of `out.params` into each parameter's `grad`.
    pub fn accumulate_grads(&mut self, grads: &Gradients, out: &NetOutput) -> Result<(), NetError> {
        let params = self.parameters_mut();
        if params.len() != out.params.len() {
            return Err(NetError::Format("parameter handle count mismatch".into()));
        }
        for (p, v) in params.into_iter().zip(&out.params) {
            p.accumulate_grad(&grads.get(*v))?;
        }
        Ok(())
    }

    fn check_input(&self, s: Shape) -> Result<(), NetError> {
        if s.c != self.config.input_channels {
            return Err(NetError::Channels {
                expected: self.config.input_channels,
                actual: s.c,
            });
        }
        let m = self.config.multiple();
        for (axis, size) in [("height", s.h), ("width", s.w)] {
            if size == 0 || size % m != 0 {
                return Err(NetError::Divisibility {
                    axis,
                    size,
                    multiple: m,
                });
            }
        }
        Ok(())
    }

    /// Records a forward pass. In train mode batch norm uses batch
    /// statistics and updates the running estimates.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        input: Var,
        mode: BatchNormMode,
    ) -> Result<NetOutput, NetError> {
        self.check_input(tape.shape(input))?;
        let mut params = Vec::new();
        let mut skips = vec![input];
        let mut x = input;
        for block in &mut self.encoder {
            x = block.forward(tape, x, mode, &mut params)?;
            skips.push(x);
        }
        let reflectance = self.reflectance.forward(tape, &skips, mode, &mut params)?;
        let shading = self.shading.forward(tape, &skips, mode, &mut params)?;
        Ok(NetOutput {
            reflectance,
            shading,
            params,
        })
    }

    /// Eval-mode forward without touching the model.
    pub fn infer(&self, input: &Tensor) -> Result<(Tensor, Tensor), NetError> {
        let mut frozen = self.clone();
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let out = frozen.forward(&mut tape, x, BatchNormMode::Eval)?;
        Ok((
            tape.value(out.reflectance).clone(),
            tape.value(out.shading).clone(),
        ))
    }

    /// Decomposes an image of any size: reflect-pads to the required
    /// multiple, runs eval-mode inference and crops back.
    pub fn decompose(&self, input: &ImageF) -> Result<(ImageF, ImageF), NetError> {
        let m = self.config.multiple();
        let (w, h) = (input.width(), input.height());
        let pw = w.div_ceil(m) * m;
        let ph = h.div_ceil(m) * m;
        let padded = reflect_pad(input, pw, ph)?;
        let (r, s) = self.infer(&ImageF::to_tensor(&[&padded])?)?;
        let r = crop(&ImageF::from_tensor(&r, 0)?, 0, 0, w, h)?;
        let s = crop(&ImageF::from_tensor(&s, 0)?, 0, 0, w, h)?;
        Ok((r, s))
    }
}
