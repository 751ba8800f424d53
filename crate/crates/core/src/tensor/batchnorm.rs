use super::tape::{Op, Tape, Var};
use super::{Axis, Shape, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates.
    Eval,
}

/// Per-channel running mean and (unbiased) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

pub(crate) struct AffineGrads {
    pub input: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

fn for_each_plane(shape: Shape, mut f: impl FnMut(usize, std::ops::Range<usize>)) {
    let p = shape.plane();
    for n in 0..shape.n {
        for c in 0..shape.c {
            let start = (n * shape.c + c) * p;
            f(c, start..start + p);
        }
    }
}

fn channel_sums(shape: Shape, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sa = vec![0.0; shape.c];
    let mut sab = vec![0.0; shape.c];
    for_each_plane(shape, |c, r| {
        sa[c] += a[r.clone()].iter().sum::<f64>();
        sab[c] += a[r.clone()]
            .iter()
            .zip(&b[r])
            .map(|(x, y)| x * y)
            .sum::<f64>();
    });
    (sa, sab)
}

pub(crate) fn train_backward(
    grad: &[f64],
    shape: Shape,
    gamma: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
) -> AffineGrads {
    let m = (shape.n * shape.plane()) as f64;
    // dgamma = sum(g * xhat), dbeta = sum(g)
    let (dbeta, dgamma) = channel_sums(shape, grad, xhat);
    let mut gi = vec![0.0; grad.len()];
    for_each_plane(shape, |c, r| {
        let k = gamma[c] * inv_std[c] / m;
        for i in r {
            gi[i] = k * (m * grad[i] - dbeta[c] - xhat[i] * dgamma[c]);
        }
    });
    AffineGrads {
        input: gi,
        gamma: dgamma,
        beta: dbeta,
    }
}

pub(crate) fn affine_backward(
    grad: &[f64],
    shape: Shape,
    gamma: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
) -> AffineGrads {
    let (dbeta, dgamma) = channel_sums(shape, grad, xhat);
    let mut gi = vec![0.0; grad.len()];
    for_each_plane(shape, |c, r| {
        let k = gamma[c] * inv_std[c];
        for i in r {
            gi[i] = k * grad[i];
        }
    });
    AffineGrads {
        input: gi,
        gamma: dgamma,
        beta: dbeta,
    }
}

impl Tape {
    /// Per-channel batch normalization over `(batch, height, width)`.
    ///
    /// In train mode the running statistics are blended with `momentum`
    /// weight on the new batch estimate.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        mode: BatchNormMode,
        momentum: f64,
        epsilon: f64,
    ) -> Result<Var, TensorError> {
        const OP: &str = "batch_norm2d";
        let shape = self.shape(input);
        for (v, name) in [(gamma, "gamma"), (beta, "beta")] {
            let len = self.value(v).numel();
            if len != shape.c {
                return Err(TensorError::Contract {
                    op: OP,
                    message: format!("{name} has {len} entries for {} channels", shape.c),
                });
            }
        }
        if stats.mean.len() != shape.c || stats.var.len() != shape.c {
            return Err(TensorError::dim(
                OP,
                Axis::Channel,
                shape.c,
                stats.mean.len(),
            ));
        }
        let x = self.value(input).data();
        let m = shape.n * shape.plane();

        let (mean, inv_std) = match mode {
            BatchNormMode::Train => {
                if m < 2 {
                    return Err(TensorError::DegenerateVariance(m));
                }
                let mut mean = vec![0.0; shape.c];
                for_each_plane(shape, |c, r| mean[c] += x[r].iter().sum::<f64>());
                mean.iter_mut().for_each(|v| *v /= m as f64);
                let mut var = vec![0.0; shape.c];
                for_each_plane(shape, |c, r| {
                    var[c] += x[r].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
                });
                let mut inv_std = vec![0.0; shape.c];
                for c in 0..shape.c {
                    let biased = var[c] / m as f64;
                    let unbiased = var[c] / (m - 1) as f64;
                    inv_std[c] = 1.0 / (biased + epsilon).sqrt();
                    stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mean[c];
                    stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * unbiased;
                }
                (mean, inv_std)
            }
            BatchNormMode::Eval => {
                let inv_std = stats
                    .var
                    .iter()
                    .map(|v| 1.0 / (v + epsilon).sqrt())
                    .collect();
                (stats.mean.clone(), inv_std)
            }
        };

        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for_each_plane(shape, |c, r| {
            for i in r {
                xhat[i] = (x[i] - mean[c]) * inv_std[c];
                out[i] = g[c] * xhat[i] + b[c];
            }
        });
        let out = Tensor::new(shape, out)?;
        let op = match mode {
            BatchNormMode::Train => Op::BatchNormTrain {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            BatchNormMode::Eval => Op::ChannelAffine {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        };
        Ok(self.push(out, op, &[input, gamma, beta]))
    }
}
