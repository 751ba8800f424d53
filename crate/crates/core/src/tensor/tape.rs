use std::sync::Arc;

use super::activation::{self, Activation};
use super::algebra;
use super::batchnorm;
use super::conv;
use super::upsample;
use super::{Shape, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// A linear map recorded as an opaque tape node.
///
/// The forward value is computed by the caller; backward needs only the
/// transpose applied to the upstream gradient.
pub trait LinearMap: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply_transpose(&self, upstream: &Tensor) -> Result<Tensor, String>;
}

/// A named trainable tensor with an accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    pub fn accumulate_grad(&mut self, grad: &Tensor) -> Result<(), TensorError> {
        self.grad
            .shape()
            .check_same(&grad.shape(), "Parameter::accumulate_grad")?;
        self.grad.add_assign(grad.data());
        Ok(())
    }
}

pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    BatchNormTrain {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ChannelAffine {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Upsample2x {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    MulChannel {
        a: Var,
        s: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    SliceBatch {
        input: Var,
        start: usize,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    MeanAll {
        input: Var,
    },
    ResidualMse {
        estimate: Var,
        reference: Var,
        alphas: Vec<f64>,
    },
    Linear {
        input: Var,
        map: Arc<dyn LinearMap>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNormTrain { .. } => "batch_norm2d",
            Op::ChannelAffine { .. } => "batch_norm2d(eval)",
            Op::Activation { .. } => "activation",
            Op::Upsample2x { .. } => "bilinear_upsample2x",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul_elementwise",
            Op::MulChannel { .. } => "mul_broadcast_channel",
            Op::Concat { .. } => "concat_channels",
            Op::SliceBatch { .. } => "slice_batch",
            Op::Scale { .. } => "scale",
            Op::MeanAll { .. } => "mean_all",
            Op::ResidualMse { .. } => "residual_mse",
            Op::Linear { map, .. } => map.name(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation. Nodes are appended in evaluation order,
/// so every node's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant or a trainable input.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, p: &Parameter) -> Var {
        self.leaf(p.value.clone(), true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records `map(input)` where `output` was computed by the caller.
    pub fn linear(
        &mut self,
        input: Var,
        output: Tensor,
        map: Arc<dyn LinearMap>,
    ) -> Result<Var, TensorError> {
        let op = Op::Linear { input, map };
        Ok(self.push(output, op, &[input]))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Adjoints accumulate additively over multiple uses of a value. Leaves
    /// that the loss does not reach report a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::contract(
                "backward",
                format!(
                    "loss must be a scalar, got shape {}",
                    loss_node.value.shape()
                ),
            ));
        }
        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut leaf_grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoint[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = adjoint[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let shape = node.value.shape();
            match &node.op {
                Op::Leaf => {
                    leaf_grads[id] = Some(Tensor::new(shape, g)?);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let grads = conv::conv2d_backward(
                        self.value(*input),
                        self.value(*weight),
                        &g,
                        shape,
                        *stride,
                        *padding,
                        self.requires_grad(*input),
                        self.requires_grad(*weight),
                    );
                    self.accumulate(&mut adjoint, *input, grads.input);
                    self.accumulate(&mut adjoint, *weight, grads.weight);
                    if let Some(b) = bias {
                        self.accumulate(&mut adjoint, *b, Some(grads.bias));
                    }
                }
                Op::BatchNormTrain {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let grads = batchnorm::train_backward(
                        &g,
                        shape,
                        self.value(*gamma).data(),
                        xhat,
                        inv_std,
                    );
                    self.accumulate(&mut adjoint, *input, Some(grads.input));
                    self.accumulate(&mut adjoint, *gamma, Some(grads.gamma));
                    self.accumulate(&mut adjoint, *beta, Some(grads.beta));
                }
                Op::ChannelAffine {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let grads = batchnorm::affine_backward(
                        &g,
                        shape,
                        self.value(*gamma).data(),
                        xhat,
                        inv_std,
                    );
                    self.accumulate(&mut adjoint, *input, Some(grads.input));
                    self.accumulate(&mut adjoint, *gamma, Some(grads.gamma));
                    self.accumulate(&mut adjoint, *beta, Some(grads.beta));
                }
                Op::Activation { input, kind } => {
                    let gi = activation::backward(*kind, self.value(*input).data(), &g);
                    self.accumulate(&mut adjoint, *input, Some(gi));
                }
                Op::Upsample2x { input } => {
                    let gi = upsample::backward(self.shape(*input), &g);
                    self.accumulate(&mut adjoint, *input, Some(gi));
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut adjoint, *a, Some(g.clone()));
                    self.accumulate(&mut adjoint, *b, Some(g));
                }
                Op::Mul { a, b } => {
                    let va = self.value(*a).data();
                    let vb = self.value(*b).data();
                    if self.requires_grad(*a) {
                        let ga = g.iter().zip(vb).map(|(g, b)| g * b).collect();
                        self.accumulate(&mut adjoint, *a, Some(ga));
                    }
                    if self.requires_grad(*b) {
                        let gb = g.iter().zip(va).map(|(g, a)| g * a).collect();
                        self.accumulate(&mut adjoint, *b, Some(gb));
                    }
                }
                Op::MulChannel { a, s } => {
                    let (ga, gs) =
                        algebra::mul_channel_backward(self.value(*a), self.value(*s), &g);
                    self.accumulate(&mut adjoint, *a, Some(ga));
                    self.accumulate(&mut adjoint, *s, Some(gs));
                }
                Op::Concat { a, b } => {
                    let (ga, gb) = algebra::concat_backward(self.shape(*a), self.shape(*b), &g);
                    self.accumulate(&mut adjoint, *a, Some(ga));
                    self.accumulate(&mut adjoint, *b, Some(gb));
                }
                Op::SliceBatch { input, start } => {
                    let full = self.shape(*input);
                    let mut gi = vec![0.0; full.numel()];
                    let offset = start * full.item();
                    gi[offset..offset + g.len()].copy_from_slice(&g);
                    self.accumulate(&mut adjoint, *input, Some(gi));
                }
                Op::Scale { input, factor } => {
                    let gi = g.iter().map(|v| v * factor).collect();
                    self.accumulate(&mut adjoint, *input, Some(gi));
                }
                Op::MeanAll { input } => {
                    let n = self.value(*input).numel();
                    let gi = vec![g[0] / n as f64; n];
                    self.accumulate(&mut adjoint, *input, Some(gi));
                }
                Op::ResidualMse {
                    estimate,
                    reference,
                    alphas,
                } => {
                    let (ge, gr) = algebra::residual_mse_backward(
                        self.value(*estimate),
                        self.value(*reference),
                        alphas,
                        g[0],
                    );
                    self.accumulate(&mut adjoint, *estimate, Some(ge));
                    self.accumulate(&mut adjoint, *reference, Some(gr));
                }
                Op::Linear { input, map } => {
                    let upstream = Tensor::new(shape, g)?;
                    let gi = map.apply_transpose(&upstream).map_err(|message| {
                        TensorError::Backward {
                            op: node.op.name(),
                            message,
                        }
                    })?;
                    self.shape(*input)
                        .check_same(&gi.shape(), "linear backward")?;
                    self.accumulate(&mut adjoint, *input, Some(gi.into_data()));
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients {
            grads: leaf_grads,
            shapes,
        })
    }

    fn accumulate(&self, adjoint: &mut [Option<Vec<f64>>], v: Var, g: Option<Vec<f64>>) {
        let Some(g) = g else { return };
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut adjoint[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a leaf; zeros when the leaf was not reached.
    pub fn get(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0]),
        }
    }

    pub fn reached(&self, v: Var) -> bool {
        matches!(self.grads.get(v.0), Some(Some(_)))
    }
}
