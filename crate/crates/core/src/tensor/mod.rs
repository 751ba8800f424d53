//! Dense NCHW tensors and a define-by-run reverse-mode tape.
//!
//! Values are `f64` throughout. A [`Tape`] records every op applied to
//! [`Var`] handles during one forward pass; [`Tape::backward`] walks the
//! records once in reverse and returns a [`Gradients`] table.

mod activation;
mod algebra;
mod batchnorm;
mod conv;
mod tape;
mod upsample;

pub use activation::Activation;
pub use batchnorm::{BatchNormMode, RunningStats};
pub use tape::{Gradients, LinearMap, Parameter, Tape, Var};

use std::fmt;

use thiserror::Error;

/// Axis of a 4-D tensor, used in dimension errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Batch,
    Channel,
    Height,
    Width,
    Kernel,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Axis::Batch => "batch",
            Axis::Channel => "channel",
            Axis::Height => "height",
            Axis::Width => "width",
            Axis::Kernel => "kernel",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: {axis} dimension mismatch (expected {expected}, got {actual})")]
    Dimension {
        op: &'static str,
        axis: Axis,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: {message}")]
    Contract { op: &'static str, message: String },
    #[error("batch_norm2d: degenerate variance, need at least 2 elements per channel, got {0}")]
    DegenerateVariance(usize),
    #[error("backward through {op} failed: {message}")]
    Backward { op: &'static str, message: String },
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, axis: Axis, expected: usize, actual: usize) -> Self {
        TensorError::Dimension {
            op,
            axis,
            expected,
            actual,
        }
    }

    pub(crate) fn contract(op: &'static str, message: impl Into<String>) -> Self {
        TensorError::Contract {
            op,
            message: message.into(),
        }
    }
}

/// `(batch, channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub(crate) fn check_same(&self, other: &Shape, op: &'static str) -> Result<(), TensorError> {
        let pairs = [
            (Axis::Batch, self.n, other.n),
            (Axis::Channel, self.c, other.c),
            (Axis::Height, self.h, other.h),
            (Axis::Width, self.w, other.w),
        ];
        for (axis, expected, actual) in pairs {
            if expected != actual {
                return Err(TensorError::dim(op, axis, expected, actual));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// A contiguous row-major NCHW buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != shape.numel() {
            return Err(TensorError::contract(
                "Tensor::new",
                format!(
                    "shape {shape} needs {} values, got {}",
                    shape.numel(),
                    data.len()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> f64) -> Self {
        Tensor {
            shape,
            data: (0..shape.numel()).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    /// Slice of one `(n, c)` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Slice of one batch item (all channels).
    pub fn batch_item(&self, n: usize) -> &[f64] {
        let len = self.shape.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack_batch(items: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = items
            .first()
            .ok_or_else(|| TensorError::contract("stack_batch", "no tensors to stack"))?;
        let base = first.shape;
        let mut n = 0;
        let mut data = Vec::new();
        for t in items {
            let s = t.shape;
            Shape::new(s.n, base.c, base.h, base.w).check_same(&s, "stack_batch")?;
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(n, base.c, base.h, base.w),
            data,
        })
    }

    /// Copies batch items `[start, start + len)`.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<Tensor, TensorError> {
        if start + len > self.shape.n {
            return Err(TensorError::dim(
                "slice_batch",
                Axis::Batch,
                self.shape.n,
                start + len,
            ));
        }
        let item = self.shape.item();
        Ok(Tensor {
            shape: Shape::new(len, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[start * item..(start + len) * item].to_vec(),
        })
    }

    pub(crate) fn add_assign(&mut self, other: &[f64]) {
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }
}
