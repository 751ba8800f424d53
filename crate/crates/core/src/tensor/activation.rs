use super::tape::{Op, Tape, Var};
use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softplus,
}

/// `log(1 + e^x)`, returning `x` itself past 30 where the correction is below f64 resolution.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn forward(kind: Activation, x: &[f64]) -> Vec<f64> {
    match kind {
        Activation::Relu => x.iter().map(|v| v.max(0.0)).collect(),
        Activation::Softplus => x.iter().copied().map(softplus).collect(),
    }
}

pub(crate) fn backward(kind: Activation, x: &[f64], grad: &[f64]) -> Vec<f64> {
    match kind {
        Activation::Relu => x
            .iter()
            .zip(grad)
            .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
            .collect(),
        Activation::Softplus => x
            .iter()
            .zip(grad)
            .map(|(x, g)| if *x > 30.0 { *g } else { g * sigmoid(*x) })
            .collect(),
    }
}

impl Tape {
    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var, TensorError> {
        let x = self.value(input);
        let out = Tensor::new(x.shape(), forward(kind, x.data()))?;
        Ok(self.push(out, Op::Activation { input, kind }, &[input]))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var, TensorError> {
        self.activation(input, Activation::Relu)
    }

    pub fn softplus(&mut self, input: Var) -> Result<Var, TensorError> {
        self.activation(input, Activation::Softplus)
    }
}
