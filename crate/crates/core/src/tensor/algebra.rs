use super::tape::{Op, Tape, Var};
use super::{Axis, Shape, Tensor, TensorError};

pub(crate) fn mul_channel_backward(a: &Tensor, s: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sa = a.shape();
    let p = sa.plane();
    let mut ga = vec![0.0; g.len()];
    let mut gs = vec![0.0; s.numel()];
    for n in 0..sa.n {
        let sp = s.plane(n, 0);
        let gsp = &mut gs[n * p..(n + 1) * p];
        for c in 0..sa.c {
            let off = (n * sa.c + c) * p;
            let ap = &a.data()[off..off + p];
            for i in 0..p {
                ga[off + i] = g[off + i] * sp[i];
                gsp[i] += g[off + i] * ap[i];
            }
        }
    }
    (ga, gs)
}

pub(crate) fn concat_backward(sa: Shape, sb: Shape, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (ia, ib) = (sa.item(), sb.item());
    let mut ga = Vec::with_capacity(sa.numel());
    let mut gb = Vec::with_capacity(sb.numel());
    for chunk in g.chunks_exact(ia + ib) {
        ga.extend_from_slice(&chunk[..ia]);
        gb.extend_from_slice(&chunk[ia..]);
    }
    (ga, gb)
}

/// Mean over batch items of `(1/N) * ||e_n - alpha_n r_n||^2`, alphas held fixed.
pub(crate) fn residual_mse_forward(e: &Tensor, r: &Tensor, alphas: &[f64]) -> f64 {
    let s = e.shape();
    let per_item = s.item() as f64;
    let total: f64 = (0..s.n)
        .map(|n| {
            let sq: f64 = e
                .batch_item(n)
                .iter()
                .zip(r.batch_item(n))
                .map(|(e, r)| (e - alphas[n] * r).powi(2))
                .sum();
            sq / per_item
        })
        .sum();
    total / s.n as f64
}

pub(crate) fn residual_mse_backward(
    e: &Tensor,
    r: &Tensor,
    alphas: &[f64],
    upstream: f64,
) -> (Vec<f64>, Vec<f64>) {
    let s = e.shape();
    let k = 2.0 * upstream / (s.item() * s.n) as f64;
    let mut ge = Vec::with_capacity(e.numel());
    let mut gr = Vec::with_capacity(e.numel());
    for n in 0..s.n {
        let a = alphas[n];
        for (ev, rv) in e.batch_item(n).iter().zip(r.batch_item(n)) {
            let d = k * (ev - a * rv);
            ge.push(d);
            gr.push(-a * d);
        }
    }
    (ge, gr)
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.shape(a).check_same(&self.shape(b), "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn mul_elementwise(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.shape(a)
            .check_same(&self.shape(b), "mul_elementwise")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.push(out, Op::Mul { a, b }, &[a, b]))
    }

    /// Multiplies every channel of `a` by the single-channel map `s`.
    pub fn mul_broadcast_channel(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        const OP: &str = "mul_broadcast_channel";
        let sa = self.shape(a);
        let ss = self.shape(s);
        if ss.c != 1 {
            return Err(TensorError::dim(OP, Axis::Channel, 1, ss.c));
        }
        Shape::new(sa.n, 1, sa.h, sa.w).check_same(&ss, OP)?;
        let av = self.value(a);
        let sv = self.value(s);
        let p = sa.plane();
        let mut data = vec![0.0; sa.numel()];
        for n in 0..sa.n {
            let sp = sv.plane(n, 0);
            for c in 0..sa.c {
                let off = (n * sa.c + c) * p;
                for i in 0..p {
                    data[off + i] = av.data()[off + i] * sp[i];
                }
            }
        }
        let out = Tensor::new(sa, data)?;
        Ok(self.push(out, Op::MulChannel { a, s }, &[a, s]))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        const OP: &str = "concat_channels";
        let sa = self.shape(a);
        let sb = self.shape(b);
        Shape::new(sa.n, sb.c, sa.h, sa.w).check_same(&sb, OP)?;
        let (ia, ib) = (sa.item(), sb.item());
        let mut data = Vec::with_capacity(sa.numel() + sb.numel());
        for n in 0..sa.n {
            data.extend_from_slice(&self.value(a).data()[n * ia..(n + 1) * ia]);
            data.extend_from_slice(&self.value(b).data()[n * ib..(n + 1) * ib]);
        }
        let out = Tensor::new(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)?;
        Ok(self.push(out, Op::Concat { a, b }, &[a, b]))
    }

    pub fn slice_batch(
        &mut self,
        input: Var,
        start: usize,
        len: usize,
    ) -> Result<Var, TensorError> {
        let out = self.value(input).slice_batch(start, len)?;
        Ok(self.push(out, Op::SliceBatch { input, start }, &[input]))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var, TensorError> {
        let x = self.value(input);
        let out = Tensor::new(x.shape(), x.data().iter().map(|v| v * factor).collect())?;
        Ok(self.push(out, Op::Scale { input, factor }, &[input]))
    }

    pub fn mean_all(&mut self, input: Var) -> Result<Var, TensorError> {
        let x = self.value(input);
        if x.numel() == 0 {
            return Err(TensorError::contract("mean_all", "empty tensor"));
        }
        let out = Tensor::scalar(x.sum() / x.numel() as f64);
        Ok(self.push(out, Op::MeanAll { input }, &[input]))
    }

    /// Scalar `mean_n (1/N) ||estimate_n - alphas[n] * reference_n||^2`.
    ///
    /// The alphas are constants of the recorded node.
    pub fn residual_mse(
        &mut self,
        estimate: Var,
        reference: Var,
        alphas: Vec<f64>,
    ) -> Result<Var, TensorError> {
        const OP: &str = "residual_mse";
        let se = self.shape(estimate);
        se.check_same(&self.shape(reference), OP)?;
        if alphas.len() != se.n {
            return Err(TensorError::dim(OP, Axis::Batch, se.n, alphas.len()));
        }
        if se.numel() == 0 {
            return Err(TensorError::contract(OP, "empty tensor"));
        }
        let value = residual_mse_forward(self.value(estimate), self.value(reference), &alphas);
        let op = Op::ResidualMse {
            estimate,
            reference,
            alphas,
        };
        Ok(self.push(Tensor::scalar(value), op, &[estimate, reference]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_product_of_half_and_two() {
        let mut tape = Tape::new();
        let r = tape.constant(Tensor::full(Shape::new(1, 3, 2, 2), 0.5));
        let s = tape.constant(Tensor::full(Shape::new(1, 1, 2, 2), 2.0));
        let i = tape.mul_broadcast_channel(r, s).unwrap();
        assert!(tape.value(i).data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn concat_three_and_one() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::full(Shape::new(2, 3, 2, 2), 1.0));
        let b = tape.constant(Tensor::full(Shape::new(2, 1, 2, 2), 2.0));
        let c = tape.concat_channels(a, b).unwrap();
        let out = tape.value(c);
        assert_eq!(out.shape(), Shape::new(2, 4, 2, 2));
        assert_eq!(out.at(1, 3, 1, 1), 2.0);
        assert_eq!(out.at(1, 2, 1, 1), 1.0);
    }

    #[test]
    fn add_rejects_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(Shape::new(1, 3, 2, 2)));
        let b = tape.constant(Tensor::zeros(Shape::new(1, 3, 2, 3)));
        assert!(matches!(
            tape.add(a, b),
            Err(TensorError::Dimension {
                axis: Axis::Width,
                ..
            })
        ));
    }

    #[test]
    fn mean_all_gradient_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 2, 2, 2), 3.0), true);
        let m = tape.mean_all(x).unwrap();
        let grads = tape.backward(m).unwrap();
        assert!(grads
            .get(x)
            .data()
            .iter()
            .all(|g| (g - 0.125).abs() < 1e-15));
    }

    #[test]
    fn reused_leaf_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 1, 1, 2), 3.0), true);
        let y = tape.add(x, x).unwrap();
        let z = tape.mul_elementwise(y, x).unwrap(); // 2x^2
        let m = tape.mean_all(z).unwrap();
        let grads = tape.backward(m).unwrap();
        // d/dx mean(2x^2) = 4x / 2
        assert!(grads.get(x).data().iter().all(|g| (g - 6.0).abs() < 1e-12));
    }

    #[test]
    fn unreached_leaf_has_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 1, 1, 2), 3.0), true);
        let unused = tape.leaf(Tensor::full(Shape::new(1, 1, 2, 2), 1.0), true);
        let m = tape.mean_all(x).unwrap();
        let grads = tape.backward(m).unwrap();
        assert!(!grads.reached(unused));
        assert_eq!(grads.get(unused), Tensor::zeros(Shape::new(1, 1, 2, 2)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(Shape::new(1, 1, 1, 2)), true);
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::Contract { .. })
        ));
    }
}
