//! Bilinear 2x upsampling, half-pixel centers (align-corners off).

use super::tape::{Op, Tape, Var};
use super::{Shape, Tensor, TensorError};

/// For each output index along an axis: `(lo, hi, weight_of_hi)`.
fn axis_taps(in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * in_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

pub(crate) fn forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let os = Shape::new(s.n, s.c, 2 * s.h, 2 * s.w);
    let ty = axis_taps(s.h);
    let tx = axis_taps(s.w);
    let mut out = vec![0.0; os.numel()];
    let data = x.data();
    for (plane_idx, plane) in data.chunks_exact(s.plane()).enumerate() {
        let dst = &mut out[plane_idx * os.plane()..(plane_idx + 1) * os.plane()];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let r0 = &plane[y0 * s.w..(y0 + 1) * s.w];
            let r1 = &plane[y1 * s.w..(y1 + 1) * s.w];
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                dst[oy * os.w + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Tensor::new(os, out).expect("upsample shape")
}

pub(crate) fn backward(input_shape: Shape, grad: &[f64]) -> Vec<f64> {
    let s = input_shape;
    let ow = 2 * s.w;
    let ty = axis_taps(s.h);
    let tx = axis_taps(s.w);
    let mut gi = vec![0.0; s.numel()];
    for (plane_idx, g) in grad.chunks_exact(4 * s.plane()).enumerate() {
        let dst = &mut gi[plane_idx * s.plane()..(plane_idx + 1) * s.plane()];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let v = g[oy * ow + ox];
                dst[y0 * s.w + x0] += v * (1.0 - fy) * (1.0 - fx);
                dst[y0 * s.w + x1] += v * (1.0 - fy) * fx;
                dst[y1 * s.w + x0] += v * fy * (1.0 - fx);
                dst[y1 * s.w + x1] += v * fy * fx;
            }
        }
    }
    gi
}

impl Tape {
    pub fn bilinear_upsample2x(&mut self, input: Var) -> Result<Var, TensorError> {
        let s = self.shape(input);
        if s.h == 0 || s.w == 0 {
            return Err(TensorError::contract(
                "bilinear_upsample2x",
                "empty spatial extent",
            ));
        }
        let out = forward(self.value(input));
        Ok(self.push(out, Op::Upsample2x { input }, &[input]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_row() {
        let x = Tensor::new(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        let y = forward(&x);
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 4));
        let expected = [0.0, 0.25, 0.75, 1.0];
        for row in 0..2 {
            for (i, e) in expected.iter().enumerate() {
                assert!((y.at(0, 0, row, i) - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::full(Shape::new(2, 3, 3, 5), 0.7);
        let y = forward(&x);
        assert_eq!(y.shape(), Shape::new(2, 3, 6, 10));
        assert!(y.data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }
}
