//! Direct 2-D convolution (cross-correlation) with zero padding.

use super::tape::{Op, Tape, Var};
use super::{Axis, Shape, Tensor, TensorError};

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Output length along one axis.
pub fn conv_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}

/// Range of output positions `o` for which `o * stride + offset` lands in `[0, in_len)`.
#[inline]
fn valid_range(offset: isize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        (-offset + s - 1) / s
    };
    let last = in_len as isize - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let hi = (last / s + 1).min(out_len as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

fn output_shape(
    input: Shape,
    weight: Shape,
    stride: usize,
    padding: usize,
) -> Result<Shape, TensorError> {
    const OP: &str = "conv2d";
    if input.c != weight.c {
        return Err(TensorError::dim(OP, Axis::Channel, weight.c, input.c));
    }
    if stride == 0 {
        return Err(TensorError::contract(OP, "stride must be at least 1"));
    }
    if weight.h.is_multiple_of(2) || weight.w.is_multiple_of(2) {
        return Err(TensorError::contract(
            OP,
            format!("kernel must be odd, got {}x{}", weight.h, weight.w),
        ));
    }
    let oh = conv_output_len(input.h, weight.h, stride, padding)
        .ok_or_else(|| TensorError::dim(OP, Axis::Height, weight.h, input.h + 2 * padding))?;
    let ow = conv_output_len(input.w, weight.w, stride, padding)
        .ok_or_else(|| TensorError::dim(OP, Axis::Width, weight.w, input.w + 2 * padding))?;
    Ok(Shape::new(input.n, weight.n, oh, ow))
}

pub(crate) fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor, TensorError> {
    let is = input.shape();
    let ws = weight.shape();
    let os = output_shape(is, ws, stride, padding)?;
    if let Some(b) = bias {
        if b.numel() != ws.n {
            return Err(TensorError::dim("conv2d", Axis::Channel, ws.n, b.numel()));
        }
    }
    let mut out = vec![0.0; os.numel()];
    let x = input.data();
    let w = weight.data();
    let (kh, kw) = (ws.h, ws.w);
    let in_plane = is.plane();
    let out_plane = os.plane();

    for n in 0..is.n {
        for oc in 0..ws.n {
            let o = &mut out[(n * os.c + oc) * out_plane..(n * os.c + oc + 1) * out_plane];
            if let Some(b) = bias {
                o.fill(b.data()[oc]);
            }
            for ic in 0..is.c {
                let xin = &x[(n * is.c + ic) * in_plane..(n * is.c + ic + 1) * in_plane];
                let wk = &w[(oc * ws.c + ic) * kh * kw..(oc * ws.c + ic + 1) * kh * kw];
                for ky in 0..kh {
                    let oy_off = ky as isize - padding as isize;
                    let (y0, y1) = valid_range(oy_off, stride, is.h, os.h);
                    for kx in 0..kw {
                        let wv = wk[ky * kw + kx];
                        let ox_off = kx as isize - padding as isize;
                        let (x0, x1) = valid_range(ox_off, stride, is.w, os.w);
                        for oy in y0..y1 {
                            let iy = (oy * stride) as isize + oy_off;
                            let row = &xin[iy as usize * is.w..(iy as usize + 1) * is.w];
                            let orow = &mut o[oy * os.w..(oy + 1) * os.w];
                            if stride == 1 {
                                let ix0 = (x0 as isize + ox_off) as usize;
                                let src = &row[ix0..ix0 + (x1 - x0)];
                                for (dst, s) in orow[x0..x1].iter_mut().zip(src) {
                                    *dst += wv * s;
                                }
                            } else {
                                for ox in x0..x1 {
                                    let ix = ((ox * stride) as isize + ox_off) as usize;
                                    orow[ox] += wv * row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(os, out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &[f64],
    os: Shape,
    stride: usize,
    padding: usize,
    need_input: bool,
    need_weight: bool,
) -> ConvGrads {
    let is = input.shape();
    let ws = weight.shape();
    let (kh, kw) = (ws.h, ws.w);
    let x = input.data();
    let w = weight.data();
    let in_plane = is.plane();
    let out_plane = os.plane();

    let mut gx = need_input.then(|| vec![0.0; is.numel()]);
    let mut gw = need_weight.then(|| vec![0.0; ws.numel()]);
    let mut gb = vec![0.0; ws.n];

    for n in 0..is.n {
        for oc in 0..ws.n {
            let go = &grad_out[(n * os.c + oc) * out_plane..(n * os.c + oc + 1) * out_plane];
            gb[oc] += go.iter().sum::<f64>();
            for ic in 0..is.c {
                let in_range = (n * is.c + ic) * in_plane..(n * is.c + ic + 1) * in_plane;
                let xin = &x[in_range.clone()];
                let wbase = (oc * ws.c + ic) * kh * kw;
                for ky in 0..kh {
                    let oy_off = ky as isize - padding as isize;
                    let (y0, y1) = valid_range(oy_off, stride, is.h, os.h);
                    for kx in 0..kw {
                        let ox_off = kx as isize - padding as isize;
                        let (x0, x1) = valid_range(ox_off, stride, is.w, os.w);
                        let wv = w[wbase + ky * kw + kx];
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = ((oy * stride) as isize + oy_off) as usize;
                            let grow = &go[oy * os.w..(oy + 1) * os.w];
                            if stride == 1 {
                                let ix0 = (x0 as isize + ox_off) as usize;
                                let len = x1 - x0;
                                if gw.is_some() {
                                    let row = &xin[iy * is.w + ix0..iy * is.w + ix0 + len];
                                    acc += grow[x0..x1]
                                        .iter()
                                        .zip(row)
                                        .map(|(g, v)| g * v)
                                        .sum::<f64>();
                                }
                                if let Some(gx) = gx.as_mut() {
                                    let dst = &mut gx[in_range.start + iy * is.w + ix0..][..len];
                                    for (d, g) in dst.iter_mut().zip(&grow[x0..x1]) {
                                        *d += wv * g;
                                    }
                                }
                            } else {
                                for ox in x0..x1 {
                                    let ix = ((ox * stride) as isize + ox_off) as usize;
                                    let g = grow[ox];
                                    if gw.is_some() {
                                        acc += g * xin[iy * is.w + ix];
                                    }
                                    if let Some(gx) = gx.as_mut() {
                                        gx[in_range.start + iy * is.w + ix] += wv * g;
                                    }
                                }
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[wbase + ky * kw + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}

impl Tape {
    /// `weight` is `[out_c, in_c, kh, kw]`; `bias`, when present, has `out_c` entries.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let out = conv2d_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        let op = Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        };
        Ok(self.push(out, op, &inputs))
    }
}
