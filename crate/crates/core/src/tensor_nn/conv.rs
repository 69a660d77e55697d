//! 2-D cross-correlation with zero padding, per-channel bias and ReLU.

use super::{NnError, Result, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        x.expect_rank(3, "conv input")?;
        k.expect_rank(4, "conv kernel")?;
        let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kc != c_in {
            return Err(NnError::ShapeMismatch(format!(
                "kernel expects {kc} input channels, input has {c_in}"
            )));
        }
        if stride == 0 {
            return Err(NnError::ShapeMismatch("stride must be >= 1".into()));
        }
        if kh == 0 || kw == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(NnError::ShapeMismatch(format!(
                "kernel {kh}x{kw} does not fit input {h}x{w} with padding {pad}"
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
            stride,
            pad,
        })
    }

    /// Input row for output row `oy` and kernel row `ky`, if inside the image.
    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        (oy * self.stride + ky).checked_sub(self.pad).filter(|&r| r < self.h)
    }

    /// Output columns whose tap `kx` lands inside the image, and the input
    /// column of the first one.
    fn col_span(&self, kx: usize) -> (usize, usize, usize) {
        let s = self.stride;
        // First ox with ox*s + kx >= pad.
        let lo = if kx >= self.pad { 0 } else { (self.pad - kx).div_ceil(s) };
        // Last ox with ox*s + kx - pad <= w - 1.
        let limit = self.w - 1 + self.pad;
        let hi = if kx > limit { 0 } else { ((limit - kx) / s + 1).min(self.ow) };
        let hi = hi.max(lo);
        (lo, hi, (lo * s + kx).saturating_sub(self.pad))
    }
}

/// `y[o] = Σ_c x[c] ⋆ k[o, c]`, output `[C_out, H', W']`.
pub fn conv2d(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = Geometry::new(x, k, stride, pad)?;
    let mut y = Tensor::zeros([g.c_out, g.oh, g.ow]);
    let (xd, kd) = (x.data(), k.data());
    let yd = y.data_mut();
    for o in 0..g.c_out {
        let out = &mut yd[o * g.oh * g.ow..(o + 1) * g.oh * g.ow];
        for c in 0..g.c_in {
            let plane = &xd[c * g.h * g.w..(c + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wgt = kd[((o * g.c_in + c) * g.kh + ky) * g.kw + kx];
                    let (lo, hi, ix0) = g.col_span(kx);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let Some(iy) = g.in_row(oy, ky) else { continue };
                        let src = &plane[iy * g.w..(iy + 1) * g.w];
                        let dst = &mut out[oy * g.ow + lo..oy * g.ow + hi];
                        if g.stride == 1 {
                            for (d, s) in dst.iter_mut().zip(&src[ix0..]) {
                                *d += wgt * s;
                            }
                        } else {
                            for (j, d) in dst.iter_mut().enumerate() {
                                *d += wgt * src[ix0 + j * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of [`conv2d`] with respect to input and kernel.
pub fn conv2d_backward(
    x: &Tensor,
    k: &Tensor,
    stride: usize,
    pad: usize,
    dy: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let g = Geometry::new(x, k, stride, pad)?;
    if dy.shape() != [g.c_out, g.oh, g.ow] {
        return Err(NnError::ShapeMismatch(format!(
            "conv output gradient {:?}, expected {:?}",
            dy.shape(),
            [g.c_out, g.oh, g.ow]
        )));
    }
    let mut dx = Tensor::zeros(x.shape());
    let mut dk = Tensor::zeros(k.shape());
    let (xd, kd, dyd) = (x.data(), k.data(), dy.data());
    let (dxd, dkd) = (dx.data_mut(), dk.data_mut());
    for o in 0..g.c_out {
        let grad_out = &dyd[o * g.oh * g.ow..(o + 1) * g.oh * g.ow];
        for c in 0..g.c_in {
            let base = c * g.h * g.w;
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let widx = ((o * g.c_in + c) * g.kh + ky) * g.kw + kx;
                    let wgt = kd[widx];
                    let (lo, hi, ix0) = g.col_span(kx);
                    if lo == hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for oy in 0..g.oh {
                        let Some(iy) = g.in_row(oy, ky) else { continue };
                        let row = base + iy * g.w;
                        let go = &grad_out[oy * g.ow + lo..oy * g.ow + hi];
                        if g.stride == 1 {
                            let src = &xd[row + ix0..row + ix0 + go.len()];
                            acc += go.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            let dst = &mut dxd[row + ix0..row + ix0 + go.len()];
                            for (d, gv) in dst.iter_mut().zip(go) {
                                *d += wgt * gv;
                            }
                        } else {
                            for (j, gv) in go.iter().enumerate() {
                                let ix = row + ix0 + j * g.stride;
                                acc += gv * xd[ix];
                                dxd[ix] += wgt * gv;
                            }
                        }
                    }
                    dkd[widx] += acc;
                }
            }
        }
    }
    Ok((dx, dk))
}

/// Adds `b[c]` to every element of channel `c` of a `[C, H, W]` tensor.
pub fn add_channel_bias(x: &mut Tensor, b: &Tensor) -> Result<()> {
    x.expect_rank(3, "biased tensor")?;
    let c = x.shape()[0];
    if b.shape() != [c] {
        return Err(NnError::ShapeMismatch(format!(
            "bias {:?} for {c} channels",
            b.shape()
        )));
    }
    let plane = x.len() / c;
    for (chunk, bias) in x.data_mut().chunks_mut(plane).zip(b.data()) {
        chunk.iter_mut().for_each(|v| *v += bias);
    }
    Ok(())
}

/// Bias gradient: per-channel sum of the output gradient.
pub fn channel_bias_grad(dy: &Tensor) -> Tensor {
    let c = dy.shape()[0];
    let plane = dy.len() / c;
    Tensor::from_vec(dy.data().chunks(plane).map(|ch| ch.iter().sum()).collect())
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Passes `dy` where the forward input was positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if *xv <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}
