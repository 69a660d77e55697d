use super::{NnError, Result, Tensor};

/// 2×2 max pooling with stride 2; also returns the flat argmax of each window.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    x.expect_rank(3, "maxpool input")?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::OddDimension(h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([c, oh, ow]);
    let mut argmax = vec![0; c * oh * ow];
    let xd = x.data();
    let yd = y.data_mut();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let top = (ch * h + 2 * oy) * w + 2 * ox;
                let mut best = top;
                // Row-major window order; strict `>` keeps the first maximum.
                for idx in [top + 1, top + w, top + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                yd[o] = xd[best];
                argmax[o] = best;
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool2_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&src, g) in argmax.iter().zip(dy.data()) {
        dxd[src] += g;
    }
    dx
}

/// Per-channel spatial mean of a `[C, H, W]` tensor.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(3, "global average pool input")?;
    let c = x.shape()[0];
    let plane = x.shape()[1] * x.shape()[2];
    if plane == 0 {
        return Err(NnError::ShapeMismatch("empty spatial extent".into()));
    }
    let inv = 1.0 / plane as f64;
    Ok(Tensor::from_vec(
        x.data().chunks(plane).take(c).map(|ch| ch.iter().sum::<f64>() * inv).collect(),
    ))
}

pub fn global_avg_pool_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    let plane = input_shape[1] * input_shape[2];
    let inv = 1.0 / plane as f64;
    let mut dx = Tensor::zeros(input_shape);
    for (chunk, g) in dx.data_mut().chunks_mut(plane).zip(dy.data()) {
        chunk.fill(g * inv);
    }
    dx
}

/// Non-overlapping `factor × factor` average pooling (input must divide evenly).
pub fn avg_pool(x: &Tensor, factor: usize) -> Result<Tensor> {
    x.expect_rank(3, "average pool input")?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "{h}x{w} is not divisible by pooling factor {factor}"
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut y = Tensor::zeros([c, oh, ow]);
    let xd = x.data();
    let yd = y.data_mut();
    for ch in 0..c {
        for yy in 0..h {
            let row = &xd[(ch * h + yy) * w..(ch * h + yy + 1) * w];
            let out = &mut yd[(ch * oh + yy / factor) * ow..(ch * oh + yy / factor + 1) * ow];
            for (xx, v) in row.iter().enumerate() {
                out[xx / factor] += v * inv;
            }
        }
    }
    Ok(y)
}
