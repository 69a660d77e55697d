use super::{NnError, Result, Tensor};

fn check(x: &Tensor, w: &Tensor) -> Result<(usize, usize)> {
    w.expect_rank(2, "dense weight")?;
    let (m, n) = (w.shape()[0], w.shape()[1]);
    if x.shape() != [n] {
        return Err(NnError::ShapeMismatch(format!(
            "dense input {:?} for weight {:?}",
            x.shape(),
            w.shape()
        )));
    }
    Ok((m, n))
}

/// `y = W x + b`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = check(x, w)?;
    if b.shape() != [m] {
        return Err(NnError::ShapeMismatch(format!("dense bias {:?}, expected [{m}]", b.shape())));
    }
    let xd = x.data();
    Ok(Tensor::from_vec(
        w.data()
            .chunks(n)
            .zip(b.data())
            .map(|(row, bias)| bias + row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>())
            .collect(),
    ))
}

/// Returns `(dx, dW, db)`.
pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (m, n) = check(x, w)?;
    if dy.shape() != [m] {
        return Err(NnError::ShapeMismatch(format!("dense output gradient {:?}", dy.shape())));
    }
    let mut dx = Tensor::zeros([n]);
    let mut dw = Tensor::zeros([m, n]);
    let xd = x.data();
    for (i, (row, g)) in w.data().chunks(n).zip(dy.data()).enumerate() {
        for (d, wv) in dx.data_mut().iter_mut().zip(row) {
            *d += wv * g;
        }
        for (d, xv) in dw.data_mut()[i * n..(i + 1) * n].iter_mut().zip(xd) {
            *d = g * xv;
        }
    }
    Ok((dx, dw, dy.clone()))
}
