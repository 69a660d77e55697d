use rand::Rng;

use super::{NnError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; the
/// returned mask holds those per-element multipliers for the backward pass.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, rng: &mut impl Rng) -> (Tensor, Option<Vec<f64>>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if mode == Mode::Eval || rate == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    (y, Some(mask))
}

pub fn dropout_backward(dy: &Tensor, mask: Option<&[f64]>) -> Tensor {
    let mut dx = dy.clone();
    if let Some(mask) = mask {
        for (v, m) in dx.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
    dx
}

/// Max-shifted softmax.
pub fn softmax(z: &Tensor) -> Tensor {
    let max = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.data().iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::new(z.shape(), exps.into_iter().map(|e| e / sum).collect())
        .expect("softmax preserves shape")
}

fn true_class(y: &Tensor) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in y.data().iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(NnError::InvalidDistribution("target has several hot entries".into()));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(NnError::InvalidDistribution(format!("target entry {v} is not 0/1")));
        }
    }
    hot.ok_or_else(|| NnError::InvalidDistribution("target has no hot entry".into()))
}

/// `−Σ y_i ln ŷ_i` for a one-hot target, i.e. `−ln ŷ_true`.
pub fn categorical_cross_entropy(y: &Tensor, yhat: &Tensor) -> Result<f64> {
    if y.shape() != yhat.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "target {:?} vs prediction {:?}",
            y.shape(),
            yhat.shape()
        )));
    }
    let k = true_class(y)?;
    if yhat.data().iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(NnError::InvalidDistribution("predictions must be strictly positive".into()));
    }
    let sum: f64 = yhat.data().iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(NnError::InvalidDistribution(format!("predictions sum to {sum}")));
    }
    Ok(-yhat.data()[k].ln())
}

/// Gradient of cross-entropy with respect to the probabilities, `−y / ŷ`.
pub fn cross_entropy_backward(y: &Tensor, yhat: &Tensor) -> Tensor {
    Tensor::new(
        y.shape(),
        y.data().iter().zip(yhat.data()).map(|(t, p)| -t / p).collect(),
    )
    .expect("same shape")
}

/// Fused softmax + cross-entropy gradient with respect to the logits: `ŷ − y`.
pub fn softmax_ce_grad(yhat: &Tensor, y: &Tensor) -> Tensor {
    Tensor::new(
        yhat.shape(),
        yhat.data().iter().zip(y.data()).map(|(p, t)| p - t).collect(),
    )
    .expect("same shape")
}

/// Softmax Jacobian-vector product: `∂L/∂z` from `∂L/∂ŷ`.
pub fn softmax_backward(yhat: &Tensor, dyhat: &Tensor) -> Tensor {
    let inner = yhat.dot(dyhat);
    Tensor::new(
        yhat.shape(),
        yhat.data().iter().zip(dyhat.data()).map(|(p, g)| p * (g - inner)).collect(),
    )
    .expect("same shape")
}

pub fn one_hot(class: usize, classes: usize) -> Tensor {
    let mut t = Tensor::zeros([classes]);
    t.data_mut()[class] = 1.0;
    t
}
