//! Single-layer LSTM over a whole sequence, with backpropagation through time.
//!
//! Gate rows of the weight matrix are stacked as `[input; forget; cell; output]`,
//! each `hidden` rows tall, and act on the concatenation `[x_t; h_{t-1}]`.

use rand::Rng;

use super::{init, NnError, Result, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `[4·hidden, input + hidden]`
    pub weight: Tensor,
    /// `[4·hidden]`
    pub bias: Tensor,
}

impl LstmLayer {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            weight: Tensor::zeros([4 * hidden_size, input_size + hidden_size]),
            bias: Tensor::zeros([4 * hidden_size]),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate at 1.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let weight = init::glorot_uniform(
            [4 * hidden_size, input_size + hidden_size],
            input_size + hidden_size,
            4 * hidden_size,
            rng,
        );
        Self {
            input_size,
            hidden_size,
            weight,
            bias: forget_biased(hidden_size),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, xs: &Tensor, h0: &Tensor, c0: &Tensor) -> Result<(Tensor, LstmCache)> {
        lstm_sequence(&self.weight, &self.bias, xs, h0, c0)
    }
}

/// Bias vector with the forget-gate block set to one.
pub fn forget_biased(hidden: usize) -> Tensor {
    let mut b = Tensor::zeros([4 * hidden]);
    b.data_mut()[hidden..2 * hidden].fill(1.0);
    b
}

/// Activations saved for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input_size: usize,
    hidden: usize,
    /// `[x_t; h_{t-1}]` per step.
    concat: Vec<Vec<f64>>,
    /// Post-activation gates `[i, f, g, o]` per step.
    gates: Vec<Vec<f64>>,
    /// Cell states `c_0 ..= c_T`.
    cells: Vec<Vec<f64>>,
}

/// Gradients of one sequence pass.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub weight: Tensor,
    pub bias: Tensor,
    pub inputs: Tensor,
    pub h0: Tensor,
    pub c0: Tensor,
}

fn check_shapes(w: &Tensor, b: &Tensor, xs: &Tensor) -> Result<(usize, usize, usize)> {
    w.expect_rank(2, "LSTM weight")?;
    xs.expect_rank(2, "LSTM input sequence")?;
    let hidden = w.shape()[0] / 4;
    let (steps, input) = (xs.shape()[0], xs.shape()[1]);
    if hidden == 0 || w.shape()[0] != 4 * hidden || w.shape()[1] != input + hidden {
        return Err(NnError::ShapeMismatch(format!(
            "LSTM weight {:?} inconsistent with input size {input}",
            w.shape()
        )));
    }
    if b.shape() != [4 * hidden] {
        return Err(NnError::ShapeMismatch(format!("LSTM bias {:?}", b.shape())));
    }
    if steps == 0 {
        return Err(NnError::ShapeMismatch("LSTM sequence must have T >= 1".into()));
    }
    Ok((steps, input, hidden))
}

/// Runs the recurrence over `xs: [T, input]`, returning every `h_t` as `[T, hidden]`.
pub fn lstm_sequence(
    w: &Tensor,
    b: &Tensor,
    xs: &Tensor,
    h0: &Tensor,
    c0: &Tensor,
) -> Result<(Tensor, LstmCache)> {
    let (steps, input, hidden) = check_shapes(w, b, xs)?;
    if h0.shape() != [hidden] || c0.shape() != [hidden] {
        return Err(NnError::ShapeMismatch(format!(
            "initial states {:?}/{:?} for hidden size {hidden}",
            h0.shape(),
            c0.shape()
        )));
    }
    let cols = input + hidden;
    let mut out = Tensor::zeros([steps, hidden]);
    let mut cache = LstmCache {
        input_size: input,
        hidden,
        concat: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        cells: vec![c0.data().to_vec()],
    };
    let mut h = h0.data().to_vec();
    for t in 0..steps {
        let mut z: Vec<f64> = xs.data()[t * input..(t + 1) * input].to_vec();
        z.extend_from_slice(&h);
        let mut gates: Vec<f64> = w
            .data()
            .chunks(cols)
            .zip(b.data())
            .map(|(row, bias)| bias + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if (2 * hidden..3 * hidden).contains(&k) {
                g.tanh()
            } else {
                sigmoid(*g)
            };
        }
        let c_prev = &cache.cells[t];
        let mut c = vec![0.0; hidden];
        for j in 0..hidden {
            let (i, f, g, o) = (
                gates[j],
                gates[hidden + j],
                gates[2 * hidden + j],
                gates[3 * hidden + j],
            );
            c[j] = f * c_prev[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        out.data_mut()[t * hidden..(t + 1) * hidden].copy_from_slice(&h);
        cache.concat.push(z);
        cache.gates.push(gates);
        cache.cells.push(c);
    }
    Ok((out, cache))
}

/// Backpropagation through time given `dhs = ∂L/∂h_t` for every step.
pub fn lstm_backward(w: &Tensor, cache: &LstmCache, dhs: &Tensor) -> Result<LstmGrads> {
    let (input, hidden) = (cache.input_size, cache.hidden);
    let steps = cache.gates.len();
    if dhs.shape() != [steps, hidden] {
        return Err(NnError::ShapeMismatch(format!(
            "LSTM output gradient {:?}, expected [{steps}, {hidden}]",
            dhs.shape()
        )));
    }
    let cols = input + hidden;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros([4 * hidden]);
    let mut dxs = Tensor::zeros([steps, input]);
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dz = vec![0.0; 4 * hidden];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let (c, c_prev) = (&cache.cells[t + 1], &cache.cells[t]);
        for j in 0..hidden {
            let (i, f, g, o) = (
                gates[j],
                gates[hidden + j],
                gates[2 * hidden + j],
                gates[3 * hidden + j],
            );
            let dh = dhs.data()[t * hidden + j] + dh_next[j];
            let tc = c[j].tanh();
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[hidden + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * hidden + j] = dc * i * (1.0 - g * g);
            dz[3 * hidden + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let z = &cache.concat[t];
        let mut dconcat = vec![0.0; cols];
        for (r, (row, dzr)) in w.data().chunks(cols).zip(&dz).enumerate() {
            if *dzr == 0.0 {
                continue;
            }
            db.data_mut()[r] += dzr;
            let dw_row = &mut dw.data_mut()[r * cols..(r + 1) * cols];
            for ((d, zv), (dcv, wv)) in dw_row.iter_mut().zip(z).zip(dconcat.iter_mut().zip(row)) {
                *d += dzr * zv;
                *dcv += dzr * wv;
            }
        }
        dxs.data_mut()[t * input..(t + 1) * input].copy_from_slice(&dconcat[..input]);
        dh_next.copy_from_slice(&dconcat[input..]);
    }
    Ok(LstmGrads {
        weight: dw,
        bias: db,
        inputs: dxs,
        h0: Tensor::from_vec(dh_next),
        c0: Tensor::from_vec(dc_next),
    })
}
