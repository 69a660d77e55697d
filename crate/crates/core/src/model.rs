//! The three detector variants built from `tensor_nn` layers:
//!
//! * `of_rnn_cnn`: per-frame conv backbone → GAP features `[T, d]` → LSTM
//!   stack → dropout → dense → softmax on the last time step.
//! * `of_cnn`: per-frame backbone → GAP → mean over time → dense → softmax.
//! * `of_rnn`: per-frame flow image average-pooled by `rnn_downsample` and
//!   flattened → LSTM stack → dense → softmax on the last time step.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_nn::{
    self as nn, grad_check, init, AdamConfig, LstmCache, Mode, NnError, ParamSet, Tensor,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label {0} is not 0 (real) or 1 (fake)")]
    BadLabel(u8),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("config sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    OfRnn,
    OfCnn,
    OfRnnCnn,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::OfRnn => "of_rnn",
            Self::OfCnn => "of_cnn",
            Self::OfRnnCnn => "of_rnn_cnn",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "of_rnn" => Ok(Self::OfRnn),
            "of_cnn" => Ok(Self::OfCnn),
            "of_rnn_cnn" => Ok(Self::OfRnnCnn),
            other => Err(format!("unknown variant `{other}` (expected of_rnn, of_cnn or of_rnn_cnn)")),
        }
    }
}

/// One backbone stage: `kernel × kernel` same-padded conv → bias → ReLU → 2×2 max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub backbone: Vec<ConvStage>,
    pub lstm_hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub input: InputShape,
    /// Spatial average-pool factor applied before the LSTM in `of_rnn`.
    pub rnn_downsample: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Three conv3×3/pool stages with 8/16/32 channels, LSTM `[64, 32]`.
    pub fn default_backbone() -> Vec<ConvStage> {
        [8, 16, 32]
            .into_iter()
            .map(|channels| ConvStage { channels, kernel: 3 })
            .collect()
    }

    pub fn new(variant: Variant, frames: usize) -> Self {
        let (backbone, lstm_hidden) = match variant {
            Variant::OfRnnCnn => (Self::default_backbone(), vec![64, 32]),
            Variant::OfCnn => (Self::default_backbone(), vec![]),
            Variant::OfRnn => (vec![], vec![64, 32]),
        };
        Self {
            variant,
            backbone,
            lstm_hidden,
            dropout_rate: 0.5,
            num_classes: 2,
            input: InputShape {
                frames,
                channels: 3,
                height: 112,
                width: 112,
            },
            rnn_downsample: 8,
            seed: 0,
        }
    }

    /// Small gradient-check configuration: `T=3`, `side × side` input, one
    /// 4-channel conv stage and a single 2-unit LSTM layer.
    pub fn reduced(variant: Variant, side: usize) -> Self {
        let mut c = Self::new(variant, 3);
        c.input.height = side;
        c.input.width = side;
        if !c.backbone.is_empty() {
            c.backbone = vec![ConvStage { channels: 4, kernel: 3 }];
        }
        if !c.lstm_hidden.is_empty() {
            c.lstm_hidden = vec![2];
        }
        c.rnn_downsample = side / 2;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        match self.variant {
            Variant::OfCnn if !self.lstm_hidden.is_empty() => {
                return bad("of_cnn takes no LSTM layers".into())
            }
            Variant::OfCnn if self.backbone.is_empty() => return bad("of_cnn needs a backbone".into()),
            Variant::OfRnn if !self.backbone.is_empty() => return bad("of_rnn takes no backbone".into()),
            Variant::OfRnn if self.lstm_hidden.is_empty() => {
                return bad("of_rnn needs LSTM layers".into())
            }
            Variant::OfRnnCnn if self.backbone.is_empty() || self.lstm_hidden.is_empty() => {
                return bad("of_rnn_cnn needs both a backbone and LSTM layers".into())
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2".into());
        }
        let InputShape {
            frames,
            channels,
            height,
            width,
        } = self.input;
        if frames == 0 || channels == 0 || height == 0 || width == 0 {
            return bad(format!("input shape {:?} has a zero extent", self.input));
        }
        if self.backbone.iter().any(|s| s.channels == 0 || s.kernel == 0 || s.kernel % 2 == 0) {
            return bad("backbone stages need channels >= 1 and an odd kernel".into());
        }
        if self.lstm_hidden.contains(&0) {
            return bad("LSTM hidden sizes must be >= 1".into());
        }
        let pool = 1usize << self.backbone.len();
        if height % pool != 0 || width % pool != 0 {
            return bad(format!(
                "{height}x{width} input is not divisible by 2^{} for the pooling stages",
                self.backbone.len()
            ));
        }
        if self.variant == Variant::OfRnn
            && (self.rnn_downsample == 0 || height % self.rnn_downsample != 0 || width % self.rnn_downsample != 0)
        {
            return bad(format!(
                "{height}x{width} input is not divisible by the of_rnn downsample {}",
                self.rnn_downsample
            ));
        }
        Ok(())
    }

    /// Width of the per-frame feature vector entering the sequence stage.
    pub fn feature_dim(&self) -> usize {
        match self.variant {
            Variant::OfRnn => {
                let f = self.rnn_downsample;
                self.input.channels * (self.input.height / f) * (self.input.width / f)
            }
            _ => self.backbone.last().map_or(self.input.channels, |s| s.channels),
        }
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let mut total = 0;
        let mut c_in = self.input.channels;
        for s in &self.backbone {
            total += s.channels * c_in * s.kernel * s.kernel + s.channels;
            c_in = s.channels;
        }
        let mut width = self.feature_dim();
        for &h in &self.lstm_hidden {
            total += 4 * h * (width + h) + 4 * h;
            width = h;
        }
        total + self.num_classes * width + self.num_classes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Parameter slots inside the `ParamSet`.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    convs: Vec<(usize, usize)>,
    lstms: Vec<(usize, usize)>,
    head: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: ParamSet,
}

struct StageCache {
    input: Tensor,
    pre_relu: Tensor,
    pooled_from: Vec<usize>,
}

struct FrameCache {
    stages: Vec<StageCache>,
    gap_input_shape: Vec<usize>,
}

/// Result of one forward (and optionally backward) pass on a clip.
pub struct Pass {
    pub probs: Tensor,
    pub loss: Option<f64>,
    pub grads: Option<Vec<Tensor>>,
}

fn layout_for(config: &ModelConfig, params: &mut ParamSet, rng: Option<&mut ChaCha8Rng>) -> Layout {
    let mut rng = rng;
    let mut tensor = |shape: Vec<usize>, fan_in: usize, fan_out: usize| match rng.as_deref_mut() {
        Some(r) => init::glorot_uniform(shape, fan_in, fan_out, r),
        None => Tensor::zeros(shape),
    };
    let mut convs = Vec::new();
    let mut c_in = config.input.channels;
    for (i, s) in config.backbone.iter().enumerate() {
        let k2 = s.kernel * s.kernel;
        let w = tensor(vec![s.channels, c_in, s.kernel, s.kernel], c_in * k2, s.channels * k2);
        let wi = params.add(format!("conv{i}.weight"), w);
        let bi = params.add(format!("conv{i}.bias"), Tensor::zeros([s.channels]));
        convs.push((wi, bi));
        c_in = s.channels;
    }
    let mut lstms = Vec::new();
    let mut width = config.feature_dim();
    for (i, &h) in config.lstm_hidden.iter().enumerate() {
        let w = tensor(vec![4 * h, width + h], width + h, 4 * h);
        let wi = params.add(format!("lstm{i}.weight"), w);
        let bi = params.add(format!("lstm{i}.bias"), nn::forget_biased(h));
        lstms.push((wi, bi));
        width = h;
    }
    let k = config.num_classes;
    let hw = params.add("head.weight", tensor(vec![k, width], width, k));
    let hb = params.add("head.bias", Tensor::zeros([k]));
    Layout {
        convs,
        lstms,
        head: (hw, hb),
    }
}

/// Builds a model with seeded Glorot-uniform weights.
pub fn build_model(config: ModelConfig) -> Result<Model> {
    config.validate()?;
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layout = layout_for(&config, &mut params, Some(&mut rng));
    Ok(Model {
        config,
        layout,
        params,
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    fn check_clip(&self, clip: &Tensor) -> Result<usize> {
        let InputShape {
            channels,
            height,
            width,
            ..
        } = self.config.input;
        let shape = clip.shape();
        if shape.len() != 4 || shape[0] == 0 || shape[1..] != [channels, height, width] {
            return Err(NnError::ShapeMismatch(format!(
                "clip {shape:?}, expected [T>=1, {channels}, {height}, {width}]"
            ))
            .into());
        }
        Ok(shape[0])
    }

    fn backbone_forward(&self, params: &ParamSet, frame: Tensor, keep: bool) -> Result<(Tensor, Option<FrameCache>)> {
        let mut x = frame;
        let mut stages = Vec::new();
        for ((wi, bi), stage) in self.layout.convs.iter().zip(&self.config.backbone) {
            let mut z = nn::conv2d(&x, params.value(*wi), 1, stage.kernel / 2)?;
            nn::add_channel_bias(&mut z, params.value(*bi))?;
            let (pooled, arg) = nn::maxpool2(&nn::relu(&z))?;
            if keep {
                stages.push(StageCache {
                    input: x,
                    pre_relu: z,
                    pooled_from: arg,
                });
            }
            x = pooled;
        }
        let gap_input_shape = x.shape().to_vec();
        let feat = nn::global_avg_pool(&x)?;
        Ok((feat, keep.then_some(FrameCache { stages, gap_input_shape })))
    }

    fn backbone_backward(&self, params: &ParamSet, cache: FrameCache, dfeat: &Tensor, grads: &mut [Tensor]) -> Result<()> {
        let mut d = nn::global_avg_pool_backward(&cache.gap_input_shape, dfeat);
        for (i, stage) in cache.stages.into_iter().enumerate().rev() {
            let (wi, bi) = self.layout.convs[i];
            let dz = nn::relu_backward(
                &stage.pre_relu,
                &nn::maxpool2_backward(stage.pre_relu.shape(), &stage.pooled_from, &d),
            );
            grads[bi].add_assign(&nn::channel_bias_grad(&dz));
            let pad = self.config.backbone[i].kernel / 2;
            let (dx, dk) = nn::conv2d_backward(&stage.input, params.value(wi), 1, pad, &dz)?;
            grads[wi].add_assign(&dk);
            d = dx;
        }
        Ok(())
    }

    /// Forward pass; with a `target` it also returns the cross-entropy loss and
    /// gradients for every parameter slot.
    pub fn run(
        &self,
        params: &ParamSet,
        clip: &Tensor,
        target: Option<u8>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Pass> {
        let steps = self.check_clip(clip)?;
        if let Some(t) = target {
            if t as usize >= self.config.num_classes {
                return Err(ModelError::BadLabel(t));
            }
        }
        let need_grad = target.is_some();
        let dim = self.config.feature_dim();

        // Per-frame features.
        let mut feats = Tensor::zeros([steps, dim]);
        let mut frame_caches = Vec::new();
        for t in 0..steps {
            let frame = clip.slice_outer(t);
            let feat = if self.config.variant == Variant::OfRnn {
                nn::avg_pool(&frame, self.config.rnn_downsample)?.into_data()
            } else {
                let (f, cache) = self.backbone_forward(params, frame, need_grad)?;
                frame_caches.extend(cache);
                f.into_data()
            };
            feats.data_mut()[t * dim..(t + 1) * dim].copy_from_slice(&feat);
        }

        // Sequence stage → head input.
        let mut lstm_caches: Vec<(Tensor, LstmCache)> = Vec::new();
        let mut head_in = match self.config.variant {
            Variant::OfCnn => {
                let mut mean = vec![0.0; dim];
                for row in feats.data().chunks(dim) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v / steps as f64;
                    }
                }
                Tensor::from_vec(mean)
            }
            _ => {
                let mut seq = feats;
                for ((wi, bi), &h) in self.layout.lstms.iter().zip(&self.config.lstm_hidden) {
                    let zeros = Tensor::zeros([h]);
                    let (out, cache) =
                        nn::lstm_sequence(params.value(*wi), params.value(*bi), &seq, &zeros, &zeros)?;
                    if need_grad {
                        lstm_caches.push((seq, cache));
                    }
                    seq = out;
                }
                seq.slice_outer(steps - 1)
            }
        };
        let mut mask = None;
        if self.config.variant == Variant::OfRnnCnn {
            let (dropped, m) = nn::dropout(&head_in, self.config.dropout_rate, mode, rng);
            head_in = dropped;
            mask = m;
        }
        let (hw, hb) = self.layout.head;
        let logits = nn::dense(&head_in, params.value(hw), params.value(hb))?;
        let probs = nn::softmax(&logits);

        let Some(target) = target else {
            return Ok(Pass {
                probs,
                loss: None,
                grads: None,
            });
        };
        let y = nn::one_hot(target as usize, self.config.num_classes);
        let loss = nn::categorical_cross_entropy(&y, &probs)?;

        // Backward.
        let mut grads: Vec<Tensor> = params.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let dlogits = nn::softmax_ce_grad(&probs, &y);
        let (dhead_in, dw, db) = nn::dense_backward(&head_in, params.value(hw), &dlogits)?;
        grads[hw] = dw;
        grads[hb] = db;
        let dhead_in = nn::dropout_backward(&dhead_in, mask.as_deref());

        let dfeats: Option<Tensor> = match self.config.variant {
            Variant::OfCnn => {
                let per_step: Vec<f64> = dhead_in.data().iter().map(|g| g / steps as f64).collect();
                let mut d = Tensor::zeros([steps, dim]);
                for row in d.data_mut().chunks_mut(dim) {
                    row.copy_from_slice(&per_step);
                }
                Some(d)
            }
            _ => {
                let last = *self.config.lstm_hidden.last().unwrap();
                let mut dhs = Tensor::zeros([steps, last]);
                dhs.data_mut()[(steps - 1) * last..].copy_from_slice(dhead_in.data());
                for (i, (_, cache)) in lstm_caches.iter().enumerate().rev() {
                    let (wi, bi) = self.layout.lstms[i];
                    let g = nn::lstm_backward(params.value(wi), cache, &dhs)?;
                    grads[wi] = g.weight;
                    grads[bi] = g.bias;
                    dhs = g.inputs;
                }
                // of_rnn features come straight from the data.
                (self.config.variant == Variant::OfRnnCnn).then_some(dhs)
            }
        };
        if let Some(dfeats) = dfeats {
            for (t, cache) in frame_caches.into_iter().enumerate() {
                let dfeat = dfeats.slice_outer(t);
                self.backbone_backward(params, cache, &dfeat, &mut grads)?;
            }
        }
        Ok(Pass {
            probs,
            loss: Some(loss),
            grads: Some(grads),
        })
    }

    /// Class probabilities in evaluation mode (dropout off).
    pub fn forward(&self, clip: &Tensor) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.run(&self.params, clip, None, Mode::Eval, &mut rng)?.probs)
    }

    /// Probability of the "fake" class (index 1).
    pub fn predict_score(&self, clip: &Tensor) -> Result<f64> {
        Ok(self.forward(clip)?.data()[1])
    }

    /// Checks every analytic gradient of the loss on one labelled clip against
    /// central differences. In `Mode::Train` dropout uses a fixed mask.
    pub fn grad_check(&mut self, clip: &Tensor, label: u8, mode: Mode, eps: f64, seed: u64) -> Result<f64> {
        let mut params = std::mem::take(&mut self.params);
        let mut failure = None;
        let this = &*self;
        let err = grad_check(&mut params, eps, seed, |p, need| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match this.run(p, clip, Some(label), mode, &mut rng) {
                Ok(pass) => {
                    if need {
                        for (i, g) in pass.grads.unwrap().into_iter().enumerate() {
                            *p.grad_mut(i) = g;
                        }
                    }
                    pass.loss.unwrap()
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        self.params = params;
        match failure {
            Some(e) => Err(e),
            None => Ok(err),
        }
    }

    /// Path of the JSON config sidecar for a model file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes the `DFNN` parameter file and its `<path>.json` config sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| NnError::Io(parent.display().to_string(), e))?;
        }
        self.params.save(path)?;
        let sidecar = Self::sidecar_path(path);
        std::fs::write(&sidecar, self.config.to_json() + "\n").map_err(|e| ModelError::Sidecar {
            path: sidecar.clone(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sidecar = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| ModelError::Sidecar {
            path: sidecar.clone(),
            reason: e.to_string(),
        })?;
        let config = ModelConfig::from_json(&text).map_err(|e| ModelError::Sidecar {
            path: sidecar.clone(),
            reason: e.to_string(),
        })?;
        let loaded = ParamSet::load(path)?;
        Self::from_parts(config, loaded)
    }

    /// Pairs a config with parameters, checking names and shapes.
    pub fn from_parts(config: ModelConfig, loaded: ParamSet) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let layout = layout_for(&config, &mut params, None);
        if loaded.len() != params.len() {
            return Err(ModelError::InvalidConfig(format!(
                "parameter file has {} tensors, config expects {}",
                loaded.len(),
                params.len()
            )));
        }
        for (i, (want, got)) in params.params().iter().zip(loaded.params()).enumerate() {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(ModelError::InvalidConfig(format!(
                    "tensor {i}: file has `{}` {:?}, config expects `{}` {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        Ok(Self {
            config,
            layout,
            params: loaded,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 1e-5,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Mini-batch Adam on the cross-entropy loss with per-epoch shuffling.
///
/// Batch gradients are averaged in sample order, so a run is bit-reproducible
/// from the model seed and `shuffle_seed`.
pub fn train(model: &mut Model, data: &[(Tensor, u8)], cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(ModelError::InvalidTrainConfig("epochs and batch_size must be >= 1".into()));
    }
    if let Some(&(_, bad)) = data.iter().find(|(_, l)| *l > 1) {
        return Err(ModelError::BadLabel(bad));
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5_eedd_4090_u64);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut params = std::mem::take(&mut model.params);
            params.zero_grads();
            for &i in batch {
                let (clip, label) = &data[i];
                let pass = model.run(&params, clip, Some(*label), Mode::Train, &mut dropout_rng);
                let pass = match pass {
                    Ok(p) => p,
                    Err(e) => {
                        model.params = params;
                        return Err(e);
                    }
                };
                loss_sum += pass.loss.unwrap();
                correct += usize::from(argmax(pass.probs.data()) == *label as usize);
                for (slot, g) in pass.grads.unwrap().iter().enumerate() {
                    params.accumulate_grad(slot, g);
                }
            }
            params.scale_grads(1.0 / batch.len() as f64);
            params.adam_step(&adam);
            model.params = params;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(history)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(variant: Variant) -> ModelConfig {
        let mut c = ModelConfig::new(variant, 3);
        c.input.height = 16;
        c.input.width = 16;
        if !c.backbone.is_empty() {
            c.backbone = vec![ConvStage { channels: 4, kernel: 3 }];
        }
        if !c.lstm_hidden.is_empty() {
            c.lstm_hidden = vec![5, 3];
        }
        c.seed = 42;
        c
    }

    fn random_clip(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn param_count_matches_layers() {
        let c = ModelConfig::new(Variant::OfRnnCnn, 9);
        let m = build_model(c.clone()).unwrap();
        // conv: 8·3·9+8, 16·8·9+16, 32·16·9+32; lstm: 4·64·(32+64)+256, 4·32·(64+32)+128; head 2·32+2.
        let expected = (216 + 8) + (1152 + 16) + (4608 + 32) + (24576 + 256) + (12288 + 128) + (64 + 2);
        assert_eq!(c.param_count(), expected);
        assert_eq!(m.param_count(), expected);

        let cnn = build_model(ModelConfig::new(Variant::OfCnn, 9)).unwrap();
        assert!(cnn.param_count() < m.param_count());
        assert_eq!(cnn.param_count(), cnn.config().param_count());
        let rnn = build_model(ModelConfig::new(Variant::OfRnn, 9)).unwrap();
        assert_eq!(rnn.param_count(), rnn.config().param_count());
        assert_eq!(rnn.config().feature_dim(), 3 * 14 * 14);
    }

    #[test]
    fn builds_are_deterministic() {
        let a = build_model(tiny(Variant::OfRnnCnn)).unwrap();
        let b = build_model(tiny(Variant::OfRnnCnn)).unwrap();
        assert_eq!(a.params().to_bytes(), b.params().to_bytes());
        let mut other = tiny(Variant::OfRnnCnn);
        other.seed = 43;
        assert_ne!(build_model(other).unwrap().params().to_bytes(), a.params().to_bytes());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = tiny(Variant::OfCnn);
        c.lstm_hidden = vec![4];
        assert!(matches!(build_model(c), Err(ModelError::InvalidConfig(_))));
        let mut c = tiny(Variant::OfRnn);
        c.backbone = ModelConfig::default_backbone();
        assert!(matches!(build_model(c), Err(ModelError::InvalidConfig(_))));
        let mut c = tiny(Variant::OfRnnCnn);
        c.lstm_hidden.clear();
        assert!(matches!(build_model(c), Err(ModelError::InvalidConfig(_))));
        let mut c = tiny(Variant::OfRnnCnn);
        c.input.height = 15;
        assert!(matches!(build_model(c), Err(ModelError::InvalidConfig(_))));
        let mut c = tiny(Variant::OfRnnCnn);
        c.dropout_rate = 1.0;
        assert!(matches!(build_model(c), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn forward_outputs_distribution() {
        for variant in [Variant::OfRnn, Variant::OfCnn, Variant::OfRnnCnn] {
            let m = build_model(tiny(variant)).unwrap();
            for t in [1, 3, 5] {
                let p = m.forward(&random_clip([t, 3, 16, 16], t as u64)).unwrap();
                assert!((p.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                let s = m.predict_score(&random_clip([t, 3, 16, 16], t as u64)).unwrap();
                assert!(s > 0.0 && s < 1.0);
                assert_eq!(s, p.data()[1]);
            }
        }
    }

    #[test]
    fn eval_forward_is_pure() {
        let m = build_model(tiny(Variant::OfRnnCnn)).unwrap();
        let clip = random_clip([3, 3, 16, 16], 1);
        let a = m.forward(&clip).unwrap();
        let b = m.forward(&clip.clone()).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let m = build_model(tiny(Variant::OfRnnCnn)).unwrap();
        assert!(m.forward(&Tensor::zeros([2, 3, 8, 8])).is_err());
        assert!(m.forward(&Tensor::zeros([0, 3, 16, 16])).is_err());
        assert!(m.forward(&Tensor::zeros([3, 16, 16])).is_err());
    }

    #[test]
    fn reduced_models_pass_gradient_check() {
        for side in [16, 8] {
            for variant in [Variant::OfRnnCnn, Variant::OfCnn, Variant::OfRnn] {
                let mut m = build_model(ModelConfig::reduced(variant, side)).unwrap();
                for seed in 0..5 {
                    let clip = random_clip([3, 3, side, side], seed);
                    let rejected = u8::from(m.predict_score(&clip).unwrap() < 0.5);
                    let err = m.grad_check(&clip, rejected, Mode::Eval, 1e-6, seed).unwrap();
                    assert!(err <= 1e-5, "{variant:?} {side}px seed {seed}: {err:e}");
                }
            }
        }
    }

    #[test]
    fn overfits_single_sample() {
        let mut m = build_model(tiny(Variant::OfRnnCnn)).unwrap();
        let data = vec![(random_clip([3, 3, 16, 16], 9), 1u8)];
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 1,
            lr: 1e-2,
            shuffle_seed: 1,
        };
        let history = train(&mut m, &data, &cfg).unwrap();
        let first = history.first().unwrap().loss;
        let last = history.last().unwrap().loss;
        assert!(last < first, "{first} -> {last}");
        assert!(last < std::f64::consts::LN_2);
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<(Tensor, u8)> = (0..4).map(|i| (random_clip([2, 3, 16, 16], i), (i % 2) as u8)).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 3,
            lr: 1e-3,
            shuffle_seed: 7,
        };
        let run = || {
            let mut m = build_model(tiny(Variant::OfRnnCnn)).unwrap();
            let h = train(&mut m, &data, &cfg).unwrap();
            (m.params().to_bytes(), h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn training_errors() {
        let mut m = build_model(tiny(Variant::OfCnn)).unwrap();
        assert!(matches!(train(&mut m, &[], &TrainConfig::default()), Err(ModelError::EmptyDataset)));
        let bad = vec![(random_clip([2, 3, 16, 16], 0), 3u8)];
        assert!(matches!(train(&mut m, &bad, &TrainConfig::default()), Err(ModelError::BadLabel(3))));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.dfnn");
        let m = build_model(tiny(Variant::OfRnnCnn)).unwrap();
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.params().to_bytes(), m.params().to_bytes());
        assert_eq!(back.config(), m.config());
        let json = std::fs::read_to_string(Model::sidecar_path(&path)).unwrap();
        for key in ["variant", "backbone", "lstm_hidden", "dropout_rate", "seed"] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert!(json.contains("\"of_rnn_cnn\""));

        let other = tiny(Variant::OfCnn);
        assert!(Model::from_parts(other, m.params().clone()).is_err());
    }
}
