//! Manifest-driven experiments: splits, the clip preprocessing pipeline,
//! frame-count sweeps and CSV/SVG reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::face_roi::{self, RoiBox, DEFAULT_MARGIN};
use crate::media_io::{self, Frame, FrameSequence};
use crate::metrics::{self, ConfusionMatrix, RocCurve};
use crate::model::{self, EpochStats, Model, ModelConfig, TrainConfig};
use crate::optical_flow::{self, FlowNorm, HsSettings};
use crate::tensor_nn::Tensor;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("manifest line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("manifest line {line}: label `{label}` is not 0 or 1")]
    BadLabel { line: usize, label: String },
    #[error("need at least 2 records, got {0}")]
    TooFewSamples(usize),
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("frame count {0} is below 2")]
    BadFrameCount(usize),
    #[error("{stage} stage failed for {clip}: {message}")]
    Stage {
        stage: &'static str,
        clip: String,
        message: String,
    },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("no results to report")]
    EmptyResults,
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub clip_path: PathBuf,
    pub label: u8,
    pub roi_path: Option<PathBuf>,
    pub split: Split,
}

/// Parses a `clip_path,label[,roi_path]` manifest. Relative paths resolve
/// against the manifest's directory.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<SampleRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header_err = |line| ExperimentError::ParseError {
        line,
        reason: "expected header `clip_path,label[,roi_path]`".into(),
    };
    let (_, header) = lines.next().ok_or_else(|| header_err(1))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_roi = match columns.as_slice() {
        ["clip_path", "label"] => false,
        ["clip_path", "label", "roi_path"] => true,
        _ => return Err(header_err(1)),
    };
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut records = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let expected = if with_roi { 3 } else { 2 };
        if fields.len() != expected && !(with_roi && fields.len() == 2) {
            return Err(ExperimentError::ParseError {
                line,
                reason: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(ExperimentError::ParseError {
                line,
                reason: "empty clip_path".into(),
            });
        }
        let label = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(ExperimentError::BadLabel {
                    line,
                    label: other.to_string(),
                })
            }
        };
        let roi_path = fields.get(2).filter(|s| !s.is_empty()).map(|s| resolve(s));
        records.push(SampleRecord {
            clip_path: resolve(fields[0]),
            label,
            roi_path,
            split: Split::Unassigned,
        });
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

/// Seeded shuffle-then-prefix split with `round(train_frac * N)` training
/// records, stratified by label when each class has at least two members.
pub fn split_dataset(records: &[SampleRecord], train_frac: f64, seed: u64) -> Result<Vec<SampleRecord>> {
    let n = records.len();
    if n < 2 {
        return Err(ExperimentError::TooFewSamples(n));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(ExperimentError::BadFraction(train_frac));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class: Vec<Vec<usize>> = (0..2u8)
        .map(|c| (0..n).filter(|&i| records[i].label == c).collect())
        .collect();

    let mut train = vec![false; n];
    if by_class.iter().all(|c| c.len() >= 2) {
        // Largest-remainder apportionment keeps the total at n_train.
        let ideal: Vec<f64> = by_class.iter().map(|c| n_train as f64 * c.len() as f64 / n as f64).collect();
        let mut quota: Vec<usize> = ideal.iter().map(|q| q.floor() as usize).collect();
        let mut by_remainder = [0, 1];
        by_remainder.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())));
        let mut left = n_train - quota.iter().sum::<usize>();
        while left > 0 {
            let Some(&c) = by_remainder.iter().find(|&&c| quota[c] < by_class[c].len() - 1) else {
                break;
            };
            quota[c] += 1;
            left -= 1;
            by_remainder.rotate_left(1);
        }
        for (c, members) in by_class.iter().enumerate() {
            let mut members = members.clone();
            members.shuffle(&mut rng);
            let q = quota[c].clamp(1, members.len() - 1);
            for &i in &members[..q] {
                train[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..n_train] {
            train[i] = true;
        }
    }
    Ok(records
        .iter()
        .zip(train)
        .map(|(r, t)| SampleRecord {
            split: if t { Split::Train } else { Split::Test },
            ..r.clone()
        })
        .collect())
}

/// Loads a Y4M file or a directory of PGM/PNG frames.
pub fn load_clip(path: &Path) -> Result<FrameSequence, media_io::MediaError> {
    if path.is_dir() {
        let files = media_io::list_image_files(path)?;
        let mut seq = media_io::load_image_sequence(&files)?;
        if seq.source_id().is_empty() {
            seq = FrameSequence::from_frames(seq.into_parts().0, path.display().to_string())?;
        }
        Ok(seq)
    } else {
        let bytes = fs::read(path).map_err(|source| media_io::MediaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let seq = media_io::decode_y4m(&bytes)?;
        let (frames, indices, _) = seq.into_parts();
        FrameSequence::new(frames, indices, path.display().to_string())
    }
}

fn stage<'a, E: std::fmt::Display>(name: &'static str, clip: &'a Path) -> impl FnOnce(E) -> ExperimentError + 'a {
    move |e| ExperimentError::Stage {
        stage: name,
        clip: clip.display().to_string(),
        message: e.to_string(),
    }
}

/// Samples `n` frames (after dropping frames the sidecar marks absent), crops
/// the ROI (sidecar box, else the centred fallback) and returns `size × size`
/// grayscale frames.
pub fn extract_frames(record: &SampleRecord, n: usize, size: usize) -> Result<FrameSequence> {
    let clip = record.clip_path.as_path();
    let seq = load_clip(clip).map_err(stage("decode", clip))?;
    let boxes: HashMap<usize, RoiBox> = match &record.roi_path {
        Some(p) => face_roi::load_roi_sidecar(p)
            .map_err(stage("roi", clip))?
            .into_iter()
            .map(|b| (b.frame_index, b))
            .collect(),
        None => HashMap::new(),
    };
    let (frames, indices, source) = seq.into_parts();
    let (frames, indices): (Vec<Frame>, Vec<usize>) = frames
        .into_iter()
        .zip(indices)
        .filter(|(_, i)| boxes.get(i).is_none_or(|b| b.present))
        .unzip();
    let kept = FrameSequence::new(frames, indices, source).map_err(stage("decode", clip))?;
    let sampled = media_io::sample_uniform(&kept, n).map_err(stage("sample", clip))?;
    let mut out = Vec::with_capacity(n);
    for (frame, idx) in sampled.frames().iter().zip(sampled.frame_indices()) {
        let b = match boxes.get(idx) {
            Some(b) => *b,
            None => face_roi::fallback_center_box(frame, 1.0).map_err(stage("roi", clip))?,
        };
        let crop = face_roi::crop_roi(frame, &b, DEFAULT_MARGIN).map_err(stage("roi", clip))?;
        out.push(media_io::resize_bilinear(&media_io::to_grayscale(&crop), size, size));
    }
    FrameSequence::new(out, sampled.frame_indices().to_vec(), sampled.source_id()).map_err(stage("resize", clip))
}

/// Colorised flow images between consecutive frames, stacked as `[T, 3, H, W]`.
pub fn flow_clip(seq: &FrameSequence, settings: &HsSettings) -> Result<Tensor, optical_flow::FlowError> {
    let frames = seq.frames();
    let mut data = Vec::new();
    for pair in frames.windows(2) {
        let flow = optical_flow::horn_schunck(&pair[0], &pair[1], settings)?;
        data.extend_from_slice(optical_flow::flow_to_rgb(&flow, FlowNorm::PerFrameMax).data());
    }
    let (w, h) = frames.first().map_or((0, 0), |f| (f.width(), f.height()));
    Ok(Tensor::new([frames.len().saturating_sub(1), 3, h, w], data).expect("flow image sizes agree"))
}

/// Full preprocessing of one record into a `[n − 1, 3, size, size]` clip.
pub fn run_pipeline(record: &SampleRecord, n: usize, settings: &HsSettings, size: usize) -> Result<Tensor> {
    if n < 2 {
        return Err(ExperimentError::BadFrameCount(n));
    }
    let frames = extract_frames(record, n, size)?;
    flow_clip(&frames, settings).map_err(stage("flow", &record.clip_path))
}

/// Preprocesses records in parallel; output order follows input order.
pub fn preprocess(records: &[SampleRecord], n: usize, settings: &HsSettings, size: usize) -> Result<Vec<Tensor>> {
    records.par_iter().map(|r| run_pipeline(r, n, settings, size)).collect()
}

/// Scores and metrics of a model on a labelled set (threshold 0.5).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc: RocCurve,
}

impl Evaluation {
    pub fn auc(&self) -> f64 {
        self.roc.auc
    }
}

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Undefined ratios (no predicted or no actual positives) are reported as 0.
pub fn evaluate(model: &Model, data: &[(Tensor, u8)]) -> Result<Evaluation> {
    let mut scores = Vec::with_capacity(data.len());
    for (clip, _) in data {
        scores.push(model.predict_score(clip)?);
    }
    let labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();
    let confusion = metrics::confusion(&labels, &metrics::threshold_predictions(&scores, DECISION_THRESHOLD))?;
    let s = metrics::summary(&confusion);
    let roc = metrics::roc_auc(&labels, &scores)?;
    Ok(Evaluation {
        labels,
        scores,
        confusion,
        accuracy: s.accuracy.unwrap_or(0.0),
        precision: s.precision.unwrap_or(0.0),
        recall: s.recall.unwrap_or(0.0),
        f1: s.f1.unwrap_or(0.0),
        roc,
    })
}

/// How many records of each split were handed to the training loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccessAudit {
    pub train_reads: usize,
    pub test_reads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub frames: usize,
    pub eval: Evaluation,
    pub history: Vec<EpochStats>,
    pub audit: AccessAudit,
}

/// Shared settings of an experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub flow: HsSettings,
    pub size: usize,
}

/// Preprocesses every record at `n` frames, trains a fresh model on the train
/// split and evaluates it on the test split.
pub fn run_experiment(records: &[SampleRecord], n: usize, cfg: &ExperimentConfig) -> Result<(SweepResult, Model)> {
    if n < 2 {
        return Err(ExperimentError::BadFrameCount(n));
    }
    let mut model_cfg = cfg.model.clone();
    model_cfg.input.frames = n - 1;
    model_cfg.input.height = cfg.size;
    model_cfg.input.width = cfg.size;
    let mut model = model::build_model(model_cfg)?;

    let mut audit = AccessAudit::default();
    let train_records: Vec<&SampleRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    let test_records: Vec<&SampleRecord> = records.iter().filter(|r| r.split == Split::Test).collect();
    if train_records.is_empty() {
        return Err(ExperimentError::EmptySplit("train"));
    }
    if test_records.is_empty() {
        return Err(ExperimentError::EmptySplit("test"));
    }
    let load = |set: &[&SampleRecord]| -> Result<Vec<(Tensor, u8)>> {
        let owned: Vec<SampleRecord> = set.iter().map(|r| (*r).clone()).collect();
        let clips = preprocess(&owned, n, &cfg.flow, cfg.size)?;
        Ok(clips.into_iter().zip(owned.iter().map(|r| r.label)).collect())
    };
    let train_set = load(&train_records)?;
    for r in &train_records {
        match r.split {
            Split::Train => audit.train_reads += 1,
            _ => audit.test_reads += 1,
        }
    }
    let history = model::train(&mut model, &train_set, &cfg.train)?;
    drop(train_set);
    let test_set = load(&test_records)?;
    let eval = evaluate(&model, &test_set)?;
    Ok((
        SweepResult {
            frames: n,
            eval,
            history,
            audit,
        },
        model,
    ))
}

/// One experiment per frame count; seeds stay fixed so only the count varies.
pub fn frame_sweep(records: &[SampleRecord], counts: &[usize], cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    if counts.is_empty() {
        return Err(ExperimentError::EmptyResults);
    }
    if let Some(&bad) = counts.iter().find(|&&n| n < 2) {
        return Err(ExperimentError::BadFrameCount(bad));
    }
    counts
        .iter()
        .map(|&n| run_experiment(records, n, cfg).map(|(r, _)| r))
        .collect()
}

/// Published results on the full-size corpora, carried as plot annotations.
pub const REFERENCE_POINTS: [(&str, usize, f64, f64); 3] = [
    ("FF++", 70, 0.9121, 0.91),
    ("Celeb-DF", 90, 0.7949, 0.79),
    ("DFDC", 30, 0.6626, 0.66),
];

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("frames,accuracy,precision,recall,f1,auc\n");
    for r in results {
        let e = &r.eval;
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.frames,
            e.accuracy,
            e.precision,
            e.recall,
            e.f1,
            e.auc()
        )
        .unwrap();
    }
    out
}

const PLOT: f64 = 400.0;
const PAD: f64 = 50.0;

fn svg_open(title: &str) -> String {
    let side = PLOT + 2.0 * PAD;
    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\">\n"
    );
    s.push_str("<!-- Reference points (published, full-size corpora):");
    for (name, frames, acc, auc) in REFERENCE_POINTS {
        write!(s, " {name} {frames} frames acc {acc} AUC {auc};").unwrap();
    }
    s.push_str(" -->\n");
    writeln!(s, "<title>{title}</title>").unwrap();
    writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{PLOT}\" height=\"{PLOT}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    s
}

/// Maps a unit-square point to plot coordinates (y up).
fn to_plot(x: f64, y: f64) -> (f64, f64) {
    (PAD + x * PLOT, PAD + (1.0 - y) * PLOT)
}

fn polyline(points: impl IntoIterator<Item = (f64, f64)>, color: &str, series: &str) -> String {
    let pts: Vec<String> = points
        .into_iter()
        .map(|(x, y)| {
            let (px, py) = to_plot(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "<polyline data-series=\"{series}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

fn legend(s: &mut String, row: usize, color: &str, text: &str) {
    let y = PAD + 15.0 + 16.0 * row as f64;
    writeln!(
        s,
        "<text x=\"{:.0}\" y=\"{y:.0}\" fill=\"{color}\" font-size=\"12\" font-family=\"sans-serif\">{text}</text>",
        PAD + PLOT - 130.0
    )
    .unwrap();
}

/// ROC overlay with one polyline per frame count.
pub fn roc_svg(results: &[SweepResult]) -> String {
    let mut s = svg_open("ROC by frame count");
    s.push_str(&polyline([(0.0, 0.0), (1.0, 1.0)], "#cccccc", "chance"));
    for (i, r) in results.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        s.push_str(&polyline(r.eval.roc.points.iter().copied(), color, &format!("frames={}", r.frames)));
        legend(&mut s, i, color, &format!("{} frames (AUC {:.3})", r.frames, r.eval.auc()));
    }
    s.push_str("</svg>\n");
    s
}

/// Accuracy, precision, recall, F1 and AUC against frame count.
pub fn metrics_svg(results: &[SweepResult]) -> String {
    let mut s = svg_open("Metrics by frame count");
    let lo = results.iter().map(|r| r.frames).min().unwrap_or(0) as f64;
    let hi = results.iter().map(|r| r.frames).max().unwrap_or(1) as f64;
    let xpos = |f: usize| if hi > lo { (f as f64 - lo) / (hi - lo) } else { 0.5 };
    type Getter = fn(&Evaluation) -> f64;
    let series: [(&str, Getter); 5] = [
        ("accuracy", |e| e.accuracy),
        ("precision", |e| e.precision),
        ("recall", |e| e.recall),
        ("f1", |e| e.f1),
        ("auc", |e| e.auc()),
    ];
    for (i, (name, get)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        s.push_str(&polyline(results.iter().map(|r| (xpos(r.frames), get(&r.eval))), color, name));
        legend(&mut s, i, color, name);
    }
    for r in results {
        let (x, y) = to_plot(xpos(r.frames), 0.0);
        writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\">{}</text>",
            y + 16.0,
            r.frames
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `sweep.csv`, `roc_<frames>.csv`, `roc.svg` and
/// `metrics_vs_frames.svg` into `out_dir`.
pub fn emit_report(results: &[SweepResult], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(ExperimentError::EmptyResults);
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = vec![(out_dir.join("sweep.csv"), sweep_csv(results))];
    for r in results {
        files.push((out_dir.join(format!("roc_{}.csv", r.frames)), r.eval.roc.to_csv()));
    }
    files.push((out_dir.join("roc.svg"), roc_svg(results)));
    files.push((out_dir.join("metrics_vs_frames.svg"), metrics_svg(results)));
    for (path, body) in &files {
        fs::write(path, body).map_err(io_err(path))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
