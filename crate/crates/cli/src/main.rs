use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dfflow_core::experiment::{self, ExperimentConfig, SampleRecord, Split, SweepResult};
use dfflow_core::media_io::{self, FrameSequence};
use dfflow_core::model::{self, Model, ModelConfig, TrainConfig, Variant};
use dfflow_core::optical_flow::{self, FlowNorm, HsSettings};
use dfflow_core::synth::{self, DatasetOptions};
use dfflow_core::tensor_nn::{Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optical-flow based detection of temporally inconsistent videos.
#[derive(Debug, Parser)]
#[command(name = "dfflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample frames from a clip, crop the face region and resize.
    Extract {
        /// Y4M file or directory of PGM/PNG frames.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 112)]
        size: usize,
        /// ROI sidecar with `frame_index,x,y,w,h` or `frame_index,absent` lines.
        #[arg(long)]
        roi: Option<PathBuf>,
    },
    /// Horn–Schunck flow between consecutive frames, written as .flo files.
    Flow {
        /// Directory of PGM/PNG frames.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15.0)]
        alpha: f64,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Render .flo files as HSV color PNGs.
    Colorize {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fixed magnitude mapped to full brightness (default: per-frame max).
        #[arg(long)]
        cap: Option<f64>,
    },
    /// Generate a synthetic dataset of coherent (real) and jittered (fake) clips.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        real: usize,
        #[arg(long)]
        fake: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 112)]
        size: usize,
    },
    /// Train a model on the 80% split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// of_rnn, of_cnn or of_rnn_cnn.
        #[arg(long, default_value = "of_rnn_cnn")]
        variant: Variant,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        /// Seeds the split, initialisation, shuffling and dropout.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Frames sampled per clip (the model sees frames − 1 flow images).
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 112)]
        size: usize,
    },
    /// Evaluate a trained model on the test split of a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train and evaluate once per frame count; write CSV and SVG reports.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        frame_counts: Vec<usize>,
        #[arg(long)]
        report: PathBuf,
        /// of_rnn, of_cnn or of_rnn_cnn.
        #[arg(long, default_value = "of_rnn_cnn")]
        variant: Variant,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 112)]
        size: usize,
    },
    /// Finite-difference check of the reduced end-to-end model.
    Gradcheck {
        /// Check every variant at 16×16 and 8×8 over five seeds.
        #[arg(long)]
        full: bool,
    },
}

const TRAIN_FRACTION: f64 = 0.8;
const GRADCHECK_TOL: f64 = 1e-5;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DFFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("DFFLOW_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract {
            input,
            out,
            frames,
            size,
            roi,
        } => extract(input, &out, frames, size, roi),
        Command::Flow {
            frames,
            out,
            alpha,
            iters,
            tol,
        } => flow(&frames, &out, HsSettings { alpha, max_iters: iters, tol }),
        Command::Colorize { flows, out, cap } => colorize(&flows, &out, cap),
        Command::Synth {
            out,
            real,
            fake,
            seed,
            frames,
            size,
        } => {
            let opts = DatasetOptions {
                frames,
                size,
                ..DatasetOptions::default()
            };
            let manifest = synth::gen_dataset(real, fake, &out, seed, &opts).context("synth")?;
            println!("synth: {} clips ({real} real, {fake} fake) -> {}", real + fake, manifest.display());
            Ok(())
        }
        Command::Train {
            manifest,
            variant,
            epochs,
            batch,
            lr,
            seed,
            out,
            frames,
            size,
        } => train(&manifest, variant, epochs, batch, lr, seed, &out, frames, size),
        Command::Eval {
            model,
            manifest,
            report,
        } => eval(&model, &manifest, &report),
        Command::Sweep {
            manifest,
            frame_counts,
            report,
            variant,
            epochs,
            batch,
            lr,
            seed,
            size,
        } => {
            let records = load_split(&manifest, seed)?;
            let mut model = ModelConfig::new(variant, 1);
            model.seed = seed;
            let cfg = ExperimentConfig {
                model,
                train: TrainConfig {
                    epochs,
                    batch_size: batch,
                    lr,
                    shuffle_seed: seed,
                },
                flow: HsSettings::default(),
                size,
            };
            let results = experiment::frame_sweep(&records, &frame_counts, &cfg).context("sweep")?;
            for r in &results {
                println!(
                    "sweep: frames {} accuracy {:.4} auc {:.4}",
                    r.frames,
                    r.eval.accuracy,
                    r.eval.auc()
                );
            }
            experiment::emit_report(&results, &report).context("report")?;
            println!("report: {} frame counts -> {}", results.len(), report.display());
            Ok(())
        }
        Command::Gradcheck { full } => gradcheck(full),
    }
}

fn extract(input: PathBuf, out: &Path, frames: usize, size: usize, roi: Option<PathBuf>) -> Result<()> {
    let record = SampleRecord {
        clip_path: input,
        label: 0,
        roi_path: roi,
        split: Split::Unassigned,
    };
    let seq = experiment::extract_frames(&record, frames, size).context("extract")?;
    media_io::write_sequence(&seq, out).context("write")?;
    println!("extract: {} frames {size}x{size} -> {}", seq.len(), out.display());
    Ok(())
}

fn flow(frames_dir: &Path, out: &Path, settings: HsSettings) -> Result<()> {
    settings.validate().context("flow")?;
    let files = media_io::list_image_files(frames_dir).context("decode")?;
    let seq = media_io::load_image_sequence(&files).context("decode")?;
    if seq.len() < 2 {
        bail!("flow: need at least 2 frames in {}, found {}", frames_dir.display(), seq.len());
    }
    let gray = FrameSequence::from_frames(
        seq.frames().iter().map(media_io::to_grayscale).collect(),
        seq.source_id(),
    )?;
    std::fs::create_dir_all(out).with_context(|| format!("write: {}", out.display()))?;
    let mut worst_iters = 0;
    for (i, pair) in gray.frames().windows(2).enumerate() {
        let (field, report) =
            optical_flow::horn_schunck_with_report(&pair[0], &pair[1], &settings).context("flow")?;
        worst_iters = worst_iters.max(report.iterations);
        optical_flow::write_flo(&field, out.join(format!("{i:06}.flo"))).context("write")?;
    }
    println!(
        "flow: {} fields (max {worst_iters} iterations) -> {}",
        gray.len() - 1,
        out.display()
    );
    Ok(())
}

fn colorize(flows: &Path, out: &Path, cap: Option<f64>) -> Result<()> {
    let norm = match cap {
        Some(c) if c > 0.0 && c.is_finite() => FlowNorm::Fixed(c),
        Some(c) => bail!("colorize: --cap must be positive and finite, got {c}"),
        None => FlowNorm::PerFrameMax,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(flows)
        .with_context(|| format!("colorize: {}", flows.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "flo"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("colorize: no .flo files in {}", flows.display());
    }
    std::fs::create_dir_all(out).with_context(|| format!("write: {}", out.display()))?;
    for (i, path) in files.iter().enumerate() {
        let field = optical_flow::read_flo(path).context("colorize")?;
        let img = optical_flow::flow_to_rgb(&field, norm);
        media_io::write_png(&img, out.join(format!("{i:06}.png"))).context("write")?;
    }
    println!("colorize: {} images -> {}", files.len(), out.display());
    Ok(())
}

fn load_split(manifest: &Path, seed: u64) -> Result<Vec<SampleRecord>> {
    let records = experiment::load_manifest(manifest).context("manifest")?;
    experiment::split_dataset(&records, TRAIN_FRACTION, seed).context("split")
}

fn labelled(records: &[SampleRecord], split: Split, frames: usize, size: usize) -> Result<Vec<(Tensor, u8)>> {
    let chosen: Vec<SampleRecord> = records.iter().filter(|r| r.split == split).cloned().collect();
    let clips = experiment::preprocess(&chosen, frames, &HsSettings::default(), size).context("preprocess")?;
    Ok(clips.into_iter().zip(chosen.iter().map(|r| r.label)).collect())
}

#[allow(clippy::too_many_arguments)]
fn train(
    manifest: &Path,
    variant: Variant,
    epochs: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    out: &Path,
    frames: usize,
    size: usize,
) -> Result<()> {
    if frames < 2 {
        bail!("train: --frames must be at least 2");
    }
    let records = load_split(manifest, seed)?;
    let data = labelled(&records, Split::Train, frames, size)?;
    println!("preprocess: {} training clips of {} flow images", data.len(), frames - 1);

    let mut config = ModelConfig::new(variant, frames - 1);
    config.input.height = size;
    config.input.width = size;
    config.seed = seed;
    let mut model = model::build_model(config).context("model")?;
    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        lr,
        shuffle_seed: seed,
    };
    let history = model::train(&mut model, &data, &cfg).context("train")?;
    let last = history.last().expect("at least one epoch");
    println!(
        "train: {} {} parameters, {epochs} epochs, final loss {:.4} accuracy {:.4}",
        variant.as_str(),
        model.param_count(),
        last.loss,
        last.accuracy
    );
    model.save(out).context("save")?;
    println!("save: {}", out.display());
    Ok(())
}

fn eval(model_path: &Path, manifest: &Path, report: &Path) -> Result<()> {
    let model = Model::load(model_path).context("load")?;
    let config = model.config();
    let records = load_split(manifest, config.seed)?;
    let frames = config.input.frames + 1;
    let data = labelled(&records, Split::Test, frames, config.input.height)?;
    println!("preprocess: {} test clips of {} flow images", data.len(), frames - 1);
    let evaluation = experiment::evaluate(&model, &data).context("eval")?;
    println!(
        "eval: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc {:.4}",
        evaluation.accuracy,
        evaluation.precision,
        evaluation.recall,
        evaluation.f1,
        evaluation.auc()
    );
    let result = SweepResult {
        frames,
        eval: evaluation,
        history: Vec::new(),
        audit: Default::default(),
    };
    experiment::emit_report(&[result], report).context("report")?;
    println!("report: {}", report.display());
    Ok(())
}

fn gradcheck(full: bool) -> Result<()> {
    let (variants, sides, seeds): (&[Variant], &[usize], u64) = if full {
        (&[Variant::OfRnnCnn, Variant::OfCnn, Variant::OfRnn], &[16, 8], 5)
    } else {
        (&[Variant::OfRnnCnn], &[16], 1)
    };
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for &variant in variants {
        for &side in sides {
            let mut model = model::build_model(ModelConfig::reduced(variant, side)).context("model")?;
            for seed in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = 3 * 3 * side * side;
                let clip = Tensor::new([3, 3, side, side], (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())?;
                let rejected = u8::from(model.predict_score(&clip)? < 0.5);
                let err = model
                    .grad_check(&clip, rejected, Mode::Eval, 1e-6, seed)
                    .context("gradcheck")?;
                worst = worst.max(err);
                checks += 1;
            }
        }
    }
    let verdict = if worst <= GRADCHECK_TOL { "pass" } else { "FAIL" };
    println!("gradcheck: {checks} checks, max relative error {worst:.3e} ({verdict})");
    if worst > GRADCHECK_TOL {
        bail!("gradcheck: max relative error {worst:.3e} exceeds {GRADCHECK_TOL:e}");
    }
    Ok(())
}
