//! Labelled synthetic clips: a texture drifting along a smooth trajectory
//! ("coherent", real) versus the same drift with a face-sized centre patch
//! that jitters independently every frame ("inconsistent", fake).

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::media_io::{self, Frame, FrameSequence, MediaError};
use crate::optical_flow::{horn_schunck, FlowError, HsSettings};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic clip spec: {0}")]
    InvalidSpec(String),
    #[error("need at least 2 clips, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Coherent,
    Inconsistent,
}

impl SynthKind {
    pub fn label(self) -> u8 {
        match self {
            Self::Coherent => 0,
            Self::Inconsistent => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    GaussianBlobs,
    Checker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub frames: usize,
    pub size: usize,
    pub seed: u64,
    pub texture: Texture,
    /// Largest per-frame displacement of the centre patch (inconsistent only).
    pub jitter_mag: f64,
    /// Overrides the seeded global velocity, in pixels/frame.
    pub velocity: Option<(f64, f64)>,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, frames: usize, seed: u64) -> Self {
        Self {
            kind,
            frames,
            size: 112,
            seed,
            texture: Texture::GaussianBlobs,
            jitter_mag: 2.0,
            velocity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(SynthError::InvalidSpec(format!("frames must be >= 2, got {}", self.frames)));
        }
        if self.size < 8 {
            return Err(SynthError::InvalidSpec(format!("size must be >= 8, got {}", self.size)));
        }
        if self.kind == SynthKind::Inconsistent && !(self.jitter_mag > 0.0) {
            return Err(SynthError::InvalidSpec("jitter_mag must be > 0".into()));
        }
        if let Some((vx, vy)) = self.velocity {
            if !(vx.is_finite() && vy.is_finite()) {
                return Err(SynthError::InvalidSpec("velocity must be finite".into()));
            }
        }
        Ok(())
    }
}

/// A texture rendered on a canvas larger than the frame, sampled bilinearly
/// at sub-pixel offsets.
#[derive(Debug, Clone)]
pub struct Canvas {
    side: usize,
    data: Vec<f64>,
}

impl Canvas {
    pub fn render(texture: Texture, side: usize, rng: &mut impl Rng) -> Self {
        let mut data = vec![0.0; side * side];
        match texture {
            Texture::GaussianBlobs => {
                data.fill(0.5);
                let count = (side * side / 150).max(4);
                for _ in 0..count {
                    let cx = rng.gen_range(0.0..side as f64);
                    let cy = rng.gen_range(0.0..side as f64);
                    let sigma = rng.gen_range(3.0..7.0);
                    let amp = rng.gen_range(0.15..0.35) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let reach = (4.0 * sigma) as isize;
                    let inv = 1.0 / (2.0 * sigma * sigma);
                    let (ix, iy) = (cx as isize, cy as isize);
                    for y in (iy - reach).max(0)..(iy + reach + 1).min(side as isize) {
                        for x in (ix - reach).max(0)..(ix + reach + 1).min(side as isize) {
                            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                            data[y as usize * side + x as usize] += amp * (-(dx * dx + dy * dy) * inv).exp();
                        }
                    }
                }
            }
            Texture::Checker => {
                let cell = 8;
                let phase = rng.gen_range(0..cell);
                for y in 0..side {
                    for x in 0..side {
                        let on = ((x + phase) / cell + (y + phase) / cell) % 2 == 0;
                        data[y * side + x] = if on { 0.75 } else { 0.25 };
                    }
                }
            }
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Bilinear sample at canvas coordinates, clamped to the canvas.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let max = (self.side - 1) as f64;
        let (x, y) = (x.clamp(0.0, max), y.clamp(0.0, max));
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.side - 1), (y0 + 1).min(self.side - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let at = |xx: usize, yy: usize| self.data[yy * self.side + xx];
        let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
        let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
        top + (bottom - top) * fy
    }

    /// A `size × size` view whose content is the canvas shifted by `offset`
    /// (positive offset moves content right/down) relative to a view anchored
    /// at `origin`.
    pub fn view(&self, size: usize, origin: f64, offset: (f64, f64)) -> Frame {
        Frame::from_fn(size, size, |x, y| {
            self.sample(x as f64 + origin - offset.0, y as f64 + origin - offset.1)
        })
    }
}

/// Side length of the centre patch that receives jitter.
pub fn patch_side(size: usize) -> usize {
    size / 2
}

fn in_patch(size: usize, x: usize, y: usize) -> bool {
    let side = patch_side(size);
    let lo = (size - side) / 2;
    (lo..lo + side).contains(&x) && (lo..lo + side).contains(&y)
}

/// Velocity drawn for a seed: speed in `[0.3, 1.0]` px/frame, uniform direction.
fn seeded_velocity(rng: &mut impl Rng) -> (f64, f64) {
    let speed = rng.gen_range(0.3..=1.0);
    let angle = rng.gen_range(0.0..TAU);
    (speed * angle.cos(), speed * angle.sin())
}

/// The global velocity a spec will use.
pub fn clip_velocity(spec: &SynthSpec) -> (f64, f64) {
    let (_, velocity, _) = clip_setup(spec);
    velocity
}

fn clip_setup(spec: &SynthSpec) -> (Canvas, (f64, f64), ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let drawn = seeded_velocity(&mut rng);
    let velocity = spec.velocity.unwrap_or(drawn);
    let travel = (velocity.0.abs().max(velocity.1.abs())) * spec.frames as f64;
    let margin = (travel + spec.jitter_mag + 4.0).ceil() as usize;
    let canvas = Canvas::render(spec.texture, spec.size + 2 * margin, &mut rng);
    (canvas, velocity, rng)
}

/// Renders a clip; coherent and inconsistent clips with the same seed share
/// texture and global trajectory.
pub fn gen_clip(spec: &SynthSpec) -> Result<FrameSequence> {
    spec.validate()?;
    let (canvas, velocity, mut rng) = clip_setup(spec);
    let origin = ((canvas.side() - spec.size) / 2) as f64;
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let base = (velocity.0 * t as f64, velocity.1 * t as f64);
        let frame = match spec.kind {
            SynthKind::Coherent => canvas.view(spec.size, origin, base),
            SynthKind::Inconsistent => {
                let radius = rng.gen_range(0.5..=1.0) * spec.jitter_mag;
                let angle = rng.gen_range(0.0..TAU);
                let jittered = (base.0 + radius * angle.cos(), base.1 + radius * angle.sin());
                Frame::from_fn(spec.size, spec.size, |x, y| {
                    let off = if in_patch(spec.size, x, y) { jittered } else { base };
                    canvas.sample(x as f64 + origin - off.0, y as f64 + origin - off.1)
                })
            }
        };
        frames.push(frame);
    }
    Ok(FrameSequence::from_frames(frames, format!("synth-{}", spec.seed))?)
}

/// Two `size × size` frames of a seeded texture, the second displaced by `d`.
pub fn translated_pair(texture: Texture, size: usize, seed: u64, d: (f64, f64)) -> (Frame, Frame) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = (d.0.abs().max(d.1.abs()) + 4.0).ceil() as usize;
    let canvas = Canvas::render(texture, size + 2 * margin, &mut rng);
    let origin = margin as f64;
    (canvas.view(size, origin, (0.0, 0.0)), canvas.view(size, origin, d))
}

/// Mean flow vector inside the centre patch for each consecutive pair.
pub fn central_flow_series(seq: &FrameSequence, settings: &HsSettings) -> Result<Vec<(f64, f64)>> {
    let frames = seq.frames();
    let size = frames[0].width();
    let mut out = Vec::with_capacity(frames.len().saturating_sub(1));
    for pair in frames.windows(2) {
        let (a, b) = (media_io::to_grayscale(&pair[0]), media_io::to_grayscale(&pair[1]));
        let flow = horn_schunck(&a, &b, settings)?;
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for y in 0..flow.height() {
            for x in 0..flow.width() {
                if in_patch(size, x, y) {
                    su += flow.u()[y * flow.width() + x];
                    sv += flow.v()[y * flow.width() + x];
                    n += 1.0;
                }
            }
        }
        out.push((su / n, sv / n));
    }
    Ok(out)
}

/// Temporal variance (summed over both components) of the centre-patch mean
/// flow: the reference statistic separating the two clip kinds.
pub fn central_flow_variance(seq: &FrameSequence, settings: &HsSettings) -> Result<f64> {
    let series = central_flow_series(seq, settings)?;
    let n = series.len() as f64;
    let (mu, mv) = series.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0 / n, acc.1 + s.1 / n));
    Ok(series
        .iter()
        .map(|(u, v)| (u - mu).powi(2) + (v - mv).powi(2))
        .sum::<f64>()
        / n)
}

/// Options shared by every clip of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub frames: usize,
    pub size: usize,
    pub texture: Texture,
    pub jitter_mag: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            frames: 10,
            size: 112,
            texture: Texture::GaussianBlobs,
            jitter_mag: 2.0,
        }
    }
}

pub const MANIFEST_NAME: &str = "manifest.csv";

/// Writes `n_real` coherent then `n_fake` inconsistent clips as PGM frame
/// directories plus `manifest.csv`; clip `i` uses seed `base_seed + i`.
pub fn gen_dataset(
    n_real: usize,
    n_fake: usize,
    out_dir: impl AsRef<Path>,
    base_seed: u64,
    options: &DatasetOptions,
) -> Result<PathBuf> {
    let total = n_real + n_fake;
    if total < 2 {
        return Err(SynthError::TooFewSamples(total));
    }
    let out_dir = out_dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut manifest = String::from("clip_path,label\n");
    for index in 0..total {
        let kind = if index < n_real {
            SynthKind::Coherent
        } else {
            SynthKind::Inconsistent
        };
        let spec = SynthSpec {
            kind,
            frames: options.frames,
            size: options.size,
            seed: base_seed.wrapping_add(index as u64),
            texture: options.texture,
            jitter_mag: options.jitter_mag,
            velocity: None,
        };
        let clip = gen_clip(&spec)?;
        let name = format!("clip_{index:04}");
        let gray = clip.map_frames::<MediaError>(|f| Ok(media_io::to_grayscale(f)))?;
        media_io::write_sequence(&gray, out_dir.join(&name))?;
        writeln!(manifest, "{name},{}", kind.label()).unwrap();
    }
    let path = out_dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(io(&path))?;
    Ok(path)
}
