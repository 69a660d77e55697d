//! Dense optical flow from the brightness-constancy constraint
//! `Ix·u + Iy·v + It = 0`, regularised Horn–Schunck style, plus HSV
//! colorisation and Middlebury `.flo` persistence.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::media_io::Frame;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("frame dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("flow needs grayscale frames, got {0} channels")]
    NotGrayscale(usize),
    #[error("frame area {0} is below the 4-pixel minimum")]
    DegenerateFrame(usize),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("bad .flo magic {0}")]
    BadMagic(f32),
    #[error(".flo file truncated: need {expected} bytes, have {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error(".flo header has invalid dimensions {0}x{1}")]
    BadDimensions(i32, i32),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

/// Spatial and temporal intensity derivatives for a frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub ix: Vec<f64>,
    pub iy: Vec<f64>,
    pub it: Vec<f64>,
}

/// Per-pixel displacement in pixels/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(u.len(), width * height);
        assert_eq!(v.len(), width * height);
        Self { width, height, u, v }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height], vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Mean `(u, v)` over pixels at least `margin` away from every border.
    pub fn interior_mean(&self, margin: usize) -> (f64, f64) {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for y in margin..self.height.saturating_sub(margin) {
            for x in margin..self.width.saturating_sub(margin) {
                su += self.u[y * self.width + x];
                sv += self.v[y * self.width + x];
                n += 1;
            }
        }
        if n == 0 {
            return (0.0, 0.0);
        }
        (su / n as f64, sv / n as f64)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.width,
            self.height,
            self.u.iter().map(|x| x * factor).collect(),
            self.v.iter().map(|x| x * factor).collect(),
        )
    }
}

/// Horn–Schunck solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsSettings {
    /// Smoothness weight, in 8-bit intensity units.
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once the mean `|Δu| + |Δv|` of an iteration falls to this value.
    pub tol: f64,
}

impl Default for HsSettings {
    fn default() -> Self {
        Self {
            alpha: 15.0,
            max_iters: 200,
            tol: 1e-4,
        }
    }
}

impl HsSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FlowError::InvalidSettings(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(FlowError::InvalidSettings("max_iters must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(FlowError::InvalidSettings(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// How the solve ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsReport {
    pub iterations: usize,
    pub converged: bool,
    pub last_update: f64,
}

fn check_pair(prev: &Frame, next: &Frame) -> Result<()> {
    if prev.channels() != 1 {
        return Err(FlowError::NotGrayscale(prev.channels()));
    }
    if prev.dims() != next.dims() {
        return Err(FlowError::DimensionMismatch(prev.dims(), next.dims()));
    }
    Ok(())
}

/// Central differences (replicated borders) of the pair average, and the
/// forward temporal difference.
pub fn image_gradients(prev: &Frame, next: &Frame) -> Result<GradientField> {
    check_pair(prev, next)?;
    let (w, h) = (prev.width(), prev.height());
    let avg: Vec<f64> = prev.data().iter().zip(next.data()).map(|(a, b)| 0.5 * (a + b)).collect();
    let it = prev.data().iter().zip(next.data()).map(|(a, b)| b - a).collect();
    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            ix[y * w + x] = 0.5 * (avg[y * w + xp] - avg[y * w + xm]);
            iy[y * w + x] = 0.5 * (avg[yp * w + x] - avg[ym * w + x]);
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        ix,
        iy,
        it,
    })
}

/// 4-neighbour average with replicated borders.
fn neighbour_mean(src: &[f64], dst: &mut [f64], w: usize, h: usize) {
    for y in 0..h {
        let up = y.saturating_sub(1) * w;
        let down = (y + 1).min(h - 1) * w;
        let row = y * w;
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            dst[row + x] = 0.25 * (src[row + left] + src[row + right] + src[up + x] + src[down + x]);
        }
    }
}

/// Intensities are rescaled to 0..255 before solving so that `alpha` keeps
/// its customary 8-bit meaning.
const INTENSITY_SCALE: f64 = 255.0;

pub fn horn_schunck(prev: &Frame, next: &Frame, settings: &HsSettings) -> Result<FlowField> {
    horn_schunck_with_report(prev, next, settings).map(|(flow, _)| flow)
}

/// Jacobi iteration of the Horn–Schunck update from zero flow.
pub fn horn_schunck_with_report(
    prev: &Frame,
    next: &Frame,
    settings: &HsSettings,
) -> Result<(FlowField, HsReport)> {
    settings.validate()?;
    check_pair(prev, next)?;
    let (w, h) = (prev.width(), prev.height());
    if w * h < 4 {
        return Err(FlowError::DegenerateFrame(w * h));
    }
    let g = image_gradients(prev, next)?;
    let n = w * h;
    let alpha2 = settings.alpha * settings.alpha;
    let ix: Vec<f64> = g.ix.iter().map(|v| v * INTENSITY_SCALE).collect();
    let iy: Vec<f64> = g.iy.iter().map(|v| v * INTENSITY_SCALE).collect();
    let it: Vec<f64> = g.it.iter().map(|v| v * INTENSITY_SCALE).collect();
    let inv_denom: Vec<f64> = ix
        .iter()
        .zip(&iy)
        .map(|(gx, gy)| 1.0 / (alpha2 + gx * gx + gy * gy))
        .collect();

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u_bar = vec![0.0; n];
    let mut v_bar = vec![0.0; n];
    let mut report = HsReport {
        iterations: 0,
        converged: false,
        last_update: f64::INFINITY,
    };
    for iter in 1..=settings.max_iters {
        neighbour_mean(&u, &mut u_bar, w, h);
        neighbour_mean(&v, &mut v_bar, w, h);
        let mut delta = 0.0;
        for i in 0..n {
            let t = (ix[i] * u_bar[i] + iy[i] * v_bar[i] + it[i]) * inv_denom[i];
            let nu = u_bar[i] - ix[i] * t;
            let nv = v_bar[i] - iy[i] * t;
            delta += (nu - u[i]).abs() + (nv - v[i]).abs();
            u[i] = nu;
            v[i] = nv;
        }
        report.iterations = iter;
        report.last_update = delta / n as f64;
        if report.last_update <= settings.tol {
            report.converged = true;
            break;
        }
    }
    Ok((FlowField::new(w, h, u, v), report))
}

/// Mean absolute brightness-constancy residual `|Ix·u + Iy·v + It|`.
pub fn constraint_residual(g: &GradientField, flow: &FlowField) -> f64 {
    let n = g.ix.len();
    let total: f64 = (0..n)
        .map(|i| (g.ix[i] * flow.u[i] + g.iy[i] * flow.v[i] + g.it[i]).abs())
        .sum();
    total / n as f64
}

/// Magnitude normalisation for the value channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowNorm {
    PerFrameMax,
    Fixed(f64),
}

/// Hexcone HSV to RGB, hue in degrees.
pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [f64; 3] {
    let chroma = val * sat;
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = chroma * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = val - chroma;
    [r + m, g + m, b + m]
}

/// Flow direction as hue, magnitude as value, full saturation.
pub fn flow_to_rgb(flow: &FlowField, norm: FlowNorm) -> Frame {
    let n = flow.width * flow.height;
    let mags: Vec<f64> = flow.u.iter().zip(&flow.v).map(|(u, v)| u.hypot(*v)).collect();
    let cap = match norm {
        FlowNorm::PerFrameMax => mags.iter().cloned().fold(0.0, f64::max),
        FlowNorm::Fixed(cap) => cap,
    };
    let mut data = vec![0.0; 3 * n];
    if cap > 0.0 && cap.is_finite() {
        for i in 0..n {
            let value = (mags[i] / cap).clamp(0.0, 1.0);
            if value == 0.0 {
                continue;
            }
            let hue = flow.v[i].atan2(flow.u[i]).to_degrees().rem_euclid(360.0);
            let rgb = hsv_to_rgb(hue, 1.0, value);
            for c in 0..3 {
                data[c * n + i] = rgb[c].clamp(0.0, 1.0);
            }
        }
    }
    Frame::from_raw_unchecked(flow.width, flow.height, 3, data)
}

pub const FLO_MAGIC: f32 = 202_021.25;

/// Serialises a field in the Middlebury `.flo` layout.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.u.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (u, v) in flow.u.iter().zip(&flow.v) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or(FlowError::TruncatedFile {
                expected: 4 * i + 4,
                found: bytes.len(),
            })
    };
    let magic = f32::from_le_bytes(word(0)?);
    if magic != FLO_MAGIC {
        return Err(FlowError::BadMagic(magic));
    }
    let w = i32::from_le_bytes(word(1)?);
    let h = i32::from_le_bytes(word(2)?);
    if w <= 0 || h <= 0 {
        return Err(FlowError::BadDimensions(w, h));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + 8 * w * h;
    if bytes.len() < expected {
        return Err(FlowError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for chunk in bytes[12..expected].chunks_exact(8) {
        u.push(f32::from_le_bytes(chunk[..4].try_into().unwrap()) as f64);
        v.push(f32::from_le_bytes(chunk[4..].try_into().unwrap()) as f64);
    }
    Ok(FlowField::new(w, h, u, v))
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(flow)).map_err(|source| FlowError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FlowError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_flo(&bytes)
}
