//! Face region-of-interest selection: sidecar boxes, a centred fallback and a
//! motion-energy heuristic, plus margin-expanded cropping.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::media_io::{Frame, FrameSequence};

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("duplicate frame index {0} in ROI sidecar")]
    DuplicateIndex(usize),
    #[error("cannot crop with an absent box (frame {0})")]
    AbsentBox(usize),
    #[error("motion energy needs at least 2 frames, got {0}")]
    NotEnoughFrames(usize),
    #[error("motion energy needs grayscale frames")]
    NotGrayscale,
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Axis-aligned face box in source-frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiBox {
    pub frame_index: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub present: bool,
}

impl RoiBox {
    pub fn new(frame_index: usize, x: usize, y: usize, w: usize, h: usize) -> Self {
        Self {
            frame_index,
            x,
            y,
            w,
            h,
            present: true,
        }
    }

    pub fn absent(frame_index: usize) -> Self {
        Self {
            frame_index,
            x: 0,
            y: 0,
            w: 0,
            h: 0,
            present: false,
        }
    }
}

/// Default margin around a face box, as a fraction of its longer side.
pub const DEFAULT_MARGIN: f64 = 0.25;

/// Parses `frame_index,x,y,w,h` / `frame_index,absent` records.
pub fn parse_roi_sidecar(text: &str) -> Result<Vec<RoiBox>, RoiError> {
    let mut boxes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let record = raw.trim();
        if record.is_empty() {
            continue;
        }
        let err = |reason: &str| RoiError::ParseError {
            line,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = record.split(',').map(str::trim).collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("`{s}` is not a count")));
        let b = match fields.as_slice() {
            [idx, "absent"] => RoiBox::absent(num(idx)?),
            [idx, x, y, w, h] => {
                let b = RoiBox::new(num(idx)?, num(x)?, num(y)?, num(w)?, num(h)?);
                if b.w == 0 || b.h == 0 {
                    return Err(err("box extent must be at least 1"));
                }
                b
            }
            _ => return Err(err("expected `frame_index,x,y,w,h` or `frame_index,absent`")),
        };
        boxes.push(b);
    }
    boxes.sort_by_key(|b| b.frame_index);
    if let Some(dup) = boxes.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
        return Err(RoiError::DuplicateIndex(dup[0].frame_index));
    }
    Ok(boxes)
}

pub fn load_roi_sidecar(path: impl AsRef<Path>) -> Result<Vec<RoiBox>, RoiError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| RoiError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_roi_sidecar(&text)
}

/// Expands `b` by `margin_frac * max(w, h)` per side, clamps to the frame and
/// crops.
pub fn crop_roi(frame: &Frame, b: &RoiBox, margin_frac: f64) -> Result<Frame, RoiError> {
    if !b.present {
        return Err(RoiError::AbsentBox(b.frame_index));
    }
    let margin = (margin_frac.max(0.0) * b.w.max(b.h) as f64).round() as usize;
    let (fw, fh) = (frame.width(), frame.height());
    let x0 = b.x.saturating_sub(margin).min(fw - 1);
    let y0 = b.y.saturating_sub(margin).min(fh - 1);
    let x1 = (b.x + b.w + margin).min(fw).max(x0 + 1);
    let y1 = (b.y + b.h + margin).min(fh).max(y0 + 1);
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut data = Vec::with_capacity(cw * ch * frame.channels());
    for c in 0..frame.channels() {
        let plane = frame.plane(c);
        for y in y0..y1 {
            data.extend_from_slice(&plane[y * fw + x0..y * fw + x1]);
        }
    }
    Ok(Frame::from_raw_unchecked(cw, ch, frame.channels(), data))
}

fn box_side(frame_w: usize, frame_h: usize, frac: f64) -> Result<usize, RoiError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(RoiError::BadFraction(frac));
    }
    Ok(((frac * frame_w.min(frame_h) as f64).floor() as usize).max(1))
}

/// Centred square of side `floor(frac * min(w, h))`.
pub fn fallback_center_box(frame: &Frame, frac: f64) -> Result<RoiBox, RoiError> {
    let side = box_side(frame.width(), frame.height(), frac)?;
    Ok(RoiBox::new(
        0,
        (frame.width() - side) / 2,
        (frame.height() - side) / 2,
        side,
        side,
    ))
}

/// Mean absolute inter-frame difference per pixel.
pub fn motion_energy(seq: &FrameSequence) -> Result<Vec<f64>, RoiError> {
    let frames = seq.frames();
    if frames.len() < 2 {
        return Err(RoiError::NotEnoughFrames(frames.len()));
    }
    if frames[0].channels() != 1 {
        return Err(RoiError::NotGrayscale);
    }
    let mut energy = vec![0.0; frames[0].data().len()];
    for pair in frames.windows(2) {
        for ((e, a), b) in energy.iter_mut().zip(pair[0].data()).zip(pair[1].data()) {
            *e += (b - a).abs();
        }
    }
    let scale = 1.0 / (frames.len() - 1) as f64;
    energy.iter_mut().for_each(|e| *e *= scale);
    Ok(energy)
}

/// Square box whose summed motion energy is largest; ties go to the smallest
/// `y`, then the smallest `x`.
pub fn motion_energy_box(seq: &FrameSequence, frac: f64) -> Result<RoiBox, RoiError> {
    let energy = motion_energy(seq)?;
    let first = &seq.frames()[0];
    let (w, h) = (first.width(), first.height());
    let side = box_side(w, h, frac)?;

    // Summed-area table with a zero border row/column.
    let stride = w + 1;
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += energy[y * w + x];
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    let window = |x: usize, y: usize| {
        sat[(y + side) * stride + x + side] - sat[y * stride + x + side] - sat[(y + side) * stride + x]
            + sat[y * stride + x]
    };
    let mut best = (window(0, 0), 0, 0);
    for y in 0..=h - side {
        for x in 0..=w - side {
            let e = window(x, y);
            // Strict comparison keeps the first position in row-major order;
            // the small slack absorbs summed-area rounding between equal windows.
            if e > best.0 + 1e-9 * best.0.abs().max(1.0) {
                best = (e, x, y);
            }
        }
    }
    Ok(RoiBox::new(seq.frame_indices()[0], best.1, best.2, side, side))
}
