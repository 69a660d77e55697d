//! Frame containers and the ingestion path: YUV4MPEG2 decoding, PGM/PNG
//! sequences, grayscale conversion, bilinear resizing and uniform sampling.
//!
//! Every sample is an `f64` in `[0, 1]`, stored planar and row-major per
//! channel.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("truncated frame {index}: expected {expected} payload bytes, found {found}")]
    TruncatedFrame {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported colorspace `{0}`")]
    UnsupportedColorspace(String),
    #[error("failed to decode {path}: {reason}")]
    DecodeError { path: PathBuf, reason: String },
    #[error("{path} has dimensions {found:?}, expected {expected:?}")]
    DimensionMismatch {
        path: PathBuf,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("no input frames")]
    EmptyInput,
    #[error("requested {requested} frames but the sequence has {available}")]
    NotEnoughFrames { requested: usize, available: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = MediaError> = std::result::Result<T, E>;

/// A planar image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(MediaError::InvalidFrame(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(MediaError::InvalidFrame(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(MediaError::InvalidFrame(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s))) {
            return Err(MediaError::InvalidFrame(format!(
                "sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// A frame with every sample set to `value` (clamped to `[0, 1]`).
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && (channels == 1 || channels == 3));
        Self {
            width,
            height,
            channels,
            data: vec![value.clamp(0.0, 1.0); width * height * channels],
        }
    }

    /// Builds a grayscale frame by evaluating `f(x, y)`; results are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub(crate) fn from_raw_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// One channel plane, row-major.
    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, channel: usize, x: usize, y: usize) -> f64 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

/// An ordered run of equally sized frames with their source indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    frame_indices: Vec<usize>,
    source_id: String,
}

impl FrameSequence {
    pub fn new(
        frames: Vec<Frame>,
        frame_indices: Vec<usize>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if frames.len() != frame_indices.len() {
            return Err(MediaError::InvalidFrame(format!(
                "{} frames but {} indices",
                frames.len(),
                frame_indices.len()
            )));
        }
        if frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MediaError::InvalidFrame(
                "frame indices must be strictly increasing".into(),
            ));
        }
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| f.dims() != first.dims()) {
                return Err(MediaError::InvalidFrame(
                    "frames in a sequence must share dimensions".into(),
                ));
            }
        }
        Ok(Self {
            frames,
            frame_indices,
            source_id: source_id.into(),
        })
    }

    /// Sequence with indices `0..frames.len()`.
    pub fn from_frames(frames: Vec<Frame>, source_id: impl Into<String>) -> Result<Self> {
        let indices = (0..frames.len()).collect();
        Self::new(frames, indices, source_id)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.frame_indices
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Frame>, Vec<usize>, String) {
        (self.frames, self.frame_indices, self.source_id)
    }

    /// Applies `f` to every frame, keeping indices and source id.
    pub fn map_frames<E>(
        &self,
        mut f: impl FnMut(&Frame) -> std::result::Result<Frame, E>,
    ) -> std::result::Result<Self, E>
    where
        E: From<MediaError>,
    {
        let frames = self.frames.iter().map(&mut f).collect::<Result<Vec<_>, E>>()?;
        Ok(Self::new(frames, self.frame_indices.clone(), self.source_id.clone())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

impl Chroma {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Self::C420),
            "422" => Ok(Self::C422),
            "444" => Ok(Self::C444),
            "mono" => Ok(Self::Mono),
            other => Err(MediaError::UnsupportedColorspace(other.to_string())),
        }
    }

    fn chroma_dims(self, w: usize, h: usize) -> (usize, usize) {
        match self {
            Self::C420 => (w.div_ceil(2), h.div_ceil(2)),
            Self::C422 => (w.div_ceil(2), h),
            Self::C444 => (w, h),
            Self::Mono => (0, 0),
        }
    }
}

fn read_line(bytes: &[u8], pos: usize) -> Option<(&[u8], usize)> {
    let rest = &bytes[pos..];
    let end = rest.iter().position(|&b| b == b'\n')?;
    Some((&rest[..end], pos + end + 1))
}

/// Rec.601 full-range YCbCr to RGB, returned in `[0, 1]`.
fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [f64; 3] {
    let y = y as f64;
    let cb = cb as f64 - 128.0;
    let cr = cr as f64 - 128.0;
    let r = y + 1.402 * cr;
    let g = y - 0.344_136 * cb - 0.714_136 * cr;
    let b = y + 1.772 * cb;
    [r, g, b].map(|c| c.clamp(0.0, 255.0) / 255.0)
}

/// Decodes an 8-bit YUV4MPEG2 stream into RGB frames.
pub fn decode_y4m(bytes: &[u8]) -> Result<FrameSequence> {
    let (header, mut pos) = read_line(bytes, 0)
        .ok_or_else(|| MediaError::MalformedHeader("missing header line".into()))?;
    let header = std::str::from_utf8(header)
        .map_err(|_| MediaError::MalformedHeader("header is not ASCII".into()))?;
    let mut tokens = header.split(' ').filter(|t| !t.is_empty());
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(MediaError::MalformedHeader("missing YUV4MPEG2 magic".into()));
    }
    let (mut width, mut height) = (None, None);
    let mut chroma = Chroma::C420;
    for token in tokens {
        let (key, value) = token.split_at(1);
        match key {
            "W" => width = value.parse::<usize>().ok().filter(|&w| w > 0),
            "H" => height = value.parse::<usize>().ok().filter(|&h| h > 0),
            "C" => chroma = Chroma::parse(value)?,
            // Frame rate, interlacing, aspect and extensions do not affect decoding.
            "F" | "I" | "A" | "X" => {}
            _ => return Err(MediaError::MalformedHeader(format!("unknown token `{token}`"))),
        }
    }
    let width = width.ok_or_else(|| MediaError::MalformedHeader("missing or bad W".into()))?;
    let height = height.ok_or_else(|| MediaError::MalformedHeader("missing or bad H".into()))?;
    let (cw, ch) = chroma.chroma_dims(width, height);
    let luma_len = width * height;
    let frame_len = luma_len + 2 * cw * ch;

    let mut frames = Vec::new();
    while pos < bytes.len() {
        let index = frames.len();
        let (line, next) = read_line(bytes, pos).ok_or(MediaError::TruncatedFrame {
            index,
            expected: frame_len,
            found: 0,
        })?;
        if !line.starts_with(b"FRAME") {
            return Err(MediaError::MalformedHeader(format!(
                "expected FRAME marker for frame {index}"
            )));
        }
        pos = next;
        let available = bytes.len() - pos;
        if available < frame_len {
            return Err(MediaError::TruncatedFrame {
                index,
                expected: frame_len,
                found: available,
            });
        }
        let payload = &bytes[pos..pos + frame_len];
        pos += frame_len;

        let (luma, chroma_planes) = payload.split_at(luma_len);
        let (cb_plane, cr_plane) = chroma_planes.split_at(cw * ch);
        let mut data = vec![0.0; 3 * luma_len];
        for y in 0..height {
            for x in 0..width {
                let (cb, cr) = match chroma {
                    Chroma::Mono => (128, 128),
                    _ => {
                        let cx = x * cw / width;
                        let cy = y * ch / height;
                        (cb_plane[cy * cw + cx], cr_plane[cy * cw + cx])
                    }
                };
                let rgb = ycbcr_to_rgb(luma[y * width + x], cb, cr);
                for (c, v) in rgb.into_iter().enumerate() {
                    data[c * luma_len + y * width + x] = v;
                }
            }
        }
        frames.push(Frame::from_raw_unchecked(width, height, 3, data));
    }
    FrameSequence::from_frames(frames, "y4m")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn decode_err(path: &Path, reason: impl Into<String>) -> MediaError {
    MediaError::DecodeError {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a binary (P5) PGM with maxval ≤ 255.
fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Frame> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(decode_err(path, "truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    if fields[0] != "P5" {
        return Err(decode_err(path, "not a binary PGM (P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| decode_err(path, "bad PGM header field"));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
        return Err(decode_err(path, "unsupported PGM dimensions or maxval"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let raster = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| decode_err(path, "truncated PGM raster"))?;
    let scale = maxval as f64;
    let data = raster.iter().map(|&b| (b as f64 / scale).min(1.0)).collect();
    Ok(Frame::from_raw_unchecked(width, height, 1, data))
}

fn parse_png(path: &Path, bytes: &[u8]) -> Result<Frame> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| decode_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(decode_err(path, "only 8-bit PNG is supported"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let n = w * h;
    let buf = &buf[..info.buffer_size()];
    let (channels, stride) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (3, 4),
        png::ColorType::Indexed => return Err(decode_err(path, "indexed PNG not expanded")),
    };
    let mut data = vec![0.0; n * channels];
    for i in 0..n {
        for c in 0..channels {
            data[c * n + i] = buf[i * stride + c] as f64 / 255.0;
        }
    }
    Ok(Frame::from_raw_unchecked(w, h, channels, data))
}

/// Reads a single PGM or PNG image, choosing the decoder by magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"\x89PNG") {
        parse_png(path, &bytes)
    } else if bytes.starts_with(b"P5") {
        parse_pgm(path, &bytes)
    } else {
        Err(decode_err(path, "unrecognized image format"))
    }
}

/// Loads images in path order; all must share dimensions and channel count.
pub fn load_image_sequence<P: AsRef<Path>>(paths: &[P]) -> Result<FrameSequence> {
    let first = paths.first().ok_or(MediaError::EmptyInput)?;
    let mut frames = Vec::with_capacity(paths.len());
    for path in paths {
        let frame = read_image(path)?;
        if let Some(reference) = frames.first().map(Frame::dims) {
            if frame.dims() != reference {
                return Err(MediaError::DimensionMismatch {
                    path: path.as_ref().to_path_buf(),
                    expected: reference,
                    found: frame.dims(),
                });
            }
        }
        frames.push(frame);
    }
    let source = first
        .as_ref()
        .parent()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    FrameSequence::from_frames(frames, source)
}

/// Lists `.pgm` and `.png` files in a directory, sorted by file name.
pub fn list_image_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("pgm" | "png")
            )
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a grayscale frame as binary PGM (P5, maxval 255).
pub fn write_pgm(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if frame.channels() != 1 {
        return Err(MediaError::InvalidFrame("PGM output requires a grayscale frame".into()));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend(frame.data().iter().map(|&v| quantize(v)));
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes an 8-bit grayscale or RGB PNG.
pub fn write_png(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        frame.width() as u32,
        frame.height() as u32,
    );
    encoder.set_color(if frame.channels() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    encoder.set_depth(png::BitDepth::Eight);
    let n = frame.width() * frame.height();
    let mut raster = vec![0u8; n * frame.channels()];
    for i in 0..n {
        for c in 0..frame.channels() {
            raster[i * frame.channels() + c] = quantize(frame.data()[c * n + i]);
        }
    }
    let to_err = |e: png::EncodingError| decode_err(path, e.to_string());
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(&raster).map_err(to_err)?;
    writer.finish().map_err(to_err)?;
    Ok(())
}

/// Writes every frame as `%06d.pgm` (grayscale) or `%06d.png` (RGB) into `dir`.
pub fn write_sequence(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::with_capacity(seq.len());
    for (i, frame) in seq.frames().iter().enumerate() {
        let path = if frame.channels() == 1 {
            let p = dir.join(format!("{i:06}.pgm"));
            write_pgm(frame, &p)?;
            p
        } else {
            let p = dir.join(format!("{i:06}.png"));
            write_png(frame, &p)?;
            p
        };
        written.push(path);
    }
    Ok(written)
}

/// Encodes RGB or grayscale frames as a C444 YUV4MPEG2 stream.
pub fn encode_y4m(seq: &FrameSequence, mut out: impl Write) -> std::io::Result<()> {
    let Some(first) = seq.frames().first() else {
        return Ok(());
    };
    writeln!(out, "YUV4MPEG2 W{} H{} F25:1 Ip A1:1 C444", first.width(), first.height())?;
    for frame in seq.frames() {
        let n = frame.width() * frame.height();
        let mut planes = vec![0u8; 3 * n];
        for i in 0..n {
            let (r, g, b) = if frame.channels() == 3 {
                (frame.data()[i], frame.data()[n + i], frame.data()[2 * n + i])
            } else {
                let v = frame.data()[i];
                (v, v, v)
            };
            let (r, g, b) = (r * 255.0, g * 255.0, b * 255.0);
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            let cb = 128.0 + (b - y) / 1.772;
            let cr = 128.0 + (r - y) / 1.402;
            planes[i] = y.round().clamp(0.0, 255.0) as u8;
            planes[n + i] = cb.round().clamp(0.0, 255.0) as u8;
            planes[2 * n + i] = cr.round().clamp(0.0, 255.0) as u8;
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(&planes)?;
    }
    Ok(())
}

/// Rec.601 luma; grayscale input is returned unchanged.
pub fn to_grayscale(frame: &Frame) -> Frame {
    if frame.channels() == 1 {
        return frame.clone();
    }
    let (r, g, b) = (frame.plane(0), frame.plane(1), frame.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
        .collect();
    Frame::from_raw_unchecked(frame.width(), frame.height(), 1, data)
}

/// Source coordinate and interpolation weight for every destination index.
fn sample_axis(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel-centre alignment and clamped coordinates.
pub fn resize_bilinear(frame: &Frame, out_w: usize, out_h: usize) -> Frame {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    let xs = sample_axis(frame.width(), out_w);
    let ys = sample_axis(frame.height(), out_h);
    let w = frame.width();
    let mut data = Vec::with_capacity(out_w * out_h * frame.channels());
    for c in 0..frame.channels() {
        let plane = frame.plane(c);
        for &(y0, y1, fy) in &ys {
            let (row0, row1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, fx) in &xs {
                let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
                let bottom = row1[x0] + (row1[x1] - row1[x0]) * fx;
                data.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    Frame::from_raw_unchecked(out_w, out_h, frame.channels(), data)
}

/// Picks `n` frames at positions `floor(i * len / n)`.
pub fn sample_uniform(seq: &FrameSequence, n: usize) -> Result<FrameSequence> {
    let len = seq.len();
    if n == 0 || n > len {
        return Err(MediaError::NotEnoughFrames {
            requested: n,
            available: len,
        });
    }
    let picks: Vec<usize> = (0..n).map(|i| i * len / n).collect();
    let frames = picks.iter().map(|&p| seq.frames[p].clone()).collect();
    let indices = picks.iter().map(|&p| seq.frame_indices[p]).collect();
    FrameSequence::new(frames, indices, seq.source_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn y4m(header: &str, frames: &[Vec<u8>]) -> Vec<u8> {
        let mut out = format!("{header}\n").into_bytes();
        for f in frames {
            out.extend_from_slice(b"FRAME\n");
            out.extend_from_slice(f);
        }
        out
    }

    #[test]
    fn y4m_444_two_frames() {
        let payload = vec![100u8; 4 * 4 * 3];
        let bytes = y4m("YUV4MPEG2 W4 H4 F30:1 Ip A1:1 C444", &[payload.clone(), payload]);
        let seq = decode_y4m(&bytes).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frame_indices(), &[0, 1]);
        assert_eq!(seq.frames()[0].dims(), (4, 4, 3));
    }

    #[test]
    fn y4m_black_pixel_conversion() {
        // Y=0, Cb=Cr=128: R = 0 + 1.402*0, G = 0, B = 0.
        let mut payload = vec![0u8; 16];
        payload.extend(vec![128u8; 32]);
        let seq = decode_y4m(&y4m("YUV4MPEG2 W4 H4 C444", &[payload])).unwrap();
        for v in seq.frames()[0].data() {
            assert!(v.abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn y4m_420_chroma_subsampled() {
        // 3x3 luma with 2x2 chroma planes.
        let mut payload = vec![255u8; 9];
        payload.extend(vec![128u8; 8]);
        let seq = decode_y4m(&y4m("YUV4MPEG2 W3 H3 C420jpeg", &[payload])).unwrap();
        assert!(seq.frames()[0].data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn y4m_errors() {
        assert!(matches!(
            decode_y4m(b"MPEG W4 H4\n"),
            Err(MediaError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_y4m(b"YUV4MPEG2 W4 C444\n"),
            Err(MediaError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_y4m(b"YUV4MPEG2 W4 H4 C420p10\n"),
            Err(MediaError::UnsupportedColorspace(_))
        ));
        let short = y4m("YUV4MPEG2 W4 H4 C444", &[vec![0u8; 10]]);
        assert!(matches!(
            decode_y4m(&short),
            Err(MediaError::TruncatedFrame { index: 0, expected: 48, found: 10 })
        ));
    }

    #[test]
    fn y4m_encode_decode() {
        let frame = Frame::from_fn(6, 4, |x, y| (x + y) as f64 / 10.0);
        let seq = FrameSequence::from_frames(vec![frame.clone(); 3], "t").unwrap();
        let mut buf = Vec::new();
        encode_y4m(&seq, &mut buf).unwrap();
        let back = decode_y4m(&buf).unwrap();
        assert_eq!(back.len(), 3);
        let gray = to_grayscale(&back.frames()[2]);
        for (a, b) in gray.data().iter().zip(frame.data()) {
            assert!((a - b).abs() <= 2.0 / 255.0);
        }
    }

    #[test]
    fn pgm_scaling_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.pgm");
        fs::write(&a, [b"P5\n2 2\n255\n".as_slice(), &[0, 255, 0, 255]].concat()).unwrap();
        let seq = load_image_sequence(&[&a]).unwrap();
        assert_eq!(seq.frames()[0].data(), &[0.0, 1.0, 0.0, 1.0]);

        let empty: [&Path; 0] = [];
        assert!(matches!(load_image_sequence(&empty), Err(MediaError::EmptyInput)));

        let small = dir.path().join("s.png");
        let large = dir.path().join("l.png");
        write_png(&Frame::filled(4, 4, 1, 0.5), &small).unwrap();
        write_png(&Frame::filled(5, 5, 1, 0.5), &large).unwrap();
        assert!(matches!(
            load_image_sequence(&[&small, &large]),
            Err(MediaError::DimensionMismatch { .. })
        ));

        let junk = dir.path().join("junk.pgm");
        fs::write(&junk, b"hello").unwrap();
        assert!(matches!(read_image(&junk), Err(MediaError::DecodeError { .. })));
    }

    #[test]
    fn pgm_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        fs::write(&p, [b"P5\n# made by hand\n1 1\n255\n".as_slice(), &[51]].concat()).unwrap();
        assert!((read_image(&p).unwrap().data()[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn png_rgb_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let data: Vec<f64> = (0..27).map(|i| i as f64 / 26.0).collect();
        let frame = Frame::new(3, 3, 3, data).unwrap();
        write_png(&frame, &p).unwrap();
        let back = read_image(&p).unwrap();
        assert_eq!(back.dims(), (3, 3, 3));
        for (a, b) in back.data().iter().zip(frame.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn grayscale_coefficients() {
        let white = Frame::filled(1, 1, 3, 1.0);
        assert!((to_grayscale(&white).data()[0] - 1.0).abs() < 1e-12);
        let red = Frame::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((to_grayscale(&red).data()[0] - 0.299).abs() < 1e-12);
        let gray = Frame::from_fn(3, 2, |x, y| (x * y) as f64 / 4.0);
        assert_eq!(to_grayscale(&gray), gray);
    }

    #[test]
    fn resize_identity_and_constant() {
        let f = Frame::from_fn(7, 5, |x, y| ((x * 3 + y * 5) % 11) as f64 / 10.0);
        let same = resize_bilinear(&f, 7, 5);
        for (a, b) in same.data().iter().zip(f.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let c = Frame::filled(9, 4, 3, 0.37);
        for (w, h) in [(1, 1), (3, 17), (20, 20)] {
            assert!(resize_bilinear(&c, w, h).data().iter().all(|v| (v - 0.37).abs() < 1e-12));
        }
    }

    #[test]
    fn resize_2x2_to_1x1() {
        // Destination 0 maps to source (0 + 0.5) * 2 - 0.5 = 0.5 on both axes:
        // the mean of all four samples.
        let f = Frame::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((resize_bilinear(&f, 1, 1).data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sample_uniform_conventions() {
        let frames = vec![Frame::filled(1, 1, 1, 0.0); 10];
        let seq = FrameSequence::from_frames(frames, "s").unwrap();
        assert_eq!(sample_uniform(&seq, 5).unwrap().frame_indices(), &[0, 2, 4, 6, 8]);
        assert_eq!(sample_uniform(&seq, 10).unwrap(), seq);
        let seven = FrameSequence::from_frames(vec![Frame::filled(1, 1, 1, 0.0); 7], "s").unwrap();
        assert_eq!(sample_uniform(&seven, 3).unwrap().frame_indices(), &[0, 2, 4]);
        assert!(matches!(
            sample_uniform(&seven, 8),
            Err(MediaError::NotEnoughFrames { requested: 8, available: 7 })
        ));
    }

    #[test]
    fn frame_rejects_out_of_range() {
        assert!(Frame::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Frame::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Frame::new(2, 1, 1, vec![0.5]).is_err());
        assert!(Frame::new(1, 1, 2, vec![0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn resize_stays_within_input_range(
            w in 1usize..9, h in 1usize..9, ow in 1usize..15, oh in 1usize..15,
            seed in any::<u64>(),
        ) {
            let mut state = seed;
            let f = Frame::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            });
            let lo = f.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let r = resize_bilinear(&f, ow, oh);
            prop_assert!(r.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }

        #[test]
        fn sample_uniform_indices_increasing_subset(len in 1usize..60, n_frac in 0.0f64..1.0) {
            let n = 1 + ((len - 1) as f64 * n_frac) as usize;
            let indices: Vec<usize> = (0..len).map(|i| i * 3 + 1).collect();
            let seq = FrameSequence::new(vec![Frame::filled(1, 1, 1, 0.0); len], indices.clone(), "p").unwrap();
            let s = sample_uniform(&seq, n).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert_eq!(s.frame_indices()[0], indices[0]);
            prop_assert!(s.frame_indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.frame_indices().iter().all(|i| indices.contains(i)));
        }

        #[test]
        fn pgm_sequence_roundtrip(w in 1usize..12, h in 1usize..12, n in 1usize..4, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let mut state = seed | 1;
            let frames: Vec<Frame> = (0..n).map(|_| Frame::from_fn(w, h, |_, _| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 1000) as f64 / 999.0
            })).collect();
            let seq = FrameSequence::from_frames(frames, "p").unwrap();
            let paths = write_sequence(&seq, dir.path()).unwrap();
            let back = load_image_sequence(&paths).unwrap();
            for (a, b) in back.frames().iter().zip(seq.frames()) {
                for (x, y) in a.data().iter().zip(b.data()) {
                    prop_assert!((x - y).abs() <= 1.0 / 255.0);
                }
            }
        }
    }
}
