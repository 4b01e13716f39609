//! Time-frequency images: STFT magnitude, resampling to a fixed grid, and
//! ViT-style patch partitioning.
//!
//! Images are stored row-major with frequency along rows and time along
//! columns. Rows follow the fftshift convention: row `r` holds frequency
//! `(r - fft_len/2) · fs / fft_len`, so the complex baseband band runs from
//! `-fs/2` at the top row to just under `+fs/2` at the bottom.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::waveform::IQSignal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TfrError {
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("window length {window} exceeds FFT length {fft}")]
    WindowTooLong { window: usize, fft: usize },
    #[error("patch {patch:?} does not tile image {image:?}")]
    PatchMismatch {
        patch: (usize, usize),
        image: (usize, usize),
    },
    #[error("patch sequence has {got} values, expected {want}")]
    BadPatchData { got: usize, want: usize },
    #[error("invalid STFT configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub fft_len: usize,
    pub window_len: usize,
    /// Fixed hop; when absent the hop is `ceil(len / target_frames)`.
    pub hop: Option<usize>,
    pub target_frames: usize,
    /// Final `(freq, time)` grid the encoder sees.
    pub image_dims: (usize, usize),
    /// Divide by the image maximum after resizing.
    pub normalize: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_len: 128,
            window_len: 128,
            hop: None,
            target_frames: 128,
            image_dims: (128, 128),
            normalize: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), TfrError> {
        if self.fft_len == 0 || self.window_len == 0 || self.target_frames == 0 {
            return Err(TfrError::Config("lengths must be positive".into()));
        }
        if self.window_len > self.fft_len {
            return Err(TfrError::WindowTooLong {
                window: self.window_len,
                fft: self.fft_len,
            });
        }
        if self.image_dims.0 == 0 || self.image_dims.1 == 0 || self.hop == Some(0) {
            return Err(TfrError::Config("image dims and hop must be positive".into()));
        }
        Ok(())
    }

    pub fn hop_for(&self, len: usize) -> usize {
        self.hop
            .unwrap_or_else(|| len.div_ceil(self.target_frames))
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeFreqImage {
    /// `rows × cols` magnitudes, row-major.
    pub mag: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
    pub fs: f64,
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl TimeFreqImage {
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.mag[r * self.cols + c]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row index of frequency `f` Hz for the unresized STFT grid.
    pub fn freq_to_row(&self, f: f64) -> usize {
        let bin = (f / self.fs * self.fft_len as f64).round() as i64;
        (bin + self.fft_len as i64 / 2).rem_euclid(self.fft_len as i64) as usize
    }

    pub fn max(&self) -> f32 {
        self.mag.iter().copied().fold(0.0, f32::max)
    }
}

pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    // periodic form, the usual choice for spectral analysis
    (0..len)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos())
        .collect()
}

/// |STFT| with a Hann window. The tail is zero-padded so the last frame
/// reaches the end of the pulse.
pub fn stft_magnitude(signal: &IQSignal, cfg: &StftConfig) -> Result<TimeFreqImage, TfrError> {
    cfg.validate()?;
    let len = signal.len();
    let win = cfg.window_len;
    if len < win {
        return Err(TfrError::TooShort { len, window: win });
    }
    let nfft = cfg.fft_len;
    let hop = cfg.hop_for(len);
    let frames = 1 + (len - win).div_ceil(hop);
    let window = hann(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);

    let mut mag = vec![0.0f32; nfft * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for m in 0..frames {
        let start = m * hop;
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (k, w) in window.iter().enumerate() {
            if let Some(s) = signal.samples.get(start + k) {
                buf[k] = s * w;
            }
        }
        fft.process(&mut buf);
        for (bin, v) in buf.iter().enumerate() {
            let row = (bin + nfft / 2) % nfft;
            mag[row * frames + m] = v.norm() as f32;
        }
    }
    Ok(TimeFreqImage {
        mag,
        rows: nfft,
        cols: frames,
        fs: signal.fs,
        window_len: win,
        hop,
        fft_len: nfft,
    })
}

/// Bilinear resampling with half-pixel centres, edges clamped.
pub fn resize_to_grid(img: &TimeFreqImage, target: (usize, usize)) -> TimeFreqImage {
    let (rows, cols) = target;
    if (rows, cols) == img.dims() {
        return img.clone();
    }
    let axis = |src: usize, dst: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = x.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, (x - lo as f64) as f32)
            })
            .collect()
    };
    let ry = axis(img.rows, rows);
    let rx = axis(img.cols, cols);
    let mut mag = Vec::with_capacity(rows * cols);
    for &(y0, y1, wy) in &ry {
        for &(x0, x1, wx) in &rx {
            let top = img.at(y0, x0) * (1.0 - wx) + img.at(y0, x1) * wx;
            let bot = img.at(y1, x0) * (1.0 - wx) + img.at(y1, x1) * wx;
            mag.push(top * (1.0 - wy) + bot * wy);
        }
    }
    TimeFreqImage {
        mag,
        rows,
        cols,
        ..img.clone()
    }
}

/// Scale so the largest entry is 1. All-zero images are left alone.
pub fn normalize_max(img: &mut TimeFreqImage) {
    let peak = img.max();
    if peak > 0.0 {
        img.mag.iter_mut().for_each(|v| *v /= peak);
    }
}

/// STFT, resize to the configured grid and optionally normalize.
pub fn signal_to_image(signal: &IQSignal, cfg: &StftConfig) -> Result<TimeFreqImage, TfrError> {
    let raw = stft_magnitude(signal, cfg)?;
    let mut img = resize_to_grid(&raw, cfg.image_dims);
    if cfg.normalize {
        normalize_max(&mut img);
    }
    Ok(img)
}

/// Image cut into `n × m` patches, in row-major grid order, each patch
/// flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    /// `len() × patch_len()` values.
    pub data: Vec<f32>,
    pub patch_dims: (usize, usize),
    pub image_dims: (usize, usize),
}

impl PatchSequence {
    pub fn len(&self) -> usize {
        (self.image_dims.0 / self.patch_dims.0) * (self.image_dims.1 / self.patch_dims.1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_len(&self) -> usize {
        self.patch_dims.0 * self.patch_dims.1
    }

    pub fn patch(&self, i: usize) -> &[f32] {
        let p = self.patch_len();
        &self.data[i * p..(i + 1) * p]
    }
}

pub fn patchify(img: &TimeFreqImage, n: usize, m: usize) -> Result<PatchSequence, TfrError> {
    let (rows, cols) = img.dims();
    if n == 0 || m == 0 || rows % n != 0 || cols % m != 0 {
        return Err(TfrError::PatchMismatch {
            patch: (n, m),
            image: (rows, cols),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for gr in 0..rows / n {
        for gc in 0..cols / m {
            for r in 0..n {
                let start = (gr * n + r) * cols + gc * m;
                data.extend_from_slice(&img.mag[start..start + m]);
            }
        }
    }
    Ok(PatchSequence {
        data,
        patch_dims: (n, m),
        image_dims: (rows, cols),
    })
}

/// Inverse of [`patchify`]; returns the row-major image values.
pub fn unpatchify(seq: &PatchSequence) -> Result<Vec<f32>, TfrError> {
    let (rows, cols) = seq.image_dims;
    let (n, m) = seq.patch_dims;
    if n == 0 || m == 0 || rows % n != 0 || cols % m != 0 {
        return Err(TfrError::PatchMismatch {
            patch: (n, m),
            image: (rows, cols),
        });
    }
    if seq.data.len() != rows * cols {
        return Err(TfrError::BadPatchData {
            got: seq.data.len(),
            want: rows * cols,
        });
    }
    let mut out = vec![0.0; rows * cols];
    let grid_cols = cols / m;
    for (i, patch) in seq.data.chunks(n * m).enumerate() {
        let (gr, gc) = (i / grid_cols, i % grid_cols);
        for r in 0..n {
            let dst = (gr * n + r) * cols + gc * m;
            out[dst..dst + m].copy_from_slice(&patch[r * m..(r + 1) * m]);
        }
    }
    Ok(out)
}
