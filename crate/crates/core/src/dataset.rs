//! On-disk datasets: `signals.bin` holds every pulse as consecutive
//! little-endian f32 `I, Q` pairs; `manifest.jsonl` has one line per pulse
//! pointing into it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symlang::Language;
use crate::waveform::{IQSignal, WaveformSpec};

pub const SIGNALS_FILE: &str = "signals.bin";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Bytes per complex sample.
const SAMPLE_BYTES: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    /// Label tokens, e.g. `<sos> FM LFM cf 234 B 50 <eos>`.
    pub label_string: String,
    pub snr_db: f64,
    pub fs_hz: f64,
    pub n_samples: u64,
    pub byte_offset: u64,
    /// Unquantized ground truth. Absent in datasets from other tools.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<WaveformSpec>,
}

impl ManifestEntry {
    pub fn pulse_width(&self) -> f64 {
        self.n_samples as f64 / self.fs_hz
    }

    /// Ground truth: the stored description if any, otherwise the parsed
    /// (quantized) label.
    pub fn truth(&self, lang: &Language) -> Result<WaveformSpec> {
        match &self.spec {
            Some(s) => Ok(s.clone()),
            None => Ok(lang.parse_ids(&lang.vocab.tokenize(&self.label_string)?)?),
        }
    }
}

/// Streams records into a dataset directory.
pub struct DatasetWriter {
    signals: BufWriter<File>,
    manifest: BufWriter<File>,
    offset: u64,
}

impl DatasetWriter {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            signals: BufWriter::new(File::create(dir.join(SIGNALS_FILE))?),
            manifest: BufWriter::new(File::create(dir.join(MANIFEST_FILE))?),
            offset: 0,
        })
    }

    pub fn push(&mut self, id: u64, label_string: String, signal: &IQSignal, spec: Option<&WaveformSpec>) -> Result<ManifestEntry> {
        let mut buf = Vec::with_capacity(signal.len() * SAMPLE_BYTES as usize);
        for s in &signal.samples {
            buf.extend_from_slice(&(s.re as f32).to_le_bytes());
            buf.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        self.signals.write_all(&buf)?;
        let entry = ManifestEntry {
            id,
            label_string,
            snr_db: signal.snr_db,
            fs_hz: signal.fs,
            n_samples: signal.len() as u64,
            byte_offset: self.offset,
            spec: spec.cloned(),
        };
        self.offset += buf.len() as u64;
        serde_json::to_writer(&mut self.manifest, &entry)?;
        self.manifest.write_all(b"\n")?;
        Ok(entry)
    }

    pub fn finish(mut self) -> Result<()> {
        self.signals.flush()?;
        self.manifest.flush()?;
        Ok(())
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let f = File::open(dir.as_ref().join(MANIFEST_FILE))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| Error::Dataset(format!("manifest line {}: {e}", n + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Random access to the pulses of a dataset.
pub struct DatasetReader {
    pub entries: Vec<ManifestEntry>,
    signals: BufReader<File>,
    signals_len: u64,
    path: PathBuf,
}

impl DatasetReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = read_manifest(dir)?;
        let path = dir.join(SIGNALS_FILE);
        let f = File::open(&path)?;
        let signals_len = f.metadata()?.len();
        Ok(Self {
            entries,
            signals: BufReader::new(f),
            signals_len,
            path,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pulse `i` as stored (ADC resolution is not recorded).
    pub fn signal(&mut self, i: usize) -> Result<IQSignal> {
        let e = &self.entries[i];
        let bytes = e.n_samples * SAMPLE_BYTES;
        if e.byte_offset + bytes > self.signals_len {
            return Err(Error::Dataset(format!(
                "record {} overruns {} ({} + {} > {})",
                e.id,
                self.path.display(),
                e.byte_offset,
                bytes,
                self.signals_len
            )));
        }
        self.signals.seek(SeekFrom::Start(e.byte_offset))?;
        let mut buf = vec![0u8; bytes as usize];
        self.signals.read_exact(&mut buf)?;
        let samples = buf
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Ok(IQSignal {
            samples,
            fs: e.fs_hz,
            pulse_width: e.pulse_width(),
            snr_db: e.snr_db,
            adc_bits: None,
        })
    }
}
