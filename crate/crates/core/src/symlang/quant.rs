use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SymlangError;
use crate::waveform::ParamName;

/// Per-parameter quantization unit: frequencies in MHz, periods in µs,
/// counts and code entries in units of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationScheme {
    pub units: BTreeMap<ParamName, f64>,
}

impl Default for QuantizationScheme {
    fn default() -> Self {
        Self::with_resolution(0.1, 0.1)
    }
}

impl QuantizationScheme {
    /// `freq_mhz` for cf/B/FH/deltaF, `time_us` for T, 1 for the rest.
    pub fn with_resolution(freq_mhz: f64, time_us: f64) -> Self {
        let units = ParamName::ALL
            .iter()
            .map(|&p| {
                let u = match p {
                    ParamName::Cf | ParamName::B | ParamName::FH | ParamName::DeltaF => freq_mhz,
                    ParamName::T => time_us,
                    _ => 1.0,
                };
                (p, u)
            })
            .collect();
        Self { units }
    }

    pub fn unit(&self, p: ParamName) -> f64 {
        self.units.get(&p).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), SymlangError> {
        for (p, u) in &self.units {
            if !(u.is_finite() && *u > 0.0) {
                return Err(SymlangError::BadUnit { param: *p, unit: *u });
            }
        }
        Ok(())
    }

    /// `round(x / unit)`, unchecked against the vocabulary range.
    pub fn quantize_raw(&self, p: ParamName, x: f64) -> i64 {
        (x / self.unit(p)).round() as i64
    }

    pub fn quantize(&self, p: ParamName, x: f64, max: u16) -> Result<u16, SymlangError> {
        let q = self.quantize_raw(p, x);
        if !(0..=max as i64).contains(&q) || !x.is_finite() {
            return Err(SymlangError::NumericOverflow { value: q, max });
        }
        Ok(q as u16)
    }

    pub fn dequantize(&self, p: ParamName, q: u16) -> f64 {
        q as f64 * self.unit(p)
    }
}
