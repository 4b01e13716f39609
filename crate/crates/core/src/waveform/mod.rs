//! LPI radar pulse synthesis.
//!
//! A [`WaveformSpec`] is an ordered list of components, each a
//! `(type, subtype, parameters)` triple. Frequencies are carried in MHz and
//! times in microseconds; [`synthesize`] converts to SI internally.
//!
//! Hybrids combine their components in one of two ways, inferred from the
//! component types: all-FM and all-PM hybrids are concatenated in time, mixed
//! hybrids multiply their unit-modulus envelopes.

mod costas;
mod noise;
mod sampler;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use costas::{costas_table, enumerate_costas, is_costas, CostasCode};
pub use noise::{add_awgn, adc_quantize, measured_snr_db, Quantized};
pub use sampler::{
    sample_basic_with, sample_class_with, sample_hybrid, sample_hybrid_with, sample_spec,
    HybridFamily, SamplerConfig, SignalClass,
};
pub use synth::{
    component_phase, max_abs_frequency_hz, modulation_phase, polyphase_chips, segment_bounds,
    synthesize, synthesize_with_phase,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error("unknown subtype `{0}`")]
    UnknownSubType(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("subtype {sub:?} is not a {wf:?} waveform")]
    IllegalPair { wf: WaveformType, sub: SubType },
    #[error("{sub:?} component: missing parameter {param}")]
    MissingParam { sub: SubType, param: ParamName },
    #[error("{sub:?} component: unexpected parameter {param}")]
    UnexpectedParam { sub: SubType, param: ParamName },
    #[error("{sub:?} component: invalid value for {param}: {reason}")]
    InvalidParam {
        sub: SubType,
        param: ParamName,
        reason: String,
    },
    #[error("waveform has no components")]
    Empty,
    #[error("max instantaneous frequency {max_hz:.0} Hz aliases at fs = {fs_hz:.0} Hz")]
    Aliasing { max_hz: f64, fs_hz: f64 },
    #[error("pulse of {pulse_width} s at {fs} Hz has no samples")]
    EmptyPulse { pulse_width: f64, fs: f64 },
    #[error("ADC resolution {0} bits outside [2, 16]")]
    AdcBits(u32),
    #[error("class filter is empty")]
    EmptyFilter,
}

/// Top-level waveform family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WaveformType {
    FM,
    PM,
    FC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubType {
    LFM,
    Sin,
    Tri,
    Frank,
    P1,
    P2,
    P3,
    P4,
    T1,
    T2,
    T3,
    T4,
    Costas,
}

impl SubType {
    pub const ALL: [SubType; 13] = [
        SubType::LFM,
        SubType::Sin,
        SubType::Tri,
        SubType::Frank,
        SubType::P1,
        SubType::P2,
        SubType::P3,
        SubType::P4,
        SubType::T1,
        SubType::T2,
        SubType::T3,
        SubType::T4,
        SubType::Costas,
    ];

    pub fn wf_type(self) -> WaveformType {
        use SubType::*;
        match self {
            LFM | Sin | Tri => WaveformType::FM,
            Frank | P1 | P2 | P3 | P4 | T1 | T2 | T3 | T4 => WaveformType::PM,
            Costas => WaveformType::FC,
        }
    }

    /// Parameters in the order the description language emits them.
    pub fn params(self) -> &'static [ParamName] {
        use ParamName::*;
        use SubType::*;
        match self {
            LFM => &[Cf, B],
            Sin | Tri => &[Cf, B, T],
            Costas => &[Cf, FH, Code],
            T1 | T2 => &[Cf, SegNum, PhaseStateNum],
            T3 | T4 => &[Cf, SegNum, PhaseStateNum, DeltaF],
            Frank | P1 | P2 | P3 | P4 => &[Cf, CodeLength],
        }
    }

    pub fn as_str(self) -> &'static str {
        use SubType::*;
        match self {
            LFM => "LFM",
            Sin => "Sin",
            Tri => "Tri",
            Frank => "Frank",
            P1 => "P1",
            P2 => "P2",
            P3 => "P3",
            P4 => "P4",
            T1 => "T1",
            T2 => "T2",
            T3 => "T3",
            T4 => "T4",
            Costas => "Costas",
        }
    }

    /// Frank/P-codes and polytime codes.
    pub fn is_polyphase(self) -> bool {
        use SubType::*;
        matches!(self, Frank | P1 | P2 | P3 | P4)
    }
}

impl fmt::Display for SubType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubType {
    type Err = WaveformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| WaveformError::UnknownSubType(s.to_string()))
    }
}

impl WaveformType {
    pub fn as_str(self) -> &'static str {
        match self {
            WaveformType::FM => "FM",
            WaveformType::PM => "PM",
            WaveformType::FC => "FC",
        }
    }
}

impl fmt::Display for WaveformType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamName {
    #[serde(rename = "cf")]
    Cf,
    #[serde(rename = "B")]
    B,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "FH")]
    FH,
    #[serde(rename = "Code")]
    Code,
    #[serde(rename = "seg_num")]
    SegNum,
    #[serde(rename = "phasestate_num")]
    PhaseStateNum,
    #[serde(rename = "deltaF")]
    DeltaF,
    #[serde(rename = "code_length")]
    CodeLength,
}

impl ParamName {
    pub const ALL: [ParamName; 9] = [
        ParamName::Cf,
        ParamName::B,
        ParamName::T,
        ParamName::FH,
        ParamName::Code,
        ParamName::SegNum,
        ParamName::PhaseStateNum,
        ParamName::DeltaF,
        ParamName::CodeLength,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Cf => "cf",
            ParamName::B => "B",
            ParamName::T => "T",
            ParamName::FH => "FH",
            ParamName::Code => "Code",
            ParamName::SegNum => "seg_num",
            ParamName::PhaseStateNum => "phasestate_num",
            ParamName::DeltaF => "deltaF",
            ParamName::CodeLength => "code_length",
        }
    }

    /// Integer-valued counts (as opposed to continuous physical quantities).
    pub fn is_count(self) -> bool {
        matches!(
            self,
            ParamName::SegNum | ParamName::PhaseStateNum | ParamName::CodeLength
        )
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = WaveformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamName::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| WaveformError::UnknownParam(s.to_string()))
    }
}

/// A parameter value: a scalar (MHz, µs or a count) or a Costas code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Sequence(Vec<u32>),
}

impl ParamValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            ParamValue::Sequence(_) => None,
        }
    }

    pub fn as_sequence(&self) -> Option<&[u32]> {
        match self {
            ParamValue::Scalar(_) => None,
            ParamValue::Sequence(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformComponent {
    pub wf_type: WaveformType,
    pub sub_type: SubType,
    pub params: BTreeMap<ParamName, ParamValue>,
}

impl WaveformComponent {
    /// Build a component from `(name, value)` pairs; the type is implied by
    /// the subtype.
    pub fn new(sub_type: SubType, params: impl IntoIterator<Item = (ParamName, ParamValue)>) -> Self {
        Self {
            wf_type: sub_type.wf_type(),
            sub_type,
            params: params.into_iter().collect(),
        }
    }

    pub fn scalar(&self, name: ParamName) -> Option<f64> {
        self.params.get(&name).and_then(ParamValue::as_scalar)
    }

    pub fn code(&self) -> Option<&[u32]> {
        self.params.get(&ParamName::Code).and_then(ParamValue::as_sequence)
    }

    /// Scalar parameter that `validate` guarantees is present.
    pub(crate) fn req(&self, name: ParamName) -> f64 {
        self.scalar(name).unwrap_or(0.0)
    }

    pub(crate) fn count(&self, name: ParamName) -> usize {
        self.req(name).round() as usize
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        let sub = self.sub_type;
        if sub.wf_type() != self.wf_type {
            return Err(WaveformError::IllegalPair {
                wf: self.wf_type,
                sub,
            });
        }
        let wanted = sub.params();
        for p in wanted {
            if !self.params.contains_key(p) {
                return Err(WaveformError::MissingParam { sub, param: *p });
            }
        }
        for (p, v) in &self.params {
            if !wanted.contains(p) {
                return Err(WaveformError::UnexpectedParam { sub, param: *p });
            }
            let bad = |reason: &str| WaveformError::InvalidParam {
                sub,
                param: *p,
                reason: reason.to_string(),
            };
            match (p, v) {
                (ParamName::Code, ParamValue::Sequence(code)) => {
                    if code.is_empty() {
                        return Err(bad("empty code"));
                    }
                    if !costas::is_permutation(code) {
                        return Err(bad("code is not a permutation of 1..L"));
                    }
                }
                (ParamName::Code, ParamValue::Scalar(_)) => return Err(bad("expected a sequence")),
                (_, ParamValue::Sequence(_)) => return Err(bad("expected a scalar")),
                (p, ParamValue::Scalar(x)) => {
                    if !x.is_finite() {
                        return Err(bad("not finite"));
                    }
                    if p.is_count() {
                        if x.fract() != 0.0 || *x < 1.0 {
                            return Err(bad("expected a positive integer"));
                        }
                        if *p == ParamName::PhaseStateNum && *x < 2.0 {
                            return Err(bad("need at least two phase states"));
                        }
                    } else if *p == ParamName::Cf {
                        // carrier may sit anywhere in the complex baseband
                    } else if *x < 0.0 || (*p == ParamName::T && *x == 0.0) {
                        return Err(bad("must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// How the components of a hybrid are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    Single,
    /// Time concatenation, pulse width split equally.
    Sequential,
    /// Pointwise product of unit-modulus envelopes.
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub components: Vec<WaveformComponent>,
}

impl WaveformSpec {
    pub fn new(components: Vec<WaveformComponent>) -> Self {
        Self { components }
    }

    pub fn single(component: WaveformComponent) -> Self {
        Self {
            components: vec![component],
        }
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if self.components.is_empty() {
            return Err(WaveformError::Empty);
        }
        self.components.iter().try_for_each(WaveformComponent::validate)
    }

    /// Combination method implied by the component types: same-family
    /// hybrids (FM+FM, PM+PM) are sequential, mixed ones multiplicative.
    pub fn combination(&self) -> Combination {
        match self.components.as_slice() {
            [] | [_] => Combination::Single,
            [first, rest @ ..] => {
                if rest.iter().all(|c| c.wf_type == first.wf_type) {
                    Combination::Sequential
                } else {
                    Combination::Multiplicative
                }
            }
        }
    }

    /// Carrier frequency in MHz; the first component's value wins.
    pub fn carrier_mhz(&self) -> Option<f64> {
        self.components.first().and_then(|c| c.scalar(ParamName::Cf))
    }

    pub fn sub_types(&self) -> Vec<SubType> {
        self.components.iter().map(|c| c.sub_type).collect()
    }
}

/// Complex baseband pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct IQSignal {
    pub samples: Vec<Complex64>,
    /// Sample rate in Hz.
    pub fs: f64,
    /// Pulse width in seconds.
    pub pulse_width: f64,
    /// Target SNR; `+inf` for a clean signal.
    pub snr_db: f64,
    /// ADC resolution once quantized.
    pub adc_bits: Option<u32>,
}

impl IQSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Number of samples for a pulse of `pulse_width` seconds at `fs` Hz.
pub fn pulse_samples(fs: f64, pulse_width: f64) -> usize {
    (pulse_width * fs).round().max(0.0) as usize
}
