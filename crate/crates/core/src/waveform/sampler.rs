//! Random waveform descriptions drawn from the dataset parameter ranges.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::costas::{costas_table, MAX_ORDER, MIN_ORDER};
use super::{
    max_abs_frequency_hz, ParamName, ParamValue, SubType, WaveformComponent, WaveformError,
    WaveformSpec,
};

/// Parameter ranges (MHz, µs, counts) used by the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub cf_mhz: (f64, f64),
    pub lfm_b_mhz: (f64, f64),
    pub sintri_b_mhz: (f64, f64),
    pub period_us: (f64, f64),
    /// Costas hop step; the upper end keeps the full hop span inside the band.
    pub fh_mhz: (f64, f64),
    pub seg_num: (u32, u32),
    pub phasestate_num: (u32, u32),
    pub delta_f_mhz: (f64, f64),
    pub code_length: (u32, u32),
    pub costas_order: (usize, usize),
    /// Sample rate the drawn waveforms must fit under.
    pub fs_hz: f64,
    /// Pulse width assumed for the alias check.
    pub pulse_width_s: f64,
    /// Largest admissible |instantaneous frequency| as a fraction of fs.
    pub max_freq_fraction: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            cf_mhz: (10.0, 40.0),
            lfm_b_mhz: (2.0, 10.0),
            sintri_b_mhz: (10.0, 20.0),
            period_us: (5.0, 20.0),
            fh_mhz: (0.5, 1.5),
            seg_num: (1, 4),
            phasestate_num: (2, 4),
            delta_f_mhz: (1.0, 10.0),
            code_length: (3, 10),
            costas_order: (MIN_ORDER, MAX_ORDER),
            fs_hz: 100e6,
            pulse_width_s: 50e-6,
            max_freq_fraction: 0.49,
        }
    }
}

/// Hybrid combinations drawn for the second dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HybridFamily {
    /// Several LFMs, sequential.
    FmFm,
    /// LFM times a polyphase/polytime code.
    FmPm,
    /// LFM times Costas.
    FmFc,
    /// Polyphase code times Costas.
    PmFc,
    /// Two polyphase codes, sequential.
    PmPm,
}

impl HybridFamily {
    pub const ALL: [HybridFamily; 5] = [
        HybridFamily::FmFm,
        HybridFamily::FmPm,
        HybridFamily::FmFc,
        HybridFamily::PmFc,
        HybridFamily::PmPm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HybridFamily::FmFm => "FM+FM",
            HybridFamily::FmPm => "FM+PM",
            HybridFamily::FmFc => "FM+FC",
            HybridFamily::PmFc => "PM+FC",
            HybridFamily::PmPm => "PM+PM",
        }
    }
}

impl fmt::Display for HybridFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HybridFamily {
    type Err = WaveformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HybridFamily::ALL
            .iter()
            .copied()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| WaveformError::UnknownSubType(s.to_string()))
    }
}

/// A dataset class: one basic subtype or one hybrid family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalClass {
    Basic(SubType),
    Hybrid(HybridFamily),
}

impl fmt::Display for SignalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalClass::Basic(s) => s.fmt(f),
            SignalClass::Hybrid(h) => h.fmt(f),
        }
    }
}

impl FromStr for SignalClass {
    type Err = WaveformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<SubType>()
            .map(SignalClass::Basic)
            .or_else(|_| s.parse::<HybridFamily>().map(SignalClass::Hybrid))
    }
}

const POLYPHASE: [SubType; 5] = [SubType::Frank, SubType::P1, SubType::P2, SubType::P3, SubType::P4];
const PHASE_CODED: [SubType; 9] = [
    SubType::Frank,
    SubType::P1,
    SubType::P2,
    SubType::P3,
    SubType::P4,
    SubType::T1,
    SubType::T2,
    SubType::T3,
    SubType::T4,
];

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn uniform_int<R: Rng>(rng: &mut R, (lo, hi): (u32, u32)) -> f64 {
    rng.random_range(lo..=hi.max(lo)) as f64
}

/// Draw every parameter of `sub` except the carrier.
fn draw_component<R: Rng>(rng: &mut R, cfg: &SamplerConfig, sub: SubType, cf: f64) -> WaveformComponent {
    use ParamName::*;
    let s = ParamValue::Scalar;
    let mut params = vec![(Cf, s(cf))];
    match sub {
        SubType::LFM => params.push((B, s(uniform(rng, cfg.lfm_b_mhz)))),
        SubType::Sin | SubType::Tri => {
            params.push((B, s(uniform(rng, cfg.sintri_b_mhz))));
            params.push((T, s(uniform(rng, cfg.period_us))));
        }
        SubType::Frank | SubType::P1 | SubType::P2 | SubType::P3 | SubType::P4 => {
            params.push((CodeLength, s(uniform_int(rng, cfg.code_length))));
        }
        SubType::T1 | SubType::T2 | SubType::T3 | SubType::T4 => {
            params.push((SegNum, s(uniform_int(rng, cfg.seg_num))));
            params.push((PhaseStateNum, s(uniform_int(rng, cfg.phasestate_num))));
            if matches!(sub, SubType::T3 | SubType::T4) {
                params.push((DeltaF, s(uniform(rng, cfg.delta_f_mhz))));
            }
        }
        SubType::Costas => {
            params.push((FH, s(uniform(rng, cfg.fh_mhz))));
            let lo = cfg.costas_order.0.clamp(MIN_ORDER, MAX_ORDER);
            let hi = cfg.costas_order.1.clamp(lo, MAX_ORDER);
            let order = rng.random_range(lo..=hi);
            let code = costas_table()[order - MIN_ORDER]
                .choose(rng)
                .cloned()
                .unwrap_or_default();
            params.push((Code, ParamValue::Sequence(code)));
        }
    }
    WaveformComponent::new(sub, params)
}

fn fits(spec: &WaveformSpec, cfg: &SamplerConfig) -> bool {
    max_abs_frequency_hz(spec, cfg.pulse_width_s) < cfg.max_freq_fraction * cfg.fs_hz
}

/// Draw components with a shared carrier until the result fits in band.
fn draw_fitting<R: Rng>(rng: &mut R, cfg: &SamplerConfig, subs: &[SubType]) -> WaveformSpec {
    loop {
        let cf = uniform(rng, cfg.cf_mhz);
        let spec = WaveformSpec::new(subs.iter().map(|&s| draw_component(rng, cfg, s, cf)).collect());
        if fits(&spec, cfg) {
            return spec;
        }
    }
}

/// Uniform subtype from `class_filter`, parameters uniform in their ranges.
pub fn sample_spec(class_filter: &[SubType], rng_seed: u64) -> Result<WaveformSpec, WaveformError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_basic_with(&mut rng, &SamplerConfig::default(), class_filter)
}

pub fn sample_basic_with<R: Rng>(
    rng: &mut R,
    cfg: &SamplerConfig,
    class_filter: &[SubType],
) -> Result<WaveformSpec, WaveformError> {
    let sub = *class_filter.choose(rng).ok_or(WaveformError::EmptyFilter)?;
    Ok(draw_fitting(rng, cfg, &[sub]))
}

pub fn sample_hybrid(family: HybridFamily, rng_seed: u64) -> WaveformSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_hybrid_with(&mut rng, &SamplerConfig::default(), family)
}

pub fn sample_hybrid_with<R: Rng>(rng: &mut R, cfg: &SamplerConfig, family: HybridFamily) -> WaveformSpec {
    let pick = |rng: &mut R, from: &[SubType]| *from.choose(rng).unwrap_or(&SubType::P1);
    let subs = match family {
        HybridFamily::FmFm => vec![SubType::LFM; rng.random_range(2..=3)],
        HybridFamily::FmPm => vec![SubType::LFM, pick(rng, &PHASE_CODED)],
        HybridFamily::FmFc => vec![SubType::LFM, SubType::Costas],
        HybridFamily::PmFc => vec![pick(rng, &POLYPHASE), SubType::Costas],
        HybridFamily::PmPm => vec![pick(rng, &POLYPHASE), pick(rng, &POLYPHASE)],
    };
    draw_fitting(rng, cfg, &subs)
}

pub fn sample_class_with<R: Rng>(rng: &mut R, cfg: &SamplerConfig, class: SignalClass) -> WaveformSpec {
    match class {
        SignalClass::Basic(sub) => draw_fitting(rng, cfg, &[sub]),
        SignalClass::Hybrid(h) => sample_hybrid_with(rng, cfg, h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{is_costas, synthesize, Combination};

    #[test]
    fn lfm_bandwidth_range() {
        for seed in 0..200 {
            let s = sample_spec(&[SubType::LFM], seed).unwrap();
            let b = s.components[0].scalar(ParamName::B).unwrap();
            assert!((2.0..=10.0).contains(&b), "{b}");
            let cf = s.carrier_mhz().unwrap();
            assert!((10.0..=40.0).contains(&cf));
        }
    }

    #[test]
    fn costas_codes_are_valid() {
        for seed in 0..200 {
            let s = sample_spec(&[SubType::Costas], seed).unwrap();
            let code = s.components[0].code().unwrap();
            assert!((3..=12).contains(&code.len()));
            assert!(is_costas(code));
        }
    }

    #[test]
    fn seeded_and_valid_for_every_class() {
        for (i, sub) in SubType::ALL.iter().enumerate() {
            let a = sample_spec(&[*sub], i as u64).unwrap();
            assert_eq!(a, sample_spec(&[*sub], i as u64).unwrap());
            assert_eq!(a.components[0].sub_type, *sub);
            a.validate().unwrap();
            synthesize(&a, 100e6, 50e-6).unwrap();
        }
        assert_eq!(sample_spec(&[], 0), Err(WaveformError::EmptyFilter));
    }

    #[test]
    fn hybrids_share_carrier_and_combine_per_family() {
        for fam in HybridFamily::ALL {
            for seed in 0..30 {
                let s = sample_hybrid(fam, seed);
                s.validate().unwrap();
                let cf = s.carrier_mhz().unwrap();
                assert!(s.components.iter().all(|c| c.scalar(ParamName::Cf) == Some(cf)));
                let want = match fam {
                    HybridFamily::FmFm | HybridFamily::PmPm => Combination::Sequential,
                    _ => Combination::Multiplicative,
                };
                assert_eq!(s.combination(), want);
                synthesize(&s, 100e6, 100e-6).unwrap();
            }
        }
    }

    #[test]
    fn class_names_parse() {
        assert_eq!("P1".parse::<SignalClass>().unwrap(), SignalClass::Basic(SubType::P1));
        assert_eq!(
            "FM+PM".parse::<SignalClass>().unwrap(),
            SignalClass::Hybrid(HybridFamily::FmPm)
        );
        assert!("BPSK".parse::<SignalClass>().is_err());
    }
}
