use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::{
    pulse_samples, Combination, IQSignal, ParamName, SubType, WaveformComponent, WaveformError,
    WaveformSpec,
};

const MHZ: f64 = 1e6;
const US: f64 = 1e-6;

/// Noiseless unit-amplitude pulse for `spec`, with zero initial phase.
pub fn synthesize(spec: &WaveformSpec, fs: f64, pulse_width: f64) -> Result<IQSignal, WaveformError> {
    synthesize_with_phase(spec, fs, pulse_width, 0.0)
}

/// Noiseless pulse `exp(j(2π cf k / fs + θ(k) + θ_p))`.
pub fn synthesize_with_phase(
    spec: &WaveformSpec,
    fs: f64,
    pulse_width: f64,
    phase_offset: f64,
) -> Result<IQSignal, WaveformError> {
    spec.validate()?;
    let n = pulse_samples(fs, pulse_width);
    if n == 0 {
        return Err(WaveformError::EmptyPulse { pulse_width, fs });
    }
    let max_hz = max_abs_frequency_hz(spec, pulse_width);
    if max_hz >= fs / 2.0 {
        return Err(WaveformError::Aliasing { max_hz, fs_hz: fs });
    }

    let theta = modulation_phase(spec, n, fs);
    let cf = spec.carrier_mhz().unwrap_or(0.0) * MHZ;
    let samples = theta
        .iter()
        .enumerate()
        .map(|(k, &th)| {
            // carrier reduced to [0, 1) turns before scaling
            let carrier = TAU * carrier_turns(cf, fs, k);
            Complex64::from_polar(1.0, carrier + th + phase_offset)
        })
        .collect();
    Ok(IQSignal {
        samples,
        fs,
        pulse_width,
        snr_db: f64::INFINITY,
        adc_bits: None,
    })
}

fn carrier_turns(cf: f64, fs: f64, k: usize) -> f64 {
    (cf / fs * k as f64).fract()
}

/// Segment boundaries for a sequential hybrid of `parts` components over
/// `n` samples: `round(n / parts) * i`, with the last segment taking the rest.
pub fn segment_bounds(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = (n as f64 / parts as f64).round() as usize;
    (0..parts)
        .map(|i| {
            let start = (step * i).min(n);
            let end = if i + 1 == parts { n } else { (step * (i + 1)).min(n) };
            (start, end)
        })
        .collect()
}

/// Modulation phase θ(k) of the whole spec (carrier excluded).
pub fn modulation_phase(spec: &WaveformSpec, n: usize, fs: f64) -> Vec<f64> {
    match spec.combination() {
        Combination::Single => component_phase(&spec.components[0], n, fs),
        Combination::Multiplicative => {
            let mut theta = vec![0.0; n];
            for c in &spec.components {
                for (acc, p) in theta.iter_mut().zip(component_phase(c, n, fs)) {
                    *acc += p;
                }
            }
            theta
        }
        Combination::Sequential => {
            let mut theta = Vec::with_capacity(n);
            for ((start, end), c) in segment_bounds(n, spec.components.len())
                .into_iter()
                .zip(&spec.components)
            {
                theta.extend(component_phase(c, end - start, fs));
            }
            theta
        }
    }
}

/// Phase of one component over `n` samples (its own local time origin).
pub fn component_phase(c: &WaveformComponent, n: usize, fs: f64) -> Vec<f64> {
    let duration = n as f64 / fs;
    let t = |k: usize| k as f64 / fs;
    match c.sub_type {
        SubType::LFM => {
            let b = c.req(ParamName::B) * MHZ;
            (0..n)
                .map(|k| {
                    let t = t(k);
                    TAU * (-0.5 * b * t + 0.5 * b * t * t / duration)
                })
                .collect()
        }
        SubType::Sin => {
            let b = c.req(ParamName::B) * MHZ;
            let period = c.req(ParamName::T) * US;
            // f(t) = cf + (B/2) sin(2πt/T)
            (0..n)
                .map(|k| 0.5 * b * period * (1.0 - (TAU * t(k) / period).cos()))
                .collect()
        }
        SubType::Tri => {
            let b = c.req(ParamName::B) * MHZ;
            let period = c.req(ParamName::T) * US;
            // f(t) = cf - B/2 + B·tri(t/T), tri rising 0→1 then falling 1→0
            (0..n)
                .map(|k| {
                    let u = (t(k) / period).fract();
                    let g = if u <= 0.5 {
                        u * u - 0.5 * u
                    } else {
                        1.5 * (u - 0.5) - (u * u - 0.25)
                    };
                    TAU * b * period * g
                })
                .collect()
        }
        SubType::Frank | SubType::P1 | SubType::P2 | SubType::P3 | SubType::P4 => {
            let chips = polyphase_chips(c.sub_type, c.count(ParamName::CodeLength));
            let nc = chips.len();
            (0..n).map(|k| chips[k * nc / n]).collect()
        }
        SubType::T1 | SubType::T2 | SubType::T3 | SubType::T4 => {
            let segs = c.count(ParamName::SegNum) as f64;
            let states = c.count(ParamName::PhaseStateNum) as f64;
            let delta_f = c.scalar(ParamName::DeltaF).unwrap_or(0.0) * MHZ;
            (0..n)
                .map(|k| polytime_phase(c.sub_type, t(k), duration, segs, states, delta_f))
                .collect()
        }
        SubType::Costas => {
            let code = c.code().unwrap_or(&[]);
            let fh = c.req(ParamName::FH) * MHZ;
            let len = code.len();
            let center = (len as f64 + 1.0) / 2.0;
            let mut theta = Vec::with_capacity(n);
            let mut acc = 0.0;
            for k in 0..n {
                theta.push(acc);
                let f = (code[k * len / n] as f64 - center) * fh;
                acc = (acc + TAU * f / fs).rem_euclid(TAU);
            }
            theta
        }
    }
}

/// Chip phases for the Frank and P1-P4 families, in transmission order.
///
/// Frank/P1/P2 use a base `m` (m² chips); P3/P4 use `m` chips.
pub fn polyphase_chips(sub: SubType, m: usize) -> Vec<f64> {
    let mf = m as f64;
    match sub {
        SubType::Frank | SubType::P1 | SubType::P2 => {
            let mut out = Vec::with_capacity(m * m);
            // j indexes the frequency group, i the sample within it
            for j in 1..=m {
                for i in 1..=m {
                    let (i, j) = (i as f64, j as f64);
                    let phi = match sub {
                        SubType::Frank => TAU * (i - 1.0) * (j - 1.0) / mf,
                        SubType::P1 => -(PI / mf) * (mf - (2.0 * j - 1.0)) * ((j - 1.0) * mf + (i - 1.0)),
                        _ => -(PI / (2.0 * mf)) * (2.0 * i - 1.0 - mf) * (2.0 * j - 1.0 - mf),
                    };
                    out.push(phi);
                }
            }
            out
        }
        SubType::P3 => (1..=m)
            .map(|i| {
                let i = i as f64;
                PI * (i - 1.0).powi(2) / mf
            })
            .collect(),
        SubType::P4 => (1..=m)
            .map(|i| {
                let i = i as f64;
                PI * (i - 1.0).powi(2) / mf - PI * (i - 1.0)
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// Polytime (T1-T4) phase at time `t` of a code lasting `tm` seconds.
fn polytime_phase(sub: SubType, t: f64, tm: f64, segs: f64, states: f64, delta_f: f64) -> f64 {
    let step = TAU / states;
    let level = match sub {
        SubType::T1 | SubType::T2 => {
            let j = (t * segs / tm).floor().min(segs - 1.0);
            let local = segs * t - j * tm;
            let rate = if sub == SubType::T1 {
                j * states / tm
            } else {
                (2.0 * j + 1.0 - segs) / tm * states / 2.0
            };
            (local * rate).floor()
        }
        SubType::T3 => (states * delta_f * t * t / (2.0 * tm)).floor(),
        _ => (states * delta_f * t * t / (2.0 * tm) - states * delta_f * t / 2.0).floor(),
    };
    (step * level).rem_euclid(TAU)
}

/// Nominal frequency excursion `(lo, hi)` in Hz of one component relative
/// to the carrier, given the component's duration.
fn deviation_hz(c: &WaveformComponent, duration: f64) -> (f64, f64) {
    match c.sub_type {
        SubType::LFM | SubType::Sin | SubType::Tri => {
            let half = c.req(ParamName::B) * MHZ / 2.0;
            (-half, half)
        }
        SubType::Costas => {
            let len = c.code().map_or(1, <[u32]>::len) as f64;
            let half = (len - 1.0) / 2.0 * c.req(ParamName::FH) * MHZ;
            (-half, half)
        }
        SubType::Frank | SubType::P1 | SubType::P2 | SubType::P3 | SubType::P4 => {
            let m = c.count(ParamName::CodeLength);
            let chips = polyphase_chips(c.sub_type, m).len() as f64;
            let rate = chips / duration;
            (-rate, rate)
        }
        SubType::T1 | SubType::T2 => {
            let segs = c.req(ParamName::SegNum);
            let f = segs * segs / duration;
            (-f, f)
        }
        SubType::T3 => (0.0, c.req(ParamName::DeltaF) * MHZ),
        SubType::T4 => {
            let half = c.req(ParamName::DeltaF) * MHZ / 2.0;
            (-half, half)
        }
    }
}

/// Largest nominal |instantaneous frequency| in Hz reached by `spec`.
pub fn max_abs_frequency_hz(spec: &WaveformSpec, pulse_width: f64) -> f64 {
    let cf = spec.carrier_mhz().unwrap_or(0.0) * MHZ;
    let n = spec.components.len().max(1) as f64;
    let (lo, hi) = match spec.combination() {
        Combination::Multiplicative => spec
            .components
            .iter()
            .map(|c| deviation_hz(c, pulse_width))
            .fold((0.0, 0.0), |(a, b), (lo, hi)| (a + lo, b + hi)),
        Combination::Single | Combination::Sequential => spec
            .components
            .iter()
            .map(|c| deviation_hz(c, pulse_width / n))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| {
                (a.min(lo), b.max(hi))
            }),
    };
    (cf + lo).abs().max((cf + hi).abs())
}
