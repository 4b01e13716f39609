use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{IQSignal, WaveformError};

/// Add complex white Gaussian noise at `snr_db` relative to the signal's
/// mean power. `snr_db = +inf` returns the input unchanged. Noise adds on
/// top of whatever the signal already carries.
pub fn add_awgn(signal: &IQSignal, snr_db: f64, rng_seed: u64) -> IQSignal {
    let mut out = signal.clone();
    if snr_db == f64::INFINITY {
        return out;
    }
    let variance = signal.power() / 10f64.powf(snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for s in &mut out.samples {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *s += Complex64::new(sigma * re, sigma * im);
    }
    out.snr_db = snr_db;
    out
}

/// SNR of `noisy` measured against the known clean signal.
pub fn measured_snr_db(clean: &IQSignal, noisy: &IQSignal) -> f64 {
    let noise: f64 = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(c, n)| (n - c).norm_sqr())
        .sum();
    10.0 * (clean.power() * clean.len() as f64 / noise).log10()
}

#[derive(Debug, Clone)]
pub struct Quantized {
    pub signal: IQSignal,
    /// Set when the input was identically zero and passed through untouched.
    pub all_zero: bool,
}

/// Emulate a `bits`-bit receiver ADC.
///
/// I and Q are quantized independently with a midrise quantizer whose
/// outermost levels sit at ± the channel's peak absolute value, so the step
/// is `2·peak / (2^bits − 1)`. Values are returned in the input scale.
pub fn adc_quantize(signal: &IQSignal, bits: u32) -> Result<Quantized, WaveformError> {
    if !(2..=16).contains(&bits) {
        return Err(WaveformError::AdcBits(bits));
    }
    let peak_re = signal.samples.iter().fold(0.0f64, |m, s| m.max(s.re.abs()));
    let peak_im = signal.samples.iter().fold(0.0f64, |m, s| m.max(s.im.abs()));
    if peak_re == 0.0 && peak_im == 0.0 {
        return Ok(Quantized {
            signal: signal.clone(),
            all_zero: true,
        });
    }
    let levels = (1u32 << bits) as f64;
    let q_re = Midrise::new(peak_re, levels);
    let q_im = Midrise::new(peak_im, levels);
    let mut out = signal.clone();
    for s in &mut out.samples {
        *s = Complex64::new(q_re.apply(s.re), q_im.apply(s.im));
    }
    out.adc_bits = Some(bits);
    Ok(Quantized {
        signal: out,
        all_zero: false,
    })
}

struct Midrise {
    step: f64,
    top: f64,
}

impl Midrise {
    fn new(peak: f64, levels: f64) -> Self {
        Self {
            step: 2.0 * peak / (levels - 1.0),
            top: levels / 2.0 - 1.0,
        }
    }

    fn apply(&self, x: f64) -> f64 {
        if self.step == 0.0 {
            return 0.0;
        }
        let idx = (x / self.step).floor().clamp(-self.top - 1.0, self.top);
        (idx + 0.5) * self.step
    }
}
