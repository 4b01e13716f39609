//! Recognition accuracy, parameter error and SNR sweeps.

use std::io::Write;

use crate::error::{Error, Result};
use crate::pipeline::{generate_record, GenConfig};
use crate::rng::{derive_seed, Stream};
use crate::waveform::{IQSignal, ParamName, SubType, WaveformComponent, WaveformSpec};

/// Parameters reported by [`param_mse`], in CSV column order.
pub const MSE_PARAMS: [ParamName; 8] = [
    ParamName::Cf,
    ParamName::B,
    ParamName::T,
    ParamName::FH,
    ParamName::DeltaF,
    ParamName::SegNum,
    ParamName::PhaseStateNum,
    ParamName::CodeLength,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchMode {
    /// Require components in the same order instead of multiset equality.
    pub order_sensitive: bool,
}

type Key<'a> = (SubType, Option<&'a [u32]>);

fn key(c: &WaveformComponent) -> Key<'_> {
    (c.sub_type, c.code())
}

/// Components in matching order: as written when order matters, else
/// sorted by key (stable, so repeated subtypes keep their relative order).
fn aligned(spec: &WaveformSpec, mode: MatchMode) -> Vec<&WaveformComponent> {
    let mut v: Vec<_> = spec.components.iter().collect();
    if !mode.order_sensitive {
        v.sort_by(|a, b| key(a).cmp(&key(b)));
    }
    v
}

/// Same component types and, for Costas, the same hop code.
pub fn is_type_correct(pred: &WaveformSpec, truth: &WaveformSpec, mode: MatchMode) -> bool {
    let (p, t) = (aligned(pred, mode), aligned(truth, mode));
    p.len() == t.len() && p.iter().zip(&t).all(|(a, b)| key(a) == key(b))
}

fn check_aligned(n_pred: usize, n_truth: usize) -> Result<()> {
    if n_pred != n_truth {
        return Err(Error::Eval(format!("{n_pred} predictions for {n_truth} truths")));
    }
    Ok(())
}

/// Fraction of records whose prediction is type-correct. `None` is a
/// rejected (unparseable) prediction and counts as wrong.
pub fn type_accuracy(preds: &[Option<WaveformSpec>], truths: &[WaveformSpec], mode: MatchMode) -> Result<f64> {
    check_aligned(preds.len(), truths.len())?;
    if truths.is_empty() {
        return Err(Error::Eval("no records".into()));
    }
    let correct = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.as_ref().is_some_and(|p| is_type_correct(p, t, mode)))
        .count();
    Ok(correct as f64 / truths.len() as f64)
}

/// Squared errors of `param` for one type-correct record. The carrier is
/// counted once per record; other parameters once per component that
/// carries them.
fn squared_errors(pred: &WaveformSpec, truth: &WaveformSpec, param: ParamName, mode: MatchMode) -> Vec<f64> {
    if param == ParamName::Cf {
        return match (pred.carrier_mhz(), truth.carrier_mhz()) {
            (Some(p), Some(t)) => vec![(p - t).powi(2)],
            _ => vec![],
        };
    }
    aligned(pred, mode)
        .iter()
        .zip(aligned(truth, mode))
        .filter_map(|(p, t)| Some((p.scalar(param)? - t.scalar(param)?).powi(2)))
        .collect()
}

/// Mean squared error of `param` in physical units (MHz², µs², counts²)
/// over type-correct records containing it. `None` when no record is
/// eligible.
pub fn param_mse(
    preds: &[Option<WaveformSpec>],
    truths: &[WaveformSpec],
    param: ParamName,
    mode: MatchMode,
) -> Result<Option<f64>> {
    check_aligned(preds.len(), truths.len())?;
    if param == ParamName::Code {
        return Err(Error::Eval("hop codes are scored by type accuracy, not MSE".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in preds.iter().zip(truths) {
        let Some(p) = p else { continue };
        if !is_type_correct(p, t, mode) {
            continue;
        }
        for e in squared_errors(p, t, param, mode) {
            sum += e;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Accuracy and every parameter MSE for one set of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub snr_db: Option<f64>,
    pub n: usize,
    pub type_acc: f64,
    /// Aligned with [`MSE_PARAMS`].
    pub mse: Vec<Option<f64>>,
}

impl Metrics {
    pub fn compute(preds: &[Option<WaveformSpec>], truths: &[WaveformSpec], mode: MatchMode) -> Result<Self> {
        Ok(Self {
            snr_db: None,
            n: truths.len(),
            type_acc: type_accuracy(preds, truths, mode)?,
            mse: MSE_PARAMS
                .iter()
                .map(|&p| param_mse(preds, truths, p, mode))
                .collect::<Result<_>>()?,
        })
    }

    pub fn mse_of(&self, p: ParamName) -> Option<f64> {
        MSE_PARAMS.iter().position(|&q| q == p).and_then(|i| self.mse[i])
    }
}

fn csv_header(with_snr: bool) -> String {
    let mut cols: Vec<String> = Vec::new();
    if with_snr {
        cols.push("snr_db".into());
    }
    cols.push("n".into());
    cols.push("type_acc".into());
    cols.extend(MSE_PARAMS.iter().map(|p| format!("mse_{p}")));
    cols.join(",")
}

/// Metrics as CSV; undefined MSEs are written as `NaN`. The `snr_db`
/// column is present when the first row has an SNR.
pub fn write_metrics_csv(rows: &[Metrics], mut w: impl Write) -> Result<()> {
    let with_snr = rows.first().is_some_and(|r| r.snr_db.is_some());
    writeln!(w, "{}", csv_header(with_snr))?;
    for r in rows {
        let mut f: Vec<String> = Vec::new();
        if with_snr {
            f.push(r.snr_db.unwrap_or(f64::NAN).to_string());
        }
        f.push(r.n.to_string());
        f.push(r.type_acc.to_string());
        f.extend(r.mse.iter().map(|m| m.unwrap_or(f64::NAN).to_string()));
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

/// Evaluate `predict` on `n` fresh signals at every SNR of `grid`. Grid
/// point `k` draws its signals from its own seed derived from
/// `base.seed`, so adding points never changes existing ones.
pub fn snr_sweep(
    predict: &mut dyn FnMut(&IQSignal) -> Result<Option<WaveformSpec>>,
    base: &GenConfig,
    grid: &[f64],
    n: usize,
    mode: MatchMode,
) -> Result<Vec<Metrics>> {
    let mut rows = Vec::with_capacity(grid.len());
    for (k, &snr) in grid.iter().enumerate() {
        let cfg = GenConfig {
            n,
            snr_db: (snr, snr),
            seed: derive_seed(base.seed, Stream::Sweep, k as u64),
            ..base.clone()
        };
        let mut preds = Vec::with_capacity(n);
        let mut truths = Vec::with_capacity(n);
        for i in 0..n {
            let r = generate_record(&cfg, i)?;
            preds.push(predict(&r.signal)?);
            truths.push(r.spec);
        }
        let mut m = Metrics::compute(&preds, &truths, mode)?;
        m.snr_db = Some(snr);
        rows.push(m);
    }
    Ok(rows)
}
