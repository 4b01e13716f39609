//! Central finite-difference gradient checking.

use super::graph::Grads;
use super::model::{Batch, Model};
use super::NnError;

/// Worst disagreement over one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub numel: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`. The floor keeps
/// entries whose true gradient is (near) zero from dividing roundoff by
/// roundoff.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare backprop gradients of the teacher-forcing loss with central
/// differences of step `h`, for every scalar of every tensor.
pub fn check_model(model: &Model<f64>, batch: &Batch<f64>, h: f64, floor: f64) -> Result<Vec<TensorCheck>, NnError> {
    let weight = 1.0 / batch.batch as f64;
    let mut grads: Grads<f64> = model.params.zero_grads();
    model.accumulate_gradients(batch, weight, &mut grads, None)?;
    let mut m = model.clone();
    let loss = |m: &Model<f64>| -> Result<f64, NnError> { Ok(m.evaluate(batch)?.nll * weight) };
    let mut out = Vec::new();
    for p in 0..m.params.len() {
        let mut worst_rel: f64 = 0.0;
        let mut worst_abs: f64 = 0.0;
        for i in 0..m.params.get(p).len() {
            let orig = m.params.get(p).data[i];
            m.params.get_mut(p).data[i] = orig + h;
            let up = loss(&m)?;
            m.params.get_mut(p).data[i] = orig - h;
            let down = loss(&m)?;
            m.params.get_mut(p).data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.mats[p].data[i];
            worst_rel = worst_rel.max(rel_err(analytic, numeric, floor));
            worst_abs = worst_abs.max((analytic - numeric).abs());
        }
        out.push(TensorCheck {
            name: m.params.name(p).to_string(),
            numel: m.params.get(p).len(),
            max_rel_err: worst_rel,
            max_abs_err: worst_abs,
        });
    }
    Ok(out)
}
