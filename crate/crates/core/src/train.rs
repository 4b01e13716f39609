//! Teacher-forcing training with AdamW, step decay and early stopping.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Grads, Mat, Model, ModelCheckpoint, ModelConfig, ParamStore};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::symlang::Vocabulary;
use crate::tfr::StftConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halving_period: usize,
    pub weight_decay: f64,
    /// Linear ramp of the learning rate over the first this many updates.
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// A validation loss counts as a new best only if it beats the old
    /// one by more than this.
    pub min_delta: f64,
    pub seed: u64,
    /// Records held out for validation when splitting a single dataset.
    pub val_size: usize,
    /// Sequences per forward/backward pass; gradients of the micro-batches
    /// of one batch are summed before the update.
    pub micro_batch: usize,
    /// Wall-clock limit in seconds, checked between epochs.
    pub max_seconds: Option<f64>,
    /// Evaluate teacher-forced token accuracy on the training set each
    /// epoch and stop once it reaches this value.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr: 1e-3,
            lr_halving_period: 20,
            weight_decay: 0.01,
            warmup_steps: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: Some(1.0),
            max_epochs: 100,
            patience: 10,
            min_delta: 1e-5,
            seed: 0,
            val_size: 0,
            micro_batch: 32,
            max_seconds: None,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Train(m.to_string()));
        if self.batch_size == 0 || self.micro_batch == 0 || self.max_epochs == 0 || self.lr_halving_period == 0 {
            return bad("batch_size, micro_batch, max_epochs and lr_halving_period must be positive");
        }
        if !(self.lr > 0.0 && self.eps > 0.0 && self.weight_decay >= 0.0) {
            return bad("lr and eps must be positive, weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return bad("patience must lie in 1..=max_epochs");
        }
        Ok(())
    }

    /// Learning rate of the 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * 0.5f64.powi((epoch / self.lr_halving_period) as i32)
    }

    /// Multiplier on the epoch rate for update number `step` (0-based).
    pub fn warmup_factor(&self, step: u64) -> f64 {
        if step >= self.warmup_steps {
            1.0
        } else {
            (step + 1) as f64 / self.warmup_steps as f64
        }
    }
}

/// One training record: flattened patches and the framed token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    /// `n_patches × patch_len`, row-major.
    pub patches: Vec<f32>,
    /// `<sos>` … `<eos>`.
    pub tokens: Vec<u32>,
}

/// Right-pad token sequences with `<pad>` to the longest in the batch and
/// stack the patch matrices.
pub fn batch_collate(examples: &[&Example], cfg: &ModelConfig) -> Result<Batch<f32>> {
    if examples.is_empty() {
        return Err(Error::Train("empty batch".into()));
    }
    let plen = cfg.n_patches() * cfg.patch_len();
    let mut seq_len = 0;
    for e in examples {
        if e.patches.len() != plen {
            return Err(Error::Train(format!(
                "record {}: {} patch values, model expects {plen}",
                e.id,
                e.patches.len()
            )));
        }
        if e.tokens.len() < 2 || e.tokens[0] != Vocabulary::SOS || *e.tokens.last().unwrap_or(&0) != Vocabulary::EOS {
            return Err(Error::Train(format!("record {}: tokens not framed by <sos> … <eos>", e.id)));
        }
        if let Some(t) = e.tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::Train(format!(
                "record {}: token id {t} outside the model vocabulary of {}",
                e.id, cfg.vocab_size
            )));
        }
        seq_len = seq_len.max(e.tokens.len() - 1);
    }
    if seq_len > cfg.max_len {
        return Err(Error::Train(format!("sequence of {} decoder steps exceeds max_len {}", seq_len, cfg.max_len)));
    }
    let b = examples.len();
    let mut data = Vec::with_capacity(b * plen);
    let mut inputs = Vec::with_capacity(b * seq_len);
    let mut targets = Vec::with_capacity(b * seq_len);
    for e in examples {
        data.extend_from_slice(&e.patches);
        let n = e.tokens.len() - 1;
        inputs.extend_from_slice(&e.tokens[..n]);
        inputs.extend(std::iter::repeat_n(Vocabulary::PAD, seq_len - n));
        targets.extend(e.tokens[1..].iter().map(|&t| Some(t)));
        targets.extend(std::iter::repeat_n(None, seq_len - n));
    }
    Ok(Batch {
        batch: b,
        seq_len,
        patches: Mat::from_vec(b * cfg.n_patches(), cfg.patch_len(), data),
        inputs,
        targets,
    })
}

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    decay: Vec<bool>,
    pub step: u64,
}

impl AdamW {
    /// Biases and normalization parameters are not decayed.
    pub fn new(params: &ParamStore<f32>, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, m)| vec![0.0; m.len()]).collect();
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            m: zeros.clone(),
            v: zeros,
            decay: params
                .iter()
                .map(|(n, _)| !(n.ends_with(".bias") || n.ends_with(".gamma") || n.ends_with(".beta")))
                .collect(),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut ParamStore<f32>, grads: &Grads<f32>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let eps = self.eps as f32;
        for p in 0..params.len() {
            let decay = if self.decay[p] { (lr * self.weight_decay) as f32 } else { 0.0 };
            let w = params.get_mut(p);
            let g = &grads.mats[p].data;
            let (m, v) = (&mut self.m[p], &mut self.v[p]);
            for i in 0..w.data.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let denom = (v[i] * inv_bc2).sqrt() + eps;
                w.data[i] -= decay * w.data[i] + step_size * m[i] / denom;
            }
        }
    }
}

/// Early stopping on validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub patience: usize,
    pub min_delta: f64,
    pub best: f64,
    pub best_epoch: Option<usize>,
}

impl Plateau {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: None,
        }
    }

    /// Record the loss of `epoch`; true if it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        let better = match self.best_epoch {
            None => loss.is_finite(),
            Some(_) => loss < self.best - self.min_delta,
        };
        if better {
            self.best = loss;
            self.best_epoch = Some(epoch);
        }
        better
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        self.best_epoch.is_some_and(|b| epoch >= b + self.patience)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sequence loss over the epoch's batches.
    pub train_loss: f64,
    /// `NaN` without a validation set.
    pub val_loss: f64,
    pub lr: f64,
    /// Teacher-forced next-token accuracy on the training set, when tracked.
    pub train_token_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    TimeBudget,
    TargetAccuracy,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch (the last epoch without a
    /// validation set).
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// History as CSV with columns `epoch,train_loss,val_loss,lr`.
pub fn write_history_csv(history: &[EpochRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,lr")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
    }
    Ok(())
}

/// Deterministic held-out split: `val_size` records, chosen by a seeded
/// shuffle. Returns (train, val) index lists, both sorted.
pub fn split_indices(n: usize, val_size: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let k = val_size.min(n);
    let mut val = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Mean per-sequence loss and token accuracy of a dataset, evaluation mode.
pub fn evaluate_set(model: &Model<f32>, set: &[Example], chunk: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut nll = 0.0;
    let mut correct = 0;
    let mut count = 0;
    for part in set.chunks(chunk.max(1)) {
        let refs: Vec<&Example> = part.iter().collect();
        let b = batch_collate(&refs, &model.config)?;
        let s = model.evaluate(&b)?;
        nll += s.nll;
        correct += s.correct;
        count += s.count;
    }
    Ok((nll / set.len() as f64, correct as f64 / count.max(1) as f64))
}

/// One optimizer step on `batch`; returns the batch's summed NLL.
fn train_step(
    model: &mut Model<f32>,
    opt: &mut AdamW,
    grads: &mut Grads<f32>,
    batch: &[&Example],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<f64> {
    grads.zero();
    let weight = 1.0 / batch.len() as f32;
    let mut nll = 0.0;
    for (i, part) in batch.chunks(cfg.micro_batch).enumerate() {
        let b = batch_collate(part, &model.config)?;
        let rng = (model.config.dropout > 0.0).then(|| stream_rng(cfg.seed, Stream::Dropout, (opt.step << 16) + i as u64));
        let s = model.accumulate_gradients(&b, weight, grads, rng)?;
        nll += s.nll;
    }
    if let Some(clip) = cfg.grad_clip {
        let norm = grads.global_norm();
        if norm > clip {
            grads.scale((clip / norm) as f32);
        }
    }
    opt.update(&mut model.params, grads, lr);
    Ok(nll)
}

/// Train from scratch. `val` may be empty, in which case early stopping
/// is off and the final weights are returned.
pub fn train(
    train_set: &[Example],
    val: &[Example],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    stft: &StftConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Train("empty training set".into()));
    }
    if let Some(t) = train_set.iter().chain(val).flat_map(|e| &e.tokens).find(|&&t| t as usize >= model_cfg.vocab_size) {
        return Err(Error::Train(format!(
            "vocabulary mismatch: model has {} tokens, data uses id {t}",
            model_cfg.vocab_size
        )));
    }
    let mut model = Model::<f32>::init(model_cfg.clone(), derive_seed(cfg.seed, Stream::Init, 0))?;
    let mut opt = AdamW::new(&model.params, cfg);
    let mut grads = model.params.zero_grads();
    let mut plateau = Plateau::new(cfg.patience, cfg.min_delta);
    let mut best_params = model.params.clone();
    let mut best_step = 0;
    let mut history = Vec::new();
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stop = StopReason::MaxEpochs;
    for epoch in 0..cfg.max_epochs {
        let t0 = Instant::now();
        let lr = cfg.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let lr = lr * cfg.warmup_factor(opt.step);
            loss_sum += train_step(&mut model, &mut opt, &mut grads, &batch, cfg, lr)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, _) = evaluate_set(&model, val, cfg.micro_batch)?;
        let train_acc = match cfg.target_train_accuracy {
            Some(_) => Some(evaluate_set(&model, train_set, cfg.micro_batch)?.1),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            train_token_accuracy: train_acc,
            seconds: t0.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} lr {lr:.2e} acc {train_acc:?}");
        if val.is_empty() {
            best_params.clone_from(&model.params);
            best_step = opt.step;
            plateau.best_epoch = Some(epoch);
        } else if plateau.observe(epoch, val_loss) {
            best_params.clone_from(&model.params);
            best_step = opt.step;
        }
        if let (Some(target), Some(acc)) = (cfg.target_train_accuracy, train_acc) {
            if acc >= target {
                stop = StopReason::TargetAccuracy;
                break;
            }
        }
        if !val.is_empty() && plateau.should_stop(epoch) {
            stop = StopReason::Patience;
            break;
        }
        if cfg.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
            stop = StopReason::TimeBudget;
            break;
        }
    }
    let best = Model::from_params(model_cfg.clone(), best_params)?;
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint::from_model(&best, stft.clone(), best_step),
        history,
        best_epoch: plateau.best_epoch.unwrap_or(0),
        stop,
    })
}
