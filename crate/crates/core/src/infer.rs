//! Beam-search decoding and conversion of decoded strings back to waveform
//! descriptions.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{log_softmax, Float, Memory, Model, NnError};
use crate::pipeline::signal_patches;
use crate::symlang::{Language, SymlangError, Vocabulary};
use crate::tfr::StftConfig;
use crate::waveform::{IQSignal, WaveformSpec};

/// Anything that scores the next token given a prefix.
pub trait StepModel {
    fn vocab_size(&self) -> usize;
    /// Natural-log probabilities of every next token after `prefix`.
    fn next_log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f64>>;
}

/// A trained model bound to one encoded signal.
pub struct ModelStepper<'m, F: Float> {
    pub model: &'m Model<F>,
    pub memory: Memory<F>,
}

impl<F: Float> StepModel for ModelStepper<'_, F> {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn next_log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f64>> {
        let logits = self.model.decode_step(&self.memory, prefix)?;
        let row: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
        Ok(log_softmax(&row))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop once the highest-scoring beam has emitted `<eos>`.
    TopFrozen,
    /// Stop as soon as any beam has emitted `<eos>`.
    AnyFrozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam: usize,
    /// Most tokens generated after `<sos>`.
    pub max_len: usize,
    pub stop: StopRule,
    pub sos: u32,
    pub eos: u32,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 1,
            max_len: 50,
            stop: StopRule::TopFrozen,
            sos: Vocabulary::SOS,
            eos: Vocabulary::EOS,
        }
    }
}

impl BeamConfig {
    pub fn with_beam(beam: usize, max_len: usize) -> Self {
        Self {
            beam,
            max_len,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// `<sos>` followed by the generated tokens.
    pub ids: Vec<u32>,
    /// Log-probability of each generated token.
    pub token_log_probs: Vec<f64>,
    pub log_likelihood: f64,
    /// Ended with `<eos>` rather than running out of length.
    pub terminated: bool,
}

impl Hypothesis {
    fn root(sos: u32) -> Self {
        Self {
            ids: vec![sos],
            token_log_probs: Vec::new(),
            log_likelihood: 0.0,
            terminated: false,
        }
    }
}

struct Candidate {
    score: f64,
    token: u32,
    beam: usize,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.token.cmp(&b.token))
        .then(a.beam.cmp(&b.beam))
}

/// Beam search without length normalization. Ties go to the lower token
/// id, then to the earlier beam. Frozen beams keep their slot and compete
/// with their final `<eos>` as token.
pub fn beam_search(model: &mut impl StepModel, cfg: &BeamConfig) -> Result<Hypothesis> {
    if cfg.beam == 0 || cfg.max_len == 0 {
        return Err(NnError::Config("beam width and max length must be positive".into()).into());
    }
    let mut beams = vec![Hypothesis::root(cfg.sos)];
    for _ in 0..cfg.max_len {
        let stop = match cfg.stop {
            StopRule::TopFrozen => beams[0].terminated,
            StopRule::AnyFrozen => beams.iter().any(|b| b.terminated),
        };
        if stop {
            break;
        }
        let mut cands = Vec::new();
        let mut log_probs = Vec::with_capacity(beams.len());
        for (i, b) in beams.iter().enumerate() {
            if b.terminated {
                cands.push(Candidate {
                    score: b.log_likelihood,
                    token: cfg.eos,
                    beam: i,
                });
                log_probs.push(Vec::new());
                continue;
            }
            let lp = model.next_log_probs(&b.ids)?;
            for (t, &p) in lp.iter().enumerate() {
                cands.push(Candidate {
                    score: b.log_likelihood + p,
                    token: t as u32,
                    beam: i,
                });
            }
            log_probs.push(lp);
        }
        cands.sort_by(rank);
        cands.truncate(cfg.beam);
        beams = cands
            .iter()
            .map(|c| {
                let parent = &beams[c.beam];
                if parent.terminated {
                    return parent.clone();
                }
                let mut h = parent.clone();
                let lp = log_probs[c.beam][c.token as usize];
                h.ids.push(c.token);
                h.token_log_probs.push(lp);
                h.log_likelihood = c.score;
                h.terminated = c.token == cfg.eos;
                h
            })
            .collect();
    }
    Ok(beams.swap_remove(0))
}

/// Step-wise argmax, lowest id on ties.
pub fn greedy_decode(model: &mut impl StepModel, sos: u32, eos: u32, max_len: usize) -> Result<Hypothesis> {
    let mut h = Hypothesis::root(sos);
    while h.token_log_probs.len() < max_len && !h.terminated {
        let lp = model.next_log_probs(&h.ids)?;
        let (best, &p) = lp
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, p)| if *p > *acc.1 { (i, p) } else { acc });
        h.ids.push(best as u32);
        h.token_log_probs.push(p);
        h.log_likelihood += p;
        h.terminated = best as u32 == eos;
    }
    Ok(h)
}

/// Decoded string plus its parse.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub hypothesis: Hypothesis,
    /// Space-separated token surface forms, `<sos>` included.
    pub predicted_string: String,
    pub parsed: std::result::Result<WaveformSpec, SymlangError>,
}

impl Prediction {
    pub fn from_hypothesis(h: Hypothesis, lang: &Language) -> Self {
        let predicted_string = lang
            .vocab
            .detokenize(&h.ids)
            .unwrap_or_else(|_| h.ids.iter().map(|i| format!("#{i}")).collect::<Vec<_>>().join(" "));
        let parsed = lang.parse_ids(&h.ids);
        Self {
            hypothesis: h,
            predicted_string,
            parsed,
        }
    }

    pub fn spec(&self) -> Option<&WaveformSpec> {
        self.parsed.as_ref().ok()
    }
}

/// One line of batch inference output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub predicted_string: String,
    pub log_likelihood: f64,
    pub parsed: Option<WaveformSpec>,
    #[serde(default)]
    pub terminated: bool,
    /// Parser message when the string was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn new(id: u64, p: &Prediction) -> Self {
        Self {
            id,
            predicted_string: p.predicted_string.clone(),
            log_likelihood: p.hypothesis.log_likelihood,
            parsed: p.spec().cloned(),
            terminated: p.hypothesis.terminated,
            error: p.parsed.as_ref().err().map(|e| e.to_string()),
        }
    }
}

/// Model, front end and grammar needed to go from a pulse to a description.
pub struct Predictor<F: Float> {
    pub model: Model<F>,
    pub stft: StftConfig,
    pub lang: Language,
}

impl<F: Float> Predictor<F> {
    pub fn new(model: Model<F>, stft: StftConfig) -> Self {
        Self {
            model,
            stft,
            lang: Language::radar(),
        }
    }

    pub fn stepper(&self, signal: &IQSignal) -> Result<ModelStepper<'_, F>> {
        let patches = signal_patches(signal, &self.stft, self.model.config.patch_dims)?;
        Ok(ModelStepper {
            model: &self.model,
            memory: self.model.encode(&patches)?,
        })
    }

    pub fn beam_search(&self, signal: &IQSignal, cfg: &BeamConfig) -> Result<Hypothesis> {
        beam_search(&mut self.stepper(signal)?, cfg)
    }

    pub fn predict(&self, signal: &IQSignal, cfg: &BeamConfig) -> Result<Prediction> {
        Ok(Prediction::from_hypothesis(self.beam_search(signal, cfg)?, &self.lang))
    }

    /// Decode from precomputed patches (row-major `n_patches × patch_len`).
    pub fn predict_patches(&self, patches: &[f32], cfg: &BeamConfig) -> Result<Prediction> {
        let c = &self.model.config;
        let mat = crate::nn::Mat::from_vec(c.n_patches(), c.patch_len(), patches.iter().map(|&v| F::of(v as f64)).collect());
        let mut s = ModelStepper {
            model: &self.model,
            memory: self.model.encode_mat(mat)?,
        };
        Ok(Prediction::from_hypothesis(beam_search(&mut s, cfg)?, &self.lang))
    }
}

#[cfg(test)]
pub(crate) mod toy {
    use super::*;

    /// First-order Markov model over {a = 0, b = 1, eos = 2}, started from
    /// a separate start state 3.
    pub struct Toy {
        /// `table[state][next]`, probabilities.
        pub table: [[f64; 3]; 4],
    }

    pub const EOS: u32 = 2;
    pub const SOS: u32 = 3;

    impl Toy {
        /// Greedy takes `a` first and is then stuck with mediocre
        /// continuations; the best string is `b <eos>`.
        pub fn trap() -> Self {
            Self {
                table: [
                    [0.4, 0.3, 0.3],
                    [0.05, 0.05, 0.9],
                    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                    [0.6, 0.4 - 1e-3, 1e-3],
                ],
            }
        }

        pub fn config(beam: usize, max_len: usize) -> BeamConfig {
            BeamConfig {
                beam,
                max_len,
                stop: StopRule::TopFrozen,
                sos: SOS,
                eos: EOS,
            }
        }

        pub fn score(&self, seq: &[u32]) -> f64 {
            let mut state = SOS as usize;
            let mut s = 0.0;
            for &t in seq {
                s += self.table[state][t as usize].ln();
                state = t as usize;
            }
            s
        }

        /// Highest-scoring string among those ending in `<eos>` within
        /// `max_len` tokens and those of exactly `max_len` tokens.
        pub fn exhaustive(&self, max_len: usize) -> (Vec<u32>, f64) {
            let mut best = (Vec::new(), f64::NEG_INFINITY);
            let mut stack = vec![Vec::<u32>::new()];
            while let Some(seq) = stack.pop() {
                let done = seq.last() == Some(&EOS);
                if done || seq.len() == max_len {
                    let s = self.score(&seq);
                    if s > best.1 {
                        best = (seq, s);
                    }
                    continue;
                }
                for t in 0..3 {
                    let mut next = seq.clone();
                    next.push(t);
                    stack.push(next);
                }
            }
            best
        }
    }

    impl StepModel for Toy {
        fn vocab_size(&self) -> usize {
            3
        }

        fn next_log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f64>> {
            let state = *prefix.last().unwrap() as usize;
            Ok(self.table[state].iter().map(|p| p.ln()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::toy::*;
    use super::*;
    use crate::nn::ModelConfig;
    use proptest::prelude::*;

    #[test]
    fn toy_beam_finds_the_optimum_greedy_does_not() {
        let (best, score) = Toy::trap().exhaustive(4);
        assert_eq!(best, vec![1, EOS]);
        let g = greedy_decode(&mut Toy::trap(), SOS, EOS, 4).unwrap();
        assert!(g.log_likelihood < score - 0.1);
        for k in [2, 3, 4, 8] {
            let h = beam_search(&mut Toy::trap(), &Toy::config(k, 4)).unwrap();
            assert_eq!(h.ids[1..], best[..], "K = {k}");
            assert!((h.log_likelihood - score).abs() < 1e-12);
            assert!(h.terminated);
        }
        let h1 = beam_search(&mut Toy::trap(), &Toy::config(1, 4)).unwrap();
        assert_eq!(h1, g);
    }

    #[test]
    fn literal_stop_rule_can_end_early() {
        // `a a a ...` leads until its score decays below the immediate
        // `<eos>`; the literal rule stops before that happens.
        let toy = Toy {
            table: [
                [0.9, 0.05, 0.05],
                [0.05, 0.05, 0.9],
                [1.0 / 3.0; 3],
                [0.5, 0.2, 0.3],
            ],
        };
        let mut cfg = Toy::config(3, 6);
        let top = beam_search(&mut Toy { table: toy.table }, &cfg).unwrap();
        cfg.stop = StopRule::AnyFrozen;
        let any = beam_search(&mut Toy { table: toy.table }, &cfg).unwrap();
        // after one step `<eos>` (0.3) is frozen but `a` (0.5) is on top
        assert_eq!(any.ids, vec![SOS, 0]);
        assert!(!any.terminated);
        assert!(top.terminated);
        assert_eq!(top.ids, vec![SOS, EOS]);
        assert!((top.log_likelihood - toy.exhaustive(6).1).abs() < 1e-12);
    }

    #[test]
    fn unterminated_output_is_flagged() {
        let toy = Toy {
            table: [[0.98, 0.01, 0.01], [0.98, 0.01, 0.01], [1.0 / 3.0; 3], [0.98, 0.01, 0.01]],
        };
        let h = beam_search(&mut Toy { table: toy.table }, &Toy::config(2, 5)).unwrap();
        assert_eq!(h.ids.len(), 6);
        assert!(!h.terminated);
        assert!(beam_search(&mut Toy { table: toy.table }, &Toy::config(0, 5)).is_err());
    }

    fn random_toy(seed: [u8; 12]) -> Toy {
        let mut table = [[0.0; 3]; 4];
        for (s, row) in table.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = 0.05 + seed[s * 3 + j] as f64;
            }
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= z);
        }
        Toy { table }
    }

    proptest! {
        #[test]
        fn wide_beam_is_exact_and_scores_never_increase(seed in any::<[u8; 12]>(), k in 1usize..6) {
            let toy = random_toy(seed);
            let (_, best) = toy.exhaustive(4);
            // 3^3 live beams cover every string of length <= 4
            let wide = beam_search(&mut Toy { table: toy.table }, &Toy::config(27, 4)).unwrap();
            prop_assert!((wide.log_likelihood - best).abs() < 1e-12);
            let h = beam_search(&mut Toy { table: toy.table }, &Toy::config(k, 4)).unwrap();
            prop_assert!(h.log_likelihood <= best + 1e-12);
            prop_assert!((h.log_likelihood - toy.score(&h.ids[1..])).abs() < 1e-12);
            let mut running = 0.0;
            for &lp in &h.token_log_probs {
                prop_assert!(lp <= 0.0);
                let next = running + lp;
                prop_assert!(next <= running);
                running = next;
            }
        }
    }

    #[test]
    fn model_beam_scores_match_teacher_forced_recompute() {
        let model = Model::<f64>::init(ModelConfig::tiny(), 4).unwrap();
        let c = &model.config;
        let patches = crate::nn::Mat::from_fn(c.n_patches(), c.patch_len(), |i, j| ((i * 7 + j) % 5) as f64 / 5.0);
        let mut s = ModelStepper {
            model: &model,
            memory: model.encode_mat(patches).unwrap(),
        };
        for k in [1, 3] {
            let h = beam_search(&mut s, &BeamConfig::with_beam(k, 7)).unwrap();
            let all = model.decode_all(&s.memory, &h.ids[..h.ids.len() - 1]).unwrap();
            let mut total = 0.0;
            for (t, &tok) in h.ids[1..].iter().enumerate() {
                total += log_softmax(all.row(t))[tok as usize];
            }
            assert!((total - h.log_likelihood).abs() < 1e-10, "{total} vs {}", h.log_likelihood);
        }
    }

    #[test]
    fn predictions_parse_or_reject() {
        let lang = Language::radar();
        let ok = lang.vocab.tokenize("<sos> FM LFM cf 234 B 50 <eos>").unwrap();
        let p = Prediction::from_hypothesis(
            Hypothesis {
                ids: ok,
                token_log_probs: vec![],
                log_likelihood: -1.0,
                terminated: true,
            },
            &lang,
        );
        assert_eq!(p.spec().unwrap().sub_types().len(), 1);
        let bad = lang.vocab.tokenize("<sos> FM cf 234 <eos>").unwrap();
        let p = Prediction::from_hypothesis(
            Hypothesis {
                ids: bad,
                token_log_probs: vec![],
                log_likelihood: -1.0,
                terminated: true,
            },
            &lang,
        );
        assert!(p.spec().is_none());
        let rec = PredictionRecord::new(7, &p);
        assert!(rec.parsed.is_none() && rec.error.is_some());
        let hybrid = lang
            .vocab
            .tokenize("<sos> FM LFM cf 234 B 50 PM P1 cf 234 code_length 5 <eos>")
            .unwrap();
        let p = Prediction::from_hypothesis(
            Hypothesis {
                ids: hybrid,
                token_log_probs: vec![],
                log_likelihood: -1.0,
                terminated: true,
            },
            &lang,
        );
        assert_eq!(p.spec().unwrap().components.len(), 2);
    }
}
