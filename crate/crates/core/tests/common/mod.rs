//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sig2text::nn::gradcheck::{check_model, TensorCheck};
use sig2text::nn::{log_softmax, Batch, Graph, Mat, Model, ModelConfig};
use sig2text::symlang::cyk::{prefix_grammar, CnfGrammar, PrefixChart};
use sig2text::symlang::{Grammar, Language, SlrParser, Terminal, Token, Vocabulary};
use sig2text::waveform::{sample_class_with, HybridFamily, SamplerConfig, SignalClass, SubType};

pub type Check<T> = Result<T, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub struct Stats {
    pub strings: u64,
    pub accepted: u64,
    pub pruned: u64,
}

/// Depth-first walk over every token string up to `max_len`. Each
/// string is classified by the parser and by CYK. A string that is not a
/// prefix of any sentence is not extended; for those the parser must fail
/// inside the string, which fixes its verdict on every extension too.
fn walk(
    alphabet: &[(Token, Terminal)],
    parser: &SlrParser,
    cnf: &CnfGrammar,
    prefix_start: usize,
    chart: &mut PrefixChart,
    input: &mut Vec<Terminal>,
    tokens: &mut Vec<Token>,
    max_len: usize,
    stats: &mut Stats,
) -> Check<()> {
    for &(tok, t) in alphabet {
        input.push(t);
        tokens.push(tok);
        chart.push(t);
        stats.strings += 1;
        let member = chart.derives(cnf.start);
        let parsed = parser.parse(input);
        ensure!(parsed.is_ok() == member, "parser and CYK disagree on {tokens:?}");
        stats.accepted += member as u64;
        if chart.derives(prefix_start) {
            if input.len() < max_len {
                walk(alphabet, parser, cnf, prefix_start, chart, input, tokens, max_len, stats)?;
            }
        } else {
            let Err(err) = parsed else {
                return Err(format!("dead prefix accepted: {tokens:?}"));
            };
            ensure!(err.position < input.len(), "parser read past dead prefix {tokens:?}");
            stats.pruned += 1;
        }
        chart.pop();
        input.pop();
        tokens.pop();
    }
    Ok(())
}

/// Every string over the keywords plus `NUM_0`, `NUM_1`, `NUM_1023` up
/// to `max_len` tokens, parser verdict against CYK.
pub fn parser_exhaustive(max_len: usize) -> Check<Stats> {
    let g = Grammar::radar();
    let parser = SlrParser::new(&g).map_err(|e| e.to_string())?;
    let (pg, prefix_start) = prefix_grammar(&g);
    let cnf = CnfGrammar::from_grammar(&pg);
    let plain = CnfGrammar::from_grammar(&g);
    let mut chart = PrefixChart::new(&cnf);
    let mut stats = Stats {
        strings: 0,
        accepted: 0,
        pruned: 0,
    };
    let vocab = Vocabulary::new();
    let mut alphabet: Vec<Token> = (3..28).map(|id| vocab.token(id).unwrap()).collect();
    alphabet.extend([Token::Num(0), Token::Num(1), Token::Num(1023)]);
    let alphabet: Vec<(Token, Terminal)> = alphabet
        .into_iter()
        .map(|t| (t, Terminal::of(t).unwrap()))
        .collect();
    walk(
        &alphabet,
        &parser,
        &cnf,
        prefix_start,
        &mut chart,
        &mut Vec::new(),
        &mut Vec::new(),
        max_len,
        &mut stats,
    )?;
    ensure!(!parser.accepts(&[]) && !plain.accepts(&[]), "empty string accepted");
    Ok(stats)
}

fn mutate(rng: &mut ChaCha8Rng, toks: &mut Vec<Token>, pool: &[Token]) {
    match rng.random_range(0..4) {
        0 if !toks.is_empty() => {
            let i = rng.random_range(0..toks.len());
            toks[i] = pool[rng.random_range(0..pool.len())];
        }
        1 if !toks.is_empty() => {
            toks.remove(rng.random_range(0..toks.len()));
        }
        2 => {
            let i = rng.random_range(0..=toks.len());
            toks.insert(i, pool[rng.random_range(0..pool.len())]);
        }
        _ if toks.len() > 1 => {
            let i = rng.random_range(0..toks.len() - 1);
            toks.swap(i, i + 1);
        }
        _ => {}
    }
}

/// Random bags, shuffled descriptions and point-edited descriptions.
/// Returns how many strings were accepted.
pub fn parser_random(trials: usize, seed: u64) -> Check<usize> {
    let lang = Language::radar();
    let mut pool: Vec<Token> = (3..28).map(|id| lang.vocab.token(id).unwrap()).collect();
    pool.extend([Token::Num(0), Token::Num(17), Token::Num(1023)]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SamplerConfig::default();
    let mut classes: Vec<SignalClass> = SubType::ALL.iter().map(|&s| SignalClass::Basic(s)).collect();
    classes.extend(HybridFamily::ALL.iter().map(|&h| SignalClass::Hybrid(h)));
    let mut accepted = 0;
    for trial in 0..trials {
        let toks: Vec<Token> = match trial % 3 {
            0 => {
                let len = rng.random_range(13..=40);
                let mut t: Vec<Token> = (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect();
                t.shuffle(&mut rng);
                t
            }
            1 => {
                let spec = sample_class_with(&mut rng, &cfg, classes[trial % classes.len()]);
                let ids = lang.serialize(&spec).unwrap().ids;
                let mut t = lang.vocab.tokens(&ids[1..ids.len() - 1]).unwrap();
                if rng.random_bool(0.8) {
                    t.shuffle(&mut rng);
                }
                t
            }
            _ => {
                let spec = sample_class_with(&mut rng, &cfg, classes[trial % classes.len()]);
                let ids = lang.serialize(&spec).unwrap().ids;
                let mut t = lang.vocab.tokens(&ids[1..ids.len() - 1]).unwrap();
                for _ in 0..rng.random_range(0..3) {
                    mutate(&mut rng, &mut t, &pool);
                }
                t
            }
        };
        let member = lang.membership(&toks);
        let parsed = lang.parse_tokens(&toks);
        ensure!(parsed.is_ok() == member, "parser and CYK disagree on {toks:?}");
        accepted += member as usize;
    }
    Ok(accepted)
}

pub fn tiny_batch(cfg: &ModelConfig, seed: u64) -> Batch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patches = Mat::from_fn(2 * cfg.n_patches(), cfg.patch_len(), |_, _| rng.random_range(0.0..1.0));
    let v = cfg.vocab_size as u32;
    let mut tok = || rng.random_range(3..v);
    let (a, b, c, d) = (tok(), tok(), tok(), tok());
    Batch {
        batch: 2,
        seq_len: 4,
        patches,
        inputs: vec![1, a, b, c, 1, d, 0, 0],
        targets: vec![Some(a), Some(b), Some(c), Some(2), Some(d), Some(2), None, None],
    }
}

/// Central differences against backprop for every tensor of the tiny
/// model. Gradients below 1e-5 are compared on an absolute 1e-5 scale;
/// the difference quotients carry roundoff near 1e-10.
pub fn gradcheck_tiny() -> Vec<TensorCheck> {
    let cfg = ModelConfig::tiny();
    let model = Model::<f64>::init(cfg.clone(), 42).unwrap();
    check_model(&model, &tiny_batch(&cfg, 7), 1e-5, 1e-5).unwrap()
}

/// Changing token `t` never alters decoder outputs before `t`, and every
/// attention row (encoder, decoder self, cross) sums to one.
pub fn causality_and_normalization(seeds: u64) -> Check<()> {
    let cfg = ModelConfig {
        n_layers_enc: 2,
        n_layers_dec: 2,
        ..ModelConfig::tiny()
    };
    let v = cfg.vocab_size as u32;
    for seed in 0..seeds {
        let model = Model::<f64>::init(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let patches = Mat::from_fn(cfg.n_patches(), cfg.patch_len(), |_, _| rng.random_range(0.0..1.0));
        let mem = model.encode_mat(patches.clone()).unwrap();
        let prefix: Vec<u32> = std::iter::once(1)
            .chain((1..cfg.max_len).map(|_| rng.random_range(0..v)))
            .collect();
        let base = model.decode_all(&mem, &prefix).unwrap();
        for t in 1..prefix.len() {
            let mut changed = prefix.clone();
            changed[t] = (changed[t] + 1 + rng.random_range(0..v - 1)) % v;
            let other = model.decode_all(&mem, &changed).unwrap();
            for r in 0..t {
                ensure!(base.row(r) == other.row(r), "seed {seed}: position {r} saw token {t}");
            }
            ensure!(base.row(t) != other.row(t), "seed {seed}: position {t} ignores its own token");
        }
        let step = model.decode_step(&mem, &prefix[..3]).unwrap();
        let p: f64 = log_softmax(&step).iter().map(|x| x.exp()).sum();
        ensure!((p - 1.0).abs() < 1e-6, "seed {seed}: next-token mass {p}");

        let batch = Batch {
            batch: 1,
            seq_len: prefix.len(),
            patches,
            inputs: prefix.clone(),
            targets: prefix[1..].iter().map(|&t| Some(t)).chain([Some(2)]).collect(),
        };
        let mut g = Graph::new(&model.params);
        model.loss_graph(&mut g, &batch, 1.0).unwrap();
        let mut n_att = 0;
        for id in 0..g.node_count() {
            let Some((probs, spec)) = g.attention_probs(id) else { continue };
            n_att += 1;
            let q_rows = g.value(id).rows / spec.blocks;
            let k = probs.len() / (spec.heads * spec.blocks * q_rows);
            for (i, row) in probs.chunks(k).enumerate() {
                let q = i % q_rows;
                let s: f64 = row.iter().sum();
                ensure!((s - 1.0).abs() < 1e-6, "seed {seed}: attention row sums to {s}");
                if spec.causal {
                    ensure!(row[q + 1..].iter().all(|&w| w == 0.0), "seed {seed}: row {q} attends ahead");
                }
            }
        }
        ensure!(n_att == 2 + 2 * 2, "expected 6 attention nodes, found {n_att}");
    }
    Ok(())
}
