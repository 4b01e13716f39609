//! Properties of the transformer: gradients, causality, normalization,
//! equivariance, likelihood factorization.

mod common;

use common::tiny_batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sig2text::nn::{Batch, Mat, Model, ModelConfig};

#[test]
fn every_parameter_matches_finite_differences() {
    let checks = common::gradcheck_tiny();
    assert_eq!(checks.len(), ModelConfig::tiny().parameter_shapes().len());
    for c in &checks {
        println!("{:28} n={:4} rel={:.2e} abs={:.2e}", c.name, c.numel, c.max_rel_err, c.max_abs_err);
    }
    for c in &checks {
        assert!(c.max_rel_err < 1e-4, "{}: {:e}", c.name, c.max_rel_err);
    }
}

#[test]
fn unused_positional_rows_get_zero_gradient_and_gradients_scale_linearly() {
    let cfg = ModelConfig::tiny();
    let model = Model::<f64>::init(cfg.clone(), 1).unwrap();
    let batch = tiny_batch(&cfg, 2);
    let mut g1 = model.params.zero_grads();
    model.accumulate_gradients(&batch, 0.5, &mut g1, None).unwrap();
    let mut g2 = model.params.zero_grads();
    model.accumulate_gradients(&batch, 1.0, &mut g2, None).unwrap();
    let pos = model.params.id("dec_pos").unwrap();
    for r in batch.seq_len..cfg.max_len {
        assert!(g1.mats[pos].row(r).iter().all(|&x| x == 0.0));
    }
    for (a, b) in g1.mats.iter().zip(&g2.mats) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{x} {y}");
        }
    }
    // repeated backward passes give identical gradients
    let mut g3 = model.params.zero_grads();
    model.accumulate_gradients(&batch, 1.0, &mut g3, None).unwrap();
    assert_eq!(g2, g3);
}

#[test]
fn decoder_is_causal_and_attention_rows_normalize() {
    common::causality_and_normalization(20).unwrap();
}

#[test]
fn encoder_without_positions_is_permutation_equivariant() {
    let cfg = ModelConfig {
        n_layers_enc: 2,
        image_dims: (16, 16),
        ..ModelConfig::tiny()
    };
    let mut model = Model::<f64>::init(cfg.clone(), 3).unwrap();
    let pos = model.params.id("enc_pos").unwrap();
    model.params.get_mut(pos).fill(0.0);
    let l = cfg.n_patches();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let patches = Mat::from_fn(l, cfg.patch_len(), |_, _| rng.random_range(0.0..1.0));
    let mut perm: Vec<usize> = (0..l).collect();
    for i in (1..l).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let permuted = Mat::from_fn(l, cfg.patch_len(), |r, c| patches.at(perm[r], c));
    let a = model.encode_mat(patches).unwrap().mat;
    let b = model.encode_mat(permuted).unwrap().mat;
    for r in 0..l {
        for (x, y) in b.row(r).iter().zip(a.row(perm[r])) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_equals_chain_rule_product() {
    let cfg = ModelConfig::tiny();
    let model = Model::<f64>::init(cfg.clone(), 8).unwrap();
    let batch = tiny_batch(&cfg, 9);
    let stats = model.evaluate(&batch).unwrap();
    // brute force: P(w | image) as a product of next-token probabilities
    let mut log_p = 0.0;
    for b in 0..batch.batch {
        let mem = model
            .encode_mat(batch.patches.rows_range(b * cfg.n_patches(), (b + 1) * cfg.n_patches()))
            .unwrap();
        let inputs = &batch.inputs[b * batch.seq_len..(b + 1) * batch.seq_len];
        let targets = &batch.targets[b * batch.seq_len..(b + 1) * batch.seq_len];
        let mut prob = 1.0;
        for t in 0..batch.seq_len {
            if let Some(tgt) = targets[t] {
                let logits = model.decode_step(&mem, &inputs[..=t]).unwrap();
                let z: f64 = logits.iter().map(|x| x.exp()).sum();
                prob *= logits[tgt as usize].exp() / z;
            }
        }
        log_p += prob.ln();
    }
    let tokens = stats.count as f64;
    let loss_per_token = stats.nll / tokens;
    assert!(((-loss_per_token * tokens).exp() - log_p.exp()).abs() < 1e-10);
    assert!((stats.nll + log_p).abs() < 1e-10);
}

#[test]
fn uniform_and_perfect_logits() {
    let cfg = ModelConfig::tiny();
    let mut model = Model::<f64>::init(cfg.clone(), 0).unwrap();
    let out_w = model.params.id("out_proj.weight").unwrap();
    let out_b = model.params.id("out_proj.bias").unwrap();
    model.params.get_mut(out_w).fill(0.0);
    let batch = tiny_batch(&cfg, 1);
    let s = model.evaluate(&batch).unwrap();
    assert!((s.nll / s.count as f64 - (cfg.vocab_size as f64).ln()).abs() < 1e-12);
    // a bias that always favours the single target token drives the loss to 0
    let single = Batch {
        batch: 1,
        seq_len: 1,
        patches: batch.patches.rows_range(0, cfg.n_patches()),
        inputs: vec![1],
        targets: vec![Some(5)],
    };
    model.params.get_mut(out_b).data[5] = 60.0;
    assert!(model.evaluate(&single).unwrap().nll < 1e-20);
}

#[test]
fn forward_is_deterministic() {
    let cfg = ModelConfig::tiny();
    let a = Model::<f32>::init(cfg.clone(), 11).unwrap();
    let b = Model::<f32>::init(cfg.clone(), 11).unwrap();
    let batch = tiny_batch(&cfg, 3);
    let batch32 = Batch {
        batch: batch.batch,
        seq_len: batch.seq_len,
        patches: batch.patches.cast(),
        inputs: batch.inputs.clone(),
        targets: batch.targets.clone(),
    };
    let (sa, sb) = (a.evaluate(&batch32).unwrap(), b.evaluate(&batch32).unwrap());
    assert_eq!(sa.nll.to_bits(), sb.nll.to_bits());
}
