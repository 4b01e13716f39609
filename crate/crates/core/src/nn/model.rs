//! Encoder-decoder transformer over image patches and token sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{AttnSpec, CeStats, Grads, Graph, NodeId, ParamId, ParamStore};
use super::tensor::{Float, Mat};
use super::NnError;
use crate::tfr::PatchSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    /// Longest decoder input, `<sos>` included.
    pub max_len: usize,
    pub patch_dims: (usize, usize),
    pub image_dims: (usize, usize),
    #[serde(default)]
    pub dropout: f64,
}

impl Default for ModelConfig {
    /// The small configuration: 3+3 layers, width 128, 8 heads.
    fn default() -> Self {
        Self {
            n_layers_enc: 3,
            n_layers_dec: 3,
            d_model: 128,
            d_ff: 512,
            n_heads: 8,
            vocab_size: crate::symlang::Vocabulary::new().len(),
            max_len: 50,
            patch_dims: (16, 16),
            image_dims: (128, 128),
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn small() -> Self {
        Self::default()
    }

    /// 6+6 layers, width 512. Constructible, not exercised by the tests.
    pub fn large() -> Self {
        Self {
            n_layers_enc: 6,
            n_layers_dec: 6,
            d_model: 512,
            d_ff: 2048,
            n_heads: 8,
            ..Self::default()
        }
    }

    /// Gradient-check size: one layer each side, width 16, 2 heads,
    /// 12 tokens, an 8×8 image cut into four 4×4 patches.
    pub fn tiny() -> Self {
        Self {
            n_layers_enc: 1,
            n_layers_dec: 1,
            d_model: 16,
            d_ff: 32,
            n_heads: 2,
            vocab_size: 12,
            max_len: 8,
            patch_dims: (4, 4),
            image_dims: (8, 8),
            dropout: 0.0,
        }
    }

    pub fn n_patches(&self) -> usize {
        (self.image_dims.0 / self.patch_dims.0) * (self.image_dims.1 / self.patch_dims.1)
    }

    pub fn patch_len(&self) -> usize {
        self.patch_dims.0 * self.patch_dims.1
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.d_ff == 0 || self.vocab_size < 3 || self.max_len == 0 {
            return bad("d_ff, max_len must be positive and the vocabulary hold the specials");
        }
        let (pr, pc) = self.patch_dims;
        let (ir, ic) = self.image_dims;
        if pr == 0 || pc == 0 || ir % pr != 0 || ic % pc != 0 {
            return bad("patch size must tile the image");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Every parameter name with its shape, in a fixed order.
    pub fn parameter_shapes(&self) -> Vec<(String, (usize, usize))> {
        let d = self.d_model;
        let mut out = vec![
            ("patch_embed.weight".to_string(), (self.patch_len(), d)),
            ("patch_embed.bias".to_string(), (1, d)),
            ("enc_pos".to_string(), (self.n_patches(), d)),
        ];
        let attn = |out: &mut Vec<(String, (usize, usize))>, p: &str| {
            for m in ["wq", "wk", "wv", "wo"] {
                out.push((format!("{p}.{m}.weight"), (d, d)));
                out.push((format!("{p}.{m}.bias"), (1, d)));
            }
        };
        let ln = |out: &mut Vec<(String, (usize, usize))>, p: &str| {
            out.push((format!("{p}.gamma"), (1, d)));
            out.push((format!("{p}.beta"), (1, d)));
        };
        let ff = |out: &mut Vec<(String, (usize, usize))>, p: &str| {
            out.push((format!("{p}.ff1.weight"), (d, self.d_ff)));
            out.push((format!("{p}.ff1.bias"), (1, self.d_ff)));
            out.push((format!("{p}.ff2.weight"), (self.d_ff, d)));
            out.push((format!("{p}.ff2.bias"), (1, d)));
        };
        for i in 0..self.n_layers_enc {
            let p = format!("enc.{i}");
            attn(&mut out, &format!("{p}.attn"));
            ln(&mut out, &format!("{p}.ln1"));
            ff(&mut out, &p);
            ln(&mut out, &format!("{p}.ln2"));
        }
        out.push(("tok_embed".to_string(), (self.vocab_size, d)));
        out.push(("dec_pos".to_string(), (self.max_len, d)));
        for i in 0..self.n_layers_dec {
            let p = format!("dec.{i}");
            attn(&mut out, &format!("{p}.self_attn"));
            ln(&mut out, &format!("{p}.ln1"));
            attn(&mut out, &format!("{p}.cross_attn"));
            ln(&mut out, &format!("{p}.ln2"));
            ff(&mut out, &p);
            ln(&mut out, &format!("{p}.ln3"));
        }
        out.push(("out_proj.weight".to_string(), (d, self.vocab_size)));
        out.push(("out_proj.bias".to_string(), (1, self.vocab_size)));
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct LinearIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct AttnIds {
    q: LinearIds,
    k: LinearIds,
    v: LinearIds,
    o: LinearIds,
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct FfIds {
    ff1: LinearIds,
    ff2: LinearIds,
}

#[derive(Debug, Clone)]
struct EncLayer {
    attn: AttnIds,
    ln1: NormIds,
    ff: FfIds,
    ln2: NormIds,
}

#[derive(Debug, Clone)]
struct DecLayer {
    self_attn: AttnIds,
    ln1: NormIds,
    cross_attn: AttnIds,
    ln2: NormIds,
    ff: FfIds,
    ln3: NormIds,
}

#[derive(Debug, Clone)]
struct Ids {
    patch: LinearIds,
    enc_pos: ParamId,
    enc: Vec<EncLayer>,
    tok: ParamId,
    dec_pos: ParamId,
    dec: Vec<DecLayer>,
    out: LinearIds,
}

impl Ids {
    fn resolve<F: Float>(cfg: &ModelConfig, store: &ParamStore<F>) -> Result<Self, NnError> {
        for (name, shape) in cfg.parameter_shapes() {
            match store.by_name(&name) {
                None => return Err(NnError::MissingTensor(name)),
                Some(m) if m.shape() != shape => {
                    return Err(NnError::Shape(format!(
                        "{name}: expected {shape:?}, found {:?}",
                        m.shape()
                    )))
                }
                Some(_) => {}
            }
        }
        let id = |n: String| store.id(&n).expect("checked above");
        let lin = |p: String| LinearIds {
            w: id(format!("{p}.weight")),
            b: id(format!("{p}.bias")),
        };
        let attn = |p: String| AttnIds {
            q: lin(format!("{p}.wq")),
            k: lin(format!("{p}.wk")),
            v: lin(format!("{p}.wv")),
            o: lin(format!("{p}.wo")),
        };
        let norm = |p: String| NormIds {
            gamma: id(format!("{p}.gamma")),
            beta: id(format!("{p}.beta")),
        };
        let ff = |p: &str| FfIds {
            ff1: lin(format!("{p}.ff1")),
            ff2: lin(format!("{p}.ff2")),
        };
        Ok(Ids {
            patch: lin("patch_embed".into()),
            enc_pos: id("enc_pos".into()),
            enc: (0..cfg.n_layers_enc)
                .map(|i| {
                    let p = format!("enc.{i}");
                    EncLayer {
                        attn: attn(format!("{p}.attn")),
                        ln1: norm(format!("{p}.ln1")),
                        ff: ff(&p),
                        ln2: norm(format!("{p}.ln2")),
                    }
                })
                .collect(),
            tok: id("tok_embed".into()),
            dec_pos: id("dec_pos".into()),
            dec: (0..cfg.n_layers_dec)
                .map(|i| {
                    let p = format!("dec.{i}");
                    DecLayer {
                        self_attn: attn(format!("{p}.self_attn")),
                        ln1: norm(format!("{p}.ln1")),
                        cross_attn: attn(format!("{p}.cross_attn")),
                        ln2: norm(format!("{p}.ln2")),
                        ff: ff(&p),
                        ln3: norm(format!("{p}.ln3")),
                    }
                })
                .collect(),
            out: lin("out_proj".into()),
        })
    }
}

/// Teacher-forcing minibatch: `batch` sequences, each padded to `seq_len`
/// decoder positions, stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    pub batch: usize,
    pub seq_len: usize,
    /// `(batch · n_patches) × patch_len`
    pub patches: Mat<F>,
    /// Decoder inputs (`<sos>` w1 … wn, then `<pad>`), `batch · seq_len`.
    pub inputs: Vec<u32>,
    /// Next-token targets (w1 … wn `<eos>`); `None` on padding.
    pub targets: Vec<Option<u32>>,
}

/// Encoder output for one signal, `n_patches × d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory<F> {
    pub mat: Mat<F>,
}

#[derive(Debug, Clone)]
pub struct Model<F: Float> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    ids: Ids,
}

impl<F: Float> Model<F> {
    /// Fresh weights: linear maps and the token table uniform in
    /// ±√(6/(fan_in+fan_out)), positional tables N(0, 0.02²), biases 0,
    /// norm gains 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut store = ParamStore::new();
        for (name, (r, c)) in config.parameter_shapes() {
            let m = if name.ends_with("_pos") {
                Mat::from_fn(r, c, |_, _| F::of(normal.sample(&mut rng)))
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                Mat::zeros(r, c)
            } else if name.ends_with(".gamma") {
                Mat::from_vec(r, c, vec![F::one(); r * c])
            } else {
                let bound = (6.0 / (r + c) as f64).sqrt();
                Mat::from_fn(r, c, |_, _| F::of(rng.random_range(-bound..bound)))
            };
            store.add(name, m);
        }
        Self::from_params(config, store)
    }

    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self, NnError> {
        config.validate()?;
        let ids = Ids::resolve(&config, &params)?;
        Ok(Self { config, params, ids })
    }

    pub fn cast<G: Float>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    fn linear(&self, g: &mut Graph<F>, x: NodeId, l: LinearIds) -> NodeId {
        let w = g.param(l.w);
        let b = g.param(l.b);
        g.linear(x, w, b)
    }

    fn norm(&self, g: &mut Graph<F>, x: NodeId, n: NormIds) -> NodeId {
        let gamma = g.param(n.gamma);
        let beta = g.param(n.beta);
        g.layer_norm(x, gamma, beta)
    }

    fn mha(&self, g: &mut Graph<F>, xq: NodeId, xkv: NodeId, a: AttnIds, spec: AttnSpec) -> (NodeId, NodeId) {
        let q = self.linear(g, xq, a.q);
        let k = self.linear(g, xkv, a.k);
        let v = self.linear(g, xkv, a.v);
        let att = g.attention(q, k, v, spec);
        (self.linear(g, att, a.o), att)
    }

    fn ff(&self, g: &mut Graph<F>, x: NodeId, f: FfIds) -> NodeId {
        let h = self.linear(g, x, f.ff1);
        let h = g.relu(h);
        self.linear(g, h, f.ff2)
    }

    /// Encoder over `batch` stacked patch sequences; returns the memory node
    /// and the attention nodes of every layer.
    pub fn encode_graph(&self, g: &mut Graph<F>, patches: Mat<F>, batch: usize) -> Result<(NodeId, Vec<NodeId>), NnError> {
        let l = self.config.n_patches();
        if patches.rows != batch * l || patches.cols != self.config.patch_len() {
            return Err(NnError::Shape(format!(
                "patches {:?}, expected ({}, {})",
                patches.shape(),
                batch * l,
                self.config.patch_len()
            )));
        }
        let spec = AttnSpec {
            heads: self.config.n_heads,
            blocks: batch,
            causal: false,
        };
        let p = self.config.dropout;
        let x = g.input(patches);
        let x = self.linear(g, x, self.ids.patch);
        let pos = g.param(self.ids.enc_pos);
        let mut x = g.add_positional(x, pos, l);
        let mut atts = Vec::new();
        for layer in &self.ids.enc {
            let (a, att) = self.mha(g, x, x, layer.attn, spec);
            atts.push(att);
            let a = g.dropout(a, p);
            let h = g.add(x, a);
            let h = self.norm(g, h, layer.ln1);
            let f = self.ff(g, h, layer.ff);
            let f = g.dropout(f, p);
            let o = g.add(h, f);
            x = self.norm(g, o, layer.ln2);
        }
        Ok((x, atts))
    }

    /// Decoder logits for every position, `(batch · seq_len) × vocab`.
    pub fn decode_graph(
        &self,
        g: &mut Graph<F>,
        memory: NodeId,
        batch: usize,
        inputs: &[u32],
        seq_len: usize,
    ) -> Result<NodeId, NnError> {
        if seq_len == 0 || seq_len > self.config.max_len {
            return Err(NnError::PrefixTooLong {
                len: seq_len,
                max: self.config.max_len,
            });
        }
        assert_eq!(inputs.len(), batch * seq_len);
        if let Some(&bad) = inputs.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(NnError::Shape(format!("token id {bad} outside vocabulary")));
        }
        let heads = self.config.n_heads;
        let p = self.config.dropout;
        let tok = g.param(self.ids.tok);
        let x = g.embedding(tok, inputs);
        let pos = g.param(self.ids.dec_pos);
        let mut x = g.add_positional(x, pos, seq_len);
        for layer in &self.ids.dec {
            let causal = AttnSpec {
                heads,
                blocks: batch,
                causal: true,
            };
            let (s, _) = self.mha(g, x, x, layer.self_attn, causal);
            let s = g.dropout(s, p);
            let h = g.add(x, s);
            let h1 = self.norm(g, h, layer.ln1);
            let cross = AttnSpec {
                heads,
                blocks: batch,
                causal: false,
            };
            let (c, _) = self.mha(g, h1, memory, layer.cross_attn, cross);
            let c = g.dropout(c, p);
            let h = g.add(h1, c);
            let h2 = self.norm(g, h, layer.ln2);
            let f = self.ff(g, h2, layer.ff);
            let f = g.dropout(f, p);
            let h = g.add(h2, f);
            x = self.norm(g, h, layer.ln3);
        }
        Ok(self.linear(g, x, self.ids.out))
    }

    /// Loss node: mean over sequences of the summed token NLL.
    pub fn loss_graph(&self, g: &mut Graph<F>, b: &Batch<F>, weight: F) -> Result<NodeId, NnError> {
        let (mem, _) = self.encode_graph(g, b.patches.clone(), b.batch)?;
        let logits = self.decode_graph(g, mem, b.batch, &b.inputs, b.seq_len)?;
        Ok(g.cross_entropy(logits, &b.targets, weight))
    }

    /// Teacher-forcing loss without gradients.
    pub fn evaluate(&self, b: &Batch<F>) -> Result<CeStats, NnError> {
        let mut g = Graph::new(&self.params);
        let loss = self.loss_graph(&mut g, b, F::one() / F::of(b.batch as f64))?;
        let stats = g.ce_stats(loss).expect("cross-entropy node");
        if !stats.nll.is_finite() {
            return Err(NnError::NonFinite { tensor: "loss".into() });
        }
        Ok(stats)
    }

    /// Forward and backward on one (micro)batch. The loss is weighted by
    /// `weight` (use `1/total_batch` for the mean over sequences); parameter
    /// gradients are added into `grads`.
    pub fn accumulate_gradients(
        &self,
        b: &Batch<F>,
        weight: F,
        grads: &mut Grads<F>,
        dropout_rng: Option<ChaCha8Rng>,
    ) -> Result<CeStats, NnError> {
        let mut g = match dropout_rng {
            Some(rng) => Graph::training(&self.params, rng),
            None => Graph::new(&self.params),
        };
        let loss = self.loss_graph(&mut g, b, weight)?;
        let stats = g.ce_stats(loss).expect("cross-entropy node");
        if !stats.nll.is_finite() {
            return Err(NnError::NonFinite { tensor: "loss".into() });
        }
        g.backward(loss, F::one(), grads)?;
        Ok(stats)
    }

    pub fn patches_to_mat(&self, patches: &PatchSequence) -> Result<Mat<F>, NnError> {
        let cfg = &self.config;
        if patches.len() != cfg.n_patches() || patches.patch_len() != cfg.patch_len() {
            return Err(NnError::Shape(format!(
                "{} patches of {} values, expected {} of {}",
                patches.len(),
                patches.patch_len(),
                cfg.n_patches(),
                cfg.patch_len()
            )));
        }
        Ok(Mat::from_vec(
            patches.len(),
            patches.patch_len(),
            patches.data.iter().map(|&v| F::of(v as f64)).collect(),
        ))
    }

    pub fn encode(&self, patches: &PatchSequence) -> Result<Memory<F>, NnError> {
        let m = self.patches_to_mat(patches)?;
        self.encode_mat(m)
    }

    pub fn encode_mat(&self, patches: Mat<F>) -> Result<Memory<F>, NnError> {
        let mut g = Graph::new(&self.params);
        let (mem, _) = self.encode_graph(&mut g, patches, 1)?;
        Ok(Memory {
            mat: g.value(mem).clone(),
        })
    }

    /// Logits at every prefix position, `len × vocab`.
    pub fn decode_all(&self, memory: &Memory<F>, prefix: &[u32]) -> Result<Mat<F>, NnError> {
        let mut g = Graph::new(&self.params);
        let mem = g.input(memory.mat.clone());
        let logits = self.decode_graph(&mut g, mem, 1, prefix, prefix.len())?;
        Ok(g.value(logits).clone())
    }

    /// Next-token logits after `prefix` (which starts with `<sos>`).
    pub fn decode_step(&self, memory: &Memory<F>, prefix: &[u32]) -> Result<Vec<F>, NnError> {
        let all = self.decode_all(memory, prefix)?;
        Ok(all.row(all.rows - 1).to_vec())
    }
}
