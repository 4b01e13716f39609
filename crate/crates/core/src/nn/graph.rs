//! Tape-based reverse-mode differentiation over fused matrix operations.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm, softmax_in_place, Float, Mat, View};
use super::NnError;

pub type ParamId = usize;
pub type NodeId = usize;

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    values: Vec<Mat<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Float> Default for ParamStore<F> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat<F>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: ParamId) -> &Mat<F> {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat<F> {
        &mut self.values[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Mat<F>> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat<F>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn zero_grads(&self) -> Grads<F> {
        Grads {
            mats: self.values.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect(),
        }
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Mat::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Gradient buffers parallel to a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub mats: Vec<Mat<F>>,
}

impl<F: Float> Grads<F> {
    pub fn zero(&mut self) {
        self.mats.iter_mut().for_each(|m| m.fill(F::zero()));
    }

    pub fn global_norm(&self) -> f64 {
        self.mats.iter().map(Mat::sum_sq).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: F) {
        self.mats.iter_mut().for_each(|m| m.scale(s));
    }

    pub fn check_finite(&self, store: &ParamStore<F>) -> Result<(), NnError> {
        for (i, m) in self.mats.iter().enumerate() {
            if !m.is_finite() {
                return Err(NnError::NonFinite {
                    tensor: format!("grad of {}", store.name(i)),
                });
            }
        }
        Ok(())
    }
}

/// Multi-head attention layout: `blocks` independent sequences stacked
/// row-wise in the query and key/value matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnSpec {
    pub heads: usize,
    pub blocks: usize,
    pub causal: bool,
}

enum Op<F> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Add(NodeId, NodeId),
    Relu(NodeId),
    Scale(NodeId, F),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Mat<F>,
        rstd: Vec<F>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: AttnSpec,
        /// `[block][head][tq][tk]`
        probs: Vec<F>,
    },
    Embedding {
        table: NodeId,
        ids: Vec<u32>,
    },
    AddPositional {
        x: NodeId,
        table: NodeId,
        period: usize,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<Option<u32>>,
        weight: F,
        probs: Mat<F>,
    },
    Dropout {
        x: NodeId,
        mask: Vec<F>,
    },
}

struct Node<F> {
    /// `None` for parameter nodes, which read the store.
    value: Option<Mat<F>>,
    op: Op<F>,
    needs_grad: bool,
}

/// Statistics of a cross-entropy node over its target rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeStats {
    pub nll: f64,
    pub correct: usize,
    pub count: usize,
}

/// One forward pass. Parameters are borrowed, not copied.
pub struct Graph<'p, F: Float> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: HashMap<ParamId, NodeId>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'p, F: Float> Graph<'p, F> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            dropout_rng: None,
        }
    }

    /// Training-mode graph drawing dropout masks from `rng`.
    pub fn training(params: &'p ParamStore<F>, rng: ChaCha8Rng) -> Self {
        Self {
            dropout_rng: Some(rng),
            ..Self::new(params)
        }
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Mat<F> {
        match (&self.nodes[id].value, &self.nodes[id].op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.get(*p),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Mat<F>, op: Op<F>, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, value: Mat<F>) -> NodeId {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Input,
            needs_grad: false,
        });
        self.nodes.len() - 1
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let n = self.nodes.len() - 1;
        self.param_nodes.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `x·W + b` with `W: in × out`, `b: 1 × out`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(xv.cols, wv.rows, "linear input width");
        assert_eq!(bv.shape(), (1, wv.cols), "linear bias shape");
        let mut out = Mat::zeros(xv.rows, wv.cols);
        for r in 0..out.rows {
            out.row_mut(r).copy_from_slice(&bv.data);
        }
        gemm(F::one(), xv.view(), wv.view(), F::one(), &mut out.data, 0, wv.cols);
        self.push(out, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = v.max(F::zero()));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn scale(&mut self, x: NodeId, s: F) -> NodeId {
        let mut out = self.value(x).clone();
        out.scale(s);
        self.push(out, Op::Scale(x, s), &[x])
    }

    /// Row-wise layer normalization with ε = 1e-5.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (xv, g, b) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols;
        assert_eq!(g.shape(), (1, d));
        let eps = F::of(1e-5);
        let inv_d = F::one() / F::of(d as f64);
        let mut xhat = Mat::zeros(xv.rows, d);
        let mut out = Mat::zeros(xv.rows, d);
        let mut rstd = Vec::with_capacity(xv.rows);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let rs = F::one() / (var + eps).sqrt();
            rstd.push(rs);
            let xh = xhat.row_mut(r);
            for c in 0..d {
                xh[c] = (row[c] - mean) * rs;
            }
            let o = &mut out.data[r * d..(r + 1) * d];
            for c in 0..d {
                o[c] = xh[c] * g.data[c] + b.data[c];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    /// Scaled dot-product attention with `spec.heads` heads; returns the
    /// concatenated head outputs (before the output projection).
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, spec: AttnSpec) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols;
        assert!(spec.heads > 0 && d % spec.heads == 0, "d_model not divisible by heads");
        assert_eq!(kv.cols, d);
        assert_eq!(vv.shape(), kv.shape());
        assert!(qv.rows % spec.blocks == 0 && kv.rows % spec.blocks == 0);
        let tq = qv.rows / spec.blocks;
        let tk = kv.rows / spec.blocks;
        assert!(!spec.causal || tq == tk, "causal attention needs equal lengths");
        let dh = d / spec.heads;
        let scale = F::one() / F::of(dh as f64).sqrt();
        let mut probs = vec![F::zero(); spec.blocks * spec.heads * tq * tk];
        let mut out = Mat::zeros(qv.rows, d);
        for b in 0..spec.blocks {
            for h in 0..spec.heads {
                let qo = b * tq * d + h * dh;
                let ko = b * tk * d + h * dh;
                let p_off = (b * spec.heads + h) * tq * tk;
                let p = &mut probs[p_off..p_off + tq * tk];
                gemm(
                    scale,
                    View::block(&qv.data, qo, tq, dh, d),
                    View::block(&kv.data, ko, tk, dh, d).t(),
                    F::zero(),
                    p,
                    0,
                    tk,
                );
                for i in 0..tq {
                    let row = &mut p[i * tk..(i + 1) * tk];
                    if spec.causal {
                        row[i + 1..].iter_mut().for_each(|x| *x = F::neg_infinity());
                    }
                    softmax_in_place(row);
                }
                gemm(
                    F::one(),
                    View::block(p, 0, tq, tk, tk),
                    View::block(&vv.data, ko, tk, dh, d),
                    F::zero(),
                    &mut out.data,
                    qo,
                    d,
                );
            }
        }
        self.push(out, Op::Attention { q, k, v, spec, probs }, &[q, k, v])
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Attention weights of an attention node, laid out
    /// `[block][head][query][key]`.
    pub fn attention_probs(&self, id: NodeId) -> Option<(&[F], AttnSpec)> {
        match &self.nodes[id].op {
            Op::Attention { probs, spec, .. } => Some((probs, *spec)),
            _ => None,
        }
    }

    /// Row gather from an embedding table.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32]) -> NodeId {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id as usize));
        }
        self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// `x[r] + table[r mod period]`: the first `period` rows of the table
    /// are added to every stacked sequence of `x`.
    pub fn add_positional(&mut self, x: NodeId, table: NodeId, period: usize) -> NodeId {
        let (xv, t) = (self.value(x), self.value(table));
        assert!(period <= t.rows && xv.rows % period == 0, "positional table too short");
        assert_eq!(xv.cols, t.cols);
        let mut out = xv.clone();
        for r in 0..out.rows {
            let p = t.row(r % period);
            for (o, v) in out.row_mut(r).iter_mut().zip(p) {
                *o += *v;
            }
        }
        self.push(out, Op::AddPositional { x, table, period }, &[x, table])
    }

    /// `weight · Σ −log softmax(logits[r])[targets[r]]` over rows with a
    /// target; a 1×1 node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<u32>], weight: F) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len());
        let mut probs = lv.clone();
        let mut total = F::zero();
        for (r, t) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            softmax_in_place(row);
            if let Some(t) = t {
                // log p via log-sum-exp keeps tiny probabilities accurate
                let lrow = lv.row(r);
                total -= lrow[*t as usize] - super::tensor::log_sum_exp(lrow);
            }
        }
        let out = Mat::from_vec(1, 1, vec![total * weight]);
        self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weight,
                probs,
            },
            &[logits],
        )
    }

    /// Unweighted NLL, argmax hits and target count of a cross-entropy node.
    pub fn ce_stats(&self, id: NodeId) -> Option<CeStats> {
        let Op::CrossEntropy {
            logits,
            targets,
            weight,
            probs,
        } = &self.nodes[id].op
        else {
            return None;
        };
        let lv = self.value(*logits);
        let mut correct = 0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                count += 1;
                let row = probs.row(r);
                let lrow = lv.row(r);
                // lowest index wins ties, as in greedy decoding
                let mut best = 0;
                for c in 1..row.len() {
                    if lrow[c] > lrow[best] {
                        best = c;
                    }
                }
                correct += (best == *t as usize) as usize;
            }
        }
        let w = weight.as_f64();
        let nll = if w == 0.0 { 0.0 } else { self.value(id).data[0].as_f64() / w };
        Some(CeStats { nll, correct, count })
    }

    /// Inverted dropout with drop probability `p`; identity in eval mode.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> NodeId {
        if p <= 0.0 || self.dropout_rng.is_none() {
            return x;
        }
        let keep = F::of(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let rng = self.dropout_rng.as_mut().expect("training graph");
        let mask: Vec<F> = (0..n)
            .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
            .collect();
        let mut out = self.value(x).clone();
        for (o, m) in out.data.iter_mut().zip(&mask) {
            *o *= *m;
        }
        self.push(out, Op::Dropout { x, mask }, &[x])
    }

    /// Back-propagate from the 1×1 node `loss`, seeding its gradient with
    /// `seed`, and add parameter gradients into `grads`.
    pub fn backward(&self, loss: NodeId, seed: F, grads: &mut Grads<F>) -> Result<(), NnError> {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar node");
        assert_eq!(grads.mats.len(), self.params.len());
        let mut g: Vec<Option<Mat<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss] = Some(Mat::from_vec(1, 1, vec![seed]));
        for id in (0..=loss).rev() {
            let Some(dy) = g[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param(p) = node.op {
                grads.mats[p].add_assign(&dy);
                continue;
            }
            let mut acc = Acc {
                g: &mut g,
                grads,
                nodes: &self.nodes,
                graph: self,
            };
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if acc.needs(*a) {
                        let t = acc.slot(*a);
                        gemm(F::one(), dy.view(), bv.view().t(), F::one(), &mut t.data, 0, av.cols);
                    }
                    if acc.needs(*b) {
                        let t = acc.slot(*b);
                        gemm(F::one(), av.view().t(), dy.view(), F::one(), &mut t.data, 0, bv.cols);
                    }
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    if acc.needs(*x) {
                        let t = acc.slot(*x);
                        gemm(F::one(), dy.view(), wv.view().t(), F::one(), &mut t.data, 0, xv.cols);
                    }
                    if acc.needs(*w) {
                        let t = acc.slot(*w);
                        gemm(F::one(), xv.view().t(), dy.view(), F::one(), &mut t.data, 0, wv.cols);
                    }
                    if acc.needs(*b) {
                        let t = acc.slot(*b);
                        for r in 0..dy.rows {
                            for (o, v) in t.data.iter_mut().zip(dy.row(r)) {
                                *o += *v;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    if acc.needs(*a) {
                        acc.slot(*a).add_assign(&dy);
                    }
                    if acc.needs(*b) {
                        acc.slot(*b).add_assign(&dy);
                    }
                }
                Op::Relu(x) => {
                    let out = node.value.as_ref().expect("relu value");
                    let t = acc.slot(*x);
                    for ((o, d), y) in t.data.iter_mut().zip(&dy.data).zip(&out.data) {
                        if *y > F::zero() {
                            *o += *d;
                        }
                    }
                }
                Op::Scale(x, s) => {
                    let t = acc.slot(*x);
                    for (o, d) in t.data.iter_mut().zip(&dy.data) {
                        *o += *d * *s;
                    }
                }
                Op::Dropout { x, mask } => {
                    let t = acc.slot(*x);
                    for ((o, d), m) in t.data.iter_mut().zip(&dy.data).zip(mask) {
                        *o += *d * *m;
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gamma);
                    let d = xhat.cols;
                    if acc.needs(*gamma) {
                        let t = acc.slot(*gamma);
                        for r in 0..dy.rows {
                            for ((o, dv), xh) in t.data.iter_mut().zip(dy.row(r)).zip(xhat.row(r)) {
                                *o += *dv * *xh;
                            }
                        }
                    }
                    if acc.needs(*beta) {
                        let t = acc.slot(*beta);
                        for r in 0..dy.rows {
                            for (o, dv) in t.data.iter_mut().zip(dy.row(r)) {
                                *o += *dv;
                            }
                        }
                    }
                    if acc.needs(*x) {
                        let inv_d = F::one() / F::of(d as f64);
                        let t = acc.slot(*x);
                        let mut dxh = vec![F::zero(); d];
                        for r in 0..dy.rows {
                            let (dyr, xh) = (dy.row(r), xhat.row(r));
                            let mut m1 = F::zero();
                            let mut m2 = F::zero();
                            for c in 0..d {
                                dxh[c] = dyr[c] * gv.data[c];
                                m1 += dxh[c];
                                m2 += dxh[c] * xh[c];
                            }
                            m1 *= inv_d;
                            m2 *= inv_d;
                            let o = &mut t.data[r * d..(r + 1) * d];
                            for c in 0..d {
                                o[c] += rstd[r] * (dxh[c] - m1 - xh[c] * m2);
                            }
                        }
                    }
                }
                Op::Attention { q, k, v, spec, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.cols;
                    let tq = qv.rows / spec.blocks;
                    let tk = kv.rows / spec.blocks;
                    let dh = d / spec.heads;
                    let scale = F::one() / F::of(dh as f64).sqrt();
                    let mut dq = Mat::zeros(qv.rows, d);
                    let mut dk = Mat::zeros(kv.rows, d);
                    let mut dv = Mat::zeros(vv.rows, d);
                    let mut ds = vec![F::zero(); tq * tk];
                    for b in 0..spec.blocks {
                        for h in 0..spec.heads {
                            let qo = b * tq * d + h * dh;
                            let ko = b * tk * d + h * dh;
                            let p_off = (b * spec.heads + h) * tq * tk;
                            let p = &probs[p_off..p_off + tq * tk];
                            let p_view = View::block(p, 0, tq, tk, tk);
                            let do_view = View::block(&dy.data, qo, tq, dh, d);
                            // dV += Pᵀ dO
                            gemm(F::one(), p_view.t(), do_view, F::one(), &mut dv.data, ko, d);
                            // dP = dO Vᵀ
                            gemm(
                                F::one(),
                                do_view,
                                View::block(&vv.data, ko, tk, dh, d).t(),
                                F::zero(),
                                &mut ds,
                                0,
                                tk,
                            );
                            for i in 0..tq {
                                let pr = &p[i * tk..(i + 1) * tk];
                                let dr = &mut ds[i * tk..(i + 1) * tk];
                                let dot: F = pr.iter().zip(dr.iter()).map(|(a, b)| *a * *b).sum();
                                for (x, pv) in dr.iter_mut().zip(pr) {
                                    *x = *pv * (*x - dot);
                                }
                            }
                            let ds_view = View::block(&ds, 0, tq, tk, tk);
                            gemm(scale, ds_view, View::block(&kv.data, ko, tk, dh, d), F::one(), &mut dq.data, qo, d);
                            gemm(scale, ds_view.t(), View::block(&qv.data, qo, tq, dh, d), F::one(), &mut dk.data, ko, d);
                        }
                    }
                    if acc.needs(*q) {
                        acc.slot(*q).add_assign(&dq);
                    }
                    if acc.needs(*k) {
                        acc.slot(*k).add_assign(&dk);
                    }
                    if acc.needs(*v) {
                        acc.slot(*v).add_assign(&dv);
                    }
                }
                Op::Embedding { table, ids } => {
                    let t = acc.slot(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in t.row_mut(id as usize).iter_mut().zip(dy.row(r)) {
                            *o += *v;
                        }
                    }
                }
                Op::AddPositional { x, table, period } => {
                    if acc.needs(*x) {
                        acc.slot(*x).add_assign(&dy);
                    }
                    if acc.needs(*table) {
                        let t = acc.slot(*table);
                        for r in 0..dy.rows {
                            for (o, v) in t.row_mut(r % period).iter_mut().zip(dy.row(r)) {
                                *o += *v;
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weight,
                    probs,
                } => {
                    let s = dy.data[0] * *weight;
                    let t = acc.slot(*logits);
                    for (r, tgt) in targets.iter().enumerate() {
                        let Some(tgt) = tgt else { continue };
                        let o = t.row_mut(r);
                        for (ov, pv) in o.iter_mut().zip(probs.row(r)) {
                            *ov += s * *pv;
                        }
                        o[*tgt as usize] -= s;
                    }
                }
            }
        }
        grads.check_finite(self.params)
    }
}

/// Gradient accumulation targets during the backward sweep. Parameter
/// nodes route straight into the parameter buffers.
struct Acc<'a, 'g, 'p, F: Float> {
    g: &'a mut Vec<Option<Mat<F>>>,
    grads: &'a mut Grads<F>,
    nodes: &'a [Node<F>],
    graph: &'g Graph<'p, F>,
}

impl<F: Float> Acc<'_, '_, '_, F> {
    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    fn slot(&mut self, id: NodeId) -> &mut Mat<F> {
        if let Op::Param(p) = self.nodes[id].op {
            return &mut self.grads.mats[p];
        }
        let v = self.graph.value(id);
        self.g[id].get_or_insert_with(|| Mat::zeros(v.rows, v.cols))
    }
}
