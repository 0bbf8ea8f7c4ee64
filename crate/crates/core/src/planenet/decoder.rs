use rand::Rng;

use super::NetConfig;
use crate::autodiff::{matmul, Graph, ParamId, ParamStore, Tensor, Var};
use crate::grid;
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub(crate) fn new<S: Scalar>(p: &mut ParamStore<S>, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: p.add_xavier(format!("{name}.w"), fan_in, fan_out, fan_in, fan_out, rng),
            b: p.add_filled(format!("{name}.b"), 1, fan_out, 0.0),
        }
    }

    pub(crate) fn apply<S: Scalar>(&self, g: &mut Graph<S>, p: &ParamStore<S>, x: Var) -> Var {
        let w = g.param(p, self.w);
        let b = g.param(p, self.b);
        g.linear(x, w, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub(crate) fn new<S: Scalar>(p: &mut ParamStore<S>, name: &str, width: usize) -> Self {
        Self {
            gain: p.add_filled(format!("{name}.gain"), 1, width, 1.0),
            bias: p.add_filled(format!("{name}.bias"), 1, width, 0.0),
        }
    }

    pub(crate) fn apply<S: Scalar>(&self, g: &mut Graph<S>, p: &ParamStore<S>, x: Var) -> Var {
        let gain = g.param(p, self.gain);
        let bias = g.param(p, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Scaled dot-product attention split into `heads` column groups. Returns the
/// concatenated output and the per-head weight matrices `[rows_q, rows_k]`.
pub fn attention<S: Scalar>(
    g: &mut Graph<S>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: Option<&[bool]>,
) -> (Var, Vec<Var>) {
    let d = g.value(q).cols();
    let dv = g.value(v).cols();
    assert!(heads >= 1 && d % heads == 0 && dv % heads == 0, "head count must divide widths");
    let (dh, dvh) = (d / heads, dv / heads);
    let scale = S::lit(1.0 / (dh as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, dh),
                g.slice_cols(k, h * dh, dh),
                g.slice_cols(v, h * dvh, dvh),
            )
        };
        let logits = g.matmul_ex(qh, false, kh, true, scale);
        let a = g.softmax_rows(logits, mask);
        weights.push(a);
        outs.push(g.matmul(a, vh));
    }
    let out = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    (out, weights)
}

/// Feature modulation by the previous layer's queries: flattened features
/// attend over the plane queries and the result is added back to them.
#[derive(Debug, Clone)]
pub(crate) struct AfModulator {
    pub norm: Norm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
}

impl AfModulator {
    pub(crate) fn new<S: Scalar>(cfg: &NetConfig, p: &mut ParamStore<S>, name: &str, rng: &mut impl Rng) -> Self {
        let (c, dq) = (cfg.channels, cfg.query_dim);
        Self {
            norm: Norm::new(p, &format!("{name}.norm"), dq),
            q: Linear::new(p, &format!("{name}.q"), c, c, rng),
            k: Linear::new(p, &format!("{name}.k"), dq, c, rng),
            v: Linear::new(p, &format!("{name}.v"), dq, c, rng),
        }
    }

    /// Returns the modulated grid and the `[pixels, L]` attention weights.
    pub(crate) fn apply<S: Scalar>(&self, g: &mut Graph<S>, p: &ParamStore<S>, features: Var, queries: Var) -> (Var, Var) {
        let pn = self.norm.apply(g, p, queries);
        let q = self.q.apply(g, p, features);
        let k = self.k.apply(g, p, pn);
        let v = self.v.apply(g, p, pn);
        let (att, w) = attention(g, q, k, v, 1, None);
        (g.add(att, features), w[0])
    }
}

/// Masked cross-attention, query self-attention and a feed-forward block, each
/// pre-normalized and residual.
#[derive(Debug, Clone)]
pub(crate) struct DecoderLayer {
    pub cross_norm: Norm,
    pub cross_q: Linear,
    pub cross_k: Linear,
    pub cross_v: Linear,
    pub cross_out: Linear,
    pub self_norm: Norm,
    pub self_q: Linear,
    pub self_k: Linear,
    pub self_v: Linear,
    pub self_out: Linear,
    pub ffn_norm: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

/// Intermediate values of one decoder layer, kept for inspection.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub cross_weights: Vec<Var>,
    pub after_cross: Var,
    pub output: Var,
}

impl DecoderLayer {
    pub(crate) fn new<S: Scalar>(cfg: &NetConfig, p: &mut ParamStore<S>, name: &str, rng: &mut impl Rng) -> Self {
        let (c, d) = (cfg.channels, cfg.query_dim);
        let hidden = d * cfg.ffn_mult;
        let n = |s: &str| format!("{name}.{s}");
        Self {
            cross_norm: Norm::new(p, &n("cross.norm"), d),
            cross_q: Linear::new(p, &n("cross.q"), d, d, rng),
            cross_k: Linear::new(p, &n("cross.k"), c, d, rng),
            cross_v: Linear::new(p, &n("cross.v"), c, d, rng),
            cross_out: Linear::new(p, &n("cross.out"), d, d, rng),
            self_norm: Norm::new(p, &n("self.norm"), d),
            self_q: Linear::new(p, &n("self.q"), d, d, rng),
            self_k: Linear::new(p, &n("self.k"), d, d, rng),
            self_v: Linear::new(p, &n("self.v"), d, d, rng),
            self_out: Linear::new(p, &n("self.out"), d, d, rng),
            ffn_norm: Norm::new(p, &n("ffn.norm"), d),
            ffn_in: Linear::new(p, &n("ffn.in"), d, hidden, rng),
            ffn_out: Linear::new(p, &n("ffn.out"), hidden, d, rng),
        }
    }

    /// `mask` is `[L, pixels]` at the resolution of `features`; `None` means
    /// every location is visible.
    pub(crate) fn apply<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &ParamStore<S>,
        queries: Var,
        features: Var,
        mask: Option<&[bool]>,
        heads: usize,
    ) -> DecoderTrace {
        let x = self.cross_norm.apply(g, p, queries);
        let q = self.cross_q.apply(g, p, x);
        let k = self.cross_k.apply(g, p, features);
        let v = self.cross_v.apply(g, p, features);
        let (att, cross_weights) = attention(g, q, k, v, heads, mask);
        let att = self.cross_out.apply(g, p, att);
        let after_cross = g.add(queries, att);

        let x = self.self_norm.apply(g, p, after_cross);
        let q = self.self_q.apply(g, p, x);
        let k = self.self_k.apply(g, p, x);
        let v = self.self_v.apply(g, p, x);
        let (att, _) = attention(g, q, k, v, heads, None);
        let att = self.self_out.apply(g, p, att);
        let after_self = g.add(after_cross, att);

        let x = self.ffn_norm.apply(g, p, after_self);
        let x = self.ffn_in.apply(g, p, x);
        let x = g.gelu(x);
        let x = self.ffn_out.apply(g, p, x);
        let output = g.add(after_self, x);
        DecoderTrace {
            cross_weights,
            after_cross,
            output,
        }
    }
}

/// Binarizes `[rows, cols]` mask logits at `logit >= 0` (sigmoid >= 0.5).
/// Rows without any selected entry become all-ones.
pub fn binarize_mask<S: Scalar>(logits: &[S], rows: usize, cols: usize) -> Vec<bool> {
    assert_eq!(logits.len(), rows * cols);
    let mut mask: Vec<bool> = logits.iter().map(|&v| v >= S::zero()).collect();
    fill_empty_rows(&mut mask, rows, cols);
    mask
}

fn fill_empty_rows(mask: &mut [bool], rows: usize, cols: usize) -> usize {
    let mut filled = 0;
    for r in 0..rows {
        let row = &mut mask[r * cols..(r + 1) * cols];
        if !row.iter().any(|&m| m) {
            row.iter_mut().for_each(|m| *m = true);
            filled += 1;
        }
    }
    filled
}

/// Attention mask for the next layer: plane features `e: [L, C]` against the
/// mask feature grid `f: [fw * fh, C]`, binarized, then resampled by nearest
/// neighbor to the `tw x th` key grid. Empty rows fall back to all-ones after
/// resampling.
pub fn predict_mask<S: Scalar>(
    e: &Tensor<S>,
    f: &Tensor<S>,
    fw: usize,
    fh: usize,
    tw: usize,
    th: usize,
) -> Vec<bool> {
    let logits = matmul(e, false, f, true, S::one());
    let rows = e.rows();
    let mut mask = Vec::with_capacity(rows * tw * th);
    for r in 0..rows {
        let bits: Vec<bool> = logits.row(r).iter().map(|&v| v >= S::zero()).collect();
        mask.extend(grid::nearest_resize(&bits, fw, fh, tw, th));
    }
    fill_empty_rows(&mut mask, rows, tw * th);
    mask
}
