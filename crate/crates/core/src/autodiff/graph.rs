use super::params::{ParamId, ParamStore};
use super::tensor::{gemm_into, matmul, Tensor};
use crate::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone)]
enum Op<S> {
    Input,
    Param(ParamId),
    MatMul { a: Var, b: Var, ta: bool, tb: bool, alpha: S },
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, S),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<S>, rstd: Vec<S> },
    Softmax(Var),
    Conv3x3 { x: Var, w: Var, cols: Tensor<S>, in_w: usize, in_h: usize, stride: usize },
    Gather { x: Var, index: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    NormalizeRows { x: Var, norms: Vec<S>, degenerate: Vec<bool> },
    PlaneDepth { n: Var, t: Var, rays: Vec<[S; 3]>, active: Vec<bool>, denom: Vec<S> },
    WeightedSum(Vec<(Var, S)>),
    External { x: Var, grad: Tensor<S> },
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// A reverse-mode tape. Operations append nodes; [`Graph::backward`] walks the
/// tape in reverse and accumulates parameter gradients.
#[derive(Debug, Clone, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

/// Parameters of [`Graph::plane_depth`].
#[derive(Debug, Clone, Copy)]
pub struct DepthClamp<S> {
    pub min_depth: S,
    pub max_depth: S,
    pub denom_eps: S,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    /// `alpha * op(a) * op(b)` where `op` optionally transposes.
    pub fn matmul_ex(&mut self, a: Var, ta: bool, b: Var, tb: bool, alpha: S) -> Var {
        let out = matmul(self.value(a), ta, self.value(b), tb, alpha);
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul { a, b, ta, tb, alpha }, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_ex(a, false, b, false, S::one())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Adds the `1 x C` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "add_row bias must be a single row");
        assert_eq!(bias.cols(), self.value(x).cols(), "add_row width");
        let bias = bias.data().to_vec();
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bias) {
                *o = *o + *b;
            }
        }
        let ng = self.needs(x) || self.needs(b);
        self.push(out, Op::AddRow(x, b), ng)
    }

    /// `x * w + b` for a `1 x out` bias row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn scale(&mut self, x: Var, s: S) -> Var {
        let mut out = self.value(x).clone();
        out.scale_assign(s);
        let ng = self.needs(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let k = S::lit((2.0 / std::f64::consts::PI).sqrt());
        let c = S::lit(GELU_C);
        let half = S::lit(0.5);
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| half * v * (S::one() + (k * (v + c * v * v * v)).tanh()))
            .collect();
        let (r, cl) = self.value(x).shape();
        let ng = self.needs(x);
        self.push(Tensor::from_vec(r, cl, data), Op::Gelu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| sigmoid(v)).collect();
        let (r, c) = self.value(x).shape();
        let ng = self.needs(x);
        self.push(Tensor::from_vec(r, c, data), Op::Sigmoid(x), ng)
    }

    /// Per-row layer normalization with `1 x C` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        assert_eq!(g.len(), cols, "layer_norm gain width");
        assert_eq!(b.len(), cols, "layer_norm bias width");
        let n = S::lit(cols as f64);
        let mut xhat = vec![S::zero(); rows * cols];
        let mut rstd = vec![S::zero(); rows];
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let rs = S::one() / (var + S::lit(LN_EPS)).sqrt();
            rstd[r] = rs;
            let o = out.row_mut(r);
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                o[c] = h * g[c] + b[c];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng)
    }

    /// Row-wise softmax. Entries where `mask` is `false` are excluded and come
    /// out exactly zero; a row with no allowed entry is an error of the caller.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        if let Some(m) = mask {
            assert_eq!(m.len(), rows * cols, "softmax mask shape");
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = xv.row(r);
            let allowed = |c: usize| mask.is_none_or(|m| m[r * cols + c]);
            let mut max = S::neg_infinity();
            for (c, &v) in row.iter().enumerate() {
                if allowed(c) && v > max {
                    max = v;
                }
            }
            assert!(max > S::neg_infinity(), "softmax row {r} has no allowed entries");
            let o = out.row_mut(r);
            let mut sum = S::zero();
            for c in 0..cols {
                if allowed(c) {
                    o[c] = (row[c] - max).exp();
                    sum = sum + o[c];
                }
            }
            o.iter_mut().for_each(|v| *v = *v / sum);
        }
        let ng = self.needs(x);
        self.push(out, Op::Softmax(x), ng)
    }

    /// 3x3 convolution with zero padding 1 and the given stride over a feature
    /// grid `x: [in_h * in_w, C_in]`; `w: [9 * C_in, C_out]` ordered by
    /// `(ky, kx, c_in)`. Output grid is `ceil(in_h / stride) x ceil(in_w / stride)`.
    pub fn conv3x3(&mut self, x: Var, w: Var, in_w: usize, in_h: usize, stride: usize) -> Var {
        let xv = self.value(x);
        let cin = xv.cols();
        assert_eq!(xv.rows(), in_w * in_h, "conv input grid size");
        assert_eq!(self.value(w).rows(), 9 * cin, "conv weight rows");
        let (ow, oh) = (in_w.div_ceil(stride), in_h.div_ceil(stride));
        let mut cols = Tensor::zeros(ow * oh, 9 * cin);
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = cols.row_mut(oy * ow + ox);
                for ky in 0..3 {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix < 0 || ix >= in_w as isize {
                            continue;
                        }
                        let src = xv.row(iy as usize * in_w + ix as usize);
                        let k = (ky * 3 + kx) * cin;
                        dst[k..k + cin].copy_from_slice(src);
                    }
                }
            }
        }
        let out = matmul(&cols, false, self.value(w), false, S::one());
        let ng = self.needs(x) || self.needs(w);
        self.push(out, Op::Conv3x3 { x, w, cols, in_w, in_h, stride }, ng)
    }

    /// Output row `i` is input row `index[i]`; gradients scatter-add back.
    pub fn gather_rows(&mut self, x: Var, index: Vec<usize>) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(index.len(), xv.cols());
        for (i, &src) in index.iter().enumerate() {
            out.row_mut(i).copy_from_slice(xv.row(src));
        }
        let ng = self.needs(x);
        self.push(out, Op::Gather { x, index }, ng)
    }

    /// Nearest-neighbor resize of a feature grid.
    pub fn resize_nearest(&mut self, x: Var, in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Var {
        let idx: Vec<usize> = (0..in_w * in_h).collect();
        let index = crate::grid::nearest_resize(&idx, in_w, in_h, out_w, out_h);
        self.gather_rows(x, index)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.needs(x);
        self.push(out, Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, total);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row count");
            for r in 0..rows {
                out.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
            }
            off += pv.cols();
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Scales each 3-vector row to unit length. Rows with norm below
    /// `min_norm` become `(0, 0, 1)` and pass no gradient.
    pub fn normalize_rows3(&mut self, x: Var, min_norm: S) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.cols(), 3, "normalize_rows3 expects 3 columns");
        let mut out = Tensor::zeros(xv.rows(), 3);
        let mut norms = Vec::with_capacity(xv.rows());
        let mut degenerate = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let v = xv.row(r);
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            norms.push(n);
            let o = out.row_mut(r);
            if n < min_norm || !n.is_finite() {
                degenerate.push(true);
                o.copy_from_slice(&[S::zero(), S::zero(), S::one()]);
            } else {
                degenerate.push(false);
                for c in 0..3 {
                    o[c] = v[c] / n;
                }
            }
        }
        let ng = self.needs(x);
        self.push(out, Op::NormalizeRows { x, norms, degenerate }, ng)
    }

    /// Per-pixel depth of the plane `(n_i, t_i)` along `rays[i]`:
    /// `t / (n . ray)` clamped to `[min_depth, max_depth]`. A denominator at or
    /// below `denom_eps` yields `max_depth`. Clamped pixels pass no gradient.
    pub fn plane_depth(&mut self, n: Var, t: Var, rays: Vec<[S; 3]>, clamp: DepthClamp<S>) -> Var {
        let nv = self.value(n);
        let tv = self.value(t);
        assert_eq!(nv.shape(), (rays.len(), 3), "plane_depth normal shape");
        assert_eq!(tv.shape(), (rays.len(), 1), "plane_depth distance shape");
        let mut out = Tensor::zeros(rays.len(), 1);
        let mut active = vec![false; rays.len()];
        let mut denom = vec![S::zero(); rays.len()];
        for (i, r) in rays.iter().enumerate() {
            let nr = nv.row(i);
            let d = nr[0] * r[0] + nr[1] * r[1] + nr[2] * r[2];
            denom[i] = d;
            let depth = if d > clamp.denom_eps {
                let raw = tv.data()[i] / d;
                if raw > clamp.min_depth && raw < clamp.max_depth {
                    active[i] = true;
                    raw
                } else if raw >= clamp.max_depth {
                    clamp.max_depth
                } else {
                    clamp.min_depth
                }
            } else {
                clamp.max_depth
            };
            out.data_mut()[i] = depth;
        }
        let ng = self.needs(n) || self.needs(t);
        self.push(out, Op::PlaneDepth { n, t, rays, active, denom }, ng)
    }

    /// `sum_k w_k * x_k` over `1 x 1` nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, S)]) -> Var {
        let mut s = S::zero();
        for &(v, w) in terms {
            s = s + w * self.value(v).item();
        }
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Tensor::scalar(s), Op::WeightedSum(terms.to_vec()), ng)
    }

    /// A scalar computed outside the tape from `x`, with its gradient
    /// `d value / d x` supplied by the caller.
    pub fn external_scalar(&mut self, x: Var, value: S, grad: Tensor<S>) -> Var {
        assert_eq!(grad.shape(), self.value(x).shape(), "external gradient shape");
        let ng = self.needs(x);
        self.push(Tensor::scalar(value), Op::External { x, grad }, ng)
    }

    /// Accumulates `d root / d param` into `grads` for every parameter on the
    /// tape. `root` must be `1 x 1`.
    pub fn backward(&self, root: Var, grads: &mut ParamStore<S>) {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut g: Vec<Option<Tensor<S>>> = vec![None; root.0 + 1];
        g[root.0] = Some(Tensor::scalar(S::one()));
        for i in (0..=root.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, gi, &mut g, grads);
        }
    }

    fn backward_node(
        &self,
        node: &Node<S>,
        gy: Tensor<S>,
        g: &mut [Option<Tensor<S>>],
        grads: &mut ParamStore<S>,
    ) {
        match &node.op {
            Op::Input => {}
            Op::Param(id) => grads.get_mut(*id).add_assign(&gy),
            &Op::MatMul { a, b, ta, tb, alpha } => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.needs(a) {
                    let acc = slot(g, a, av.shape());
                    if ta {
                        gemm_into(alpha, bv, tb, &gy, true, S::one(), acc);
                    } else {
                        gemm_into(alpha, &gy, false, bv, !tb, S::one(), acc);
                    }
                }
                if self.needs(b) {
                    let acc = slot(g, b, bv.shape());
                    if tb {
                        gemm_into(alpha, &gy, true, av, ta, S::one(), acc);
                    } else {
                        gemm_into(alpha, av, !ta, &gy, false, S::one(), acc);
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(v) {
                        slot(g, v, gy.shape()).add_assign(&gy);
                    }
                }
            }
            &Op::AddRow(x, b) => {
                if self.needs(x) {
                    slot(g, x, gy.shape()).add_assign(&gy);
                }
                if self.needs(b) {
                    let acc = slot(g, b, (1, gy.cols()));
                    for r in 0..gy.rows() {
                        for (a, v) in acc.data_mut().iter_mut().zip(gy.row(r)) {
                            *a = *a + *v;
                        }
                    }
                }
            }
            &Op::Scale(x, s) => {
                if self.needs(x) {
                    let acc = slot(g, x, gy.shape());
                    for (a, v) in acc.data_mut().iter_mut().zip(gy.data()) {
                        *a = *a + s * *v;
                    }
                }
            }
            &Op::Gelu(x) => {
                let k = S::lit((2.0 / std::f64::consts::PI).sqrt());
                let c = S::lit(GELU_C);
                let half = S::lit(0.5);
                let xv = self.value(x).data().to_vec();
                let acc = slot(g, x, gy.shape());
                for ((a, &v), &d) in acc.data_mut().iter_mut().zip(&xv).zip(gy.data()) {
                    let th = (k * (v + c * v * v * v)).tanh();
                    let dv = half * (S::one() + th)
                        + half * v * (S::one() - th * th) * k * (S::one() + S::lit(3.0) * c * v * v);
                    *a = *a + d * dv;
                }
            }
            &Op::Sigmoid(x) => {
                let acc = slot(g, x, gy.shape());
                for ((a, &y), &d) in acc.data_mut().iter_mut().zip(node.value.data()).zip(gy.data()) {
                    *a = *a + d * y * (S::one() - y);
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let (rows, cols) = gy.shape();
                let gam = self.value(*gamma).data().to_vec();
                if self.needs(*gamma) {
                    let acc = slot(g, *gamma, (1, cols));
                    for r in 0..rows {
                        for c in 0..cols {
                            acc.data_mut()[c] = acc.data()[c] + gy.get(r, c) * xhat[r * cols + c];
                        }
                    }
                }
                if self.needs(*beta) {
                    let acc = slot(g, *beta, (1, cols));
                    for r in 0..rows {
                        for c in 0..cols {
                            acc.data_mut()[c] = acc.data()[c] + gy.get(r, c);
                        }
                    }
                }
                if self.needs(*x) {
                    let n = S::lit(cols as f64);
                    let acc = slot(g, *x, (rows, cols));
                    let mut dxhat = vec![S::zero(); cols];
                    for r in 0..rows {
                        let (mut m1, mut m2) = (S::zero(), S::zero());
                        for c in 0..cols {
                            dxhat[c] = gy.get(r, c) * gam[c];
                            m1 = m1 + dxhat[c];
                            m2 = m2 + dxhat[c] * xhat[r * cols + c];
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        let row = acc.row_mut(r);
                        for c in 0..cols {
                            row[c] = row[c] + rstd[r] * (dxhat[c] - m1 - xhat[r * cols + c] * m2);
                        }
                    }
                }
            }
            &Op::Softmax(x) => {
                let y = &node.value;
                let acc = slot(g, x, gy.shape());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = gy.row(r);
                    let dot: S = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                    for (a, (&yv, &gv)) in acc.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *a = *a + yv * (gv - dot);
                    }
                }
            }
            Op::Conv3x3 { x, w, cols, in_w, in_h, stride } => {
                if self.needs(*w) {
                    let acc = slot(g, *w, self.value(*w).shape());
                    gemm_into(S::one(), cols, true, &gy, false, S::one(), acc);
                }
                if self.needs(*x) {
                    let wv = self.value(*w);
                    let dcols = matmul(&gy, false, wv, true, S::one());
                    let cin = self.value(*x).cols();
                    let (ow, oh) = (in_w.div_ceil(*stride), in_h.div_ceil(*stride));
                    let acc = slot(g, *x, (in_w * in_h, cin));
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let src = dcols.row(oy * ow + ox);
                            for ky in 0..3 {
                                let iy = (oy * stride + ky) as isize - 1;
                                if iy < 0 || iy >= *in_h as isize {
                                    continue;
                                }
                                for kx in 0..3 {
                                    let ix = (ox * stride + kx) as isize - 1;
                                    if ix < 0 || ix >= *in_w as isize {
                                        continue;
                                    }
                                    let k = (ky * 3 + kx) * cin;
                                    let dst = acc.row_mut(iy as usize * in_w + ix as usize);
                                    for (d, s) in dst.iter_mut().zip(&src[k..k + cin]) {
                                        *d = *d + *s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Gather { x, index } => {
                let shape = self.value(*x).shape();
                let acc = slot(g, *x, shape);
                for (i, &src) in index.iter().enumerate() {
                    for (d, s) in acc.row_mut(src).iter_mut().zip(gy.row(i)) {
                        *d = *d + *s;
                    }
                }
            }
            &Op::SliceCols { x, start } => {
                let shape = self.value(x).shape();
                let acc = slot(g, x, shape);
                for r in 0..gy.rows() {
                    let dst = &mut acc.row_mut(r)[start..start + gy.cols()];
                    for (d, s) in dst.iter_mut().zip(gy.row(r)) {
                        *d = *d + *s;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    if self.needs(p) {
                        let acc = slot(g, p, shape);
                        for r in 0..shape.0 {
                            for (d, s) in acc.row_mut(r).iter_mut().zip(&gy.row(r)[off..off + shape.1]) {
                                *d = *d + *s;
                            }
                        }
                    }
                    off += shape.1;
                }
            }
            Op::NormalizeRows { x, norms, degenerate } => {
                let y = &node.value;
                let acc = slot(g, *x, gy.shape());
                for r in 0..y.rows() {
                    if degenerate[r] {
                        continue;
                    }
                    let yr = y.row(r);
                    let gr = gy.row(r);
                    let dot = yr[0] * gr[0] + yr[1] * gr[1] + yr[2] * gr[2];
                    let row = acc.row_mut(r);
                    for c in 0..3 {
                        row[c] = row[c] + (gr[c] - yr[c] * dot) / norms[r];
                    }
                }
            }
            Op::PlaneDepth { n, t, rays, active, denom } => {
                let depth = node.value.data();
                if self.needs(*t) {
                    let acc = slot(g, *t, (rays.len(), 1));
                    for i in 0..rays.len() {
                        if active[i] {
                            acc.data_mut()[i] = acc.data()[i] + gy.data()[i] / denom[i];
                        }
                    }
                }
                if self.needs(*n) {
                    let acc = slot(g, *n, (rays.len(), 3));
                    for i in 0..rays.len() {
                        if active[i] {
                            let f = -gy.data()[i] * depth[i] / denom[i];
                            let row = acc.row_mut(i);
                            for c in 0..3 {
                                row[c] = row[c] + f * rays[i][c];
                            }
                        }
                    }
                }
            }
            Op::WeightedSum(terms) => {
                let up = gy.item();
                for &(v, w) in terms {
                    if self.needs(v) {
                        let acc = slot(g, v, (1, 1));
                        acc.data_mut()[0] = acc.data()[0] + up * w;
                    }
                }
            }
            Op::External { x, grad } => {
                let up = gy.item();
                let acc = slot(g, *x, grad.shape());
                for (a, v) in acc.data_mut().iter_mut().zip(grad.data()) {
                    *a = *a + up * *v;
                }
            }
        }
    }
}

/// The gradient accumulator of `v`, created zeroed on first use.
fn slot<S: Scalar>(g: &mut [Option<Tensor<S>>], v: Var, shape: (usize, usize)) -> &mut Tensor<S> {
    g[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

#[inline]
pub fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}
