//! Reverse-mode differentiation over 2-D values.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are read
//! in place from the model's tensors; their gradients are collected after
//! [`Tape::backward`].

use crate::error::ModelError;
use crate::kernels::{self, dot};
use crate::tensor::Tensor;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Additive attention mask: 0 for visible entries, `-inf` for hidden ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    visible: Vec<bool>,
}

impl Mask {
    pub fn all_visible(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            visible: vec![true; rows * cols],
        }
    }

    /// Query `i` may see keys `0..=i`.
    pub fn causal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| j <= i)
    }

    /// Hides keys whose `key_valid` entry is false.
    pub fn key_padding(rows: usize, key_valid: &[bool]) -> Self {
        Self::from_fn(rows, key_valid.len(), |_, j| key_valid[j])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut visible = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                visible.push(f(i, j));
            }
        }
        Mask {
            rows,
            cols,
            visible,
        }
    }

    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.visible[i * self.cols + j]
    }

    pub fn additive(&self, i: usize, j: usize) -> f64 {
        if self.is_visible(i, j) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulBT(Var, Var),
    Add(Var, Var),
    /// x + row-broadcast bias
    AddBias(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    MaskedSoftmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Dropout {
        x: Var,
        keep: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        scale: f64,
    },
    Sum(Vec<Var>),
}

struct Node {
    rows: usize,
    cols: usize,
    /// Empty for parameters, which are read from the parameter slice.
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    grads: Vec<Option<Vec<f64>>>,
    softmax_vars: Vec<Var>,
    backward_done: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(512),
            param_vars: vec![None; params.len()],
            grads: Vec::new(),
            softmax_vars: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(i) => self.params[i].data(),
            _ => &n.value,
        }
    }

    /// Every softmax output recorded so far, in creation order.
    pub fn softmax_outputs(&self) -> &[Var] {
        &self.softmax_vars
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(self.shape(v), (1, 1), "not a scalar");
        self.value(v)[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input, no gradient.
    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "input shape");
        self.push(rows, cols, value, Op::Input, false)
    }

    /// Parameter `i` as a matrix (leading dims folded into rows).
    pub fn param(&mut self, i: usize) -> Var {
        if let Some(v) = self.param_vars[i] {
            return v;
        }
        let (rows, cols) = self.params[i].dims2();
        let v = self.push(rows, cols, Vec::new(), Op::Param(i), true);
        self.param_vars[i] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(m, n, out, Op::MatMul(a, b), ng)
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_bt inner dims");
        let mut out = vec![0.0; m * n];
        kernels::matmul_bt_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(m, n, out, Op::MatMulBT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(r, c, out, Op::Add(a, b), ng)
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.value(bias).len(), c, "bias width");
        let b = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(c) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        self.push(r, c, out, Op::AddBias(x, bias), ng)
    }

    /// x · w + b
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_bias(h, b)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v * s).collect();
        let ng = self.ng(x);
        self.push(r, c, out, Op::Scale(x, s), ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| kernels::gelu(v)).collect();
        let ng = self.ng(x);
        self.push(r, c, out, Op::Gelu(x), ng)
    }

    /// Per-row normalisation with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(self.value(gain).len(), c);
        assert_eq!(self.value(bias).len(), c);
        let xs = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(
            r,
            c,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        )
    }

    /// Row softmax of `x + mask`. Fails on a row with no visible entry.
    pub fn masked_softmax(&mut self, x: Var, mask: &Mask) -> Result<Var, ModelError> {
        let (r, c) = self.shape(x);
        if (mask.rows, mask.cols) != (r, c) {
            return Err(ModelError::Shape(format!(
                "mask {}x{} does not match scores {r}x{c}",
                mask.rows, mask.cols
            )));
        }
        let xs = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            if !(0..c).any(|j| mask.is_visible(i, j)) {
                return Err(ModelError::AllMasked { row: i });
            }
            let mut max = f64::NEG_INFINITY;
            for j in 0..c {
                if mask.is_visible(i, j) {
                    max = max.max(xs[i * c + j]);
                }
            }
            let mut sum = 0.0;
            for j in 0..c {
                let e = if mask.is_visible(i, j) {
                    (xs[i * c + j] - max).exp()
                } else {
                    0.0
                };
                out[i * c + j] = e;
                sum += e;
            }
            for v in &mut out[i * c..(i + 1) * c] {
                *v /= sum;
            }
        }
        let ng = self.ng(x);
        let v = self.push(r, c, out, Op::MaskedSoftmax(x), ng);
        self.softmax_vars.push(v);
        Ok(v)
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let (n, c) = self.shape(table);
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            assert!(id < n, "gather id {id} out of range {n}");
            out.extend_from_slice(&t[id * c..(id + 1) * c]);
        }
        let ng = self.ng(table);
        self.push(
            ids.len(),
            c,
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let (r, c) = self.shape(x);
        assert!(start + width <= c, "slice out of range");
        let xs = self.value(x);
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&xs[i * c + start..i * c + start + width]);
        }
        let ng = self.ng(x);
        self.push(r, width, out, Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let r = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.shape(p).0, r, "concat rows");
                self.shape(p).1
            })
            .collect();
        let c: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(r, c, out, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Inverted dropout with a caller-supplied keep pattern (`0` or `1/(1-p)`).
    pub fn dropout(&mut self, x: Var, keep: Vec<f64>) -> Var {
        let (r, c) = self.shape(x);
        assert_eq!(keep.len(), r * c);
        let out = self
            .value(x)
            .iter()
            .zip(&keep)
            .map(|(v, k)| v * k)
            .collect();
        let ng = self.ng(x);
        self.push(r, c, out, Op::Dropout { x, keep }, ng)
    }

    /// `scale * Σ -log softmax(logits[r])[targets[r]]` over rows with a target.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        scale: f64,
    ) -> Result<Var, ModelError> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(ModelError::LengthMismatch {
                logits: r,
                targets: targets.len(),
            });
        }
        let xs = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut total = 0.0;
        for (i, t) in targets.iter().enumerate() {
            let row = &xs[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (p, &v) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (v - max).exp();
                sum += *p;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p /= sum;
            }
            if let Some(t) = *t {
                if t >= c {
                    return Err(ModelError::Shape(format!("target {t} >= {c} classes")));
                }
                total += -(row[t] - max - sum.ln());
            }
        }
        let ng = self.ng(logits);
        Ok(self.push(
            1,
            1,
            vec![scale * total],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                scale,
            },
            ng,
        ))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut s = 0.0;
        for &p in parts {
            assert_eq!(self.shape(p), (1, 1), "sum of non-scalars");
            s += self.value(p)[0];
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(1, 1, vec![s], Op::Sum(parts.to_vec()), ng)
    }

    fn grad_buf<'g>(
        grads: &'g mut [Option<Vec<f64>>],
        nodes: &[Node],
        v: Var,
    ) -> Option<&'g mut Vec<f64>> {
        let n = &nodes[v.0];
        if !n.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]))
    }

    /// Propagates d`loss`/d(node) for every node that depends on a parameter.
    pub fn backward(&mut self, loss: Var) -> Result<(), ModelError> {
        if self.backward_done {
            return Err(ModelError::BackwardTwice);
        }
        if self.shape(loss) != (1, 1) {
            return Err(ModelError::Shape("loss must be a scalar".into()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let params = self.params;
        let nodes = &self.nodes;
        let value = |v: Var| -> &[f64] {
            match nodes[v.0].op {
                Op::Param(i) => params[i].data(),
                _ => &nodes[v.0].value,
            }
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Input => {}
                Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (nodes[a.0].rows, nodes[a.0].cols);
                    let n = cols;
                    if let Some(ga) = Self::grad_buf(&mut grads, nodes, *a) {
                        kernels::matmul_bt_acc(&g, value(*b), ga, m, n, k);
                    }
                    if let Some(gb) = Self::grad_buf(&mut grads, nodes, *b) {
                        kernels::matmul_at_acc(value(*a), &g, gb, m, k, n);
                    }
                }
                Op::MatMulBT(a, b) => {
                    let (m, k) = (nodes[a.0].rows, nodes[a.0].cols);
                    let n = cols;
                    if let Some(ga) = Self::grad_buf(&mut grads, nodes, *a) {
                        kernels::matmul_acc(&g, value(*b), ga, m, n, k);
                    }
                    if let Some(gb) = Self::grad_buf(&mut grads, nodes, *b) {
                        kernels::matmul_at_acc(&g, value(*a), gb, m, n, k);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(gv) = Self::grad_buf(&mut grads, nodes, v) {
                            kernels::axpy(1.0, &g, gv);
                        }
                    }
                }
                Op::AddBias(x, bias) => {
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        kernels::axpy(1.0, &g, gx);
                    }
                    if let Some(gb) = Self::grad_buf(&mut grads, nodes, *bias) {
                        for row in g.chunks_exact(cols) {
                            kernels::axpy(1.0, row, gb);
                        }
                    }
                }
                Op::Scale(x, s) => {
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        kernels::axpy(*s, &g, gx);
                    }
                }
                Op::Gelu(x) => {
                    let xv = value(*x);
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        for ((d, gi), xi) in gx.iter_mut().zip(&g).zip(xv) {
                            *d += gi * kernels::gelu_grad(*xi);
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = value(*gain).to_vec();
                    if let Some(gg) = Self::grad_buf(&mut grads, nodes, *gain) {
                        for i in 0..rows {
                            for j in 0..cols {
                                gg[j] += g[i * cols + j] * xhat[i * cols + j];
                            }
                        }
                    }
                    if let Some(gb) = Self::grad_buf(&mut grads, nodes, *bias) {
                        for row in g.chunks_exact(cols) {
                            kernels::axpy(1.0, row, gb);
                        }
                    }
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        let c = cols as f64;
                        for i in 0..rows {
                            let gr = &g[i * cols..(i + 1) * cols];
                            let hr = &xhat[i * cols..(i + 1) * cols];
                            let mut mean_d = 0.0;
                            let mut mean_dh = 0.0;
                            for j in 0..cols {
                                let d = gr[j] * gv[j];
                                mean_d += d;
                                mean_dh += d * hr[j];
                            }
                            mean_d /= c;
                            mean_dh /= c;
                            for j in 0..cols {
                                let d = gr[j] * gv[j];
                                gx[i * cols + j] += rstd[i] * (d - mean_d - hr[j] * mean_dh);
                            }
                        }
                    }
                }
                Op::MaskedSoftmax(x) => {
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        let y = &node.value;
                        for i in 0..rows {
                            let yr = &y[i * cols..(i + 1) * cols];
                            let gr = &g[i * cols..(i + 1) * cols];
                            let s = dot(yr, gr);
                            for j in 0..cols {
                                gx[i * cols + j] += yr[j] * (gr[j] - s);
                            }
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    if let Some(gt) = Self::grad_buf(&mut grads, nodes, *table) {
                        for (r, &id) in ids.iter().enumerate() {
                            kernels::axpy(
                                1.0,
                                &g[r * cols..(r + 1) * cols],
                                &mut gt[id * cols..(id + 1) * cols],
                            );
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let xc = nodes[x.0].cols;
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        for i in 0..rows {
                            kernels::axpy(
                                1.0,
                                &g[i * cols..(i + 1) * cols],
                                &mut gx[i * xc + start..i * xc + start + cols],
                            );
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = nodes[p.0].cols;
                        if let Some(gp) = Self::grad_buf(&mut grads, nodes, *p) {
                            for i in 0..rows {
                                kernels::axpy(
                                    1.0,
                                    &g[i * cols + offset..i * cols + offset + w],
                                    &mut gp[i * w..(i + 1) * w],
                                );
                            }
                        }
                        offset += w;
                    }
                }
                Op::Dropout { x, keep } => {
                    if let Some(gx) = Self::grad_buf(&mut grads, nodes, *x) {
                        for ((d, gi), k) in gx.iter_mut().zip(&g).zip(keep) {
                            *d += gi * k;
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    scale,
                } => {
                    let lc = nodes[logits.0].cols;
                    if let Some(gl) = Self::grad_buf(&mut grads, nodes, *logits) {
                        let s = scale * g[0];
                        for (i, t) in targets.iter().enumerate() {
                            let Some(t) = *t else { continue };
                            for j in 0..lc {
                                gl[i * lc + j] += s * probs[i * lc + j];
                            }
                            gl[i * lc + t] -= s;
                        }
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        if let Some(gp) = Self::grad_buf(&mut grads, nodes, *p) {
                            gp[0] += g[0];
                        }
                    }
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient w.r.t. node `v` after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient w.r.t. parameter `i`; `None` if the parameter was unused.
    pub fn param_grad(&self, i: usize) -> Option<&[f64]> {
        self.param_vars[i].and_then(|v| self.grad(v))
    }

    /// Adds every parameter gradient into `dst[i]`.
    pub fn accumulate_into(&self, dst: &mut [Vec<f64>]) {
        for (i, d) in dst.iter_mut().enumerate() {
            if let Some(g) = self.param_grad(i) {
                kernels::axpy(1.0, g, d);
            }
        }
    }
}
