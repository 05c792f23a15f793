//! Reverse-mode differentiation over a fixed operation set.
//!
//! Values are `Mat` (f64). Parameters enter through [`Tape::param`], which
//! reads the current f32 value from a [`ParamStore`]; [`Tape::backward`]
//! returns per-parameter gradients that the caller accumulates.

use std::collections::HashMap;
use std::rc::Rc;

use super::dropout::{dropout_mask, DropoutMode};
use super::ops::{sigmoid, softmax_into, softplus, Activation};
use super::params::{ParamId, ParamStore};
use super::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Dropout(Var, Rc<Vec<f64>>),
    LayerNorm { x: Var, gain: Option<Var>, bias: Option<Var>, xhat: Mat, inv_std: Vec<f64> },
    SoftmaxRows(Var, f64),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Mean(Vec<Var>),
    WeightedSum(Vec<Var>, Var),
    LabelMassNll(Var, Rc<Vec<Vec<usize>>>),
    BceLogits(Var, Rc<Vec<Vec<u32>>>),
}

struct Node {
    value: Mat,
    op: Op,
    tracked: bool,
}

/// Smallest probability mass used inside logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    dropout: DropoutMode,
}

impl Tape {
    pub fn new(dropout: DropoutMode) -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new(), dropout }
    }

    pub fn dropout_mode(&self) -> DropoutMode {
        self.dropout
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.data[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, tracked: bool) -> Var {
        debug_assert!(value.data.iter().all(|v| !v.is_nan()), "NaN produced");
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Input, false)
    }

    /// The parameter's current value; repeated calls share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).to_mat(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMul(a, b), t)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b));
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMulT(a, b), t)
    }

    /// Adds the `1 x cols` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (xm, bm) = (self.value(x), self.value(bias));
        assert_eq!((1, xm.cols), bm.shape(), "bias shape mismatch");
        let mut value = xm.clone();
        for r in 0..value.rows {
            for (o, b) in value.row_mut(r).iter_mut().zip(&bm.data) {
                *o += b;
            }
        }
        let t = self.tracked(x) || self.tracked(bias);
        self.push(value, Op::AddRow(x, bias), t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Add(a, b), t)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scaled(s);
        let t = self.tracked(x);
        self.push(value, Op::Scale(x, s), t)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return x;
        }
        let value = self.value(x).map(|v| act.apply(v));
        let t = self.tracked(x);
        self.push(value, Op::Act(x, act), t)
    }

    /// Inverted dropout keyed by the tape's mode and `layer`.
    pub fn dropout(&mut self, x: Var, rate: f64, layer: u64) -> Var {
        let n = self.value(x).data.len();
        let Some(mask) = dropout_mask(self.dropout, layer, n, rate) else {
            return x;
        };
        let mut value = self.value(x).clone();
        for (v, m) in value.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        let t = self.tracked(x);
        self.push(value, Op::Dropout(x, Rc::new(mask)), t)
    }

    /// Row-wise layer normalization with optional `1 x cols` gain and bias.
    pub fn layernorm(&mut self, x: Var, gain: Option<Var>, bias: Option<Var>, eps: f64) -> Var {
        let xm = self.value(x);
        let (rows, cols) = xm.shape();
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xm.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        let mut value = xhat.clone();
        for r in 0..rows {
            let out = value.row_mut(r);
            if let Some(g) = gain {
                for (o, gv) in out.iter_mut().zip(&self.nodes[g.0].value.data) {
                    *o *= gv;
                }
            }
            if let Some(b) = bias {
                for (o, bv) in out.iter_mut().zip(&self.nodes[b.0].value.data) {
                    *o += bv;
                }
            }
        }
        let t = self.tracked(x) || gain.is_some_and(|g| self.tracked(g)) || bias.is_some_and(|b| self.tracked(b));
        self.push(value, Op::LayerNorm { x, gain, bias, xhat, inv_std }, t)
    }

    /// Row-wise `softmax(beta * x)`.
    pub fn softmax_rows(&mut self, x: Var, beta: f64) -> Var {
        let xm = self.value(x);
        let mut value = Mat::zeros(xm.rows, xm.cols);
        for r in 0..xm.rows {
            softmax_into(xm.row(r), beta, value.row_mut(r));
        }
        let t = self.tracked(x);
        self.push(value, Op::SoftmaxRows(x, beta), t)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).cols_range(start, len);
        let t = self.tracked(x);
        self.push(value, Op::SliceCols(x, start), t)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut value = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pm = self.value(p);
                assert_eq!(pm.rows, rows, "concat row mismatch");
                value.row_mut(r)[off..off + pm.cols].copy_from_slice(pm.row(r));
                off += pm.cols;
            }
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), t)
    }

    /// Elementwise mean of equally shaped values.
    pub fn mean(&mut self, items: &[Var]) -> Var {
        if items.len() == 1 {
            return items[0];
        }
        let mut value = self.value(items[0]).clone();
        for &i in &items[1..] {
            value.add_assign(self.value(i));
        }
        let value = value.scaled(1.0 / items.len() as f64);
        let t = items.iter().any(|&i| self.tracked(i));
        self.push(value, Op::Mean(items.to_vec()), t)
    }

    /// `Σ_l w[0, l] * items[l]` with `w` of shape `1 x L`.
    pub fn weighted_sum(&mut self, items: &[Var], w: Var) -> Var {
        let wm = self.value(w);
        assert_eq!(wm.shape(), (1, items.len()), "weight shape mismatch");
        let weights = wm.data.clone();
        let mut value = Mat::zeros(self.value(items[0]).rows, self.value(items[0]).cols);
        for (&i, wl) in items.iter().zip(&weights) {
            for (o, v) in value.data.iter_mut().zip(&self.nodes[i.0].value.data) {
                *o += wl * v;
            }
        }
        let t = self.tracked(w) || items.iter().any(|&i| self.tracked(i));
        self.push(value, Op::WeightedSum(items.to_vec(), w), t)
    }

    /// Mean over rows of `-log Σ_{k ∈ labels[i]} p[i, k]`. With one label
    /// per row this is the cross-entropy of a probability matrix.
    pub fn label_mass_nll(&mut self, p: Var, labels: Vec<Vec<usize>>) -> Var {
        let pm = self.value(p);
        assert_eq!(pm.rows, labels.len(), "one label set per row");
        let mut total = 0.0;
        for (r, ls) in labels.iter().enumerate() {
            assert!(!ls.is_empty(), "empty label set");
            let mass: f64 = ls.iter().map(|&k| pm.get(r, k)).sum();
            total -= mass.max(PROB_FLOOR).ln();
        }
        let value = Mat::from_vec(1, 1, vec![total / labels.len() as f64]);
        let t = self.tracked(p);
        self.push(value, Op::LabelMassNll(p, Rc::new(labels)), t)
    }

    /// Mean binary cross-entropy of logits against sparse positive columns.
    pub fn bce_logits(&mut self, logits: Var, positives: Vec<Vec<u32>>) -> Var {
        let zm = self.value(logits);
        assert_eq!(zm.rows, positives.len(), "one target row per logit row");
        let mut total = 0.0;
        for (r, pos) in positives.iter().enumerate() {
            total += zm.row(r).iter().map(|&z| softplus(z)).sum::<f64>();
            total -= pos.iter().map(|&k| zm.get(r, k as usize)).sum::<f64>();
        }
        let value = Mat::from_vec(1, 1, vec![total / zm.data.len() as f64]);
        let t = self.tracked(logits);
        self.push(value, Op::BceLogits(logits, Rc::new(positives)), t)
    }

    /// Gradients of scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let val = |v: Var| &self.nodes[v.0].value;
            let tr = |v: Var| self.nodes[v.0].tracked;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.by_param.push((*id, g)),
                Op::MatMul(a, b) => {
                    if tr(*a) {
                        acc(&mut grads, *a, g.matmul_t(val(*b)));
                    }
                    if tr(*b) {
                        acc(&mut grads, *b, val(*a).t_matmul(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if tr(*a) {
                        acc(&mut grads, *a, g.matmul(val(*b)));
                    }
                    if tr(*b) {
                        acc(&mut grads, *b, g.t_matmul(val(*a)));
                    }
                }
                Op::AddRow(x, b) => {
                    if tr(*b) {
                        acc(&mut grads, *b, g.column_sums());
                    }
                    if tr(*x) {
                        acc(&mut grads, *x, g);
                    }
                }
                Op::Add(a, b) => {
                    if tr(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if tr(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Scale(x, s) => acc(&mut grads, *x, g.scaled(*s)),
                Op::Act(x, act) => {
                    let (xm, y) = (val(*x), &node.value);
                    let data = g
                        .data
                        .iter()
                        .zip(xm.data.iter().zip(&y.data))
                        .map(|(gv, (xv, yv))| gv * act.derivative(*xv, *yv))
                        .collect();
                    acc(&mut grads, *x, Mat::from_vec(g.rows, g.cols, data));
                }
                Op::Dropout(x, mask) => {
                    let data = g.data.iter().zip(mask.iter()).map(|(a, b)| a * b).collect();
                    acc(&mut grads, *x, Mat::from_vec(g.rows, g.cols, data));
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    if let Some(b) = bias.filter(|b| tr(*b)) {
                        acc(&mut grads, b, g.column_sums());
                    }
                    if let Some(gn) = gain.filter(|gn| tr(*gn)) {
                        let mut dg = Mat::zeros(1, g.cols);
                        for (k, (gv, xh)) in g.data.iter().zip(&xhat.data).enumerate() {
                            dg.data[k % g.cols] += gv * xh;
                        }
                        acc(&mut grads, gn, dg);
                    }
                    if tr(*x) {
                        let n = g.cols as f64;
                        let mut dx = Mat::zeros(g.rows, g.cols);
                        for r in 0..g.rows {
                            let dxhat: Vec<f64> = match gain {
                                Some(gn) => g.row(r).iter().zip(&val(*gn).data).map(|(a, b)| a * b).collect(),
                                None => g.row(r).to_vec(),
                            };
                            let xh = xhat.row(r);
                            let mean_d = dxhat.iter().sum::<f64>() / n;
                            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
                            for ((o, d), h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
                                *o = inv_std[r] * (d - mean_d - h * mean_dx);
                            }
                        }
                        acc(&mut grads, *x, dx);
                    }
                }
                Op::SoftmaxRows(x, beta) => {
                    let y = &node.value;
                    let mut dx = Mat::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = beta * yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::SliceCols(x, start) => {
                    let xm = val(*x);
                    let mut dx = Mat::zeros(xm.rows, xm.cols);
                    for r in 0..g.rows {
                        dx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = val(p).cols;
                        if tr(p) {
                            acc(&mut grads, p, g.cols_range(off, w));
                        }
                        off += w;
                    }
                }
                Op::Mean(items) => {
                    let share = g.scaled(1.0 / items.len() as f64);
                    for &it in items {
                        if tr(it) {
                            acc(&mut grads, it, share.clone());
                        }
                    }
                }
                Op::WeightedSum(items, w) => {
                    let wm = val(*w).clone();
                    if tr(*w) {
                        let dw: Vec<f64> = items
                            .iter()
                            .map(|&it| g.data.iter().zip(&val(it).data).map(|(a, b)| a * b).sum())
                            .collect();
                        acc(&mut grads, *w, Mat::from_vec(1, items.len(), dw));
                    }
                    for (&it, wl) in items.iter().zip(&wm.data) {
                        if tr(it) {
                            acc(&mut grads, it, g.scaled(*wl));
                        }
                    }
                }
                Op::LabelMassNll(p, labels) => {
                    let pm = val(*p);
                    let scale = g.data[0] / labels.len() as f64;
                    let mut dp = Mat::zeros(pm.rows, pm.cols);
                    for (r, ls) in labels.iter().enumerate() {
                        let mass: f64 = ls.iter().map(|&k| pm.get(r, k)).sum();
                        if mass < PROB_FLOOR {
                            continue;
                        }
                        for &k in ls.iter() {
                            let cur = dp.get(r, k);
                            dp.set(r, k, cur - scale / mass);
                        }
                    }
                    acc(&mut grads, *p, dp);
                }
                Op::BceLogits(z, positives) => {
                    let zm = val(*z);
                    let scale = g.data[0] / zm.data.len() as f64;
                    let mut dz = zm.map(|v| sigmoid(v) * scale);
                    for (r, pos) in positives.iter().enumerate() {
                        for &k in pos.iter() {
                            let cur = dz.get(r, k as usize);
                            dz.set(r, k as usize, cur - scale);
                        }
                    }
                    acc(&mut grads, *z, dz);
                }
            }
        }
        out
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: Vec<(ParamId, Mat)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.by_param.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ParamId, Mat)> {
        self.by_param.iter()
    }

    /// Adds every gradient into the store's `grad` buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.by_param {
            store.accumulate(*id, g);
        }
    }
}
