//! Minimal reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records operations in execution order; [`Tape::backward`]
//! walks it in reverse and returns gradients for every parameter of the
//! [`ParamStore`] the tape reads from. Parameters are referenced, not
//! copied, so building a tape for a single decoding step is cheap.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::{self, LogProbGrid};
use crate::tensor::{gemm_acc, matmul_t, Mat};

/// Named trainable tensors in a fixed enumeration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads(self.values.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect())
    }

    /// Round every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for m in &mut self.values {
            for x in &mut m.data {
                *x = *x as f32 as f64;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Mat::is_finite)
    }
}

/// One gradient tensor per parameter, aligned with the store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads(pub Vec<Mat>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &Mat {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.0 {
            m.scale(s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(Mat::sum_sq).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Mat::is_finite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Constant,
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { x: Var, v: Var },
    Tanh(Var),
    Sigmoid(Var),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    StackRows(Vec<Var>),
    GatherRows { table: Var, ids: Vec<u32> },
    Unfold { x: Var, kernel: usize, stride: usize },
    PairAdd { a: Var, b: Var },
    LogSoftmax(Var),
    Transducer { logp: Var, frames: usize, target: Vec<u32>, blank: u32, alpha: Mat, ll: f64 },
    Sum(Vec<Var>),
    Scale(Var, f64),
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.params.get(*id),
            (_, Some(m)) => m,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data[0]
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Op::Constant, value)
    }

    /// `x * w^T + b`, with `w` shaped `out x in` and `b` shaped `1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let mut y = matmul_t(self.value(x), self.value(w));
        if let Some(b) = b {
            let bias = self.value(b);
            assert_eq!(bias.len(), y.cols, "bias length");
            for r in 0..y.rows {
                for (o, bb) in y.row_mut(r).iter_mut().zip(&bias.data) {
                    *o += bb;
                }
            }
        }
        self.push(Op::Linear { x, w, b }, y)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!(ma.shape(), mb.shape(), "elementwise shapes");
        Mat::from_vec(
            ma.rows,
            ma.cols,
            ma.data.iter().zip(&mb.data).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    /// Add the `1 x cols` row `v` to every row of `x`.
    pub fn add_row(&mut self, x: Var, v: Var) -> Result<Var> {
        let (mx, mv) = (self.value(x), self.value(v));
        if mv.rows != 1 || mv.cols != mx.cols {
            return Err(Error::Shape(format!(
                "cannot broadcast {}x{} over {}x{}",
                mv.rows, mv.cols, mx.rows, mx.cols
            )));
        }
        let mut out = mx.clone();
        for r in 0..out.rows {
            for (o, a) in out.row_mut(r).iter_mut().zip(&mv.data) {
                *o += a;
            }
        }
        Ok(self.push(Op::AddRow { x, v }, out))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| 1.0 / (1.0 + (-a).exp()));
        self.push(Op::Sigmoid(x), v)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        assert!(start + len <= m.cols);
        let out = Mat::from_fn(m.rows, len, |r, c| m.get(r, start + c));
        self.push(Op::SliceCols { x, start }, out)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        assert!(start + len <= m.rows);
        let out = Mat::from_vec(len, m.cols, m.data[start * m.cols..(start + len) * m.cols].to_vec());
        self.push(Op::SliceRows { x, start }, out)
    }

    pub fn stack_rows(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "stack_rows column mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Op::StackRows(parts), Mat::from_vec(rows, cols, data))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[u32]) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * t.cols);
        for &i in ids {
            data.extend_from_slice(t.row(i as usize));
        }
        let out = Mat::from_vec(ids.len(), t.cols, data);
        self.push(
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            out,
        )
    }

    /// Strided sliding window: output row `t` concatenates input rows
    /// `t * stride - (kernel - 1) / 2 + j` for `j < kernel`, zero padded.
    /// Produces `ceil(rows / stride)` rows.
    pub fn unfold(&mut self, x: Var, kernel: usize, stride: usize) -> Var {
        let out = unfold_value(self.value(x), kernel, stride);
        self.push(Op::Unfold { x, kernel, stride }, out)
    }

    /// Row `t * b.rows + u` of the result is `a[t] + b[u]`.
    pub fn pair_add(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!(ma.cols, mb.cols);
        let mut out = Mat::zeros(ma.rows * mb.rows, ma.cols);
        for t in 0..ma.rows {
            for u in 0..mb.rows {
                let row = out.row_mut(t * mb.rows + u);
                for ((o, x), y) in row.iter_mut().zip(ma.row(t)).zip(mb.row(u)) {
                    *o = x + y;
                }
            }
        }
        self.push(Op::PairAdd { a, b }, out)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let out = log_softmax_rows(self.value(x));
        self.push(Op::LogSoftmax(x), out)
    }

    /// Transducer negative log-likelihood of `target` given row-wise log
    /// probabilities laid out as `frames x (U + 1)` lattice nodes.
    pub fn transducer_loss(&mut self, logp: Var, frames: usize, target: &[u32], blank: u32) -> Result<Var> {
        let m = self.value(logp);
        let grid = LogProbGrid::new(frames, target.len(), m.cols, &m.data)?;
        let (alpha, ll) = lattice::forward(&grid, target, blank)?;
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("transducer log-likelihood {ll}")));
        }
        let op = Op::Transducer {
            logp,
            frames,
            target: target.to_vec(),
            blank,
            alpha,
            ll,
        };
        Ok(self.push(op, Mat::row_vector(vec![-ll])))
    }

    pub fn sum(&mut self, parts: Vec<Var>) -> Var {
        let total = parts.iter().map(|&p| self.scalar(p)).sum();
        self.push(Op::Sum(parts), Mat::row_vector(vec![total]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut v = self.value(x).clone();
        v.scale(s);
        self.push(Op::Scale(x, s), v)
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Mat>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Mat::row_vector(vec![1.0]));
        let mut out = self.params.zeros_like();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let own = || node.value.as_ref().expect("value");
            match &node.op {
                Op::Param(id) => out.0[id.0].add_assign(&g),
                Op::Constant => {}
                Op::Linear { x, w, b } => {
                    let (mx, mw) = (self.value(*x), self.value(*w));
                    let mut gx = Mat::zeros(mx.rows, mx.cols);
                    gemm_acc(1.0, &g, false, mw, false, &mut gx);
                    accumulate(&mut grads, *x, gx);
                    let mut gw = Mat::zeros(mw.rows, mw.cols);
                    gemm_acc(1.0, &g, true, mx, false, &mut gw);
                    accumulate(&mut grads, *w, gw);
                    if let Some(b) = b {
                        accumulate(&mut grads, *b, g.col_sums());
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (ma, mb) = (self.value(*a), self.value(*b));
                    let ga = zip(&g, mb, |x, y| x * y);
                    let gb = zip(&g, ma, |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow { x, v } => {
                    accumulate(&mut grads, *v, g.col_sums());
                    accumulate(&mut grads, *x, g);
                }
                Op::Tanh(x) => {
                    let gx = zip(&g, own(), |gg, y| gg * (1.0 - y * y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = zip(&g, own(), |gg, y| gg * y * (1.0 - y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::SliceCols { x, start } => {
                    let mx = self.value(*x);
                    let mut gx = Mat::zeros(mx.rows, mx.cols);
                    for r in 0..g.rows {
                        gx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SliceRows { x, start } => {
                    let mx = self.value(*x);
                    let mut gx = Mat::zeros(mx.rows, mx.cols);
                    gx.data[start * mx.cols..(start + g.rows) * mx.cols].copy_from_slice(&g.data);
                    accumulate(&mut grads, *x, gx);
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let m = self.value(p);
                        let gp = Mat::from_vec(m.rows, m.cols, g.data[offset..offset + n].to_vec());
                        offset += n;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::GatherRows { table, ids } => {
                    let mt = self.value(*table);
                    let mut gt = Mat::zeros(mt.rows, mt.cols);
                    for (r, &i) in ids.iter().enumerate() {
                        for (o, x) in gt.row_mut(i as usize).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::Unfold { x, kernel, stride } => {
                    let mx = self.value(*x);
                    let mut gx = Mat::zeros(mx.rows, mx.cols);
                    let pad = (kernel - 1) / 2;
                    for t in 0..g.rows {
                        for j in 0..*kernel {
                            let src = (t * stride + j) as isize - pad as isize;
                            if src < 0 || src as usize >= mx.rows {
                                continue;
                            }
                            let gsrc = &g.row(t)[j * mx.cols..(j + 1) * mx.cols];
                            for (o, v) in gx.row_mut(src as usize).iter_mut().zip(gsrc) {
                                *o += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::PairAdd { a, b } => {
                    let (ra, rb) = (self.value(*a).rows, self.value(*b).rows);
                    let mut ga = Mat::zeros(ra, g.cols);
                    let mut gb = Mat::zeros(rb, g.cols);
                    for t in 0..ra {
                        for u in 0..rb {
                            let row = g.row(t * rb + u);
                            for (o, x) in ga.row_mut(t).iter_mut().zip(row) {
                                *o += x;
                            }
                            for (o, x) in gb.row_mut(u).iter_mut().zip(row) {
                                *o += x;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::LogSoftmax(x) => {
                    let y = own();
                    let mut gx = g.clone();
                    for r in 0..y.rows {
                        let gs: f64 = g.row(r).iter().sum();
                        for (o, ly) in gx.row_mut(r).iter_mut().zip(y.row(r)) {
                            *o -= ly.exp() * gs;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Transducer {
                    logp,
                    frames,
                    target,
                    blank,
                    alpha,
                    ll,
                } => {
                    let m = self.value(*logp);
                    let grid = LogProbGrid::new(*frames, target.len(), m.cols, &m.data)
                        .expect("validated in forward");
                    let mut dl = lattice::loss_grad(&grid, target, *blank, alpha, *ll);
                    let s = g.data[0];
                    for v in &mut dl {
                        *v *= s;
                    }
                    accumulate(&mut grads, *logp, Mat::from_vec(m.rows, m.cols, dl));
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut grads, p, g.clone());
                    }
                }
                Op::Scale(x, s) => accumulate(&mut grads, *x, g.map(|v| v * s)),
            }
        }
        out
    }
}

fn zip(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    Mat::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn unfold_value(m: &Mat, kernel: usize, stride: usize) -> Mat {
    assert!(kernel >= 1 && stride >= 1);
    let rows = m.rows.div_ceil(stride);
    let pad = (kernel - 1) / 2;
    let mut out = Mat::zeros(rows, kernel * m.cols);
    for t in 0..rows {
        for j in 0..kernel {
            let src = (t * stride + j) as isize - pad as isize;
            if src < 0 || src as usize >= m.rows {
                continue;
            }
            out.row_mut(t)[j * m.cols..(j + 1) * m.cols].copy_from_slice(m.row(src as usize));
        }
    }
    out
}

pub fn log_softmax_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let lse = crate::tensor::log_sum_exp(row);
        for x in row.iter_mut() {
            *x -= lse;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(store: &mut ParamStore, id: ParamId, i: usize, f: &dyn Fn(&ParamStore) -> f64) -> f64 {
        let eps = 1e-6;
        let orig = store.get(id).data[i];
        store.get_mut(id).data[i] = orig + eps;
        let up = f(store);
        store.get_mut(id).data[i] = orig - eps;
        let down = f(store);
        store.get_mut(id).data[i] = orig;
        (up - down) / (2.0 * eps)
    }

    fn check(store: &mut ParamStore, build: &dyn Fn(&mut Tape) -> Var) {
        let grads = {
            let mut tape = Tape::new(store);
            let loss = build(&mut tape);
            tape.backward(loss)
        };
        let f = |s: &ParamStore| {
            let mut tape = Tape::new(s);
            let l = build(&mut tape);
            tape.scalar(l)
        };
        for id in store.ids().collect::<Vec<_>>() {
            for i in 0..store.get(id).len() {
                let num = finite_diff(store, id, i, &f);
                let ana = grads.get(id).data[i];
                assert!(
                    (num - ana).abs() <= 1e-6 * (1.0 + num.abs()),
                    "{} [{i}]: numeric {num} analytic {ana}",
                    store.name(id)
                );
            }
        }
    }

    fn seeded(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Mat::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn elementwise_and_linear_grads() {
        let mut store = ParamStore::new();
        let x = store.add("x", seeded(3, 4, 1));
        let w = store.add("w", seeded(5, 4, 2));
        let b = store.add("b", seeded(1, 5, 3));
        let v = store.add("v", seeded(1, 5, 4));
        check(&mut store, &|t| {
            let (x, w, b, v) = (t.param(x), t.param(w), t.param(b), t.param(v));
            let y = t.linear(x, w, Some(b));
            let y = t.add_row(y, v).unwrap();
            let a = t.tanh(y);
            let s = t.sigmoid(y);
            let m = t.mul(a, s);
            let d = t.sub(m, a);
            let ls = t.log_softmax(d);
            let pick = t.slice_cols(ls, 1, 2);
            let rows = t.slice_rows(pick, 1, 2);
            let st = t.stack_rows(vec![rows, pick]);
            let u = t.unfold(st, 3, 2);
            let uu = t.value(u).clone();
            let wsum = t.constant(Mat::from_fn(1, uu.cols, |_, c| 0.3 + c as f64 * 0.1));
            let proj = t.linear(u, wsum, None);
            let parts: Vec<Var> = (0..t.value(proj).rows).map(|r| t.slice_rows(proj, r, 1)).collect();
            let total = t.sum(parts);
            t.scale(total, 0.7)
        });
    }

    #[test]
    fn gather_pair_and_transducer_grads() {
        let mut store = ParamStore::new();
        let table = store.add("table", seeded(4, 3, 5));
        let enc = store.add("enc", seeded(3, 3, 6));
        let out = store.add("out", seeded(4, 3, 7));
        check(&mut store, &|t| {
            let tb = t.param(table);
            let g = t.gather_rows(tb, &[3, 0, 1]);
            let e = t.param(enc);
            let z = t.pair_add(e, g);
            let z = t.tanh(z);
            let o = t.param(out);
            let logits = t.linear(z, o, None);
            let lp = t.log_softmax(logits);
            t.transducer_loss(lp, 3, &[0, 2], 3).unwrap()
        });
    }

    #[test]
    fn unused_params_get_zero_grad() {
        let mut store = ParamStore::new();
        let a = store.add("a", seeded(1, 2, 1));
        let b = store.add("b", seeded(1, 2, 2));
        let mut tape = Tape::new(&store);
        let va = tape.param(a);
        let y = tape.tanh(va);
        let parts = vec![tape.slice_cols(y, 0, 1), tape.slice_cols(y, 1, 1)];
        let s = tape.sum(parts);
        let g = tape.backward(s);
        assert!(g.get(b).data.iter().all(|&x| x == 0.0));
        assert!(g.get(a).data.iter().all(|&x| x != 0.0));
    }

    #[test]
    fn unfold_shapes() {
        let m = Mat::from_fn(7, 2, |r, c| (r * 2 + c) as f64);
        let u = unfold_value(&m, 3, 2);
        assert_eq!(u.rows, 4);
        assert_eq!(u.cols, 6);
        // row 0 covers input rows -1, 0, 1
        assert_eq!(&u.row(0)[..2], &[0.0, 0.0]);
        assert_eq!(&u.row(0)[2..4], m.row(0));
        assert_eq!(unfold_value(&Mat::zeros(8, 1), 3, 2).rows, 4);
    }
}
