//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Nodes are
//! appended in evaluation order, so walking the tape backwards visits every
//! node after all of its consumers.

use std::collections::HashMap;

use rand::Rng;

use super::tensor::{axpy, dot};
use super::{AutodiffError, Gradients, ParamId, ParameterStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Embed { param: ParamId, indices: Vec<usize> },
    Linear { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    Dropout { x: Var, mask: Vec<f64> },
    GatherRows { x: Var, indices: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Var, Var),
    CrossEntropyRows { logits: Var, targets: Vec<usize>, probs: Tensor },
    WeightedSum { x: Var, weights: Tensor },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Labels excluded from the softmax on selected rows.
#[derive(Debug, Clone, Copy)]
pub struct RowMask<'a> {
    /// One flag per label (column).
    pub banned: &'a [bool],
    /// One flag per row: whether `banned` applies.
    pub rows: &'a [bool],
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn mismatch(op: &'static str, left: (usize, usize), right: (usize, usize)) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, left, right }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over `logits`, with `banned` entries forced to probability 0.
pub fn masked_softmax(logits: &[f64], banned: Option<&[bool]>) -> Vec<f64> {
    let allowed = |j: usize| banned.is_none_or(|b| !b[j]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(j, _)| allowed(*j))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(j, v)| if allowed(j) { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    /// Row lookup into a stored embedding matrix. Gradients are recorded per
    /// row, without materializing a dense gradient for the whole table.
    pub fn embed(&mut self, store: &ParameterStore, id: ParamId, indices: &[usize]) -> Result<Var, AutodiffError> {
        let table = store.value(id);
        let mut out = Tensor::zeros(indices.len(), table.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= table.rows() {
                return Err(AutodiffError::IndexOutOfRange { index: i, len: table.rows() });
            }
            out.row_mut(r).copy_from_slice(table.row(i));
        }
        Ok(self.push(
            out,
            Op::Embed {
                param: id,
                indices: indices.to_vec(),
            },
        ))
    }

    /// `x · Wᵀ + b` with `x: n×in`, `W: out×in`, `b: 1×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.1 != ws.1 {
            return Err(mismatch("linear", xs, ws));
        }
        if bs != (1, ws.0) {
            return Err(mismatch("linear bias", ws, bs));
        }
        let mut out = self.value(x).matmul_nt(self.value(w));
        let bias = self.value(b).data().to_vec();
        for r in 0..out.rows() {
            axpy(1.0, &bias, out.row_mut(r));
        }
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(mismatch("matmul", sa, sb));
        }
        let out = self.value(a).matmul(self.value(b));
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(mismatch("matmul_nt", sa, sb));
        }
        let out = self.value(a).matmul_nt(self.value(b));
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_vec(ta.rows(), ta.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds the `1×c` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var, AutodiffError> {
        let (sa, sr) = (self.shape(a), self.shape(r));
        if sr != (1, sa.1) {
            return Err(mismatch("add_row", sa, sr));
        }
        let mut out = self.value(a).clone();
        let row = self.value(r).data().to_vec();
        for i in 0..out.rows() {
            axpy(1.0, &row, out.row_mut(i));
        }
        Ok(self.push(out, Op::AddRow(a, r)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(out, Op::Scale(a, factor))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|v| f(*v)).collect();
        let out = Tensor::from_vec(t.rows(), t.cols(), data);
        self.push(out, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.map(a, gelu, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(t.rows(), t.cols());
        for r in 0..t.rows() {
            out.row_mut(r).copy_from_slice(&masked_softmax(t.row(r), None));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Inverted dropout: kept units are scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.data().len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::from_vec(t.rows(), t.cols(), data);
        self.push(out, Op::Dropout { x, mask })
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let mut out = Tensor::zeros(indices.len(), t.cols());
        for (r, &i) in indices.iter().enumerate() {
            if i >= t.rows() {
                return Err(AutodiffError::IndexOutOfRange { index: i, len: t.rows() });
            }
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Stacks matrices vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let cols = parts.first().map_or(0, |v| self.shape(*v).1);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", (rows, cols), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec())))
    }

    /// Places `b` to the right of `a`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(mismatch("concat_cols", ta.shape(), tb.shape()));
        }
        let mut out = Tensor::zeros(ta.rows(), ta.cols() + tb.cols());
        for r in 0..ta.rows() {
            let row = out.row_mut(r);
            row[..ta.cols()].copy_from_slice(ta.row(r));
            row[ta.cols()..].copy_from_slice(tb.row(r));
        }
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    /// Sum over rows of `-log softmax(logits[r])[targets[r]]`, a `1×1` value.
    ///
    /// With a mask, banned labels are removed from the softmax of the flagged
    /// rows before normalization.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: Option<RowMask<'_>>,
    ) -> Result<Var, AutodiffError> {
        let t = self.value(logits);
        if targets.len() != t.rows() {
            return Err(mismatch("cross_entropy_rows", t.shape(), (targets.len(), 1)));
        }
        if let Some(m) = mask {
            if m.banned.len() != t.cols() || m.rows.len() != t.rows() {
                return Err(mismatch("cross_entropy_rows mask", t.shape(), (m.rows.len(), m.banned.len())));
            }
        }
        let mut probs = Tensor::zeros(t.rows(), t.cols());
        let mut loss = 0.0;
        for (r, &gold) in targets.iter().enumerate() {
            if gold >= t.cols() {
                return Err(AutodiffError::IndexOutOfRange { index: gold, len: t.cols() });
            }
            let banned = mask.filter(|m| m.rows[r]).map(|m| m.banned);
            if banned.is_some_and(|b| b[gold]) {
                return Err(AutodiffError::MaskedTarget { row: r, target: gold });
            }
            let p = masked_softmax(t.row(r), banned);
            loss -= p[gold].ln();
            probs.row_mut(r).copy_from_slice(&p);
        }
        Ok(self.push(
            Tensor::row_vector(vec![loss]),
            Op::CrossEntropyRows {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// `Σ x ⊙ weights`, a `1×1` value. Used to reduce tensors to scalars.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if t.shape() != weights.shape() {
            return Err(mismatch("weighted_sum", t.shape(), weights.shape()));
        }
        let v = dot(t.data(), weights.data());
        Ok(self.push(Tensor::row_vector(vec![v]), Op::WeightedSum { x, weights }))
    }

    /// Sum of `1×1` values.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let mut total = 0.0;
        for p in parts {
            let t = self.value(*p);
            if t.shape() != (1, 1) {
                return Err(mismatch("sum_scalars", t.shape(), (1, 1)));
            }
            total += t.data()[0];
        }
        Ok(self.push(Tensor::row_vector(vec![total]), Op::Sum(parts.to_vec())))
    }

    /// Propagates `seed · ∂loss` back to every parameter reached from `loss`.
    pub fn backward(&self, loss: Var, seed: f64) -> Result<Gradients, AutodiffError> {
        if self.shape(loss) != (1, 1) {
            return Err(mismatch("backward", self.shape(loss), (1, 1)));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::row_vector(vec![seed]));
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.dense.push((*id, dy)),
                Op::Embed { param, indices } => {
                    for (r, &idx) in indices.iter().enumerate() {
                        out.rows.push((*param, idx, dy.row(r).to_vec()));
                    }
                }
                Op::Linear { x, w, b } => {
                    let dx = dy.matmul(self.value(*w));
                    let dw = dy.matmul_tn(self.value(*x));
                    let mut db = Tensor::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        axpy(1.0, dy.row(r), db.data_mut());
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *b, db);
                }
                Op::MatMul(a, b) => {
                    let da = dy.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&dy);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = dy.matmul(self.value(*b));
                    let db = dy.matmul_tn(self.value(*a));
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.clone());
                    acc(&mut grads, *b, dy);
                }
                Op::Sub(a, b) => {
                    let mut neg = dy.clone();
                    neg.data_mut().iter_mut().for_each(|v| *v = -*v);
                    acc(&mut grads, *a, dy);
                    acc(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = elementwise(&dy, tb, |g, v| g * v);
                    let db = elementwise(&dy, ta, |g, v| g * v);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::AddRow(a, r) => {
                    let mut dr = Tensor::zeros(1, dy.cols());
                    for row in 0..dy.rows() {
                        axpy(1.0, dy.row(row), dr.data_mut());
                    }
                    acc(&mut grads, *a, dy);
                    acc(&mut grads, *r, dr);
                }
                Op::Scale(a, f) => {
                    let f = *f;
                    let mut d = dy;
                    d.data_mut().iter_mut().for_each(|v| *v *= f);
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, elementwise(&dy, y, |g, s| g * s * (1.0 - s))),
                Op::Tanh(a) => acc(&mut grads, *a, elementwise(&dy, y, |g, t| g * (1.0 - t * t))),
                Op::Gelu(a) => {
                    let d = elementwise(&dy, self.value(*a), |g, x| g * gelu_grad(x));
                    acc(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let mut dx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), dy.row(r));
                        let inner = dot(yr, gr);
                        for (j, out) in dx.row_mut(r).iter_mut().enumerate() {
                            *out = yr[j] * (gr[j] - inner);
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::Dropout { x, mask } => {
                    let data = dy.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                    acc(&mut grads, *x, Tensor::from_vec(dy.rows(), dy.cols(), data));
                }
                Op::GatherRows { x, indices } => {
                    let (rows, cols) = self.shape(*x);
                    let mut dx = Tensor::zeros(rows, cols);
                    for (r, &i) in indices.iter().enumerate() {
                        axpy(1.0, dy.row(r), dx.row_mut(i));
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.shape(*p);
                        let slice = dy.data()[offset * cols..(offset + rows) * cols].to_vec();
                        acc(&mut grads, *p, Tensor::from_vec(rows, cols, slice));
                        offset += rows;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.shape(*a).1, self.shape(*b).1);
                    let mut da = Tensor::zeros(dy.rows(), ca);
                    let mut db = Tensor::zeros(dy.rows(), cb);
                    for r in 0..dy.rows() {
                        da.row_mut(r).copy_from_slice(&dy.row(r)[..ca]);
                        db.row_mut(r).copy_from_slice(&dy.row(r)[ca..]);
                    }
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::CrossEntropyRows { logits, targets, probs } => {
                    let g = dy.data()[0];
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d.row_mut(r)[t] -= 1.0;
                    }
                    d.data_mut().iter_mut().for_each(|v| *v *= g);
                    acc(&mut grads, *logits, d);
                }
                Op::WeightedSum { x, weights } => {
                    let g = dy.data()[0];
                    let mut d = weights.clone();
                    d.data_mut().iter_mut().for_each(|v| *v *= g);
                    acc(&mut grads, *x, d);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, dy.clone());
                    }
                }
            }
        }
        Ok(out)
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_softmax_renormalizes() {
        let p = masked_softmax(&[1.0, 2.0, 3.0], Some(&[false, true, false]));
        assert_eq!(p[1], 0.0);
        assert!((p[0] + p[2] - 1.0).abs() < 1e-15);
        assert!((p[2] / p[0] - 1f64.exp().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        // x·Φ(x) at x=1: Φ(1)=0.8413447460685429
        assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!((gelu(-1.0) + 1.0 - 0.8413447460685429).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform_is_log_n() {
        let mut g = Graph::new();
        let logits = g.input(Tensor::zeros(1, 4));
        let loss = g.cross_entropy_rows(logits, &[2], None).unwrap();
        assert!((g.value(loss).data()[0] - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn masked_target_is_an_error() {
        let mut g = Graph::new();
        let logits = g.input(Tensor::zeros(1, 3));
        let mask = RowMask {
            banned: &[true, false, false],
            rows: &[true],
        };
        assert!(matches!(
            g.cross_entropy_rows(logits, &[0], Some(mask)),
            Err(AutodiffError::MaskedTarget { .. })
        ));
        let loss = g.cross_entropy_rows(logits, &[1], Some(mask)).unwrap();
        assert!((g.value(loss).data()[0] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn shared_param_leaf_accumulates() {
        let mut store = ParameterStore::new();
        let id = store.add("w", Tensor::row_vector(vec![3.0])).unwrap();
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let prod = g.mul(a, b).unwrap();
        let loss = g.weighted_sum(prod, Tensor::row_vector(vec![1.0])).unwrap();
        let grads = g.backward(loss, 1.0).unwrap();
        store.accumulate(&grads);
        assert_eq!(store.grad(id).data(), &[6.0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(2, 3));
        let b = g.input(Tensor::zeros(3, 2));
        assert!(matches!(g.add(a, b), Err(AutodiffError::ShapeMismatch { .. })));
        assert!(g.matmul(a, b).is_ok());
        assert!(g.matmul_nt(a, b).is_err());
    }
}
