//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation eagerly, so values are available as soon
//! as an op returns. [`Tape::backward`] walks the record in reverse and adds
//! `dLoss/dParam` into the gradient buffers of the [`ParamStore`] the
//! parameters were read from. Gradients accumulate until
//! [`ParamStore::zero_grad`] is called.

use super::tensor::gemm;
use super::{NumericsError, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Elementwise operations exposed through [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Tanh,
}

impl Elementwise {
    pub fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Clamp(Var, f64, f64),
    SliceCols(Var, usize, usize),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize), NumericsError> {
    if t.shape().len() != 2 {
        return Err(NumericsError::Contract(format!(
            "{op} needs a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Numerically stable row-wise softmax of an `n × C` matrix.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = logits.cols();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

impl Tape {
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (no gradient flows into it).
    pub fn input(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Input)
    }

    /// Records the current value of a named parameter of `store`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumericsError> {
        let id = store.id(name)?;
        let mut value = store.by_id(id).clone();
        value.clear_grad();
        Ok(self.push(value, Op::Param(id)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if tb.is_scalar() {
            let y = tb.data()[0];
            let data = ta.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if ta.is_scalar() {
            let x = ta.data()[0];
            let data = tb.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(tb.shape().to_vec(), data)
        } else {
            Err(dim_err(name, ta, tb))
        }
    }

    /// Same-shape or scalar-with-tensor addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a `1 × n` row vector to every row of an `m × n` matrix (linear-layer bias).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (_, n) = require_matrix("add_row", ta)?;
        if tr.len() != n || tr.rows() != 1 {
            return Err(dim_err("add_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(n.max(1)) {
            chunk.iter_mut().zip(tr.data()).for_each(|(v, b)| *v += b);
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// `scale * a + shift`, constants only.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| scale * x + shift).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Affine(a, scale))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.unary(a, sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.unary(a, f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NumericsError> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(NumericsError::Domain {
                op: "log",
                value: bad,
            });
        }
        let out = self.unary(a, f64::ln);
        Ok(self.push(out, Op::Log(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.unary(a, f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Clamps into `[lo, hi]`; gradient passes only where the input is inside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.unary(a, |x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    /// Dispatches one of the named elementwise operations.
    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var, NumericsError> {
        if args.len() != op.arity() {
            return Err(NumericsError::Contract(format!(
                "{op:?} takes {} argument(s), got {}",
                op.arity(),
                args.len()
            )));
        }
        match op {
            Elementwise::Add => self.add(args[0], args[1]),
            Elementwise::Sub => self.sub(args[0], args[1]),
            Elementwise::Mul => self.mul(args[0], args[1]),
            Elementwise::Relu => Ok(self.relu(args[0])),
            Elementwise::Sigmoid => Ok(self.sigmoid(args[0])),
            Elementwise::Exp => Ok(self.exp(args[0])),
            Elementwise::Log => self.log(args[0]),
            Elementwise::Tanh => Ok(self.tanh(args[0])),
        }
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let ta = self.value(a);
        let (m, n) = require_matrix("slice_cols", ta)?;
        if start > end || end > n {
            return Err(NumericsError::Contract(format!(
                "column range {start}..{end} outside width {n}"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&ta.row(i)[start..end]);
        }
        let out = Tensor::new(vec![m, w], data)?;
        Ok(self.push(out, Op::SliceCols(a, start, end)))
    }

    /// Per-row sums: `m × n → m × 1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let ta = self.value(a);
        let (m, n) = require_matrix("row_sum", ta)?;
        let data = (0..m)
            .map(|i| ta.data()[i * n..(i + 1) * n].iter().sum())
            .collect();
        let out = Tensor::new(vec![m, 1], data)?;
        Ok(self.push(out, Op::RowSum(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mean = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(mean), Op::Mean(a))
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<Var, NumericsError> {
        let tl = self.value(logits);
        let (n, c) = require_matrix("softmax_cross_entropy", tl)?;
        if labels.len() != n {
            return Err(NumericsError::Contract(format!(
                "{} labels for {n} rows of logits",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(NumericsError::Index {
                index: bad,
                bound: c,
            });
        }
        let probs = softmax_rows(tl);
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = tl.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        let loss = if n == 0 { 0.0 } else { loss / n as f64 };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs: probs.into_data(),
            },
        ))
    }

    /// Back-propagates from a scalar `loss`, adding parameter gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), NumericsError> {
        if !self.value(loss).is_scalar() {
            return Err(NumericsError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => store.by_id_mut(*id).accumulate_grad(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, &g, false, tb.data(), true, &mut da, false);
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, &g, false, &mut db, false);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    let gb = reduce_for(self.value(*b), &g);
                    accumulate(&mut grads, *a, reduce_for(self.value(*a), &g));
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    let gb: Vec<f64> = reduce_for(self.value(*b), &g).iter().map(|v| -v).collect();
                    accumulate(&mut grads, *a, reduce_for(self.value(*a), &g));
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let n = node.value.len();
                    let at = |t: &Tensor, j: usize| {
                        if t.is_scalar() {
                            t.data()[0]
                        } else {
                            t.data()[j]
                        }
                    };
                    let ga: Vec<f64> = (0..n).map(|j| g[j] * at(tb, j)).collect();
                    let gb: Vec<f64> = (0..n).map(|j| g[j] * at(ta, j)).collect();
                    accumulate(&mut grads, *a, reduce_for(ta, &ga));
                    accumulate(&mut grads, *b, reduce_for(tb, &gb));
                }
                Op::AddRow(a, row) => {
                    let n = self.value(*row).len();
                    let mut gr = vec![0.0; n];
                    for chunk in g.chunks(n.max(1)) {
                        gr.iter_mut().zip(chunk).for_each(|(r, v)| *r += v);
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *row, gr);
                }
                Op::Affine(a, scale) => {
                    accumulate(&mut grads, *a, g.iter().map(|v| v * scale).collect());
                }
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let d = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    accumulate(
                        &mut grads,
                        *a,
                        g.iter().zip(y).map(|(g, y)| g * y).collect(),
                    );
                }
                Op::Log(a) => {
                    let x = self.value(*a).data();
                    accumulate(
                        &mut grads,
                        *a,
                        g.iter().zip(x).map(|(g, x)| g / x).collect(),
                    );
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let d = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a).data();
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(g, x)| if x >= lo && x <= hi { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::SliceCols(a, start, end) => {
                    let ta = self.value(*a);
                    let (m, n) = (ta.rows(), ta.cols());
                    let w = end - start;
                    let mut d = vec![0.0; m * n];
                    for r in 0..m {
                        d[r * n + start..r * n + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::RowSum(a) => {
                    let n = self.value(*a).cols();
                    let d = g.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    accumulate(&mut grads, *a, vec![g[0]; self.value(*a).len()]);
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0] / len.max(1) as f64; len]);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let n = labels.len().max(1) as f64;
                    let c = self.value(*logits).cols();
                    let mut d: Vec<f64> = probs.iter().map(|p| p * g[0] / n).collect();
                    for (i, &label) in labels.iter().enumerate() {
                        d[i * c + label] -= g[0] / n;
                    }
                    accumulate(&mut grads, *logits, d);
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(g, d)| *g += d),
        slot @ None => *slot = Some(delta),
    }
}

/// Sums a broadcast gradient back down to a scalar operand.
fn reduce_for(operand: &Tensor, g: &[f64]) -> Vec<f64> {
    if operand.len() == g.len() {
        g.to_vec()
    } else {
        vec![g.iter().sum()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, t).unwrap();
        s
    }

    #[test]
    fn sigmoid_and_relu_values() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![3], vec![0.0, -3.0, 2.0]).unwrap());
        let s = tape.sigmoid(x);
        let r = tape.relu(x);
        assert_eq!(tape.value(s).data()[0], 0.5);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut store = store_with("x", Tensor::scalar(0.0));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x").unwrap();
        let y = tape.sigmoid(x);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get("x").unwrap().grad().unwrap(), &[0.25]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut store = store_with("x", Tensor::scalar(0.0));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x").unwrap();
        let y = tape.relu(x);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get("x").unwrap().grad().unwrap(), &[0.0]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![2], vec![1.0, 0.0]).unwrap());
        assert!(matches!(tape.log(x), Err(NumericsError::Domain { .. })));
    }

    #[test]
    fn incompatible_shapes_rejected() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::zeros(vec![2, 2]));
        let b = tape.input(Tensor::zeros(vec![2, 3]));
        assert!(matches!(
            tape.add(a, b),
            Err(NumericsError::Dimension { .. })
        ));
        let s = tape.input(Tensor::scalar(2.0));
        let c = tape.mul(a, s).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 2]);
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::new();
        let l = tape.input(Tensor::from_rows(&[[0.0, 0.0]]).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[0]).unwrap();
        assert!((tape.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);

        let l = tape.input(Tensor::from_rows(&[[1000.0, 0.0]]).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[0]).unwrap();
        let v = tape.value(loss).data()[0];
        assert!(v.is_finite() && v.abs() < 1e-12);

        assert!(matches!(
            tape.softmax_cross_entropy(l, &[2]),
            Err(NumericsError::Index { index: 2, bound: 2 })
        ));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let a = tape.input(Tensor::zeros(vec![2]));
        assert!(tape.backward(a, &mut store).is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = store_with("x", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x").unwrap();
        let y = tape.mul(x, x).unwrap();
        tape.backward(y, &mut store).unwrap();
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get("x").unwrap().grad().unwrap(), &[12.0]);
        store.zero_grad();
        assert_eq!(store.get("x").unwrap().grad().unwrap(), &[0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = Tensor::from_rows(&[[1.0, 2.0, 3.0], [-50.0, 0.0, 700.0]]).unwrap();
        let p = softmax_rows(&t);
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
