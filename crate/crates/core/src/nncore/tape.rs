//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends a node holding its forward value and the ids it read. The
//! backward pass walks the tape in reverse and accumulates gradients; all
//! reductions run in a fixed order so repeated runs are bit-identical.

use std::sync::Arc;

use super::resample::Resampler;
use super::{NnError, Tensor};

/// Layer-norm variance epsilon.
pub const LN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Relu(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Resample {
        x: Var,
        map: Arc<Resampler>,
    },
    WeightedSum {
        x: Var,
        weights: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where no gradient flowed.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> NnError {
    NnError::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `a · b` for rank-2 operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.value(a).dims2()?;
        let (k2, m) = self.value(b).dims2()?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        Ok(self.push(Tensor::new([n, m], out)?, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a length-`C` vector to every row of an `N × C` tensor.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (_, c) = self.value(x).dims2()?;
        if self.value(bias).len() != c {
            return Err(shape_err("add_row", self.shape(x), self.shape(bias)));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_mut(c) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, NnError> {
        let (r, c) = self.value(x).dims2()?;
        let out = transpose_raw(self.value(x).data(), r, c);
        Ok(self.push(Tensor::new([c, r], out)?, Op::Transpose(x)))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, NnError> {
        let (_, m) = self.value(x).dims2()?;
        let mut out = self.value(x).clone();
        if m > 0 {
            for row in out.data_mut().chunks_mut(m) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// Per-row normalization to zero mean and unit variance, then `γ ⊙ x̂ + β`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, NnError> {
        let (n, c) = self.value(x).dims2()?;
        if c == 0 {
            return Err(NnError::Argument(
                "layer_norm needs at least one channel".into(),
            ));
        }
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(shape_err("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; n * c];
        let mut rstd = vec![0.0; n];
        let mut out = vec![0.0; n * c];
        for i in 0..n {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = r;
            for j in 0..c {
                let h = (row[j] - mean) * r;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        let value = Tensor::new([n, c], out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// Columns `[start, start + len)` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let (n, c) = self.value(x).dims2()?;
        if start + len > c {
            return Err(NnError::Shape(format!(
                "slice_cols {start}+{len} exceeds {c} columns"
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Tensor::new([n, len], out)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = parts
            .first()
            .ok_or_else(|| NnError::Argument("concat of nothing".into()))?;
        let (n, _) = self.value(*first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = self.value(*p).dims2()?;
            if r != n {
                return Err(shape_err("concat_cols", self.shape(*first), self.shape(*p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(
            Tensor::new([n, total], out)?,
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Rows `[start, start + len)` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let (n, c) = self.value(x).dims2()?;
        if start + len > n {
            return Err(NnError::Shape(format!(
                "slice_rows {start}+{len} exceeds {n} rows"
            )));
        }
        let out = self.value(x).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(Tensor::new([len, c], out)?, Op::SliceRows { x, start }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = parts
            .first()
            .ok_or_else(|| NnError::Argument("concat of nothing".into()))?;
        let (_, c) = self.value(*first).dims2()?;
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let (r, pc) = self.value(*p).dims2()?;
            if pc != c {
                return Err(shape_err("concat_rows", self.shape(*first), self.shape(*p)));
            }
            rows += r;
            out.extend_from_slice(self.value(*p).data());
        }
        Ok(self.push(Tensor::new([rows, c], out)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Applies a spatial resampling map to an `H × W × C` tensor.
    pub fn resample(&mut self, x: Var, map: Arc<Resampler>) -> Result<Var, NnError> {
        let out = map.apply(self.value(x))?;
        Ok(self.push(out, Op::Resample { x, map }))
    }

    /// Scalar `Σ weights ⊙ x`.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var, NnError> {
        if weights.shape() != self.shape(x) {
            return Err(shape_err("weighted_sum", self.shape(x), weights.shape()));
        }
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }))
    }

    /// `x W + b` for `x: N × C_in`, `W: C_in × C_out`, `b: C_out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, NnError> {
        if self.value(output).len() != 1 {
            return Err(NnError::Shape(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let seed = Tensor::new(self.shape(output).to_vec(), vec![1.0])?;
        Ok(self.backward_with(output, seed))
    }

    /// Reverse pass seeded with an explicit output gradient.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.value(*a).dims2().expect("rank");
                let (_, m) = self.value(*b).dims2().expect("rank");
                let bt = transpose_raw(self.value(*b).data(), k, m);
                let at = transpose_raw(self.value(*a).data(), n, k);
                let ga = matmul_raw(g.data(), &bt, n, m, k);
                let gb = matmul_raw(&at, g.data(), k, n, m);
                acc(*a, Tensor::new([n, k], ga).expect("shape"));
                acc(*b, Tensor::new([k, m], gb).expect("shape"));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(x, bias) => {
                let c = self.value(*bias).len();
                let mut gb = vec![0.0; c];
                for row in g.data().chunks(c) {
                    for (s, v) in gb.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                acc(*x, g.clone());
                acc(
                    *bias,
                    Tensor::new(self.shape(*bias).to_vec(), gb).expect("shape"),
                );
            }
            Op::Scale(x, s) => {
                let mut t = g.clone();
                t.data_mut().iter_mut().for_each(|v| *v *= s);
                acc(*x, t);
            }
            Op::Transpose(x) => {
                let (r, c) = self.value(*x).dims2().expect("rank");
                acc(
                    *x,
                    Tensor::new([r, c], transpose_raw(g.data(), c, r)).expect("shape"),
                );
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let m = y.shape()[1];
                let mut gx = vec![0.0; y.len()];
                for ((gr, yr), out) in g
                    .data()
                    .chunks(m)
                    .zip(y.data().chunks(m))
                    .zip(gx.chunks_mut(m))
                {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        out[j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*x, Tensor::new(y.shape().to_vec(), gx).expect("shape"));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (n, c) = self.value(*x).dims2().expect("rank");
                let gam = self.value(*gamma).data();
                let mut gg = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                let mut gx = vec![0.0; n * c];
                for i in 0..n {
                    let gy = &g.data()[i * c..(i + 1) * c];
                    let h = &xhat[i * c..(i + 1) * c];
                    let mut mean_d = 0.0;
                    let mut mean_dh = 0.0;
                    for j in 0..c {
                        gg[j] += gy[j] * h[j];
                        gbeta[j] += gy[j];
                        let d = gy[j] * gam[j];
                        mean_d += d;
                        mean_dh += d * h[j];
                    }
                    mean_d /= c as f64;
                    mean_dh /= c as f64;
                    for j in 0..c {
                        let d = gy[j] * gam[j];
                        gx[i * c + j] = rstd[i] * (d - mean_d - h[j] * mean_dh);
                    }
                }
                acc(*x, Tensor::new([n, c], gx).expect("shape"));
                acc(
                    *gamma,
                    Tensor::new(self.shape(*gamma).to_vec(), gg).expect("shape"),
                );
                acc(
                    *beta,
                    Tensor::new(self.shape(*beta).to_vec(), gbeta).expect("shape"),
                );
            }
            Op::Relu(x) => {
                let mut t = g.clone();
                for (v, xv) in t.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if *xv <= 0.0 {
                        *v = 0.0;
                    }
                }
                acc(*x, t);
            }
            Op::SliceCols { x, start } => {
                let (n, c) = self.value(*x).dims2().expect("rank");
                let len = g.shape()[1];
                let mut gx = vec![0.0; n * c];
                for i in 0..n {
                    gx[i * c + start..i * c + start + len]
                        .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                }
                acc(*x, Tensor::new([n, c], gx).expect("shape"));
            }
            Op::ConcatCols(parts) => {
                let n = g.shape()[0];
                let total = g.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    let mut gp = Vec::with_capacity(n * w);
                    for i in 0..n {
                        gp.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                    }
                    acc(*p, Tensor::new([n, w], gp).expect("shape"));
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let (n, c) = self.value(*x).dims2().expect("rank");
                let mut gx = vec![0.0; n * c];
                gx[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*x, Tensor::new([n, c], gx).expect("shape"));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let gp = g.data()[offset..offset + len].to_vec();
                    acc(*p, Tensor::new(self.shape(*p).to_vec(), gp).expect("shape"));
                    offset += len;
                }
            }
            Op::Reshape(x) => {
                acc(
                    *x,
                    g.clone().reshape(self.shape(*x).to_vec()).expect("shape"),
                );
            }
            Op::Resample { x, map } => {
                acc(*x, map.apply_adjoint(g));
            }
            Op::WeightedSum { x, weights } => {
                let s = g.data()[0];
                let mut t = weights.clone();
                t.data_mut().iter_mut().for_each(|v| *v *= s);
                acc(*x, t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_hand_case() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let w = t.leaf(Tensor::eye(2));
        let b = t.leaf(Tensor::new([2], vec![3.0, 3.0]).unwrap());
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[4.0, 5.0]);
    }

    #[test]
    fn matmul_shape_error() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros([2, 3]));
        let b = t.leaf(Tensor::zeros([2, 3]));
        assert!(matches!(t.matmul(a, b), Err(NnError::Shape(_))));
    }

    #[test]
    fn gradient_of_shared_input_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new([1, 1], vec![3.0]).unwrap());
        let y = t.add(x, x).unwrap();
        let loss = t
            .weighted_sum(y, Tensor::new([1, 1], vec![1.0]).unwrap())
            .unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros([2, 2]));
        assert!(t.backward(x).is_err());
    }
}
