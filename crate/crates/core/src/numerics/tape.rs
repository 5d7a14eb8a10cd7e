//! Reverse-mode differentiation over batched matrices.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Parameter
//! tensors are bound by reference and never copied; their gradients are
//! accumulated into flat buffers laid out like the owning [`ParamVector`].

use super::params::{ParamId, ParamVector};
use super::tensor::{matmul, matmul_into, Tensor, TensorRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param { set: usize, offset: usize },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Elu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Slice(Var, usize),
    RowRange(Var, usize),
    Sum(Var),
    RowSum(Var),
    LogSoftmax(Var, usize),
    StraightThrough(Var),
}

struct Node {
    value: Option<Tensor>,
    param: Option<(usize, ParamId)>,
    shape: (usize, usize),
    needs_grad: bool,
    op: Op,
}

pub struct Tape<'a> {
    nodes: Vec<Node>,
    sets: Vec<&'a ParamVector>,
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    params: Vec<Vec<f64>>,
    leaves: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn params(&self, set: SetId) -> &[f64] {
        &self.params[set.0]
    }

    pub fn into_params(mut self, set: SetId) -> Vec<f64> {
        std::mem::take(&mut self.params[set.0])
    }

    /// Gradient with respect to a constant leaf, if it received any.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), sets: Vec::new() }
    }

    pub fn bind(&mut self, params: &'a ParamVector) -> SetId {
        self.sets.push(params);
        SetId(self.sets.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let shape = value.shape();
        let needs_grad = self.op_needs_grad(&op);
        self.nodes.push(Node { value: Some(value), param: None, shape, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].needs_grad = true;
        v
    }

    fn op_needs_grad(&self, op: &Op) -> bool {
        let n = |v: &Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Leaf | Op::Param { .. } => false,
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MulCol(a, b) => n(a) || n(b),
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Elu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Square(a)
            | Op::Slice(a, _)
            | Op::RowRange(a, _)
            | Op::Sum(a)
            | Op::RowSum(a)
            | Op::LogSoftmax(a, _)
            | Op::StraightThrough(a) => n(a),
            Op::Concat(parts) | Op::StackRows(parts) => parts.iter().any(n),
        }
    }

    pub fn param(&mut self, set: SetId, id: ParamId) -> Var {
        let params = self.sets[set.0];
        let shape = params.matrix_dims(id);
        let offset = params.offset(id);
        self.nodes.push(Node { value: None, param: Some((set.0, id)), shape, needs_grad: true, op: Op::Param { set: set.0, offset } });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> TensorRef<'_> {
        let node = &self.nodes[v.0];
        match (&node.value, node.param) {
            (Some(t), _) => t.view(),
            (None, Some((set, id))) => self.sets[set].view(id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        self.value(v).to_tensor()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data[0]
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = self.value(a);
        let t = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&v| f(v)).collect());
        self.push(t, op)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "elementwise shape mismatch");
        let t = Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(y.data).map(|(&u, &v)| f(u, v)).collect());
        self.push(t, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let t = matmul(self.value(a), false, self.value(b), false);
        self.push(t, Op::MatMul(a, b))
    }

    /// Adds a `1 x n` bias to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.rows, 1);
        assert_eq!(xv.cols, bv.cols, "bias width mismatch");
        let mut t = xv.to_tensor();
        for r in 0..t.rows() {
            for (o, b) in t.row_mut(r).iter_mut().zip(bv.data) {
                *o += b;
            }
        }
        self.push(t, Op::AddBias(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |u, v| u + v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |u, v| u - v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |u, v| u * v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |u, v| u / v, Op::Div(a, b))
    }

    /// Multiplies each row of `x` by the matching entry of the column `c`.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(c));
        assert_eq!(cv.cols, 1);
        assert_eq!(cv.rows, xv.rows);
        let mut t = xv.to_tensor();
        for r in 0..t.rows() {
            let s = cv.data[r];
            t.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        self.push(t, Op::MulCol(x, c))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |v| v * s, Op::Scale(a, s))
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |v| v + s, Op::Offset(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, elu, Op::Elu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |v| v * v, Op::Square(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<Tensor> = parts.iter().map(|&p| self.to_tensor(p)).collect();
        let refs: Vec<&Tensor> = views.iter().collect();
        let t = Tensor::concat_cols(&refs);
        self.push(t, Op::Concat(parts.to_vec()))
    }

    /// Vertical concatenation of equally wide nodes.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<Tensor> = parts.iter().map(|&p| self.to_tensor(p)).collect();
        let refs: Vec<&Tensor> = views.iter().collect();
        let t = Tensor::concat_rows(&refs);
        self.push(t, Op::StackRows(parts.to_vec()))
    }

    /// Rows `start..start + len` of `a`.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a);
        let t = Tensor::from_vec(len, v.cols, v.data[start * v.cols..(start + len) * v.cols].to_vec());
        self.push(t, Op::RowRange(a, start))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a).to_tensor().slice_cols(start, len);
        self.push(t, Op::Slice(a, start))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data.iter().sum();
        self.push(Tensor::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let s = self.sum(a);
        self.scale(s, 1.0 / (r * c).max(1) as f64)
    }

    /// Per-row sum as a `rows x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows).map(|r| x.data[r * x.cols..(r + 1) * x.cols].iter().sum()).collect();
        let t = Tensor::from_vec(x.rows, 1, data);
        self.push(t, Op::RowSum(a))
    }

    /// Log-softmax over consecutive column groups of width `group`.
    pub fn log_softmax(&mut self, a: Var, group: usize) -> Var {
        let x = self.value(a);
        assert!(group > 0 && x.cols.is_multiple_of(group), "column count must be a multiple of the group width");
        let mut t = x.to_tensor();
        for chunk in t.data_mut().chunks_mut(group) {
            let m = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + chunk.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            chunk.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(t, Op::LogSoftmax(a, group))
    }

    /// Forward value is `one_hot`; the gradient flows to `probs` unchanged.
    pub fn straight_through(&mut self, probs: Var, one_hot: Tensor) -> Var {
        assert_eq!(self.shape(probs), one_hot.shape());
        self.push(one_hot, Op::StraightThrough(probs))
    }

    /// Gradients of the `1 x 1` node `loss` with respect to every bound
    /// parameter set and every constant leaf.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "loss must be a scalar");
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        let mut params: Vec<Vec<f64>> = self.sets.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut leaves: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        let needs: Vec<bool> = self.nodes[..n].iter().map(|node| node.needs_grad).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => leaves[i] = Some(g),
                Op::Param { set, offset } => {
                    let dst = &mut params[*set][*offset..*offset + g.data().len()];
                    dst.iter_mut().zip(g.data()).for_each(|(d, s)| *d += s);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate_with(&mut grads, &needs, *a, av.rows, av.cols, |dst| matmul_into(g.view(), false, bv, true, dst, 1.0));
                    accumulate_with(&mut grads, &needs, *b, bv.rows, bv.cols, |dst| matmul_into(av, true, g.view(), false, dst, 1.0));
                }
                Op::AddBias(x, b) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        gb.data_mut().iter_mut().zip(g.row(r)).for_each(|(d, s)| *d += s);
                    }
                    accumulate(&mut grads, &needs, *b, gb);
                    accumulate(&mut grads, &needs, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &needs, *b, g.clone());
                    accumulate(&mut grads, &needs, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, &needs, *b, g.map(|v| -v));
                    accumulate(&mut grads, &needs, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, &needs, *a, zip_map(&g, bv.data, |gv, y| gv * y));
                    accumulate(&mut grads, &needs, *b, zip_map(&g, av.data, |gv, x| gv * x));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, &needs, *a, zip_map(&g, bv.data, |gv, y| gv / y));
                    let gb: Vec<f64> = g.data().iter().zip(av.data).zip(bv.data).map(|((gv, x), y)| -gv * x / (y * y)).collect();
                    accumulate(&mut grads, &needs, *b, Tensor::from_vec(g.rows(), g.cols(), gb));
                }
                Op::MulCol(x, c) => {
                    let (xv, cv) = (self.value(*x), self.value(*c));
                    let mut gx = g.clone();
                    let mut gc = Tensor::zeros(g.rows(), 1);
                    for r in 0..g.rows() {
                        let s = cv.data[r];
                        let xr = &xv.data[r * xv.cols..(r + 1) * xv.cols];
                        gc.data_mut()[r] = g.row(r).iter().zip(xr).map(|(a, b)| a * b).sum();
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    }
                    accumulate(&mut grads, &needs, *x, gx);
                    accumulate(&mut grads, &needs, *c, gc);
                }
                Op::Scale(a, s) => accumulate(&mut grads, &needs, *a, g.map(|v| v * s)),
                Op::Offset(a) => accumulate(&mut grads, &needs, *a, g),
                Op::Elu(a) => {
                    let y = self.value(Var(i));
                    let x = self.value(*a);
                    let d: Vec<f64> =
                        g.data().iter().zip(x.data).zip(y.data).map(|((gv, &xv), &yv)| if xv > 0.0 { *gv } else { gv * (yv + 1.0) }).collect();
                    accumulate(&mut grads, &needs, *a, Tensor::from_vec(g.rows(), g.cols(), d));
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i));
                    accumulate(&mut grads, &needs, *a, zip_map(&g, y.data, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(i));
                    accumulate(&mut grads, &needs, *a, zip_map(&g, y.data, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, &needs, *a, zip_map(&g, x.data, |gv, xv| gv * sigmoid(xv)));
                }
                Op::Exp(a) => {
                    let y = self.value(Var(i));
                    accumulate(&mut grads, &needs, *a, zip_map(&g, y.data, |gv, yv| gv * yv));
                }
                Op::Ln(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, &needs, *a, zip_map(&g, x.data, |gv, xv| gv / xv));
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, &needs, *a, zip_map(&g, x.data, |gv, xv| 2.0 * gv * xv));
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        accumulate(&mut grads, &needs, *p, g.slice_cols(start, w));
                        start += w;
                    }
                }
                Op::StackRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let part = Tensor::from_vec(r, c, g.data()[start * c..(start + r) * c].to_vec());
                        accumulate(&mut grads, &needs, *p, part);
                        start += r;
                    }
                }
                Op::RowRange(a, start) => {
                    let (r, c) = self.shape(*a);
                    let (gr, _) = g.shape();
                    accumulate_with(&mut grads, &needs, *a, r, c, |dst| {
                        dst.data_mut()[start * c..(start + gr) * c].iter_mut().zip(g.data()).for_each(|(d, s)| *d += s)
                    });
                }
                Op::Slice(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    let w = g.cols();
                    for row in 0..r {
                        ga.row_mut(row)[*start..*start + w].copy_from_slice(g.row(row));
                    }
                    accumulate(&mut grads, &needs, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, &needs, *a, Tensor::filled(r, c, g.data()[0]));
                }
                Op::RowSum(a) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for row in 0..r {
                        let s = g.data()[row];
                        ga.row_mut(row).iter_mut().for_each(|v| *v = s);
                    }
                    accumulate(&mut grads, &needs, *a, ga);
                }
                Op::LogSoftmax(a, group) => {
                    let y = self.value(Var(i));
                    let mut ga = g.clone();
                    for (gc, yc) in ga.data_mut().chunks_mut(*group).zip(y.data.chunks(*group)) {
                        let total: f64 = gc.iter().sum();
                        gc.iter_mut().zip(yc).for_each(|(gv, yv)| *gv -= yv.exp() * total);
                    }
                    accumulate(&mut grads, &needs, *a, ga);
                }
                Op::StraightThrough(p) => accumulate(&mut grads, &needs, *p, g),
            }
        }
        Gradients { params, leaves }
    }
}

fn zip_map(g: &Tensor, other: &[f64], f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(g.rows(), g.cols(), g.data().iter().zip(other).map(|(&a, &b)| f(a, b)).collect())
}

fn accumulate(grads: &mut [Option<Tensor>], needs: &[bool], v: Var, g: Tensor) {
    if !needs[v.0] {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => existing.data_mut().iter_mut().zip(g.data()).for_each(|(d, s)| *d += s),
        slot => *slot = Some(g),
    }
}

fn accumulate_with(grads: &mut [Option<Tensor>], needs: &[bool], v: Var, rows: usize, cols: usize, f: impl FnOnce(&mut Tensor)) {
    if !needs[v.0] {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols));
    f(slot);
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
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

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::ParamVector;
    use rand::{Rng, SeedableRng};

    fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
        let mut xs = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = xs[i];
                xs[i] = orig + step;
                let up = f(&xs);
                xs[i] = orig - step;
                let down = f(&xs);
                xs[i] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    /// Exercises every op in one scalar expression of a leaf matrix.
    fn all_ops(tape: &mut Tape<'_>, x: Var) -> Var {
        let (r, c) = tape.shape(x);
        let w = tape.constant(Tensor::from_vec(c, 3, (0..c * 3).map(|i| 0.1 * i as f64 - 0.3).collect()));
        let b = tape.constant(Tensor::from_vec(1, 3, vec![0.1, -0.2, 0.3]));
        let h = tape.matmul(x, w);
        let h = tape.add_bias(h, b);
        let e = tape.elu(h);
        let t = tape.tanh(e);
        let s = tape.sigmoid(h);
        let sp = tape.softplus(h);
        let sp = tape.offset(sp, 0.1);
        let q = tape.div(t, sp);
        let m = tape.mul(q, s);
        let ex = tape.exp(m);
        let l = tape.ln(sp);
        let cat = tape.concat(&[ex, l]);
        let top = tape.rows(cat, 0, 1);
        let bottom = tape.rows(cat, 1, r - 1);
        let cat = tape.stack_rows(&[bottom, top]);
        let sl = tape.slice(cat, 1, 4);
        let ls = tape.log_softmax(sl, 2);
        let col = tape.row_sum(ls);
        let sq = tape.square(col);
        let mc = tape.mul_col(sl, sq);
        let diff = tape.sub(mc, sl);
        let tot = tape.add(diff, sl);
        let sc = tape.scale(tot, 0.7);
        tape.mean(sc)
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::filled(2, 2, 1.0));
        let b = tape.variable(Tensor::filled(2, 2, 3.0));
        let p = tape.matmul(a, b);
        let loss = tape.sum(p);
        let grads = tape.backward(loss);
        assert!(grads.wrt(a).is_none());
        assert_eq!(grads.wrt(b).unwrap().data(), &[2.0; 4]);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eval = |xs: &[f64]| {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::from_vec(2, 4, xs.to_vec()));
            let out = all_ops(&mut tape, x);
            tape.scalar(out)
        };
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::from_vec(2, 4, x0.clone()));
        let out = all_ops(&mut tape, x);
        let grads = tape.backward(out);
        let analytic = grads.wrt(x).unwrap().data().to_vec();
        let numeric = central_difference(&eval, &x0, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn param_gradients_accumulate_across_uses() {
        let mut p = ParamVector::new();
        let id = p.add_constant("w", &[2], 1.5);
        let mut tape = Tape::new();
        let set = tape.bind(&p);
        let a = tape.param(set, id);
        let b = tape.param(set, id);
        let m = tape.mul(a, b);
        let s = tape.sum(m);
        let g = tape.backward(s);
        // d/dw sum(w*w) = 2w
        assert_eq!(g.params(set), &[3.0, 3.0]);
    }
}
