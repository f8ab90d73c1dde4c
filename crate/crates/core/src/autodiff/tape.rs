use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Unary(Unary, Var),
    Affine { x: Var, scale: f64 },
    Softmax { x: Var, axis: usize },
    Concat(Vec<Var>),
    StackCols(Vec<Var>),
    AddColBroadcast { m: Var, v: Var },
    Sum(Var),
    SumAxis { x: Var, axis: usize },
    Row { m: Var, row: usize },
    DivScalar { x: Var, s: Var },
    NllSoftmax { logits: Var, target: usize },
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
}

/// Append-only record of a forward pass.
///
/// Nodes are stored in creation order, so parents always precede children and
/// the storage order is already a topological order. Leaves may borrow their
/// value (model parameters are bound without copying).
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    /// Leaf holding an owned value (inputs, constants).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: Value::Owned(t), op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Leaf borrowing a value that outlives the tape (parameters).
    pub fn bind(&mut self, t: &'p Tensor) -> Var {
        self.nodes.push(Node { value: Value::Borrowed(t), op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, t: Tensor, op: Op) -> Result<Var, AutodiffError> {
        if !t.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        self.nodes.push(Node { value: Value::Owned(t), op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Matrix product. Rank-1 operands act as a column (right) or row (left)
    /// vector and the corresponding output axis is dropped.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = match (ta.shape(), tb.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                let (ad, bd) = (ta.data(), tb.data());
                for i in 0..m {
                    let row = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                            *o += aip * bv;
                        }
                    }
                }
                Tensor::from_parts(vec![m, n], out)
            }
            (&[m, k], &[k2]) if k == k2 => {
                let (ad, bd) = (ta.data(), tb.data());
                let out = (0..m).map(|i| dot(&ad[i * k..(i + 1) * k], bd)).collect();
                Tensor::from_parts(vec![m], out)
            }
            (&[k], &[k2, n]) if k == k2 => {
                let (ad, bd) = (ta.data(), tb.data());
                let mut out = vec![0.0; n];
                for p in 0..k {
                    for (o, &bv) in out.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                        *o += ad[p] * bv;
                    }
                }
                Tensor::from_parts(vec![n], out)
            }
            (sa, sb) => {
                return Err(AutodiffError::shape("matmul", format!("{sa:?} x {sb:?}")));
            }
        };
        self.push("matmul", out, Op::MatMul(a, b))
    }

    fn zip_same(&self, name: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::shape(name, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("add", out, Op::Add(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.unary(Unary::Sigmoid, x)
    }

    fn unary(&mut self, f: Unary, x: Var) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let data = match f {
            Unary::Tanh => t.data().iter().map(|v| v.tanh()).collect(),
            Unary::Sigmoid => t.data().iter().map(|&v| sigmoid(v)).collect(),
        };
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        let name = match f {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
        };
        self.push(name, out, Op::Unary(f, x))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let data = t.data().iter().map(|v| scale * v + shift).collect();
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        self.push("affine", out, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.affine(x, c, 0.0)
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let (outer, len, stride) = axis_layout("softmax", t.shape(), axis)?;
        let mut out = t.data().to_vec();
        for o in 0..outer {
            for s in 0..stride {
                let idx = |i: usize| o * len * stride + i * stride + s;
                let max = (0..len).map(|i| out[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for i in 0..len {
                    let e = (out[idx(i)] - max).exp();
                    out[idx(i)] = e;
                    total += e;
                }
                for i in 0..len {
                    out[idx(i)] /= total;
                }
            }
        }
        let out = Tensor::from_parts(t.shape().to_vec(), out);
        self.push("softmax", out, Op::Softmax { x, axis })
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::shape("concat", "no inputs".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(AutodiffError::shape("concat", format!("rank-{} input", t.rank())));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_parts(vec![data.len()], data);
        self.push("concat", out, Op::Concat(parts.to_vec()))
    }

    /// Stacks equal-length vectors as the columns of a matrix.
    pub fn stack_cols(&mut self, cols: &[Var]) -> Result<Var, AutodiffError> {
        let first = cols.first().ok_or_else(|| AutodiffError::shape("stack_cols", "no inputs".into()))?;
        let n = self.value(*first).len();
        let k = cols.len();
        let mut data = vec![0.0; n * k];
        for (j, &c) in cols.iter().enumerate() {
            let t = self.value(c);
            if t.rank() != 1 || t.len() != n {
                return Err(AutodiffError::shape(
                    "stack_cols",
                    format!("column {j} has shape {:?}, expected [{n}]", t.shape()),
                ));
            }
            for (i, &v) in t.data().iter().enumerate() {
                data[i * k + j] = v;
            }
        }
        let out = Tensor::from_parts(vec![n, k], data);
        self.push("stack_cols", out, Op::StackCols(cols.to_vec()))
    }

    /// Adds vector `v` (length n) to every column of matrix `m` (n×k).
    pub fn add_col_broadcast(&mut self, m: Var, v: Var) -> Result<Var, AutodiffError> {
        let (tm, tv) = (self.value(m), self.value(v));
        let (n, k) = match (tm.shape(), tv.shape()) {
            (&[n, k], &[n2]) if n == n2 => (n, k),
            (sm, sv) => return Err(AutodiffError::shape("add_col_broadcast", format!("{sm:?} + {sv:?}"))),
        };
        let mut data = tm.data().to_vec();
        for i in 0..n {
            let vi = tv.data()[i];
            data[i * k..(i + 1) * k].iter_mut().for_each(|x| *x += vi);
        }
        let out = Tensor::from_parts(vec![n, k], data);
        self.push("add_col_broadcast", out, Op::AddColBroadcast { m, v })
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    /// Sums a matrix along `axis`, dropping it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let (rows, cols) = match t.shape() {
            &[r, c] if axis < 2 => (r, c),
            s => return Err(AutodiffError::shape("sum_axis", format!("{s:?} axis {axis}"))),
        };
        let out = if axis == 0 {
            let mut o = vec![0.0; cols];
            for i in 0..rows {
                for j in 0..cols {
                    o[j] += t.at(i, j);
                }
            }
            o
        } else {
            (0..rows).map(|i| t.data()[i * cols..(i + 1) * cols].iter().sum()).collect()
        };
        let out = Tensor::vector(out);
        self.push("sum_axis", out, Op::SumAxis { x, axis })
    }

    /// Row `row` of a matrix as a vector (embedding lookup).
    pub fn row(&mut self, m: Var, row: usize) -> Result<Var, AutodiffError> {
        let t = self.value(m);
        let cols = match t.shape() {
            &[r, c] if row < r => c,
            s => return Err(AutodiffError::shape("row", format!("row {row} of {s:?}"))),
        };
        let out = Tensor::vector(t.data()[row * cols..(row + 1) * cols].to_vec());
        self.push("row", out, Op::Row { m, row })
    }

    /// Divides every entry of `x` by the single-element `s`.
    pub fn div_scalar(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        if self.value(s).len() != 1 {
            return Err(AutodiffError::shape("div_scalar", format!("divisor shape {:?}", self.value(s).shape())));
        }
        let d = self.value(s).item();
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v / d).collect());
        self.push("div_scalar", out, Op::DivScalar { x, s })
    }

    /// `-log softmax(logits)[target]` for a logit vector, computed stably.
    pub fn nll_softmax(&mut self, logits: Var, target: usize) -> Result<Var, AutodiffError> {
        let t = self.value(logits);
        if t.rank() != 1 || target >= t.len() {
            return Err(AutodiffError::shape("nll_softmax", format!("target {target} for logits {:?}", t.shape())));
        }
        let lse = log_sum_exp(t.data());
        let out = Tensor::scalar(lse - t.data()[target]);
        self.push("nll_softmax", out, Op::NllSoftmax { logits, target })
    }

    /// Reverse sweep from a single-element `loss`. Gradients of every node that
    /// reaches the loss are returned; nothing on the tape is modified.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutodiffError::NotScalar { shape: lt.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_parts(lt.shape().to_vec(), vec![1.0]));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                match (ta.shape(), tb.shape()) {
                    (&[m, k], &[_, n]) => {
                        let (ad, bd) = (ta.data(), tb.data());
                        {
                            // ga += g · bᵀ
                            let ga = grad_slot(grads, *a, ta);
                            for r in 0..m {
                                let grow = &gd[r * n..(r + 1) * n];
                                for p in 0..k {
                                    ga[r * k + p] += dot(grow, &bd[p * n..(p + 1) * n]);
                                }
                            }
                        }
                        // gb += aᵀ · g
                        let gb = grad_slot(grads, *b, tb);
                        for r in 0..m {
                            let grow = &gd[r * n..(r + 1) * n];
                            for p in 0..k {
                                let arp = ad[r * k + p];
                                if arp == 0.0 {
                                    continue;
                                }
                                for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += arp * gv;
                                }
                            }
                        }
                    }
                    (&[m, k], &[_]) => {
                        let (ad, bd) = (ta.data(), tb.data());
                        {
                            let ga = grad_slot(grads, *a, ta);
                            for r in 0..m {
                                let gr = gd[r];
                                if gr == 0.0 {
                                    continue;
                                }
                                for (o, &bv) in ga[r * k..(r + 1) * k].iter_mut().zip(bd) {
                                    *o += gr * bv;
                                }
                            }
                        }
                        let gb = grad_slot(grads, *b, tb);
                        for r in 0..m {
                            let gr = gd[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for (o, &av) in gb.iter_mut().zip(&ad[r * k..(r + 1) * k]) {
                                *o += gr * av;
                            }
                        }
                    }
                    (&[k], &[_, n]) => {
                        let (ad, bd) = (ta.data(), tb.data());
                        {
                            let ga = grad_slot(grads, *a, ta);
                            for p in 0..k {
                                ga[p] += dot(&bd[p * n..(p + 1) * n], gd);
                            }
                        }
                        let gb = grad_slot(grads, *b, tb);
                        for p in 0..k {
                            let ap = ad[p];
                            if ap == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(gd) {
                                *o += ap * gv;
                            }
                        }
                    }
                    _ => unreachable!("matmul shapes validated in forward"),
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let slot = grad_slot(grads, v, self.value(v));
                    slot.iter_mut().zip(gd).for_each(|(o, g)| *o += g);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                {
                    let ga = grad_slot(grads, *a, self.value(*a));
                    for ((o, g), bv) in ga.iter_mut().zip(gd).zip(bd) {
                        *o += g * bv;
                    }
                }
                let gb = grad_slot(grads, *b, self.value(*b));
                for ((o, g), av) in gb.iter_mut().zip(gd).zip(ad) {
                    *o += g * av;
                }
            }
            Op::Unary(f, x) => {
                let y = self.value(Var(i)).data();
                let gx = grad_slot(grads, *x, self.value(*x));
                match f {
                    Unary::Tanh => {
                        for ((o, g), yv) in gx.iter_mut().zip(gd).zip(y) {
                            *o += g * (1.0 - yv * yv);
                        }
                    }
                    Unary::Sigmoid => {
                        for ((o, g), yv) in gx.iter_mut().zip(gd).zip(y) {
                            *o += g * yv * (1.0 - yv);
                        }
                    }
                }
            }
            Op::Affine { x, scale } => {
                let gx = grad_slot(grads, *x, self.value(*x));
                gx.iter_mut().zip(gd).for_each(|(o, g)| *o += scale * g);
            }
            Op::Softmax { x, axis } => {
                let yt = self.value(Var(i));
                let (outer, len, stride) = axis_layout("softmax", yt.shape(), *axis).expect("validated in forward");
                let y = yt.data();
                let gx = grad_slot(grads, *x, self.value(*x));
                for o in 0..outer {
                    for s in 0..stride {
                        let idx = |j: usize| o * len * stride + j * stride + s;
                        let inner: f64 = (0..len).map(|j| gd[idx(j)] * y[idx(j)]).sum();
                        for j in 0..len {
                            gx[idx(j)] += y[idx(j)] * (gd[idx(j)] - inner);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    let gp = grad_slot(grads, p, self.value(p));
                    gp.iter_mut().zip(&gd[off..off + n]).for_each(|(o, g)| *o += g);
                    off += n;
                }
            }
            Op::StackCols(cols) => {
                let k = cols.len();
                for (j, &c) in cols.iter().enumerate() {
                    let gc = grad_slot(grads, c, self.value(c));
                    for (r, o) in gc.iter_mut().enumerate() {
                        *o += gd[r * k + j];
                    }
                }
            }
            Op::AddColBroadcast { m, v } => {
                let k = self.value(*m).shape()[1];
                {
                    let gm = grad_slot(grads, *m, self.value(*m));
                    gm.iter_mut().zip(gd).for_each(|(o, g)| *o += g);
                }
                let gv = grad_slot(grads, *v, self.value(*v));
                for (r, o) in gv.iter_mut().enumerate() {
                    *o += gd[r * k..(r + 1) * k].iter().sum::<f64>();
                }
            }
            Op::Sum(x) => {
                let g0 = gd[0];
                let gx = grad_slot(grads, *x, self.value(*x));
                gx.iter_mut().for_each(|o| *o += g0);
            }
            Op::SumAxis { x, axis } => {
                let cols = self.value(*x).shape()[1];
                let gx = grad_slot(grads, *x, self.value(*x));
                for (idx, o) in gx.iter_mut().enumerate() {
                    let (r, c) = (idx / cols, idx % cols);
                    *o += if *axis == 0 { gd[c] } else { gd[r] };
                }
            }
            Op::Row { m, row } => {
                let cols = self.value(*m).shape()[1];
                let gm = grad_slot(grads, *m, self.value(*m));
                gm[row * cols..(row + 1) * cols].iter_mut().zip(gd).for_each(|(o, g)| *o += g);
            }
            Op::DivScalar { x, s } => {
                let d = self.value(*s).item();
                let xd = self.value(*x).data();
                let gs_total: f64 = gd.iter().zip(xd).map(|(g, xv)| g * xv).sum::<f64>() / (d * d);
                {
                    let gx = grad_slot(grads, *x, self.value(*x));
                    gx.iter_mut().zip(gd).for_each(|(o, g)| *o += g / d);
                }
                let gs = grad_slot(grads, *s, self.value(*s));
                gs[0] -= gs_total;
            }
            Op::NllSoftmax { logits, target } => {
                let l = self.value(*logits).data();
                let lse = log_sum_exp(l);
                let g0 = gd[0];
                let gl = grad_slot(grads, *logits, self.value(*logits));
                for (j, (o, &lv)) in gl.iter_mut().zip(l).enumerate() {
                    let p = (lv - lse).exp();
                    *o += g0 * (p - if j == *target { 1.0 } else { 0.0 });
                }
            }
        }
    }
}

fn grad_slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, like: &Tensor) -> &'g mut [f64] {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.shape())).data_mut()
}

/// (outer, len, stride) decomposition for reducing along `axis`.
fn axis_layout(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize), AutodiffError> {
    if axis >= shape.len() {
        return Err(AutodiffError::shape(op, format!("axis {axis} of {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let stride = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], stride))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
