//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied during one forward pass. Leaves
//! are either parameters bound from a [`ParamSet`] or constants. Calling
//! [`Tape::backward`] walks the record in reverse and accumulates gradients
//! into the parameter leaves only; intermediate gradients are scratch and are
//! recomputed on every call.
//!
//! The primitive set is closed: matmul, element-wise add/mul (a `1 x 1`
//! operand broadcasts), relu, sigmoid, tanh, softmax, log, recip, concat,
//! slice, sum, mean and a fused LSTM step. Everything else in the crate is
//! composed from these.

use std::collections::BTreeMap;

use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Reduce / stack down the rows (per column).
    Rows,
    /// Reduce / stack along a row (per row).
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Recip(Var),
    Softmax(Var, Axis),
    Concat(Vec<Var>, Axis),
    Slice { src: Var, axis: Axis, start: usize },
    Sum(Var),
    Mean(Var),
    Lstm(Box<LstmRecord>),
}

#[derive(Debug, Clone)]
struct LstmRecord {
    x: Var,
    h: Var,
    c: Var,
    w_ih: Var,
    w_hh: Var,
    b: Var,
    /// Activated gates laid out as `[i | f | g | o]`.
    gates: Vec<f64>,
    /// `tanh(c')`.
    cell_tanh: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    shape: [usize; 2],
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
    /// Accumulated gradient; only kept for leaves.
    grad: Option<Vec<f64>>,
}

/// Leaf variables created for each parameter of a [`ParamSet`].
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, shape: [usize; 2], value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape[0] * shape[1], value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape[0], n.shape[1], n.value.clone())
            .expect("node shape is consistent")
            .with_requires_grad(false)
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(Error::shape("constant", [rows, cols], [value.len(), 1]));
        }
        Ok(self.push([rows, cols], value, Op::Leaf, false))
    }

    pub fn constant_row(&mut self, value: Vec<f64>) -> Var {
        let cols = value.len();
        self.push([1, cols], value, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Var {
        self.push([1, 1], vec![x], Op::Leaf, false)
    }

    /// A constant copy of `v`: same value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (shape, value) = (n.shape, n.value.clone());
        self.push(shape, value, Op::Leaf, false)
    }

    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), self.leaf(t)))
            .collect();
        Bound { vars }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let [m, k] = self.shape(a);
        let [k2, n] = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul", [m, k], [k2, n]));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(a), self.value(b), m, k, n, &mut out);
        let ng = self.node(a).needs_grad || self.node(b).needs_grad;
        Ok(self.push([m, n], out, Op::MatMul(a, b), ng))
    }

    fn broadcast_shape(&self, op: &'static str, a: Var, b: Var) -> Result<[usize; 2]> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb || sb == [1, 1] {
            Ok(sa)
        } else if sa == [1, 1] {
            Ok(sb)
        } else {
            Err(Error::shape(op, sa, sb))
        }
    }

    fn binary(&mut self, a: Var, b: Var, mul: bool) -> Result<Var> {
        let shape = self.broadcast_shape(if mul { "mul" } else { "add" }, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let f = |x: f64, y: f64| if mul { x * y } else { x + y };
        let out: Vec<f64> = if va.len() == vb.len() {
            va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect()
        } else if vb.len() == 1 {
            va.iter().map(|x| f(*x, vb[0])).collect()
        } else {
            vb.iter().map(|y| f(va[0], *y)).collect()
        };
        let ng = self.node(a).needs_grad || self.node(b).needs_grad;
        let op = if mul { Op::Mul(a, b) } else { Op::Add(a, b) };
        Ok(self.push(shape, out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, false)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, true)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(x);
        let (shape, ng) = (n.shape, n.needs_grad);
        let out = n.value.iter().map(|v| f(*v)).collect();
        self.push(shape, out, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v, Op::Recip(x))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Var {
        let n = self.node(x);
        let (shape, ng) = (n.shape, n.needs_grad);
        let mut out = n.value.clone();
        for_each_line(shape, axis, |idx| softmax_in_place(&mut out, idx));
        self.push(shape, out, Op::Softmax(x, axis), ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
        let [r0, c0] = self.shape(first);
        let mut ng = false;
        let out = match axis {
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let s = self.shape(p);
                    if s[0] != r0 {
                        return Err(Error::shape("concat", [r0, c0], s));
                    }
                    cols += s[1];
                    ng |= self.node(p).needs_grad;
                }
                let mut out = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for &p in parts {
                        let c = self.shape(p)[1];
                        out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
                    }
                }
                (out, [r0, cols])
            }
            Axis::Rows => {
                let mut rows = 0;
                let mut out = Vec::new();
                for &p in parts {
                    let s = self.shape(p);
                    if s[1] != c0 {
                        return Err(Error::shape("concat", [r0, c0], s));
                    }
                    rows += s[0];
                    ng |= self.node(p).needs_grad;
                    out.extend_from_slice(self.value(p));
                }
                (out, [rows, c0])
            }
        };
        Ok(self.push(out.1, out.0, Op::Concat(parts.to_vec(), axis), ng))
    }

    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let [r, c] = self.shape(x);
        let extent = if axis == Axis::Cols { c } else { r };
        if start + len > extent || len == 0 {
            return Err(Error::shape("slice", [r, c], [start, len]));
        }
        let v = self.value(x);
        let (shape, out) = match axis {
            Axis::Cols => {
                let mut out = Vec::with_capacity(r * len);
                for row in 0..r {
                    out.extend_from_slice(&v[row * c + start..row * c + start + len]);
                }
                ([r, len], out)
            }
            Axis::Rows => ([len, c], v[start * c..(start + len) * c].to_vec()),
        };
        let ng = self.node(x).needs_grad;
        Ok(self.push(shape, out, Op::Slice { src: x, axis, start }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let ng = self.node(x).needs_grad;
        self.push([1, 1], vec![s], Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let ng = self.node(x).needs_grad;
        self.push([1, 1], vec![s], Op::Mean(x), ng)
    }

    /// One LSTM step. Returns `(h', c')`, both `1 x hidden`.
    ///
    /// Shapes: `x: 1 x d_in`, `h, c: 1 x hidden`, `w_ih: d_in x 4h`,
    /// `w_hh: hidden x 4h`, `b: 1 x 4h`. Gate order is input, forget, cell,
    /// output.
    pub fn lstm_step(
        &mut self,
        x: Var,
        h: Var,
        c: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
    ) -> Result<(Var, Var)> {
        let sx = self.shape(x);
        let hidden = self.shape(h)[1];
        let four = 4 * hidden;
        let check = |ok: bool, l: [usize; 2], r: [usize; 2]| {
            if ok {
                Ok(())
            } else {
                Err(Error::shape("lstm_step", l, r))
            }
        };
        check(sx[0] == 1, sx, [1, sx[1]])?;
        check(self.shape(h)[0] == 1, self.shape(h), [1, hidden])?;
        check(self.shape(c) == [1, hidden], self.shape(c), [1, hidden])?;
        check(self.shape(w_ih) == [sx[1], four], self.shape(w_ih), [sx[1], four])?;
        check(self.shape(w_hh) == [hidden, four], self.shape(w_hh), [hidden, four])?;
        check(self.shape(b) == [1, four], self.shape(b), [1, four])?;

        let mut z = self.value(b).to_vec();
        gemm(self.value(x), self.value(w_ih), 1, sx[1], four, &mut z);
        gemm(self.value(h), self.value(w_hh), 1, hidden, four, &mut z);
        let mut gates = z;
        for (j, g) in gates.iter_mut().enumerate() {
            *g = if (2 * hidden..3 * hidden).contains(&j) {
                g.tanh()
            } else {
                sigmoid(*g)
            };
        }
        let c_prev = self.value(c);
        let mut out = vec![0.0; 2 * hidden];
        let mut cell_tanh = vec![0.0; hidden];
        for k in 0..hidden {
            let (i, f, g, o) = (
                gates[k],
                gates[hidden + k],
                gates[2 * hidden + k],
                gates[3 * hidden + k],
            );
            let cn = f * c_prev[k] + i * g;
            cell_tanh[k] = cn.tanh();
            out[k] = o * cell_tanh[k];
            out[hidden + k] = cn;
        }
        let ng = [x, h, c, w_ih, w_hh, b]
            .iter()
            .any(|v| self.node(*v).needs_grad);
        let rec = LstmRecord {
            x,
            h,
            c,
            w_ih,
            w_hh,
            b,
            gates,
            cell_tanh,
        };
        let joint = self.push([1, 2 * hidden], out, Op::Lstm(Box::new(rec)), ng);
        let h_next = self.slice(joint, Axis::Cols, 0, hidden)?;
        let c_next = self.slice(joint, Axis::Cols, hidden, hidden)?;
        Ok((h_next, c_next))
    }

    /// Activated `[i | f | g | o]` gates behind an `h'` returned by [`Tape::lstm_step`].
    pub fn lstm_gates(&self, h_next: Var) -> Option<&[f64]> {
        let Op::Slice { src, .. } = &self.node(h_next).op else {
            return None;
        };
        match &self.node(*src).op {
            Op::Lstm(rec) => Some(&rec.gates),
            _ => None,
        }
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Back-propagates from a `1 x 1` loss, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        scratch[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = scratch[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let dst = self.nodes[idx].grad.get_or_insert_with(|| vec![0.0; g.len()]);
                for (d, x) in dst.iter_mut().zip(&g) {
                    *d += x;
                }
                continue;
            }
            self.propagate(idx, &g, &mut scratch);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let len = nodes[v.0].value.len();
            let buf = scratch[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let [m, k] = nodes[a.0].shape;
                let n = nodes[b.0].shape[1];
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                send(*a, &mut |da| gemm_a_bt(g, vb, m, n, k, da));
                send(*b, &mut |db| gemm_at_b(va, g, m, k, n, db));
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    send(v, &mut |d| {
                        if d.len() == g.len() {
                            for (x, y) in d.iter_mut().zip(g) {
                                *x += y;
                            }
                        } else {
                            d[0] += g.iter().sum::<f64>();
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    let ov = &nodes[other.0].value;
                    send(v, &mut |d| {
                        if d.len() == g.len() {
                            if ov.len() == g.len() {
                                for ((x, y), o) in d.iter_mut().zip(g).zip(ov) {
                                    *x += y * o;
                                }
                            } else {
                                for (x, y) in d.iter_mut().zip(g) {
                                    *x += y * ov[0];
                                }
                            }
                        } else {
                            d[0] += g.iter().zip(ov).map(|(y, o)| y * o).sum::<f64>();
                        }
                    });
                }
            }
            Op::Relu(x) => {
                let xv = &nodes[x.0].value;
                send(*x, &mut |d| {
                    for ((dx, gy), xi) in d.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *dx += gy;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                send(*x, &mut |d| {
                    for ((dx, gy), yi) in d.iter_mut().zip(g).zip(y) {
                        *dx += gy * yi * (1.0 - yi);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value;
                send(*x, &mut |d| {
                    for ((dx, gy), yi) in d.iter_mut().zip(g).zip(y) {
                        *dx += gy * (1.0 - yi * yi);
                    }
                });
            }
            Op::Log(x) => {
                let xv = &nodes[x.0].value;
                send(*x, &mut |d| {
                    for ((dx, gy), xi) in d.iter_mut().zip(g).zip(xv) {
                        *dx += gy / xi;
                    }
                });
            }
            Op::Recip(x) => {
                let y = &node.value;
                send(*x, &mut |d| {
                    for ((dx, gy), yi) in d.iter_mut().zip(g).zip(y) {
                        *dx -= gy * yi * yi;
                    }
                });
            }
            Op::Softmax(x, axis) => {
                let y = &node.value;
                send(*x, &mut |d| {
                    for_each_line(node.shape, *axis, |line| {
                        let dot: f64 = line.clone().map(|i| g[i] * y[i]).sum();
                        for i in line {
                            d[i] += y[i] * (g[i] - dot);
                        }
                    });
                });
            }
            Op::Concat(parts, axis) => {
                let cols = node.shape[1];
                let mut offset = 0;
                for p in parts {
                    let [pr, pc] = nodes[p.0].shape;
                    send(*p, &mut |d| match axis {
                        Axis::Cols => {
                            for r in 0..pr {
                                let src = &g[r * cols + offset..r * cols + offset + pc];
                                for (x, y) in d[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                    *x += y;
                                }
                            }
                        }
                        Axis::Rows => {
                            let src = &g[offset * cols..(offset + pr) * cols];
                            for (x, y) in d.iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    });
                    offset += if *axis == Axis::Cols { pc } else { pr };
                }
            }
            Op::Slice { src, axis, start } => {
                let [sr, sc] = nodes[src.0].shape;
                let [r, c] = node.shape;
                send(*src, &mut |d| match axis {
                    Axis::Cols => {
                        for row in 0..sr {
                            let dst = &mut d[row * sc + start..row * sc + start + c];
                            for (x, y) in dst.iter_mut().zip(&g[row * c..(row + 1) * c]) {
                                *x += y;
                            }
                        }
                    }
                    Axis::Rows => {
                        let dst = &mut d[start * sc..(start + r) * sc];
                        for (x, y) in dst.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                send(*x, &mut |d| {
                    for v in d.iter_mut() {
                        *v += g[0];
                    }
                });
            }
            Op::Mean(x) => {
                let n = nodes[x.0].value.len() as f64;
                send(*x, &mut |d| {
                    for v in d.iter_mut() {
                        *v += g[0] / n;
                    }
                });
            }
            Op::Lstm(rec) => {
                let hidden = nodes[rec.h.0].shape[1];
                let d_in = nodes[rec.x.0].shape[1];
                let gates = &rec.gates;
                let c_prev = &nodes[rec.c.0].value;
                let (dh, dc_out) = g.split_at(hidden);
                let mut dz = vec![0.0; 4 * hidden];
                let mut dc_prev = vec![0.0; hidden];
                for k in 0..hidden {
                    let (i, f, gg, o) = (
                        gates[k],
                        gates[hidden + k],
                        gates[2 * hidden + k],
                        gates[3 * hidden + k],
                    );
                    let tc = rec.cell_tanh[k];
                    let d_o = dh[k] * tc;
                    let dc = dc_out[k] + dh[k] * o * (1.0 - tc * tc);
                    dz[k] = dc * gg * i * (1.0 - i);
                    dz[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
                    dz[2 * hidden + k] = dc * i * (1.0 - gg * gg);
                    dz[3 * hidden + k] = d_o * o * (1.0 - o);
                    dc_prev[k] = dc * f;
                }
                let four = 4 * hidden;
                let (w_ih, w_hh) = (&nodes[rec.w_ih.0].value, &nodes[rec.w_hh.0].value);
                let (xv, hv) = (&nodes[rec.x.0].value, &nodes[rec.h.0].value);
                send(rec.x, &mut |d| gemm_a_bt(&dz, w_ih, 1, four, d_in, d));
                send(rec.h, &mut |d| gemm_a_bt(&dz, w_hh, 1, four, hidden, d));
                send(rec.c, &mut |d| {
                    for (x, y) in d.iter_mut().zip(&dc_prev) {
                        *x += y;
                    }
                });
                send(rec.w_ih, &mut |d| gemm_at_b(xv, &dz, 1, d_in, four, d));
                send(rec.w_hh, &mut |d| gemm_at_b(hv, &dz, 1, hidden, four, d));
                send(rec.b, &mut |d| {
                    for (x, y) in d.iter_mut().zip(&dz) {
                        *x += y;
                    }
                });
            }
        }
    }

    /// Copies leaf gradients for bound parameters into a congruent [`ParamSet`]
    /// (zeros for parameters no backward pass reached).
    pub fn grads(&self, bound: &Bound, like: &ParamSet) -> Result<ParamSet> {
        let mut out = like.zeros_like();
        for (name, var) in bound.iter() {
            if let (Some(g), Some(dst)) = (self.grad(var), out.get_mut(name)) {
                dst.data_mut().copy_from_slice(g);
            }
        }
        Ok(out)
    }

    /// Adds leaf gradients into the `grad` buffers of `params`.
    pub fn accumulate_into(&self, bound: &Bound, params: &mut ParamSet) -> Result<()> {
        for (name, var) in bound.iter() {
            if let Some(g) = self.grad(var) {
                params
                    .get_mut(name)
                    .ok_or_else(|| Error::UnknownParam(name.to_string()))?
                    .accumulate_grad(g);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place<I: Iterator<Item = usize> + Clone>(v: &mut [f64], idx: I) {
    let max = idx.clone().map(|i| v[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for i in idx.clone() {
        v[i] = (v[i] - max).exp();
        total += v[i];
    }
    for i in idx {
        v[i] /= total;
    }
}

/// Calls `f` with the flat indices of every line along `axis`.
fn for_each_line(
    shape: [usize; 2],
    axis: Axis,
    mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>),
) {
    let [r, c] = shape;
    match axis {
        Axis::Cols => {
            for row in 0..r {
                f((row * c..(row + 1) * c).step_by(1));
            }
        }
        Axis::Rows => {
            for col in 0..c {
                f((col..r * c).step_by(c));
            }
        }
    }
}

/// `out += a (m x k) * b (k x n)`.
pub(crate) fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

/// `out += g (m x n) * b^T`, with `b` stored `k x n`.
fn gemm_a_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            out[i * k + p] += gi.iter().zip(bp).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out += a^T * g`, with `a` stored `m x k` and `g` stored `m x n`.
fn gemm_at_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            for (o, y) in out[p * n..(p + 1) * n].iter_mut().zip(gi) {
                *o += x * y;
            }
        }
    }
}
