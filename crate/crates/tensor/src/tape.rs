//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node; node ids are therefore a topological
//! order and `backward` is a single reverse sweep.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{shape_err, Result, TensorError};
use crate::gemm::{gemm, Op as G};
use crate::tensor::Tensor;

#[derive(Debug)]
enum Op {
    Leaf,
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, factor: f64 },
    AddScalar { a: usize },
    MatMul { a: usize, b: usize },
    Transpose { a: usize },
    Reshape { a: usize },
    Conv1d(Box<ConvSaved>),
    LeakyRelu { a: usize, slope: f64 },
    Silu { a: usize },
    Exp { a: usize },
    Log { a: usize },
    Square { a: usize },
    SoftmaxSegmented { a: usize, seg: Rc<[usize]>, n_seg: usize },
    SumAxis { a: usize, axis: usize },
    MeanAxis { a: usize, axis: usize },
    Concat { parts: Vec<usize>, axis: usize },
    Broadcast { a: usize },
    GatherRows { a: usize, idx: Rc<[usize]> },
    SegmentSum { a: usize, seg: Rc<[usize]> },
    RowScale { x: usize, w: usize },
    EdgeScores(Box<EdgeSaved>),
    Attend(Box<EdgeSaved>),
}

/// Operands of the fused edge ops. For `EdgeScores`, `a`/`b` are the
/// target/source projections and `c` the attention vector; for `Attend`,
/// `a` is the node values and `b` the edge weights.
#[derive(Debug)]
struct EdgeSaved {
    a: usize,
    b: usize,
    c: usize,
    src: Rc<[usize]>,
    dst: Rc<[usize]>,
    slope: f64,
}

#[derive(Debug)]
struct ConvSaved {
    input: usize,
    weight: usize,
    bias: Option<usize>,
    cols: Tensor,
    geom: ConvGeom,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    l_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    l_out: usize,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording context for one forward/backward pass.
///
/// Tapes are single-threaded; run independent passes on separate tapes.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape when nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn record(&self, op_name: &'static str, value: Tensor, op: Op, parents: &[usize]) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let needs_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].needs_grad)
        };
        Ok(self.push(value, op, needs_grad))
    }

    fn value_of(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].needs_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums `g` (shape of the larger operand) down to the trailing shape `small`.
fn reduce_leading(g: &Tensor, small: &[usize]) -> Tensor {
    if g.shape() == small {
        return g.clone();
    }
    let w: usize = small.iter().product();
    let mut out = vec![0.0; w];
    for chunk in g.data().chunks_exact(w) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor::from_parts(small.to_vec(), out)
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add { a, b } => {
            accumulate(grads, nodes, *a, g.clone());
            let gb = reduce_leading(g, val(*b).shape());
            accumulate(grads, nodes, *b, gb);
        }
        Op::Sub { a, b } => {
            accumulate(grads, nodes, *a, g.clone());
            let mut gb = reduce_leading(g, val(*b).shape());
            gb.scale_in_place(-1.0);
            accumulate(grads, nodes, *b, gb);
        }
        Op::Mul { a, b } => {
            let (va, vb) = (val(*a), val(*b));
            if nodes[*a].needs_grad {
                let w = vb.numel();
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| gv * vb.data()[i % w])
                    .collect();
                accumulate(grads, nodes, *a, Tensor::from_parts(va.shape().to_vec(), data));
            }
            if nodes[*b].needs_grad {
                let prod = Tensor::from_parts(
                    g.shape().to_vec(),
                    g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect(),
                );
                accumulate(grads, nodes, *b, reduce_leading(&prod, vb.shape()));
            }
        }
        Op::Scale { a, factor } => {
            accumulate(grads, nodes, *a, g.map(|v| v * factor));
        }
        Op::AddScalar { a } => accumulate(grads, nodes, *a, g.clone()),
        Op::MatMul { a, b } => {
            let (va, vb) = (val(*a), val(*b));
            let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
            if nodes[*a].needs_grad {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g.data(), G::N, vb.data(), G::T, 0.0, &mut ga);
                accumulate(grads, nodes, *a, Tensor::from_parts(vec![m, k], ga));
            }
            if nodes[*b].needs_grad {
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, va.data(), G::T, g.data(), G::N, 0.0, &mut gb);
                accumulate(grads, nodes, *b, Tensor::from_parts(vec![k, n], gb));
            }
        }
        Op::Transpose { a } => {
            accumulate(grads, nodes, *a, transpose2(g));
        }
        Op::Reshape { a } => {
            let ga = Tensor::from_parts(val(*a).shape().to_vec(), g.data().to_vec());
            accumulate(grads, nodes, *a, ga);
        }
        Op::Conv1d(saved) => conv1d_backward(nodes, saved, g, grads),
        Op::EdgeScores(saved) => edge_scores_backward(nodes, saved, g, grads),
        Op::Attend(saved) => attend_backward(nodes, saved, g, grads),
        Op::LeakyRelu { a, slope } => {
            let data = g
                .data()
                .iter()
                .zip(val(*a).data())
                .map(|(gv, x)| if *x > 0.0 { *gv } else { gv * slope })
                .collect();
            accumulate(grads, nodes, *a, Tensor::from_parts(g.shape().to_vec(), data));
        }
        Op::Silu { a } => {
            let data = g
                .data()
                .iter()
                .zip(val(*a).data())
                .map(|(gv, &x)| {
                    let s = sigmoid(x);
                    gv * (s + x * s * (1.0 - s))
                })
                .collect();
            accumulate(grads, nodes, *a, Tensor::from_parts(g.shape().to_vec(), data));
        }
        Op::Exp { a } => {
            // d exp(x) = exp(x): reuse this node's own value.
            let a = *a;
            let data = g
                .data()
                .iter()
                .zip(nodes[id].value.data())
                .map(|(gv, y)| gv * y)
                .collect();
            accumulate(grads, nodes, a, Tensor::from_parts(g.shape().to_vec(), data));
        }
        Op::Log { a } => {
            let data = g
                .data()
                .iter()
                .zip(val(*a).data())
                .map(|(gv, x)| gv / x)
                .collect();
            accumulate(grads, nodes, *a, Tensor::from_parts(g.shape().to_vec(), data));
        }
        Op::Square { a } => {
            let data = g
                .data()
                .iter()
                .zip(val(*a).data())
                .map(|(gv, x)| 2.0 * gv * x)
                .collect();
            accumulate(grads, nodes, *a, Tensor::from_parts(g.shape().to_vec(), data));
        }
        Op::SoftmaxSegmented { a, seg, n_seg } => {
            let y = &nodes[id].value;
            let cols = y.row_len();
            let mut dot = vec![0.0; n_seg * cols];
            for (e, &s) in seg.iter().enumerate() {
                for c in 0..cols {
                    dot[s * cols + c] += y.data()[e * cols + c] * g.data()[e * cols + c];
                }
            }
            let mut out = vec![0.0; y.numel()];
            for (e, &s) in seg.iter().enumerate() {
                for c in 0..cols {
                    let k = e * cols + c;
                    out[k] = y.data()[k] * (g.data()[k] - dot[s * cols + c]);
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_parts(y.shape().to_vec(), out));
        }
        Op::SumAxis { a, axis } | Op::MeanAxis { a, axis } => {
            let shape = val(*a).shape();
            let (outer, n, inner) = split_axis(shape, *axis);
            let factor = if matches!(nodes[id].op, Op::MeanAxis { .. }) {
                1.0 / n as f64
            } else {
                1.0
            };
            let mut out = vec![0.0; outer * n * inner];
            for o in 0..outer {
                for j in 0..n {
                    for i in 0..inner {
                        out[(o * n + j) * inner + i] = g.data()[o * inner + i] * factor;
                    }
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_parts(shape.to_vec(), out));
        }
        Op::Concat { parts, axis } => {
            let out_shape = g.shape();
            let (outer, total, inner) = split_axis(out_shape, *axis);
            let mut offset = 0;
            for &p in parts {
                let shape = val(p).shape();
                let n = shape[*axis];
                if nodes[p].needs_grad {
                    let mut data = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        data.extend_from_slice(&g.data()[start..start + n * inner]);
                    }
                    accumulate(grads, nodes, p, Tensor::from_parts(shape.to_vec(), data));
                }
                offset += n;
            }
        }
        Op::Broadcast { a } => {
            let ga = reduce_leading(g, val(*a).shape());
            accumulate(grads, nodes, *a, ga);
        }
        Op::GatherRows { a, idx } => {
            let va = val(*a);
            let w = va.row_len();
            let mut out = vec![0.0; va.numel()];
            for (r, &src) in idx.iter().enumerate() {
                let dst = &mut out[src * w..(src + 1) * w];
                for (d, v) in dst.iter_mut().zip(&g.data()[r * w..(r + 1) * w]) {
                    *d += v;
                }
            }
            accumulate(grads, nodes, *a, Tensor::from_parts(va.shape().to_vec(), out));
        }
        Op::SegmentSum { a, seg } => {
            let va = val(*a);
            let w = va.row_len();
            let mut out = Vec::with_capacity(va.numel());
            for &s in seg.iter() {
                out.extend_from_slice(&g.data()[s * w..(s + 1) * w]);
            }
            accumulate(grads, nodes, *a, Tensor::from_parts(va.shape().to_vec(), out));
        }
        Op::RowScale { x, w } => {
            let (vx, vw) = (val(*x), val(*w));
            let cols = vx.row_len();
            if nodes[*x].needs_grad {
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, gv)| gv * vw.data()[k / cols])
                    .collect();
                accumulate(grads, nodes, *x, Tensor::from_parts(vx.shape().to_vec(), data));
            }
            if nodes[*w].needs_grad {
                let data = (0..vw.numel())
                    .map(|r| {
                        g.data()[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(&vx.data()[r * cols..(r + 1) * cols])
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect();
                accumulate(grads, nodes, *w, Tensor::from_parts(vw.shape().to_vec(), data));
            }
        }
    }
}

fn edge_scores_backward(nodes: &[Node], s: &EdgeSaved, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let (xl, xr, att) = (&nodes[s.a].value, &nodes[s.b].value, &nodes[s.c].value);
    let (heads, dim) = (att.shape()[0], att.shape()[1]);
    let f = heads * dim;
    let mut gl = vec![0.0; xl.numel()];
    let mut gr = vec![0.0; xr.numel()];
    let mut ga = vec![0.0; att.numel()];
    let mut dz = vec![0.0; f];
    for (e, (&j, &i)) in s.src.iter().zip(s.dst.iter()).enumerate() {
        let (li, rj) = (&xl.data()[i * f..(i + 1) * f], &xr.data()[j * f..(j + 1) * f]);
        for h in 0..heads {
            let ge = g.data()[e * heads + h];
            for d in 0..dim {
                let k = h * dim + d;
                let z = li[k] + rj[k];
                let (act, slope) = if z > 0.0 { (z, 1.0) } else { (z * s.slope, s.slope) };
                ga[k] += ge * act;
                dz[k] = ge * att.data()[k] * slope;
            }
        }
        for (o, v) in gl[i * f..(i + 1) * f].iter_mut().zip(&dz) {
            *o += v;
        }
        for (o, v) in gr[j * f..(j + 1) * f].iter_mut().zip(&dz) {
            *o += v;
        }
    }
    accumulate(grads, nodes, s.a, Tensor::from_parts(xl.shape().to_vec(), gl));
    accumulate(grads, nodes, s.b, Tensor::from_parts(xr.shape().to_vec(), gr));
    accumulate(grads, nodes, s.c, Tensor::from_parts(att.shape().to_vec(), ga));
}

fn attend_backward(nodes: &[Node], s: &EdgeSaved, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let (x, alpha) = (&nodes[s.a].value, &nodes[s.b].value);
    let f = x.row_len();
    let heads = alpha.row_len();
    let dim = f / heads;
    let want_x = nodes[s.a].needs_grad;
    let mut gx = vec![0.0; if want_x { x.numel() } else { 0 }];
    let mut galpha = vec![0.0; alpha.numel()];
    for (e, (&j, &i)) in s.src.iter().zip(s.dst.iter()).enumerate() {
        let gi = &g.data()[i * f..(i + 1) * f];
        let xj = &x.data()[j * f..(j + 1) * f];
        for h in 0..heads {
            let r = h * dim..(h + 1) * dim;
            galpha[e * heads + h] = gi[r.clone()].iter().zip(&xj[r.clone()]).map(|(a, b)| a * b).sum();
            if want_x {
                let w = alpha.data()[e * heads + h];
                for (o, v) in gx[j * f..(j + 1) * f][r.clone()].iter_mut().zip(&gi[r]) {
                    *o += w * v;
                }
            }
        }
    }
    if want_x {
        accumulate(grads, nodes, s.a, Tensor::from_parts(x.shape().to_vec(), gx));
    }
    accumulate(grads, nodes, s.b, Tensor::from_parts(alpha.shape().to_vec(), galpha));
}

fn conv1d_backward(nodes: &[Node], s: &ConvSaved, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let ConvGeom {
        batch,
        c_in,
        l_in,
        c_out,
        kernel,
        stride,
        pad,
        l_out,
    } = s.geom;
    // g: [B, Cout, Lout] -> gm: [B·Lout, Cout]
    let rows = batch * l_out;
    let mut gm = vec![0.0; rows * c_out];
    for b in 0..batch {
        for co in 0..c_out {
            for t in 0..l_out {
                gm[(b * l_out + t) * c_out + co] = g.data()[(b * c_out + co) * l_out + t];
            }
        }
    }
    let ck = c_in * kernel;
    if let Some(bias) = s.bias {
        if nodes[bias].needs_grad {
            let mut gb = vec![0.0; c_out];
            for r in 0..rows {
                for co in 0..c_out {
                    gb[co] += gm[r * c_out + co];
                }
            }
            accumulate(grads, nodes, bias, Tensor::from_parts(vec![c_out], gb));
        }
    }
    if nodes[s.weight].needs_grad {
        // dW[Cout, Cin·K] = gmᵀ · cols
        let mut gw = vec![0.0; c_out * ck];
        gemm(c_out, rows, ck, &gm, G::T, s.cols.data(), G::N, 0.0, &mut gw);
        accumulate(
            grads,
            nodes,
            s.weight,
            Tensor::from_parts(vec![c_out, c_in, kernel], gw),
        );
    }
    if nodes[s.input].needs_grad {
        let w = &nodes[s.weight].value;
        let mut gcols = vec![0.0; rows * ck];
        gemm(rows, c_out, ck, &gm, G::N, w.data(), G::N, 0.0, &mut gcols);
        let mut gx = vec![0.0; batch * c_in * l_in];
        for b in 0..batch {
            for t in 0..l_out {
                let row = &gcols[(b * l_out + t) * ck..(b * l_out + t + 1) * ck];
                for ci in 0..c_in {
                    for k in 0..kernel {
                        let pos = (t * stride + k) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < l_in {
                            gx[(b * c_in + ci) * l_in + pos as usize] += row[ci * kernel + k];
                        }
                    }
                }
            }
        }
        accumulate(
            grads,
            nodes,
            s.input,
            Tensor::from_parts(vec![batch, c_in, l_in], gx),
        );
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

fn transpose2(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::from_parts(vec![c, r], out)
}

/// (product of extents before `axis`, extent at `axis`, product after).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `b` either matches `a` or equals a trailing slice of `a`'s shape.
fn check_leading_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a == b || (b.len() < a.len() && a.ends_with(b)) {
        Ok(())
    } else {
        Err(shape_err(op, format!("{a:?} vs {b:?}")))
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn binary_elementwise(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        let out = {
            let (a, b) = (self.value(), other.value());
            check_leading_broadcast(name, a.shape(), b.shape())?;
            let w = b.numel().max(1);
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data()[i % w]))
                .collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        };
        self.tape.record(name, out, op, &[self.id, other.id])
    }

    /// Elementwise sum; `other` may match a trailing slice of `self`'s shape.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let op = Op::Add {
            a: self.id,
            b: other.id,
        };
        self.binary_elementwise(other, "add", |x, y| x + y, op)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let op = Op::Sub {
            a: self.id,
            b: other.id,
        };
        self.binary_elementwise(other, "sub", |x, y| x - y, op)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let op = Op::Mul {
            a: self.id,
            b: other.id,
        };
        self.binary_elementwise(other, "mul", |x, y| x * y, op)
    }

    pub fn scale(self, factor: f64) -> Result<Var<'t>> {
        let out = self.value().map(|v| v * factor);
        self.tape
            .record("scale", out, Op::Scale { a: self.id, factor }, &[self.id])
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t>> {
        let out = self.value().map(|v| v + c);
        self.tape
            .record("add_scalar", out, Op::AddScalar { a: self.id }, &[self.id])
    }

    /// `[m, k] · [k, n] -> [m, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let (a, b) = (self.value(), other.value());
            if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(shape_err(
                    "matmul",
                    format!("{:?} · {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, a.data(), G::N, b.data(), G::N, 0.0, &mut c);
            Tensor::from_parts(vec![m, n], c)
        };
        self.tape.record(
            "matmul",
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
            },
            &[self.id, other.id],
        )
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let out = {
            let a = self.value();
            if a.ndim() != 2 {
                return Err(shape_err("transpose", format!("{:?} is not 2-D", a.shape())));
            }
            transpose2(&a)
        };
        self.tape
            .record("transpose", out, Op::Transpose { a: self.id }, &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshape(shape.to_vec())?;
        self.tape
            .record("reshape", out, Op::Reshape { a: self.id }, &[self.id])
    }

    /// Temporal convolution via im2col.
    ///
    /// `self`: `[B, C_in, L]`, `weight`: `[C_out, C_in, K]`, `bias`: `[C_out]`.
    /// Output length is `(L + 2·pad − K) / stride + 1`.
    pub fn conv1d(
        self,
        weight: Var<'t>,
        bias: Option<Var<'t>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t>> {
        let (out, cols, geom) = {
            let x = self.value();
            let w = weight.value();
            if x.ndim() != 3 || w.ndim() != 3 || x.shape()[1] != w.shape()[1] {
                return Err(shape_err(
                    "conv1d",
                    format!("input {:?}, weight {:?}", x.shape(), w.shape()),
                ));
            }
            if stride == 0 {
                return Err(shape_err("conv1d", "stride must be >= 1"));
            }
            let (batch, c_in, l_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (c_out, kernel) = (w.shape()[0], w.shape()[2]);
            if l_in + 2 * pad < kernel {
                return Err(shape_err("conv1d", "kernel longer than padded input"));
            }
            let l_out = (l_in + 2 * pad - kernel) / stride + 1;
            let ck = c_in * kernel;
            let rows = batch * l_out;
            let mut cols = vec![0.0; rows * ck];
            for b in 0..batch {
                for t in 0..l_out {
                    let row = &mut cols[(b * l_out + t) * ck..(b * l_out + t + 1) * ck];
                    for ci in 0..c_in {
                        let src = &x.data()[(b * c_in + ci) * l_in..(b * c_in + ci + 1) * l_in];
                        for k in 0..kernel {
                            let pos = (t * stride + k) as isize - pad as isize;
                            if pos >= 0 && (pos as usize) < l_in {
                                row[ci * kernel + k] = src[pos as usize];
                            }
                        }
                    }
                }
            }
            let mut ym = vec![0.0; rows * c_out];
            gemm(rows, ck, c_out, &cols, G::N, w.data(), G::T, 0.0, &mut ym);
            let bias_v = match bias {
                Some(bv) => {
                    let bv = bv.value();
                    if bv.shape() != [c_out] {
                        return Err(shape_err("conv1d", format!("bias {:?}", bv.shape())));
                    }
                    bv.data().to_vec()
                }
                None => vec![0.0; c_out],
            };
            let mut out = vec![0.0; batch * c_out * l_out];
            for b in 0..batch {
                for t in 0..l_out {
                    for co in 0..c_out {
                        out[(b * c_out + co) * l_out + t] =
                            ym[(b * l_out + t) * c_out + co] + bias_v[co];
                    }
                }
            }
            let geom = ConvGeom {
                batch,
                c_in,
                l_in,
                c_out,
                kernel,
                stride,
                pad,
                l_out,
            };
            (
                Tensor::from_parts(vec![batch, c_out, l_out], out),
                Tensor::from_parts(vec![rows, ck], cols),
                geom,
            )
        };
        let mut parents = vec![self.id, weight.id];
        if let Some(b) = bias {
            parents.push(b.id);
        }
        let saved = ConvSaved {
            input: self.id,
            weight: weight.id,
            bias: bias.map(|b| b.id),
            cols,
            geom,
        };
        self.tape
            .record("conv1d", out, Op::Conv1d(Box::new(saved)), &parents)
    }

    pub fn leaky_relu(self, slope: f64) -> Result<Var<'t>> {
        let out = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.tape.record(
            "leaky_relu",
            out,
            Op::LeakyRelu { a: self.id, slope },
            &[self.id],
        )
    }

    pub fn silu(self) -> Result<Var<'t>> {
        let out = self.value().map(|x| x * sigmoid(x));
        self.tape.record("silu", out, Op::Silu { a: self.id }, &[self.id])
    }

    pub fn exp(self) -> Result<Var<'t>> {
        let out = self.value().map(f64::exp);
        self.tape.record("exp", out, Op::Exp { a: self.id }, &[self.id])
    }

    pub fn log(self) -> Result<Var<'t>> {
        let out = self.value().map(f64::ln);
        self.tape.record("log", out, Op::Log { a: self.id }, &[self.id])
    }

    pub fn square(self) -> Result<Var<'t>> {
        let out = self.value().map(|x| x * x);
        self.tape
            .record("square", out, Op::Square { a: self.id }, &[self.id])
    }

    /// Softmax over rows sharing a segment id, independently per column.
    ///
    /// `self`: `[E]` or `[E, H]`; `segments[e] < n_segments`.
    pub fn softmax_segmented(self, segments: Rc<[usize]>, n_segments: usize) -> Result<Var<'t>> {
        let out = {
            let s = self.value();
            if s.rows() != segments.len() || s.ndim() == 0 {
                return Err(shape_err(
                    "softmax_segmented",
                    format!("{} rows vs {} segment ids", s.rows(), segments.len()),
                ));
            }
            if let Some(bad) = segments.iter().find(|&&g| g >= n_segments) {
                return Err(shape_err(
                    "softmax_segmented",
                    format!("segment id {bad} >= {n_segments}"),
                ));
            }
            let cols = s.row_len();
            let mut max = vec![f64::NEG_INFINITY; n_segments * cols];
            for (e, &g) in segments.iter().enumerate() {
                for c in 0..cols {
                    let m = &mut max[g * cols + c];
                    *m = m.max(s.data()[e * cols + c]);
                }
            }
            let mut out = vec![0.0; s.numel()];
            let mut denom = vec![0.0; n_segments * cols];
            for (e, &g) in segments.iter().enumerate() {
                for c in 0..cols {
                    let v = (s.data()[e * cols + c] - max[g * cols + c]).exp();
                    out[e * cols + c] = v;
                    denom[g * cols + c] += v;
                }
            }
            for (e, &g) in segments.iter().enumerate() {
                for c in 0..cols {
                    out[e * cols + c] /= denom[g * cols + c];
                }
            }
            Tensor::from_parts(s.shape().to_vec(), out)
        };
        self.tape.record(
            "softmax_segmented",
            out,
            Op::SoftmaxSegmented {
                a: self.id,
                seg: segments,
                n_seg: n_segments,
            },
            &[self.id],
        )
    }

    fn reduce_axis(self, axis: usize, mean: bool) -> Result<Var<'t>> {
        let name = if mean { "mean_axis" } else { "sum_axis" };
        let out = {
            let a = self.value();
            if axis >= a.ndim() {
                return Err(shape_err(name, format!("axis {axis} of {:?}", a.shape())));
            }
            let (outer, n, inner) = split_axis(a.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..n {
                    let src = &a.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                    for (d, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
            if mean {
                let inv = 1.0 / n as f64;
                out.iter_mut().for_each(|v| *v *= inv);
            }
            let mut shape = a.shape().to_vec();
            shape.remove(axis);
            Tensor::from_parts(shape, out)
        };
        let op = if mean {
            Op::MeanAxis { a: self.id, axis }
        } else {
            Op::SumAxis { a: self.id, axis }
        };
        self.tape.record(name, out, op, &[self.id])
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        self.reduce_axis(axis, false)
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        self.reduce_axis(axis, true)
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(self) -> Result<Var<'t>> {
        let n = self.value().numel();
        self.reshape(&[n])?.sum_axis(0)
    }

    pub fn mean_all(self) -> Result<Var<'t>> {
        let n = self.value().numel();
        self.reshape(&[n])?.mean_axis(0)
    }

    /// Repeats `self` `n` times along a new leading axis.
    pub fn broadcast(self, n: usize) -> Result<Var<'t>> {
        let out = {
            let a = self.value();
            let mut data = Vec::with_capacity(a.numel() * n);
            for _ in 0..n {
                data.extend_from_slice(a.data());
            }
            let mut shape = vec![n];
            shape.extend_from_slice(a.shape());
            Tensor::from_parts(shape, data)
        };
        self.tape
            .record("broadcast", out, Op::Broadcast { a: self.id }, &[self.id])
    }

    /// Selects rows (first-axis slices) by index; indices may repeat.
    pub fn gather_rows(self, indices: Rc<[usize]>) -> Result<Var<'t>> {
        let out = {
            let a = self.value();
            let w = a.row_len();
            let mut data = Vec::with_capacity(indices.len() * w);
            for &i in indices.iter() {
                if i >= a.rows() {
                    return Err(shape_err("gather_rows", format!("row {i} of {}", a.rows())));
                }
                data.extend_from_slice(a.row(i));
            }
            let mut shape = a.shape().to_vec();
            shape[0] = indices.len();
            Tensor::from_parts(shape, data)
        };
        self.tape.record(
            "gather_rows",
            out,
            Op::GatherRows {
                a: self.id,
                idx: indices,
            },
            &[self.id],
        )
    }

    /// Sums rows into `n_segments` buckets: `out[s] = Σ_{e: seg[e]=s} self[e]`.
    pub fn segment_sum(self, segments: Rc<[usize]>, n_segments: usize) -> Result<Var<'t>> {
        let out = {
            let a = self.value();
            if a.rows() != segments.len() {
                return Err(shape_err(
                    "segment_sum",
                    format!("{} rows vs {} segment ids", a.rows(), segments.len()),
                ));
            }
            let w = a.row_len();
            let mut data = vec![0.0; n_segments * w];
            for (e, &s) in segments.iter().enumerate() {
                if s >= n_segments {
                    return Err(shape_err("segment_sum", format!("segment {s} >= {n_segments}")));
                }
                for (d, v) in data[s * w..(s + 1) * w].iter_mut().zip(a.row(e)) {
                    *d += v;
                }
            }
            let mut shape = a.shape().to_vec();
            shape[0] = n_segments;
            Tensor::from_parts(shape, data)
        };
        self.tape.record(
            "segment_sum",
            out,
            Op::SegmentSum {
                a: self.id,
                seg: segments,
            },
            &[self.id],
        )
    }

    /// Multiplies row `r` of `self` by `weights[r]`; `weights` is `[R]`.
    pub fn row_scale(self, weights: Var<'t>) -> Result<Var<'t>> {
        let out = {
            let (x, w) = (self.value(), weights.value());
            if w.numel() != x.rows() || x.ndim() == 0 {
                return Err(shape_err(
                    "row_scale",
                    format!("{:?} by {:?}", x.shape(), w.shape()),
                ));
            }
            let cols = x.row_len();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(k, v)| v * w.data()[k / cols])
                .collect();
            Tensor::from_parts(x.shape().to_vec(), data)
        };
        self.tape.record(
            "row_scale",
            out,
            Op::RowScale {
                x: self.id,
                w: weights.id,
            },
            &[self.id, weights.id],
        )
    }
}

impl<'t> Var<'t> {
    /// GATv2 edge logits, fused.
    ///
    /// `self` (target projection) and `source` are `[M, H·D]`, `att` is
    /// `[H, D]`. Edge `e` runs `src[e] -> dst[e]`; its score for head `h` is
    /// `Σ_d att[h, d] · leaky_relu(self[dst[e], h, d] + source[src[e], h, d])`.
    /// Output `[E, H]`.
    pub fn edge_scores(
        self,
        source: Var<'t>,
        att: Var<'t>,
        src: Rc<[usize]>,
        dst: Rc<[usize]>,
        slope: f64,
    ) -> Result<Var<'t>> {
        let out = {
            let (xl, xr, a) = (self.value(), source.value(), att.value());
            if xl.ndim() != 2 || xl.shape() != xr.shape() || a.ndim() != 2 || a.numel() != xl.row_len() {
                return Err(shape_err(
                    "edge_scores",
                    format!("{:?}, {:?}, att {:?}", xl.shape(), xr.shape(), a.shape()),
                ));
            }
            check_edges("edge_scores", &src, &dst, xl.rows())?;
            let (heads, dim) = (a.shape()[0], a.shape()[1]);
            let f = heads * dim;
            let mut out = vec![0.0; src.len() * heads];
            for (e, (&j, &i)) in src.iter().zip(dst.iter()).enumerate() {
                let (li, rj) = (&xl.data()[i * f..(i + 1) * f], &xr.data()[j * f..(j + 1) * f]);
                for h in 0..heads {
                    let mut acc = 0.0;
                    for k in h * dim..(h + 1) * dim {
                        let z = li[k] + rj[k];
                        acc += a.data()[k] * if z > 0.0 { z } else { z * slope };
                    }
                    out[e * heads + h] = acc;
                }
            }
            Tensor::from_parts(vec![src.len(), heads], out)
        };
        self.tape.record(
            "edge_scores",
            out,
            Op::EdgeScores(Box::new(EdgeSaved {
                a: self.id,
                b: source.id,
                c: att.id,
                src,
                dst,
                slope,
            })),
            &[self.id, source.id, att.id],
        )
    }

    /// Attention-weighted message sum, fused.
    ///
    /// `self` is `[M, H·D]`, `alpha` is `[E, H]`. Returns `[n_out, H·D]` with
    /// `out[dst[e], h, :] += alpha[e, h] · self[src[e], h, :]`.
    pub fn attend(self, alpha: Var<'t>, src: Rc<[usize]>, dst: Rc<[usize]>, n_out: usize) -> Result<Var<'t>> {
        let out = {
            let (x, w) = (self.value(), alpha.value());
            let heads = w.row_len();
            if x.ndim() != 2 || w.ndim() != 2 || w.rows() != src.len() || heads == 0 || x.row_len() % heads != 0 {
                return Err(shape_err(
                    "attend",
                    format!("{:?} by weights {:?} over {} edges", x.shape(), w.shape(), src.len()),
                ));
            }
            check_edges("attend", &src, &dst, x.rows())?;
            if let Some(bad) = dst.iter().find(|&&i| i >= n_out) {
                return Err(shape_err("attend", format!("target {bad} >= {n_out}")));
            }
            let f = x.row_len();
            let dim = f / heads;
            let mut out = vec![0.0; n_out * f];
            for (e, (&j, &i)) in src.iter().zip(dst.iter()).enumerate() {
                let xj = &x.data()[j * f..(j + 1) * f];
                let oi = &mut out[i * f..(i + 1) * f];
                for h in 0..heads {
                    let a = w.data()[e * heads + h];
                    let r = h * dim..(h + 1) * dim;
                    for (o, v) in oi[r.clone()].iter_mut().zip(&xj[r]) {
                        *o += a * v;
                    }
                }
            }
            Tensor::from_parts(vec![n_out, f], out)
        };
        self.tape.record(
            "attend",
            out,
            Op::Attend(Box::new(EdgeSaved {
                a: self.id,
                b: alpha.id,
                c: alpha.id,
                src,
                dst,
                slope: 0.0,
            })),
            &[self.id, alpha.id],
        )
    }
}

fn check_edges(op: &'static str, src: &[usize], dst: &[usize], rows: usize) -> Result<()> {
    if src.len() != dst.len() {
        return Err(shape_err(op, format!("{} sources vs {} targets", src.len(), dst.len())));
    }
    if let Some(bad) = src.iter().chain(dst).find(|&&i| i >= rows) {
        return Err(shape_err(op, format!("node {bad} >= {rows}")));
    }
    Ok(())
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return Err(shape_err("concat", "no inputs"));
    };
    let tape = first.tape;
    let out = {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} of {base:?}")));
        }
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(shape_err("concat", format!("{s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let n = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Tensor::from_parts(shape, data)
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    tape.record(
        "concat",
        out,
        Op::Concat {
            parts: ids.clone(),
            axis,
        },
        &ids,
    )
}
