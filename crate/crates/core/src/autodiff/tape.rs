//! Define-by-run gradient tape.
//!
//! Every operation on a [`Var`] appends a node holding its forward value and
//! the ids of its inputs. Ids increase in creation order, so the reverse pass
//! is a single sweep from the root back to node 0.
//!
//! Forward errors (shape mismatches, non-finite results) are sticky: the
//! first one is recorded on the tape, later operations keep producing
//! placeholder values, and [`Tape::check`] / [`Tape::backward`] report it.
//! This keeps the numeric code free of `?` on every arithmetic step.

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;

use super::params::ParameterSet;
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    Exp(usize),
    Ln(usize),
    Sigmoid(usize),
    Relu(usize),
    Softplus(usize),
    Sin(usize),
    Cos(usize),
    Square(usize),
    NormalCdf(usize),
    Clamp(usize, f64, f64),
    MatMul(usize, usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    BroadcastTo(usize),
    Reshape(usize),
    Concat(Vec<usize>, usize),
    SliceCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    Cumsum(usize),
}

impl Op {
    pub(crate) fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Square(..) => "square",
            Op::NormalCdf(..) => "normal_cdf",
            Op::Clamp(..) => "clamp",
            Op::MatMul(..) => "matmul",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastTo(..) => "broadcast",
            Op::Reshape(..) => "reshape",
            Op::Concat(..) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::Cumsum(..) => "cumsum",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Reverse-mode tape. One per worker; not `Sync`.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bindings: RefCell<Vec<(usize, String)>>,
    error: RefCell<Option<Error>>,
    consumed: Cell<bool>,
}

/// Handle to a node on a [`Tape`].
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

    /// Clears all nodes, bindings and any recorded error.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
        self.bindings.get_mut().clear();
        *self.error.get_mut() = None;
        self.consumed.set(false);
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Leaf bound to the named parameter; `backward` accumulates into it.
    pub fn param<'t>(&'t self, params: &ParameterSet, name: &str) -> Result<Var<'t>> {
        let value = params
            .value(name)
            .ok_or_else(|| Error::DetachedParameter(name.to_string()))?
            .clone();
        let var = self.push(Op::Leaf, value);
        self.bindings.borrow_mut().push((var.id, name.to_string()));
        Ok(var)
    }

    /// First forward error recorded on this tape, if any.
    pub fn check(&self) -> Result<()> {
        match &*self.error.borrow() {
            None => Ok(()),
            Some(e) => Err(clone_error(e)),
        }
    }

    pub fn value(&self, var: Var<'_>) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[var.id].value)
    }

    fn record(&self, err: Error) {
        let mut slot = self.error.borrow_mut();
        if slot.is_none() {
            *slot = Some(err);
        }
    }

    fn push(&self, op: Op, value: Tensor) -> Var<'_> {
        if !value.all_finite() {
            self.record(Error::NonFinite(op.tag()));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn unary(&self, a: Var<'_>, op: Op, f: impl Fn(f64) -> f64) -> Var<'_> {
        let value = self.nodes.borrow()[a.id].value.map(f);
        self.push(op, value)
    }

    fn binary(
        &self,
        a: Var<'_>,
        b: Var<'_>,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Var<'_> {
        let result = {
            let nodes = self.nodes.borrow();
            tensor::zip_broadcast(op.tag(), &nodes[a.id].value, &nodes[b.id].value, f)
        };
        match result {
            Ok(v) => self.push(op, v),
            Err(e) => self.fail(e, a),
        }
    }

    /// Records `err` and yields a placeholder shaped like `like`.
    fn fail(&self, err: Error, like: Var<'_>) -> Var<'_> {
        self.record(err);
        let shape = self.nodes.borrow()[like.id].value.shape().to_vec();
        self.push(Op::Leaf, Tensor::zeros(&shape))
    }

    /// Reverse sweep from the scalar `root`, accumulating into `params`.
    ///
    /// Fails on a non-scalar root, on a second call without [`Tape::reset`],
    /// on a recorded forward error, and when a bound parameter is missing
    /// from `params` or has changed shape.
    pub fn backward(&self, root: Var<'_>, params: &mut ParameterSet) -> Result<()> {
        let grads = self.gradients(root)?;
        for (id, name) in self.bindings.borrow().iter() {
            let Some(g) = &grads[*id] else { continue };
            params.accumulate_grad(name, g)?;
        }
        Ok(())
    }

    /// Gradients of `root` with respect to every leaf, indexed by node id.
    /// Interior nodes are dropped once their inputs have been reached.
    pub fn gradients(&self, root: Var<'_>) -> Result<Vec<Option<Tensor>>> {
        self.check()?;
        if self.consumed.replace(true) {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let root_val = &nodes[root.id].value;
        if !root_val.is_scalar() {
            return Err(Error::NonScalarRoot(root_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.id + 1];
        grads[root.id] = Some(Tensor::full(root_val.shape(), 1.0));
        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            propagate(&nodes, node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Ok(grads)
    }

    pub fn grad_of(grads: &[Option<Tensor>], var: Var<'_>) -> Option<Tensor> {
        grads.get(var.id).and_then(|g| g.clone())
    }
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::ShapeMismatch { op, lhs, rhs } => Error::ShapeMismatch {
            op,
            lhs: lhs.clone(),
            rhs: rhs.clone(),
        },
        Error::NonFinite(op) => Error::NonFinite(op),
        other => Error::InvalidArgument(other.to_string()),
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_reduced(grads: &mut [Option<Tensor>], id: usize, g: Tensor, shape: &[usize]) {
    accumulate(grads, id, tensor::sum_to_shape(g, shape));
}

fn elementwise(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(x.data()).map(|(&g, &x)| f(g, x)).collect();
    Tensor::from_parts(g.shape().to_vec(), data)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| &nodes[i].value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate_reduced(grads, *a, g.clone(), val(*a).shape());
            accumulate_reduced(grads, *b, g.clone(), val(*b).shape());
        }
        Op::Sub(a, b) => {
            accumulate_reduced(grads, *a, g.clone(), val(*a).shape());
            accumulate_reduced(grads, *b, g.map(|x| -x), val(*b).shape());
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let ga = tensor::zip_broadcast("mul", g, vb, |g, y| g * y).expect("forward shapes");
            let gb = tensor::zip_broadcast("mul", g, va, |g, x| g * x).expect("forward shapes");
            accumulate_reduced(grads, *a, ga, va.shape());
            accumulate_reduced(grads, *b, gb, vb.shape());
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let ga = tensor::zip_broadcast("div", g, vb, |g, y| g / y).expect("forward shapes");
            // d(a/b)/db = -out/b
            let out = &node.value;
            let t = tensor::zip_broadcast("div", g, out, |g, o| -g * o).expect("forward shapes");
            let gb = tensor::zip_broadcast("div", &t, vb, |t, y| t / y).expect("forward shapes");
            accumulate_reduced(grads, *a, ga, va.shape());
            accumulate_reduced(grads, *b, gb, vb.shape());
        }
        Op::Neg(a) => accumulate(grads, *a, g.map(|x| -x)),
        Op::Scale(a, s) => {
            let s = *s;
            accumulate(grads, *a, g.map(|x| x * s))
        }
        Op::Offset(a) => accumulate(grads, *a, g.clone()),
        Op::Exp(a) => accumulate(grads, *a, elementwise(g, &node.value, |g, y| g * y)),
        Op::Ln(a) => accumulate(grads, *a, elementwise(g, val(*a), |g, x| g / x)),
        Op::Sigmoid(a) => {
            accumulate(grads, *a, elementwise(g, &node.value, |g, s| g * s * (1.0 - s)))
        }
        Op::Relu(a) => accumulate(
            grads,
            *a,
            elementwise(g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 }),
        ),
        Op::Softplus(a) => accumulate(grads, *a, elementwise(g, val(*a), |g, x| g * sigmoid(x))),
        Op::Sin(a) => accumulate(grads, *a, elementwise(g, val(*a), |g, x| g * x.cos())),
        Op::Cos(a) => accumulate(grads, *a, elementwise(g, val(*a), |g, x| -g * x.sin())),
        Op::Square(a) => accumulate(grads, *a, elementwise(g, val(*a), |g, x| 2.0 * g * x)),
        Op::NormalCdf(a) => {
            accumulate(grads, *a, elementwise(g, val(*a), |g, x| g * normal_pdf(x)))
        }
        Op::Clamp(a, lo, hi) => {
            let (lo, hi) = (*lo, *hi);
            accumulate(
                grads,
                *a,
                elementwise(g, val(*a), |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
            )
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let ga = tensor::matmul(g, false, vb, true).expect("forward shapes");
            let gb = tensor::matmul(va, true, g, false).expect("forward shapes");
            accumulate(grads, *a, ga.reshaped(va.shape()).expect("same size"));
            accumulate(grads, *b, gb.reshaped(vb.shape()).expect("same size"));
        }
        Op::Sum(a) => {
            let s = g.item();
            accumulate(grads, *a, Tensor::full(val(*a).shape(), s))
        }
        Op::Mean(a) => {
            let va = val(*a);
            let s = g.item() / va.len() as f64;
            accumulate(grads, *a, Tensor::full(va.shape(), s))
        }
        Op::SumCols(a) => {
            let va = val(*a);
            accumulate(grads, *a, tensor::broadcast_to(g, va.shape()))
        }
        Op::BroadcastTo(a) => accumulate_reduced(grads, *a, g.clone(), val(*a).shape()),
        Op::Reshape(a) => {
            let shape = val(*a).shape().to_vec();
            accumulate(grads, *a, g.clone().reshaped(&shape).expect("same size"))
        }
        Op::Concat(inputs, axis) => {
            let (rows, cols) = g.matrix_dims().expect("rank 2");
            let mut offset = 0;
            for &i in inputs {
                let (r, c) = val(i).matrix_dims().expect("rank 2");
                let mut part = Vec::with_capacity(r * c);
                if *axis == 0 {
                    part.extend_from_slice(&g.data()[offset * cols..(offset + r) * cols]);
                    offset += r;
                } else {
                    for row in 0..rows {
                        let start = row * cols + offset;
                        part.extend_from_slice(&g.data()[start..start + c]);
                    }
                    offset += c;
                }
                accumulate(grads, i, Tensor::from_parts(val(i).shape().to_vec(), part));
            }
        }
        Op::SliceCols(a, start) => {
            let va = val(*a);
            let (rows, cols) = va.matrix_dims().expect("rank 2");
            let (_, width) = g.matrix_dims().expect("rank 2");
            let mut full = vec![0.0; rows * cols];
            for r in 0..rows {
                full[r * cols + start..r * cols + start + width]
                    .copy_from_slice(&g.data()[r * width..(r + 1) * width]);
            }
            accumulate(grads, *a, Tensor::from_parts(va.shape().to_vec(), full));
        }
        Op::GatherRows(a, indices) => {
            let va = val(*a);
            let (_, cols) = va.matrix_dims().expect("rank 2");
            let mut full = vec![0.0; va.len()];
            for (out_row, &src) in indices.iter().enumerate() {
                let dst = &mut full[src * cols..(src + 1) * cols];
                for (d, s) in dst.iter_mut().zip(&g.data()[out_row * cols..(out_row + 1) * cols]) {
                    *d += s;
                }
            }
            accumulate(grads, *a, Tensor::from_parts(va.shape().to_vec(), full));
        }
        Op::Cumsum(a) => {
            // reverse cumulative sum along each row
            let (rows, cols) = g.matrix_dims().expect("rank 2");
            let mut out = g.data().to_vec();
            for r in 0..rows {
                let row = &mut out[r * cols..(r + 1) * cols];
                for c in (0..cols.saturating_sub(1)).rev() {
                    row[c] += row[c + 1];
                }
            }
            accumulate(grads, *a, Tensor::from_parts(g.shape().to_vec(), out));
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn value(self) -> Ref<'t, Tensor> {
        self.tape.value(self)
    }

    pub fn shape(self) -> Vec<usize> {
        self.tape.value(self).shape().to_vec()
    }

    /// Value of a one-element node.
    pub fn item(self) -> f64 {
        self.tape.value(self).data()[0]
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self, Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.unary(self, Op::Ln(self.id), f64::ln)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(self, Op::Sigmoid(self.id), sigmoid)
    }

    /// Rectifier `max(0, x)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(self) -> Var<'t> {
        self.tape.unary(self, Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn softplus(self) -> Var<'t> {
        self.tape.unary(self, Op::Softplus(self.id), softplus)
    }

    pub fn sin(self) -> Var<'t> {
        self.tape.unary(self, Op::Sin(self.id), f64::sin)
    }

    pub fn cos(self) -> Var<'t> {
        self.tape.unary(self, Op::Cos(self.id), f64::cos)
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self, Op::Square(self.id), |x| x * x)
    }

    /// Standard normal CDF.
    pub fn normal_cdf(self) -> Var<'t> {
        self.tape.unary(self, Op::NormalCdf(self.id), normal_cdf)
    }

    /// Clamp into `[lo, hi]`; gradient is zero outside.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.tape
            .unary(self, Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.tape.unary(self, Op::Scale(self.id, s), |x| x * s)
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        self.tape.unary(self, Op::Offset(self.id), |x| x + c)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let result = {
            let nodes = self.tape.nodes.borrow();
            tensor::matmul(&nodes[self.id].value, false, &nodes[other.id].value, false)
        };
        match result {
            Ok(v) => self.tape.push(Op::MatMul(self.id, other.id), v),
            Err(e) => self.tape.fail(e, self),
        }
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().sum();
        self.tape.push(Op::Sum(self.id), Tensor::scalar(s))
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let m = v.sum() / v.len() as f64;
        drop(v);
        self.tape.push(Op::Mean(self.id), Tensor::scalar(m))
    }

    /// Row sums of a matrix: `[m, n] -> [m, 1]`.
    pub fn sum_cols(self) -> Var<'t> {
        let out = {
            let v = self.value();
            match v.matrix_dims() {
                Some((rows, cols)) => Ok(Tensor::from_parts(
                    vec![rows, 1],
                    v.data().chunks(cols).map(|r| r.iter().sum()).collect(),
                )),
                None => Err(Error::invalid("sum_cols needs rank <= 2")),
            }
        };
        match out {
            Ok(t) => self.tape.push(Op::SumCols(self.id), t),
            Err(e) => self.tape.fail(e, self),
        }
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Var<'t> {
        let out = {
            let v = self.value();
            match tensor::broadcast_shape(v.shape(), shape) {
                Some(s) if s == shape => Ok(tensor::broadcast_to(&v, shape)),
                _ => Err(Error::ShapeMismatch {
                    op: "broadcast",
                    lhs: v.shape().to_vec(),
                    rhs: shape.to_vec(),
                }),
            }
        };
        match out {
            Ok(t) => self.tape.push(Op::BroadcastTo(self.id), t),
            Err(e) => self.tape.fail(e, self),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let out = self.value().clone().reshaped(shape);
        match out {
            Ok(t) => self.tape.push(Op::Reshape(self.id), t),
            Err(e) => self.tape.fail(e, self),
        }
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(self, start: usize, width: usize) -> Var<'t> {
        let out = {
            let v = self.value();
            match v.matrix_dims() {
                Some((rows, cols)) if start + width <= cols && width > 0 => {
                    let mut data = Vec::with_capacity(rows * width);
                    for r in 0..rows {
                        data.extend_from_slice(&v.data()[r * cols + start..r * cols + start + width]);
                    }
                    Ok(Tensor::from_parts(vec![rows, width], data))
                }
                _ => Err(Error::ShapeMismatch {
                    op: "slice_cols",
                    lhs: v.shape().to_vec(),
                    rhs: vec![start, width],
                }),
            }
        };
        match out {
            Ok(t) => self.tape.push(Op::SliceCols(self.id, start), t),
            Err(e) => self.tape.fail(e, self),
        }
    }

    /// Row `i` of the result is row `indices[i]` of `self`.
    pub fn gather_rows(self, indices: Rc<[usize]>) -> Var<'t> {
        let out = {
            let v = self.value();
            match v.matrix_dims() {
                Some((rows, cols)) if indices.iter().all(|&i| i < rows) && !indices.is_empty() => {
                    let mut data = Vec::with_capacity(indices.len() * cols);
                    for &i in indices.iter() {
                        data.extend_from_slice(&v.data()[i * cols..(i + 1) * cols]);
                    }
                    Ok(Tensor::from_parts(vec![indices.len(), cols], data))
                }
                _ => Err(Error::invalid(format!(
                    "gather_rows index out of range for shape {:?}",
                    v.shape()
                ))),
            }
        };
        match out {
            Ok(t) => self.tape.push(Op::GatherRows(self.id, indices), t),
            Err(e) => self.tape.fail(e, self),
        }
    }

    /// Inclusive prefix sum along each row.
    pub fn cumsum(self) -> Var<'t> {
        let out = {
            let v = self.value();
            match v.matrix_dims() {
                Some((rows, cols)) => {
                    let mut data = v.data().to_vec();
                    for r in 0..rows {
                        let row = &mut data[r * cols..(r + 1) * cols];
                        for c in 1..cols {
                            row[c] += row[c - 1];
                        }
                    }
                    Ok(Tensor::from_parts(v.shape().to_vec(), data))
                }
                None => Err(Error::invalid("cumsum needs rank <= 2")),
            }
        };
        match out {
            Ok(t) => self.tape.push(Op::Cumsum(self.id), t),
            Err(e) => self.tape.fail(e, self),
        }
    }
}

/// Concatenate rank-2 vars along `axis` (0 = rows, 1 = columns).
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Var<'t> {
    assert!(!parts.is_empty(), "concat of nothing");
    let tape = parts[0].tape;
    let out = {
        let nodes = tape.nodes.borrow();
        let dims: Option<Vec<(usize, usize)>> =
            parts.iter().map(|p| nodes[p.id].value.matrix_dims()).collect();
        match dims {
            Some(dims) if axis == 0 && dims.iter().all(|d| d.1 == dims[0].1) => {
                let rows = dims.iter().map(|d| d.0).sum();
                let mut data = Vec::with_capacity(rows * dims[0].1);
                for p in parts {
                    data.extend_from_slice(nodes[p.id].value.data());
                }
                Ok(Tensor::from_parts(vec![rows, dims[0].1], data))
            }
            Some(dims) if axis == 1 && dims.iter().all(|d| d.0 == dims[0].0) => {
                let rows = dims[0].0;
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for (p, &(_, c)) in parts.iter().zip(&dims) {
                        data.extend_from_slice(&nodes[p.id].value.data()[r * c..(r + 1) * c]);
                    }
                }
                Ok(Tensor::from_parts(vec![rows, cols], data))
            }
            _ => Err(Error::ShapeMismatch {
                op: "concat",
                lhs: nodes[parts[0].id].value.shape().to_vec(),
                rhs: parts
                    .last()
                    .map(|p| nodes[p.id].value.shape().to_vec())
                    .unwrap_or_default(),
            }),
        }
    };
    match out {
        Ok(t) => tape.push(Op::Concat(parts.iter().map(|p| p.id).collect(), axis), t),
        Err(e) => tape.fail(e, parts[0]),
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident, $f:expr) => {
        impl<'t> std::ops::$trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.tape
                    .binary(self, rhs, Op::$variant(self.id, rhs.id), $f)
            }
        }
    };
}

binary_op!(Add, add, Add, |a, b| a + b);
binary_op!(Sub, sub, Sub, |a, b| a - b);
binary_op!(Mul, mul, Mul, |a, b| a * b);
binary_op!(Div, div, Div, |a, b| a / b);

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self, Op::Neg(self.id), |x| -x)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.offset(rhs)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.offset(-rhs)
    }
}
