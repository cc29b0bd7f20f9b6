//! Dense row-major `f64` arrays with numpy-style broadcasting.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Caller guarantees `product(shape) == data.len()`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![], vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    /// A `[rows.len(), N]` matrix.
    pub fn from_rows<const N: usize>(rows: &[[f64; N]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_parts(vec![rows.len(), N], data)
    }

    /// A `[n, 1]` column.
    pub fn column(values: Vec<f64>) -> Self {
        Self::from_parts(vec![values.len(), 1], values)
    }

    /// A `[1, n]` row.
    pub fn row(values: Vec<f64>) -> Self {
        Self::from_parts(vec![1, values.len()], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// `(rows, cols)` view of a rank <= 2 tensor; rank 1 is treated as a row.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.len() {
            0 => Some((1, 1)),
            1 => Some((1, self.shape[0])),
            2 => Some((self.shape[0], self.shape[1])),
            _ => None,
        }
    }

    pub fn get2(&self, row: usize, col: usize) -> f64 {
        let (_, cols) = self.matrix_dims().expect("rank <= 2");
        self.data[row * cols + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Numpy broadcasting of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Flat index in `src` for every flat index of `out`, where `src` broadcasts to `out`.
pub(crate) fn broadcast_index_map(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        let oi = i + rank - src.len();
        strides[oi] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let total: usize = out.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut flat = 0usize;
    for _ in 0..total {
        map.push(flat);
        for d in (0..rank).rev() {
            idx[d] += 1;
            flat += strides[d];
            if idx[d] < out[d] {
                break;
            }
            flat -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

enum Layout {
    Same,
    Scalar,
    Rows { cols: usize },
    Cols { cols: usize },
    General(Vec<usize>),
}

fn layout(src: &Tensor, out: &[usize]) -> Layout {
    if src.shape() == out {
        return Layout::Same;
    }
    if src.len() == 1 {
        return Layout::Scalar;
    }
    if out.len() == 2 {
        let (r, c) = (out[0], out[1]);
        match src.shape() {
            [1, sc] | [sc] if *sc == c => return Layout::Rows { cols: c },
            [sr, 1] if *sr == r => return Layout::Cols { cols: c },
            _ => {}
        }
    }
    Layout::General(broadcast_index_map(src.shape(), out))
}

#[inline]
fn fetch(layout: &Layout, src: &[f64], i: usize) -> f64 {
    match layout {
        Layout::Same => src[i],
        Layout::Scalar => src[0],
        Layout::Rows { cols } => src[i % cols],
        Layout::Cols { cols } => src[i / cols],
        Layout::General(map) => src[map[i]],
    }
}

/// Elementwise binary op under broadcasting.
pub(crate) fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::from_parts(a.shape.clone(), data));
    }
    let out = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::ShapeMismatch {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    })?;
    let la = layout(a, &out);
    let lb = layout(b, &out);
    let total: usize = out.iter().product();
    let data = (0..total)
        .map(|i| f(fetch(&la, &a.data, i), fetch(&lb, &b.data, i)))
        .collect();
    Ok(Tensor::from_parts(out, data))
}

/// Expand `src` to `out` (which it must broadcast to).
pub(crate) fn broadcast_to(src: &Tensor, out: &[usize]) -> Tensor {
    let l = layout(src, out);
    let total: usize = out.iter().product();
    let data = (0..total).map(|i| fetch(&l, &src.data, i)).collect();
    Tensor::from_parts(out.to_vec(), data)
}

/// Sum `grad` (of broadcast shape) down to `target`, the reverse of `broadcast_to`.
pub(crate) fn sum_to_shape(grad: Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad;
    }
    let n: usize = target.iter().product();
    let mut out = vec![0.0; n];
    if n == 1 {
        out[0] = grad.sum();
    } else {
        match layout(&Tensor::from_parts(target.to_vec(), vec![0.0; n]), grad.shape()) {
            Layout::Same => out.copy_from_slice(&grad.data),
            Layout::Scalar => out[0] = grad.sum(),
            Layout::Rows { cols } => {
                for (i, g) in grad.data.iter().enumerate() {
                    out[i % cols] += g;
                }
            }
            Layout::Cols { cols } => {
                for (i, g) in grad.data.iter().enumerate() {
                    out[i / cols] += g;
                }
            }
            Layout::General(map) => {
                for (g, &m) in grad.data.iter().zip(&map) {
                    out[m] += g;
                }
            }
        }
    }
    Tensor::from_parts(target.to_vec(), out)
}

/// `[m,k] x [k,n]` product with optional transposes of either operand.
pub(crate) fn matmul(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Result<Tensor> {
    let (ar, ac) = a.matrix_dims().ok_or_else(|| Error::invalid("matmul needs rank <= 2"))?;
    let (br, bc) = b.matrix_dims().ok_or_else(|| Error::invalid("matmul needs rank <= 2"))?;
    let (m, k, rsa, csa) = if ta { (ac, ar, 1, ac) } else { (ar, ac, ac, 1) };
    let (k2, n, rsb, csb) = if tb { (bc, br, 1, bc) } else { (br, bc, bc, 1) };
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    // SAFETY: pointers cover m*k, k*n and m*n elements with the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}
