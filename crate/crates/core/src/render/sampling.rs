use rand::Rng;

use crate::error::{Error, Result};

/// Sample depths `t_1 < .. < t_N` inside `[near, far]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySampleGrid {
    t: Vec<f64>,
    near: f64,
    far: f64,
}

impl RaySampleGrid {
    pub fn new(t: Vec<f64>, near: f64, far: f64) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::invalid("sample grid is empty"));
        }
        if !(near < far) {
            return Err(Error::invalid(format!("need near < far, got {near} and {far}")));
        }
        let mut prev = near;
        for &ti in &t {
            if !(ti >= prev) || ti > far {
                return Err(Error::invalid(format!(
                    "sample depths must ascend inside [{near}, {far}]; negative spacing at t = {ti}"
                )));
            }
            prev = ti;
        }
        Ok(Self { t, near, far })
    }

    /// Bin midpoints `t_i = near + (i - 1/2) (far - near) / n`.
    pub fn midpoints(near: f64, far: f64, n: usize) -> Result<Self> {
        stratified_with(near, far, n, || 0.5)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    /// `delta_i = t_i - t_{i-1}` with `t_0 = near`.
    pub fn deltas(&self) -> Vec<f64> {
        let mut prev = self.near;
        self.t
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    /// Trapezoid nodes `near, t_1, .., t_N, far`.
    pub fn trapezoid_nodes(&self) -> Vec<f64> {
        let mut nodes = Vec::with_capacity(self.t.len() + 2);
        nodes.push(self.near);
        nodes.extend_from_slice(&self.t);
        nodes.push(self.far);
        nodes
    }

    /// Widths of the cells `[b_{i-1}, b_i]` owned by each sample, where the
    /// boundaries are `near`, the midpoints between neighbours, and `far`.
    pub fn cell_widths(&self) -> Vec<f64> {
        let n = self.t.len();
        (0..n)
            .map(|i| {
                let lo = if i == 0 { self.near } else { 0.5 * (self.t[i - 1] + self.t[i]) };
                let hi = if i + 1 == n { self.far } else { 0.5 * (self.t[i] + self.t[i + 1]) };
                hi - lo
            })
            .collect()
    }

    pub fn max_bin_width(&self) -> f64 {
        (self.far - self.near) / self.t.len() as f64
    }
}

/// One uniform draw in each of `n` equal bins of `[near, far]`.
pub fn stratified_sample(near: f64, far: f64, n: usize, rng: &mut impl Rng) -> Result<RaySampleGrid> {
    stratified_with(near, far, n, || rng.random::<f64>())
}

/// Like [`stratified_sample`] with an explicit source of `[0, 1)` offsets.
pub fn stratified_with(
    near: f64,
    far: f64,
    n: usize,
    mut offset: impl FnMut() -> f64,
) -> Result<RaySampleGrid> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples per ray, got {n}")));
    }
    let width = (far - near) / n as f64;
    let t = (0..n)
        .map(|i| near + (i as f64 + offset()) * width)
        .collect();
    RaySampleGrid::new(t, near, far)
}
