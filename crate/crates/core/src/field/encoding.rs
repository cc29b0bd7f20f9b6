//! Frequency encoding `[v, sin(2^k v), cos(2^k v)]` for k in `0..L`.

use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionalEncodingConfig {
    pub l_position: usize,
    pub l_direction: usize,
    pub include_raw_input: bool,
}

impl Default for PositionalEncodingConfig {
    fn default() -> Self {
        Self {
            l_position: 6,
            l_direction: 2,
            include_raw_input: true,
        }
    }
}

impl PositionalEncodingConfig {
    pub fn position_width(&self) -> usize {
        encoded_width(3, self.l_position, self.include_raw_input)
    }

    pub fn direction_width(&self, dir_dim: usize) -> usize {
        encoded_width(dir_dim, self.l_direction, self.include_raw_input)
    }
}

pub fn encoded_width(input_dim: usize, octaves: usize, include_raw: bool) -> usize {
    input_dim * (2 * octaves + usize::from(include_raw))
}

/// Appends the encoding of `v` to `out`.
///
/// Layout: raw values (if enabled), then per octave all sines followed by
/// all cosines.
pub fn encode_into(v: &[f64], octaves: usize, include_raw: bool, out: &mut Vec<f64>) {
    if include_raw {
        out.extend_from_slice(v);
    }
    let mut freq = 1.0;
    for _ in 0..octaves {
        out.extend(v.iter().map(|x| (freq * x).sin()));
        out.extend(v.iter().map(|x| (freq * x).cos()));
        freq *= 2.0;
    }
}

pub fn encode(v: &[f64], octaves: usize, include_raw: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_width(v.len(), octaves, include_raw));
    encode_into(v, octaves, include_raw, &mut out);
    out
}

/// Encodes each row of `points` into one row of a `[rows, width]` tensor.
///
/// # Panics
/// If `points` is empty.
pub fn encode_rows<const D: usize>(points: &[[f64; D]], octaves: usize, include_raw: bool) -> Tensor {
    assert!(!points.is_empty(), "encode_rows needs at least one point");
    let width = encoded_width(D, octaves, include_raw);
    let mut data = Vec::with_capacity(points.len() * width);
    for p in points {
        encode_into(p, octaves, include_raw, &mut data);
    }
    Tensor::from_parts(vec![points.len(), width], data)
}
