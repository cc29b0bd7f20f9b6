//! Per-pixel uncertainty metrics.

use crate::error::{Error, Result};

/// Variances below this are raised to it before entering the NLL.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-pixel NLL (averaged over channels) and its mean over pixels.
pub fn nll_metric(mean: &[[f64; 3]], variance: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<(Vec<f64>, f64)> {
    if mean.len() != variance.len() || mean.len() != truth.len() {
        return Err(Error::invalid("mean, variance and ground truth differ in length"));
    }
    if mean.is_empty() {
        return Err(Error::invalid("no pixels to score"));
    }
    let per: Vec<f64> = mean
        .iter()
        .zip(variance)
        .zip(truth)
        .map(|((m, v), g)| {
            (0..3)
                .map(|c| {
                    let var = v[c].max(VARIANCE_FLOOR);
                    0.5 * (g[c] - m[c]).powi(2) / var + 0.5 * var.ln() + HALF_LN_2PI
                })
                .sum::<f64>()
                / 3.0
        })
        .collect();
    let avg = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, avg))
}

/// Fraction of channel variances that hit [`VARIANCE_FLOOR`].
pub fn floor_fraction(variance: &[[f64; 3]]) -> f64 {
    let hits = variance.iter().flatten().filter(|&&v| v < VARIANCE_FLOOR).count();
    hits as f64 / (3 * variance.len()).max(1) as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Spearman,
}

impl std::str::FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            _ => Err(Error::invalid(format!("unknown correlation `{s}`"))),
        }
    }
}

impl std::fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pearson => "pearson",
            Self::Spearman => "spearman",
        })
    }
}

/// Pearson correlation; `None` with fewer than two points or no spread.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    pearson(&ranks(a), &ranks(b))
}

/// Correlation between per-pixel squared error and predicted variance.
pub fn mse_uncertainty_correlation(sq_error: &[f64], variance: &[f64], kind: CorrelationKind) -> Option<f64> {
    match kind {
        CorrelationKind::Pearson => pearson(sq_error, variance),
        CorrelationKind::Spearman => spearman(sq_error, variance),
    }
}

/// Squared error and variance per pixel, both averaged over channels.
pub fn channel_means(mean: &[[f64; 3]], variance: &[[f64; 3]], truth: &[[f64; 3]]) -> (Vec<f64>, Vec<f64>) {
    let err = mean
        .iter()
        .zip(truth)
        .map(|(m, g)| (0..3).map(|c| (m[c] - g[c]).powi(2)).sum::<f64>() / 3.0)
        .collect();
    let var = variance.iter().map(|v| v.iter().sum::<f64>() / 3.0).collect();
    (err, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nll_constant() {
        let m = vec![[0.1, 0.5, 0.9]; 4];
        let (_, avg) = nll_metric(&m, &[[1.0; 3]; 4], &m).unwrap();
        assert!((avg - 0.918_938_533_204_672_8).abs() < 1e-12);
        let shifted: Vec<_> = m.iter().map(|p| p.map(|x| x + 1.0)).collect();
        let (_, avg) = nll_metric(&shifted, &[[1.0; 3]; 4], &m).unwrap();
        assert!((avg - 1.418_938_533_204_672_8).abs() < 1e-12);
    }

    #[test]
    fn confident_and_right_is_rewarded() {
        let m = vec![[0.3; 3]];
        let (_, avg) = nll_metric(&m, &[[0.0; 3]], &m).unwrap();
        assert!(avg < -5.0);
        assert_eq!(floor_fraction(&[[0.0; 3]]), 1.0);
    }

    #[test]
    fn correlation_signs() {
        let e = [0.1, 0.4, 0.2, 0.9];
        assert!((pearson(&e, &e).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = e.iter().map(|x| -x).collect();
        assert!((pearson(&e, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&e, &[1.0; 4]), None);
        assert_eq!(pearson(&[1.0], &[2.0]), None);
    }

    #[test]
    fn spearman_is_rank_based() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 10.0, 100.0, 1000.0];
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }
}
