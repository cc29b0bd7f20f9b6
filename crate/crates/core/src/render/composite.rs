//! Quadrature of the volume rendering integral along sampled rays.
//!
//! Both integrators work on batches: `M` rows (one per ray trajectory) of
//! `N` samples each. The trapezoidal rule runs on the nodes
//! `near, t_1, .., t_N, far`, with the end nodes taking the field values of
//! the nearest sample. The alpha rule gives each sample the cell between the
//! midpoints to its neighbours, with the outer cells reaching `near` and `far`.

use crate::autodiff::{concat, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::sampling::RaySampleGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Integrator {
    #[default]
    Trapezoidal,
    Alpha,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoidal" => Ok(Self::Trapezoidal),
            "alpha" => Ok(Self::Alpha),
            _ => Err(Error::invalid(format!("unknown integrator `{s}`"))),
        }
    }
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Trapezoidal => "trapezoidal",
            Self::Alpha => "alpha",
        })
    }
}

/// Constant per-row quantities for compositing a batch.
#[derive(Clone, Debug)]
pub struct CompositeLayout {
    integrator: Integrator,
    rows: usize,
    n: usize,
    /// trapezoidal: `[M, N+1]` node spacings; alpha: `[M, N]` cell widths
    spacing: Tensor,
    /// trapezoidal only: `[M, N+2]` quadrature coefficients
    coeff: Option<Tensor>,
    /// `[M, W]` depth of each weighted node
    positions: Tensor,
    far: Vec<f64>,
}

impl CompositeLayout {
    /// Layout for `grids`, each repeated `repeat` times in consecutive rows.
    pub fn new(integrator: Integrator, grids: &[RaySampleGrid], repeat: usize) -> Result<Self> {
        let n = grids.first().map(RaySampleGrid::len).unwrap_or(0);
        if n == 0 || repeat == 0 || grids.iter().any(|g| g.len() != n) {
            return Err(Error::invalid("compositing needs nonempty grids of equal length"));
        }
        let rows = grids.len() * repeat;
        let (sw, pw) = match integrator {
            Integrator::Trapezoidal => (n + 1, n + 2),
            Integrator::Alpha => (n, n),
        };
        let mut spacing = Vec::with_capacity(rows * sw);
        let mut positions = Vec::with_capacity(rows * pw);
        let mut coeff = Vec::new();
        let mut far = Vec::with_capacity(rows);
        for g in grids {
            let (s, p, c) = match integrator {
                Integrator::Trapezoidal => {
                    let nodes = g.trapezoid_nodes();
                    let d: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
                    let c: Vec<f64> = (0..n + 2)
                        .map(|m| {
                            let left = if m == 0 { 0.0 } else { d[m - 1] };
                            let right = if m == n + 1 { 0.0 } else { d[m] };
                            0.5 * (left + right)
                        })
                        .collect();
                    (d, nodes, c)
                }
                Integrator::Alpha => (g.cell_widths(), g.t().to_vec(), Vec::new()),
            };
            for _ in 0..repeat {
                spacing.extend_from_slice(&s);
                positions.extend_from_slice(&p);
                coeff.extend_from_slice(&c);
                far.push(g.far());
            }
        }
        Ok(Self {
            integrator,
            rows,
            n,
            spacing: Tensor::from_parts(vec![rows, sw], spacing),
            coeff: (integrator == Integrator::Trapezoidal)
                .then(|| Tensor::from_parts(vec![rows, pw], coeff)),
            positions: Tensor::from_parts(vec![rows, pw], positions),
            far,
        })
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    /// Per-sample values `[M, N]` extended to the weighted nodes.
    pub fn augment<'t>(&self, v: Var<'t>) -> Var<'t> {
        match self.integrator {
            Integrator::Trapezoidal => {
                concat(&[v.slice_cols(0, 1), v, v.slice_cols(self.n - 1, 1)], 1)
            }
            Integrator::Alpha => v,
        }
    }

    /// Compositing weights `[M, W]` and transmittance at each weighted node.
    pub fn weights<'t>(&self, alpha: Var<'t>) -> (Var<'t>, Var<'t>) {
        let tape = alpha.tape();
        let spacing = tape.constant(self.spacing.clone());
        match self.integrator {
            Integrator::Trapezoidal => {
                let a = self.augment(alpha);
                let seg = (a.slice_cols(0, self.n + 1) + a.slice_cols(1, self.n + 1)) * spacing * 0.5;
                let zero = tape.constant(Tensor::zeros(&[self.rows, 1]));
                let exponent = concat(&[zero, seg.cumsum()], 1);
                let trans = (-exponent).exp();
                let coeff = tape.constant(self.coeff.clone().expect("trapezoidal layout"));
                (coeff * trans * a, trans)
            }
            Integrator::Alpha => {
                let x = alpha * spacing;
                let trans = (-(x.cumsum() - x)).exp();
                let opacity = -((-x).exp()) + 1.0;
                (trans * opacity, trans)
            }
        }
    }

    /// `sum_j w_j v_j` per row for per-sample values `[M, N]`.
    pub fn integrate<'t>(&self, weights: Var<'t>, values: Var<'t>) -> Var<'t> {
        (weights * self.augment(values)).sum_cols()
    }

    /// Expected termination depth per row from evaluated weights.
    ///
    /// Mass missing below `1e-8` is placed at the far plane, so an empty ray
    /// reports `far` and every result lies in `[near, far]`.
    pub fn expected_depths(&self, weights: &Tensor) -> Vec<f64> {
        let w_cols = self.positions.shape()[1];
        weights
            .data()
            .chunks_exact(w_cols)
            .zip(self.positions.data().chunks_exact(w_cols))
            .zip(&self.far)
            .map(|((w, t), &far)| expected_depth_from_weights(w, t, far))
            .collect()
    }
}

pub(crate) fn expected_depth_from_weights(w: &[f64], t: &[f64], far: f64) -> f64 {
    const FLOOR: f64 = 1e-8;
    let mass: f64 = w.iter().sum();
    let moment: f64 = w.iter().zip(t).map(|(w, t)| w * t).sum();
    (moment + (FLOOR - mass).max(0.0) * far) / mass.max(FLOOR)
}

/// Composited colors `[M, 1]` per channel plus the weights that produced them.
#[derive(Clone, Copy, Debug)]
pub struct Composited<'t> {
    pub color: [Var<'t>; 3],
    pub weights: Var<'t>,
    pub transmittance: Var<'t>,
}

/// Composites `alpha` `[M, N]` and per-channel `radiance` `[M, N]`.
pub fn composite_batch<'t>(
    layout: &CompositeLayout,
    alpha: Var<'t>,
    radiance: [Var<'t>; 3],
) -> Composited<'t> {
    let (weights, transmittance) = layout.weights(alpha);
    Composited {
        color: radiance.map(|r| layout.integrate(weights, r)),
        weights,
        transmittance,
    }
}

/// One joint draw of radiance and density at every sample of a ray.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub radiance: Vec<[f64; 3]>,
    pub density: Vec<f64>,
}

impl TrajectorySample {
    pub fn constant(n: usize, radiance: [f64; 3], density: f64) -> Self {
        Self {
            radiance: vec![radiance; n],
            density: vec![density; n],
        }
    }
}

struct Single {
    color: [f64; 3],
    weights: Tensor,
    transmittance: Vec<f64>,
    layout: CompositeLayout,
}

fn single(traj: &TrajectorySample, grid: &RaySampleGrid, integrator: Integrator) -> Result<Single> {
    let n = grid.len();
    if traj.density.len() != n || traj.radiance.len() != n {
        return Err(Error::invalid(format!(
            "trajectory has {} densities and {} radiances for {n} samples",
            traj.density.len(),
            traj.radiance.len()
        )));
    }
    let layout = CompositeLayout::new(integrator, std::slice::from_ref(grid), 1)?;
    let tape = Tape::new();
    let alpha = tape.constant(Tensor::from_parts(vec![1, n], traj.density.clone()));
    let radiance = [0, 1, 2].map(|c| {
        tape.constant(Tensor::from_parts(vec![1, n], traj.radiance.iter().map(|r| r[c]).collect()))
    });
    let out = composite_batch(&layout, alpha, radiance);
    tape.check()?;
    let color = out.color.map(|c| c.item());
    let weights = out.weights.value().clone();
    let transmittance = out.transmittance.value().data().to_vec();
    Ok(Single {
        color,
        weights,
        transmittance,
        layout,
    })
}

/// Trapezoidal quadrature of the rendering integral for one trajectory.
pub fn composite_trapezoidal(traj: &TrajectorySample, grid: &RaySampleGrid) -> Result<[f64; 3]> {
    Ok(single(traj, grid, Integrator::Trapezoidal)?.color)
}

/// Alpha compositing `sum T_i (1 - exp(-alpha_i w_i)) r_i` for one trajectory.
pub fn composite_alpha(traj: &TrajectorySample, grid: &RaySampleGrid) -> Result<[f64; 3]> {
    Ok(single(traj, grid, Integrator::Alpha)?.color)
}

pub fn expected_depth(density: &[f64], grid: &RaySampleGrid, integrator: Integrator) -> Result<f64> {
    let traj = TrajectorySample {
        radiance: vec![[0.5; 3]; density.len()],
        density: density.to_vec(),
    };
    let s = single(&traj, grid, integrator)?;
    Ok(s.layout.expected_depths(&s.weights)[0])
}

/// Transmittance at each weighted node (trapezoidal: `near, t_1.., far`).
pub fn transmittance(density: &[f64], grid: &RaySampleGrid, integrator: Integrator) -> Result<Vec<f64>> {
    let traj = TrajectorySample {
        radiance: vec![[0.5; 3]; density.len()],
        density: density.to_vec(),
    };
    Ok(single(&traj, grid, integrator)?.transmittance)
}
