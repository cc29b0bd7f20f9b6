use crate::dist::sigmoid;
use crate::error::{Error, Result};
use crate::render::{Ray, Vec3};

/// Axis-aligned box `[lo, hi]` per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBounds {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl SceneBounds {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self> {
        if (0..3).any(|i| !(lo[i] < hi[i])) {
            return Err(Error::invalid(format!("bounds need lo < hi per axis, got {lo:?} {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(half: f64) -> Self {
        Self {
            lo: [-half; 3],
            hi: [half; 3],
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Fills all of space.
    Everywhere,
    Ball { center: Vec3, radius: f64 },
    Cuboid { center: Vec3, half: Vec3 },
}

/// Radiance of a primitive as a function of position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Paint {
    Solid([f64; 3]),
    /// `base + amp * sin(freq . x + phase_c)` per channel.
    Waves {
        base: [f64; 3],
        amp: f64,
        freq: Vec3,
        phase: [f64; 3],
    },
}

impl Paint {
    fn at(&self, x: Vec3) -> [f64; 3] {
        match *self {
            Paint::Solid(c) => c,
            Paint::Waves {
                base,
                amp,
                freq,
                phase,
            } => {
                let s = freq[0] * x[0] + freq[1] * x[1] + freq[2] * x[2];
                [0, 1, 2].map(|c| base[c] + amp * (s + phase[c]).sin())
            }
        }
    }
}

/// One density blob with soft edges of width `edge`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub density: f64,
    pub edge: f64,
    pub paint: Paint,
}

impl Primitive {
    fn density_at(&self, x: Vec3) -> f64 {
        let s = |u: f64| sigmoid(u / self.edge);
        match self.shape {
            Shape::Everywhere => self.density,
            Shape::Ball { center, radius } => {
                let d = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) + (x[2] - center[2]).powi(2)).sqrt();
                self.density * s(radius - d)
            }
            Shape::Cuboid { center, half } => {
                self.density * (0..3).map(|i| s(half[i] - (x[i] - center[i]).abs())).product::<f64>()
            }
        }
    }
}

/// Closed-form density and radiance fields built from soft primitives.
///
/// Density is the sum of primitive densities; radiance is the
/// density-weighted mix of primitive paints, tinted slightly by view
/// direction.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub bounds: SceneBounds,
    /// Strength of the view-dependent tint, in `[0, 0.2]`.
    pub view_tint: f64,
    /// Plane `a x + b y + c z + d = 0`; the positive side is never seen by
    /// training cameras.
    pub partition: Option<[f64; 4]>,
}

impl AnalyticScene {
    pub fn density(&self, x: Vec3) -> f64 {
        self.primitives.iter().map(|p| p.density_at(x)).sum()
    }

    pub fn radiance(&self, x: Vec3, d: Vec3) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for p in &self.primitives {
            let w = p.density_at(x);
            if w > 0.0 {
                let c = p.paint.at(x);
                for i in 0..3 {
                    acc[i] += w * c[i];
                }
                total += w;
            }
        }
        let base = if total > 0.0 {
            acc.map(|a| a / total)
        } else {
            match self.primitives.first() {
                Some(p) => p.paint.at(x),
                None => [0.0; 3],
            }
        };
        let tint = 1.0 - self.view_tint * 0.5 * (1.0 - d[1]);
        base.map(|c| (c * tint).clamp(0.0, 1.0))
    }

    /// Uniform medium filling all space.
    pub fn uniform(density: f64, color: [f64; 3]) -> Self {
        Self {
            name: "uniform".into(),
            primitives: vec![Primitive {
                shape: Shape::Everywhere,
                density,
                edge: 1.0,
                paint: Paint::Solid(color),
            }],
            bounds: SceneBounds::cube(1.5),
            view_tint: 0.0,
            partition: None,
        }
    }

    /// A textured plate, thin in `y`.
    pub fn slab() -> Self {
        Self {
            name: "slab".into(),
            primitives: vec![Primitive {
                shape: Shape::Cuboid {
                    center: [0.0; 3],
                    half: [0.9, 0.2, 0.9],
                },
                density: 4.0,
                edge: 0.04,
                paint: Paint::Waves {
                    base: [0.55, 0.45, 0.4],
                    amp: 0.3,
                    freq: [2.5, 0.0, 1.5],
                    phase: [0.0, 2.0, 4.0],
                },
            }],
            bounds: SceneBounds::cube(1.5),
            view_tint: 0.1,
            partition: None,
        }
    }

    pub fn sphere() -> Self {
        Self {
            name: "sphere".into(),
            primitives: vec![Primitive {
                shape: Shape::Ball {
                    center: [0.0; 3],
                    radius: 0.8,
                },
                density: 4.0,
                edge: 0.04,
                paint: Paint::Waves {
                    base: [0.5, 0.5, 0.5],
                    amp: 0.35,
                    freq: [3.0, 2.0, 0.0],
                    phase: [0.0, 1.5, 3.0],
                },
            }],
            bounds: SceneBounds::cube(1.5),
            view_tint: 0.1,
            partition: None,
        }
    }

    /// Two balls that occlude each other from some viewpoints.
    pub fn two_spheres() -> Self {
        Self {
            name: "two_spheres".into(),
            primitives: vec![
                Primitive {
                    shape: Shape::Ball {
                        center: [-0.45, 0.0, 0.3],
                        radius: 0.45,
                    },
                    density: 5.0,
                    edge: 0.04,
                    paint: Paint::Solid([0.85, 0.25, 0.2]),
                },
                Primitive {
                    shape: Shape::Ball {
                        center: [0.45, 0.1, -0.3],
                        radius: 0.55,
                    },
                    density: 5.0,
                    edge: 0.04,
                    paint: Paint::Waves {
                        base: [0.25, 0.5, 0.75],
                        amp: 0.2,
                        freq: [0.0, 4.0, 2.0],
                        phase: [0.0, 1.0, 2.0],
                    },
                },
            ],
            bounds: SceneBounds::cube(1.5),
            view_tint: 0.1,
            partition: None,
        }
    }

    /// Forward-facing scene: a textured wall behind two balls, one on each
    /// side of the plane `x = 0`. Only the `x < 0` half is meant to be seen
    /// in training.
    pub fn hemisphere() -> Self {
        Self {
            name: "hemisphere".into(),
            primitives: vec![
                Primitive {
                    shape: Shape::Cuboid {
                        center: [0.0, 0.0, -1.0],
                        half: [4.0, 2.5, 0.25],
                    },
                    density: 8.0,
                    edge: 0.05,
                    paint: Paint::Waves {
                        base: [0.5, 0.5, 0.5],
                        amp: 0.3,
                        freq: [2.0, 1.0, 0.0],
                        phase: [0.0, 2.1, 4.2],
                    },
                },
                Primitive {
                    shape: Shape::Ball {
                        center: [-1.1, 0.0, 0.0],
                        radius: 0.5,
                    },
                    density: 5.0,
                    edge: 0.04,
                    paint: Paint::Solid([0.9, 0.3, 0.2]),
                },
                Primitive {
                    shape: Shape::Ball {
                        center: [1.1, 0.1, 0.1],
                        radius: 0.5,
                    },
                    density: 5.0,
                    edge: 0.04,
                    paint: Paint::Solid([0.2, 0.8, 0.3]),
                },
            ],
            bounds: SceneBounds::new([-3.0, -2.0, -1.5], [3.0, 2.0, 1.0]).expect("valid"),
            view_tint: 0.05,
            partition: Some([1.0, 0.0, 0.0, 0.0]),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "slab" => Ok(Self::slab()),
            "sphere" => Ok(Self::sphere()),
            "two_spheres" => Ok(Self::two_spheres()),
            "hemisphere" => Ok(Self::hemisphere()),
            _ => Err(Error::invalid(format!(
                "unknown scene `{name}` (expected slab, sphere, two_spheres or hemisphere)"
            ))),
        }
    }
}

/// Dense trapezoidal quadrature of the rendering integral on the true fields.
///
/// Returns the color and the expected termination depth (far plane for an
/// empty ray).
pub fn oracle_render(scene: &AnalyticScene, ray: &Ray, points: usize) -> Result<([f64; 3], f64)> {
    if points < 256 {
        return Err(Error::invalid(format!("oracle needs >= 256 quadrature points, got {points}")));
    }
    let h = (ray.far - ray.near) / (points - 1) as f64;
    let mut color = [0.0; 3];
    let mut mass = 0.0;
    let mut moment = 0.0;
    let mut optical = 0.0;
    let mut prev: Option<(f64, f64, [f64; 3])> = None;
    for i in 0..points {
        let t = ray.near + i as f64 * h;
        let x = ray.at(t);
        let alpha = scene.density(x);
        if let Some((_, a_prev, _)) = prev {
            optical += 0.5 * (a_prev + alpha) * h;
        }
        let trans = (-optical).exp();
        let r = scene.radiance(x, ray.dir);
        let w = if i == 0 || i == points - 1 { 0.5 * h } else { h };
        let f = w * trans * alpha;
        for c in 0..3 {
            color[c] += f * r[c];
        }
        mass += f;
        moment += f * t;
        prev = Some((t, alpha, r));
    }
    let depth = (moment + (1e-8 - mass).max(0.0) * ray.far) / mass.max(1e-8);
    Ok((color, depth))
}
