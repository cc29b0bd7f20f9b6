use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// A ray segment `x_o + t d` for `t` in `[near, far]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    /// Normalizes `dir`; rejects a zero direction or `near >= far`.
    pub fn new(origin: Vec3, dir: Vec3, near: f64, far: f64) -> Result<Self> {
        let n = norm(dir);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("ray direction must be nonzero"));
        }
        if !(near < far && near.is_finite() && far.is_finite()) {
            return Err(Error::invalid(format!("need near < far, got {near} and {far}")));
        }
        Ok(Self {
            origin,
            dir: normalize(dir),
            near,
            far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.dir[0],
            self.origin[1] + t * self.dir[1],
            self.origin[2] + t * self.dir[2],
        ]
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Principal point at the image center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Self {
            width,
            height,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

/// World-from-camera `[R | t]`, row-major. The camera looks down its `-z`
/// axis with `+y` up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose(pub [[f64; 4]; 3]);

impl Pose {
    pub fn identity() -> Self {
        Self([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    }

    pub fn from_flat(v: &[f64; 12]) -> Self {
        let mut m = [[0.0; 4]; 3];
        for (i, x) in v.iter().enumerate() {
            m[i / 4][i % 4] = *x;
        }
        Self(m)
    }

    pub fn to_flat(&self) -> [f64; 12] {
        let mut v = [0.0; 12];
        for (i, x) in v.iter_mut().enumerate() {
            *x = self.0[i / 4][i % 4];
        }
        v
    }

    pub fn center(&self) -> Vec3 {
        [self.0[0][3], self.0[1][3], self.0[2][3]]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn rotation_det(&self) -> f64 {
        let m = &self.0;
        let col = |j: usize| [m[0][j], m[1][j], m[2][j]];
        dot(col(0), cross(col(1), col(2)))
    }

    /// Largest deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = &self.0;
        let col = |j: usize| [m[0][j], m[1][j], m[2][j]];
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(col(i), col(j)) - target).abs());
            }
        }
        worst
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = sub(target, eye);
        if norm(forward) == 0.0 {
            return Err(Error::invalid("look_at eye and target coincide"));
        }
        let forward = normalize(forward);
        let right = cross(forward, up);
        if norm(right) < 1e-12 {
            return Err(Error::invalid("look_at up vector is parallel to the view direction"));
        }
        let right = normalize(right);
        let true_up = cross(right, forward);
        let back = [-forward[0], -forward[1], -forward[2]];
        let mut m = [[0.0; 4]; 3];
        for r in 0..3 {
            m[r] = [right[r], true_up[r], back[r], eye[r]];
        }
        Ok(Self(m))
    }
}

/// Ray through continuous pixel coordinates `(u, v)`; pixel centers sit at
/// half-integers. `v` grows downward.
pub fn generate_ray(
    pose: &Pose,
    intrinsics: &Intrinsics,
    pixel: (f64, f64),
    near: f64,
    far: f64,
) -> Result<Ray> {
    if pose.rotation_det().abs() < 1e-9 {
        return Err(Error::invalid("camera pose rotation is singular"));
    }
    if !(intrinsics.focal > 0.0) {
        return Err(Error::invalid("focal length must be positive"));
    }
    let (u, v) = pixel;
    let (w, h) = (intrinsics.width as f64, intrinsics.height as f64);
    if !(0.0..=w).contains(&u) || !(0.0..=h).contains(&v) {
        return Err(Error::invalid(format!("pixel ({u}, {v}) outside {w}x{h} image")));
    }
    let cam = [
        (u - intrinsics.cx) / intrinsics.focal,
        -(v - intrinsics.cy) / intrinsics.focal,
        -1.0,
    ];
    Ray::new(pose.center(), pose.rotate(cam), near, far)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_ray() {
        let k = Intrinsics::centered(64, 64, 50.0);
        let r = generate_ray(&Pose::identity(), &k, (32.0, 32.0), 0.0, 1.0).unwrap();
        assert_eq!(r.dir, [0.0, 0.0, -1.0]);
        assert_eq!(r.origin, [0.0; 3]);
    }

    #[test]
    fn translation_shifts_origin_only() {
        let k = Intrinsics::centered(64, 64, 50.0);
        let mut p = Pose::identity();
        p.0[0][3] = 1.0;
        p.0[2][3] = -2.0;
        let a = generate_ray(&Pose::identity(), &k, (10.5, 3.5), 0.0, 1.0).unwrap();
        let b = generate_ray(&p, &k, (10.5, 3.5), 0.0, 1.0).unwrap();
        assert_eq!(a.dir, b.dir);
        assert_eq!(b.origin, [1.0, 0.0, -2.0]);
    }

    #[test]
    fn doubling_focal_halves_tangent() {
        let tan = |f: f64| {
            let k = Intrinsics::centered(64, 64, f);
            let r = generate_ray(&Pose::identity(), &k, (52.0, 32.0), 0.0, 1.0).unwrap();
            (r.dir[0] / -r.dir[2]).abs()
        };
        assert!((tan(40.0) / tan(80.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_pose_rejected() {
        let k = Intrinsics::centered(8, 8, 5.0);
        let p = Pose([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]);
        assert!(generate_ray(&p, &k, (4.0, 4.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn look_at_is_orthonormal_and_points_at_target() {
        let p = Pose::look_at([3.0, 1.0, 2.0], [0.0; 3], [0.0, 1.0, 0.0]).unwrap();
        assert!(p.orthonormality_error() < 1e-12);
        assert!((p.rotation_det() - 1.0).abs() < 1e-12);
        let k = Intrinsics::centered(16, 16, 10.0);
        let r = generate_ray(&p, &k, (8.0, 8.0), 0.0, 10.0).unwrap();
        let to_target = normalize([-3.0, -1.0, -2.0]);
        assert!(dot(r.dir, to_target) > 1.0 - 1e-12);
    }
}
