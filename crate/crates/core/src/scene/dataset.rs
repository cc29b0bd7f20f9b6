use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use super::analytic::{oracle_render, AnalyticScene, SceneBounds};
use crate::error::{Error, Result};
use crate::render::{generate_ray, read_png_rgb, write_png_rgb, Intrinsics, Pose, Ray, RgbImage};

/// Where the cameras of a generated dataset sit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CameraRig {
    /// Upper hemisphere of radius `radius` around the origin, looking at it,
    /// elevations between `min_elev` and `max_elev` (radians, `+y` up).
    Dome { radius: f64, min_elev: f64, max_elev: f64 },
    /// Forward-facing cameras at height `z` looking down `-z`, spread over
    /// `x` in `[-x_extent, x_extent]` and `y` in `[-y_extent, y_extent]`.
    Forward { z: f64, x_extent: f64, y_extent: f64 },
}

impl CameraRig {
    pub fn default_for(scene: &AnalyticScene) -> Self {
        if scene.partition.is_some() {
            CameraRig::Forward {
                z: 2.5,
                x_extent: 2.6,
                y_extent: 0.3,
            }
        } else {
            CameraRig::Dome {
                radius: 3.0,
                min_elev: 0.25,
                max_elev: 1.1,
            }
        }
    }

    /// `n` poses, evenly spread with a little seeded jitter.
    pub fn poses(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Pose>> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                match *self {
                    CameraRig::Dome {
                        radius,
                        min_elev,
                        max_elev,
                    } => {
                        let elev = min_elev + (max_elev - min_elev) * (u + rng.random_range(-0.3..0.3) / n as f64).clamp(0.0, 1.0);
                        let az = i as f64 * golden + rng.random_range(-0.05..0.05);
                        let eye = [
                            radius * elev.cos() * az.cos(),
                            radius * elev.sin(),
                            radius * elev.cos() * az.sin(),
                        ];
                        Pose::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0])
                    }
                    CameraRig::Forward {
                        z,
                        x_extent,
                        y_extent,
                    } => {
                        let x = -x_extent + 2.0 * x_extent * u;
                        let y = y_extent * (2.0 * rng.random::<f64>() - 1.0);
                        let mut p = Pose::identity();
                        p.0[0][3] = x;
                        p.0[1][3] = y;
                        p.0[2][3] = z;
                        Ok(p)
                    }
                }
            })
            .collect()
    }

    pub fn near_far(&self, scene: &AnalyticScene) -> (f64, f64) {
        match *self {
            CameraRig::Dome { radius, .. } => {
                let r = scene.bounds.hi.iter().chain(scene.bounds.lo.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
                ((radius - r).max(0.05), radius + r)
            }
            CameraRig::Forward { z, .. } => ((z - scene.bounds.hi[2]).max(0.05), z - scene.bounds.lo[2]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewEntry {
    pub file: String,
    pub pose: Pose,
}

/// Parsed `manifest.txt` plus the directory it lives in.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub name: String,
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
    pub views: Vec<ViewEntry>,
    pub partition: Option<[f64; 4]>,
    pub bounds: Option<SceneBounds>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        let mut s = format!("{} {} {} {} {}\n", k.width, k.height, k.focal, self.near, self.far);
        for v in &self.views {
            s.push_str(&v.file);
            for x in v.pose.to_flat() {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "name {}", self.name);
        if let Some(p) = self.partition {
            let _ = writeln!(s, "partition {} {} {} {}", p[0], p[1], p[2], p[3]);
        }
        if let Some(b) = self.bounds {
            let _ = writeln!(s, "bounds {} {} {} {} {} {}", b.lo[0], b.hi[0], b.lo[1], b.hi[1], b.lo[2], b.hi[2]);
        }
        s
    }

    /// Parses manifest text; `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path, root: PathBuf) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let floats = |line: usize, toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(line, format!("`{t}` is not a finite number")))
                })
                .collect()
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty manifest".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(err(hl, "header must be `width height focal near far`".into()));
        }
        let dims: Vec<usize> = toks[..2]
            .iter()
            .map(|t| t.parse::<usize>().ok().filter(|&v| v > 0))
            .collect::<Option<_>>()
            .ok_or_else(|| err(hl, "width and height must be positive integers".into()))?;
        let hf = floats(hl, &toks[2..])?;
        if !(hf[0] > 0.0) || !(hf[1] < hf[2]) {
            return Err(err(hl, "need focal > 0 and near < far".into()));
        }
        let mut m = DatasetManifest {
            root,
            name: String::from("scene"),
            intrinsics: Intrinsics::centered(dims[0], dims[1], hf[0]),
            near: hf[1],
            far: hf[2],
            views: Vec::new(),
            partition: None,
            bounds: None,
        };
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "name" => m.name = toks[1..].join(" "),
                "partition" => {
                    let v = floats(ln, &toks[1..])?;
                    if v.len() != 4 || v[..3].iter().all(|&c| c == 0.0) {
                        return Err(err(ln, "partition needs a b c d with a nonzero normal".into()));
                    }
                    m.partition = Some([v[0], v[1], v[2], v[3]]);
                }
                "bounds" => {
                    let v = floats(ln, &toks[1..])?;
                    if v.len() != 6 {
                        return Err(err(ln, "bounds needs xl xr yl yr zl zr".into()));
                    }
                    let b = SceneBounds::new([v[0], v[2], v[4]], [v[1], v[3], v[5]])
                        .map_err(|e| err(ln, e.to_string()))?;
                    m.bounds = Some(b);
                }
                file => {
                    if toks.len() != 13 {
                        return Err(err(ln, format!("view line needs a filename and 12 pose values, got {} tokens", toks.len())));
                    }
                    let v = floats(ln, &toks[1..])?;
                    let pose = Pose::from_flat(&v.try_into().expect("12 values"));
                    let ortho = pose.orthonormality_error();
                    if ortho > 1e-6 {
                        return Err(err(ln, format!("pose rotation is not orthonormal (error {ortho:.2e})")));
                    }
                    m.views.push(ViewEntry {
                        file: file.to_string(),
                        pose,
                    });
                }
            }
        }
        if m.views.is_empty() {
            return Err(err(hl, "manifest lists no views".into()));
        }
        Ok(m)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text, &path, dir.to_path_buf())
    }

    pub fn write(&self) -> Result<()> {
        let path = self.root.join("manifest.txt");
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }

    /// Ray through the center of pixel `(i, j)` (column, row) of `view`.
    pub fn pixel_ray(&self, view: usize, i: usize, j: usize) -> Result<Ray> {
        generate_ray(
            &self.views[view].pose,
            &self.intrinsics,
            (i as f64 + 0.5, j as f64 + 0.5),
            self.near,
            self.far,
        )
    }

    /// All rays of `view`, row-major.
    pub fn view_rays(&self, view: usize) -> Result<Vec<Ray>> {
        let k = &self.intrinsics;
        let mut rays = Vec::with_capacity(k.width * k.height);
        for j in 0..k.height {
            for i in 0..k.width {
                rays.push(self.pixel_ray(view, i, j)?);
            }
        }
        Ok(rays)
    }

    /// Scene box for the KL grid: the recorded bounds, or else the box
    /// spanned by the cameras' frustum corners.
    pub fn scene_bounds(&self) -> Result<SceneBounds> {
        if let Some(b) = self.bounds {
            return Ok(b);
        }
        let k = &self.intrinsics;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in 0..self.views.len() {
            for (u, w) in [(0, 0), (k.width, 0), (0, k.height), (k.width, k.height)] {
                let ray = generate_ray(&self.views[v].pose, k, (u as f64, w as f64), self.near, self.far)?;
                for t in [self.near, self.far] {
                    let x = ray.at(t);
                    for a in 0..3 {
                        lo[a] = lo[a].min(x[a]);
                        hi[a] = hi[a].max(x[a]);
                    }
                }
            }
        }
        SceneBounds::new(lo, hi)
    }
}

/// Loaded images alongside their manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<RgbImage>,
}

/// One observed pixel: its color and the ray through it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingTriplet {
    pub color: [f64; 3],
    pub ray: Ray,
}

impl Dataset {
    /// One triplet per pixel of each listed view, view-major then row-major.
    pub fn triplets(&self, views: &[usize]) -> Result<Vec<TrainingTriplet>> {
        let mut out = Vec::new();
        for &v in views {
            let rays = self.manifest.view_rays(v)?;
            for (ray, &color) in rays.into_iter().zip(&self.images[v].pixels) {
                out.push(TrainingTriplet { color, ray });
            }
        }
        Ok(out)
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(dir)?;
    let k = manifest.intrinsics;
    let images = manifest
        .views
        .iter()
        .map(|v| {
            let path = dir.join(&v.file);
            let img = read_png_rgb(&path)?;
            if (img.width, img.height) != (k.width, k.height) {
                return Err(Error::Image {
                    path,
                    msg: format!(
                        "image is {}x{} but the manifest says {}x{}",
                        img.width, img.height, k.width, k.height
                    ),
                });
            }
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, images })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub fov: f64,
    pub rig: Option<CameraRig>,
    pub oracle_points: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_views: 25,
            width: 64,
            height: 64,
            fov: 0.7,
            rig: None,
            oracle_points: 1024,
        }
    }
}

/// Renders `spec.n_views` oracle images of `scene` into `dir/images/` and
/// writes `dir/manifest.txt`.
pub fn generate_dataset(scene: &AnalyticScene, spec: &DatasetSpec, dir: &Path, seed: u64) -> Result<DatasetManifest> {
    if spec.n_views < 2 {
        return Err(Error::invalid("a dataset needs at least 2 views"));
    }
    let rig = spec.rig.unwrap_or_else(|| CameraRig::default_for(scene));
    let poses = rig.poses(spec.n_views, &mut crate::rng::stream(seed, "poses", 0))?;
    let (near, far) = rig.near_far(scene);
    let focal = spec.width as f64 / 2.0 / (spec.fov / 2.0).tan();
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut manifest = DatasetManifest {
        root: dir.to_path_buf(),
        name: scene.name.clone(),
        intrinsics: Intrinsics::centered(spec.width, spec.height, focal),
        near,
        far,
        views: poses
            .into_iter()
            .enumerate()
            .map(|(i, pose)| ViewEntry {
                file: format!("images/{i:03}.png"),
                pose,
            })
            .collect(),
        partition: scene.partition,
        bounds: Some(scene.bounds),
    };
    for v in 0..manifest.views.len() {
        let pixels = manifest
            .view_rays(v)?
            .iter()
            .map(|ray| oracle_render(scene, ray, spec.oracle_points).map(|(c, _)| c))
            .collect::<Result<Vec<_>>>()?;
        write_png_rgb(&dir.join(&manifest.views[v].file), spec.width, spec.height, &pixels)?;
    }
    manifest.write()?;
    manifest.root = dir.to_path_buf();
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainTestSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn train_count(total: usize, fraction: f64) -> Result<usize> {
    if total < 2 {
        return Err(Error::invalid("splitting needs at least 2 views"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {fraction} outside (0, 1)")));
    }
    Ok(((fraction * total as f64).round() as usize).clamp(1, total - 1))
}

/// Random `round(fraction * n)` training views (at least 1), the rest for test.
pub fn split_views(n_views: usize, fraction: f64, seed: u64) -> Result<TrainTestSplit> {
    let n_train = train_count(n_views, fraction)?;
    let mut idx: Vec<usize> = (0..n_views).collect();
    idx.shuffle(&mut crate::rng::stream(seed, "split", 0));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(TrainTestSplit { train, test, seed })
}

/// Whether every point of the view frustum between near and far lies on the
/// negative side of `plane`.
pub fn frustum_on_observed_side(m: &DatasetManifest, view: usize, plane: [f64; 4]) -> Result<bool> {
    let k = &m.intrinsics;
    for (u, v) in [(0, 0), (k.width, 0), (0, k.height), (k.width, k.height)] {
        let ray = generate_ray(&m.views[view].pose, k, (u as f64, v as f64), m.near, m.far)?;
        for t in [m.near, m.far] {
            if plane_side(plane, ray.at(t)) >= 0.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub fn plane_side(plane: [f64; 4], x: [f64; 3]) -> f64 {
    plane[0] * x[0] + plane[1] * x[1] + plane[2] * x[2] + plane[3]
}

/// Split for a partitioned scene: the training views are drawn only from
/// views that never see the positive side of the partition plane, at most
/// `round(fraction * n)` of them.
pub fn coverage_split(m: &DatasetManifest, fraction: f64, seed: u64) -> Result<TrainTestSplit> {
    let plane = m
        .partition
        .ok_or_else(|| Error::invalid("coverage split needs a partition plane in the manifest"))?;
    let n = m.views.len();
    let n_train = train_count(n, fraction)?;
    let mut eligible = Vec::new();
    for v in 0..n {
        if frustum_on_observed_side(m, v, plane)? {
            eligible.push(v);
        }
    }
    if eligible.is_empty() {
        return Err(Error::invalid("no view sees just the observed side of the partition"));
    }
    let n_train = n_train.min(eligible.len());
    eligible.shuffle(&mut crate::rng::stream(seed, "split", 0));
    let mut train = eligible[..n_train].to_vec();
    train.sort_unstable();
    let test = (0..n).filter(|v| !train.contains(v)).collect();
    Ok(TrainTestSplit { train, test, seed })
}

/// The split a scene calls for: coverage-based when it has a partition.
pub fn default_split(m: &DatasetManifest, fraction: f64, seed: u64) -> Result<TrainTestSplit> {
    if m.partition.is_some() {
        coverage_split(m, fraction, seed)
    } else {
        split_views(m.views.len(), fraction, seed)
    }
}
