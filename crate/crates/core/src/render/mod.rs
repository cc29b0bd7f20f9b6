//! Rays, sampling along rays, compositing, and per-pixel sample sets.

mod camera;
mod composite;
mod image;
mod pixel;
mod sampling;

pub use camera::{generate_ray, Intrinsics, Pose, Ray, Vec3};
pub use composite::{
    composite_alpha, composite_batch, composite_trapezoidal, expected_depth, transmittance,
    CompositeLayout, Composited, Integrator, TrajectorySample,
};
pub use image::{read_png_rgb, write_png_gray, write_png_rgb, write_raw_f64, RgbImage};
pub use pixel::{
    ray_points, render_pixel_distribution, render_rays, render_rays_with_sigma,
    sample_trajectories, stack_noise, ColorSamples, DepthSamples, FieldMode, PixelDistribution,
    PixelSampleSet, RayNoise, RenderSettings, Trajectories,
};
pub use sampling::{stratified_sample, stratified_with, RaySampleGrid};
