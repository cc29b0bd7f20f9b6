//! Synthetic scenes with closed-form fields, a quadrature oracle, and
//! on-disk datasets.

mod analytic;
mod dataset;

pub use analytic::{oracle_render, AnalyticScene, Paint, Primitive, SceneBounds, Shape};
pub use dataset::{
    coverage_split, default_split, frustum_on_observed_side, generate_dataset, load_dataset,
    plane_side, split_views, CameraRig, Dataset, DatasetManifest, DatasetSpec, TrainTestSplit,
    TrainingTriplet, ViewEntry,
};
