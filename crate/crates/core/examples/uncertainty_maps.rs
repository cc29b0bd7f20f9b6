//! Trains on the sphere scene and writes mean, variance and error maps for
//! one held-out view.
//!
//! cargo run --release --example uncertainty_maps -- [steps] [out_dir]

use std::path::PathBuf;

use snerf::eval::{evaluate, train_method, write_contact_sheet, EvalConfig, MethodId};
use snerf::render::{write_png_gray, write_png_rgb};
use snerf::scene::{default_split, generate_dataset, load_dataset, AnalyticScene, DatasetSpec};

fn main() -> snerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(400, |s| s.parse().expect("steps must be an integer"));
    let out = args.next().map_or_else(|| std::env::temp_dir().join("snerf_maps"), PathBuf::from);

    let spec = DatasetSpec { width: 32, height: 32, ..DatasetSpec::default() };
    generate_dataset(&AnalyticScene::sphere(), &spec, &out.join("scene"), 1)?;
    let ds = load_dataset(&out.join("scene"))?;
    let mut cfg = EvalConfig::toy();
    cfg.train.steps = steps;
    let split = default_split(&ds.manifest, cfg.train_fraction, cfg.split_seed)?;
    let trained = train_method(
        MethodId::Snerf,
        &ds.triplets(&split.train)?,
        &ds.manifest.scene_bounds()?,
        &cfg,
    )?;
    let eval = evaluate(&trained, &ds, &split.test[..1], &cfg)?;

    let v = &eval.views[0];
    write_png_rgb(&out.join("mean.png"), v.width, v.height, &v.mean)?;
    let vmax = v.variance.iter().copied().fold(0.0, f64::max).max(1e-12);
    let emax = v.sq_error.iter().copied().fold(0.0, f64::max).max(1e-12);
    let scaled = |xs: &[f64], m: f64| xs.iter().map(|x| x / m).collect::<Vec<_>>();
    write_png_gray(&out.join("variance.png"), v.width, v.height, &scaled(&v.variance, vmax))?;
    write_png_gray(&out.join("sq_error.png"), v.width, v.height, &scaled(&v.sq_error, emax))?;
    write_contact_sheet(&out.join("contact_sheet.png"), &[&eval])?;
    println!(
        "view {}: nll {:.3}, error/variance correlation {:?}",
        v.view, eval.report.nll, eval.report.correlation
    );
    println!("wrote maps to {}", out.display());
    Ok(())
}
