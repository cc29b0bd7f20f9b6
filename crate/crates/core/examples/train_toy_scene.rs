//! Generates the slab toy scene and fits a stochastic field to it.
//!
//! cargo run --release --example train_toy_scene -- [steps] [out_dir]

use std::path::PathBuf;

use snerf::eval::{EvalConfig, MethodId};
use snerf::scene::{default_split, generate_dataset, load_dataset, AnalyticScene, DatasetSpec};
use snerf::train::{fit, save_training_checkpoint, write_loss_log, Model, OptimizerState};

fn main() -> snerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(300, |s| s.parse().expect("steps must be an integer"));
    let out = args.next().map_or_else(|| std::env::temp_dir().join("snerf_toy"), PathBuf::from);

    let spec = DatasetSpec { width: 32, height: 32, ..DatasetSpec::default() };
    generate_dataset(&AnalyticScene::slab(), &spec, &out.join("scene"), 1)?;
    let ds = load_dataset(&out.join("scene"))?;
    let split = default_split(&ds.manifest, 0.8, 0)?;
    let data = ds.triplets(&split.train)?;

    let mut cfg = EvalConfig::toy();
    cfg.train.steps = steps;
    let train = cfg.train_config(MethodId::Snerf);
    let mut model = Model::new(cfg.network_config(MethodId::Snerf), train.seed)?;
    let mut opt = OptimizerState::new();
    let log = fit(&mut model, &mut opt, &data, &ds.manifest.scene_bounds()?, &train, None)?;

    for r in log.iter().step_by((steps as usize / 10).max(1)) {
        let l = r.loss;
        println!(
            "step {:>5}  nll {:>9.4}  scene kl {:>9.4}  ray kl {:>9.4}  total {:>9.4}",
            r.step, l.neg_loglik, l.scene_kl, l.observed_kl, l.total
        );
    }
    write_loss_log(&out.join("loss_log.csv"), &log)?;
    save_training_checkpoint(&out.join("final.ckpt"), &model, &opt)?;
    println!("wrote {}", out.display());
    Ok(())
}
