//! Trains the three KL settings on the hemisphere scene, where half the
//! space is never seen in training, and compares their uncertainty there.
//!
//! cargo run --release --example ablation -- [steps]

use snerf::eval::{run_ablation, EvalConfig};
use snerf::scene::{generate_dataset, load_dataset, AnalyticScene, DatasetSpec};

fn main() -> snerf::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(600, |s| s.parse().expect("steps must be an integer"));
    let dir = std::env::temp_dir().join("snerf_ablation");
    generate_dataset(&AnalyticScene::hemisphere(), &DatasetSpec::default(), &dir, 1)?;
    let ds = load_dataset(&dir)?;

    let mut cfg = EvalConfig::toy();
    cfg.train.steps = steps;
    println!("{:<12} {:>9} {:>12} {:>16}", "method", "nll", "correlation", "unobserved ratio");
    for e in run_ablation(&ds, &cfg)? {
        let r = &e.report;
        println!(
            "{:<12} {:>9.3} {:>12.3} {:>16.2}",
            r.method.as_str(),
            r.nll,
            r.correlation.unwrap_or(f64::NAN),
            r.unobserved_variance_ratio.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
