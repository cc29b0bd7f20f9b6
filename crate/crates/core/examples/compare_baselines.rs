//! Trains every method on a small slab scene and prints the metric table.
//!
//! cargo run --release --example compare_baselines -- [steps]

use snerf::eval::{run_sweep, EvalConfig, MethodId};
use snerf::scene::{generate_dataset, load_dataset, AnalyticScene, DatasetSpec};

fn main() -> snerf::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(200, |s| s.parse().expect("steps must be an integer"));
    let dir = std::env::temp_dir().join("snerf_baselines");
    let spec = DatasetSpec { width: 24, height: 24, ..DatasetSpec::default() };
    generate_dataset(&AnalyticScene::slab(), &spec, &dir, 1)?;
    let ds = load_dataset(&dir)?;

    let mut cfg = EvalConfig::toy();
    cfg.train.steps = steps;
    println!("{:<15} {:>9} {:>12} {:>10} {:>9}", "method", "nll", "correlation", "render_s", "train_s");
    for (m, r) in run_sweep(&MethodId::ALL, &ds, &cfg) {
        match r {
            Ok(e) => {
                let r = e.report;
                let corr = r.correlation.map_or("n/a".to_string(), |c| format!("{c:.3}"));
                println!(
                    "{:<15} {:>9.3} {:>12} {:>10.3} {:>9.1}",
                    m.as_str(), r.nll, corr, r.render_seconds_per_view, r.train_seconds
                );
            }
            Err(e) => println!("{:<15} failed: {e}", m.as_str()),
        }
    }
    Ok(())
}
