//! Checks tape gradients of a small field network against central differences.
//!
//! cargo run --release --example gradient_check

use snerf::autodiff::{finite_difference_check, ParameterSet};
use snerf::field::{FieldNetwork, FieldNetworkConfig, PositionalEncodingConfig};
use snerf::rng::stream;

fn main() -> snerf::Result<()> {
    let cfg = FieldNetworkConfig {
        width: 6,
        depth: 3,
        skip: Some(2),
        encoding: PositionalEncodingConfig { l_position: 3, l_direction: 2, include_raw_input: true },
        ..FieldNetworkConfig::default()
    };
    let net = FieldNetwork::new(cfg)?;
    let mut params = ParameterSet::new();
    net.init(&mut params, &mut stream(7, "init", 0));

    let points = vec![[0.1, -0.4, 0.3], [0.8, 0.2, -0.5], [-0.6, 0.0, 0.9]];
    let dirs = vec![[0.0, 0.0, -1.0], [0.6, 0.0, -0.8], [0.0, 0.6, 0.8]];
    let report = finite_difference_check(
        |tape, p| {
            let o = net.forward_points(tape, p, &points, &dirs, None)?;
            Ok(o.mu_r.sigmoid().square().sum() + o.sigma_r.ln().sum() + o.mu_alpha.relu().sum() + o.sigma_alpha.sum())
        },
        &params,
        1e-6,
    )?;
    println!("checked {} scalars in {} tensors", report.checked, params.len());
    println!(
        "max relative error {:.3e} at {}[{}]",
        report.max_rel_error, report.worst_parameter, report.worst_index
    );
    Ok(())
}
