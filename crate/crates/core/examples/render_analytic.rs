//! Composites fields with known answers and renders an analytic scene pixel.
//!
//! cargo run --release --example render_analytic

use snerf::render::*;
use snerf::scene::{oracle_render, AnalyticScene};

fn main() -> snerf::Result<()> {
    let exact = 1.0 - (-1.0f64).exp();
    println!("unit density and radiance on [0, 1], exact color {exact:.6}");
    println!("{:>5} {:>14} {:>14}", "N", "trapezoid err", "alpha err");
    for n in [8, 16, 32, 64, 128] {
        let g = RaySampleGrid::midpoints(0.0, 1.0, n)?;
        let traj = TrajectorySample::constant(n, [1.0; 3], 1.0);
        let t = composite_trapezoidal(&traj, &g)?[0];
        let a = composite_alpha(&traj, &g)?[0];
        println!("{n:>5} {:>14.3e} {:>14.3e}", (t - exact).abs(), (a - exact).abs());
    }

    let scene = AnalyticScene::sphere();
    let pose = Pose::look_at([0.0, 0.0, 3.0], [0.0; 3], [0.0, 1.0, 0.0])?;
    let cam = Intrinsics::centered(32, 32, 40.0);
    let ray = generate_ray(&pose, &cam, (16.5, 16.5), 1.0, 5.0)?;
    let (color, depth) = oracle_render(&scene, &ray, 2048)?;
    println!("sphere center pixel: color {color:.4?}, depth {depth:.4}");
    Ok(())
}
