//! Samples the radiance and density distributions and estimates their KL
//! divergences from the fixed prior used for unobserved space.
//!
//! cargo run --release --example distributions

use snerf::dist::*;
use snerf::rng::stream;

fn main() -> snerf::Result<()> {
    let radiance = LogisticNormalParams::new([1.0, 0.0, -2.0], [0.5, 1.0, 0.3])?;
    let n = 50_000;
    let mut sum = [0.0; 3];
    for i in 0..n {
        let eps = NoiseDraw::standard_normal(&[3], 1, i);
        let r = sample_radiance(&radiance, &eps)?;
        for c in 0..3 {
            sum[c] += r[c] / n as f64;
        }
    }
    println!("radiance sample means {:.4?}", sum);

    let density = RectifiedNormalParams::new(0.2, 1.0)?;
    let draws = NoiseDraw::standard_normal(&[n as usize], 2, 0);
    let zeros = draws
        .values()
        .iter()
        .filter(|&&e| sample_density(&density, &NoiseDraw::fixed(&[1], vec![e]).unwrap()).unwrap() == 0.0)
        .count();
    println!(
        "density zero mass: sampled {:.4}, exact {:.4}",
        zeros as f64 / n as f64,
        rectified_normal_cdf_at_zero(density.mu, density.sigma)?
    );

    let prior_r = LogisticNormalParams::uniform(0.0, UNOBSERVED_PRIOR_SIGMA)?;
    let prior_a = RectifiedNormalParams::new(0.0, UNOBSERVED_PRIOR_SIGMA)?;
    let mut rng = stream(3, "kl", 0);
    let kr = kl_logistic_normal(&radiance, &prior_r, 20_000, &mut rng)?;
    let ka = kl_rectified_normal(&density, &prior_a, 20_000, &mut rng)?;
    println!("KL radiance {:.4} +- {:.4}", kr.value, kr.stderr);
    println!("KL density  {:.4} +- {:.4}", ka.value, ka.stderr);
    Ok(())
}
