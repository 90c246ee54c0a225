//! Halton points and their standard normal transforms.

use dce::numerics::{halton_matrix, inv_normal_cdf, HaltonConfig};

fn main() -> Result<(), dce::numerics::NumericsError> {
    let cfg = HaltonConfig { n_draws: 5, ..HaltonConfig::default() };
    let draws = halton_matrix(&cfg, 2)?;
    for i in 0..2 {
        for r in 0..cfg.n_draws {
            let p = draws.point(i, r);
            let z: Vec<f64> = p.iter().map(|&u| inv_normal_cdf(u)).collect::<Result<_, _>>()?;
            println!("individual {i} draw {r}: u {:.4} {:.4}  z {:+.4} {:+.4}", p[0], p[1], z[0], z[1]);
        }
    }
    Ok(())
}
