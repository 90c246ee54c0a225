//! Fit statistics, the likelihood-ratio test between the published models,
//! an own-cost elasticity and a small price/probability grid.

use dce::postest::{cost_slope, fit_stats, lr_test, own_cost_elasticity, price_probability_grid};
use dce::{fixtures, ExperimentSchema};

fn main() -> dce::Result<()> {
    let schema = ExperimentSchema::drone_delivery_japan();
    let mnl = fixtures::published_mnl();
    let mmnl = fixtures::published_mmnl();
    for (label, r) in [("mnl", &mnl), ("mmnl", &mmnl)] {
        let f = fit_stats(r.ll_final, r.ll_null, r.k)?;
        println!("{label:<5} rho2 {:.4}  adjusted {:.4}", f.rho2, f.rho2_adj);
    }
    let lr = lr_test(mnl.ll_final, mmnl.ll_final, 2)?;
    println!("LR {:.2} on {} df, p {:e}", lr.statistic, lr.df, lr.p_value);

    let slope = cost_slope(&mmnl, &schema, "drone")?;
    let e = own_cost_elasticity(&slope, 680.0, 0.3333)?;
    println!("drone elasticity at 680 yen: {:.3} ({})", e.elasticity, e.label);
    for (price, p) in price_probability_grid(&slope, 3, &[480.0, 680.0, 880.0, 1080.0]) {
        println!("{price:>6} {p:.3}");
    }
    Ok(())
}
