//! Willingness to pay from the bundled published mixed logit coefficients.

use dce::postest::{cost_slope, wtp, WtpRequest};
use dce::{fixtures, ExperimentSchema};

fn main() -> dce::Result<()> {
    let schema = ExperimentSchema::drone_delivery_japan();
    let result = fixtures::published_mmnl();
    for mode in ["drone", "truck", "motorcycle"] {
        let s = cost_slope(&result, &schema, mode)?;
        println!("{mode:<11} slope {:.6} per yen (r2 {:.3})", s.slope, s.r_squared);
    }
    let requests = [
        WtpRequest::binary("delivery_date_drone"),
        WtpRequest::binary("delivery_date_motorcycle"),
        WtpRequest::binary("drop_off_motorcycle"),
        WtpRequest::pair("social_influence", "neighbor_30", "neighbor_70"),
    ];
    for r in &requests {
        let e = wtp(&result, &schema, r)?;
        println!("{:<26}{:>20} -> {:<12}{:>8.1} yen", e.attribute, e.from_level, e.to_level, e.wtp_yen);
    }
    Ok(())
}
