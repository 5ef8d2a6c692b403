// Rate calculus: `phi`, `H_phi`, its inverse and the resulting bound.

use ergodic_rates::rate_kernel::{
    h_inverse, h_transform, rate_asymptotics, rate_bound, RateBoundParams, RateFunction,
};
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let rates = [
        ("linear", RateFunction::linear(0.5)?),
        ("power", RateFunction::power(0.5)?),
        ("log-power", RateFunction::log_power(0.5)?),
    ];
    let params = RateBoundParams::new(1.0, 1.0, 0.1, 0.0)?;
    for (name, phi) in &rates {
        let h = h_transform(phi, 10.0)?;
        let back = h_inverse(phi, h)?;
        assert!((back - 10.0).abs() < 1e-8);
        println!(
            "{name}: phi(10) = {:.4}, H(10) = {h:.4}, {:?}",
            phi.value(10.0),
            rate_asymptotics(phi, 0.1)?
        );
        for t in [1.0, 10.0, 100.0] {
            println!("  bound({t}) = {:.4e}", rate_bound(phi, &params, t)?);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
