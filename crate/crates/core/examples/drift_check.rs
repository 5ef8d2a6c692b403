// Drift inequality for the digit chain with `V(x) = x`, by enumeration and
// by Monte Carlo, plus the cumulative form.

use ergodic_rates::chains::{DigitShiftChain, WithLyapunov};
use ergodic_rates::lyapunov::{
    admissible_r, check_cumulative_drift, check_drift_discrete, check_drift_enumerated,
};
use ergodic_rates::rate_kernel::RateFunction;
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let phi = RateFunction::linear(0.9)?;
    let states = [0.0, 0.25, 0.5, 0.99];
    let kernel = |x: &f64| Ok((0..10).map(|d| ((x + d as f64) / 10.0, 0.1)).collect());
    let exact = check_drift_enumerated(&states, kernel, |x| *x, &phi, 0.45)?;
    print!("{}", exact.to_table());

    let model = WithLyapunov::new(DigitShiftChain, |x: &f64| *x);
    let mc = check_drift_discrete(&model, &phi, 0.45, &states, 5000, 11)?;
    print!("{}", mc.to_table());

    let cum = check_cumulative_drift(&model, &phi, 0.45, &0.3, 10, 2000, 11)?;
    println!(
        "cumulative n = 10: {:.4} <= {:.4} ({})",
        cum.lhs, cum.rhs, cum.verdict
    );
    println!("{:?}", admissible_r(&phi, 0.45, 0.0, 1.5)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
