// Coupling upper bound against exact transport, and total variation
// between disjoint digit-chain laws.

use ergodic_rates::chains::{digit_step, enumerate_digit_marginal_f64};
use ergodic_rates::transport::{coupling_upper_bound, tv_distance, Euclidean};
use ergodic_rates::Result;
use rand::Rng;

pub fn run_example() -> Result<()> {
    // one synchronous step from 0.3 and 0.8: both chains insert the same digit
    let est = coupling_upper_bound(
        |r| {
            let d: u8 = r.random_range(0..10);
            Ok((digit_step(0.3, d)?, digit_step(0.8, d)?))
        },
        &Euclidean,
        1000,
        7,
    )?;
    println!("coupled distance {:.6} ± {:.1e}", est.mean, est.ci95);

    let a = enumerate_digit_marginal_f64(0.3, 3)?;
    let b = enumerate_digit_marginal_f64(0.8, 3)?;
    println!("tv after 3 steps = {}", tv_distance(&a, &b));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
