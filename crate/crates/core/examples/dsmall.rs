// One-step contraction `W_d(P(x,·), P(y,·)) <= (1 - rho) d(x, y)` on a
// level set of `V`.

use ergodic_rates::chains::{DigitShiftChain, WithLyapunov};
use ergodic_rates::lyapunov::{estimate_dsmall, sample_level_set_pairs};
use ergodic_rates::transport::Euclidean;
use ergodic_rates::Result;
use rand::Rng;

pub fn run_example() -> Result<()> {
    let chain = WithLyapunov::new(DigitShiftChain, |x: &f64| *x);
    let pairs = sample_level_set_pairs(|r| r.random_range(0.0..1.0), |x: &f64| *x, 1.0, 6, 2)?;
    let rep = estimate_dsmall(&chain, &Euclidean, Some(1.0), &pairs, 256, 3)?;
    for r in &rep.rows {
        println!("d = {:.4}, W = {:.5}, ratio {:.6}", r.d, r.w, r.ratio);
    }
    println!(
        "rho_hat = {:.6} ± {:.1e} ({})",
        rep.rho_hat, rep.ci95, rep.method
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
