// The weighted semimetric `l` and its one-step contraction.

use ergodic_rates::chains::{DigitShiftChain, WithLyapunov};
use ergodic_rates::lyapunov::{
    contraction_beta, estimate_onestep_l_contraction, semimetric_l_eval, SemimetricL,
};
use ergodic_rates::rate_kernel::RateFunction;
use ergodic_rates::transport::Euclidean;
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let phi = RateFunction::linear(0.9)?;
    let p = 2.0;
    let beta = contraction_beta(0.9, p / (p - 1.0), 0.45, 1.5, &phi)?;
    let l = SemimetricL::new(phi, p, beta)?;
    println!(
        "beta = {beta:.4}, l(0.1, 0.6) = {:.4}",
        semimetric_l_eval(&l, &Euclidean, |x: &f64| *x, &0.1, &0.6)
    );

    let chain = WithLyapunov::new(DigitShiftChain, |x: &f64| *x);
    let pairs = vec![(0.1, 0.6), (0.3, 0.8), (0.0, 0.9)];
    let rep = estimate_onestep_l_contraction(&chain, &l, &Euclidean, &pairs, 128, 5)?;
    for r in &rep.rows {
        println!(
            "V(x) + V(y) = {:.2}: ratio {:.4} ± {:.1e}",
            r.vsum, r.ratio, r.ci95
        );
    }
    println!(
        "max ratio {:.4}, contracts: {}",
        rep.max_ratio, rep.all_le_one
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
