// The digit-shift chain in floats and in exact decimals.

use ergodic_rates::chains::{
    digit_reconstruct, digit_step, enumerate_digit_marginal, run_chain, DecimalState,
    DigitShiftChain, ExactDigitChain,
};
use ergodic_rates::rng;
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    println!("step(0, 7) = {}", digit_step(0.0, 7)?);

    let x0 = 0.123;
    let x = run_chain(&DigitShiftChain, &x0, 20, &mut rng::stream(1, 0))?;
    let rec = digit_reconstruct(x, 20)?;
    println!(
        "after 20 float steps: {x}, recovered start {} ({:?})",
        rec.value, rec.warning
    );

    let d0 = DecimalState::from_digits(vec![1, 2, 3])?;
    let d = run_chain(&ExactDigitChain, &d0, 20, &mut rng::stream(1, 0))?;
    println!("exact: recovered start {}", d.reconstruct(20).to_f64());

    let law = enumerate_digit_marginal(&d0, 2)?;
    println!("two steps from 0.123: {} equally likely states", law.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
