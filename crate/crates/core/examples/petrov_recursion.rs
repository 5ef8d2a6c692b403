// Extremal recursion `a_{n+1} = a_n (1 - psi(a_n))` against `g^{-1}(n)`.

use ergodic_rates::rate_kernel::{petrov_bound_check, petrov_g, PsiFunction};
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let square = PsiFunction::square();
    println!("g(0.5) for psi = t^2: {:.6}", petrov_g(&square, 0.5)?);
    for psi in [PsiFunction::linear(), square, PsiFunction::capped_double()] {
        let rep = petrov_bound_check(&psi, 0.7, 1000)?;
        let last = rep.rows.last().expect("rows");
        println!(
            "{}: a_1000 = {:.3e} <= {:.3e}: {}",
            rep.psi, last.iterate, last.bound, rep.passed
        );
        assert!(rep.passed);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
