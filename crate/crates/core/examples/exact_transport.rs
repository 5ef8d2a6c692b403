// Exact discrete transport, the 1-D monotone coupling, and distance to a
// uniform law.

use ergodic_rates::transport::{
    wasserstein_1d, wasserstein_1d_to_uniform, wasserstein_exact, BoundedMetric, EmpiricalMeasure,
    Euclidean,
};
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let mu = EmpiricalMeasure::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5])?;
    let nu = EmpiricalMeasure::new(
        vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![3.0, 0.0]],
        vec![0.25, 0.25, 0.5],
    )?;
    let (w, plan) = wasserstein_exact(&mu, &nu, &Euclidean)?;
    println!("W1 = {w:.6}, plan has {} edges", plan.edges.len());
    let (wb, _) = wasserstein_exact(&mu, &nu, &BoundedMetric::bounded_euclidean(2.0, 2)?)?;
    println!("bounded W = {wb:.6}");

    let a = EmpiricalMeasure::uniform(vec![0.1, 0.4, 0.9])?;
    let b = EmpiricalMeasure::uniform(vec![0.2, 0.5, 0.6])?;
    let mono = wasserstein_1d(&a, &b, &Euclidean)?;
    assert!((mono - wasserstein_exact(&a, &b, &Euclidean)?.0).abs() < 1e-12);
    println!(
        "1-D W1 = {mono:.6}, to Uniform[0,1) = {:.6}",
        wasserstein_1d_to_uniform(&a, 0.0, 1.0)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
