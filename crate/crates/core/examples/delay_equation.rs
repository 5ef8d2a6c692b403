// Euler–Maruyama for a delay equation, and the second moment of an
// Ornstein–Uhlenbeck process against its closed form.

use ergodic_rates::chains::{sdde_integrate, sdde_trajectory, SddeSpec, SegmentGrid, SegmentState};
use ergodic_rates::numerics::mean_ci95;
use ergodic_rates::rng;
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let grid = SegmentGrid::new(1.0, 50)?;
    let vk = SddeSpec::radial_tanh(1.0, 0.5, 1.0)?;
    let x0 = SegmentState::constant(grid, &[3.0])?;
    let path = sdde_trajectory(
        &vk,
        &x0,
        &[0.0, 1.0, 2.0, 5.0],
        0.02,
        &mut rng::stream(3, 0),
    )?;
    for (t, seg) in [0.0, 1.0, 2.0, 5.0].iter().zip(&path) {
        println!(
            "t = {t}: x(t) = {:+.4}, sup over segment {:.4}",
            seg.current()[0],
            seg.sup_norm()
        );
    }

    let ou = SddeSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0)?;
    let start = SegmentState::constant(grid, &[0.0])?;
    let squares = (0..2000)
        .map(|j| {
            Ok(
                sdde_integrate(&ou, &start, 5.0, 0.02, &mut rng::stream(4, j))?.current()[0]
                    .powi(2),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let (m, ci) = mean_ci95(&squares);
    println!(
        "E X(5)^2 = {m:.4} ± {ci:.4}, closed form {:.4}",
        (1.0 - (-10f64).exp()) / 2.0
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
