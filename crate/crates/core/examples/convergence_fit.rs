// A two-start convergence curve for a delay equation, with fitted bound
// constants.

use ergodic_rates::harness::run_convergence_experiment;
use ergodic_rates::harness::ExperimentConfig;
use ergodic_rates::Result;

const CONFIG: &str = r#"
schedule = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0]
n_samples = 400
seed = 17
starts = [2.0, -2.0]
mode = "two_start"
metric = { kind = "bounded_euclidean", beta = 10.0 }
rate = { phi = { kind = "linear", lambda = 1.0 }, epsilon = 0.1 }
bound = { fit = true }

[model]
kind = "sdde"
grid_points = 20
dt = 0.05
equation = { kind = "radial_tanh", kappa = 1.0, alpha = 1.0, m = 1.0 }
"#;

pub fn run_example() -> Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let curve = run_convergence_experiment(&cfg)?;
    print!("{}", curve.to_csv_string()?);
    if let Some(fit) = curve.fit {
        println!(
            "C1 = {:.4}, C2 = {:.4}, {} points",
            fit.c1, fit.c2, fit.points_used
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
