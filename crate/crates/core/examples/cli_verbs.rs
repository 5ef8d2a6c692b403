// Drives the command-line front end in process.

use ergodic_rates::harness::run;
use ergodic_rates::Result;

pub fn run_example() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("drift.toml");
    std::fs::write(
        &cfg,
        "phi = { kind = \"linear\", lambda = 0.9 }\nk = 0.45\nstates = [0.1, 0.6]\nn_mc = 500\nseed = 1\nenumerate = true\nlyapunov = { kind = \"abs\" }\nmodel = { kind = \"digit\" }\n",
    )?;
    let calls: [&[&str]; 3] = [
        &[
            "ergodic", "rates", "invert", "--phi", "linear:1", "--y", "2",
        ],
        &[
            "ergodic", "petrov", "--psi", "square", "--a0", "0.5", "--n", "100",
        ],
        &[
            "ergodic",
            "--config",
            cfg.to_str().expect("utf-8 path"),
            "drift-check",
        ],
    ];
    for args in calls {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut out, &mut err);
        println!("$ {} -> exit {code}", args[1..].join(" "));
        print!(
            "{}{}",
            String::from_utf8_lossy(&out),
            String::from_utf8_lossy(&err)
        );
        assert_eq!(code, 0);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
