use ergodic_rates::chains::{digit_step, DecimalState};
use ergodic_rates::harness::{ConvergenceCurve, CurveRow};
use ergodic_rates::lyapunov::Verdict;
use ergodic_rates::rate_kernel::{
    h_inverse, h_transform, rate_bound, RateBoundParams, RateFunction,
};
use ergodic_rates::transport::{wasserstein_exact, BoundedMetric, EmpiricalMeasure};
use proptest::prelude::*;

#[test]
fn h_round_trip_on_log_spaced_grid() {
    let rates = [
        RateFunction::linear(0.7).unwrap(),
        RateFunction::power(0.4).unwrap(),
        RateFunction::log_power(0.5).unwrap(),
        RateFunction::log_power(1.0).unwrap(),
    ];
    for phi in &rates {
        for i in 0..200 {
            let y = if i == 0 {
                0.0
            } else {
                1e-3 * (50e3f64).powf(i as f64 / 199.0)
            };
            let x = h_inverse(phi, y).unwrap();
            if !x.is_finite() {
                continue;
            }
            let back = h_transform(phi, x).unwrap();
            assert!(
                (back - y).abs() <= 1e-9 * y.max(1.0),
                "{phi:?} y = {y}: {back}"
            );
        }
    }
}

fn rate() -> impl Strategy<Value = RateFunction> {
    prop_oneof![
        (0.05..3.0f64).prop_map(|l| RateFunction::linear(l).unwrap()),
        (0.05..0.95f64).prop_map(|g| RateFunction::power(g).unwrap()),
        (0.2..1.0f64).prop_map(|a| RateFunction::log_power(a).unwrap()),
    ]
}

proptest! {
    #[test]
    fn rate_bound_is_nonincreasing(phi in rate(), c1 in 0.1..10.0f64, c2 in 0.01..3.0f64,
                                   eps in 0.01..0.9f64, v in 0.0..10.0f64,
                                   mut ts in prop::collection::vec(0.0..100.0f64, 2..20)) {
        ts.sort_by(f64::total_cmp);
        let p = RateBoundParams::new(c1, c2, eps, v).unwrap();
        let b: Vec<f64> = ts.iter().map(|&t| rate_bound(&phi, &p, t).unwrap()).collect();
        prop_assert!(b.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn shared_digits_shrink_distance_tenfold(x in 0.0..1.0f64, y in 0.0..1.0f64,
                                              digits in prop::collection::vec(0u8..10, 1..8)) {
        let (mut a, mut b) = (x, y);
        for &d in &digits {
            a = digit_step(a, d).unwrap();
            b = digit_step(b, d).unwrap();
        }
        let want = (x - y).abs() * 10f64.powi(-(digits.len() as i32));
        prop_assert!(((a - b).abs() - want).abs() <= 1e-12);
    }

    #[test]
    fn exact_decimal_states_stay_in_unit_interval(digits in prop::collection::vec(0u8..10, 0..30), d in 0u8..10) {
        let s = DecimalState::from_digits(digits).unwrap().step(d).unwrap();
        let v = s.to_f64();
        prop_assert!((0.0..1.0).contains(&v));
    }

    #[test]
    fn verdict_rule(margin in -10.0..10.0f64, ci in 0.0..3.0f64) {
        let v = Verdict::from_margin(margin, ci);
        prop_assert_eq!(v == Verdict::Fail, margin < -3.0 * ci - 1e-12);
    }

    #[test]
    fn normalized_weights_sum_to_one(raw in prop::collection::vec(1e-6..1e6f64, 1..50)) {
        let pts: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
        let m = EmpiricalMeasure::normalized(pts, raw).unwrap();
        prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn coarser_metric_gives_smaller_distance(a in prop::collection::vec(-5.0..5.0f64, 1..6),
                                             b in prop::collection::vec(-5.0..5.0f64, 1..6),
                                             b1 in 0.1..5.0f64, extra in 0.0..5.0f64) {
        let mu = EmpiricalMeasure::uniform(a.into_iter().map(|v| vec![v]).collect()).unwrap();
        let nu = EmpiricalMeasure::uniform(b.into_iter().map(|v| vec![v]).collect()).unwrap();
        // d_beta = 1 ∧ |x - y| / beta shrinks as beta grows
        let fine = wasserstein_exact(&mu, &nu, &BoundedMetric::bounded_euclidean(b1, 1).unwrap()).unwrap().0;
        let coarse = wasserstein_exact(&mu, &nu, &BoundedMetric::bounded_euclidean(b1 + extra, 1).unwrap()).unwrap().0;
        prop_assert!(coarse <= fine + 1e-12);
    }

    #[test]
    fn curve_csv_round_trip(steps in prop::collection::vec((0.01..5.0f64, 0.0..1.0f64, 0.0..0.1f64), 1..30)) {
        let mut t = 0.0;
        let rows: Vec<CurveRow> = steps
            .iter()
            .map(|&(dt, d, ci)| {
                t += dt;
                CurveRow { t, distance: d, ci95: ci, bound: None }
            })
            .collect();
        let c = ConvergenceCurve::new("prop", rows).unwrap();
        let back = ConvergenceCurve::read_csv(c.to_csv_string().unwrap().as_bytes()).unwrap();
        prop_assert_eq!(back.rows, c.rows);
    }
}
