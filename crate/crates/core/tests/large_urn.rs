use polya_urn::engine::{run, w_estimate, Functional, SimConfig};
use polya_urn::formulas::{large_urn_moments, w_estimator_moments};
use polya_urn::stats::Moments;
use polya_urn::UrnModel;

/// Sample moments of W_n against the exact finite-n values at n and 2n.
#[test]
fn w_estimator_tracks_exact_finite_n_moments() {
    let model = UrnModel::new(4, 1, 1, 4, 2, 1).unwrap();
    let reps = 20_000;
    for n in [10_000u64, 20_000] {
        let w = w_estimate(&SimConfig::new(model.clone(), n, reps, 101, Functional::WEstimate)).unwrap();
        let (mean, second) = w_estimator_moments(&model, n).unwrap();
        let mo = Moments::from_slice(&w);
        assert!((mo.mean - mean).abs() < 4.0 * mo.std_error(), "n={n}: mean {} vs {mean}", mo.mean);
        let raw = mo.raw_second();
        assert!(
            (raw - second).abs() < 4.0 * mo.raw_second_std_error(),
            "n={n}: second {raw} vs {second}"
        );
    }
}

#[test]
fn exact_second_moment_increases_towards_limit() {
    let model = UrnModel::new(4, 1, 1, 4, 1, 1).unwrap();
    let limit = large_urn_moments(&model).unwrap().ew2;
    let mut last = 0.0;
    for n in [100u64, 1_000, 10_000, 100_000, 1_000_000] {
        let (_, second) = w_estimator_moments(&model, n).unwrap();
        assert!(second > last && second < limit, "n={n}: {second}");
        last = second;
    }
    // doubling n leaves a gap of order n^(1 - 2 sigma), far above 1e-3 at these horizons
    let (_, a) = w_estimator_moments(&model, 10_000).unwrap();
    let (_, b) = w_estimator_moments(&model, 100_000).unwrap();
    assert!(limit - b > 0.1 && (limit - a) / (limit - b) > 1.5);
}

#[test]
fn proportion_settles_for_large_urn() {
    let model = UrnModel::new(4, 1, 1, 4, 1, 1).unwrap();
    let s = run(&SimConfig::new(model, 100_000, 200, 7, Functional::FinalState)).unwrap();
    let p = s.final_moments("proportion");
    assert!((p.mean - 0.5).abs() < 4.0 * p.std_error());
}
