use polya_urn::engine::{run, Functional, SimConfig};
use polya_urn::oracle::oracle_enumerate;
use polya_urn::sim::simulate;
use polya_urn::stats::{beta_cdf, ks_critical, ks_statistic, Moments};
use polya_urn::{RandomStream, UrnModel, UrnState};
use num_traits::ToPrimitive;
use proptest::prelude::*;

#[test]
fn step_examples() {
    let m = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
    let s0 = m.initial_state();
    assert_eq!(s0.step(&m, true), UrnState { n: 1, x: 3, y: 2 });
    assert_eq!(s0.step(&m, false), UrnState { n: 1, x: 2, y: 3 });
}

#[test]
fn simulated_law_matches_enumeration() {
    // empirical frequencies of U_6 against the exact law, per support point
    let m = UrnModel::new(4, 1, 1, 4, 2, 1).unwrap();
    let n = 6;
    let reps = 100_000u64;
    let exact = oracle_enumerate(&m, n).unwrap();
    let s = run(&SimConfig::new(m, n, reps, 11, Functional::FinalState)).unwrap();
    let xs = s.final_sample("x");
    for (&(x, _), p) in &exact.support {
        let p = p.to_f64().unwrap();
        let freq = xs.iter().filter(|&&v| v == x as f64).count() as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((freq - p).abs() < 4.5 * se, "x={x}: {freq} vs {p}");
    }
}

#[test]
fn traditional_symmetric_mean_over_many_replicates() {
    let m = UrnModel::new(1, 0, 0, 1, 1, 1).unwrap();
    let s = run(&SimConfig::new(m, 1_000, 100_000, 5, Functional::FinalState)).unwrap();
    let mo = s.final_moments("proportion");
    assert!((mo.mean - 0.5).abs() < 3.0 * mo.std_error());
}

#[test]
fn beta_limit_with_s_two() {
    // S = 2, alpha = beta = 2: Beta(1, 1)
    let m = UrnModel::new(2, 0, 0, 2, 2, 2).unwrap();
    let s = run(&SimConfig::new(m, 10_000, 5_000, 8, Functional::FinalState)).unwrap();
    let mut sample = s.final_sample("proportion");
    let d = ks_statistic(&mut sample, beta_cdf(1.0, 1.0));
    assert!(d < ks_critical(5_000, 0.01));
}

#[test]
fn beta_limit_mean_two_thirds() {
    let m = UrnModel::new(1, 0, 0, 1, 2, 1).unwrap();
    let s = run(&SimConfig::new(m, 10_000, 10_000, 3, Functional::FinalState)).unwrap();
    let mo = s.final_moments("proportion");
    assert!((mo.mean - 2.0 / 3.0).abs() < 3.0 * mo.std_error());
}

#[test]
fn negative_m_urn_runs_and_stays_balanced() {
    // m = a - c = -2: white draws add more red balls
    let m = UrnModel::new(0, 2, 2, 0, 1, 1).unwrap();
    let t = simulate(&m, 10_000, &mut RandomStream::new(1, 1)).unwrap();
    assert!(t.validate().is_ok());
    let p = t.last().proportion();
    assert!((p - 0.5).abs() < 0.05);
}

#[test]
fn moments_merge_over_replicate_partitions() {
    let m = UrnModel::new(3, 1, 1, 3, 1, 1).unwrap();
    let s = run(&SimConfig::new(m, 200, 3000, 4, Functional::ScaledDeviation)).unwrap();
    let sample = s.final_sample("z_minus");
    let whole = Moments::from_slice(&sample);
    for cut in [1usize, 1000, 1024, 2999] {
        let merged = Moments::from_slice(&sample[..cut]).merge(&Moments::from_slice(&sample[cut..]));
        assert_eq!(merged.count, whole.count);
        assert!(((merged.mean - whole.mean) / whole.mean).abs() < 1e-12);
        assert!(((merged.m2 - whole.m2) / whole.m2).abs() < 1e-12);
    }
    let engine = s.final_moments("z_minus");
    assert!(((engine.m2 - whole.m2) / whole.m2).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn totals_are_deterministic(
        a in 0u64..6, b in 0u64..6, c in 0u64..6, alpha in 0u64..5, beta in 1u64..5,
        seed in any::<u64>(), n in 0u64..300,
    ) {
        let s = a + b;
        prop_assume!(s >= c && s > 0);
        let m = UrnModel::new(a, b, c, s - c, alpha, beta).unwrap();
        let t = simulate(&m, n, &mut RandomStream::new(seed, 0)).unwrap();
        prop_assert!(t.validate().is_ok());
        for st in t.states() {
            prop_assert_eq!(st.x + st.y, m.tau() + st.n * m.s());
        }
        let again = simulate(&m, n, &mut RandomStream::new(seed, 0)).unwrap();
        prop_assert_eq!(t, again);
    }
}
