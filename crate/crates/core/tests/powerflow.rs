mod common;

use common::{oracle_voltages, random_feeder, two_bus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vvc_core::control::static_control_solve;
use vvc_core::feeder::resolve_feeder;
use vvc_core::powerflow::{residual, solve, DevicePositions, InjectionProfile, SolverConfig};

/// Receiving-end closed form for one line: V2^2 solves
/// `V2^4 - (V1^2 - 2(r p + x q)) V2^2 + (r^2 + x^2)(p^2 + q^2) = 0`.
fn two_bus_closed_form(v1: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = v1 * v1 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    ((b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

#[test]
fn two_bus_matches_closed_form() {
    let f = two_bus(None);
    let s = solve(&f, &InjectionProfile::snapshot(&f), &DevicePositions::neutral(&f), &SolverConfig::default());
    let expected = two_bus_closed_form(1.0, 0.01, 0.02, 0.1, 0.05);
    assert!((expected - 0.997995).abs() < 1e-6, "closed form {expected}");
    assert!((s.voltage(2) - expected).abs() < 1e-12);
    assert!((s.voltage(2) - 0.99800).abs() < 1e-4);
}

#[test]
fn two_bus_with_capacitor() {
    let f = two_bus(Some(0.05));
    let inj = InjectionProfile::snapshot(&f);
    let pos = DevicePositions { taps: vec![], cap_status: vec![true] };
    let s = solve(&f, &inj, &pos, &SolverConfig::default());
    // frozen from the phasor oracle
    let oracle = oracle_voltages(&f, &inj, &pos);
    assert!((s.voltage(2) - oracle[1]).abs() < 1e-10);
    assert!((s.voltage(2) - 0.998995).abs() < 1e-6, "{}", s.voltage(2));
}

#[test]
fn bundled_feeders_converge_at_snapshot() {
    for name in ["case13_balanced", "case123_balanced"] {
        let f = resolve_feeder(name).unwrap();
        let inj = InjectionProfile::snapshot(&f);
        let pos = DevicePositions::neutral(&f);
        let s = solve(&f, &inj, &pos, &SolverConfig::default());
        assert!(s.converged, "{name}");
        assert!(residual(&f, &inj, &pos, &s) <= 1e-10);
        // uncontrolled spread designed to force control
        assert!((s.min_voltage() - 0.92).abs() < 0.01, "{name} min {}", s.min_voltage());
        assert!(s.max_voltage() <= 1.0 + 1e-12);
    }
}

#[test]
fn bundled_feeders_match_oracle() {
    for name in ["case13_balanced", "case123_balanced"] {
        let f = resolve_feeder(name).unwrap();
        let inj = InjectionProfile::snapshot(&f);
        let sol = static_control_solve(&f, &inj, &DevicePositions::neutral(&f), &SolverConfig::default());
        let oracle = oracle_voltages(&f, &inj, &sol.positions);
        for (a, b) in sol.state.v.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn heavier_load_lowers_voltage() {
    let f = resolve_feeder("case13_balanced").unwrap();
    let pos = DevicePositions::neutral(&f);
    let cfg = SolverConfig::default();
    let light = solve(&f, &InjectionProfile::snapshot(&f).scaled(0.5), &pos, &cfg);
    let heavy = solve(&f, &InjectionProfile::snapshot(&f), &pos, &cfg);
    for (l, h) in light.v.iter().zip(&heavy.v).skip(1) {
        assert!(h < l);
    }
    assert!(heavy.total_loss > light.total_loss);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_agrees_with_oracle(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, inj, pos) = random_feeder(&mut rng, n);
        let s = solve(&f, &inj, &pos, &SolverConfig::default());
        prop_assert!(s.converged);
        prop_assert!(residual(&f, &inj, &pos, &s) <= 1e-10);
        let oracle = oracle_voltages(&f, &inj, &pos);
        for (a, b) in s.v.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }

    #[test]
    fn losses_are_nonnegative(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, inj, pos) = random_feeder(&mut rng, n);
        let s = solve(&f, &inj, &pos, &SolverConfig::default());
        prop_assert!(s.total_loss >= 0.0);
        prop_assert!(s.l.iter().all(|&l| l >= 0.0));
    }
}
