mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvc_core::agent::{factored_max, ReplayBuffer};
use vvc_core::bench::moving_average;
use vvc_core::env::{reward_terms, switch_count, ActionVector, Beta};
use vvc_core::feeder::{parse_feeder, resolve_feeder, to_toml_string};
use vvc_core::powerflow::{solve, DevicePositions, SolverConfig};

fn positions(taps: Vec<i32>, caps: Vec<bool>) -> DevicePositions {
    DevicePositions { taps, cap_status: caps }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn substation_tap_raises_every_voltage(seed in any::<u64>(), n in 2usize..=6, tap in -15i32..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, inj, mut pos) = common::random_feeder(&mut rng, n);
        prop_assume!(f.substation_regulator() == Some(0));
        let cfg = SolverConfig::default();
        pos.taps[0] = tap;
        let low = solve(&f, &inj, &pos, &cfg);
        pos.taps[0] = tap + 1;
        let high = solve(&f, &inj, &pos, &cfg);
        for (a, b) in low.v.iter().zip(&high.v) {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn feeder_toml_round_trip(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, _, _) = common::random_feeder(&mut rng, n);
        let back = parse_feeder(&to_toml_string(&f), "round trip").unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn loss_terms_differ_exactly(
        volts in prop::collection::vec(0.85f64..1.15, 1..30),
        loss in 0.0f64..0.5,
        b in (0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0),
        taps in prop::collection::vec(-16i32..=16, 2),
    ) {
        let beta = Beta(b.0, b.1, b.2);
        let prev = positions(vec![0, 0], vec![false]);
        let next = positions(taps, vec![true]);
        let r = |o| reward_terms(o, beta, &volts, &volts, loss, &prev, &next);
        prop_assert_eq!(r(1).total, r(2).total - beta.1 * loss);
        prop_assert_eq!(r(3).total, r(4).total - beta.1 * loss);
        for o in 1..=4 {
            prop_assert!(r(o).total <= 0.0);
            prop_assert!(r(o).max_violation >= 0.0);
        }
    }

    #[test]
    fn repeated_action_switches_nothing(
        taps in prop::collection::vec(-16i32..=16, 0..6),
        caps in prop::collection::vec(any::<bool>(), 0..6),
    ) {
        let p = positions(taps, caps);
        prop_assert_eq!(switch_count(&p, &p), 0.0);
    }

    #[test]
    fn switch_count_is_symmetric(
        a in prop::collection::vec(-16i32..=16, 3),
        b in prop::collection::vec(-16i32..=16, 3),
        ca in prop::collection::vec(any::<bool>(), 2),
        cb in prop::collection::vec(any::<bool>(), 2),
    ) {
        let (p, q) = (positions(a, ca), positions(b, cb));
        prop_assert_eq!(switch_count(&p, &q), switch_count(&q, &p));
    }

    #[test]
    fn factored_max_dominates_every_joint_action(
        heads in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 1..8), 1..4),
        pick in any::<u64>(),
    ) {
        let refs: Vec<&[f64]> = heads.iter().map(|h| h.as_slice()).collect();
        let best = factored_max(&refs);
        prop_assert_eq!(best.ops, heads.iter().map(|h| h.len()).sum::<usize>());
        let mut rng = ChaCha8Rng::seed_from_u64(pick);
        for _ in 0..20 {
            let v: f64 = heads.iter().map(|h| h[rng.random_range(0..h.len())]).sum();
            prop_assert!(v <= best.value + 1e-12);
        }
    }

    #[test]
    fn action_indices_round_trip(seed in any::<u64>()) {
        let f = resolve_feeder("case123_balanced").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = vvc_core::env::action_sizes(&f).iter().map(|&s| rng.random_range(0..s)).collect();
        let a = ActionVector::from_indices(&f, &idx);
        prop_assert_eq!(a.to_indices(&f), idx);
        let pos = a.to_positions(&f).unwrap();
        prop_assert_eq!(ActionVector::from_positions(&pos), a);
    }

    #[test]
    fn moving_average_of_constant(c in -5.0f64..5.0, n in 1usize..300, w in 1usize..50) {
        let xs = vec![c; n];
        let m = moving_average(&xs, w);
        prop_assert_eq!(m.len(), if n >= w { n - w + 1 } else { 0 });
        for v in m {
            prop_assert!((v - c).abs() < 1e-9);
        }
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(10);
    for i in 0..25usize {
        buf.push(i);
    }
    // ring keeps the latest ten
    let mut counts = [0usize; 25];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 100_000;
    for &x in buf.sample(draws, &mut rng) {
        counts[x] += 1;
    }
    assert!(counts[..15].iter().all(|&c| c == 0));
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts[15..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, 99.9th percentile
    assert!(chi2 < 27.88, "chi2 {chi2}");
}
