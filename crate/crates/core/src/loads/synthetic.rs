use std::f64::consts::PI;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::{MeterMatrix, STEPS_PER_DAY, STEPS_PER_WEEK};

const MISSING_RATE: f64 = 0.02;
/// Half-hour slot of the evening peak (19:30).
const EVENING_PEAK: f64 = 39.0;

/// Seeded stand-in for a smart-meter panel: per-customer kWh series with a
/// daily two-harmonic shape peaking in the evening, a weekly sinusoid and
/// multiplicative lognormal noise. About 2% of readings are dropped.
pub fn generate_synthetic(n_customers: usize, n_steps: usize, seed: u64) -> MeterMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = LogNormal::new((0.5f64).ln(), 0.3).unwrap();
    let noise = LogNormal::new(0.0, 0.2).unwrap();
    let start = NaiveDate::from_ymd_opt(2011, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();

    let mut rows = Vec::with_capacity(n_customers);
    for _ in 0..n_customers {
        let base = level.sample(&mut rng);
        let daily = rng.random_range(0.35..0.55);
        let second = rng.random_range(0.15..0.3);
        let shift = rng.random_range(-1.5..1.5);
        let weekly = rng.random_range(0.05..0.15);
        let week_phase = rng.random_range(0.0..STEPS_PER_WEEK as f64);
        let row = (0..n_steps)
            .map(|t| {
                let h = (t % STEPS_PER_DAY) as f64 - EVENING_PEAK - shift;
                let w = 2.0 * PI / STEPS_PER_DAY as f64;
                let shape = 1.0 + daily * (w * h).cos() + second * (2.0 * w * h).cos();
                let week = 1.0 + weekly * (2.0 * PI * (t as f64 - week_phase) / STEPS_PER_WEEK as f64).cos();
                let value = base * shape * week * noise.sample(&mut rng);
                (!rng.random_bool(MISSING_RATE)).then_some(value)
            })
            .collect();
        rows.push(row);
    }
    let ids = (0..n_customers).map(|i| format!("MAC{i:06}")).collect();
    MeterMatrix::from_rows(ids, start, rows).expect("rows are rectangular")
}
