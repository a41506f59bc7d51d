//! Half-hourly load series for feeder load points.
//!
//! Pipeline: meter readings (synthetic or CSV) → customer selection by
//! missing fraction → low-rank imputation → per-load aggregation of a block
//! of customers → division by the time average → scaling by the load point's
//! snapshot → AMI rounding of the physical values.

mod csvio;
mod impute;
mod synthetic;

use chrono::{Duration, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::feeder::Feeder;
use crate::powerflow::InjectionProfile;
use crate::{Error, Result};

pub use csvio::{read_load_series, read_meter_csv, write_load_series, write_meter_csv};
pub use impute::{impute, impute_with_trace, ImputeConfig};
pub use synthetic::generate_synthetic;

pub const STEP_MINUTES: i64 = 30;
pub const STEPS_PER_DAY: usize = 48;
pub const STEPS_PER_WEEK: usize = 336;

pub fn step_duration() -> Duration {
    Duration::minutes(STEP_MINUTES)
}

/// Customers × timestamps kWh readings with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterMatrix {
    pub customer_ids: Vec<String>,
    pub start_time: NaiveDateTime,
    n_steps: usize,
    /// Row-major; zero where missing.
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl MeterMatrix {
    /// Builds a matrix from row-major values; `None` marks a missing reading.
    pub fn from_rows(
        customer_ids: Vec<String>,
        start_time: NaiveDateTime,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let n_steps = rows.first().map_or(0, |r| r.len());
        if rows.len() != customer_ids.len() || rows.iter().any(|r| r.len() != n_steps) {
            return Err(Error::Dimension("ragged meter rows".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * n_steps);
        let mut observed = Vec::with_capacity(rows.len() * n_steps);
        for row in rows {
            for x in row {
                match x {
                    Some(v) if v.is_finite() => {
                        values.push(v);
                        observed.push(true);
                    }
                    _ => {
                        values.push(0.0);
                        observed.push(false);
                    }
                }
            }
        }
        Ok(Self { customer_ids, start_time, n_steps, values, observed })
    }

    pub fn n_customers(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n_steps + col;
        self.observed[i].then_some(self.values[i])
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.n_steps + col]
    }

    pub fn row_missing(&self, row: usize) -> usize {
        self.observed[row * self.n_steps..(row + 1) * self.n_steps].iter().filter(|o| !**o).count()
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|o| *o)
    }

    pub fn timestamp(&self, step: usize) -> NaiveDateTime {
        self.start_time + step_duration() * step as i32
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_steps);
        let mut observed = Vec::with_capacity(rows.len() * self.n_steps);
        for &r in rows {
            let span = r * self.n_steps..(r + 1) * self.n_steps;
            values.extend_from_slice(&self.values[span.clone()]);
            observed.extend_from_slice(&self.observed[span]);
        }
        Self {
            customer_ids: rows.iter().map(|&r| self.customer_ids[r].clone()).collect(),
            start_time: self.start_time,
            n_steps: self.n_steps,
            values,
            observed,
        }
    }
}

/// Keeps customers whose missing fraction is strictly below `max_missing_frac`.
pub fn select_customers(m: &MeterMatrix, max_missing_frac: f64) -> Result<MeterMatrix> {
    if !(0.0..=1.0).contains(&max_missing_frac) {
        return Err(Error::Argument(format!("max_missing_frac {max_missing_frac} outside [0, 1]")));
    }
    let keep: Vec<usize> =
        (0..m.n_customers()).filter(|&r| (m.row_missing(r) as f64) < max_missing_frac * m.n_steps() as f64).collect();
    if keep.is_empty() {
        return Err(Error::NoQualifyingCustomers);
    }
    Ok(m.select_rows(&keep))
}

/// Per-load-point active and reactive series, per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub start_time: NaiveDateTime,
    /// `p[load][t]`
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl LoadSeries {
    pub fn horizon(&self) -> usize {
        self.p.first().map_or(0, |s| s.len())
    }

    pub fn num_loads(&self) -> usize {
        self.p.len()
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start_time + step_duration() * t as i32
    }

    pub fn injection(&self, feeder: &Feeder, t: usize) -> InjectionProfile {
        InjectionProfile::from_loads(feeder, |k| (self.p[k][t], self.q[k][t]))
    }

    /// Rounds every value to 0.1 kW / kVAr on the feeder's MVA base.
    pub fn quantize_ami(&mut self, mva_base: f64) {
        let kw = mva_base * 1000.0;
        for s in self.p.iter_mut().chain(self.q.iter_mut()) {
            for v in s.iter_mut() {
                *v = round_ami(*v * kw) / kw;
            }
        }
    }

    pub fn truncated(&self, horizon: usize) -> Self {
        Self {
            start_time: self.start_time,
            p: self.p.iter().map(|s| s[..horizon.min(s.len())].to_vec()).collect(),
            q: self.q.iter().map(|s| s[..horizon.min(s.len())].to_vec()).collect(),
        }
    }
}

/// Aggregates disjoint blocks of `customers_per_load` customers into one
/// series per load point, normalizes each by its time average and scales it
/// by the load's snapshot. With `power_factor` set, reactive power is
/// `p * tan(acos(pf))`; otherwise the snapshot `q` is scaled by the same
/// normalized series. `seed` shuffles which customers feed which load.
pub fn build_load_series(
    feeder: &Feeder,
    m: &MeterMatrix,
    customers_per_load: usize,
    power_factor: Option<f64>,
    seed: u64,
) -> Result<LoadSeries> {
    if customers_per_load == 0 {
        return Err(Error::Argument("customers_per_load must be >= 1".into()));
    }
    if !m.is_complete() {
        return Err(Error::Argument("meter matrix has missing entries; impute first".into()));
    }
    let needed = feeder.loads().len() * customers_per_load;
    if needed > m.n_customers() {
        return Err(Error::InsufficientCustomers { needed, available: m.n_customers() });
    }
    let mut rows: Vec<usize> = (0..m.n_customers()).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let t_len = m.n_steps();
    let mut p = Vec::with_capacity(feeder.loads().len());
    let mut q = Vec::with_capacity(feeder.loads().len());
    for (k, lp) in feeder.loads().iter().enumerate() {
        let block = &rows[k * customers_per_load..(k + 1) * customers_per_load];
        let summed: Vec<f64> = (0..t_len).map(|t| block.iter().map(|&r| m.values[r * t_len + t]).sum()).collect();
        let base = normalize_by_mean(&summed)
            .ok_or_else(|| Error::Argument(format!("load {k}: aggregated series has non-positive mean")))?;
        let ps: Vec<f64> = base.iter().map(|b| b * lp.p_snapshot).collect();
        let qs: Vec<f64> = match power_factor {
            Some(pf) => {
                let ratio = pf.acos().tan();
                ps.iter().map(|v| v * ratio).collect()
            }
            None => base.iter().map(|b| b * lp.q_snapshot).collect(),
        };
        p.push(ps);
        q.push(qs);
    }
    Ok(LoadSeries { start_time: m.start_time, p, q })
}

/// Divides a series by its time average; `None` if the average is not positive.
pub fn normalize_by_mean(series: &[f64]) -> Option<Vec<f64>> {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    (mean > 0.0 && mean.is_finite()).then(|| series.iter().map(|v| v / mean).collect())
}

/// Nearest multiple of 0.1, ties away from zero.
pub fn round_ami(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}
