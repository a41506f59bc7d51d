use serde::{Deserialize, Serialize};

use crate::powerflow::DevicePositions;

pub const V_UPPER: f64 = 1.05;
pub const V_LOWER: f64 = 0.95;

/// Reward coefficients for the voltage, loss and switching terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beta(pub f64, pub f64, pub f64);

impl Default for Beta {
    fn default() -> Self {
        Beta(0.5, 1.0, 0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub total: f64,
    pub v_term: f64,
    pub loss_term: f64,
    pub switch_term: f64,
    /// Worst excursion outside [0.95, 1.05] over all buses, p.u.; 0 inside.
    pub max_violation: f64,
}

/// Sum of |tap change| over regulators plus one per capacitor toggle.
pub fn switch_count(prev: &DevicePositions, next: &DevicePositions) -> f64 {
    let taps: i64 = prev.taps.iter().zip(&next.taps).map(|(a, b)| (*a as i64 - *b as i64).abs()).sum();
    let caps = prev.cap_status.iter().zip(&next.cap_status).filter(|(a, b)| a != b).count();
    (taps + caps as i64) as f64
}

pub fn max_violation(voltages: &[f64]) -> f64 {
    voltages.iter().map(|&v| (v - V_UPPER).max(V_LOWER - v).max(0.0)).fold(0.0, f64::max)
}

/// Evaluates reward option 1..=4.
///
/// `meter_voltages` feed the voltage term; `all_voltages` only feed the
/// violation metric.
pub fn reward_terms(
    option: u8,
    beta: Beta,
    meter_voltages: &[f64],
    all_voltages: &[f64],
    loss: f64,
    prev: &DevicePositions,
    next: &DevicePositions,
) -> RewardBreakdown {
    let v_term = match option {
        1 | 2 => meter_voltages.iter().map(|v| (v - 1.0).abs()).sum(),
        _ => meter_voltages.iter().filter(|&&v| !(V_LOWER..=V_UPPER).contains(&v)).count() as f64,
    };
    let loss_term = if option == 1 || option == 3 { loss } else { 0.0 };
    let switch_term = switch_count(prev, next);
    RewardBreakdown {
        // loss enters last so that dropping it is exact in floating point
        total: (-beta.0 * v_term - beta.2 * switch_term) - beta.1 * loss_term,
        v_term,
        loss_term,
        switch_term,
        max_violation: max_violation(all_voltages),
    }
}
