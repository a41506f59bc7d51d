//! Default local device control and the static control loop.
//!
//! Capacitors follow a voltage hysteresis rule; regulators run a one-tap
//! band controller on the line-drop-compensated voltage. Both act on 120 V
//! basis quantities. [`static_control_solve`] alternates power flow and one
//! control round until no device moves.

use crate::feeder::{Capacitor, Feeder, Regulator, VOLTS_BASIS};
use crate::powerflow::{solve, DevicePositions, GridState, InjectionProfile, SolverConfig};

/// Hysteresis rule: close below `v_on`, open above `v_off`, hold otherwise.
pub fn capacitor_step(cap: &Capacitor, v_local_120: f64, status: bool) -> bool {
    if v_local_120 < cap.v_on {
        true
    } else if v_local_120 > cap.v_off {
        false
    } else {
        status
    }
}

/// One-tap band controller on an already compensated voltage.
pub fn band_step(reg: &Regulator, tap: i32, v_comp_120: f64) -> i32 {
    let half = reg.bandwidth_v / 2.0;
    if v_comp_120 > reg.band_center_v + half {
        (tap - 1).max(reg.min_tap())
    } else if v_comp_120 < reg.band_center_v - half {
        (tap + 1).min(reg.max_tap())
    } else {
        tap
    }
}

/// Regulated-side voltage minus the compensator's drop estimate, 120 V basis.
///
/// The drop is `ldc_r * I_re + ldc_x * I_im` with the per-unit current split
/// into components in phase and in quadrature with the sending-end voltage.
pub fn compensated_voltage(feeder: &Feeder, reg_index: usize, state: &GridState) -> f64 {
    let reg = &feeder.regulators()[reg_index];
    let (v_reg, p, q, v_send) = match (reg.is_substation_reg, reg.line_ref) {
        (true, None) => {
            let (p, q) = state.substation_pq(feeder);
            (state.v[0], p, q, state.v[0])
        }
        (true, Some(k)) => {
            let i = feeder.lines()[k].from_bus - 1;
            (state.v[0], state.p_flow[k], state.q_flow[k], state.v[i])
        }
        (false, Some(k)) => {
            let line = &feeder.lines()[k];
            (state.v[line.to_bus - 1], state.p_flow[k], state.q_flow[k], state.v[line.from_bus - 1])
        }
        (false, None) => unreachable!("validated: field regulators carry a line_ref"),
    };
    let (i_re, i_im) = (p / v_send, q / v_send);
    v_reg * VOLTS_BASIS - (reg.ldc_r * i_re + reg.ldc_x * i_im)
}

/// Next tap for regulator `reg_index` given a solved state.
pub fn regulator_step(feeder: &Feeder, reg_index: usize, state: &GridState) -> i32 {
    let reg = &feeder.regulators()[reg_index];
    let tap = state.positions.taps[reg_index];
    band_step(reg, tap, compensated_voltage(feeder, reg_index, state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub new_positions: DevicePositions,
    pub changed: bool,
}

/// One control round over all devices, all evaluated against `state`.
/// Regulators are scanned by index, then capacitors; non-controllable
/// capacitors hold their status.
pub fn control_round(feeder: &Feeder, state: &GridState) -> ControlDecision {
    let mut next = state.positions.clone();
    for k in 0..feeder.regulators().len() {
        next.taps[k] = regulator_step(feeder, k, state);
    }
    for (k, cap) in feeder.capacitors().iter().enumerate() {
        if cap.controllable {
            next.cap_status[k] = capacitor_step(cap, state.voltage_120(cap.bus_ref), next.cap_status[k]);
        }
    }
    let changed = next != state.positions;
    ControlDecision { new_positions: next, changed }
}

#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub state: GridState,
    pub positions: DevicePositions,
    pub rounds: usize,
    /// The round limit was reached with devices still moving.
    pub round_limit_hit: bool,
}

/// Iterates power flow and device control to a joint fixed point for a
/// single timestamp, starting from `initial`.
pub fn static_control_solve(
    feeder: &Feeder,
    inj: &InjectionProfile,
    initial: &DevicePositions,
    cfg: &SolverConfig,
) -> StaticSolution {
    let mut positions = initial.clone();
    let mut state = solve(feeder, inj, &positions, cfg);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let decision = control_round(feeder, &state);
        if !decision.changed {
            return StaticSolution { state, positions, rounds, round_limit_hit: false };
        }
        if rounds >= cfg.max_control_rounds {
            return StaticSolution { state, positions, rounds, round_limit_hit: true };
        }
        positions = decision.new_positions;
        state = solve(feeder, inj, &positions, cfg);
    }
}
