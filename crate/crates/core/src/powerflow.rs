//! Balanced branch-flow power flow on radial feeders.
//!
//! Unknowns per line `(i, j)`: sending-end flows `P`, `Q` and squared current
//! `l`; per bus: voltage magnitude `V`. The equations solved are
//!
//! ```text
//! (V_j / u)^2 = V_i^2 - 2 (r P + x Q) + (r^2 + x^2) l        line drop, u = regulator ratio
//! P - r l     = p_j + sum_{j->k} P_jk                         real balance at j
//! Q - x l     = q_j - M h V_j^2 + sum_{j->k} Q_jk              reactive balance, capacitor term
//! l           = (P^2 + Q^2) / V_i^2
//! V_1         = 1 + tap * step                                substation regulator
//! ```
//!
//! with loads `p_j, q_j` positive for consumption. [`solve`] runs a
//! backward-forward sweep; [`residual`] evaluates the max-norm mismatch of
//! any candidate state independently of how it was produced.

use serde::{Deserialize, Serialize};

use crate::feeder::{Feeder, VOLTS_BASIS};
use crate::{Error, Result};

/// Per-bus net load for one timestamp, indexed by bus index (`id - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionProfile {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionProfile {
    pub fn zeros(num_buses: usize) -> Self {
        Self { p: vec![0.0; num_buses], q: vec![0.0; num_buses] }
    }

    /// Every load point at its snapshot value.
    pub fn snapshot(feeder: &Feeder) -> Self {
        Self::from_loads(feeder, |k| {
            let l = &feeder.loads()[k];
            (l.p_snapshot, l.q_snapshot)
        })
    }

    /// Builds a profile from a per-load-point `(p, q)` accessor.
    pub fn from_loads(feeder: &Feeder, mut load: impl FnMut(usize) -> (f64, f64)) -> Self {
        let mut inj = Self::zeros(feeder.num_buses());
        for (k, lp) in feeder.loads().iter().enumerate() {
            let (p, q) = load(k);
            inj.p[lp.bus_ref - 1] += p;
            inj.q[lp.bus_ref - 1] += q;
        }
        inj
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { p: self.p.iter().map(|v| v * factor).collect(), q: self.q.iter().map(|v| v * factor).collect() }
    }
}

/// Regulator taps and capacitor statuses, in feeder declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DevicePositions {
    pub taps: Vec<i32>,
    pub cap_status: Vec<bool>,
}

impl DevicePositions {
    /// All taps at 0 and all capacitors open.
    pub fn neutral(feeder: &Feeder) -> Self {
        Self { taps: vec![0; feeder.regulators().len()], cap_status: vec![false; feeder.capacitors().len()] }
    }

    pub fn validate(&self, feeder: &Feeder) -> Result<()> {
        if self.taps.len() != feeder.regulators().len() || self.cap_status.len() != feeder.capacitors().len() {
            return Err(Error::Dimension(format!(
                "positions have {} taps / {} capacitors, feeder has {} / {}",
                self.taps.len(),
                self.cap_status.len(),
                feeder.regulators().len(),
                feeder.capacitors().len()
            )));
        }
        for (k, (reg, &tap)) in feeder.regulators().iter().zip(&self.taps).enumerate() {
            if !reg.contains_tap(tap) {
                return Err(Error::Range {
                    what: format!("regulator {k} tap"),
                    value: tap as i64,
                    min: reg.min_tap() as i64,
                    max: reg.max_tap() as i64,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Round limit for the static device-control loop.
    pub max_control_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iter: 200, damping: 1.0, max_control_rounds: 40 }
    }
}

/// Solved electrical state for one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    /// Voltage magnitude per bus index, p.u.
    pub v: Vec<f64>,
    /// Sending-end flows per line, p.u.
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Squared current magnitude per line, p.u.
    pub l: Vec<f64>,
    pub total_loss: f64,
    pub positions: DevicePositions,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl GridState {
    pub fn voltage(&self, bus_id: usize) -> f64 {
        self.v[bus_id - 1]
    }

    /// Voltage at `bus_id` on the 120 V basis.
    pub fn voltage_120(&self, bus_id: usize) -> f64 {
        self.v[bus_id - 1] * VOLTS_BASIS
    }

    /// Real and reactive power drawn from the substation bus.
    pub fn substation_pq(&self, feeder: &Feeder) -> (f64, f64) {
        feeder.topology().child_lines[0].iter().fold((0.0, 0.0), |(p, q), &k| (p + self.p_flow[k], q + self.q_flow[k]))
    }

    pub fn min_voltage(&self) -> f64 {
        self.v.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_voltage(&self) -> f64 {
        self.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Reference voltage set by the substation regulator; 1.0 without one.
pub fn substation_voltage(feeder: &Feeder, pos: &DevicePositions) -> f64 {
    match feeder.substation_regulator() {
        Some(k) => feeder.regulators()[k].ratio_unchecked(pos.taps[k]),
        None => 1.0,
    }
}

fn line_ratio(feeder: &Feeder, pos: &DevicePositions, line: usize) -> f64 {
    match feeder.topology().line_regulator[line] {
        Some(k) => feeder.regulators()[k].ratio_unchecked(pos.taps[k]),
        None => 1.0,
    }
}

/// Capacitor reactive output per bus index at the given voltages.
fn capacitor_q(feeder: &Feeder, pos: &DevicePositions, v: &[f64]) -> Vec<(usize, f64)> {
    feeder
        .capacitors()
        .iter()
        .zip(&pos.cap_status)
        .filter(|(_, &on)| on)
        .map(|(c, _)| {
            let b = c.bus_ref - 1;
            (b, c.m_cap * v[b] * v[b])
        })
        .collect()
}

/// Maximum absolute violation of the branch-flow equations by `candidate`.
pub fn residual(feeder: &Feeder, inj: &InjectionProfile, pos: &DevicePositions, candidate: &GridState) -> f64 {
    let topo = feeder.topology();
    let lines = feeder.lines();
    let v = &candidate.v;
    let (pf, qf, l) = (&candidate.p_flow, &candidate.q_flow, &candidate.l);

    let mut q_cap = vec![0.0; feeder.num_buses()];
    for (b, qc) in capacitor_q(feeder, pos, v) {
        q_cap[b] += qc;
    }

    let mut worst = (v[0] - substation_voltage(feeder, pos)).abs();
    for j in 1..feeder.num_buses() {
        let k = topo.parent_line[j].expect("non-root bus has a parent line");
        let line = &lines[k];
        let i = line.from_bus - 1;
        let (sum_p, sum_q) = topo.child_lines[j].iter().fold((0.0, 0.0), |(a, b), &c| (a + pf[c], b + qf[c]));
        let e_p = pf[k] - line.r * l[k] - inj.p[j] - sum_p;
        let e_q = qf[k] - line.x * l[k] - (inj.q[j] - q_cap[j]) - sum_q;
        let u = line_ratio(feeder, pos, k);
        let z2 = line.r * line.r + line.x * line.x;
        let e_v = (v[j] / u).powi(2) - (v[i] * v[i] - 2.0 * (line.r * pf[k] + line.x * qf[k]) + z2 * l[k]);
        let e_l = l[k] - (pf[k] * pf[k] + qf[k] * qf[k]) / (v[i] * v[i]);
        for e in [e_p, e_q, e_v, e_l] {
            // f64::max drops NaN, which would hide a diverged iterate
            if !e.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(e.abs());
        }
    }
    worst
}

/// Solves the branch-flow equations by backward-forward sweep from a flat
/// start. Capacitor injections are recomputed from the latest voltages every
/// sweep. If the residual fails to decrease for five consecutive sweeps the
/// voltage update is damped by 0.5. A non-converged result carries the best
/// iterate seen and `iterations == cfg.max_iter`.
pub fn solve(feeder: &Feeder, inj: &InjectionProfile, pos: &DevicePositions, cfg: &SolverConfig) -> GridState {
    let topo = feeder.topology();
    let lines = feeder.lines();
    let n = feeder.num_buses();
    let m = lines.len();

    let v0 = substation_voltage(feeder, pos);
    let ratios: Vec<f64> = (0..m).map(|k| line_ratio(feeder, pos, k)).collect();
    let mut cap_at = vec![0.0; n];
    for (c, &on) in feeder.capacitors().iter().zip(&pos.cap_status) {
        if on {
            cap_at[c.bus_ref - 1] += c.m_cap;
        }
    }

    let mut state = GridState {
        v: vec![v0; n],
        p_flow: vec![0.0; m],
        q_flow: vec![0.0; m],
        l: vec![0.0; m],
        total_loss: 0.0,
        positions: pos.clone(),
        converged: false,
        iterations: 0,
        residual: f64::INFINITY,
    };
    let mut best: Option<GridState> = None;
    let mut damping = cfg.damping;
    let mut prev_res = f64::INFINITY;
    let mut stalled = 0usize;
    let mut v_new = vec![v0; n];

    for iter in 1..=cfg.max_iter {
        // backward: accumulate flows leaves-to-root
        for &j in topo.order.iter().skip(1).rev() {
            let k = topo.parent_line[j].unwrap();
            let line = &lines[k];
            let (mut p, mut q) = (inj.p[j], inj.q[j] - cap_at[j] * state.v[j] * state.v[j]);
            for &c in &topo.child_lines[j] {
                p += state.p_flow[c];
                q += state.q_flow[c];
            }
            p += line.r * state.l[k];
            q += line.x * state.l[k];
            state.p_flow[k] = p;
            state.q_flow[k] = q;
            let vi = state.v[line.from_bus - 1];
            state.l[k] = (p * p + q * q) / (vi * vi);
        }
        // forward: voltages root-to-leaves
        v_new[0] = v0;
        for &j in topo.order.iter().skip(1) {
            let k = topo.parent_line[j].unwrap();
            let line = &lines[k];
            let vi = v_new[line.from_bus - 1];
            let z2 = line.r * line.r + line.x * line.x;
            let sq = vi * vi - 2.0 * (line.r * state.p_flow[k] + line.x * state.q_flow[k]) + z2 * state.l[k];
            let target = ratios[k] * sq.max(1e-6).sqrt();
            v_new[j] = state.v[j] + damping * (target - state.v[j]);
        }
        std::mem::swap(&mut state.v, &mut v_new);
        state.v[0] = v0;

        let res = residual(feeder, inj, pos, &state);
        state.residual = res;
        state.iterations = iter;
        if best.as_ref().is_none_or(|b| res < b.residual) {
            best = Some(state.clone());
        }
        if res <= cfg.tolerance {
            state.converged = true;
            state.total_loss = total_loss(feeder, &state.l);
            return state;
        }
        if res >= prev_res {
            stalled += 1;
            if stalled >= 5 && damping > 0.5 {
                damping = 0.5;
                stalled = 0;
            }
        } else {
            stalled = 0;
        }
        prev_res = res;
        if !res.is_finite() && state.v.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    let mut out = best.unwrap_or(state);
    out.converged = false;
    out.iterations = cfg.max_iter;
    out.total_loss = total_loss(feeder, &out.l);
    out
}

fn total_loss(feeder: &Feeder, l: &[f64]) -> f64 {
    feeder.lines().iter().zip(l).map(|(line, li)| line.r * li).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{Bus, Capacitor, FeederData, FeederMeta, Line, LoadPoint, Regulator};

    fn two_bus(cap: Option<f64>, reg: bool) -> Feeder {
        Feeder::new(FeederData {
            meta: FeederMeta { name: "t".into(), mva_base: 1.0, kv_base: 4.16 },
            buses: vec![
                Bus { id: 1, base_kv: 2.4, is_substation: true },
                Bus { id: 2, base_kv: 2.4, is_substation: false },
            ],
            lines: vec![Line { from_bus: 1, to_bus: 2, r: 0.01, x: 0.02 }],
            regulators: if reg { vec![Regulator { is_substation_reg: true, ..Regulator::default() }] } else { vec![] },
            capacitors: cap
                .map(|m| vec![Capacitor { bus_ref: 2, m_cap: m, v_on: 118.0, v_off: 122.0, controllable: true }])
                .unwrap_or_default(),
            loads: vec![LoadPoint { bus_ref: 2, p_snapshot: 0.1, q_snapshot: 0.05, meter_group: 0 }],
        })
        .unwrap()
    }

    #[test]
    fn zero_load_is_flat() {
        let f = two_bus(None, true);
        let s = solve(&f, &InjectionProfile::zeros(2), &DevicePositions::neutral(&f), &SolverConfig::default());
        assert!(s.converged);
        assert_eq!(s.v, vec![1.0, 1.0]);
        assert_eq!(s.total_loss, 0.0);
        assert_eq!(residual(&f, &InjectionProfile::zeros(2), &s.positions, &s), 0.0);
    }

    #[test]
    fn two_bus_loaded() {
        let f = two_bus(None, false);
        let inj = InjectionProfile::snapshot(&f);
        let s = solve(&f, &inj, &DevicePositions::neutral(&f), &SolverConfig::default());
        assert!(s.converged);
        assert!(s.residual <= 1e-10);
        assert!((s.voltage(2) - 0.99800).abs() < 1e-4, "{}", s.voltage(2));
    }

    #[test]
    fn substation_voltage_tracks_tap() {
        let f = two_bus(None, true);
        let mut pos = DevicePositions::neutral(&f);
        assert_eq!(substation_voltage(&f, &pos), 1.0);
        pos.taps[0] = 16;
        assert!((substation_voltage(&f, &pos) - 1.1).abs() < 1e-12);
        let nf = two_bus(None, false);
        assert_eq!(substation_voltage(&nf, &DevicePositions::neutral(&nf)), 1.0);
    }

    #[test]
    fn perturbation_shows_in_residual() {
        let f = two_bus(Some(0.05), false);
        let inj = InjectionProfile::snapshot(&f);
        let pos = DevicePositions { taps: vec![], cap_status: vec![true] };
        let mut s = solve(&f, &inj, &pos, &SolverConfig::default());
        assert!(residual(&f, &inj, &pos, &s) <= 1e-10);
        s.v[1] += 1e-3;
        assert!(residual(&f, &inj, &pos, &s) > 1e-4);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let f = two_bus(None, false);
        let inj = InjectionProfile::snapshot(&f).scaled(400.0);
        let cfg = SolverConfig { max_iter: 50, ..SolverConfig::default() };
        let s = solve(&f, &inj, &DevicePositions::neutral(&f), &cfg);
        assert!(!s.converged);
        assert_eq!(s.iterations, 50);
        assert!(s.residual.is_finite());
    }
}
