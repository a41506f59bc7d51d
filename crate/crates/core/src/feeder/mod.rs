//! Radial feeder data model.
//!
//! A [`Feeder`] is an immutable, validated description of a balanced radial
//! network: buses, lines (directed away from the substation), tap-changing
//! regulators, switched capacitors and load attachment points. All electrical
//! quantities are per unit on the feeder-wide MVA base declared in
//! [`FeederMeta`]; control setpoints are volts on a 120 V basis.

mod bundled;
mod io;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bundled::{bundled_names, resolve_feeder, BUNDLED_DIR};
pub use io::{load_feeder, parse_feeder, to_toml_string, write_feeder};
pub use synthetic::{synthetic_large_feeder, SYNTHETIC_LARGE_NAME};

/// Secondary voltage basis used for control setpoints and logged voltages.
pub const VOLTS_BASIS: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederMeta {
    pub name: String,
    pub mva_base: f64,
    /// Nominal line-to-line voltage at the substation, kV.
    pub kv_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Nominal line-to-neutral voltage, kV.
    pub base_kv: f64,
    #[serde(default)]
    pub is_substation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
}

fn default_num_taps() -> u32 {
    33
}
fn default_ratio_min() -> f64 {
    0.9
}
fn default_ratio_max() -> f64 {
    1.1
}
fn default_step() -> f64 {
    0.00625
}
fn default_band_center() -> f64 {
    120.0
}
fn default_bandwidth() -> f64 {
    2.0
}

/// Tap-changing regulator (substation LTC or field regulator).
///
/// A field regulator sits on line `line_ref` (index into the feeder's line
/// list) and scales the downstream voltage by its turns ratio. The substation
/// regulator instead sets the bus-1 reference voltage; its optional `line_ref`
/// selects the line whose current feeds the line-drop compensator (the total
/// head-of-feeder current when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regulator {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_ref: Option<usize>,
    #[serde(default = "default_num_taps")]
    pub num_taps: u32,
    #[serde(default = "default_ratio_min")]
    pub ratio_min: f64,
    #[serde(default = "default_ratio_max")]
    pub ratio_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub is_substation_reg: bool,
    #[serde(default)]
    pub ldc_r: f64,
    #[serde(default)]
    pub ldc_x: f64,
    #[serde(default = "default_band_center")]
    pub band_center_v: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_v: f64,
}

impl Default for Regulator {
    fn default() -> Self {
        Self {
            line_ref: None,
            num_taps: default_num_taps(),
            ratio_min: default_ratio_min(),
            ratio_max: default_ratio_max(),
            step: default_step(),
            is_substation_reg: false,
            ldc_r: 0.0,
            ldc_x: 0.0,
            band_center_v: default_band_center(),
            bandwidth_v: default_bandwidth(),
        }
    }
}

impl Regulator {
    /// Largest tap magnitude; taps run over `-max_tap..=max_tap`.
    pub fn max_tap(&self) -> i32 {
        (self.num_taps as i32 - 1) / 2
    }

    pub fn min_tap(&self) -> i32 {
        -self.max_tap()
    }

    pub fn contains_tap(&self, tap: i32) -> bool {
        (self.min_tap()..=self.max_tap()).contains(&tap)
    }

    /// Turns ratio at `tap`: `1 + tap * step`.
    pub fn tap_to_ratio(&self, tap: i32) -> Result<f64> {
        if !self.contains_tap(tap) {
            return Err(Error::Range {
                what: "tap".into(),
                value: tap as i64,
                min: self.min_tap() as i64,
                max: self.max_tap() as i64,
            });
        }
        Ok(self.ratio_unchecked(tap))
    }

    pub(crate) fn ratio_unchecked(&self, tap: i32) -> f64 {
        1.0 + tap as f64 * self.step
    }
}

/// Free-function form of [`Regulator::tap_to_ratio`].
pub fn tap_to_ratio(reg: &Regulator, tap: i32) -> Result<f64> {
    reg.tap_to_ratio(tap)
}

/// Shunt capacitor bank with voltage hysteresis control.
///
/// `controllable = false` means the local controller never switches the bank
/// (it holds whatever status it was given); the RL action still covers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacitor {
    pub bus_ref: usize,
    pub m_cap: f64,
    pub v_on: f64,
    pub v_off: f64,
    #[serde(default = "default_true")]
    pub controllable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub bus_ref: usize,
    pub p_snapshot: f64,
    pub q_snapshot: f64,
    #[serde(default)]
    pub meter_group: usize,
}

/// Serialized form of a feeder; validated into a [`Feeder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederData {
    pub meta: FeederMeta,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub regulators: Vec<Regulator>,
    #[serde(default)]
    pub capacitors: Vec<Capacitor>,
    #[serde(default)]
    pub loads: Vec<LoadPoint>,
}

/// Tree structure derived during validation. Bus indices are `id - 1`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Topology {
    /// Line feeding each bus (`None` for the substation).
    pub parent_line: Vec<Option<usize>>,
    /// Lines leaving each bus.
    pub child_lines: Vec<Vec<usize>>,
    /// Buses in breadth-first order from the substation.
    pub order: Vec<usize>,
    /// Regulator sitting on each line, if any (field regulators only).
    pub line_regulator: Vec<Option<usize>>,
    pub substation_reg: Option<usize>,
}

/// A validated radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    data: FeederData,
    topo: Topology,
}

impl Feeder {
    pub fn new(mut data: FeederData) -> Result<Self> {
        data.buses.sort_by_key(|b| b.id);
        let topo = validate(&data)?;
        Ok(Self { data, topo })
    }

    pub fn data(&self) -> &FeederData {
        &self.data
    }

    pub fn name(&self) -> &str {
        &self.data.meta.name
    }

    pub fn meta(&self) -> &FeederMeta {
        &self.data.meta
    }

    pub fn num_buses(&self) -> usize {
        self.data.buses.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.data.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.data.lines
    }

    pub fn regulators(&self) -> &[Regulator] {
        &self.data.regulators
    }

    pub fn capacitors(&self) -> &[Capacitor] {
        &self.data.capacitors
    }

    pub fn loads(&self) -> &[LoadPoint] {
        &self.data.loads
    }

    /// Regulators followed by capacitors: the RL device ordering.
    pub fn num_devices(&self) -> usize {
        self.data.regulators.len() + self.data.capacitors.len()
    }

    pub fn substation_regulator(&self) -> Option<usize> {
        self.topo.substation_reg
    }

    pub(crate) fn topology(&self) -> &Topology {
        &self.topo
    }

    /// Distinct load buses in ascending id order (default meter set).
    pub fn load_buses(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.data.loads.iter().map(|l| l.bus_ref).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn validate(d: &FeederData) -> Result<Topology> {
    if !(d.meta.mva_base > 0.0) {
        return Err(Error::validation("meta", "mva_base must be positive"));
    }
    let n = d.buses.len();
    if n == 0 {
        return Err(Error::validation("buses", "feeder has no buses"));
    }
    for (k, bus) in d.buses.iter().enumerate() {
        if bus.id != k + 1 {
            return Err(Error::validation(format!("bus {}", bus.id), "bus ids must be dense in 1..N"));
        }
        if bus.is_substation != (bus.id == 1) {
            return Err(Error::validation(format!("bus {}", bus.id), "bus 1 must be the only substation"));
        }
    }
    let bus_ok = |id: usize| id >= 1 && id <= n;

    if d.lines.len() + 1 != n {
        return Err(Error::validation("lines", format!("non-radial: {} lines for {} buses", d.lines.len(), n)));
    }
    let mut parent_line = vec![None; n];
    let mut child_lines = vec![Vec::new(); n];
    for (k, line) in d.lines.iter().enumerate() {
        let el = format!("line {k}");
        if !bus_ok(line.from_bus) || !bus_ok(line.to_bus) {
            return Err(Error::validation(el, "references a missing bus"));
        }
        if !(line.r >= 0.0) || !line.x.is_finite() {
            return Err(Error::validation(el, "r must be >= 0 and x finite"));
        }
        let to = line.to_bus - 1;
        if to == 0 || parent_line[to].is_some() || line.from_bus == line.to_bus {
            return Err(Error::validation(el, "non-radial"));
        }
        parent_line[to] = Some(k);
        child_lines[line.from_bus - 1].push(k);
    }
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    order.push(0);
    seen[0] = true;
    let mut head = 0;
    while head < order.len() {
        let b = order[head];
        head += 1;
        for &k in &child_lines[b] {
            let to = d.lines[k].to_bus - 1;
            if !seen[to] {
                seen[to] = true;
                order.push(to);
            }
        }
    }
    if order.len() != n {
        let missing = seen.iter().position(|s| !s).unwrap_or(0);
        return Err(Error::validation(format!("bus {}", missing + 1), "non-radial: not reachable from the substation"));
    }

    let mut line_regulator = vec![None; d.lines.len()];
    let mut substation_reg = None;
    for (k, reg) in d.regulators.iter().enumerate() {
        let el = format!("regulator {k}");
        if reg.num_taps % 2 == 0 || reg.num_taps == 0 {
            return Err(Error::validation(el, "num_taps must be odd"));
        }
        if !(reg.step > 0.0) {
            return Err(Error::validation(el, "step must be positive"));
        }
        let lo = reg.ratio_unchecked(reg.min_tap());
        let hi = reg.ratio_unchecked(reg.max_tap());
        if (lo - reg.ratio_min).abs() > 1e-9 || (hi - reg.ratio_max).abs() > 1e-9 {
            return Err(Error::validation(
                el,
                format!("ratio range [{}, {}] inconsistent with taps and step", reg.ratio_min, reg.ratio_max),
            ));
        }
        if !(reg.bandwidth_v > 0.0) {
            return Err(Error::validation(el, "bandwidth_v must be positive"));
        }
        if let Some(l) = reg.line_ref {
            if l >= d.lines.len() {
                return Err(Error::validation(el, "line_ref references a missing line"));
            }
        }
        if reg.is_substation_reg {
            if substation_reg.replace(k).is_some() {
                return Err(Error::validation(el, "more than one substation regulator"));
            }
        } else {
            let l = reg
                .line_ref
                .ok_or_else(|| Error::validation(format!("regulator {k}"), "field regulator needs line_ref"))?;
            if line_regulator[l].replace(k).is_some() {
                return Err(Error::validation(format!("regulator {k}"), "two regulators on one line"));
            }
        }
    }
    for (k, cap) in d.capacitors.iter().enumerate() {
        let el = format!("capacitor {k}");
        if !bus_ok(cap.bus_ref) {
            return Err(Error::validation(el, "bus_ref references a missing bus"));
        }
        if !(cap.m_cap > 0.0) {
            return Err(Error::validation(el, "m_cap must be positive"));
        }
        if !(cap.v_on < cap.v_off) {
            return Err(Error::validation(el, "v_on must be below v_off"));
        }
    }
    for (k, load) in d.loads.iter().enumerate() {
        let el = format!("load {k}");
        if !bus_ok(load.bus_ref) || load.bus_ref == 1 {
            return Err(Error::validation(el, "bus_ref must be an existing non-substation bus"));
        }
        if !(load.p_snapshot >= 0.0) || !load.q_snapshot.is_finite() {
            return Err(Error::validation(el, "p_snapshot must be >= 0"));
        }
    }
    Ok(Topology { parent_line, child_lines, order, line_regulator, substation_reg })
}
