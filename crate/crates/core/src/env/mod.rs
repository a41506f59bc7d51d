//! Non-episodic volt-VAR control environment.
//!
//! Each step the agent sets every regulator tap and capacitor status, the
//! power flow is solved at that step's loads and a reward is returned. Local
//! device logic never overrides the agent here; it only runs to produce the
//! default-control baseline, which is computed once at construction over a
//! 48-step warmup (the first day of the series replayed) followed by the
//! horizon. The baseline supplies the initial positions, the frozen
//! normalization statistics and the per-step default reward.

mod dataset;
mod reward;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::static_control_solve;
use crate::feeder::Feeder;
use crate::loads::{LoadSeries, STEPS_PER_DAY, STEPS_PER_WEEK};
use crate::powerflow::{solve, DevicePositions, GridState, SolverConfig};
use crate::{Error, Result};

pub use dataset::{generate_offline_dataset, read_offline_dataset, sidecar_path, DatasetMeta, Transition, WARMUP_NOTE};
pub use reward::{max_violation, reward_terms, switch_count, Beta, RewardBreakdown, V_LOWER, V_UPPER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub state_option: u8,
    pub reward_option: u8,
    pub beta: Beta,
    pub horizon: usize,
    /// Consecutive load points averaged into one AMI feature.
    pub meter_group_size: usize,
    /// Default-control pre-roll before t = 0.
    pub warmup: usize,
    pub solver: SolverConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            state_option: 2,
            reward_option: 1,
            beta: Beta::default(),
            horizon: 4032,
            meter_group_size: 1,
            warmup: STEPS_PER_DAY,
            solver: SolverConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.state_option) {
            return Err(Error::Argument(format!("state_option {} not in 1..=3", self.state_option)));
        }
        if !(1..=4).contains(&self.reward_option) {
            return Err(Error::Argument(format!("reward_option {} not in 1..=4", self.reward_option)));
        }
        if self.horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        if self.meter_group_size == 0 {
            return Err(Error::Argument("meter_group_size must be >= 1".into()));
        }
        if self.warmup < STEPS_PER_DAY {
            return Err(Error::Argument(format!("warmup must cover one day ({STEPS_PER_DAY} steps)")));
        }
        Ok(())
    }
}

/// Named contiguous slices of the flat observation vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub slices: Vec<(String, usize)>,
}

impl ObsLayout {
    pub fn dim(&self) -> usize {
        self.slices.iter().map(|(_, n)| n).sum()
    }

    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for (n, len) in &self.slices {
            if n == name {
                return Some(start..start + len);
            }
            start += len;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: usize,
    pub features: Vec<f64>,
}

/// `[cos(2πt/48), sin(2πt/48), cos(2πt/336), sin(2πt/336)]`
pub fn time_encoding(t: usize) -> [f64; 4] {
    let d = 2.0 * PI * (t % STEPS_PER_DAY) as f64 / STEPS_PER_DAY as f64;
    let w = 2.0 * PI * (t % STEPS_PER_WEEK) as f64 / STEPS_PER_WEEK as f64;
    [d.cos(), d.sin(), w.cos(), w.sin()]
}

/// One value per device: regulator taps first, then capacitor status (0/1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<i32>);

impl ActionVector {
    pub fn from_positions(pos: &DevicePositions) -> Self {
        Self(pos.taps.iter().copied().chain(pos.cap_status.iter().map(|&c| c as i32)).collect())
    }

    pub fn to_positions(&self, feeder: &Feeder) -> Result<DevicePositions> {
        let nr = feeder.regulators().len();
        if self.0.len() != feeder.num_devices() {
            return Err(Error::Dimension(format!(
                "action has {} coordinates, feeder has {} devices",
                self.0.len(),
                feeder.num_devices()
            )));
        }
        for (k, reg) in feeder.regulators().iter().enumerate() {
            if !reg.contains_tap(self.0[k]) {
                return Err(Error::Range {
                    what: format!("regulator {k} tap"),
                    value: self.0[k] as i64,
                    min: reg.min_tap() as i64,
                    max: reg.max_tap() as i64,
                });
            }
        }
        for (k, &c) in self.0[nr..].iter().enumerate() {
            if !(0..=1).contains(&c) {
                return Err(Error::Range { what: format!("capacitor {k} status"), value: c as i64, min: 0, max: 1 });
            }
        }
        Ok(DevicePositions { taps: self.0[..nr].to_vec(), cap_status: self.0[nr..].iter().map(|&c| c == 1).collect() })
    }

    /// Zero-based index of each coordinate within its device's action set.
    pub fn to_indices(&self, feeder: &Feeder) -> Vec<usize> {
        let nr = feeder.regulators().len();
        self.0
            .iter()
            .enumerate()
            .map(|(k, &a)| if k < nr { (a - feeder.regulators()[k].min_tap()) as usize } else { a as usize })
            .collect()
    }

    pub fn from_indices(feeder: &Feeder, idx: &[usize]) -> Self {
        let nr = feeder.regulators().len();
        Self(
            idx.iter()
                .enumerate()
                .map(|(k, &i)| if k < nr { feeder.regulators()[k].min_tap() + i as i32 } else { i as i32 })
                .collect(),
        )
    }
}

/// Number of discrete settings of each device, in action order.
pub fn action_sizes(feeder: &Feeder) -> Vec<usize> {
    feeder.regulators().iter().map(|r| r.num_taps as usize).chain(feeder.capacitors().iter().map(|_| 2)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub reward: RewardBreakdown,
    pub converged: bool,
    pub min_voltage: f64,
    pub max_voltage: f64,
    pub loss: f64,
    pub positions: DevicePositions,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub info: StepInfo,
}

/// Default-control run over warmup and horizon. Vectors indexed by
/// `tau + warmup` hold one entry per solved timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub warmup: usize,
    pub positions: Vec<DevicePositions>,
    pub scada: Vec<(f64, f64)>,
    /// Per horizon step, the default policy's reward.
    pub rewards: Vec<RewardBreakdown>,
    pub round_limit_hits: usize,
    pub non_converged: usize,
}

impl Baseline {
    pub fn initial_positions(&self) -> &DevicePositions {
        &self.positions[self.warmup - 1]
    }

    /// Positions chosen by default control at horizon step `t`.
    pub fn positions_at(&self, t: usize) -> &DevicePositions {
        &self.positions[self.warmup + t]
    }
}

fn check_series(loads: &LoadSeries, feeder: &Feeder, cfg: &EnvConfig) -> Result<()> {
    if loads.num_loads() != feeder.loads().len() {
        return Err(Error::Dimension(format!(
            "load series has {} loads, feeder has {}",
            loads.num_loads(),
            feeder.loads().len()
        )));
    }
    let needed = cfg.horizon.max(cfg.warmup);
    if loads.horizon() < needed {
        return Err(Error::InsufficientSeries { needed, available: loads.horizon() });
    }
    Ok(())
}

/// Series index for signed time `tau`; warmup replays the first day.
fn series_index(tau: isize, warmup: usize, len: usize) -> usize {
    if tau < 0 {
        (tau + warmup as isize) as usize % STEPS_PER_DAY.min(len)
    } else {
        tau as usize % len
    }
}

fn meter_voltages(state: &GridState, meters: &[usize]) -> Vec<f64> {
    meters.iter().map(|&b| state.voltage(b)).collect()
}

/// Runs default local control with positions carried forward from all
/// devices neutral, calling `on_state` with each horizon step's solution.
pub fn default_control_run(
    feeder: &Feeder,
    loads: &LoadSeries,
    cfg: &EnvConfig,
    mut on_state: impl FnMut(usize, &GridState),
) -> Result<Baseline> {
    cfg.validate()?;
    check_series(loads, feeder, cfg)?;
    let meters = feeder.load_buses();
    let total = cfg.warmup + cfg.horizon;
    let mut out = Baseline {
        warmup: cfg.warmup,
        positions: Vec::with_capacity(total),
        scada: Vec::with_capacity(total),
        rewards: Vec::with_capacity(cfg.horizon),
        round_limit_hits: 0,
        non_converged: 0,
    };
    let mut prev = DevicePositions::neutral(feeder);
    for i in 0..total {
        let tau = i as isize - cfg.warmup as isize;
        let inj = loads.injection(feeder, series_index(tau, cfg.warmup, loads.horizon()));
        let sol = static_control_solve(feeder, &inj, &prev, &cfg.solver);
        out.round_limit_hits += sol.round_limit_hit as usize;
        out.non_converged += !sol.state.converged as usize;
        if tau >= 0 {
            out.rewards.push(reward_terms(
                cfg.reward_option,
                cfg.beta,
                &meter_voltages(&sol.state, &meters),
                &sol.state.v,
                sol.state.total_loss,
                &prev,
                &sol.positions,
            ));
            on_state(tau as usize, &sol.state);
        }
        out.scada.push(sol.state.substation_pq(feeder));
        prev = sol.positions.clone();
        out.positions.push(sol.positions);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct Normalizer {
    scada: (f64, f64),
    ami_p: Vec<f64>,
    ami_q: Vec<f64>,
}

fn nonzero(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        x
    } else {
        1.0
    }
}

#[derive(Debug, Clone)]
struct Cursor {
    t: usize,
    positions: DevicePositions,
}

/// The environment. Cheap to clone; feeder, loads and baseline are shared.
#[derive(Debug, Clone)]
pub struct VvcEnv {
    feeder: Arc<Feeder>,
    loads: Arc<LoadSeries>,
    cfg: EnvConfig,
    baseline: Arc<Baseline>,
    layout: ObsLayout,
    groups: Vec<Vec<usize>>,
    meters: Vec<usize>,
    norm: Normalizer,
    cursor: Option<Cursor>,
}

impl VvcEnv {
    pub fn new(feeder: Arc<Feeder>, loads: Arc<LoadSeries>, cfg: EnvConfig) -> Result<Self> {
        let baseline = default_control_run(&feeder, &loads, &cfg, |_, _| {})?;
        Self::with_baseline(feeder, loads, cfg, Arc::new(baseline))
    }

    /// Builds an environment around an already computed baseline.
    pub fn with_baseline(
        feeder: Arc<Feeder>,
        loads: Arc<LoadSeries>,
        cfg: EnvConfig,
        baseline: Arc<Baseline>,
    ) -> Result<Self> {
        cfg.validate()?;
        check_series(&loads, &feeder, &cfg)?;
        if baseline.positions.len() != cfg.warmup + cfg.horizon || baseline.warmup != cfg.warmup {
            return Err(Error::Dimension("baseline does not match warmup + horizon".into()));
        }
        let n_loads = feeder.loads().len();
        let groups: Vec<Vec<usize>> = if cfg.state_option == 2 {
            Vec::new()
        } else {
            (0..n_loads).collect::<Vec<_>>().chunks(cfg.meter_group_size).map(|c| c.to_vec()).collect()
        };
        let mut slices = vec![("scada_p".to_string(), 1), ("scada_q".to_string(), 1)];
        if cfg.state_option != 2 {
            slices.push(("ami_p".into(), groups.len()));
            slices.push(("ami_q".into(), groups.len()));
        }
        slices.push(("taps".into(), feeder.num_devices()));
        slices.push(("time_enc".into(), 4));

        let n = baseline.scada.len() as f64;
        let scada = baseline.scada.iter().fold((0.0, 0.0), |(a, b), (p, q)| (a + p.abs(), b + q.abs()));
        let mut env = Self {
            norm: Normalizer {
                scada: (nonzero(scada.0 / n), nonzero(scada.1 / n)),
                ami_p: Vec::new(),
                ami_q: Vec::new(),
            },
            meters: feeder.load_buses(),
            feeder,
            loads,
            baseline,
            layout: ObsLayout { slices },
            groups,
            cfg,
            cursor: None,
        };
        let (mut sp, mut sq) = (vec![0.0; env.groups.len()], vec![0.0; env.groups.len()]);
        for i in 0..env.cfg.warmup + env.cfg.horizon {
            let (p, q) = env.ami_raw(i as isize - env.cfg.warmup as isize);
            for g in 0..p.len() {
                sp[g] += p[g].abs();
                sq[g] += q[g].abs();
            }
        }
        env.norm.ami_p = sp.iter().map(|s| nonzero(s / n)).collect();
        env.norm.ami_q = sq.iter().map(|s| nonzero(s / n)).collect();
        Ok(env)
    }

    pub fn feeder(&self) -> &Arc<Feeder> {
        &self.feeder
    }

    pub fn loads(&self) -> &Arc<LoadSeries> {
        &self.loads
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ObsLayout {
        &self.layout
    }

    pub fn baseline(&self) -> &Arc<Baseline> {
        &self.baseline
    }

    pub fn action_sizes(&self) -> Vec<usize> {
        action_sizes(&self.feeder)
    }

    /// Current step, or `None` before the first reset.
    pub fn time(&self) -> Option<usize> {
        self.cursor.as_ref().map(|c| c.t)
    }

    pub fn positions(&self) -> Option<&DevicePositions> {
        self.cursor.as_ref().map(|c| &c.positions)
    }

    /// Group-averaged load values at signed time `tau`.
    fn ami_raw(&self, tau: isize) -> (Vec<f64>, Vec<f64>) {
        let idx = series_index(tau, self.cfg.warmup, self.loads.horizon());
        let avg = |s: &Vec<Vec<f64>>, g: &Vec<usize>| g.iter().map(|&k| s[k][idx]).sum::<f64>() / g.len() as f64;
        (
            self.groups.iter().map(|g| avg(&self.loads.p, g)).collect(),
            self.groups.iter().map(|g| avg(&self.loads.q, g)).collect(),
        )
    }

    /// Observation at step `t` given the previous step's substation flow and
    /// device positions.
    pub fn build_observation(&self, t: usize, scada_prev: (f64, f64), positions_prev: &DevicePositions) -> Observation {
        let mut f = Vec::with_capacity(self.layout.dim());
        f.push(scada_prev.0 / self.norm.scada.0);
        f.push(scada_prev.1 / self.norm.scada.1);
        if self.cfg.state_option != 2 {
            // loads are exogenous, so the AMI values at t are known before acting
            let lag = if self.cfg.state_option == 3 { STEPS_PER_DAY as isize } else { 0 };
            let (p, q) = self.ami_raw(t as isize - lag);
            f.extend(p.iter().zip(&self.norm.ami_p).map(|(v, m)| v / m));
            f.extend(q.iter().zip(&self.norm.ami_q).map(|(v, m)| v / m));
        }
        for (reg, &tap) in self.feeder.regulators().iter().zip(&positions_prev.taps) {
            f.push(tap as f64 / reg.max_tap().max(1) as f64);
        }
        f.extend(positions_prev.cap_status.iter().map(|&c| c as u8 as f64));
        f.extend(time_encoding(t));
        Observation { t, features: f }
    }

    /// Observation the default policy would see at step `t`.
    pub fn baseline_observation(&self, t: usize) -> Observation {
        let i = self.baseline.warmup + t - 1;
        self.build_observation(t, self.baseline.scada[i], &self.baseline.positions[i])
    }

    pub fn reset(&mut self) -> Observation {
        self.cursor = Some(Cursor { t: 0, positions: self.baseline.initial_positions().clone() });
        self.baseline_observation(0)
    }

    /// Default policy's action at the current step.
    pub fn default_action(&self) -> Result<ActionVector> {
        let t = self.time().ok_or(Error::NotReset)?;
        if t >= self.cfg.horizon {
            return Err(Error::HorizonExhausted(t));
        }
        Ok(ActionVector::from_positions(self.baseline.positions_at(t)))
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        let cur = self.cursor.as_ref().ok_or(Error::NotReset)?;
        if cur.t >= self.cfg.horizon {
            return Err(Error::HorizonExhausted(cur.t));
        }
        let positions = action.to_positions(&self.feeder)?;
        let inj =
            self.loads.injection(&self.feeder, series_index(cur.t as isize, self.cfg.warmup, self.loads.horizon()));
        let state = solve(&self.feeder, &inj, &positions, &self.cfg.solver);
        let reward = reward_terms(
            self.cfg.reward_option,
            self.cfg.beta,
            &meter_voltages(&state, &self.meters),
            &state.v,
            state.total_loss,
            &cur.positions,
            &positions,
        );
        let t = cur.t + 1;
        let scada = state.substation_pq(&self.feeder);
        let observation = self.build_observation(t, scada, &positions);
        let info = StepInfo {
            reward,
            converged: state.converged,
            min_voltage: state.min_voltage(),
            max_voltage: state.max_voltage(),
            loss: state.total_loss,
            positions: positions.clone(),
        };
        self.cursor = Some(Cursor { t, positions });
        Ok(StepResult { observation, reward: reward.total, info })
    }
}
