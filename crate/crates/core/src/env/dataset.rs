//! Offline transition log written from the default-control run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{default_control_run, ActionVector, Beta, EnvConfig, ObsLayout, VvcEnv};
use crate::feeder::{Feeder, VOLTS_BASIS};
use crate::loads::{round_ami, LoadSeries};
use crate::{Error, Result};

pub const WARMUP_NOTE: &str =
    "initial positions and day-lagged history come from default control over the first day of the series replayed before t=0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feeder: String,
    pub state_option: u8,
    pub reward_option: u8,
    pub beta: Beta,
    pub horizon: usize,
    pub warmup: usize,
    pub layout: ObsLayout,
    pub action_sizes: Vec<usize>,
    pub bus_ids: Vec<usize>,
    pub warmup_note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: ActionVector,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Bus voltages on the 120 V basis, rounded to 0.1 V.
    pub v120: Vec<f64>,
}

/// `offline.csv` → `offline.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Runs default control over the horizon and writes one transition per
/// step to `out` plus a JSON sidecar describing the layout. Returns the
/// number of transitions and the environment built on the same run.
pub fn generate_offline_dataset(
    feeder: Arc<Feeder>,
    loads: Arc<LoadSeries>,
    cfg: &EnvConfig,
    out: &Path,
) -> Result<(usize, VvcEnv)> {
    let mut v120: Vec<Vec<f64>> = Vec::with_capacity(cfg.horizon);
    let baseline = default_control_run(&feeder, &loads, cfg, |_, s| {
        v120.push(s.v.iter().map(|v| round_ami(v * VOLTS_BASIS)).collect());
    })?;
    let env = VvcEnv::with_baseline(feeder.clone(), loads, cfg.clone(), Arc::new(baseline))?;
    let layout = env.layout().clone();
    let n_dev = feeder.num_devices();
    let bus_ids: Vec<usize> = feeder.buses().iter().map(|b| b.id).collect();

    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    let mut header = vec!["t".to_string()];
    header.extend((0..layout.dim()).map(|i| format!("obs_{i}")));
    header.extend((0..n_dev).map(|i| format!("action_{i}")));
    header.push("reward".into());
    header.extend((0..layout.dim()).map(|i| format!("next_obs_{i}")));
    header.extend(bus_ids.iter().map(|b| format!("v120_bus_{b}")));
    header.extend((0..n_dev).map(|d| format!("tap_{d}")));
    let io = |e| Error::io(out, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;

    let mut obs = env.baseline_observation(0);
    for t in 0..cfg.horizon {
        let next = env.baseline_observation(t + 1);
        let action = ActionVector::from_positions(env.baseline().positions_at(t));
        let mut row = vec![t.to_string()];
        row.extend(obs.features.iter().map(f64::to_string));
        row.extend(action.0.iter().map(i32::to_string));
        row.push(env.baseline().rewards[t].total.to_string());
        row.extend(next.features.iter().map(f64::to_string));
        row.extend(v120[t].iter().map(f64::to_string));
        row.extend(action.0.iter().map(i32::to_string));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
        obs = next;
    }
    w.flush().map_err(io)?;

    let meta = DatasetMeta {
        feeder: feeder.name().to_string(),
        state_option: cfg.state_option,
        reward_option: cfg.reward_option,
        beta: cfg.beta,
        horizon: cfg.horizon,
        warmup: cfg.warmup,
        layout,
        action_sizes: env.action_sizes(),
        bus_ids,
        warmup_note: WARMUP_NOTE.into(),
    };
    let side = sidecar_path(out);
    std::fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&side, e))?;
    Ok((cfg.horizon, env))
}

pub fn read_offline_dataset(path: &Path) -> Result<(DatasetMeta, Vec<Transition>)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)?;
    let d = meta.layout.dim();
    let k = meta.action_sizes.len();
    let nb = meta.bus_ids.len();
    let width = 1 + d + k + 1 + d + nb + k;

    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { source_name: path.display().to_string(), message: format!("{other:?}") },
    })?;
    if rdr.headers()?.len() != width {
        return Err(Error::LayoutMismatch(format!(
            "{} has {} columns, sidecar implies {width}",
            path.display(),
            rdr.headers()?.len()
        )));
    }
    let bad = |what: &str, row: usize| Error::Parse {
        source_name: path.display().to_string(),
        message: format!("row {row}: bad {what}"),
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad("number", row));
        let floats = |r: std::ops::Range<usize>| r.map(f).collect::<Result<Vec<f64>>>();
        let t = rec[0].parse::<usize>().map_err(|_| bad("t", row))?;
        let obs = floats(1..1 + d)?;
        let action = (1 + d..1 + d + k)
            .map(|i| rec[i].parse::<i32>().map_err(|_| bad("action", row)))
            .collect::<Result<Vec<i32>>>()?;
        let reward = f(1 + d + k)?;
        let next_obs = floats(2 + d + k..2 + 2 * d + k)?;
        let v120 = floats(2 + 2 * d + k..2 + 2 * d + k + nb)?;
        out.push(Transition { t, obs, action: ActionVector(action), reward, next_obs, v120 });
    }
    Ok((meta, out))
}
