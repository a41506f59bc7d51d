use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::Deserialize;

use super::{step_duration, LoadSeries, MeterMatrix};
use crate::{Error, Result};

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_ts(s: &str, source: &Path) -> Result<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .map_err(|e| Error::Parse {
            source_name: source.display().to_string(),
            message: format!("timestamp {s:?}: {e}"),
        })
}

#[derive(Deserialize)]
struct MeterRow {
    customer_id: String,
    timestamp: String,
    kwh: f64,
}

/// Reads `customer_id,timestamp,kwh` rows. The time grid spans the earliest
/// to the latest timestamp at 30-minute spacing; absent rows are missing.
pub fn read_meter_csv(path: impl AsRef<Path>) -> Result<MeterMatrix> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut readings: BTreeMap<String, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: MeterRow = row?;
        let ts = parse_ts(&row.timestamp, path)?;
        readings.entry(row.customer_id).or_default().push((ts, row.kwh));
    }
    let all = readings.values().flatten().map(|(t, _)| *t);
    let (Some(start), Some(end)) = (all.clone().min(), all.max()) else {
        return Err(Error::Parse { source_name: path.display().to_string(), message: "no readings".into() });
    };
    let step = step_duration().num_seconds();
    let n_steps = ((end - start).num_seconds() / step) as usize + 1;
    let mut ids = Vec::with_capacity(readings.len());
    let mut rows = Vec::with_capacity(readings.len());
    for (id, obs) in readings {
        let mut row = vec![None; n_steps];
        for (ts, kwh) in obs {
            let offset = (ts - start).num_seconds();
            if offset % step != 0 {
                return Err(Error::Parse {
                    source_name: path.display().to_string(),
                    message: format!("timestamp {ts} of {id} is off the half-hour grid"),
                });
            }
            let slot = &mut row[(offset / step) as usize];
            if slot.replace(kwh).is_some() {
                return Err(Error::Parse {
                    source_name: path.display().to_string(),
                    message: format!("duplicate reading for {id} at {ts}"),
                });
            }
        }
        ids.push(id);
        rows.push(row);
    }
    MeterMatrix::from_rows(ids, start, rows)
}

pub fn write_meter_csv(m: &MeterMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "customer_id,timestamp,kwh").map_err(io)?;
    for (r, id) in m.customer_ids.iter().enumerate() {
        for t in 0..m.n_steps() {
            if let Some(v) = m.get(r, t) {
                writeln!(w, "{id},{},{v}", m.timestamp(t).format(TS_FORMAT)).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// Writes `timestamp,load_id,p_pu,q_pu`, ordered by timestamp then load.
pub fn write_load_series(s: &LoadSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "timestamp,load_id,p_pu,q_pu").map_err(io)?;
    for t in 0..s.horizon() {
        let ts = s.timestamp(t).format(TS_FORMAT);
        for k in 0..s.num_loads() {
            writeln!(w, "{ts},{k},{},{}", s.p[k][t], s.q[k][t]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[derive(Deserialize)]
struct LoadRow {
    timestamp: String,
    load_id: usize,
    p_pu: f64,
    q_pu: f64,
}

pub fn read_load_series(path: impl AsRef<Path>) -> Result<LoadSeries> {
    let path = path.as_ref();
    let bad = |message: String| Error::Parse { source_name: path.display().to_string(), message };
    let mut rdr = csv::Reader::from_path(path)?;
    let mut start = None;
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut q: Vec<Vec<f64>> = Vec::new();
    for row in rdr.deserialize() {
        let row: LoadRow = row?;
        let ts = parse_ts(&row.timestamp, path)?;
        let start = *start.get_or_insert(ts);
        let offset = (ts - start).num_seconds();
        let step = step_duration().num_seconds();
        if offset < 0 || offset % step != 0 {
            return Err(bad(format!("timestamp {ts} off the grid")));
        }
        let t = (offset / step) as usize;
        if row.load_id >= p.len() {
            p.resize(row.load_id + 1, Vec::new());
            q.resize(row.load_id + 1, Vec::new());
        }
        if p[row.load_id].len() != t {
            return Err(bad(format!("load {} row for step {t} out of order", row.load_id)));
        }
        p[row.load_id].push(row.p_pu);
        q[row.load_id].push(row.q_pu);
    }
    let start = start.ok_or_else(|| bad("empty load series".into()))?;
    let horizon = p.first().map_or(0, |s| s.len());
    if p.iter().any(|s| s.len() != horizon) {
        return Err(bad("loads have unequal lengths".into()));
    }
    Ok(LoadSeries { start_time: start, p, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loads::generate_synthetic;

    #[test]
    fn meter_csv_round_trip_keeps_missing() {
        let m = generate_synthetic(4, 60, 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_meter_csv(&m, &p).unwrap();
        let back = read_meter_csv(&p).unwrap();
        assert_eq!(back.n_customers(), 4);
        for r in 0..4 {
            for t in 0..back.n_steps() {
                assert_eq!(back.get(r, t), m.get(r, t));
            }
        }
    }

    #[test]
    fn absent_rows_are_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(
            &p,
            "customer_id,timestamp,kwh\nA,2012-01-01 00:00:00,0.5\nA,2012-01-01 01:00:00,0.7\nB,2012-01-01 00:30:00,0.2\n",
        )
        .unwrap();
        let m = read_meter_csv(&p).unwrap();
        assert_eq!(m.n_steps(), 3);
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(1, 1), Some(0.2));
        assert_eq!(m.get(1, 0), None);
    }

    #[test]
    fn load_series_round_trip_is_exact() {
        let s = LoadSeries {
            start_time: generate_synthetic(1, 1, 0).start_time,
            p: vec![vec![0.1, 1.0 / 3.0], vec![0.2, 0.25]],
            q: vec![vec![0.05, 2.0 / 7.0], vec![0.0, 1e-9]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        write_load_series(&s, &p).unwrap();
        assert_eq!(read_load_series(&p).unwrap(), s);
    }
}
