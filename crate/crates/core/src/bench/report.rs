use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{read_spec, METRICS_HEADER};
use crate::{Error, Result};

/// Moving-average window for the reward-difference curves.
pub const SMOOTHING_WINDOW: usize = 100;
/// Steps at the end of a run summarized in the table.
pub const SUMMARY_TAIL: usize = 500;

/// Trailing mean over `window` samples; length `n - window + 1`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || xs.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(xs.len() - window + 1);
    let mut sum: f64 = xs[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..xs.len() {
        sum += xs[i] - xs[i - window];
        out.push(sum / window as f64);
    }
    out
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// `complete`, `incomplete` or `missing`.
    pub status: String,
    pub steps: usize,
    pub mean_delta_final: f64,
    pub violation_count: usize,
    pub tap_changes: f64,
    pub default_tap_changes: f64,
    pub median_violation_first: f64,
    pub median_violation_final: f64,
}

struct SeedSeries {
    delta: Vec<f64>,
    violation: Vec<f64>,
    switches: Vec<f64>,
    default_switches: Vec<f64>,
}

fn parse_columns(path: &Path, header: &str, cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Parse { source_name: path.display().to_string(), message: "unexpected header".into() });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let v: Vec<f64> = line.split(',').map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| {
                Error::Parse { source_name: path.display().to_string(), message: format!("row {}", i + 1) }
            })?;
            if v.len() != cols {
                return Err(Error::Parse {
                    source_name: path.display().to_string(),
                    message: format!("row {} width", i + 1),
                });
            }
            Ok(v)
        })
        .collect()
}

fn read_seed(dir: &Path) -> Result<SeedSeries> {
    let m = parse_columns(&dir.join("metrics.csv"), METRICS_HEADER, 6)?;
    let s = parse_columns(&dir.join("switching.csv"), super::SWITCHING_HEADER, 3)?;
    if s.len() != m.len() {
        return Err(Error::Parse {
            source_name: dir.display().to_string(),
            message: "metrics and switching lengths differ".into(),
        });
    }
    Ok(SeedSeries {
        delta: m.iter().map(|r| r[2]).collect(),
        violation: m.iter().map(|r| r[3]).collect(),
        switches: s.iter().map(|r| r[1]).collect(),
        default_switches: s.iter().map(|r| r[2]).collect(),
    })
}

fn write_table(
    dir: &Path,
    stem: &str,
    comment: &str,
    names: &[String],
    cols: &[Vec<f64>],
    first_step: usize,
) -> Result<()> {
    let rows = cols.iter().map(Vec::len).max().unwrap_or(0);
    let (mut csv, mut dat) = (String::new(), String::new());
    writeln!(csv, "step,{}", names.join(",")).unwrap();
    writeln!(dat, "# {comment}\n# step {}", names.join(" ")).unwrap();
    for i in 0..rows {
        let cell = |c: &Vec<f64>| c.get(i).map_or(String::new(), f64::to_string);
        let vals: Vec<String> = cols.iter().map(cell).collect();
        writeln!(csv, "{},{}", first_step + i, vals.join(",")).unwrap();
        let dat_vals: Vec<String> = vals.iter().map(|v| if v.is_empty() { "nan".into() } else { v.clone() }).collect();
        writeln!(dat, "{} {}", first_step + i, dat_vals.join(" ")).unwrap();
    }
    for (ext, body) in [("csv", csv), ("dat", dat)] {
        let p = dir.join(format!("{stem}.{ext}"));
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Builds the report from the run directory alone. Seeds with missing or
/// short metrics are flagged in the summary and left out of the curves.
pub fn report(run_dir: &Path) -> Result<(PathBuf, Vec<SeedSummary>)> {
    let spec = read_spec(run_dir)?;
    let out = run_dir.join("report");
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let mut summaries = Vec::new();
    let (mut names, mut delta_cols, mut viol_cols) = (Vec::new(), Vec::new(), Vec::new());
    for &seed in &spec.seeds {
        let series = read_seed(&spec.seed_dir(seed));
        let Ok(s) = series else {
            summaries.push(SeedSummary {
                seed,
                status: "missing".into(),
                steps: 0,
                mean_delta_final: f64::NAN,
                violation_count: 0,
                tap_changes: f64::NAN,
                default_tap_changes: f64::NAN,
                median_violation_first: f64::NAN,
                median_violation_final: f64::NAN,
            });
            continue;
        };
        let n = s.delta.len();
        let complete = n >= spec.steps;
        let tail = n.saturating_sub(SUMMARY_TAIL);
        let final_delta = &s.delta[tail..];
        summaries.push(SeedSummary {
            seed,
            status: if complete { "complete" } else { "incomplete" }.into(),
            steps: n,
            mean_delta_final: final_delta.iter().sum::<f64>() / final_delta.len().max(1) as f64,
            violation_count: s.violation.iter().filter(|&&v| v > 0.0).count(),
            tap_changes: s.switches.iter().sum(),
            default_tap_changes: s.default_switches.iter().sum(),
            median_violation_first: median(&s.violation[..n.min(SUMMARY_TAIL)]),
            median_violation_final: median(&s.violation[tail..]),
        });
        if complete {
            names.push(format!("seed_{seed}"));
            delta_cols.push(moving_average(&s.delta, SMOOTHING_WINDOW));
            viol_cols.push(s.violation);
        }
    }

    write_table(
        &out,
        "reward_delta",
        &format!("reward minus default-control reward, trailing moving average over {SMOOTHING_WINDOW} steps"),
        &names,
        &delta_cols,
        SMOOTHING_WINDOW - 1,
    )?;
    write_table(
        &out,
        "max_violation",
        "per-step max voltage violation outside [0.95, 1.05] p.u.",
        &names,
        &viol_cols,
        0,
    )?;

    let mut table = String::from(
        "seed,status,steps,mean_delta_final_500,violation_count,tap_changes,default_tap_changes,median_violation_first_500,median_violation_final_500\n",
    );
    for s in &summaries {
        writeln!(
            table,
            "{},{},{},{},{},{},{},{},{}",
            s.seed,
            s.status,
            s.steps,
            s.mean_delta_final,
            s.violation_count,
            s.tap_changes,
            s.default_tap_changes,
            s.median_violation_first,
            s.median_violation_final
        )
        .unwrap();
    }
    let p = out.join("summary.csv");
    fs::write(&p, table).map_err(|e| Error::io(&p, e))?;
    Ok((out, summaries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_lengths() {
        let xs: Vec<f64> = (0..250).map(|i| i as f64).collect();
        let s = moving_average(&xs, 100);
        assert_eq!(s.len(), 151);
        assert!((s[0] - 49.5).abs() < 1e-12);
        assert!(moving_average(&xs[..50], 100).is_empty());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
