//! Masked low-rank matrix completion by alternating ridge least squares.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MeterMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    pub rank: usize,
    pub reg: f64,
    pub iters: usize,
    pub seed: u64,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self { rank: 8, reg: 0.1, iters: 50, seed: 0 }
    }
}

/// Fills missing entries from a rank-`rank` factorization; observed entries
/// are returned untouched and negative fills are clamped to zero.
pub fn impute(m: &MeterMatrix, cfg: &ImputeConfig) -> Result<MeterMatrix> {
    impute_with_trace(m, cfg).map(|(out, _)| out)
}

/// As [`impute`], also returning the masked objective
/// `sum_obs (x - u.v)^2 + reg (|U|^2 + |V|^2)` before the first sweep and
/// after every sweep.
pub fn impute_with_trace(m: &MeterMatrix, cfg: &ImputeConfig) -> Result<(MeterMatrix, Vec<f64>)> {
    let (rows, cols) = (m.n_customers(), m.n_steps());
    for r in 0..rows {
        if (0..cols).all(|c| !m.is_observed(r, c)) {
            return Err(Error::DegenerateAxis { axis: "row", index: r });
        }
    }
    for c in 0..cols {
        if (0..rows).all(|r| !m.is_observed(r, c)) {
            return Err(Error::DegenerateAxis { axis: "column", index: c });
        }
    }
    if m.is_complete() {
        return Ok((m.clone(), Vec::new()));
    }
    if cfg.rank == 0 {
        return Err(Error::Argument("rank must be >= 1".into()));
    }
    let k = cfg.rank;
    let (sum, n_obs) =
        m.values.iter().zip(&m.observed).filter(|(_, o)| **o).fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    let scale = (sum / n_obs as f64).abs().max(1e-12).sqrt() / (k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).map(|z: f64| z * scale).collect() };
    let mut u = draw(rows * k);
    let mut v = draw(cols * k);

    let observed_in_row: Vec<Vec<usize>> =
        (0..rows).map(|r| (0..cols).filter(|&c| m.is_observed(r, c)).collect()).collect();
    let observed_in_col: Vec<Vec<usize>> =
        (0..cols).map(|c| (0..rows).filter(|&r| m.is_observed(r, c)).collect()).collect();

    let mut trace = vec![objective(m, &u, &v, k, cfg.reg)];
    for _ in 0..cfg.iters {
        for r in 0..rows {
            let target = observed_in_row[r].iter().map(|&c| (c, m.values[r * cols + c]));
            ridge_update(&mut u[r * k..(r + 1) * k], &v, k, cfg.reg, target);
        }
        for c in 0..cols {
            let target = observed_in_col[c].iter().map(|&r| (r, m.values[r * cols + c]));
            ridge_update(&mut v[c * k..(c + 1) * k], &u, k, cfg.reg, target);
        }
        trace.push(objective(m, &u, &v, k, cfg.reg));
    }

    let mut out = m.clone();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if !out.observed[i] {
                out.values[i] = dot(&u[r * k..(r + 1) * k], &v[c * k..(c + 1) * k]).max(0.0);
                out.observed[i] = true;
            }
        }
    }
    Ok((out, trace))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(F^T F + reg I) w = F^T y` over the observed entries and writes `w`
/// into `out`; leaves `out` untouched if the system is singular.
fn ridge_update(out: &mut [f64], factors: &[f64], k: usize, reg: f64, target: impl Iterator<Item = (usize, f64)>) {
    let mut a = DMatrix::<f64>::from_diagonal_element(k, k, reg);
    let mut b = DVector::<f64>::zeros(k);
    for (idx, y) in target {
        let f = &factors[idx * k..(idx + 1) * k];
        for i in 0..k {
            b[i] += f[i] * y;
            for j in 0..k {
                a[(i, j)] += f[i] * f[j];
            }
        }
    }
    let sol = match a.clone().cholesky() {
        Some(ch) => Some(ch.solve(&b)),
        None => a.lu().solve(&b),
    };
    if let Some(w) = sol {
        out.copy_from_slice(w.as_slice());
    }
}

fn objective(m: &MeterMatrix, u: &[f64], v: &[f64], k: usize, reg: f64) -> f64 {
    let cols = m.n_steps();
    let mut err = 0.0;
    for (i, (&x, &o)) in m.values.iter().zip(&m.observed).enumerate() {
        if o {
            let (r, c) = (i / cols, i % cols);
            let d = x - dot(&u[r * k..(r + 1) * k], &v[c * k..(c + 1) * k]);
            err += d * d;
        }
    }
    err + reg * (u.iter().map(|x| x * x).sum::<f64>() + v.iter().map(|x| x * x).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loads::generate_synthetic;

    #[test]
    fn complete_matrix_unchanged() {
        let m = MeterMatrix::from_rows(
            vec!["a".into(), "b".into()],
            generate_synthetic(1, 1, 0).start_time,
            vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]],
        )
        .unwrap();
        assert_eq!(impute(&m, &ImputeConfig::default()).unwrap(), m);
    }

    #[test]
    fn all_missing_column_is_error() {
        let m = MeterMatrix::from_rows(
            vec!["a".into(), "b".into()],
            generate_synthetic(1, 1, 0).start_time,
            vec![vec![Some(1.0), None], vec![Some(3.0), None]],
        )
        .unwrap();
        let err = impute(&m, &ImputeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateAxis { axis: "column", index: 1 }));
    }

    #[test]
    fn observed_entries_preserved_and_fills_nonnegative() {
        let m = generate_synthetic(30, 200, 5);
        let out = impute(&m, &ImputeConfig::default()).unwrap();
        assert!(out.is_complete());
        for r in 0..30 {
            for c in 0..200 {
                if let Some(x) = m.get(r, c) {
                    assert_eq!(out.get(r, c).unwrap().to_bits(), x.to_bits());
                } else {
                    assert!(out.get(r, c).unwrap() >= 0.0);
                }
            }
        }
    }
}
