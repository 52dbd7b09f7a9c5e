//! Lyapunov exponents by QR re-orthonormalization, volume averages, and
//! invariant line fields of the derivative cocycle.

mod cache;
mod splitting;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{grid_points, grid_splitting, BundleCache, BUNDLE_CACHE_VERSION};
pub use splitting::{
    bundle_frame, invariant_splitting, orbit_bundle, BundleFrame, OrbitBundle, SplittingConfig,
};
pub(crate) use splitting::{frames_on_points, line_field_on_points, orbit};

use crate::algebra::wrap_vec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::SmoothTorusMap;
use crate::stats::{self, DEFAULT_BATCHES};

/// Steps discarded before accumulation so the frame aligns with the flag.
pub const TRANSIENT_STEPS: usize = 100;
pub const MIN_ORBIT_LENGTH: usize = 1000;
pub const MIN_VOLUME_SAMPLES: usize = 10;
const MAX_STEP_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    /// Ascending.
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub orbit_length: usize,
    pub initial_points: Vec<Vec<f64>>,
    pub volume_averaged: bool,
    /// `(1/N) Σ log|det Df|` along the orbit (mean over samples when averaged).
    pub log_det_average: f64,
    /// Per-sample single-orbit estimates of a volume average.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<ExponentEstimate>,
}

impl ExponentEstimate {
    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    pub fn top(&self) -> f64 {
        *self.exponents.last().expect("non-empty spectrum")
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }
}

/// Linear eigenvectors ordered from the largest `|λ|` down.
pub(crate) fn initial_frame(f: &SmoothTorusMap) -> Vec<Vec<f64>> {
    f.spectrum().pairs.iter().rev().map(|p| p.vector.clone()).collect()
}

/// Full spectrum along the orbit of `x0` (or of a point drawn from `seed`).
pub fn lyapunov_exponents(
    f: &SmoothTorusMap,
    x0: Option<&[f64]>,
    n: usize,
    seed: u64,
) -> Result<ExponentEstimate> {
    if n < MIN_ORBIT_LENGTH {
        return Err(Error::invalid(
            "n",
            format!("orbit length {n} below the minimum {MIN_ORBIT_LENGTH}"),
        ));
    }
    let d = f.dim();
    let start = match x0 {
        Some(x) if x.len() != d => return Err(Error::BadShape(x.len())),
        Some(x) => wrap_vec(x),
        None => stats::uniform_point(d, seed, 0),
    };
    let mut x = start.clone();
    let mut frame = initial_frame(f);
    for step in 0..TRANSIENT_STEPS {
        f.step(&mut x, &mut frame);
        x = wrap_vec(&x);
        checked_qr(&mut frame, &x, step)?;
    }
    let mut logs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
    let mut log_det = 0.0;
    for step in 0..n {
        log_det += f.det_jacobian(&x).abs().ln();
        f.step(&mut x, &mut frame);
        x = wrap_vec(&x);
        let r = checked_qr(&mut frame, &x, TRANSIENT_STEPS + step)?;
        for (series, ri) in logs.iter_mut().zip(&r) {
            series.push(ri.ln());
        }
    }
    let (exponents, stderr): (Vec<f64>, Vec<f64>) = logs
        .iter()
        .rev()
        .map(|s| stats::batch_means(s, DEFAULT_BATCHES))
        .unzip();
    Ok(ExponentEstimate {
        exponents,
        stderr,
        orbit_length: n,
        initial_points: vec![start],
        volume_averaged: false,
        log_det_average: log_det / n as f64,
        samples: Vec::new(),
    })
}

fn checked_qr(frame: &mut [Vec<f64>], x: &[f64], step: usize) -> Result<Vec<f64>> {
    let r = linalg::mgs(frame);
    let max = r.iter().cloned().fold(0.0_f64, f64::max);
    let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let finite = x.iter().all(|v| v.is_finite()) && r.iter().all(|v| v.is_finite());
    if !finite || min <= 0.0 || max / min > MAX_STEP_CONDITION {
        return Err(Error::OrbitEscapedPrecision { step });
    }
    Ok(r)
}

/// Componentwise mean of single-orbit spectra over `m` seeded uniform points.
pub fn volume_average_exponents(
    f: &SmoothTorusMap,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<ExponentEstimate> {
    if m < MIN_VOLUME_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("{m} samples, at least {MIN_VOLUME_SAMPLES} required"),
        ));
    }
    let d = f.dim();
    let samples = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = stats::uniform_point(d, seed, i as u64);
            lyapunov_exponents(f, Some(&x), n, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let (exponents, stderr): (Vec<f64>, Vec<f64>) = (0..d)
        .map(|k| {
            let vals: Vec<f64> = samples.iter().map(|s| s.exponents[k]).collect();
            stats::mean_stderr(&vals)
        })
        .unzip();
    let log_det_average =
        samples.iter().map(|s| s.log_det_average).sum::<f64>() / samples.len() as f64;
    Ok(ExponentEstimate {
        exponents,
        stderr,
        orbit_length: n,
        initial_points: samples.iter().map(|s| s.initial_points[0].clone()).collect(),
        volume_averaged: true,
        log_det_average,
        samples,
    })
}

/// Rows `(sample_id, exponent_1..d, stderr_1..d)`; single-orbit estimates
/// are written as sample 0.
pub fn write_exponents_csv<W: Write>(out: W, estimate: &ExponentEstimate) -> Result<()> {
    let d = estimate.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample_id".to_string()];
    header.extend((1..=d).map(|i| format!("exponent_{i}")));
    header.extend((1..=d).map(|i| format!("stderr_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    let rows: Vec<&ExponentEstimate> = if estimate.samples.is_empty() {
        vec![estimate]
    } else {
        estimate.samples.iter().collect()
    };
    for (i, s) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(s.exponents.iter().map(|v| v.to_string()));
        rec.extend(s.stderr.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Precondition(format!("csv: {e}")))?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Precondition(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::analyze_matrix;
    use crate::maps::{make_shear_perturbation, ShearFactor, TrigProfile};

    fn cat() -> SmoothTorusMap {
        SmoothTorusMap::linear(&analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap())
    }

    #[test]
    fn cat_exponents_exact() {
        let est = lyapunov_exponents(&cat(), Some(&[0.1, 0.2]), 10_000, 1).unwrap();
        let lam = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((est.exponents[1] - lam).abs() < 1e-9);
        assert!((est.exponents[0] + lam).abs() < 1e-9);
        assert!((est.sum() - est.log_det_average).abs() < 1e-9);
    }

    #[test]
    fn short_orbit_rejected() {
        assert!(lyapunov_exponents(&cat(), None, 10, 1).is_err());
    }

    #[test]
    fn linear_volume_average_has_zero_spread() {
        let est = volume_average_exponents(&cat(), 10, 1000, 3).unwrap();
        assert_eq!(est.stderr, vec![0.0, 0.0]);
        assert_eq!(est.samples.len(), 10);
    }

    #[test]
    fn csv_layout() {
        let f = make_shear_perturbation(
            &analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap(),
            &[ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1))],
            1.0,
        )
        .unwrap();
        let est = volume_average_exponents(&f, 10, 1000, 3).unwrap();
        let mut buf = Vec::new();
        write_exponents_csv(&mut buf, &est).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sample_id,exponent_1,exponent_2,stderr_1,stderr_2\n"));
        assert_eq!(text.lines().count(), 11);
    }
}
