//! Batch-means uncertainties and least-squares fits shared by the estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BATCHES: usize = 20;

/// Independent random stream for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A uniform point of `T^d` drawn from `sample_rng(seed, index)`.
pub fn uniform_point(d: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = sample_rng(seed, index);
    (0..d).map(|_| rng.gen::<f64>()).collect()
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = batches.min(n);
    if b < 2 {
        return (mean, f64::NAN);
    }
    let size = n / b;
    let block_means: Vec<f64> = (0..b)
        .map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, se) = mean_stderr(&block_means);
    (mean, se)
}

/// Sample mean and standard error of the mean for independent samples.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 || samples.iter().all(|&x| x == samples[0]) {
        return (samples[0], 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares `y = slope * x + intercept`. Needs at least two
/// distinct abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_stderr = if n > 2 {
        (sse / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        r2,
        slope_stderr,
    })
}

/// Contiguous window `[start, end)` of length at least `min_len` whose affine
/// fit has the largest R²; ties go to the longer window.
pub fn best_window_fit(x: &[f64], y: &[f64], min_len: usize) -> Option<(usize, usize, LinearFit)> {
    let n = x.len();
    let min_len = min_len.max(2);
    if n < min_len {
        return None;
    }
    let mut best: Option<(usize, usize, LinearFit)> = None;
    for start in 0..=n - min_len {
        for end in start + min_len..=n {
            let Some(fit) = linear_fit(&x[start..end], &y[start..end]) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some((s, e, b)) => {
                    fit.r2 > b.r2 + 1e-12 || ((fit.r2 - b.r2).abs() <= 1e-12 && end - start > e - s)
                }
            };
            if better {
                best = Some((start, end, fit));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_r2() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_abscissa_rejected() {
        assert!(linear_fit(&[0.0], &[1.0]).is_none());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn window_prefers_linear_regime() {
        // transient in the first four points, linear afterwards
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v < 4.0 { v * v } else { 2.0 * v + 5.0 })
            .collect();
        let (start, end, fit) = best_window_fit(&x, &y, 8).unwrap();
        assert!(start >= 4);
        assert_eq!(end, 20);
        assert!((fit.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant() {
        let v = vec![2.5; 1000];
        let (m, se) = batch_means(&v, 20);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }
}
