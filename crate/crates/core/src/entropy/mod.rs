//! Conditional entropy along one-dimensional expanding foliations from the
//! scaling of leafwise dynamical balls, with the Ruelle, Pesin and
//! invariance-principle checks.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{csv_error, volume_average_exponents};
use crate::conjugacy::cycle_log_multipliers;
use crate::error::{Error, Result};
use crate::foliation::{
    expanding_view, gibbs_density, leaf_ball_profile, trace_leaf, BallConfig, GibbsConfig,
};
use crate::maps::{SkewProductMap, SmoothTorusMap};
use crate::stats;

pub const METHOD_NOTE: &str =
    "conditional entropy from leafwise dynamical-ball scaling in place of subordinated partitions";
pub const C_INVARIANCE_NOTE: &str =
    "c-invariance is tested through the entropy gap only; conditional measures are not compared";

/// Measure whose leaf conditionals are sampled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingMeasure {
    /// Lebesgue measure, with uniformly drawn base points.
    #[default]
    Volume,
    /// Equidistribution on a periodic orbit of `f`, listed in dynamical order.
    PeriodicOrbit { orbit: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub delta: f64,
    /// Ball depths used in the fit; `0..=25` when empty.
    pub n_list: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub min_window: usize,
    pub min_r2: f64,
    pub exponent_samples: usize,
    pub exponent_length: usize,
    /// Floor added to standard errors in the equality and inequality gates.
    pub resolution: f64,
    pub ball: BallConfig,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            delta: 0.05,
            n_list: Vec::new(),
            samples: 24,
            seed: 0,
            min_window: 8,
            min_r2: 0.99,
            exponent_samples: 16,
            exponent_length: 4000,
            resolution: 1e-6,
            ball: BallConfig::default(),
        }
    }
}

impl EntropyConfig {
    pub fn depths(&self) -> Vec<usize> {
        if self.n_list.is_empty() {
            (0..=25).collect()
        } else {
            let mut n = self.n_list.clone();
            n.sort_unstable();
            n.dedup();
            n
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub sigma: usize,
    pub delta: f64,
    pub measure: String,
    pub depths: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// `-log μ_x(B_n)` per sample and depth.
    pub values: Vec<Vec<f64>>,
    /// Fit window `[start, end)` into `depths`.
    pub window: (usize, usize),
    pub r2: f64,
    pub entropy: f64,
    pub stderr: f64,
    /// Companion exponent along the bundle, in the expanding view.
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// `entropy - exponent`.
    pub gap: f64,
    pub gap_stderr: f64,
    /// `gap <= 3 * gap_stderr`.
    pub ruelle: bool,
}

fn sample_values(
    g: &SmoothTorusMap,
    j: usize,
    x: &[f64],
    depths: &[usize],
    cfg: &EntropyConfig,
) -> Result<Vec<f64>> {
    let n_max = *depths.last().expect("non-empty depths");
    let prof = leaf_ball_profile(g, j, x, cfg.delta, n_max, &cfg.ball)?;
    Ok(depths.iter().map(|&n| -prof.lengths[n].ln()).collect())
}

pub fn conditional_entropy(
    f: &SmoothTorusMap,
    sigma: usize,
    measure: &SamplingMeasure,
    cfg: &EntropyConfig,
) -> Result<EntropyEstimate> {
    let d = f.dim();
    if sigma >= d {
        return Err(Error::invalid("sigma", format!("index {sigma} out of range")));
    }
    let depths = cfg.depths();
    if depths.len() < cfg.min_window.max(2) {
        return Err(Error::FitUnstable(format!(
            "{} ball depths, a fit window needs {}",
            depths.len(),
            cfg.min_window.max(2)
        )));
    }
    let (g, j) = expanding_view(f, sigma);
    let sign = if j == sigma && !g.is_inverted() { 1.0 } else { -1.0 };
    let (points, values, exponent, exponent_stderr, label) = match measure {
        SamplingMeasure::Volume => {
            let points: Vec<Vec<f64>> = (0..cfg.samples)
                .map(|i| stats::uniform_point(d, cfg.seed, i as u64))
                .collect();
            let values = points
                .par_iter()
                .map(|x| sample_values(&g, j, x, &depths, cfg))
                .collect::<Result<Vec<_>>>()?;
            let est =
                volume_average_exponents(f, cfg.exponent_samples, cfg.exponent_length, cfg.seed)?;
            (
                points,
                values,
                sign * est.exponents[sigma],
                est.stderr[sigma],
                "volume".to_string(),
            )
        }
        SamplingMeasure::PeriodicOrbit { orbit } => {
            if orbit.is_empty() {
                return Err(Error::invalid("measure.orbit", "empty orbit"));
            }
            let logs = cycle_log_multipliers(f, orbit);
            let values = vec![vec![0.0; depths.len()]; orbit.len()];
            (
                orbit.clone(),
                values,
                sign * logs[sigma] / orbit.len() as f64,
                0.0,
                format!("periodic_orbit(period {})", orbit.len()),
            )
        }
    };
    let ns: Vec<f64> = depths.iter().map(|&n| n as f64).collect();
    let mean: Vec<f64> = (0..depths.len())
        .map(|k| values.iter().map(|v| v[k]).sum::<f64>() / values.len() as f64)
        .collect();
    let (start, end, fit) = stats::best_window_fit(&ns, &mean, cfg.min_window)
        .ok_or_else(|| Error::FitUnstable("no admissible fit window".into()))?;
    if fit.r2 < cfg.min_r2 {
        return Err(Error::FitUnstable(format!(
            "best window R² {:.4} below {}",
            fit.r2, cfg.min_r2
        )));
    }
    let slopes: Vec<f64> = values
        .iter()
        .map(|v| {
            stats::linear_fit(&ns[start..end], &v[start..end])
                .map(|f| f.slope)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let (entropy, stderr) = stats::mean_stderr(&slopes);
    let gap = entropy - exponent;
    let gap_stderr = stderr.hypot(exponent_stderr) + cfg.resolution;
    Ok(EntropyEstimate {
        sigma,
        delta: cfg.delta,
        measure: label,
        depths,
        points,
        values,
        window: (start, end),
        r2: fit.r2,
        entropy,
        stderr,
        exponent,
        exponent_stderr,
        gap,
        gap_stderr,
        ruelle: gap <= 3.0 * gap_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PesinVerdict {
    PesinEqual,
    RuelleStrict,
    RuelleViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsCheck {
    pub valid: bool,
    pub depth: usize,
    pub gap_ratio: Option<f64>,
    pub gap_r2: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesinReport {
    pub estimate: EntropyEstimate,
    pub verdict: PesinVerdict,
    pub gibbs: GibbsCheck,
    pub method: String,
}

fn pesin_verdict(e: &EntropyEstimate) -> PesinVerdict {
    if e.gap.abs() <= 3.0 * e.gap_stderr {
        PesinVerdict::PesinEqual
    } else if e.ruelle {
        PesinVerdict::RuelleStrict
    } else {
        PesinVerdict::RuelleViolated
    }
}

fn gibbs_check(f: &SmoothTorusMap, sigma: usize, x: &[f64], cfg: &EntropyConfig) -> GibbsCheck {
    let (g, j) = expanding_view(f, sigma);
    let gcfg = GibbsConfig {
        splitting: cfg.ball.trace.splitting,
        ..GibbsConfig::default()
    };
    let profile = trace_leaf(&g, j, x, &cfg.ball.trace).and_then(|seg| gibbs_density(&g, &seg, &gcfg));
    match profile {
        Ok(p) => GibbsCheck {
            valid: p.gap_r2.map_or(true, |r| r >= 0.99) && p.gap_ratio.map_or(true, |r| r < 1.0),
            depth: p.depth,
            gap_ratio: p.gap_ratio,
            gap_r2: p.gap_r2,
            message: None,
        },
        Err(e) => GibbsCheck {
            valid: false,
            depth: 0,
            gap_ratio: None,
            gap_r2: None,
            message: Some(e.to_string()),
        },
    }
}

/// Entropy against exponent along bundle σ, with the Gibbs density
/// profile checked at the first sample point.
pub fn pesin_report(
    f: &SmoothTorusMap,
    sigma: usize,
    measure: &SamplingMeasure,
    cfg: &EntropyConfig,
) -> Result<PesinReport> {
    let estimate = conditional_entropy(f, sigma, measure, cfg)?;
    let gibbs = gibbs_check(f, sigma, &estimate.points[0], cfg);
    Ok(PesinReport {
        verdict: pesin_verdict(&estimate),
        estimate,
        gibbs,
        method: METHOD_NOTE.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InvarianceVerdict {
    /// `h_above = h_below` within noise.
    Equal,
    StrictDrop,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEntropyGap {
    pub h_above: EntropyEstimate,
    pub h_below: EntropyEstimate,
    /// `h_below - h_above`.
    pub gap: f64,
    pub stderr: f64,
    pub verdict: InvarianceVerdict,
    pub note: String,
}

/// Strong-unstable entropy of volume for the skew product against the
/// unstable entropy of the base's linear model.
pub fn partial_entropy_gap(skew: &SkewProductMap, cfg: &EntropyConfig) -> Result<PartialEntropyGap> {
    let l = skew.base().linear_model().ok_or_else(|| {
        Error::Precondition("base linear part is not a hyperbolic automorphism".into())
    })?;
    let linear = SmoothTorusMap::linear(&l);
    let h_above = conditional_entropy(skew.map(), 2, &SamplingMeasure::Volume, cfg)?;
    let h_below = conditional_entropy(&linear, 1, &SamplingMeasure::Volume, cfg)?;
    let gap = h_below.entropy - h_above.entropy;
    let stderr = h_below.stderr.hypot(h_above.stderr) + cfg.resolution;
    let verdict = if gap.abs() <= 3.0 * stderr {
        InvarianceVerdict::Equal
    } else if gap > 0.0 {
        InvarianceVerdict::StrictDrop
    } else {
        InvarianceVerdict::Violated
    };
    Ok(PartialEntropyGap {
        h_above,
        h_below,
        gap,
        stderr,
        verdict,
        note: C_INVARIANCE_NOTE.into(),
    })
}

/// Rows `(sample, n, ball_length)`.
pub fn write_entropy_csv<W: Write>(out: W, estimate: &EntropyEstimate) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample", "n", "ball_length"]).map_err(csv_error)?;
    for (i, v) in estimate.values.iter().enumerate() {
        for (n, x) in estimate.depths.iter().zip(v) {
            w.write_record([i.to_string(), n.to_string(), format!("{:.17e}", (-x).exp())])
                .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| csv_error(e.into()))?;
    Ok(())
}
