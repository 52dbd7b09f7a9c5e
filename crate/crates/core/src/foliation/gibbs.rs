use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LeafSegment;
use crate::algebra::{nearest_diff, wrap_vec};
use crate::cocycle::{
    bundle_frame, frames_on_points, line_field_on_points, orbit, orbit_bundle, SplittingConfig,
};
use crate::linalg;
use crate::error::{Error, Result};
use crate::maps::SmoothTorusMap;
use crate::stats;

/// Gaps below this are treated as rounding noise in the geometric fit.
const GAP_FLOOR: f64 = 1e-13;
const EXTRA_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub value: f64,
    pub depth: usize,
    /// Largest one-step contraction of `f⁻¹` along the leaf on both orbits.
    pub theta: f64,
    /// `|log J(f^{-n}x) - log J(f^{-n}z)|`.
    pub last_term: f64,
    /// Geometric bound on `|log Δ - log Δ_n|`.
    pub tail_bound: f64,
}

/// Leaf offsets shorter than this are re-anchored on the local quadratic
/// model of the leaf after each backward step.
const ANCHOR_BELOW: f64 = 1e-3;
const CURVATURE_STEP: f64 = 1e-4;

/// Local leaf geometry along the anchor orbit: tangent `e`, the covector
/// `ψ` dual to `e` against the other bundles, and `k = de/ds`.
struct LeafChart {
    e: Vec<f64>,
    psi: Vec<f64>,
    k: Vec<f64>,
}

impl LeafChart {
    fn new(f: &SmoothTorusMap, sigma: usize, x: &[f64], frame: &[Vec<f64>], cfg: &SplittingConfig) -> Result<Self> {
        let d = frame.len();
        let e = frame[sigma].clone();
        let mut m = nalgebra::DMatrix::<f64>::zeros(d, d);
        for (j, v) in frame.iter().enumerate() {
            for i in 0..d {
                m[(i, j)] = v[i];
            }
        }
        let inv = m
            .try_inverse()
            .ok_or(Error::ConeCollapse { margin: 0.0, residual: 1.0 })?;
        let psi: Vec<f64> = inv.row(sigma).iter().copied().collect();
        let side = |sign: f64| -> Result<Vec<f64>> {
            let p = wrap_vec(&linalg::add(x, &linalg::scale(&e, sign * CURVATURE_STEP)));
            let mut v = bundle_frame(f, &p, cfg)?.vector(sigma).to_vec();
            if linalg::dot(&v, &e) < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            Ok(v)
        };
        let k = linalg::scale(&linalg::sub(&side(1.0)?, &side(-1.0)?), 0.5 / CURVATURE_STEP);
        Ok(LeafChart { e, psi, k })
    }

    /// The point of `a e + a²/2 k` sharing `dz`'s coordinate along `e`.
    fn reanchor(&self, dz: &[f64]) -> Vec<f64> {
        let target = linalg::dot(&self.psi, dz);
        let pk = linalg::dot(&self.psi, &self.k);
        let mut a = target;
        for _ in 0..3 {
            a = target - 0.5 * a * a * pk;
        }
        linalg::add(&linalg::scale(&self.e, a), &linalg::scale(&self.k, 0.5 * a * a))
    }
}

/// `log J` along the backward orbits of `x` and of the leaf points
/// `x + offsets[k]`, for `i = 1..=n`.
pub(crate) fn leaf_backward_logs(
    f: &SmoothTorusMap,
    sigma: usize,
    x: &[f64],
    offsets: &[Vec<f64>],
    n: usize,
    cfg: &SplittingConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let x = wrap_vec(x);
    let k = bundle_frame(f, &x, cfg)?.depth + EXTRA_DEPTH;
    let ox = orbit(f, &x, n + 2 * k, k);
    let xi = n + 2 * k;
    let frames = frames_on_points(f, ox.clone(), k);
    // frames[j] and stretch[j] live at ox[k + j]
    let stretch: Vec<f64> = frames
        .iter()
        .enumerate()
        .map(|(j, fr)| linalg::norm(&f.jac_apply(&ox[k + j], &fr[sigma])))
        .collect();
    let anchor: Vec<f64> = (1..=n).map(|i| stretch[xi - i - k].ln()).collect();
    let charts = (1..=n + k)
        .into_par_iter()
        .map(|i| {
            let p = xi - i;
            LeafChart::new(f, sigma, &ox[p], &frames[p - k], cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let inv = f.inverse();
    let nodes = offsets
        .par_iter()
        .map(|dz0| {
            let mut back = Vec::with_capacity(n + 2 * k);
            let mut dz = dz0.clone();
            for i in 1..=n + 2 * k {
                let mut base = ox[xi - i + 1].clone();
                inv.step_difference(&mut base, &mut dz);
                if i <= n + k && linalg::norm(&dz) < ANCHOR_BELOW {
                    dz = charts[i - 1].reanchor(&dz);
                }
                back.push(linalg::add(&ox[xi - i], &dz));
            }
            back.reverse();
            let z = linalg::add(&x, dz0);
            let mut pts = back;
            pts.push(z.clone());
            let mut y = z;
            for _ in 0..k {
                f.step(&mut y, &mut []);
                y = wrap_vec(&y);
                pts.push(y.clone());
            }
            let (_, jz) = line_field_on_points(f, pts, sigma, k);
            let last = jz.len() - 1;
            (1..=n).map(|i| jz[last - i].ln()).collect::<Vec<f64>>()
        })
        .collect();
    Ok((anchor, nodes))
}

/// `Δ_n(x, z) = Π_{i=1..n} J(f^{-i}x) / J(f^{-i}z)` along bundle `sigma`.
pub fn delta_n(
    f: &SmoothTorusMap,
    sigma: usize,
    x: &[f64],
    z: &[f64],
    n: usize,
    cfg: &SplittingConfig,
) -> Result<DeltaEstimate> {
    let dz = nearest_diff(&wrap_vec(x), &wrap_vec(z));
    let (lx, mut lz) = leaf_backward_logs(f, sigma, x, &[dz], n, cfg)?;
    let lz = lz.remove(0);
    let log_value: f64 = lx.iter().zip(&lz).map(|(a, b)| a - b).sum();
    let theta = lx
        .iter()
        .chain(&lz)
        .map(|l| (-l).exp())
        .fold(0.0, f64::max);
    let last_term = match n {
        0 => 0.0,
        _ => (lx[n - 1] - lz[n - 1]).abs(),
    };
    let tail_bound = if theta < 1.0 {
        last_term * theta / (1.0 - theta)
    } else {
        f64::INFINITY
    };
    Ok(DeltaEstimate {
        value: log_value.exp(),
        depth: n,
        theta,
        last_term,
        tail_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub max_depth: usize,
    /// Target bound on the remaining sup-norm change of `ρ`.
    pub tol: f64,
    pub splitting: SplittingConfig,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            max_depth: 80,
            tol: 1e-6,
            splitting: SplittingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsDensityProfile {
    pub sigma: usize,
    pub reference: Vec<f64>,
    pub arclength: Vec<f64>,
    pub values: Vec<f64>,
    pub depth: usize,
    /// `‖ρ_n - ρ_{n-1}‖_∞` for `n = 1..=max_depth`.
    pub cauchy_gaps: Vec<f64>,
    /// Fitted geometric ratio of the tail sums `Σ_{k≥n} gap_k` above the
    /// rounding floor.
    pub gap_ratio: Option<f64>,
    pub gap_r2: Option<f64>,
    pub integral: f64,
    /// Largest `|Δ log ρ| / Δs` between consecutive nodes.
    pub log_lipschitz: f64,
}

fn trapezoid(s: &[f64], v: &[f64]) -> f64 {
    s.windows(2)
        .zip(v.windows(2))
        .map(|(ds, dv)| 0.5 * (ds[1] - ds[0]) * (dv[0] + dv[1]))
        .sum()
}

fn normalized(s: &[f64], log_delta: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = log_delta.iter().map(|l| l.exp()).collect();
    let z = trapezoid(s, &raw);
    raw.iter().map(|r| r / z).collect()
}

/// Density `ρ(z) = Δ_n(x, z) / ∫ Δ_n` on the nodes of `segment`, with the
/// truncation depth chosen from the geometric decay of the Cauchy gaps.
pub fn gibbs_density(
    f: &SmoothTorusMap,
    segment: &LeafSegment,
    cfg: &GibbsConfig,
) -> Result<GibbsDensityProfile> {
    let sigma = segment.sigma;
    let n_max = cfg.max_depth;
    let offsets: Vec<Vec<f64>> = segment.arclength.iter().map(|s| segment.offset_at(*s)).collect();
    let (anchor, logs) =
        leaf_backward_logs(f, sigma, &segment.anchor, &offsets, n_max, &cfg.splitting)?;
    let s = &segment.arclength;
    let m = segment.len();

    let mut log_delta = vec![0.0; m];
    let mut previous = normalized(s, &log_delta);
    let mut history = vec![previous.clone()];
    let mut gaps = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        for (k, ld) in log_delta.iter_mut().enumerate() {
            *ld += anchor[n - 1] - logs[k][n - 1];
        }
        let rho = normalized(s, &log_delta);
        gaps.push(
            rho.iter()
                .zip(&previous)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        history.push(rho.clone());
        previous = rho;
    }

    let mut tails = gaps.clone();
    for k in (0..tails.len().saturating_sub(1)).rev() {
        tails[k] += tails[k + 1];
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = tails
        .iter()
        .enumerate()
        .filter(|(_, t)| **t > GAP_FLOOR)
        .map(|(i, t)| ((i + 1) as f64, t.ln()))
        .unzip();
    let fit = stats::linear_fit(&xs, &ys);
    let gap_ratio = fit.map(|f| f.slope.exp());
    let gap_r2 = fit.map(|f| f.r2);

    let depth = if tails.first().map_or(true, |t| *t <= GAP_FLOOR) {
        0
    } else {
        let r = gap_ratio.unwrap_or(1.0);
        if r >= 1.0 {
            return Err(Error::NoConvergence(format!(
                "density gaps do not contract (ratio {r})"
            )));
        }
        let beyond = gaps.last().copied().unwrap_or(0.0) * r / (1.0 - r);
        tails
            .iter()
            .position(|t| t + beyond <= cfg.tol)
            .ok_or_else(|| {
                Error::NoConvergence(format!("density tail above {} at depth {n_max}", cfg.tol))
            })?
    };
    let values = history[depth].clone();
    let integral = trapezoid(s, &values);
    let log_lipschitz = values
        .windows(2)
        .zip(s.windows(2))
        .map(|(v, ds)| (v[1].ln() - v[0].ln()).abs() / (ds[1] - ds[0]))
        .fold(0.0, f64::max);
    Ok(GibbsDensityProfile {
        sigma,
        reference: segment.anchor.clone(),
        arclength: s.clone(),
        values,
        depth,
        cauchy_gaps: gaps,
        gap_ratio,
        gap_r2,
        integral,
        log_lipschitz,
    })
}

/// Largest relative defect of `Δ_{n+1}(fx, fz) = [J(x)/J(z)] Δ_n(x, z)` over
/// the nodes of `segment`.
pub fn density_equivariance_defect(
    f: &SmoothTorusMap,
    segment: &LeafSegment,
    n: usize,
    cfg: &SplittingConfig,
) -> Result<f64> {
    let sigma = segment.sigma;
    let x = &segment.anchor;
    let fx = f.eval_lift(x);
    let offsets: Vec<Vec<f64>> = segment.arclength.iter().map(|s| segment.offset_at(*s)).collect();
    let images: Vec<Vec<f64>> = offsets
        .iter()
        .map(|dz| linalg::sub(&f.eval_lift(&linalg::add(x, dz)), &fx))
        .collect();
    let (ax, lx) = leaf_backward_logs(f, sigma, x, &offsets, n, cfg)?;
    let (afx, lfx) = leaf_backward_logs(f, sigma, &fx, &images, n + 1, cfg)?;
    let jx = afx[0];
    let defects = offsets
        .par_iter()
        .enumerate()
        .map(|(k, dz)| {
            let z = wrap_vec(&linalg::add(x, dz));
            let jz = orbit_bundle(f, &z, sigma, 0, 0, cfg)?.stretch[0].ln();
            let here: f64 = ax.iter().zip(&lx[k]).map(|(a, b)| a - b).sum();
            let there: f64 = afx.iter().zip(&lfx[k]).map(|(a, b)| a - b).sum();
            Ok((there - here - (jx - jz)).exp_m1().abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}
