use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::initial_frame;
use crate::algebra::wrap_vec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::SmoothTorusMap;

const MARGIN_WINDOW: usize = 8;
const FIRST_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingConfig {
    /// Largest number of cocycle steps pushed toward each base point.
    pub max_depth: usize,
    /// Required angle change between depths `K` and `K - 1`.
    pub tol: f64,
    /// Smallest accepted domination margin between consecutive bundles.
    pub min_margin: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        SplittingConfig {
            max_depth: 256,
            tol: 1e-8,
            min_margin: 1e-3,
        }
    }
}

/// Invariant line fields at one point, indexed like the linear spectrum
/// (ascending `|λ|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFrame {
    pub point: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// `min` over windows of `exp(rate_{i+1} - rate_i) - 1`.
    pub margins: Vec<f64>,
    pub depth: usize,
}

impl BundleFrame {
    pub fn vector(&self, sigma: usize) -> &[f64] {
        &self.vectors[sigma]
    }

    pub fn residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn margin(&self) -> f64 {
        self.margins.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Line field `e_σ` along the orbit segment `f^{-back}(x) … f^{fwd}(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitBundle {
    pub sigma: usize,
    /// Index of `x` in `points`.
    pub offset: usize,
    pub points: Vec<Vec<f64>>,
    pub vectors: Vec<Vec<f64>>,
    /// `‖Df(p) e_σ(p)‖` at each point.
    pub stretch: Vec<f64>,
}

struct Pushes {
    /// Forward-pushed flags (descending spectral order) at each recorded point.
    forward: Vec<Vec<Vec<f64>>>,
    /// Backward-pulled flags (ascending order) at each recorded point.
    backward: Vec<Vec<Vec<f64>>>,
    points: Vec<Vec<f64>>,
    /// Per-step `log R_ii` of the forward push, ascending spectral order.
    forward_logs: Vec<Vec<f64>>,
}

pub(crate) fn orbit(f: &SmoothTorusMap, x: &[f64], back: usize, fwd: usize) -> Vec<Vec<f64>> {
    let mut past = Vec::with_capacity(back);
    let mut y = x.to_vec();
    for _ in 0..back {
        f.step_inverse(&mut y, &mut []);
        y = wrap_vec(&y);
        past.push(y.clone());
    }
    past.reverse();
    let mut pts = past;
    pts.push(x.to_vec());
    let mut y = x.to_vec();
    for _ in 0..fwd {
        f.step(&mut y, &mut []);
        y = wrap_vec(&y);
        pts.push(y.clone());
    }
    pts
}

/// Pushes linear flags from `depth` steps outside the window `[-back, fwd]`.
fn push_flags(f: &SmoothTorusMap, x: &[f64], back: usize, fwd: usize, depth: usize) -> Pushes {
    push_flags_on(f, orbit(f, x, back + depth, fwd + depth), depth)
}

/// Flags on `pts[depth..len - depth]` of a (pseudo-)orbit listed oldest first.
fn push_flags_on(f: &SmoothTorusMap, pts: Vec<Vec<f64>>, depth: usize) -> Pushes {
    let d = f.dim();
    let total = pts.len();
    let lo = depth;
    let hi = total - 1 - depth;

    let mut frame = initial_frame(f);
    let mut forward = Vec::with_capacity(hi - lo + 1);
    let mut forward_logs = vec![Vec::with_capacity(hi); d];
    if lo == 0 {
        forward.push(frame.clone());
    }
    for i in 0..hi {
        let mut y = pts[i].clone();
        f.step(&mut y, &mut frame);
        let r = linalg::mgs(&mut frame);
        for (k, ri) in r.iter().enumerate() {
            forward_logs[d - 1 - k].push(ri.ln());
        }
        if i + 1 >= lo {
            forward.push(frame.clone());
        }
    }

    let mut frame: Vec<Vec<f64>> = initial_frame(f).into_iter().rev().collect();
    let mut backward = vec![Vec::new(); hi - lo + 1];
    if hi == total - 1 {
        backward[hi - lo] = frame.clone();
    }
    for i in (lo + 1..total).rev() {
        let mut y = pts[i].clone();
        f.step_inverse(&mut y, &mut frame);
        linalg::mgs(&mut frame);
        if i - 1 <= hi {
            backward[i - 1 - lo] = frame.clone();
        }
    }
    Pushes {
        forward,
        backward,
        points: pts[lo..=hi].to_vec(),
        forward_logs,
    }
}

fn line_from_flags(
    forward: &[Vec<f64>],
    backward: &[Vec<f64>],
    sigma: usize,
    reference: &[f64],
) -> Vec<f64> {
    let d = forward.len();
    let mut v = if sigma == d - 1 {
        forward[0].clone()
    } else if sigma == 0 {
        backward[0].clone()
    } else {
        linalg::intersect_lines(&forward[..d - sigma], &backward[..=sigma])
    };
    if linalg::dot(&v, reference) < 0.0 {
        v.iter_mut().for_each(|c| *c = -*c);
    }
    v
}

fn lines_at(f: &SmoothTorusMap, pushes: &Pushes, pos: usize) -> Vec<Vec<f64>> {
    let spectrum = f.spectrum();
    (0..f.dim())
        .map(|s| {
            line_from_flags(
                &pushes.forward[pos],
                &pushes.backward[pos],
                s,
                &spectrum.pairs[s].vector,
            )
        })
        .collect()
}

fn margins(logs: &[Vec<f64>]) -> Vec<f64> {
    let d = logs.len();
    let n = logs[0].len();
    let w = MARGIN_WINDOW.min(n).max(1);
    (0..d.saturating_sub(1))
        .map(|i| {
            let mut m = f64::INFINITY;
            let mut start = 0;
            while start + w <= n {
                let lo: f64 = logs[i][start..start + w].iter().sum();
                let hi: f64 = logs[i + 1][start..start + w].iter().sum();
                m = m.min(((hi - lo) / w as f64).exp() - 1.0);
                start += w;
            }
            m
        })
        .collect()
}

fn depth_schedule(max_depth: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = FIRST_DEPTH.min(max_depth.max(2));
    loop {
        out.push(k);
        if k >= max_depth {
            break;
        }
        k = (2 * k).min(max_depth);
    }
    out
}

/// All invariant line fields at `x`, converged to `cfg.tol`.
pub fn bundle_frame(f: &SmoothTorusMap, x: &[f64], cfg: &SplittingConfig) -> Result<BundleFrame> {
    let x = wrap_vec(x);
    let mut last = None;
    for depth in depth_schedule(cfg.max_depth) {
        let deep = push_flags(f, &x, 0, 0, depth);
        let shallow = push_flags(f, &x, 0, 0, depth - 1);
        let vectors = lines_at(f, &deep, 0);
        let previous = lines_at(f, &shallow, 0);
        let residuals: Vec<f64> = vectors
            .iter()
            .zip(&previous)
            .map(|(a, b)| linalg::line_angle(a, b))
            .collect();
        let frame = BundleFrame {
            point: x.clone(),
            vectors,
            residuals,
            margins: margins(&deep.forward_logs),
            depth,
        };
        if frame.margin() < cfg.min_margin {
            return Err(Error::ConeCollapse {
                margin: frame.margin(),
                residual: frame.residual(),
            });
        }
        if frame.residual() <= cfg.tol {
            return Ok(frame);
        }
        last = Some(frame);
    }
    let frame = last.expect("non-empty depth schedule");
    Err(Error::ConeCollapse {
        margin: frame.margin(),
        residual: frame.residual(),
    })
}

/// `e_σ` and `‖Df e_σ‖` on `pts[depth..len - depth]` of a pseudo-orbit
/// listed oldest first.
pub(crate) fn line_field_on_points(
    f: &SmoothTorusMap,
    pts: Vec<Vec<f64>>,
    sigma: usize,
    depth: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let pushes = push_flags_on(f, pts, depth);
    let reference = f.spectrum().pairs[sigma].vector.clone();
    let vectors: Vec<Vec<f64>> = (0..pushes.points.len())
        .map(|p| line_from_flags(&pushes.forward[p], &pushes.backward[p], sigma, &reference))
        .collect();
    let stretch = pushes
        .points
        .iter()
        .zip(&vectors)
        .map(|(p, v)| linalg::norm(&f.jac_apply(p, v)))
        .collect();
    (vectors, stretch)
}

/// All line fields on `pts[depth..len - depth]` of a pseudo-orbit listed
/// oldest first.
pub(crate) fn frames_on_points(
    f: &SmoothTorusMap,
    pts: Vec<Vec<f64>>,
    depth: usize,
) -> Vec<Vec<Vec<f64>>> {
    let pushes = push_flags_on(f, pts, depth);
    (0..pushes.points.len()).map(|p| lines_at(f, &pushes, p)).collect()
}

/// Bundle frames at every sample point (data-parallel, order preserved).
pub fn invariant_splitting(
    f: &SmoothTorusMap,
    points: &[Vec<f64>],
    cfg: &SplittingConfig,
) -> Result<Vec<BundleFrame>> {
    points.par_iter().map(|x| bundle_frame(f, x, cfg)).collect()
}

/// `e_σ` and its stretch factors along `f^{-back}(x) … f^{fwd}(x)`.
pub fn orbit_bundle(
    f: &SmoothTorusMap,
    x: &[f64],
    sigma: usize,
    back: usize,
    fwd: usize,
    cfg: &SplittingConfig,
) -> Result<OrbitBundle> {
    if sigma >= f.dim() {
        return Err(Error::invalid("sigma", format!("index {sigma} out of range")));
    }
    let x = wrap_vec(x);
    let depth = bundle_frame(f, &x, cfg)?.depth;
    let pushes = push_flags(f, &x, back, fwd, depth + MARGIN_WINDOW);
    let reference = f.spectrum().pairs[sigma].vector.clone();
    let vectors: Vec<Vec<f64>> = (0..pushes.points.len())
        .map(|p| line_from_flags(&pushes.forward[p], &pushes.backward[p], sigma, &reference))
        .collect();
    let stretch = pushes
        .points
        .iter()
        .zip(&vectors)
        .map(|(p, v)| linalg::norm(&f.jac_apply(p, v)))
        .collect();
    Ok(OrbitBundle {
        sigma,
        offset: back,
        points: pushes.points,
        vectors,
        stretch,
    })
}
