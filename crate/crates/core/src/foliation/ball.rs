use serde::{Deserialize, Serialize};

use super::{trace_leaf, LeafSegment, TraceConfig};
use crate::algebra::wrap_vec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::SmoothTorusMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallConfig {
    /// Polyline resolution of each propagated arc.
    pub subdivisions: usize,
    pub max_iter: usize,
    pub trace: TraceConfig,
}

impl Default for BallConfig {
    fn default() -> Self {
        BallConfig {
            subdivisions: 8,
            max_iter: 100,
            trace: TraceConfig {
                half_length: 0.1,
                ..TraceConfig::default()
            },
        }
    }
}

/// Leafwise dynamical ball lengths for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallProfile {
    pub sigma: usize,
    pub anchor: Vec<f64>,
    pub delta: f64,
    pub lengths: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl LeafSegment {
    /// `point_at(s) - anchor`, free of cancellation for small `|s|`.
    pub fn offset_at(&self, s: f64) -> Vec<f64> {
        let i = self.segment_index(s);
        let ds = self.arclength[i + 1] - self.arclength[i];
        let t = (s - self.arclength[i]) / ds;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let a = &self.lifts[self.anchor_index];
        (0..a.len())
            .map(|k| {
                h00 * (self.lifts[i][k] - a[k])
                    + h10 * ds * self.tangents[i][k]
                    + h01 * (self.lifts[i + 1][k] - a[k])
                    + h11 * ds * self.tangents[i + 1][k]
            })
            .collect()
    }
}

/// Image arclengths `ℓ_i(s)`, `i = 0..=n`, of the leaf arc from the anchor
/// to signed arclength `s`.
fn image_lengths(f: &SmoothTorusMap, seg: &LeafSegment, s: f64, n: usize, m: usize) -> Vec<f64> {
    let x = wrap_vec(&seg.anchor);
    let mut bases: Vec<Vec<f64>> = vec![x; m + 1];
    let mut offsets: Vec<Vec<f64>> = (0..=m)
        .map(|k| seg.offset_at(s * k as f64 / m as f64))
        .collect();
    let length = |offs: &[Vec<f64>]| -> f64 {
        offs.windows(2)
            .map(|w| linalg::norm(&linalg::sub(&w[1], &w[0])))
            .sum()
    };
    let mut out = Vec::with_capacity(n + 1);
    out.push(length(&offsets));
    for _ in 0..n {
        for (b, o) in bases.iter_mut().zip(offsets.iter_mut()) {
            f.step_difference(b, o);
            *b = wrap_vec(b);
        }
        out.push(length(&offsets));
    }
    out
}

/// Largest `s ∈ (0, s_hi]` with `ℓ_i(s) ≤ δ`, by safeguarded secant in
/// `log s`.
fn solve_boundary(
    f: &SmoothTorusMap,
    seg: &LeafSegment,
    sign: f64,
    i: usize,
    s_hi: f64,
    delta: f64,
    cfg: &BallConfig,
) -> Result<f64> {
    let phi = |u: f64| -> f64 {
        let l = image_lengths(f, seg, sign * u.exp(), i, cfg.subdivisions)[i];
        l.ln() - delta.ln()
    };
    let mut b = s_hi.ln();
    let mut fb = phi(b);
    let mut a = b - fb.max(1e-3);
    let mut fa = phi(a);
    let mut guard = 0;
    while fa > 0.0 {
        b = a;
        fb = fa;
        a -= fa.max(1.0);
        fa = phi(a);
        guard += 1;
        if guard > cfg.max_iter {
            return Err(Error::NoConvergence("ball boundary bracket".into()));
        }
    }
    for _ in 0..cfg.max_iter {
        if fb.abs() < 1e-13 || (b - a) < 1e-14 {
            break;
        }
        let mut u = b - fb * (b - a) / (fb - fa);
        if !(u > a && u < b) {
            u = 0.5 * (a + b);
        }
        let fu = phi(u);
        if fu > 0.0 {
            b = u;
            fb = fu;
        } else {
            a = u;
            fa = fu;
        }
        if fa.abs() < 1e-13 {
            return Ok(a.exp());
        }
    }
    Ok(if fb.abs() < fa.abs() { b } else { a }.exp())
}

/// Ball lengths on a traced segment (its anchor is the ball center).
pub fn leaf_ball_profile_on(
    f: &SmoothTorusMap,
    seg: &LeafSegment,
    delta: f64,
    n_max: usize,
    cfg: &BallConfig,
) -> Result<BallProfile> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    let available = seg.s_max().min(-seg.s_min());
    if delta > available {
        return Err(Error::TraceTooShort {
            needed: delta,
            available,
        });
    }
    let mut sides = Vec::new();
    for sign in [1.0, -1.0] {
        let mut bound = vec![delta];
        let mut s = delta;
        for i in 1..=n_max {
            let li = image_lengths(f, seg, sign * s, i, cfg.subdivisions)[i];
            if li > delta {
                s = solve_boundary(f, seg, sign, i, s, delta, cfg)?.min(s);
            }
            bound.push(s);
        }
        sides.push(bound);
    }
    let lengths = sides[0].iter().zip(&sides[1]).map(|(a, b)| a + b).collect();
    Ok(BallProfile {
        sigma: seg.sigma,
        anchor: seg.anchor.clone(),
        delta,
        lengths,
        plus: sides.remove(0),
        minus: sides.remove(0),
    })
}

pub fn leaf_ball_profile(
    f: &SmoothTorusMap,
    sigma: usize,
    x: &[f64],
    delta: f64,
    n_max: usize,
    cfg: &BallConfig,
) -> Result<BallProfile> {
    if delta > cfg.trace.half_length {
        return Err(Error::TraceTooShort {
            needed: delta,
            available: cfg.trace.half_length,
        });
    }
    let seg = trace_leaf(f, sigma, x, &cfg.trace)?;
    leaf_ball_profile_on(f, &seg, delta, n_max, cfg)
}

/// Arclength of `B_n(x, f, 𝓕, δ)`.
pub fn leaf_dynamical_ball(
    f: &SmoothTorusMap,
    sigma: usize,
    x: &[f64],
    delta: f64,
    n: usize,
    cfg: &BallConfig,
) -> Result<f64> {
    Ok(leaf_ball_profile(f, sigma, x, delta, n, cfg)?.lengths[n])
}
