//! One-dimensional invariant foliations: leaf tracing, the truncated
//! Jacobian-ratio products `Δ_n`, Gibbs densities along leaves, and leafwise
//! dynamical balls.

mod ball;
mod gibbs;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use ball::{leaf_ball_profile, leaf_ball_profile_on, leaf_dynamical_ball, BallConfig, BallProfile};
pub use gibbs::{
    delta_n, density_equivariance_defect, gibbs_density, DeltaEstimate, GibbsConfig,
    GibbsDensityProfile,
};

use crate::algebra::{nearest_diff, wrap_vec};
use crate::cocycle::{bundle_frame, SplittingConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::SmoothTorusMap;

/// Largest total arclength of a traced plaque.
pub const MAX_PLAQUE_LENGTH: f64 = 2.0;

/// The map and index under which bundle `sigma` of `f` is expanding:
/// `(f, σ)` itself, or `(f⁻¹, d - 1 - σ)` for contracting bundles.
pub fn expanding_view(f: &SmoothTorusMap, sigma: usize) -> (SmoothTorusMap, usize) {
    let value = f.spectrum().pairs[sigma].value;
    if value.abs() > 1.0 {
        (f.clone(), sigma)
    } else {
        (f.inverse(), f.dim() - 1 - sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub step: f64,
    pub half_length: f64,
    /// Largest accepted turn (radians) between predictor and corrector.
    pub max_turn: f64,
    pub max_halvings: u32,
    pub splitting: SplittingConfig,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            step: 0.005,
            half_length: 0.25,
            max_turn: 0.02,
            max_halvings: 6,
            splitting: SplittingConfig::default(),
        }
    }
}

/// Arclength-parameterized polyline along the leaf of bundle `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSegment {
    pub sigma: usize,
    pub anchor: Vec<f64>,
    /// Continuous lifts of the nodes, ordered by arclength.
    pub lifts: Vec<Vec<f64>>,
    /// Unit tangents at the nodes, oriented along increasing arclength.
    pub tangents: Vec<Vec<f64>>,
    /// Signed arclength from the anchor.
    pub arclength: Vec<f64>,
    pub anchor_index: usize,
    pub step: f64,
    pub half_length: f64,
}

impl LeafSegment {
    pub fn len(&self) -> usize {
        self.lifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lifts.is_empty()
    }

    /// Node coordinates reduced mod 1.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        self.lifts.iter().map(|p| wrap_vec(p)).collect()
    }

    pub fn s_min(&self) -> f64 {
        self.arclength[0]
    }

    pub fn s_max(&self) -> f64 {
        *self.arclength.last().expect("non-empty segment")
    }

    pub fn total_length(&self) -> f64 {
        self.s_max() - self.s_min()
    }

    fn segment_index(&self, s: f64) -> usize {
        let i = self.arclength.partition_point(|&a| a <= s);
        i.clamp(1, self.len() - 1) - 1
    }

    fn hermite(&self, i: usize, t: f64) -> Vec<f64> {
        let ds = self.arclength[i + 1] - self.arclength[i];
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        (0..self.anchor.len())
            .map(|k| {
                h00 * self.lifts[i][k]
                    + h10 * ds * self.tangents[i][k]
                    + h01 * self.lifts[i + 1][k]
                    + h11 * ds * self.tangents[i + 1][k]
            })
            .collect()
    }

    /// Lift of the leaf point at signed arclength `s` (cubic Hermite).
    pub fn point_at(&self, s: f64) -> Vec<f64> {
        let i = self.segment_index(s);
        let ds = self.arclength[i + 1] - self.arclength[i];
        self.hermite(i, (s - self.arclength[i]) / ds)
    }

    /// Arclength of the leaf point closest to `p` and the torus distance to it.
    pub fn project(&self, p: &[f64]) -> (f64, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() - 1 {
            let a = &self.lifts[i];
            let b = &self.lifts[i + 1];
            let q = linalg::add(a, &nearest_diff(&wrap_vec(a), &wrap_vec(p)));
            let ab = linalg::sub(b, a);
            let t = (linalg::dot(&linalg::sub(&q, a), &ab) / linalg::dot(&ab, &ab)).clamp(0.0, 1.0);
            let dist = linalg::norm(&linalg::sub(&q, &linalg::add(a, &linalg::scale(&ab, t))));
            if dist < best.1 {
                best = (i, dist);
            }
        }
        let lo = self.arclength[best.0.saturating_sub(1)];
        let hi = self.arclength[(best.0 + 2).min(self.len() - 1)];
        let dist = |s: f64| {
            let c = self.point_at(s);
            linalg::norm(&nearest_diff(&wrap_vec(&c), &wrap_vec(p)))
        };
        let (mut a, mut b) = (lo, hi);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (dist(c), dist(d));
        for _ in 0..80 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = dist(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = dist(d);
            }
        }
        let s = 0.5 * (a + b);
        (s, dist(s))
    }

    /// Rows `(arclength, x_1..x_d)` with coordinates reduced mod 1.
    pub fn write_csv<W: Write>(&self, out: W, density: Option<&[f64]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["arclength".to_string()];
        header.extend((1..=self.anchor.len()).map(|i| format!("x_{i}")));
        if density.is_some() {
            header.push("rho".into());
        }
        w.write_record(&header).map_err(crate::cocycle::csv_error)?;
        for (i, p) in self.nodes().iter().enumerate() {
            let mut rec = vec![self.arclength[i].to_string()];
            rec.extend(p.iter().map(|c| c.to_string()));
            if let Some(rho) = density {
                rec.push(rho[i].to_string());
            }
            w.write_record(&rec).map_err(crate::cocycle::csv_error)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("csv: {e}")))
    }
}

fn field(
    f: &SmoothTorusMap,
    sigma: usize,
    p: &[f64],
    along: &[f64],
    cfg: &SplittingConfig,
) -> Result<Vec<f64>> {
    let frame = bundle_frame(f, &wrap_vec(p), cfg)?;
    let mut v = frame.vector(sigma).to_vec();
    if linalg::dot(&v, along) < 0.0 {
        v.iter_mut().for_each(|c| *c = -*c);
    }
    Ok(v)
}

fn advance(
    f: &SmoothTorusMap,
    sigma: usize,
    p: &[f64],
    v: &[f64],
    cfg: &TraceConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    'halving: for k in 0..=cfg.max_halvings {
        let n = 1usize << k;
        let h = cfg.step / n as f64;
        let mut q = p.to_vec();
        let mut w = v.to_vec();
        for _ in 0..n {
            let pred = linalg::add(&q, &linalg::scale(&w, h));
            let w2 = field(f, sigma, &pred, &w, &cfg.splitting)?;
            if linalg::line_angle(&w, &w2) > cfg.max_turn {
                continue 'halving;
            }
            let mean = linalg::scale(&linalg::add(&w, &w2), 0.5);
            q = linalg::add(&q, &linalg::scale(&mean, h));
            w = field(f, sigma, &q, &w2, &cfg.splitting)?;
        }
        return Ok((q, w));
    }
    Err(Error::StepRejected(cfg.step / (1u64 << cfg.max_halvings) as f64))
}

/// Traces the leaf of bundle `sigma` through `x` to arclength `±half_length`
/// with a Heun predictor-corrector along the invariant line field.
pub fn trace_leaf(
    f: &SmoothTorusMap,
    sigma: usize,
    x: &[f64],
    cfg: &TraceConfig,
) -> Result<LeafSegment> {
    if sigma >= f.dim() {
        return Err(Error::invalid("sigma", format!("index {sigma} out of range")));
    }
    if !(cfg.step > 0.0 && cfg.half_length >= cfg.step) {
        return Err(Error::invalid("trace.step", "need 0 < step <= half_length"));
    }
    if 2.0 * cfg.half_length > MAX_PLAQUE_LENGTH + 1e-12 {
        return Err(Error::invalid(
            "trace.half_length",
            format!("plaques are capped at total arclength {MAX_PLAQUE_LENGTH}"),
        ));
    }
    let x = wrap_vec(x);
    let reference = f.spectrum().pairs[sigma].vector.clone();
    let e0 = field(f, sigma, &x, &reference, &cfg.splitting)?;
    let count = (cfg.half_length / cfg.step).round() as usize;
    let mut sides: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
    for sign in [1.0, -1.0] {
        let mut p = x.clone();
        let mut v = linalg::scale(&e0, sign);
        let mut s = 0.0;
        let (mut pts, mut tans, mut arcs) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..count {
            let (q, w) = advance(f, sigma, &p, &v, cfg)?;
            s += linalg::norm(&linalg::sub(&q, &p));
            pts.push(q.clone());
            tans.push(linalg::scale(&w, sign));
            arcs.push(sign * s);
            p = q;
            v = w;
        }
        sides.push((pts, tans, arcs));
    }
    let (fwd, bwd) = (&sides[0], &sides[1]);
    let mut lifts: Vec<Vec<f64>> = bwd.0.iter().rev().cloned().collect();
    let mut tangents: Vec<Vec<f64>> = bwd.1.iter().rev().cloned().collect();
    let mut arclength: Vec<f64> = bwd.2.iter().rev().cloned().collect();
    let anchor_index = lifts.len();
    lifts.push(x.clone());
    tangents.push(e0);
    arclength.push(0.0);
    lifts.extend(fwd.0.iter().cloned());
    tangents.extend(fwd.1.iter().cloned());
    arclength.extend(fwd.2.iter().cloned());
    Ok(LeafSegment {
        sigma,
        anchor: x,
        lifts,
        tangents,
        arclength,
        anchor_index,
        step: cfg.step,
        half_length: cfg.half_length,
    })
}

/// Largest distance from `f(z)` to `image` over nodes `z` of `segment`
/// whose images project inside `image`.
pub fn invariance_defect(f: &SmoothTorusMap, segment: &LeafSegment, image: &LeafSegment) -> f64 {
    let margin = 2.0 * image.step;
    segment
        .lifts
        .iter()
        .filter_map(|z| {
            let (s, dist) = image.project(&f.eval(z));
            (s > image.s_min() + margin && s < image.s_max() - margin).then_some(dist)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::analyze_matrix;
    use crate::maps::{make_shear_perturbation, ShearFactor, TrigProfile};

    fn cat() -> SmoothTorusMap {
        SmoothTorusMap::linear(&analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap())
    }

    fn perturbed() -> SmoothTorusMap {
        make_shear_perturbation(
            &analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap(),
            &[ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1))],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn linear_leaf_is_straight() {
        let f = cat();
        let x = vec![0.2, 0.9];
        let seg = trace_leaf(&f, 1, &x, &TraceConfig::default()).unwrap();
        let e = f.spectrum().pairs[1].vector.clone();
        for (p, s) in seg.lifts.iter().zip(&seg.arclength) {
            let exact = linalg::add(&x, &linalg::scale(&e, *s));
            assert!(linalg::norm(&linalg::sub(p, &exact)) < 1e-10);
        }
    }

    #[test]
    fn long_leaf_wraps() {
        let cfg = TraceConfig {
            half_length: 1.0,
            step: 0.02,
            ..TraceConfig::default()
        };
        let seg = trace_leaf(&cat(), 1, &[0.5, 0.5], &cfg).unwrap();
        assert!(seg.arclength.windows(2).all(|w| w[1] > w[0]));
        assert!(seg.nodes().iter().flatten().all(|c| (0.0..1.0).contains(c)));
        assert!(seg.lifts.iter().flatten().any(|c| *c > 1.0 || *c < 0.0));
    }

    #[test]
    fn oversized_plaque_rejected() {
        let cfg = TraceConfig {
            half_length: 1.5,
            ..TraceConfig::default()
        };
        assert!(trace_leaf(&cat(), 1, &[0.5, 0.5], &cfg).is_err());
    }

    #[test]
    fn perturbed_leaf_geometry_and_invariance() {
        let f = perturbed();
        let cfg = TraceConfig::default();
        let x = vec![0.3, 0.6];
        let seg = trace_leaf(&f, 1, &x, &cfg).unwrap();
        for i in 0..seg.len() - 1 {
            let ds = seg.arclength[i + 1] - seg.arclength[i];
            assert!(ds >= 0.5 * cfg.step && ds <= 1.5 * cfg.step);
            let chord = linalg::sub(&seg.lifts[i + 1], &seg.lifts[i]);
            assert!(linalg::line_angle(&chord, &seg.tangents[i]) < 1e-2);
        }
        let image = trace_leaf(&f, 1, &f.eval(&x), &cfg).unwrap();
        assert!(invariance_defect(&f, &seg, &image) <= 1e-5);
    }

    #[test]
    fn projection_recovers_arclength() {
        let seg = trace_leaf(&perturbed(), 1, &[0.3, 0.6], &TraceConfig::default()).unwrap();
        for s in [-0.2, -0.0137, 0.05, 0.19] {
            let (s2, d) = seg.project(&wrap_vec(&seg.point_at(s)));
            assert!((s2 - s).abs() < 1e-7 && d < 1e-9, "{s} {s2} {d}");
        }
    }

    #[test]
    fn stable_bundle_routes_through_inverse() {
        let (g, s) = expanding_view(&perturbed(), 0);
        assert!(g.is_inverted());
        assert_eq!(s, 1);
    }
}
