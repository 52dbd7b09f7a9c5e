//! Center leaves and center holonomy of the Katok suspension and of skew
//! products over `T²`, with absolute-continuity and unique-intersection
//! indicators.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{nearest_diff, torus_distance, wrap, wrap_vec};
use crate::cocycle::csv_error;
use crate::conjugacy::{solve_conjugacy, ConjugacyConfig, ConjugacySolution};
use crate::error::{Error, Result};
use crate::maps::{KatokFamily, SkewProductMap, TrigProfile};
use crate::stats;

/// A Katok family with the conjugacy of every member solved.
#[derive(Debug, Clone)]
pub struct SolvedFamily {
    pub family: KatokFamily,
    pub solutions: Vec<ConjugacySolution>,
}

pub fn solve_family(family: &KatokFamily, cfg: &ConjugacyConfig) -> Result<SolvedFamily> {
    let solutions = family
        .members
        .iter()
        .map(|f| solve_conjugacy(f, &family.linear, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolvedFamily {
        family: family.clone(),
        solutions,
    })
}

/// Sampled center leaf: a graph over the parameter (Katok) or over the
/// fiber coordinate (skew products).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterLeaf {
    pub anchor: Vec<f64>,
    pub params: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Largest distance between the image of the leaf and the leaf of the
    /// image, slice by slice.
    pub invariance_defect: f64,
}

impl SolvedFamily {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn holonomy(&self, source: usize, target: usize) -> Result<HolonomyMap> {
        center_holonomy(self, source, target)
    }

    /// Center leaf through `(x, t_index)`.
    pub fn center_leaf(&self, x: &[f64], index: usize) -> Result<CenterLeaf> {
        let x = wrap_vec(x);
        let fx = self.family.members[index].eval(&x);
        let mut points = Vec::with_capacity(self.len());
        let mut defect: f64 = 0.0;
        for j in 0..self.len() {
            let h = self.holonomy(index, j)?;
            let p = h.eval(&x)?;
            let image = self.family.members[j].eval(&p);
            defect = defect.max(torus_distance(&image, &h.eval(&fx)?));
            points.push(p);
        }
        Ok(CenterLeaf {
            anchor: x,
            params: self.family.grid.clone(),
            points,
            invariance_defect: defect,
        })
    }
}

/// Center leaf of a skew product through `(x, y)`: the fiber over `x`.
pub fn skew_center_leaf(skew: &SkewProductMap, x: &[f64], samples: usize) -> Result<CenterLeaf> {
    if x.len() != 3 {
        return Err(Error::invalid("point", format!("length {}, expected 3", x.len())));
    }
    let x = wrap_vec(x);
    let params: Vec<f64> = (0..samples.max(1))
        .map(|k| wrap(x[2] + k as f64 / samples.max(1) as f64))
        .collect();
    let points: Vec<Vec<f64>> = params.iter().map(|&s| vec![x[0], x[1], s]).collect();
    let base = skew.base().eval(&x[..2]);
    let defect = points
        .iter()
        .map(|p| torus_distance(&skew.map().eval(p)[..2], &base))
        .fold(0.0, f64::max);
    Ok(CenterLeaf {
        anchor: x,
        params,
        points,
        invariance_defect: defect,
    })
}

/// `H_{t1,t2} = h_{t2}⁻¹ ∘ h_{t1}`, sliding along center leaves from the
/// fiber `t1` to the fiber `t2`.
#[derive(Debug, Clone)]
pub struct HolonomyMap {
    pub source: usize,
    pub target: usize,
    pub t1: f64,
    pub t2: f64,
    from: ConjugacySolution,
    to: ConjugacySolution,
}

pub fn center_holonomy(family: &SolvedFamily, source: usize, target: usize) -> Result<HolonomyMap> {
    let n = family.len();
    if source >= n || target >= n {
        return Err(Error::invalid("holonomy", format!("member index out of range 0..{n}")));
    }
    Ok(HolonomyMap {
        source,
        target,
        t1: family.family.grid[source],
        t2: family.family.grid[target],
        from: family.solutions[source].clone(),
        to: family.solutions[target].clone(),
    })
}

impl HolonomyMap {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.source == self.target {
            return Ok(wrap_vec(x));
        }
        self.to.inverse(&self.from.eval(x))
    }

    /// `sup d(γ_{t2}(H x), H(γ_{t1} x))` over `points`.
    pub fn residual(&self, points: &[Vec<f64>]) -> Result<f64> {
        let d = points
            .par_iter()
            .map(|x| {
                let a = self.to.f.eval(&self.eval(x)?);
                let b = self.eval(&self.from.f.eval(x))?;
                Ok(torus_distance(&a, &b))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }

    /// `sup d(H x, g_{t2} ∘ g_{t1}⁻¹ x)` against the stored generators.
    pub fn oracle_distance(&self, points: &[Vec<f64>]) -> Result<f64> {
        let (Some(g1), Some(g2)) = (self.from.f.generator(), self.to.f.generator()) else {
            return Err(Error::Precondition("members carry no generators".into()));
        };
        let d = points
            .par_iter()
            .map(|x| {
                let oracle = g2.eval(&g1.inverse_eval(x));
                Ok(torus_distance(&self.eval(x)?, &oracle))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }
}

/// `sup d(H_{b,c} H_{a,b} x, H_{a,c} x)` over `points`.
pub fn cocycle_defect(
    family: &SolvedFamily,
    (a, b, c): (usize, usize, usize),
    points: &[Vec<f64>],
) -> Result<f64> {
    let ab = family.holonomy(a, b)?;
    let bc = family.holonomy(b, c)?;
    let ac = family.holonomy(a, c)?;
    let d = points
        .par_iter()
        .map(|x| Ok(torus_distance(&bc.eval(&ab.eval(x)?)?, &ac.eval(x)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(d.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AcVerdict {
    AcLike,
    SingularLike,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcConfig {
    pub grids: [usize; 3],
    /// Mass fraction defining the concentration `c_q`.
    pub q: f64,
    pub jacobian_locations: usize,
    /// Dyadic exponents `k` of the square sides `2^{-k}`.
    pub jacobian_levels: (u32, u32),
    pub boundary_points: usize,
    /// Largest Jacobian change between consecutive scales, at the two finest
    /// scales, for AC-LIKE; the change must also not grow at the finest.
    pub spread_limit: f64,
    /// Smallest per-refinement shrink factor of `c_q` for SINGULAR-LIKE.
    pub shrink_factor: f64,
}

impl Default for AcConfig {
    fn default() -> Self {
        AcConfig {
            grids: [64, 128, 256],
            q: 0.9,
            jacobian_locations: 64,
            jacobian_levels: (3, 8),
            boundary_points: 16,
            spread_limit: 1.5,
            shrink_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub grid: usize,
    /// Pushed points per target cell, row-major in `(i, j)`.
    pub counts: Vec<u32>,
    pub c_q: f64,
}

/// Pushes the centers of an `m × m` grid, shifted by a seeded offset,
/// through `H` and measures how concentrated the image is.
pub fn push_grid(h: &HolonomyMap, m: usize, q: f64, seed: u64) -> Result<Histogram> {
    if m == 0 {
        return Err(Error::invalid("grid", "must be positive"));
    }
    let offset = stats::uniform_point(2, seed, m as u64);
    let cells: Vec<usize> = (0..m * m)
        .into_par_iter()
        .map(|k| {
            let x = [
                (k / m) as f64 + offset[0],
                (k % m) as f64 + offset[1],
            ]
            .map(|c| c / m as f64);
            let y = h.eval(&x)?;
            let i = ((y[0] * m as f64) as usize).min(m - 1);
            let j = ((y[1] * m as f64) as usize).min(m - 1);
            Ok(i * m + j)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u32; m * m];
    for c in cells {
        counts[c] += 1;
    }
    let mut sorted = counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let target = q * (m * m) as f64;
    let mut mass = 0.0;
    let mut used = 0;
    for c in &sorted {
        if mass >= target - 1e-9 {
            break;
        }
        mass += *c as f64;
        used += 1;
    }
    Ok(Histogram {
        grid: m,
        counts,
        c_q: used as f64 / (m * m) as f64,
    })
}

/// Area ratio of `H` on the square of side `r` centered at `x`.
fn area_ratio(h: &HolonomyMap, x: &[f64], r: f64, per_side: usize) -> Result<f64> {
    let center = h.eval(x)?;
    let mut boundary = Vec::with_capacity(4 * per_side);
    let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    for side in 0..4 {
        let a = corners[side];
        let b = corners[(side + 1) % 4];
        for k in 0..per_side {
            let s = k as f64 / per_side as f64;
            let p = [
                x[0] + 0.5 * r * (a[0] + s * (b[0] - a[0])),
                x[1] + 0.5 * r * (a[1] + s * (b[1] - a[1])),
            ];
            boundary.push(nearest_diff(&center, &h.eval(&p)?));
        }
    }
    let n = boundary.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let p = &boundary[i];
            let q = &boundary[(i + 1) % n];
            p[0] * q[1] - p[1] * q[0]
        })
        .sum();
    Ok(0.5 * twice.abs() / (r * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianLevel {
    pub side: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Largest `max(J_k / J_{k-1}, J_{k-1} / J_k)` over locations; `1` at
    /// the coarsest level.
    pub spread: f64,
}

pub const NORMAL_FORM_NOTE: &str =
    "only the measurable shadow is checked; the rotation normal form on center fibers is not extracted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcReport {
    pub t1: f64,
    pub t2: f64,
    pub seed: u64,
    pub q: f64,
    pub histograms: Vec<Histogram>,
    pub c_q: Vec<f64>,
    /// `c_q(m) / c_q(2m)` per refinement.
    pub shrink: Vec<f64>,
    pub jacobian: Vec<JacobianLevel>,
    pub verdict: AcVerdict,
    pub note: String,
}

pub fn absolute_continuity_probe(h: &HolonomyMap, seed: u64, cfg: &AcConfig) -> Result<AcReport> {
    if cfg.grids.iter().any(|&m| m < 64) {
        return Err(Error::invalid("grids", "grids must have at least 64 cells per side"));
    }
    let histograms = cfg
        .grids
        .iter()
        .map(|&m| push_grid(h, m, cfg.q, seed))
        .collect::<Result<Vec<_>>>()?;
    let c_q: Vec<f64> = histograms.iter().map(|h| h.c_q).collect();
    let shrink: Vec<f64> = c_q.windows(2).map(|w| w[0] / w[1]).collect();

    let (k0, k1) = cfg.jacobian_levels;
    let locations: Vec<Vec<f64>> = (0..cfg.jacobian_locations)
        .map(|i| stats::uniform_point(2, seed ^ 0xAC, i as u64))
        .collect();
    let ratios: Vec<Vec<f64>> = locations
        .par_iter()
        .map(|x| {
            (k0..=k1)
                .map(|k| area_ratio(h, x, 0.5f64.powi(k as i32), cfg.boundary_points))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let jacobian: Vec<JacobianLevel> = (0..=(k1 - k0) as usize)
        .map(|l| {
            let at: Vec<f64> = ratios.iter().map(|r| r[l]).collect();
            let spread = if l == 0 {
                1.0
            } else {
                ratios
                    .iter()
                    .map(|r| (r[l] / r[l - 1]).max(r[l - 1] / r[l]))
                    .fold(1.0, f64::max)
            };
            JacobianLevel {
                side: 0.5f64.powi((k0 as usize + l) as i32),
                min_ratio: at.iter().copied().fold(f64::INFINITY, f64::min),
                max_ratio: at.iter().copied().fold(0.0, f64::max),
                spread,
            }
        })
        .collect();
    let finest: Vec<f64> = jacobian.iter().rev().take(2).map(|l| l.spread).collect();
    let finest_stable = finest.iter().all(|&s| s <= cfg.spread_limit)
        && finest.windows(2).all(|w| w[0] <= w[1]);
    let verdict = if shrink.iter().all(|&s| s >= cfg.shrink_factor) {
        AcVerdict::SingularLike
    } else if finest_stable {
        AcVerdict::AcLike
    } else {
        AcVerdict::Inconclusive
    };
    Ok(AcReport {
        t1: h.t1,
        t2: h.t2,
        seed,
        q: cfg.q,
        histograms,
        c_q,
        shrink,
        jacobian,
        verdict,
        note: NORMAL_FORM_NOTE.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectionConfig {
    pub leaves: usize,
    pub length: usize,
    pub seed: u64,
    /// Observable `φ(x) = Σ_i p_i(x_i)`, one profile per coordinate.
    pub observable: Vec<TrigProfile>,
}

impl Default for IntersectionConfig {
    fn default() -> Self {
        IntersectionConfig {
            leaves: 40,
            length: 20_000,
            seed: 0,
            observable: vec![TrigProfile::unit_cosine(1), TrigProfile::unit_cosine(1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafAverages {
    pub anchor: Vec<f64>,
    pub averages: Vec<f64>,
    pub stderr: Vec<f64>,
    pub spread: f64,
    pub noise: f64,
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub params: Vec<f64>,
    pub leaves: Vec<LeafAverages>,
    /// Fraction of leaves whose spread exceeds three single-orbit
    /// standard errors.
    pub separated_fraction: f64,
}

/// Birkhoff averages of `φ` along the `γ_t`-orbits of the points where a
/// center leaf meets each fiber. Orbits are shadowed through the
/// conjugacies so that all fibers follow one orbit of `L`.
pub fn unique_intersection_indicator(
    family: &SolvedFamily,
    cfg: &IntersectionConfig,
) -> Result<IntersectionReport> {
    let d = family.family.linear.dim();
    if cfg.observable.len() != d {
        return Err(Error::invalid(
            "observable",
            format!("{} profiles for dimension {d}", cfg.observable.len()),
        ));
    }
    if cfg.length < 2 * stats::DEFAULT_BATCHES {
        return Err(Error::invalid("length", "orbit too short for batch means"));
    }
    let phi = |x: &[f64]| -> f64 { cfg.observable.iter().zip(x).map(|(p, &c)| p.eval(c)).sum() };
    let leaves = (0..cfg.leaves)
        .into_par_iter()
        .map(|i| {
            let y = stats::uniform_point(d, cfg.seed, i as u64);
            let mut averages = Vec::with_capacity(family.len());
            let mut stderr = Vec::with_capacity(family.len());
            for sol in &family.solutions {
                let (xs, _) = sol.inverse_orbit(&y, cfg.length - 1)?;
                let values: Vec<f64> = xs.iter().map(|x| phi(x)).collect();
                let (mean, se) = stats::batch_means(&values, stats::DEFAULT_BATCHES);
                averages.push(mean);
                stderr.push(se);
            }
            let hi = averages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = averages.iter().copied().fold(f64::INFINITY, f64::min);
            let noise = stderr.iter().sum::<f64>() / stderr.len() as f64;
            let spread = hi - lo;
            Ok(LeafAverages {
                anchor: family.solutions[0].inverse(&y)?,
                averages,
                stderr,
                spread,
                noise,
                separated: spread > 3.0 * noise,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let separated = leaves.iter().filter(|l| l.separated).count();
    Ok(IntersectionReport {
        params: family.family.grid.clone(),
        separated_fraction: if leaves.is_empty() {
            0.0
        } else {
            separated as f64 / leaves.len() as f64
        },
        leaves,
    })
}

/// Rows `(leaf_id, t, birkhoff_avg)`.
pub fn write_intersection_csv<W: Write>(out: W, report: &IntersectionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["leaf_id", "t", "birkhoff_avg"]).map_err(csv_error)?;
    for (i, leaf) in report.leaves.iter().enumerate() {
        for (t, a) in report.params.iter().zip(&leaf.averages) {
            w.write_record([i.to_string(), format!("{t:.17e}"), format!("{a:.17e}")])
                .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| csv_error(e.into()))?;
    Ok(())
}

/// Rows `(cell_i, cell_j, pushed_mass)` for non-empty cells.
pub fn write_histogram_csv<W: Write>(out: W, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_i", "cell_j", "pushed_mass"]).map_err(csv_error)?;
    let total = (hist.grid * hist.grid) as f64;
    for (k, &c) in hist.counts.iter().enumerate() {
        if c > 0 {
            w.write_record([
                (k / hist.grid).to_string(),
                (k % hist.grid).to_string(),
                format!("{:.17e}", c as f64 / total),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| csv_error(e.into()))?;
    Ok(())
}
