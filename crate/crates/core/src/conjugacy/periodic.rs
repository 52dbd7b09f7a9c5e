use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConjugacySolution;
use crate::algebra::{periodic_points, torus_distance, wrap_vec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::SmoothTorusMap;

pub const MAX_PERIOD: u32 = 12;
const NEWTON_TOL: f64 = 1e-14;
const MAX_NEWTON: usize = 40;
const MAX_CYCLES: usize = 400;
const SEED_MATCH: f64 = 1e-6;

/// Periodic orbit of `f` matched with the `L`-orbit it is conjugate to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicComparison {
    pub period: u32,
    /// Rational periodic point of `L` used as the seed.
    pub seed: Vec<f64>,
    /// The periodic orbit of `f`, starting at the point matched with `seed`.
    pub orbit: Vec<Vec<f64>>,
    /// `d(h(x), seed)` at the orbit's first point.
    pub seed_defect: f64,
    /// `log|μ_σ|` of `Df^p` along each bundle, ascending.
    pub log_multipliers_f: Vec<f64>,
    pub log_multipliers_l: Vec<f64>,
    /// `|μ_σ(f) / μ_σ(L) - 1|` per bundle.
    pub relative_gaps: Vec<f64>,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicFailure {
    pub period: u32,
    pub seed: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicReport {
    pub max_period: u32,
    pub orbits: Vec<PeriodicComparison>,
    pub failures: Vec<PeriodicFailure>,
    pub max_gap: f64,
}

impl PeriodicReport {
    /// Orbit with the largest multiplier gap.
    pub fn worst(&self) -> Option<&PeriodicComparison> {
        self.orbits
            .iter()
            .max_by(|a, b| a.max_gap.total_cmp(&b.max_gap))
    }
}

/// One representative per `L`-orbit of minimal period `p`, at most `cap`.
fn orbit_seeds(sol: &ConjugacySolution, p: u32, cap: usize) -> Result<Vec<Vec<f64>>> {
    let pts = periodic_points(&sol.linear.matrix, p)?;
    let den = pts.first().map(|q| q.denominator).unwrap_or(1);
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut seeds = Vec::new();
    for q in pts.iter().filter(|q| q.period == p) {
        if seeds.len() >= cap {
            break;
        }
        if seen.contains(&q.numerators) {
            continue;
        }
        let mut num = q.numerators.clone();
        for _ in 0..p {
            seen.insert(num.clone());
            num = (0..num.len())
                .map(|i| {
                    let s: i128 = (0..num.len())
                        .map(|j| sol.linear.matrix.get(i, j) as i128 * num[j] as i128)
                        .sum();
                    s.rem_euclid(den as i128) as i64
                })
                .collect();
        }
        seeds.push(q.point.clone());
    }
    Ok(seeds)
}

/// Multiple-shooting Newton for `x_{i+1} = f(x_i)` (indices mod `p`).
fn shoot(f: &SmoothTorusMap, start: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let d = f.dim();
    let p = start.len();
    let n = p * d;
    let mut xs = start;
    for _ in 0..MAX_NEWTON {
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for i in 0..p {
            let next = (i + 1) % p;
            let mut fx = xs[i].clone();
            let mut cols: Vec<Vec<f64>> = (0..d)
                .map(|j| {
                    let mut e = vec![0.0; d];
                    e[j] = 1.0;
                    e
                })
                .collect();
            f.step(&mut fx, &mut cols);
            for r in 0..d {
                let mut delta = xs[next][r] - fx[r];
                delta -= delta.round();
                rhs[i * d + r] = -delta;
                jac[(i * d + r, next * d + r)] += 1.0;
                for (c, col) in cols.iter().enumerate() {
                    jac[(i * d + r, i * d + c)] -= col[r];
                }
            }
        }
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NewtonDiverged("singular periodic-orbit system".into()))?;
        let size = step.amax();
        if !size.is_finite() || size > 0.5 {
            return Err(Error::NewtonDiverged(format!("Newton step of size {size:e}")));
        }
        for (i, x) in xs.iter_mut().enumerate() {
            for r in 0..d {
                x[r] += step[i * d + r];
            }
            *x = wrap_vec(x);
        }
        if size <= NEWTON_TOL {
            return Ok(xs);
        }
    }
    Err(Error::NewtonDiverged(format!(
        "periodic orbit did not converge in {MAX_NEWTON} iterations"
    )))
}

/// `log|μ_σ|` of the cycle product of Jacobians, ascending, by repeated QR
/// sweeps around the orbit until the per-cycle growth rates settle.
pub(crate) fn cycle_log_multipliers(f: &SmoothTorusMap, orbit: &[Vec<f64>]) -> Vec<f64> {
    let d = f.dim();
    let mut frame: Vec<Vec<f64>> = f
        .spectrum()
        .pairs
        .iter()
        .rev()
        .map(|p| p.vector.clone())
        .collect();
    let mut previous = vec![f64::INFINITY; d];
    let mut logs = vec![0.0; d];
    for _ in 0..MAX_CYCLES {
        logs = vec![0.0; d];
        for x in orbit {
            let mut y = x.clone();
            f.step(&mut y, &mut frame);
            for (l, r) in logs.iter_mut().zip(linalg::mgs(&mut frame)) {
                *l += r.ln();
            }
        }
        let change = logs
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        previous = logs.clone();
        if change <= 1e-15 * orbit.len() as f64 {
            break;
        }
    }
    logs.reverse();
    logs
}

fn compare_orbit(sol: &ConjugacySolution, seed: &[f64], p: u32) -> Result<PeriodicComparison> {
    let f = &sol.f;
    let mut start = vec![seed.to_vec()];
    for _ in 1..p {
        let next = sol.linear.apply(start.last().expect("non-empty"));
        start.push(next);
    }
    let direct = shoot(f, start.clone());
    let orbit = match direct {
        Ok(o) if torus_distance(&sol.eval(&o[0]), seed) <= SEED_MATCH => o,
        _ => {
            let (xs, _) = sol.inverse_orbit(seed, p as usize - 1)?;
            shoot(f, xs)?
        }
    };
    let seed_defect = torus_distance(&sol.eval(&orbit[0]), seed);
    let log_multipliers_f = cycle_log_multipliers(f, &orbit);
    let log_multipliers_l: Vec<f64> = sol
        .linear
        .exponents()
        .iter()
        .map(|e| e * p as f64)
        .collect();
    let relative_gaps: Vec<f64> = log_multipliers_f
        .iter()
        .zip(&log_multipliers_l)
        .map(|(a, b)| (a - b).exp_m1().abs())
        .collect();
    let max_gap = relative_gaps.iter().copied().fold(0.0, f64::max);
    Ok(PeriodicComparison {
        period: p,
        seed: seed.to_vec(),
        orbit,
        seed_defect,
        log_multipliers_f,
        log_multipliers_l,
        relative_gaps,
        max_gap,
    })
}

/// Periodic orbits of `f` up to period `max_period`, located by Newton from
/// the rational periodic orbits of `L`, with bundle multipliers compared.
pub fn periodic_data(
    sol: &ConjugacySolution,
    max_period: u32,
    orbits_per_period: usize,
) -> Result<PeriodicReport> {
    if max_period == 0 || max_period > MAX_PERIOD {
        return Err(Error::invalid(
            "max_period",
            format!("must lie in 1..={MAX_PERIOD}"),
        ));
    }
    let mut jobs = Vec::new();
    for p in 1..=max_period {
        for seed in orbit_seeds(sol, p, orbits_per_period)? {
            jobs.push((p, seed));
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(p, seed)| compare_orbit(sol, seed, *p))
        .collect();
    let mut orbits = Vec::new();
    let mut failures = Vec::new();
    for ((p, seed), r) in jobs.into_iter().zip(results) {
        match r {
            Ok(c) => orbits.push(c),
            Err(e) => failures.push(PeriodicFailure {
                period: p,
                seed,
                message: e.to_string(),
            }),
        }
    }
    let max_gap = orbits.iter().map(|o| o.max_gap).fold(0.0, f64::max);
    Ok(PeriodicReport {
        max_period,
        orbits,
        failures,
        max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::analyze_matrix;
    use crate::conjugacy::{solve_conjugacy, ConjugacyConfig};
    use crate::maps::{make_conjugated_linear, make_shear_perturbation, ShearFactor, TrigProfile};

    fn cat() -> crate::algebra::ToralAutomorphism {
        analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap()
    }

    fn solve(f: &SmoothTorusMap) -> ConjugacySolution {
        let cfg = ConjugacyConfig {
            test_points: 50,
            ..ConjugacyConfig::default()
        };
        solve_conjugacy(f, &cat(), &cfg).unwrap()
    }

    #[test]
    fn linear_gaps_vanish() {
        let report = periodic_data(&solve(&SmoothTorusMap::linear(&cat())), 4, 8).unwrap();
        assert!(report.failures.is_empty());
        assert!(!report.orbits.is_empty());
        assert!(report.max_gap <= 1e-12, "{}", report.max_gap);
    }

    #[test]
    fn conjugated_map_preserves_multipliers() {
        let s = ShearFactor::new(0, 1, 0.05, TrigProfile::unit_sine(1));
        let f = make_conjugated_linear(&cat(), &[s], 1.0).unwrap();
        let report = periodic_data(&solve(&f), 5, 8).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert!(report.max_gap <= 1e-8, "{}", report.max_gap);
        assert!(report.orbits.iter().all(|o| o.seed_defect <= 1e-8));
    }

    #[test]
    fn perturbed_map_moves_multipliers() {
        let s = ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1));
        let f = make_shear_perturbation(&cat(), &[s], 1.0).unwrap();
        let report = periodic_data(&solve(&f), 3, 8).unwrap();
        assert!(report.failures.is_empty());
        assert!(report.max_gap >= 1e-3);
        let fixed = &report.orbits[0];
        assert_eq!(fixed.period, 1);
        assert!(torus_distance(&fixed.orbit[0], &[0.0, 0.0]) <= 1e-12);
    }
}
