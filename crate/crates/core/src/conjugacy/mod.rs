//! The conjugacy `h = id + u` with `h ∘ f = L ∘ h`, its inverse by orbit
//! shadowing, and the rigidity diagnostics built on it.

mod diagnostics;
mod periodic;
mod shadow;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{
    b3_ratio_series, leaf_jacobian, leafwise_derivative_probe, run_diagnostics, write_b3_csv,
    write_probe_csv, Agreement, B3Series, DerivativeProbe, DiagnosticsConfig, ExponentGap,
    FoliationDiagnostics, FoliationVerdicts, JacobianStats, PeriodicProbe, RigidityDiagnostics,
    Thresholds, Verdict, B1_STATUS,
};
pub(crate) use periodic::cycle_log_multipliers;
pub use periodic::{periodic_data, PeriodicComparison, PeriodicFailure, PeriodicReport, MAX_PERIOD};
pub use shadow::ShadowConfig;

use crate::algebra::{torus_distance, wrap_vec, ToralAutomorphism};
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::SmoothTorusMap;
use crate::stats;

pub const MAX_SERIES_TERMS: usize = 10_000;
const MEMO_CAPACITY: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugacyConfig {
    /// Required residual `sup d(h(f(x)), L(h(x)))` on the test set.
    pub tol: f64,
    pub test_points: usize,
    pub seed: u64,
    pub memo: bool,
    pub shadow: ShadowConfig,
}

impl Default for ConjugacyConfig {
    fn default() -> Self {
        ConjugacyConfig {
            tol: 1e-8,
            test_points: 1000,
            seed: 0,
            memo: true,
            shadow: ShadowConfig::default(),
        }
    }
}

type Memo = RwLock<HashMap<Vec<u64>, Vec<f64>>>;

/// Evaluable semi-conjugacy `h(x) = x + u(x)` isotopic to the identity.
#[derive(Debug, Clone)]
pub struct ConjugacySolution {
    pub f: SmoothTorusMap,
    pub linear: ToralAutomorphism,
    /// Number of terms kept on each side of the series.
    pub terms: usize,
    pub tail_bound: f64,
    pub residual: f64,
    pub config: ConjugacyConfig,
    unstable: Vec<usize>,
    stable: Vec<usize>,
    memo: Option<Arc<Memo>>,
}

/// Bound on `Σ_{n>N} (‖L^{-(n+1)} π_u‖ + ‖L^{n-1} π_s‖)` per unit of `‖p̃‖`.
fn tail_factor(l: &ToralAutomorphism, n: usize) -> f64 {
    let spec = &l.spectrum;
    spec.pairs
        .iter()
        .zip(&spec.dual)
        .map(|(pair, dual)| {
            let a = pair.value.abs();
            let w = linalg::norm(dual);
            if a > 1.0 {
                w * a.powi(-(n as i32 + 2)) / (1.0 - 1.0 / a)
            } else {
                w * a.powi(n as i32) / (1.0 - a)
            }
        })
        .sum()
}

pub fn solve_conjugacy(
    f: &SmoothTorusMap,
    l: &ToralAutomorphism,
    cfg: &ConjugacyConfig,
) -> Result<ConjugacySolution> {
    if f.linear_part() != l.matrix {
        return Err(Error::Precondition(
            "map is not isotopic to the given automorphism".into(),
        ));
    }
    if l.spectrum.dual.len() != l.dim() {
        return Err(Error::Precondition("eigenbasis is singular".into()));
    }
    let p_norm = f.c1_distance_bound() * (l.dim() as f64).sqrt();
    let target = 0.1 * cfg.tol;
    let mut terms = 0;
    while p_norm * tail_factor(l, terms) > target {
        terms += 1;
        if terms > MAX_SERIES_TERMS {
            return Err(Error::NoConvergence(format!(
                "series tail above {target:e} after {MAX_SERIES_TERMS} terms"
            )));
        }
    }
    let (unstable, stable): (Vec<usize>, Vec<usize>) =
        (0..l.dim()).partition(|&i| l.is_expanding(i));
    let mut sol = ConjugacySolution {
        f: f.clone(),
        linear: l.clone(),
        terms,
        tail_bound: p_norm * tail_factor(l, terms),
        residual: f64::NAN,
        config: *cfg,
        unstable,
        stable,
        memo: cfg.memo.then(|| Arc::new(RwLock::new(HashMap::new()))),
    };
    let d = l.dim();
    let residuals: Vec<f64> = (0..cfg.test_points)
        .into_par_iter()
        .map(|i| {
            let x = stats::uniform_point(d, cfg.seed, i as u64);
            torus_distance(&sol.eval(&f.eval(&x)), &l.apply(&sol.eval(&x)))
        })
        .collect();
    sol.residual = residuals.into_iter().fold(0.0, f64::max);
    if !(sol.residual <= cfg.tol) {
        return Err(Error::NoConvergence(format!(
            "conjugacy residual {:e} above {:e}",
            sol.residual, cfg.tol
        )));
    }
    Ok(sol)
}

impl ConjugacySolution {
    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn compute_u(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let spec = &self.linear.spectrum;
        let mut coords = vec![0.0; d];
        let mut y = x.to_vec();
        for n in 0..=self.terms {
            let mut fy = y.clone();
            self.f.step(&mut fy, &mut []);
            let p = linalg::sub(&fy, &self.linear.apply_lift(&y));
            for &j in &self.unstable {
                let lam = spec.pairs[j].value;
                coords[j] += spec.coordinate(j, &p) * lam.powi(-(n as i32 + 1));
            }
            y = wrap_vec(&fy);
        }
        let mut y = x.to_vec();
        for n in 1..=self.terms {
            self.f.step_inverse(&mut y, &mut []);
            let p = linalg::sub(&self.f.eval_lift(&y), &self.linear.apply_lift(&y));
            for &j in &self.stable {
                let lam = spec.pairs[j].value;
                coords[j] -= spec.coordinate(j, &p) * lam.powi(n as i32 - 1);
            }
            y = wrap_vec(&y);
        }
        let mut u = vec![0.0; d];
        for (j, c) in coords.iter().enumerate() {
            for (ui, e) in u.iter_mut().zip(&spec.pairs[j].vector) {
                *ui += c * e;
            }
        }
        u
    }

    /// `u(x)`, periodic in `x`.
    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        let x = wrap_vec(x);
        let Some(memo) = &self.memo else {
            return self.compute_u(&x);
        };
        let key: Vec<u64> = x.iter().map(|c| c.to_bits()).collect();
        if let Some(u) = memo.read().expect("memo lock").get(&key) {
            return u.clone();
        }
        let u = self.compute_u(&x);
        let mut w = memo.write().expect("memo lock");
        if w.len() >= MEMO_CAPACITY {
            w.clear();
        }
        w.insert(key, u.clone());
        u
    }

    /// `h(x)` reduced mod 1.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let x = wrap_vec(x);
        wrap_vec(&linalg::add(&x, &self.displacement(&x)))
    }

    /// `h(x) - h(x0)` for nearby points, without wrapping.
    pub fn difference(&self, x0: &[f64], x: &[f64]) -> Vec<f64> {
        let dx = crate::algebra::nearest_diff(&wrap_vec(x0), &wrap_vec(x));
        linalg::add(&dx, &linalg::sub(&self.displacement(x), &self.displacement(x0)))
    }

    /// `sup_x d(h(x), g(x))` over `points`.
    pub fn distance_to(&self, g: &SmoothTorusMap, points: &[Vec<f64>]) -> f64 {
        points
            .par_iter()
            .map(|x| torus_distance(&self.eval(x), &g.eval(x)))
            .reduce(|| 0.0, f64::max)
    }

    pub fn memo_len(&self) -> usize {
        self.memo
            .as_ref()
            .map(|m| m.read().expect("memo lock").len())
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::analyze_matrix;
    use crate::maps::{make_conjugated_linear, make_shear_perturbation, ShearFactor, TrigProfile};

    fn cat() -> ToralAutomorphism {
        analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap()
    }

    fn small_cfg() -> ConjugacyConfig {
        ConjugacyConfig {
            test_points: 100,
            ..ConjugacyConfig::default()
        }
    }

    #[test]
    fn linear_map_gives_identity() {
        let sol = solve_conjugacy(&SmoothTorusMap::linear(&cat()), &cat(), &small_cfg()).unwrap();
        assert_eq!(sol.residual, 0.0);
        assert_eq!(sol.displacement(&[0.3, 0.8]), vec![0.0, 0.0]);
    }

    #[test]
    fn recovers_inverse_generator() {
        let s = ShearFactor::new(0, 1, 0.05, TrigProfile::unit_sine(1));
        let f = make_conjugated_linear(&cat(), &[s], 1.0).unwrap();
        let sol = solve_conjugacy(&f, &cat(), &small_cfg()).unwrap();
        let g_inv = f.generator().unwrap().inverse();
        let pts: Vec<Vec<f64>> = (0..200).map(|i| stats::uniform_point(2, 9, i)).collect();
        assert!(sol.distance_to(&g_inv, &pts) <= 1e-6);
    }

    #[test]
    fn perturbed_residual_and_periodicity() {
        let s = ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1));
        let f = make_shear_perturbation(&cat(), &[s], 1.0).unwrap();
        let sol = solve_conjugacy(&f, &cat(), &small_cfg()).unwrap();
        assert!(sol.residual <= 1e-8);
        let x = [0.37, 0.21];
        let u = sol.displacement(&x);
        assert!(linalg::norm(&u) > 1e-4);
        for shift in [[1.0, 0.0], [0.0, 1.0]] {
            let u2 = sol.displacement(&linalg::add(&x, &shift));
            assert!(linalg::norm(&linalg::sub(&u, &u2)) <= 1e-12);
        }
    }

    #[test]
    fn memo_is_transparent() {
        let s = ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1));
        let f = make_shear_perturbation(&cat(), &[s], 1.0).unwrap();
        let warm = solve_conjugacy(&f, &cat(), &small_cfg()).unwrap();
        let cold = solve_conjugacy(&f, &cat(), &ConjugacyConfig { memo: false, ..small_cfg() })
            .unwrap();
        let x = [0.123, 0.456];
        let a = warm.eval(&x);
        assert_eq!(a, warm.eval(&x));
        assert_eq!(a, cold.eval(&x));
        assert!(warm.memo_len() > 0);
    }
}
