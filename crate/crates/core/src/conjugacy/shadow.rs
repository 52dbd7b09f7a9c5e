use serde::{Deserialize, Serialize};

use super::ConjugacySolution;
use crate::algebra::wrap_vec;
use crate::error::{Error, Result};
use crate::linalg::{self, BandMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    /// Steps kept on each side of the shadowed index; `0` picks a length from
    /// the weakest linear exponent.
    pub margin: usize,
    /// Interior length of one window when shadowing long orbits.
    pub chunk: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            margin: 0,
            chunk: 200,
            newton_tol: 1e-14,
            max_newton: 40,
        }
    }
}

const MARGIN_DECADES: f64 = 16.0;
const MAX_MARGIN: usize = 2000;

impl ConjugacySolution {
    fn shadow_margin(&self) -> usize {
        if self.config.shadow.margin > 0 {
            return self.config.shadow.margin;
        }
        let weakest = self
            .linear
            .exponents()
            .iter()
            .map(|e| e.abs())
            .fold(f64::INFINITY, f64::min);
        ((MARGIN_DECADES * std::f64::consts::LN_10 / weakest).ceil() as usize).clamp(8, MAX_MARGIN)
    }

    /// Solves for offsets `w_k` such that `z_k + w_k` is an orbit of `f`,
    /// where `z` is a (pseudo-)orbit of `L` with wrapped points.
    fn shadow_window(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        let spec = &self.linear.spectrum;
        let steps = z.len() - 1;
        let n = z.len() * d;
        let s = self.stable.len();
        let mut w = vec![vec![0.0; d]; z.len()];
        let cfg = &self.config.shadow;
        for _ in 0..cfg.max_newton {
            let mut band = BandMatrix::zeros(n, 2 * d, 2 * d);
            let mut rhs = vec![0.0; n];
            for (r, &j) in self.stable.iter().enumerate() {
                for c in 0..d {
                    band.set(r, c, spec.dual[j][c]);
                }
                rhs[r] = -linalg::dot(&spec.dual[j], &w[0]);
            }
            for k in 0..steps {
                let x = linalg::add(&z[k], &w[k]);
                let mut fx = x.clone();
                let mut cols: Vec<Vec<f64>> = (0..d)
                    .map(|j| {
                        let mut e = vec![0.0; d];
                        e[j] = 1.0;
                        e
                    })
                    .collect();
                self.f.step(&mut fx, &mut cols);
                for i in 0..d {
                    let row = s + k * d + i;
                    let next = z[k + 1][i] + w[k + 1][i];
                    let mut delta = next - fx[i];
                    delta -= delta.round();
                    rhs[row] = -delta;
                    band.set(row, (k + 1) * d + i, 1.0);
                    for (j, col) in cols.iter().enumerate() {
                        band.set(row, k * d + j, -col[i]);
                    }
                }
            }
            for (r, &j) in self.unstable.iter().enumerate() {
                let row = s + steps * d + r;
                for c in 0..d {
                    band.set(row, steps * d + c, spec.dual[j][c]);
                }
                rhs[row] = -linalg::dot(&spec.dual[j], &w[steps]);
            }
            let delta = band
                .solve(rhs)
                .ok_or_else(|| Error::NewtonDiverged("singular shadowing system".into()))?;
            let size = linalg::norm_inf(&delta);
            for (k, wk) in w.iter_mut().enumerate() {
                for i in 0..d {
                    wk[i] += delta[k * d + i];
                }
            }
            if !size.is_finite() || w.iter().any(|wk| linalg::norm_inf(wk) > 1.0) {
                return Err(Error::NewtonDiverged(
                    "shadowing offsets left the unit ball".into(),
                ));
            }
            if size <= cfg.newton_tol {
                return Ok(w);
            }
        }
        Err(Error::NewtonDiverged(format!(
            "shadowing did not converge in {} iterations",
            cfg.max_newton
        )))
    }

    /// `h⁻¹(y)`, reduced mod 1.
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let m = self.shadow_margin();
        let mut z = vec![wrap_vec(y)];
        for _ in 0..m {
            let prev = self.linear.apply_inverse(&z[0]);
            z.insert(0, prev);
        }
        for _ in 0..m {
            let next = self.linear.apply(z.last().expect("non-empty"));
            z.push(next);
        }
        let w = self.shadow_window(&z)?;
        Ok(wrap_vec(&linalg::add(&z[m], &w[m])))
    }

    /// Orbit `x_k ≈ h⁻¹(z_k)` of `f` for `k = 0..=n`, shadowing the
    /// pseudo-orbit `z` of `L` starting at `y` (both returned, wrapped).
    pub fn inverse_orbit(&self, y: &[f64], n: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let m = self.shadow_margin();
        let chunk = self.config.shadow.chunk.max(1);
        let mut z = vec![wrap_vec(y)];
        for _ in 0..m {
            let prev = self.linear.apply_inverse(&z[0]);
            z.insert(0, prev);
        }
        while z.len() < n + 1 + 2 * m {
            let next = self.linear.apply(z.last().expect("non-empty"));
            z.push(next);
        }
        let mut xs = Vec::with_capacity(n + 1);
        let mut start = 0;
        while start <= n {
            let len = chunk.min(n + 1 - start);
            let window = &z[start..start + len + 2 * m];
            let w = self.shadow_window(window)?;
            for k in 0..len {
                xs.push(wrap_vec(&linalg::add(&window[m + k], &w[m + k])));
            }
            start += len;
        }
        Ok((xs, z[m..m + n + 1].to_vec()))
    }
}
