//! Evaluable smooth torus maps with exact Jacobians and inverses: linear
//! models, shear perturbations, smooth conjugates of linear maps, skew
//! products over T², and one-parameter families.
//!
//! Every map is a composition of factors, each either an integer automorphism
//! or a shear `x ↦ x + ε φ(x_j) e_i` with a trigonometric profile. Shears are
//! unit triangular, so every map preserves volume exactly and its inverse is
//! the reversed composition of closed-form factor inverses.

mod document;
mod factor;
mod katok;
mod product;
mod trig;

use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use document::{FiberPerturbation, FiberTerm, MapDocument};
pub use factor::ShearFactor;
pub(crate) use factor::Factor;
pub use katok::{make_katok_family, uniform_grid, ExponentProfile, KatokFamily};
pub use product::SkewProductMap;
pub use trig::{Harmonic, TrigProfile};

use crate::algebra::{self, IntMatrix, LinearSpectrum, ToralAutomorphism};
use crate::error::{Error, Result};
use crate::linalg;

/// Default cap on the certified C¹ distance to the linear part.
pub const DEFAULT_PERTURBATION_THRESHOLD: f64 = 1.0;

#[derive(Debug)]
struct Inner {
    dim: usize,
    /// `f = factors[0] ∘ factors[1] ∘ …`; the last factor acts first.
    factors: Vec<Factor>,
    inverse_factors: Vec<Factor>,
    linear: IntMatrix,
    spectrum: LinearSpectrum,
    model: Option<ToralAutomorphism>,
    c1_distance_bound: f64,
    generator: Option<SmoothTorusMap>,
    fingerprint: String,
}

/// An evaluable diffeomorphism of `T^d`, cheap to clone and shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct SmoothTorusMap {
    inner: Arc<Inner>,
    inverted: bool,
}

impl SmoothTorusMap {
    pub(crate) fn from_factors(dim: usize, factors: Vec<Factor>) -> Result<Self> {
        let mut linear = IntMatrix::identity(dim);
        for f in &factors {
            if let Factor::Shear(s) = f {
                s.validate(dim)?;
            }
            if let Some(m) = f.linear_part() {
                if m.dim() != dim {
                    return Err(Error::invalid("linear", "dimension mismatch"));
                }
                linear = linear.mul(m);
            }
        }
        let spectrum = LinearSpectrum::of(&linear)?;
        let model = algebra::analyze_matrix(&linear).ok();
        let c1_distance_bound = c1_bound(dim, &factors);
        let inverse_factors = factors.iter().rev().map(Factor::inverted).collect();
        let fingerprint = {
            let json = serde_json::to_string(&factors).expect("factors serialize");
            let mut h = Sha256::new();
            h.update(dim.to_le_bytes());
            h.update(json.as_bytes());
            format!("{:x}", h.finalize())
        };
        Ok(SmoothTorusMap {
            inner: Arc::new(Inner {
                dim,
                factors,
                inverse_factors,
                linear,
                spectrum,
                model,
                c1_distance_bound,
                generator: None,
                fingerprint,
            }),
            inverted: false,
        })
    }

    fn with_generator(self, g: SmoothTorusMap) -> Self {
        let mut inner = Arc::try_unwrap(self.inner).expect("fresh map is uniquely owned");
        inner.generator = Some(g);
        SmoothTorusMap {
            inner: Arc::new(inner),
            inverted: self.inverted,
        }
    }

    /// The linear automorphism itself.
    pub fn linear(l: &ToralAutomorphism) -> Self {
        Self::from_factors(l.dim(), vec![Factor::linear(l.matrix.clone()).unwrap()])
            .expect("automorphism is a valid map")
    }

    /// A composition of shears (isotopic to the identity).
    pub fn shear_composition(dim: usize, shears: &[ShearFactor]) -> Result<Self> {
        Self::from_factors(dim, shears.iter().cloned().map(Factor::Shear).collect())
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub(crate) fn raw_factors(&self) -> &[Factor] {
        if self.inverted {
            &self.inner.inverse_factors
        } else {
            &self.inner.factors
        }
    }

    fn inverse_factors(&self) -> &[Factor] {
        if self.inverted {
            &self.inner.factors
        } else {
            &self.inner.inverse_factors
        }
    }

    /// The inverse map, sharing storage with `self`.
    pub fn inverse(&self) -> SmoothTorusMap {
        SmoothTorusMap {
            inner: Arc::clone(&self.inner),
            inverted: !self.inverted,
        }
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    /// Integer matrix of the lift's linear part.
    pub fn linear_part(&self) -> IntMatrix {
        if self.inverted {
            self.inner
                .linear
                .unimodular_inverse()
                .expect("linear part is unimodular")
        } else {
            self.inner.linear.clone()
        }
    }

    /// Hyperbolic linear model, when the linear part is hyperbolic.
    pub fn linear_model(&self) -> Option<ToralAutomorphism> {
        let m = self.inner.model.as_ref()?;
        if self.inverted {
            algebra::analyze_matrix(&m.inverse).ok()
        } else {
            Some(m.clone())
        }
    }

    /// Spectral data of the linear part (hyperbolic or not).
    pub fn spectrum(&self) -> LinearSpectrum {
        if self.inverted {
            LinearSpectrum::of(&self.linear_part()).expect("inverse shares a real spectrum")
        } else {
            self.inner.spectrum.clone()
        }
    }

    pub fn c1_distance_bound(&self) -> f64 {
        self.inner.c1_distance_bound
    }

    /// Stored conjugating map `g` for maps built as `g ∘ L ∘ g⁻¹`.
    pub fn generator(&self) -> Option<&SmoothTorusMap> {
        self.inner.generator.as_ref()
    }

    /// Content hash of the factor list.
    pub fn fingerprint(&self) -> String {
        if self.inverted {
            format!("{}-inv", self.inner.fingerprint)
        } else {
            self.inner.fingerprint.clone()
        }
    }

    /// Advances a lift in place and pushes tangent vectors through `Df`.
    #[inline]
    pub fn step(&self, x: &mut [f64], vecs: &mut [Vec<f64>]) {
        for f in self.raw_factors().iter().rev() {
            f.step(x, vecs);
        }
    }

    /// Same as [`step`](Self::step) for the inverse map.
    #[inline]
    pub fn step_inverse(&self, y: &mut [f64], vecs: &mut [Vec<f64>]) {
        for f in self.inverse_factors().iter().rev() {
            f.step(y, vecs);
        }
    }

    pub fn eval_lift(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.step(&mut y, &mut []);
        y
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        algebra::wrap_vec(&self.eval_lift(x))
    }

    pub fn inverse_lift(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        self.step_inverse(&mut x, &mut []);
        x
    }

    pub fn inverse_eval(&self, y: &[f64]) -> Vec<f64> {
        algebra::wrap_vec(&self.inverse_lift(y))
    }

    /// `f^n(x)` reduced mod 1 (negative `n` iterates the inverse).
    pub fn iterate(&self, x: &[f64], n: i64) -> Vec<f64> {
        let mut y = x.to_vec();
        for _ in 0..n.unsigned_abs() {
            if n > 0 {
                self.step(&mut y, &mut []);
            } else {
                self.step_inverse(&mut y, &mut []);
            }
            y = algebra::wrap_vec(&y);
        }
        y
    }

    pub fn jac_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut vs = [v.to_vec()];
        self.step(&mut y, &mut vs);
        let [out] = vs;
        out
    }

    pub fn inverse_jac_apply(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        let mut vs = [v.to_vec()];
        self.step_inverse(&mut x, &mut vs);
        let [out] = vs;
        out
    }

    /// `Df(x)` as a row-major `d × d` matrix.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut cols: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                e
            })
            .collect();
        let mut y = x.to_vec();
        self.step(&mut y, &mut cols);
        let mut m = vec![0.0; d * d];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..d {
                m[i * d + j] = c[i];
            }
        }
        m
    }

    pub fn inverse_jacobian(&self, y: &[f64]) -> Vec<f64> {
        self.inverse().jacobian(y)
    }

    pub fn det_jacobian(&self, x: &[f64]) -> f64 {
        linalg::to_dmatrix(&self.jacobian(x), self.dim()).determinant()
    }

    /// `f(x + dx) - f(x)` on lifts, without cancellation for small `dx`.
    pub fn difference(&self, x: &[f64], dx: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut d = dx.to_vec();
        for f in self.raw_factors().iter().rev() {
            f.step_difference(&mut y, &mut d);
        }
        d
    }

    /// In-place variant advancing both the base lift and the offset.
    #[inline]
    pub fn step_difference(&self, x: &mut [f64], dx: &mut [f64]) {
        for f in self.raw_factors().iter().rev() {
            f.step_difference(x, dx);
        }
    }

    /// `f(x) - L x` on lifts (periodic in `x`).
    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        let y = self.eval_lift(x);
        let lx = self.linear_part().apply(x);
        linalg::sub(&y, &lx)
    }
}

/// Certified bound on `max(sup|f - L|, sup‖Df - L‖)` for a composition,
/// propagated factor by factor with spectral norms.
fn c1_bound(dim: usize, factors: &[Factor]) -> f64 {
    let mut c0 = 0.0;
    let mut dev = 0.0;
    let mut lin_norm = 1.0;
    for f in factors.iter().rev() {
        match f {
            Factor::Linear { matrix, .. } => {
                let n = spectral_norm(matrix, dim);
                c0 *= n;
                dev *= n;
                lin_norm *= n;
            }
            Factor::Shear(s) => {
                let e = s.derivative_deviation();
                c0 += s.displacement_bound();
                dev = dev + e * (lin_norm + dev);
            }
        }
    }
    c0.max(dev)
}

fn spectral_norm(m: &IntMatrix, dim: usize) -> f64 {
    linalg::to_dmatrix(&m.to_f64(), dim)
        .singular_values()
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
}

/// `f = L ∘ S_1 ∘ … ∘ S_m`.
pub fn make_shear_perturbation(
    l: &ToralAutomorphism,
    shears: &[ShearFactor],
    threshold: f64,
) -> Result<SmoothTorusMap> {
    let mut factors = vec![Factor::linear(l.matrix.clone())?];
    factors.extend(shears.iter().cloned().map(Factor::Shear));
    let f = SmoothTorusMap::from_factors(l.dim(), factors)?;
    if f.c1_distance_bound() > threshold {
        return Err(Error::PerturbationTooLarge {
            bound: f.c1_distance_bound(),
            threshold,
        });
    }
    Ok(f)
}

/// `f = g ∘ L ∘ g⁻¹` for a shear composition `g` with `g(0) = 0`.
pub fn make_conjugated_linear(
    l: &ToralAutomorphism,
    generator: &[ShearFactor],
    threshold: f64,
) -> Result<SmoothTorusMap> {
    let d = l.dim();
    let g = SmoothTorusMap::shear_composition(d, generator)?;
    let g0 = g.eval_lift(&vec![0.0; d]);
    if linalg::norm_inf(&g0) > 1e-14 {
        return Err(Error::Precondition(format!(
            "generator must fix the origin, g(0) = {g0:?}"
        )));
    }
    let mut factors: Vec<Factor> = generator.iter().cloned().map(Factor::Shear).collect();
    factors.push(Factor::linear(l.matrix.clone())?);
    factors.extend(generator.iter().rev().map(|s| Factor::Shear(s.scaled(-1.0))));
    let f = SmoothTorusMap::from_factors(d, factors)?;
    if f.c1_distance_bound() > threshold {
        return Err(Error::PerturbationTooLarge {
            bound: f.c1_distance_bound(),
            threshold,
        });
    }
    Ok(f.with_generator(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{analyze_matrix, torus_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat() -> ToralAutomorphism {
        analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap()
    }

    fn companion() -> ToralAutomorphism {
        analyze_matrix(&"0,0,-1;1,0,0;0,1,3".parse().unwrap()).unwrap()
    }

    fn sample_maps() -> Vec<SmoothTorusMap> {
        let s = |i, j, a| ShearFactor::new(i, j, a, TrigProfile::unit_sine(1));
        let rich = TrigProfile::new(vec![
            Harmonic { k: 1, cos: 0.0, sin: 0.1 },
            Harmonic { k: 2, cos: 0.04, sin: -0.03 },
        ]);
        vec![
            SmoothTorusMap::linear(&cat()),
            make_shear_perturbation(&cat(), &[s(0, 1, 0.1)], 1.0).unwrap(),
            make_shear_perturbation(&cat(), &[s(0, 1, 0.2), ShearFactor::new(1, 0, 0.3, rich.clone())], 2.0)
                .unwrap(),
            make_conjugated_linear(&cat(), &[s(0, 1, 0.05), s(1, 0, 0.05)], 1.0).unwrap(),
            make_shear_perturbation(&companion(), &[s(0, 2, 0.05), s(2, 1, 0.05)], 1.0).unwrap(),
            make_conjugated_linear(&companion(), &[s(1, 0, 0.05)], 2.0).unwrap(),
        ]
    }

    fn points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect()
    }

    #[test]
    fn unperturbed_is_linear_with_zero_bound() {
        let f = make_shear_perturbation(&cat(), &[], 1.0).unwrap();
        assert_eq!(f.c1_distance_bound(), 0.0);
        for x in points(2, 20, 1) {
            assert_eq!(f.eval(&x), cat().apply(&x));
        }
    }

    #[test]
    fn single_shear_bound_is_norm_times_amplitude() {
        let f = make_shear_perturbation(
            &cat(),
            &[ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1))],
            1.0,
        )
        .unwrap();
        let norm = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((f.c1_distance_bound() - 0.1 * norm).abs() < 1e-12);
    }

    #[test]
    fn large_shear_rejected() {
        let err = make_shear_perturbation(
            &cat(),
            &[ShearFactor::new(0, 1, 2.0, TrigProfile::unit_sine(1))],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PerturbationTooLarge { .. }));
    }

    #[test]
    fn generator_must_fix_origin() {
        let bad = ShearFactor::new(0, 1, 0.05, TrigProfile::unit_cosine(1));
        assert!(matches!(
            make_conjugated_linear(&cat(), &[bad], 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn identity_generator_gives_linear_map() {
        let f = make_conjugated_linear(&cat(), &[], 1.0).unwrap();
        for x in points(2, 20, 2) {
            assert!(torus_distance(&f.eval(&x), &cat().apply(&x)) < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let h = 1e-5;
        for f in sample_maps() {
            let d = f.dim();
            for x in points(d, 200, 3) {
                let jac = f.jacobian(&x);
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fp = f.eval_lift(&xp);
                    let fm = f.eval_lift(&xm);
                    for i in 0..d {
                        let fd = (fp[i] - fm[i]) / (2.0 * h);
                        assert!((fd - jac[i * d + j]).abs() < 1e-6, "{fd} vs {}", jac[i * d + j]);
                    }
                }
            }
        }
    }

    #[test]
    fn volume_preserved_exactly() {
        for f in sample_maps() {
            for x in points(f.dim(), 10_000, 4) {
                assert!((f.det_jacobian(&x).abs() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for f in sample_maps() {
            for x in points(f.dim(), 500, 5) {
                assert!(torus_distance(&f.eval(&f.inverse_eval(&x)), &x) <= 1e-10);
                assert!(torus_distance(&f.inverse_eval(&f.eval(&x)), &x) <= 1e-10);
                let inv = f.inverse();
                assert!(torus_distance(&inv.eval(&f.eval(&x)), &x) <= 1e-10);
            }
        }
    }

    #[test]
    fn lift_linear_part_is_exact() {
        for f in sample_maps() {
            let d = f.dim();
            let lin = f.linear_part();
            for x in points(d, 20, 6) {
                let fx = f.eval_lift(&x);
                for j in 0..d {
                    let mut xs = x.clone();
                    xs[j] += 1.0;
                    let fs = f.eval_lift(&xs);
                    for i in 0..d {
                        assert!((fs[i] - fx[i] - lin.get(i, j) as f64).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn difference_is_cancellation_free() {
        let f = &sample_maps()[2];
        let x = vec![0.3, 0.7];
        let dx = vec![1e-13, -2e-13];
        let d = f.difference(&x, &dx);
        let lin = linalg::mat_vec(&f.jacobian(&x), &dx);
        for i in 0..2 {
            assert!(((d[i] - lin[i]) / lin[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn conjugated_map_is_conjugate_to_linear() {
        let f = &sample_maps()[3];
        let g = f.generator().unwrap();
        for x in points(2, 50, 7) {
            let lhs = f.eval(&g.eval(&x));
            let rhs = g.eval(&cat().apply(&x));
            assert!(torus_distance(&lhs, &rhs) < 1e-12);
        }
    }
}
