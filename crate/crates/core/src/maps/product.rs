use super::factor::Factor;
use super::{FiberPerturbation, SmoothTorusMap};
use crate::error::{Error, Result};

/// `f(x, y) = (b(x), y + α(x) + ε_c q(x))` on `T² × S¹`.
///
/// The fiber perturbation `q` depends on the base coordinates only, which
/// keeps the map volume preserving with a closed-form inverse.
#[derive(Debug, Clone)]
pub struct SkewProductMap {
    map: SmoothTorusMap,
    base: SmoothTorusMap,
    fiber_shift: FiberPerturbation,
    fiber_perturbation: FiberPerturbation,
    coupling: f64,
}

impl SkewProductMap {
    pub fn new(
        base: SmoothTorusMap,
        fiber_shift: FiberPerturbation,
        fiber_perturbation: FiberPerturbation,
        coupling: f64,
    ) -> Result<Self> {
        if base.dim() != 2 {
            return Err(Error::invalid("base", "skew products need a base on T²"));
        }
        if base.is_inverted() {
            return Err(Error::invalid("base", "base must be a forward map"));
        }
        if !coupling.is_finite() {
            return Err(Error::invalid("coupling", "not finite"));
        }
        let mut factors: Vec<Factor> = base.raw_factors().iter().map(|f| f.embedded(3)).collect();
        factors.extend(fiber_shift.shears(1.0)?.into_iter().map(Factor::Shear));
        factors.extend(fiber_perturbation.shears(coupling)?.into_iter().map(Factor::Shear));
        let map = SmoothTorusMap::from_factors(3, factors)?;
        Ok(SkewProductMap {
            map,
            base,
            fiber_shift,
            fiber_perturbation,
            coupling,
        })
    }

    /// The full map on `T³`.
    pub fn map(&self) -> &SmoothTorusMap {
        &self.map
    }

    pub fn base(&self) -> &SmoothTorusMap {
        &self.base
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// `α(x) + ε_c q(x)` (mod 1 not applied).
    pub fn fiber_displacement(&self, x: &[f64]) -> f64 {
        self.fiber_shift.eval(x) + self.coupling * self.fiber_perturbation.eval(x)
    }

    /// True when the fiber translation is constant in `x`.
    pub fn is_rigid_rotation(&self) -> bool {
        self.fiber_shift.terms.is_empty()
            && (self.coupling == 0.0 || self.fiber_perturbation.terms.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{analyze_matrix, torus_distance};
    use crate::maps::{make_shear_perturbation, FiberTerm, ShearFactor, TrigProfile};

    fn skew(coupling: f64) -> SkewProductMap {
        let l = analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap();
        let base = make_shear_perturbation(
            &l,
            &[ShearFactor::new(0, 1, 0.1, TrigProfile::unit_sine(1))],
            1.0,
        )
        .unwrap();
        let shift = FiberPerturbation {
            constant: 0.2,
            terms: vec![FiberTerm { driver: 1, profile: TrigProfile::unit_cosine(1) }],
        };
        let q = FiberPerturbation {
            constant: 0.0,
            terms: vec![FiberTerm { driver: 0, profile: TrigProfile::unit_sine(2) }],
        };
        SkewProductMap::new(base, shift, q, coupling).unwrap()
    }

    #[test]
    fn matches_formula() {
        let s = skew(0.3);
        for x in [[0.1, 0.2, 0.3], [0.9, 0.4, 0.05]] {
            let fx = s.map().eval(&x);
            let b = s.base().eval(&x[..2]);
            assert!(torus_distance(&fx[..2], &b) < 1e-14);
            let y = crate::algebra::wrap(x[2] + s.fiber_displacement(&x[..2]));
            assert!(torus_distance(&fx[2..], &[y]) < 1e-14);
        }
    }

    #[test]
    fn volume_and_inverse() {
        let s = skew(0.3);
        let x = [0.31, 0.77, 0.5];
        assert!((s.map().det_jacobian(&x) - 1.0).abs() < 1e-12);
        assert!(torus_distance(&s.map().inverse_eval(&s.map().eval(&x)), &x) < 1e-12);
    }

    #[test]
    fn rotation_detection() {
        let l = analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap();
        let s = SkewProductMap::new(
            SmoothTorusMap::linear(&l),
            FiberPerturbation { constant: 0.1, terms: vec![] },
            FiberPerturbation::default(),
            0.0,
        )
        .unwrap();
        assert!(s.is_rigid_rotation());
        assert!(!skew(0.0).is_rigid_rotation());
    }
}
