use serde::{Deserialize, Serialize};

use super::{make_conjugated_linear, make_shear_perturbation, ShearFactor, SmoothTorusMap};
use crate::algebra::ToralAutomorphism;
use crate::error::{Error, Result};

/// How the family's exponents depend on the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentProfile {
    /// `γ_t = g_t ∘ L ∘ g_t⁻¹`: every member has the exponents of `L`.
    Constant,
    /// `γ_t = L ∘ S(t)`: amplitudes scale with `t`, exponents vary.
    Varying,
}

/// One-parameter family `γ_t` built from a common shear template whose
/// amplitudes are multiplied by `t`.
#[derive(Debug, Clone)]
pub struct KatokFamily {
    pub linear: ToralAutomorphism,
    pub profile: ExponentProfile,
    pub template: Vec<ShearFactor>,
    pub grid: Vec<f64>,
    pub members: Vec<SmoothTorusMap>,
}

/// `m + 1` equally spaced parameters in `[0, 1]`.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    if m == 0 {
        return vec![0.0];
    }
    (0..=m).map(|i| i as f64 / m as f64).collect()
}

pub fn make_katok_family(
    l: &ToralAutomorphism,
    template: &[ShearFactor],
    profile: ExponentProfile,
    grid: &[f64],
    threshold: f64,
) -> Result<KatokFamily> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "empty parameter grid"));
    }
    for (i, w) in grid.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::invalid(format!("grid[{}]", i + 1), "grid must increase"));
        }
    }
    if grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 {
        return Err(Error::invalid("grid", "parameters must lie in [0, 1]"));
    }
    let members = grid
        .iter()
        .map(|&t| {
            let shears: Vec<ShearFactor> = template.iter().map(|s| s.scaled(t)).collect();
            match profile {
                ExponentProfile::Constant => make_conjugated_linear(l, &shears, threshold),
                ExponentProfile::Varying => make_shear_perturbation(l, &shears, threshold),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KatokFamily {
        linear: l.clone(),
        profile,
        template: template.to_vec(),
        grid: grid.to_vec(),
        members,
    })
}

impl KatokFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The suspension `(x, t_i) ↦ (γ_{t_i}(x), t_i)`.
    pub fn suspension_eval(&self, x: &[f64], index: usize) -> (Vec<f64>, f64) {
        (self.members[index].eval(x), self.grid[index])
    }

    /// Stored generator `g_t` of a constant-profile member.
    pub fn generator(&self, index: usize) -> Option<&SmoothTorusMap> {
        self.members[index].generator()
    }

    /// Checks that measured unstable exponents spread by at least `margin`.
    pub fn require_spread(&self, exponents: &[f64], margin: f64) -> Result<f64> {
        let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = exponents.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = if exponents.is_empty() { 0.0 } else { max - min };
        if spread < margin {
            return Err(Error::ProfileNotAchieved {
                requested: margin,
                measured: spread,
            });
        }
        Ok(spread)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{analyze_matrix, torus_distance};
    use crate::maps::TrigProfile;

    fn template() -> Vec<ShearFactor> {
        vec![
            ShearFactor::new(0, 1, 0.35, TrigProfile::unit_sine(1)),
            ShearFactor::new(1, 0, 0.35, TrigProfile::unit_sine(1)),
        ]
    }

    #[test]
    fn single_member_family() {
        let l = analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap();
        let fam =
            make_katok_family(&l, &template(), ExponentProfile::Varying, &uniform_grid(0), 3.0)
                .unwrap();
        assert_eq!(fam.len(), 1);
        let x = [0.3, 0.4];
        assert!(torus_distance(&fam.suspension_eval(&x, 0).0, &l.apply(&x)) < 1e-15);
    }

    #[test]
    fn constant_members_store_generators() {
        let l = analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap();
        let fam =
            make_katok_family(&l, &template(), ExponentProfile::Constant, &uniform_grid(4), 10.0)
                .unwrap();
        assert_eq!(fam.grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!((0..5).all(|i| fam.generator(i).is_some()));
    }

    #[test]
    fn spread_check() {
        let l = analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap();
        let fam =
            make_katok_family(&l, &template(), ExponentProfile::Varying, &uniform_grid(2), 3.0)
                .unwrap();
        assert!(matches!(
            fam.require_spread(&[0.96, 0.958], 0.01),
            Err(Error::ProfileNotAchieved { .. })
        ));
        assert!(fam.require_spread(&[0.96, 0.94], 0.01).is_ok());
    }

    #[test]
    fn bad_grid_rejected() {
        let l = analyze_matrix(&"2,1;1,1".parse().unwrap()).unwrap();
        assert!(make_katok_family(&l, &template(), ExponentProfile::Varying, &[0.5, 0.2], 2.0)
            .is_err());
    }
}
