use serde::{Deserialize, Serialize};

use super::trig::TrigProfile;
use crate::algebra::IntMatrix;
use crate::error::{Error, Result};

/// `x ↦ x + amplitude · φ(x_driver) · e_direction`; unit triangular Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearFactor {
    pub direction: usize,
    pub driver: usize,
    pub amplitude: f64,
    pub profile: TrigProfile,
}

impl ShearFactor {
    pub fn new(direction: usize, driver: usize, amplitude: f64, profile: TrigProfile) -> Self {
        ShearFactor {
            direction,
            driver,
            amplitude,
            profile,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.direction >= dim || self.driver >= dim {
            return Err(Error::invalid(
                "shear",
                format!(
                    "direction {} / driver {} out of range for dimension {dim}",
                    self.direction, self.driver
                ),
            ));
        }
        if self.direction == self.driver {
            return Err(Error::invalid("shear", "driver must differ from direction"));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("shear.amplitude", "not finite"));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        ShearFactor {
            amplitude: self.amplitude * s,
            ..self.clone()
        }
    }

    /// Bound on `sup ‖DS - I‖`.
    pub fn derivative_deviation(&self) -> f64 {
        self.amplitude.abs() * self.profile.derivative_sup_bound()
    }

    pub fn displacement_bound(&self) -> f64 {
        self.amplitude.abs() * self.profile.sup_bound()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "factor", rename_all = "snake_case")]
pub(crate) enum Factor {
    Linear {
        matrix: IntMatrix,
        #[serde(skip)]
        inverse: IntMatrix,
    },
    Shear(ShearFactor),
}

impl Factor {
    pub fn linear(matrix: IntMatrix) -> Result<Factor> {
        let inverse = matrix.unimodular_inverse()?;
        Ok(Factor::Linear { matrix, inverse })
    }

    pub fn inverted(&self) -> Factor {
        match self {
            Factor::Linear { matrix, inverse } => Factor::Linear {
                matrix: inverse.clone(),
                inverse: matrix.clone(),
            },
            Factor::Shear(s) => Factor::Shear(s.scaled(-1.0)),
        }
    }

    /// Applies the factor to a lift, and its Jacobian at the pre-image point to
    /// each vector.
    #[inline]
    pub fn step(&self, x: &mut [f64], vecs: &mut [Vec<f64>]) {
        match self {
            Factor::Linear { matrix, .. } => {
                for v in vecs.iter_mut() {
                    let w = matrix.apply(v);
                    v.copy_from_slice(&w);
                }
                let y = matrix.apply(x);
                x.copy_from_slice(&y);
            }
            Factor::Shear(s) => {
                let xj = x[s.driver];
                if !vecs.is_empty() {
                    let c = s.amplitude * s.profile.derivative(xj);
                    for v in vecs.iter_mut() {
                        v[s.direction] += c * v[s.driver];
                    }
                }
                x[s.direction] += s.amplitude * s.profile.eval(xj);
            }
        }
    }

    /// `F(x + dx) - F(x)`, accurate to relative precision for small `dx`.
    /// Advances `x` to `F(x)`.
    #[inline]
    pub fn step_difference(&self, x: &mut [f64], dx: &mut [f64]) {
        match self {
            Factor::Linear { matrix, .. } => {
                let w = matrix.apply(dx);
                dx.copy_from_slice(&w);
                let y = matrix.apply(x);
                x.copy_from_slice(&y);
            }
            Factor::Shear(s) => {
                let xj = x[s.driver];
                dx[s.direction] += s.amplitude * s.profile.difference(xj, dx[s.driver]);
                x[s.direction] += s.amplitude * s.profile.eval(xj);
            }
        }
    }

    /// The same factor acting on the first coordinates of `T^dim`.
    pub fn embedded(&self, dim: usize) -> Factor {
        match self {
            Factor::Linear { matrix, .. } if matrix.dim() == dim => self.clone(),
            Factor::Linear { matrix, inverse } => {
                let pad = IntMatrix::identity(dim - matrix.dim());
                Factor::Linear {
                    matrix: IntMatrix::block_diag(matrix, &pad),
                    inverse: IntMatrix::block_diag(inverse, &pad),
                }
            }
            Factor::Shear(s) => Factor::Shear(s.clone()),
        }
    }

    pub fn linear_part(&self) -> Option<&IntMatrix> {
        match self {
            Factor::Linear { matrix, .. } => Some(matrix),
            Factor::Shear(_) => None,
        }
    }
}
