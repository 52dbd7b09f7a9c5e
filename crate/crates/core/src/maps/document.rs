use serde::{Deserialize, Serialize};

use super::{
    make_conjugated_linear, make_shear_perturbation, ShearFactor, SkewProductMap, SmoothTorusMap,
    TrigProfile, DEFAULT_PERTURBATION_THRESHOLD,
};
use crate::algebra::{analyze_matrix, IntMatrix};
use crate::error::{Error, Result};

/// One base-driven fiber term `φ(x_driver)` with `driver ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberTerm {
    pub driver: usize,
    pub profile: TrigProfile,
}

/// A function `T² → R` given as a constant plus one-variable profiles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberPerturbation {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<FiberTerm>,
}

impl FiberPerturbation {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|t| t.profile.eval(x[t.driver])).sum::<f64>()
    }

    /// The fiber shears on `T³` realizing `y ↦ y + scale · self(x)`.
    pub(crate) fn shears(&self, scale: f64) -> Result<Vec<ShearFactor>> {
        let mut out = Vec::new();
        if self.constant != 0.0 && scale != 0.0 {
            out.push(ShearFactor::new(2, 0, scale, TrigProfile::constant(self.constant)));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.driver > 1 {
                return Err(Error::invalid(
                    format!("terms[{i}].driver"),
                    "fiber terms are driven by base coordinates 0 or 1",
                ));
            }
            if scale != 0.0 {
                out.push(ShearFactor::new(2, t.driver, scale, t.profile.clone()));
            }
        }
        Ok(out)
    }
}

fn default_threshold() -> f64 {
    DEFAULT_PERTURBATION_THRESHOLD
}

/// Serializable description of a map; the canonical experiment input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapDocument {
    Linear {
        matrix: IntMatrix,
    },
    ShearPerturbation {
        matrix: IntMatrix,
        #[serde(default)]
        shears: Vec<ShearFactor>,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    ConjugatedLinear {
        matrix: IntMatrix,
        #[serde(default)]
        generator: Vec<ShearFactor>,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    SkewProduct {
        base: Box<MapDocument>,
        #[serde(default)]
        fiber_shift: FiberPerturbation,
        #[serde(default)]
        fiber_perturbation: FiberPerturbation,
        #[serde(default)]
        coupling: f64,
    },
}

impl MapDocument {
    /// The map on `T^d` (for skew products, the full map on `T³`).
    pub fn build(&self) -> Result<SmoothTorusMap> {
        match self {
            MapDocument::Linear { matrix } => Ok(SmoothTorusMap::linear(&analyze_matrix(matrix)?)),
            MapDocument::ShearPerturbation {
                matrix,
                shears,
                threshold,
            } => make_shear_perturbation(&analyze_matrix(matrix)?, shears, *threshold),
            MapDocument::ConjugatedLinear {
                matrix,
                generator,
                threshold,
            } => make_conjugated_linear(&analyze_matrix(matrix)?, generator, *threshold),
            MapDocument::SkewProduct { .. } => Ok(self.build_skew()?.map().clone()),
        }
    }

    pub fn build_skew(&self) -> Result<SkewProductMap> {
        match self {
            MapDocument::SkewProduct {
                base,
                fiber_shift,
                fiber_perturbation,
                coupling,
            } => {
                if matches!(**base, MapDocument::SkewProduct { .. }) {
                    return Err(Error::invalid("base", "nested skew products are not supported"));
                }
                SkewProductMap::new(
                    base.build()?,
                    fiber_shift.clone(),
                    fiber_perturbation.clone(),
                    *coupling,
                )
            }
            _ => Err(Error::invalid("kind", "expected a skew_product document")),
        }
    }

    pub fn is_skew(&self) -> bool {
        matches!(self, MapDocument::SkewProduct { .. })
    }

    /// Linear part of the (base) matrix.
    pub fn matrix(&self) -> &IntMatrix {
        match self {
            MapDocument::Linear { matrix }
            | MapDocument::ShearPerturbation { matrix, .. }
            | MapDocument::ConjugatedLinear { matrix, .. } => matrix,
            MapDocument::SkewProduct { base, .. } => base.matrix(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_build() {
        let json = r#"{
            "kind": "skew_product",
            "base": {"kind": "shear_perturbation", "matrix": [[2,1],[1,1]],
                     "shears": [{"direction": 0, "driver": 1, "amplitude": 0.1,
                                 "profile": [{"k": 1, "sin": 0.15915494309189535}]}]},
            "fiber_shift": {"constant": 0.25},
            "fiber_perturbation": {"terms": [{"driver": 0, "profile": [{"k": 1, "cos": 0.1}]}]},
            "coupling": 0.05
        }"#;
        let doc: MapDocument = serde_json::from_str(json).unwrap();
        let again: MapDocument =
            serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(doc, again);
        let f = doc.build().unwrap();
        assert_eq!(f.dim(), 3);
        assert_eq!(doc.matrix().dim(), 2);
    }

    #[test]
    fn bad_driver_is_named() {
        let doc = MapDocument::SkewProduct {
            base: Box::new(MapDocument::Linear { matrix: "2,1;1,1".parse().unwrap() }),
            fiber_shift: FiberPerturbation {
                constant: 0.0,
                terms: vec![FiberTerm { driver: 2, profile: TrigProfile::unit_sine(1) }],
            },
            fiber_perturbation: FiberPerturbation::default(),
            coupling: 0.0,
        };
        let err = doc.build().unwrap_err();
        assert!(err.to_string().contains("terms[0].driver"), "{err}");
    }

    #[test]
    fn same_document_same_fingerprint() {
        let doc = MapDocument::ConjugatedLinear {
            matrix: "2,1;1,1".parse().unwrap(),
            generator: vec![ShearFactor::new(0, 1, 0.05, TrigProfile::unit_sine(1))],
            threshold: 1.0,
        };
        assert_eq!(doc.build().unwrap().fingerprint(), doc.build().unwrap().fingerprint());
    }
}
