use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// One harmonic `cos·cos(2πks) + sin·sin(2πks)`; `k = 0` is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Trigonometric polynomial on the circle with exact derivatives.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrigProfile {
    pub terms: Vec<Harmonic>,
}

impl TrigProfile {
    pub fn new(terms: Vec<Harmonic>) -> Self {
        TrigProfile { terms }
    }

    /// `sin(2πks) / (2πk)`, whose derivative is `cos(2πks)`.
    pub fn unit_sine(k: u32) -> Self {
        TrigProfile::new(vec![Harmonic {
            k,
            cos: 0.0,
            sin: 1.0 / (TAU * k as f64),
        }])
    }

    pub fn unit_cosine(k: u32) -> Self {
        TrigProfile::new(vec![Harmonic {
            k,
            cos: 1.0 / (TAU * k as f64),
            sin: 0.0,
        }])
    }

    pub fn constant(c: f64) -> Self {
        TrigProfile::new(vec![Harmonic { k: 0, cos: c, sin: 0.0 }])
    }

    pub fn scaled(&self, s: f64) -> Self {
        TrigProfile::new(
            self.terms
                .iter()
                .map(|h| Harmonic {
                    k: h.k,
                    cos: h.cos * s,
                    sin: h.sin * s,
                })
                .collect(),
        )
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|h| {
                let a = TAU * h.k as f64 * s;
                h.cos * a.cos() + h.sin * a.sin()
            })
            .sum()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|h| {
                let w = TAU * h.k as f64;
                let a = w * s;
                w * (h.sin * a.cos() - h.cos * a.sin())
            })
            .sum()
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|h| {
                let w = TAU * h.k as f64;
                let a = w * s;
                -w * w * (h.cos * a.cos() + h.sin * a.sin())
            })
            .sum()
    }

    /// `φ(s + ds) - φ(s)` without cancellation for small `ds`.
    pub fn difference(&self, s: f64, ds: f64) -> f64 {
        self.terms
            .iter()
            .map(|h| {
                if h.k == 0 {
                    return 0.0;
                }
                let w = TAU * h.k as f64;
                let mid = w * (s + 0.5 * ds);
                let half = (0.5 * w * ds).sin();
                // cos(A+B)-cos A = -2 sin(A+B/2) sin(B/2)
                // sin(A+B)-sin A =  2 cos(A+B/2) sin(B/2)
                2.0 * half * (h.sin * mid.cos() - h.cos * mid.sin())
            })
            .sum()
    }

    /// Certified bound on `sup |φ|`.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|h| h.cos.abs() + h.sin.abs()).sum()
    }

    /// Certified bound on `sup |φ'|`.
    pub fn derivative_sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|h| TAU * h.k as f64 * (h.cos.abs() + h.sin.abs()))
            .sum()
    }

    pub fn second_derivative_sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|h| (TAU * h.k as f64).powi(2) * (h.cos.abs() + h.sin.abs()))
            .sum()
    }
}
