//! Integer-matrix and torus arithmetic: unimodularity, hyperbolicity,
//! irreducibility, certified spectral data, and mod-1 reduction.

mod intmat;
pub mod poly;
mod torus;

use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use intmat::IntMatrix;
pub use torus::{
    nearest_diff, nearest_lift, reduce_mod1, torus_distance, wrap, wrap_centered, wrap_vec,
    TorusPoint,
};

use crate::error::{Error, Result};
use crate::linalg;
use poly::Poly;

/// Largest supported dimension.
pub const MAX_DIM: usize = 6;

const HYPERBOLIC_GAP: f64 = 1e-9;
const EIGEN_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    /// `log |value|`
    pub exponent: f64,
    /// Unit eigenvector, oriented so its largest-magnitude entry is positive.
    pub vector: Vec<f64>,
}

/// Real spectral data of an integer matrix (no hyperbolicity required).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpectrum {
    /// Sorted by `|value|` ascending; repeated eigenvalues appear once per
    /// multiplicity.
    pub pairs: Vec<EigenPair>,
    /// Rows of the inverse eigenvector matrix: `dual[i] · pairs[j].vector = δ_ij`.
    pub dual: Vec<Vec<f64>>,
    /// All eigenvalues real with pairwise distinct absolute values, certified
    /// by exact polynomial gcds.
    pub simple_real_distinct: bool,
}

impl LinearSpectrum {
    pub fn of(matrix: &IntMatrix) -> Result<Self> {
        let d = matrix.dim();
        let p = Poly::from_ints(&matrix.charpoly());
        let mut roots: Vec<(f64, usize)> = Vec::new();
        let parts = p.squarefree_decomposition();
        for (q, mult) in &parts {
            for r in poly::real_roots(q) {
                roots.push((r, *mult));
            }
        }
        let total: usize = roots.iter().map(|r| r.1).sum();
        if total < d {
            return Err(Error::NonRealSpectrum);
        }
        let repeated = parts.iter().any(|(_, m)| *m > 1);
        let opposite = !p.gcd(&p.reflect()).is_constant();
        roots.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));

        let mf = linalg::to_dmatrix(&matrix.to_f64(), d);
        let mut pairs = Vec::with_capacity(d);
        for &(value, mult) in &roots {
            let shifted = &mf - DMatrix::<f64>::identity(d, d) * value;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t.expect("requested V^T");
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
            for &k in order.iter().take(mult) {
                let mut v: Vec<f64> = vt.row(k).iter().copied().collect();
                linalg::normalize(&mut v);
                orient(&mut v);
                let mv = matrix.apply(&v);
                let res: f64 = mv
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - value * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if res > EIGEN_RESIDUAL * value.abs().max(1.0) {
                    return Err(Error::Precondition(format!(
                        "eigenvector residual {res:e} for eigenvalue {value}"
                    )));
                }
                pairs.push(EigenPair {
                    value,
                    exponent: value.abs().ln(),
                    vector: v,
                });
            }
        }
        let mut vm = DMatrix::<f64>::zeros(d, d);
        for (j, pair) in pairs.iter().enumerate() {
            for i in 0..d {
                vm[(i, j)] = pair.vector[i];
            }
        }
        let dual = match vm.try_inverse() {
            Some(inv) => (0..d).map(|i| inv.row(i).iter().copied().collect()).collect(),
            None => Vec::new(),
        };
        Ok(LinearSpectrum {
            pairs,
            dual,
            simple_real_distinct: !repeated && !opposite,
        })
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    /// Coordinate of `v` along eigenvector `index` in the eigenbasis.
    pub fn coordinate(&self, index: usize, v: &[f64]) -> f64 {
        linalg::dot(&self.dual[index], v)
    }

    /// Spectral projection of `v` onto the span of the listed eigenvectors.
    pub fn project(&self, indices: impl IntoIterator<Item = usize>, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in indices {
            let c = self.coordinate(i, v);
            for (o, e) in out.iter_mut().zip(&self.pairs[i].vector) {
                *o += c * e;
            }
        }
        out
    }
}

fn orient(v: &mut [f64]) {
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    if v[imax] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// A hyperbolic unimodular integer matrix acting on `T^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToralAutomorphism {
    pub matrix: IntMatrix,
    pub inverse: IntMatrix,
    pub spectrum: LinearSpectrum,
    pub stable_count: usize,
    pub unstable_count: usize,
}

impl ToralAutomorphism {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.spectrum.pairs.iter().map(|p| p.exponent).collect()
    }

    pub fn eigenvalue(&self, index: usize) -> f64 {
        self.spectrum.pairs[index].value
    }

    pub fn eigenvector(&self, index: usize) -> &[f64] {
        &self.spectrum.pairs[index].vector
    }

    pub fn is_expanding(&self, index: usize) -> bool {
        index >= self.stable_count
    }

    pub fn require_simple(&self) -> Result<&Self> {
        if self.spectrum.simple_real_distinct {
            Ok(self)
        } else {
            Err(Error::Precondition(
                "eigenvalues are not real with distinct absolute values".into(),
            ))
        }
    }

    /// Image of a lift under the linear map (no reduction).
    pub fn apply_lift(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.apply(x)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        wrap_vec(&self.matrix.apply(x))
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        wrap_vec(&self.inverse.apply(x))
    }
}

/// Validates a matrix as a hyperbolic toral automorphism and computes its
/// certified spectral data.
pub fn analyze_matrix(matrix: &IntMatrix) -> Result<ToralAutomorphism> {
    let d = matrix.dim();
    if d < 2 {
        return Err(Error::BadShape(d));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionTooLarge(d, MAX_DIM));
    }
    let det = matrix.det();
    if det.abs() != 1 {
        return Err(Error::NotUnimodular(det));
    }
    let mf = linalg::to_dmatrix(&matrix.to_f64(), d);
    for ev in mf.complex_eigenvalues().iter() {
        let m = ev.norm();
        if (m - 1.0).abs() < HYPERBOLIC_GAP {
            return Err(Error::NotHyperbolic(m));
        }
    }
    let spectrum = LinearSpectrum::of(matrix)?;
    for p in &spectrum.pairs {
        if (p.value.abs() - 1.0).abs() < HYPERBOLIC_GAP {
            return Err(Error::NotHyperbolic(p.value.abs()));
        }
    }
    let stable_count = spectrum.pairs.iter().filter(|p| p.value.abs() < 1.0).count();
    Ok(ToralAutomorphism {
        inverse: matrix.unimodular_inverse()?,
        matrix: matrix.clone(),
        stable_count,
        unstable_count: d - stable_count,
        spectrum,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Whether the characteristic polynomial is irreducible over ℚ.
///
/// Candidate monic integer factors are generated from every subset of the
/// numerical roots, filtered by the Landau-Mignotte coefficient bound, and
/// confirmed by exact division.
pub fn is_irreducible(matrix: &IntMatrix) -> Result<bool> {
    let d = matrix.dim();
    if d > MAX_DIM {
        return Err(Error::DimensionTooLarge(d, MAX_DIM));
    }
    if d < 2 {
        return Ok(true);
    }
    let cp = matrix.charpoly();
    let p = Poly::from_ints(&cp);
    let norm2 = cp.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
    let roots: Vec<nalgebra::Complex<f64>> = linalg::to_dmatrix(&matrix.to_f64(), d)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    for g in 1..=d / 2 {
        for subset in combinations(d, g) {
            let mut c = vec![nalgebra::Complex::new(1.0, 0.0)];
            for &i in &subset {
                let mut next = vec![nalgebra::Complex::new(0.0, 0.0); c.len() + 1];
                for (k, ck) in c.iter().enumerate() {
                    next[k + 1] += ck;
                    next[k] -= ck * roots[i];
                }
                c = next;
            }
            let mut ints = Vec::with_capacity(c.len());
            let mut ok = true;
            for (k, ck) in c.iter().enumerate() {
                let r = ck.re.round();
                let tol = 1e-6 * (1.0 + ck.re.abs());
                if ck.im.abs() > tol || (ck.re - r).abs() > tol || r.abs() > binomial(g, k) * norm2 {
                    ok = false;
                    break;
                }
                ints.push(r as i128);
            }
            if !ok {
                continue;
            }
            let factor = Poly::from_ints(&ints);
            if p.div_rem(&factor).1.is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// A periodic point of a toral automorphism with rational coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalPeriodicPoint {
    pub point: Vec<f64>,
    pub numerators: Vec<i64>,
    pub denominator: i64,
    pub period: u32,
}

/// All points fixed by `M^p`, with their minimal periods, in a deterministic
/// order. They form the finite group `(M^p - I)^{-1} ℤ^d / ℤ^d`.
pub fn periodic_points(matrix: &IntMatrix, p: u32) -> Result<Vec<RationalPeriodicPoint>> {
    let d = matrix.dim();
    let a = matrix.pow(p).sub_identity();
    let det = a.det();
    if det == 0 {
        return Err(Error::NotHyperbolic(1.0));
    }
    let den = det.unsigned_abs() as i64;
    let adj = a.adjugate();
    let sign = det.signum() as i64;
    let gens: Vec<Vec<i64>> = (0..d)
        .map(|j| (0..d).map(|i| (sign * adj.get(i, j)).rem_euclid(den)).collect())
        .collect();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut queue = VecDeque::new();
    let zero = vec![0i64; d];
    seen.insert(zero.clone());
    queue.push_back(zero);
    while let Some(v) = queue.pop_front() {
        for g in &gens {
            let w: Vec<i64> = v.iter().zip(g).map(|(a, b)| (a + b).rem_euclid(den)).collect();
            if seen.insert(w.clone()) {
                queue.push_back(w);
            }
        }
    }
    let mut pts: Vec<Vec<i64>> = seen.into_iter().collect();
    pts.sort();
    let powers: Vec<IntMatrix> = (1..=p).map(|q| matrix.pow(q)).collect();
    Ok(pts
        .into_iter()
        .map(|num| {
            let period = (1..=p)
                .find(|&q| {
                    p % q == 0 && {
                        let m = &powers[q as usize - 1];
                        (0..d).all(|i| {
                            let s: i128 = (0..d)
                                .map(|j| m.get(i, j) as i128 * num[j] as i128)
                                .sum();
                            (s - num[i] as i128).rem_euclid(den as i128) == 0
                        })
                    }
                })
                .unwrap_or(p);
            RationalPeriodicPoint {
                point: num.iter().map(|&n| n as f64 / den as f64).collect(),
                numerators: num,
                denominator: den,
                period,
            }
        })
        .collect())
}
