use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<i64>,
}

impl IntMatrix {
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let d = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::invalid(
                    format!("matrix[{i}]"),
                    format!("row has {} entries, expected {d}", r.len()),
                ));
            }
        }
        if d == 0 {
            return Err(Error::invalid("matrix", "empty matrix"));
        }
        Ok(IntMatrix {
            dim: d,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1;
        }
        IntMatrix { dim: d, entries }
    }

    /// Block-diagonal matrix `diag(a, b)`.
    pub fn block_diag(a: &IntMatrix, b: &IntMatrix) -> Self {
        let d = a.dim + b.dim;
        let mut m = IntMatrix {
            dim: d,
            entries: vec![0; d * d],
        };
        for i in 0..a.dim {
            for j in 0..a.dim {
                m.entries[i * d + j] = a.get(i, j);
            }
        }
        for i in 0..b.dim {
            for j in 0..b.dim {
                m.entries[(a.dim + i) * d + a.dim + j] = b.get(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&v| v as f64).collect()
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j];
            }
        }
        IntMatrix { dim: d, entries }
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        let d = self.dim;
        let mut entries = vec![0i64; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                for j in 0..d {
                    entries[i * d + j] += a * other.entries[k * d + j];
                }
            }
        }
        IntMatrix { dim: d, entries }
    }

    pub fn pow(&self, p: u32) -> IntMatrix {
        let mut out = IntMatrix::identity(self.dim);
        for _ in 0..p {
            out = out.mul(self);
        }
        out
    }

    pub fn sub_identity(&self) -> IntMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.entries[i * self.dim + i] -= 1;
        }
        m
    }

    /// `M v` for a real vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| self.entries[i * d + j] as f64 * v[j])
                    .sum()
            })
            .collect()
    }

    /// Determinant by fraction-free Bareiss elimination.
    pub fn det(&self) -> i128 {
        bareiss_det(
            self.entries.iter().map(|&v| v as i128).collect(),
            self.dim,
        )
    }

    /// Characteristic polynomial `det(xI - M)`, coefficients ascending, by
    /// Faddeev-LeVerrier (all divisions are exact over ℤ).
    pub fn charpoly(&self) -> Vec<i128> {
        let d = self.dim;
        let a: Vec<i128> = self.entries.iter().map(|&v| v as i128).collect();
        let mut coeffs = vec![0i128; d + 1];
        coeffs[d] = 1;
        let mut m = vec![0i128; d * d];
        for k in 1..=d {
            // M_k = A M_{k-1} + c_{d-k+1} I
            let mut next = vec![0i128; d * d];
            for i in 0..d {
                for l in 0..d {
                    let ail = a[i * d + l];
                    if ail == 0 {
                        continue;
                    }
                    for j in 0..d {
                        next[i * d + j] += ail * m[l * d + j];
                    }
                }
                next[i * d + i] += coeffs[d - k + 1];
            }
            m = next;
            // c_{d-k} = -tr(A M_k) / k
            let mut tr = 0i128;
            for i in 0..d {
                for l in 0..d {
                    tr += a[i * d + l] * m[l * d + i];
                }
            }
            coeffs[d - k] = -tr / k as i128;
        }
        coeffs
    }

    /// Adjugate (transposed cofactor matrix), so that `M adj(M) = det(M) I`.
    pub fn adjugate(&self) -> IntMatrix {
        let d = self.dim;
        let mut entries = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let minor: Vec<i128> = (0..d)
                    .filter(|&r| r != j)
                    .flat_map(|r| (0..d).filter(move |&c| c != i).map(move |c| (r, c)))
                    .map(|(r, c)| self.entries[r * d + c] as i128)
                    .collect();
                let cof = if d == 1 { 1 } else { bareiss_det(minor, d - 1) };
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                entries[i * d + j] = (sign * cof) as i64;
            }
        }
        IntMatrix { dim: d, entries }
    }

    /// Exact inverse of a unimodular matrix via the adjugate.
    pub fn unimodular_inverse(&self) -> Result<IntMatrix> {
        let det = self.det();
        if det.abs() != 1 {
            return Err(Error::NotUnimodular(det));
        }
        let mut inv = self.adjugate();
        inv.entries.iter_mut().for_each(|v| *v *= det as i64);
        Ok(inv)
    }
}

fn bareiss_det(mut m: Vec<i128>, n: usize) -> i128 {
    if n == 0 {
        return 1;
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k * n + k] == 0 {
            let Some(p) = (k + 1..n).find(|&r| m[r * n + k] != 0) else {
                return 0;
            };
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i * n + j] = (m[i * n + j] * m[k * n + k] - m[i * n + k] * m[k * n + j]) / prev;
            }
        }
        prev = m[k * n + k];
    }
    sign * m[n * n - 1]
}

impl TryFrom<Vec<Vec<i64>>> for IntMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        IntMatrix::from_rows(rows)
    }
}

impl From<IntMatrix> for Vec<Vec<i64>> {
    fn from(m: IntMatrix) -> Self {
        m.rows()
    }
}

/// Row-major `"a,b;c,d"` syntax.
impl FromStr for IntMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows = s
            .split(';')
            .enumerate()
            .map(|(i, row)| {
                row.split(',')
                    .map(|v| {
                        v.trim().parse::<i64>().map_err(|e| {
                            Error::invalid(format!("matrix[{i}]"), format!("`{}`: {e}", v.trim()))
                        })
                    })
                    .collect::<Result<Vec<i64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        IntMatrix::from_rows(rows)
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let m: IntMatrix = "2,1;1,1".parse().unwrap();
        assert_eq!(m.rows(), vec![vec![2, 1], vec![1, 1]]);
        assert_eq!(m.to_string(), "2,1;1,1");
    }

    #[test]
    fn ragged_matrix_names_row() {
        let err = "2,1;1".parse::<IntMatrix>().unwrap_err();
        match err {
            Error::Invalid { field, .. } => assert_eq!(field, "matrix[1]"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn charpoly_of_companion() {
        let m = IntMatrix::from_rows(vec![vec![0, 0, -1], vec![1, 0, 0], vec![0, 1, 3]]).unwrap();
        // x^3 - 3x^2 + 1
        assert_eq!(m.charpoly(), vec![1, 0, -3, 1]);
        assert_eq!(m.det(), -1);
    }

    #[test]
    fn unimodular_inverse_is_exact() {
        let m = IntMatrix::from_rows(vec![vec![0, 0, -1], vec![1, 0, 0], vec![0, 1, 3]]).unwrap();
        let inv = m.unimodular_inverse().unwrap();
        assert_eq!(m.mul(&inv), IntMatrix::identity(3));
        let cat: IntMatrix = "2,1;1,1".parse().unwrap();
        assert_eq!(cat.unimodular_inverse().unwrap().rows(), vec![vec![1, -1], vec![-1, 2]]);
    }
}
