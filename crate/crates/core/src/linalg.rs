//! Small dense helpers on plain slices, plus a banded LU solver used by the
//! orbit-shadowing Newton iteration.

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Normalizes in place and returns the previous norm.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Sine of the angle between two lines (sign of the vectors is ignored).
pub fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let c = dot(a, b) / (na * nb);
    let s = c.signum();
    let r: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x / na - s * y / nb).powi(2))
        .sum::<f64>()
        .sqrt();
    // chord between unit vectors is 2 sin(theta/2)
    let half = (r / 2.0).min(1.0).asin();
    (2.0 * half).sin().abs()
}

/// Row-major matrix-vector product for a `d x d` matrix.
pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// Row-major product of two `d x d` matrices.
pub fn mat_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

pub fn to_dmatrix(m: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, m)
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns are
/// orthonormalized in place; returns the diagonal of R.
pub fn mgs(columns: &mut [Vec<f64>]) -> Vec<f64> {
    let k = columns.len();
    let mut diag = vec![0.0; k];
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let (head, tail) = columns.split_at_mut(j);
                let c = dot(&head[i], &tail[0]);
                for (x, q) in tail[0].iter_mut().zip(&head[i]) {
                    *x -= c * q;
                }
            }
        }
        diag[j] = normalize(&mut columns[j]);
    }
    diag
}

/// Unit vector spanning the intersection of two subspaces whose dimensions
/// add up to `d + 1`. Bases are given as column lists.
pub fn intersect_lines(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let d = a[0].len();
    let cols = a.len() + b.len();
    let mut m = DMatrix::<f64>::zeros(d, cols);
    for (j, c) in a.iter().enumerate() {
        for i in 0..d {
            m[(i, j)] = c[i];
        }
    }
    for (j, c) in b.iter().enumerate() {
        for i in 0..d {
            m[(i, a.len() + j)] = -c[i];
        }
    }
    // null vector of the d x (d+1) matrix: smallest right singular vector of
    // the square Gram matrix
    let gram = m.transpose() * &m;
    let eig = gram.symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let coeffs = eig.eigenvectors.column(imin);
    let mut v = vec![0.0; d];
    for (j, c) in a.iter().enumerate() {
        for i in 0..d {
            v[i] += coeffs[j] * c[i];
        }
    }
    normalize(&mut v);
    v
}

/// Banded matrix with `kl` sub- and `ku` super-diagonals, stored with room for
/// the fill-in produced by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside band"
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting,
    /// consuming the matrix. Returns `None` for a numerically singular pivot.
    pub fn solve(mut self, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let c = self.idx(p, j);
                    self.data.swap(a, c);
                }
                b.swap(k, p);
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let factor = self.data[ik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[ik] = 0.0;
                for j in k + 1..=last_col {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= factor * kj;
                }
                b[i] -= factor * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last_col {
                s -= self.data[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.data[self.idx(k, k)];
        }
        Some(x)
    }
}
