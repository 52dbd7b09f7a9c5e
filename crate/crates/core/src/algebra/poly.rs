//! Exact univariate polynomials over ℚ, used for certified real-root
//! isolation (Sturm sequences) and square-free decomposition.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Coefficients in ascending degree; no trailing zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<BigRational>);

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

impl Poly {
    pub fn from_ints(coeffs: &[i128]) -> Poly {
        let mut p = Poly(
            coeffs
                .iter()
                .map(|&c| BigRational::from_integer(BigInt::from(c)))
                .collect(),
        );
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_constant(&self) -> bool {
        self.0.len() <= 1
    }

    pub fn lead(&self) -> BigRational {
        self.0.last().cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        let l = self.lead();
        Poly(self.0.iter().map(|c| c / &l).collect())
    }

    pub fn derivative(&self) -> Poly {
        let mut p = Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * rat(i as i64))
                .collect(),
        );
        p.trim();
        p
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|c| -c).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.0.get(i).cloned().unwrap_or_else(BigRational::zero);
            let b = other.0.get(i).cloned().unwrap_or_else(BigRational::zero);
            out.push(a - b);
        }
        let mut p = Poly(out);
        p.trim();
        p
    }

    /// `p(-x)`.
    pub fn reflect(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .map(|(i, c)| if i % 2 == 1 { -c } else { c.clone() })
                .collect(),
        )
    }

    /// Euclidean division; `divisor` must be non-zero.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let mut rem = self.0.clone();
        let dd = divisor.degree();
        let lead = divisor.lead();
        if self.0.len() < divisor.0.len() {
            return (Poly(vec![]), self.clone());
        }
        let mut quot = vec![BigRational::zero(); self.0.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] / &lead;
            for (j, dc) in divisor.0.iter().enumerate() {
                rem[k + j] -= &c * dc;
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        let mut q = Poly(quot);
        q.trim();
        let mut r = Poly(rem);
        r.trim();
        (q, r)
    }

    pub fn gcd(&self, other: &Poly) -> Poly {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.0.iter().rev() {
            acc = acc * x + c.to_f64().unwrap_or(f64::NAN);
        }
        acc
    }

    /// Yun's square-free decomposition: returns `(q_i, i)` with
    /// `monic(self) = Π q_i^i`, each `q_i` square-free and non-constant.
    pub fn squarefree_decomposition(&self) -> Vec<(Poly, usize)> {
        let p = self.monic();
        let dp = p.derivative();
        let a0 = p.gcd(&dp);
        let mut b = p.div_rem(&a0).0;
        let mut c = dp.div_rem(&a0).0;
        let mut d = c.sub(&b.derivative());
        let mut out = Vec::new();
        let mut i = 1;
        while !b.is_constant() {
            let q = b.gcd(&d);
            b = b.div_rem(&q).0;
            c = d.div_rem(&q).0;
            d = c.sub(&b.derivative());
            if !q.is_constant() {
                out.push((q, i));
            }
            i += 1;
        }
        out
    }
}

/// Sturm chain of a polynomial.
pub struct Sturm {
    chain: Vec<Poly>,
}

impl Sturm {
    pub fn new(p: &Poly) -> Sturm {
        let mut chain = vec![p.clone(), p.derivative()];
        loop {
            let n = chain.len();
            if chain[n - 1].is_zero() {
                chain.pop();
                break;
            }
            let (_, r) = chain[n - 2].div_rem(&chain[n - 1]);
            if r.is_zero() {
                break;
            }
            chain.push(r.neg());
        }
        Sturm { chain }
    }

    fn sign_changes(&self, x: &BigRational) -> usize {
        let mut changes = 0;
        let mut last = 0i8;
        for p in &self.chain {
            let v = p.eval(x);
            let s = if v.is_positive() {
                1
            } else if v.is_negative() {
                -1
            } else {
                0
            };
            if s != 0 {
                if last != 0 && s != last {
                    changes += 1;
                }
                last = s;
            }
        }
        changes
    }

    /// Number of distinct real roots in the half-open interval `(a, b]`.
    pub fn count(&self, a: &BigRational, b: &BigRational) -> usize {
        self.sign_changes(a) - self.sign_changes(b)
    }
}

/// Cauchy bound: every root lies strictly inside `(-B, B)`.
fn cauchy_bound(p: &Poly) -> BigRational {
    let m = p.monic();
    let mut max = BigRational::zero();
    for c in &m.0[..m.0.len() - 1] {
        if c.abs() > max {
            max = c.abs();
        }
    }
    max + BigRational::one()
}

/// Isolates and refines every distinct real root of a square-free polynomial.
/// Roots are returned ascending; each is accurate to well below one ulp
/// before the final rounding to `f64`.
pub fn real_roots(p: &Poly) -> Vec<f64> {
    if p.degree() == 0 {
        return vec![];
    }
    let sturm = Sturm::new(p);
    let bound = cauchy_bound(p);
    let mut stack = vec![(-bound.clone(), bound)];
    let mut isolated = Vec::new();
    while let Some((a, b)) = stack.pop() {
        match sturm.count(&a, &b) {
            0 => {}
            1 => isolated.push((a, b)),
            _ => {
                let mid = (&a + &b) / rat(2);
                stack.push((a, mid.clone()));
                stack.push((mid, b));
            }
        }
    }
    isolated.sort_by(|x, y| x.0.cmp(&y.0));
    let two = rat(2);
    let tol = BigRational::new(BigInt::one(), BigInt::one() << 70);
    isolated
        .into_iter()
        .map(|(mut a, mut b)| {
            // the root is in (a, b]; shrink by exact sign bisection
            if p.eval(&b).is_zero() {
                return b.to_f64().unwrap();
            }
            let sb = p.eval(&b).is_positive();
            while &b - &a > tol {
                let mid = (&a + &b) / &two;
                let v = p.eval(&mid);
                if v.is_zero() {
                    return mid.to_f64().unwrap();
                }
                if v.is_positive() == sb {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            ((&a + &b) / &two).to_f64().unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_roots() {
        // x^2 - 3x + 1
        let p = Poly::from_ints(&[1, -3, 1]);
        let r = real_roots(&p);
        let s5 = 5f64.sqrt();
        assert_eq!(r.len(), 2);
        assert!((r[0] - (3.0 - s5) / 2.0).abs() < 1e-15);
        assert!((r[1] - (3.0 + s5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn sturm_counts_cubic_roots_by_sign_change_intervals() {
        // x^3 - 3x^2 + 1 has one root in each of (-1,0), (0,1), (2,3)
        let p = Poly::from_ints(&[1, 0, -3, 1]);
        let s = Sturm::new(&p);
        assert_eq!(s.count(&rat(-1), &rat(0)), 1);
        assert_eq!(s.count(&rat(0), &rat(1)), 1);
        assert_eq!(s.count(&rat(2), &rat(3)), 1);
        assert_eq!(s.count(&rat(-10), &rat(10)), 3);
    }

    #[test]
    fn yun_splits_repeated_factor() {
        // (x^2 - 3x + 1)^2 (x - 2)
        let q = Poly::from_ints(&[1, -3, 1]);
        let sq = {
            let mut c = vec![BigRational::zero(); 5];
            for i in 0..3 {
                for j in 0..3 {
                    c[i + j] += &q.0[i] * &q.0[j];
                }
            }
            Poly(c)
        };
        let lin = Poly::from_ints(&[-2, 1]);
        let mut c = vec![BigRational::zero(); 6];
        for i in 0..5 {
            for j in 0..2 {
                c[i + j] += &sq.0[i] * &lin.0[j];
            }
        }
        let parts = Poly(c).squarefree_decomposition();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].1, 1);
        assert_eq!(parts[0].0, lin);
        assert_eq!(parts[1].1, 2);
        assert_eq!(parts[1].0, q);
    }
}
