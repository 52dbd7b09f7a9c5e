use serde::{Deserialize, Serialize};

/// A point of `T^d = R^d / Z^d`, optionally remembering an unwrapped lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub coords: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<Vec<f64>>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        let coords = coords.into_iter().map(wrap).collect();
        TorusPoint { coords, lift: None }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Representative of `x mod 1` in `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn wrap_centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

pub fn wrap_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| wrap(v)).collect()
}

pub fn reduce_mod1(lift: &[f64]) -> TorusPoint {
    TorusPoint {
        coords: wrap_vec(lift),
        lift: Some(lift.to_vec()),
    }
}

/// Representative of `b - a` with every component in `[-0.5, 0.5)`.
pub fn nearest_lift(a: &TorusPoint, b: &TorusPoint) -> Vec<f64> {
    nearest_diff(&a.coords, &b.coords)
}

pub fn nearest_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wrap_centered(y - x)).collect()
}

/// Flat torus distance.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::norm(&nearest_diff(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reduce_examples() {
        let p = reduce_mod1(&[1.25, -0.5]);
        assert_eq!(p.coords, vec![0.25, 0.5]);
        assert_eq!(p.lift, Some(vec![1.25, -0.5]));
    }

    #[test]
    fn nearest_lift_wraps() {
        let a = TorusPoint::new(vec![0.9, 0.0]);
        let b = TorusPoint::new(vec![0.1, 0.0]);
        let d = nearest_lift(&a, &b);
        assert!((d[0] - 0.2).abs() < 1e-15 && d[1] == 0.0);
        assert_eq!(nearest_lift(&a, &a), vec![0.0, 0.0]);
    }

    #[test]
    fn tiny_negative_wraps_into_unit_interval() {
        let r = wrap(-1e-18);
        assert!((0.0..1.0).contains(&r));
    }

    proptest! {
        #[test]
        fn reduce_is_idempotent(x in proptest::collection::vec(-1e6f64..1e6, 1..6)) {
            let once = reduce_mod1(&x);
            let twice = reduce_mod1(&once.coords);
            prop_assert_eq!(&once.coords, &twice.coords);
            prop_assert!(once.coords.iter().all(|c| (0.0..1.0).contains(c)));
        }

        #[test]
        fn nearest_lift_in_half_open_box(
            a in proptest::collection::vec(0.0f64..1.0, 3),
            b in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            let d = nearest_diff(&a, &b);
            prop_assert!(d.iter().all(|v| (-0.5..0.5).contains(v)));
            for i in 0..3 {
                prop_assert!(wrap_centered(a[i] + d[i] - b[i]).abs() < 1e-12);
            }
        }
    }
}
