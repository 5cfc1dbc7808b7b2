//! Points on the flat torus `[0,1)^d` and the flat metric.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Reduce into `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    // truncating cast is much cheaper than floor() on baseline x86-64
    let r = if x.abs() < 4.5e15 {
        let f = x - (x as i64) as f64;
        if f < 0.0 {
            f + 1.0
        } else {
            f
        }
    } else {
        x - x.floor()
    };
    // x slightly below an integer can round to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Points are stored on the lattice `2^-53 Z / Z`, the resolution of a
/// uniform `f64` in `[0, 1)`. Orbits are iterated exactly on this lattice.
pub const LATTICE_BITS: u32 = 53;
const LATTICE: f64 = (1u64 << LATTICE_BITS) as f64;

/// Nearest lattice point, reduced mod 1.
#[inline]
pub fn snap(x: f64) -> f64 {
    from_fixed(to_fixed(x))
}

/// Fixed point image of `x mod 1` in units of `2^-64`, a multiple of `2^11`.
#[inline]
pub fn to_fixed(x: f64) -> u64 {
    let k = (wrap(x) * LATTICE).round() as u64;
    (k & ((1u64 << LATTICE_BITS) - 1)) << (64 - LATTICE_BITS)
}

#[inline]
pub fn from_fixed(v: u64) -> f64 {
    // below 2^53, so the signed conversion is exact and cheaper
    (v >> (64 - LATTICE_BITS)) as i64 as f64 * (1.0 / LATTICE)
}

/// Distance on the circle `R/Z` for inputs already in `[0, 1)`.
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Flat-torus Euclidean distance.
pub fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = circle_dist(*x, *y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    /// Builds a point, reducing every coordinate mod 1.
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        let mut c: Vec<f64> = coords.into();
        c.iter_mut().for_each(|x| *x = wrap(*x));
        Self(c)
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn to_fixed(&self) -> Vec<u64> {
        self.0.iter().map(|x| to_fixed(*x)).collect()
    }

    pub fn from_fixed(v: &[u64]) -> Self {
        Self(v.iter().map(|x| from_fixed(*x)).collect())
    }

    /// Concatenation `(x, y)` of a fiber point and a base point.
    pub fn join(x: &TorusPoint, y: &TorusPoint) -> TorusPoint {
        let mut c = x.0.clone();
        c.extend_from_slice(&y.0);
        TorusPoint(c)
    }

    pub fn split(&self, at: usize) -> (TorusPoint, TorusPoint) {
        (TorusPoint(self.0[..at].to_vec()), TorusPoint(self.0[at..].to_vec()))
    }

    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_dist(&self.0, &other.0)
    }

    pub(crate) fn expect_dim(&self, dim: usize, what: &str) -> Result<()> {
        if self.dim() != dim {
            return Err(invalid(format!(
                "{what}: point has dimension {}, expected {dim}",
                self.dim()
            )));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for TorusPoint {
    fn from(v: Vec<f64>) -> Self {
        TorusPoint::new(v)
    }
}

impl From<TorusPoint> for Vec<f64> {
    fn from(p: TorusPoint) -> Self {
        p.0
    }
}

/// Uniform point on `[0,1)^dim`.
pub fn sample_point(dim: usize, rng: &mut RngStream) -> Result<TorusPoint> {
    if dim == 0 {
        return Err(invalid("sample_point: dimension must be positive"));
    }
    Ok(TorusPoint((0..dim).map(|_| rng.uniform()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_handles_negative_and_tiny_values() {
        assert_eq!(wrap(1.25), 0.25);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(-1e-300), 0.0);
        assert_eq!(wrap(3.0), 0.0);
        assert_eq!(wrap(-3.0), 0.0);
        assert_eq!(wrap(-2.75), 0.25);
        assert_eq!(wrap(1e17 + 0.0), 0.0);
    }

    #[test]
    fn lattice_roundtrip() {
        for x in [0.0, 0.1, 0.5, 0.999_999_999_999_999_9, 1e-20, 0.3] {
            let s = snap(x);
            assert!(circle_dist(s, wrap(x)) <= 2f64.powi(-54));
            assert_eq!(from_fixed(to_fixed(s)), s);
            assert!((0.0..1.0).contains(&s));
        }
        assert_eq!(to_fixed(0.5), 1u64 << 63);
    }

    #[test]
    fn wraparound_distance() {
        assert!((circle_dist(0.95, 0.0) - 0.05).abs() < 1e-15);
        let d = torus_dist(&[0.95, 0.0], &[0.0, 0.0]);
        assert!((d - 0.05).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_point(1, &mut RngStream::new(42, 0)).unwrap();
        let b = sample_point(1, &mut RngStream::new(42, 0)).unwrap();
        assert_eq!(a, b);
        assert!(sample_point(0, &mut RngStream::new(42, 0)).is_err());
    }

    proptest! {
        #[test]
        fn coordinates_always_in_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 1..5)) {
            let p = TorusPoint::new(v);
            prop_assert!(p.coords().iter().all(|x| (0.0..1.0).contains(x)));
        }
    }
}
