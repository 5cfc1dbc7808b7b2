//! Target sets: closed balls, boxes, rectangles `A × B` and labeled disjoint
//! unions, each with exact Lebesgue measure.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::torus::{circle_dist, sample_point, TorusPoint};

/// Radii and halfwidths must stay below this so balls lift injectively.
pub const MAX_RADIUS: f64 = 0.25;

/// Rejection attempts before `sample_in_target` gives up on a ball.
pub const REJECTION_CAP: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSet {
    /// Closed ball in the flat metric, `radius < 1/4`.
    Ball { center: TorusPoint, radius: f64 },
    /// Closed box, every halfwidth `≤ 1/4`.
    Box {
        center: TorusPoint,
        halfwidths: Vec<f64>,
    },
    /// `x × y`, with `x` on the leading coordinates.
    Rect {
        x: std::boxed::Box<TargetSet>,
        y: std::boxed::Box<TargetSet>,
    },
    /// Pairwise disjoint components labeled `1..=K` in order.
    Union { components: Vec<TargetSet> },
    Whole { dim: usize },
    Empty { dim: usize },
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

fn check_extent(v: f64, inclusive: bool, what: &str) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(invalid(format!("{what} must be positive and finite, got {v}")));
    }
    let too_big = if inclusive { v > MAX_RADIUS } else { v >= MAX_RADIUS };
    if too_big {
        return Err(Error::UnsupportedGeometry(format!(
            "{what} {v} exceeds the 1/4 injectivity limit"
        )));
    }
    Ok(())
}

impl TargetSet {
    pub fn ball(center: impl Into<TorusPoint>, radius: f64) -> Result<Self> {
        let t = TargetSet::Ball {
            center: center.into(),
            radius,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn cube(center: impl Into<TorusPoint>, halfwidth: f64) -> Result<Self> {
        let center = center.into();
        let d = center.dim();
        Self::boxed(center, vec![halfwidth; d])
    }

    pub fn boxed(center: impl Into<TorusPoint>, halfwidths: Vec<f64>) -> Result<Self> {
        let t = TargetSet::Box {
            center: center.into(),
            halfwidths,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn rect(x: TargetSet, y: TargetSet) -> Result<Self> {
        let t = TargetSet::Rect {
            x: std::boxed::Box::new(x),
            y: std::boxed::Box::new(y),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn union(components: Vec<TargetSet>) -> Result<Self> {
        let t = TargetSet::Union { components };
        t.validate()?;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSet::Ball { center, .. } | TargetSet::Box { center, .. } => center.dim(),
            TargetSet::Rect { x, y } => x.dim() + y.dim(),
            TargetSet::Union { components } => components.first().map_or(0, |c| c.dim()),
            TargetSet::Whole { dim } | TargetSet::Empty { dim } => *dim,
        }
    }

    /// Number of labels: components of a union, 1 otherwise.
    pub fn label_count(&self) -> usize {
        match self {
            TargetSet::Union { components } => components.len(),
            _ => 1,
        }
    }

    pub fn components(&self) -> Vec<&TargetSet> {
        match self {
            TargetSet::Union { components } => components.iter().collect(),
            other => vec![other],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSet::Ball { center, radius } => {
                if center.dim() == 0 {
                    return Err(invalid("ball needs a center of positive dimension"));
                }
                check_extent(*radius, false, "ball radius")
            }
            TargetSet::Box { center, halfwidths } => {
                if center.dim() == 0 || halfwidths.len() != center.dim() {
                    return Err(invalid("box needs one halfwidth per center coordinate"));
                }
                halfwidths
                    .iter()
                    .try_for_each(|h| check_extent(*h, true, "box halfwidth"))
            }
            TargetSet::Rect { x, y } => {
                if matches!(**x, TargetSet::Union { .. }) || matches!(**y, TargetSet::Union { .. }) {
                    return Err(invalid("rectangle factors cannot be unions"));
                }
                x.validate()?;
                y.validate()
            }
            TargetSet::Union { components } => {
                if components.is_empty() {
                    return Err(invalid("a labeled union needs at least one component"));
                }
                let d = components[0].dim();
                for c in components {
                    if matches!(c, TargetSet::Union { .. }) {
                        return Err(invalid("nested unions are not supported"));
                    }
                    c.validate()?;
                    if c.dim() != d {
                        return Err(invalid("union components differ in dimension"));
                    }
                }
                for i in 0..components.len() {
                    for j in i + 1..components.len() {
                        if !certified_disjoint(&components[i], &components[j]) {
                            return Err(invalid(format!(
                                "union components {} and {} are not certified disjoint",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
                Ok(())
            }
            TargetSet::Whole { dim } | TargetSet::Empty { dim } => {
                if *dim == 0 {
                    return Err(invalid("dimension must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Membership for a coordinate slice of the right length.
    #[inline]
    pub fn contains_coords(&self, p: &[f64]) -> bool {
        match self {
            TargetSet::Ball { center, radius } => {
                let r2 = radius * radius;
                let mut s = 0.0;
                for (a, b) in p.iter().zip(center.coords()) {
                    let d = circle_dist(*a, *b);
                    s += d * d;
                    if s > r2 {
                        return false;
                    }
                }
                true
            }
            TargetSet::Box { center, halfwidths } => p
                .iter()
                .zip(center.coords())
                .zip(halfwidths)
                .all(|((a, b), h)| circle_dist(*a, *b) <= *h),
            TargetSet::Rect { x, y } => {
                let k = x.dim();
                x.contains_coords(&p[..k]) && y.contains_coords(&p[k..])
            }
            TargetSet::Union { components } => components.iter().any(|c| c.contains_coords(p)),
            TargetSet::Whole { .. } => true,
            TargetSet::Empty { .. } => false,
        }
    }

    /// 1-based label of the component containing `p`.
    #[inline]
    pub fn label_of(&self, p: &[f64]) -> Option<usize> {
        match self {
            TargetSet::Union { components } => {
                components.iter().position(|c| c.contains_coords(p)).map(|i| i + 1)
            }
            other => other.contains_coords(p).then_some(1),
        }
    }

    pub fn contains(&self, p: &TorusPoint) -> Result<bool> {
        p.expect_dim(self.dim(), "target_contains")?;
        Ok(self.contains_coords(p.coords()))
    }

    pub fn label(&self, p: &TorusPoint) -> Result<Option<usize>> {
        p.expect_dim(self.dim(), "target_contains")?;
        Ok(self.label_of(p.coords()))
    }

    /// Exact Lebesgue measure.
    pub fn measure(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.measure_unchecked())
    }

    fn measure_unchecked(&self) -> f64 {
        match self {
            TargetSet::Ball { center, radius } => {
                unit_ball_volume(center.dim()) * radius.powi(center.dim() as i32)
            }
            TargetSet::Box { halfwidths, .. } => halfwidths.iter().map(|h| 2.0 * h).product(),
            TargetSet::Rect { x, y } => x.measure_unchecked() * y.measure_unchecked(),
            TargetSet::Union { components } => {
                components.iter().map(|c| c.measure_unchecked()).sum()
            }
            TargetSet::Whole { .. } => 1.0,
            TargetSet::Empty { .. } => 0.0,
        }
    }

    /// Uniform sample from the target.
    pub fn sample(&self, rng: &mut RngStream) -> Result<TorusPoint> {
        match self {
            TargetSet::Ball { center, radius } => {
                let d = center.dim();
                let mut offset = vec![0.0; d];
                for _ in 0..REJECTION_CAP {
                    for o in offset.iter_mut() {
                        *o = (2.0 * rng.uniform() - 1.0) * radius;
                    }
                    if offset.iter().map(|o| o * o).sum::<f64>() <= radius * radius {
                        return Ok(TorusPoint::new(
                            center.coords().iter().zip(&offset).map(|(c, o)| c + o).collect::<Vec<_>>(),
                        ));
                    }
                }
                Err(Error::Internal(format!(
                    "ball rejection sampler failed {REJECTION_CAP} times"
                )))
            }
            TargetSet::Box { center, halfwidths } => Ok(TorusPoint::new(
                center
                    .coords()
                    .iter()
                    .zip(halfwidths)
                    .map(|(c, h)| c + (2.0 * rng.uniform() - 1.0) * h)
                    .collect::<Vec<_>>(),
            )),
            TargetSet::Rect { x, y } => {
                let a = x.sample(rng)?;
                let b = y.sample(rng)?;
                Ok(TorusPoint::join(&a, &b))
            }
            TargetSet::Union { components } => {
                let total = self.measure_unchecked();
                let mut u = rng.uniform() * total;
                for c in components {
                    let m = c.measure_unchecked();
                    if u < m {
                        return c.sample(rng);
                    }
                    u -= m;
                }
                components.last().expect("non-empty union").sample(rng)
            }
            TargetSet::Whole { dim } => sample_point(*dim, rng),
            TargetSet::Empty { .. } => Err(invalid("cannot sample from the empty set")),
        }
    }
}

/// Per-coordinate half extents of a bounded component, `None` for `Whole`.
fn half_extents(t: &TargetSet) -> Option<(Vec<f64>, Vec<f64>)> {
    match t {
        TargetSet::Ball { center, radius } => {
            Some((center.coords().to_vec(), vec![*radius; center.dim()]))
        }
        TargetSet::Box { center, halfwidths } => Some((center.coords().to_vec(), halfwidths.clone())),
        _ => None,
    }
}

/// Conservative disjointness test: `true` only when disjointness is proven.
fn certified_disjoint(a: &TargetSet, b: &TargetSet) -> bool {
    match (a, b) {
        (TargetSet::Empty { .. }, _) | (_, TargetSet::Empty { .. }) => true,
        (
            TargetSet::Ball {
                center: c1,
                radius: r1,
            },
            TargetSet::Ball {
                center: c2,
                radius: r2,
            },
        ) => c1.distance(c2) > r1 + r2,
        (TargetSet::Rect { x: x1, y: y1 }, TargetSet::Rect { x: x2, y: y2 }) => {
            certified_disjoint(x1, x2) || certified_disjoint(y1, y2)
        }
        _ => match (half_extents(a), half_extents(b)) {
            (Some((c1, h1)), Some((c2, h2))) => c1
                .iter()
                .zip(&c2)
                .zip(h1.iter().zip(&h2))
                .any(|((u, v), (s, t))| circle_dist(*u, *v) > s + t),
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_examples() {
        let b = TargetSet::ball(vec![0.0, 0.0], 0.1).unwrap();
        assert!(b.contains(&TorusPoint::new(vec![0.95, 0.0])).unwrap());
        let bx = TargetSet::cube(vec![0.5], 0.1).unwrap();
        assert!(!bx.contains(&TorusPoint::new(vec![0.61])).unwrap());
        let u = TargetSet::union(vec![
            TargetSet::ball(vec![0.1], 0.02).unwrap(),
            TargetSet::ball(vec![0.9], 0.02).unwrap(),
        ])
        .unwrap();
        assert_eq!(u.label(&TorusPoint::new(vec![0.905])).unwrap(), Some(2));
        assert_eq!(u.label(&TorusPoint::new(vec![0.5])).unwrap(), None);
        assert!(b.contains(&TorusPoint::new(vec![0.5])).is_err());
    }

    #[test]
    fn measure_examples() {
        let b = TargetSet::ball(vec![0.3, 0.3], 0.1).unwrap();
        assert!((b.measure().unwrap() - PI * 0.01).abs() < 1e-15);
        let bx = TargetSet::boxed(vec![0.5, 0.5], vec![0.1, 0.2]).unwrap();
        assert!((bx.measure().unwrap() - 0.08).abs() < 1e-15);
        let u = TargetSet::union(vec![
            TargetSet::ball(vec![0.1], 0.02).unwrap(),
            TargetSet::ball(vec![0.9], 0.02).unwrap(),
        ])
        .unwrap();
        assert!((u.measure().unwrap() - 0.08).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn geometry_limits() {
        assert!(matches!(
            TargetSet::ball(vec![0.0], 0.25),
            Err(Error::UnsupportedGeometry(_))
        ));
        assert!(matches!(TargetSet::ball(vec![0.0], -0.1), Err(Error::InvalidInput(_))));
        // half-circle [0, 1/2] is a legal box
        assert!(TargetSet::cube(vec![0.25], 0.25).is_ok());
        assert!(TargetSet::union(vec![
            TargetSet::ball(vec![0.1], 0.02).unwrap(),
            TargetSet::ball(vec![0.12], 0.02).unwrap(),
        ])
        .is_err());
    }

    #[test]
    fn union_of_rectangles_disjoint_in_either_factor() {
        let r1 = TargetSet::rect(
            TargetSet::ball(vec![0.1, 0.1], 0.05).unwrap(),
            TargetSet::cube(vec![0.2], 0.05).unwrap(),
        )
        .unwrap();
        let r2 = TargetSet::rect(
            TargetSet::ball(vec![0.1, 0.1], 0.05).unwrap(),
            TargetSet::cube(vec![0.4], 0.05).unwrap(),
        )
        .unwrap();
        let u = TargetSet::union(vec![r1, r2]).unwrap();
        assert_eq!(u.dim(), 3);
        assert_eq!(u.label(&TorusPoint::new(vec![0.1, 0.1, 0.41])).unwrap(), Some(2));
    }

    #[test]
    fn samples_land_inside() {
        let mut rng = RngStream::new(1, 2);
        let targets = vec![
            TargetSet::ball(vec![0.99, 0.01], 0.1).unwrap(),
            TargetSet::boxed(vec![0.0, 0.5], vec![0.1, 0.25]).unwrap(),
            TargetSet::union(vec![
                TargetSet::ball(vec![0.1], 0.02).unwrap(),
                TargetSet::ball(vec![0.9], 0.04).unwrap(),
            ])
            .unwrap(),
        ];
        for t in &targets {
            for _ in 0..10_000 {
                let p = t.sample(&mut rng).unwrap();
                assert!(t.contains(&p).unwrap());
            }
        }
        assert!(TargetSet::Empty { dim: 1 }.sample(&mut rng).is_err());
    }

    #[test]
    fn mean_distance_in_disk() {
        let b = TargetSet::ball(vec![0.5, 0.5], 0.1).unwrap();
        let c = TorusPoint::new(vec![0.5, 0.5]);
        let mut rng = RngStream::new(42, 7);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| b.sample(&mut rng).unwrap().distance(&c)).sum();
        // uniform disk: E|p − c| = 2r/3
        assert!((s / n as f64 - 0.2 / 3.0).abs() < 0.002);
    }

    #[test]
    fn union_sampling_follows_measure() {
        let u = TargetSet::union(vec![
            TargetSet::ball(vec![0.1], 0.01).unwrap(),
            TargetSet::ball(vec![0.5], 0.02).unwrap(),
        ])
        .unwrap();
        let mut rng = RngStream::new(9, 9);
        let n = 30_000;
        let second = (0..n)
            .filter(|_| u.label(&u.sample(&mut rng).unwrap()).unwrap() == Some(2))
            .count();
        let p = second as f64 / n as f64;
        assert!((p - 2.0 / 3.0).abs() < 4.0 * (2.0 / 9.0 / n as f64).sqrt());
    }

    #[test]
    fn json_shape() {
        let t = TargetSet::ball(vec![0.3, 0.7], 0.01).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"ball":{"center":[0.3,0.7],"radius":0.01}}"#);
    }
}
