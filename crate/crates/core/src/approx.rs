//! Smooth sandwiches for ball indicators and Monte Carlo decorrelation.
//!
//! The transition profile is `θ = 1 − S_r` on `[0, 1]` (1 below, 0 above),
//! where `S_r` is the smoothstep polynomial of degree `2r + 1`:
//!
//! ```text
//! S_r(x) = x^{r+1} Σ_{n=0}^{r} C(r+n, n) C(2r+1, r−n) (−x)^n
//! ```
//!
//! `S_r` has vanishing derivatives of orders `1..=r` at both ends, so `θ` is
//! `C^r` (and no better). For a ball `B_t(c)`:
//!
//! ```text
//! upper(x) = θ((|x − c| − t) / ε)          = 1 on B_t,      0 beyond t + ε
//! lower(x) = θ((|x − c| − (t − ε)) / ε)    = 1 on B_{t−ε},  0 beyond t
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{Domain, RngStream};
use crate::systems::SystemSpec;
use crate::targets::{unit_ball_volume, TargetSet};
use crate::torus::{sample_point, torus_dist};

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of `S_r` in powers of `x`, lowest first.
fn smoothstep_coefficients(r: u32) -> Vec<f64> {
    let r = r as u64;
    let mut c = vec![0.0; (2 * r + 2) as usize];
    for n in 0..=r {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        c[(r + 1 + n) as usize] = sign * binomial(r + n, n) * binomial(2 * r + 1, r - n);
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothstep {
    r: u32,
    coefficients: Vec<f64>,
}

impl Smoothstep {
    pub fn new(r: u32) -> Self {
        Self {
            r,
            coefficients: smoothstep_coefficients(r),
        }
    }

    pub fn order(&self) -> u32 {
        self.r
    }

    /// `S_r(x)` clamped to 0 below 0 and 1 above 1.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c).clamp(0.0, 1.0)
    }

    /// `k`-th derivative of the polynomial (no clamping), for tests.
    pub fn derivative(&self, k: u32, x: f64) -> f64 {
        let mut c = self.coefficients.clone();
        for _ in 0..k {
            c = c.iter().enumerate().skip(1).map(|(i, v)| i as f64 * v).collect();
        }
        c.iter().rev().fold(0.0, |acc, v| acc * x + v)
    }

    /// `θ(s) = 1 − S_r(s)`.
    #[inline]
    pub fn theta(&self, s: f64) -> f64 {
        1.0 - self.eval(s)
    }
}

/// A scalar function on the torus with a natural point to probe through.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, p: &[f64]) -> f64;
    /// Point whose coordinate lines the norm estimate scans.
    fn anchor(&self) -> Vec<f64>;
    /// Width of the thinnest feature, if known.
    fn resolution(&self) -> Option<f64> {
        None
    }
}

/// Adapter for closures.
pub struct FnField<F> {
    pub dim: usize,
    pub anchor: Vec<f64>,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, p: &[f64]) -> f64 {
        (self.f)(p)
    }
    fn anchor(&self) -> Vec<f64> {
        self.anchor.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpPair {
    pub center: Vec<f64>,
    pub radius: f64,
    pub epsilon: f64,
    pub profile: Smoothstep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// One side of a [`BumpPair`] as a [`ScalarField`].
pub struct BumpField<'a> {
    pub pair: &'a BumpPair,
    pub side: Side,
}

impl ScalarField for BumpField<'_> {
    fn dim(&self) -> usize {
        self.pair.center.len()
    }
    fn eval(&self, p: &[f64]) -> f64 {
        match self.side {
            Side::Lower => self.pair.lower(p),
            Side::Upper => self.pair.upper(p),
        }
    }
    fn anchor(&self) -> Vec<f64> {
        self.pair.center.clone()
    }
    fn resolution(&self) -> Option<f64> {
        Some(self.pair.epsilon)
    }
}

/// Smooth sandwich `lower ≤ 1_B ≤ upper` for a ball target. Requires
/// `0 < ε < λ(B)^{1/d} / 10`.
pub fn build_bump(target: &TargetSet, epsilon: f64, r: u32) -> Result<BumpPair> {
    let TargetSet::Ball { center, radius } = target else {
        return Err(invalid("bump sandwiches are built for balls"));
    };
    target.validate()?;
    if r == 0 {
        return Err(invalid("smoothness order must be at least 1"));
    }
    let d = center.dim();
    let limit = target.measure()?.powf(1.0 / d as f64) / 10.0;
    if !(epsilon > 0.0 && epsilon < limit) {
        return Err(invalid(format!("ε must lie in (0, {limit}), got {epsilon}")));
    }
    Ok(BumpPair {
        center: center.coords().to_vec(),
        radius: *radius,
        epsilon,
        profile: Smoothstep::new(r),
    })
}

impl BumpPair {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    #[inline]
    pub fn upper(&self, p: &[f64]) -> f64 {
        let s = torus_dist(p, &self.center);
        self.profile.theta((s - self.radius) / self.epsilon)
    }

    #[inline]
    pub fn lower(&self, p: &[f64]) -> f64 {
        let s = torus_dist(p, &self.center);
        self.profile.theta((s - (self.radius - self.epsilon)) / self.epsilon)
    }

    pub fn indicator(&self, p: &[f64]) -> f64 {
        if torus_dist(p, &self.center) <= self.radius {
            1.0
        } else {
            0.0
        }
    }

    /// Exact `λ(upper ≠ 1_B)`: the annulus `t < |x − c| < t + ε`.
    pub fn upper_shell_measure(&self) -> f64 {
        let d = self.dim() as i32;
        unit_ball_volume(self.dim()) * ((self.radius + self.epsilon).powi(d) - self.radius.powi(d))
    }

    /// Exact `λ(lower ≠ 1_B)`: the annulus `t − ε < |x − c| ≤ t`.
    pub fn lower_shell_measure(&self) -> f64 {
        let d = self.dim() as i32;
        unit_ball_volume(self.dim()) * (self.radius.powi(d) - (self.radius - self.epsilon).powi(d))
    }

    /// `d · C_1^{1/d} · λ(B)^{(d−1)/d} · ε` with `C_1` the unit-ball volume:
    /// the first-order shell estimate `C_1 d t^{d−1} ε`. The upper annulus
    /// exceeds it by the higher order terms in `ε / t`.
    pub fn shell_bound(&self) -> f64 {
        let d = self.dim() as f64;
        let c1 = unit_ball_volume(self.dim());
        let vol = c1 * self.radius.powf(d);
        d * c1.powf(1.0 / d) * vol.powf((d - 1.0) / d) * self.epsilon
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrNormEstimate {
    /// `sup |∂^k f|` over the probe lines, `k = 0..=r`.
    pub per_order: Vec<f64>,
    pub norm: f64,
    pub spacing: f64,
}

/// Central difference weights `(−1)^i C(k, i)` at offsets `(k/2 − i) h`.
fn central_difference(f: impl Fn(f64) -> f64, x: f64, k: u32, h: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..=k {
        let w = binomial(k as u64, i as u64) * if i % 2 == 0 { 1.0 } else { -1.0 };
        s += w * f(x + (k as f64 / 2.0 - i as f64) * h);
    }
    s / h.powi(k as i32)
}

/// Lower estimate of the `C^r` norm `max_{k ≤ r} sup |∂^k f|`: central
/// differences of order `k` (error `O(h²)`) along every coordinate line
/// through `field.anchor()`, on a grid of spacing `h` covering the circle.
/// Mixed partials are not probed.
pub fn cr_norm_estimate(field: &dyn ScalarField, r: u32, h: f64) -> Result<CrNormEstimate> {
    if !(h > 0.0 && h < 0.5) {
        return Err(invalid("probe spacing must lie in (0, 1/2)"));
    }
    if let Some(eps) = field.resolution() {
        if h >= eps / 10.0 {
            return Err(invalid(format!(
                "spacing {h} cannot resolve a transition layer of width {eps}"
            )));
        }
    }
    let anchor = field.anchor();
    let steps = (1.0 / h).ceil() as usize;
    let mut per_order = vec![0.0f64; r as usize + 1];
    for axis in 0..field.dim() {
        let line = |s: f64| {
            let mut p = anchor.clone();
            p[axis] = crate::torus::wrap(anchor[axis] + s);
            field.eval(&p)
        };
        let sups: Vec<Vec<f64>> = (0..steps)
            .into_par_iter()
            .map(|i| {
                let s = i as f64 * h - 0.5;
                (0..=r).map(|k| central_difference(line, s, k, h).abs()).collect()
            })
            .collect();
        for row in sups {
            for (k, v) in row.into_iter().enumerate() {
                per_order[k] = per_order[k].max(v);
            }
        }
    }
    let norm = per_order.iter().cloned().fold(0.0, f64::max);
    Ok(CrNormEstimate {
        per_order,
        norm,
        spacing: h,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationReport {
    pub times: Vec<u64>,
    /// Minimal spacing of consecutive times (0 for a single time).
    pub gap: u64,
    pub samples: u64,
    pub joint: f64,
    pub product: f64,
    /// `|μ(∩ T^{-n_i} A_i) − Π μ(A_i)|` with the joint term estimated.
    pub lhs: f64,
    /// Three standard errors of the joint estimate.
    pub mc_error: f64,
}

/// Monte Carlo estimate of `|μ(∩ T^{-n_i} A_i) − Π μ(A_i)|`.
pub fn measure_decorrelation(
    system: &SystemSpec,
    targets: &[TargetSet],
    times: &[u64],
    samples: u64,
    seed: u64,
) -> Result<DecorrelationReport> {
    if targets.is_empty() || targets.len() != times.len() {
        return Err(invalid("need one time per target"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times must increase strictly"));
    }
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    for t in targets {
        if t.dim() != system.dim() {
            return Err(invalid("decorrelation targets must live on the whole space"));
        }
    }
    let product: f64 = targets
        .iter()
        .map(|t| t.measure())
        .collect::<Result<Vec<_>>>()?
        .iter()
        .product();
    let dynamics = system.dynamics()?;
    let d = system.dim();
    let hits: u64 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_sample(seed, Domain::Decorrelation, i);
            let p = sample_point(d, &mut rng).expect("positive dimension");
            let mut orbit = dynamics.refining_orbit(&p, rng);
            let mut now = 0;
            for (t, a) in times.iter().zip(targets) {
                orbit.advance(t - now);
                now = *t;
                if !a.contains_coords(orbit.coords()) {
                    return 0;
                }
            }
            1
        })
        .sum();
    let joint = hits as f64 / samples as f64;
    let gap = times.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(0);
    Ok(DecorrelationReport {
        times: times.to_vec(),
        gap,
        samples,
        joint,
        product,
        lhs: (joint - product).abs(),
        mc_error: 3.0 * (joint * (1.0 - joint) / samples as f64).sqrt(),
    })
}
