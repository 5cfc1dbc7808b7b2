//! Torus dynamical systems and their exact iteration.
//!
//! A [`SystemSpec`] is an immutable description; [`Dynamics`] is its compiled
//! form used by every hot loop. Points of fibered systems are laid out as
//! `(x, y)`: fiber coordinates first, then base coordinates, matching
//! `S(x, y) = (T_y(x), R(y))`.
//!
//! Iteration is exact: coordinates live on the lattice `2^-53 Z / Z` (the
//! resolution of a uniform `f64`) and rotations, skew shifts and integer
//! matrices act on it by wrapping 64-bit integer arithmetic, so there is no
//! rounding drift to bound. Rotation vectors are snapped to the lattice once.
//! A real-valued cocycle in a translation family is the only source of
//! rounding, one lattice unit per step.

mod diophantine;
mod kernel;

pub use diophantine::{diophantine_check, DiophantineOutcome};
pub use kernel::{Dynamics, Orbit, MAX_SYSTEM_DIM};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::torus::TorusPoint;
use crate::trig::TrigPoly;

/// Largest dimension accepted for a single automorphism block.
pub const MAX_AUTO_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSpec {
    /// `x ↦ x + α`.
    Rotation { alpha: Vec<f64> },
    /// `(x, y) ↦ (x + α, y + x)` on the 2-torus.
    SkewShift { alpha: f64 },
    /// `x ↦ M x` for an integer matrix with determinant ±1.
    ToralAuto { matrix: Vec<Vec<i64>> },
    /// `x ↦ 2x` on the circle.
    Doubling,
    /// Direct product; `x` acts on the leading coordinates.
    Product {
        x: Box<SystemSpec>,
        y: Box<SystemSpec>,
    },
    /// `(x, y) ↦ (G_{τ(y)}(x), R(y))`.
    SkewProduct {
        family: FiberFamily,
        tau: TauSpec,
        base: Box<SystemSpec>,
    },
}

/// The flow or group action `t ↦ G_t` driven by the cocycle in a skew product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberFamily {
    /// `G_t(x) = x + t β`, any real `t`.
    Translation { beta: Vec<f64> },
    /// `G_t = M^t`, integer `t` only.
    ToralPower { matrix: Vec<Vec<i64>> },
}

impl FiberFamily {
    pub fn dim(&self) -> usize {
        match self {
            FiberFamily::Translation { beta } => beta.len(),
            FiberFamily::ToralPower { matrix } => matrix.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FiberFamily::Translation { beta } => {
                if beta.is_empty() || beta.iter().any(|b| !b.is_finite()) {
                    return Err(invalid("translation family needs a finite, non-empty β"));
                }
                Ok(())
            }
            FiberFamily::ToralPower { matrix } => check_unimodular(matrix).map(|_| ()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauKind {
    /// Step function of the first base coordinate: `values[i]` on
    /// `[breakpoints[i-1], breakpoints[i])` with implicit end points 0 and 1.
    IntegerStep {
        breakpoints: Vec<f64>,
        values: Vec<i64>,
    },
    TrigPoly(TrigPoly),
}

/// Skewing cocycle `τ : Y → R`. Constructed through [`TauSpec::new`] it is
/// guaranteed to have zero mean; [`TauSpec::uncentered`] exists for controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TauKind", into = "TauKind")]
pub struct TauSpec {
    kind: TauKind,
    mean: f64,
}

pub const TAU_MEAN_TOLERANCE: f64 = 1e-12;

impl TauSpec {
    pub fn new(kind: TauKind) -> Result<Self> {
        let t = Self::uncentered(kind)?;
        if t.mean.abs() > TAU_MEAN_TOLERANCE {
            return Err(invalid(format!("τ must have zero mean, got {}", t.mean)));
        }
        Ok(t)
    }

    /// A cocycle whose mean is allowed to be non-zero (drift controls).
    pub fn uncentered(kind: TauKind) -> Result<Self> {
        let mean = match &kind {
            TauKind::IntegerStep { breakpoints, values } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(invalid("integer step τ needs one more value than breakpoints"));
                }
                let mut prev = 0.0;
                for b in breakpoints {
                    if !(*b > prev && *b < 1.0) {
                        return Err(invalid("τ breakpoints must increase strictly inside (0,1)"));
                    }
                    prev = *b;
                }
                let mut edges = vec![0.0];
                edges.extend_from_slice(breakpoints);
                edges.push(1.0);
                edges
                    .windows(2)
                    .zip(values)
                    .map(|(w, v)| (w[1] - w[0]) * *v as f64)
                    .sum()
            }
            TauKind::TrigPoly(p) => {
                if let Some(d) = p.dim() {
                    p.validate(d)?;
                }
                p.mean()
            }
        };
        Ok(Self { kind, mean })
    }

    /// `+1` on `[0, ½)`, `-1` on `[½, 1)`.
    pub fn plus_minus_one() -> Self {
        Self::new(TauKind::IntegerStep {
            breakpoints: vec![0.5],
            values: vec![1, -1],
        })
        .expect("balanced step has zero mean")
    }

    pub fn kind(&self) -> &TauKind {
        &self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn is_integer_valued(&self) -> bool {
        matches!(self.kind, TauKind::IntegerStep { .. })
    }

    /// τ vanishes identically.
    pub fn is_degenerate(&self) -> bool {
        match &self.kind {
            TauKind::IntegerStep { values, .. } => values.iter().all(|v| *v == 0),
            TauKind::TrigPoly(p) => p.is_identically_zero(),
        }
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        match &self.kind {
            TauKind::IntegerStep { breakpoints, values } => {
                let i = breakpoints.partition_point(|b| *b <= y[0]);
                values[i] as f64
            }
            TauKind::TrigPoly(p) => p.eval(y),
        }
    }

    fn validate_for_base(&self, base_dim: usize) -> Result<()> {
        if let TauKind::TrigPoly(p) = &self.kind {
            p.validate(base_dim)?;
        }
        Ok(())
    }
}

impl TryFrom<TauKind> for TauSpec {
    type Error = Error;
    fn try_from(kind: TauKind) -> Result<Self> {
        TauSpec::new(kind)
    }
}

impl From<TauSpec> for TauKind {
    fn from(t: TauSpec) -> Self {
        t.kind
    }
}

/// Determinant of an integer matrix via fraction-free elimination.
fn integer_det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|v| *v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Validates squareness and `det = ±1`; returns the determinant.
pub(crate) fn check_unimodular(m: &[Vec<i64>]) -> Result<i128> {
    let n = m.len();
    if n == 0 || n > MAX_AUTO_DIM || m.iter().any(|r| r.len() != n) {
        return Err(invalid(format!(
            "automorphism matrix must be square with size 1..={MAX_AUTO_DIM}"
        )));
    }
    let det = integer_det(m);
    if det.abs() != 1 {
        return Err(invalid(format!(
            "automorphism matrix has determinant {det}, need ±1"
        )));
    }
    Ok(det)
}

/// Exact inverse of a unimodular integer matrix.
pub(crate) fn integer_inverse(m: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    check_unimodular(m)?;
    let n = m.len();
    // Cofactor expansion: inv[j][i] = (-1)^{i+j} det(minor(i,j)) / det.
    let det = integer_det(m);
    let mut inv = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let cof = if n == 1 {
                1
            } else {
                let minor: Vec<Vec<i64>> = m
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| *r != i)
                    .map(|(_, row)| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                integer_det(&minor)
            };
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            inv[j][i] = i64::try_from(s * cof * det)
                .map_err(|_| invalid("automorphism inverse overflows i64"))?;
        }
    }
    Ok(inv)
}

impl SystemSpec {
    pub fn rotation(alpha: Vec<f64>) -> Result<Self> {
        let s = SystemSpec::Rotation { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn skew_shift(alpha: f64) -> Result<Self> {
        let s = SystemSpec::SkewShift { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn toral_auto(matrix: Vec<Vec<i64>>) -> Result<Self> {
        let s = SystemSpec::ToralAuto { matrix };
        s.validate()?;
        Ok(s)
    }

    /// The cat map `[[2,1],[1,1]]`.
    pub fn cat_map() -> Self {
        SystemSpec::ToralAuto {
            matrix: vec![vec![2, 1], vec![1, 1]],
        }
    }

    /// Rotation by the golden mean `(√5 − 1)/2`.
    pub fn golden_rotation() -> Self {
        SystemSpec::Rotation {
            alpha: vec![(5f64.sqrt() - 1.0) / 2.0],
        }
    }

    pub fn product(x: SystemSpec, y: SystemSpec) -> Result<Self> {
        let s = SystemSpec::Product {
            x: Box::new(x),
            y: Box::new(y),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn skew_product(family: FiberFamily, tau: TauSpec, base: SystemSpec) -> Result<Self> {
        let s = SystemSpec::SkewProduct {
            family,
            tau,
            base: Box::new(base),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Rotation { alpha } => alpha.len(),
            SystemSpec::SkewShift { .. } => 2,
            SystemSpec::ToralAuto { matrix } => matrix.len(),
            SystemSpec::Doubling => 1,
            SystemSpec::Product { x, y } => x.dim() + y.dim(),
            SystemSpec::SkewProduct { family, base, .. } => family.dim() + base.dim(),
        }
    }

    /// Dimension of the fiber `X` for fibered systems.
    pub fn fiber_dim(&self) -> Option<usize> {
        match self {
            SystemSpec::Product { x, .. } => Some(x.dim()),
            SystemSpec::SkewProduct { family, .. } => Some(family.dim()),
            _ => None,
        }
    }

    /// The driving system `R` on `Y` for fibered systems.
    pub fn base(&self) -> Option<&SystemSpec> {
        match self {
            SystemSpec::Product { y, .. } => Some(y),
            SystemSpec::SkewProduct { base, .. } => Some(base),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::Rotation { alpha } => {
                if alpha.is_empty() || alpha.iter().any(|a| !a.is_finite()) {
                    return Err(invalid("rotation needs a finite, non-empty α"));
                }
            }
            SystemSpec::SkewShift { alpha } => {
                if !alpha.is_finite() {
                    return Err(invalid("skew shift needs a finite α"));
                }
            }
            SystemSpec::ToralAuto { matrix } => {
                check_unimodular(matrix)?;
            }
            SystemSpec::Doubling => {}
            SystemSpec::Product { x, y } => {
                x.validate()?;
                y.validate()?;
            }
            SystemSpec::SkewProduct { family, tau, base } => {
                family.validate()?;
                base.validate()?;
                tau.validate_for_base(base.dim())?;
                if matches!(family, FiberFamily::ToralPower { .. }) && !tau.is_integer_valued() {
                    return Err(invalid(
                        "integer powers of an automorphism need an integer-valued τ",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> Result<Dynamics> {
        self.validate()?;
        Dynamics::compile(self)
    }

    /// Contains a doubling factor (Monte Carlo orbits refine its low bits).
    pub fn has_doubling(&self) -> bool {
        match self {
            SystemSpec::Doubling => true,
            SystemSpec::Product { x, y } => x.has_doubling() || y.has_doubling(),
            SystemSpec::SkewProduct { base, .. } => base.has_doubling(),
            _ => false,
        }
    }
}

/// `n`-th forward image of `p`.
pub fn iterate(system: &SystemSpec, p: &TorusPoint, n: u64) -> Result<TorusPoint> {
    let dynamics = system.dynamics()?;
    p.expect_dim(dynamics.dim(), "iterate")?;
    Ok(dynamics.advance_point(p, n))
}

/// `T^n_y(x)`: the fiber coordinate after `n` steps driven from base point `y`.
pub fn iterate_fiber(
    system: &SystemSpec,
    x: &TorusPoint,
    y: &TorusPoint,
    n: u64,
) -> Result<TorusPoint> {
    let xd = system
        .fiber_dim()
        .ok_or_else(|| invalid("iterate_fiber needs a product or skew-product system"))?;
    x.expect_dim(xd, "iterate_fiber x")?;
    y.expect_dim(system.dim() - xd, "iterate_fiber y")?;
    let full = iterate(system, &TorusPoint::join(x, y), n)?;
    Ok(full.split(xd).0)
}

/// Ergodic sum `τ_n(y) = Σ_{j<n} τ(R^j y)`.
pub fn tau_ergodic_sum(tau: &TauSpec, base: &SystemSpec, y: &TorusPoint, n: u64) -> Result<f64> {
    let dynamics = base.dynamics()?;
    y.expect_dim(dynamics.dim(), "tau_ergodic_sum")?;
    tau.validate_for_base(dynamics.dim())?;
    let mut orbit = dynamics.orbit(y);
    let mut sum = 0.0;
    for _ in 0..n {
        sum += tau.eval(orbit.coords());
        orbit.step();
    }
    Ok(sum)
}
