//! Empirical checks of the hypotheses behind the limit theorems: EE
//! exponents, pointwise EE envelopes, LR / SLR / NSR recurrence, BA for the
//! cocycle, UC averages, the bad-return census and the dimension inequality.
//!
//! Every checker reports an estimate with its uncertainty next to the
//! verdict; [`ConditionRow`] is the flattened form that goes into reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::approx::measure_decorrelation;
use crate::error::{invalid, Error, Result};
use crate::returns::{next_hit, visits_on_orbit};
use crate::rng::{Domain, RngStream};
use crate::stats::{default_cap, short_return_mass, MassEstimate};
use crate::systems::{SystemSpec, TauSpec};
use crate::targets::TargetSet;
use crate::torus::{sample_point, to_fixed, TorusPoint};
use crate::trig::TrigPoly;

/// Envelope ratios may grow by at most this factor from the first half of
/// the `n` grid to the second before a point is flagged.
pub const ENVELOPE_GROWTH: f64 = 2.0;

/// NSR mass at the smallest radius must fall below this.
pub const NSR_TOLERANCE: f64 = 0.05;

/// UC deviation at the largest `s` must fall below this.
pub const UC_TOLERANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Condition {
    Mem,
    Ee,
    Lr,
    Slr,
    Nsr,
    Ba,
    Uc,
    Kappa,
    Dim,
    Census,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: Condition,
    pub estimate: f64,
    pub uncertainty: f64,
    pub verdict: bool,
    pub note: String,
}

/// `ψ(r) = ξ(r) = log²(1/r)`.
pub fn log_squared_radius(r: f64) -> f64 {
    (1.0 / r).ln().powi(2)
}

/// `ζ(n) = log²(n)`, with `ζ(n) = 0` for `n ≤ 1`.
pub fn log_squared(n: u64) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (n as f64).ln().powi(2)
    }
}

/// `2^lo, 2^{lo+1}, …, 2^hi`.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// `(n, value)` pairs the fit was made on.
    pub pairs: Vec<(u64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% Student-t band on the slope.
    pub band: f64,
    /// All values were numerically zero; slope reported as 0.
    pub degenerate: bool,
}

impl ExponentFit {
    pub fn range(&self) -> (u64, u64) {
        (
            self.pairs.first().map_or(0, |p| p.0),
            self.pairs.last().map_or(0, |p| p.0),
        )
    }
}

/// Least squares of `ln value` on `ln n`.
pub fn fit_exponent(pairs: &[(u64, f64)]) -> Result<ExponentFit> {
    if pairs.len() < 3 {
        return Err(invalid("an exponent fit needs at least three points"));
    }
    if pairs.iter().all(|p| p.1.abs() < 1e-12) {
        return Ok(ExponentFit {
            pairs: pairs.to_vec(),
            slope: 0.0,
            intercept: f64::NEG_INFINITY,
            band: 0.0,
            degenerate: true,
        });
    }
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| ((p.0 as f64).ln(), p.1.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::NoVerdict("fewer than three positive values to fit".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (rss / (k - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, k - 2.0)
        .map_err(|e| Error::Internal(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(ExponentFit {
        pairs: pairs.to_vec(),
        slope,
        intercept,
        band: t * se,
        degenerate: false,
    })
}

fn check_grid(ns: &[u64]) -> Result<()> {
    if ns.len() < 5 {
        return Err(invalid("exponent fits need at least five n values"));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("n grid must increase strictly from 1"));
    }
    Ok(())
}

/// `L²` growth of centered partial sums: `paths[i][k]` is the centered sum of
/// sample `i` after `ns[k]` terms.
pub fn fit_l2_growth(ns: &[u64], paths: &[Vec<f64>]) -> Result<ExponentFit> {
    check_grid(ns)?;
    if paths.is_empty() || paths.iter().any(|p| p.len() != ns.len()) {
        return Err(invalid("one centered sum per grid point and sample"));
    }
    let m = paths.len() as f64;
    let pairs: Vec<(u64, f64)> = ns
        .iter()
        .enumerate()
        .map(|(k, n)| (*n, (paths.iter().map(|p| p[k] * p[k]).sum::<f64>() / m).sqrt()))
        .collect();
    fit_exponent(&pairs)
}

/// Centered ergodic sums `Σ_{j<n} f∘R^j(y) − n∫f` at each grid point.
fn centered_sums(base: &SystemSpec, f: &TrigPoly, y: &TorusPoint, rng: RngStream, ns: &[u64]) -> Result<Vec<f64>> {
    let dynamics = base.dynamics()?;
    let mean = f.mean();
    let mut orbit = dynamics.refining_orbit(y, rng);
    let mut out = Vec::with_capacity(ns.len());
    let mut s = 0.0;
    let mut j = 0u64;
    for n in ns {
        while j < *n {
            if j > 0 {
                orbit.step();
            }
            s += f.eval(orbit.coords()) - mean;
            j += 1;
        }
        out.push(s);
    }
    Ok(out)
}

fn check_fields(base: &SystemSpec, fields: &[TrigPoly]) -> Result<()> {
    if fields.is_empty() {
        return Err(invalid("need at least one test function"));
    }
    for f in fields {
        f.validate(base.dim())?;
    }
    Ok(())
}

/// Exponent `δ₁` in `‖Σ_{j<n} f∘R^j − n∫f‖_{L²} ≲ n^{δ₁}`, from `samples`
/// uniform `y`. With several test functions the largest norm at each `n` is
/// fitted.
pub fn estimate_ee_exponent(
    base: &SystemSpec,
    fields: &[TrigPoly],
    ns: &[u64],
    samples: u64,
    seed: u64,
) -> Result<ExponentFit> {
    check_grid(ns)?;
    check_fields(base, fields)?;
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let d = base.dim();
    let per_field: Vec<ExponentFit> = fields
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let paths = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::for_sample(seed ^ (fi as u64) << 32, Domain::Ergodic, i);
                    let y = sample_point(d, &mut rng)?;
                    centered_sums(base, f, &y, rng, ns)
                })
                .collect::<Result<Vec<_>>>()?;
            fit_l2_growth(ns, &paths)
        })
        .collect::<Result<_>>()?;
    if per_field.len() == 1 {
        return Ok(per_field.into_iter().next().expect("one fit"));
    }
    let pairs: Vec<(u64, f64)> = ns
        .iter()
        .enumerate()
        .map(|(k, n)| (*n, per_field.iter().map(|f| f.pairs[k].1).fold(0.0, f64::max)))
        .collect();
    fit_exponent(&pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub delta: f64,
    /// `(1 + 2δ) / 3`.
    pub delta_prime: f64,
    pub ns: Vec<u64>,
    /// Per `y`: `sup_n |Σ_{j<n} f∘R^j(y) − n∫f| / n^{δ'}`.
    pub envelopes: Vec<f64>,
    /// Per `y`: the ratio grew by more than [`ENVELOPE_GROWTH`] from the first
    /// half of the grid to the second.
    pub flagged: Vec<bool>,
    pub pass_fraction: f64,
}

/// Pointwise version of the EE bound with exponent `δ' = (1 + 2δ)/3`.
pub fn pointwise_ee_check(
    base: &SystemSpec,
    f: &TrigPoly,
    ys: &[TorusPoint],
    ns: &[u64],
    delta: f64,
    seed: u64,
) -> Result<PointwiseReport> {
    check_grid(ns)?;
    check_fields(base, std::slice::from_ref(f))?;
    if ys.is_empty() {
        return Err(invalid("need at least one base point"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("δ must lie in [0, 1)"));
    }
    let dp = (1.0 + 2.0 * delta) / 3.0;
    let half = ns.len() / 2;
    let rows = ys
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            y.expect_dim(base.dim(), "pointwise_ee_check")?;
            let rng = RngStream::for_sample(seed, Domain::Ergodic, i as u64);
            let sums = centered_sums(base, f, y, rng, ns)?;
            let ratios: Vec<f64> = sums.iter().zip(ns).map(|(s, n)| s.abs() / (*n as f64).powf(dp)).collect();
            let early = ratios[..half].iter().cloned().fold(0.0, f64::max);
            let late = ratios[half..].iter().cloned().fold(0.0, f64::max);
            let floor = 1e-9;
            Ok((early.max(late), late > ENVELOPE_GROWTH * early.max(floor)))
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let pass = flagged.iter().filter(|f| !**f).count() as f64 / flagged.len() as f64;
    Ok(PointwiseReport {
        delta,
        delta_prime: dp,
        ns: ns.to_vec(),
        envelopes: rows.iter().map(|r| r.0).collect(),
        flagged,
        pass_fraction: pass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RecurrenceMode {
    /// `φ ≥ c |log r|`.
    Lr { c: f64 },
    /// `φ ≥ ψ(r) = log²(1/r)`.
    Slr,
    /// `μ_B(φ ≤ ξ(r)) → 0` with `ξ(r) = log²(1/r)`.
    Nsr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub radius: f64,
    pub threshold: f64,
    /// LR / SLR: smallest first return over the samples.
    pub min_return: Option<u64>,
    /// NSR: `μ_B(φ_B ≤ ⌈ξ(r)⌉)`.
    pub mass: Option<MassEstimate>,
    pub censored: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub mode: RecurrenceMode,
    pub rows: Vec<RecurrenceRow>,
    pub pass: bool,
}

/// LR / SLR compare the smallest observed return from `samples` points of
/// `B_r(center)` with the threshold; NSR follows the short-return mass over
/// the radius grid, which must not increase and must end below
/// [`NSR_TOLERANCE`].
pub fn check_recurrence(
    system: &SystemSpec,
    center: &TorusPoint,
    radii: &[f64],
    mode: RecurrenceMode,
    samples: u64,
    seed: u64,
) -> Result<RecurrenceReport> {
    if radii.is_empty() {
        return Err(invalid("need at least one radius"));
    }
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let dynamics = system.dynamics()?;
    let d = system.dim();
    let mut rows = Vec::with_capacity(radii.len());
    for (ri, r) in radii.iter().enumerate() {
        let ball = TargetSet::ball(center.clone(), *r)?;
        let row_seed = seed ^ (ri as u64).wrapping_mul(0x9E37_79B9);
        match mode {
            RecurrenceMode::Lr { .. } | RecurrenceMode::Slr => {
                let threshold = match mode {
                    RecurrenceMode::Lr { c } => c * r.ln().abs(),
                    _ => log_squared_radius(*r),
                };
                let cap = default_cap(ball.measure()?);
                let hits = (0..samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = RngStream::for_sample(row_seed, Domain::Recurrence, i);
                        let p = ball.sample(&mut rng)?;
                        let mut orbit = dynamics.refining_orbit(&p, rng);
                        Ok(next_hit(&mut orbit, &ball, d, cap))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let censored = hits.iter().filter(|h| h.is_none()).count() as u64;
                let min_return = hits.iter().flatten().min().copied();
                rows.push(RecurrenceRow {
                    radius: *r,
                    threshold,
                    min_return,
                    mass: None,
                    censored,
                    pass: min_return.is_none_or(|m| m as f64 >= threshold),
                });
            }
            RecurrenceMode::Nsr => {
                let threshold = log_squared_radius(*r);
                let mass = short_return_mass(system, &ball, threshold.ceil() as u64, samples, row_seed)?;
                rows.push(RecurrenceRow {
                    radius: *r,
                    threshold,
                    min_return: None,
                    pass: mass.estimate < NSR_TOLERANCE,
                    mass: Some(mass),
                    censored: 0,
                });
            }
        }
    }
    let pass = match mode {
        RecurrenceMode::Nsr => {
            let mut by_radius: Vec<&RecurrenceRow> = rows.iter().collect();
            by_radius.sort_by(|a, b| b.radius.total_cmp(&a.radius));
            let masses: Vec<&MassEstimate> = by_radius.iter().filter_map(|r| r.mass.as_ref()).collect();
            let monotone = masses.windows(2).all(|w| w[1].estimate <= w[0].estimate + w[0].band.max(w[1].band));
            monotone && by_radius.last().is_some_and(|r| r.pass)
        }
        _ => rows.iter().all(|r| r.pass && r.censored == 0),
    };
    Ok(RecurrenceReport { mode, rows, pass })
}

/// Exact first return of `0` to the open ball `B_r(0)` under the rotation by
/// `α`: the least `m ≤ cap` with `‖mα‖ < r`, computed on the lattice.
pub fn rotation_first_return(alpha: &[f64], r: f64, cap: u64) -> Option<u64> {
    let steps: Vec<u64> = alpha.iter().map(|a| to_fixed(*a)).collect();
    let mut pos = vec![0u64; alpha.len()];
    let scale = 2f64.powi(-64);
    for m in 1..=cap {
        let mut s = 0.0;
        for (p, a) in pos.iter_mut().zip(&steps) {
            *p = p.wrapping_add(*a);
            let signed = *p as i64 as f64 * scale;
            s += signed * signed;
        }
        if s < r * r {
            return Some(m);
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaReport {
    /// `(n, ν(|τ_n| < ζ(n)))`.
    pub probabilities: Vec<(u64, f64)>,
    /// `κ̂ = −slope` of the log-log fit.
    pub kappa: f64,
    pub band: f64,
    pub degenerate: bool,
    /// `κ̂ − band > 0`.
    pub pass: bool,
}

/// Anti-concentration `ν(|τ_n| < ζ(n)) = O(n^{−κ})` with `ζ(n) = log² n`.
pub fn check_ba(tau: &TauSpec, base: &SystemSpec, ns: &[u64], samples: u64, seed: u64) -> Result<BaReport> {
    check_grid(ns)?;
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if tau.is_degenerate() {
        return Ok(BaReport {
            probabilities: ns.iter().map(|n| (*n, 1.0)).collect(),
            kappa: 0.0,
            band: 0.0,
            degenerate: true,
            pass: false,
        });
    }
    let dynamics = base.dynamics()?;
    let d = base.dim();
    let below: Vec<Vec<bool>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_sample(seed, Domain::Anticoncentration, i);
            let y = sample_point(d, &mut rng)?;
            let mut orbit = dynamics.refining_orbit(&y, rng);
            let mut s = 0.0;
            let mut j = 0u64;
            let mut row = Vec::with_capacity(ns.len());
            for n in ns {
                while j < *n {
                    if j > 0 {
                        orbit.step();
                    }
                    s += tau.eval(orbit.coords());
                    j += 1;
                }
                row.push(s.abs() < log_squared(*n));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let probabilities: Vec<(u64, f64)> = ns
        .iter()
        .enumerate()
        .map(|(k, n)| (*n, below.iter().filter(|r| r[k]).count() as f64 / samples as f64))
        .collect();
    let fit = fit_exponent(&probabilities)?;
    let kappa = -fit.slope;
    Ok(BaReport {
        probabilities,
        kappa,
        band: fit.band,
        degenerate: false,
        pass: kappa - fit.band > 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UcRow {
    pub s: f64,
    /// `sup_y |ν(B)/(sN) Σ_{j<⌈sN⌉} φ_B∘R_B^j(y) − 1|` over the samples.
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// `3 s^{−(1−δ)/(r+1)} + 2/s`, when exponents were supplied.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UcReport {
    /// `N = ⌈1 / (2ν(B))⌉`.
    pub n_unit: u64,
    pub rows: Vec<UcRow>,
    pub censored: u64,
    /// Deviation shrinks from the smallest to the largest `s` and ends below
    /// [`UC_TOLERANCE`], with no censoring.
    pub pass: bool,
    /// Every deviation within 3× its bound (when a bound was supplied).
    pub within_bound: Option<bool>,
}

/// Uniform convergence of rescaled return-time sums.
pub fn check_uc(
    base: &SystemSpec,
    target: &TargetSet,
    s_grid: &[f64],
    exponents: Option<(f64, f64)>,
    samples: u64,
    seed: u64,
) -> Result<UcReport> {
    target.validate()?;
    if target.dim() != base.dim() {
        return Err(invalid("target must live on the base"));
    }
    if s_grid.is_empty() || s_grid.windows(2).any(|w| w[1] <= w[0]) || s_grid[0] <= 0.0 {
        return Err(invalid("s grid must be positive and increasing"));
    }
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let nu = target.measure()?;
    let n_unit = (1.0 / (2.0 * nu)).ceil() as u64;
    let counts: Vec<usize> = s_grid.iter().map(|s| (s * n_unit as f64).ceil() as usize).collect();
    let length = *counts.last().expect("non-empty");
    let cap = default_cap(nu);
    let dynamics = base.dynamics()?;
    let d = base.dim();
    let devs: Vec<Option<Vec<f64>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_sample(seed, Domain::Uniformity, i);
            let y = sample_point(d, &mut rng)?;
            let mut orbit = dynamics.refining_orbit(&y, rng);
            let (_, gaps, censored) = visits_on_orbit(&mut orbit, target, length, cap);
            if censored {
                return Ok(None);
            }
            let mut total = 0u64;
            let mut out = Vec::with_capacity(counts.len());
            let mut k = 0;
            for (j, g) in gaps.iter().enumerate() {
                total += g;
                while k < counts.len() && counts[k] == j + 1 {
                    let sn = s_grid[k] * n_unit as f64;
                    out.push((nu / sn * total as f64 - 1.0).abs());
                    k += 1;
                }
            }
            Ok(Some(out))
        })
        .collect::<Result<_>>()?;
    let censored = devs.iter().filter(|d| d.is_none()).count() as u64;
    let kept: Vec<&Vec<f64>> = devs.iter().flatten().collect();
    let rows: Vec<UcRow> = s_grid
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let col: Vec<f64> = kept.iter().map(|r| r[k]).collect();
            UcRow {
                s: *s,
                max_deviation: col.iter().cloned().fold(0.0, f64::max),
                mean_deviation: if col.is_empty() { f64::NAN } else { col.iter().sum::<f64>() / col.len() as f64 },
                bound: exponents.map(|(delta, r)| 3.0 * s.powf(-(1.0 - delta) / (r + 1.0)) + 2.0 / s),
            }
        })
        .collect();
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let pass = censored == 0
        && !kept.is_empty()
        && last.max_deviation < UC_TOLERANCE
        && (rows.len() == 1 || last.max_deviation < first.max_deviation);
    let within_bound = exponents.map(|_| rows.iter().all(|r| r.max_deviation <= 3.0 * r.bound.unwrap_or(0.0)));
    Ok(UcReport {
        n_unit,
        rows,
        censored,
        pass,
        within_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub label: usize,
    /// `ν(B^{(k)}) / ν(B)`.
    pub expected: f64,
    pub mean: f64,
    pub max_deviation: f64,
}

/// Label frequencies `p^{(k)}_{t}` of the κ-schedule induced by a labeled
/// union, against their limits `ν(B^{(k)}) / ν(B)`.
pub fn check_kappa_frequencies(
    base: &SystemSpec,
    union: &TargetSet,
    length: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<FrequencyRow>> {
    union.validate()?;
    if union.dim() != base.dim() {
        return Err(invalid("labeled union must live on the base"));
    }
    if length == 0 || samples == 0 {
        return Err(invalid("need a positive length and sample count"));
    }
    let nu = union.measure()?;
    let k = union.label_count();
    let cap = default_cap(nu);
    let dynamics = base.dynamics()?;
    let d = base.dim();
    let freqs: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_sample(seed, Domain::Uniformity, i);
            let y = sample_point(d, &mut rng)?;
            let mut orbit = dynamics.refining_orbit(&y, rng);
            let (labels, _, censored) = visits_on_orbit(&mut orbit, union, length, cap);
            if censored {
                return Err(Error::NoVerdict("base orbit censored before the schedule length".into()));
            }
            let mut f = vec![0.0; k];
            for l in labels {
                f[l - 1] += 1.0 / length as f64;
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    union
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let expected = c.measure()? / nu;
            let col: Vec<f64> = freqs.iter().map(|f| f[i]).collect();
            Ok(FrequencyRow {
                label: i + 1,
                expected,
                mean: col.iter().sum::<f64>() / col.len() as f64,
                max_deviation: col.iter().map(|v| (v - expected).abs()).fold(0.0, f64::max),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zeta {
    LogSquared,
    Zero,
}

impl Zeta {
    pub fn eval(self, n: u64) -> f64 {
        match self {
            Zeta::LogSquared => log_squared(n),
            Zeta::Zero => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub fiber_measure: f64,
    pub base_measure: f64,
    /// `⌈t / μ(A)⌉`.
    pub horizon: usize,
    pub mean_bad: f64,
    /// `E|B_{l,y}| · μ(A_l)`.
    pub fraction: f64,
    pub sigma: f64,
    pub censored: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub t: f64,
    pub zeta: Zeta,
    pub rows: Vec<CensusRow>,
}

/// Counts `(l, y)`-bad returns: visit indices `n ≤ ⌈t/μ(A_l)⌉` to `B_l` for
/// which some later visit `m ≤ ⌈t/μ(A_l)⌉` has
/// `|τ_{α̃(m)} − τ_{α̃(n)}| < ζ(α̃(m) − α̃(n))`.
pub fn bad_return_census(
    system: &SystemSpec,
    levels: &[(TargetSet, TargetSet)],
    zeta: Zeta,
    t: f64,
    samples: u64,
    seed: u64,
) -> Result<CensusReport> {
    let SystemSpec::SkewProduct { tau, base, .. } = system else {
        return Err(invalid("the census needs a skew product"));
    };
    if !(t > 0.0) || samples == 0 {
        return Err(invalid("need t > 0 and at least one sample"));
    }
    let fiber_dim = system.fiber_dim().expect("skew product");
    let dynamics = base.dynamics()?;
    let d = base.dim();
    let mut rows = Vec::with_capacity(levels.len());
    for (li, (a, b)) in levels.iter().enumerate() {
        a.validate()?;
        b.validate()?;
        if a.dim() != fiber_dim || b.dim() != d {
            return Err(invalid("levels pair a fiber target with a base target"));
        }
        let mu = a.measure()?;
        let horizon = (t / mu).ceil() as usize;
        let cap = default_cap(b.measure()?);
        let counts: Vec<Option<f64>> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::for_sample(seed ^ (li as u64) << 40, Domain::Census, i);
                let y = sample_point(d, &mut rng)?;
                let mut orbit = dynamics.refining_orbit(&y, rng);
                let mut times = Vec::with_capacity(horizon);
                let mut sums = Vec::with_capacity(horizon);
                let (mut now, mut s) = (0u64, 0.0);
                for _ in 0..horizon {
                    let mut hit = false;
                    for _ in 0..cap {
                        s += tau.eval(orbit.coords());
                        orbit.step();
                        now += 1;
                        if b.contains_coords(orbit.coords()) {
                            hit = true;
                            break;
                        }
                    }
                    if !hit {
                        return Ok(None);
                    }
                    times.push(now);
                    sums.push(s);
                }
                let bad = (0..horizon)
                    .filter(|n| {
                        (n + 1..horizon).any(|m| (sums[m] - sums[*n]).abs() < zeta.eval(times[m] - times[*n]))
                    })
                    .count();
                Ok(Some(bad as f64))
            })
            .collect::<Result<_>>()?;
        let censored = counts.iter().filter(|c| c.is_none()).count() as u64;
        let kept: Vec<f64> = counts.into_iter().flatten().collect();
        let k = kept.len() as f64;
        let mean = kept.iter().sum::<f64>() / k;
        let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        rows.push(CensusRow {
            fiber_measure: mu,
            base_measure: b.measure()?,
            horizon,
            mean_bad: mean,
            fraction: mean * mu,
            sigma: (var / k).sqrt() * mu,
            censored,
        });
    }
    Ok(CensusReport { t, zeta, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub d: usize,
    /// `3/2 · d'(r'+1) / (1 − δ₁)`.
    pub l2_bound: f64,
    /// `d'(r'+1) / (1 − δ₁)`, enough under a pointwise EE estimate.
    pub pointwise_bound: f64,
    pub holds: bool,
    pub holds_pointwise: bool,
}

/// Arithmetic check of `d > 3/2 · d'(r'+1)/(1 − δ₁)`.
pub fn dimension_condition(d: usize, d_base: usize, r_base: f64, delta1: f64) -> Result<DimensionReport> {
    if !(0.0..1.0).contains(&delta1) || r_base < 0.0 {
        return Err(invalid("need 0 ≤ δ₁ < 1 and r' ≥ 0"));
    }
    let pointwise = d_base as f64 * (r_base + 1.0) / (1.0 - delta1);
    let l2 = 1.5 * pointwise;
    Ok(DimensionReport {
        d,
        l2_bound: l2,
        pointwise_bound: pointwise,
        holds: d as f64 > l2,
        holds_pointwise: d as f64 > pointwise,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemCurve {
    pub gaps: Vec<u64>,
    pub lhs: Vec<f64>,
    pub mc_error: Vec<f64>,
    /// The largest gap is within noise of zero and below the smallest gap's
    /// excess by more than the combined 3σ.
    pub pass: bool,
}

/// Two-fold decorrelation `|μ(A ∩ T^{−p}A) − μ(A)²|` against the gap `p`.
pub fn check_mem(system: &SystemSpec, target: &TargetSet, gaps: &[u64], samples: u64, seed: u64) -> Result<MemCurve> {
    if gaps.is_empty() || gaps.windows(2).any(|w| w[1] <= w[0]) || gaps[0] == 0 {
        return Err(invalid("gaps must be positive and increasing"));
    }
    let reports = gaps
        .iter()
        .map(|p| measure_decorrelation(system, &[target.clone(), target.clone()], &[1, 1 + p], samples, seed ^ p))
        .collect::<Result<Vec<_>>>()?;
    let lhs: Vec<f64> = reports.iter().map(|r| r.lhs).collect();
    let err: Vec<f64> = reports.iter().map(|r| r.mc_error).collect();
    let last = lhs.len() - 1;
    let pass = lhs[last] <= err[last] && (last == 0 || lhs[0] - lhs[last] > (err[0].powi(2) + err[last].powi(2)).sqrt());
    Ok(MemCurve {
        gaps: gaps.to_vec(),
        lhs,
        mc_error: err,
        pass,
    })
}

impl ExponentFit {
    pub fn row(&self, condition: Condition, verdict: bool, note: impl Into<String>) -> ConditionRow {
        ConditionRow {
            condition,
            estimate: self.slope,
            uncertainty: self.band,
            verdict,
            note: note.into(),
        }
    }
}

impl RecurrenceReport {
    pub fn row(&self) -> ConditionRow {
        let condition = match self.mode {
            RecurrenceMode::Lr { .. } => Condition::Lr,
            RecurrenceMode::Slr => Condition::Slr,
            RecurrenceMode::Nsr => Condition::Nsr,
        };
        let last = self.rows.iter().min_by(|a, b| a.radius.total_cmp(&b.radius)).expect("rows");
        let (estimate, uncertainty) = match &last.mass {
            Some(m) => (m.estimate, m.band),
            None => (last.min_return.map_or(f64::INFINITY, |m| m as f64), 0.0),
        };
        ConditionRow {
            condition,
            estimate,
            uncertainty,
            verdict: self.pass,
            note: format!("smallest radius {}", last.radius),
        }
    }
}

impl BaReport {
    pub fn row(&self) -> ConditionRow {
        ConditionRow {
            condition: Condition::Ba,
            estimate: self.kappa,
            uncertainty: self.band,
            verdict: self.pass,
            note: if self.degenerate { "degenerate τ".into() } else { "ζ(n) = log² n".into() },
        }
    }
}

impl UcReport {
    pub fn row(&self) -> ConditionRow {
        let last = self.rows.last().expect("rows");
        ConditionRow {
            condition: Condition::Uc,
            estimate: last.max_deviation,
            uncertainty: 0.0,
            verdict: self.pass,
            note: format!("s = {}, censored {}", last.s, self.censored),
        }
    }
}

impl DimensionReport {
    pub fn row(&self) -> ConditionRow {
        ConditionRow {
            condition: Condition::Dim,
            estimate: self.d as f64,
            uncertainty: 0.0,
            verdict: self.holds,
            note: format!("needs d > {:.3} (pointwise {:.3})", self.l2_bound, self.pointwise_bound),
        }
    }
}

impl MemCurve {
    pub fn row(&self) -> ConditionRow {
        let last = self.lhs.len() - 1;
        ConditionRow {
            condition: Condition::Mem,
            estimate: self.lhs[last],
            uncertainty: self.mc_error[last],
            verdict: self.pass,
            note: format!("gap {}", self.gaps[last]),
        }
    }
}
