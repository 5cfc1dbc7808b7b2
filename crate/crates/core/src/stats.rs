//! Verdicts on gap and count samples: distance to Exp(1), Poisson factorial
//! moments, Kac means, short-return mass and the law metric `D`.
//!
//! Monte Carlo drivers give sample `i` its own [`RngStream`], so results do
//! not depend on thread count or on how index ranges are split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::returns::{delayed_on_orbit, next_hit, returns_on_orbit, visits_on_orbit, Flavor};
use crate::rng::{Domain, RngStream};
use crate::systems::SystemSpec;
use crate::targets::TargetSet;
use crate::torus::sample_point;

/// Censoring above this fraction blocks any verdict.
pub const MAX_CENSOR_RATE: f64 = 0.01;

/// Per-test confidence of every statistical verdict.
pub const CONFIDENCE: f64 = 0.999;

/// Number of `ϑ` terms kept in `D`; the dropped tail weighs `2^{-20} < 1e-6`.
pub const D_TERMS: usize = 20;

/// `⌈100 / μ(A)⌉`.
pub fn default_cap(measure: f64) -> u64 {
    (100.0 / measure).ceil() as u64
}

/// DKW radius at [`CONFIDENCE`]: `sqrt(ln(2/0.001) / (2n))`.
pub fn dkw_radius(n: usize) -> f64 {
    ((2.0 / (1.0 - CONFIDENCE)).ln() / (2.0 * n as f64)).sqrt()
}

/// Neumaier-compensated running sum; merging is exact up to the final
/// rounding of the two partial sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Jackknife standard error of a sample mean.
pub fn jackknife_sigma(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let total = xs.iter().copied().collect::<CompensatedSum>().value();
    let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1) as f64).collect();
    let (m, _) = mean_and_variance(&loo);
    let ss = loo.iter().map(|v| (v - m) * (v - m)).collect::<CompensatedSum>().value();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

/// Raw first-return gaps with the measure used to rescale them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSamples {
    pub measure: f64,
    pub cap: u64,
    pub gaps: Vec<u64>,
    pub censored: Vec<bool>,
}

impl GapSamples {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn censored_count(&self) -> u64 {
        self.censored.iter().filter(|c| **c).count() as u64
    }

    pub fn law(&self) -> EmpiricalLaw {
        EmpiricalLaw {
            samples: self.gaps.iter().map(|g| *g as f64 * self.measure).collect(),
            censored: self.censored.clone(),
        }
    }
}

/// Rescaled gaps `μ(A)·φ`. Censored entries hold the rescaled cap and count
/// as `+∞` in the empirical CDF.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub samples: Vec<f64>,
    pub censored: Vec<bool>,
}

impl EmpiricalLaw {
    pub fn uncensored(samples: Vec<f64>) -> Self {
        let censored = vec![false; samples.len()];
        Self { samples, censored }
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn censor_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.censored.iter().filter(|c| **c).count() as f64 / self.n() as f64
    }

    fn check_verdict(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::NoVerdict("empty sample".into()));
        }
        let rate = self.censor_rate();
        if rate >= MAX_CENSOR_RATE {
            return Err(Error::NoVerdict(format!(
                "censor rate {rate} is at or above {MAX_CENSOR_RATE}"
            )));
        }
        if self.samples.iter().any(|x| !(*x >= 0.0)) {
            return Err(invalid("rescaled gaps must be non-negative"));
        }
        Ok(())
    }

    /// Sorted values with censored entries at `+∞`.
    pub fn sorted(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .samples
            .iter()
            .zip(&self.censored)
            .map(|(s, c)| if *c { f64::INFINITY } else { *s })
            .collect();
        x.sort_by(f64::total_cmp);
        x
    }

    /// `(t, F_n(t), 1 − e^{−t})` at each distinct finite jump point.
    pub fn cdf_table(&self) -> Vec<(f64, f64, f64)> {
        let x = self.sorted();
        let n = x.len() as f64;
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (i, v) in x.iter().enumerate() {
            if v.is_infinite() {
                break;
            }
            let row = (*v, (i + 1) as f64 / n, -(-v).exp_m1());
            match rows.last_mut() {
                Some(last) if last.0 == *v => *last = row,
                _ => rows.push(row),
            }
        }
        rows
    }
}

/// `sup_t |F_n(t) − (1 − e^{−t})|`, evaluated at the jump points, and the DKW
/// radius for `n`.
pub fn ks_exponential(law: &EmpiricalLaw) -> Result<(f64, f64)> {
    law.check_verdict()?;
    let x = law.sorted();
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in x.iter().enumerate() {
        let f = if v.is_infinite() { 1.0 } else { -(-v).exp_m1() };
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok((d, dkw_radius(x.len())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub n: usize,
    pub censor_rate: f64,
    pub ks: f64,
    pub dkw_radius: f64,
    /// `ks ≤ dkw_radius`.
    pub exponential: bool,
}

pub fn law_report(law: &EmpiricalLaw) -> Result<LawReport> {
    let (ks, dkw) = ks_exponential(law)?;
    Ok(LawReport {
        n: law.n(),
        censor_rate: law.censor_rate(),
        ks,
        dkw_radius: dkw,
        exponential: ks <= dkw,
    })
}

fn full_dim(system: &SystemSpec, target: &TargetSet) -> Result<()> {
    target.validate()?;
    if target.dim() != system.dim() {
        return Err(invalid("target dimension differs from the system"));
    }
    Ok(())
}

fn first_gaps(
    system: &SystemSpec,
    target: &TargetSet,
    samples: u64,
    seed: u64,
    cap: Option<u64>,
    conditional: bool,
) -> Result<GapSamples> {
    full_dim(system, target)?;
    let measure = target.measure()?;
    if measure <= 0.0 {
        return Err(invalid("target has zero measure"));
    }
    let cap = cap.unwrap_or_else(|| default_cap(measure));
    if cap == 0 {
        return Err(invalid("cap must be at least 1"));
    }
    let dynamics = system.dynamics()?;
    let d = system.dim();
    let domain = if conditional { Domain::Return } else { Domain::Hitting };
    let hits: Vec<Option<u64>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Option<u64>> {
            let mut rng = RngStream::for_sample(seed, domain, i);
            let p = if conditional {
                target.sample(&mut rng)?
            } else {
                sample_point(d, &mut rng)?
            };
            let mut orbit = dynamics.refining_orbit(&p, rng);
            Ok(next_hit(&mut orbit, target, d, cap))
        })
        .collect::<Result<_>>()?;
    Ok(GapSamples {
        measure,
        cap,
        gaps: hits.iter().map(|h| h.unwrap_or(cap)).collect(),
        censored: hits.iter().map(|h| h.is_none()).collect(),
    })
}

/// `φ_A` for `samples` starting points drawn from `μ`.
pub fn hitting_gaps(
    system: &SystemSpec,
    target: &TargetSet,
    samples: u64,
    seed: u64,
    cap: Option<u64>,
) -> Result<GapSamples> {
    first_gaps(system, target, samples, seed, cap, false)
}

/// `φ_A` for `samples` starting points drawn from `μ_A`.
pub fn return_gaps(
    system: &SystemSpec,
    target: &TargetSet,
    samples: u64,
    seed: u64,
    cap: Option<u64>,
) -> Result<GapSamples> {
    first_gaps(system, target, samples, seed, cap, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitReturnReport {
    pub hitting: LawReport,
    pub returning: LawReport,
    /// Both laws within their DKW radius of Exp(1).
    pub plt: bool,
}

/// Hitting law under `μ` and return law under `μ_A`, each against Exp(1).
pub fn hitting_return_pair(
    system: &SystemSpec,
    target: &TargetSet,
    samples: u64,
    seed: u64,
) -> Result<(HitReturnReport, GapSamples, GapSamples)> {
    let h = hitting_gaps(system, target, samples, seed, None)?;
    let r = return_gaps(system, target, samples, seed, None)?;
    let hitting = law_report(&h.law())?;
    let returning = law_report(&r.law())?;
    let plt = hitting.exponential && returning.exponential;
    Ok((
        HitReturnReport {
            hitting,
            returning,
            plt,
        },
        h,
        r,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub estimate: f64,
    /// Three standard errors.
    pub band: f64,
    pub samples: u64,
}

impl MassEstimate {
    fn from_hits(hits: u64, samples: u64) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            estimate: p,
            band: 3.0 * (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}

/// `μ_A(φ_A ≤ K)`.
pub fn short_return_mass(
    system: &SystemSpec,
    target: &TargetSet,
    threshold: u64,
    samples: u64,
    seed: u64,
) -> Result<MassEstimate> {
    full_dim(system, target)?;
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if threshold == 0 {
        return Ok(MassEstimate::from_hits(0, samples));
    }
    let dynamics = system.dynamics()?;
    let d = system.dim();
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let mut rng = RngStream::for_sample(seed, Domain::ShortReturn, i);
            let p = target.sample(&mut rng)?;
            let mut orbit = dynamics.refining_orbit(&p, rng);
            Ok(next_hit(&mut orbit, target, d, threshold).is_some() as u64)
        })
        .sum::<Result<u64>>()?;
    Ok(MassEstimate::from_hits(hits, samples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KacReport {
    pub n: usize,
    pub censor_rate: f64,
    /// Mean of `μ(A)·φ_A` under `μ_A`; censored gaps enter at the cap.
    pub mean: f64,
    pub sigma: f64,
    /// `|mean − 1| ≤ 3σ`.
    pub contains_one: bool,
}

pub fn kac_check(system: &SystemSpec, target: &TargetSet, samples: u64, seed: u64) -> Result<KacReport> {
    if samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    let r = return_gaps(system, target, samples, seed ^ 0x4B41_4300, None)?;
    let law = r.law();
    let (mean, var) = mean_and_variance(&law.samples);
    let sigma = (var / law.n() as f64).sqrt();
    Ok(KacReport {
        n: law.n(),
        censor_rate: law.censor_rate(),
        mean,
        sigma,
        contains_one: (mean - 1.0).abs() <= 3.0 * sigma,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorialCell {
    pub orders: Vec<u32>,
    pub estimate: f64,
    pub sigma: f64,
    /// `Π (t_j − t_{j−1})^{m_j} / m_j!`.
    pub target: f64,
    pub pass: bool,
}

fn falling_binomial(n: u64, m: u32) -> f64 {
    if n < m as u64 {
        return 0.0;
    }
    (0..m as u64).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Every order vector in `0..=max_order` per window except all zeros.
pub fn default_cells(windows: usize, max_order: u32) -> Vec<Vec<u32>> {
    let mut cells = vec![vec![]];
    for _ in 0..windows {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                (0..=max_order).map(move |m| {
                    let mut c = c.clone();
                    c.push(m);
                    c
                })
            })
            .collect();
    }
    cells.retain(|c| c.iter().any(|m| *m > 0));
    cells
}

/// Estimates `E Π_j C(N_j, m_j)` from per-trajectory window increments
/// `N_j = S_{t_j} − S_{t_{j−1}}` and compares with the Poisson value at 3σ
/// (jackknife).
pub fn factorial_moment_check(
    boundaries: &[f64],
    increments: &[Vec<u64>],
    cells: &[Vec<u32>],
) -> Result<Vec<FactorialCell>> {
    if boundaries.len() < 2 {
        return Err(invalid("need at least one window"));
    }
    if boundaries.windows(2).any(|w| !(w[1] > w[0])) || boundaries[0] < 0.0 {
        return Err(invalid("window boundaries must increase from a non-negative start"));
    }
    let windows = boundaries.len() - 1;
    if increments.iter().any(|row| row.len() != windows) {
        return Err(invalid("every trajectory needs one count per window"));
    }
    if increments.len() < 2 {
        return Err(Error::NoVerdict("fewer than two trajectories".into()));
    }
    cells
        .iter()
        .map(|orders| {
            if orders.len() != windows {
                return Err(invalid("one order per window"));
            }
            let values: Vec<f64> = increments
                .iter()
                .map(|row| row.iter().zip(orders).map(|(n, m)| falling_binomial(*n, *m)).product())
                .collect();
            let (estimate, _) = mean_and_variance(&values);
            let sigma = jackknife_sigma(&values);
            let target = boundaries
                .windows(2)
                .zip(orders)
                .map(|(w, m)| (w[1] - w[0]).powi(*m as i32) / (1..=*m).product::<u32>() as f64)
                .product();
            Ok(FactorialCell {
                orders: orders.clone(),
                estimate,
                sigma,
                target,
                pass: (estimate - target).abs() <= 3.0 * sigma,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedCounts {
    /// Expected hits per probe; window `t` spans `⌊t / unit⌋` probes.
    pub unit: f64,
    pub boundaries: Vec<f64>,
    pub probes: Vec<usize>,
    /// Per kept trajectory, hits in each window.
    pub increments: Vec<Vec<u64>>,
    /// Trajectories dropped because the base schedule was censored.
    pub censored: u64,
}

/// Delayed count process of `system` along schedules read off base visits:
/// `y ~ ν` gives `α = Φ_B(y)` and labels `κ` from the union `B`, `x ~ μ`
/// is probed at `T^{α̃^{(j)}}` against `targets[κ^{(j)} − 1]`.
#[allow(clippy::too_many_arguments)]
pub fn windowed_counts(
    system: &SystemSpec,
    targets: &[TargetSet],
    base: &SystemSpec,
    union: &TargetSet,
    boundaries: &[f64],
    samples: u64,
    seed: u64,
    cap: u64,
) -> Result<WindowedCounts> {
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| !(w[1] > w[0])) || boundaries[0] < 0.0 {
        return Err(invalid("window boundaries must increase from a non-negative start"));
    }
    union.validate()?;
    if union.dim() != base.dim() {
        return Err(invalid("labeled union must live on the base"));
    }
    if targets.len() != union.label_count() {
        return Err(invalid("one target per union component"));
    }
    for t in targets {
        full_dim(system, t)?;
    }
    let nu_b = union.measure()?;
    let mut unit = 0.0;
    for (a, b) in targets.iter().zip(union.components()) {
        unit += a.measure()? * b.measure()? / nu_b;
    }
    if unit <= 0.0 {
        return Err(invalid("targets have zero measure"));
    }
    let probes: Vec<usize> = boundaries.iter().map(|t| (t / unit).floor() as usize).collect();
    let horizon = *probes.last().expect("non-empty");
    let dynamics = system.dynamics()?;
    let base_dynamics = base.dynamics()?;
    let (d, bd) = (system.dim(), base.dim());
    let rows: Vec<Option<Vec<u64>>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Option<Vec<u64>>> {
            let mut rng = RngStream::for_sample(seed, Domain::Delayed, i);
            let y = sample_point(bd, &mut rng)?;
            let mut base_orbit = base_dynamics.refining_orbit(&y, rng.clone());
            let (labels, gaps, censored) = visits_on_orbit(&mut base_orbit, union, horizon, cap);
            if censored {
                return Ok(None);
            }
            let x = sample_point(d, &mut rng)?;
            let mut orbit = dynamics.refining_orbit(&x, rng);
            let mut row = vec![0u64; probes.len() - 1];
            for (j, (g, l)) in gaps.iter().zip(&labels).enumerate() {
                orbit.advance(*g);
                if targets[l - 1].contains_coords(orbit.coords()) {
                    let probe = j + 1;
                    if let Some(w) = (1..probes.len()).find(|w| probe > probes[w - 1] && probe <= probes[*w]) {
                        row[w - 1] += 1;
                    }
                }
            }
            Ok(Some(row))
        })
        .collect::<Result<_>>()?;
    let censored = rows.iter().filter(|r| r.is_none()).count() as u64;
    Ok(WindowedCounts {
        unit,
        boundaries: boundaries.to_vec(),
        probes,
        increments: rows.into_iter().flatten().collect(),
        censored,
    })
}

/// Samples of the first `J` rescaled gaps of a return process; entries after
/// a censored gap are `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessLaw {
    pub coordinates: usize,
    pub rows: Vec<Vec<f64>>,
}

impl ProcessLaw {
    pub fn new(coordinates: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if coordinates == 0 {
            return Err(invalid("need at least one coordinate"));
        }
        if rows.iter().any(|r| r.len() != coordinates) {
            return Err(invalid("every row needs exactly J coordinates"));
        }
        if rows.iter().flatten().any(|x| x.is_nan() || *x < 0.0) {
            return Err(invalid("gap coordinates must lie in [0, ∞]"));
        }
        Ok(Self { coordinates, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Every other row, for resampling checks.
    pub fn half(&self) -> ProcessLaw {
        ProcessLaw {
            coordinates: self.coordinates,
            rows: self.rows.iter().step_by(2).cloned().collect(),
        }
    }
}

/// Return process under `μ_A`, rescaled by `μ(A)`; `A` may be a rectangle or
/// any other full-dimensional target.
pub fn return_process(
    system: &SystemSpec,
    target: &TargetSet,
    coordinates: usize,
    samples: u64,
    seed: u64,
    cap: Option<u64>,
) -> Result<ProcessLaw> {
    full_dim(system, target)?;
    let measure = target.measure()?;
    let cap = cap.unwrap_or_else(|| default_cap(measure));
    let dynamics = system.dynamics()?;
    let d = system.dim();
    let rows = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = RngStream::for_sample(seed, Domain::Return, i);
            let p = target.sample(&mut rng)?;
            let mut orbit = dynamics.refining_orbit(&p, rng);
            let seq = returns_on_orbit(&mut orbit, target, d, coordinates, cap, Flavor::Plain);
            Ok(process_row(&seq.gaps, &seq.censored, measure, coordinates))
        })
        .collect::<Result<_>>()?;
    ProcessLaw::new(coordinates, rows)
}

/// Delayed return process of `x ~ μ` along a fixed schedule, rescaled by
/// `μ(A)`.
pub fn delayed_return_process(
    system: &SystemSpec,
    target: &TargetSet,
    schedule: &crate::returns::DelaySchedule,
    coordinates: usize,
    samples: u64,
    seed: u64,
    cap: Option<u64>,
) -> Result<ProcessLaw> {
    full_dim(system, target)?;
    let measure = target.measure()?;
    let cap = cap.unwrap_or_else(|| default_cap(measure));
    let dynamics = system.dynamics()?;
    let d = system.dim();
    let rows = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rng = RngStream::for_sample(seed, Domain::Delayed, i);
            let p = sample_point(d, &mut rng)?;
            let mut orbit = dynamics.refining_orbit(&p, rng);
            let seq = delayed_on_orbit(&mut orbit, &[target], None, schedule, d, coordinates, cap);
            Ok(process_row(&seq.gaps, &seq.censored, measure, coordinates))
        })
        .collect::<Result<_>>()?;
    ProcessLaw::new(coordinates, rows)
}

fn process_row(gaps: &[u64], censored: &[bool], measure: f64, coordinates: usize) -> Vec<f64> {
    let mut row = vec![f64::INFINITY; coordinates];
    for (slot, (g, c)) in row.iter_mut().zip(gaps.iter().zip(censored)) {
        if *c {
            break;
        }
        *slot = *g as f64 * measure;
    }
    row
}

/// `n ↦ (j, k)`, both 1-based, walking the diagonals `j + k = 2, 3, …`.
pub fn theta_index(n: usize) -> (usize, usize) {
    let mut n = n;
    let mut s = 2;
    loop {
        if n < s {
            return (n, s - n);
        }
        n -= s - 1;
        s += 1;
    }
}

/// `ϑ_{j,k}(s) = 2^{−j} e^{−k s_j} / k`, 1-Lipschitz for
/// `Σ_j 2^{−j} |e^{−s_j} − e^{−t_j}|`. Coordinates beyond `J` count as `∞`.
pub fn theta(n: usize, s: &[f64]) -> f64 {
    let (j, k) = theta_index(n);
    match s.get(j - 1) {
        Some(v) => 0.5f64.powi(j as i32) * (-(k as f64) * v).exp() / k as f64,
        None => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DMetric {
    pub value: f64,
    /// `Σ 2^{−n} · 3 · sqrt(var_a/N_a + var_b/N_b)`.
    pub band: f64,
    pub terms: usize,
}

fn theta_moments(law: &ProcessLaw, n: usize) -> (f64, f64) {
    let v: Vec<f64> = law.rows.iter().map(|r| theta(n, r)).collect();
    mean_and_variance(&v)
}

fn canonical(law: &ProcessLaw) -> ProcessLaw {
    let mut rows = law.rows.clone();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    ProcessLaw {
        coordinates: law.coordinates,
        rows,
    }
}

/// `D(a, b) = Σ_{n ≤ 20} 2^{−n} |∫ϑ_n da − ∫ϑ_n db|` between empirical laws.
/// Rows are put in a canonical order first, so the value depends only on the
/// sample multisets.
pub fn d_metric(a: &ProcessLaw, b: &ProcessLaw) -> Result<DMetric> {
    if a.coordinates != b.coordinates {
        return Err(invalid(format!(
            "laws carry {} and {} gap coordinates",
            a.coordinates, b.coordinates
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoVerdict("empty law".into()));
    }
    let (a, b) = (canonical(a), canonical(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut value = 0.0;
    let mut band = 0.0;
    for n in 1..=D_TERMS {
        let w = 0.5f64.powi(n as i32);
        let (ma, va) = theta_moments(&a, n);
        let (mb, vb) = theta_moments(&b, n);
        value += w * (ma - mb).abs();
        band += w * 3.0 * (va / na + vb / nb).sqrt();
    }
    Ok(DMetric {
        value,
        band,
        terms: D_TERMS,
    })
}
