//! First returns, return sequences and their delayed / label-switching
//! variants, plus the exact identities tying them together.
//!
//! Every search is bounded by a `cap`. A search that runs past it produces a
//! censored entry with `gap == cap`, and nothing after it: later returns are
//! undefined once one has been lost.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::systems::{Orbit, SystemSpec};
use crate::targets::TargetSet;
use crate::torus::TorusPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Plain,
    Fiberwise,
    Delayed,
    Kappa,
}

impl Flavor {
    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Plain => "plain",
            Flavor::Fiberwise => "fiberwise",
            Flavor::Delayed => "delayed",
            Flavor::Kappa => "kappa",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSequence {
    pub flavor: Flavor,
    pub gaps: Vec<u64>,
    pub censored: Vec<bool>,
    pub cap: u64,
    /// Fingerprint of the delay schedule the gaps were measured along.
    pub schedule_fingerprint: Option<u64>,
}

impl ReturnSequence {
    fn empty(flavor: Flavor, cap: u64, schedule_fingerprint: Option<u64>) -> Self {
        Self {
            flavor,
            gaps: Vec::new(),
            censored: Vec::new(),
            cap,
            schedule_fingerprint,
        }
    }

    fn push(&mut self, hit: Option<u64>) -> bool {
        match hit {
            Some(g) => {
                self.gaps.push(g);
                self.censored.push(false);
                true
            }
            None => {
                self.gaps.push(self.cap);
                self.censored.push(true);
                false
            }
        }
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn is_censored(&self) -> bool {
        self.censored.iter().any(|c| *c)
    }

    /// Gaps up to (excluding) the first censored entry.
    pub fn uncensored_gaps(&self) -> &[u64] {
        let k = self.censored.iter().position(|c| *c).unwrap_or(self.gaps.len());
        &self.gaps[..k]
    }

    /// Absolute return times of the uncensored prefix.
    pub fn times(&self) -> Result<Vec<u64>> {
        let mut t = 0u64;
        self.uncensored_gaps()
            .iter()
            .map(|g| {
                t = t
                    .checked_add(*g)
                    .ok_or_else(|| invalid("return time overflows u64"))?;
                Ok(t)
            })
            .collect()
    }
}

/// Delay sequence `α` with partial sums `α̃^{(n)} = Σ_{j≤n} α^{(j)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelaySchedule {
    alpha: Vec<u64>,
    alphatilde: Vec<u64>,
}

impl DelaySchedule {
    pub fn new(alpha: Vec<u64>) -> Result<Self> {
        let mut alphatilde = Vec::with_capacity(alpha.len());
        let mut s = 0u64;
        for a in &alpha {
            if *a == 0 {
                return Err(invalid("delays must be positive"));
            }
            s = s
                .checked_add(*a)
                .ok_or_else(|| invalid("delay partial sums overflow u64"))?;
            alphatilde.push(s);
        }
        Ok(Self { alpha, alphatilde })
    }

    pub fn constant(a: u64, len: usize) -> Result<Self> {
        Self::new(vec![a; len])
    }

    /// `α^{(n)} = n`, so `α̃` runs through the triangular numbers.
    pub fn triangular(len: usize) -> Result<Self> {
        Self::new((1..=len as u64).collect())
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> u64) -> Result<Self> {
        Self::new((0..len).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self) -> &[u64] {
        &self.alpha
    }

    pub fn alphatilde(&self) -> &[u64] {
        &self.alphatilde
    }

    /// FNV-1a over the delays; ties derived sequences to their schedule.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for a in &self.alpha {
            for b in a.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Per-probe target labels `κ^{(n)} ∈ 1..=K` and their empirical frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSchedule {
    pub labels: Vec<usize>,
    pub frequencies: Vec<f64>,
}

impl KappaSchedule {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || labels.iter().any(|l| *l == 0 || *l > k) {
            return Err(invalid(format!("κ labels must lie in 1..={k}")));
        }
        let mut counts = vec![0usize; k];
        for l in &labels {
            counts[l - 1] += 1;
        }
        let n = labels.len().max(1) as f64;
        let frequencies = if labels.is_empty() {
            vec![0.0; k]
        } else {
            counts.iter().map(|c| *c as f64 / n).collect()
        };
        Ok(Self { labels, frequencies })
    }

    pub fn constant(len: usize) -> Self {
        Self::new(vec![1; len], 1).expect("label 1 of 1")
    }

    pub fn label_count(&self) -> usize {
        self.frequencies.len()
    }
}

/// How many leading coordinates a target is tested against: all of them, or
/// only the fiber `X` of a fibered system.
fn probe_dim(system: &SystemSpec, target_dim: usize) -> Result<usize> {
    if target_dim == system.dim() {
        return Ok(target_dim);
    }
    match system.fiber_dim() {
        Some(xd) if xd == target_dim => Ok(xd),
        _ => Err(invalid(format!(
            "target of dimension {target_dim} fits neither the system ({}) nor its fiber",
            system.dim()
        ))),
    }
}

fn check_cap(cap: u64) -> Result<()> {
    if cap == 0 {
        return Err(invalid("cap must be at least 1"));
    }
    Ok(())
}

/// Steps `orbit` until its first `pd` coordinates enter `target`.
#[inline]
pub fn next_hit(orbit: &mut Orbit<'_>, target: &TargetSet, pd: usize, cap: u64) -> Option<u64> {
    if let TargetSet::Ball { center, radius } = target {
        let c = center.coords();
        let r2 = radius * radius;
        for n in 1..=cap {
            orbit.step();
            let x = &orbit.coords()[..pd];
            let mut s = 0.0;
            let mut inside = true;
            for i in 0..pd {
                let d = crate::torus::circle_dist(x[i], c[i]);
                s += d * d;
                if s > r2 {
                    inside = false;
                    break;
                }
            }
            if inside {
                return Some(n);
            }
        }
        return None;
    }
    for n in 1..=cap {
        orbit.step();
        if target.contains_coords(&orbit.coords()[..pd]) {
            return Some(n);
        }
    }
    None
}

/// Return gaps along an existing orbit.
pub fn returns_on_orbit(
    orbit: &mut Orbit<'_>,
    target: &TargetSet,
    pd: usize,
    count: usize,
    cap: u64,
    flavor: Flavor,
) -> ReturnSequence {
    let mut seq = ReturnSequence::empty(flavor, cap, None);
    for _ in 0..count {
        if !seq.push(next_hit(orbit, target, pd, cap)) {
            break;
        }
    }
    seq
}

/// Delayed returns along an existing orbit: the `j`-th probe looks at
/// `T^{α̃^{(j)}}` and tests `targets[κ^{(j)} − 1]` (label 1 without `kappa`).
/// Gaps count probes. Running out of schedule censors.
pub fn delayed_on_orbit(
    orbit: &mut Orbit<'_>,
    targets: &[&TargetSet],
    kappa: Option<&[usize]>,
    schedule: &DelaySchedule,
    pd: usize,
    count: usize,
    cap: u64,
) -> ReturnSequence {
    let flavor = if kappa.is_some() { Flavor::Kappa } else { Flavor::Delayed };
    let mut seq = ReturnSequence::empty(flavor, cap, Some(schedule.fingerprint()));
    let limit = kappa.map_or(schedule.len(), |k| k.len().min(schedule.len()));
    let mut idx = 0usize;
    'outer: for _ in 0..count {
        for g in 1..=cap {
            if idx == limit {
                seq.push(None);
                break 'outer;
            }
            orbit.advance(schedule.alpha()[idx]);
            let label = kappa.map_or(1, |k| k[idx]);
            idx += 1;
            if targets[label - 1].contains_coords(&orbit.coords()[..pd]) {
                seq.push(Some(g));
                continue 'outer;
            }
        }
        seq.push(None);
        break;
    }
    seq
}

/// `φ_A(p)`: the least `n ∈ 1..=cap` with `T^n p ∈ A`, or `(cap, true)`.
pub fn first_return(
    system: &SystemSpec,
    target: &TargetSet,
    p: &TorusPoint,
    cap: u64,
) -> Result<(u64, bool)> {
    let seq = return_sequence(system, target, p, 1, cap)?;
    Ok((seq.gaps[0], seq.censored[0]))
}

pub fn return_sequence(
    system: &SystemSpec,
    target: &TargetSet,
    p: &TorusPoint,
    count: usize,
    cap: u64,
) -> Result<ReturnSequence> {
    check_cap(cap)?;
    target.validate()?;
    let dynamics = system.dynamics()?;
    p.expect_dim(system.dim(), "return_sequence")?;
    if target.dim() != system.dim() {
        return Err(invalid("target dimension differs from the system"));
    }
    let mut orbit = dynamics.orbit(p);
    Ok(returns_on_orbit(&mut orbit, target, system.dim(), count, cap, Flavor::Plain))
}

/// `φ^{(n)}_{A,y}(x)`: returns of the fiber coordinate to `A ⊂ X` along the
/// skewed orbit started at `(x, y)`.
pub fn fiberwise_return_sequence(
    system: &SystemSpec,
    target: &TargetSet,
    x: &TorusPoint,
    y: &TorusPoint,
    count: usize,
    cap: u64,
) -> Result<ReturnSequence> {
    check_cap(cap)?;
    target.validate()?;
    let xd = system
        .fiber_dim()
        .ok_or_else(|| invalid("fiberwise returns need a product or skew-product system"))?;
    x.expect_dim(xd, "fiberwise x")?;
    y.expect_dim(system.dim() - xd, "fiberwise y")?;
    if target.dim() != xd {
        return Err(invalid("fiberwise target must live on the fiber"));
    }
    let dynamics = system.dynamics()?;
    let mut orbit = dynamics.orbit(&TorusPoint::join(x, y));
    Ok(returns_on_orbit(&mut orbit, target, xd, count, cap, Flavor::Fiberwise))
}

/// Delayed returns along `α`: the `n`-th entry is the number of probes
/// between consecutive `j` with `T^{α̃^{(j)}} p ∈ A`, indices strictly
/// increasing. `target` may live on the whole space or on the fiber.
pub fn delayed_return_sequence(
    system: &SystemSpec,
    target: &TargetSet,
    schedule: &DelaySchedule,
    p: &TorusPoint,
    count: usize,
    cap: u64,
) -> Result<ReturnSequence> {
    check_cap(cap)?;
    target.validate()?;
    let pd = probe_dim(system, target.dim())?;
    p.expect_dim(system.dim(), "delayed_return_sequence")?;
    let dynamics = system.dynamics()?;
    let mut orbit = dynamics.orbit(p);
    Ok(delayed_on_orbit(&mut orbit, &[target], None, schedule, pd, count, cap))
}

fn check_labeled(system: &SystemSpec, targets: &[TargetSet], kappa: &KappaSchedule) -> Result<usize> {
    if targets.is_empty() {
        return Err(invalid("need at least one labeled target"));
    }
    let d = targets[0].dim();
    for t in targets {
        t.validate()?;
        if t.dim() != d {
            return Err(invalid("labeled targets differ in dimension"));
        }
    }
    if kappa.labels.iter().any(|l| *l == 0 || *l > targets.len()) {
        return Err(invalid(format!("κ label outside 1..={}", targets.len())));
    }
    probe_dim(system, d)
}

/// Delayed returns where the `n`-th probe tests `A^{(κ^{(n)})}` only.
pub fn kappa_delayed_sequence(
    system: &SystemSpec,
    targets: &[TargetSet],
    schedule: &DelaySchedule,
    kappa: &KappaSchedule,
    p: &TorusPoint,
    count: usize,
    cap: u64,
) -> Result<ReturnSequence> {
    check_cap(cap)?;
    let pd = check_labeled(system, targets, kappa)?;
    p.expect_dim(system.dim(), "kappa_delayed_sequence")?;
    let dynamics = system.dynamics()?;
    let refs: Vec<&TargetSet> = targets.iter().collect();
    let mut orbit = dynamics.orbit(p);
    Ok(delayed_on_orbit(
        &mut orbit,
        &refs,
        Some(&kappa.labels),
        schedule,
        pd,
        count,
        cap,
    ))
}

/// `S^{(n)} = Σ_{j=1}^{n} 1_{A^{(κ^{(j)})}} ∘ T^{α̃^{(j)}}`.
pub fn count_process(
    system: &SystemSpec,
    targets: &[TargetSet],
    schedule: &DelaySchedule,
    kappa: &KappaSchedule,
    p: &TorusPoint,
    horizon: usize,
) -> Result<u64> {
    let pd = check_labeled(system, targets, kappa)?;
    p.expect_dim(system.dim(), "count_process")?;
    if horizon > schedule.len() || horizon > kappa.labels.len() {
        return Err(invalid("horizon exceeds the schedule"));
    }
    let dynamics = system.dynamics()?;
    let mut orbit = dynamics.orbit(p);
    let mut s = 0;
    for j in 0..horizon {
        orbit.advance(schedule.alpha()[j]);
        if targets[kappa.labels[j] - 1].contains_coords(&orbit.coords()[..pd]) {
            s += 1;
        }
    }
    Ok(s)
}

/// Visits of an orbit to a labeled union: `(labels, gaps, censored)`.
pub fn visits_on_orbit(
    orbit: &mut Orbit<'_>,
    union: &TargetSet,
    length: usize,
    cap: u64,
) -> (Vec<usize>, Vec<u64>, bool) {
    let d = union.dim();
    let mut labels = Vec::with_capacity(length);
    let mut gaps = Vec::with_capacity(length);
    'outer: for _ in 0..length {
        for g in 1..=cap {
            orbit.step();
            if let Some(l) = union.label_of(&orbit.coords()[..d]) {
                labels.push(l);
                gaps.push(g);
                continue 'outer;
            }
        }
        return (labels, gaps, true);
    }
    (labels, gaps, false)
}

/// `α` = return gaps of `y` to `B = ∪ B^{(k)}` under `R`, and `κ^{(n)}` = the
/// label of the component entered at the `n`-th visit. On censoring the
/// schedules stop at the last completed visit and the flag is set.
pub fn kappa_schedule_from_visits(
    base: &SystemSpec,
    union: &TargetSet,
    y: &TorusPoint,
    length: usize,
    cap: u64,
) -> Result<(KappaSchedule, DelaySchedule, bool)> {
    check_cap(cap)?;
    union.validate()?;
    if union.dim() != base.dim() {
        return Err(invalid("labeled union must live on the base"));
    }
    y.expect_dim(base.dim(), "kappa_schedule_from_visits")?;
    let dynamics = base.dynamics()?;
    let mut orbit = dynamics.orbit(y);
    let (labels, gaps, censored) = visits_on_orbit(&mut orbit, union, length, cap);
    Ok((
        KappaSchedule::new(labels, union.label_count())?,
        DelaySchedule::new(gaps)?,
        censored,
    ))
}

/// Turns delayed returns of the fiber (measured in probes along `α = Φ_B(y)`)
/// into returns of the product point to `∪ A^{(k)} × B^{(k)}`, measured in
/// time: each gap is `Σ_{j} φ_B ∘ R_B^j` over the probes it spans.
pub fn rectangle_return_compose(
    x_returns: &ReturnSequence,
    base_gaps: &DelaySchedule,
) -> Result<ReturnSequence> {
    if x_returns.schedule_fingerprint != Some(base_gaps.fingerprint()) {
        return Err(invalid(
            "return sequence was not measured along this delay schedule",
        ));
    }
    let mut out = ReturnSequence::empty(Flavor::Plain, x_returns.cap, None);
    let at = base_gaps.alphatilde();
    let mut idx = 0usize;
    let mut prev = 0u64;
    for (g, c) in x_returns.gaps.iter().zip(&x_returns.censored) {
        if *c {
            out.push(None);
            break;
        }
        idx += *g as usize;
        let t = *at
            .get(idx - 1)
            .ok_or_else(|| invalid("return index beyond the delay schedule"))?;
        out.push(Some(t - prev));
        prev = t;
    }
    Ok(out)
}

/// One CSV row per entry: `flavor,gap,censored`.
pub fn write_csv<W: Write>(seqs: &[ReturnSequence], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["flavor", "gap", "censored"])?;
    for s in seqs {
        for (g, c) in s.gaps.iter().zip(&s.censored) {
            wr.write_record([s.flavor.as_str(), &g.to_string(), &c.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::systems::{iterate, FiberFamily, TauSpec};
    use crate::torus::sample_point;
    use proptest::prelude::*;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn quarter() -> SystemSpec {
        SystemSpec::rotation(vec![0.25]).unwrap()
    }

    /// Probe-by-probe oracle that recomputes each probe from scratch.
    fn brute_delayed(
        s: &SystemSpec,
        targets: &[TargetSet],
        labels: &[usize],
        at: &[u64],
        p: &TorusPoint,
        count: usize,
    ) -> Vec<u64> {
        let pd = targets[0].dim();
        let mut out = Vec::new();
        let mut last = 0usize;
        for j in 1..=at.len() {
            let q = iterate(s, p, at[j - 1]).unwrap();
            if targets[labels[j - 1] - 1].contains_coords(&q.coords()[..pd]) {
                out.push((j - last) as u64);
                last = j;
                if out.len() == count {
                    break;
                }
            }
        }
        out
    }

    #[test]
    fn first_return_examples() {
        let t = TargetSet::ball(vec![0.0], 0.01).unwrap();
        let p = TorusPoint::new(vec![0.0]);
        assert_eq!(first_return(&quarter(), &t, &p, 100).unwrap(), (4, false));
        let g = SystemSpec::golden_rotation();
        assert_eq!(first_return(&g, &t, &p, 1000).unwrap(), (55, false));
        assert_eq!(first_return(&g, &t, &p, 54).unwrap(), (54, true));
        let cat = SystemSpec::cat_map();
        let b = TargetSet::ball(vec![0.0, 0.0], 0.05).unwrap();
        assert_eq!(first_return(&cat, &b, &TorusPoint::origin(2), 10).unwrap(), (1, false));
        assert!(first_return(&g, &t, &p, 0).is_err());
    }

    #[test]
    fn golden_return_oracle() {
        // brute force over m: first m with ‖mα‖ ≤ 0.01
        let a = golden();
        let m = (1..).find(|m| {
            let v = *m as f64 * a;
            (v - v.round()).abs() <= 0.01
        });
        assert_eq!(m, Some(55));
    }

    #[test]
    fn return_sequence_examples() {
        let t = TargetSet::ball(vec![0.0], 0.01).unwrap();
        let s = return_sequence(&quarter(), &t, &TorusPoint::new(vec![0.0]), 3, 10).unwrap();
        assert_eq!(s.gaps, vec![4, 4, 4]);
        assert_eq!(s.times().unwrap(), vec![4, 8, 12]);
        // 1/7 → 2/7 → 4/7 → 1/7 under doubling; [0, 1/2] contains 1/7 and 2/7
        let half = TargetSet::cube(vec![0.25], 0.25).unwrap();
        let s = return_sequence(&SystemSpec::Doubling, &half, &TorusPoint::new(vec![1.0 / 7.0]), 4, 10)
            .unwrap();
        assert_eq!(s.gaps[0], 1);
        let never = TargetSet::ball(vec![0.5], 0.01).unwrap();
        let s = return_sequence(&quarter(), &never, &TorusPoint::new(vec![0.1]), 3, 7).unwrap();
        assert_eq!((s.gaps.clone(), s.censored.clone()), (vec![7], vec![true]));
        assert!(s.uncensored_gaps().is_empty());
    }

    #[test]
    fn first_return_map_recursion() {
        let g = SystemSpec::golden_rotation();
        let t = TargetSet::ball(vec![0.3], 0.02).unwrap();
        let p = TorusPoint::new(vec![0.1]);
        let seq = return_sequence(&g, &t, &p, 5, 10_000).unwrap();
        let mut q = p.clone();
        for g_n in &seq.gaps {
            let (n, c) = first_return(&g, &t, &q, 10_000).unwrap();
            assert!(!c);
            assert_eq!(n, *g_n);
            q = iterate(&g, &q, n).unwrap();
        }
    }

    #[test]
    fn fiberwise_equals_product_identity() {
        let systems = [
            SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation()).unwrap(),
            SystemSpec::skew_product(
                FiberFamily::Translation { beta: vec![0.1234] },
                TauSpec::plus_minus_one(),
                SystemSpec::golden_rotation(),
            )
            .unwrap(),
        ];
        let mut rng = RngStream::new(8, 8);
        for s in &systems {
            let xd = s.fiber_dim().unwrap();
            for _ in 0..100 {
                let x = sample_point(xd, &mut rng).unwrap();
                let y = sample_point(s.dim() - xd, &mut rng).unwrap();
                let a = TargetSet::ball(x.coords().to_vec(), 0.1).unwrap();
                let fw = fiberwise_return_sequence(s, &a, &x, &y, 5, 100_000).unwrap();
                let whole_y = TargetSet::rect(a.clone(), TargetSet::Whole { dim: s.dim() - xd }).unwrap();
                let direct = return_sequence(s, &whole_y, &TorusPoint::join(&x, &y), 5, 100_000).unwrap();
                assert_eq!(fw.gaps, direct.gaps);
            }
        }
    }

    #[test]
    fn fiberwise_of_direct_product_ignores_y() {
        let s = SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation()).unwrap();
        let mut rng = RngStream::new(4, 4);
        for _ in 0..100 {
            let x = sample_point(2, &mut rng).unwrap();
            let y = sample_point(1, &mut rng).unwrap();
            let a = TargetSet::ball(vec![0.5, 0.5], 0.1).unwrap();
            let fw = fiberwise_return_sequence(&s, &a, &x, &y, 3, 100_000).unwrap();
            let alone = return_sequence(&SystemSpec::cat_map(), &a, &x, 3, 100_000).unwrap();
            assert_eq!(fw.gaps, alone.gaps);
        }
        let flat = SystemSpec::cat_map();
        let a = TargetSet::ball(vec![0.5], 0.1).unwrap();
        assert!(fiberwise_return_sequence(&flat, &a, &TorusPoint::origin(1), &TorusPoint::origin(1), 1, 10).is_err());
    }

    #[test]
    fn fiberwise_skew_example_by_brute_force() {
        let s = SystemSpec::skew_product(
            FiberFamily::Translation { beta: vec![0.1] },
            TauSpec::plus_minus_one(),
            quarter(),
        )
        .unwrap();
        let a = TargetSet::ball(vec![0.2], 0.001).unwrap();
        let x = TorusPoint::new(vec![0.0]);
        let y = TorusPoint::new(vec![0.0]);
        let fw = fiberwise_return_sequence(&s, &a, &x, &y, 1, 1000).unwrap();
        // by hand: x_n = 0.1·τ_n(0) with τ_n = 1,2,1,0,1,2,... so the first hit is n = 2
        let oracle = (1..1000u64)
            .find(|n| {
                let tau_n: i64 = (0..*n).map(|j| if (j % 4) < 2 { 1 } else { -1 }).sum();
                let v = crate::torus::wrap(0.1 * tau_n as f64);
                crate::torus::circle_dist(v, 0.2) <= 0.001
            })
            .unwrap();
        assert_eq!(fw.gaps, vec![oracle]);
        assert_eq!(oracle, 2);
    }

    #[test]
    fn delayed_examples() {
        let t = TargetSet::ball(vec![0.0], 0.01).unwrap();
        let p = TorusPoint::new(vec![0.0]);
        let twos = DelaySchedule::constant(2, 100).unwrap();
        let s = delayed_return_sequence(&quarter(), &t, &twos, &p, 4, 50).unwrap();
        assert_eq!(s.gaps, vec![2, 2, 2, 2]);
        // α ≡ 1 is the plain sequence
        let g = SystemSpec::golden_rotation();
        let ones = DelaySchedule::constant(1, 5000).unwrap();
        let d = delayed_return_sequence(&g, &t, &ones, &p, 10, 5000).unwrap();
        let plain = return_sequence(&g, &t, &p, 10, 5000).unwrap();
        assert_eq!(d.gaps, plain.gaps);
        // schedule exhaustion censors
        let short = DelaySchedule::constant(1, 3).unwrap();
        let s = delayed_return_sequence(&quarter(), &t, &short, &p, 1, 50).unwrap();
        assert_eq!((s.gaps.clone(), s.censored.clone()), (vec![50], vec![true]));
    }

    #[test]
    fn triangular_schedule_matches_brute_force() {
        let tri = DelaySchedule::triangular(300).unwrap();
        let mut rng = RngStream::new(5, 1);
        for _ in 0..50 {
            let c = rng.uniform();
            let t = TargetSet::ball(vec![c], 0.1).unwrap();
            let p = sample_point(1, &mut rng).unwrap();
            let fast = delayed_return_sequence(&SystemSpec::Doubling, &t, &tri, &p, 3, 300).unwrap();
            let slow = brute_delayed(&SystemSpec::Doubling, &[t], &[1; 300], tri.alphatilde(), &p, 3);
            assert_eq!(fast.uncensored_gaps(), &slow[..fast.uncensored_gaps().len()]);
        }
    }

    #[test]
    fn kappa_examples() {
        let g = SystemSpec::golden_rotation();
        let t = TargetSet::ball(vec![0.2], 0.05).unwrap();
        let sched = DelaySchedule::constant(3, 2000).unwrap();
        let p = TorusPoint::new(vec![0.7]);
        let one = kappa_delayed_sequence(&g, &[t.clone()], &sched, &KappaSchedule::constant(2000), &p, 8, 2000)
            .unwrap();
        let plain = delayed_return_sequence(&g, &t, &sched, &p, 8, 2000).unwrap();
        assert_eq!(one.gaps, plain.gaps);

        let targets = [TargetSet::Whole { dim: 1 }, TargetSet::Empty { dim: 1 }];
        let labels = vec![2, 1, 2, 2, 1, 1, 2, 1];
        let kappa = KappaSchedule::new(labels, 2).unwrap();
        let s = kappa_delayed_sequence(&g, &targets, &DelaySchedule::constant(1, 8).unwrap(), &kappa, &p, 4, 8)
            .unwrap();
        assert_eq!(s.gaps, vec![2, 3, 1, 2]);
        let bad = KappaSchedule {
            labels: vec![3],
            frequencies: vec![1.0],
        };
        assert!(kappa_delayed_sequence(&g, &targets, &sched, &bad, &p, 1, 10).is_err());
    }

    #[test]
    fn kappa_random_instances_match_brute_force() {
        let g = SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation()).unwrap();
        let mut rng = RngStream::new(21, 0);
        for _ in 0..30 {
            let targets = vec![
                TargetSet::ball(sample_point(2, &mut rng).unwrap().into_coords(), 0.15).unwrap(),
                TargetSet::cube(sample_point(2, &mut rng).unwrap().into_coords(), 0.1).unwrap(),
            ];
            let len = 200;
            let sched = DelaySchedule::from_fn(len, |_| 1 + rng.below(4)).unwrap();
            let labels: Vec<usize> = (0..len).map(|_| 1 + rng.below(2) as usize).collect();
            let kappa = KappaSchedule::new(labels.clone(), 2).unwrap();
            let p = sample_point(3, &mut rng).unwrap();
            let fast = kappa_delayed_sequence(&g, &targets, &sched, &kappa, &p, 5, len as u64).unwrap();
            let slow = brute_delayed(&g, &targets, &labels, sched.alphatilde(), &p, 5);
            assert_eq!(fast.uncensored_gaps(), &slow[..fast.uncensored_gaps().len()]);
        }
    }

    #[test]
    fn count_process_examples() {
        let t = [TargetSet::ball(vec![0.0], 0.01).unwrap()];
        let ones = DelaySchedule::constant(1, 20).unwrap();
        let k = KappaSchedule::constant(20);
        let p = TorusPoint::new(vec![0.0]);
        assert_eq!(count_process(&quarter(), &t, &ones, &k, &p, 12).unwrap(), 3);
        assert_eq!(count_process(&quarter(), &t, &ones, &k, &p, 0).unwrap(), 0);
        assert!(count_process(&quarter(), &t, &ones, &k, &p, 21).is_err());
    }

    #[test]
    fn visits_schedule_examples() {
        let u = TargetSet::union(vec![
            TargetSet::ball(vec![0.0], 0.01).unwrap(),
            TargetSet::ball(vec![0.5], 0.01).unwrap(),
        ])
        .unwrap();
        let (k, a, c) = kappa_schedule_from_visits(&quarter(), &u, &TorusPoint::new(vec![0.0]), 4, 10).unwrap();
        assert_eq!(k.labels, vec![2, 1, 2, 1]);
        assert_eq!(a.alpha(), &[2, 2, 2, 2]);
        assert!(!c);

        let b = TargetSet::ball(vec![0.3], 0.05).unwrap();
        let g = SystemSpec::golden_rotation();
        let y = TorusPoint::new(vec![0.1]);
        let (k, a, _) = kappa_schedule_from_visits(&g, &b, &y, 20, 1000).unwrap();
        assert!(k.labels.iter().all(|l| *l == 1));
        assert_eq!(a.alpha(), &return_sequence(&g, &b, &y, 20, 1000).unwrap().gaps[..]);
    }

    #[test]
    fn visit_frequencies_match_lengths() {
        let u = TargetSet::union(vec![
            TargetSet::ball(vec![0.2], 0.01).unwrap(),
            TargetSet::ball(vec![0.6], 0.02).unwrap(),
        ])
        .unwrap();
        let (k, _, c) = kappa_schedule_from_visits(&SystemSpec::golden_rotation(), &u, &TorusPoint::new(vec![0.0]), 10_000, 10_000)
            .unwrap();
        assert!(!c);
        let band = (2f64 / 0.001).ln().sqrt() / (2.0 * 10_000f64).sqrt();
        assert!((k.frequencies[0] - 1.0 / 3.0).abs() < band);
        assert!((k.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn rect_union(rng: &mut RngStream, k: usize) -> (TargetSet, Vec<TargetSet>, TargetSet) {
        let mut comps = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..k {
            let a = TargetSet::cube(vec![rng.uniform()], 0.05 + 0.1 * rng.uniform()).unwrap();
            let b = TargetSet::cube(vec![(i as f64 + 0.5) / k as f64], 0.2 / k as f64).unwrap();
            comps.push(TargetSet::rect(a.clone(), b.clone()).unwrap());
            xs.push(a);
            ys.push(b);
        }
        (TargetSet::union(comps).unwrap(), xs, TargetSet::union(ys).unwrap())
    }

    #[test]
    fn rectangle_sum_identity() {
        let s = SystemSpec::product(SystemSpec::Doubling, SystemSpec::golden_rotation()).unwrap();
        let mut rng = RngStream::new(77, 0);
        for k in [1, 2] {
            for _ in 0..50 {
                let (q, xs, b) = rect_union(&mut rng, k);
                let x = sample_point(1, &mut rng).unwrap();
                let y = sample_point(1, &mut rng).unwrap();
                let (kappa, alpha, _) = kappa_schedule_from_visits(&SystemSpec::golden_rotation(), &b, &y, 400, 10_000).unwrap();
                let xr = kappa_delayed_sequence(&s, &xs, &alpha, &kappa, &TorusPoint::join(&x, &y), 5, 400).unwrap();
                let composed = rectangle_return_compose(&xr, &alpha).unwrap();
                let direct = return_sequence(&s, &q, &TorusPoint::join(&x, &y), composed.uncensored_gaps().len(), 1_000_000).unwrap();
                assert_eq!(composed.uncensored_gaps(), &direct.gaps[..]);
            }
        }
    }

    #[test]
    fn whole_base_composes_to_fiberwise() {
        let s = SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation()).unwrap();
        let a = TargetSet::ball(vec![0.4, 0.4], 0.1).unwrap();
        let x = TorusPoint::new(vec![0.1, 0.2]);
        let y = TorusPoint::new(vec![0.3]);
        let whole = TargetSet::Whole { dim: 1 };
        let (kappa, alpha, _) = kappa_schedule_from_visits(&SystemSpec::golden_rotation(), &whole, &y, 2000, 10).unwrap();
        assert!(alpha.alpha().iter().all(|a| *a == 1));
        let xr = kappa_delayed_sequence(&s, &[a.clone()], &alpha, &kappa, &TorusPoint::join(&x, &y), 5, 2000).unwrap();
        let composed = rectangle_return_compose(&xr, &alpha).unwrap();
        let fw = fiberwise_return_sequence(&s, &a, &x, &y, 5, 2000).unwrap();
        assert_eq!(composed.gaps, fw.gaps);
        let other = DelaySchedule::constant(2, 2000).unwrap();
        assert!(rectangle_return_compose(&xr, &other).is_err());
    }

    #[test]
    fn kac_mean_on_golden_quarter() {
        let g = SystemSpec::golden_rotation();
        let a = TargetSet::cube(vec![0.125], 0.125).unwrap();
        let dynamics = g.dynamics().unwrap();
        let n = 100_000;
        let mut s = 0.0;
        for i in 0..n {
            let mut rng = RngStream::new(3, i);
            let p = a.sample(&mut rng).unwrap();
            let mut o = dynamics.orbit(&p);
            s += next_hit(&mut o, &a, 1, 1000).unwrap() as f64;
        }
        assert!((s / n as f64 - 4.0).abs() < 0.08);
    }

    #[test]
    fn csv_rows() {
        let t = TargetSet::ball(vec![0.0], 0.01).unwrap();
        let s = return_sequence(&quarter(), &t, &TorusPoint::new(vec![0.0]), 2, 10).unwrap();
        let mut buf = Vec::new();
        write_csv(&[s], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "flavor,gap,censored\nplain,4,false\nplain,4,false\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn renewal_duality(seed in any::<u64>(), n in 0usize..300, big_n in 1usize..8) {
            let mut rng = RngStream::new(seed, 0);
            let s = SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation()).unwrap();
            let targets = vec![
                TargetSet::ball(sample_point(3, &mut rng).unwrap().into_coords(), 0.2).unwrap(),
                TargetSet::cube(sample_point(3, &mut rng).unwrap().into_coords(), 0.2).unwrap(),
            ];
            let sched = DelaySchedule::from_fn(300, |_| 1 + rng.below(3)).unwrap();
            let kappa = KappaSchedule::new((0..300).map(|_| 1 + rng.below(2) as usize).collect(), 2).unwrap();
            let p = sample_point(3, &mut rng).unwrap();
            let count = count_process(&s, &targets, &sched, &kappa, &p, n).unwrap();
            let seq = kappa_delayed_sequence(&s, &targets, &sched, &kappa, &p, big_n, 300).unwrap();
            let gaps = seq.uncensored_gaps();
            // when fewer than N returns exist within the schedule, the sum exceeds any n ≤ 300
            let sum: u64 = if gaps.len() >= big_n { gaps[..big_n].iter().sum() } else { u64::MAX };
            prop_assert_eq!(count >= big_n as u64, sum <= n as u64);
        }

        #[test]
        fn larger_ball_never_returns_later(seed in any::<u64>(), r in 0.01f64..0.1, grow in 1.0f64..2.0) {
            let mut rng = RngStream::new(seed, 1);
            let c = sample_point(2, &mut rng).unwrap();
            let small = TargetSet::ball(c.coords().to_vec(), r).unwrap();
            let big = TargetSet::ball(c.coords().to_vec(), (r * grow).min(0.2)).unwrap();
            let p = sample_point(2, &mut rng).unwrap();
            let cat = SystemSpec::cat_map();
            let (a, _) = first_return(&cat, &small, &p, 100_000).unwrap();
            let (b, _) = first_return(&cat, &big, &p, 100_000).unwrap();
            prop_assert!(b <= a);
        }
    }
}
