//! Configured experiments: run a target family through a system, keep every
//! sampled gap, summarize, write `report.json` / `samples.csv` / `cdf.csv`,
//! and merge reports from shards.
//!
//! Sample `i` of row `k` always draws from the same stream, so a run split
//! into shards (contiguous index ranges) reproduces the single run exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{self, ConditionRow, RecurrenceMode, Zeta};
use crate::error::{Error, Result};
use crate::returns::{delayed_on_orbit, next_hit, returns_on_orbit, visits_on_orbit, DelaySchedule, Flavor};
use crate::rng::{mix64, Domain, RngStream};
use crate::stats::{self, default_cap, CompensatedSum, EmpiricalLaw, LawReport, MAX_CENSOR_RATE};
use crate::systems::{SystemSpec, TauSpec};
use crate::targets::TargetSet;
use crate::torus::{sample_point, TorusPoint};
use crate::trig::TrigPoly;

pub const SCHEMA_VERSION: u32 = 1;

/// Shipped configurations, by name.
pub const CANNED: &[(&str, &str)] = &[
    ("cat-x-golden-plt", include_str!("../../../configs/cat-x-golden-plt.json")),
    ("fixed-point-negative", include_str!("../../../configs/fixed-point-negative.json")),
];

pub fn canned(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = CANNED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no canned experiment named {name}")))?;
    ExperimentConfig::from_json(text)
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ball,
    Cube,
}

/// Targets of one shape around a fixed center, one per radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFamily {
    #[serde(default = "ball")]
    pub shape: Shape,
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
}

fn ball() -> Shape {
    Shape::Ball
}

impl TargetFamily {
    pub fn target(&self, radius: f64) -> Result<TargetSet> {
        let c = TorusPoint::new(self.center.clone());
        match self.shape {
            Shape::Ball => TargetSet::ball(c, radius),
            Shape::Cube => TargetSet::cube(c, radius),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { a: u64, length: usize },
    Triangular { length: usize },
    /// `α = Φ_B(y)` for `y ~ ν`, drawn per sample.
    BaseVisits {
        base: SystemSpec,
        target: TargetSet,
        #[serde(default)]
        length: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FlavorSpec {
    /// Returns of the whole system to the target.
    #[default]
    Plain,
    /// Returns of the fiber coordinates along `T_y`; the target lives on `X`.
    Fiberwise,
    Delayed { schedule: ScheduleSpec },
    /// Probes along visits of `y ~ ν` to a labeled union; label `k` is tested
    /// against the family target moved to `centers[k−1]`.
    Kappa {
        base: SystemSpec,
        union: TargetSet,
        centers: Vec<Vec<f64>>,
        #[serde(default)]
        length: Option<usize>,
    },
}

impl FlavorSpec {
    pub fn flavor(&self) -> Flavor {
        match self {
            FlavorSpec::Plain => Flavor::Plain,
            FlavorSpec::Fiberwise => Flavor::Fiberwise,
            FlavorSpec::Delayed { .. } => Flavor::Delayed,
            FlavorSpec::Kappa { .. } => Flavor::Kappa,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    /// Hitting law from `μ` next to the return law (plain and fiberwise).
    #[serde(default = "yes")]
    pub hitting: bool,
    #[serde(default = "yes")]
    pub kac: bool,
    /// `K` for `μ_A(φ_A ≤ K)`.
    #[serde(default)]
    pub short_return: Option<u64>,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            hitting: true,
            kac: true,
            short_return: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "check", deny_unknown_fields)]
pub enum ConditionSpec {
    Ee {
        #[serde(default)]
        system: Option<SystemSpec>,
        fields: Vec<TrigPoly>,
        n_lo: u32,
        n_hi: u32,
        samples: u64,
    },
    PointwiseEe {
        #[serde(default)]
        system: Option<SystemSpec>,
        field: TrigPoly,
        n_lo: u32,
        n_hi: u32,
        points: u64,
        delta: f64,
    },
    Recurrence {
        #[serde(default)]
        system: Option<SystemSpec>,
        center: Vec<f64>,
        radii: Vec<f64>,
        mode: RecurrenceMode,
        samples: u64,
    },
    Ba {
        #[serde(default)]
        tau: Option<TauSpec>,
        #[serde(default)]
        system: Option<SystemSpec>,
        n_lo: u32,
        n_hi: u32,
        samples: u64,
    },
    Uc {
        #[serde(default)]
        system: Option<SystemSpec>,
        target: TargetSet,
        s_grid: Vec<f64>,
        #[serde(default)]
        exponents: Option<(f64, f64)>,
        samples: u64,
    },
    Kappa {
        #[serde(default)]
        system: Option<SystemSpec>,
        union: TargetSet,
        length: usize,
        samples: u64,
    },
    Mem {
        #[serde(default)]
        system: Option<SystemSpec>,
        target: TargetSet,
        gaps: Vec<u64>,
        samples: u64,
    },
    Census {
        levels: Vec<(TargetSet, TargetSet)>,
        zeta: Zeta,
        t: f64,
        samples: u64,
    },
    Dimension {
        d: usize,
        d_base: usize,
        r_base: f64,
        delta1: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment_id: String,
    pub system: SystemSpec,
    pub target: TargetFamily,
    #[serde(default)]
    pub flavor: FlavorSpec,
    pub samples: u64,
    /// Index of the first sample; shards of one run use disjoint ranges.
    #[serde(default)]
    pub sample_offset: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub shards: u64,
    /// Return gaps kept per sample (the process length `J`).
    #[serde(default = "one_usize")]
    pub gaps_per_sample: usize,
    /// Defaults to `⌈100 / μ(A)⌉` per radius.
    #[serde(default)]
    pub cap: Option<u64>,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub conditions: Vec<ConditionSpec>,
    #[serde(default)]
    pub output: Option<OutputPaths>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not {SCHEMA_VERSION}", self.schema_version));
        }
        if self.experiment_id.is_empty() {
            return bad("experiment_id must not be empty".into());
        }
        if self.samples == 0 || self.shards == 0 || self.gaps_per_sample == 0 {
            return bad("samples, shards and gaps_per_sample must be positive".into());
        }
        if self.cap == Some(0) {
            return bad("cap must be positive".into());
        }
        if self.target.radii.is_empty() {
            return bad("target family needs at least one radius".into());
        }
        self.system.validate().map_err(config_error)?;
        let want = self.target_dim().map_err(config_error)?;
        if self.target.center.len() != want {
            return bad(format!("target center needs {want} coordinates"));
        }
        for r in &self.target.radii {
            self.target.target(*r).map_err(config_error)?;
        }
        match &self.flavor {
            FlavorSpec::Delayed { schedule } => match schedule {
                ScheduleSpec::Constant { a, length } => {
                    DelaySchedule::constant(*a, *length).map_err(config_error)?;
                }
                ScheduleSpec::Triangular { length } => {
                    DelaySchedule::triangular(*length).map_err(config_error)?;
                }
                ScheduleSpec::BaseVisits { base, target, .. } => {
                    base.validate().map_err(config_error)?;
                    target.validate().map_err(config_error)?;
                    if target.dim() != base.dim() {
                        return bad("base_visits target must live on the base".into());
                    }
                }
            },
            FlavorSpec::Kappa { base, union, centers, .. } => {
                base.validate().map_err(config_error)?;
                union.validate().map_err(config_error)?;
                if union.dim() != base.dim() {
                    return bad("kappa union must live on the base".into());
                }
                if centers.len() != union.label_count() {
                    return bad("one fiber center per union component".into());
                }
                if centers.iter().any(|c| c.len() != want) {
                    return bad(format!("kappa centers need {want} coordinates"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn target_dim(&self) -> Result<usize> {
        match self.flavor {
            FlavorSpec::Fiberwise => self
                .system
                .fiber_dim()
                .ok_or_else(|| Error::Config("fiberwise flavor needs a product or skew product".into())),
            _ => Ok(self.system.dim()),
        }
    }

    fn probe_dim(&self) -> usize {
        self.target_dim().expect("validated")
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}

/// One sampled return sequence: gaps, and whether the last one is censored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub gaps: Vec<u64>,
    pub censored: bool,
}

/// A contiguous block of sample indices and what they produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub seed: u64,
    pub start: u64,
    pub returning: Vec<SampleRecord>,
    pub hitting: Vec<SampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSummary {
    pub n: u64,
    pub censored: u64,
    pub censor_rate: f64,
    /// Rescaled first gaps: compensated sum and sum of squares.
    pub sum: CompensatedSum,
    pub sum_sq: CompensatedSum,
    pub report: Option<LawReport>,
    pub no_verdict: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KacSummary {
    pub mean: f64,
    pub sigma: f64,
    pub contains_one: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortReturnSummary {
    pub threshold: u64,
    pub hits: u64,
    pub samples: u64,
    pub estimate: f64,
    pub band: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub radius: f64,
    /// Rescaling measure: `μ(A)`, or the per-probe hit rate for κ-schedules.
    pub measure: f64,
    pub cap: u64,
    pub returning: LawSummary,
    pub hitting: Option<LawSummary>,
    pub kac: Option<KacSummary>,
    pub short_return: Option<ShortReturnSummary>,
    pub blocks: Vec<SampleBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub row: ConditionRow,
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub mixed_seed: bool,
    pub censoring_overflow: bool,
    pub rows: Vec<RowReport>,
    pub conditions: Vec<ConditionResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiments: Vec<ExperimentReport>,
}

impl Report {
    pub fn censoring_overflow(&self) -> bool {
        self.experiments.iter().any(|e| e.censoring_overflow)
    }

    pub fn read(path: &Path) -> Result<Report> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(s) if s == SCHEMA_VERSION as u64 => {}
            other => {
                return Err(Error::Config(format!(
                    "report schema_version {other:?} is not {SCHEMA_VERSION}"
                )))
            }
        }
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }
}

fn row_seed(seed: u64, row: usize) -> u64 {
    mix64(seed ^ mix64(row as u64 + 1))
}

/// What a row needs in the sampling loop.
struct RowPlan<'a> {
    cfg: &'a ExperimentConfig,
    dynamics: crate::systems::Dynamics,
    target: TargetSet,
    fiber_targets: Vec<TargetSet>,
    schedule: Option<DelaySchedule>,
    base: Option<(crate::systems::Dynamics, TargetSet, usize, u64)>,
    measure: f64,
    cap: u64,
    seed: u64,
}

impl<'a> RowPlan<'a> {
    fn new(cfg: &'a ExperimentConfig, row: usize, seed: u64) -> Result<Self> {
        let radius = cfg.target.radii[row];
        let target = cfg.target.target(radius)?;
        let j = cfg.gaps_per_sample as u64;
        let mut measure = target.measure()?;
        let mut fiber_targets = vec![target.clone()];
        let mut schedule = None;
        let mut base = None;
        match &cfg.flavor {
            FlavorSpec::Delayed { schedule: s } => match s {
                ScheduleSpec::Constant { a, length } => schedule = Some(DelaySchedule::constant(*a, *length)?),
                ScheduleSpec::Triangular { length } => schedule = Some(DelaySchedule::triangular(*length)?),
                ScheduleSpec::BaseVisits { base: b, target: bt, length } => {
                    let cap_b = default_cap(bt.measure()?);
                    let len = length.unwrap_or((j * default_cap(measure)) as usize);
                    base = Some((b.dynamics()?, bt.clone(), len, cap_b));
                }
            },
            FlavorSpec::Kappa { base: b, union, centers, length } => {
                fiber_targets = centers
                    .iter()
                    .map(|c| TargetFamily { center: c.clone(), ..cfg.target.clone() }.target(radius))
                    .collect::<Result<_>>()?;
                let nu = union.measure()?;
                measure = 0.0;
                for (a, bk) in fiber_targets.iter().zip(union.components()) {
                    measure += a.measure()? * bk.measure()? / nu;
                }
                let len = length.unwrap_or((j * default_cap(measure)) as usize);
                base = Some((b.dynamics()?, union.clone(), len, default_cap(nu)));
            }
            _ => {}
        }
        Ok(Self {
            cfg,
            dynamics: cfg.system.dynamics()?,
            target,
            fiber_targets,
            schedule,
            base,
            measure,
            cap: cfg.cap.unwrap_or_else(|| default_cap(measure)),
            seed,
        })
    }

    fn returning(&self, i: u64) -> Result<SampleRecord> {
        let cfg = self.cfg;
        let j = cfg.gaps_per_sample;
        let pd = cfg.probe_dim();
        let mut rng = RngStream::for_sample(self.seed, Domain::Return, i);
        let seq = match &cfg.flavor {
            FlavorSpec::Plain => {
                let p = self.target.sample(&mut rng)?;
                let mut orbit = self.dynamics.refining_orbit(&p, rng);
                returns_on_orbit(&mut orbit, &self.target, pd, j, self.cap, Flavor::Plain)
            }
            FlavorSpec::Fiberwise => {
                let x = self.target.sample(&mut rng)?;
                let y = sample_point(cfg.system.dim() - pd, &mut rng)?;
                let mut orbit = self.dynamics.refining_orbit(&TorusPoint::join(&x, &y), rng);
                returns_on_orbit(&mut orbit, &self.target, pd, j, self.cap, Flavor::Fiberwise)
            }
            FlavorSpec::Delayed { .. } | FlavorSpec::Kappa { .. } => {
                let (schedule, labels) = match (&self.schedule, &self.base) {
                    (Some(s), _) => (s.clone(), None),
                    (None, Some((bd, bt, len, cap_b))) => {
                        let y = sample_point(bd.dim(), &mut rng)?;
                        let mut base_orbit = bd.refining_orbit(&y, rng.clone());
                        let (labels, gaps, _) = visits_on_orbit(&mut base_orbit, bt, *len, *cap_b);
                        if gaps.is_empty() {
                            return Ok(SampleRecord {
                                gaps: vec![self.cap],
                                censored: true,
                            });
                        }
                        (DelaySchedule::new(gaps)?, Some(labels))
                    }
                    _ => unreachable!("delayed rows carry a schedule"),
                };
                let x = sample_point(cfg.system.dim(), &mut rng)?;
                let mut orbit = self.dynamics.refining_orbit(&x, rng);
                let targets: Vec<&TargetSet> = self.fiber_targets.iter().collect();
                let kappa = match &cfg.flavor {
                    FlavorSpec::Kappa { .. } => labels.as_deref(),
                    _ => None,
                };
                delayed_on_orbit(&mut orbit, &targets, kappa, &schedule, pd, j, self.cap)
            }
        };
        Ok(SampleRecord {
            censored: seq.is_censored(),
            gaps: seq.gaps,
        })
    }

    fn hitting(&self, i: u64) -> Result<SampleRecord> {
        let mut rng = RngStream::for_sample(self.seed, Domain::Hitting, i);
        let p = sample_point(self.cfg.system.dim(), &mut rng)?;
        let mut orbit = self.dynamics.refining_orbit(&p, rng);
        let hit = next_hit(&mut orbit, &self.target, self.cfg.probe_dim(), self.cap);
        Ok(SampleRecord {
            gaps: vec![hit.unwrap_or(self.cap)],
            censored: hit.is_none(),
        })
    }

    fn wants_hitting(&self) -> bool {
        self.cfg.checks.hitting && matches!(self.cfg.flavor, FlavorSpec::Plain | FlavorSpec::Fiberwise)
    }

    fn block(&self, range: Range<u64>) -> Result<SampleBlock> {
        let returning = range.clone().into_par_iter().map(|i| self.returning(i)).collect::<Result<_>>()?;
        let hitting = if self.wants_hitting() {
            range.clone().into_par_iter().map(|i| self.hitting(i)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(SampleBlock {
            seed: self.cfg.seed,
            start: range.start,
            returning,
            hitting,
        })
    }
}

/// Contiguous split of `range` into `shards` pieces.
pub fn shard_ranges(range: Range<u64>, shards: u64) -> Vec<Range<u64>> {
    let n = range.end - range.start;
    let shards = shards.max(1).min(n.max(1));
    (0..shards)
        .map(|k| range.start + n * k / shards..range.start + n * (k + 1) / shards)
        .collect()
}

fn first_gap_law(records: &[&SampleRecord], measure: f64) -> EmpiricalLaw {
    EmpiricalLaw {
        samples: records.iter().map(|r| r.gaps[0] as f64 * measure).collect(),
        censored: records.iter().map(|r| r.censored && r.gaps.len() == 1).collect(),
    }
}

fn summarize_law(law: &EmpiricalLaw) -> LawSummary {
    let (report, no_verdict) = match stats::law_report(law) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    LawSummary {
        n: law.n() as u64,
        censored: law.censored.iter().filter(|c| **c).count() as u64,
        censor_rate: law.censor_rate(),
        sum: law.samples.iter().copied().collect(),
        sum_sq: law.samples.iter().map(|x| x * x).collect(),
        report,
        no_verdict,
    }
}

/// Joins adjacent blocks of one seed whose index ranges meet.
fn coalesce(blocks: Vec<SampleBlock>) -> Vec<SampleBlock> {
    let mut out: Vec<SampleBlock> = Vec::with_capacity(blocks.len());
    for b in blocks {
        match out.last_mut() {
            Some(a) if a.seed == b.seed && a.start + a.returning.len() as u64 == b.start => {
                a.returning.extend(b.returning);
                a.hitting.extend(b.hitting);
            }
            _ => out.push(b),
        }
    }
    out
}

fn summarize_row(cfg: &ExperimentConfig, radius: f64, measure: f64, cap: u64, mut blocks: Vec<SampleBlock>) -> RowReport {
    blocks.sort_by_key(|b| (b.start, b.seed));
    let blocks = coalesce(blocks);
    let returning: Vec<&SampleRecord> = blocks.iter().flat_map(|b| &b.returning).collect();
    let hitting: Vec<&SampleRecord> = blocks.iter().flat_map(|b| &b.hitting).collect();
    let rlaw = first_gap_law(&returning, measure);
    let returning_summary = summarize_law(&rlaw);
    let hitting_summary = (!hitting.is_empty()).then(|| summarize_law(&first_gap_law(&hitting, measure)));
    let n = rlaw.n() as f64;
    let kac = (cfg.checks.kac && matches!(cfg.flavor, FlavorSpec::Plain | FlavorSpec::Fiberwise) && n >= 2.0).then(|| {
        let mean = returning_summary.sum.value() / n;
        let var = ((returning_summary.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0);
        let sigma = (var / n).sqrt();
        KacSummary {
            mean,
            sigma,
            contains_one: (mean - 1.0).abs() <= 3.0 * sigma,
        }
    });
    let short_return = cfg.checks.short_return.map(|k| {
        let hits = returning.iter().filter(|r| !(r.censored && r.gaps.len() == 1) && r.gaps[0] <= k).count() as u64;
        let samples = returning.len() as u64;
        let p = hits as f64 / samples as f64;
        ShortReturnSummary {
            threshold: k,
            hits,
            samples,
            estimate: p,
            band: 3.0 * (p * (1.0 - p) / samples as f64).sqrt(),
        }
    });
    RowReport {
        radius,
        measure,
        cap,
        returning: returning_summary,
        hitting: hitting_summary,
        kac,
        short_return,
        blocks,
    }
}

fn overflow(rows: &[RowReport]) -> bool {
    rows.iter().any(|r| {
        r.returning.censor_rate >= MAX_CENSOR_RATE || r.hitting.as_ref().is_some_and(|h| h.censor_rate >= MAX_CENSOR_RATE)
    })
}

/// Runs the configured family. Rows are simulated shard by shard over
/// `sample_offset .. sample_offset + samples`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let range = cfg.sample_offset..cfg.sample_offset + cfg.samples;
    let mut rows = Vec::with_capacity(cfg.target.radii.len());
    for (k, radius) in cfg.target.radii.iter().enumerate() {
        let plan = RowPlan::new(cfg, k, row_seed(cfg.seed, k))?;
        let blocks = shard_ranges(range.clone(), cfg.shards)
            .into_iter()
            .map(|r| plan.block(r))
            .collect::<Result<Vec<_>>>()?;
        // shards are stored as one block per seed; merging keeps the index order
        let block = blocks.into_iter().reduce(|mut a, b| {
            a.returning.extend(b.returning);
            a.hitting.extend(b.hitting);
            a
        });
        rows.push(summarize_row(cfg, *radius, plan.measure, plan.cap, block.into_iter().collect()));
    }
    let conditions = cfg
        .conditions
        .iter()
        .enumerate()
        .map(|(k, c)| run_condition(cfg, c, mix64(cfg.seed ^ 0xC0FF_EE00 ^ k as u64)))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport {
        experiment_id: cfg.experiment_id.clone(),
        config: cfg.clone(),
        seeds: vec![cfg.seed],
        mixed_seed: false,
        censoring_overflow: overflow(&rows),
        rows,
        conditions,
    })
}

fn base_or_self(cfg: &ExperimentConfig, over: &Option<SystemSpec>) -> SystemSpec {
    over.clone()
        .or_else(|| cfg.system.base().cloned())
        .unwrap_or_else(|| cfg.system.clone())
}

fn detail<T: Serialize>(t: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(t)?)
}

pub fn run_condition(cfg: &ExperimentConfig, spec: &ConditionSpec, seed: u64) -> Result<ConditionResult> {
    use conditions::*;
    let out = match spec {
        ConditionSpec::Ee { system, fields, n_lo, n_hi, samples } => {
            let base = base_or_self(cfg, system);
            let fit = estimate_ee_exponent(&base, fields, &dyadic_grid(*n_lo, *n_hi), *samples, seed)?;
            let row = fit.row(Condition::Ee, fit.slope < 1.0, format!("δ₁ fit on n = 2^{n_lo}..2^{n_hi}"));
            ConditionResult { row, detail: detail(&fit)? }
        }
        ConditionSpec::PointwiseEe { system, field, n_lo, n_hi, points, delta } => {
            let base = base_or_self(cfg, system);
            let mut rng = RngStream::for_sample(seed, Domain::Ergodic, u64::MAX);
            let ys = (0..*points).map(|_| sample_point(base.dim(), &mut rng)).collect::<Result<Vec<_>>>()?;
            let rep = pointwise_ee_check(&base, field, &ys, &dyadic_grid(*n_lo, *n_hi), *delta, seed)?;
            let row = ConditionRow {
                condition: Condition::Ee,
                estimate: rep.pass_fraction,
                uncertainty: 0.0,
                verdict: rep.pass_fraction >= 0.95,
                note: format!("pointwise, δ' = {:.3}", rep.delta_prime),
            };
            ConditionResult { row, detail: detail(&rep)? }
        }
        ConditionSpec::Recurrence { system, center, radii, mode, samples } => {
            let sys = system.clone().unwrap_or_else(|| cfg.system.clone());
            let rep = check_recurrence(&sys, &TorusPoint::new(center.clone()), radii, *mode, *samples, seed)?;
            ConditionResult { row: rep.row(), detail: detail(&rep)? }
        }
        ConditionSpec::Ba { tau, system, n_lo, n_hi, samples } => {
            let tau = match (tau, &cfg.system) {
                (Some(t), _) => t.clone(),
                (None, SystemSpec::SkewProduct { tau, .. }) => tau.clone(),
                _ => return Err(Error::Config("ba check needs τ or a skew product".into())),
            };
            let base = base_or_self(cfg, system);
            let rep = check_ba(&tau, &base, &dyadic_grid(*n_lo, *n_hi), *samples, seed)?;
            ConditionResult { row: rep.row(), detail: detail(&rep)? }
        }
        ConditionSpec::Uc { system, target, s_grid, exponents, samples } => {
            let base = base_or_self(cfg, system);
            let rep = check_uc(&base, target, s_grid, *exponents, *samples, seed)?;
            ConditionResult { row: rep.row(), detail: detail(&rep)? }
        }
        ConditionSpec::Kappa { system, union, length, samples } => {
            let base = base_or_self(cfg, system);
            let rows = check_kappa_frequencies(&base, union, *length, *samples, seed)?;
            let worst = rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
            let row = ConditionRow {
                condition: Condition::Kappa,
                estimate: worst,
                uncertainty: 0.0,
                verdict: worst < 0.05,
                note: format!("label frequencies after {length} visits"),
            };
            ConditionResult { row, detail: detail(&rows)? }
        }
        ConditionSpec::Mem { system, target, gaps, samples } => {
            let sys = system.clone().unwrap_or_else(|| cfg.system.clone());
            let curve = check_mem(&sys, target, gaps, *samples, seed)?;
            ConditionResult { row: curve.row(), detail: detail(&curve)? }
        }
        ConditionSpec::Census { levels, zeta, t, samples } => {
            let rep = bad_return_census(&cfg.system, levels, *zeta, *t, *samples, seed)?;
            let fr: Vec<f64> = rep.rows.iter().map(|r| r.fraction).collect();
            let row = ConditionRow {
                condition: Condition::Census,
                estimate: fr.last().copied().unwrap_or(0.0),
                uncertainty: rep.rows.last().map_or(0.0, |r| r.sigma),
                verdict: fr.windows(2).all(|w| w[1] <= w[0]),
                note: "bad-return fraction per level".into(),
            };
            ConditionResult { row, detail: detail(&rep)? }
        }
        ConditionSpec::Dimension { d, d_base, r_base, delta1 } => {
            let rep = dimension_condition(*d, *d_base, *r_base, *delta1)?;
            ConditionResult { row: rep.row(), detail: detail(&rep)? }
        }
    };
    Ok(out)
}

/// Only the configured conditions, no sampling of the target family.
pub fn run_conditions(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let conditions = cfg
        .conditions
        .iter()
        .enumerate()
        .map(|(k, c)| run_condition(cfg, c, mix64(cfg.seed ^ 0xC0FF_EE00 ^ k as u64)))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport {
        experiment_id: cfg.experiment_id.clone(),
        config: cfg.clone(),
        seeds: vec![cfg.seed],
        mixed_seed: false,
        censoring_overflow: false,
        rows: Vec::new(),
        conditions,
    })
}

fn same_setup(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.system == b.system && a.target == b.target && a.flavor == b.flavor && a.gaps_per_sample == b.gaps_per_sample && a.cap == b.cap && a.checks == b.checks
}

/// Combines reports. Experiments with the same id are concatenated sample by
/// sample in index order and re-summarized; distinct ids are kept side by
/// side. Differing seeds are allowed and flagged.
pub fn merge_reports(reports: &[Report]) -> Result<Report> {
    let mut by_id: BTreeMap<String, Vec<&ExperimentReport>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in reports {
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("report schema_version {} is not {SCHEMA_VERSION}", r.schema_version)));
        }
        for e in &r.experiments {
            if !by_id.contains_key(&e.experiment_id) {
                order.push(e.experiment_id.clone());
            }
            by_id.entry(e.experiment_id.clone()).or_default().push(e);
        }
    }
    let mut experiments = Vec::new();
    for id in order {
        let parts = &by_id[&id];
        let first = parts[0];
        if parts.len() == 1 {
            experiments.push(first.clone());
            continue;
        }
        if parts.iter().any(|p| !same_setup(&p.config, &first.config) || p.rows.len() != first.rows.len()) {
            return Err(Error::Config(format!("reports for {id} come from different setups")));
        }
        let mut seeds: Vec<u64> = parts.iter().flat_map(|p| p.seeds.clone()).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut rows = Vec::new();
        for k in 0..first.rows.len() {
            let blocks: Vec<SampleBlock> = parts.iter().flat_map(|p| p.rows[k].blocks.clone()).collect();
            let mut spans: Vec<(u64, u64, u64)> =
                blocks.iter().map(|b| (b.seed, b.start, b.start + b.returning.len() as u64)).collect();
            spans.sort_unstable();
            if spans.windows(2).any(|w| w[0].0 == w[1].0 && w[1].1 < w[0].2) {
                return Err(Error::Config(format!("reports for {id} overlap in sample indices")));
            }
            let r0 = &first.rows[k];
            rows.push(summarize_row(&first.config, r0.radius, r0.measure, r0.cap, blocks));
        }
        let mut config = first.config.clone();
        config.samples = rows[0].returning.n;
        config.sample_offset = parts.iter().map(|p| p.config.sample_offset).min().unwrap_or(0);
        let mut conditions = Vec::new();
        for p in parts {
            conditions.extend(p.conditions.iter().cloned());
        }
        experiments.push(ExperimentReport {
            experiment_id: id,
            config,
            mixed_seed: seeds.len() > 1,
            seeds,
            censoring_overflow: overflow(&rows),
            rows,
            conditions,
        });
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        experiments,
    })
}

/// `experiment_id, flavor, radius, gap, rescaled_gap, censored, law, sample, index`.
pub fn write_samples_csv<W: Write>(report: &Report, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "experiment_id",
        "flavor",
        "radius",
        "gap",
        "rescaled_gap",
        "censored",
        "law",
        "sample",
        "index",
    ])?;
    for e in &report.experiments {
        let flavor = e.config.flavor.flavor().as_str();
        for row in &e.rows {
            for b in &row.blocks {
                for (law, recs) in [("return", &b.returning), ("hitting", &b.hitting)] {
                    for (i, rec) in recs.iter().enumerate() {
                        for (j, g) in rec.gaps.iter().enumerate() {
                            let censored = rec.censored && j + 1 == rec.gaps.len();
                            wr.write_record([
                                e.experiment_id.as_str(),
                                flavor,
                                &row.radius.to_string(),
                                &g.to_string(),
                                &(*g as f64 * row.measure).to_string(),
                                &censored.to_string(),
                                law,
                                &(b.start + i as u64).to_string(),
                                &(j + 1).to_string(),
                            ])?;
                        }
                    }
                }
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// `experiment_id, radius, law, t, empirical, exponential` at every jump of
/// the first-gap empirical CDF.
pub fn write_cdf_csv<W: Write>(report: &Report, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["experiment_id", "radius", "law", "t", "empirical", "exponential"])?;
    for e in &report.experiments {
        for row in &e.rows {
            let ret: Vec<&SampleRecord> = row.blocks.iter().flat_map(|b| &b.returning).collect();
            let hit: Vec<&SampleRecord> = row.blocks.iter().flat_map(|b| &b.hitting).collect();
            for (law, recs) in [("return", ret), ("hitting", hit)] {
                if recs.is_empty() {
                    continue;
                }
                for (t, f, g) in first_gap_law(&recs, row.measure).cdf_table() {
                    wr.write_record([
                        e.experiment_id.as_str(),
                        &row.radius.to_string(),
                        law,
                        &t.to_string(),
                        &f.to_string(),
                        &g.to_string(),
                    ])?;
                }
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Writes `report.json`, `samples.csv` and `cdf.csv` into `dir`.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    write_samples_csv(report, std::fs::File::create(dir.join("samples.csv"))?)?;
    write_cdf_csv(report, std::fs::File::create(dir.join("cdf.csv"))?)?;
    Ok(())
}

/// The first `J` rescaled gaps of every return sample of a row, `+∞` after
/// censoring.
pub fn process_law(row: &RowReport, coordinates: usize) -> Result<stats::ProcessLaw> {
    let rows = row
        .blocks
        .iter()
        .flat_map(|b| &b.returning)
        .map(|rec| {
            let mut v = vec![f64::INFINITY; coordinates];
            for (slot, (j, g)) in v.iter_mut().zip(rec.gaps.iter().enumerate()) {
                if rec.censored && j + 1 == rec.gaps.len() {
                    break;
                }
                *slot = *g as f64 * row.measure;
            }
            v
        })
        .collect();
    stats::ProcessLaw::new(coordinates, rows)
}
