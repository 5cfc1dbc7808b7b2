//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --test acceptance`.

use std::time::{Duration, Instant};

use retlab::approx::{build_bump, cr_norm_estimate, BumpField, Side};
use retlab::conditions::{dyadic_grid, estimate_ee_exponent, rotation_first_return};
use retlab::experiment::{self, ExperimentConfig, FlavorSpec, Report, Shape, TargetFamily};
use retlab::returns::{
    count_process, fiberwise_return_sequence, kappa_delayed_sequence, kappa_schedule_from_visits,
    rectangle_return_compose, return_sequence, DelaySchedule, KappaSchedule,
};
use retlab::rng::RngStream;
use retlab::stats::{d_metric, default_cells, factorial_moment_check, kac_check, return_process, windowed_counts};
use retlab::systems::{FiberFamily, SystemSpec, TauKind, TauSpec};
use retlab::targets::TargetSet;
use retlab::torus::{sample_point, TorusPoint};
use retlab::trig::TrigPoly;

type Outcome = Result<(bool, String), retlab::Error>;

fn cat_golden() -> SystemSpec {
    SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation()).unwrap()
}

fn renewal_duality(rng: &mut RngStream) -> retlab::Result<bool> {
    let s = cat_golden();
    let targets = vec![
        TargetSet::ball(sample_point(3, rng)?.into_coords(), 0.1 + 0.1 * rng.uniform())?,
        TargetSet::cube(sample_point(3, rng)?.into_coords(), 0.1 + 0.1 * rng.uniform())?,
    ];
    let len = 400;
    let sched = DelaySchedule::from_fn(len, |_| 1 + rng.below(4))?;
    let kappa = KappaSchedule::new((0..len).map(|_| 1 + rng.below(2) as usize).collect(), 2)?;
    let p = sample_point(3, rng)?;
    let seq = kappa_delayed_sequence(&s, &targets, &sched, &kappa, &p, 10, len as u64)?;
    let gaps = seq.uncensored_gaps();
    for _ in 0..5 {
        let n = rng.below(len as u64 + 1) as usize;
        let big_n = 1 + rng.below(10) as usize;
        let count = count_process(&s, &targets, &sched, &kappa, &p, n)?;
        let sum = if gaps.len() >= big_n { gaps[..big_n].iter().sum() } else { u64::MAX };
        if (count >= big_n as u64) != (sum <= n as u64) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn fiberwise_identity(rng: &mut RngStream, i: u64) -> retlab::Result<bool> {
    let s = match i % 3 {
        0 => cat_golden(),
        1 => SystemSpec::skew_product(
            FiberFamily::Translation { beta: vec![0.1234] },
            TauSpec::new(TauKind::TrigPoly(TrigPoly::cos_coordinate(1, 0)))?,
            SystemSpec::golden_rotation(),
        )?,
        _ => SystemSpec::skew_product(
            FiberFamily::ToralPower {
                matrix: vec![vec![2, 1], vec![1, 1]],
            },
            TauSpec::plus_minus_one(),
            SystemSpec::golden_rotation(),
        )?,
    };
    let xd = s.fiber_dim().expect("fibered");
    let x = sample_point(xd, rng)?;
    let y = sample_point(s.dim() - xd, rng)?;
    let a = TargetSet::ball(sample_point(xd, rng)?.into_coords(), 0.05 + 0.15 * rng.uniform())?;
    let fw = fiberwise_return_sequence(&s, &a, &x, &y, 5, 100_000)?;
    let rect = TargetSet::rect(a.clone(), TargetSet::Whole { dim: s.dim() - xd })?;
    let direct = return_sequence(&s, &rect, &TorusPoint::join(&x, &y), 5, 100_000)?;
    let mut ok = fw.gaps == direct.gaps && fw.censored == direct.censored;
    if i % 3 == 0 {
        let alone = return_sequence(&SystemSpec::cat_map(), &a, &x, 5, 100_000)?;
        ok &= fw.gaps == alone.gaps;
    }
    Ok(ok)
}

fn rectangle_sum(rng: &mut RngStream, i: u64) -> retlab::Result<bool> {
    let s = cat_golden();
    let k = 1 + (i % 3) as usize;
    let (mut comps, mut xs, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..k {
        let a = TargetSet::ball(sample_point(2, rng)?.into_coords(), 0.1 + 0.1 * rng.uniform())?;
        let b = TargetSet::cube(vec![(j as f64 + 0.5) / k as f64], (0.05 + 0.2 * rng.uniform()) / k as f64)?;
        comps.push(TargetSet::rect(a.clone(), b.clone())?);
        xs.push(a);
        ys.push(b);
    }
    let q = TargetSet::union(comps)?;
    let union = TargetSet::union(ys)?;
    let x = sample_point(2, rng)?;
    let y = sample_point(1, rng)?;
    let (kappa, alpha, _) = kappa_schedule_from_visits(&SystemSpec::golden_rotation(), &union, &y, 600, 10_000)?;
    let xr = kappa_delayed_sequence(&s, &xs, &alpha, &kappa, &TorusPoint::join(&x, &y), 5, 600)?;
    let composed = rectangle_return_compose(&xr, &alpha)?;
    let n = composed.uncensored_gaps().len();
    let direct = return_sequence(&s, &q, &TorusPoint::join(&x, &y), n, 10_000_000)?;
    Ok(n > 0 && composed.uncensored_gaps() == &direct.gaps[..])
}

fn criterion_1() -> Outcome {
    let n = 1000u64;
    let mut rng = RngStream::new(1, 1);
    let mut bad = [0u64; 3];
    for i in 0..n {
        bad[0] += !renewal_duality(&mut rng)? as u64;
        bad[1] += !fiberwise_identity(&mut rng, i)? as u64;
        bad[2] += !rectangle_sum(&mut rng, i)? as u64;
    }
    Ok((
        bad == [0, 0, 0],
        format!("{n} instances each; mismatches renewal={} fiberwise={} rectangle={}", bad[0], bad[1], bad[2]),
    ))
}

fn criterion_2() -> Outcome {
    let cases = [
        ("golden [0,1/4)", SystemSpec::golden_rotation(), TargetSet::cube(vec![0.125], 0.125)?),
        ("doubling [0,1/2)", SystemSpec::Doubling, TargetSet::cube(vec![0.25], 0.25)?),
        ("cat ball 0.05", SystemSpec::cat_map(), TargetSet::ball(vec![0.3, 0.7], 0.05)?),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, (name, s, a)) in cases.iter().enumerate() {
        let rep = kac_check(s, a, 100_000, 20 + k as u64)?;
        ok &= rep.contains_one;
        notes.push(format!("{name}: {:.4}±{:.4}", rep.mean, 3.0 * rep.sigma));
    }
    Ok((ok, notes.join("; ")))
}

fn run_canned(name: &str) -> retlab::Result<experiment::ExperimentReport> {
    experiment::run_experiment(&experiment::canned(name)?)
}

fn criterion_3() -> Outcome {
    let rep = run_canned("cat-x-golden-plt")?;
    let mut hit = Vec::new();
    let mut ret = Vec::new();
    for row in &rep.rows {
        let h = row.hitting.as_ref().and_then(|h| h.report.as_ref());
        hit.push(h.map_or(f64::NAN, |r| r.ks));
        ret.push(row.returning.report.as_ref().map_or(f64::NAN, |r| r.ks));
    }
    let decreasing = hit.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing && hit[2] < 0.05 && ret[2] < 0.05;
    Ok((
        ok,
        format!(
            "r=0.05/0.02/0.01 hitting ks {:.4}/{:.4}/{:.4}, return ks {:.4}/{:.4}/{:.4}",
            hit[0], hit[1], hit[2], ret[0], ret[1], ret[2]
        ),
    ))
}

fn criterion_4() -> Outcome {
    let rep = run_canned("fixed-point-negative")?;
    let mut ok = true;
    let mut notes = Vec::new();
    for row in &rep.rows {
        let m = row.short_return.as_ref().expect("configured");
        let ks = row.returning.report.as_ref().map_or(f64::NAN, |r| r.ks);
        ok &= m.estimate >= 0.14 - m.band && ks > 0.1;
        notes.push(format!("r={}: mass {:.4}±{:.4} ks {:.3}", row.radius, m.estimate, m.band, ks));
    }
    Ok((ok, notes.join("; ")))
}

fn criterion_5() -> Outcome {
    let ns = dyadic_grid(7, 15);
    let golden = estimate_ee_exponent(
        &SystemSpec::golden_rotation(),
        &[TrigPoly::cos_coordinate(1, 0)],
        &ns,
        200,
        51,
    )?;
    let skew = estimate_ee_exponent(
        &SystemSpec::skew_shift((5f64.sqrt() - 1.0) / 2.0)?,
        &[TrigPoly::cos_coordinate(2, 1)],
        &ns,
        200,
        52,
    )?;
    let doubling = estimate_ee_exponent(&SystemSpec::Doubling, &[TrigPoly::cos_coordinate(1, 0)], &ns, 200, 53)?;
    let ok = golden.slope <= 0.1
        && (0.4..=0.65).contains(&skew.slope)
        && (0.4..=0.6).contains(&doubling.slope);
    Ok((
        ok,
        format!(
            "slopes golden {:.3}, skew shift {:.3}, doubling {:.3}",
            golden.slope, skew.slope, doubling.slope
        ),
    ))
}

fn criterion_6() -> Outcome {
    let alpha = [(5f64.sqrt() - 1.0) / 2.0];
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for k in 5..=12 {
        let r = 2f64.powi(-k);
        match rotation_first_return(&alpha, r, 1 << 20) {
            Some(m) => worst = worst.min(m as f64 * r),
            None => ok = false,
        }
    }
    Ok((ok && worst >= 0.3, format!("min m·r over r=2^-5..2^-12: {worst:.4}")))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn criterion_7() -> Outcome {
    let ball = TargetSet::ball(vec![0.5, 0.5], 0.1)?;
    let near = TargetSet::ball(vec![0.5, 0.5], 0.12)?;
    let eps = [0.008, 0.0056, 0.004, 0.0028, 0.002];
    let mut violations = 0;
    let mut slopes = Vec::new();
    let mut shell = 0.0f64;
    let mut ok = true;
    for r in 1..=3u32 {
        let pair = build_bump(&ball, 0.008, r)?;
        let mut rng = RngStream::new(7, r as u64);
        for _ in 0..100_000 {
            let p = if rng.uniform() < 0.5 { sample_point(2, &mut rng)? } else { near.sample(&mut rng)? };
            let c = p.coords();
            let (lo, one, up) = (pair.lower(c), pair.indicator(c), pair.upper(c));
            if !(0.0 <= lo && lo <= one && one <= up && up <= 1.0) {
                violations += 1;
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for e in eps {
            let pair = build_bump(&ball, e, r)?;
            let field = BumpField { pair: &pair, side: Side::Upper };
            xs.push((1.0 / e).ln());
            ys.push(cr_norm_estimate(&field, r, e / 40.0)?.norm.ln());
            let bound = pair.shell_bound();
            for annulus in [pair.upper_shell_measure(), pair.lower_shell_measure()] {
                shell = shell.max((annulus / bound - 1.0).abs());
            }
        }
        let slope = least_squares_slope(&xs, &ys);
        ok &= (slope / r as f64 - 1.0).abs() <= 0.1;
        slopes.push(slope);
    }
    ok &= violations == 0 && shell <= 0.1;
    Ok((
        ok,
        format!(
            "sandwich violations {violations}; C^r slopes {:.3}/{:.3}/{:.3}; worst shell deviation {:.3}",
            slopes[0], slopes[1], slopes[2], shell
        ),
    ))
}

fn criterion_8() -> Outcome {
    let a = TargetSet::ball(vec![0.3, 0.7], 0.02)?;
    let union = TargetSet::union(vec![TargetSet::cube(vec![0.5], 0.05)?])?;
    let boundaries = [0.0, 1.0, 2.0];
    let counts = windowed_counts(
        &SystemSpec::cat_map(),
        &[a],
        &SystemSpec::golden_rotation(),
        &union,
        &boundaries,
        10_000,
        81,
        10_000,
    )?;
    let cells = factorial_moment_check(&boundaries, &counts.increments, &default_cells(2, 2))?;
    let failed: Vec<String> = cells.iter().filter(|c| !c.pass).map(|c| format!("{:?}", c.orders)).collect();
    let worst = cells
        .iter()
        .map(|c| (c.estimate - c.target).abs() / c.sigma)
        .fold(0.0, f64::max);
    Ok((
        failed.is_empty() && counts.censored == 0,
        format!(
            "{} cells, {} trajectories, worst |z| {:.2}, failing {:?}",
            cells.len(),
            counts.increments.len(),
            worst,
            failed
        ),
    ))
}

fn criterion_9() -> Outcome {
    let s = SystemSpec::product(SystemSpec::cat_map(), SystemSpec::golden_rotation())?;
    let b = TargetSet::cube(vec![0.4], 0.1)?;
    let r = 0.05;
    let q = TargetSet::rect(TargetSet::ball(vec![0.3, 0.7], r)?, b.clone())?;
    let full = return_process(&s, &q, 3, 20_000, 91, None)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, m) in [0.01f64, 0.05, 0.1].into_iter().enumerate() {
        let inner = TargetSet::ball(vec![0.3, 0.7], r * (1.0 - m).sqrt())?;
        let cut = return_process(&s, &TargetSet::rect(inner, b.clone())?, 3, 20_000, 92 + k as u64, None)?;
        let d = d_metric(&full, &cut)?;
        ok &= d.value <= 7.0 * m + d.band;
        notes.push(format!("m={m}: D {:.4} ≤ {:.4}", d.value, 7.0 * m + d.band));
    }
    Ok((ok, notes.join("; ")))
}

fn criterion_10() -> Outcome {
    let cfg = |shards: u64| ExperimentConfig {
        schema_version: experiment::SCHEMA_VERSION,
        experiment_id: "repro".into(),
        system: SystemSpec::cat_map(),
        target: TargetFamily {
            shape: Shape::Ball,
            center: vec![0.3, 0.7],
            radii: vec![0.05, 0.02, 0.01],
        },
        flavor: FlavorSpec::Plain,
        samples: 2000,
        sample_offset: 0,
        seed: 101,
        shards,
        gaps_per_sample: 2,
        cap: None,
        checks: experiment::Checks {
            short_return: Some(10),
            ..Default::default()
        },
        conditions: vec![],
        output: None,
    };
    let csv = |shards: u64| -> retlab::Result<(Vec<u8>, experiment::ExperimentReport)> {
        let e = experiment::run_experiment(&cfg(shards))?;
        let report = Report {
            schema_version: experiment::SCHEMA_VERSION,
            experiments: vec![e.clone()],
        };
        let mut buf = Vec::new();
        experiment::write_samples_csv(&report, &mut buf)?;
        Ok((buf, e))
    };
    let (first, base) = csv(1)?;
    let (again, _) = csv(1)?;
    let mut ok = first == again;
    let integers = |e: &experiment::ExperimentReport| -> Vec<(u64, u64, Option<u64>)> {
        e.rows
            .iter()
            .map(|r| (r.returning.n, r.returning.censored, r.short_return.as_ref().map(|s| s.hits)))
            .collect()
    };
    for shards in [4, 16] {
        let (bytes, e) = csv(shards)?;
        ok &= bytes == first && integers(&e) == integers(&base);
    }
    Ok((ok, format!("{} bytes of samples.csv compared across reruns and shards 1/4/16", first.len())))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("exact identities", 60, criterion_1),
        ("Kac mean", 180, criterion_2),
        ("PLT for cat x golden", 600, criterion_3),
        ("fixed-point negative control", 120, criterion_4),
        ("EE exponents", 300, criterion_5),
        ("golden recurrence", 60, criterion_6),
        ("bump construction", 120, criterion_7),
        ("factorial moments", 600, criterion_8),
        ("D deleted mass", 600, criterion_9),
        ("reproducibility", 120, criterion_10),
    ];
    let only: Option<usize> = std::env::var("RETLAB_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut failures = 0;
    for (k, (name, budget, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        let elapsed = t.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (pass, detail) = match out {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += !pass as u32;
        println!(
            "criterion {:>2} {}: {} ({detail}; {:.1}s of {budget}s)",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
