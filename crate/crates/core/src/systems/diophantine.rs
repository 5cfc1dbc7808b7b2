use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiophantineOutcome {
    /// `|⟨k,α⟩ − l| > C|k|^{-n}` for every `0 < |k| ≤ K_max`.
    Ok { worst_ratio: f64 },
    /// The most violating pair found, with `|⟨k,α⟩ − l|·|k|^n`.
    Witness { k: Vec<i64>, l: i64, ratio: f64 },
}

/// Visits every nonzero `k` with `|k|₂ ≤ radius` whose first nonzero
/// coordinate is positive (`k` and `-k` give the same distance).
fn half_ball(dim: usize, radius: i64, mut visit: impl FnMut(&[i64])) {
    fn rec(k: &mut Vec<i64>, i: usize, left: i64, leading: bool, visit: &mut dyn FnMut(&[i64])) {
        if i == k.len() {
            if !leading {
                visit(k);
            }
            return;
        }
        let bound = (left as f64).sqrt() as i64 + 1;
        let lo = if leading { 0 } else { -bound };
        for v in lo..=bound {
            let used = v * v;
            if used > left {
                continue;
            }
            k[i] = v;
            rec(k, i + 1, left - used, leading && v == 0, visit);
        }
        k[i] = 0;
    }
    rec(&mut vec![0; dim], 0, radius * radius, true, &mut visit);
}

/// Finite certificate for the Diophantine condition on `α` up to `|k| ≤ k_max`
/// (Euclidean norm of `k`).
pub fn diophantine_check(alpha: &[f64], c: f64, n: f64, k_max: i64) -> Result<DiophantineOutcome> {
    if k_max < 1 || alpha.is_empty() {
        return Err(invalid("diophantine_check needs K_max ≥ 1 and non-empty α"));
    }
    let mut worst: Option<(Vec<i64>, i64, f64)> = None;
    half_ball(alpha.len(), k_max, |k| {
        let dot: f64 = k.iter().zip(alpha).map(|(a, b)| *a as f64 * b).sum();
        let l = dot.round();
        let norm = (k.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
        let ratio = (dot - l).abs() * norm.powf(n);
        if worst.as_ref().is_none_or(|w| ratio < w.2) {
            worst = Some((k.to_vec(), l as i64, ratio));
        }
    });
    let (k, l, ratio) = worst.expect("K_max ≥ 1 gives at least one k");
    Ok(if ratio > c {
        DiophantineOutcome::Ok { worst_ratio: ratio }
    } else {
        DiophantineOutcome::Witness { k, l, ratio }
    })
}
