//! Real trigonometric polynomials on the torus.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `constant + Σ cos_k cos(2π⟨k,p⟩) + sin_k sin(2π⟨k,p⟩)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    /// `cos(2π p[coord])` on a torus of dimension `dim`.
    pub fn cos_coordinate(dim: usize, coord: usize) -> Self {
        let mut freq = vec![0; dim];
        freq[coord] = 1;
        Self {
            constant: 0.0,
            terms: vec![TrigTerm {
                freq,
                cos: 1.0,
                sin: 0.0,
            }],
        }
    }

    pub fn zero() -> Self {
        Self {
            constant: 0.0,
            terms: Vec::new(),
        }
    }

    /// Dimension implied by the frequency vectors, if any term exists.
    pub fn dim(&self) -> Option<usize> {
        self.terms.first().map(|t| t.freq.len())
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for t in &self.terms {
            if t.freq.len() != dim {
                return Err(invalid(format!(
                    "trig term frequency {:?} does not match dimension {dim}",
                    t.freq
                )));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(invalid("non-finite trig coefficient"));
            }
        }
        if !self.constant.is_finite() {
            return Err(invalid("non-finite trig constant"));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let phase: f64 = t.freq.iter().zip(p).map(|(k, x)| *k as f64 * x).sum();
            let (s, c) = (TAU * phase).sin_cos();
            v += t.cos * c + t.sin * s;
        }
        v
    }

    /// Exact Lebesgue mean.
    pub fn mean(&self) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .filter(|t| t.freq.iter().all(|k| *k == 0))
                .map(|t| t.cos)
                .sum::<f64>()
    }

    /// True when the coefficients cancel to the zero function
    /// (terms at `k` and `-k` are merged before the test).
    pub fn is_identically_zero(&self) -> bool {
        let mut merged: std::collections::BTreeMap<Vec<i64>, (f64, f64)> = Default::default();
        for t in &self.terms {
            let flip = t.freq.iter().find(|k| **k != 0).is_some_and(|k| *k < 0);
            let (key, sin) = if flip {
                (t.freq.iter().map(|k| -k).collect(), -t.sin)
            } else {
                (t.freq.clone(), t.sin)
            };
            let e = merged.entry(key).or_insert((0.0, 0.0));
            e.0 += t.cos;
            e.1 += sin;
        }
        let zero_freq: f64 = merged
            .iter()
            .filter(|(k, _)| k.iter().all(|v| *v == 0))
            .map(|(_, (c, _))| *c)
            .sum();
        self.constant + zero_freq == 0.0
            && merged
                .iter()
                .filter(|(k, _)| k.iter().any(|v| *v != 0))
                .all(|(_, (c, s))| *c == 0.0 && *s == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_eval() {
        let f = TrigPoly::cos_coordinate(2, 1);
        assert_eq!(f.mean(), 0.0);
        assert!((f.eval(&[0.3, 0.0]) - 1.0).abs() < 1e-15);
        assert!((f.eval(&[0.3, 0.5]) + 1.0).abs() < 1e-15);
        let g = TrigPoly {
            constant: 0.5,
            terms: vec![TrigTerm {
                freq: vec![0],
                cos: 2.0,
                sin: 7.0,
            }],
        };
        assert_eq!(g.mean(), 2.5);
        assert!(!g.is_identically_zero());
        assert!(TrigPoly::zero().is_identically_zero());
    }
}
