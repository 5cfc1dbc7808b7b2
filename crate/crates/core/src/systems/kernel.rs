use super::{integer_inverse, FiberFamily, SystemSpec, TauSpec};
use crate::error::Result;
use crate::rng::RngStream;
use crate::torus::{from_fixed, snap, to_fixed, wrap, TorusPoint};

/// Largest total dimension a compiled system may have.
pub const MAX_SYSTEM_DIM: usize = 16;

/// Lowest bit of the `2^-53` lattice inside a 64-bit fixed point word.
const LATTICE_LSB: u32 = 11;

#[derive(Clone, Debug)]
enum Family {
    Translation { fixed: Vec<u64>, real: Vec<f64> },
    Power { dim: usize, fwd: Vec<u64>, inv: Vec<u64> },
}

#[derive(Clone, Debug)]
enum Op {
    Rotate { at: usize, alpha: u64 },
    SkewShift { at: usize, alpha: u64 },
    Auto2 { at: usize, m: [u64; 4] },
    Auto { at: usize, dim: usize, m: Vec<u64> },
    Doubling { at: usize },
    Fiber {
        x_at: usize,
        y_at: usize,
        y_dim: usize,
        tau: TauSpec,
        family: Family,
    },
}

/// Compiled stepper for a [`SystemSpec`].
///
/// Coordinates are held as 64-bit fixed point numbers (units of `2^-64`)
/// restricted to the `2^-53` lattice, so rotations, skew shifts and integer
/// matrices act by wrapping integer arithmetic: reduction mod 1 is free and
/// exact. Only a real-valued cocycle driving a translation family rounds
/// (once per step, back onto the lattice).
#[derive(Clone, Debug)]
pub struct Dynamics {
    dim: usize,
    ops: Vec<Op>,
    doubling: bool,
}

#[inline]
fn apply_matrix(v: &mut [u64], at: usize, dim: usize, m: &[u64]) {
    let mut buf = [0u64; super::MAX_AUTO_DIM];
    for (i, out) in buf.iter_mut().enumerate().take(dim) {
        let row = &m[i * dim..(i + 1) * dim];
        *out = row
            .iter()
            .zip(&v[at..at + dim])
            .fold(0u64, |s, (a, x)| s.wrapping_add(a.wrapping_mul(*x)));
    }
    v[at..at + dim].copy_from_slice(&buf[..dim]);
}

fn flat(m: &[Vec<i64>]) -> Vec<u64> {
    m.iter().flatten().map(|v| *v as u64).collect()
}

impl Dynamics {
    pub(super) fn compile(spec: &SystemSpec) -> Result<Self> {
        if spec.dim() > MAX_SYSTEM_DIM {
            return Err(crate::error::invalid(format!(
                "systems are limited to dimension {MAX_SYSTEM_DIM}"
            )));
        }
        let mut d = Dynamics {
            dim: spec.dim(),
            ops: Vec::new(),
            doubling: spec.has_doubling(),
        };
        d.push(spec, 0)?;
        Ok(d)
    }

    fn push(&mut self, spec: &SystemSpec, at: usize) -> Result<()> {
        match spec {
            SystemSpec::Rotation { alpha } => {
                for (i, a) in alpha.iter().enumerate() {
                    self.ops.push(Op::Rotate {
                        at: at + i,
                        alpha: to_fixed(*a),
                    })
                }
            }
            SystemSpec::SkewShift { alpha } => self.ops.push(Op::SkewShift {
                at,
                alpha: to_fixed(*alpha),
            }),
            SystemSpec::ToralAuto { matrix } if matrix.len() == 2 => {
                let f = flat(matrix);
                self.ops.push(Op::Auto2 {
                    at,
                    m: [f[0], f[1], f[2], f[3]],
                })
            }
            SystemSpec::ToralAuto { matrix } => self.ops.push(Op::Auto {
                at,
                dim: matrix.len(),
                m: flat(matrix),
            }),
            SystemSpec::Doubling => self.ops.push(Op::Doubling { at }),
            SystemSpec::Product { x, y } => {
                self.push(x, at)?;
                self.push(y, at + x.dim())?;
            }
            SystemSpec::SkewProduct { family, tau, base } => {
                let x_dim = family.dim();
                let family = match family {
                    FiberFamily::Translation { beta } => Family::Translation {
                        fixed: beta.iter().map(|b| to_fixed(*b)).collect(),
                        real: beta.clone(),
                    },
                    FiberFamily::ToralPower { matrix } => Family::Power {
                        dim: matrix.len(),
                        fwd: flat(matrix),
                        inv: flat(&integer_inverse(matrix)?),
                    },
                };
                // reads the base point before the base moves
                self.ops.push(Op::Fiber {
                    x_at: at,
                    y_at: at + x_dim,
                    y_dim: base.dim(),
                    tau: tau.clone(),
                    family,
                });
                self.push(base, at + x_dim)?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_doubling(&self) -> bool {
        self.doubling
    }

    /// `T^n p`. The result lies on the lattice unless `n == 0`.
    pub fn advance_point(&self, p: &TorusPoint, n: u64) -> TorusPoint {
        if n == 0 {
            return p.clone();
        }
        let mut o = self.orbit(p);
        o.advance(n);
        o.point()
    }

    /// Exact orbit of `p` (snapped to the lattice).
    pub fn orbit(&self, p: &TorusPoint) -> Orbit<'_> {
        let mut state = [0u64; MAX_SYSTEM_DIM];
        let mut coords = [0f64; MAX_SYSTEM_DIM];
        for (i, x) in p.coords().iter().enumerate() {
            state[i] = to_fixed(*x);
            coords[i] = snap(*x);
        }
        Orbit {
            dynamics: self,
            state,
            coords,
            rng: None,
            bits: 0,
            left: 0,
        }
    }

    /// Orbit for Monte Carlo use. Identical to [`Dynamics::orbit`] unless the
    /// system has a doubling factor: there the exact lattice orbit shifts
    /// zeros in from the right and collapses to 0 within 53 steps, so the
    /// vacated lowest lattice bit is drawn from `rng` instead. This follows
    /// the orbit of a uniformly random point agreeing with `p` to 53 bits.
    pub fn refining_orbit(&self, p: &TorusPoint, rng: RngStream) -> Orbit<'_> {
        let mut o = self.orbit(p);
        if self.doubling {
            o.rng = Some(rng);
        }
        o
    }
}

pub struct Orbit<'a> {
    dynamics: &'a Dynamics,
    state: [u64; MAX_SYSTEM_DIM],
    coords: [f64; MAX_SYSTEM_DIM],
    rng: Option<RngStream>,
    bits: u64,
    left: u32,
}

impl Orbit<'_> {
    /// Current point as `f64` coordinates in `[0, 1)`.
    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dynamics.dim]
    }

    pub fn point(&self) -> TorusPoint {
        TorusPoint::from_fixed(&self.state[..self.dynamics.dim])
    }

    #[inline]
    fn fresh_bit(&mut self) -> u64 {
        match self.rng.as_mut() {
            None => 0,
            Some(rng) => {
                if self.left == 0 {
                    self.bits = rng.next_u64();
                    self.left = 64;
                }
                let b = self.bits & 1;
                self.bits >>= 1;
                self.left -= 1;
                b
            }
        }
    }

    #[inline]
    pub fn step(&mut self) {
        let dynamics = self.dynamics;
        for op in &dynamics.ops {
            match op {
                Op::Rotate { at, alpha } => self.state[*at] = self.state[*at].wrapping_add(*alpha),
                Op::SkewShift { at, alpha } => {
                    let x = self.state[*at];
                    self.state[*at] = x.wrapping_add(*alpha);
                    self.state[at + 1] = self.state[at + 1].wrapping_add(x);
                }
                Op::Auto2 { at, m } => {
                    let (x, y) = (self.state[*at], self.state[at + 1]);
                    self.state[*at] = m[0].wrapping_mul(x).wrapping_add(m[1].wrapping_mul(y));
                    self.state[at + 1] = m[2].wrapping_mul(x).wrapping_add(m[3].wrapping_mul(y));
                }
                Op::Auto { at, dim, m } => apply_matrix(&mut self.state, *at, *dim, m),
                Op::Doubling { at } => {
                    let bit = self.fresh_bit();
                    self.state[*at] = (self.state[*at] << 1) | (bit << LATTICE_LSB);
                }
                Op::Fiber {
                    x_at,
                    y_at,
                    y_dim,
                    tau,
                    family,
                } => {
                    // `coords` still holds the point before this step
                    let t = tau.eval(&self.coords[*y_at..y_at + y_dim]);
                    match family {
                        Family::Translation { fixed, real } => {
                            for i in 0..fixed.len() {
                                let shift = if tau.is_integer_valued() {
                                    (t as i64 as u64).wrapping_mul(fixed[i])
                                } else {
                                    to_fixed(wrap(t * real[i]))
                                };
                                self.state[x_at + i] = self.state[x_at + i].wrapping_add(shift);
                            }
                        }
                        Family::Power { dim, fwd, inv } => {
                            let m = if t >= 0.0 { fwd } else { inv };
                            for _ in 0..(t.abs() as u64) {
                                apply_matrix(&mut self.state, *x_at, *dim, m);
                            }
                        }
                    }
                }
            }
        }
        let d = dynamics.dim;
        for (c, v) in self.coords[..d].iter_mut().zip(&self.state[..d]) {
            *c = from_fixed(*v);
        }
    }

    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_doubling_collapses_but_refining_does_not() {
        let d = SystemSpec::Doubling.dynamics().unwrap();
        let p = TorusPoint::new(vec![0.123456789]);
        let mut exact = d.orbit(&p);
        exact.advance(53);
        assert_eq!(exact.coords(), &[0.0]);
        let mut refined = d.refining_orbit(&p, RngStream::new(1, 1));
        let mut prev = refined.coords()[0];
        for i in 0..200 {
            refined.step();
            let now = refined.coords()[0];
            if i < 40 {
                // leading bits follow the exact orbit
                assert!(crate::torus::circle_dist(now, wrap(2.0 * prev)) < 1e-3);
            }
            assert_ne!(now, 0.0);
            prev = now;
        }
    }

    #[test]
    fn refining_mean_is_uniform() {
        let d = SystemSpec::Doubling.dynamics().unwrap();
        let mut s = 0.0;
        let n = 20_000;
        for i in 0..n {
            let mut o = d.refining_orbit(&TorusPoint::new(vec![0.1]), RngStream::new(3, i));
            o.advance(100);
            s += o.coords()[0];
        }
        assert!((s / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn refining_matches_exact_without_doubling() {
        let d = SystemSpec::cat_map().dynamics().unwrap();
        let p = TorusPoint::new(vec![0.3, 0.7]);
        let mut a = d.orbit(&p);
        let mut b = d.refining_orbit(&p, RngStream::new(0, 0));
        a.advance(100);
        b.advance(100);
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn lattice_arithmetic_is_exact() {
        // cat map is invertible on the lattice: the inverse undoes 1000 steps
        let fwd = SystemSpec::cat_map().dynamics().unwrap();
        let back = SystemSpec::toral_auto(vec![vec![1, -1], vec![-1, 2]])
            .unwrap()
            .dynamics()
            .unwrap();
        let p = TorusPoint::new(vec![0.3, 0.7]);
        let q = fwd.advance_point(&p, 1000);
        let snapped = TorusPoint::new(p.coords().iter().map(|x| snap(*x)).collect::<Vec<_>>());
        assert_eq!(back.advance_point(&q, 1000), snapped);
    }

    #[test]
    fn three_dimensional_automorphism() {
        let s = SystemSpec::toral_auto(vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1]]).unwrap();
        let p = crate::systems::iterate(&s, &TorusPoint::new(vec![0.5, 0.25, 0.125]), 1).unwrap();
        assert_eq!(p.coords(), &[0.75, 0.375, 0.875]);
    }
}
