//! L-stable propagation of the linear master equation.
//!
//! One step applies the stability function of the three-stage Radau IIA
//! scheme, the [2/3] Padé approximant of exp(z), to hL. For an autonomous
//! linear system this is exactly the Radau IIA update and is evaluated in
//! partial fractions: R(hL)y = Σ_k A_k (hL − r_k)⁻¹ y, so only shifted
//! linear solves are needed and the stiff modes are damped, not amplified.
//! Local errors come from step doubling; step sizes are powers-of-two
//! fractions of the output spacing so factorizations get reused.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Order of the Radau IIA step.
pub const ORDER: i32 = 5;

const CACHE_SLOTS: usize = 12;

/// Roots r_k of Q(z) = 1 − 3z/5 + 3z²/20 − z³/60 and residues A_k = P(r_k)/Q'(r_k).
pub fn pade_poles() -> ([C64; 3], [C64; 3]) {
    // Q(z) ∝ z³ − 9z² + 36z − 60; Durand-Kerner from the usual start.
    let q = |z: C64| ((z - 9.0) * z + 36.0) * z - 60.0;
    let mut r = [
        C64::new(0.4, 0.9),
        C64::new(0.4, 0.9).powu(2),
        C64::new(0.4, 0.9).powu(3),
    ];
    for _ in 0..200 {
        let prev = r;
        for k in 0..3 {
            let mut den = C64::new(1.0, 0.0);
            for j in 0..3 {
                if j != k {
                    den *= r[k] - r[j];
                }
            }
            r[k] -= q(r[k]) / den;
        }
        if (0..3).all(|k| (r[k] - prev[k]).norm() < 1e-15 * r[k].norm()) {
            break;
        }
    }
    let p = |z: C64| 1.0 + 0.4 * z + z * z / 20.0;
    let dq = |z: C64| -0.6 + 0.3 * z - z * z / 20.0;
    let a = [p(r[0]) / dq(r[0]), p(r[1]) / dq(r[1]), p(r[2]) / dq(r[2])];
    (r, a)
}

type Factor = LU<C64, Dyn, Dyn>;

pub struct Propagator<'a> {
    generator: &'a DMatrix<C64>,
    poles: [C64; 3],
    residues: [C64; 3],
    cache: VecDeque<(u64, [Factor; 3])>,
    pub factorizations: usize,
}

impl<'a> Propagator<'a> {
    pub fn new(generator: &'a DMatrix<C64>) -> Self {
        let (poles, residues) = pade_poles();
        Self {
            generator,
            poles,
            residues,
            cache: VecDeque::new(),
            factorizations: 0,
        }
    }

    fn factors(&mut self, h: f64) -> Result<usize> {
        let key = h.to_bits();
        if let Some(pos) = self.cache.iter().position(|(k, _)| *k == key) {
            return Ok(pos);
        }
        let n = self.generator.nrows();
        let build = |r: C64| -> Result<Factor> {
            let mut m = self.generator * C64::new(h, 0.0);
            for i in 0..n {
                m[(i, i)] -= r;
            }
            let lu = m.lu();
            if lu.is_invertible() {
                Ok(lu)
            } else {
                Err(Error::Singular("Radau step"))
            }
        };
        let f = [build(self.poles[0])?, build(self.poles[1])?, build(self.poles[2])?];
        self.factorizations += 3;
        if self.cache.len() == CACHE_SLOTS {
            self.cache.pop_front();
        }
        self.cache.push_back((key, f));
        Ok(self.cache.len() - 1)
    }

    /// y ↦ R(hL)·y.
    pub fn step(&mut self, h: f64, y: &DVector<C64>) -> Result<DVector<C64>> {
        let slot = self.factors(h)?;
        let (_, f) = &self.cache[slot];
        let mut out = DVector::<C64>::zeros(y.len());
        for k in 0..3 {
            let x = f[k].solve(y).ok_or(Error::Singular("Radau step"))?;
            out.axpy(self.residues[k], &x, C64::new(1.0, 0.0));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pade_matches_exponential_for_small_arguments() {
        let (r, a) = pade_poles();
        let sum: C64 = a.iter().sum();
        assert!((sum + 3.0).norm() < 1e-12, "ΣA_k = {sum}");
        let rz = |z: f64| -> C64 { (0..3).map(|k| a[k] / (C64::new(z, 0.0) - r[k])).sum() };
        for z in [-0.1f64, -0.01, 0.05] {
            let err = (rz(z) - z.exp()).norm();
            // Local error of an order-5 method ~ z⁶/k.
            assert!(err < z.abs().powi(6), "z={z} err={err}");
        }
        // L-stability: R(z) → 0 as z → −∞.
        assert!(rz(-1e8).norm() < 1e-7);
    }

    #[test]
    fn scalar_decay_step() {
        let g = DMatrix::from_element(1, 1, C64::new(-2.0, 0.0));
        let mut p = Propagator::new(&g);
        let y = DVector::from_element(1, C64::new(1.0, 0.0));
        let mut v = y.clone();
        for _ in 0..100 {
            v = p.step(0.01, &v).unwrap();
        }
        assert!((v[0].re - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(p.factorizations, 3);
    }
}
