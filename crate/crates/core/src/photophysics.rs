//! Three-level photon statistics: ground (1), excited (2) and a metastable
//! shelving level (3).
//!
//! Populations obey ṗ = M p with
//!
//! ```text
//!     | -k12     k21        k31 |
//! M = |  k12  -(k21+k23)     0  |
//!     |   0      k23       -k31 |
//! ```
//!
//! and g²(τ) = p₂(|τ|)/p₂(∞) for a start in |1⟩.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{minimize, LmConfig, Problem};

/// Relative root separation below which the two decay rates count as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-9;

/// Internal rates (1/s). `pump_coefficient` σ gives k12 = σ·P for power P (W).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeLevelRates {
    pub k12: f64,
    pub k21: f64,
    pub k23: f64,
    pub k31: f64,
    pub pump_coefficient: f64,
}

/// Saturation power of the free-space measurement (W).
pub const NV_SATURATION_POWER: f64 = 0.46e-3;

impl ThreeLevelRates {
    pub fn new(k12: f64, k21: f64, k23: f64, k31: f64) -> Result<Self> {
        let r = Self {
            k12,
            k21,
            k23,
            k31,
            pump_coefficient: 0.0,
        };
        r.check()?;
        Ok(r)
    }

    /// Representative NV rates: radiative decay 35e6/s, intersystem crossing
    /// 10e6/s into a shelf that empties at 2e6/s, and σ placing saturation
    /// at 0.46 mW. Unpumped (k12 = 0).
    pub fn nv_default() -> Self {
        let (k21, k23, k31) = (35e6, 10e6, 2e6);
        // p2 reaches half its saturated value at k12 = k31(k21 + k23)/(k23 + k31).
        let k12_sat = k31 * (k21 + k23) / (k23 + k31);
        Self {
            k12: 0.0,
            k21,
            k23,
            k31,
            pump_coefficient: k12_sat / NV_SATURATION_POWER,
        }
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.k12, self.k21, self.k23, self.k31, self.pump_coefficient];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("three-level rates must be finite and non-negative"));
        }
        if !(self.k21 > 0.0) {
            return Err(Error::invalid("k21 must be positive"));
        }
        Ok(())
    }

    /// Same rates with k12 = σ·P.
    pub fn at_power(&self, power: f64) -> Self {
        Self {
            k12: self.pump_coefficient * power,
            ..*self
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k12: self.k12 * factor,
            k21: self.k21 * factor,
            k23: self.k23 * factor,
            k31: self.k31 * factor,
            pump_coefficient: self.pump_coefficient * factor,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            -self.k12,
            self.k21,
            self.k31,
            self.k12,
            -(self.k21 + self.k23),
            0.0,
            0.0,
            self.k23,
            -self.k31,
        )
    }

    /// Sum S and product P of the two nonzero decay rates of M.
    fn invariants(&self) -> (f64, f64) {
        let (k12, k21, k23, k31) = (self.k12, self.k21, self.k23, self.k31);
        (k12 + k21 + k23 + k31, k12 * k23 + k12 * k31 + k21 * k31 + k23 * k31)
    }

    /// Steady-state populations (p1, p2, p3).
    pub fn steady_state(&self) -> [f64; 3] {
        let (k12, k21, k23, k31) = (self.k12, self.k21, self.k23, self.k31);
        let (_, p) = self.invariants();
        if p == 0.0 {
            // k31 = 0 with pumping traps everything in the shelf.
            return if k12 > 0.0 && k23 > 0.0 {
                [0.0, 0.0, 1.0]
            } else {
                [1.0, 0.0, 0.0]
            };
        }
        [(k21 + k23) * k31 / p, k12 * k31 / p, k12 * k23 / p]
    }

    pub fn excited_population(&self) -> f64 {
        self.steady_state()[1]
    }

    /// lim_{k12→∞} p2 = k31/(k23 + k31).
    pub fn saturated_excited_population(&self) -> f64 {
        if self.k23 + self.k31 == 0.0 {
            1.0
        } else {
            self.k31 / (self.k23 + self.k31)
        }
    }

    /// Whether the two decay rates coincide to [`DEGENERACY_RTOL`].
    pub fn is_degenerate(&self) -> bool {
        let (s, p) = self.invariants();
        (s * s - 4.0 * p).abs() <= DEGENERACY_RTOL * s * s
    }
}

/// Bi-exponential g²(τ) = 1 − (1+a)e^{−|τ|/τ₁} + a·e^{−|τ|/τ₂}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    /// τ₁ (s).
    pub antibunching_time: f64,
    /// τ₂ (s).
    pub bunching_time: f64,
    /// a.
    pub bunching_amplitude: f64,
}

impl G2Params {
    pub fn new(a: f64, tau1: f64, tau2: f64) -> Self {
        Self {
            antibunching_time: tau1,
            bunching_time: tau2,
            bunching_amplitude: a,
        }
    }

    pub fn g2(&self, tau: f64) -> f64 {
        let t = tau.abs();
        let a = self.bunching_amplitude;
        1.0 - (1.0 + a) * (-t / self.antibunching_time).exp() + a * (-t / self.bunching_time).exp()
    }

    /// τ₂ > τ₁ > 0 and a ≥ 0.
    pub fn is_consistent(&self) -> bool {
        self.antibunching_time > 0.0 && self.bunching_time > self.antibunching_time && self.bunching_amplitude >= 0.0
    }
}

/// Closed-form (a, τ₁, τ₂) from the two nonzero eigenvalues of M.
///
/// Errors when the eigenvalues are complex (damped oscillation, no
/// bi-exponential form) or coincide.
pub fn params_from_rates(rates: &ThreeLevelRates) -> Result<G2Params> {
    rates.check()?;
    if rates.k12 == 0.0 && rates.k23 == 0.0 && rates.k31 == 0.0 {
        // Only k21: p2 never leaves zero.
        return Err(Error::invalid("no pumping and no shelf: g2 undefined"));
    }
    let (s, p) = rates.invariants();
    let disc = s * s - 4.0 * p;
    if rates.is_degenerate() {
        return Err(Error::Numerical(
            "degenerate decay rates: g2 is not bi-exponential".into(),
        ));
    }
    if disc < 0.0 {
        return Err(Error::Numerical(format!(
            "complex decay rates (discriminant {disc:.3e}): g2 oscillates"
        )));
    }
    let root = disc.sqrt();
    let fast = 0.5 * (s + root);
    // Stable form of the small root.
    let slow = p / fast;
    if slow <= 0.0 {
        return Err(Error::invalid("rate matrix has a second zero eigenvalue"));
    }
    let a = if rates.k31 > 0.0 {
        // g2'(0) = k12/p2(∞) = P/k31.
        (p / rates.k31 - fast) / (fast - slow)
    } else {
        0.0
    };
    Ok(G2Params::new(a, 1.0 / fast, 1.0 / slow))
}

/// Excited population p₂(t) from |1⟩, by matrix exponential.
pub fn excited_population_at(rates: &ThreeLevelRates, t: f64) -> f64 {
    let m = DMatrix::from_iterator(3, 3, rates.matrix().iter().map(|v| v * t.abs()));
    let e = m.exp();
    e[(1, 0)]
}

/// g²(τ) by propagating the rate matrix; valid for every rate set, including
/// degenerate and oscillatory ones.
pub fn g2_from_rates(rates: &ThreeLevelRates, tau: f64) -> Result<f64> {
    rates.check()?;
    let p_inf = rates.excited_population();
    if !(p_inf > 0.0) {
        return Err(Error::invalid("steady-state excited population is zero"));
    }
    if rates.is_degenerate() {
        log::warn!("degenerate three-level decay rates; g2 uses the matrix exponential");
    }
    Ok(excited_population_at(rates, tau) / p_inf)
}

/// g² on a delay grid, reusing one eigen-decomposition when it exists.
pub fn g2_curve(rates: &ThreeLevelRates, taus: &[f64]) -> Result<Vec<f64>> {
    match params_from_rates(rates) {
        Ok(p) => Ok(taus.iter().map(|&t| p.g2(t)).collect()),
        Err(_) => taus.iter().map(|&t| g2_from_rates(rates, t)).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct G2Fit {
    pub params: G2Params,
    /// Covariance of (a, τ₁, τ₂).
    pub covariance: Option<[[f64; 3]; 3]>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// τ₂ ≤ τ₁ or a < 0.
    pub model_inconsistent: bool,
    /// Mean measured g² for |τ| ≤ τ₁/4 (nearest sample if none).
    pub g2_zero_estimate: f64,
}

impl G2Fit {
    /// g²(0) < 0.5.
    pub fn single_emitter(&self) -> bool {
        self.g2_zero_estimate < 0.5
    }

    pub fn std_errors(&self) -> Option<[f64; 3]> {
        self.covariance
            .map(|c| [c[0][0].sqrt(), c[1][1].sqrt(), c[2][2].sqrt()])
    }
}

struct G2Problem<'a> {
    data: &'a [(f64, f64)],
}

impl Problem for G2Problem<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn n_residuals(&self) -> usize {
        self.data.len()
    }

    // p = (a, ln τ₁, ln τ₂)
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let g = G2Params::new(p[0], p[1].exp(), p[2].exp());
        for (o, &(t, y)) in out.iter_mut().zip(self.data) {
            *o = g.g2(t) - y;
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let (a, t1, t2) = (p[0], p[1].exp(), p[2].exp());
        for (i, &(t, _)) in self.data.iter().enumerate() {
            let x = t.abs();
            let e1 = (-x / t1).exp();
            let e2 = (-x / t2).exp();
            jac[(i, 0)] = -e1 + e2;
            jac[(i, 1)] = -(1.0 + a) * e1 * x / t1;
            jac[(i, 2)] = a * e2 * x / t2;
        }
    }
}

/// Levenberg-Marquardt fit of the bi-exponential to (τ, g²) samples.
pub fn fit_g2(data: &[(f64, f64)], initial: &G2Params, cfg: &LmConfig) -> Result<G2Fit> {
    if data.len() < 10 {
        return Err(Error::invalid(format!(
            "g2 fit needs at least 10 samples, got {}",
            data.len()
        )));
    }
    if data.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("g2 samples must be finite"));
    }
    if !(initial.antibunching_time > 0.0 && initial.bunching_time > 0.0) {
        return Err(Error::invalid("initial g2 times must be positive"));
    }
    let span = data.iter().map(|d| d.0.abs()).fold(0.0, f64::max);
    if span < initial.bunching_time {
        log::warn!("g2 delays reach only {span:.3e} s, below the initial bunching time");
    }
    let problem = G2Problem { data };
    let rep = minimize(
        &problem,
        &[
            initial.bunching_amplitude,
            initial.antibunching_time.ln(),
            initial.bunching_time.ln(),
        ],
        cfg,
    );
    if !rep.converged {
        log::warn!("g2 fit did not converge in {} iterations", rep.iterations);
    }
    let params = G2Params::new(rep.params[0], rep.params[1].exp(), rep.params[2].exp());
    let scale = [1.0, params.antibunching_time, params.bunching_time];
    let covariance = rep.covariance.as_ref().map(|c| {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = c[(i, j)] * scale[i] * scale[j];
            }
        }
        out
    });
    Ok(G2Fit {
        params,
        covariance,
        residual_norm: rep.residual_norm,
        iterations: rep.iterations,
        converged: rep.converged,
        model_inconsistent: !params.is_consistent(),
        g2_zero_estimate: g2_zero_estimate(data, params.antibunching_time),
    })
}

fn g2_zero_estimate(data: &[(f64, f64)], tau1: f64) -> f64 {
    let near: Vec<f64> = data
        .iter()
        .filter(|(t, _)| t.abs() <= 0.25 * tau1)
        .map(|d| d.1)
        .collect();
    if near.is_empty() {
        data.iter()
            .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
            .map_or(f64::NAN, |d| d.1)
    } else {
        near.iter().sum::<f64>() / near.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub power: f64,
    pub params: G2Params,
}

/// (a, τ₁, τ₂) with k12 = σ·P over `powers`.
pub fn power_dependence(reference: &ThreeLevelRates, powers: &[f64]) -> Result<Vec<PowerPoint>> {
    if !(reference.pump_coefficient > 0.0) {
        return Err(Error::invalid("pump coefficient must be positive"));
    }
    powers
        .iter()
        .map(|&p| {
            if !(p >= 0.0) {
                return Err(Error::invalid("powers must be non-negative"));
            }
            Ok(PowerPoint {
                power: p,
                params: params_from_rates(&reference.at_power(p))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSeriesFit {
    pub rates: ThreeLevelRates,
    pub residual_norm: f64,
    pub converged: bool,
}

struct SeriesProblem<'a> {
    series: &'a [PowerPoint],
}

fn rates_from_logs(p: &[f64]) -> ThreeLevelRates {
    ThreeLevelRates {
        k12: 0.0,
        k21: p[1].exp(),
        k23: p[2].exp(),
        k31: p[3].exp(),
        pump_coefficient: p[0].exp(),
    }
}

impl Problem for SeriesProblem<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        3 * self.series.len()
    }

    // p = ln(σ, k21, k23, k31)
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let base = rates_from_logs(p);
        for (k, pt) in self.series.iter().enumerate() {
            let obs = pt.params;
            match params_from_rates(&base.at_power(pt.power)) {
                Ok(m) => {
                    out[3 * k] = m.antibunching_time / obs.antibunching_time - 1.0;
                    out[3 * k + 1] = m.bunching_time / obs.bunching_time - 1.0;
                    out[3 * k + 2] =
                        (m.bunching_amplitude - obs.bunching_amplitude) / obs.bunching_amplitude.abs().max(0.1);
                }
                Err(_) => out[3 * k..3 * k + 3].fill(1e3),
            }
        }
    }
}

/// Internal rates from a measured power series of (a, τ₁, τ₂), all four
/// constrained positive; (σ, k21, k23, k31) are shared across powers.
pub fn fit_rates_to_series(series: &[PowerPoint], initial: &ThreeLevelRates, cfg: &LmConfig) -> Result<RateSeriesFit> {
    if series.len() < 2 {
        return Err(Error::invalid("rate fit needs at least two powers"));
    }
    let init = [initial.pump_coefficient, initial.k21, initial.k23, initial.k31];
    if init.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("initial rates and pump coefficient must be positive"));
    }
    let logs: Vec<f64> = init.iter().map(|v| v.ln()).collect();
    let rep = minimize(&SeriesProblem { series }, &logs, cfg);
    Ok(RateSeriesFit {
        rates: rates_from_logs(&rep.params),
        residual_norm: rep.residual_norm,
        converged: rep.converged,
    })
}

/// Independent check of the closed form: population p₂(t) rebuilt from the
/// real eigen-decomposition of M.
pub fn excited_population_eigen(rates: &ThreeLevelRates, t: f64) -> Option<f64> {
    let m = rates.matrix();
    let eig = m.complex_eigenvalues();
    if eig.iter().any(|z| z.im.abs() > 1e-9 * z.re.abs().max(1.0)) {
        return None;
    }
    let lam: Vec<f64> = eig.iter().map(|z| z.re).collect();
    // Vandermonde fit of p2(t) = Σ c_k e^{λ_k t} to p2(0), p2'(0), p2''(0).
    let p0 = Vector3::new(1.0, 0.0, 0.0);
    let d1 = m * p0;
    let d2 = m * d1;
    let v = Matrix3::new(
        1.0,
        1.0,
        1.0,
        lam[0],
        lam[1],
        lam[2],
        lam[0] * lam[0],
        lam[1] * lam[1],
        lam[2] * lam[2],
    );
    let c = v.lu().solve(&Vector3::new(p0[1], d1[1], d2[1]))?;
    Some((0..3).map(|k| c[k] * (lam[k] * t.abs()).exp()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ThreeLevelRates {
        ThreeLevelRates::new(20e6, 35e6, 10e6, 2e6).unwrap()
    }

    #[test]
    fn closed_form_matches_propagation() {
        let r = sample();
        let p = params_from_rates(&r).unwrap();
        for i in 0..200 {
            let t = i as f64 * 5e-9;
            let num = g2_from_rates(&r, t).unwrap();
            assert!((num - p.g2(t)).abs() < 1e-10, "t={t}: {num} vs {}", p.g2(t));
        }
    }

    #[test]
    fn closed_form_matches_eigen_route() {
        let r = sample();
        let p = params_from_rates(&r).unwrap();
        let pinf = r.excited_population();
        for i in 0..100 {
            let t = i as f64 * 1e-8;
            let e = excited_population_eigen(&r, t).unwrap() / pinf;
            assert!((e - p.g2(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn no_shelf_is_two_level() {
        let r = ThreeLevelRates::new(20e6, 35e6, 0.0, 2e6).unwrap();
        let p = params_from_rates(&r).unwrap();
        assert!(p.bunching_amplitude.abs() < 1e-12);
        assert!((1.0 / p.antibunching_time - 55e6).abs() < 1e-3);
    }

    #[test]
    fn weak_pump_limit() {
        let r = ThreeLevelRates::new(1e-3, 35e6, 10e6, 2e6).unwrap();
        let p = params_from_rates(&r).unwrap();
        assert!((p.antibunching_time * 45e6 - 1.0).abs() < 1e-6);
        assert!(p.bunching_amplitude.abs() < 1e-6);
    }

    #[test]
    fn strong_pump_limit() {
        let r = ThreeLevelRates::new(1e13, 35e6, 10e6, 2e6).unwrap();
        let p = params_from_rates(&r).unwrap();
        assert!((p.bunching_time * 12e6 - 1.0).abs() < 1e-4);
        assert!((p.bunching_amplitude - 5.0).abs() < 1e-3);
    }

    #[test]
    fn rescaling_time() {
        let r = sample();
        let p = params_from_rates(&r).unwrap();
        let q = params_from_rates(&r.scaled(2.0)).unwrap();
        assert!((q.antibunching_time * 2.0 / p.antibunching_time - 1.0).abs() < 1e-12);
        assert!((q.bunching_time * 2.0 / p.bunching_time - 1.0).abs() < 1e-12);
        assert!((q.bunching_amplitude - p.bunching_amplitude).abs() < 1e-12);
    }

    #[test]
    fn complex_and_degenerate_rates() {
        let osc = ThreeLevelRates::new(1.0, 1e-9, 1.0, 1.0).unwrap();
        assert!(params_from_rates(&osc).is_err());
        let g = g2_from_rates(&osc, 0.0).unwrap();
        assert!(g.abs() < 1e-12);
        // S² = 4P with k23 = 0: roots k12+k21 and k31 coincide.
        let deg = ThreeLevelRates::new(1.0, 1.0, 0.0, 2.0).unwrap();
        assert!(deg.is_degenerate());
        assert!(params_from_rates(&deg).is_err());
        let far = g2_from_rates(&deg, 50.0).unwrap();
        assert!((far - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let truth = G2Params::new(0.5, 10e-9, 100e-9);
        let data: Vec<(f64, f64)> = (-300..=300)
            .map(|i| {
                let t = i as f64 * 2e-9;
                (t, truth.g2(t))
            })
            .collect();
        let fit = fit_g2(&data, &G2Params::new(0.3, 15e-9, 70e-9), &LmConfig::default()).unwrap();
        assert!((fit.params.bunching_amplitude - 0.5).abs() < 1e-8);
        assert!((fit.params.antibunching_time / 10e-9 - 1.0).abs() < 1e-8);
        assert!((fit.params.bunching_time / 100e-9 - 1.0).abs() < 1e-8);
        assert!(!fit.model_inconsistent);
        assert!(fit.single_emitter());
    }

    #[test]
    fn fit_needs_ten_samples() {
        let data: Vec<(f64, f64)> = (0..9).map(|i| (i as f64, 1.0)).collect();
        assert!(fit_g2(&data, &G2Params::new(0.1, 1.0, 10.0), &LmConfig::default()).is_err());
    }

    #[test]
    fn power_dependence_shortens_antibunching() {
        let base = ThreeLevelRates::nv_default();
        let psat = NV_SATURATION_POWER;
        let powers: Vec<f64> = [0.0, 0.25, 0.51, 0.84, 2.0, 5.0, 15.2]
            .iter()
            .map(|x| x * psat)
            .collect();
        let pts = power_dependence(&base, &powers).unwrap();
        let zero = params_from_rates(&base.at_power(0.0)).unwrap();
        assert_eq!(pts[0].params, zero);
        for w in pts.windows(2) {
            assert!(w[1].params.antibunching_time < w[0].params.antibunching_time);
        }
    }

    #[test]
    fn saturation_power_from_defaults() {
        let r = ThreeLevelRates::nv_default().at_power(NV_SATURATION_POWER);
        let half = 0.5 * r.saturated_excited_population();
        assert!((r.excited_population() / half - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_series_fit_recovers_rates() {
        let truth = ThreeLevelRates::nv_default();
        let powers: Vec<f64> = [0.25, 0.51, 0.84, 2.0, 5.0, 15.2]
            .iter()
            .map(|x| x * NV_SATURATION_POWER)
            .collect();
        let series = power_dependence(&truth, &powers).unwrap();
        let init = ThreeLevelRates {
            k12: 0.0,
            k21: 25e6,
            k23: 15e6,
            k31: 3e6,
            pump_coefficient: truth.pump_coefficient * 1.5,
        };
        let fit = fit_rates_to_series(&series, &init, &LmConfig::default()).unwrap();
        for (a, b) in [
            (fit.rates.k21, truth.k21),
            (fit.rates.k23, truth.k23),
            (fit.rates.k31, truth.k31),
            (fit.rates.pump_coefficient, truth.pump_coefficient),
        ] {
            assert!((a / b - 1.0).abs() < 1e-5, "{a} vs {b}");
        }
    }

    fn rates() -> impl Strategy<Value = ThreeLevelRates> {
        (0.0f64..1e8, 1e6f64..1e8, 0.0f64..5e7, 1e5f64..1e7)
            .prop_map(|(a, b, c, d)| ThreeLevelRates::new(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn g2_zero_and_long_delay(r in rates()) {
            prop_assume!(r.k12 > 0.0);
            prop_assert!(g2_from_rates(&r, 0.0).unwrap().abs() < 1e-12);
            if let Ok(p) = params_from_rates(&r) {
                prop_assert!(p.g2(0.0).abs() < 1e-12);
                let far = 60.0 * p.bunching_time.max(p.antibunching_time);
                prop_assert!((p.g2(far) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn g2_is_even(r in rates(), t in 0.0f64..1e-6) {
            prop_assume!(r.k12 > 0.0);
            let p = g2_from_rates(&r, t).unwrap();
            let m = g2_from_rates(&r, -t).unwrap();
            prop_assert_eq!(p, m);
        }

        #[test]
        fn closed_form_equals_propagation(r in rates()) {
            prop_assume!(r.k12 > 1e3);
            if let Ok(p) = params_from_rates(&r) {
                for i in 0..20 {
                    let t = i as f64 * 0.3 * p.bunching_time / 20.0 * 10.0;
                    let num = g2_from_rates(&r, t).unwrap();
                    prop_assert!((num - p.g2(t)).abs() <= 1e-10 * num.abs().max(1.0));
                }
            }
        }
    }
}
