//! Adiabatically eliminated rate description of the emitter-cavity system.
//!
//! Each branch |e⟩ → |g_i⟩ feeds the cavity at
//! R_i = 4g_i²/w_i · 1/(1 + (2δ_i/w_i)²) with w_i = κ + γ + γ* + γ_{i,i−1},
//! valid while the cavity decays fast compared with γ and every R_i.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CoupledSystem, SaturationParams};
use crate::units::GHZ;

/// κ must exceed this multiple of max(γ, R_i) for the rates to apply.
pub const FAST_CAVITY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateModelResult {
    /// R_i (rad/s).
    pub effective_rates: Vec<f64>,
    /// P_i = R_i/(γ + ΣR_j).
    pub efficiencies: Vec<f64>,
    pub total_efficiency: f64,
    /// τ_cav = 1/(γ + ΣR_i) (s).
    pub modified_lifetime: f64,
    /// τ_free = 1/γ (s).
    pub free_lifetime: f64,
    /// δ_i (rad/s).
    pub cavity_detunings: Vec<f64>,
    /// False when κ < 10·max(γ, R_i).
    pub fast_cavity: bool,
}

impl RateModelResult {
    /// τ_free/τ_cav, the lifetime shortening factor.
    pub fn lifetime_ratio(&self) -> f64 {
        self.free_lifetime / self.modified_lifetime
    }
}

/// Lorentzian width w_i = κ + γ + γ* + γ_{i,i−1} seen by branch `i`.
pub fn branch_linewidth(system: &CoupledSystem, i: usize) -> f64 {
    let em = &system.emitter;
    system.cavity.loss_rate + em.total_radiative() + em.pure_dephasing() + em.levels()[i].phonon_relaxation
}

/// R_i for level `i`.
pub fn effective_rate(i: usize, system: &CoupledSystem) -> f64 {
    let w = branch_linewidth(system, i);
    let g = system.couplings[i];
    let x = 2.0 * system.detuning(i) / w;
    4.0 * g * g / w / (1.0 + x * x)
}

/// Rates, efficiencies and modified lifetime at the system's current tuning.
pub fn emission_efficiencies(system: &CoupledSystem) -> Result<RateModelResult> {
    system.ensure_valid()?;
    let n = system.emitter.levels().len();
    let rates: Vec<f64> = (0..n).map(|i| effective_rate(i, system)).collect();
    let gamma = system.emitter.total_radiative();
    let sum_r: f64 = rates.iter().sum();
    let denom = gamma + sum_r;
    let efficiencies: Vec<f64> = rates.iter().map(|r| r / denom).collect();
    let r_max = rates.iter().cloned().fold(0.0, f64::max);
    let fast_cavity = system.cavity.loss_rate >= FAST_CAVITY_FACTOR * gamma.max(r_max);
    if !fast_cavity {
        log::warn!(
            "κ = {:.3e} rad/s is not ≫ max(γ, R_i) = {:.3e}; rate model outside its validity range",
            system.cavity.loss_rate,
            gamma.max(r_max)
        );
    }
    Ok(RateModelResult {
        total_efficiency: sum_r / denom,
        effective_rates: rates,
        efficiencies,
        modified_lifetime: 1.0 / denom,
        free_lifetime: 1.0 / gamma,
        cavity_detunings: system.detunings(),
        fast_cavity,
    })
}

/// Same as [`emission_efficiencies`] with the cavity retuned to `resonance`.
pub fn emission_efficiencies_at(system: &CoupledSystem, resonance: f64) -> Result<RateModelResult> {
    emission_efficiencies(&system.retuned(resonance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurcellEstimate {
    pub factor: f64,
}

/// F ≈ 4g²/(γγ*): the bad-emitter Purcell factor.
pub fn purcell_estimate(g: f64, gamma: f64, gamma_star: f64) -> Result<PurcellEstimate> {
    if !(gamma > 0.0) || !(gamma_star > 0.0) {
        return Err(Error::invalid("γ and γ* must be positive"));
    }
    Ok(PurcellEstimate {
        factor: 4.0 * g * g / (gamma * gamma_star),
    })
}

/// I(P) = I_∞·P/(P + P_sat).
pub fn saturation_curve(params: &SaturationParams, power: f64) -> f64 {
    if power <= 0.0 {
        return 0.0;
    }
    if power.is_infinite() {
        return params.saturation_rate;
    }
    params.saturation_rate * power / (power + params.saturation_power)
}

/// Count rate spread over a linewidth, in photons/(s·GHz).
pub fn spectral_density(count_rate: f64, linewidth_hz: f64) -> Result<f64> {
    if !(linewidth_hz > 0.0) {
        return Err(Error::invalid("linewidth must be positive"));
    }
    Ok(count_rate / (linewidth_hz / GHZ))
}
