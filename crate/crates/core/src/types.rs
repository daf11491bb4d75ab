//! Domain model shared by the solvers: emitter level scheme, cavity mode,
//! and the coupled system.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::LorentzianPeak;
use crate::units::{angular_to_wavelength, C};

/// Lower bound applied to extracted phonon relaxation rates (rad/s).
pub const DEFAULT_PHONON_FLOOR: f64 = 1e9;

/// Relative tolerance for κ against (l, F).
pub const KAPPA_CONSISTENCY_TOL: f64 = 1e-6;

/// One vibronic ground level |g_i⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibronicLevel {
    pub index: usize,
    /// Level energy above |g_0⟩ (rad/s).
    pub energy: f64,
    /// Spontaneous branch rate |e⟩ → |g_i⟩ (rad/s).
    pub radiative_rate: f64,
    /// Relaxation |g_i⟩ → |g_{i-1}⟩ (rad/s); zero for the ZPL level.
    pub phonon_relaxation: f64,
}

/// Single excited state over `n + 1` vibronic ground levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmitterModel {
    zpl_frequency: f64,
    levels: Vec<VibronicLevel>,
    pure_dephasing: f64,
    #[serde(skip)]
    total_radiative: f64,
}

impl EmitterModel {
    pub fn new(zpl_frequency: f64, levels: Vec<VibronicLevel>, pure_dephasing: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("emitter needs at least the ZPL level"));
        }
        if !(zpl_frequency > 0.0) {
            return Err(Error::invalid("ZPL frequency must be positive"));
        }
        if !(pure_dephasing >= 0.0) {
            return Err(Error::invalid("pure dephasing rate must be non-negative"));
        }
        for (i, lvl) in levels.iter().enumerate() {
            if lvl.index != i {
                return Err(Error::invalid(format!("level {i} carries index {}", lvl.index)));
            }
            if !(lvl.radiative_rate >= 0.0) {
                return Err(Error::invalid(format!("level {i}: negative radiative rate")));
            }
            if i == 0 {
                if lvl.energy != 0.0 {
                    return Err(Error::invalid("ZPL level energy must be exactly 0"));
                }
                if lvl.phonon_relaxation != 0.0 {
                    return Err(Error::invalid("ZPL level cannot relax further"));
                }
            } else {
                if !(lvl.energy > levels[i - 1].energy) {
                    return Err(Error::invalid(format!("level energies not increasing at {i}")));
                }
                if !(lvl.phonon_relaxation > 0.0) {
                    return Err(Error::invalid(format!("level {i}: phonon relaxation must be > 0")));
                }
            }
        }
        let total_radiative: f64 = levels.iter().map(|l| l.radiative_rate).sum();
        if !(total_radiative > 0.0) {
            return Err(Error::invalid("total radiative rate must be positive"));
        }
        Ok(Self {
            zpl_frequency,
            levels,
            pure_dephasing,
            total_radiative,
        })
    }

    /// Bare two-level emitter: one radiative branch, no sidebands.
    pub fn two_level(zpl_frequency: f64, gamma: f64, pure_dephasing: f64) -> Result<Self> {
        let ground = VibronicLevel {
            index: 0,
            energy: 0.0,
            radiative_rate: gamma,
            phonon_relaxation: 0.0,
        };
        Self::new(zpl_frequency, vec![ground], pure_dephasing)
    }

    pub fn zpl_frequency(&self) -> f64 {
        self.zpl_frequency
    }

    pub fn levels(&self) -> &[VibronicLevel] {
        &self.levels
    }

    /// Number of phonon sidebands `n` (levels minus the ZPL).
    pub fn sidebands(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn pure_dephasing(&self) -> f64 {
        self.pure_dephasing
    }

    /// γ = Σγ_i.
    pub fn total_radiative(&self) -> f64 {
        self.total_radiative
    }

    /// Optical frequency of the |e⟩ → |g_i⟩ line, ω_ZPL − ω_i.
    pub fn transition_frequency(&self, i: usize) -> f64 {
        self.zpl_frequency - self.levels[i].energy
    }

    pub fn transition_wavelength(&self, i: usize) -> f64 {
        angular_to_wavelength(self.transition_frequency(i))
    }

    /// Copy of the emitter with a different pure-dephasing rate.
    pub fn with_pure_dephasing(&self, pure_dephasing: f64) -> Result<Self> {
        Self::new(self.zpl_frequency, self.levels.clone(), pure_dephasing)
    }

    /// Copy with every rate and level energy multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let levels = self
            .levels
            .iter()
            .map(|l| VibronicLevel {
                index: l.index,
                energy: l.energy * factor,
                radiative_rate: l.radiative_rate * factor,
                phonon_relaxation: l.phonon_relaxation * factor,
            })
            .collect();
        Self::new(self.zpl_frequency * factor, levels, self.pure_dephasing * factor)
    }
}

impl<'de> Deserialize<'de> for EmitterModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            zpl_frequency: f64,
            levels: Vec<VibronicLevel>,
            pure_dephasing: f64,
        }
        let raw = Raw::deserialize(d)?;
        EmitterModel::new(raw.zpl_frequency, raw.levels, raw.pure_dephasing).map_err(serde::de::Error::custom)
    }
}

/// One longitudinal resonance of the Fabry-Perot cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// ω_c (rad/s).
    pub resonance: f64,
    /// Energy decay rate κ, the angular FWHM (rad/s).
    pub loss_rate: f64,
    /// FSR-derived effective length l (m).
    pub effective_length: Option<f64>,
    pub finesse: Option<f64>,
    /// Longitudinal order, bookkeeping only.
    pub mode_number: Option<u32>,
}

impl CavityMode {
    /// Mode with a directly specified loss rate.
    pub fn with_loss_rate(resonance: f64, loss_rate: f64) -> Result<Self> {
        if !(loss_rate > 0.0) {
            return Err(Error::invalid("cavity loss rate must be positive"));
        }
        Ok(Self {
            resonance,
            loss_rate,
            effective_length: None,
            finesse: None,
            mode_number: None,
        })
    }

    /// Mode of a cavity with effective length `l` and finesse `F`; κ = 2π·c/(2lF).
    pub fn from_length_finesse(resonance: f64, length: f64, finesse: f64) -> Result<Self> {
        if !(length > 0.0) || !(finesse > 0.0) {
            return Err(Error::invalid("length and finesse must be positive"));
        }
        Ok(Self {
            resonance,
            loss_rate: 2.0 * PI * C / (2.0 * length * finesse),
            effective_length: Some(length),
            finesse: Some(finesse),
            mode_number: None,
        })
    }

    pub fn with_mode_number(mut self, n: u32) -> Self {
        self.mode_number = Some(n);
        self
    }

    /// Same cavity retuned to a new resonance.
    pub fn retuned(&self, resonance: f64) -> Self {
        Self { resonance, ..*self }
    }

    pub fn resonance_wavelength(&self) -> f64 {
        angular_to_wavelength(self.resonance)
    }

    /// FSR (Hz), when the length is known.
    pub fn free_spectral_range(&self) -> Option<f64> {
        self.effective_length.map(|l| C / (2.0 * l))
    }

    /// FWHM linewidth δν = κ/2π (Hz).
    pub fn linewidth_hz(&self) -> f64 {
        self.loss_rate / (2.0 * PI)
    }

    fn consistency_error(&self) -> Option<(f64, f64)> {
        let (l, f) = (self.effective_length?, self.finesse?);
        let expected = 2.0 * PI * C / (2.0 * l * f);
        let rel = (self.loss_rate - expected).abs() / expected;
        Some((expected, rel))
    }
}

/// Emitter, cavity and one coupling rate g_i per vibronic level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSystem {
    pub emitter: EmitterModel,
    pub cavity: CavityMode,
    /// g_i (rad/s), indexed like the emitter levels.
    pub couplings: Vec<f64>,
}

impl CoupledSystem {
    /// Builds and validates a system.
    pub fn new(emitter: EmitterModel, cavity: CavityMode, couplings: Vec<f64>) -> Result<Self> {
        let system = Self {
            emitter,
            cavity,
            couplings,
        };
        system.ensure_valid()?;
        Ok(system)
    }

    /// Couplings scaled from the ZPL value by the dipole strength of each branch,
    /// g_i² ∝ γ_i·λ_i², so that every line sees the same vacuum field.
    pub fn with_dipole_couplings(emitter: EmitterModel, cavity: CavityMode, g_zpl: f64) -> Result<Self> {
        let couplings = dipole_scaled_couplings(&emitter, g_zpl)?;
        Self::new(emitter, cavity, couplings)
    }

    /// δ_i = (ω_ZPL − ω_i) − ω_c for every branch.
    pub fn detunings(&self) -> Vec<f64> {
        (0..self.emitter.levels().len()).map(|i| self.detuning(i)).collect()
    }

    pub fn detuning(&self, i: usize) -> f64 {
        self.emitter.transition_frequency(i) - self.cavity.resonance
    }

    pub fn retuned(&self, resonance: f64) -> Self {
        Self {
            cavity: self.cavity.retuned(resonance),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_system(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = report.iter().map(|d| d.to_string()).collect();
            Err(Error::Invalid(msgs.join("; ")))
        }
    }
}

/// g_i = g_0·√(γ_i λ_i² / (γ_0 λ_0²)).
pub fn dipole_scaled_couplings(emitter: &EmitterModel, g_zpl: f64) -> Result<Vec<f64>> {
    let levels = emitter.levels();
    let ref_strength = levels[0].radiative_rate * emitter.transition_wavelength(0).powi(2);
    if !(ref_strength > 0.0) {
        return Err(Error::invalid("dipole scaling needs a ZPL branch with γ_0 > 0"));
    }
    Ok((0..levels.len())
        .map(|i| {
            let s = levels[i].radiative_rate * emitter.transition_wavelength(i).powi(2);
            g_zpl * (s / ref_strength).sqrt()
        })
        .collect())
}

/// A violated invariant of a [`CoupledSystem`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    CouplingCount {
        expected: usize,
        found: usize,
    },
    NegativeCoupling {
        index: usize,
        value: f64,
    },
    NonPositiveLoss {
        value: f64,
    },
    LossInconsistent {
        loss_rate: f64,
        expected: f64,
        relative_error: f64,
    },
    NonPositiveGeometry {
        field: &'static str,
        value: f64,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::CouplingCount { expected, found } => {
                write!(f, "couplings: expected {expected} entries (one per level), found {found}")
            }
            Diagnostic::NegativeCoupling { index, value } => {
                write!(f, "couplings[{index}] = {value:e} is negative")
            }
            Diagnostic::NonPositiveLoss { value } => write!(f, "cavity loss rate {value:e} must be > 0"),
            Diagnostic::LossInconsistent {
                loss_rate,
                expected,
                relative_error,
            } => write!(
                f,
                "cavity loss rate {loss_rate:e} inconsistent with 2πc/(2lF) = {expected:e} (rel. error {relative_error:.2e})"
            ),
            Diagnostic::NonPositiveGeometry { field, value } => {
                write!(f, "cavity {field} = {value:e} must be > 0")
            }
        }
    }
}

/// Lists every violated invariant; empty when the system is valid.
pub fn validate_system(system: &CoupledSystem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n_levels = system.emitter.levels().len();
    if system.couplings.len() != n_levels {
        out.push(Diagnostic::CouplingCount {
            expected: n_levels,
            found: system.couplings.len(),
        });
    }
    for (index, &g) in system.couplings.iter().enumerate() {
        if !(g >= 0.0) {
            out.push(Diagnostic::NegativeCoupling { index, value: g });
        }
    }
    let cav = &system.cavity;
    if !(cav.loss_rate > 0.0) {
        out.push(Diagnostic::NonPositiveLoss { value: cav.loss_rate });
    }
    if let Some(l) = cav.effective_length.filter(|l| !(*l > 0.0)) {
        out.push(Diagnostic::NonPositiveGeometry {
            field: "effective_length",
            value: l,
        });
    }
    if let Some(f) = cav.finesse.filter(|f| !(*f > 0.0)) {
        out.push(Diagnostic::NonPositiveGeometry {
            field: "finesse",
            value: f,
        });
    }
    if let Some((expected, rel)) = cav.consistency_error() {
        if rel > KAPPA_CONSISTENCY_TOL {
            out.push(Diagnostic::LossInconsistent {
                loss_rate: cav.loss_rate,
                expected,
                relative_error: rel,
            });
        }
    }
    out
}

/// Saturation behaviour of the detected count rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    /// I_∞ (counts/s).
    pub saturation_rate: f64,
    /// P_sat (W).
    pub saturation_power: f64,
}

impl SaturationParams {
    pub fn new(saturation_rate: f64, saturation_power: f64) -> Result<Self> {
        if !(saturation_rate > 0.0) || !(saturation_power > 0.0) {
            return Err(Error::invalid("saturation rate and power must be positive"));
        }
        Ok(Self {
            saturation_rate,
            saturation_power,
        })
    }
}

/// Options for [`build_emitter_from_peaks`].
#[derive(Debug, Clone, Copy)]
pub struct PeakCalibration {
    /// γ (rad/s) distributed over the branches by peak area.
    pub total_gamma: f64,
    /// Explicit γ*; `None` takes it from the ZPL peak width.
    pub gamma_star: Option<f64>,
    pub zpl_index: usize,
    pub phonon_floor: f64,
}

impl PeakCalibration {
    pub fn new(total_gamma: f64, zpl_index: usize) -> Self {
        Self {
            total_gamma,
            gamma_star: None,
            zpl_index,
            phonon_floor: DEFAULT_PHONON_FLOOR,
        }
    }
}

/// Level scheme from a multi-Lorentzian decomposition of the emission spectrum.
///
/// Level energies are the peak offsets below the ZPL, branch rates split the
/// total rate by peak area, and each sideband's phonon relaxation is its
/// linewidth in excess of the pure dephasing carried by the ZPL.
pub fn build_emitter_from_peaks(peaks: &[LorentzianPeak], cal: PeakCalibration) -> Result<EmitterModel> {
    if peaks.is_empty() {
        return Err(Error::invalid("no peaks given"));
    }
    let zpl = peaks
        .get(cal.zpl_index)
        .ok_or_else(|| Error::invalid(format!("zpl_index {} out of range", cal.zpl_index)))?;
    if !(cal.total_gamma > 0.0) {
        return Err(Error::invalid("total_gamma must be positive"));
    }
    for (i, p) in peaks.iter().enumerate() {
        if p.area < 0.0 || !p.area.is_finite() {
            return Err(Error::invalid(format!("peak {i} has negative area")));
        }
        if !(p.fwhm_hz > 0.0) {
            return Err(Error::invalid(format!("peak {i} has non-positive width")));
        }
    }
    let area_sum: f64 = peaks.iter().map(|p| p.area).sum();
    if !(area_sum > 0.0) {
        return Err(Error::invalid("peak areas sum to zero"));
    }

    let gamma_star = cal.gamma_star.unwrap_or_else(|| zpl.linewidth());
    let zpl_omega = 2.0 * PI * zpl.center_hz;

    let mut order: Vec<usize> = (0..peaks.len()).filter(|&i| i != cal.zpl_index).collect();
    order.sort_by(|&a, &b| peaks[b].center_hz.total_cmp(&peaks[a].center_hz));

    let mut levels = Vec::with_capacity(peaks.len());
    levels.push(VibronicLevel {
        index: 0,
        energy: 0.0,
        radiative_rate: cal.total_gamma * zpl.area / area_sum,
        phonon_relaxation: 0.0,
    });
    for (k, &pi) in order.iter().enumerate() {
        let p = &peaks[pi];
        let energy = zpl_omega - 2.0 * PI * p.center_hz;
        if !(energy > 0.0) {
            return Err(Error::invalid(format!(
                "peak {pi} is not red-shifted from the ZPL (distinct centers required)"
            )));
        }
        let width = p.linewidth();
        if width < gamma_star {
            return Err(Error::InconsistentCalibration {
                index: pi,
                fwhm: width,
                gamma_star,
            });
        }
        levels.push(VibronicLevel {
            index: k + 1,
            energy,
            radiative_rate: cal.total_gamma * p.area / area_sum,
            phonon_relaxation: (width - gamma_star).max(cal.phonon_floor),
        });
    }
    // Rescale so the cached total matches total_gamma to round-off.
    let sum: f64 = levels.iter().map(|l| l.radiative_rate).sum();
    for l in &mut levels {
        l.radiative_rate *= cal.total_gamma / sum;
    }
    EmitterModel::new(zpl_omega, levels, gamma_star)
}
