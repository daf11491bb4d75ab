//! Experiment pipelines: tuning spectra, dephasing sweeps, wavelength
//! dependence of the cavity efficiency, count-rate prediction and the
//! projected small-volume source.
//!
//! Grid points are independent and fan out through [`ExecPolicy`]; every
//! table is sorted by its sweep variable before it is returned.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::svg::{Axis, PlotSpec, Series};
use crate::io::{Cell, Table};
use crate::lindblad::{build_liouvillian, emission_efficiency_me, EvolveOptions};
use crate::lm::{minimize, LmConfig, Problem};
use crate::optics::{
    finesse_from_losses, length_for_linewidth, mode_geometry, outcoupling_efficiency, pump_modulation_factor,
    CavityGeometry, MirrorLossBudget, PumpModulation, DEFAULT_MODE_MATCH,
};
use crate::par::ExecPolicy;
use crate::photophysics::ThreeLevelRates;
use crate::rate::emission_efficiencies;
use crate::spectral::{nv_default_peaks, synth_spectrum, LorentzianPeak};
use crate::types::{build_emitter_from_peaks, CavityMode, CoupledSystem, EmitterModel, PeakCalibration};
use crate::units::{angular_to_wavelength, wavelength_to_angular, RateConvention, NM, UM};

/// ZPL coupling of the measured device at l = 3.5 μm (rad/s).
pub const DEVICE_G0: f64 = 1.1e9;
/// Total radiative rate γ (1/s).
pub const DEVICE_GAMMA: f64 = 35e6;
/// Room-temperature pure dephasing (rad/s).
pub const DEVICE_GAMMA_STAR: f64 = 15e12;
/// Loss rate of the unloaded cavity, F = 3500 at l = 3.5 μm (rad/s).
pub const DEVICE_KAPPA: f64 = 77e9;
pub const DEVICE_ROC: f64 = 71.6 * UM;
pub const DEVICE_LENGTH_ZPL: f64 = 3.5 * UM;
pub const DEVICE_LENGTH_PSB: f64 = 3.1 * UM;
pub const ZPL_WAVELENGTH: f64 = 639.0 * NM;
pub const PUMP_WAVELENGTH: f64 = 532.0 * NM;
/// Assumed detector and filter chain efficiency.
pub const DEFAULT_DETECTION_EFFICIENCY: f64 = 0.5;
/// Detection efficiencies reported alongside every count-rate prediction.
pub const DETECTION_SENSITIVITY: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// NV level scheme from the shipped peak table, γ* taken from the ZPL width.
pub fn nv_default_emitter() -> Result<EmitterModel> {
    let peaks = nv_default_peaks(RateConvention::Angular)?;
    build_emitter_from_peaks(&peaks, PeakCalibration::new(DEVICE_GAMMA, 0))
}

/// Wavelength of the spectral maximum of `peaks` on a 0.1 nm grid inside [lo, hi].
pub fn spectral_maximum(peaks: &[LorentzianPeak], lo: f64, hi: f64) -> Result<f64> {
    let n = ((hi - lo) / (0.1 * NM)).round() as usize;
    if n < 2 {
        return Err(Error::invalid("wavelength window too narrow"));
    }
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let s = synth_spectrum(peaks, &grid)?;
    let k = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap_or(0);
    Ok(grid[k])
}

/// ZPL coupling at any length, scaled from a reference device by g ∝ V^{-1/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingScale {
    pub reference_g: f64,
    pub reference_length: f64,
    pub roc: f64,
    /// Wavelength at which both mode volumes are evaluated.
    pub wavelength: f64,
}

impl CouplingScale {
    pub fn device() -> Self {
        Self {
            reference_g: DEVICE_G0,
            reference_length: DEVICE_LENGTH_ZPL,
            roc: DEVICE_ROC,
            wavelength: ZPL_WAVELENGTH,
        }
    }

    pub fn at_length(&self, length: f64) -> Result<f64> {
        self.with_roc(self.roc, length)
    }

    /// Coupling in a resonator with a different mirror curvature.
    pub fn with_roc(&self, roc: f64, length: f64) -> Result<f64> {
        let v_ref = mode_geometry(&CavityGeometry::new(self.roc, self.reference_length, self.wavelength))?.volume;
        let v = mode_geometry(&CavityGeometry::new(roc, length, self.wavelength))?.volume;
        Ok(self.reference_g * (v_ref / v).sqrt())
    }
}

/// Mirrors, losses and coupling geometry shared by the pipelines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CavitySetup {
    pub budget: MirrorLossBudget,
    pub coupling: CouplingScale,
}

impl CavitySetup {
    /// The measured device: shipped loss table, nanodiamond scatter, 71.6 μm mirror.
    pub fn device() -> Self {
        Self {
            budget: MirrorLossBudget::default_with_emitter(),
            coupling: CouplingScale::device(),
        }
    }

    /// Finesse from the loss budget at `wavelength`, ZPL coupling from the
    /// mode volume at `length`, branches dipole-scaled.
    pub fn system(&self, emitter: &EmitterModel, length: f64, wavelength: f64) -> Result<CoupledSystem> {
        let finesse = finesse_from_losses(&self.budget, wavelength)?;
        let cavity = CavityMode::from_length_finesse(wavelength_to_angular(wavelength), length, finesse)?;
        let g0 = self.coupling.at_length(length)?;
        CoupledSystem::with_dipole_couplings(emitter.clone(), cavity, g0)
    }
}

/// The fixed-κ dephasing system: κ = 77 GHz, g₀ = 1.1 GHz, tuned to the ZPL.
pub fn device_dephasing_system(emitter: &EmitterModel) -> Result<CoupledSystem> {
    let cavity = CavityMode::from_length_finesse(emitter.zpl_frequency(), DEVICE_LENGTH_ZPL, 3500.0)?;
    CoupledSystem::with_dipole_couplings(emitter.clone(), cavity, DEVICE_G0)
}

/// Which multiplicative factors enter a tuning-spectrum intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TuningFactors {
    /// Pump standing wave M(l).
    pub modulation: bool,
    /// Fiber outcoupling η(λ).
    pub outcoupling: bool,
    /// Finesse-dependent collection F(λ)/F(λ_ZPL).
    pub finesse_weight: bool,
}

impl Default for TuningFactors {
    fn default() -> Self {
        Self {
            modulation: true,
            outcoupling: true,
            finesse_weight: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningPoint {
    pub mode_number: u32,
    /// l = n·λ/2 (m).
    pub length: f64,
    pub wavelength: f64,
    pub p_tot: f64,
    pub modulation: f64,
    pub outcoupling: f64,
    pub finesse_weight: f64,
    /// Product of P_tot and the enabled factors.
    pub intensity: f64,
    /// Intensity over the table maximum.
    pub normalized: f64,
}

/// Cavity output for each longitudinal mode n and resonance λ, with l = nλ/2.
pub fn tuning_spectrum(
    emitter: &EmitterModel,
    setup: &CavitySetup,
    modes: &[u32],
    wavelengths: &[f64],
    modulation: &PumpModulation,
    factors: TuningFactors,
    policy: ExecPolicy,
) -> Result<Vec<TuningPoint>> {
    if modes.is_empty() || wavelengths.is_empty() {
        return Err(Error::invalid("tuning needs at least one mode and one wavelength"));
    }
    if modes.contains(&0) || wavelengths.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("mode numbers and wavelengths must be positive"));
    }
    let f_ref = finesse_from_losses(&setup.budget, emitter.transition_wavelength(0))?;
    let grid: Vec<(u32, f64)> = modes
        .iter()
        .flat_map(|&n| wavelengths.iter().map(move |&w| (n, w)))
        .collect();
    let mut points = policy.try_map(&grid, |&(n, wl)| -> Result<TuningPoint> {
        let length = n as f64 * wl / 2.0;
        let system = setup.system(emitter, length, wl)?.retuned(wavelength_to_angular(wl));
        let p_tot = emission_efficiencies(&system)?.total_efficiency;
        let m = pump_modulation_factor(length, modulation);
        let eta = outcoupling_efficiency(&setup.budget, wl)?;
        let fw = finesse_from_losses(&setup.budget, wl)? / f_ref;
        let mut intensity = p_tot;
        if factors.modulation {
            intensity *= m;
        }
        if factors.outcoupling {
            intensity *= eta;
        }
        if factors.finesse_weight {
            intensity *= fw;
        }
        Ok(TuningPoint {
            mode_number: n,
            length,
            wavelength: wl,
            p_tot,
            modulation: m,
            outcoupling: eta,
            finesse_weight: fw,
            intensity,
            normalized: 0.0,
        })
    })?;
    let max = points.iter().map(|p| p.intensity).fold(0.0, f64::max);
    for p in &mut points {
        p.normalized = if max > 0.0 { p.intensity / max } else { 0.0 };
    }
    points.sort_by(|a, b| {
        a.mode_number
            .cmp(&b.mode_number)
            .then(a.wavelength.total_cmp(&b.wavelength))
    });
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulationFit {
    pub modulation: PumpModulation,
    /// Common intensity scale.
    pub scale: f64,
    pub residual_norm: f64,
    pub converged: bool,
}

struct ModulationProblem<'a> {
    lengths: &'a [f64],
    base: &'a [f64],
    observed: &'a [f64],
    pump_wavelength: f64,
}

fn modulation_from(p: &[f64], pump_wavelength: f64) -> PumpModulation {
    // Visibility through a logistic map onto (0, 1).
    PumpModulation {
        pump_wavelength,
        visibility: 1.0 / (1.0 + (-p[0]).exp()),
        phase_offset: p[1],
    }
}

impl Problem for ModulationProblem<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn n_residuals(&self) -> usize {
        self.observed.len()
    }

    // p = (logit V, φ₀, ln scale)
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let m = modulation_from(p, self.pump_wavelength);
        let s = p[2].exp();
        for i in 0..out.len() {
            out[i] = s * self.base[i] * pump_modulation_factor(self.lengths[i], &m) - self.observed[i];
        }
    }
}

/// Fits (V, φ₀) and a scale to observed intensities given the unmodulated model.
pub fn fit_pump_modulation(
    lengths: &[f64],
    base: &[f64],
    observed: &[f64],
    initial: &PumpModulation,
    cfg: &LmConfig,
) -> Result<ModulationFit> {
    let n = observed.len();
    if lengths.len() != n || base.len() != n {
        return Err(Error::invalid("lengths, model and observations differ in length"));
    }
    if n < 4 {
        return Err(Error::invalid("modulation fit needs at least four points"));
    }
    let v0 = initial.visibility.clamp(1e-3, 1.0 - 1e-3);
    let s0 = observed.iter().sum::<f64>() / base.iter().sum::<f64>();
    if !(s0 > 0.0) {
        return Err(Error::invalid("observed intensities must be positive on average"));
    }
    let problem = ModulationProblem {
        lengths,
        base,
        observed,
        pump_wavelength: initial.pump_wavelength,
    };
    let rep = minimize(&problem, &[(v0 / (1.0 - v0)).ln(), initial.phase_offset, s0.ln()], cfg);
    let mut m = modulation_from(&rep.params, initial.pump_wavelength);
    m.phase_offset = m.phase_offset.rem_euclid(2.0 * PI);
    Ok(ModulationFit {
        modulation: m,
        scale: rep.params[2].exp(),
        residual_norm: rep.residual_norm,
        converged: rep.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LindbladCheck {
    pub p_tot: f64,
    pub lifetime: Option<f64>,
    pub non_exponential: bool,
    /// |P_ME/P_rate − 1|.
    pub p_tot_deviation: f64,
    pub lifetime_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gamma_star: f64,
    /// τ_cav = 1/(γ + ΣR_i) (s).
    pub lifetime: f64,
    /// τ_free/τ_cav.
    pub lifetime_ratio: f64,
    /// Total cavity efficiency with the cavity on the ZPL.
    pub p_tot: f64,
    /// ZPL branch alone.
    pub p_zpl: f64,
    pub lindblad: Option<LindbladCheck>,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Indices into the γ* grid that also get a master-equation run.
    pub lindblad_indices: Vec<usize>,
    pub fock_cutoff: usize,
    pub evolve: EvolveOptions,
    pub policy: ExecPolicy,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            lindblad_indices: Vec::new(),
            fock_cutoff: 1,
            evolve: EvolveOptions::default(),
            policy: ExecPolicy::default(),
        }
    }
}

/// `count` indices spread evenly over a grid of length `len`, ends included.
pub fn spread_indices(count: usize, len: usize) -> Vec<usize> {
    match (count, len) {
        (0, _) | (_, 0) => Vec::new(),
        (1, _) => vec![len - 1],
        _ => {
            let mut v: Vec<usize> = (0..count)
                .map(|k| ((k as f64) * (len - 1) as f64 / (count - 1) as f64).round() as usize)
                .collect();
            v.dedup();
            v
        }
    }
}

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Lifetime and efficiency against γ* at fixed κ, cavity on the ZPL.
pub fn dephasing_sweep(system: &CoupledSystem, gamma_stars: &[f64], opts: &SweepOptions) -> Result<Vec<SweepPoint>> {
    if gamma_stars.is_empty() {
        return Err(Error::invalid("empty γ* grid"));
    }
    if gamma_stars.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(Error::invalid("γ* values must be finite and non-negative"));
    }
    let (lo, hi) = gamma_stars
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    if lo > 1e9 || hi < 1e14 {
        log::warn!("γ* grid [{lo:.2e}, {hi:.2e}] does not span 1e9 to 1e14 rad/s");
    }
    if let Some(&bad) = opts.lindblad_indices.iter().find(|&&i| i >= gamma_stars.len()) {
        return Err(Error::invalid(format!("lindblad index {bad} outside the γ* grid")));
    }
    let zpl = system.retuned(system.emitter.transition_frequency(0));
    let jobs: Vec<(f64, bool)> = gamma_stars
        .iter()
        .enumerate()
        .map(|(i, &g)| (g, opts.lindblad_indices.contains(&i)))
        .collect();
    let mut points = opts.policy.try_map(&jobs, |&(gs, check)| -> Result<SweepPoint> {
        let s = CoupledSystem {
            emitter: zpl.emitter.with_pure_dephasing(gs)?,
            ..zpl.clone()
        };
        let r = emission_efficiencies(&s)?;
        let lindblad = if check {
            let l = build_liouvillian(&s, opts.fock_cutoff)?;
            let me = emission_efficiency_me(&l, opts.evolve)?;
            let lifetime = me.lifetime.map(|f| f.lifetime);
            Some(LindbladCheck {
                p_tot: me.total_efficiency,
                lifetime,
                non_exponential: me.lifetime.is_none_or(|f| f.non_exponential),
                p_tot_deviation: (me.total_efficiency / r.total_efficiency - 1.0).abs(),
                lifetime_deviation: lifetime.map(|t| (t / r.modified_lifetime - 1.0).abs()),
            })
        } else {
            None
        };
        Ok(SweepPoint {
            gamma_star: gs,
            lifetime: r.modified_lifetime,
            lifetime_ratio: r.lifetime_ratio(),
            p_tot: r.total_efficiency,
            p_zpl: r.efficiencies[0],
            lindblad,
        })
    })?;
    points.sort_by(|a, b| a.gamma_star.total_cmp(&b.gamma_star));
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WavelengthPoint {
    pub wavelength: f64,
    pub p_tot: f64,
}

/// P_tot with the cavity swept across `wavelengths` at fixed κ and couplings.
pub fn efficiency_vs_wavelength(
    system: &CoupledSystem,
    gamma_star: f64,
    wavelengths: &[f64],
    policy: ExecPolicy,
) -> Result<Vec<WavelengthPoint>> {
    let base = CoupledSystem {
        emitter: system.emitter.with_pure_dephasing(gamma_star)?,
        ..system.clone()
    };
    base.ensure_valid()?;
    let mut out = policy.try_map(wavelengths, |&wl| -> Result<WavelengthPoint> {
        if !(wl > 0.0) {
            return Err(Error::invalid("wavelengths must be positive"));
        }
        let r = emission_efficiencies(&base.retuned(wavelength_to_angular(wl)))?;
        Ok(WavelengthPoint {
            wavelength: wl,
            p_tot: r.total_efficiency,
        })
    })?;
    out.sort_by(|a, b| a.wavelength.total_cmp(&b.wavelength));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountRateInputs {
    /// Three-level rates fixing the saturated excited population.
    pub rates: ThreeLevelRates,
    pub detection_efficiency: f64,
    /// Pump standing-wave factor M at the operating length; 1 leaves it out.
    pub pump_factor: f64,
}

impl Default for CountRateInputs {
    fn default() -> Self {
        Self {
            rates: ThreeLevelRates::nv_default(),
            detection_efficiency: DEFAULT_DETECTION_EFFICIENCY,
            pump_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRatePrediction {
    /// Detected counts per second at saturation.
    pub rate: f64,
    pub wavelength: f64,
    pub gamma: f64,
    pub saturated_excited_population: f64,
    pub p_tot: f64,
    pub outcoupling: f64,
    pub detection_efficiency: f64,
    pub pump_factor: f64,
    /// (detection efficiency, rate) over 0.1..1.0.
    pub sensitivity: Vec<(f64, f64)>,
}

/// rate = γ·p_e^sat·P_tot·η(λ_c)·η_det·M at the system's current tuning.
pub fn predict_count_rate(
    system: &CoupledSystem,
    budget: &MirrorLossBudget,
    inputs: &CountRateInputs,
) -> Result<CountRatePrediction> {
    let det = inputs.detection_efficiency;
    if !(det > 0.0 && det <= 1.0) {
        return Err(Error::invalid("detection efficiency must lie in (0, 1]"));
    }
    if !(inputs.pump_factor >= 0.0) {
        return Err(Error::invalid("pump factor must be non-negative"));
    }
    inputs.rates.check()?;
    let r = emission_efficiencies(system)?;
    let wl = angular_to_wavelength(system.cavity.resonance);
    let eta = outcoupling_efficiency(budget, wl)?;
    let gamma = system.emitter.total_radiative();
    let pe = inputs.rates.saturated_excited_population();
    let per_unit_detection = gamma * pe * r.total_efficiency * eta * inputs.pump_factor;
    Ok(CountRatePrediction {
        rate: per_unit_detection * det,
        wavelength: wl,
        gamma,
        saturated_excited_population: pe,
        p_tot: r.total_efficiency,
        outcoupling: eta,
        detection_efficiency: det,
        pump_factor: inputs.pump_factor,
        sensitivity: DETECTION_SENSITIVITY
            .iter()
            .map(|&d| (d, per_unit_detection * d))
            .collect(),
    })
}

/// A measured operating point of the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub name: &'static str,
    pub length: f64,
    pub wavelength: f64,
    /// Saturated count rate measured in the fundamental mode (1/s).
    pub measured_rate: f64,
    /// Earlier model prediction for the same point (1/s).
    pub reference_prediction: f64,
    /// Cavity linewidth quoted for the point (Hz).
    pub linewidth_hz: f64,
}

/// The ZPL point at 3.5 μm and the sideband-maximum point at 3.1 μm.
pub fn reference_operating_points(emitter_peaks: &[LorentzianPeak]) -> Result<[OperatingPoint; 2]> {
    let psb = spectral_maximum(emitter_peaks, 645.0 * NM, 760.0 * NM)?;
    Ok([
        OperatingPoint {
            name: "zpl",
            length: DEVICE_LENGTH_ZPL,
            wavelength: ZPL_WAVELENGTH,
            measured_rate: 770.0,
            reference_prediction: 530.0,
            linewidth_hz: 45.6e9,
        },
        OperatingPoint {
            name: "psb",
            length: DEVICE_LENGTH_PSB,
            wavelength: psb,
            measured_rate: 3700.0,
            reference_prediction: 3200.0,
            linewidth_hz: 90e9,
        },
    ])
}

/// Count rate a passive spectral and spatial filter would pass:
/// density (photons/(s·GHz)) × bandwidth × spatial factor.
pub fn filtering_baseline(density_per_ghz: f64, bandwidth_hz: f64, spatial_factor: f64) -> Result<f64> {
    if !(density_per_ghz >= 0.0 && bandwidth_hz >= 0.0 && spatial_factor >= 0.0) {
        return Err(Error::invalid("filter inputs must be non-negative"));
    }
    Ok(density_per_ghz * bandwidth_hz / 1e9 * spatial_factor)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionInputs {
    pub finesse: f64,
    pub linewidth_hz: f64,
    pub roc: f64,
    pub wavelength: f64,
    pub coupling: CouplingScale,
    /// Share of the round-trip loss leaving through the fiber mirror.
    pub fiber_fraction: f64,
    pub mode_match: f64,
    pub count_inputs: CountRateInputs,
    pub target_rate: f64,
}

impl ProjectionInputs {
    /// F = 10⁴, 10 GHz, 5 μm mirror; fiber share as in the shipped coating table
    /// without scatter.
    pub fn device() -> Self {
        let budget = MirrorLossBudget::default_with_emitter().with_scatter(0.0);
        let l = budget.at(ZPL_WAVELENGTH);
        Self {
            finesse: 1e4,
            linewidth_hz: 10e9,
            roc: 5.0 * UM,
            wavelength: ZPL_WAVELENGTH,
            coupling: CouplingScale::device(),
            fiber_fraction: l.t_fiber / l.total(),
            mode_match: DEFAULT_MODE_MATCH,
            count_inputs: CountRateInputs::default(),
            target_rate: 1e5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionReport {
    /// Length giving the requested linewidth at the requested finesse (m).
    pub length: f64,
    pub mode_volume: f64,
    pub waist: f64,
    /// Shortest length considered, 2λ (m).
    pub minimal_length: f64,
    pub minimal_volume: f64,
    pub g_zpl: f64,
    pub kappa: f64,
    pub p_tot: f64,
    pub outcoupling: f64,
    pub count_rate: f64,
    pub target_rate: f64,
    pub meets_target: bool,
    /// (detection efficiency, rate).
    pub detection_sensitivity: Vec<(f64, f64)>,
    /// (mode match, rate).
    pub mode_match_sensitivity: Vec<(f64, f64)>,
}

/// Small-mirror, high-finesse source at room temperature.
pub fn projected_source(emitter: &EmitterModel, inputs: &ProjectionInputs) -> Result<ProjectionReport> {
    if !(inputs.finesse > 0.0 && inputs.linewidth_hz > 0.0) {
        return Err(Error::invalid("finesse and linewidth must be positive"));
    }
    if !(0.0..=1.0).contains(&inputs.fiber_fraction) || !(0.0..=1.0).contains(&inputs.mode_match) {
        return Err(Error::invalid("fiber fraction and mode match must lie in [0, 1]"));
    }
    let length = length_for_linewidth(inputs.finesse, inputs.linewidth_hz);
    let geom = mode_geometry(&CavityGeometry::new(inputs.roc, length, inputs.wavelength))?;
    let minimal_length = 2.0 * inputs.wavelength;
    let minimal = mode_geometry(&CavityGeometry::new(inputs.roc, minimal_length, inputs.wavelength))?;
    let g = inputs.coupling.with_roc(inputs.roc, length)?;
    let cavity = CavityMode::from_length_finesse(wavelength_to_angular(inputs.wavelength), length, inputs.finesse)?;
    let system = CoupledSystem::with_dipole_couplings(emitter.clone(), cavity, g)?;
    let r = emission_efficiencies(&system)?;
    let ci = &inputs.count_inputs;
    if !(ci.detection_efficiency > 0.0 && ci.detection_efficiency <= 1.0) {
        return Err(Error::invalid("detection efficiency must lie in (0, 1]"));
    }
    let base =
        emitter.total_radiative() * ci.rates.saturated_excited_population() * r.total_efficiency * ci.pump_factor;
    let eta = inputs.fiber_fraction * inputs.mode_match;
    let rate = base * eta * ci.detection_efficiency;
    Ok(ProjectionReport {
        length,
        mode_volume: geom.volume,
        waist: geom.waist,
        minimal_length,
        minimal_volume: minimal.volume,
        g_zpl: g,
        kappa: system.cavity.loss_rate,
        p_tot: r.total_efficiency,
        outcoupling: eta,
        count_rate: rate,
        target_rate: inputs.target_rate,
        meets_target: rate > inputs.target_rate,
        detection_sensitivity: DETECTION_SENSITIVITY.iter().map(|&d| (d, base * eta * d)).collect(),
        mode_match_sensitivity: DETECTION_SENSITIVITY
            .iter()
            .map(|&m| (m, base * inputs.fiber_fraction * m * ci.detection_efficiency))
            .collect(),
    })
}

pub fn tuning_table(points: &[TuningPoint]) -> Table {
    let mut t = Table::new([
        "mode_number",
        "length_um",
        "wavelength_nm",
        "p_tot",
        "modulation",
        "outcoupling",
        "finesse_weight",
        "intensity",
        "normalized",
    ]);
    for p in points {
        t.push(vec![
            p.mode_number.into(),
            (p.length / UM).into(),
            (p.wavelength / NM).into(),
            p.p_tot.into(),
            p.modulation.into(),
            p.outcoupling.into(),
            p.finesse_weight.into(),
            p.intensity.into(),
            p.normalized.into(),
        ]);
    }
    t
}

pub fn tuning_plot(points: &[TuningPoint]) -> PlotSpec {
    let mut modes: Vec<u32> = points.iter().map(|p| p.mode_number).collect();
    modes.dedup();
    PlotSpec {
        title: "Tuning spectrum".into(),
        x: Axis::linear("wavelength (nm)"),
        y: Axis::linear("normalized count rate"),
        y2: None,
        series: modes
            .iter()
            .map(|&n| {
                Series::line(
                    &format!("n = {n}"),
                    points
                        .iter()
                        .filter(|p| p.mode_number == n)
                        .map(|p| (p.wavelength / NM, p.normalized))
                        .collect(),
                )
            })
            .collect(),
    }
}

fn opt_cell(v: Option<f64>) -> Cell {
    Cell::Float(v.unwrap_or(f64::NAN))
}

pub fn sweep_table(points: &[SweepPoint]) -> Table {
    let mut t = Table::new([
        "gamma_star",
        "lifetime_ns",
        "lifetime_ratio",
        "p_tot",
        "p_zpl",
        "me_p_tot",
        "me_lifetime_ns",
        "me_p_tot_deviation",
    ]);
    for p in points {
        let me = p.lindblad.as_ref();
        t.push(vec![
            p.gamma_star.into(),
            (p.lifetime * 1e9).into(),
            p.lifetime_ratio.into(),
            p.p_tot.into(),
            p.p_zpl.into(),
            opt_cell(me.map(|c| c.p_tot)),
            opt_cell(me.and_then(|c| c.lifetime).map(|t| t * 1e9)),
            opt_cell(me.map(|c| c.p_tot_deviation)),
        ]);
    }
    t
}

/// Lifetime on the left axis, efficiency on the right, both against γ*.
pub fn sweep_plot(points: &[SweepPoint]) -> PlotSpec {
    let me: Vec<&SweepPoint> = points.iter().filter(|p| p.lindblad.is_some()).collect();
    let mut series = vec![
        Series::line(
            "lifetime (rate model)",
            points.iter().map(|p| (p.gamma_star, p.lifetime * 1e9)).collect(),
        ),
        Series::line(
            "P_tot (rate model)",
            points.iter().map(|p| (p.gamma_star, p.p_tot)).collect(),
        )
        .on_secondary(),
    ];
    if !me.is_empty() {
        series.push(Series::markers(
            "lifetime (master equation)",
            me.iter()
                .filter_map(|p| p.lindblad.and_then(|c| c.lifetime).map(|t| (p.gamma_star, t * 1e9)))
                .collect(),
        ));
        series.push(
            Series::markers(
                "P_tot (master equation)",
                me.iter()
                    .filter_map(|p| p.lindblad.map(|c| (p.gamma_star, c.p_tot)))
                    .collect(),
            )
            .on_secondary(),
        );
    }
    PlotSpec {
        title: "Dephasing sweep".into(),
        x: Axis::log("pure dephasing γ* (rad/s)"),
        y: Axis::linear("lifetime (ns)"),
        y2: Some(Axis::linear("P_tot")),
        series,
    }
}

pub fn wavelength_table(points: &[WavelengthPoint]) -> Table {
    let mut t = Table::new(["wavelength_nm", "p_tot"]);
    for p in points {
        t.push(vec![(p.wavelength / NM).into(), p.p_tot.into()]);
    }
    t
}

pub fn wavelength_plot(curves: &[(String, Vec<WavelengthPoint>)]) -> PlotSpec {
    PlotSpec {
        title: "Cavity efficiency against wavelength".into(),
        x: Axis::linear("wavelength (nm)"),
        y: Axis::log("P_tot"),
        y2: None,
        series: curves
            .iter()
            .map(|(name, pts)| Series::line(name, pts.iter().map(|p| (p.wavelength / NM, p.p_tot)).collect()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::PumpModulation;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn coupling_scale_is_identity_at_reference() {
        let c = CouplingScale::device();
        assert!((c.at_length(DEVICE_LENGTH_ZPL).unwrap() - DEVICE_G0).abs() < 1e-3);
        assert!(c.at_length(DEVICE_LENGTH_PSB).unwrap() > DEVICE_G0);
    }

    #[test]
    fn unmodulated_tuning_follows_efficiency() {
        let em = nv_default_emitter().unwrap();
        let setup = CavitySetup::device();
        let off = TuningFactors {
            modulation: false,
            outcoupling: false,
            finesse_weight: false,
        };
        let pts = tuning_spectrum(
            &em,
            &setup,
            &[9, 10],
            &grid(640e-9, 700e-9, 7),
            &PumpModulation::off(),
            off,
            ExecPolicy::Sequential,
        )
        .unwrap();
        for p in &pts {
            assert_eq!(p.intensity, p.p_tot);
            assert_eq!(p.modulation, 1.0);
            assert!((p.length - p.mode_number as f64 * p.wavelength / 2.0).abs() < 1e-18);
        }
        assert!(pts
            .windows(2)
            .all(|w| (w[0].mode_number, w[0].wavelength) < (w[1].mode_number, w[1].wavelength)));
    }

    #[test]
    fn tuning_factors_multiply() {
        let em = nv_default_emitter().unwrap();
        let setup = CavitySetup::device();
        let m = PumpModulation::new(PUMP_WAVELENGTH, 0.7, 0.3).unwrap();
        let wl = grid(640e-9, 720e-9, 9);
        let all = TuningFactors {
            modulation: true,
            outcoupling: true,
            finesse_weight: true,
        };
        let full = tuning_spectrum(&em, &setup, &[12], &wl, &m, all, ExecPolicy::Sequential).unwrap();
        for (flag, pick) in [
            (
                TuningFactors {
                    modulation: false,
                    ..all
                },
                0,
            ),
            (
                TuningFactors {
                    outcoupling: false,
                    ..all
                },
                1,
            ),
            (
                TuningFactors {
                    finesse_weight: false,
                    ..all
                },
                2,
            ),
        ] {
            let part = tuning_spectrum(&em, &setup, &[12], &wl, &m, flag, ExecPolicy::Sequential).unwrap();
            for (a, b) in full.iter().zip(&part) {
                let factor = [a.modulation, a.outcoupling, a.finesse_weight][pick];
                assert!((a.intensity / b.intensity / factor - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn modulation_fit_round_trip() {
        let truth = PumpModulation::new(PUMP_WAVELENGTH, 0.6, 1.2).unwrap();
        let lengths: Vec<f64> = (0..40).map(|i| 2.9e-6 + i as f64 * 0.037e-6).collect();
        let base: Vec<f64> = lengths.iter().map(|l| 1.0 + 0.2 * (l * 1e6).sin()).collect();
        let obs: Vec<f64> = lengths
            .iter()
            .zip(&base)
            .map(|(l, b)| 3.0 * b * pump_modulation_factor(*l, &truth))
            .collect();
        let init = PumpModulation::new(PUMP_WAVELENGTH, 0.3, 0.8).unwrap();
        let fit = fit_pump_modulation(&lengths, &base, &obs, &init, &LmConfig::default()).unwrap();
        assert!((fit.modulation.visibility - 0.6).abs() < 1e-7);
        assert!((fit.modulation.phase_offset - 1.2).abs() < 1e-7);
        assert!((fit.scale - 3.0).abs() < 1e-6);
    }

    #[test]
    fn sweep_is_sorted_and_monotone() {
        let em = nv_default_emitter().unwrap();
        let sys = device_dephasing_system(&em).unwrap();
        let mut gs = log_grid(1e9, 1e14, 21);
        gs.reverse();
        let pts = dephasing_sweep(&sys, &gs, &SweepOptions::default()).unwrap();
        for w in pts.windows(2) {
            assert!(w[0].gamma_star < w[1].gamma_star);
            assert!(w[1].p_tot <= w[0].p_tot);
            assert!(w[1].lifetime >= w[0].lifetime);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_efficiency() {
        let em = nv_default_emitter().unwrap();
        let mut sys = device_dephasing_system(&em).unwrap();
        sys.couplings.iter_mut().for_each(|g| *g = 0.0);
        let pts = efficiency_vs_wavelength(&sys, 15e12, &grid(620e-9, 760e-9, 30), ExecPolicy::default()).unwrap();
        assert!(pts.iter().all(|p| p.p_tot == 0.0));
    }

    #[test]
    fn count_rate_is_product() {
        let em = nv_default_emitter().unwrap();
        let setup = CavitySetup::device();
        let sys = setup.system(&em, DEVICE_LENGTH_ZPL, ZPL_WAVELENGTH).unwrap();
        let p = predict_count_rate(&sys, &setup.budget, &CountRateInputs::default()).unwrap();
        let expect = p.gamma * p.saturated_excited_population * p.p_tot * p.outcoupling * 0.5;
        assert!((p.rate / expect - 1.0).abs() < 1e-12);
        assert_eq!(p.sensitivity.len(), 10);
        let mut zero = sys.clone();
        zero.couplings.iter_mut().for_each(|g| *g = 0.0);
        assert_eq!(
            predict_count_rate(&zero, &setup.budget, &CountRateInputs::default())
                .unwrap()
                .rate,
            0.0
        );
        let bad = CountRateInputs {
            detection_efficiency: 0.0,
            ..Default::default()
        };
        assert!(predict_count_rate(&sys, &setup.budget, &bad).is_err());
    }

    #[test]
    fn filtering_arithmetic() {
        assert!((filtering_baseline(4.5, 45.6e9, 1.0).unwrap() - 205.2).abs() < 1e-9);
        assert_eq!(filtering_baseline(4.5, 0.0, 1.0).unwrap(), 0.0);
        let implied = 2.0 / filtering_baseline(4.5, 45.6e9, 1.0).unwrap();
        assert!(implied > 1.0 / 1000.0 && implied < 1.0 / 50.0);
    }

    #[test]
    fn projection_geometry() {
        let em = nv_default_emitter().unwrap();
        let rep = projected_source(&em, &ProjectionInputs::device()).unwrap();
        assert!((rep.length - 1.5e-6).abs() < 0.01e-6);
        assert!(rep.minimal_volume > 0.3e-18 && rep.minimal_volume < 0.9e-18);
        assert_eq!(rep.meets_target, rep.count_rate > 1e5);
    }

    #[test]
    fn spread_indices_cover_ends() {
        assert_eq!(spread_indices(5, 21), vec![0, 5, 10, 15, 20]);
        assert_eq!(spread_indices(1, 4), vec![3]);
        assert!(spread_indices(0, 4).is_empty());
    }
}
