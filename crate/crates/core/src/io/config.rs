//! Run configuration: one TOML file fully determines a run.
//!
//! Rates quoted in Hz (`coupling`, `loss_rate`, `total_gamma`, `gamma_star`,
//! the γ* sweep bounds) are read through the file's `units` convention.
//! Three-level rates are population rates in 1/s and are taken as is.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{log_grid, CavitySetup, CountRateInputs, CouplingScale, ProjectionInputs, TuningFactors};
use crate::optics::{MirrorLossBudget, PumpModulation, DEFAULT_MODE_MATCH, ND_SCATTER_LOSS};
use crate::photophysics::{G2Params, ThreeLevelRates};
use crate::spectral::{nv_default_peaks, LorentzianPeak};
use crate::types::{build_emitter_from_peaks, CavityMode, CoupledSystem, EmitterModel, PeakCalibration, VibronicLevel};
use crate::units::{wavelength_to_angular, RateConvention, NM, UM};

/// Built-in table names accepted in place of a file path.
pub const BUILTIN_PEAKS: &str = "nv-default";
pub const BUILTIN_LOSSES: &str = "default";

/// Names accepted in `pipelines`.
pub const PIPELINES: [&str; 8] = [
    "fit-spectrum",
    "fit-g2",
    "rate",
    "lindblad",
    "tuning",
    "sweep-dephasing",
    "predict-rate",
    "project",
];

const REQUIRED: [&str; 5] = [
    "emitter",
    "emitter.total_gamma",
    "cavity",
    "cavity.coupling",
    "cavity.wavelength_nm",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: RateConvention,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Pipelines run when the command line names none.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pipelines: Vec<String>,
    pub emitter: EmitterSection,
    pub cavity: CavitySection,
    #[serde(default)]
    pub pump: PumpSection,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub lindblad: LindbladSection,
    #[serde(default)]
    pub projection: ProjectionSection,
    #[serde(default)]
    pub g2: G2Section,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineLevel {
    /// Offset below the ZPL ground level, as a quoted rate.
    pub energy: f64,
    pub radiative_rate: f64,
    #[serde(default)]
    pub phonon_relaxation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSection {
    /// `nv-default` or a CSV path; ignored when `levels` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_table: Option<String>,
    pub total_gamma: f64,
    /// Defaults to the ZPL peak width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zpl_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<InlineLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    /// ZPL coupling g₀ at `reference_length_um`.
    pub coupling: f64,
    pub wavelength_nm: f64,
    /// Fixed κ; otherwise from length and finesse, or from the loss table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_rate: Option<f64>,
    #[serde(default = "default_length")]
    pub length_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finesse: Option<f64>,
    #[serde(default = "default_roc")]
    pub roc_um: f64,
    #[serde(default = "default_length")]
    pub reference_length_um: f64,
    #[serde(default = "default_losses")]
    pub loss_table: String,
    #[serde(default = "default_scatter")]
    pub scatter_loss: f64,
    #[serde(default = "default_mode_match")]
    pub mode_match: f64,
}

fn default_length() -> f64 {
    3.5
}
fn default_roc() -> f64 {
    71.6
}
fn default_losses() -> String {
    BUILTIN_LOSSES.into()
}
fn default_scatter() -> f64 {
    ND_SCATTER_LOSS
}
fn default_mode_match() -> f64 {
    DEFAULT_MODE_MATCH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSection {
    pub wavelength_nm: f64,
    pub visibility: f64,
    pub phase: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        Self {
            wavelength_nm: 532.0,
            visibility: 0.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSection {
    pub k21: f64,
    pub k23: f64,
    pub k31: f64,
    /// Saturation power fixing σ (mW).
    pub saturation_power_mw: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        let r = ThreeLevelRates::nv_default();
        Self {
            k21: r.k21,
            k23: r.k23,
            k31: r.k31,
            saturation_power_mw: crate::photophysics::NV_SATURATION_POWER * 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub efficiency: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            efficiency: crate::experiments::DEFAULT_DETECTION_EFFICIENCY,
        }
    }
}

/// Evenly spaced grid, both ends included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl LinearGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSection {
    pub modes: Vec<u32>,
    pub wavelength_nm: LinearGrid,
    pub modulation: bool,
    pub outcoupling: bool,
    pub finesse_weight: bool,
}

impl Default for TuningSection {
    fn default() -> Self {
        let f = TuningFactors::default();
        Self {
            modes: (9..=17).collect(),
            wavelength_nm: LinearGrid {
                start: 640.0,
                stop: 740.0,
                points: 101,
            },
            modulation: f.modulation,
            outcoupling: f.outcoupling,
            finesse_weight: f.finesse_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub gamma_star_min: f64,
    pub gamma_star_max: f64,
    pub points: usize,
    pub lindblad_points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gamma_star_min: 1e9,
            gamma_star_max: 1e14,
            points: 41,
            lindblad_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LindbladSection {
    pub fock_cutoff: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for LindbladSection {
    fn default() -> Self {
        Self {
            fock_cutoff: 1,
            rtol: 1e-9,
            atol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSection {
    pub finesse: f64,
    pub linewidth_ghz: f64,
    pub roc_um: f64,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        Self {
            finesse: 1e4,
            linewidth_ghz: 10.0,
            roc_um: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Section {
    pub amplitude: f64,
    pub tau1_ns: f64,
    pub tau2_ns: f64,
}

impl Default for G2Section {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            tau1_ns: 10.0,
            tau2_ns: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub peaks: usize,
    pub fit_offset: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            peaks: 8,
            fit_offset: true,
        }
    }
}

fn cfg_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

fn missing_keys(table: &toml::Table) -> Vec<&'static str> {
    REQUIRED
        .iter()
        .filter(|key| {
            let mut node: Option<&toml::Value> = None;
            for (i, part) in key.split('.').enumerate() {
                node = if i == 0 {
                    table.get(part)
                } else {
                    node.and_then(|n| n.as_table()).and_then(|t| t.get(part))
                };
            }
            node.is_none()
        })
        .copied()
        .collect()
}

/// Parses and validates a config file; relative paths resolve against its directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &path.display().to_string(), &base)
}

pub fn parse_config_str(text: &str, name: &str, base_dir: &Path) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| cfg_err(name, e.to_string()))?;
    let missing = missing_keys(&table);
    if !missing.is_empty() {
        return Err(cfg_err(name, format!("missing required keys: {}", missing.join(", "))));
    }
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(name, e.to_string()))?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.validate()
        .map_err(|(key, msg)| cfg_err(name, format!("{key}: {msg}")))?;
    Ok(cfg)
}

type Invalid = (&'static str, String);

fn positive(key: &'static str, v: f64) -> std::result::Result<(), Invalid> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((key, format!("must be positive, got {v}")))
    }
}

fn fraction(key: &'static str, v: f64, open_low: bool) -> std::result::Result<(), Invalid> {
    let ok = if open_low {
        v > 0.0 && v <= 1.0
    } else {
        (0.0..=1.0).contains(&v)
    };
    if ok {
        Ok(())
    } else {
        Err((
            key,
            format!("must lie in {}0, 1], got {v}", if open_low { "(" } else { "[" }),
        ))
    }
}

impl RunConfig {
    fn validate(&self) -> std::result::Result<(), Invalid> {
        for p in &self.pipelines {
            if !PIPELINES.contains(&p.as_str()) {
                return Err(("pipelines", format!("unknown pipeline {p:?}")));
            }
        }
        let e = &self.emitter;
        positive("emitter.total_gamma", e.total_gamma)?;
        if let Some(g) = e.gamma_star {
            if !(g >= 0.0) {
                return Err(("emitter.gamma_star", format!("must be non-negative, got {g}")));
            }
        }
        if e.levels.is_empty() {
            let table = e.peak_table.as_deref().unwrap_or(BUILTIN_PEAKS);
            if table != BUILTIN_PEAKS && !self.resolve(table).is_file() {
                return Err(("emitter.peak_table", format!("file {table:?} not found")));
            }
        } else {
            positive("emitter.zpl_nm", e.zpl_nm.unwrap_or(f64::NAN))?;
        }
        let c = &self.cavity;
        if !(c.coupling >= 0.0) {
            return Err(("cavity.coupling", format!("must be non-negative, got {}", c.coupling)));
        }
        positive("cavity.wavelength_nm", c.wavelength_nm)?;
        positive("cavity.length_um", c.length_um)?;
        positive("cavity.roc_um", c.roc_um)?;
        positive("cavity.reference_length_um", c.reference_length_um)?;
        if let Some(f) = c.finesse {
            positive("cavity.finesse", f)?;
        }
        if let Some(k) = c.loss_rate {
            positive("cavity.loss_rate", k)?;
        }
        if !(0.0..1.0).contains(&c.scatter_loss) {
            return Err((
                "cavity.scatter_loss",
                format!("must lie in [0, 1), got {}", c.scatter_loss),
            ));
        }
        fraction("cavity.mode_match", c.mode_match, false)?;
        if c.loss_table != BUILTIN_LOSSES && !self.resolve(&c.loss_table).is_file() {
            return Err(("cavity.loss_table", format!("file {:?} not found", c.loss_table)));
        }
        positive("pump.wavelength_nm", self.pump.wavelength_nm)?;
        fraction("pump.visibility", self.pump.visibility, false)?;
        positive("rates.k21", self.rates.k21)?;
        if !(self.rates.k23 >= 0.0 && self.rates.k31 >= 0.0) {
            return Err(("rates", "k23 and k31 must be non-negative".into()));
        }
        positive("rates.saturation_power_mw", self.rates.saturation_power_mw)?;
        fraction("detection.efficiency", self.detection.efficiency, true)?;
        if self.tuning.modes.is_empty() || self.tuning.modes.contains(&0) {
            return Err((
                "tuning.modes",
                "must be a non-empty list of positive mode numbers".into(),
            ));
        }
        if self.tuning.wavelength_nm.points == 0 {
            return Err(("tuning.wavelength_nm.points", "grid is empty".into()));
        }
        positive("tuning.wavelength_nm.start", self.tuning.wavelength_nm.start)?;
        positive("tuning.wavelength_nm.stop", self.tuning.wavelength_nm.stop)?;
        positive("sweep.gamma_star_min", self.sweep.gamma_star_min)?;
        positive("sweep.gamma_star_max", self.sweep.gamma_star_max)?;
        if self.sweep.points == 0 {
            return Err(("sweep.points", "grid is empty".into()));
        }
        if self.sweep.lindblad_points > self.sweep.points {
            return Err(("sweep.lindblad_points", "exceeds sweep.points".into()));
        }
        positive("lindblad.rtol", self.lindblad.rtol)?;
        positive("lindblad.atol", self.lindblad.atol)?;
        positive("projection.finesse", self.projection.finesse)?;
        positive("projection.linewidth_ghz", self.projection.linewidth_ghz)?;
        positive("projection.roc_um", self.projection.roc_um)?;
        positive("g2.tau1_ns", self.g2.tau1_ns)?;
        positive("g2.tau2_ns", self.g2.tau2_ns)?;
        if self.spectrum.peaks == 0 {
            return Err(("spectrum.peaks", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    fn rate(&self, quoted: f64) -> f64 {
        self.units.to_angular(quoted)
    }

    /// Peaks of the configured table; `None` for an inline level scheme.
    pub fn peaks(&self) -> Result<Option<Vec<LorentzianPeak>>> {
        if !self.emitter.levels.is_empty() {
            return Ok(None);
        }
        let table = self.emitter.peak_table.as_deref().unwrap_or(BUILTIN_PEAKS);
        if table == BUILTIN_PEAKS {
            return nv_default_peaks(self.units).map(Some);
        }
        let path = self.resolve(table);
        let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        crate::io::tables::parse_peak_table(&text, &path.display().to_string(), self.units).map(Some)
    }

    pub fn emitter(&self) -> Result<EmitterModel> {
        let e = &self.emitter;
        match self.peaks()? {
            Some(peaks) => {
                let mut cal = PeakCalibration::new(self.rate(e.total_gamma), 0);
                cal.gamma_star = e.gamma_star.map(|g| self.rate(g));
                build_emitter_from_peaks(&peaks, cal)
            }
            None => {
                let levels: Vec<VibronicLevel> = e
                    .levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| VibronicLevel {
                        index: i,
                        energy: self.rate(l.energy),
                        radiative_rate: self.rate(l.radiative_rate),
                        phonon_relaxation: self.rate(l.phonon_relaxation),
                    })
                    .collect();
                let zpl = wavelength_to_angular(e.zpl_nm.unwrap_or(f64::NAN) * NM);
                let em = EmitterModel::new(zpl, levels, self.rate(e.gamma_star.unwrap_or(0.0)))?;
                let total = self.rate(e.total_gamma);
                if (em.total_radiative() / total - 1.0).abs() > 1e-9 {
                    return Err(cfg_err(
                        "emitter.total_gamma",
                        "differs from the sum of the inline radiative rates",
                    ));
                }
                Ok(em)
            }
        }
    }

    pub fn budget(&self) -> Result<MirrorLossBudget> {
        let c = &self.cavity;
        let table = if c.loss_table == BUILTIN_LOSSES {
            crate::io::tables::parse_loss_table(crate::optics::DEFAULT_LOSS_TABLE, "default-losses.csv")?
        } else {
            let path = self.resolve(&c.loss_table);
            let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            crate::io::tables::parse_loss_table(&text, &path.display().to_string())?
        };
        MirrorLossBudget::new(table, c.scatter_loss, c.mode_match)
    }

    pub fn coupling_scale(&self) -> CouplingScale {
        CouplingScale {
            reference_g: self.rate(self.cavity.coupling),
            reference_length: self.cavity.reference_length_um * UM,
            roc: self.cavity.roc_um * UM,
            wavelength: self.cavity.wavelength_nm * NM,
        }
    }

    pub fn setup(&self) -> Result<CavitySetup> {
        Ok(CavitySetup {
            budget: self.budget()?,
            coupling: self.coupling_scale(),
        })
    }

    /// The configured system: κ fixed, from length and finesse, or from the
    /// loss table at the resonance wavelength, in that order of precedence.
    pub fn system(&self) -> Result<CoupledSystem> {
        let em = self.emitter()?;
        let c = &self.cavity;
        let wl = c.wavelength_nm * NM;
        let l = c.length_um * UM;
        let resonance = wavelength_to_angular(wl);
        let cavity = match (c.loss_rate, c.finesse) {
            (Some(k), _) => CavityMode::with_loss_rate(resonance, self.rate(k))?,
            (None, Some(f)) => CavityMode::from_length_finesse(resonance, l, f)?,
            (None, None) => {
                let f = crate::optics::finesse_from_losses(&self.budget()?, wl)?;
                CavityMode::from_length_finesse(resonance, l, f)?
            }
        };
        let g0 = self.coupling_scale().at_length(l)?;
        CoupledSystem::with_dipole_couplings(em, cavity, g0)
    }

    pub fn modulation(&self) -> Result<PumpModulation> {
        PumpModulation::new(self.pump.wavelength_nm * NM, self.pump.visibility, self.pump.phase)
    }

    pub fn three_level_rates(&self) -> Result<ThreeLevelRates> {
        let r = &self.rates;
        let mut rates = ThreeLevelRates::new(0.0, r.k21, r.k23, r.k31)?;
        let k12_sat = r.k31 * (r.k21 + r.k23) / (r.k23 + r.k31);
        rates.pump_coefficient = k12_sat / (r.saturation_power_mw * 1e-3);
        Ok(rates)
    }

    pub fn count_inputs(&self) -> Result<CountRateInputs> {
        Ok(CountRateInputs {
            rates: self.three_level_rates()?,
            detection_efficiency: self.detection.efficiency,
            pump_factor: 1.0,
        })
    }

    pub fn tuning_factors(&self) -> TuningFactors {
        TuningFactors {
            modulation: self.tuning.modulation,
            outcoupling: self.tuning.outcoupling,
            finesse_weight: self.tuning.finesse_weight,
        }
    }

    pub fn tuning_wavelengths(&self) -> Vec<f64> {
        self.tuning.wavelength_nm.values().into_iter().map(|w| w * NM).collect()
    }

    pub fn gamma_star_grid(&self) -> Vec<f64> {
        let s = &self.sweep;
        log_grid(self.rate(s.gamma_star_min), self.rate(s.gamma_star_max), s.points)
    }

    pub fn projection_inputs(&self) -> Result<ProjectionInputs> {
        let p = &self.projection;
        let mut inputs = ProjectionInputs::device();
        inputs.finesse = p.finesse;
        inputs.linewidth_hz = p.linewidth_ghz * 1e9;
        inputs.roc = p.roc_um * UM;
        inputs.wavelength = self.cavity.wavelength_nm * NM;
        inputs.coupling = self.coupling_scale();
        inputs.mode_match = self.cavity.mode_match;
        inputs.count_inputs = self.count_inputs()?;
        Ok(inputs)
    }

    pub fn g2_initial(&self) -> G2Params {
        G2Params::new(self.g2.amplitude, self.g2.tau1_ns * 1e-9, self.g2.tau2_ns * 1e-9)
    }
}

/// The shipped parameter set of the measured device.
pub const NV_DEVICE_CONFIG: &str = include_str!("../../data/nv-paper.cfg");
