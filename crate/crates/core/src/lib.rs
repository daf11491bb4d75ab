//! Simulation and analysis of a broadband solid-state emitter coupled to a
//! narrow fiber Fabry-Perot microcavity.
//!
//! The emitter is a single excited state decaying into a ladder of vibronic
//! ground levels (zero-phonon line plus phonon sidebands). Its coupling to a
//! cavity mode is described two ways: a full Lindblad master equation
//! ([`lindblad`]) and the adiabatically eliminated rate model ([`rate`]),
//! which stays valid while dephasing dominates. Around them sit the
//! spectral decomposition used for calibration ([`spectral`]), resonator
//! optics ([`optics`]), three-level photon statistics ([`photophysics`]) and
//! experiment pipelines ([`experiments`]).

pub mod error;
pub mod experiments;
pub mod io;
pub mod lindblad;
pub mod lm;
pub mod optics;
pub mod par;
pub mod photophysics;
pub mod rate;
pub mod spectral;
pub mod synth;
pub mod types;
pub mod units;

pub use error::{Error, Result};
pub use types::{
    build_emitter_from_peaks, validate_system, CavityMode, CoupledSystem, Diagnostic, EmitterModel, PeakCalibration,
    SaturationParams, VibronicLevel,
};
pub use units::RateConvention;
