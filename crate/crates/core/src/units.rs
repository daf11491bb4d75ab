//! Physical constants and the rate-unit convention.
//!
//! Internally every rate and frequency is an angular quantity in rad/s.
//! Quoted rates ("κ = 77 GHz", "γ* = 15 THz") are ambiguous about the
//! factor 2π, so every boundary that ingests them goes through
//! [`RateConvention`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;

pub const GHZ: f64 = 1e9;
pub const THZ: f64 = 1e12;
pub const NM: f64 = 1e-9;
pub const UM: f64 = 1e-6;

/// How a quoted rate in (G|T)Hz maps onto rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateConvention {
    /// The quoted number already is the angular rate: 77 GHz -> 77e9 rad/s.
    #[default]
    Angular,
    /// The quoted number is an ordinary frequency: 77 GHz -> 2π·77e9 rad/s.
    Ordinary,
}

impl RateConvention {
    pub fn to_angular(self, quoted_hz: f64) -> f64 {
        match self {
            RateConvention::Angular => quoted_hz,
            RateConvention::Ordinary => 2.0 * PI * quoted_hz,
        }
    }

    pub fn from_angular(self, rad_per_s: f64) -> f64 {
        match self {
            RateConvention::Angular => rad_per_s,
            RateConvention::Ordinary => rad_per_s / (2.0 * PI),
        }
    }

    pub fn ghz(self, quoted: f64) -> f64 {
        self.to_angular(quoted * GHZ)
    }

    pub fn thz(self, quoted: f64) -> f64 {
        self.to_angular(quoted * THZ)
    }
}

/// Vacuum wavelength (m) to angular optical frequency (rad/s).
pub fn wavelength_to_angular(lambda: f64) -> f64 {
    2.0 * PI * C / lambda
}

pub fn angular_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * C / omega
}

/// Vacuum wavelength (m) to ordinary frequency (Hz).
pub fn wavelength_to_frequency(lambda: f64) -> f64 {
    C / lambda
}

pub fn frequency_to_wavelength(nu: f64) -> f64 {
    C / nu
}

/// Width (Hz) of the frequency band between two wavelengths.
pub fn band_width_hz(lambda_a: f64, lambda_b: f64) -> f64 {
    (C / lambda_a - C / lambda_b).abs()
}
