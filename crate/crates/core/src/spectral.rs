//! Multi-Lorentzian decomposition and synthesis of emission spectra.
//!
//! Peaks are Lorentzian in frequency, so fitting happens on a frequency axis
//! and wavelength data is converted at the boundary with |dν/dλ| = c/λ².

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{self, LmConfig, Problem};
use crate::units::{RateConvention, C, THZ};

/// Linewidth rate (rad/s) given to every peak by [`initial_peaks`].
pub const DEFAULT_INIT_LINEWIDTH: f64 = 50e12;

/// One Lorentzian line in ordinary frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianPeak {
    /// Line center ν₀ (Hz).
    pub center_hz: f64,
    /// FWHM in ordinary frequency (Hz).
    pub fwhm_hz: f64,
    /// Integrated intensity (photon-flux units).
    pub area: f64,
}

impl LorentzianPeak {
    /// Peak from a vacuum wavelength (m) and a linewidth rate (rad/s).
    pub fn from_wavelength(center: f64, linewidth: f64, area: f64) -> Self {
        Self {
            center_hz: C / center,
            fwhm_hz: linewidth / (2.0 * PI),
            area,
        }
    }

    pub fn center_wavelength(&self) -> f64 {
        C / self.center_hz
    }

    /// Angular FWHM (rad/s), the rate that enters the level scheme.
    pub fn linewidth(&self) -> f64 {
        2.0 * PI * self.fwhm_hz
    }

    /// Spectral density per unit ordinary frequency.
    pub fn density(&self, nu: f64) -> f64 {
        let hw = 0.5 * self.fwhm_hz;
        let d = nu - self.center_hz;
        self.area * hw / PI / (d * d + hw * hw)
    }

    pub fn is_valid(&self) -> bool {
        self.fwhm_hz > 0.0 && self.area > 0.0 && self.center_hz > 0.0
    }
}

/// Sum of peaks per unit frequency on a frequency grid (Hz).
pub fn synth_frequency(peaks: &[LorentzianPeak], nu_grid: &[f64]) -> Vec<f64> {
    nu_grid
        .iter()
        .map(|&nu| peaks.iter().map(|p| p.density(nu)).sum())
        .collect()
}

/// Sum of peaks per unit wavelength on a wavelength grid (m).
pub fn synth_spectrum(peaks: &[LorentzianPeak], lambda_grid: &[f64]) -> Result<Vec<f64>> {
    check_monotone(lambda_grid)?;
    Ok(lambda_grid
        .iter()
        .map(|&lam| {
            let nu = C / lam;
            let jac = C / (lam * lam);
            jac * peaks.iter().map(|p| p.density(nu)).sum::<f64>()
        })
        .collect())
}

fn check_monotone(grid: &[f64]) -> Result<()> {
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if up || down {
        Ok(())
    } else {
        Err(Error::invalid("wavelength grid must be strictly monotone"))
    }
}

/// area_i / Σ area.
pub fn branching_ratios(peaks: &[LorentzianPeak]) -> Vec<f64> {
    let total: f64 = peaks.iter().map(|p| p.area).sum();
    peaks.iter().map(|p| p.area / total).collect()
}

/// Shipped NV calibration table.
pub const NV_DEFAULT_PEAKS: &str = include_str!("../data/nv-default-peaks.csv");

pub fn nv_default_peaks(units: RateConvention) -> Result<Vec<LorentzianPeak>> {
    crate::io::tables::parse_peak_table(NV_DEFAULT_PEAKS, "nv-default-peaks.csv", units)
}

#[derive(Debug, Clone)]
pub struct SpectrumFitOptions {
    pub fit_offset: bool,
    pub lm: LmConfig,
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        Self {
            fit_offset: true,
            lm: LmConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumFit {
    pub peaks: Vec<LorentzianPeak>,
    /// Constant background per unit frequency.
    pub offset: f64,
    /// Covariance of (center_hz, fwhm_hz, area) for each peak.
    pub peak_covariance: Vec<Matrix3<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Index pairs whose centers sit closer than 0.1 FWHM.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

struct PeakProblem<'a> {
    nu_thz: &'a [f64],
    y: &'a [f64],
    n_peaks: usize,
    fit_offset: bool,
}

impl PeakProblem<'_> {
    // params per peak: [center_THz, ln fwhm_THz, ln area]
    fn eval(&self, p: &[f64], nu: f64) -> f64 {
        let mut s = if self.fit_offset { p[3 * self.n_peaks] } else { 0.0 };
        for k in 0..self.n_peaks {
            let c = p[3 * k];
            let w = p[3 * k + 1].exp();
            let a = p[3 * k + 2].exp();
            let hw = 0.5 * w;
            let d = nu - c;
            s += a * hw / PI / (d * d + hw * hw);
        }
        s
    }
}

impl Problem for PeakProblem<'_> {
    fn n_params(&self) -> usize {
        3 * self.n_peaks + usize::from(self.fit_offset)
    }

    fn n_residuals(&self) -> usize {
        self.y.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, (&nu, &y)) in self.nu_thz.iter().zip(self.y).enumerate() {
            out[i] = self.eval(p, nu) - y;
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        for (i, &nu) in self.nu_thz.iter().enumerate() {
            for k in 0..self.n_peaks {
                let c = p[3 * k];
                let w = p[3 * k + 1].exp();
                let a = p[3 * k + 2].exp();
                let hw = 0.5 * w;
                let d = nu - c;
                let den = d * d + hw * hw;
                let l = a * hw / PI / den;
                jac[(i, 3 * k)] = l * 2.0 * d / den;
                // ∂L/∂w = a/π·(½/den − hw²/den²), chained with ∂w/∂ln w = w.
                jac[(i, 3 * k + 1)] = w * a / PI * (0.5 / den - hw * hw / (den * den));
                jac[(i, 3 * k + 2)] = l;
            }
            if self.fit_offset {
                jac[(i, 3 * self.n_peaks)] = 1.0;
            }
        }
    }
}

/// Converts (wavelength m, counts per wavelength) to (frequency Hz, counts per frequency).
pub fn to_frequency_axis(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    samples.iter().map(|&(lam, s)| (C / lam, s * lam * lam / C)).collect()
}

/// Starting peaks from the smoothed local maxima, each with the default linewidth.
pub fn initial_peaks(samples: &[(f64, f64)], n_peaks: usize) -> Vec<LorentzianPeak> {
    let mut freq = to_frequency_axis(samples);
    freq.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = freq.len();
    let half = (m / 100).max(1);
    let smooth: Vec<f64> = (0..m)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(m);
            freq[lo..hi].iter().map(|x| x.1).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut maxima: Vec<usize> = (1..m.saturating_sub(1))
        .filter(|&i| smooth[i] >= smooth[i - 1] && smooth[i] > smooth[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]));
    // Noise ripples on a flank show up as extra maxima; keep only well separated ones.
    let min_sep = (freq[m - 1].0 - freq[0].0) / (4 * n_peaks) as f64;
    let mut picked: Vec<usize> = Vec::with_capacity(n_peaks);
    for i in maxima {
        if picked.len() == n_peaks {
            break;
        }
        if picked.iter().all(|&j| (freq[i].0 - freq[j].0).abs() > min_sep) {
            picked.push(i);
        }
    }
    let maxima = picked;
    let fwhm_hz = DEFAULT_INIT_LINEWIDTH / (2.0 * PI);
    let mut centers: Vec<(f64, f64)> = maxima.iter().map(|&i| (freq[i].0, smooth[i])).collect();
    if centers.len() < n_peaks && m > 1 {
        // Fill the remainder evenly across the band.
        let (lo, hi) = (freq[0].0, freq[m - 1].0);
        let extra = n_peaks - centers.len();
        for k in 0..extra {
            let nu = lo + (hi - lo) * (k as f64 + 1.0) / (extra as f64 + 1.0);
            let idx = freq.partition_point(|x| x.0 < nu).min(m - 1);
            centers.push((nu, smooth[idx].max(0.0)));
        }
    }
    centers
        .into_iter()
        .map(|(nu, h)| LorentzianPeak {
            center_hz: nu,
            fwhm_hz,
            area: (h * PI * fwhm_hz / 2.0).max(f64::MIN_POSITIVE),
        })
        .collect()
}

/// Fits `n_peaks` Lorentzians to a (wavelength m, counts) spectrum.
pub fn fit_lorentzians(
    samples: &[(f64, f64)],
    n_peaks: usize,
    init: Option<&[LorentzianPeak]>,
    opts: &SpectrumFitOptions,
) -> Result<SpectrumFit> {
    if n_peaks == 0 {
        return Err(Error::invalid("n_peaks must be at least 1"));
    }
    if samples.len() < 9 * n_peaks {
        return Err(Error::invalid(format!(
            "{} samples are too few for {n_peaks} peaks (need {})",
            samples.len(),
            9 * n_peaks
        )));
    }
    let init: Vec<LorentzianPeak> = match init {
        Some(p) if p.len() == n_peaks => p.to_vec(),
        Some(p) => {
            return Err(Error::invalid(format!(
                "initial guess has {} peaks, expected {n_peaks}",
                p.len()
            )))
        }
        None => initial_peaks(samples, n_peaks),
    };
    if let Some(i) = init.iter().position(|p| !p.is_valid()) {
        return Err(Error::invalid(format!(
            "initial peak {i} must have positive width and area"
        )));
    }

    let freq = to_frequency_axis(samples);
    let nu_thz: Vec<f64> = freq.iter().map(|x| x.0 / THZ).collect();
    // Work with O(1) numbers: densities per THz, divided by the peak value.
    let scale = freq
        .iter()
        .map(|x| (x.1 * THZ).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let y: Vec<f64> = freq.iter().map(|x| x.1 * THZ / scale).collect();

    let mut p0 = Vec::with_capacity(3 * n_peaks + 1);
    for pk in &init {
        p0.push(pk.center_hz / THZ);
        p0.push((pk.fwhm_hz / THZ).ln());
        p0.push((pk.area / scale).ln());
    }
    if opts.fit_offset {
        p0.push(0.0);
    }
    let problem = PeakProblem {
        nu_thz: &nu_thz,
        y: &y,
        n_peaks,
        fit_offset: opts.fit_offset,
    };
    let rep = lm::minimize(&problem, &p0, &opts.lm);

    let mut peaks = Vec::with_capacity(n_peaks);
    let mut peak_covariance = Vec::with_capacity(n_peaks);
    for k in 0..n_peaks {
        let c = rep.params[3 * k] * THZ;
        let w = rep.params[3 * k + 1].exp() * THZ;
        let a = rep.params[3 * k + 2].exp() * scale;
        peaks.push(LorentzianPeak {
            center_hz: c,
            fwhm_hz: w,
            area: a,
        });
        let d = [THZ, w, a];
        let mut cov = Matrix3::zeros();
        if let Some(full) = &rep.covariance {
            for r in 0..3 {
                for s in 0..3 {
                    cov[(r, s)] = d[r] * d[s] * full[(3 * k + r, 3 * k + s)];
                }
            }
        }
        peak_covariance.push(cov);
    }
    let offset = if opts.fit_offset {
        rep.params[3 * n_peaks] * scale / THZ
    } else {
        0.0
    };
    let mut degenerate_pairs = Vec::new();
    for i in 0..n_peaks {
        for j in i + 1..n_peaks {
            let sep = (peaks[i].center_hz - peaks[j].center_hz).abs();
            let w = 0.5 * (peaks[i].fwhm_hz + peaks[j].fwhm_hz);
            if sep < 0.1 * w {
                degenerate_pairs.push((i, j));
            }
        }
    }
    if !rep.converged {
        log::warn!(
            "Lorentzian fit stopped after {} iterations without converging",
            rep.iterations
        );
    }
    Ok(SpectrumFit {
        peaks,
        offset,
        peak_covariance,
        residual_norm: rep.residual_norm * scale / THZ,
        converged: rep.converged,
        iterations: rep.iterations,
        degenerate_pairs,
    })
}
