//! Seeded synthetic data for round-trip checks and demos.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::photophysics::G2Params;
use crate::spectral::{synth_spectrum, LorentzianPeak};

/// Adds N(0, (σ·scale)²) to every value; `scale` is the largest |value|.
pub fn add_noise(values: &[f64], relative_sigma: f64, seed: u64) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sd = relative_sigma * scale;
    if !(sd > 0.0) {
        return values.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).expect("finite positive deviation");
    values.iter().map(|v| v + normal.sample(&mut rng)).collect()
}

/// (λ, counts) with noise relative to the spectral maximum.
pub fn noisy_spectrum(
    peaks: &[LorentzianPeak],
    grid: &[f64],
    relative_sigma: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let clean = synth_spectrum(peaks, grid)?;
    Ok(grid
        .iter()
        .copied()
        .zip(add_noise(&clean, relative_sigma, seed))
        .collect())
}

/// (τ, g²) with absolute noise σ (g² → 1 at long delays).
pub fn noisy_g2(params: &G2Params, delays: &[f64], sigma: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite deviation");
    delays
        .iter()
        .map(|&t| {
            (
                t,
                params.g2(t) + if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 },
            )
        })
        .collect()
}
