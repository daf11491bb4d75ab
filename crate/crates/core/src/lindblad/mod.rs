//! Master-equation solver for the multi-level emitter coupled to one cavity mode.
//!
//! Serves as the reference against which the rate description is checked:
//! it keeps every coherence, so lifetimes and cavity efficiencies come out
//! without adiabatic elimination.

mod integrator;
mod liouvillian;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

pub use integrator::{pade_poles, Propagator, ORDER};
pub use liouvillian::{
    build_liouvillian, build_liouvillian_with, Basis, Channel, ChannelKind, Liouvillian, LiouvillianOptions,
    DEFAULT_MAX_DIM,
};

/// Largest supported number of halvings of an output interval.
const MAX_LEVEL: u32 = 60;

/// RMS residual of ln p_e above which a decay is called non-exponential.
pub const NON_EXPONENTIAL_RMS: f64 = 1e-2;

/// Density matrix over the emitter ⊗ Fock basis.
#[derive(Debug, Clone)]
pub struct QuantumState {
    pub basis: Basis,
    pub rho: DMatrix<C64>,
}

impl QuantumState {
    fn pure(basis: Basis, index: usize) -> Self {
        let d = basis.dim();
        let mut rho = DMatrix::zeros(d, d);
        rho[(index, index)] = C64::new(1.0, 0.0);
        Self { basis, rho }
    }

    /// |e, 0⟩.
    pub fn excited(basis: Basis) -> Self {
        Self::pure(basis, basis.index(Basis::EXCITED, 0))
    }

    /// |g_i, 0⟩.
    pub fn ground(basis: Basis, i: usize) -> Self {
        Self::pure(basis, basis.index(Basis::ground(i), 0))
    }

    pub fn from_density(basis: Basis, rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != basis.dim() || rho.ncols() != basis.dim() {
            return Err(Error::invalid("density matrix does not match the basis"));
        }
        let s = Self { basis, rho };
        if s.hermiticity_error() > 1e-12 {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        if (s.trace() - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("density matrix trace differs from 1"));
        }
        if s.min_eigenvalue() < -1e-10 {
            return Err(Error::invalid("density matrix is not positive semidefinite"));
        }
        Ok(s)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rho.nrows()).map(|i| self.rho[(i, i)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn excited_population(&self) -> f64 {
        excited_population(&self.basis, self.rho.as_slice())
    }

    pub fn photon_number(&self) -> f64 {
        photon_number(&self.basis, self.rho.as_slice())
    }

    pub fn ground_populations(&self) -> Vec<f64> {
        ground_populations(&self.basis, self.rho.as_slice())
    }
}

fn diag(v: &[C64], d: usize, i: usize) -> f64 {
    v[i + d * i].re
}

fn excited_population(b: &Basis, v: &[C64]) -> f64 {
    let d = b.dim();
    (0..=b.fock_cutoff)
        .map(|k| diag(v, d, b.index(Basis::EXCITED, k)))
        .sum()
}

fn photon_number(b: &Basis, v: &[C64]) -> f64 {
    let d = b.dim();
    let mut n = 0.0;
    for s in 0..b.emitter_states() {
        for k in 1..=b.fock_cutoff {
            n += k as f64 * diag(v, d, b.index(s, k));
        }
    }
    n
}

fn ground_populations(b: &Basis, v: &[C64]) -> Vec<f64> {
    let d = b.dim();
    (0..b.ground_levels)
        .map(|i| {
            (0..=b.fock_cutoff)
                .map(|k| diag(v, d, b.index(Basis::ground(i), k)))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Retain the full density matrix at every output time.
    pub keep_states: bool,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            keep_states: false,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub excited: f64,
    pub ground: Vec<f64>,
    pub photons: f64,
    pub trace: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Density matrices at the output times when requested.
    pub states: Vec<QuantumState>,
    /// κ∫⟨a†a⟩dt up to the last output time.
    pub cavity_emission: f64,
    /// γ∫p_e dt up to the last output time.
    pub free_space_emission: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub factorizations: usize,
}

struct Evolver<'a> {
    liou: &'a Liouvillian,
    prop: Propagator<'a>,
    opts: EvolveOptions,
    y: DVector<C64>,
    dy: DVector<C64>,
    t: f64,
    level: u32,
    photon_integral: f64,
    excited_integral: f64,
    accepted: usize,
    rejected: usize,
}

impl<'a> Evolver<'a> {
    fn new(liou: &'a Liouvillian, initial: &QuantumState, opts: EvolveOptions) -> Result<Self> {
        if initial.basis != liou.basis {
            return Err(Error::invalid("initial state basis differs from the Liouvillian basis"));
        }
        let y = DVector::from_column_slice(initial.rho.as_slice());
        let dy = &liou.generator * &y;
        Ok(Self {
            liou,
            prop: Propagator::new(&liou.generator),
            opts,
            y,
            dy,
            t: 0.0,
            level: 0,
            photon_integral: 0.0,
            excited_integral: 0.0,
            accepted: 0,
            rejected: 0,
        })
    }

    fn error_norm(&self, coarse: &DVector<C64>, fine: &DVector<C64>) -> f64 {
        let denom = (2f64).powi(ORDER) - 1.0;
        coarse
            .iter()
            .zip(fine.iter())
            .map(|(c, f)| (f - c).norm() / denom / (self.opts.atol + self.opts.rtol * f.norm()))
            .fold(0.0, f64::max)
    }

    /// Advances to `t_next` with substeps (t_next − t)/2^level.
    fn advance_to(&mut self, t_next: f64) -> Result<()> {
        let span = t_next - self.t;
        if !(span > 0.0) {
            return Err(Error::invalid("output times must be strictly increasing"));
        }
        if self.level == 0 && self.accepted == 0 {
            let stiff = self.liou.generator.iter().map(|z| z.norm()).fold(0.0, f64::max);
            self.level = ((span * stiff).log2().ceil().max(0.0) as u32).min(MAX_LEVEL);
        }
        let full: u64 = 1 << MAX_LEVEL;
        let mut pos: u64 = 0;
        let b = self.liou.basis;
        let t0 = self.t;
        while pos < full {
            if self.accepted + self.rejected >= self.opts.max_steps {
                return Err(Error::Numerical(format!(
                    "step budget of {} exhausted",
                    self.opts.max_steps
                )));
            }
            let unit = 1u64 << (MAX_LEVEL - self.level);
            let h = span / (1u64 << self.level) as f64;
            let coarse = self.prop.step(h, &self.y)?;
            let half = self.prop.step(0.5 * h, &self.y)?;
            let fine = self.prop.step(0.5 * h, &half)?;
            let err = self.error_norm(&coarse, &fine);
            if !(err <= 1.0) {
                self.rejected += 1;
                if self.level == MAX_LEVEL || h < 1e-300 {
                    return Err(Error::StepUnderflow { t: self.t, h });
                }
                self.level += 1;
                continue;
            }
            let dy_new = &self.liou.generator * &fine;
            let (y0, y1) = (self.y.as_slice(), fine.as_slice());
            let (d0, d1) = (self.dy.as_slice(), dy_new.as_slice());
            let hermite = |f0: f64, f1: f64, g0: f64, g1: f64| 0.5 * h * (f0 + f1) + h * h / 12.0 * (g0 - g1);
            self.photon_integral += hermite(
                photon_number(&b, y0),
                photon_number(&b, y1),
                photon_number(&b, d0),
                photon_number(&b, d1),
            );
            self.excited_integral += hermite(
                excited_population(&b, y0),
                excited_population(&b, y1),
                excited_population(&b, d0),
                excited_population(&b, d1),
            );
            self.y = fine;
            self.dy = dy_new;
            self.accepted += 1;
            pos += unit;
            self.t = t0 + span * (pos as f64 / full as f64);
            // Grow only on a boundary of the doubled step.
            if err * 64.0 < 0.5 && self.level > 0 && pos % (unit << 1) == 0 {
                self.level -= 1;
            }
        }
        self.t = t_next;
        Ok(())
    }

    fn point(&self) -> TrajectoryPoint {
        let b = self.liou.basis;
        let v = self.y.as_slice();
        let d = b.dim();
        TrajectoryPoint {
            t: self.t,
            excited: excited_population(&b, v),
            ground: ground_populations(&b, v),
            photons: photon_number(&b, v),
            trace: (0..d).map(|i| diag(v, d, i)).sum(),
        }
    }

    fn state(&self) -> QuantumState {
        let d = self.liou.dim();
        QuantumState {
            basis: self.liou.basis,
            rho: DMatrix::from_column_slice(d, d, self.y.as_slice()),
        }
    }
}

/// Integrates ρ̇ = Lρ and samples populations and photon number on `t_grid`.
pub fn evolve(liou: &Liouvillian, initial: &QuantumState, t_grid: &[f64], opts: EvolveOptions) -> Result<Trajectory> {
    if t_grid.first() != Some(&0.0) {
        return Err(Error::invalid("time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    let mut ev = Evolver::new(liou, initial, opts)?;
    let mut points = vec![ev.point()];
    let mut states = Vec::new();
    if opts.keep_states {
        states.push(ev.state());
    }
    for &t in &t_grid[1..] {
        ev.advance_to(t)?;
        points.push(ev.point());
        if opts.keep_states {
            states.push(ev.state());
        }
    }
    Ok(Trajectory {
        points,
        states,
        cavity_emission: liou.cavity_loss * ev.photon_integral,
        free_space_emission: liou.free_decay * ev.excited_integral,
        accepted_steps: ev.accepted,
        rejected_steps: ev.rejected,
        factorizations: ev.prop.factorizations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LifetimeFit {
    /// Effective lifetime τ_eff (s).
    pub lifetime: f64,
    /// RMS residual of ln p_e about the fitted line.
    pub residual_rms: f64,
    pub points_used: usize,
    pub non_exponential: bool,
}

/// Least-squares fit of ln p_e(t) over the window 0.05 ≤ p_e ≤ 0.8.
pub fn extract_lifetime(traj: &Trajectory) -> Result<LifetimeFit> {
    fit_decay(traj.points.iter().map(|p| (p.t, p.excited)))
}

fn fit_decay(samples: impl Iterator<Item = (f64, f64)>) -> Result<LifetimeFit> {
    let all: Vec<(f64, f64)> = samples.collect();
    if all.last().map_or(true, |p| p.1 >= 1e-3) {
        return Err(Error::invalid("trajectory ends before p_e drops below 1e-3"));
    }
    let window: Vec<(f64, f64)> = all
        .iter()
        .filter(|(_, p)| (0.05..=0.8).contains(p))
        .map(|&(t, p)| (t, p.ln()))
        .collect();
    let n = window.len();
    if n < 3 {
        return Err(Error::invalid(format!("only {n} samples inside the fit window")));
    }
    let nf = n as f64;
    let mt = window.iter().map(|x| x.0).sum::<f64>() / nf;
    let my = window.iter().map(|x| x.1).sum::<f64>() / nf;
    let stt: f64 = window.iter().map(|x| (x.0 - mt).powi(2)).sum();
    let sty: f64 = window.iter().map(|x| (x.0 - mt) * (x.1 - my)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let rms = (window
        .iter()
        .map(|x| (x.1 - intercept - slope * x.0).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    if !(slope < 0.0) {
        return Err(Error::Numerical("excited population does not decay".into()));
    }
    Ok(LifetimeFit {
        lifetime: -1.0 / slope,
        residual_rms: rms,
        points_used: n,
        non_exponential: rms > NON_EXPONENTIAL_RMS,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EmissionReport {
    /// κ∫⟨a†a⟩dt.
    pub total_efficiency: f64,
    /// γ∫p_e dt.
    pub free_space_fraction: f64,
    /// p_e + ⟨a†a⟩ left when the integration stopped.
    pub remaining_excitation: f64,
    pub t_end: f64,
    pub lifetime: Option<LifetimeFit>,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl EmissionReport {
    /// Cavity + free-space emission; 1 up to the tail and quadrature error.
    pub fn branching_sum(&self) -> f64 {
        self.total_efficiency + self.free_space_fraction
    }
}

/// Starting from |e,0⟩, integrates until the remaining excitation can change
/// the cavity emission by less than 1e-4 relative.
pub fn emission_efficiency_me(liou: &Liouvillian, opts: EvolveOptions) -> Result<EmissionReport> {
    let initial = QuantumState::excited(liou.basis);
    let spacing = 1.0 / (40.0 * liou.free_decay);
    let t_max = 400.0 / liou.free_decay;
    let mut ev = Evolver::new(liou, &initial, opts)?;
    let mut points = vec![ev.point()];
    let mut states = Vec::new();
    loop {
        let t_next = ev.t + spacing;
        ev.advance_to(t_next)?;
        let p = ev.point();
        let remaining = p.excited + p.photons;
        points.push(p);
        if opts.keep_states {
            states.push(ev.state());
        }
        let emitted = liou.cavity_loss * ev.photon_integral;
        if remaining <= (1e-4 * emitted).max(1e-9) || ev.t >= t_max {
            break;
        }
    }
    let last = points.last().cloned().expect("at least one point");
    let trajectory = Trajectory {
        points,
        states,
        cavity_emission: liou.cavity_loss * ev.photon_integral,
        free_space_emission: liou.free_decay * ev.excited_integral,
        accepted_steps: ev.accepted,
        rejected_steps: ev.rejected,
        factorizations: ev.prop.factorizations,
    };
    let lifetime = extract_lifetime(&trajectory).ok();
    Ok(EmissionReport {
        total_efficiency: trajectory.cavity_emission,
        free_space_fraction: trajectory.free_space_emission,
        remaining_excitation: last.excited + last.photons,
        t_end: last.t,
        lifetime,
        trajectory,
    })
}

/// Uniform grid 0, dt, …, n·dt.
pub fn uniform_grid(dt: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 * dt).collect()
}
