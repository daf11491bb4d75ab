use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::types::CoupledSystem;

/// Default cap on the Hilbert-space dimension (the generator is dim²×dim²).
pub const DEFAULT_MAX_DIM: usize = 40;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Product basis {|e⟩, |g_0⟩ … |g_n⟩} ⊗ {|0⟩ … |N⟩}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    pub ground_levels: usize,
    pub fock_cutoff: usize,
}

impl Basis {
    pub const EXCITED: usize = 0;

    pub fn emitter_states(&self) -> usize {
        self.ground_levels + 1
    }

    pub fn dim(&self) -> usize {
        self.emitter_states() * (self.fock_cutoff + 1)
    }

    /// Emitter state `s` (0 = |e⟩, 1 + i = |g_i⟩) with `k` photons.
    pub fn index(&self, s: usize, k: usize) -> usize {
        s * (self.fock_cutoff + 1) + k
    }

    pub fn ground(i: usize) -> usize {
        1 + i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    CavityDamping,
    PolarizationDamping { branch: usize },
    GroundRelaxation { level: usize },
    PureDephasing,
}

/// One Lindblad dissipator D[√rate·L].
#[derive(Debug, Clone)]
pub struct Channel {
    pub kind: ChannelKind,
    pub rate: f64,
    pub operator: DMatrix<C64>,
}

/// Dense generator of the master equation, acting on column-stacked ρ.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub basis: Basis,
    pub hamiltonian: DMatrix<C64>,
    pub channels: Vec<Channel>,
    pub generator: DMatrix<C64>,
    /// Σγ_i, the free-space decay rate of |e⟩.
    pub free_decay: f64,
    pub cavity_loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LiouvillianOptions {
    pub max_dim: usize,
}

impl Default for LiouvillianOptions {
    fn default() -> Self {
        Self {
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

pub fn build_liouvillian(system: &CoupledSystem, fock_cutoff: usize) -> Result<Liouvillian> {
    build_liouvillian_with(system, fock_cutoff, LiouvillianOptions::default())
}

/// Jaynes-Cummings Hamiltonian in the frame rotating at ω_c plus cavity
/// loss (κ), branch decay (γ_i), vibronic relaxation (γ_{i,i−1}) and pure
/// dephasing of |e⟩ with jump operator √γ*·σ_ee, which broadens every
/// optical line by γ* (FWHM).
pub fn build_liouvillian_with(
    system: &CoupledSystem,
    fock_cutoff: usize,
    opts: LiouvillianOptions,
) -> Result<Liouvillian> {
    if fock_cutoff < 1 {
        return Err(Error::invalid("fock_cutoff must be at least 1"));
    }
    system.ensure_valid()?;
    let em = &system.emitter;
    let basis = Basis {
        ground_levels: em.levels().len(),
        fock_cutoff,
    };
    let d = basis.dim();
    if d > opts.max_dim {
        return Err(Error::DimensionTooLarge {
            dim: d,
            cap: opts.max_dim,
        });
    }
    let nf = fock_cutoff + 1;

    // Photon annihilation ⊗ identity on the emitter.
    let mut a = DMatrix::<C64>::zeros(d, d);
    for s in 0..basis.emitter_states() {
        for k in 1..nf {
            a[(basis.index(s, k - 1), basis.index(s, k))] = C64::new((k as f64).sqrt(), 0.0);
        }
    }
    let ad = a.adjoint();

    // σ_{x,y} = |x⟩⟨y| on the emitter, identity on the field.
    let sigma = |x: usize, y: usize| {
        let mut m = DMatrix::<C64>::zeros(d, d);
        for k in 0..nf {
            m[(basis.index(x, k), basis.index(y, k))] = ONE;
        }
        m
    };

    let mut h = DMatrix::<C64>::zeros(d, d);
    let delta_e = em.zpl_frequency() - system.cavity.resonance;
    for k in 0..nf {
        h[(basis.index(Basis::EXCITED, k), basis.index(Basis::EXCITED, k))] += C64::new(delta_e, 0.0);
        for (i, lvl) in em.levels().iter().enumerate() {
            let idx = basis.index(Basis::ground(i), k);
            h[(idx, idx)] += C64::new(lvl.energy, 0.0);
        }
    }
    for (i, &g) in system.couplings.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        // i·g_i·(a† σ_{i,e} − σ_{i,e}† a)
        let s_ie = sigma(Basis::ground(i), Basis::EXCITED);
        let term = &ad * &s_ie - s_ie.adjoint() * &a;
        h += term * (I * g);
    }

    let mut channels = Vec::new();
    channels.push(Channel {
        kind: ChannelKind::CavityDamping,
        rate: system.cavity.loss_rate,
        operator: a.clone(),
    });
    for (i, lvl) in em.levels().iter().enumerate() {
        if lvl.radiative_rate > 0.0 {
            channels.push(Channel {
                kind: ChannelKind::PolarizationDamping { branch: i },
                rate: lvl.radiative_rate,
                operator: sigma(Basis::ground(i), Basis::EXCITED),
            });
        }
        if i > 0 && lvl.phonon_relaxation > 0.0 {
            channels.push(Channel {
                kind: ChannelKind::GroundRelaxation { level: i },
                rate: lvl.phonon_relaxation,
                operator: sigma(Basis::ground(i - 1), Basis::ground(i)),
            });
        }
    }
    if em.pure_dephasing() > 0.0 {
        channels.push(Channel {
            kind: ChannelKind::PureDephasing,
            rate: em.pure_dephasing(),
            operator: sigma(Basis::EXCITED, Basis::EXCITED),
        });
    }

    let generator = assemble(&h, &channels);
    Ok(Liouvillian {
        basis,
        hamiltonian: h,
        channels,
        generator,
        free_decay: em.total_radiative(),
        cavity_loss: system.cavity.loss_rate,
    })
}

fn nonzeros(m: &DMatrix<C64>) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// vec(ρ) index of ρ_ij, column-major.
#[inline]
fn vx(d: usize, i: usize, j: usize) -> usize {
    i + d * j
}

/// Superoperator of ρ ↦ −i[H, ρ] + Σ rate·(LρL† − ½{L†L, ρ}).
fn assemble(h: &DMatrix<C64>, channels: &[Channel]) -> DMatrix<C64> {
    let d = h.nrows();
    let mut gen = DMatrix::<C64>::zeros(d * d, d * d);

    // left multiplication c·Aρ: ((i,j),(k,j)) += c·A_ik
    let add_left = |gen: &mut DMatrix<C64>, a: &DMatrix<C64>, c: C64| {
        for (i, k, v) in nonzeros(a) {
            for j in 0..d {
                gen[(vx(d, i, j), vx(d, k, j))] += c * v;
            }
        }
    };
    // right multiplication c·ρB: ((i,j),(i,l)) += c·B_lj
    let add_right = |gen: &mut DMatrix<C64>, b: &DMatrix<C64>, c: C64| {
        for (l, j, v) in nonzeros(b) {
            for i in 0..d {
                gen[(vx(d, i, j), vx(d, i, l))] += c * v;
            }
        }
    };

    add_left(&mut gen, h, -I);
    add_right(&mut gen, h, I);

    for ch in channels {
        if ch.rate == 0.0 {
            continue;
        }
        let l = &ch.operator;
        let nz = nonzeros(l);
        let r = C64::new(ch.rate, 0.0);
        // rate·LρL†: ((i,j),(k,m)) += rate·L_ik·conj(L_jm)
        for &(i, k, v) in &nz {
            for &(j, m, w) in &nz {
                gen[(vx(d, i, j), vx(d, k, m))] += r * v * w.conj();
            }
        }
        let ldl = l.adjoint() * l;
        add_left(&mut gen, &ldl, -0.5 * r);
        add_right(&mut gen, &ldl, -0.5 * r);
    }
    gen
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// L applied to a density matrix.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim();
        let v = DVector::from_column_slice(rho.as_slice());
        let out = &self.generator * v;
        DMatrix::from_column_slice(d, d, out.as_slice())
    }

    pub fn channel_rate(&self, kind: ChannelKind) -> Option<f64> {
        self.channels.iter().find(|c| c.kind == kind).map(|c| c.rate)
    }
}
