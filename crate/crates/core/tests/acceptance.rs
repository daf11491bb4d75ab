//! Acceptance criteria, one line per criterion.
//!
//! Every criterion is evaluated even when an earlier one fails; the test
//! fails at the end if any did.

use std::f64::consts::PI;
use std::io::Write;

use nvcav::experiments::{
    device_dephasing_system, efficiency_vs_wavelength, filtering_baseline, nv_default_emitter, predict_count_rate,
    projected_source, reference_operating_points, tuning_spectrum, CavitySetup, CountRateInputs, ProjectionInputs,
    TuningFactors, PUMP_WAVELENGTH,
};
use nvcav::lindblad::{build_liouvillian, emission_efficiency_me, evolve, uniform_grid, EvolveOptions, QuantumState};
use nvcav::lm::LmConfig;
use nvcav::optics::{linewidth, mode_geometry, pump_modulation_factor, CavityGeometry, PumpModulation};
use nvcav::par::ExecPolicy;
use nvcav::photophysics::{fit_g2, g2_from_rates, params_from_rates, G2Params, ThreeLevelRates};
use nvcav::rate::{branch_linewidth, effective_rate, emission_efficiencies, purcell_estimate, spectral_density};
use nvcav::spectral::{fit_lorentzians, nv_default_peaks, synth_spectrum, LorentzianPeak, SpectrumFitOptions};
use nvcav::synth::{noisy_g2, noisy_spectrum};
use nvcav::types::{CavityMode, CoupledSystem, EmitterModel};
use nvcav::units::{band_width_hz, wavelength_to_angular, RateConvention, C, NM, UM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    checks: Vec<(String, bool)>,
    notes: Vec<String>,
}

impl Outcome {
    fn new(id: u32, name: &'static str) -> Self {
        Self {
            id,
            name,
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.checks.push((label.into(), ok));
    }

    fn note(&mut self, label: impl Into<String>) {
        self.notes.push(label.into());
    }

    fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn c1_purcell() -> Outcome {
    let mut o = Outcome::new(1, "Purcell estimate");
    let (g, gamma, gs) = (1.1e9, 35e6, 15e12);
    let f = purcell_estimate(g, gamma, gs).unwrap().factor;
    let oracle = 4.0 * g * g / (gamma * gs);
    o.check(
        format!("F = {f:.6e} vs 4g²/(γγ*) = {oracle:.6e}"),
        rel(f, oracle) <= 1e-12,
    );
    o.check(
        format!("F rounds to 9.2e-3 (|F − 9.2e-3| = {:.1e})", (f - 9.2e-3).abs()),
        (f - 9.2e-3).abs() < 0.05e-3,
    );
    o
}

fn c2_linewidth() -> Outcome {
    let mut o = Outcome::new(2, "cavity linewidth");
    let a = linewidth(3.5 * UM, 940.0).unwrap();
    o.check(
        format!(
            "δν(3.5 μm, F=940) = {:.2} GHz vs 46 GHz ({:.2}%)",
            a.fwhm_hz / 1e9,
            100.0 * rel(a.fwhm_hz, 46e9)
        ),
        rel(a.fwhm_hz, 46e9) <= 0.01,
    );
    let b = linewidth(3.5 * UM, 3500.0).unwrap();
    o.check(
        format!(
            "κ(3.5 μm, F=3500) = {:.2} GHz vs 77 GHz ({:.2}%)",
            b.kappa / 1e9,
            100.0 * rel(b.kappa, 77e9)
        ),
        rel(b.kappa, 77e9) <= 0.005,
    );
    o.check(
        format!("κ = 2π·{:.2} GHz", b.fwhm_hz / 1e9),
        (b.fwhm_hz / 1e9 - 12.24).abs() < 0.005 && rel(b.kappa, 2.0 * PI * b.fwhm_hz) < 1e-12,
    );
    o
}

fn c3_low_dephasing() -> Outcome {
    let mut o = Outcome::new(3, "low-dephasing limit");
    let em = nv_default_emitter().unwrap().with_pure_dephasing(0.0).unwrap();
    let cavity = CavityMode::with_loss_rate(em.zpl_frequency(), 77e9).unwrap();
    let sys = CoupledSystem::with_dipole_couplings(em, cavity, 1.1e9).unwrap();
    let r = emission_efficiencies(&sys).unwrap();
    o.check(
        format!("rate model P_tot = {:.4}", r.total_efficiency),
        (r.total_efficiency - 0.64).abs() <= 0.02,
    );
    o.check(
        format!("rate model τ_free/τ_cav = {:.3}", r.lifetime_ratio()),
        (r.lifetime_ratio() - 2.8).abs() <= 0.2,
    );
    let l = build_liouvillian(&sys, 1).unwrap();
    let me = emission_efficiency_me(&l, EvolveOptions::default()).unwrap();
    o.check(
        format!(
            "master equation P_tot = {:.4} ({:.2}% off)",
            me.total_efficiency,
            100.0 * rel(me.total_efficiency, r.total_efficiency)
        ),
        rel(me.total_efficiency, r.total_efficiency) <= 0.05,
    );
    match me.lifetime {
        Some(fit) => {
            let ratio = fit.lifetime / r.free_lifetime;
            let ratio = 1.0 / ratio;
            o.check(
                format!(
                    "master equation τ_free/τ_eff = {ratio:.3} ({:.2}% off)",
                    100.0 * rel(ratio, r.lifetime_ratio())
                ),
                rel(ratio, r.lifetime_ratio()) <= 0.05,
            );
        }
        None => o.check("master equation lifetime fit", false),
    }
    o
}

fn c4_room_temperature() -> Outcome {
    let mut o = Outcome::new(4, "room-temperature efficiencies");
    let em = nv_default_emitter().unwrap();
    let setup = CavitySetup::device();
    let peaks = nv_default_peaks(RateConvention::Angular).unwrap();
    let [zpl, psb] = reference_operating_points(&peaks).unwrap();
    let pz = emission_efficiencies(&setup.system(&em, zpl.length, zpl.wavelength).unwrap())
        .unwrap()
        .total_efficiency;
    let pp = emission_efficiencies(&setup.system(&em, psb.length, psb.wavelength).unwrap())
        .unwrap()
        .total_efficiency;
    o.check(
        format!("P_tot(ZPL, 3.5 μm) = {:.3}% (window 1.0–1.8%)", 100.0 * pz),
        (0.010..=0.018).contains(&pz),
    );
    o.check(
        format!(
            "P_tot(PSB max {:.1} nm, 3.1 μm) = {:.3}% (window 2.5–4.5%)",
            psb.wavelength / NM,
            100.0 * pp
        ),
        (0.025..=0.045).contains(&pp),
    );
    o
}

fn c5_densities() -> Outcome {
    let mut o = Outcome::new(5, "spectral photon densities");
    let zpl = spectral_density(770.0, linewidth(3.5 * UM, 940.0).unwrap().fwhm_hz).unwrap();
    o.check(
        format!("770 / 45.6 GHz = {zpl:.3} photons/(s·GHz), required ≥ 17"),
        zpl >= 17.0,
    );
    let psb = spectral_density(3700.0, 90e9).unwrap();
    o.check(
        format!("3700 / 90 GHz = {psb:.3}, required 41 ± 1"),
        (psb - 41.0).abs() <= 1.0,
    );
    let free = spectral_density(2.9e5, band_width_hz(650.0 * NM, 750.0 * NM)).unwrap();
    o.check(
        format!("2.9e5 over 650–750 nm = {free:.3}, required 4.7 ± 0.3"),
        (free - 4.7).abs() <= 0.3,
    );
    o
}

fn c6_count_rates() -> Outcome {
    let mut o = Outcome::new(6, "count-rate predictions");
    let em = nv_default_emitter().unwrap();
    let setup = CavitySetup::device();
    let peaks = nv_default_peaks(RateConvention::Angular).unwrap();
    for pt in reference_operating_points(&peaks).unwrap() {
        let sys = setup.system(&em, pt.length, pt.wavelength).unwrap();
        let pred = predict_count_rate(&sys, &setup.budget, &CountRateInputs::default()).unwrap();
        let ratio = pred.rate / pt.reference_prediction;
        o.check(
            format!(
                "{}: {:.0} /s vs {:.0} /s (×{:.2}; P_tot {:.2}%, η {:.4})",
                pt.name,
                pred.rate,
                pt.reference_prediction,
                ratio,
                100.0 * pred.p_tot,
                pred.outcoupling
            ),
            (0.5..=2.0).contains(&ratio),
        );
    }
    o
}

fn c7_projection() -> Outcome {
    let mut o = Outcome::new(7, "mode-volume projection");
    let lambda = 639.0 * NM;
    let v = mode_geometry(&CavityGeometry::new(5.0 * UM, 2.0 * lambda, lambda))
        .unwrap()
        .volume
        / 1e-18;
    o.check(
        format!("V(R = 5 μm, l = 2λ) = {v:.3} μm³ (window 0.3–0.9)"),
        (0.3..=0.9).contains(&v),
    );
    let em = nv_default_emitter().unwrap();
    let rep = projected_source(&em, &ProjectionInputs::device()).unwrap();
    o.check(
        format!(
            "projected length {:.3} μm for F = 1e4, 10 GHz; rate {:.3e} /s, > 1e5: {}",
            rep.length / UM,
            rep.count_rate,
            rep.meets_target
        ),
        (rep.length / UM - 1.5).abs() <= 0.015,
    );
    o
}

fn c8_properties() -> Outcome {
    let mut o = Outcome::new(8, "property suites");
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Master-equation invariants along a trajectory.
    let em = nv_default_emitter().unwrap();
    let sys = device_dephasing_system(&em).unwrap();
    let l = build_liouvillian(&sys, 1).unwrap();
    let opts = EvolveOptions {
        keep_states: true,
        ..Default::default()
    };
    let tr = evolve(&l, &QuantumState::excited(l.basis), &uniform_grid(2e-9, 40), opts).unwrap();
    let worst_trace = tr.states.iter().map(|s| (s.trace() - 1.0).abs()).fold(0.0, f64::max);
    let worst_herm = tr.states.iter().map(|s| s.hermiticity_error()).fold(0.0, f64::max);
    let worst_eig = tr
        .states
        .iter()
        .map(|s| s.min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    o.check(
        format!("ME trace error {worst_trace:.1e}, Hermiticity {worst_herm:.1e}, min eigenvalue {worst_eig:.1e}"),
        worst_trace < 1e-8 && worst_herm < 1e-10 && worst_eig > -1e-8,
    );

    // Rate model: Lorentzian in detuning and invariant under common rescaling.
    let mut lorentz = 0.0f64;
    let mut scaling = 0.0f64;
    for _ in 0..200 {
        let det = rng.random_range(-1e14..1e14);
        let gs = rng.random_range(0.0..1e14);
        let w0 = wavelength_to_angular(639.0 * NM);
        let e = EmitterModel::two_level(w0, 35e6, gs).unwrap();
        let s = CoupledSystem::new(e, CavityMode::with_loss_rate(w0 - det, 77e9).unwrap(), vec![1.1e9]).unwrap();
        let w = branch_linewidth(&s, 0);
        let x = 2.0 * s.detuning(0) / w;
        let base = 4.0 * 1.1e9 * 1.1e9 / w;
        lorentz = lorentz.max((effective_rate(0, &s) * (1.0 + x * x) / base - 1.0).abs());
        let k = rng.random_range(1e-3..1e3);
        let e2 = EmitterModel::two_level(w0 * k, 35e6 * k, gs * k).unwrap();
        let s2 = CoupledSystem::new(
            e2,
            CavityMode::with_loss_rate((w0 - det) * k, 77e9 * k).unwrap(),
            vec![1.1e9 * k],
        )
        .unwrap();
        let p1 = emission_efficiencies(&s).unwrap().total_efficiency;
        let p2 = emission_efficiencies(&s2).unwrap().total_efficiency;
        if p1 > 0.0 {
            scaling = scaling.max(rel(p2, p1));
        }
    }
    o.check(
        format!("rate Lorentzian error {lorentz:.1e}, rescaling error {scaling:.1e}"),
        lorentz < 1e-12 && scaling < 1e-12,
    );

    // g²(0) = 0 and g²(∞) = 1.
    let mut g0 = 0.0f64;
    let mut ginf = 0.0f64;
    for _ in 0..200 {
        let r = ThreeLevelRates::new(
            rng.random_range(1e5..1e9),
            rng.random_range(1e6..1e8),
            rng.random_range(0.0..5e7),
            rng.random_range(1e5..1e7),
        )
        .unwrap();
        g0 = g0.max(g2_from_rates(&r, 0.0).unwrap().abs());
        let far = match params_from_rates(&r) {
            Ok(p) => 80.0 * p.bunching_time,
            Err(_) => 1e-3,
        };
        ginf = ginf.max((g2_from_rates(&r, far).unwrap() - 1.0).abs());
    }
    o.check(
        format!("max |g²(0)| = {g0:.1e}, max |g²(∞) − 1| = {ginf:.1e}"),
        g0 < 1e-12 && ginf < 1e-9,
    );

    // g² fit round trip at 2% noise.
    let truth = G2Params::new(0.5, 10e-9, 100e-9);
    let delays: Vec<f64> = (-400..=400).map(|i| i as f64 * 1e-9).collect();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let data = noisy_g2(&truth, &delays, 0.02, seed);
        let fit = fit_g2(&data, &G2Params::new(0.3, 15e-9, 60e-9), &LmConfig::default()).unwrap();
        let p = fit.params;
        worst = worst
            .max(rel(p.bunching_amplitude, 0.5))
            .max(rel(p.antibunching_time, 10e-9))
            .max(rel(p.bunching_time, 100e-9));
    }
    o.check(
        format!(
            "g² fit, 2% noise, 10 seeds: worst parameter error {:.2}%",
            100.0 * worst
        ),
        worst <= 0.05,
    );

    // 8-Lorentzian round trip at 3% noise, automatic starting peaks.
    let centers = [612.0, 628.0, 645.0, 662.0, 680.0, 699.0, 718.0, 738.0];
    let areas = [0.6, 1.0, 1.4, 0.8, 1.2, 1.0, 0.7, 1.1];
    let truth: Vec<LorentzianPeak> = centers
        .iter()
        .zip(areas)
        .enumerate()
        .map(|(i, (c, a))| LorentzianPeak {
            center_hz: C / (c * NM),
            fwhm_hz: 3.0e12 + 0.2e12 * i as f64,
            area: a * 1e12,
        })
        .collect();
    let grid: Vec<f64> = (0..=1500).map(|i| (600.0 + 0.1 * i as f64) * NM).collect();
    let worst = |truth: &[LorentzianPeak], data: &[(f64, f64)], init: Option<&[LorentzianPeak]>| {
        let fit = fit_lorentzians(data, 8, init, &SpectrumFitOptions::default()).unwrap();
        let mut found = fit.peaks.clone();
        found.sort_by(|a, b| b.center_hz.total_cmp(&a.center_hz));
        let mut w = [0.0f64; 3];
        for (f, t) in found.iter().zip(truth) {
            w[0] = w[0].max((f.center_hz - t.center_hz).abs() / t.fwhm_hz);
            w[1] = w[1].max(rel(f.fwhm_hz, t.fwhm_hz));
            w[2] = w[2].max(rel(f.area, t.area));
        }
        w
    };
    let mut w = [0.0f64; 3];
    for seed in 0..5 {
        let data = noisy_spectrum(&truth, &grid, 0.03, seed).unwrap();
        let s = worst(&truth, &data, None);
        for k in 0..3 {
            w[k] = w[k].max(s[k]);
        }
    }
    o.check(
        format!(
            "8-Lorentzian fit, 3% noise, 5 seeds: center {:.3} FWHM, width {:.2}%, area {:.2}%",
            w[0],
            100.0 * w[1],
            100.0 * w[2]
        ),
        w[1] <= 0.05 && w[2] <= 0.05 && w[0] <= 0.05,
    );
    // The default emitter table overlaps too strongly to be identifiable at this noise.
    let nv = nv_default_peaks(RateConvention::Angular).unwrap();
    let nv_grid: Vec<f64> = (0..=600).map(|i| (600.0 + 0.25 * i as f64) * NM).collect();
    let data = noisy_spectrum(&nv, &nv_grid, 0.02, 1).unwrap();
    let exact = worst(
        &nv,
        &synth_spectrum(&nv, &nv_grid)
            .unwrap()
            .into_iter()
            .zip(&nv_grid)
            .map(|(y, &x)| (x, y))
            .collect::<Vec<_>>(),
        Some(&nv),
    );
    let noisy = worst(&nv, &data, Some(&nv));
    o.note(format!(
        "default emitter table: noiseless refit width error {:.1e}; at 2% noise width {:.0}%, area {:.0}% (overlapping lines)",
        exact[1],
        100.0 * noisy[1],
        100.0 * noisy[2]
    ));

    // Rate model against master equation where γ* ≥ 100κ.
    let mut worst_me = 0.0f64;
    for gs in [7.7e12, 15e12, 5e13] {
        let s = CoupledSystem {
            emitter: em.with_pure_dephasing(gs).unwrap(),
            ..sys.clone()
        };
        let r = emission_efficiencies(&s).unwrap().total_efficiency;
        let me = emission_efficiency_me(&build_liouvillian(&s, 1).unwrap(), EvolveOptions::default()).unwrap();
        worst_me = worst_me.max(rel(me.total_efficiency, r));
    }
    o.check(
        format!("rate vs master equation at γ* ≥ 100κ: {:.2}%", 100.0 * worst_me),
        worst_me <= 0.05,
    );
    o
}

fn c9_curve_shapes() -> Outcome {
    let mut o = Outcome::new(9, "qualitative curve shapes");
    let em = nv_default_emitter().unwrap();
    let setup = CavitySetup::device();
    let wl: Vec<f64> = (0..=50).map(|i| (640.0 + 2.0 * i as f64) * NM).collect();
    let modes: Vec<u32> = (9..=17).collect();
    let on = PumpModulation::new(PUMP_WAVELENGTH, 0.6, 0.0).unwrap();
    let f = TuningFactors::default();
    let a = tuning_spectrum(&em, &setup, &modes, &wl, &on, f, ExecPolicy::default()).unwrap();
    let b = tuning_spectrum(
        &em,
        &setup,
        &modes,
        &wl,
        &PumpModulation::off(),
        f,
        ExecPolicy::default(),
    )
    .unwrap();
    let mut period_err = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (p, q) in a.iter().zip(&b) {
        let ratio = p.intensity / q.intensity;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        let shifted = pump_modulation_factor(p.length + PUMP_WAVELENGTH / 2.0, &on);
        period_err = period_err.max((ratio - shifted).abs());
    }
    o.check(
        format!("V = 0.6: modulation {lo:.3}–{hi:.3}, λp/2 periodicity error {period_err:.1e}"),
        hi - lo > 1.0 && period_err < 1e-9,
    );
    let flat = b.iter().all(|q| q.modulation == 1.0);
    o.check("V = 0: no modulation", flat);
    let idx = wl.iter().position(|w| (*w - 680.0 * NM).abs() < 1e-12).unwrap();
    let at680: Vec<f64> = a
        .iter()
        .filter(|p| (p.wavelength - wl[idx]).abs() < 1e-15)
        .map(|p| p.normalized)
        .collect();
    let turns = at680.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count();
    o.check(
        format!("alternating mode intensities at 680 nm: {turns} turning points over n = 9–17"),
        turns >= 2,
    );

    let sys = device_dephasing_system(&em).unwrap();
    let grid: Vec<f64> = (0..=120).map(|i| (630.0 + i as f64) * NM).collect();
    let cold = efficiency_vs_wavelength(&sys, 30e9, &grid, ExecPolicy::default()).unwrap();
    let warm = efficiency_vs_wavelength(&sys, 15e12, &grid, ExecPolicy::default()).unwrap();
    let at = |c: &[nvcav::experiments::WavelengthPoint], nm: f64| {
        c.iter().find(|p| (p.wavelength / NM - nm).abs() < 1e-6).unwrap().p_tot
    };
    let zpl_cold = at(&cold, 639.0);
    let side_cold = cold
        .iter()
        .filter(|p| p.wavelength >= 650.0 * NM)
        .map(|p| p.p_tot)
        .fold(0.0, f64::max);
    o.check(
        format!(
            "γ* = 30 GHz: P_tot(639 nm) = {:.3}, max sideband P_tot = {:.4}",
            zpl_cold, side_cold
        ),
        zpl_cold > 10.0 * side_cold,
    );
    let unchanged = (660..=720)
        .step_by(10)
        .map(|nm| at(&cold, nm as f64) / at(&warm, nm as f64))
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r), b.max(r)));
    o.check(
        format!(
            "sidebands nearly unchanged by γ*: ratio {:.2}–{:.2}",
            unchanged.0, unchanged.1
        ),
        unchanged.0 > 0.5 && unchanged.1 < 2.0,
    );
    let band: Vec<f64> = warm
        .iter()
        .filter(|p| p.wavelength >= 639.0 * NM && p.wavelength <= 700.0 * NM)
        .map(|p| p.p_tot)
        .collect();
    let (wmin, wmax) = band
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let mut sorted = band.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let zpl_warm = at(&warm, 639.0);
    o.check(
        format!(
            "γ* = 15 THz over 639–700 nm: P_tot {:.2}%–{:.2}%, P_tot(639 nm)/median {:.2}",
            100.0 * wmin,
            100.0 * wmax,
            zpl_warm / median
        ),
        wmin >= 0.005 && wmax <= 0.05 && zpl_warm < 2.0 * median,
    );
    o
}

#[test]
fn acceptance_criteria() {
    let outcomes = vec![
        c1_purcell(),
        c2_linewidth(),
        c3_low_dephasing(),
        c4_room_temperature(),
        c5_densities(),
        c6_count_rates(),
        c7_projection(),
        c8_properties(),
        c9_curve_shapes(),
    ];
    let mut out = std::io::stdout().lock();
    for o in &outcomes {
        let _ = writeln!(
            out,
            "criterion {} [{}] {}",
            o.id,
            if o.pass() { "PASS" } else { "FAIL" },
            o.name
        );
        for (label, ok) in &o.checks {
            let _ = writeln!(out, "    {} {}", if *ok { "ok  " } else { "FAIL" }, label);
        }
        for label in &o.notes {
            let _ = writeln!(out, "    info {label}");
        }
    }
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass()).map(|o| o.id).collect();
    let _ = writeln!(
        out,
        "acceptance: {} of {} criteria pass",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    drop(out);
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

#[test]
fn filtering_baseline_matches_quoted_orders() {
    // 4.5 photons/(s·GHz) through a 45.6 GHz filter: about 205 /s before spatial filtering.
    let spectral = filtering_baseline(4.5, 45.6e9, 1.0).unwrap();
    assert!((spectral - 205.2).abs() < 1e-9);
    let spatial = 2.0 / spectral;
    assert!((0.005..0.02).contains(&spatial));
}
