//! One function per subcommand. Each writes its tables, a JSON summary and,
//! where there is something to draw, an SVG plot into the output directory.

use std::path::PathBuf;

use nvcav::experiments::{
    dephasing_sweep, efficiency_vs_wavelength, predict_count_rate, projected_source, reference_operating_points,
    spread_indices, sweep_plot, sweep_table, tuning_plot, tuning_spectrum, tuning_table, wavelength_plot,
    CountRatePrediction, SweepOptions, WavelengthPoint,
};
use nvcav::io::{
    load_csv_series, write_json, write_plot, write_table, Axis, OutputFormat, PlotSpec, Schema, Series, Table,
};
use nvcav::lindblad::{build_liouvillian, emission_efficiency_me, EvolveOptions};
use nvcav::lm::LmConfig;
use nvcav::par::ExecPolicy;
use nvcav::photophysics::{self, params_from_rates};
use nvcav::rate::{emission_efficiencies, purcell_estimate};
use nvcav::spectral::{fit_lorentzians, synth_spectrum, SpectrumFitOptions};
use nvcav::synth::{noisy_g2, noisy_spectrum};
use nvcav::units::{angular_to_wavelength, C, NM, THZ, UM};
use nvcav::{Error, Result};
use serde_json::json;

use crate::{Context, DataArgs};

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn table(&self, stem: &str, table: &Table) -> Result<()> {
        let ext = match self.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        let p = self.path(&format!("{stem}.{ext}"));
        write_table(table, &p, self.format)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn summary<T: serde::Serialize>(&self, stem: &str, report: &T) -> Result<()> {
        let p = self.path(&format!("{stem}.json"));
        write_json(report, &p)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn plot(&self, stem: &str, spec: &PlotSpec) -> Result<()> {
        let p = self.path(&format!("{stem}.svg"));
        if write_plot(spec, &p)? {
            println!("wrote {}", p.display());
        } else {
            log::warn!("{stem}: nothing to plot");
        }
        Ok(())
    }

    /// A rate in rad/s expressed in the config's quoting convention.
    fn quoted(&self, rad_per_s: f64) -> f64 {
        self.cfg.units.from_angular(rad_per_s)
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if (0.0..1.0).contains(&noise) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("--noise must lie in [0, 1), got {noise}")))
    }
}

pub fn fit_spectrum(ctx: &Context, args: &DataArgs) -> Result<()> {
    let synthetic = args.input.is_none();
    let data: Vec<(f64, f64)> = match &args.input {
        Some(p) => load_csv_series(p, Schema::SPECTRUM)?
            .into_iter()
            .map(|r| (r[0] * NM, r[1]))
            .collect(),
        None => {
            check_noise(args.noise)?;
            let peaks = ctx.cfg.peaks()?.ok_or_else(|| {
                Error::Invalid("synthetic spectra need a peak table; pass --input for an inline emitter".into())
            })?;
            let grid: Vec<f64> = (0..=640).map(|i| (600.0 + 0.25 * i as f64) * NM).collect();
            noisy_spectrum(&peaks, &grid, args.noise, ctx.seed)?
        }
    };
    if synthetic {
        let mut t = Table::new(["wavelength_nm", "counts"]);
        for &(l, s) in &data {
            t.push(vec![(l / NM).into(), s.into()]);
        }
        ctx.table("spectrum_data", &t)?;
    }
    let opts = SpectrumFitOptions {
        fit_offset: ctx.cfg.spectrum.fit_offset,
        ..Default::default()
    };
    let fit = fit_lorentzians(&data, ctx.cfg.spectrum.peaks, None, &opts)?;
    let mut peaks = fit.peaks.clone();
    peaks.sort_by(|a, b| b.center_hz.total_cmp(&a.center_hz));
    let total: f64 = peaks.iter().map(|p| p.area).sum();
    let mut t = Table::new(["peak", "center_nm", "fwhm_THz", "area", "branching"]);
    for (i, p) in peaks.iter().enumerate() {
        t.push(vec![
            i.into(),
            (p.center_wavelength() / NM).into(),
            (ctx.quoted(p.linewidth()) / THZ).into(),
            p.area.into(),
            (p.area / total).into(),
        ]);
    }
    ctx.table("spectrum_fit", &t)?;
    ctx.summary(
        "spectrum_fit_summary",
        &json!({
            "units": ctx.cfg.units,
            "synthetic": synthetic,
            "seed": synthetic.then_some(ctx.seed),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "residual_norm": fit.residual_norm,
            "offset_per_hz": fit.offset,
            "degenerate_pairs": fit.degenerate_pairs,
        }),
    )?;
    let grid: Vec<f64> = data.iter().map(|d| d.0).collect();
    let model = synth_spectrum(&fit.peaks, &grid)?;
    let curve = grid
        .iter()
        .zip(model)
        .map(|(&l, s)| (l / NM, s + fit.offset * C / (l * l)))
        .collect();
    ctx.plot(
        "spectrum_fit",
        &PlotSpec {
            title: format!("{}-Lorentzian fit", ctx.cfg.spectrum.peaks),
            x: Axis::linear("wavelength (nm)"),
            y: Axis::linear("counts"),
            y2: None,
            series: vec![
                Series::markers("data", data.iter().map(|&(l, s)| (l / NM, s)).collect()),
                Series::line("fit", curve),
            ],
        },
    )
}

pub fn fit_g2(ctx: &Context, args: &DataArgs) -> Result<()> {
    let mut truth = None;
    let data: Vec<(f64, f64)> = match &args.input {
        Some(p) => load_csv_series(p, Schema::G2)?
            .into_iter()
            .map(|r| (r[0] * 1e-9, r[1]))
            .collect(),
        None => {
            check_noise(args.noise)?;
            let rates = ctx.cfg.three_level_rates()?;
            let params = params_from_rates(&rates.at_power(ctx.cfg.rates.saturation_power_mw * 1e-3))?;
            truth = Some(params);
            let delays: Vec<f64> = (-500..=500).map(|i| i as f64 * 1e-9).collect();
            noisy_g2(&params, &delays, args.noise, ctx.seed)
        }
    };
    if truth.is_some() {
        let mut t = Table::new(["delay_ns", "g2"]);
        for &(d, g) in &data {
            t.push(vec![(d * 1e9).into(), g.into()]);
        }
        ctx.table("g2_data", &t)?;
    }
    let fit = photophysics::fit_g2(&data, &ctx.cfg.g2_initial(), &LmConfig::default())?;
    let err = fit.std_errors();
    let p = fit.params;
    let mut t = Table::new(["parameter", "value", "std_error"]);
    let rows = [
        ("amplitude", p.bunching_amplitude, 1.0),
        ("tau1_ns", p.antibunching_time, 1e9),
        ("tau2_ns", p.bunching_time, 1e9),
    ];
    for (i, (name, v, s)) in rows.into_iter().enumerate() {
        t.push(vec![
            name.into(),
            (v * s).into(),
            err.map_or(f64::NAN, |e| e[i] * s).into(),
        ]);
    }
    ctx.table("g2_fit", &t)?;
    if fit.model_inconsistent {
        log::warn!("g² fit left the model's domain (τ₂ ≤ τ₁ or a < 0)");
    }
    ctx.summary(
        "g2_fit_summary",
        &json!({
            "fit": fit,
            "single_emitter": fit.single_emitter(),
            "synthetic_truth": truth,
            "seed": truth.map(|_| ctx.seed),
        }),
    )?;
    let curve = data.iter().map(|&(d, _)| (d * 1e9, p.g2(d))).collect();
    ctx.plot(
        "g2_fit",
        &PlotSpec {
            title: "Intensity correlation".into(),
            x: Axis::linear("delay (ns)"),
            y: Axis::linear("g2"),
            y2: None,
            series: vec![
                Series::markers("data", data.iter().map(|&(d, g)| (d * 1e9, g)).collect()),
                Series::line("three-level fit", curve),
            ],
        },
    )
}

pub fn rate(ctx: &Context) -> Result<()> {
    let sys = ctx.cfg.system()?;
    let r = emission_efficiencies(&sys)?;
    let em = &sys.emitter;
    let mut t = Table::new([
        "level",
        "wavelength_nm",
        "coupling",
        "detuning",
        "effective_rate",
        "efficiency",
    ]);
    for i in 0..em.levels().len() {
        t.push(vec![
            i.into(),
            (angular_to_wavelength(em.transition_frequency(i)) / NM).into(),
            ctx.quoted(sys.couplings[i]).into(),
            ctx.quoted(r.cavity_detunings[i]).into(),
            ctx.quoted(r.effective_rates[i]).into(),
            r.efficiencies[i].into(),
        ]);
    }
    ctx.table("rate_branches", &t)?;
    let purcell = (em.pure_dephasing() > 0.0)
        .then(|| purcell_estimate(sys.couplings[0], em.total_radiative(), em.pure_dephasing()))
        .transpose()?;
    ctx.summary(
        "rate_summary",
        &json!({
            "units": ctx.cfg.units,
            "total_efficiency": r.total_efficiency,
            "free_lifetime_s": r.free_lifetime,
            "modified_lifetime_s": r.modified_lifetime,
            "lifetime_ratio": r.lifetime_ratio(),
            "fast_cavity": r.fast_cavity,
            "kappa": ctx.quoted(sys.cavity.loss_rate),
            "purcell_estimate": purcell.map(|p| p.factor),
        }),
    )?;
    println!(
        "P_tot = {:.4e}, lifetime ratio = {:.4}",
        r.total_efficiency,
        r.lifetime_ratio()
    );
    Ok(())
}

fn evolve_options(ctx: &Context) -> EvolveOptions {
    EvolveOptions {
        rtol: ctx.cfg.lindblad.rtol,
        atol: ctx.cfg.lindblad.atol,
        ..Default::default()
    }
}

pub fn lindblad(ctx: &Context) -> Result<()> {
    let sys = ctx.cfg.system()?;
    let r = emission_efficiencies(&sys)?;
    let l = build_liouvillian(&sys, ctx.cfg.lindblad.fock_cutoff)?;
    let me = emission_efficiency_me(&l, evolve_options(ctx))?;
    let mut t = Table::new(["t_ns", "excited", "photons", "trace"]);
    for p in &me.trajectory.points {
        t.push(vec![
            (p.t * 1e9).into(),
            p.excited.into(),
            p.photons.into(),
            p.trace.into(),
        ]);
    }
    ctx.table("lindblad_trajectory", &t)?;
    let lifetime = me.lifetime.map(|f| f.lifetime);
    ctx.summary(
        "lindblad_summary",
        &json!({
            "master_equation": me,
            "rate_model": {
                "total_efficiency": r.total_efficiency,
                "modified_lifetime_s": r.modified_lifetime,
            },
            "p_tot_deviation": (me.total_efficiency / r.total_efficiency - 1.0).abs(),
            "lifetime_deviation": lifetime.map(|t| (t / r.modified_lifetime - 1.0).abs()),
            "accepted_steps": me.trajectory.accepted_steps,
            "rejected_steps": me.trajectory.rejected_steps,
        }),
    )?;
    println!(
        "P_tot = {:.4e} (rate model {:.4e}), lifetime {}",
        me.total_efficiency,
        r.total_efficiency,
        lifetime.map_or("not extracted".into(), |t| format!("{:.4e} s", t))
    );
    let pts = &me.trajectory.points;
    ctx.plot(
        "lindblad_trajectory",
        &PlotSpec {
            title: "Master-equation populations".into(),
            x: Axis::linear("time (ns)"),
            y: Axis::linear("excited population"),
            y2: Some(Axis::linear("cavity photons")),
            series: vec![
                Series::line("excited", pts.iter().map(|p| (p.t * 1e9, p.excited)).collect()),
                Series::line("photons", pts.iter().map(|p| (p.t * 1e9, p.photons)).collect()).on_secondary(),
            ],
        },
    )
}

pub fn tuning(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let pts = tuning_spectrum(
        &cfg.emitter()?,
        &cfg.setup()?,
        &cfg.tuning.modes,
        &cfg.tuning_wavelengths(),
        &cfg.modulation()?,
        cfg.tuning_factors(),
        ExecPolicy::default(),
    )?;
    ctx.table("tuning", &tuning_table(&pts))?;
    ctx.plot("tuning", &tuning_plot(&pts))
}

pub fn sweep_dephasing(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let sys = cfg.system()?;
    let grid = cfg.gamma_star_grid();
    let opts = SweepOptions {
        lindblad_indices: spread_indices(cfg.sweep.lindblad_points, grid.len()),
        fock_cutoff: cfg.lindblad.fock_cutoff,
        evolve: evolve_options(ctx),
        policy: ExecPolicy::default(),
    };
    let pts = dephasing_sweep(&sys, &grid, &opts)?;
    ctx.table("sweep_dephasing", &sweep_table(&pts))?;
    ctx.plot("sweep_dephasing", &sweep_plot(&pts))?;

    // Efficiency against cavity wavelength at the ends of the sweep and at the emitter's own γ*.
    let wl: Vec<f64> = (0..=130).map(|i| (630.0 + i as f64) * NM).collect();
    let mut levels = vec![grid[0], sys.emitter.pure_dephasing(), grid[grid.len() - 1]];
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut curves: Vec<(String, Vec<WavelengthPoint>)> = Vec::new();
    let mut t = Table::new(["gamma_star", "wavelength_nm", "p_tot"]);
    for gs in levels {
        let c = efficiency_vs_wavelength(&sys, gs, &wl, ExecPolicy::default())?;
        for p in &c {
            t.push(vec![ctx.quoted(gs).into(), (p.wavelength / NM).into(), p.p_tot.into()]);
        }
        curves.push((format!("γ* = {:.3e}", ctx.quoted(gs)), c));
    }
    ctx.table("efficiency_vs_wavelength", &t)?;
    ctx.plot("efficiency_vs_wavelength", &wavelength_plot(&curves))
}

fn prediction_row(t: &mut Table, name: &str, length: f64, p: &CountRatePrediction, measured: Option<(f64, f64)>) {
    t.push(vec![
        name.into(),
        (length / UM).into(),
        (p.wavelength / NM).into(),
        p.p_tot.into(),
        p.outcoupling.into(),
        p.rate.into(),
        measured.map_or(f64::NAN, |m| m.0).into(),
        measured.map_or(f64::NAN, |m| m.1).into(),
    ]);
}

pub fn predict_rate(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let em = cfg.emitter()?;
    let setup = cfg.setup()?;
    let inputs = cfg.count_inputs()?;
    let mut t = Table::new([
        "point",
        "length_um",
        "wavelength_nm",
        "p_tot",
        "outcoupling",
        "rate",
        "measured_rate",
        "reference_prediction",
    ]);
    let mut reports = serde_json::Map::new();
    let (l, wl) = (cfg.cavity.length_um * UM, cfg.cavity.wavelength_nm * NM);
    let p = predict_count_rate(&setup.system(&em, l, wl)?, &setup.budget, &inputs)?;
    prediction_row(&mut t, "configured", l, &p, None);
    reports.insert("configured".into(), serde_json::to_value(&p).unwrap_or_default());
    if let Some(peaks) = cfg.peaks()? {
        for op in reference_operating_points(&peaks)? {
            let p = predict_count_rate(&setup.system(&em, op.length, op.wavelength)?, &setup.budget, &inputs)?;
            prediction_row(
                &mut t,
                op.name,
                op.length,
                &p,
                Some((op.measured_rate, op.reference_prediction)),
            );
            reports.insert(op.name.into(), json!({ "prediction": p, "operating_point": op }));
        }
    }
    ctx.table("count_rates", &t)?;
    ctx.summary("count_rates_summary", &reports)?;
    Ok(())
}

pub fn project(ctx: &Context) -> Result<()> {
    let rep = projected_source(&ctx.cfg.emitter()?, &ctx.cfg.projection_inputs()?)?;
    let mut t = Table::new(["parameter", "value", "rate"]);
    for &(d, r) in &rep.detection_sensitivity {
        t.push(vec!["detection_efficiency".into(), d.into(), r.into()]);
    }
    for &(m, r) in &rep.mode_match_sensitivity {
        t.push(vec!["mode_match".into(), m.into(), r.into()]);
    }
    ctx.table("projection_sensitivity", &t)?;
    ctx.summary("projection", &rep)?;
    println!(
        "length {:.3} um, V = {:.3} um^3, {:.3e} counts/s (target {:.1e}: {})",
        rep.length / UM,
        rep.mode_volume / 1e-18,
        rep.count_rate,
        rep.target_rate,
        if rep.meets_target { "met" } else { "not met" }
    );
    Ok(())
}
