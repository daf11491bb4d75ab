//! Sequential against rayon scheduling for the two grid-shaped workloads.
//!
//! The speedup is bounded by the core count; on a single-core machine the
//! two policies should time the same up to scheduling overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nvcav::experiments::{
    dephasing_sweep, device_dephasing_system, log_grid, nv_default_emitter, tuning_spectrum, CavitySetup, SweepOptions,
    TuningFactors, PUMP_WAVELENGTH,
};
use nvcav::optics::PumpModulation;
use nvcav::par::ExecPolicy;
use nvcav::units::NM;
use std::hint::black_box;

const POLICIES: [(&str, ExecPolicy); 2] = [
    ("sequential", ExecPolicy::Sequential),
    ("parallel", ExecPolicy::Parallel),
];

fn tuning(c: &mut Criterion) {
    let em = nv_default_emitter().unwrap();
    let setup = CavitySetup::device();
    let modes: Vec<u32> = (9..=17).collect();
    let wl: Vec<f64> = (0..=200).map(|i| (640.0 + 0.5 * i as f64) * NM).collect();
    let m = PumpModulation::new(PUMP_WAVELENGTH, 0.6, 0.0).unwrap();
    let mut g = c.benchmark_group("tuning_spectrum");
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                tuning_spectrum(
                    &em,
                    &setup,
                    &modes,
                    black_box(&wl),
                    &m,
                    TuningFactors::default(),
                    policy,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let sys = device_dephasing_system(&nv_default_emitter().unwrap()).unwrap();
    let grid = log_grid(1e9, 1e14, 8);
    let mut g = c.benchmark_group("dephasing_sweep_with_master_equation");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        let opts = SweepOptions {
            lindblad_indices: (0..grid.len()).collect(),
            policy,
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| dephasing_sweep(&sys, black_box(&grid), &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, tuning, sweep);
criterion_main!(benches);
