use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fesynapse::curve::stepped_grid;
use fesynapse::fit::{fit_family_with, FamilyOptions};
use fesynapse::levels::count_dac_levels_with;
use fesynapse::merz::{fit_merz_nested_with, DEFAULT_TAU_SEARCH};
use fesynapse::model::{DeviceCalibration, MerzKinetics};
use fesynapse::reference::{median_points, FILM_THICKNESS, REFERENCE_ROWS};
use fesynapse::sim::{run_family_sweeps, EnsembleSpec, Readout, WriteProtocol};
use fesynapse::{Exec, LorentzianFit, ObservableKind, Sample, SwitchCurve};

fn strategies() -> Vec<(&'static str, Exec)> {
    vec![
        ("sequential", Exec::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Exec::Parallel),
    ]
}

fn kinetics() -> MerzKinetics {
    MerzKinetics::from_mu_star(3.62, 1.4e-14, 1.0694, FILM_THICKNESS).unwrap()
}

fn reference_fits() -> Vec<LorentzianFit> {
    REFERENCE_ROWS
        .iter()
        .map(|r| LorentzianFit::new(r.t_p, r.y0, r.span, r.mu, r.w, 0.0).unwrap())
        .collect()
}

fn ensemble_sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("ensemble_sample");
    for n in [100_000usize, 1_000_000] {
        for (name, exec) in strategies() {
            let spec = EnsembleSpec::new(n, 1.0694, 0.04, kinetics(), 1);
            g.bench_with_input(BenchmarkId::new(name, n), &spec, |b, spec| {
                b.iter(|| black_box(spec.sample(exec).unwrap()))
            });
        }
    }
    g.finish();
}

fn protocol_sweeps(c: &mut Criterion) {
    let e = EnsembleSpec::new(100_000, 1.0694, 0.04, kinetics(), 1)
        .sample(Exec::default())
        .unwrap();
    let protocols: Vec<WriteProtocol> = REFERENCE_ROWS
        .iter()
        .map(|r| WriteProtocol::standard(r.t_p, 9.0).unwrap())
        .collect();
    let grid = stepped_grid(3.0, 7.0, 0.02);
    let readout = Readout::Displacement(DeviceCalibration::default());
    let mut g = c.benchmark_group("family_sweep");
    g.sample_size(10);
    for (name, exec) in strategies() {
        g.bench_function(name, |b| {
            b.iter(|| black_box(run_family_sweeps(&e, &protocols, &grid, &readout, exec).unwrap()))
        });
    }
    g.finish();
}

fn dac_levels(c: &mut Criterion) {
    let fit = reference_fits()[4];
    let cal = DeviceCalibration::default();
    let mut g = c.benchmark_group("dac_levels_18bit");
    for (name, exec) in strategies() {
        g.bench_function(name, |b| {
            b.iter(|| black_box(count_dac_levels_with(&fit, &cal, 0.09, exec).unwrap()))
        });
    }
    g.finish();
}

fn family_fit(c: &mut Criterion) {
    let grid = stepped_grid(0.5, 9.0, 0.005);
    let curves: Vec<SwitchCurve> = reference_fits()
        .iter()
        .map(|f| {
            let samples = grid.iter().map(|&v| Sample::new(v, f.model(v))).collect();
            SwitchCurve::new(f.t_p, ObservableKind::Displacement, samples).unwrap()
        })
        .collect();
    let opts = FamilyOptions::default();
    let mut g = c.benchmark_group("family_fit");
    for (name, exec) in strategies() {
        g.bench_function(name, |b| {
            b.iter(|| black_box(fit_family_with(&curves, &opts, exec).unwrap()))
        });
    }
    g.finish();
}

fn nested_merz(c: &mut Criterion) {
    let pts = median_points();
    let mut g = c.benchmark_group("merz_nested");
    for (name, exec) in strategies() {
        g.bench_function(name, |b| {
            b.iter(|| black_box(fit_merz_nested_with(&pts, DEFAULT_TAU_SEARCH, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    ensemble_sampling,
    protocol_sweeps,
    dac_levels,
    family_fit,
    nested_merz
);
criterion_main!(benches);
