//! Library results checked against independent brute-force computations.

use std::f64::consts::{LN_10, PI};

use fesynapse::curve::{stepped_grid, ObservableKind, Sample, SwitchCurve};
use fesynapse::fit::affine_map_fit;
use fesynapse::levels::{count_dac_levels, margin_for_level_count};
use fesynapse::model::{nls_switched_fraction, DeviceCalibration, MerzKinetics, NlsSpec, TRUNCATION_HALF_WIDTH};
use fesynapse::reference::{FILM_THICKNESS, REFERENCE_ROWS, TAU_INF};
use fesynapse::sim::{run_protocol_sweep_with, EnsembleSpec, Readout, WriteProtocol};
use fesynapse::{Exec, LorentzianFit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn row500() -> LorentzianFit {
    let r = REFERENCE_ROWS[4];
    LorentzianFit::new(r.t_p, r.y0, r.span, r.mu, r.w, 0.0).unwrap()
}

#[test]
fn nls_matches_monte_carlo() {
    // ln τ ~ Cauchy(ln τ0, 0.5), restricted to the same ±10-scale band.
    let tau0: f64 = 2e-6;
    let scale_ln = 0.5;
    let spec = NlsSpec::new(2.0, tau0.log10(), scale_ln / LN_10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let edge = TRUNCATION_HALF_WIDTH.atan();
    for t in [tau0 * 0.3, tau0, tau0 * 4.0] {
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let theta: f64 = rng.random_range(-edge..edge);
            let ln_tau = tau0.ln() + scale_ln * theta.tan();
            acc += 1.0 - (-(t / ln_tau.exp()).powi(2)).exp();
        }
        let mc = acc / n as f64;
        let s = nls_switched_fraction(&spec, t).unwrap();
        assert!((s - mc).abs() < 1e-3, "t = {t}: quadrature {s} vs Monte Carlo {mc}");
    }
}

/// Counts levels by walking every code of an 18-bit DAC.
fn enumerate_levels(fit: &LorentzianFit, lo: f64, hi: f64, bits: u32, margin: f64) -> usize {
    let codes = 1u64 << bits;
    let step = (hi - lo) / (codes - 1) as f64;
    let mut last = f64::NEG_INFINITY;
    let mut k = 0;
    for c in 0..codes {
        let v = lo + c as f64 * step;
        let y = fit.y0 + fit.span * (0.5 + ((v.log10() - fit.mu) / fit.w).atan() / PI);
        if k == 0 || y > last + margin {
            last = y;
            k += 1;
        }
    }
    k
}

#[test]
fn dac_level_count_matches_enumeration() {
    let fit = row500();
    let cal = DeviceCalibration::default();
    for margin in [0.3, 0.09, 0.089, 0.05] {
        let oracle = enumerate_levels(&fit, 0.5, 9.0, 18, margin);
        assert_eq!(count_dac_levels(&fit, &cal, margin).unwrap(), oracle, "margin {margin}");
    }
    // Frozen from the enumeration above.
    assert_eq!(enumerate_levels(&fit, 0.5, 9.0, 18, 0.09), 254);
    assert_eq!(enumerate_levels(&fit, 0.5, 9.0, 18, 0.089), 257);
}

#[test]
fn margin_for_more_than_256_levels() {
    let fit = row500();
    let cal = DeviceCalibration::default();
    let m = margin_for_level_count(&fit, &cal, 256).unwrap().unwrap();
    assert!(m > 0.089 && m < 0.09, "{m}");
    assert!(count_dac_levels(&fit, &cal, m).unwrap() > 256);
    assert!(count_dac_levels(&fit, &cal, m + 1e-6).unwrap() <= 256);
}

#[test]
fn tau_at_median_threshold() {
    // Median regression of the reference fits with τ∞ = 14 fs.
    let k = MerzKinetics::from_mu_star(3.62, TAU_INF, 1.069, FILM_THICKNESS).unwrap();
    let tau = k.tau_of_field(4.867 / FILM_THICKNESS).unwrap();
    assert!(tau > 5e-4 / 1.3 && tau < 5e-4 * 1.3, "{tau}");
}

#[test]
fn large_ensemble_follows_analytic_curve() {
    let (mu_star, w) = (1.0694, 0.04);
    let k = MerzKinetics::from_mu_star(3.62, 1.4e-14, mu_star, FILM_THICKNESS).unwrap();
    let e = EnsembleSpec::new(1_000_000, mu_star, w, k, 5)
        .sample(Exec::default())
        .unwrap();
    let cal = DeviceCalibration::default();
    let proto = WriteProtocol::standard(500e-6, 9.0).unwrap();
    let grid = stepped_grid(3.0, 7.0, 0.025);
    let curve =
        run_protocol_sweep_with(&e, &proto, &grid, &Readout::Displacement(cal.clone()), Exec::default()).unwrap();
    let mu = k.median_log_threshold(500e-6).unwrap();
    for s in curve.samples() {
        let analytic = cal.delta_min + cal.span() * (0.5 + ((s.v_p.log10() - mu) / w).atan() / PI);
        assert!(
            (s.value - analytic).abs() < 0.1,
            "V = {}: {} vs {analytic}",
            s.v_p,
            s.value
        );
    }
}

#[test]
fn affine_map_between_noisy_observables() {
    let r = REFERENCE_ROWS[2];
    let grid = stepped_grid(0.5, 9.0, 0.01);
    let remanent = 20.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // σ/span = 1.5% for both observables.
        let nd = Normal::new(0.0, 0.015 * r.span).unwrap();
        let np = Normal::new(0.0, 0.015 * 2.0 * remanent).unwrap();
        let mut disp = Vec::new();
        let mut pol = Vec::new();
        for &v in &grid {
            let s = 0.5 + ((v.log10() - r.mu) / r.w).atan() / PI;
            disp.push(Sample::new(v, r.y0 + r.span * s + nd.sample(&mut rng)));
            pol.push(Sample::new(v, 2.0 * remanent * (s - 0.5) + np.sample(&mut rng)));
        }
        let d = SwitchCurve::new(r.t_p, ObservableKind::Displacement, disp).unwrap();
        let p = SwitchCurve::new(r.t_p, ObservableKind::PolarizationChange, pol).unwrap();
        let map = affine_map_fit(&d, &p).unwrap();
        assert!(map.r_squared > 0.99, "seed {seed}: R² = {}", map.r_squared);
        let expected_gain = 2.0 * remanent / r.span;
        assert!((map.gain / expected_gain - 1.0).abs() < 0.05);
    }
}
