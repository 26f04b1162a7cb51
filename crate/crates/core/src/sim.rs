//! Monte Carlo hysteron ensemble driven by the reset/write/read protocol.
//!
//! Each hysteron carries a log-threshold `x_i = log10(Eₐᵢ·t_film)` drawn from
//! a truncated Cauchy distribution. Under a pulse of width `t_p` its
//! threshold voltage is `10^x_i / ln(t_p/τ∞)^(1/α)`, so the whole population
//! shifts rigidly on the log axis with `t_p` and the width is unchanged.
//! Up and down switching share the same threshold magnitude.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::curve::{ObservableKind, Sample, SwitchCurve};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{DeviceCalibration, MerzKinetics};
use crate::rng;

/// Default truncation of the sampled threshold distribution, in multiples
/// of the width. Wide enough that the clipped tail mass (≈ 3·10⁻⁴ per side)
/// stays well below the Monte Carlo noise of a 10⁵-hysteron ensemble.
pub const ENSEMBLE_TRUNCATION: f64 = 1000.0;

const SAMPLE_BATCH: usize = 4096;
const UPDATE_CHUNK: usize = 8192;

const STREAM_THRESHOLDS: u64 = 0x7468_7265_7368;
const STREAM_READ: u64 = 0x7265_6164;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularPulse {
    /// Signed peak voltage; positive pulses switch hysterons down.
    pub peak: f64,
    /// Pulse width (s).
    pub width: f64,
}

impl TriangularPulse {
    pub fn new(peak: f64, width: f64) -> Result<Self> {
        if peak == 0.0 || !peak.is_finite() {
            return Err(Error::config(format!("pulse peak must be non-zero, got {peak}")));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::config(format!("pulse width must be positive, got {width}")));
        }
        Ok(TriangularPulse { peak, width })
    }

    /// State this pulse drives hysterons toward.
    pub fn target(&self) -> Polarization {
        if self.peak > 0.0 {
            Polarization::Down
        } else {
            Polarization::Up
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteProtocol {
    pub reset_pulse: TriangularPulse,
    pub reset_count: u32,
    pub write_pulse: TriangularPulse,
    pub write_count: u32,
}

impl WriteProtocol {
    pub fn new(
        reset_pulse: TriangularPulse,
        reset_count: u32,
        write_pulse: TriangularPulse,
        write_count: u32,
    ) -> Result<Self> {
        if reset_pulse.peak.signum() == write_pulse.peak.signum() {
            return Err(Error::config("reset and write pulses must have opposite polarity"));
        }
        if reset_count == 0 || write_count == 0 {
            return Err(Error::config("pulse counts must be at least 1"));
        }
        Ok(WriteProtocol {
            reset_pulse,
            reset_count,
            write_pulse,
            write_count,
        })
    }

    /// Two negative reset pulses of `reset_peak` followed by two positive
    /// write pulses of width `t_p`. The reset width equals `t_p`.
    pub fn standard(t_p: f64, reset_peak: f64) -> Result<Self> {
        Self::new(
            TriangularPulse::new(-reset_peak.abs(), t_p)?,
            2,
            TriangularPulse::new(1.0, t_p)?,
            2,
        )
    }

    pub fn t_p(&self) -> f64 {
        self.write_pulse.width
    }

    /// Same protocol with the write amplitude set to `v_p` (polarity kept).
    pub fn with_write_amplitude(&self, v_p: f64) -> Result<Self> {
        let mut p = *self;
        p.write_pulse = TriangularPulse::new(self.write_pulse.peak.signum() * v_p.abs(), self.write_pulse.width)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Polarization {
    Up = 0,
    Down = 1,
}

/// Parameters for drawing an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    /// Center of the log-threshold distribution, `log10(Eₐ·t_film)`.
    pub mu_star: f64,
    /// Cauchy half-width (decades).
    pub w: f64,
    /// Shared α and τ∞; its activation field is ignored in favour of the
    /// per-hysteron samples.
    pub kinetics: MerzKinetics,
    pub seed: u64,
    /// Truncation half-width in multiples of `w`.
    pub truncation: f64,
}

impl EnsembleSpec {
    pub fn new(n: usize, mu_star: f64, w: f64, kinetics: MerzKinetics, seed: u64) -> Self {
        EnsembleSpec {
            n,
            mu_star,
            w,
            kinetics,
            seed,
            truncation: ENSEMBLE_TRUNCATION,
        }
    }

    pub fn with_truncation(mut self, truncation: f64) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn sample(&self, exec: Exec) -> Result<HysteronEnsemble> {
        if self.n == 0 {
            return Err(Error::config("ensemble size must be at least 1"));
        }
        if !(self.w > 0.0) || !self.w.is_finite() || !self.mu_star.is_finite() {
            return Err(Error::config(format!(
                "ensemble needs finite center and positive width, got mu*={}, w={}",
                self.mu_star, self.w
            )));
        }
        if !(self.truncation > 0.0) || !self.truncation.is_finite() {
            return Err(Error::config("truncation must be positive"));
        }
        self.kinetics.validate()?;

        let theta_max = self.truncation.atan();
        let bound = self.truncation * self.w;
        let (mu, w, seed) = (self.mu_star, self.w, self.seed);
        let mut thresholds = vec![0.0; self.n];
        exec.for_each_chunk_mut(&mut thresholds, SAMPLE_BATCH, |batch, chunk| {
            let mut rng = rng::stream(seed, STREAM_THRESHOLDS, batch as u64);
            for x in chunk.iter_mut() {
                let theta = rng.random_range(-theta_max..=theta_max);
                let offset = (w * theta.tan()).clamp(-bound, bound);
                *x = mu + offset;
            }
        });
        let kinetics = MerzKinetics::from_mu_star(
            self.kinetics.alpha,
            self.kinetics.tau_inf,
            self.mu_star,
            self.kinetics.film_thickness,
        )?;
        Ok(HysteronEnsemble {
            log_threshold_at_ref: thresholds.into(),
            kinetics,
            state: vec![Polarization::Up; self.n],
            rng_seed: seed,
            truncation: self.truncation,
            w: self.w,
        })
    }
}

/// Draws `n` hysterons with default truncation; all start polarized up.
pub fn sample_ensemble(
    n: usize,
    mu_star_dist: f64,
    w: f64,
    kinetics: MerzKinetics,
    seed: u64,
) -> Result<HysteronEnsemble> {
    EnsembleSpec::new(n, mu_star_dist, w, kinetics, seed).sample(Exec::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteronEnsemble {
    log_threshold_at_ref: Arc<[f64]>,
    kinetics: MerzKinetics,
    state: Vec<Polarization>,
    rng_seed: u64,
    truncation: f64,
    w: f64,
}

impl HysteronEnsemble {
    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn log_thresholds_at_ref(&self) -> &[f64] {
        &self.log_threshold_at_ref
    }

    pub fn state(&self) -> &[Polarization] {
        &self.state
    }

    pub fn kinetics(&self) -> &MerzKinetics {
        &self.kinetics
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    /// Center of the sampled log-threshold distribution.
    pub fn mu_star(&self) -> f64 {
        self.kinetics.mu_star()
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    /// Largest log10 threshold (at the reference scale) that can occur.
    pub fn upper_log_threshold_bound(&self) -> f64 {
        self.mu_star() + self.truncation * self.w
    }

    /// Analytic median `μ(t_p)` of the log threshold voltage.
    pub fn median_log_threshold(&self, t_p: f64) -> Result<f64> {
        self.kinetics.median_log_threshold(t_p)
    }

    /// `log10` threshold voltages of every hysteron for pulses of width `t_p`.
    pub fn log_threshold_voltages(&self, t_p: f64) -> Result<Vec<f64>> {
        let shift = self.kinetics.log_threshold_shift(t_p)?;
        Ok(self.log_threshold_at_ref.iter().map(|x| x - shift).collect())
    }

    /// Fraction of hysterons polarized down.
    pub fn switched_fraction(&self) -> f64 {
        let down = self.state.iter().filter(|&&p| p == Polarization::Down).count();
        down as f64 / self.state.len() as f64
    }

    pub fn set_all(&mut self, p: Polarization) {
        self.state.fill(p);
    }

    /// Applies `pulse` in place and returns how many hysterons flipped.
    pub fn apply_pulse_mut(&mut self, pulse: &TriangularPulse, exec: Exec) -> Result<usize> {
        if !(pulse.width > self.kinetics.tau_inf) {
            return Err(Error::domain(format!(
                "pulse width {} s does not exceed the attempt time {} s",
                pulse.width, self.kinetics.tau_inf
            )));
        }
        let limit = pulse.peak.abs().log10() + self.kinetics.log_threshold_shift(pulse.width)?;
        let target = pulse.target();
        let thresholds = &self.log_threshold_at_ref;
        let flips = std::sync::atomic::AtomicUsize::new(0);
        exec.for_each_chunk_mut(&mut self.state, UPDATE_CHUNK, |chunk_idx, chunk| {
            let base = chunk_idx * UPDATE_CHUNK;
            let xs = &thresholds[base..base + chunk.len()];
            let mut local = 0;
            for (s, &x) in chunk.iter_mut().zip(xs) {
                if *s != target && x <= limit {
                    *s = target;
                    local += 1;
                }
            }
            flips.fetch_add(local, std::sync::atomic::Ordering::Relaxed);
        });
        Ok(flips.into_inner())
    }

    /// Returns a new ensemble with `pulse` applied.
    pub fn apply_pulse(&self, pulse: &TriangularPulse) -> Result<HysteronEnsemble> {
        let mut next = self.clone();
        next.apply_pulse_mut(pulse, Exec::default())?;
        Ok(next)
    }

    /// Resets then writes according to `proto`.
    pub fn program(&mut self, proto: &WriteProtocol, exec: Exec) -> Result<()> {
        for _ in 0..proto.reset_count {
            self.apply_pulse_mut(&proto.reset_pulse, exec)?;
        }
        for _ in 0..proto.write_count {
            self.apply_pulse_mut(&proto.write_pulse, exec)?;
        }
        Ok(())
    }

    /// Non-destructive displacement read.
    pub fn read_displacement(&self, cal: &DeviceCalibration, seed: u64) -> f64 {
        Readout::Displacement(cal.clone()).read(self.switched_fraction(), seed)
    }
}

pub fn apply_pulse(e: &HysteronEnsemble, p: &TriangularPulse) -> Result<HysteronEnsemble> {
    e.apply_pulse(p)
}

pub fn read_displacement(e: &HysteronEnsemble, cal: &DeviceCalibration, seed: u64) -> f64 {
    e.read_displacement(cal, seed)
}

/// How a switched fraction is turned into a measured value.
#[derive(Debug, Clone, PartialEq)]
pub enum Readout {
    /// `δ_min + (δ_max − δ_min)·S` plus Gaussian read noise.
    Displacement(DeviceCalibration),
    /// `2·P_r·(S − 1/2)` (µC/cm²) plus Gaussian noise.
    Polarization { remanent: f64, noise_sigma: f64 },
}

impl Readout {
    pub fn kind(&self) -> ObservableKind {
        match self {
            Readout::Displacement(_) => ObservableKind::Displacement,
            Readout::Polarization { .. } => ObservableKind::PolarizationChange,
        }
    }

    pub fn read(&self, switched: f64, seed: u64) -> f64 {
        let (clean, sigma) = match self {
            Readout::Displacement(cal) => (cal.delta_min + cal.span() * switched, cal.read_noise_sigma),
            Readout::Polarization { remanent, noise_sigma } => (2.0 * remanent * (switched - 0.5), *noise_sigma),
        };
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
            clean + normal.sample(&mut rng)
        } else {
            clean
        }
    }
}

/// Runs reset → write → read at every voltage of `vp_grid`.
pub fn run_protocol_sweep(
    e: &HysteronEnsemble,
    proto_template: &WriteProtocol,
    vp_grid: &[f64],
    cal: &DeviceCalibration,
) -> Result<SwitchCurve> {
    run_protocol_sweep_with(
        e,
        proto_template,
        vp_grid,
        &Readout::Displacement(cal.clone()),
        Exec::default(),
    )
}

/// Sweep with an explicit readout and execution strategy. The grid is
/// walked in order and the ensemble state carries over between points;
/// hysteron updates within each pulse are data-parallel.
pub fn run_protocol_sweep_with(
    e: &HysteronEnsemble,
    proto_template: &WriteProtocol,
    vp_grid: &[f64],
    readout: &Readout,
    exec: Exec,
) -> Result<SwitchCurve> {
    if vp_grid.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::config("sweep voltages must be positive"));
    }
    if vp_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("sweep voltages must be strictly increasing"));
    }
    if let Readout::Displacement(cal) = readout {
        cal.validate()?;
    }
    let t_p = proto_template.t_p();
    let curve_seed = rng::split(e.rng_seed ^ STREAM_READ, t_p.to_bits(), 0);
    let mut work = e.clone();
    let mut samples = Vec::with_capacity(vp_grid.len());
    for (i, &v) in vp_grid.iter().enumerate() {
        let proto = proto_template.with_write_amplitude(v)?;
        work.program(&proto, exec)?;
        let value = readout.read(work.switched_fraction(), rng::split(curve_seed, i as u64, 1));
        samples.push(Sample::new(v, value));
    }
    SwitchCurve::new(t_p, readout.kind(), samples)
}

/// Independent sweeps of the same device at several pulse widths. Each
/// sweep starts from the ensemble's current state; sweeps run concurrently
/// under [`Exec::Parallel`].
pub fn run_family_sweeps(
    e: &HysteronEnsemble,
    protocols: &[WriteProtocol],
    vp_grid: &[f64],
    readout: &Readout,
    exec: Exec,
) -> Result<Vec<SwitchCurve>> {
    exec.map(protocols, |p| {
        run_protocol_sweep_with(e, p, vp_grid, readout, Exec::Sequential)
    })
    .into_iter()
    .collect()
}
