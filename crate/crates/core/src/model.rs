//! Closed-form switching mathematics.
//!
//! Merz kinetics `τ(E) = τ∞·exp((Eₐ/E)^α)`, the threshold voltage it implies
//! for a pulse of width `t_p`, the Cauchy (Lorentzian) threshold distribution
//! on the `log10 V_p` axis, the offset–span displacement model and the
//! nucleation-limited-switching integral over a distribution of switching
//! times.
//!
//! Distribution parameters are always expressed in decades (log10 units).
//!
//! The effective field is `E = V / t_film`. Some write-ups of the same law
//! phrase the field as proportional to `V_p / t_p`; that reading is
//! dimensionally inconsistent with the threshold inversion and is not used.

use std::f64::consts::{LN_10, PI};

use crate::error::{Error, Result};

/// Default truncation of Cauchy distributions, in multiples of the width,
/// used by the NLS quadrature band.
pub const TRUNCATION_HALF_WIDTH: f64 = 10.0;

/// Generalized Merz field–time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MerzKinetics {
    /// Dimensionless field exponent.
    pub alpha: f64,
    /// Attempt time in the infinite-field limit (s).
    pub tau_inf: f64,
    /// Activation field (V/m).
    pub activation_field: f64,
    /// Ferroelectric film thickness (m).
    pub film_thickness: f64,
}

impl MerzKinetics {
    pub fn new(alpha: f64, tau_inf: f64, activation_field: f64, film_thickness: f64) -> Result<Self> {
        let k = MerzKinetics {
            alpha,
            tau_inf,
            activation_field,
            film_thickness,
        };
        k.validate()?;
        Ok(k)
    }

    /// Builds kinetics from the intercept `μ* = log10(Eₐ·t_film)` of the
    /// median regression.
    pub fn from_mu_star(alpha: f64, tau_inf: f64, mu_star: f64, film_thickness: f64) -> Result<Self> {
        if !(film_thickness > 0.0) || !mu_star.is_finite() {
            return Err(Error::domain(format!(
                "need finite mu_star and positive thickness, got mu_star={mu_star}, t_film={film_thickness}"
            )));
        }
        Self::new(alpha, tau_inf, 10f64.powf(mu_star) / film_thickness, film_thickness)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.alpha) || !ok(self.tau_inf) || !ok(self.activation_field) || !ok(self.film_thickness) {
            return Err(Error::domain(format!(
                "Merz parameters must be positive and finite: {self:?}"
            )));
        }
        if !self.mu_star().is_finite() {
            return Err(Error::domain("log10(Ea * t_film) is not finite"));
        }
        Ok(())
    }

    /// `log10(Eₐ·t_film)`, the threshold voltage scale in decades.
    pub fn mu_star(&self) -> f64 {
        (self.activation_field * self.film_thickness).log10()
    }

    /// Switching time at field `e` (V/m).
    pub fn tau_of_field(&self, e: f64) -> Result<f64> {
        if !(e > 0.0) {
            return Err(Error::domain(format!("field must be positive, got {e}")));
        }
        Ok(self.tau_inf * ((self.activation_field / e).powf(self.alpha)).exp())
    }

    /// `(1/α)·log10(ln(t_p/τ∞))`: how far the log-threshold drops below `μ*`
    /// for a pulse of width `t_p`.
    pub fn log_threshold_shift(&self, t_p: f64) -> Result<f64> {
        let ratio = t_p / self.tau_inf;
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::domain(format!(
                "pulse width {t_p} s must exceed the attempt time {} s",
                self.tau_inf
            )));
        }
        Ok(ratio.ln().log10() / self.alpha)
    }

    /// Median threshold `μ(t_p) = μ* − (1/α)·log10(ln(t_p/τ∞))` in decades.
    pub fn median_log_threshold(&self, t_p: f64) -> Result<f64> {
        Ok(self.mu_star() - self.log_threshold_shift(t_p)?)
    }

    /// `V50(t_p) = Eₐ·t_film / ln(t_p/τ∞)^(1/α)`.
    pub fn threshold_voltage(&self, t_p: f64) -> Result<f64> {
        let ratio = t_p / self.tau_inf;
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::domain(format!(
                "pulse width {t_p} s must exceed the attempt time {} s",
                self.tau_inf
            )));
        }
        Ok(self.activation_field * self.film_thickness / ratio.ln().powf(1.0 / self.alpha))
    }
}

pub fn tau_of_field(k: &MerzKinetics, e: f64) -> Result<f64> {
    k.tau_of_field(e)
}

pub fn threshold_voltage(k: &MerzKinetics, t_p: f64) -> Result<f64> {
    k.threshold_voltage(t_p)
}

/// Cauchy distribution of thresholds on the `log10 V_p` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdDistribution {
    /// Median of `log10 V_p` (decades).
    pub mu: f64,
    /// Half-width at half-maximum (decades).
    pub w: f64,
}

impl ThresholdDistribution {
    pub fn new(mu: f64, w: f64) -> Result<Self> {
        if !mu.is_finite() || !(w > 0.0) || !w.is_finite() {
            return Err(Error::domain(format!(
                "threshold distribution needs finite mu and w > 0, got mu={mu}, w={w}"
            )));
        }
        Ok(ThresholdDistribution { mu, w })
    }

    /// Half-switching voltage `10^μ`.
    pub fn v50(&self) -> f64 {
        10f64.powf(self.mu)
    }

    /// Switched fraction at `x = log10 V_p`.
    pub fn cdf_log(&self, x: f64) -> f64 {
        0.5 + ((x - self.mu) / self.w).atan() / PI
    }

    pub fn cdf(&self, v_p: f64) -> Result<f64> {
        if !(v_p > 0.0) {
            return Err(Error::domain(format!("voltage must be positive, got {v_p}")));
        }
        Ok(self.cdf_log(v_p.log10()))
    }

    /// Density per decade at `x = log10 V_p`.
    pub fn pdf(&self, x: f64) -> f64 {
        let d = x - self.mu;
        self.w / (PI * (d * d + self.w * self.w))
    }

    /// Inverse of [`Self::cdf_log`] on the open interval (0, 1).
    pub fn quantile_log(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::domain(format!("fraction must lie in (0,1), got {s}")));
        }
        Ok(self.mu + self.w * (PI * (s - 0.5)).tan())
    }
}

pub fn switched_fraction_cdf(d: &ThresholdDistribution, v_p: f64) -> Result<f64> {
    d.cdf(v_p)
}

pub fn threshold_pdf(d: &ThresholdDistribution, x: f64) -> f64 {
    d.pdf(x)
}

/// Offset–span model `δ = y0 + A·S`.
pub fn displacement_of_fraction(y0: f64, span: f64, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::domain(format!("switched fraction must lie in [0,1], got {s}")));
    }
    Ok(y0 + span * s)
}

/// Device-level constants for reading and programming one beam.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCalibration {
    /// Displacement of the fully reset state (nm).
    pub delta_min: f64,
    /// Displacement of the fully poled state (nm).
    pub delta_max: f64,
    /// Read drive amplitude (V).
    pub v_ac: f64,
    /// Ferroelectric thickness (m).
    pub film_thickness: f64,
    /// Geometric gain. Opaque calibration scalar, folded into the span.
    pub k_geom: f64,
    /// Standard deviation of read noise (nm).
    pub read_noise_sigma: f64,
    pub dac_bits: u32,
    /// `(V_min, V_max)` covered by the DAC codes, both inclusive.
    pub dac_range: (f64, f64),
}

impl Default for DeviceCalibration {
    fn default() -> Self {
        let row = &crate::reference::REFERENCE_ROWS[4];
        DeviceCalibration {
            delta_min: row.y0,
            delta_max: row.y0 + row.span,
            v_ac: 0.25,
            film_thickness: crate::reference::FILM_THICKNESS,
            k_geom: 1.0,
            read_noise_sigma: 0.0,
            dac_bits: 18,
            dac_range: (0.5, 9.0),
        }
    }
}

impl DeviceCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_max > self.delta_min) {
            return Err(Error::config("delta_max must exceed delta_min"));
        }
        if !(self.v_ac > 0.0) {
            return Err(Error::config("V_ac must be positive"));
        }
        if !(self.read_noise_sigma >= 0.0) {
            return Err(Error::config("read noise sigma must be non-negative"));
        }
        if !(1..=52).contains(&self.dac_bits) {
            return Err(Error::config(format!(
                "DAC resolution must be between 1 and 52 bits, got {}",
                self.dac_bits
            )));
        }
        let (lo, hi) = self.dac_range;
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!("invalid DAC range ({lo}, {hi})")));
        }
        if !(self.film_thickness > 0.0) {
            return Err(Error::config("film thickness must be positive"));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.delta_max - self.delta_min
    }

    pub fn dac_codes(&self) -> u64 {
        1u64 << self.dac_bits
    }

    /// Voltage of DAC code `k`; codes are evenly spaced and both range
    /// endpoints are codes.
    pub fn code_voltage(&self, code: u64) -> f64 {
        let (lo, hi) = self.dac_range;
        let last = self.dac_codes() - 1;
        if code >= last {
            return hi;
        }
        lo + (hi - lo) * (code as f64 / last as f64)
    }

    /// Code whose voltage is nearest to `v`, or `None` outside the range.
    pub fn nearest_code(&self, v: f64) -> Option<u64> {
        let (lo, hi) = self.dac_range;
        if !(v >= lo && v <= hi) {
            return None;
        }
        let last = self.dac_codes() - 1;
        let code = ((v - lo) / (hi - lo) * last as f64).round() as u64;
        Some(code.min(last))
    }

    /// Voltage distance between adjacent codes.
    pub fn code_step(&self) -> f64 {
        (self.dac_range.1 - self.dac_range.0) / (self.dac_codes() - 1) as f64
    }
}

/// Quadrature band for the NLS integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Band half-width in multiples of the distribution scale.
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            half_width: TRUNCATION_HALF_WIDTH,
            nodes: 512,
        }
    }
}

/// Nucleation-limited switching with a Cauchy distribution of log switching
/// times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsSpec {
    /// Effective dimensionality exponent.
    pub n: f64,
    /// Median of `log10 τ` (decades of seconds).
    pub center_log10_tau: f64,
    /// Cauchy scale in decades.
    pub scale: f64,
    pub quadrature: Quadrature,
}

impl NlsSpec {
    pub fn new(n: f64, center_log10_tau: f64, scale: f64) -> Result<Self> {
        let spec = NlsSpec {
            n,
            center_log10_tau,
            scale,
            quadrature: Quadrature::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0) || !self.n.is_finite() {
            return Err(Error::config(format!("NLS exponent must be positive, got {}", self.n)));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() || !self.center_log10_tau.is_finite() {
            return Err(Error::config("NLS distribution needs finite center and positive scale"));
        }
        if self.quadrature.nodes < 32 {
            return Err(Error::config(format!(
                "quadrature needs at least 32 nodes, got {}",
                self.quadrature.nodes
            )));
        }
        if !(self.quadrature.half_width > 0.0) || !self.quadrature.half_width.is_finite() {
            return Err(Error::config("quadrature band half-width must be positive"));
        }
        Ok(())
    }
}

/// Switched fraction after a pulse of duration `t`:
/// `∫ [1 − exp(−(t/τ)^n)] F(ln τ) d(ln τ)` over the truncated band, with the
/// truncated density renormalized to unit mass. Trapezoid rule on a uniform
/// grid.
pub fn nls_switched_fraction(spec: &NlsSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let ln_t = t.ln();
    let q = spec.quadrature;
    let h = 2.0 * q.half_width / (q.nodes - 1) as f64;
    let mut mass = 0.0;
    let mut acc = 0.0;
    for j in 0..q.nodes {
        let xi = -q.half_width + j as f64 * h;
        let edge = if j == 0 || j == q.nodes - 1 { 0.5 } else { 1.0 };
        let density = edge / (1.0 + xi * xi);
        let ln_tau = LN_10 * (spec.center_log10_tau + spec.scale * xi);
        let ratio_pow = (spec.n * (ln_t - ln_tau)).exp();
        let switched = -(-ratio_pow).exp_m1();
        mass += density;
        acc += density * switched;
    }
    Ok((acc / mass).clamp(0.0, 1.0))
}

/// Classical KAI switched fraction `1 − exp(−(t/τ₀)^n)`.
pub fn kai_switched_fraction(t: f64, tau0: f64, n: f64) -> f64 {
    -(-(t / tau0).powf(n)).exp_m1()
}
