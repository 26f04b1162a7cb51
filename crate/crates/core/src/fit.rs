//! Lorentzian-CDF fitting of switch curves, coercive-voltage markers and
//! affine maps between observables.
//!
//! The displacement model is
//!
//! ```text
//! δ(V_p) = y0 + A·[1/2 + (1/π)·atan((log10 V_p − μ)/w)]
//! ```
//!
//! fitted by unweighted least squares with `w` parameterized as `ln w`.
//! Coercive voltages are always interpolated from the data, never read off
//! the fitted model: the model is symmetric while measured curves are not.

use std::f64::consts::PI;

use crate::curve::{ObservableKind, Sample, SwitchCurve};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lm::{self, LeastSquares, LmOptions};
use crate::model::ThresholdDistribution;

/// Minimum number of samples accepted by the fitter.
pub const MIN_FIT_SAMPLES: usize = 8;
/// Fraction of the fitted sigmoid the data must cover.
pub const MIN_COVERAGE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianFit {
    /// Offset (nm).
    pub y0: f64,
    /// Span (nm).
    pub span: f64,
    /// Median of log10 V_p (decades).
    pub mu: f64,
    /// Half-width (decades).
    pub w: f64,
    /// `10^mu` (V).
    pub v50: f64,
    /// Root-mean-square residual (value units).
    pub rms_residual: f64,
    /// Pulse width (s).
    pub t_p: f64,
}

impl LorentzianFit {
    pub fn new(t_p: f64, y0: f64, span: f64, mu: f64, w: f64, rms_residual: f64) -> Result<Self> {
        if !(w > 0.0) || !(span > 0.0) || !mu.is_finite() || !y0.is_finite() {
            return Err(Error::domain(format!(
                "fit needs w > 0 and A > 0 (y0={y0}, A={span}, mu={mu}, w={w})"
            )));
        }
        Ok(LorentzianFit {
            y0,
            span,
            mu,
            w,
            v50: 10f64.powf(mu),
            rms_residual,
            t_p,
        })
    }

    pub fn distribution(&self) -> ThresholdDistribution {
        ThresholdDistribution { mu: self.mu, w: self.w }
    }

    /// Model value at `x = log10 V_p`.
    pub fn model_log(&self, x: f64) -> f64 {
        self.y0 + self.span * self.distribution().cdf_log(x)
    }

    pub fn model(&self, v_p: f64) -> f64 {
        self.model_log(v_p.log10())
    }
}

/// Starting values for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSeeds {
    pub y0: f64,
    pub span: f64,
    pub mu: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Overrides the geometric seeds.
    pub init: Option<FitSeeds>,
    /// Fixes `(y0, A)`; only `(μ, w)` are fitted.
    pub lock: Option<(f64, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-10,
            max_iterations: 500,
            init: None,
            lock: None,
        }
    }
}

impl FitOptions {
    fn lm(&self) -> LmOptions {
        LmOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

struct Prepared {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Prepared {
    fn new(curve: &SwitchCurve) -> Result<Self> {
        if curve.len() < MIN_FIT_SAMPLES {
            return Err(Error::config(format!(
                "fitting needs at least {MIN_FIT_SAMPLES} samples, got {}",
                curve.len()
            )));
        }
        let x: Vec<f64> = curve.voltages().map(f64::log10).collect();
        let y: Vec<f64> = curve.values().collect();
        let (lo, hi) = min_max(&y);
        if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1.0)) {
            return Err(Error::Rank(format!(
                "curve at t_p = {} s is flat; span, median and width are not identifiable",
                curve.t_p()
            )));
        }
        Ok(Prepared { x, y })
    }

    fn rms(&self, cost: f64) -> f64 {
        (cost / self.y.len() as f64).sqrt()
    }
}

/// Value of the Lorentzian sigmoid and its partial derivatives with respect
/// to `(μ, ln w)`, per unit span.
#[inline]
fn sigmoid_terms(x: f64, mu: f64, w: f64) -> (f64, f64, f64) {
    let z = (x - mu) / w;
    let s = 0.5 + z.atan() / PI;
    let ds = 1.0 / (PI * (1.0 + z * z));
    (s, -ds / w, -ds * z)
}

/// Free `(y0, A, μ, ln w)`, or `(μ, ln w)` with locked offsets.
struct SingleCurve<'a> {
    data: &'a Prepared,
    lock: Option<(f64, f64)>,
}

impl SingleCurve<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64, f64) {
        match self.lock {
            Some((y0, a)) => (y0, a, p[0], p[1].exp()),
            None => (p[0], p[1], p[2], p[3].exp()),
        }
    }
}

impl LeastSquares for SingleCurve<'_> {
    fn n_params(&self) -> usize {
        if self.lock.is_some() {
            2
        } else {
            4
        }
    }

    fn n_residuals(&self) -> usize {
        self.data.y.len()
    }

    fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
        let (y0, a, mu, w) = self.unpack(p);
        let np = self.n_params();
        match jac {
            Some(j) => {
                for (i, (&x, &y)) in self.data.x.iter().zip(&self.data.y).enumerate() {
                    let (s, d_mu, d_lnw) = sigmoid_terms(x, mu, w);
                    r[i] = y0 + a * s - y;
                    let row = &mut j[i * np..(i + 1) * np];
                    if self.lock.is_some() {
                        row[0] = a * d_mu;
                        row[1] = a * d_lnw;
                    } else {
                        row[0] = 1.0;
                        row[1] = s;
                        row[2] = a * d_mu;
                        row[3] = a * d_lnw;
                    }
                }
            }
            None => {
                for (i, (&x, &y)) in self.data.x.iter().zip(&self.data.y).enumerate() {
                    let (s, _, _) = sigmoid_terms(x, mu, w);
                    r[i] = y0 + a * s - y;
                }
            }
        }
    }
}

/// Seeds from curve geometry: `y0` from the first sample, `A` from the
/// end-to-end rise, `μ` from the mid-span crossing and `w` from half the
/// log distance between the 25 % and 75 % crossings.
pub fn geometric_seeds(curve: &SwitchCurve) -> Result<FitSeeds> {
    let s = curve.samples();
    let first = s[0].value;
    let last = s[s.len() - 1].value;
    let span = last - first;
    if !(span > 0.0) {
        return Err(Error::Rank(format!(
            "curve at t_p = {} s does not rise (first {first}, last {last})",
            curve.t_p()
        )));
    }
    let at = |frac: f64| first_crossing_log(s, first + frac * span);
    let x_lo = s[0].v_p.log10();
    let x_hi = s[s.len() - 1].v_p.log10();
    let mu = at(0.5).unwrap_or(0.5 * (x_lo + x_hi));
    let w = match (at(0.25), at(0.75)) {
        (Some(a), Some(b)) if b > a => 0.5 * (b - a),
        _ => 0.1 * (x_hi - x_lo),
    };
    Ok(FitSeeds {
        y0: first,
        span,
        mu,
        w: w.max(1e-6),
    })
}

fn first_crossing_log(s: &[Sample], level: f64) -> Option<f64> {
    s.windows(2).find_map(|p| {
        let (a, b) = (p[0], p[1]);
        if (a.value - level) * (b.value - level) <= 0.0 && a.value != b.value {
            let f = (level - a.value) / (b.value - a.value);
            let (xa, xb) = (a.v_p.log10(), b.v_p.log10());
            Some(xa + f * (xb - xa))
        } else {
            None
        }
    })
}

fn check_fit(fit: LorentzianFit, curve: &SwitchCurve) -> Result<LorentzianFit> {
    let d = fit.distribution();
    let s = curve.samples();
    let covered = d.cdf_log(s[s.len() - 1].v_p.log10()) - d.cdf_log(s[0].v_p.log10());
    if covered < MIN_COVERAGE {
        return Err(Error::Coverage { covered });
    }
    Ok(fit)
}

/// Fits the Lorentzian CDF model to one curve.
pub fn fit_lorentzian_cdf(curve: &SwitchCurve, opts: &FitOptions) -> Result<LorentzianFit> {
    let data = Prepared::new(curve)?;
    let seeds = match opts.init {
        Some(s) => s,
        None => geometric_seeds(curve)?,
    };
    if !(seeds.w > 0.0) {
        return Err(Error::config("seed width must be positive"));
    }
    let problem = SingleCurve {
        data: &data,
        lock: opts.lock,
    };
    let p0: Vec<f64> = match opts.lock {
        Some(_) => vec![seeds.mu, seeds.w.ln()],
        None => vec![seeds.y0, seeds.span, seeds.mu, seeds.w.ln()],
    };
    let out = lm::minimize(&problem, &p0, opts.lm());
    let (y0, span, mu, w) = problem.unpack(&out.params);
    let rms = data.rms(out.cost);
    if !(span > 0.0) {
        return Err(Error::Rank(format!(
            "fit at t_p = {} s collapsed to a non-positive span ({span})",
            curve.t_p()
        )));
    }
    let fit = LorentzianFit::new(curve.t_p(), y0, span, mu, w, rms)?;
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            best: Box::new(fit),
        });
    }
    check_fit(fit, curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FamilyOptions {
    /// One `(y0, A)` for all curves with per-curve `(μ, w)`.
    pub share_offsets: bool,
    pub fit: FitOptions,
}

/// Fits a family of curves, returned in increasing `t_p` order.
pub fn fit_family(curves: &[SwitchCurve], share_offsets: bool) -> Result<Vec<LorentzianFit>> {
    fit_family_with(
        curves,
        &FamilyOptions {
            share_offsets,
            fit: FitOptions::default(),
        },
        Exec::default(),
    )
}

pub fn fit_family_with(curves: &[SwitchCurve], opts: &FamilyOptions, exec: Exec) -> Result<Vec<LorentzianFit>> {
    if curves.len() < 2 {
        return Err(Error::config("a family fit needs at least two curves"));
    }
    let mut ordered: Vec<&SwitchCurve> = curves.iter().collect();
    ordered.sort_by(|a, b| a.t_p().total_cmp(&b.t_p()));
    if ordered.windows(2).any(|w| w[0].t_p() == w[1].t_p()) {
        return Err(Error::config("curves in a family must have distinct pulse widths"));
    }

    let mut single = opts.fit;
    single.lock = None;
    let independent: Vec<Result<LorentzianFit>> = exec.map(&ordered, |c| fit_lorentzian_cdf(c, &single));
    if !opts.share_offsets {
        return independent.into_iter().collect();
    }

    let data: Vec<Prepared> = ordered.iter().map(|c| Prepared::new(c)).collect::<Result<_>>()?;
    let mut seeds = Vec::with_capacity(ordered.len());
    for (c, r) in ordered.iter().zip(&independent) {
        seeds.push(match r {
            Ok(f) => FitSeeds {
                y0: f.y0,
                span: f.span,
                mu: f.mu,
                w: f.w,
            },
            Err(Error::NotConverged { best, .. }) => FitSeeds {
                y0: best.y0,
                span: best.span,
                mu: best.mu,
                w: best.w,
            },
            Err(_) => geometric_seeds(c)?,
        });
    }
    let m = seeds.len() as f64;
    let mut p0 = vec![
        seeds.iter().map(|s| s.y0).sum::<f64>() / m,
        seeds.iter().map(|s| s.span).sum::<f64>() / m,
    ];
    for s in &seeds {
        p0.push(s.mu);
        p0.push(s.w.ln());
    }
    let problem = JointFamily { curves: &data };
    let out = lm::minimize(&problem, &p0, opts.fit.lm());
    let (y0, span) = (out.params[0], out.params[1]);
    if !(span > 0.0) {
        return Err(Error::Rank(format!(
            "joint fit collapsed to a non-positive span ({span})"
        )));
    }
    let mut fits = Vec::with_capacity(ordered.len());
    for (k, (c, d)) in ordered.iter().zip(&data).enumerate() {
        let mu = out.params[2 + 2 * k];
        let w = out.params[3 + 2 * k].exp();
        let cost: f64 =
            d.x.iter()
                .zip(&d.y)
                .map(|(&x, &y)| {
                    let r = y0 + span * sigmoid_terms(x, mu, w).0 - y;
                    r * r
                })
                .sum();
        fits.push(LorentzianFit::new(c.t_p(), y0, span, mu, w, d.rms(cost))?);
    }
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            best: Box::new(fits[0]),
        });
    }
    fits.into_iter().zip(&ordered).map(|(f, c)| check_fit(f, c)).collect()
}

/// Shared `(y0, A)` followed by `(μ_k, ln w_k)` per curve.
struct JointFamily<'a> {
    curves: &'a [Prepared],
}

impl LeastSquares for JointFamily<'_> {
    fn n_params(&self) -> usize {
        2 + 2 * self.curves.len()
    }

    fn n_residuals(&self) -> usize {
        self.curves.iter().map(|c| c.y.len()).sum()
    }

    fn eval(&self, p: &[f64], r: &mut [f64], mut jac: Option<&mut [f64]>) {
        let np = self.n_params();
        let (y0, a) = (p[0], p[1]);
        if let Some(j) = jac.as_deref_mut() {
            j.fill(0.0);
        }
        let mut row = 0;
        for (k, c) in self.curves.iter().enumerate() {
            let mu = p[2 + 2 * k];
            let w = p[3 + 2 * k].exp();
            for (&x, &y) in c.x.iter().zip(&c.y) {
                let (s, d_mu, d_lnw) = sigmoid_terms(x, mu, w);
                r[row] = y0 + a * s - y;
                if let Some(j) = jac.as_deref_mut() {
                    let jr = &mut j[row * np..(row + 1) * np];
                    jr[0] = 1.0;
                    jr[1] = s;
                    jr[2 + 2 * k] = a * d_mu;
                    jr[3 + 2 * k] = a * d_lnw;
                }
                row += 1;
            }
        }
    }
}

/// Where `value − level` changes sign, by linear interpolation between the
/// bracketing samples. Samples must be ordered by voltage.
pub fn level_crossing(samples: &[Sample], level: f64) -> Result<f64> {
    let mut last: Option<(usize, f64)> = None;
    let mut found: Option<f64> = None;
    let mut crossings = 0usize;
    for (i, s) in samples.iter().enumerate() {
        let d = s.value - level;
        if d == 0.0 {
            continue;
        }
        let sign = d.signum();
        if let Some((j, prev)) = last {
            if prev != sign {
                crossings += 1;
                let v = if j + 1 == i {
                    let (a, b) = (samples[j], samples[i]);
                    a.v_p + (level - a.value) / (b.value - a.value) * (b.v_p - a.v_p)
                } else {
                    // Samples j+1..i sit exactly on the level.
                    samples[j + 1].v_p
                };
                found.get_or_insert(v);
            }
        }
        last = Some((i, sign));
    }
    match crossings {
        0 => Err(Error::MarkerAbsent(format!("values never cross {level}"))),
        1 => Ok(found.expect("one crossing recorded")),
        n => Err(Error::Ambiguous(format!("values cross {level} {n} times"))),
    }
}

/// Mechanical coercive voltage: where the displacement crosses zero.
pub fn zero_crossing(samples: &[Sample]) -> Result<f64> {
    level_crossing(samples, 0.0)
}

/// Electrical coercive voltage: where the value reaches `(min + max)/2`.
pub fn half_saturation_crossing(samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::MarkerAbsent("empty curve".into()));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let (lo, hi) = min_max(&values);
    if lo == hi {
        return Err(Error::MarkerAbsent("curve is flat".into()));
    }
    level_crossing(samples, 0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurveMarkers {
    pub vc_mech: Option<f64>,
    pub vc_elec: Option<f64>,
}

/// Extracts the marker appropriate to the curve's observable; a missing
/// crossing leaves the marker absent.
pub fn curve_markers(curve: &SwitchCurve) -> CurveMarkers {
    match curve.kind() {
        ObservableKind::Displacement => CurveMarkers {
            vc_mech: zero_crossing(curve.samples()).ok(),
            vc_elec: None,
        },
        ObservableKind::PolarizationChange => CurveMarkers {
            vc_mech: None,
            vc_elec: half_saturation_crossing(curve.samples()).ok(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub gain: f64,
    pub offset: f64,
    pub r_squared: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.gain * x + self.offset
    }
}

/// Ordinary least squares of `target` on `source`. When the grids differ the
/// finer curve is linearly interpolated onto the coarser grid inside the
/// common span.
pub fn affine_map_fit(source: &SwitchCurve, target: &SwitchCurve) -> Result<AffineMap> {
    let same_grid = source.len() == target.len() && source.voltages().zip(target.voltages()).all(|(a, b)| a == b);
    let pairs: Vec<(f64, f64)> = if same_grid {
        source.values().zip(target.values()).collect()
    } else if source.len() <= target.len() {
        source
            .samples()
            .iter()
            .filter_map(|s| target.interpolate(s.v_p).map(|t| (s.value, t)))
            .collect()
    } else {
        target
            .samples()
            .iter()
            .filter_map(|t| source.interpolate(t.v_p).map(|s| (s, t.value)))
            .collect()
    };
    if pairs.len() < 2 {
        return Err(Error::Rank("curves share fewer than two voltages".into()));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 1e-24 * (mx * mx * n).max(1e-300)) {
        return Err(Error::Rank("source curve is constant".into()));
    }
    let gain = sxy / sxx;
    let offset = my - gain * mx;
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - gain * p.0 - offset).powi(2)).sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(AffineMap {
        gain,
        offset,
        r_squared,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}
