//! Merz-law regression of fitted medians and the universal collapse.
//!
//! Medians obey `μ(t_p) = μ* − (1/α)·X(t_p)` with
//! `X(t_p) = log10(ln(t_p/τ∞))`. With τ∞ known the relation is an ordinary
//! linear regression; otherwise τ∞ is found by minimizing the residual of
//! that regression over `log10 τ∞`.

use std::f64::consts::PI;

use crate::curve::SwitchCurve;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::LorentzianFit;
use crate::model::MerzKinetics;

/// Below this slope magnitude α is reported as infinite.
pub const DEGENERATE_SLOPE: f64 = 1e-6;

const GRID_POINTS: usize = 121;
const GOLDEN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct MerzRegression {
    /// `−1/slope`, or `+∞` when the slope is degenerate.
    pub alpha: f64,
    pub tau_inf: f64,
    /// Intercept, `log10(Eₐ·t_film)`.
    pub mu_star: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// Residual sum of squares of the linear fit (decades²).
    pub rss: f64,
    /// `X(t_p)` for every input point, in input order.
    pub x_values: Vec<f64>,
    /// The `(t_p, μ)` inputs.
    pub points: Vec<(f64, f64)>,
    /// `|slope|` below [`DEGENERATE_SLOPE`]: the medians do not depend on `t_p`.
    pub degenerate: bool,
}

impl MerzRegression {
    pub fn fitted_mu(&self, x: f64) -> f64 {
        self.mu_star + self.slope * x
    }

    /// Kinetics implied by the regression for a film of the given thickness.
    pub fn kinetics(&self, film_thickness: f64) -> Result<MerzKinetics> {
        if self.degenerate || !(self.alpha > 0.0) {
            return Err(Error::domain(format!(
                "regression does not define physical kinetics (slope {})",
                self.slope
            )));
        }
        MerzKinetics::from_mu_star(self.alpha, self.tau_inf, self.mu_star, film_thickness)
    }
}

fn validate_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::config(format!(
            "Merz regression needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|(t, m)| !(*t > 0.0) || !t.is_finite() || !m.is_finite())
    {
        return Err(Error::domain("pulse widths must be positive and medians finite"));
    }
    let mut t: Vec<f64> = points.iter().map(|p| p.0).collect();
    t.sort_by(f64::total_cmp);
    if t.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("pulse widths must be distinct"));
    }
    Ok(())
}

/// Ordinary least squares of `μ` on `X(t_p)` at fixed `τ∞`.
pub fn regress_mu_fixed_tau(points: &[(f64, f64)], tau_inf: f64) -> Result<MerzRegression> {
    validate_points(points)?;
    if !(tau_inf > 0.0) {
        return Err(Error::domain(format!("attempt time must be positive, got {tau_inf}")));
    }
    let mut x_values = Vec::with_capacity(points.len());
    for &(t_p, _) in points {
        let r = t_p / tau_inf;
        if !(r > 1.0) {
            return Err(Error::domain(format!(
                "pulse width {t_p} s does not exceed τ∞ = {tau_inf} s"
            )));
        }
        x_values.push(r.ln().log10());
    }
    let n = points.len() as f64;
    let mx = x_values.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = x_values.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = x_values.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Rank("X values are identical".into()));
    }
    let slope = sxy / sxx;
    let mu_star = my - slope * mx;
    let rss: f64 = x_values
        .iter()
        .zip(points)
        .map(|(x, p)| (p.1 - mu_star - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - rss / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let degenerate = slope.abs() < DEGENERATE_SLOPE;
    Ok(MerzRegression {
        alpha: if degenerate { f64::INFINITY } else { -1.0 / slope },
        tau_inf,
        mu_star,
        slope,
        r_squared,
        rss,
        x_values,
        points: points.to_vec(),
        degenerate,
    })
}

/// Default `log10 τ∞` search interval (s).
pub const DEFAULT_TAU_SEARCH: (f64, f64) = (-16.0, -10.0);

pub fn fit_merz_nested(points: &[(f64, f64)], tau_search: (f64, f64)) -> Result<MerzRegression> {
    fit_merz_nested_with(points, tau_search, Exec::default())
}

/// Profiles the regression residual over `log10 τ∞`: a 121-point grid scan
/// followed by golden-section refinement around the best grid point.
pub fn fit_merz_nested_with(points: &[(f64, f64)], tau_search: (f64, f64), exec: Exec) -> Result<MerzRegression> {
    validate_points(points)?;
    let (lo, hi) = tau_search;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config(format!("invalid τ∞ search interval [{lo}, {hi}]")));
    }
    let t_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    // τ∞ must stay strictly below the shortest pulse.
    let ceiling = t_min.log10() - 1e-6;
    let hi = hi.min(ceiling);
    if !(lo < hi) {
        return Err(Error::domain(format!(
            "no feasible τ∞ in the search interval: every candidate is ≥ the shortest pulse {t_min} s"
        )));
    }

    let profile = |log_tau: f64| -> f64 {
        regress_mu_fixed_tau(points, 10f64.powf(log_tau))
            .map(|r| r.rss)
            .unwrap_or(f64::INFINITY)
    };
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let costs = exec.map(&grid, |&g| profile(g));
    let best = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid is non-empty");

    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID_POINTS - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (profile(c), profile(d));
    while b - a > GOLDEN_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile(d);
        }
    }
    let refined = 0.5 * (a + b);
    let log_tau = if profile(refined) <= costs[best] {
        refined
    } else {
        grid[best]
    };
    regress_mu_fixed_tau(points, 10f64.powf(log_tau))
}

/// A sample in reduced coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapsePoint {
    /// `(log10 V_p − μ)/w`.
    pub z: f64,
    /// `(value − y0)/A`.
    pub s_bar: f64,
}

impl CollapsePoint {
    /// Within the band a noisy normalized displacement is expected to occupy.
    pub fn in_band(&self) -> bool {
        self.z.is_finite() && (-0.2..=1.2).contains(&self.s_bar)
    }
}

/// The parameter-free master curve `1/2 + atan(z)/π`.
pub fn master_curve(z: f64) -> f64 {
    0.5 + z.atan() / PI
}

/// Maps every sample of `curve` to reduced coordinates using `fit`, which is
/// expected to belong to the same pulse width.
pub fn collapse_transform(curve: &SwitchCurve, fit: &LorentzianFit) -> Vec<CollapsePoint> {
    curve
        .samples()
        .iter()
        .map(|s| CollapsePoint {
            z: (s.v_p.log10() - fit.mu) / fit.w,
            s_bar: (s.value - fit.y0) / fit.span,
        })
        .collect()
}

/// RMS deviation of the points from the master curve.
pub fn collapse_rms(points: &[CollapsePoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::config("collapse RMS needs at least one point"));
    }
    let ss: f64 = points.iter().map(|p| (p.s_bar - master_curve(p.z)).powi(2)).sum();
    Ok((ss / points.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{stepped_grid, ObservableKind, Sample};
    use crate::reference::{median_points, FILM_THICKNESS, REFERENCE_ROWS};

    #[test]
    fn collinear_points() {
        let tau: f64 = 1e-14;
        let pts: Vec<(f64, f64)> = [1e-5f64, 1e-4, 1e-3, 1e-2]
            .iter()
            .map(|&t| (t, 1.2 - 0.25 * (t / tau).ln().log10()))
            .collect();
        let r = regress_mu_fixed_tau(&pts, tau).unwrap();
        assert!((r.slope + 0.25).abs() < 1e-12);
        assert!((r.alpha - 4.0).abs() < 1e-10);
        assert!((r.mu_star - 1.2).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!((r.slope * r.alpha + 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_errors() {
        let pts = median_points();
        assert!(matches!(regress_mu_fixed_tau(&pts[..2], 1e-14), Err(Error::Config(_))));
        assert!(matches!(regress_mu_fixed_tau(&pts, 1e-5), Err(Error::Domain(_))));
        let dup = vec![pts[0], pts[0], pts[1]];
        assert!(regress_mu_fixed_tau(&dup, 1e-14).is_err());
    }

    #[test]
    fn flat_medians_are_flagged() {
        let pts: Vec<(f64, f64)> = [1e-5, 2e-5, 1e-4].iter().map(|&t| (t, 0.7)).collect();
        let r = regress_mu_fixed_tau(&pts, 1e-14).unwrap();
        assert!(r.degenerate && r.alpha.is_infinite());
        assert!(r.kinetics(FILM_THICKNESS).is_err());
        let n = fit_merz_nested(&pts, DEFAULT_TAU_SEARCH).unwrap();
        assert!(n.degenerate);
    }

    #[test]
    fn kinetics_round_trip() {
        let r = regress_mu_fixed_tau(&median_points(), 14e-15).unwrap();
        let k = r.kinetics(FILM_THICKNESS).unwrap();
        let resid_max = r
            .x_values
            .iter()
            .zip(&r.points)
            .map(|(x, p)| (p.1 - r.fitted_mu(*x)).abs())
            .fold(0.0, f64::max);
        for &(t, mu) in &r.points {
            let v = k.threshold_voltage(t).unwrap().log10();
            assert!((v - mu).abs() <= resid_max + 1e-12);
        }
        assert!(r.slope < 0.0);
    }

    #[test]
    fn nested_infeasible_interval() {
        assert!(matches!(
            fit_merz_nested(&median_points(), (-4.0, -3.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn nested_is_scale_invariant() {
        let c = 1000.0;
        let pts = median_points();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(t, m)| (t * c, m)).collect();
        let a = fit_merz_nested(&pts, DEFAULT_TAU_SEARCH).unwrap();
        let b = fit_merz_nested(&scaled, (DEFAULT_TAU_SEARCH.0 + 3.0, DEFAULT_TAU_SEARCH.1 + 3.0)).unwrap();
        assert!((a.tau_inf.log10() + 3.0 - b.tau_inf.log10()).abs() < 2e-3);
        assert!((a.alpha - b.alpha).abs() < 0.02);
    }

    #[test]
    fn nested_sequential_matches_parallel() {
        let pts = median_points();
        let a = fit_merz_nested_with(&pts, DEFAULT_TAU_SEARCH, Exec::Sequential).unwrap();
        let b = fit_merz_nested_with(&pts, DEFAULT_TAU_SEARCH, Exec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collapse_center_and_unit_width() {
        let fit = LorentzianFit::new(5e-4, -19.0, 24.0, 0.69, 0.04, 0.0).unwrap();
        let v0 = 10f64.powf(0.69);
        let v1 = 10f64.powf(0.73);
        let samples = vec![
            Sample::new(1.0, -19.0),
            Sample::new(v0, -7.0),
            Sample::new(v1, -19.0 + 24.0 * 0.75),
            Sample::new(9.0, 5.0),
        ];
        let c = SwitchCurve::new(5e-4, ObservableKind::Displacement, samples).unwrap();
        let pts = collapse_transform(&c, &fit);
        assert!(pts[1].z.abs() < 1e-12 && (pts[1].s_bar - 0.5).abs() < 1e-12);
        assert!((pts[2].z - 1.0).abs() < 1e-9 && (master_curve(pts[2].z) - 0.75).abs() < 1e-9);
        assert!(pts.iter().all(|p| p.in_band()));
    }

    #[test]
    fn collapse_rms_cases() {
        assert!(collapse_rms(&[]).is_err());
        assert_eq!(collapse_rms(&[CollapsePoint { z: 0.0, s_bar: 1.0 }]).unwrap(), 0.5);
        let on: Vec<CollapsePoint> = (-50..=50)
            .map(|i| {
                let z = i as f64 * 0.3;
                CollapsePoint {
                    z,
                    s_bar: master_curve(z),
                }
            })
            .collect();
        assert_eq!(collapse_rms(&on).unwrap(), 0.0);
    }

    #[test]
    fn reference_family_collapses() {
        let grid = stepped_grid(0.5, 9.0, 0.01);
        let mut all = Vec::new();
        for r in REFERENCE_ROWS {
            let fit = LorentzianFit::new(r.t_p, r.y0, r.span, r.mu, r.w, 0.0).unwrap();
            let s = grid.iter().map(|&v| Sample::new(v, fit.model(v))).collect();
            let c = SwitchCurve::new(r.t_p, ObservableKind::Displacement, s).unwrap();
            all.extend(collapse_transform(&c, &fit));
        }
        assert!(collapse_rms(&all).unwrap() < 1e-12);
    }
}
