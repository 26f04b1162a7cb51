//! Published Lorentzian fit parameters of a 17 nm HZO unimorph, one row per
//! programming pulse width. Used as defaults, fixtures and generators for
//! synthetic data.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    /// Pulse width (s).
    pub t_p: f64,
    /// Offset (nm).
    pub y0: f64,
    /// Span (nm).
    pub span: f64,
    /// Median of log10 V_p (decades).
    pub mu: f64,
    /// Half-width (decades).
    pub w: f64,
    /// Reported half-switching voltage (V), rounded.
    pub v50: f64,
    /// Reported mechanical coercive voltage (V).
    pub vc_mech: f64,
}

pub const REFERENCE_ROWS: [ReferenceRow; 5] = [
    ReferenceRow {
        t_p: 10e-6,
        y0: -17.0472,
        span: 23.7906,
        mu: 0.707319,
        w: 0.042982,
        v50: 5.097,
        vc_mech: 5.47,
    },
    ReferenceRow {
        t_p: 20e-6,
        y0: -17.5778,
        span: 24.2118,
        mu: 0.706183,
        w: 0.041078,
        v50: 5.084,
        vc_mech: 5.395,
    },
    ReferenceRow {
        t_p: 100e-6,
        y0: -18.2397,
        span: 24.3556,
        mu: 0.693400,
        w: 0.039788,
        v50: 4.936,
        vc_mech: 5.175,
    },
    ReferenceRow {
        t_p: 200e-6,
        y0: -18.4336,
        span: 24.4328,
        mu: 0.693020,
        w: 0.038840,
        v50: 4.932,
        vc_mech: 5.135,
    },
    ReferenceRow {
        t_p: 500e-6,
        y0: -19.1364,
        span: 24.2516,
        mu: 0.687272,
        w: 0.038244,
        v50: 4.867,
        vc_mech: 5.05,
    },
];

/// Reported Merz exponent.
pub const ALPHA: f64 = 3.62;
/// Reported attempt time (s).
pub const TAU_INF: f64 = 14e-15;
/// HZO film thickness (m).
pub const FILM_THICKNESS: f64 = 17e-9;

/// `(t_p, μ)` pairs of the reference rows.
pub fn median_points() -> Vec<(f64, f64)> {
    REFERENCE_ROWS.iter().map(|r| (r.t_p, r.mu)).collect()
}
