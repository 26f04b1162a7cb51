use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One `(V_p, value)` measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub v_p: f64,
    pub value: f64,
}

impl Sample {
    pub fn new(v_p: f64, value: f64) -> Self {
        Sample { v_p, value }
    }
}

impl From<(f64, f64)> for Sample {
    fn from((v_p, value): (f64, f64)) -> Self {
        Sample { v_p, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservableKind {
    /// Beam displacement, nm.
    Displacement,
    /// Remanent polarization change, µC/cm².
    PolarizationChange,
}

impl ObservableKind {
    pub fn unit(self) -> &'static str {
        match self {
            ObservableKind::Displacement => "nm",
            ObservableKind::PolarizationChange => "uC_cm2",
        }
    }

    pub fn from_unit(unit: &str) -> Option<Self> {
        match unit {
            "nm" => Some(ObservableKind::Displacement),
            "uC_cm2" => Some(ObservableKind::PolarizationChange),
            _ => None,
        }
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObservableKind::Displacement => "displacement",
            ObservableKind::PolarizationChange => "polarization_change",
        })
    }
}

impl FromStr for ObservableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "displacement" => Ok(ObservableKind::Displacement),
            "polarization_change" => Ok(ObservableKind::PolarizationChange),
            other => Err(Error::config(format!("unknown observable kind {other:?}"))),
        }
    }
}

/// A single `δ(V_p)` (or `ΔP(V_p)`) sweep at fixed pulse width.
///
/// Samples are strictly increasing in `V_p`, positive, finite, and there are
/// at least [`SwitchCurve::MIN_SAMPLES`] of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCurve {
    t_p: f64,
    kind: ObservableKind,
    samples: Vec<Sample>,
}

impl SwitchCurve {
    pub const MIN_SAMPLES: usize = 4;

    pub fn new(t_p: f64, kind: ObservableKind, samples: Vec<Sample>) -> Result<Self> {
        if !(t_p > 0.0) || !t_p.is_finite() {
            return Err(Error::config(format!("pulse width must be positive, got {t_p}")));
        }
        if samples.len() < Self::MIN_SAMPLES {
            return Err(Error::config(format!(
                "a switch curve needs at least {} samples, got {}",
                Self::MIN_SAMPLES,
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.v_p > 0.0) || !s.v_p.is_finite() || !s.value.is_finite() {
                return Err(Error::config(format!("sample {i} is not finite/positive: {s:?}")));
            }
            if i > 0 && !(s.v_p > samples[i - 1].v_p) {
                return Err(Error::config(format!(
                    "V_p must be strictly increasing (sample {i}: {} after {})",
                    s.v_p,
                    samples[i - 1].v_p
                )));
            }
        }
        Ok(SwitchCurve { t_p, kind, samples })
    }

    pub fn t_p(&self) -> f64 {
        self.t_p
    }

    pub fn kind(&self) -> ObservableKind {
        self.kind
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.v_p)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }

    /// Copy with every value transformed by `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SwitchCurve {
        SwitchCurve {
            t_p: self.t_p,
            kind: self.kind,
            samples: self.samples.iter().map(|s| Sample::new(s.v_p, f(s.value))).collect(),
        }
    }

    /// Linear interpolation at `v`, `None` outside the sampled span.
    pub fn interpolate(&self, v: f64) -> Option<f64> {
        let s = &self.samples;
        if v < s[0].v_p || v > s[s.len() - 1].v_p {
            return None;
        }
        let hi = s.partition_point(|p| p.v_p < v);
        if hi == 0 {
            return Some(s[0].value);
        }
        if s[hi].v_p == v {
            return Some(s[hi].value);
        }
        let (a, b) = (s[hi - 1], s[hi]);
        let f = (v - a.v_p) / (b.v_p - a.v_p);
        Some(a.value + f * (b.value - a.value))
    }
}

/// `n` evenly spaced voltages from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a grid needs two end points");
    let step = (stop - start) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
        .collect()
}

/// Grid from `start` to `stop` with spacing close to `step` (the end point
/// is always included).
pub fn stepped_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize + 1;
    linear_grid(start, stop, n.max(2))
}
