//! Discrete weight levels from a monotone transfer curve.
//!
//! The S0 filter walks a sweep in voltage order and keeps a sample whenever
//! it is not below the last kept value (ties are kept). The kept samples
//! are exactly the running records of the sweep: a sample survives iff no
//! earlier measurement lies above it. That makes the output the largest
//! level set that never contradicts an earlier observation, which is the
//! sense in which it is maximal. It is not in general the longest
//! non-decreasing subsequence: an early high outlier hides later points.

use crate::curve::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::LorentzianFit;
use crate::model::DeviceCalibration;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub v_p: f64,
    pub value: f64,
    /// 1-based level index.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub kept: Vec<Level>,
    /// Number of samples the filter saw.
    pub source_count: usize,
}

impl LevelSet {
    /// Number of levels `K`.
    pub fn count(&self) -> usize {
        self.kept.len()
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.kept.iter().map(|l| Sample::new(l.v_p, l.value)).collect()
    }
}

fn sorted(samples: &[Sample]) -> Result<Vec<Sample>> {
    if samples.is_empty() {
        return Err(Error::config("level extraction needs at least one sample"));
    }
    if samples.iter().any(|s| s.v_p.is_nan() || s.value.is_nan()) {
        return Err(Error::config("samples must not contain NaN"));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.v_p.total_cmp(&b.v_p));
    Ok(s)
}

fn greedy(samples: &[Sample], accept: impl Fn(f64, f64) -> bool) -> Result<LevelSet> {
    let s = sorted(samples)?;
    let mut kept: Vec<Level> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, p) in s.iter().enumerate() {
        if i == 0 || accept(p.value, last) {
            last = p.value;
            kept.push(Level {
                v_p: p.v_p,
                value: p.value,
                index: kept.len() + 1,
            });
        }
    }
    Ok(LevelSet {
        kept,
        source_count: s.len(),
    })
}

/// S0 filter: sort by voltage, keep the first sample, then keep each sample
/// whose value is `≥` the last kept value.
pub fn s0_filter(samples: &[Sample]) -> Result<LevelSet> {
    greedy(samples, |y, last| y >= last)
}

/// Noise-aware variant: keep a sample only if it exceeds the last kept value
/// by more than `margin`. With `margin = 0` ties are dropped, unlike
/// [`s0_filter`].
pub fn s0_filter_with_margin(samples: &[Sample], margin: f64) -> Result<LevelSet> {
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::config(format!("margin must be non-negative, got {margin}")));
    }
    greedy(samples, |y, last| y > last + margin)
}

/// Right-continuous level-count function `L(V) = #{kept V_p ≤ V}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Staircase {
    pub breakpoints: Vec<f64>,
}

impl Staircase {
    pub fn eval(&self, v_p: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= v_p)
    }

    pub fn levels(&self) -> usize {
        self.breakpoints.len()
    }
}

pub fn staircase_of(levels: &LevelSet) -> Staircase {
    Staircase {
        breakpoints: levels.kept.iter().map(|l| l.v_p).collect(),
    }
}

const DAC_CHUNK: u64 = 1 << 20;
/// Largest DAC resolution that is enumerated code by code.
pub const MAX_ENUMERATED_DAC_BITS: u32 = 32;

pub fn count_dac_levels(fit: &LorentzianFit, cal: &DeviceCalibration, margin: f64) -> Result<usize> {
    count_dac_levels_with(fit, cal, margin, Exec::default())
}

/// Evaluates the noiseless model at every DAC code and counts the levels the
/// margin filter keeps.
pub fn count_dac_levels_with(fit: &LorentzianFit, cal: &DeviceCalibration, margin: f64, exec: Exec) -> Result<usize> {
    cal.validate()?;
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::config(format!("margin must be non-negative, got {margin}")));
    }
    if cal.dac_bits > MAX_ENUMERATED_DAC_BITS {
        return Err(Error::config(format!(
            "cannot enumerate a {}-bit DAC (limit {MAX_ENUMERATED_DAC_BITS})",
            cal.dac_bits
        )));
    }
    let mut count = 0usize;
    let mut last = f64::NEG_INFINITY;
    for_each_code_chunk(fit, cal, exec, |values| {
        for &y in values {
            if count == 0 || y > last + margin {
                count += 1;
                last = y;
            }
        }
    });
    Ok(count)
}

fn for_each_code_chunk(fit: &LorentzianFit, cal: &DeviceCalibration, exec: Exec, mut f: impl FnMut(&[f64])) {
    let total = cal.dac_codes();
    let mut start = 0u64;
    while start < total {
        let len = (total - start).min(DAC_CHUNK) as usize;
        let values = exec.map_range(len, |i| fit.model(cal.code_voltage(start + i as u64)));
        f(&values);
        start += len as u64;
    }
}

/// Largest margin (to within `1e-12` nm) for which the DAC still resolves
/// more than `levels` distinct levels, or `None` if it never does.
pub fn margin_for_level_count(fit: &LorentzianFit, cal: &DeviceCalibration, levels: usize) -> Result<Option<f64>> {
    if count_dac_levels(fit, cal, 0.0)? <= levels {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, fit.span);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if count_dac_levels(fit, cal, mid)? > levels {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// A DAC setting that realizes a target normalized weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgrammedWeight {
    pub target: f64,
    /// Inverse-CDF voltage before quantization.
    pub exact_voltage: f64,
    pub code: u64,
    /// Voltage of `code`.
    pub voltage: f64,
    /// Switched fraction actually reached at `voltage`.
    pub achieved: f64,
}

/// Inverts the Lorentzian CDF for `s_bar_target` and snaps to the nearest
/// DAC code.
pub fn program_voltage_for_weight(
    fit: &LorentzianFit,
    s_bar_target: f64,
    cal: &DeviceCalibration,
) -> Result<ProgrammedWeight> {
    cal.validate()?;
    let d = fit.distribution();
    let exact_voltage = 10f64.powf(d.quantile_log(s_bar_target)?);
    let code = cal.nearest_code(exact_voltage).ok_or_else(|| {
        Error::Range(format!(
            "weight {s_bar_target} needs {exact_voltage} V, outside the DAC range {:?}",
            cal.dac_range
        ))
    })?;
    let voltage = cal.code_voltage(code);
    Ok(ProgrammedWeight {
        target: s_bar_target,
        exact_voltage,
        code,
        voltage,
        achieved: d.cdf(voltage)?,
    })
}
