//! Text formats: sweep CSV, fit/Merz/collapse/levels/program reports, the
//! TOML run configuration and plain columnar plot data.
//!
//! Every number is written by [`fmt_num`]: '.' decimal separator, at least
//! nine significant digits, and enough digits that parsing the text gives
//! back the identical `f64`. Lines end in `\n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::curve::{ObservableKind, Sample, SwitchCurve};
use crate::error::{Error, Result};
use crate::fit::{CurveMarkers, FitOptions, LorentzianFit};
use crate::levels::{LevelSet, ProgrammedWeight, Staircase};
use crate::merz::{master_curve, CollapsePoint, MerzRegression, DEFAULT_TAU_SEARCH};
use crate::model::{DeviceCalibration, MerzKinetics};
use crate::sim::{EnsembleSpec, Readout, TriangularPulse, WriteProtocol, ENSEMBLE_TRUNCATION};

const MIN_DIGITS: usize = 9;

/// Formats `x` with at least nine significant digits, exactly round-tripping.
///
/// Values with a decimal exponent in `-7..16` are written positionally,
/// others in `d.ddddddddde±N` form.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        let sign = if x.is_sign_negative() { "-" } else { "" };
        return format!("{sign}0.{}", "0".repeat(MIN_DIGITS - 1));
    }
    let sci = format!("{:e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("`{:e}` exponent is an integer");
    let mut digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    while digits.len() < MIN_DIGITS {
        digits.push('0');
    }
    let sign = if x < 0.0 { "-" } else { "" };

    if (-7..16).contains(&exp) {
        let mut out = String::from(sign);
        if exp < 0 {
            out.push_str("0.");
            out.push_str(&"0".repeat((-exp - 1) as usize));
            out.push_str(&digits);
        } else {
            let int_len = exp as usize + 1;
            while digits.len() <= int_len {
                digits.push('0');
            }
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
        out
    } else {
        format!("{sign}{}.{}e{exp}", &digits[..1], &digits[1..])
    }
}

/// Pulse width in µs as written to files: rounded to 12 significant digits
/// so that `10e-6` prints as `10.0000000`, not `10.000000000000002`.
fn t_p_us_text(t_p: f64) -> String {
    let us: f64 = format!("{:.11e}", t_p * 1e6).parse().expect("formatted float parses");
    fmt_num(us)
}

fn us_to_seconds(us: f64) -> f64 {
    us / 1e6
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// A CSV reader over `text` that skips `#` comment lines and blank lines.
fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn no_data(text: &str) -> bool {
    text.lines().all(|l| {
        let l = l.trim();
        l.is_empty() || l.starts_with('#')
    })
}

struct Columns {
    index: BTreeMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Columns {
            index: headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect(),
        }
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn header_line(reader: &mut csv::Reader<&[u8]>, path: &Path) -> Result<(Columns, u64)> {
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let line = headers.position().map_or(1, |p| p.line());
    Ok((Columns::new(&headers), line))
}

fn field_f64(rec: &csv::StringRecord, idx: usize, name: &str, path: &Path, line: u64) -> Result<f64> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(path, line, format!("row has no `{name}` field")))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{name}` is not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("`{name}` is not finite: {raw:?}")));
    }
    Ok(v)
}

fn optional_f64(
    rec: &csv::StringRecord,
    idx: Option<usize>,
    name: &str,
    path: &Path,
    line: u64,
) -> Result<Option<f64>> {
    match idx.and_then(|i| rec.get(i)) {
        None | Some("") => Ok(None),
        Some(_) => field_f64(rec, idx.unwrap(), name, path, line).map(Some),
    }
}

// ---------------------------------------------------------------------------
// Sweep files

/// Samples at one pulse width, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGroup {
    /// Pulse width (s).
    pub t_p: f64,
    pub samples: Vec<Sample>,
}

/// Parsed contents of a sweep CSV: groups sorted by pulse width.
///
/// Groups are kept raw: a group with fewer than
/// [`SwitchCurve::MIN_SAMPLES`] rows is a valid file but cannot become a
/// curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFile {
    pub kind: ObservableKind,
    pub groups: Vec<SweepGroup>,
}

impl SweepFile {
    pub fn from_curves(curves: &[SwitchCurve]) -> Result<Self> {
        let kind = curves
            .first()
            .ok_or_else(|| Error::config("a sweep file needs at least one curve"))?
            .kind();
        if curves.iter().any(|c| c.kind() != kind) {
            return Err(Error::config("all curves in a sweep file must share one observable"));
        }
        let mut groups: Vec<SweepGroup> = curves
            .iter()
            .map(|c| SweepGroup {
                t_p: c.t_p(),
                samples: c.samples().to_vec(),
            })
            .collect();
        groups.sort_by(|a, b| a.t_p.total_cmp(&b.t_p));
        Ok(SweepFile { kind, groups })
    }

    pub fn curves(&self) -> Result<Vec<SwitchCurve>> {
        self.groups
            .iter()
            .map(|g| SwitchCurve::new(g.t_p, self.kind, g.samples.clone()))
            .collect()
    }
}

pub fn parse_sweep_csv(path: &Path) -> Result<SweepFile> {
    parse_sweep_str(&read_text(path)?, path)
}

/// Parses sweep CSV text; `origin` only labels error messages.
pub fn parse_sweep_str(text: &str, origin: &Path) -> Result<SweepFile> {
    if no_data(text) {
        return Err(Error::config(format!("{}: sweep file is empty", origin.display())));
    }
    let mut rdr = csv_reader(text);
    let (cols, header_at) = header_line(&mut rdr, origin)?;
    let t_col = cols.require("t_p_us", origin)?;
    let v_col = cols.require("V_p_V", origin)?;
    let value_cols: Vec<(&String, usize)> = cols
        .index
        .iter()
        .filter(|(k, _)| k.starts_with("value"))
        .map(|(k, &i)| (k, i))
        .collect();
    let (kind, y_col) = match value_cols.as_slice() {
        [(name, idx)] => {
            let unit = name
                .strip_prefix("value_")
                .ok_or_else(|| parse_err(origin, header_at, "value column must declare its unit, e.g. `value_nm`"))?;
            let kind = ObservableKind::from_unit(unit).ok_or_else(|| {
                parse_err(
                    origin,
                    header_at,
                    format!("unknown unit `{unit}` (expected nm or uC_cm2)"),
                )
            })?;
            (kind, *idx)
        }
        [] => return Err(parse_err(origin, header_at, "missing column `value_<unit>`")),
        _ => return Err(parse_err(origin, header_at, "more than one value column")),
    };

    let mut by_tp: BTreeMap<u64, SweepGroup> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(origin, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols.index.len() {
            return Err(parse_err(
                origin,
                line,
                format!("expected {} fields, found {}", cols.index.len(), rec.len()),
            ));
        }
        let t_us = field_f64(&rec, t_col, "t_p_us", origin, line)?;
        let v_p = field_f64(&rec, v_col, "V_p_V", origin, line)?;
        let value = field_f64(&rec, y_col, "value", origin, line)?;
        if !(t_us > 0.0) {
            return Err(parse_err(
                origin,
                line,
                format!("pulse width must be positive, got {t_us}"),
            ));
        }
        if !(v_p > 0.0) {
            return Err(parse_err(origin, line, format!("V_p must be positive, got {v_p}")));
        }
        let t_p = us_to_seconds(t_us);
        let group = by_tp.entry(t_p.to_bits()).or_insert_with(|| SweepGroup {
            t_p,
            samples: Vec::new(),
        });
        if let Some(last) = group.samples.last() {
            if v_p == last.v_p {
                return Err(parse_err(
                    origin,
                    line,
                    format!("duplicate V_p {v_p} at t_p = {t_us} us"),
                ));
            }
            if v_p < last.v_p {
                return Err(parse_err(
                    origin,
                    line,
                    format!("V_p {v_p} is below the previous {} at t_p = {t_us} us", last.v_p),
                ));
            }
        }
        group.samples.push(Sample::new(v_p, value));
    }
    if by_tp.is_empty() {
        return Err(Error::config(format!(
            "{}: sweep file has a header but no rows",
            origin.display()
        )));
    }
    let mut groups: Vec<SweepGroup> = by_tp.into_values().collect();
    groups.sort_by(|a, b| a.t_p.total_cmp(&b.t_p));
    Ok(SweepFile { kind, groups })
}

pub fn render_sweep(file: &SweepFile) -> String {
    let mut out = format!("# observable={}\nt_p_us,V_p_V,value_{}\n", file.kind, file.kind.unit());
    for g in &file.groups {
        let t = t_p_us_text(g.t_p);
        for s in &g.samples {
            let _ = writeln!(out, "{t},{},{}", fmt_num(s.v_p), fmt_num(s.value));
        }
    }
    out
}

pub fn write_sweep_csv(path: &Path, file: &SweepFile) -> Result<()> {
    write_text(path, &render_sweep(file))
}

// ---------------------------------------------------------------------------
// Fit report

/// One row of the fit report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRow {
    pub fit: LorentzianFit,
    pub markers: CurveMarkers,
}

const FIT_HEADER: &str = "t_p_us,y0,A,mu,w,V50_V,Vc_mech_V,Vc_elec_V,rms_residual";

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn render_fit_report(rows: &[FitRow]) -> String {
    let mut out = String::from(FIT_HEADER);
    out.push('\n');
    for r in rows {
        let f = &r.fit;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t_p_us_text(f.t_p),
            fmt_num(f.y0),
            fmt_num(f.span),
            fmt_num(f.mu),
            fmt_num(f.w),
            fmt_num(f.v50),
            opt_num(r.markers.vc_mech),
            opt_num(r.markers.vc_elec),
            fmt_num(f.rms_residual),
        );
    }
    out
}

pub fn parse_fit_report(path: &Path) -> Result<Vec<FitRow>> {
    parse_fit_report_str(&read_text(path)?, path)
}

/// Reads a fit report. Only `t_p_us, y0, A, mu, w` are required; `V50_V`
/// is recomputed from `mu`.
pub fn parse_fit_report_str(text: &str, origin: &Path) -> Result<Vec<FitRow>> {
    if no_data(text) {
        return Err(Error::config(format!("{}: fit report is empty", origin.display())));
    }
    let mut rdr = csv_reader(text);
    let (cols, _) = header_line(&mut rdr, origin)?;
    let t_col = cols.require("t_p_us", origin)?;
    let y0_col = cols.require("y0", origin)?;
    let a_col = cols.require("A", origin)?;
    let mu_col = cols.require("mu", origin)?;
    let w_col = cols.require("w", origin)?;
    let mech_col = cols.optional("Vc_mech_V");
    let elec_col = cols.optional("Vc_elec_V");
    let rms_col = cols.optional("rms_residual");

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(origin, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t_p = us_to_seconds(field_f64(&rec, t_col, "t_p_us", origin, line)?);
        let fit = LorentzianFit::new(
            t_p,
            field_f64(&rec, y0_col, "y0", origin, line)?,
            field_f64(&rec, a_col, "A", origin, line)?,
            field_f64(&rec, mu_col, "mu", origin, line)?,
            field_f64(&rec, w_col, "w", origin, line)?,
            optional_f64(&rec, rms_col, "rms_residual", origin, line)?.unwrap_or(0.0),
        )
        .map_err(|e| parse_err(origin, line, e.to_string()))?;
        rows.push(FitRow {
            fit,
            markers: CurveMarkers {
                vc_mech: optional_f64(&rec, mech_col, "Vc_mech_V", origin, line)?,
                vc_elec: optional_f64(&rec, elec_col, "Vc_elec_V", origin, line)?,
            },
        });
    }
    if rows.is_empty() {
        return Err(Error::config(format!("{}: fit report has no rows", origin.display())));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Other reports

pub fn render_merz_report(reg: &MerzRegression) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# alpha={}", fmt_num(reg.alpha));
    let _ = writeln!(out, "# tau_inf_s={}", fmt_num(reg.tau_inf));
    let _ = writeln!(out, "# log10_tau_inf={}", fmt_num(reg.tau_inf.log10()));
    let _ = writeln!(out, "# mu_star={}", fmt_num(reg.mu_star));
    let _ = writeln!(out, "# slope={}", fmt_num(reg.slope));
    let _ = writeln!(out, "# r_squared={}", fmt_num(reg.r_squared));
    let _ = writeln!(out, "# rss={}", fmt_num(reg.rss));
    let _ = writeln!(out, "# degenerate={}", reg.degenerate);
    out.push_str("t_p_us,X,mu,mu_fit\n");
    for (&(t_p, mu), &x) in reg.points.iter().zip(&reg.x_values) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t_p_us_text(t_p),
            fmt_num(x),
            fmt_num(mu),
            fmt_num(reg.fitted_mu(x))
        );
    }
    out
}

/// Reads the `# key=value` header lines of a report.
pub fn report_metadata(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Collapse points of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSeries {
    pub t_p: f64,
    pub points: Vec<CollapsePoint>,
    pub rms: f64,
}

pub fn render_collapse_report(series: &[CollapseSeries], overall_rms: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# rms={}", fmt_num(overall_rms));
    for s in series {
        let _ = writeln!(out, "# rms_{}us={}", t_p_us_text(s.t_p), fmt_num(s.rms));
    }
    out.push_str("t_p_us,z,s_bar,master\n");
    for s in series {
        let t = t_p_us_text(s.t_p);
        for p in &s.points {
            let _ = writeln!(
                out,
                "{t},{},{},{}",
                fmt_num(p.z),
                fmt_num(p.s_bar),
                fmt_num(master_curve(p.z))
            );
        }
    }
    out
}

/// `margin` is `None` for the plain (tie-keeping) filter.
pub fn render_levels_report(levels: &[(f64, LevelSet)], margin: Option<f64>) -> String {
    let mut out = String::new();
    match margin {
        Some(m) => {
            let _ = writeln!(out, "# margin={}", fmt_num(m));
        }
        None => out.push_str("# margin=none\n"),
    }
    for (t_p, l) in levels {
        let _ = writeln!(
            out,
            "# levels_{}us={} of {}",
            t_p_us_text(*t_p),
            l.count(),
            l.source_count
        );
    }
    out.push_str("t_p_us,V_p_V,value,level_index\n");
    for (t_p, l) in levels {
        let t = t_p_us_text(*t_p);
        for k in &l.kept {
            let _ = writeln!(out, "{t},{},{},{}", fmt_num(k.v_p), fmt_num(k.value), k.index);
        }
    }
    out
}

pub fn render_program_table(fit: &LorentzianFit, cal: &DeviceCalibration, rows: &[ProgrammedWeight]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# t_p_us={}", t_p_us_text(fit.t_p));
    let _ = writeln!(out, "# dac_bits={}", cal.dac_bits);
    let _ = writeln!(
        out,
        "# dac_range_V={},{}",
        fmt_num(cal.dac_range.0),
        fmt_num(cal.dac_range.1)
    );
    out.push_str("target,exact_V,code,V_p_V,achieved\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.target),
            fmt_num(r.exact_voltage),
            r.code,
            fmt_num(r.voltage),
            fmt_num(r.achieved)
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Run configuration

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub delta_min: f64,
    pub delta_max: f64,
    pub v_ac: f64,
    pub film_thickness: f64,
    pub k_geom: f64,
    pub read_noise_sigma: f64,
    pub dac_bits: u32,
    pub dac_range: [f64; 2],
}

impl Default for DeviceSection {
    fn default() -> Self {
        let c = DeviceCalibration::default();
        DeviceSection {
            delta_min: c.delta_min,
            delta_max: c.delta_max,
            v_ac: c.v_ac,
            film_thickness: c.film_thickness,
            k_geom: c.k_geom,
            read_noise_sigma: c.read_noise_sigma,
            dac_bits: c.dac_bits,
            dac_range: [c.dac_range.0, c.dac_range.1],
        }
    }
}

impl DeviceSection {
    pub fn calibration(&self) -> DeviceCalibration {
        DeviceCalibration {
            delta_min: self.delta_min,
            delta_max: self.delta_max,
            v_ac: self.v_ac,
            film_thickness: self.film_thickness,
            k_geom: self.k_geom,
            read_noise_sigma: self.read_noise_sigma,
            dac_bits: self.dac_bits,
            dac_range: (self.dac_range[0], self.dac_range[1]),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Pulse widths to sweep (µs).
    pub pulse_widths_us: Vec<f64>,
    /// Magnitude of the reset pulses (V); applied with negative polarity.
    pub reset_peak: f64,
    pub reset_count: u32,
    pub write_count: u32,
    /// Reset pulse width (µs); defaults to the write width.
    pub reset_width_us: Option<f64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            pulse_widths_us: vec![10.0, 20.0, 100.0, 200.0, 500.0],
            reset_peak: 9.0,
            reset_count: 2,
            write_count: 2,
            reset_width_us: None,
        }
    }
}

impl ProtocolSection {
    pub fn protocols(&self) -> Result<Vec<WriteProtocol>> {
        if self.pulse_widths_us.is_empty() {
            return Err(Error::config("protocol.pulse_widths_us must not be empty"));
        }
        self.pulse_widths_us
            .iter()
            .map(|&us| {
                let t_p = us_to_seconds(us);
                let reset_width = self.reset_width_us.map_or(t_p, us_to_seconds);
                WriteProtocol::new(
                    TriangularPulse::new(-self.reset_peak.abs(), reset_width)?,
                    self.reset_count,
                    TriangularPulse::new(1.0, t_p)?,
                    self.write_count,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n: usize,
    pub mu_star: f64,
    pub w: f64,
    pub alpha: f64,
    pub tau_inf: f64,
    pub truncation: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n: 100_000,
            mu_star: 1.0694,
            w: 0.04,
            alpha: crate::reference::ALPHA,
            tau_inf: crate::reference::TAU_INF,
            truncation: ENSEMBLE_TRUNCATION,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// `displacement` or `polarization_change`.
    pub observable: String,
    /// Remanent polarization for the polarization readout (µC/cm²).
    pub remanent: f64,
    pub polarization_noise: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            start: 0.5,
            stop: 9.0,
            step: 0.005,
            observable: "displacement".into(),
            remanent: 20.0,
            polarization_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub share_offsets: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::default();
        FitSection {
            share_offsets: false,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MerzSection {
    /// Fixed attempt time (s). When absent τ∞ is searched.
    pub tau_inf: Option<f64>,
    /// Search interval for `log10 τ∞`.
    pub search: [f64; 2],
}

impl Default for MerzSection {
    fn default() -> Self {
        MerzSection {
            tau_inf: None,
            search: [DEFAULT_TAU_SEARCH.0, DEFAULT_TAU_SEARCH.1],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsSection {
    /// Minimum step between kept levels (value units).
    pub margin: f64,
    /// Normalized weights for `program`.
    pub targets: Vec<f64>,
}

/// Run configuration, read from TOML. Every section and key is optional.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub device: DeviceSection,
    pub protocol: ProtocolSection,
    pub ensemble: EnsembleSection,
    pub sweep: SweepSection,
    pub fit: FitSection,
    pub merz: MerzSection,
    pub levels: LevelsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            device: DeviceSection::default(),
            protocol: ProtocolSection::default(),
            ensemble: EnsembleSection::default(),
            sweep: SweepSection::default(),
            fit: FitSection::default(),
            merz: MerzSection::default(),
            levels: LevelsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("{}: {}", origin.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.calibration().validate()?;
        self.protocol.protocols()?;
        self.kinetics()?;
        let e = &self.ensemble;
        if e.n == 0 || !(e.w > 0.0) || !(e.truncation > 0.0) {
            return Err(Error::config("ensemble needs n >= 1, w > 0 and truncation > 0"));
        }
        let s = &self.sweep;
        if !(s.start > 0.0 && s.stop > s.start && s.step > 0.0) {
            return Err(Error::config("sweep needs 0 < start < stop and step > 0"));
        }
        self.readout()?;
        if !(self.fit.tolerance > 0.0) || self.fit.max_iterations == 0 {
            return Err(Error::config("fit needs a positive tolerance and iteration budget"));
        }
        if let Some(t) = self.merz.tau_inf {
            if !(t > 0.0) {
                return Err(Error::config("merz.tau_inf must be positive"));
            }
        }
        let [lo, hi] = self.merz.search;
        if !(hi > lo) {
            return Err(Error::config("merz.search must be an increasing pair"));
        }
        if !(self.levels.margin >= 0.0) {
            return Err(Error::config("levels.margin must be non-negative"));
        }
        if self.levels.targets.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::config("levels.targets must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn kinetics(&self) -> Result<MerzKinetics> {
        let e = &self.ensemble;
        MerzKinetics::from_mu_star(e.alpha, e.tau_inf, e.mu_star, self.device.film_thickness)
            .map_err(|err| Error::config(err.to_string()))
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let e = &self.ensemble;
        Ok(EnsembleSpec::new(e.n, e.mu_star, e.w, self.kinetics()?, self.seed).with_truncation(e.truncation))
    }

    pub fn readout(&self) -> Result<Readout> {
        match self.sweep.observable.parse::<ObservableKind>()? {
            ObservableKind::Displacement => Ok(Readout::Displacement(self.device.calibration())),
            ObservableKind::PolarizationChange => Ok(Readout::Polarization {
                remanent: self.sweep.remanent,
                noise_sigma: self.sweep.polarization_noise,
            }),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tolerance: self.fit.tolerance,
            max_iterations: self.fit.max_iterations,
            ..FitOptions::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Plot data

/// Data behind one family of figures.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotPayload {
    /// Measured samples with the fitted model, one file per pulse width.
    FitOverlay(Vec<(SwitchCurve, LorentzianFit)>),
    /// Threshold density per decade on a `log10 V_p` grid, one file per
    /// pulse width.
    Pdf {
        fits: Vec<LorentzianFit>,
        x_grid: Vec<f64>,
    },
    Collapse(Vec<CollapseSeries>),
    MerzLine(MerzRegression),
    /// Staircase breakpoints, one file per pulse width.
    Staircase(Vec<(f64, Staircase)>),
}

impl PlotPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotPayload::FitOverlay(_) => "fit-overlay",
            PlotPayload::Pdf { .. } => "pdf",
            PlotPayload::Collapse(_) => "collapse",
            PlotPayload::MerzLine(_) => "merz-line",
            PlotPayload::Staircase(_) => "staircase",
        }
    }
}

fn tp_file(prefix: &str, t_p: f64) -> String {
    format!(
        "{prefix}_{}us.dat",
        t_p_us_text(t_p).trim_end_matches('0').trim_end_matches('.')
    )
}

/// Renders a payload as `(file name, contents)` pairs.
pub fn render_plotdata(payload: &PlotPayload) -> Vec<(String, String)> {
    match payload {
        PlotPayload::FitOverlay(items) => items
            .iter()
            .map(|(curve, fit)| {
                let mut out = String::from("V_p_V value model\n");
                for s in curve.samples() {
                    let _ = writeln!(
                        out,
                        "{} {} {}",
                        fmt_num(s.v_p),
                        fmt_num(s.value),
                        fmt_num(fit.model(s.v_p))
                    );
                }
                (tp_file("fit_overlay", curve.t_p()), out)
            })
            .collect(),
        PlotPayload::Pdf { fits, x_grid } => fits
            .iter()
            .map(|fit| {
                let d = fit.distribution();
                let mut out = String::from("log10_V_p density\n");
                for &x in x_grid {
                    let _ = writeln!(out, "{} {}", fmt_num(x), fmt_num(d.pdf(x)));
                }
                (tp_file("pdf", fit.t_p), out)
            })
            .collect(),
        PlotPayload::Collapse(series) => {
            let mut out = String::from("t_p_us z s_bar master\n");
            for s in series {
                let t = t_p_us_text(s.t_p);
                for p in &s.points {
                    let _ = writeln!(
                        out,
                        "{t} {} {} {}",
                        fmt_num(p.z),
                        fmt_num(p.s_bar),
                        fmt_num(master_curve(p.z))
                    );
                }
            }
            vec![("collapse.dat".into(), out)]
        }
        PlotPayload::MerzLine(reg) => {
            let mut out = String::from("X mu mu_fit\n");
            for (&(_, mu), &x) in reg.points.iter().zip(&reg.x_values) {
                let _ = writeln!(out, "{} {} {}", fmt_num(x), fmt_num(mu), fmt_num(reg.fitted_mu(x)));
            }
            vec![("merz_line.dat".into(), out)]
        }
        PlotPayload::Staircase(items) => items
            .iter()
            .map(|(t_p, st)| {
                let mut out = String::from("V_p_V level\n");
                for (i, v) in st.breakpoints.iter().enumerate() {
                    let _ = writeln!(out, "{} {}", fmt_num(*v), i + 1);
                }
                (tp_file("staircase", *t_p), out)
            })
            .collect(),
    }
}

/// Writes the payload's files into `dir` and appends them to `dir/index.txt`.
/// Returns the paths written.
pub fn emit_plotdata(dir: &Path, payload: &PlotPayload) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = render_plotdata(payload);
    let mut written = Vec::with_capacity(files.len());
    let mut index = String::new();
    for (name, body) in &files {
        let path = dir.join(name);
        write_text(&path, body)?;
        let _ = writeln!(index, "{} {}", payload.kind(), name);
        written.push(path);
    }
    let index_path = dir.join("index.txt");
    let mut existing = match fs::read_to_string(&index_path) {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(&index_path, e)),
    };
    for line in index.lines() {
        if !existing.lines().any(|l| l == line) {
            existing.push_str(line);
            existing.push('\n');
        }
    }
    write_text(&index_path, &existing)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("mem.csv")
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(5.0), "5.00000000");
        assert_eq!(fmt_num(-0.25), "-0.250000000");
        assert_eq!(fmt_num(1e-5), "0.0000100000000");
        assert_eq!(fmt_num(1.4e-14), "1.40000000e-14");
        assert_eq!(fmt_num(0.0), "0.00000000");
        for x in [0.1 + 0.2, 1.0 / 3.0, -123456.789, 6.02e23, 5e-324, f64::MAX, 4.867] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x, "{x}");
            let digits = fmt_num(x).chars().filter(char::is_ascii_digit).count();
            assert!(digits >= MIN_DIGITS);
        }
    }

    #[test]
    fn pulse_width_text() {
        assert_eq!(t_p_us_text(10e-6), "10.0000000");
        assert_eq!(us_to_seconds(10.0), 10e-6);
        assert_eq!(us_to_seconds(500.0), 500e-6);
    }

    #[test]
    fn three_row_file() {
        let f = parse_sweep_str("t_p_us,V_p_V,value_nm\n10,1,0.5\n10,2,1.5\n10,3,2.5\n", &p()).unwrap();
        assert_eq!(f.kind, ObservableKind::Displacement);
        assert_eq!(f.groups.len(), 1);
        assert_eq!(f.groups[0].samples.len(), 3);
        assert_eq!(f.groups[0].t_p, 1e-5);
    }

    #[test]
    fn duplicate_voltage_reports_line() {
        let text = "# comment\nt_p_us,V_p_V,value_nm\n10,1,0.5\n10,2,1.5\n10,2,2.5\n";
        match parse_sweep_str(text, &p()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_sweep_str("", &p()), Err(Error::Config(_))));
        assert!(matches!(parse_sweep_str("# only\n\n", &p()), Err(Error::Config(_))));
        let cases = [
            "t_p_us,value_nm\n10,1\n",
            "t_p_us,V_p_V,value_furlong\n10,1,2\n",
            "t_p_us,V_p_V,value\n10,1,2\n",
            "t_p_us,V_p_V,value_nm\n10,2,1\n10,1,2\n",
            "t_p_us,V_p_V,value_nm\n10,x,1\n",
            "t_p_us,V_p_V,value_nm\n10,1\n",
            "t_p_us,V_p_V,value_nm\n-10,1,1\n",
        ];
        for c in cases {
            let e = parse_sweep_str(c, &p()).unwrap_err();
            assert_eq!(e.exit_code(), 3, "{c:?}: {e}");
        }
    }

    #[test]
    fn interleaved_groups() {
        let f = parse_sweep_str("t_p_us,V_p_V,value_uC_cm2\n20,1,1\n10,1,2\n20,2,3\n10,2,4\n", &p()).unwrap();
        assert_eq!(f.kind, ObservableKind::PolarizationChange);
        assert_eq!(f.groups.iter().map(|g| g.t_p).collect::<Vec<_>>(), vec![1e-5, 2e-5]);
        assert_eq!(f.groups[1].samples, vec![Sample::new(1.0, 1.0), Sample::new(2.0, 3.0)]);
    }

    #[test]
    fn sweep_round_trip() {
        let samples: Vec<Sample> = (1..=7)
            .map(|i| Sample::new(i as f64 * 0.7, (i as f64).sqrt() - 2.0))
            .collect();
        let c = SwitchCurve::new(20e-6, ObservableKind::Displacement, samples).unwrap();
        let f = SweepFile::from_curves(&[c]).unwrap();
        let back = parse_sweep_str(&render_sweep(&f), &p()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn fit_report_round_trip() {
        let fit = LorentzianFit::new(1e-4, -12.5, 22.9, 0.6934, 0.041, 0.3).unwrap();
        let rows = vec![FitRow {
            fit,
            markers: CurveMarkers {
                vc_mech: Some(5.175),
                vc_elec: None,
            },
        }];
        let back = parse_fit_report_str(&render_fit_report(&rows), &p()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn config_defaults_and_errors() {
        let c = RunConfig::from_toml("", &p()).unwrap();
        assert_eq!(c, RunConfig::default());
        let c = RunConfig::from_toml("seed = 9\n[ensemble]\nn = 10\n", &p()).unwrap();
        assert_eq!((c.seed, c.ensemble.n), (9, 10));
        for bad in [
            "[device]\ndac_bits = 0\n",
            "[ensemble]\nw = -1\n",
            "[nonsense]\n",
            "seed = \"x\"\n",
            "[sweep]\nobservable = \"heat\"\n",
        ] {
            let e = RunConfig::from_toml(bad, &p()).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad:?}: {e}");
        }
    }
}
