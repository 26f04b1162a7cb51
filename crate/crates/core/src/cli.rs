//! Command-line front end.
//!
//! Each subcommand reads its inputs, computes everything in memory (fanning
//! out per-curve work), and only then writes its report files. Identical
//! inputs, configuration and seed give byte-identical outputs.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::curve::{linear_grid, stepped_grid, SwitchCurve};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{curve_markers, fit_family_with, fit_lorentzian_cdf, FamilyOptions, LorentzianFit};
use crate::io::{self, CollapseSeries, FitRow, PlotPayload, RunConfig, SweepFile};
use crate::levels::{program_voltage_for_weight, s0_filter, s0_filter_with_margin, staircase_of};
use crate::merz::{collapse_rms, collapse_transform, fit_merz_nested_with, regress_mu_fixed_tau};
use crate::sim::run_family_sweeps;

/// Environment variable that sets the output directory when `--out-dir` is
/// not given.
pub const OUT_DIR_ENV: &str = "FESYNAPSE_OUT_DIR";

/// Step of the `log10 V_p` grid used for density plot data (decades).
const PDF_GRID_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "fesynapse",
    version,
    about = "Ferroelectric MEMS synaptic weight calibration"
)]
pub struct Cli {
    /// Seed for every stochastic path; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for reports (default: $FESYNAPSE_OUT_DIR, else `.`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write columnar plot data under `<out-dir>/plot`.
    #[arg(long, global = true)]
    pub plot_data: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit a Lorentzian CDF to every pulse width of a sweep file.
    Fit(FitArgs),
    /// Regress fitted medians against pulse width.
    Merz(MerzArgs),
    /// Map sweeps onto the master curve using their fits.
    Collapse(CollapseArgs),
    /// Extract distinguishable levels with the S0 filter.
    Levels(LevelsArgs),
    /// Generate a synthetic sweep file from a hysteron ensemble.
    Simulate(SimulateArgs),
    /// Compute DAC codes for target weights.
    Program(ProgramArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Share one offset and span across all pulse widths.
    #[arg(long)]
    pub share_offsets: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MerzArgs {
    #[arg(long)]
    pub fits: PathBuf,
    /// Fixed attempt time τ∞ (s).
    #[arg(long, conflicts_with = "search")]
    pub tau_inf: Option<f64>,
    /// Search interval for log10 τ∞, as `lo,hi`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub search: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Args)]
pub struct CollapseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub fits: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LevelsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Keep a level only if it exceeds the previous one by more than this
    /// (value units). Without it ties are kept.
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Destination sweep CSV (relative paths resolve against the output
    /// directory).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ProgramArgs {
    #[arg(long)]
    pub fits: PathBuf,
    /// Comma-separated normalized weights in (0, 1); defaults to the config.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub targets: Vec<f64>,
    /// Pulse width (µs) of the fit to invert; default is the longest.
    #[arg(long)]
    pub t_p_us: Option<f64>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("not a number: {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("not a number: {b:?}"))?;
    Ok((lo, hi))
}

/// Files produced by one command, not yet written.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub files: Vec<(PathBuf, String)>,
    pub plots: Vec<PlotPayload>,
    /// Short human-readable summary for stdout.
    pub summary: String,
}

impl Report {
    /// Writes report files, then plot data (into `plot_dir`) if requested.
    pub fn write(&self, plot_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (path, text) in &self.files {
            io::write_text(path, text)?;
            written.push(path.clone());
        }
        if let Some(dir) = plot_dir {
            for p in &self.plots {
                written.extend(io::emit_plotdata(dir, p)?);
            }
        }
        Ok(written)
    }
}

/// Resolves the output directory: flag, then environment, then `.`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads the configuration named on the command line and applies `--seed`.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_curves(path: &Path) -> Result<(SweepFile, Vec<SwitchCurve>)> {
    let file = io::parse_sweep_csv(path)?;
    let curves = file.curves()?;
    Ok((file, curves))
}

fn fit_curves(curves: &[SwitchCurve], cfg: &RunConfig, share_offsets: bool) -> Result<Vec<LorentzianFit>> {
    let fit = cfg.fit_options();
    if curves.len() == 1 {
        return Ok(vec![fit_lorentzian_cdf(&curves[0], &fit)?]);
    }
    fit_family_with(curves, &FamilyOptions { share_offsets, fit }, Exec::default())
}

fn pdf_grid(curves: &[SwitchCurve]) -> Vec<f64> {
    let lo = curves
        .iter()
        .filter_map(|c| c.samples().first())
        .map(|s| s.v_p.log10())
        .fold(f64::INFINITY, f64::min);
    let hi = curves
        .iter()
        .filter_map(|c| c.samples().last())
        .map(|s| s.v_p.log10())
        .fold(f64::NEG_INFINITY, f64::max);
    let n = ((hi - lo) / PDF_GRID_STEP).ceil() as usize + 1;
    linear_grid(lo, lo + (n - 1) as f64 * PDF_GRID_STEP, n.max(2))
}

fn find_fit(fits: &[FitRow], t_p: f64) -> Option<&LorentzianFit> {
    fits.iter().map(|r| &r.fit).find(|f| (f.t_p - t_p).abs() <= 1e-9 * t_p)
}

/// Runs one subcommand. Output paths are resolved against `out_dir`.
pub fn run_command(cfg: &RunConfig, command: &Command, out_dir: &Path) -> Result<Report> {
    cfg.validate()?;
    match command {
        Command::Fit(a) => {
            let (_, curves) = read_curves(&a.input)?;
            let fits = fit_curves(&curves, cfg, a.share_offsets || cfg.fit.share_offsets)?;
            let rows: Vec<FitRow> = curves
                .iter()
                .zip(&fits)
                .map(|(c, f)| FitRow {
                    fit: *f,
                    markers: curve_markers(c),
                })
                .collect();
            let summary = format!("fitted {} curve(s)", rows.len());
            Ok(Report {
                files: vec![(out_dir.join("fits.csv"), io::render_fit_report(&rows))],
                plots: vec![
                    PlotPayload::FitOverlay(curves.iter().cloned().zip(fits.iter().copied()).collect()),
                    PlotPayload::Pdf {
                        fits: fits.clone(),
                        x_grid: pdf_grid(&curves),
                    },
                ],
                summary,
            })
        }
        Command::Merz(a) => {
            let rows = io::parse_fit_report(&a.fits)?;
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.fit.t_p, r.fit.mu)).collect();
            let fixed = a.tau_inf.or(if a.search.is_none() { cfg.merz.tau_inf } else { None });
            let reg = match fixed {
                Some(tau) => regress_mu_fixed_tau(&points, tau)?,
                None => {
                    let (lo, hi) = a.search.unwrap_or((cfg.merz.search[0], cfg.merz.search[1]));
                    if !(hi > lo) {
                        return Err(Error::config(format!("search interval ({lo}, {hi}) is empty")));
                    }
                    fit_merz_nested_with(&points, (lo, hi), Exec::default())?
                }
            };
            let summary = format!(
                "alpha = {}, tau_inf = {} s, slope = {}",
                io::fmt_num(reg.alpha),
                io::fmt_num(reg.tau_inf),
                io::fmt_num(reg.slope)
            );
            Ok(Report {
                files: vec![(out_dir.join("merz.csv"), io::render_merz_report(&reg))],
                plots: vec![PlotPayload::MerzLine(reg)],
                summary,
            })
        }
        Command::Collapse(a) => {
            let (_, curves) = read_curves(&a.input)?;
            let fits = io::parse_fit_report(&a.fits)?;
            let mut series = Vec::with_capacity(curves.len());
            for c in &curves {
                let fit = find_fit(&fits, c.t_p()).ok_or_else(|| {
                    Error::config(format!("no fit for t_p = {} us in {}", c.t_p() * 1e6, a.fits.display()))
                })?;
                let points = collapse_transform(c, fit);
                let rms = collapse_rms(&points)?;
                series.push(CollapseSeries {
                    t_p: c.t_p(),
                    points,
                    rms,
                });
            }
            let all: Vec<_> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
            let rms = collapse_rms(&all)?;
            Ok(Report {
                files: vec![(out_dir.join("collapse.csv"), io::render_collapse_report(&series, rms))],
                summary: format!("collapse rms = {}", io::fmt_num(rms)),
                plots: vec![PlotPayload::Collapse(series)],
            })
        }
        Command::Levels(a) => {
            let file = io::parse_sweep_csv(&a.input)?;
            let margin = a.margin.or((cfg.levels.margin > 0.0).then_some(cfg.levels.margin));
            let mut sets = Vec::with_capacity(file.groups.len());
            for g in &file.groups {
                let set = match margin {
                    Some(m) => s0_filter_with_margin(&g.samples, m)?,
                    None => s0_filter(&g.samples)?,
                };
                sets.push((g.t_p, set));
            }
            let summary = sets
                .iter()
                .map(|(t, s)| format!("{} us: {} levels", t * 1e6, s.count()))
                .collect::<Vec<_>>()
                .join("; ");
            let stairs = sets.iter().map(|(t, s)| (*t, staircase_of(s))).collect();
            Ok(Report {
                files: vec![(out_dir.join("levels.csv"), io::render_levels_report(&sets, margin))],
                plots: vec![PlotPayload::Staircase(stairs)],
                summary,
            })
        }
        Command::Simulate(a) => {
            let ensemble = cfg.ensemble_spec()?.sample(Exec::default())?;
            let protocols = cfg.protocol.protocols()?;
            let grid = stepped_grid(cfg.sweep.start, cfg.sweep.stop, cfg.sweep.step);
            let curves = run_family_sweeps(&ensemble, &protocols, &grid, &cfg.readout()?, Exec::default())?;
            let file = SweepFile::from_curves(&curves)?;
            let path = out_dir.join(&a.out);
            Ok(Report {
                summary: format!("simulated {} sweep(s) of {} points", curves.len(), grid.len()),
                files: vec![(path, io::render_sweep(&file))],
                plots: Vec::new(),
            })
        }
        Command::Program(a) => {
            let rows = io::parse_fit_report(&a.fits)?;
            let fit = match a.t_p_us {
                Some(us) => *find_fit(&rows, us / 1e6)
                    .ok_or_else(|| Error::config(format!("no fit for t_p = {us} us in {}", a.fits.display())))?,
                None => rows
                    .iter()
                    .map(|r| r.fit)
                    .max_by(|x, y| x.t_p.total_cmp(&y.t_p))
                    .expect("fit reports are never empty"),
            };
            let targets = if a.targets.is_empty() {
                &cfg.levels.targets
            } else {
                &a.targets
            };
            if targets.is_empty() {
                return Err(Error::config(
                    "no target weights given (use --targets or levels.targets)",
                ));
            }
            let cal = cfg.device.calibration();
            let table = targets
                .iter()
                .map(|&t| program_voltage_for_weight(&fit, t, &cal))
                .collect::<Result<Vec<_>>>()?;
            Ok(Report {
                files: vec![(
                    out_dir.join("program.csv"),
                    io::render_program_table(&fit, &cal, &table),
                )],
                plots: Vec::new(),
                summary: format!("programmed {} weight(s)", table.len()),
            })
        }
    }
}

/// Parses arguments, runs, writes outputs. Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_cli(&cli) {
        Ok(summary) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let _ = writeln!(std::io::stdout(), "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_cli(cli: &Cli) -> Result<String> {
    let cfg = load_config(cli)?;
    let out_dir = resolve_out_dir(cli.out_dir.as_deref());
    let report = run_command(&cfg, &cli.command, &out_dir)?;
    let plot_dir = cli.plot_data.then(|| out_dir.join("plot"));
    let written = report.write(plot_dir.as_deref())?;
    let mut summary = report.summary.clone();
    for p in written {
        summary.push_str(&format!("\nwrote {}", p.display()));
    }
    Ok(summary)
}
