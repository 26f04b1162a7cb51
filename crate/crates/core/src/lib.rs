//! Calibration, fitting and simulation of partial-switching ferroelectric
//! MEMS synaptic weights.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: Merz kinetics, Cauchy threshold statistics, the displacement
//!   model and the nucleation-limited-switching integral.
//! - [`sim`]: a seeded Monte Carlo hysteron ensemble driven by the
//!   reset/write/read pulse protocol.
//! - [`fit`]: Lorentzian-CDF least squares, coercive-voltage markers and
//!   affine maps between observables.
//! - [`merz`]: median-vs-pulse-width regression and the universal collapse.
//! - [`levels`]: S0 level extraction, staircase, DAC level counting and
//!   inverse programming.
//! - [`io`] and [`cli`]: CSV sweeps, reports, plot data and the command-line
//!   front end.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (default); see [`Exec`].

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod curve;
pub mod error;
mod exec;
pub mod fit;
pub mod io;
pub mod levels;
mod lm;
pub mod merz;
pub mod model;
pub mod reference;
pub mod rng;
pub mod sim;

pub use curve::{ObservableKind, Sample, SwitchCurve};
pub use error::{Error, Result};
pub use exec::Exec;
pub use fit::{
    affine_map_fit, fit_family, fit_lorentzian_cdf, half_saturation_crossing, zero_crossing, AffineMap, CurveMarkers,
    FitOptions, LorentzianFit,
};
pub use levels::{
    count_dac_levels, program_voltage_for_weight, s0_filter, s0_filter_with_margin, staircase_of, LevelSet, Staircase,
};
pub use merz::{
    collapse_rms, collapse_transform, fit_merz_nested, regress_mu_fixed_tau, CollapsePoint, MerzRegression,
};
pub use model::{
    displacement_of_fraction, nls_switched_fraction, switched_fraction_cdf, tau_of_field, threshold_pdf,
    threshold_voltage, DeviceCalibration, MerzKinetics, NlsSpec, ThresholdDistribution,
};
pub use sim::{
    apply_pulse, read_displacement, run_protocol_sweep, sample_ensemble, HysteronEnsemble, TriangularPulse,
    WriteProtocol,
};
