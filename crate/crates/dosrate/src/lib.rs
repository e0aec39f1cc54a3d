//! Simulation and analysis toolkit for feedback control of linear plants over
//! bit-rate-limited channels that suffer denial-of-service attacks.
//!
//! A continuous-time linear plant `ẋ = A x + B u` is stabilized through a
//! channel that accepts a few bits at periodic transmission attempts, some of
//! which an attacker jams. The encoder and decoder run identical model-based
//! predictors; each successful transmission sends a quantized correction of
//! the prediction error, together with a shrinking quantization range that is
//! guaranteed to dominate that error at all times. The crate provides:
//!
//! - [`model`] — plant description, real Jordan block structure, the rotating
//!   coordinate frame that renders the modal dynamics time-invariant, and the
//!   exact closed-form state-transition flow used everywhere else;
//! - [`dos`] — attack traces, admissibility checking against
//!   frequency/duration budgets, parameter fitting, worst-case gap and
//!   success-count bounds, and seeded random trace generation;
//! - [`quantize`] — the midpoint uniform quantizer on `[-1, 1]` with exact
//!   power-of-two arithmetic and a bitwise-faithful codeword roundtrip;
//! - [`codec`] — the shared encoder/decoder state: predictor propagation,
//!   range flow, and the quantized correction jumps applied on success;
//! - [`rates`] — per-block bit-rate thresholds, robustness margins, and
//!   geometric decay certificates under an attack budget;
//! - [`tvr`] — the time-varying rate protocol that banks channel time during
//!   quiet periods and spends fewer bits than any fixed-rate schedule;
//! - [`sim`] — the closed-loop simulator joining all of the above, with exact
//!   protocol-state tracking and Runge–Kutta integration of the plant;
//! - [`cli`] — configuration files, run artifacts (CSV trajectories,
//!   transmission logs, manifests), and the subcommand implementations behind
//!   the `dosrate` binary.
//!
//! The `examples/` directory demonstrates each capability as a runnable
//! program; `cargo run --bin dosrate -- --help` lists the command-line
//! surface.

pub mod cli;
pub mod codec;
pub mod dos;
pub mod error;
pub mod model;
pub mod quantize;
pub mod rates;
pub mod sim;
pub mod tvr;

pub use error::{Error, Result};

pub use model::{
    build_transformed_system, BlockStructure, JordanBlock, PlantSpec, TransformedSystem,
};

pub use dos::{
    averaged_params, check_admissible, fit_params, generate_trace, DoSInterval, DoSParams,
    DoSTrace, TraceGenerator,
};

pub use quantize::Codeword;

pub use rates::{decay_certificate, min_rate_threshold, robustness_margin, DecayCertificate, RateAssignment};

pub use tvr::TvrConfig;

pub use sim::{
    compare_protocols, run, CompareResult, Protocol, SimConfig, SimResult, Verdict,
};
