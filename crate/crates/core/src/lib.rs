//! Disordered lattice-gas toolkit: inhomogeneous Bernoulli ensembles on
//! boxes, exchange and flip dynamics, spectral-gap and comparison
//! certificates on exact spaces, and event-driven simulation beyond them.
//!
//! The crate is organized around runnable examples, one per capability;
//! run any of them with `cargo run --release -p latgas --example <name>`:
//!
//! - `gap_scan`: exchange-dynamics spectral gaps across system sizes and
//!   the gap * L^2 scaling band.
//! - `congestion`: deterministic staircase routes between site pairs and
//!   per-bond congestion counts against the (L/2)^(d+1) reference.
//! - `sampling`: canonical ensembles, occupation profiles, and exact
//!   sequential sampling checked against enumeration.
//! - `exchange_bound_homogeneous`: the weighted-chain certificate that a
//!   long-range exchange is dominated by nearest-neighbour bond forms at
//!   zero field.
//! - `exchange_bound_disordered`: the same comparison under bounded
//!   disorder, with grid quantization and endpoint forcing, against the
//!   e^{13K} L envelope.
//! - `variance_bound`: the all-pairs exchange constant |sites| / gap and
//!   its stability across sizes and random fields.
//! - `kmc_equilibrium`: event-driven simulation validated against exact
//!   canonical weights, with a corrupted-rate negative control.
//! - `kmc_relaxation`: autocorrelation times versus exact inverse gaps and
//!   the L^2 growth of the relaxation time.
//! - `two_block`: block-density comparison statistics on the torus, fixed
//!   versus growing micro-window.
//!
//! The `latgas` binary wraps the same capabilities as subcommands
//! (`gap-scan`, `verify`, `kmc`, `two-block`, `congestion`) for scripted
//! runs; see README.

pub mod configspace;
pub mod disorder;
pub mod driver;
pub mod ensemble;
pub mod error;
pub mod forms;
pub mod kmc;
pub mod lattice;
pub mod spectra;

pub use error::{Error, Result};
