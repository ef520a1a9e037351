//! Temporal contact networks with direct and indirect (same place, different
//! time) transmission links, an airborne SIR simulation driven by a
//! particle-exposure dose-response model, and the ranking strategies and
//! experiment harness used to compare vaccination policies on them.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`]: the link model, day-indexed storage and degree queries.
//! * [`ingest`]: GPS location updates to stays to links, plus densification.
//! * [`synthetic`]: generative activity-driven networks.
//! * [`epidemic`]: exposure, dose-response and the daily SIR engine.
//! * [`strategy`]: RV, AV, DV, IMV, IMVE and IMVT ranking and selection.
//! * [`harness`]: preventive, population-level and ring experiments.

pub mod config;
pub mod epidemic;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod network;
pub mod rng;
pub mod strategy;
pub mod synthetic;

pub use error::{Error, Result};
pub use network::{ContactNetwork, KindSet, LinkKind, NodeId, Provenance, SpdtLink};

/// Seconds in one simulation day.
pub const DAY_SECONDS: i64 = 86_400;
