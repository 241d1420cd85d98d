//! Simulation and counting-statistics analysis for a high-bandwidth Λ-type
//! warm-vapor photon memory.
//!
//! The simulation side integrates the four-level Maxwell–Bloch equations
//! ([`solver`]), averages over velocity classes and transverse rings
//! ([`ensemble`]) and sweeps control parameters with per-point alignment
//! optimization ([`sweep`]). The analysis side turns detector counts and raw
//! time tags into efficiencies, noise floors and photon statistics
//! ([`analytics`], [`timetag`]).

pub mod analytics;
pub mod chebyshev;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod solver;
pub mod sweep;
pub mod timetag;

pub use error::{Error, Result};
pub use model::{default_experiment_config, Experiment};
