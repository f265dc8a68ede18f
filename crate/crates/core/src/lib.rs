//! Simulation and analysis of few-photon light scattered by a single Rydberg superatom.
//!
//! The superatom is an effective three-level emitter (ground `G`, bright collective
//! excitation `W`, and a collapsed dark level `D`) driven by a coherent probe pulse.
//! The crate provides
//!
//! * the driven Lindblad master equation and the transmitted photon rate ([`master`]),
//! * exact multi-time correlators of the outgoing field by quantum regression ([`regression`]),
//! * Jacobi-coordinate maps and the connected three-photon correlation ([`jacobi`]),
//! * the exactly solvable chiral emitter model and its closed forms ([`bethe`]),
//! * quantum-jump Monte Carlo detector streams ([`trajectory`]) and
//!   a coincidence-counting estimator for them ([`counting`]),
//! * a config-driven batch runner ([`cli`]).
//!
//! Times are in microseconds and rates in inverse microseconds throughout.

pub mod bethe;
pub mod cli;
pub mod config;
pub mod counting;
pub mod dual;
mod error;
pub mod io;
pub mod jacobi;
pub mod master;
pub mod ode;
pub mod params;
pub mod quadrature;
pub mod regression;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use jacobi::{JacobiMap, RWindow};
pub use master::SuperatomState;
pub use params::{AtomicInputs, PulseSpec, SystemParams};
