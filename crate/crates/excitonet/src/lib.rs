//! Simulation and analysis toolkit for incoherently driven excitation
//! transport on small disordered dipolar networks.
//!
//! A network is a set of `N` sites in a unit-diameter ball, with site 1
//! driven by an incoherent pump, site `N` coupled to a sink, and dipolar
//! couplings `1/r^3` between all pairs. The crate builds the corresponding
//! Lindblad generator on the vacuum + single-excitation space, solves for
//! the stationary state, and extracts three observables per network:
//!
//! * stationary transport efficiency (sink flux over pump flux),
//! * transient transfer efficiency of the closed-system dynamics under an
//!   exponential time weight,
//! * a coherent-delocalization witness of the stationary state, evaluated
//!   by numerical optimization over product states.
//!
//! [`campaign`] runs these per-network pipelines over seeded random
//! ensembles with deterministic, worker-count-independent output;
//! [`stats`] provides the correlation and binned-moment analysis used to
//! compare the three observables.

// Validation compares as `!(x > 0.0)` on purpose: it rejects NaN where
// `x <= 0.0` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod error;
pub mod lindblad;
pub mod network;
pub mod optim;
pub mod records;
pub mod seeding;
pub mod stats;
pub mod transient;
pub mod twoexc;
pub mod witness;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
