//! Simulation and estimation core for the B92 protocol and its two
//! decoy-assisted variants.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs: randomness is supplied by counter-based streams
//! derived from a seed and a pulse index, so a trial can be split across
//! any number of workers by a caller that has threads (see the `b92-lab`
//! crate) and still reproduce bit for bit.
//!
//! Module map:
//!
//! * [`qmath`]: 2x2 complex algebra with a classical vacuum weight, Born
//!   sampling, Kraus composition, binary entropy.
//! * [`protocol_states`]: signal and decoy kets, the γ-family of B92 POVMs,
//!   the filter operator, source ensembles.
//! * [`channel`]: attack models (lossy depolarizing, USD interception,
//!   Pauli with X-selective loss).
//! * [`montecarlo`]: pulse-by-pulse protocol execution and tallies.
//! * [`estimation`]: bit/phase error estimates, the restricted-attack
//!   phase-error bound, secure gain.
//! * [`analytic`]: closed-form rates, tolerable depolarizing thresholds and
//!   working distances.
#![no_std]

extern crate alloc;

pub mod analytic;
pub mod channel;
mod error;
pub mod estimation;
pub mod montecarlo;
pub mod protocol_states;
pub mod qmath;

pub use error::{Error, Result};
