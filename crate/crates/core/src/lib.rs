//! Exact reduced dynamics of a bosonic or fermionic system exchanging
//! particles with a thermal reservoir.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. With `std` enabled, embarrassingly parallel loops run on rayon.
//!
//! Pipeline, in the order data flows:
//!
//! - [`model`]: system energies, statistics, bath temperature and chemical
//!   potential, spectral density families.
//! - [`spectral`]: self-energy, resolvent, localized modes and the broadened
//!   spectrum `D(ε)`.
//! - [`greens`]: the propagator `u(t)` and bath-injected occupation `v(t,t)`.
//! - [`fock`], [`evolution`]: Fock-space combinatorics and assembly of the
//!   exact density matrix `ρ(t)`, plus the time-local master equation.
//! - [`thermalization`]: steady states, weak-coupling limit, memory effects.
//! - [`oracle`]: discretized baths and many-body exact diagonalization used
//!   as ground truth.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod linalg;
mod par;
pub mod quad;

pub mod evolution;
pub mod fock;
pub mod greens;
pub mod model;
pub mod oracle;
pub mod scenarios;
pub mod spectral;
pub mod thermalization;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use model::{BathConfig, OpenSystem, SpectralDensity, SpectralKind, Statistics, SystemModel};
