//! Clearing and contagion in interbank payment networks.
//!
//! Node `0` is always the societal node: it collects obligations from the
//! banks `1..=n`, owes nothing and never defaults. Every vector in this crate
//! has length `n + 1` and every matrix is `(n + 1) x (n + 1)`.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//!
//! * [`network`]: liability data, relative liabilities, distress matrices.
//! * [`static_clearing`]: one-shot clearing with the fictitious default
//!   algorithm and a Picard oracle.
//! * [`discrete`]: clearing over discrete dates with rolled-forward debt.
//! * [`processes`]: cash-flow and liability schedules, seeded normal draws.
//! * [`continuous`]: the event-located Euler integrator for the
//!   continuous-time clearing system.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod continuous;
pub mod discrete;
pub mod error;
pub mod network;
pub mod processes;
pub mod static_clearing;

pub use error::{ClearingError, Result, Warning};
pub use network::{
    distress_matrix, relative_liabilities, DistressMatrix, FinancialNetwork, LiabilityMatrix,
    Matrix, RelativeLiabilities, Vector,
};
