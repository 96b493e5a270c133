//! Cross-layer model of inter-slot successive interference cancellation
//! (IeS-IC) random access.
//!
//! The crate is organised bottom-up:
//!
//! * [`phy_model`]: residual powers of imperfect cancellation and the
//!   SIC-SINR (SSINR) of a packet after a set of cancellations.
//! * [`link_abstraction`]: Rician QPSK symbol error and packet decode
//!   probability.
//! * [`sicqta`]: the query tree algorithm with SIC skips, producing slot
//!   traces and decode chains.
//! * [`scenario`]: scenario enumeration, MAC/total throughput, calibration,
//!   Monte Carlo cross-checks and the Slotted ALOHA baseline.
//! * [`baseband`]: symbol-level synthetic oracle for the SSINR model.
//! * [`cli`]: configuration, subcommands and CSV emitters.

pub mod baseband;
pub mod cli;
mod error;
pub mod link_abstraction;
pub mod phy_model;
pub mod rng;
pub mod scenario;
pub mod sicqta;

pub use error::{Error, Result};
pub use phy_model::{LinkParams, LinkSet, UserId, UserSet};
