//! Commission-aware online portfolio selection.
//!
//! The crate is organised bottom-up:
//!
//! - [`market_data`]: relative-price sequences (CSV, price levels, synthetic).
//! - [`accounting`]: portfolio arithmetic and proportional-commission wealth ledgers.
//! - [`solver`]: small constrained minimisations on the probability simplex.
//! - [`strategies`]: commission-oblivious base strategies (UCRP, EG, PAMR, OLMAR,
//!   Anticor), the hindsight BCRP and the lazy-update OLU baseline.
//! - [`cape`]: the commission-avoiding ensemble built on a regularised Newton step.
//! - [`harness`]: experiment orchestration, walk-forward calibration and reports.

pub mod accounting;
pub mod cape;
pub mod error;
pub mod harness;
pub mod market_data;
pub mod solver;
pub mod strategies;

pub use accounting::{CommissionRate, Portfolio, WealthLedger};
pub use cape::{AllocationVector, CapeConfig, EnsembleState};
pub use error::{Error, Result};
pub use market_data::{MarketSequence, MarketVector};
