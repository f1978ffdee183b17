//! Finding hardening rules that break system functionality.
//!
//! A guide's rules are treated as boolean parameters. Strength-t covering
//! arrays choose which rules to apply together, each tuple is tested, and the
//! resulting truth table is analysed for a maximal subset of the guide that
//! leaves every test passing.

pub mod analysis;
pub mod covering;
pub mod dtree;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod logic;
pub mod model;
pub mod oracle;

mod bitset;

pub use error::{Error, Result};
