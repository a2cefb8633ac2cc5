//! Privacy-preserving aggregation for fully decentralized learning.
//!
//! Learners mask their weighted models with Shamir shares over GF(p), run
//! average consensus on the masked values, and recover the exact weighted
//! sum from the consensus limit.

pub mod bench;
pub mod config;
pub mod consensus;
pub mod error;
pub mod field;
pub mod fixed_point;
pub mod privacy;
pub mod protocol;
pub mod rng;
pub mod sharing;
pub mod topology;
pub mod transcript;

pub use error::{Error, Result};
