//! Hybrid beamforming for IRS-assisted mmWave MIMO links.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamformer;
pub mod channel;
pub mod error;
pub mod harness;
pub mod irs;
pub mod metrics;
pub mod numerics;
pub mod oracle;

pub use error::{Error, Result};
