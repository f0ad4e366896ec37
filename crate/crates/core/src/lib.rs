//! Sub-channel and power allocation for a single-cell NOMA network served by
//! an amplify-and-forward relay.
//!
//! * [`chanmodel`]: geometry, Rayleigh fading, unit conversions
//! * [`nomacore`]: SIC order, interference, rates, PF metric, throughput state
//! * [`matching`]: static and dynamic many-to-many matching, stability checks
//! * [`power`]: water-filling and relay amplification
//! * [`baselines`]: PF-OFDMA and the exhaustive optimum
//! * [`harness`]: seeded Monte-Carlo campaigns, config files, CSV/JSON output

pub mod baselines;
pub mod chanmodel;
pub mod error;
pub mod harness;
pub mod matching;
pub mod nomacore;
pub mod power;

pub use error::{Error, Result};
