//! Evolutionary-game equilibrium of probabilistic content caching among
//! mobile devices that share content over device-to-device links.
//!
//! The crate is organized bottom-up:
//!
//! * [`catalog`]: content library and Zipf popularity;
//! * [`meanfield`]: large-population hit and serving probabilities;
//! * [`user_model`]: per-user loads, costs and utility;
//! * [`best_response`]: the per-user constrained utility maximization;
//! * [`dynamics`]: the damped best-response loop and equilibrium check;
//! * [`baselines`]: most-popular and random-uniform reference policies;
//! * [`oracle`]: Monte Carlo encounter-graph simulator;
//! * [`experiments`]: configuration, sweeps, reports and CSV output.

pub mod baselines;
pub mod best_response;
pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod meanfield;
pub mod oracle;
pub mod user_model;

pub use error::{Error, Result};
