//! Deterministic model of TCP bandwidth sharing over a tail-drop bottleneck.
//!
//! The crate has four parts that cross-validate each other:
//!
//! - [`analytic`]: closed-form expressions for the rate/queue/RTT steps at a
//!   congestion event, buffer sizing bounds, loss intervals and macroscopic
//!   throughput, and the convergence trajectory of a flow toward its fair
//!   share.
//! - [`markov`]: the integer congestion-window Markov chain driven by random
//!   per-packet loss, its stationary distribution, the derived bit-rate
//!   distribution, and a log-normal approximation of its CDF.
//! - [`sim`]: a fluid simulation of N additive-increase/multiplicative-decrease
//!   flows sharing one bottleneck queue, with isolated, synchronized and
//!   i.i.d. loss assignment.
//! - [`resample`]: effective-RTT resampling of packet traces, which removes
//!   the aliasing a fixed-interval sampler introduces on quasi-periodic
//!   traffic.
//!
//! [`verify`] wires the parts together into a pass/fail cross-validation
//! suite used by the CLI and the acceptance tests.

pub mod analytic;
pub mod config;
pub mod markov;
pub mod resample;
pub mod sim;
pub mod verify;

pub use config::{ConfigError, SharingConfig};
pub use sim::{LossMode, RateTrace, SimConfig};
