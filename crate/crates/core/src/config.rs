//! Shared link parameters consumed by every formula and by the simulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameters of one bottleneck link shared by a fixed set of flows.
///
/// All quantities are in base units: bit/s, seconds, bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharingConfig {
    /// Bottleneck capacity in bit/s.
    pub capacity: f64,
    /// Number of concurrent greedy flows.
    pub flow_count: u32,
    /// Base round trip time in seconds, without queuing delay.
    pub rtt_base: f64,
    /// Segment size in bits.
    pub mss: f64,
    /// Acknowledgement ratio: received full segments per returned ACK
    /// (2 with standard delayed ACKs).
    pub ack_ratio: f64,
    /// Queue capacity in bits.
    pub buffer: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("field `{0}` must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("flow_count must be at least 1")]
    NoFlows,
    #[error("ack_ratio must be at least 1, got {0}")]
    AckRatio(f64),
    #[error("buffer must be non-negative, got {0}")]
    NegativeBuffer(f64),
    #[error("{0}")]
    Invalid(String),
}

impl SharingConfig {
    /// The reference scenario used throughout: 100 Mbit/s bottleneck,
    /// 10 flows, 100 ms base RTT, 12 kbit segments, delayed ACKs, and a
    /// buffer worth 30 ms of queuing delay.
    pub fn reference() -> Self {
        SharingConfig {
            capacity: 1e8,
            flow_count: 10,
            rtt_base: 0.1,
            mss: 12_000.0,
            ack_ratio: 2.0,
            buffer: 3e6,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("capacity", self.capacity),
            ("rtt_base", self.rtt_base),
            ("mss", self.mss),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(ConfigError::NonPositive(name, v));
            }
        }
        if self.flow_count < 1 {
            return Err(ConfigError::NoFlows);
        }
        if self.ack_ratio < 1.0 || !self.ack_ratio.is_finite() {
            return Err(ConfigError::AckRatio(self.ack_ratio));
        }
        if self.buffer < 0.0 || !self.buffer.is_finite() {
            return Err(ConfigError::NegativeBuffer(self.buffer));
        }
        Ok(())
    }

    /// Congestion window, in segments, that carries exactly the fair share
    /// on an empty queue: C·RTT0 / (N·MSS).
    pub fn fair_cwnd(&self) -> f64 {
        self.capacity * self.rtt_base / (self.flow_count as f64 * self.mss)
    }

    /// Bandwidth-delay product C·RTT0 in bits.
    pub fn bandwidth_delay_product(&self) -> f64 {
        self.capacity * self.rtt_base
    }
}

impl Default for SharingConfig {
    fn default() -> Self {
        Self::reference()
    }
}
