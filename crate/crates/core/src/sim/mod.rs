//! Fluid simulation of N additive-increase/multiplicative-decrease flows
//! sharing one tail-drop bottleneck queue.
//!
//! Flows are fluid: each congestion window grows continuously at 1/a per
//! round trip, the arrival rate is `sum(cwnd_i)*MSS/rtt` with
//! `rtt = rtt_base + queue/capacity`, and the queue integrates
//! `arrival - capacity` clipped to its limits. Packet granularity only enters
//! through loss assignment: when the queue saturates, dropped segments are
//! mapped to flows at random, proportional to their current packet rate, and
//! each hit flow halves its window one round trip later.

mod engine;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SharingConfig};

pub use engine::{pick_victim, run, step_response, StepResponse};
pub use trace::{
    detect_events, measure_utilization, CongestionEvent, LossEvent, RateTrace, Sample, VictimHit,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("time_step must be at most rtt_base/50, got {0}")]
    StepTooCoarse(f64),
    #[error("duration must exceed 10 * rtt_base, got {0}")]
    TooShort(f64),
    #[error("initial_cwnds must hold one window >= 1 per flow")]
    BadInitialCwnds,
    #[error("iid loss probability must lie in (0, 1), got {0}")]
    BadIidLoss(f64),
    #[error("trace is empty or covers no measurable time")]
    EmptyTrace,
}

/// How dropped segments are mapped to flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// One victim per congestion event, drawn proportional to packet rate.
    Isolated,
    /// One victim draw per window increment that overflows during the
    /// reaction lag (up to N/a per event); flows already reducing are not
    /// halved twice.
    Synchronized,
    /// Per-packet independent loss with the given probability, regardless of
    /// queue state.
    Iid(f64),
}

/// A constant-rate offered-load change applied from `at` onward; `delta` may
/// be negative to remove load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferedStep {
    pub at: f64,
    pub delta: f64,
}

/// Full simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub sharing: SharingConfig,
    /// Simulated seconds.
    pub duration: f64,
    /// Integration step in seconds; at most rtt_base/50.
    #[serde(default)]
    pub time_step: Option<f64>,
    #[serde(default = "default_loss_mode")]
    pub loss_mode: LossMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Per-flow starting windows in segments. When absent, windows start
    /// uniformly in [0.5, 1.5] times the fair-share window (seeded).
    #[serde(default)]
    pub initial_cwnds: Option<Vec<f64>>,
    /// Samples are recorded every `trace_stride` integration steps.
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
    /// Offered-load steps from external constant-rate sources.
    #[serde(default)]
    pub offered_steps: Vec<OfferedStep>,
}

fn default_loss_mode() -> LossMode {
    LossMode::Synchronized
}

fn default_seed() -> u64 {
    1
}

fn default_stride() -> usize {
    10
}

impl SimConfig {
    /// The reference scenario: shared defaults, 60 simulated seconds,
    /// synchronized losses, rtt_base/100 integration step.
    pub fn reference() -> Self {
        SimConfig {
            sharing: SharingConfig::reference(),
            duration: 60.0,
            time_step: None,
            loss_mode: LossMode::Synchronized,
            seed: 1,
            initial_cwnds: None,
            trace_stride: 10,
            offered_steps: Vec::new(),
        }
    }

    /// Integration step: explicit value or rtt_base/100.
    pub fn step(&self) -> f64 {
        self.time_step.unwrap_or(self.sharing.rtt_base / 100.0)
    }

    /// Start of the measurement window; the first fifth of the run is warm-up
    /// and excluded from all long-run statistics.
    pub fn measure_from(&self) -> f64 {
        0.2 * self.duration
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.sharing.validate()?;
        let dt = self.step();
        if dt <= 0.0 || dt.is_nan() || dt > self.sharing.rtt_base / 50.0 {
            return Err(SimError::StepTooCoarse(dt));
        }
        if self.duration <= 10.0 * self.sharing.rtt_base || self.duration.is_nan() {
            return Err(SimError::TooShort(self.duration));
        }
        if let Some(ws) = &self.initial_cwnds {
            if ws.len() != self.sharing.flow_count as usize
                || ws.iter().any(|w| *w < 1.0 || !w.is_finite())
            {
                return Err(SimError::BadInitialCwnds);
            }
        }
        if let LossMode::Iid(p) = self.loss_mode {
            if !(p > 0.0 && p < 1.0) {
                return Err(SimError::BadIidLoss(p));
            }
        }
        if self.trace_stride == 0 {
            return Err(SimError::EmptyTrace);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid() {
        SimConfig::reference().validate().unwrap();
    }

    #[test]
    fn rejects_coarse_step_and_short_runs() {
        let mut c = SimConfig::reference();
        c.time_step = Some(0.01);
        assert!(matches!(c.validate(), Err(SimError::StepTooCoarse(_))));

        let mut c = SimConfig::reference();
        c.duration = 0.5;
        assert!(matches!(c.validate(), Err(SimError::TooShort(_))));

        let mut c = SimConfig::reference();
        c.initial_cwnds = Some(vec![10.0; 3]);
        assert!(matches!(c.validate(), Err(SimError::BadInitialCwnds)));
    }

    #[test]
    fn loss_mode_json_round_trip() {
        let c = SimConfig {
            loss_mode: LossMode::Iid(1.08e-4),
            ..SimConfig::reference()
        };
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"iid\":0.000108"));
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let plain: SimConfig = serde_json::from_str(
            r#"{"sharing":{"capacity":1e8,"flow_count":10,"rtt_base":0.1,
                "mss":12000,"ack_ratio":2,"buffer":3e6},
                "duration":60,"loss_mode":"synchronized"}"#,
        )
        .unwrap();
        assert_eq!(plain.loss_mode, LossMode::Synchronized);
        assert_eq!(plain.seed, 1);
    }
}
