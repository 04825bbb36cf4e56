//! Simulation output: sampled rate/queue series, loss records, congestion
//! events, and the measurements taken on them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::SimError;

/// One sampled instant. All values describe the state at the start of the
/// integration step: `rtt = rtt_base + queue/capacity` and the per-flow rates
/// already use that rtt.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    /// Per-flow bit rates in bit/s.
    pub rates: Vec<f64>,
    /// Sum of the per-flow rates plus any external offered load.
    pub aggregate: f64,
    /// Queue occupancy in bits.
    pub queue: f64,
    /// Effective round trip time in seconds.
    pub rtt: f64,
    /// Bits the link has delivered since the start of the run.
    pub delivered_cum: f64,
    /// Bits dropped at the queue since the start of the run.
    pub dropped_cum: f64,
}

/// One dropped segment attributed to a flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEvent {
    pub time: f64,
    pub flow: u32,
}

/// One flow hit within a congestion event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VictimHit {
    pub flow: u32,
    pub hit_time: f64,
    /// The flow's rate at the moment it was hit.
    pub bitrate_at_hit: f64,
    /// When the halving actually took effect, one round trip after the hit.
    pub halve_time: Option<f64>,
}

/// A cluster of losses at a saturated queue. Lasts at most one round trip
/// (measured at the opening): by then the first halving has taken effect.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CongestionEvent {
    pub start: f64,
    pub end: f64,
    /// Distinct flows that reduced their window because of this event.
    pub flows_hit: BTreeSet<u32>,
    /// Dropped segments attributed during the event window.
    pub losses: u32,
    /// Hit details for the flows in `flows_hit` (filled by the simulator;
    /// empty when the event was reconstructed from a loss trace).
    pub victims: Vec<VictimHit>,
}

/// Full record of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrace {
    pub samples: Vec<Sample>,
    pub loss_events: Vec<LossEvent>,
    pub events: Vec<CongestionEvent>,
    /// (time, flow) of every executed window halving.
    pub halvings: Vec<(f64, u32)>,
    pub capacity: f64,
    pub buffer: f64,
    pub rtt_base: f64,
    pub flow_count: u32,
    pub duration: f64,
    /// Warm-up boundary; long-run statistics start here.
    pub measure_from: f64,
    pub delivered_total: f64,
    pub dropped_total: f64,
    pub offered_total: f64,
}

impl RateTrace {
    /// Index of the first sample at or after `t`.
    pub fn sample_index_at(&self, t: f64) -> Option<usize> {
        self.samples.iter().position(|s| s.time >= t)
    }

    /// Measured mean interval between losses of one flow, over the
    /// post-warm-up window. `None` when no losses were recorded.
    pub fn mean_loss_interval_per_flow(&self) -> Option<f64> {
        let n = self
            .loss_events
            .iter()
            .filter(|l| l.time >= self.measure_from)
            .count();
        if n == 0 {
            return None;
        }
        Some((self.duration - self.measure_from) * self.flow_count as f64 / n as f64)
    }

    /// Same measurement counting executed halvings instead of losses.
    pub fn mean_halving_interval_per_flow(&self) -> Option<f64> {
        let n = self
            .halvings
            .iter()
            .filter(|(t, _)| *t >= self.measure_from)
            .count();
        if n == 0 {
            return None;
        }
        Some((self.duration - self.measure_from) * self.flow_count as f64 / n as f64)
    }

    /// Congestion events that opened inside the measurement window.
    pub fn measured_events(&self) -> impl Iterator<Item = &CongestionEvent> {
        self.events.iter().filter(|e| e.start >= self.measure_from)
    }

    /// Long-format CSV `time_s,flow_id,bitrate_bps`, one row per flow and
    /// sample.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("time_s,flow_id,bitrate_bps\n");
        for s in &self.samples {
            for (flow, rate) in s.rates.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", s.time, flow, rate);
            }
        }
        out
    }

    /// Companion CSV `time_s,queue_bits,rtt_s`.
    pub fn queue_csv(&self) -> String {
        let mut out = String::from("time_s,queue_bits,rtt_s\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.time, s.queue, s.rtt);
        }
        out
    }

    /// Companion CSV `time_s,flow_id`, one row per dropped segment.
    pub fn losses_csv(&self) -> String {
        let mut out = String::from("time_s,flow_id\n");
        for l in &self.loss_events {
            let _ = writeln!(out, "{},{}", l.time, l.flow);
        }
        out
    }
}

/// Delivered volume over the measurement window divided by the link capacity
/// times that window.
pub fn measure_utilization(trace: &RateTrace, capacity: f64) -> Result<f64, SimError> {
    let first = trace
        .sample_index_at(trace.measure_from)
        .ok_or(SimError::EmptyTrace)?;
    let a = &trace.samples[first];
    let b = trace.samples.last().ok_or(SimError::EmptyTrace)?;
    let window = b.time - a.time;
    if window <= 0.0 || window.is_nan() {
        return Err(SimError::EmptyTrace);
    }
    Ok((b.delivered_cum - a.delivered_cum) / (capacity * window))
}

/// Clusters the loss record into congestion events: consecutive losses closer
/// than `window` belong to one event.
pub fn detect_events(trace: &RateTrace, window: f64) -> Vec<CongestionEvent> {
    let mut out: Vec<CongestionEvent> = Vec::new();
    for l in &trace.loss_events {
        match out.last_mut() {
            Some(ev) if l.time - ev.end <= window => {
                ev.end = l.time;
                ev.losses += 1;
                ev.flows_hit.insert(l.flow);
            }
            _ => out.push(CongestionEvent {
                start: l.time,
                end: l.time,
                flows_hit: BTreeSet::from([l.flow]),
                losses: 1,
                victims: Vec::new(),
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_trace() -> RateTrace {
        RateTrace {
            samples: vec![],
            loss_events: vec![],
            events: vec![],
            halvings: vec![],
            capacity: 1e8,
            buffer: 3e6,
            rtt_base: 0.1,
            flow_count: 10,
            duration: 0.0,
            measure_from: 0.0,
            delivered_total: 0.0,
            dropped_total: 0.0,
            offered_total: 0.0,
        }
    }

    #[test]
    fn utilization_of_degenerate_trace_is_an_error() {
        assert!(measure_utilization(&empty_trace(), 1e8).is_err());
    }

    #[test]
    fn no_losses_means_no_events() {
        assert!(detect_events(&empty_trace(), 0.1).is_empty());
    }

    #[test]
    fn losses_cluster_by_gap() {
        let mut t = empty_trace();
        t.loss_events = vec![
            LossEvent {
                time: 1.00,
                flow: 0,
            },
            LossEvent {
                time: 1.05,
                flow: 1,
            },
            LossEvent {
                time: 1.08,
                flow: 0,
            },
            LossEvent {
                time: 3.00,
                flow: 2,
            },
        ];
        let evs = detect_events(&t, 0.1);
        assert_eq!(evs.len(), 2);
        assert_eq!(evs[0].losses, 3);
        assert_eq!(evs[0].flows_hit.len(), 2);
        assert_eq!(evs[1].losses, 1);
        assert!((evs[0].end - 1.08).abs() < 1e-12);
    }
}
