//! Effective-RTT resampling of packet traces.
//!
//! Sampling a quasi-periodic packet process at a fixed interval aliases: the
//! measured rate scatters even when the underlying flow is smooth, because
//! sub-RTT packet bursts circulate at a period that differs from the sampling
//! rate. Measuring instead over consecutive intervals whose lengths track the
//! round trip time at that moment removes the artifact without blurring the
//! saw-tooth the way low-pass filtering would. Boundaries follow
//! `t[i+1] = t[i] + rtt(t[i])` and each interval's rate is its traced volume
//! divided by its own duration, so volume is conserved.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("packet arrivals must be non-decreasing (record {0})")]
    UnorderedArrivals(usize),
    #[error("packet sizes must be positive (record {0})")]
    BadSize(usize),
    #[error("rtt series must have strictly increasing times and positive rtt (knot {0})")]
    BadRttSeries(usize),
    #[error("rtt series does not cover the trace span [{0}, {1}]")]
    RttCoverage(f64, f64),
    #[error("t0 must not precede the first packet arrival")]
    BadStart,
    #[error("sampling interval must be positive, got {0}")]
    BadInterval(f64),
    #[error("line {0}: {1}")]
    Parse(usize, String),
}

/// One captured packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// Arrival time in seconds.
    pub arrival: f64,
    /// Size in bits.
    pub size: f64,
    pub flow: u32,
}

/// A sequence of packet arrivals with non-decreasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PacketTrace {
    records: Vec<PacketRecord>,
}

impl PacketTrace {
    pub fn new(records: Vec<PacketRecord>) -> Result<Self, TraceError> {
        for (i, w) in records.windows(2).enumerate() {
            if w[1].arrival < w[0].arrival {
                return Err(TraceError::UnorderedArrivals(i + 1));
            }
        }
        if let Some(i) = records
            .iter()
            .position(|r| r.size <= 0.0 || r.size.is_nan())
        {
            return Err(TraceError::BadSize(i));
        }
        Ok(PacketTrace { records })
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn flow_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.flow).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Parses `arrival_s,size_bits,flow_id` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = |name: &str| {
                parts
                    .next()
                    .ok_or_else(|| TraceError::Parse(ln + 1, format!("missing {name}")))
            };
            let arrival = parse_f64(field("arrival_s")?, ln)?;
            let size = parse_f64(field("size_bits")?, ln)?;
            let flow = field("flow_id")?
                .trim()
                .parse::<u32>()
                .map_err(|e| TraceError::Parse(ln + 1, format!("flow_id: {e}")))?;
            records.push(PacketRecord {
                arrival,
                size,
                flow,
            });
        }
        PacketTrace::new(records)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("arrival_s,size_bits,flow_id\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", r.arrival, r.size, r.flow);
        }
        out
    }
}

fn parse_f64(s: &str, ln: usize) -> Result<f64, TraceError> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| TraceError::Parse(ln + 1, e.to_string()))
}

/// Piecewise-constant round trip time, stepped at the given knots: between
/// knots the previous value holds, which keeps interval boundaries causal.
#[derive(Debug, Clone, PartialEq)]
pub struct RttSeries {
    knots: Vec<(f64, f64)>,
}

impl RttSeries {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        if knots.is_empty() {
            return Err(TraceError::BadRttSeries(0));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(TraceError::BadRttSeries(i + 1));
            }
        }
        if let Some(i) = knots.iter().position(|(_, r)| *r <= 0.0 || r.is_nan()) {
            return Err(TraceError::BadRttSeries(i));
        }
        Ok(RttSeries { knots })
    }

    pub fn constant(rtt: f64) -> Result<Self, TraceError> {
        RttSeries::new(vec![(0.0, rtt)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn start(&self) -> f64 {
        self.knots[0].0
    }

    /// RTT at time `t`: the value of the latest knot at or before `t`.
    pub fn at(&self, t: f64) -> f64 {
        match self
            .knots
            .binary_search_by(|(kt, _)| kt.partial_cmp(&t).unwrap())
        {
            Ok(i) => self.knots[i].1,
            Err(0) => self.knots[0].1,
            Err(i) => self.knots[i - 1].1,
        }
    }

    /// Parses `time_s,rtt_s` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut knots = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let t = parse_f64(
                parts
                    .next()
                    .ok_or_else(|| TraceError::Parse(ln + 1, "missing time_s".into()))?,
                ln,
            )?;
            let r = parse_f64(
                parts
                    .next()
                    .ok_or_else(|| TraceError::Parse(ln + 1, "missing rtt_s".into()))?,
                ln,
            )?;
            knots.push((t, r));
        }
        RttSeries::new(knots)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,rtt_s\n");
        for (t, r) in &self.knots {
            let _ = writeln!(out, "{},{}", t, r);
        }
        out
    }
}

/// Rate samples per flow on a common set of interval boundaries. Each sample
/// `(t, b)` is the mean rate over the interval that starts at `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResampledTrace {
    /// (flow, interval start, rate in bit/s), ordered by interval then flow.
    pub samples: Vec<(u32, f64, f64)>,
    /// Interval boundaries actually used, including the final one.
    pub boundaries: Vec<f64>,
}

impl ResampledTrace {
    pub fn rates_of(&self, flow: u32) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter(|(f, _, _)| *f == flow)
            .map(|(_, t, b)| (*t, *b))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,flow_id,bitrate_bps\n");
        for (flow, t, b) in &self.samples {
            let _ = writeln!(out, "{},{},{}", t, flow, b);
        }
        out
    }
}

/// Resamples a packet trace over effective-RTT intervals starting at `t0`.
///
/// Boundaries obey `t[i+1] = t[i] + rtt(t[i])` exactly; the rate over
/// `(t[i], t[i+1]]` is the contained volume divided by the interval duration.
/// A trailing partial interval is discarded. All flows share one boundary
/// set, as they share one bottleneck.
pub fn resample(
    trace: &PacketTrace,
    rtt: &RttSeries,
    t0: f64,
) -> Result<ResampledTrace, TraceError> {
    if trace.is_empty() {
        return Ok(ResampledTrace::default());
    }
    let first = trace.records()[0].arrival;
    let last = trace.records()[trace.records().len() - 1].arrival;
    if t0 < first {
        return Err(TraceError::BadStart);
    }
    if rtt.start() > t0 {
        return Err(TraceError::RttCoverage(t0, last));
    }
    // lay out boundaries until the trace is exhausted
    let mut boundaries = vec![t0];
    loop {
        let t = *boundaries.last().unwrap();
        if t > last {
            break;
        }
        let step = rtt.at(t);
        if step <= 0.0 || step.is_nan() {
            return Err(TraceError::BadRttSeries(0));
        }
        boundaries.push(t + step);
    }
    // the final boundary overshoots the last arrival: the interval before it
    // is complete only if its end does not exceed the trace span; drop the
    // partial tail interval
    bin_volumes(trace, &boundaries)
}

/// Resamples over fixed-width intervals on the absolute grid
/// `k*interval`, starting at the grid line at or below the first arrival.
pub fn fixed_sample(trace: &PacketTrace, interval: f64) -> Result<ResampledTrace, TraceError> {
    if interval <= 0.0 || interval.is_nan() {
        return Err(TraceError::BadInterval(interval));
    }
    if trace.is_empty() {
        return Ok(ResampledTrace::default());
    }
    let first = trace.records()[0].arrival;
    let last = trace.records()[trace.records().len() - 1].arrival;
    let start = (first / interval).floor() * interval;
    let count = ((last - start) / interval).floor() as usize + 2;
    let boundaries: Vec<f64> = (0..=count).map(|i| start + i as f64 * interval).collect();
    bin_volumes(trace, &boundaries)
}

fn bin_volumes(trace: &PacketTrace, boundaries: &[f64]) -> Result<ResampledTrace, TraceError> {
    let last_arrival = match trace.records().last() {
        Some(r) => r.arrival,
        None => return Ok(ResampledTrace::default()),
    };
    let flows = trace.flow_ids();
    let flow_slot: std::collections::HashMap<u32, usize> =
        flows.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let mut samples = Vec::new();
    let mut used = vec![boundaries[0]];
    let mut volumes = vec![0.0f64; flows.len()];
    let mut records = trace.records().iter().peekable();
    // a packet exactly at a boundary belongs to the interval ending there,
    // so anything at or before the first boundary is outside every interval
    while records.next_if(|r| r.arrival <= boundaries[0]).is_some() {}
    for w in boundaries.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi > last_arrival {
            break; // the capture does not cover this interval: partial tail
        }
        volumes.iter_mut().for_each(|v| *v = 0.0);
        while let Some(r) = records.next_if(|r| r.arrival <= hi) {
            volumes[flow_slot[&r.flow]] += r.size;
        }
        for (i, f) in flows.iter().enumerate() {
            samples.push((*f, lo, volumes[i] / (hi - lo)));
        }
        used.push(hi);
    }
    Ok(ResampledTrace {
        samples,
        boundaries: used,
    })
}

/// Derives the round trip time series from a queue occupancy trace:
/// `rtt(t) = rtt_base + queue(t)/capacity`.
pub fn rtt_from_queue_trace(
    queue: &[(f64, f64)],
    capacity: f64,
    rtt_base: f64,
) -> Result<RttSeries, TraceError> {
    RttSeries::new(
        queue
            .iter()
            .map(|(t, q)| (*t, rtt_base + q / capacity))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Constant-rate packet stream: one `size`-bit packet every `size/rate`
    /// seconds, phase-shifted off the sampling grids.
    fn constant_rate_trace(rate: f64, size: f64, duration: f64, flow: u32) -> PacketTrace {
        let gap = size / rate;
        let n = (duration / gap) as usize;
        PacketTrace::new(
            (0..n)
                .map(|i| PacketRecord {
                    arrival: (i as f64 + 0.5) * gap,
                    size,
                    flow,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_rate_resamples_to_constant() {
        let r = 8e6;
        let trace = constant_rate_trace(r, 8000.0, 30.0, 0);
        let rtt = RttSeries::constant(0.1).unwrap();
        // t0 sits off the packet phase so every interval holds the same count
        let out = resample(&trace, &rtt, 0.00075).unwrap();
        assert!(out.samples.len() > 200);
        for (_, _, b) in &out.samples {
            assert_relative_eq!(*b, r, max_relative = 1e-9);
        }
        let fixed = fixed_sample(&trace, 0.25).unwrap();
        for (_, _, b) in &fixed.samples {
            assert_relative_eq!(*b, r, max_relative = 1e-9);
        }
    }

    #[test]
    fn boundaries_follow_the_rtt_recurrence() {
        let trace = constant_rate_trace(1e6, 10_000.0, 10.0, 3);
        let rtt = RttSeries::new(vec![(0.0, 0.1), (2.0, 0.2), (5.0, 0.05)]).unwrap();
        let out = resample(&trace, &rtt, 0.01).unwrap();
        for w in out.boundaries.windows(2) {
            assert_relative_eq!(w[1], w[0] + rtt.at(w[0]), max_relative = 1e-12);
        }
        // a constant rtt lays out the plain grid t0, t0+0.1, t0+0.2, ...
        let grid = resample(&trace, &RttSeries::constant(0.1).unwrap(), 0.01).unwrap();
        for (i, b) in grid.boundaries.iter().enumerate() {
            assert!((*b - (0.01 + i as f64 * 0.1)).abs() < 1e-9);
        }
    }

    #[test]
    fn volume_is_conserved_up_to_the_discarded_tail() {
        let trace = constant_rate_trace(5e6, 12_000.0, 7.3, 1);
        let rtt = RttSeries::new(vec![(0.0, 0.13), (3.0, 0.07)]).unwrap();
        let out = resample(&trace, &rtt, 0.01).unwrap();
        assert_eq!(out.samples.len(), out.boundaries.len() - 1);
        let binned: f64 = out
            .samples
            .iter()
            .enumerate()
            .map(|(i, (_, _, b))| b * (out.boundaries[i + 1] - out.boundaries[i]))
            .sum();
        // packets strictly inside (t0, last boundary] must be fully accounted
        let last_boundary = *out.boundaries.last().unwrap();
        let covered: f64 = trace
            .records()
            .iter()
            .filter(|r| r.arrival > 0.01 && r.arrival <= last_boundary)
            .map(|r| r.size)
            .sum();
        assert_relative_eq!(binned, covered, max_relative = 1e-9);
        // the discarded tail is less than one interval's worth of traffic
        let tail: f64 = trace
            .records()
            .iter()
            .filter(|r| r.arrival > last_boundary)
            .map(|r| r.size)
            .sum();
        assert!(tail < 5e6 * 0.14);
    }

    #[test]
    fn empty_trace_resamples_to_nothing() {
        let empty = PacketTrace::default();
        assert_eq!(
            fixed_sample(&empty, 0.1).unwrap(),
            ResampledTrace::default()
        );
        let rtt = RttSeries::constant(0.1).unwrap();
        assert_eq!(
            resample(&empty, &rtt, 0.0).unwrap(),
            ResampledTrace::default()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let trace = constant_rate_trace(1e6, 10_000.0, 2.0, 0);
        assert!(matches!(
            fixed_sample(&trace, 0.0),
            Err(TraceError::BadInterval(_))
        ));
        // t0 before the first arrival
        let rtt = RttSeries::constant(0.1).unwrap();
        assert!(matches!(
            resample(&trace, &rtt, -1.0),
            Err(TraceError::BadStart)
        ));
        // rtt series starting after t0 cannot cover the span
        let late = RttSeries::new(vec![(5.0, 0.1)]).unwrap();
        assert!(matches!(
            resample(&trace, &late, 1.0),
            Err(TraceError::RttCoverage(_, _))
        ));
        // malformed construction
        assert!(PacketTrace::new(vec![
            PacketRecord {
                arrival: 1.0,
                size: 100.0,
                flow: 0
            },
            PacketRecord {
                arrival: 0.5,
                size: 100.0,
                flow: 0
            },
        ])
        .is_err());
        assert!(RttSeries::new(vec![(0.0, 0.1), (0.0, 0.2)]).is_err());
        assert!(RttSeries::new(vec![(0.0, -0.1)]).is_err());
    }

    /// Bursty trace: every `period` seconds, `packets` segments arrive
    /// back-to-back at line rate.
    fn burst_trace(
        period: f64,
        packets: usize,
        size: f64,
        line_rate: f64,
        cycles: usize,
    ) -> PacketTrace {
        let mut records = Vec::new();
        for c in 0..cycles {
            let t0 = c as f64 * period;
            for j in 0..packets {
                records.push(PacketRecord {
                    arrival: t0 + j as f64 * size / line_rate,
                    size,
                    flow: 0,
                });
            }
        }
        PacketTrace::new(records).unwrap()
    }

    fn variance(xs: &[f64]) -> f64 {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn rtt_matched_sampling_removes_aliasing() {
        // bursts every 109 ms sampled at a fixed 100 ms alias; matching the
        // interval to the burst period recovers the true per-cycle mean
        let period = 0.109;
        let trace = burst_trace(period, 10, 12_000.0, 1e8, 550);
        let true_mean = 10.0 * 12_000.0 / period;

        let fixed = fixed_sample(&trace, 0.1).unwrap();
        let fixed_rates: Vec<f64> = fixed.samples.iter().map(|(_, _, b)| *b).collect();

        let rtt = RttSeries::constant(period).unwrap();
        let matched = resample(&trace, &rtt, period / 2.0).unwrap();
        let matched_rates: Vec<f64> = matched.samples.iter().map(|(_, _, b)| *b).collect();
        assert!(matched_rates.len() > 500);

        for b in &matched_rates {
            assert!((b - true_mean).abs() / true_mean < 0.01);
        }
        let vf = variance(&fixed_rates);
        let vm = variance(&matched_rates);
        assert!(
            vf >= 5.0 * vm.max(1e-12),
            "aliased variance {vf} vs matched {vm}"
        );
    }

    #[test]
    fn rtt_from_queue_examples() {
        let series = rtt_from_queue_trace(&[(0.0, 0.0), (1.0, 3e6)], 1e8, 0.1).unwrap();
        assert_relative_eq!(series.at(0.5), 0.1);
        assert_relative_eq!(series.at(1.5), 0.13);
        // monotone queue ramp maps to a monotone rtt ramp
        let ramp: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, i as f64 * 1e5)).collect();
        let series = rtt_from_queue_trace(&ramp, 1e8, 0.1).unwrap();
        let mut prev = 0.0;
        for (t, _) in &ramp {
            let r = series.at(*t);
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn csv_round_trip() {
        let trace = constant_rate_trace(2e6, 12_000.0, 1.0, 7);
        let parsed = PacketTrace::from_csv(&trace.to_csv()).unwrap();
        assert_eq!(parsed, trace);
        let rtt = RttSeries::new(vec![(0.0, 0.1), (1.0, 0.12)]).unwrap();
        assert_eq!(RttSeries::from_csv(&rtt.to_csv()).unwrap(), rtt);
        assert!(PacketTrace::from_csv("arrival_s,size_bits,flow_id\n1.0,banana,0\n").is_err());
    }
}
