//! Closed-form relations governing rate, queue and RTT at congestion events,
//! between events, and in the long-run average.
//!
//! Everything here is a pure function of a [`SharingConfig`] and scalar
//! inputs. The simulator is cross-checked against these expressions; the
//! derivations assume a nonempty queue so that the aggregate input rate
//! equals the link capacity before and after each event.

use serde::Serialize;
use thiserror::Error;

use crate::config::SharingConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("rtt must be positive, got {0}")]
    BadRtt(f64),
    #[error("input `{0}` out of range: {1}")]
    OutOfRange(&'static str, f64),
    #[error("loss probability must lie strictly between 0 and 1, got {0}")]
    BadLossProbability(f64),
}

/// One flow's congestion window and the bit rate it carries at the current
/// RTT. `bitrate = cwnd * mss / rtt` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    /// Congestion window in segments (fluid, not rounded).
    pub cwnd: f64,
    /// Carried bit rate in bit/s.
    pub bitrate: f64,
}

impl FlowState {
    pub fn from_cwnd(cwnd: f64, mss: f64, rtt: f64) -> Result<Self, ModelError> {
        Ok(FlowState {
            cwnd,
            bitrate: bitrate_from_cwnd(cwnd, mss, rtt)?,
        })
    }

    pub fn from_bitrate(bitrate: f64, mss: f64, rtt: f64) -> Result<Self, ModelError> {
        if rtt <= 0.0 || rtt.is_nan() {
            return Err(ModelError::BadRtt(rtt));
        }
        Ok(FlowState {
            cwnd: bitrate * rtt / mss,
            bitrate,
        })
    }
}

/// Bottleneck queue occupancy and the queuing delay it imposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueState {
    /// Queue occupancy in bits.
    pub occupancy: f64,
    /// Queuing delay occupancy/capacity in seconds.
    pub delay: f64,
}

impl QueueState {
    pub fn from_occupancy(occupancy: f64, capacity: f64) -> Self {
        QueueState {
            occupancy,
            delay: occupancy / capacity,
        }
    }
}

/// Immediate consequences of one flow halving its window at a congestion
/// event, while the queue stays nonempty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepResult {
    /// Net rate change of the flow that was hit: the halving plus its share
    /// of the speed-up from the reduced queuing delay.
    pub delta_bitrate_hit: f64,
    /// Rate gain of an unaffected flow *at fair share*; a flow at rate `b`
    /// gains proportionally more or less, see [`step_up`].
    pub delta_bitrate_other: f64,
    /// Queue drain in bits until the input rate catches the drain rate again.
    pub delta_queue: f64,
    /// Round-trip-time reduction in seconds caused by that drain.
    pub delta_rtt: f64,
}

/// Fair share of the link capacity per flow, C/N.
pub fn fair_share(cfg: &SharingConfig) -> f64 {
    cfg.capacity / cfg.flow_count as f64
}

/// Bit rate carried by a window of `cwnd` segments at round trip time `rtt`.
pub fn bitrate_from_cwnd(cwnd: f64, mss: f64, rtt: f64) -> Result<f64, ModelError> {
    if rtt <= 0.0 || rtt.is_nan() {
        return Err(ModelError::BadRtt(rtt));
    }
    if cwnd <= 0.0 || cwnd.is_nan() {
        return Err(ModelError::OutOfRange("cwnd", cwnd));
    }
    if mss <= 0.0 || mss.is_nan() {
        return Err(ModelError::OutOfRange("mss", mss));
    }
    Ok(cwnd * mss / rtt)
}

/// Queue and RTT reduction when the flow `hit` halves its window at round
/// trip time `rtt_before`, assuming the queue does not drain to zero.
///
/// The drain is half the victim's rate sustained for one round trip:
/// `delta_queue = (b_hit/2) * rtt`, equivalently `delta_rtt = b_hit*rtt/(2C)`.
pub fn step_down(
    cfg: &SharingConfig,
    hit: &FlowState,
    rtt_before: f64,
) -> Result<StepResult, ModelError> {
    if rtt_before <= 0.0 || rtt_before.is_nan() {
        return Err(ModelError::BadRtt(rtt_before));
    }
    if hit.bitrate > cfg.capacity {
        return Err(ModelError::OutOfRange("hit.bitrate", hit.bitrate));
    }
    if hit.bitrate < 0.0 {
        return Err(ModelError::OutOfRange("hit.bitrate", hit.bitrate));
    }
    let delta_rtt = hit.bitrate * rtt_before / (2.0 * cfg.capacity);
    let delta_queue = delta_rtt * cfg.capacity;
    let delta_bitrate_hit = if hit.bitrate == 0.0 {
        0.0
    } else {
        step_down_net(cfg, hit.bitrate)?
    };
    let delta_bitrate_other = if hit.bitrate == 0.0 {
        0.0
    } else {
        step_up(cfg, fair_share(cfg), hit.bitrate)?
    };
    Ok(StepResult {
        delta_bitrate_hit,
        delta_bitrate_other,
        delta_queue,
        delta_rtt,
    })
}

/// [`step_down`] in the idealized scenario where every flow oscillates around
/// fair share, so the victim is hit at 4/3 of it: the drain becomes
/// (2/3)·C·rtt/N and the RTT reduction (2/3)·rtt/N.
///
/// A flow can never exceed the link itself, so the idealized victim rate is
/// capped at capacity; with a single flow that is exactly the no-step case.
pub fn step_down_ideal(cfg: &SharingConfig, rtt: f64) -> Result<StepResult, ModelError> {
    let rate = (4.0 / 3.0 * fair_share(cfg)).min(cfg.capacity);
    let hit = FlowState::from_bitrate(rate, cfg.mss, rtt)?;
    step_down(cfg, &hit, rtt)
}

/// Rate gain of a flow currently at `bitrate` when some *other* flow of rate
/// `hit_bitrate` is hit: `b * b_hit / (2C - b_hit)`.
pub fn step_up(cfg: &SharingConfig, bitrate: f64, hit_bitrate: f64) -> Result<f64, ModelError> {
    check_hit_rate(cfg, hit_bitrate)?;
    Ok(bitrate * hit_bitrate / (2.0 * cfg.capacity - hit_bitrate))
}

/// Net rate change of the hit flow itself: it first halves, then its halved
/// rate takes part in the speed-up, `(b_hit/2) * (b_hit/(2C - b_hit) - 1)`.
///
/// A single flow filling the link (`hit_bitrate == capacity`) gets exactly 0:
/// the queue drain absorbs the halving and the carried rate never steps.
pub fn step_down_net(cfg: &SharingConfig, hit_bitrate: f64) -> Result<f64, ModelError> {
    check_hit_rate(cfg, hit_bitrate)?;
    let denom = 2.0 * cfg.capacity - hit_bitrate;
    Ok(hit_bitrate / 2.0 * (hit_bitrate / denom - 1.0))
}

fn check_hit_rate(cfg: &SharingConfig, hit_bitrate: f64) -> Result<(), ModelError> {
    if hit_bitrate < 0.0 || hit_bitrate.is_nan() || hit_bitrate >= 2.0 * cfg.capacity {
        return Err(ModelError::OutOfRange("hit_bitrate", hit_bitrate));
    }
    Ok(())
}

/// Smallest buffer that still absorbs a single fair-share halving without the
/// queue running empty: the bandwidth-delay product divided by the flow
/// count, times 2/3. Below this, full utilization is unreachable.
pub fn buffer_bound_best(cfg: &SharingConfig) -> f64 {
    2.0 / 3.0 * cfg.capacity * cfg.rtt_base / cfg.flow_count as f64
}

/// Buffer needed when all flows that can halve within one round trip do so
/// simultaneously (global synchronization): (2/(3a))·C·RTT0, independent of
/// the number of flows.
pub fn buffer_bound_sync(cfg: &SharingConfig) -> f64 {
    2.0 / (3.0 * cfg.ack_ratio) * cfg.capacity * cfg.rtt_base
}

/// Queue headroom needed to absorb an offered-load change of `delta_offered`
/// without loss: RTT0·ΔB. The aggregate adapts within about one round trip.
pub fn queue_absorption(cfg: &SharingConfig, delta_offered: f64) -> Result<f64, ModelError> {
    if delta_offered < 0.0 || delta_offered.is_nan() {
        return Err(ModelError::OutOfRange("delta_offered", delta_offered));
    }
    Ok(cfg.rtt_base * delta_offered)
}

/// Growth coefficient of the round trip time while all N windows grow and the
/// queue absorbs the excess: d(RTT²)/dt / 2 = MSS·N/(C·a).
pub fn rtt_growth_coefficient(cfg: &SharingConfig) -> f64 {
    cfg.mss * cfg.flow_count as f64 / (cfg.capacity * cfg.ack_ratio)
}

/// Round trip time `t` seconds into a loss-free period, starting from the
/// base RTT with an empty queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttGrowth {
    /// Exact solution sqrt(2·κ·t + RTT0²) of the growth equation.
    pub exact: f64,
    /// First-order expansion RTT0 + κ·t/RTT0; an upper bound on the exact
    /// value, tangent at t = 0.
    pub linearized: f64,
}

pub fn rtt_growth(cfg: &SharingConfig, t: f64) -> Result<RttGrowth, ModelError> {
    if t < 0.0 || t.is_nan() {
        return Err(ModelError::OutOfRange("t", t));
    }
    let kappa = rtt_growth_coefficient(cfg);
    let r0 = cfg.rtt_base;
    Ok(RttGrowth {
        exact: (2.0 * kappa * t + r0 * r0).sqrt(),
        linearized: r0 + kappa / r0 * t,
    })
}

/// Exact RTT growth re-anchored at an arbitrary starting RTT, for comparing
/// simulated loss-free intervals that begin with a nonempty queue.
pub fn rtt_growth_from(cfg: &SharingConfig, rtt_start: f64, dt: f64) -> f64 {
    let kappa = rtt_growth_coefficient(cfg);
    (2.0 * kappa * dt + rtt_start * rtt_start).sqrt()
}

/// Queue occupancy `t` seconds into a loss-free period starting empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueGrowth {
    /// (RTT(t) - RTT0)·C with the exact RTT growth.
    pub exact: f64,
    /// Linear estimate (MSS·N/(a·RTT0))·t.
    pub linearized: f64,
}

pub fn queue_growth(cfg: &SharingConfig, t: f64) -> Result<QueueGrowth, ModelError> {
    let rtt = rtt_growth(cfg, t)?;
    Ok(QueueGrowth {
        exact: (rtt.exact - cfg.rtt_base) * cfg.capacity,
        linearized: cfg.mss * cfg.flow_count as f64 / (cfg.ack_ratio * cfg.rtt_base) * t,
    })
}

/// Mean time between packet losses, aggregate and per flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossInterval {
    /// Mean interval between losses on the whole link, in seconds.
    pub aggregate: f64,
    /// Mean interval between losses of one flow: N times the aggregate.
    pub per_flow: f64,
}

/// Loss intervals with the RTT taken at the base value.
pub fn loss_interval(cfg: &SharingConfig) -> LossInterval {
    loss_interval_at(cfg, cfg.rtt_base)
}

/// Loss intervals at an explicit round trip time: the aggregate interval is
/// the idealized queue drain divided by the queue growth rate,
/// T = (2a/3)·RTT²·C/(MSS·N²).
pub fn loss_interval_at(cfg: &SharingConfig, rtt: f64) -> LossInterval {
    let n = cfg.flow_count as f64;
    let aggregate = 2.0 * cfg.ack_ratio / 3.0 * rtt * rtt * cfg.capacity / (cfg.mss * n * n);
    LossInterval {
        aggregate,
        per_flow: n * aggregate,
    }
}

/// Packet loss probability sustaining the loss interval: one lost packet per
/// T·C/MSS delivered, which closes to (3/(2a))·(MSS·N/(RTT·C))².
pub fn loss_probability(cfg: &SharingConfig) -> f64 {
    loss_probability_at(cfg, cfg.rtt_base)
}

pub fn loss_probability_at(cfg: &SharingConfig, rtt: f64) -> f64 {
    let x = cfg.mss * cfg.flow_count as f64 / (rtt * cfg.capacity);
    3.0 / (2.0 * cfg.ack_ratio) * x * x
}

/// Long-run throughput sustained against a given loss probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroThroughput {
    /// Per-flow rate sqrt(3/(2a))·(MSS/RTT)/sqrt(p) in bit/s.
    pub per_flow: f64,
    /// N times the per-flow rate.
    pub aggregate: f64,
    /// Equilibrium congestion window sqrt(3/(2a))/sqrt(p) in segments.
    pub cwnd_eq: f64,
}

/// Inverts the loss probability back into rates; composing it with
/// [`loss_probability`] recovers the fair share exactly.
pub fn macroscopic_throughput(
    p_loss: f64,
    mss: f64,
    rtt: f64,
    ack_ratio: f64,
    flow_count: u32,
) -> Result<MacroThroughput, ModelError> {
    if !(p_loss > 0.0 && p_loss < 1.0) {
        return Err(ModelError::BadLossProbability(p_loss));
    }
    if rtt <= 0.0 || rtt.is_nan() {
        return Err(ModelError::BadRtt(rtt));
    }
    let cwnd_eq = (3.0 / (2.0 * ack_ratio)).sqrt() / p_loss.sqrt();
    let per_flow = cwnd_eq * mss / rtt;
    Ok(MacroThroughput {
        per_flow,
        aggregate: flow_count as f64 * per_flow,
        cwnd_eq,
    })
}

/// Rate of a flow `t` seconds after starting at `b0`, converging toward fair
/// share while the queue grows from empty:
/// b(t) = (b0 - bs)/sqrt(2·MSS·t/(a·bs·RTT0²) + 1) + bs.
pub fn convergence_trajectory(cfg: &SharingConfig, b0: f64, t: f64) -> Result<f64, ModelError> {
    if b0 < 0.0 || b0.is_nan() {
        return Err(ModelError::OutOfRange("b0", b0));
    }
    if t < 0.0 || t.is_nan() {
        return Err(ModelError::OutOfRange("t", t));
    }
    Ok(convergence_from(cfg, b0, cfg.rtt_base, t))
}

/// Convergence trajectory re-anchored at an arbitrary starting RTT: the
/// deviation from fair share shrinks with the growing RTT,
/// b(t) - bs = (b0 - bs)·rtt_start/RTT(t).
pub fn convergence_from(cfg: &SharingConfig, b0: f64, rtt_start: f64, dt: f64) -> f64 {
    let bs = fair_share(cfg);
    (b0 - bs) * rtt_start / rtt_growth_from(cfg, rtt_start, dt) + bs
}
