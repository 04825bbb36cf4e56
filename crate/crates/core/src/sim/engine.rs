//! The integration loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{CongestionEvent, LossEvent, RateTrace, Sample, VictimHit};
use super::{LossMode, SimConfig, SimError};

/// Draws a flow index with probability proportional to its rate. All segments
/// are the same size, so packet rate and bit rate weight flows identically.
pub fn pick_victim<R: Rng>(rates: &[f64], rng: &mut R) -> usize {
    let total: f64 = rates.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, r) in rates.iter().enumerate() {
        x -= r;
        if x <= 0.0 {
            return i;
        }
    }
    rates.len() - 1
}

struct PendingHalving {
    due: f64,
    event_id: Option<usize>,
}

struct OpenEvent {
    id: usize,
    record: CongestionEvent,
    deadline: f64,
    /// Window-increment segments accumulated during the reaction lag; each
    /// whole segment overflows and hits one flow. Starts at -1 because the
    /// drop that opened the event is the first of them.
    increment_flux: f64,
}

/// Runs the scenario and returns the full trace. Identical configurations
/// (including the seed) produce identical traces.
pub fn run(config: &SimConfig) -> Result<RateTrace, SimError> {
    config.validate()?;
    Engine::new(config).run()
}

/// Outcome of an offered-load step experiment, see [`step_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponse {
    /// Bits dropped from the step instant to the end of the run.
    pub lost_bits: f64,
    /// Seconds until the arrival excess over capacity returned to within
    /// 20% of the step size of its pre-step value; `None` if it never did.
    pub settle_time: Option<f64>,
    /// Queue occupancy just before the step.
    pub queue_at_step: f64,
    /// Round trip time just before the step.
    pub rtt_at_step: f64,
}

/// Injects a constant-rate offered-load change of `delta_offered` at time
/// `at` and reports the dropped volume and the re-equilibrium time.
///
/// The run records samples at every integration step so the step instant is
/// resolved exactly.
pub fn step_response(
    config: &SimConfig,
    delta_offered: f64,
    at: f64,
) -> Result<(StepResponse, RateTrace), SimError> {
    let mut cfg = config.clone();
    cfg.trace_stride = 1;
    cfg.offered_steps.push(super::OfferedStep {
        at,
        delta: delta_offered,
    });
    let trace = run(&cfg)?;
    let i_at = trace.sample_index_at(at).ok_or(SimError::EmptyTrace)?;
    let pre = &trace.samples[i_at.saturating_sub(1)];
    let pre_excess = pre.aggregate - trace.capacity;
    let lost_bits = trace.dropped_total - trace.samples[i_at].dropped_cum;
    let mut settle_time = None;
    if delta_offered != 0.0 {
        for s in &trace.samples[i_at + 1..] {
            let excess = s.aggregate - trace.capacity;
            if (excess - pre_excess).abs() <= 0.2 * delta_offered.abs() {
                settle_time = Some(s.time - at);
                break;
            }
        }
    } else {
        settle_time = Some(0.0);
    }
    Ok((
        StepResponse {
            lost_bits,
            settle_time,
            queue_at_step: pre.queue,
            rtt_at_step: pre.rtt,
        },
        trace,
    ))
}

struct Engine<'c> {
    cfg: &'c SimConfig,
    dt: f64,
    rng: ChaCha8Rng,
    cwnd: Vec<f64>,
    pending: Vec<Option<PendingHalving>>,
    queue: f64,
    /// A new event may only open after the queue has left the limit since the
    /// previous one.
    armed: bool,
    open_event: Option<OpenEvent>,
    next_event_id: usize,
    delivered_cum: f64,
    dropped_cum: f64,
    offered_cum: f64,
    trace: RateTrace,
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c SimConfig) -> Self {
        let sharing = &cfg.sharing;
        let n = sharing.flow_count as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let cwnd = match &cfg.initial_cwnds {
            Some(ws) => ws.clone(),
            None => {
                let fair = sharing.fair_cwnd();
                (0..n).map(|_| fair * rng.random_range(0.5..1.5)).collect()
            }
        };
        let trace = RateTrace {
            samples: Vec::new(),
            loss_events: Vec::new(),
            events: Vec::new(),
            halvings: Vec::new(),
            capacity: sharing.capacity,
            buffer: sharing.buffer,
            rtt_base: sharing.rtt_base,
            flow_count: sharing.flow_count,
            duration: cfg.duration,
            measure_from: cfg.measure_from(),
            delivered_total: 0.0,
            dropped_total: 0.0,
            offered_total: 0.0,
        };
        Engine {
            cfg,
            dt: cfg.step(),
            rng,
            cwnd,
            pending: (0..n).map(|_| None).collect(),
            queue: 0.0,
            armed: true,
            open_event: None,
            next_event_id: 0,
            delivered_cum: 0.0,
            dropped_cum: 0.0,
            offered_cum: 0.0,
            trace,
        }
    }

    fn run(mut self) -> Result<RateTrace, SimError> {
        let sharing = &self.cfg.sharing;
        let capacity = sharing.capacity;
        let mss = sharing.mss;
        let n_steps = (self.cfg.duration / self.dt).round() as u64;
        let mut rates = vec![0.0f64; self.cwnd.len()];

        for k in 0..n_steps {
            let t = k as f64 * self.dt;
            let rtt = sharing.rtt_base + self.queue / capacity;

            self.execute_due_halvings(t);

            for (r, w) in rates.iter_mut().zip(&self.cwnd) {
                *r = w * mss / rtt;
            }
            let offered_extra: f64 = self
                .cfg
                .offered_steps
                .iter()
                .filter(|s| t >= s.at)
                .map(|s| s.delta)
                .sum();
            let arrival = (rates.iter().sum::<f64>() + offered_extra).max(0.0);

            // every sampled value describes the state entering this step
            if k % self.cfg.trace_stride as u64 == 0 {
                self.trace.samples.push(Sample {
                    time: t,
                    rates: rates.clone(),
                    aggregate: arrival,
                    queue: self.queue,
                    rtt,
                    delivered_cum: self.delivered_cum,
                    dropped_cum: self.dropped_cum,
                });
            }

            // tail-drop queue accounting for this step
            let inflow = arrival * self.dt;
            let available = self.queue + inflow;
            let delivered = available.min(capacity * self.dt);
            let mut queue_after = available - delivered;
            let dropped = (queue_after - sharing.buffer).max(0.0);
            queue_after = queue_after.min(sharing.buffer);
            self.offered_cum += inflow;
            self.delivered_cum += delivered;
            self.dropped_cum += dropped;

            match self.cfg.loss_mode {
                LossMode::Isolated | LossMode::Synchronized => {
                    self.tail_drop_events(t, rtt, dropped, arrival, &rates)
                }
                LossMode::Iid(p) => self.iid_losses(t, rtt, p, &rates),
            }

            self.queue = queue_after;
            // additive increase: 1/a segments per round trip, for every flow
            let growth = self.dt / (sharing.ack_ratio * rtt);
            for w in &mut self.cwnd {
                *w += growth;
            }
        }

        if let Some(ev) = self.open_event.take() {
            self.trace.events.push(ev.record);
        }
        self.trace.delivered_total = self.delivered_cum;
        self.trace.dropped_total = self.dropped_cum;
        self.trace.offered_total = self.offered_cum;
        Ok(self.trace)
    }

    fn execute_due_halvings(&mut self, t: f64) {
        for flow in 0..self.cwnd.len() {
            let due = matches!(&self.pending[flow], Some(p) if p.due <= t);
            if !due {
                continue;
            }
            let p = self.pending[flow].take().unwrap();
            self.cwnd[flow] = (self.cwnd[flow] / 2.0).max(1.0);
            self.trace.halvings.push((t, flow as u32));
            if let Some(event_id) = p.event_id {
                self.set_halve_time(event_id, flow as u32, t);
            }
        }
    }

    fn set_halve_time(&mut self, event_id: usize, flow: u32, t: f64) {
        let victims = match &mut self.open_event {
            Some(ev) if ev.id == event_id => &mut ev.record.victims,
            _ => match self.trace.events.get_mut(event_id) {
                Some(rec) => &mut rec.victims,
                None => return,
            },
        };
        if let Some(v) = victims
            .iter_mut()
            .find(|v| v.flow == flow && v.halve_time.is_none())
        {
            v.halve_time = Some(t);
        }
    }

    /// Records a dropped segment attributed to a flow and schedules its
    /// window halving unless one is already on the way (fast recovery
    /// answers any number of losses within a round trip with one reduction).
    fn record_hit(&mut self, flow: usize, t: f64, rtt: f64, rate: f64) {
        self.trace.loss_events.push(LossEvent {
            time: t,
            flow: flow as u32,
        });
        if let Some(ev) = &mut self.open_event {
            ev.record.losses += 1;
        }
        if self.pending[flow].is_none() {
            let event_id = self.open_event.as_ref().map(|e| e.id);
            self.pending[flow] = Some(PendingHalving {
                due: t + rtt,
                event_id,
            });
            if let Some(ev) = &mut self.open_event {
                ev.record.flows_hit.insert(flow as u32);
                ev.record.victims.push(VictimHit {
                    flow: flow as u32,
                    hit_time: t,
                    bitrate_at_hit: rate,
                    halve_time: None,
                });
            }
        }
    }

    fn tail_drop_events(&mut self, t: f64, rtt: f64, dropped: f64, arrival: f64, rates: &[f64]) {
        let sharing = &self.cfg.sharing;
        if dropped > 0.0 && self.open_event.is_none() && self.armed {
            let id = self.next_event_id;
            self.next_event_id += 1;
            self.open_event = Some(OpenEvent {
                id,
                record: CongestionEvent {
                    start: t,
                    end: t,
                    ..Default::default()
                },
                deadline: t + rtt,
                increment_flux: -1.0,
            });
            self.armed = false;
            let victim = pick_victim(rates, &mut self.rng);
            self.record_hit(victim, t, rtt, rates[victim]);
        }
        if let Some(ev) = &mut self.open_event {
            if t >= ev.deadline || arrival <= sharing.capacity {
                let mut ev = self.open_event.take().unwrap();
                ev.record.end = t;
                self.trace.events.push(ev.record);
            } else if self.cfg.loss_mode == LossMode::Synchronized {
                // all windows keep growing through the reaction lag; their
                // combined increments (N/a segments per round trip) overflow
                // the saturated queue and each hits one flow
                ev.increment_flux += sharing.flow_count as f64 / sharing.ack_ratio / rtt * self.dt;
                while self
                    .open_event
                    .as_ref()
                    .is_some_and(|e| e.increment_flux >= 1.0)
                {
                    self.open_event.as_mut().unwrap().increment_flux -= 1.0;
                    let victim = pick_victim(rates, &mut self.rng);
                    self.record_hit(victim, t, rtt, rates[victim]);
                }
            }
        }
        if !self.armed && dropped == 0.0 && self.queue < sharing.buffer && self.open_event.is_none()
        {
            self.armed = true;
        }
    }

    fn iid_losses(&mut self, t: f64, rtt: f64, p: f64, rates: &[f64]) {
        for (flow, &rate) in rates.iter().enumerate() {
            let segments = rate * self.dt / self.cfg.sharing.mss;
            let p_hit = 1.0 - (1.0 - p).powf(segments);
            if self.rng.random::<f64>() < p_hit {
                self.record_hit(flow, t, rtt, rate);
            }
        }
    }
}
