//! Property tests over the model's structural invariants.

use proptest::prelude::*;

use tcpshare::analytic;
use tcpshare::config::SharingConfig;
use tcpshare::markov::{build_chain, stationary_linear, ChainParams};
use tcpshare::resample::{fixed_sample, resample, PacketRecord, PacketTrace, RttSeries};

fn sharing(capacity: f64, flow_count: u32, ack_ratio: f64) -> SharingConfig {
    SharingConfig {
        capacity,
        flow_count,
        ack_ratio,
        ..SharingConfig::reference()
    }
}

proptest! {
    /// Any pre-step allocation summing to capacity still sums to capacity
    /// after one flow is hit and every flow applies its step rule.
    #[test]
    fn rate_steps_conserve_capacity(
        weights in prop::collection::vec(0.05f64..1.0, 2..24),
        victim_seed in any::<prop::sample::Index>(),
    ) {
        let cfg = sharing(1e8, weights.len() as u32, 2.0);
        let total: f64 = weights.iter().sum();
        let rates: Vec<f64> = weights.iter().map(|w| w / total * cfg.capacity).collect();
        let victim = victim_seed.index(rates.len());
        let hit = rates[victim];
        let after: f64 = rates
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                if i == victim {
                    b + analytic::step_down_net(&cfg, hit).unwrap()
                } else {
                    b + analytic::step_up(&cfg, b, hit).unwrap()
                }
            })
            .sum();
        prop_assert!((after - cfg.capacity).abs() / cfg.capacity < 1e-9);
    }

    /// Scaling capacity and all rates by the same factor leaves the RTT
    /// reduction unchanged and scales the queue drain linearly.
    #[test]
    fn step_down_is_dimensionally_consistent(
        k in prop::sample::select(vec![0.5f64, 2.0, 10.0]),
        hit_frac in 0.05f64..0.99,
        rtt in 0.01f64..0.5,
    ) {
        let base = sharing(1e8, 10, 2.0);
        let scaled = sharing(k * 1e8, 10, 2.0);
        let hit = analytic::FlowState::from_bitrate(hit_frac * base.capacity, base.mss, rtt).unwrap();
        let hit_scaled =
            analytic::FlowState::from_bitrate(k * hit.bitrate, scaled.mss, rtt).unwrap();
        let a = analytic::step_down(&base, &hit, rtt).unwrap();
        let b = analytic::step_down(&scaled, &hit_scaled, rtt).unwrap();
        prop_assert!((a.delta_rtt - b.delta_rtt).abs() < 1e-12 * rtt);
        prop_assert!((k * a.delta_queue - b.delta_queue).abs() < 1e-6 * b.delta_queue.abs().max(1.0));
    }

    /// The loss-probability/throughput pair inverts to fair share for any
    /// valid configuration.
    #[test]
    fn inversion_recovers_fair_share(
        capacity in 1e6f64..1e10,
        flows in 1u32..200,
        ack in 1.0f64..4.0,
        rtt in 0.005f64..1.0,
    ) {
        let cfg = SharingConfig {
            capacity,
            flow_count: flows,
            ack_ratio: ack,
            rtt_base: rtt,
            ..SharingConfig::reference()
        };
        let p = analytic::loss_probability(&cfg);
        prop_assume!(p > 0.0 && p < 1.0);
        let m = analytic::macroscopic_throughput(p, cfg.mss, rtt, ack, flows).unwrap();
        let bs = analytic::fair_share(&cfg);
        prop_assert!((m.per_flow - bs).abs() / bs < 1e-9);
    }

    /// The deviation from fair share shrinks monotonically along the
    /// convergence trajectory, from above and from below.
    #[test]
    fn convergence_contracts(b0 in 1e5f64..3e7, steps in 2usize..50) {
        let cfg = SharingConfig::reference();
        let bs = analytic::fair_share(&cfg);
        let mut prev = (b0 - bs).abs();
        for i in 1..=steps {
            let b = analytic::convergence_trajectory(&cfg, b0, i as f64 * 0.25).unwrap();
            let dev = (b - bs).abs();
            prop_assert!(dev <= prev + 1e-9);
            prev = dev;
        }
    }

    /// Chain columns stay stochastic and the stationary vector stays a
    /// probability vector across the parameter space.
    #[test]
    fn chain_is_stochastic(p_loss in 1e-4f64..0.2, ack in 1.0f64..3.0) {
        let params = ChainParams::auto_cap(p_loss, ack).unwrap();
        let m = build_chain(&params).unwrap();
        for s in m.column_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        let p = stationary_linear(&m);
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| x > -1e-12));
    }

    /// Resampling conserves volume exactly over the covered span and its
    /// boundaries obey the recurrence, for arbitrary packet traces and rtt
    /// series.
    #[test]
    fn resampling_conserves_volume(
        gaps in prop::collection::vec(1e-4f64..0.05, 10..300),
        sizes in prop::collection::vec(100.0f64..20_000.0, 10..300),
        rtts in prop::collection::vec(0.02f64..0.3, 1..6),
    ) {
        let n = gaps.len().min(sizes.len());
        let mut t = 0.0;
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            t += gaps[i];
            records.push(PacketRecord { arrival: t, size: sizes[i], flow: (i % 3) as u32 });
        }
        let trace = PacketTrace::new(records.clone()).unwrap();
        let span = t;
        let knots: Vec<(f64, f64)> = rtts
            .iter()
            .enumerate()
            .map(|(i, r)| (i as f64 * span / rtts.len() as f64, *r))
            .collect();
        let series = RttSeries::new(knots).unwrap();
        let t0 = records[0].arrival;
        let out = resample(&trace, &series, t0).unwrap();

        for w in out.boundaries.windows(2) {
            prop_assert!((w[1] - (w[0] + series.at(w[0]))).abs() < 1e-12);
        }
        let last = *out.boundaries.last().unwrap();
        let binned: f64 = out
            .samples
            .iter()
            .enumerate()
            .map(|(i, (_, _, b))| {
                let k = i / 3; // three flows share each interval
                b * (out.boundaries[k + 1] - out.boundaries[k])
            })
            .sum();
        let covered: f64 = records
            .iter()
            .filter(|r| r.arrival > t0 && r.arrival <= last)
            .map(|r| r.size)
            .sum();
        prop_assert!((binned - covered).abs() <= 1e-9 * covered.max(1.0));
    }

    /// Fixed-interval sampling also conserves volume over complete bins.
    #[test]
    fn fixed_sampling_conserves_volume(
        gaps in prop::collection::vec(1e-4f64..0.05, 10..200),
        interval in 0.05f64..0.5,
    ) {
        let mut t = 0.1;
        let mut records = Vec::with_capacity(gaps.len());
        for g in &gaps {
            t += g;
            records.push(PacketRecord { arrival: t, size: 1000.0, flow: 0 });
        }
        let trace = PacketTrace::new(records.clone()).unwrap();
        let out = fixed_sample(&trace, interval).unwrap();
        if out.boundaries.len() < 2 {
            return Ok(());
        }
        let first = out.boundaries[0];
        let last = *out.boundaries.last().unwrap();
        let binned: f64 = out
            .samples
            .iter()
            .enumerate()
            .map(|(i, (_, _, b))| b * (out.boundaries[i + 1] - out.boundaries[i]))
            .sum();
        let covered: f64 = records
            .iter()
            .filter(|r| r.arrival > first && r.arrival <= last)
            .map(|r| r.size)
            .sum();
        prop_assert!((binned - covered).abs() <= 1e-9 * covered.max(1.0));
    }
}
