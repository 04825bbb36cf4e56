//! Shared scenario builders for the benchmarks.

use tcpshare::config::SharingConfig;
use tcpshare::resample::{PacketRecord, PacketTrace};
use tcpshare::sim::{LossMode, SimConfig};

/// Reference scenario trimmed to `duration` seconds.
pub fn sim_scenario(duration: f64) -> SimConfig {
    SimConfig {
        sharing: SharingConfig::reference(),
        duration,
        loss_mode: LossMode::Synchronized,
        seed: 7,
        ..SimConfig::reference()
    }
}

/// Constant-rate packet trace of `n` segments at 10 Mbit/s.
pub fn packet_trace(n: usize) -> PacketTrace {
    PacketTrace::new(
        (0..n)
            .map(|i| PacketRecord {
                arrival: (i as f64 + 0.5) * 0.0012,
                size: 12_000.0,
                flow: 0,
            })
            .collect(),
    )
    .expect("ordered arrivals")
}
