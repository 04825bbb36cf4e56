//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tcpshare::analytic;
use tcpshare::config::SharingConfig;
use tcpshare::markov::{self, ChainParams};
use tcpshare::resample::{self, PacketTrace, RttSeries};
use tcpshare::sim::{self, RateTrace, SimConfig};
use tcpshare::verify as checks;

use crate::Format;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {} from {}", what, path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {} {}", what, path.display()))
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct VictimsPerEvent {
    mean: f64,
    min: usize,
    max: usize,
}

#[derive(Debug, Serialize)]
struct SimSummary {
    seed: u64,
    duration_s: f64,
    measured_from_s: f64,
    utilization: f64,
    mean_loss_interval_per_flow_s: Option<f64>,
    mean_halving_interval_per_flow_s: Option<f64>,
    loss_count: usize,
    congestion_events: usize,
    victims_per_event: VictimsPerEvent,
    delivered_bits: f64,
    dropped_bits: f64,
    offered_bits: f64,
}

fn summarize(cfg: &SimConfig, trace: &RateTrace) -> Result<SimSummary> {
    let events: Vec<_> = trace.measured_events().collect();
    let victims: Vec<usize> = events.iter().map(|e| e.flows_hit.len()).collect();
    Ok(SimSummary {
        seed: cfg.seed,
        duration_s: cfg.duration,
        measured_from_s: trace.measure_from,
        utilization: sim::measure_utilization(trace, trace.capacity)?,
        mean_loss_interval_per_flow_s: trace.mean_loss_interval_per_flow(),
        mean_halving_interval_per_flow_s: trace.mean_halving_interval_per_flow(),
        loss_count: trace.loss_events.len(),
        congestion_events: events.len(),
        victims_per_event: VictimsPerEvent {
            mean: victims.iter().sum::<usize>() as f64 / victims.len().max(1) as f64,
            min: victims.iter().copied().min().unwrap_or(0),
            max: victims.iter().copied().max().unwrap_or(0),
        },
        delivered_bits: trace.delivered_total,
        dropped_bits: trace.dropped_total,
        offered_bits: trace.offered_total,
    })
}

pub fn simulate(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<ExitCode> {
    let mut cfg: SimConfig = match &config {
        Some(path) => read_json(path, "simulation config")?,
        None => {
            println!("# no --config given: using the built-in reference scenario");
            SimConfig::reference()
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().context("invalid simulation config")?;
    let trace = sim::run(&cfg)?;
    write_out(&out, "trace.csv", &trace.trace_csv())?;
    write_out(&out, "queue.csv", &trace.queue_csv())?;
    write_out(&out, "losses.csv", &trace.losses_csv())?;
    let summary = summarize(&cfg, &trace)?;
    write_out(
        &out,
        "summary.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )?;
    println!(
        "simulated {}s: utilization {:.4}, {} losses, {} events, loss interval per flow {}",
        cfg.duration,
        summary.utilization,
        summary.loss_count,
        summary.congestion_events,
        summary
            .mean_loss_interval_per_flow_s
            .map_or("n/a".to_string(), |v| format!("{v:.2}s")),
    );
    Ok(ExitCode::SUCCESS)
}

/// Every closed-form quantity for one configuration, labeled with its unit.
fn analytic_rows(cfg: &SharingConfig) -> Vec<(&'static str, f64, &'static str)> {
    let ideal = analytic::step_down_ideal(cfg, cfg.rtt_base).expect("valid config");
    let li = analytic::loss_interval(cfg);
    let p = analytic::loss_probability(cfg);
    let m =
        analytic::macroscopic_throughput(p, cfg.mss, cfg.rtt_base, cfg.ack_ratio, cfg.flow_count)
            .expect("loss probability in range");
    vec![
        ("capacity", cfg.capacity, "bit/s"),
        ("flow_count", cfg.flow_count as f64, "flows"),
        ("rtt_base", cfg.rtt_base, "s"),
        ("mss", cfg.mss, "bit"),
        ("ack_ratio", cfg.ack_ratio, "segments/ack"),
        ("buffer", cfg.buffer, "bit"),
        ("fair_share", analytic::fair_share(cfg), "bit/s"),
        ("fair_cwnd", cfg.fair_cwnd(), "segments"),
        (
            "bandwidth_delay_product",
            cfg.bandwidth_delay_product(),
            "bit",
        ),
        ("buffer_bound_best", analytic::buffer_bound_best(cfg), "bit"),
        ("buffer_bound_sync", analytic::buffer_bound_sync(cfg), "bit"),
        ("step_down_rtt_ideal", ideal.delta_rtt, "s"),
        ("step_down_queue_ideal", ideal.delta_queue, "bit"),
        ("step_bitrate_hit_ideal", ideal.delta_bitrate_hit, "bit/s"),
        (
            "step_bitrate_other_ideal",
            ideal.delta_bitrate_other,
            "bit/s",
        ),
        (
            "rtt_growth_coefficient",
            analytic::rtt_growth_coefficient(cfg),
            "s^2/s",
        ),
        (
            "queue_growth_rate",
            cfg.mss * cfg.flow_count as f64 / (cfg.ack_ratio * cfg.rtt_base),
            "bit/s",
        ),
        ("loss_interval_aggregate", li.aggregate, "s"),
        ("loss_interval_per_flow", li.per_flow, "s"),
        ("loss_probability", p, "probability"),
        ("throughput_per_flow", m.per_flow, "bit/s"),
        ("throughput_aggregate", m.aggregate, "bit/s"),
        ("cwnd_equilibrium", m.cwnd_eq, "segments"),
        ("absorption_per_offered_bps", cfg.rtt_base, "bit per bit/s"),
    ]
}

pub fn analytic(config: Option<PathBuf>, out: Option<PathBuf>, format: Format) -> Result<ExitCode> {
    let cfg: SharingConfig = match &config {
        Some(path) => read_json(path, "sharing config")?,
        None => {
            println!("# no --config given: using the built-in reference scenario");
            SharingConfig::reference()
        }
    };
    cfg.validate().context("invalid sharing config")?;
    let rows = analytic_rows(&cfg);
    let csv = {
        let mut s = String::from("quantity,value,unit\n");
        for (name, value, unit) in &rows {
            s.push_str(&format!("{name},{value},{unit}\n"));
        }
        s
    };
    let json = {
        let map: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|(name, value, _)| (name.to_string(), serde_json::json!(value)))
            .collect();
        format!("{}\n", serde_json::to_string_pretty(&map)?)
    };
    match format {
        Format::Csv => print!("{csv}"),
        Format::Json => print!("{json}"),
    }
    if let Some(dir) = out {
        write_out(&dir, "report.csv", &csv)?;
        write_out(&dir, "report.json", &json)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkovFileConfig {
    p_loss: Option<f64>,
    ack_ratio: Option<f64>,
    cwnd_max: Option<usize>,
    /// Segment size for the bit-rate scaling; defaults to the reference MSS.
    mss: Option<f64>,
    /// Round trip time for the bit-rate scaling; defaults to the reference
    /// base RTT.
    rtt: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MarkovSummary {
    p_loss: f64,
    ack_ratio: f64,
    cwnd_max: usize,
    cwnd_equilibrium: f64,
    median_state: usize,
    mean_cwnd: f64,
    balance_residual: f64,
    lognormal_central_gap: f64,
    lognormal_full_gap: f64,
    mass_within_3x_of_fair: f64,
}

pub fn markov(config: Option<PathBuf>, out: PathBuf) -> Result<ExitCode> {
    let reference = SharingConfig::reference();
    let file: MarkovFileConfig = match &config {
        Some(path) => read_json(path, "chain config")?,
        None => {
            println!("# no --config given: using the reference scenario's loss probability");
            MarkovFileConfig {
                p_loss: None,
                ack_ratio: None,
                cwnd_max: None,
                mss: None,
                rtt: None,
            }
        }
    };
    let p_loss = file
        .p_loss
        .unwrap_or_else(|| analytic::loss_probability(&reference));
    let ack_ratio = file.ack_ratio.unwrap_or(reference.ack_ratio);
    let params = match file.cwnd_max {
        Some(cap) => ChainParams {
            p_loss,
            ack_ratio,
            cwnd_max: cap,
        },
        None => ChainParams::auto_cap(p_loss, ack_ratio)?,
    };
    params.validate()?;
    let mss = file.mss.unwrap_or(reference.mss);
    let rtt = file.rtt.unwrap_or(reference.rtt_base);

    let matrix = markov::build_chain(&params)?;
    let dist = markov::stationary(&matrix).context("solving the stationary distribution")?;
    let rates = markov::bitrate_distribution(&dist, mss, rtt);
    let fit = markov::LogNormalFit::for_params(&params);
    let cmp = markov::compare_to_lognormal(&dist, &fit);

    let mut stationary_csv = String::from("state,probability\n");
    for (i, p) in dist.probabilities.iter().enumerate() {
        stationary_csv.push_str(&format!("{},{}\n", i + 1, p));
    }
    write_out(&out, "stationary.csv", &stationary_csv)?;

    let mut rates_csv = String::from("bitrate_bps,probability\n");
    for (b, p) in &rates.points {
        rates_csv.push_str(&format!("{},{}\n", b, p));
    }
    write_out(&out, "bitrates.csv", &rates_csv)?;

    let mut ln_csv = String::from("cwnd,model_cdf,lognormal_cdf,abs_gap\n");
    let cdf = dist.cdf();
    for (i, c) in cdf.iter().enumerate() {
        let ln = markov::lognormal_cdf(&fit, (i + 1) as f64);
        ln_csv.push_str(&format!("{},{},{},{}\n", i + 1, c, ln, (c - ln).abs()));
    }
    write_out(&out, "lognormal.csv", &ln_csv)?;

    let fair_rate = params.cwnd_eq() * mss / rtt;
    let summary = MarkovSummary {
        p_loss,
        ack_ratio,
        cwnd_max: params.cwnd_max,
        cwnd_equilibrium: params.cwnd_eq(),
        median_state: dist.median_state(),
        mean_cwnd: dist.mean_cwnd(),
        balance_residual: markov::balance_residual(&dist, &params),
        lognormal_central_gap: cmp.central_gap,
        lognormal_full_gap: cmp.full_gap,
        mass_within_3x_of_fair: rates.mass_within(fair_rate / 3.0, 3.0 * fair_rate),
    };
    write_out(
        &out,
        "summary.json",
        &format!("{}\n", serde_json::to_string_pretty(&summary)?),
    )?;
    println!(
        "chain solved: {} states, median {}, central CDF gap {:.4}",
        params.cwnd_max, summary.median_state, summary.lognormal_central_gap
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
pub fn resample(
    packets: PathBuf,
    rtt: Option<PathBuf>,
    interval: Option<f64>,
    queue: Option<PathBuf>,
    capacity: Option<f64>,
    rtt_base: Option<f64>,
    t0: Option<f64>,
    out: PathBuf,
) -> Result<ExitCode> {
    let text = fs::read_to_string(&packets)
        .with_context(|| format!("reading packet trace {}", packets.display()))?;
    let trace = PacketTrace::from_csv(&text)?;
    let resampled = if let Some(interval) = interval {
        resample::fixed_sample(&trace, interval)?
    } else {
        let series = if let Some(path) = rtt {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading rtt series {}", path.display()))?;
            RttSeries::from_csv(&text)?
        } else if let Some(path) = queue {
            let (capacity, rtt_base) = match (capacity, rtt_base) {
                (Some(c), Some(r)) => (c, r),
                _ => bail!("--queue requires --capacity and --rtt-base"),
            };
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading queue trace {}", path.display()))?;
            let mut knots = Vec::new();
            for (ln, line) in text.lines().enumerate().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let mut parts = line.split(',');
                let t: f64 = parts
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .with_context(|| format!("line {}: bad time", ln + 1))?;
                let q: f64 = parts
                    .next()
                    .and_then(|s| s.trim().parse().ok())
                    .with_context(|| format!("line {}: bad queue", ln + 1))?;
                knots.push((t, q));
            }
            resample::rtt_from_queue_trace(&knots, capacity, rtt_base)?
        } else {
            bail!("one of --rtt, --interval or --queue is required");
        };
        let t0 = t0.unwrap_or_else(|| trace.records().first().map_or(0.0, |r| r.arrival));
        resample::resample(&trace, &series, t0)?
    };
    let path = write_out(&out, "resampled.csv", &resampled.to_csv())?;
    println!(
        "resampled {} packets into {} samples over {} intervals -> {}",
        trace.records().len(),
        resampled.samples.len(),
        resampled.boundaries.len().saturating_sub(1),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn verify(out: Option<PathBuf>) -> Result<ExitCode> {
    let results = checks::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!(
        "{} of {} checks passed{}",
        results.len() - failed,
        results.len(),
        if failed > 0 {
            format!(", {failed} FAILED")
        } else {
            String::new()
        }
    );
    if let Some(dir) = out {
        write_out(
            &dir,
            "verify.json",
            &format!("{}\n", serde_json::to_string_pretty(&results)?),
        )?;
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
