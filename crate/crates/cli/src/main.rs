//! `tcpshare`: simulate TCP bandwidth sharing, evaluate the closed-form
//! model, solve the window distribution chain, resample packet traces, and
//! cross-validate everything.
//!
//! Exit codes: 0 success, 1 check failure (`verify`), 2 usage or
//! configuration error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tcpshare", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the fluid simulation and write trace CSVs plus a summary.
    Simulate {
        /// Simulation config JSON; defaults to the reference scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for trace.csv, queue.csv, losses.csv,
        /// summary.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate every closed-form quantity for a sharing configuration.
    Analytic {
        /// Sharing config JSON; defaults to the reference scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write report.{csv,json} here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Solve the congestion-window chain and write distribution tables.
    Markov {
        /// Chain config JSON (p_loss, ack_ratio, optional cwnd_max, mss,
        /// rtt); defaults to the reference scenario's loss probability.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Resample a packet trace over effective-RTT or fixed intervals.
    Resample {
        /// Packet trace CSV: arrival_s,size_bits,flow_id.
        #[arg(long)]
        packets: PathBuf,
        /// RTT series CSV: time_s,rtt_s.
        #[arg(long, conflicts_with_all = ["interval", "queue"])]
        rtt: Option<PathBuf>,
        /// Fixed sampling interval in seconds.
        #[arg(long, conflicts_with_all = ["rtt", "queue"])]
        interval: Option<f64>,
        /// Queue trace CSV (time_s,queue_bits[,...]) to derive the RTT from;
        /// requires --capacity and --rtt-base.
        #[arg(long, conflicts_with_all = ["rtt", "interval"])]
        queue: Option<PathBuf>,
        /// Link capacity in bit/s, used with --queue.
        #[arg(long)]
        capacity: Option<f64>,
        /// Base round trip time in seconds, used with --queue.
        #[arg(long)]
        rtt_base: Option<f64>,
        /// First interval boundary; defaults to the first packet arrival.
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the full cross-validation suite and print the pass/fail matrix.
    Verify {
        /// Also write verify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(config, out, seed),
        Command::Analytic {
            config,
            out,
            format,
        } => commands::analytic(config, out, format),
        Command::Markov { config, out } => commands::markov(config, out),
        Command::Resample {
            packets,
            rtt,
            interval,
            queue,
            capacity,
            rtt_base,
            t0,
            out,
        } => commands::resample(packets, rtt, interval, queue, capacity, rtt_base, t0, out),
        Command::Verify { out } => commands::verify(out),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
