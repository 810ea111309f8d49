use std::net::IpAddr;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lisa_core::netprobe::{estimate_bandwidth, measure_rtt, Direction, ProbeConfig, ProbePeer};

#[derive(Parser)]
#[command(name = "lisa-probe", version, about = "RTT and bandwidth probes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Connection-establishment RTT.
    Rtt {
        target: String,
        #[arg(long, default_value_t = 5)]
        attempts: u32,
        #[arg(long, default_value_t = 2000)]
        timeout_ms: u64,
    },
    /// Bulk-transfer throughput against a probe peer.
    Bw {
        target: String,
        direction: Direction,
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        #[arg(long, default_value_t = 65536)]
        block_bytes: usize,
        #[arg(long, default_value_t = 2000)]
        timeout_ms: u64,
    },
    /// Run a probe peer.
    Serve {
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        bind: IpAddr,
        #[arg(long, default_value_t = 65536)]
        block_bytes: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match cli.cmd {
        Cmd::Rtt {
            target,
            attempts,
            timeout_ms,
        } => {
            let cfg = match ProbeConfig::new(attempts, timeout_ms, 5.0, 65536) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("lisa-probe: {e}");
                    return ExitCode::from(2);
                }
            };
            match measure_rtt(&target, &cfg) {
                Ok(r) => {
                    println!(
                        "rtt {target} median_ms={:.3} min_ms={:.3} samples={} loss={}",
                        r.median_ms(),
                        r.min_ms(),
                        r.samples_ms.len(),
                        r.loss_count
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("lisa-probe: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Cmd::Bw {
            target,
            direction,
            duration,
            block_bytes,
            timeout_ms,
        } => {
            let cfg = match ProbeConfig::new(1, timeout_ms, duration, block_bytes) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("lisa-probe: {e}");
                    return ExitCode::from(2);
                }
            };
            match estimate_bandwidth(&target, direction, &cfg) {
                Ok(r) => {
                    println!(
                        "bw {target} {} mbits_per_s={:.3} bytes={} duration_s={:.3}{}",
                        direction.as_str(),
                        r.mbits_per_s,
                        r.bytes_moved,
                        r.duration_s,
                        if r.partial { " partial" } else { "" }
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("lisa-probe: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Cmd::Serve {
            port,
            bind,
            block_bytes,
        } => match ProbePeer::bind((bind, port), block_bytes) {
            Ok(p) => {
                eprintln!("lisa-probe peer on {}", p.local_addr());
                p.wait();
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("lisa-probe: cannot bind port {port}: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
