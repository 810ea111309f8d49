use std::net::IpAddr;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::Parser;
use lisa_core::apmon::AggregatorReceiver;

/// Mock aggregator: prints each received parameter as
/// `<cluster> <node> <name> <TYPE> <value>`.
#[derive(Parser)]
#[command(name = "lisa-mockml", version)]
struct Cli {
    udp_port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let rx = match AggregatorReceiver::bind((cli.bind, cli.udp_port)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("lisa-mockml: cannot bind udp port {}: {e}", cli.udp_port);
            return ExitCode::FAILURE;
        }
    };
    eprintln!("lisa-mockml listening on {}", rx.local_addr());
    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        let _ = signal_hook::flag::register(sig, Arc::clone(&stop));
    }
    let out = &mut std::io::stdout().lock();
    match lisa_agent::mockml::run(&rx, out, &mut std::io::stderr(), &stop) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lisa-mockml: {e}");
            ExitCode::FAILURE
        }
    }
}
