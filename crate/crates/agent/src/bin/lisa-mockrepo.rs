use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lisa_agent::mockrepo::{refresh_timestamps, MockRepo, MutationHook};

/// Serves a repository catalog file over HTTP. The file is re-read on every
/// request, so editing it simulates churn.
#[derive(Parser)]
#[command(name = "lisa-mockrepo", version)]
struct Cli {
    http_port: u16,
    catalog_file: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Stamp every entry with the current time so none goes stale.
    #[arg(long)]
    refresh_timestamps: bool,
    /// Answer every Nth request with 503.
    #[arg(long)]
    fail_every: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let refresh = cli.refresh_timestamps;
    let fail_every = cli.fail_every.filter(|&n| n > 0);
    let hook: Option<MutationHook> = (refresh || fail_every.is_some()).then(|| {
        Box::new(move |n: u64, text: String| {
            if fail_every.is_some_and(|k| n.is_multiple_of(k)) {
                return None;
            }
            Some(if refresh {
                refresh_timestamps(&text)
            } else {
                text
            })
        }) as MutationHook
    });
    let addr = format!("{}:{}", cli.bind, cli.http_port);
    match MockRepo::start(&addr, cli.catalog_file, hook) {
        Ok(r) => {
            eprintln!("lisa-mockrepo serving {}", r.url());
            r.wait();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lisa-mockrepo: cannot serve on port {}: {e}", cli.http_port);
            ExitCode::FAILURE
        }
    }
}
