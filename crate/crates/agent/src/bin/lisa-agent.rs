use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use lisa_agent::control::send_command;
use lisa_agent::watch::{watch, WatchOptions};
use lisa_agent::{Agent, AgentConfig};

#[derive(Parser)]
#[command(name = "lisa-agent", version, about = "Localhost monitoring agent")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the agent until SIGINT or SIGTERM.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Send one control command, e.g. `ctl 127.0.0.1:8885 STOP host`.
    Ctl {
        addr: String,
        #[arg(required = true, num_args = 1..)]
        command: Vec<String>,
        #[arg(long, default_value_t = 5000)]
        timeout_ms: u64,
    },
    /// Live view of an agent's records.
    Watch {
        addr: String,
        /// Comma-separated module filter.
        #[arg(long, value_delimiter = ',')]
        modules: Vec<String>,
        /// Print raw REC lines instead of the table.
        #[arg(long)]
        follow: bool,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Connection attempts before giving up.
        #[arg(long, default_value_t = 5)]
        attempts: u32,
        #[arg(long, default_value_t = 1000)]
        refresh_ms: u64,
    },
}

fn run(config: PathBuf, print_config: bool) -> ExitCode {
    let cfg = match AgentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("lisa-agent: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if print_config {
        print!("{}", cfg.serialize());
        return ExitCode::SUCCESS;
    }
    let term = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        if let Err(e) = signal_hook::flag::register(sig, Arc::clone(&term)) {
            eprintln!("lisa-agent: cannot install signal handler: {e}");
            return ExitCode::FAILURE;
        }
    }
    let agent = match Agent::start(&cfg) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("lisa-agent: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!(
        "lisa-agent {} listener={} control={}",
        cfg.agent_id,
        agent.listener_addr(),
        agent.control_addr()
    );
    while !term.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(50));
    }
    agent.shutdown();
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.cmd {
        Cmd::Run { .. } => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .init();
    match cli.cmd {
        Cmd::Run {
            config,
            print_config,
        } => run(config, print_config),
        Cmd::Ctl {
            addr,
            command,
            timeout_ms,
        } => match send_command(&addr, &command.join(" "), Duration::from_millis(timeout_ms)) {
            Ok(lines) => {
                for l in &lines {
                    println!("{l}");
                }
                if lines.first().is_some_and(|l| l.starts_with("ERR")) {
                    ExitCode::FAILURE
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => {
                eprintln!("lisa-agent ctl: {addr}: {e}");
                ExitCode::FAILURE
            }
        },
        Cmd::Watch {
            addr,
            modules,
            follow,
            duration,
            attempts,
            refresh_ms,
        } => {
            let mut o = WatchOptions::new(addr);
            o.modules = modules;
            o.follow = follow;
            o.duration = duration.map(Duration::from_secs_f64);
            o.attempts = attempts.max(1);
            o.refresh = Duration::from_millis(refresh_ms);
            o.clear = !follow && std::io::stdout().is_terminal();
            match watch(&o, &mut std::io::stdout().lock()) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("lisa-agent watch: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
