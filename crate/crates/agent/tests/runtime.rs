mod support;

use std::net::TcpListener;
use std::time::{Duration, Instant};

use lisa_agent::control::send_command;
use lisa_agent::{Agent, StartError};
use lisa_core::apmon::AggregatorReceiver;
use support::fixture_config;

fn ctl(agent: &Agent, cmd: &str) -> Vec<String> {
    send_command(
        &agent.control_addr().to_string(),
        cmd,
        Duration::from_secs(2),
    )
    .unwrap()
}

#[test]
fn control_commands() {
    let agent = Agent::start(&fixture_config(1000, None)).unwrap();
    let list = ctl(&agent, "LIST");
    assert!(list.contains(&"host Running 1000".to_owned()), "{list:?}");
    assert!(
        list.iter().any(|l| l.starts_with("netprobe Stopped")),
        "{list:?}"
    );
    assert_eq!(ctl(&agent, "STOP host"), ["OK"]);
    assert!(ctl(&agent, "LIST")
        .iter()
        .any(|l| l.starts_with("host Stopped")));
    assert_eq!(ctl(&agent, "START host"), ["OK"]);
    assert_eq!(ctl(&agent, "INTERVAL host 250"), ["OK"]);
    assert!(ctl(&agent, "LIST").contains(&"host Running 250".to_owned()));
    assert_eq!(ctl(&agent, "INTERVAL host 50"), ["ERR bad-command"]);
    assert_eq!(ctl(&agent, "START bogus"), ["ERR unknown-module bogus"]);
    assert_eq!(ctl(&agent, "DANCE"), ["ERR bad-command"]);
    let status = ctl(&agent, "STATUS");
    for key in [
        "uptime_ms",
        "modules_running",
        "batches",
        "bus_dropped",
        "subscribers",
    ] {
        assert!(
            status.iter().any(|l| l.starts_with(key)),
            "{key} missing: {status:?}"
        );
    }
    agent.shutdown();
}

#[test]
fn busy_port_is_named() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let mut cfg = fixture_config(1000, None);
    cfg.listener_port = port;
    let e = Agent::start(&cfg).err().expect("bind must fail");
    assert!(matches!(e, StartError::Bind { port: p, .. } if p == port));
    assert!(e.to_string().contains(&port.to_string()), "{e}");
}

#[test]
fn aggregator_receives_datagrams() {
    let rx = AggregatorReceiver::bind("127.0.0.1:0").unwrap();
    let agent = Agent::start(&fixture_config(200, Some(rx.local_addr()))).unwrap();
    let d = rx
        .recv(Duration::from_secs(3))
        .expect("a datagram")
        .unwrap();
    assert_eq!(d.header, "v:1p:");
    assert_eq!(d.node, "test-station");
    // the counter moves just after the send returns
    let t = Instant::now();
    while agent.apmon().unwrap().datagrams_sent() == 0 {
        assert!(t.elapsed() < Duration::from_secs(2), "datagram not counted");
        std::thread::sleep(Duration::from_millis(5));
    }
    agent.shutdown();
}

#[test]
fn shutdown_within_budget() {
    let agent = Agent::start(&fixture_config(100, None)).unwrap();
    let _sub =
        lisa_core::bus::ListenerClient::connect(agent.listener_addr(), &[], Duration::from_secs(2))
            .unwrap();
    std::thread::sleep(Duration::from_millis(300));
    let t = Instant::now();
    agent.shutdown();
    assert!(t.elapsed() < Duration::from_secs(2), "{:?}", t.elapsed());
}

#[test]
fn loopback_watch_matches_aggregator() {
    let r = support::loopback(300).unwrap();
    r.check().unwrap();
}

#[test]
fn stopped_span_is_silent() {
    let r = support::control_gap(100, Duration::from_millis(600)).unwrap();
    r.check().unwrap();
}
