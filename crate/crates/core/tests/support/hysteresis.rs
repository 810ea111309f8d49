//! Selector loop driven by a scripted RTT table, one evaluation per round.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use lisa_core::metrics::ManualClock;
use lisa_core::netprobe::{ProbeError, RttProber, RttResult};
use lisa_core::selector::{
    CatalogSource, LocalityProfile, Repository, SelectionHistory, SelectionPolicy, SelectorLoop,
    ServiceDescriptor,
};

struct StaticCatalog(String);

impl CatalogSource for StaticCatalog {
    fn describe(&self) -> String {
        "static".into()
    }

    fn fetch_text(&mut self) -> Result<String, String> {
        Ok(self.0.clone())
    }
}

/// RTTs keyed by address, changed between rounds by the test.
#[derive(Clone, Default)]
pub struct ScriptedRtt(Arc<Mutex<HashMap<String, f64>>>);

impl ScriptedRtt {
    pub fn set(&self, addr: &str, ms: f64) {
        self.0.lock().unwrap().insert(addr.to_owned(), ms);
    }
}

impl RttProber for ScriptedRtt {
    fn probe(&self, target: &str) -> Result<RttResult, ProbeError> {
        let ms = self.0.lock().unwrap()[target];
        Ok(RttResult {
            target: target.to_owned(),
            samples_ms: vec![ms],
            loss_count: 0,
        })
    }
}

pub const A: &str = "127.0.0.1:47001";
pub const B: &str = "127.0.0.1:47002";

fn descriptor(id: &str, addr: &str) -> ServiceDescriptor {
    ServiceDescriptor {
        service_id: id.into(),
        address: addr.into(),
        network_domain: Some("example.org".into()),
        as_number: None,
        country: None,
        continent: None,
        load1: 0.5,
        connected_clients: 10,
        traffic_mbps: 1.0,
        last_update_ms: 1_000_000,
    }
}

pub fn selector_loop(n: u32, current: Option<&str>) -> (SelectorLoop, ScriptedRtt) {
    let text = [descriptor("A", A), descriptor("B", B)]
        .iter()
        .map(ServiceDescriptor::to_line)
        .collect::<Vec<_>>()
        .join("\n");
    let rtt = ScriptedRtt::default();
    let state = SelectorLoop {
        repository: Repository::new(Box::new(StaticCatalog(text))),
        locality: LocalityProfile {
            network_domain: Some("example.org".into()),
            ..LocalityProfile::default()
        },
        policy: SelectionPolicy::new((1.0, 0.01, 0.001), 3, 120_000, 0.8, n).unwrap(),
        current: current.map(str::to_owned),
        history: SelectionHistory::default(),
        prober: Arc::new(rtt.clone()),
        clock: Arc::new(ManualClock::new(1_000_000)),
    };
    (state, rtt)
}

/// A oscillates 18/22 ms, B stays at 20 ms. Returns the advisories issued.
pub fn oscillation(rounds: usize, current: Option<&str>) -> Vec<(usize, String, String)> {
    let (mut s, rtt) = selector_loop(3, current);
    let mut out = Vec::new();
    for round in 0..rounds {
        rtt.set(A, if round % 2 == 0 { 18.0 } else { 22.0 });
        rtt.set(B, 20.0);
        let a = s.step().advice.expect("reachable");
        if a.advise_reconnect {
            out.push((round, a.chosen, a.reason));
        }
    }
    out
}

/// Current B steps from 20 ms to 100 ms after a quiet warm-up. Returns the
/// 1-based evaluation after the step at which advice appeared.
pub fn step_change(n: u32) -> Result<u32, String> {
    let (mut s, rtt) = selector_loop(n, Some("B"));
    rtt.set(B, 20.0);
    for round in 0..10 {
        rtt.set(A, if round % 2 == 0 { 18.0 } else { 22.0 });
        let a = s.step().advice.map_err(|e| e.to_string())?;
        if a.advise_reconnect {
            return Err(format!("advice during warm-up round {round}: {}", a.reason));
        }
    }
    rtt.set(B, 100.0);
    for eval in 1..=(n + 5) {
        rtt.set(A, if eval % 2 == 0 { 18.0 } else { 22.0 });
        let a = s.step().advice.map_err(|e| e.to_string())?;
        if a.advise_reconnect {
            if a.chosen != "A" {
                return Err(format!("advised {}", a.chosen));
            }
            return Ok(eval);
        }
    }
    Err("no advice after the step".into())
}
