use lisa_core::netprobe::{
    estimate_bandwidth, measure_rtt, BandwidthResult, Direction, ProbeConfig, ProbePeer,
};

#[derive(Debug)]
pub struct ProbeReport {
    pub rtt_median_ms: f64,
    pub rtt_losses: u32,
    pub bandwidth: Vec<BandwidthResult>,
}

/// Exact check of the stored rate against bytes and duration.
pub fn identity_holds(r: &BandwidthResult) -> bool {
    r.mbits_per_s.to_bits() == (r.bytes_moved as f64 * 8.0 / r.duration_s / 1e6).to_bits()
}

pub fn run(bw_duration_s: f64) -> Result<ProbeReport, String> {
    let peer = ProbePeer::bind("127.0.0.1:0", 65536).map_err(|e| e.to_string())?;
    let target = peer.local_addr().to_string();
    let cfg = ProbeConfig::new(5, 2000, bw_duration_s, 65536).map_err(|e| e.to_string())?;
    let rtt = measure_rtt(&target, &cfg).map_err(|e| e.to_string())?;
    let mut bandwidth = Vec::new();
    for dir in [Direction::Up, Direction::Down] {
        bandwidth.push(estimate_bandwidth(&target, dir, &cfg).map_err(|e| e.to_string())?);
    }
    peer.shutdown();
    Ok(ProbeReport {
        rtt_median_ms: rtt.median_ms(),
        rtt_losses: rtt.loss_count,
        bandwidth,
    })
}

impl ProbeReport {
    pub fn check(&self) -> Result<(), String> {
        if self.rtt_median_ms.is_nan() || self.rtt_median_ms >= 50.0 || self.rtt_losses != 0 {
            return Err(format!(
                "rtt median {} ms with {} losses",
                self.rtt_median_ms, self.rtt_losses
            ));
        }
        for b in &self.bandwidth {
            if !identity_holds(b) {
                return Err(format!("{b:?} violates bytes/duration identity"));
            }
            if b.partial || b.mbits_per_s.is_nan() || b.mbits_per_s <= 1.0 {
                return Err(format!("{b:?} below 1 Mbit/s or partial"));
            }
        }
        Ok(())
    }
}
