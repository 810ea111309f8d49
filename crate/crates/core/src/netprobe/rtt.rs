use std::net::TcpStream;
use std::time::{Duration, Instant};

use super::{resolve, ProbeConfig, ProbeError};

#[derive(Debug, Clone, PartialEq)]
pub struct RttResult {
    pub target: String,
    pub samples_ms: Vec<f64>,
    pub loss_count: u32,
}

impl RttResult {
    pub fn attempts(&self) -> u32 {
        self.samples_ms.len() as u32 + self.loss_count
    }

    pub fn median_ms(&self) -> f64 {
        median(&self.samples_ms).unwrap_or(f64::NAN)
    }

    pub fn min_ms(&self) -> f64 {
        self.samples_ms
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Median of `xs`; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Sequential connection-establishment probes.
pub fn measure_rtt(target: &str, cfg: &ProbeConfig) -> Result<RttResult, ProbeError> {
    let addr = resolve(target)?;
    let timeout = Duration::from_millis(cfg.rtt_timeout_ms());
    let mut samples = Vec::with_capacity(cfg.rtt_attempts() as usize);
    let mut losses = 0;
    for _ in 0..cfg.rtt_attempts() {
        let start = Instant::now();
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => {
                let ms = start.elapsed().as_secs_f64() * 1e3;
                drop(s);
                // clock granularity must not produce a zero sample
                samples.push(ms.max(1e-6));
            }
            Err(e) => {
                log::debug!("rtt {target}: {e}");
                losses += 1;
            }
        }
    }
    if samples.is_empty() {
        return Err(ProbeError::AllProbesFailed {
            target: target.to_owned(),
            attempts: cfg.rtt_attempts(),
            loss_count: losses,
        });
    }
    Ok(RttResult {
        target: target.to_owned(),
        samples_ms: samples,
        loss_count: losses,
    })
}

/// RTT measurement strategy, replaceable in tests.
pub trait RttProber: Send + Sync {
    fn probe(&self, target: &str) -> Result<RttResult, ProbeError>;
}

pub struct TcpConnectProber {
    pub config: ProbeConfig,
}

impl RttProber for TcpConnectProber {
    fn probe(&self, target: &str) -> Result<RttResult, ProbeError> {
        measure_rtt(target, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::net::TcpListener;

    #[test]
    fn median_examples() {
        let r = RttResult {
            target: "x:1".into(),
            samples_ms: vec![10.0, 30.0, 20.0],
            loss_count: 2,
        };
        assert_eq!(r.median_ms(), 20.0);
        assert_eq!(r.min_ms(), 10.0);
        assert_eq!(r.attempts(), 5);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn loopback_probe() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let target = l.local_addr().unwrap().to_string();
        let r = measure_rtt(&target, &ProbeConfig::default()).unwrap();
        assert_eq!(r.samples_ms.len(), 5);
        assert_eq!(r.loss_count, 0);
        assert!(r.samples_ms.iter().all(|&s| s > 0.0));
        assert!(r.median_ms() < 50.0);
    }

    #[test]
    fn closed_port_fails_all() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let target = l.local_addr().unwrap().to_string();
        drop(l);
        match measure_rtt(&target, &ProbeConfig::default()) {
            Err(ProbeError::AllProbesFailed { loss_count, .. }) => assert_eq!(loss_count, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unresolvable() {
        assert!(matches!(
            measure_rtt("no-such-host.invalid:1", &ProbeConfig::default()),
            Err(ProbeError::Unresolvable(_))
        ));
    }

    proptest! {
        #[test]
        fn median_permutation_invariant(
            xs in proptest::collection::vec(0.001f64..1e4, 1..20),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut ys = xs.clone();
            ys.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
            prop_assert_eq!(median(&xs), median(&ys));
        }
    }
}
