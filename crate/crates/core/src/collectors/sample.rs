//! Pure conversions from raw source readings to metric values.
//!
//! Cumulative counters are turned into rates or percentages from two
//! snapshots. A counter that went backwards (wrap or reset) or a zero-length
//! window yields [`NoSample`]: the interval is skipped, never filled with a
//! made-up value.

use thiserror::Error;

use super::source::{CpuCounters, DiskInfo, LoadAverages, MemoryInfo, NetCounters};
use crate::metrics::sanitize_identifier;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum NoSample {
    #[error("counter went backwards")]
    Wrapped,
    #[error("zero-length sampling window")]
    ZeroWindow,
    #[error("snapshots describe different interfaces")]
    InterfaceMismatch,
    #[error("reading violates its invariants")]
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpuPercent {
    pub usr: f64,
    pub sys: f64,
    pub idle: f64,
}

pub fn sample_cpu(prev: &CpuCounters, curr: &CpuCounters) -> Result<CpuPercent, NoSample> {
    if curr.timestamp_ms <= prev.timestamp_ms {
        return Err(NoSample::ZeroWindow);
    }
    let du = curr.user.checked_sub(prev.user).ok_or(NoSample::Wrapped)?;
    let ds = curr
        .system
        .checked_sub(prev.system)
        .ok_or(NoSample::Wrapped)?;
    let di = curr.idle.checked_sub(prev.idle).ok_or(NoSample::Wrapped)?;
    let total = du as f64 + ds as f64 + di as f64;
    if total == 0.0 {
        return Err(NoSample::ZeroWindow);
    }
    Ok(CpuPercent {
        usr: 100.0 * du as f64 / total,
        sys: 100.0 * ds as f64 / total,
        idle: 100.0 * di as f64 / total,
    })
}

/// Per-direction byte rates; a direction whose counter wrapped is `Err`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetRates {
    pub in_bps: Result<f64, NoSample>,
    pub out_bps: Result<f64, NoSample>,
}

pub fn sample_network(prev: &NetCounters, curr: &NetCounters) -> Result<NetRates, NoSample> {
    if prev.interface != curr.interface {
        return Err(NoSample::InterfaceMismatch);
    }
    if curr.timestamp_ms <= prev.timestamp_ms {
        return Err(NoSample::ZeroWindow);
    }
    let secs = (curr.timestamp_ms - prev.timestamp_ms) as f64 / 1000.0;
    let rate = |a: u64, b: u64| {
        b.checked_sub(a)
            .map(|d| d as f64 / secs)
            .ok_or(NoSample::Wrapped)
    };
    Ok(NetRates {
        in_bps: rate(prev.bytes_in, curr.bytes_in),
        out_bps: rate(prev.bytes_out, curr.bytes_out),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemorySample {
    pub free_kb: u64,
    pub total_kb: u64,
    pub used_pct: Result<f64, NoSample>,
    pub swap_in_rate: Result<f64, NoSample>,
    pub swap_out_rate: Result<f64, NoSample>,
}

/// Memory figures plus swap page rates. Rates need the previous snapshot;
/// without one they are `ZeroWindow`.
pub fn sample_memory(
    prev: Option<&MemoryInfo>,
    curr: &MemoryInfo,
) -> Result<MemorySample, NoSample> {
    if curr.free_kb > curr.total_kb {
        return Err(NoSample::Invalid);
    }
    let used_pct = if curr.total_kb == 0 {
        Err(NoSample::ZeroWindow)
    } else {
        Ok(100.0 * (curr.total_kb - curr.free_kb) as f64 / curr.total_kb as f64)
    };
    let (swap_in_rate, swap_out_rate) = match prev {
        Some(p) if curr.timestamp_ms > p.timestamp_ms => {
            let secs = (curr.timestamp_ms - p.timestamp_ms) as f64 / 1000.0;
            let rate = |a: u64, b: u64| {
                b.checked_sub(a)
                    .map(|d| d as f64 / secs)
                    .ok_or(NoSample::Wrapped)
            };
            (
                rate(p.swap_in_pages, curr.swap_in_pages),
                rate(p.swap_out_pages, curr.swap_out_pages),
            )
        }
        _ => (Err(NoSample::ZeroWindow), Err(NoSample::ZeroWindow)),
    };
    Ok(MemorySample {
        free_kb: curr.free_kb,
        total_kb: curr.total_kb,
        used_pct,
        swap_in_rate,
        swap_out_rate,
    })
}

/// `(parameter, value)` pairs for each mount: `disk.<mount>.free_mb` and
/// `disk.<mount>.total_mb`. Mounts with free > total are skipped and
/// returned in the second element.
pub fn sample_disk(disks: &[DiskInfo]) -> (Vec<(String, i64)>, usize) {
    let mut out = Vec::with_capacity(disks.len() * 2);
    let mut invalid = 0;
    for d in disks {
        if d.free_mb > d.total_mb {
            invalid += 1;
            continue;
        }
        let mount = sanitize_identifier(&d.mount);
        out.push((format!("disk.{mount}.free_mb"), d.free_mb as i64));
        out.push((format!("disk.{mount}.total_mb"), d.total_mb as i64));
    }
    (out, invalid)
}

/// Load averages and process count, passed through unchanged. Values that
/// are negative or non-finite are `Err`.
pub fn sample_load_and_processes(
    load: &LoadAverages,
    procs: i64,
) -> Vec<(&'static str, Result<LoadValue, NoSample>)> {
    let check = |v: f64| {
        if v.is_finite() && v >= 0.0 {
            Ok(LoadValue::Real(v))
        } else {
            Err(NoSample::Invalid)
        }
    };
    vec![
        ("load.1", check(load.load1)),
        ("load.5", check(load.load5)),
        ("load.15", check(load.load15)),
        (
            "processes.count",
            if procs >= 0 {
                Ok(LoadValue::Count(procs))
            } else {
                Err(NoSample::Invalid)
            },
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadValue {
    Real(f64),
    Count(i64),
}
