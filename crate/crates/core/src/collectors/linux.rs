//! Live source backed by Linux procfs.

use std::ffi::CString;
use std::fs;
use std::net::{IpAddr, Ipv4Addr, UdpSocket};
use std::path::{Path, PathBuf};

use super::locality::LocalityFile;
use super::source::*;
use crate::metrics::{Clock, SystemClock};

// pseudo and virtual filesystems that never carry user data
const SKIP_FS: &[&str] = &[
    "proc",
    "sysfs",
    "devtmpfs",
    "devpts",
    "tmpfs",
    "cgroup",
    "cgroup2",
    "mqueue",
    "debugfs",
    "tracefs",
    "securityfs",
    "pstore",
    "bpf",
    "autofs",
    "hugetlbfs",
    "configfs",
    "fusectl",
    "binfmt_misc",
    "nsfs",
    "rpc_pipefs",
    "squashfs",
    "ramfs",
    "efivarfs",
    "selinuxfs",
];

pub struct LinuxSource {
    root: PathBuf,
    locality: LocalityFile,
    clock: Box<dyn Clock>,
}

impl LinuxSource {
    pub fn new(locality: LocalityFile) -> Self {
        Self::with_root("/proc", locality)
    }

    /// Reads procfs files under `root` instead of `/proc`.
    pub fn with_root(root: impl Into<PathBuf>, locality: LocalityFile) -> Self {
        Self {
            root: root.into(),
            locality,
            clock: Box::new(SystemClock),
        }
    }

    fn read(&self, rel: &str) -> Result<String, SourceError> {
        let path = self.root.join(rel);
        fs::read_to_string(&path).map_err(|e| SourceError::io(path.display().to_string(), e))
    }
}

fn field<T: std::str::FromStr>(what: &str, s: Option<&str>) -> Result<T, SourceError> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| SourceError::parse(what, format!("bad or missing field {s:?}")))
}

pub(crate) fn parse_stat_cpu(text: &str) -> Result<(u64, u64, u64), SourceError> {
    let line = text
        .lines()
        .find(|l| l.starts_with("cpu "))
        .ok_or_else(|| SourceError::parse("stat", "no aggregate cpu line"))?;
    let v: Vec<u64> = line
        .split_whitespace()
        .skip(1)
        .map(|t| t.parse().unwrap_or(0))
        .collect();
    let at = |i: usize| v.get(i).copied().unwrap_or(0);
    // user nice system idle iowait irq softirq steal
    let user = at(0) + at(1);
    let system = at(2) + at(5) + at(6) + at(7);
    let idle = at(3) + at(4);
    Ok((user, system, idle))
}

pub(crate) fn parse_meminfo(text: &str) -> Result<(u64, u64), SourceError> {
    let get = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|r| r.split_whitespace().next())
            .and_then(|v| v.parse::<u64>().ok())
    };
    let total = get("MemTotal:").ok_or(SourceError::Missing("MemTotal"))?;
    let free = get("MemAvailable:")
        .or_else(|| get("MemFree:"))
        .ok_or(SourceError::Missing("MemFree"))?;
    Ok((free.min(total), total))
}

pub(crate) fn parse_vmstat_swap(text: &str) -> (u64, u64) {
    let get = |key: &str| {
        text.lines()
            .find_map(|l| {
                let mut it = l.split_whitespace();
                (it.next() == Some(key)).then(|| it.next()).flatten()
            })
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    };
    (get("pswpin"), get("pswpout"))
}

pub(crate) fn parse_net_dev(text: &str, ts: u64) -> Vec<NetCounters> {
    text.lines()
        .skip(2)
        .filter_map(|l| {
            let (iface, rest) = l.split_once(':')?;
            let v: Vec<u64> = rest
                .split_whitespace()
                .filter_map(|t| t.parse().ok())
                .collect();
            Some(NetCounters {
                interface: iface.trim().to_owned(),
                bytes_in: *v.first()?,
                bytes_out: *v.get(8)?,
                timestamp_ms: ts,
            })
        })
        .collect()
}

pub(crate) fn parse_cpuinfo(text: &str) -> (String, u32) {
    let model = text
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            matches!(
                k.trim(),
                "model name" | "Processor" | "cpu model" | "Hardware"
            )
            .then(|| v.trim().to_owned())
        })
        .unwrap_or_else(|| "unknown".to_owned());
    let count = text
        .lines()
        .filter(|l| l.split(':').next().map(str::trim) == Some("processor"))
        .count() as u32;
    (model, count)
}

fn statvfs_mb(path: &str) -> Option<(u64, u64)> {
    let c = CString::new(path).ok()?;
    let mut st = std::mem::MaybeUninit::<libc::statvfs>::zeroed();
    // SAFETY: c is a valid NUL-terminated path and st points to writable memory
    let rc = unsafe { libc::statvfs(c.as_ptr(), st.as_mut_ptr()) };
    if rc != 0 {
        return None;
    }
    // SAFETY: statvfs returned success so the struct is initialized
    let st = unsafe { st.assume_init() };
    let frsize = st.f_frsize;
    let total = st.f_blocks * frsize / (1024 * 1024);
    let free = st.f_bavail * frsize / (1024 * 1024);
    Some((free.min(total), total))
}

fn local_ip() -> IpAddr {
    // connecting a UDP socket sends nothing; it only selects the route
    UdpSocket::bind("0.0.0.0:0")
        .and_then(|s| {
            s.connect("192.0.2.1:9")?;
            s.local_addr()
        })
        .map(|a| a.ip())
        .unwrap_or(IpAddr::V4(Ipv4Addr::LOCALHOST))
}

impl PlatformSource for LinuxSource {
    fn read_cpu_counters(&mut self) -> Result<CpuCounters, SourceError> {
        let (user, system, idle) = parse_stat_cpu(&self.read("stat")?)?;
        Ok(CpuCounters {
            user,
            system,
            idle,
            timestamp_ms: self.clock.now_ms(),
        })
    }

    fn read_memory(&mut self) -> Result<MemoryInfo, SourceError> {
        let (free_kb, total_kb) = parse_meminfo(&self.read("meminfo")?)?;
        let (swap_in_pages, swap_out_pages) = self
            .read("vmstat")
            .map(|t| parse_vmstat_swap(&t))
            .unwrap_or((0, 0));
        Ok(MemoryInfo {
            free_kb,
            total_kb,
            swap_in_pages,
            swap_out_pages,
            timestamp_ms: self.clock.now_ms(),
        })
    }

    fn read_disks(&mut self) -> Result<Vec<DiskInfo>, SourceError> {
        let mounts = self.read("mounts")?;
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for l in mounts.lines() {
            let f: Vec<&str> = l.split_whitespace().collect();
            let (Some(dev), Some(mount), Some(fs)) = (f.first(), f.get(1), f.get(2)) else {
                continue;
            };
            if SKIP_FS.contains(fs) || !seen.insert((*dev).to_owned()) {
                continue;
            }
            let mount = mount.replace("\\040", " ");
            if let Some((free_mb, total_mb)) = statvfs_mb(&mount) {
                if total_mb > 0 {
                    out.push(DiskInfo {
                        mount,
                        free_mb,
                        total_mb,
                    });
                }
            }
        }
        Ok(out)
    }

    fn read_load(&mut self) -> Result<LoadAverages, SourceError> {
        let text = self.read("loadavg")?;
        let mut it = text.split_whitespace();
        Ok(LoadAverages {
            load1: field("loadavg", it.next())?,
            load5: field("loadavg", it.next())?,
            load15: field("loadavg", it.next())?,
        })
    }

    fn read_process_count(&mut self) -> Result<i64, SourceError> {
        let dir = fs::read_dir(&self.root)
            .map_err(|e| SourceError::io(self.root.display().to_string(), e))?;
        Ok(dir
            .filter_map(Result::ok)
            .filter(|e| {
                e.file_name()
                    .to_string_lossy()
                    .bytes()
                    .all(|b| b.is_ascii_digit())
            })
            .count() as i64)
    }

    fn read_net_counters(&mut self) -> Result<Vec<NetCounters>, SourceError> {
        let text = self.read("net/dev")?;
        Ok(parse_net_dev(&text, self.clock.now_ms()))
    }

    fn read_system_identity(&mut self) -> Result<SystemIdentity, SourceError> {
        let os_version = self
            .read("sys/kernel/osrelease")
            .map(|s| s.trim().to_owned())
            .unwrap_or_else(|_| "unknown".to_owned());
        let username = std::env::var("USER")
            .or_else(|_| std::env::var("LOGNAME"))
            .unwrap_or_else(|_| {
                // SAFETY: getuid has no preconditions
                format!("uid{}", unsafe { libc::getuid() })
            });
        Ok(SystemIdentity {
            os_name: std::env::consts::OS.to_owned(),
            os_version,
            username,
            runtime_version: concat!("lisa-agent ", env!("CARGO_PKG_VERSION")).to_owned(),
            local_ip: local_ip().to_string(),
            public_ip: self.locality.public_ip.clone(),
            as_number: self.locality.as_number,
        })
    }

    fn read_hardware(&mut self) -> Result<HardwareInfo, SourceError> {
        let (cpu_model, count) = parse_cpuinfo(&self.read("cpuinfo")?);
        let (_, total_memory_kb) = parse_meminfo(&self.read("meminfo")?)?;
        let cpu_count = if count > 0 {
            count
        } else {
            std::thread::available_parallelism().map_or(0, |n| n.get() as u32)
        };
        Ok(HardwareInfo {
            cpu_model,
            cpu_count,
            total_memory_kb,
        })
    }
}

/// Returns true when the live source can run on this machine.
pub fn live_source_available() -> bool {
    Path::new("/proc/stat").exists()
}
