//! Replays recorded snapshots as a [`PlatformSource`].
//!
//! A fixture is an index file with one `<timestamp_ms> <snapshot-file>` line
//! per snapshot (paths relative to the index) and one snapshot file per
//! line. Snapshot files hold `key value` lines:
//!
//! ```text
//! cpu.user 200
//! cpu.system 100
//! cpu.idle 1700
//! mem.free_kb 250000
//! mem.total_kb 1000000
//! swap.in_pages 12
//! swap.out_pages 3
//! load.1 0.5
//! load.5 0.4
//! load.15 0.3
//! processes.count 120
//! disk / 100 400
//! net eth0 1000 2000
//! sys.os_name Linux
//! sys.local_ip 10.0.0.5
//! hw.cpu_model Example CPU @ 2.0GHz
//! hw.cpu_count 4
//! ```
//!
//! `disk` and `net` may repeat. After the last snapshot the replay loops
//! back to the first with timestamps shifted forward by one period.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::source::*;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub timestamp_ms: u64,
    values: BTreeMap<String, String>,
    disks: Vec<DiskInfo>,
    nets: Vec<(String, u64, u64)>,
}

impl Snapshot {
    pub fn parse(timestamp_ms: u64, text: &str, origin: &str) -> Result<Self, SourceError> {
        let mut snap = Snapshot {
            timestamp_ms,
            ..Default::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{origin}:{}", n + 1);
            let (key, rest) = line
                .split_once(char::is_whitespace)
                .map(|(k, r)| (k, r.trim()))
                .unwrap_or((line, ""));
            match key {
                "disk" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    let [mount, free, total] = f[..] else {
                        return Err(SourceError::parse(
                            at(),
                            "expected `disk <mount> <free_mb> <total_mb>`",
                        ));
                    };
                    snap.disks.push(DiskInfo {
                        mount: mount.to_owned(),
                        free_mb: num(free, &at())?,
                        total_mb: num(total, &at())?,
                    });
                }
                "net" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    let [iface, rx, tx] = f[..] else {
                        return Err(SourceError::parse(
                            at(),
                            "expected `net <iface> <bytes_in> <bytes_out>`",
                        ));
                    };
                    snap.nets
                        .push((iface.to_owned(), num(rx, &at())?, num(tx, &at())?));
                }
                _ => {
                    snap.values.insert(key.to_owned(), rest.to_owned());
                }
            }
        }
        Ok(snap)
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<T, SourceError> {
        let raw = self.values.get(key).ok_or(SourceError::Missing(key))?;
        raw.parse()
            .map_err(|_| SourceError::parse(key, format!("bad value {raw:?}")))
    }

    fn opt<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, SourceError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    fn text(&self, key: &'static str) -> Result<String, SourceError> {
        self.values
            .get(key)
            .cloned()
            .ok_or(SourceError::Missing(key))
    }
}

fn num<T: FromStr>(s: &str, at: &str) -> Result<T, SourceError> {
    s.parse()
        .map_err(|_| SourceError::parse(at, format!("bad number {s:?}")))
}

#[derive(Debug, Clone)]
pub struct FixtureSource {
    snapshots: Vec<Snapshot>,
    cursor: Option<usize>,
    cycle: u64,
    period_ms: u64,
}

impl FixtureSource {
    pub fn new(mut snapshots: Vec<Snapshot>) -> Result<Self, SourceError> {
        if snapshots.is_empty() {
            return Err(SourceError::parse("fixture", "no snapshots"));
        }
        snapshots.sort_by_key(|s| s.timestamp_ms);
        let first = snapshots[0].timestamp_ms;
        let last = snapshots[snapshots.len() - 1].timestamp_ms;
        let step = match snapshots.len() {
            1 => 1000,
            n => (last - snapshots[n - 2].timestamp_ms).max(1),
        };
        Ok(Self {
            snapshots,
            cursor: None,
            cycle: 0,
            period_ms: last - first + step,
        })
    }

    /// Loads the index file and every snapshot it lists.
    pub fn load(index: impl AsRef<Path>) -> Result<Self, SourceError> {
        let index = index.as_ref();
        let text = fs::read_to_string(index)
            .map_err(|e| SourceError::io(index.display().to_string(), e))?;
        let base = index.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut snaps = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = format!("{}:{}", index.display(), n + 1);
            let (ts, file) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| SourceError::parse(&at, "expected `<timestamp_ms> <file>`"))?;
            let ts: u64 = num(ts, &at)?;
            let path: PathBuf = base.join(file.trim());
            let body = fs::read_to_string(&path)
                .map_err(|e| SourceError::io(path.display().to_string(), e))?;
            snaps.push(Snapshot::parse(ts, &body, &path.display().to_string())?);
        }
        Self::new(snaps)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    fn current(&self) -> &Snapshot {
        &self.snapshots[self.cursor.unwrap_or(0)]
    }

    fn ts(&self) -> u64 {
        self.current().timestamp_ms + self.cycle * self.period_ms
    }
}

impl PlatformSource for FixtureSource {
    fn advance(&mut self) -> Result<(), SourceError> {
        self.cursor = Some(match self.cursor {
            None => 0,
            Some(i) if i + 1 < self.snapshots.len() => i + 1,
            Some(_) => {
                self.cycle += 1;
                0
            }
        });
        Ok(())
    }

    fn read_cpu_counters(&mut self) -> Result<CpuCounters, SourceError> {
        let s = self.current();
        Ok(CpuCounters {
            user: s.get("cpu.user")?,
            system: s.get("cpu.system")?,
            idle: s.get("cpu.idle")?,
            timestamp_ms: self.ts(),
        })
    }

    fn read_memory(&mut self) -> Result<MemoryInfo, SourceError> {
        let s = self.current();
        Ok(MemoryInfo {
            free_kb: s.get("mem.free_kb")?,
            total_kb: s.get("mem.total_kb")?,
            swap_in_pages: s.opt("swap.in_pages")?.unwrap_or(0),
            swap_out_pages: s.opt("swap.out_pages")?.unwrap_or(0),
            timestamp_ms: self.ts(),
        })
    }

    fn read_disks(&mut self) -> Result<Vec<DiskInfo>, SourceError> {
        Ok(self.current().disks.clone())
    }

    fn read_load(&mut self) -> Result<LoadAverages, SourceError> {
        let s = self.current();
        Ok(LoadAverages {
            load1: s.get("load.1")?,
            load5: s.get("load.5")?,
            load15: s.get("load.15")?,
        })
    }

    fn read_process_count(&mut self) -> Result<i64, SourceError> {
        self.current().get("processes.count")
    }

    fn read_net_counters(&mut self) -> Result<Vec<NetCounters>, SourceError> {
        let ts = self.ts();
        Ok(self
            .current()
            .nets
            .iter()
            .map(|(iface, rx, tx)| NetCounters {
                interface: iface.clone(),
                bytes_in: *rx,
                bytes_out: *tx,
                timestamp_ms: ts,
            })
            .collect())
    }

    fn read_system_identity(&mut self) -> Result<SystemIdentity, SourceError> {
        let s = self.current();
        Ok(SystemIdentity {
            os_name: s.text("sys.os_name")?,
            os_version: s.text("sys.os_version")?,
            username: s.text("sys.username")?,
            runtime_version: s.text("sys.runtime_version")?,
            local_ip: s.text("sys.local_ip")?,
            public_ip: s.values.get("sys.public_ip").cloned(),
            as_number: s.opt("sys.as")?,
        })
    }

    fn read_hardware(&mut self) -> Result<HardwareInfo, SourceError> {
        let s = self.current();
        Ok(HardwareInfo {
            cpu_model: s.text("hw.cpu_model")?,
            cpu_count: s.get("hw.cpu_count")?,
            total_memory_kb: s.get("hw.total_memory_kb")?,
        })
    }
}
