//! Best-endpoint selection: proximity tiers and load shortlist a candidate
//! set, RTT picks among the shortlist, and a margin/persistence rule keeps
//! reconnect advice from flapping.

mod catalog;

pub use catalog::{
    parse_catalog, CatalogSource, FileCatalog, HttpCatalog, Repository, RepositorySource,
    RepositoryUnavailable, ServiceDescriptor,
};

use std::cmp::Ordering;
use std::sync::Arc;

use thiserror::Error;

use crate::collectors::LocalityFile;
use crate::metrics::{Clock, OffloadedCollector, Sample};
use crate::netprobe::RttProber;

pub const MODULE_ID: &str = "selector";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalityProfile {
    pub network_domain: Option<String>,
    pub as_number: Option<u32>,
    pub country: Option<String>,
    pub continent: Option<String>,
}

impl From<&LocalityFile> for LocalityProfile {
    fn from(l: &LocalityFile) -> Self {
        Self {
            network_domain: l.network_domain.clone(),
            as_number: l.as_number,
            country: l.country.as_ref().map(|s| s.to_ascii_uppercase()),
            continent: l.continent.as_ref().map(|s| s.to_ascii_uppercase()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid selection policy: {0}")]
pub struct InvalidPolicy(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicy {
    w_load: f64,
    w_clients: f64,
    w_traffic: f64,
    shortlist_size: usize,
    staleness_ms: u64,
    switch_margin: f64,
    switch_persistence: u32,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            w_load: 1.0,
            w_clients: 0.01,
            w_traffic: 0.001,
            shortlist_size: 3,
            staleness_ms: 120_000,
            switch_margin: 0.8,
            switch_persistence: 3,
        }
    }
}

impl SelectionPolicy {
    pub fn new(
        weights: (f64, f64, f64),
        shortlist_size: usize,
        staleness_ms: u64,
        switch_margin: f64,
        switch_persistence: u32,
    ) -> Result<Self, InvalidPolicy> {
        let (w_load, w_clients, w_traffic) = weights;
        for (n, w) in [
            ("w_load", w_load),
            ("w_clients", w_clients),
            ("w_traffic", w_traffic),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(InvalidPolicy(format!("{n} must be a non-negative number")));
            }
        }
        if shortlist_size == 0 {
            return Err(InvalidPolicy("shortlist size must be at least 1".into()));
        }
        if !(switch_margin > 0.0 && switch_margin < 1.0) {
            return Err(InvalidPolicy("switch margin must lie in (0, 1)".into()));
        }
        if switch_persistence == 0 {
            return Err(InvalidPolicy(
                "switch persistence must be at least 1".into(),
            ));
        }
        Ok(Self {
            w_load,
            w_clients,
            w_traffic,
            shortlist_size,
            staleness_ms,
            switch_margin,
            switch_persistence,
        })
    }

    pub fn weights(&self) -> (f64, f64, f64) {
        (self.w_load, self.w_clients, self.w_traffic)
    }

    pub fn shortlist_size(&self) -> usize {
        self.shortlist_size
    }

    pub fn staleness_ms(&self) -> u64 {
        self.staleness_ms
    }

    pub fn switch_margin(&self) -> f64 {
        self.switch_margin
    }

    pub fn switch_persistence(&self) -> u32 {
        self.switch_persistence
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectionError {
    #[error("no fresh candidates")]
    NoCandidates,
    #[error("no reachable candidate")]
    NoReachableCandidate,
}

impl SelectionError {
    pub fn code(&self) -> &'static str {
        match self {
            SelectionError::NoCandidates => "NoCandidates",
            SelectionError::NoReachableCandidate => "NoReachableCandidate",
        }
    }
}

fn same<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x == y)
}

/// 0 same network domain, 1 same AS, 2 same country, 3 same continent, 4 none.
pub fn proximity_tier(c: &ServiceDescriptor, me: &LocalityProfile) -> u8 {
    if same(&c.network_domain, &me.network_domain) {
        0
    } else if same(&c.as_number, &me.as_number) {
        1
    } else if same(&c.country, &me.country) {
        2
    } else if same(&c.continent, &me.continent) {
        3
    } else {
        4
    }
}

/// Weighted load; lower is better.
pub fn load_score(c: &ServiceDescriptor, p: &SelectionPolicy) -> f64 {
    p.w_load * c.load1 + p.w_clients * c.connected_clients as f64 + p.w_traffic * c.traffic_mbps
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortlistEntry {
    pub descriptor: ServiceDescriptor,
    pub tier: u8,
    pub load_score: f64,
}

impl ShortlistEntry {
    pub fn id(&self) -> &str {
        &self.descriptor.service_id
    }
}

/// Drops stale candidates and returns the first K by (tier, load_score, id).
pub fn rank_and_shortlist(
    candidates: &[ServiceDescriptor],
    me: &LocalityProfile,
    p: &SelectionPolicy,
    now_ms: u64,
) -> Result<Vec<ShortlistEntry>, SelectionError> {
    let mut fresh: Vec<ShortlistEntry> = candidates
        .iter()
        .filter(|c| now_ms.saturating_sub(c.last_update_ms) <= p.staleness_ms)
        .map(|c| ShortlistEntry {
            tier: proximity_tier(c, me),
            load_score: load_score(c, p),
            descriptor: c.clone(),
        })
        .collect();
    if fresh.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    fresh.sort_by(|a, b| {
        a.tier
            .cmp(&b.tier)
            .then_with(|| a.load_score.total_cmp(&b.load_score))
            .then_with(|| a.id().cmp(b.id()))
    });
    fresh.truncate(p.shortlist_size);
    Ok(fresh)
}

/// Margin streak carried between evaluations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionHistory {
    pub streak: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdviceEntry {
    pub service_id: String,
    pub tier: u8,
    pub load_score: f64,
    /// `None` when every probe to the entry failed.
    pub median_rtt_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionAdvice {
    pub chosen: String,
    pub shortlist: Vec<AdviceEntry>,
    pub advise_reconnect: bool,
    pub reason: String,
}

/// Picks among the shortlist. `rtts[i]` is the median RTT of `shortlist[i]`.
pub fn select(
    shortlist: &[ShortlistEntry],
    rtts: &[Option<f64>],
    current: Option<&str>,
    p: &SelectionPolicy,
    history: &mut SelectionHistory,
) -> Result<SelectionAdvice, SelectionError> {
    assert_eq!(
        shortlist.len(),
        rtts.len(),
        "one rtt slot per shortlist entry"
    );
    let entries: Vec<AdviceEntry> = shortlist
        .iter()
        .zip(rtts)
        .map(|(e, r)| AdviceEntry {
            service_id: e.id().to_owned(),
            tier: e.tier,
            load_score: e.load_score,
            median_rtt_ms: *r,
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rtts.iter().enumerate() {
        if let Some(r) = *r {
            if best.is_none_or(|(_, b)| r.total_cmp(&b) == Ordering::Less) {
                best = Some((i, r));
            }
        }
    }
    let Some((best_i, best_rtt)) = best else {
        history.streak = 0;
        return Err(SelectionError::NoReachableCandidate);
    };
    let best_id = entries[best_i].service_id.clone();
    let advise = |history: &mut SelectionHistory, reason: &str| {
        history.streak = 0;
        Ok(SelectionAdvice {
            chosen: best_id.clone(),
            shortlist: entries.clone(),
            advise_reconnect: true,
            reason: reason.to_owned(),
        })
    };
    let Some(current) = current else {
        return advise(history, "initial attach");
    };
    let cur = entries.iter().find(|e| e.service_id == current);
    let cur_rtt = match cur {
        None => return advise(history, "current not shortlisted"),
        Some(AdviceEntry {
            median_rtt_ms: None,
            ..
        }) => return advise(history, "current unreachable"),
        Some(AdviceEntry {
            median_rtt_ms: Some(r),
            ..
        }) => *r,
    };
    if best_id != current && best_rtt <= p.switch_margin * cur_rtt {
        history.streak += 1;
    } else {
        history.streak = 0;
    }
    if history.streak >= p.switch_persistence {
        return advise(history, "rtt improved");
    }
    let reason = if history.streak > 0 {
        format!(
            "improvement seen {}/{}",
            history.streak, p.switch_persistence
        )
    } else {
        "current is best".to_owned()
    };
    Ok(SelectionAdvice {
        chosen: current.to_owned(),
        shortlist: entries,
        advise_reconnect: false,
        reason,
    })
}

pub struct Evaluation {
    pub advice: Result<SelectionAdvice, SelectionError>,
    pub samples: Vec<Sample>,
}

/// fetch, rank, probe the shortlist and select. Repository outages fall
/// back to the cached candidates; selection failures become records.
pub fn evaluate_once(
    repo: &mut Repository,
    me: &LocalityProfile,
    p: &SelectionPolicy,
    current: Option<&str>,
    history: &mut SelectionHistory,
    prober: &dyn RttProber,
    now_ms: u64,
) -> Evaluation {
    let mut samples = Vec::new();
    if let Err(e) = repo.fetch_candidates() {
        log::warn!("{e}");
    }
    samples.push(Sample::new(
        "selector.repository_errors",
        repo.errors() as i64,
        "",
    ));
    samples.push(Sample::new(
        "selector.catalog_skipped",
        repo.last_skipped() as i64,
        "",
    ));
    let advice = rank_and_shortlist(repo.cached(), me, p, now_ms).and_then(|shortlist| {
        let rtts: Vec<Option<f64>> = shortlist
            .iter()
            .map(|e| match prober.probe(&e.descriptor.address) {
                Ok(r) => Some(r.median_ms()),
                Err(err) => {
                    log::debug!("selector probe {}: {err}", e.id());
                    None
                }
            })
            .collect();
        select(&shortlist, &rtts, current, p, history)
    });
    match &advice {
        Ok(a) => {
            samples.push(Sample::new("selector.chosen", a.chosen.as_str(), ""));
            samples.push(Sample::new(
                "selector.advise_reconnect",
                a.advise_reconnect as i64,
                "",
            ));
            samples.push(Sample::new("selector.reason", a.reason.as_str(), ""));
            for e in &a.shortlist {
                if let Some(r) = e.median_rtt_ms {
                    samples.push(Sample::new(
                        format!("selector.{}.rtt_ms", e.service_id),
                        r,
                        "ms",
                    ));
                }
                samples.push(Sample::new(
                    format!("selector.{}.tier", e.service_id),
                    e.tier as i64,
                    "",
                ));
                samples.push(Sample::new(
                    format!("selector.{}.load_score", e.service_id),
                    e.load_score,
                    "",
                ));
            }
        }
        Err(e) => {
            samples.push(Sample::new("selector.advise_reconnect", 0i64, ""));
            samples.push(Sample::new("selector.error", e.code(), ""));
        }
    }
    Evaluation { advice, samples }
}

/// State of the periodic selection loop. The client is assumed to follow
/// every advisory, so the advised endpoint becomes the current one.
pub struct SelectorLoop {
    pub repository: Repository,
    pub locality: LocalityProfile,
    pub policy: SelectionPolicy,
    pub current: Option<String>,
    pub history: SelectionHistory,
    pub prober: Arc<dyn RttProber>,
    pub clock: Arc<dyn Clock>,
}

impl SelectorLoop {
    pub fn step(&mut self) -> Evaluation {
        let ev = evaluate_once(
            &mut self.repository,
            &self.locality,
            &self.policy,
            self.current.as_deref(),
            &mut self.history,
            self.prober.as_ref(),
            self.clock.now_ms(),
        );
        if let Ok(a) = &ev.advice {
            if a.advise_reconnect {
                self.current = Some(a.chosen.clone());
            }
        }
        ev
    }
}

/// The `selector` collector module, evaluating on a worker thread.
pub fn collector(mut state: SelectorLoop) -> OffloadedCollector {
    OffloadedCollector::new(MODULE_ID, move || state.step().samples).with_default_interval(30_000)
}
