//! Brute-force reference for shortlisting and selection, written from the
//! definitions rather than from the library's sort.

use std::cmp::Ordering;
use std::collections::HashMap;

use lisa_core::selector::{
    rank_and_shortlist, select, LocalityProfile, SelectionError, SelectionHistory, SelectionPolicy,
    ServiceDescriptor,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub struct Case {
    pub candidates: Vec<ServiceDescriptor>,
    pub me: LocalityProfile,
    pub policy: SelectionPolicy,
    pub now_ms: u64,
    pub rtts: HashMap<String, Option<f64>>,
    pub current: Option<String>,
    pub streak: u32,
}

#[derive(Debug, PartialEq)]
pub struct Outcome {
    pub shortlist: Vec<String>,
    pub result: Result<(String, bool), &'static str>,
    pub streak: u32,
}

fn pick<T: Clone>(rng: &mut StdRng, xs: &[T]) -> T {
    xs.choose(rng).expect("non-empty").clone()
}

fn maybe<T: Clone>(rng: &mut StdRng, xs: &[T]) -> Option<T> {
    rng.gen_bool(0.8).then(|| pick(rng, xs))
}

pub fn random_case(rng: &mut StdRng) -> Case {
    let domains = ["cern.ch", "caltech.edu", "ucsd.edu"];
    let ases = [513u32, 32, 7377];
    let countries = ["CH", "US", "RO"];
    let continents = ["EU", "NA"];
    let now_ms = 10_000_000;
    let n = rng.gen_range(0..=20);
    let mut ids: Vec<usize> = (0..100).collect();
    ids.shuffle(rng);
    let candidates: Vec<ServiceDescriptor> = ids[..n]
        .iter()
        .map(|i| ServiceDescriptor {
            service_id: format!("r{i:02}"),
            address: format!("10.0.0.{i}:46000"),
            network_domain: maybe(rng, &domains).map(str::to_owned),
            as_number: maybe(rng, &ases),
            country: maybe(rng, &countries).map(str::to_owned),
            continent: maybe(rng, &continents).map(str::to_owned),
            load1: pick(rng, &[0.0, 0.5, 1.0, 2.5]),
            connected_clients: pick(rng, &[0, 10, 100]),
            traffic_mbps: pick(rng, &[0.0, 50.0]),
            last_update_ms: now_ms - pick(rng, &[0, 1_000, 119_999, 120_000, 120_001, 500_000]),
        })
        .collect();
    let me = LocalityProfile {
        network_domain: maybe(rng, &domains).map(str::to_owned),
        as_number: maybe(rng, &ases),
        country: maybe(rng, &countries).map(str::to_owned),
        continent: maybe(rng, &continents).map(str::to_owned),
    };
    let policy = SelectionPolicy::new(
        pick(
            rng,
            &[
                (1.0, 0.01, 0.001),
                (1.0, 0.0, 0.0),
                (0.0, 1.0, 0.0),
                (0.5, 0.02, 0.01),
            ],
        ),
        rng.gen_range(1..=5),
        120_000,
        pick(rng, &[0.5, 0.8, 0.95]),
        rng.gen_range(1..=4),
    )
    .expect("valid policy");
    let rtts = candidates
        .iter()
        .map(|c| {
            let r = rng
                .gen_bool(0.85)
                .then(|| pick(rng, &[1.0, 5.0, 8.0, 10.0, 10.0, 12.5, 20.0, 40.0]));
            (c.service_id.clone(), r)
        })
        .collect();
    let current = match rng.gen_range(0..4) {
        0 => None,
        1 => Some("r-gone".to_owned()),
        _ if !candidates.is_empty() => Some(pick(rng, &candidates).service_id),
        _ => None,
    };
    Case {
        candidates,
        me,
        policy,
        now_ms,
        rtts,
        current,
        streak: rng.gen_range(0..4),
    }
}

fn matches<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x == y)
}

fn tier(c: &ServiceDescriptor, me: &LocalityProfile) -> u8 {
    let levels = [
        matches(&c.network_domain, &me.network_domain),
        matches(&c.as_number, &me.as_number),
        matches(&c.country, &me.country),
        matches(&c.continent, &me.continent),
    ];
    levels.iter().position(|&m| m).unwrap_or(4) as u8
}

fn score(c: &ServiceDescriptor, p: &SelectionPolicy) -> f64 {
    let (wl, wc, wt) = p.weights();
    wl * c.load1 + wc * c.connected_clients as f64 + wt * c.traffic_mbps
}

fn before(a: &ServiceDescriptor, b: &ServiceDescriptor, case: &Case) -> bool {
    let ka = (tier(a, &case.me), score(a, &case.policy));
    let kb = (tier(b, &case.me), score(b, &case.policy));
    match ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.service_id < b.service_id,
    }
}

pub fn brute_force(case: &Case) -> Outcome {
    let p = &case.policy;
    let fresh: Vec<&ServiceDescriptor> = case
        .candidates
        .iter()
        .filter(|c| (case.now_ms as i128 - c.last_update_ms as i128) <= p.staleness_ms() as i128)
        .collect();
    // rank = number of fresh candidates that sort strictly before
    let mut ranked: Vec<(usize, &ServiceDescriptor)> = fresh
        .iter()
        .map(|c| (fresh.iter().filter(|d| before(d, c, case)).count(), *c))
        .filter(|(rank, _)| *rank < p.shortlist_size())
        .collect();
    ranked.sort_by_key(|(rank, _)| *rank);
    let shortlist: Vec<String> = ranked.iter().map(|(_, c)| c.service_id.clone()).collect();
    let mut streak = case.streak;
    if shortlist.is_empty() {
        return Outcome {
            shortlist,
            result: Err("NoCandidates"),
            streak,
        };
    }
    let mut best: Option<(usize, f64)> = None;
    for (rank, id) in shortlist.iter().enumerate() {
        if let Some(r) = case.rtts[id] {
            let better = match best {
                None => true,
                Some((br, b)) => r < b || (r == b && rank < br),
            };
            if better {
                best = Some((rank, r));
            }
        }
    }
    let Some((best_rank, best_rtt)) = best else {
        return Outcome {
            shortlist,
            result: Err("NoReachableCandidate"),
            streak: 0,
        };
    };
    let best_id = shortlist[best_rank].clone();
    let advise = |shortlist, streak: &mut u32| {
        *streak = 0;
        Outcome {
            shortlist,
            result: Ok((best_id.clone(), true)),
            streak: 0,
        }
    };
    let Some(cur) = case.current.as_deref() else {
        return advise(shortlist, &mut streak);
    };
    if !shortlist.iter().any(|s| s == cur) {
        return advise(shortlist, &mut streak);
    }
    let Some(cur_rtt) = case.rtts[cur] else {
        return advise(shortlist, &mut streak);
    };
    let improved = best_id != cur && best_rtt <= p.switch_margin() * cur_rtt;
    streak = if improved { streak + 1 } else { 0 };
    if streak >= p.switch_persistence() {
        return advise(shortlist, &mut streak);
    }
    Outcome {
        shortlist,
        result: Ok((cur.to_owned(), false)),
        streak,
    }
}

pub fn library(case: &Case) -> Outcome {
    let mut history = SelectionHistory {
        streak: case.streak,
    };
    let sl = match rank_and_shortlist(&case.candidates, &case.me, &case.policy, case.now_ms) {
        Ok(sl) => sl,
        Err(e) => {
            return Outcome {
                shortlist: Vec::new(),
                result: Err(e.code()),
                streak: history.streak,
            }
        }
    };
    let shortlist: Vec<String> = sl.iter().map(|e| e.id().to_owned()).collect();
    let rtts: Vec<Option<f64>> = shortlist.iter().map(|id| case.rtts[id]).collect();
    let result = select(
        &sl,
        &rtts,
        case.current.as_deref(),
        &case.policy,
        &mut history,
    )
    .map(|a| (a.chosen, a.advise_reconnect))
    .map_err(|e: SelectionError| e.code());
    Outcome {
        shortlist,
        result,
        streak: history.streak,
    }
}

/// Compares library and reference on `n` random cases. Returns the number
/// of mismatches and the first one found.
pub fn compare(n: usize, seed: u64) -> (usize, Option<String>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut mismatches = 0;
    let mut first = None;
    for i in 0..n {
        let case = random_case(&mut rng);
        let (a, b) = (library(&case), brute_force(&case));
        if a != b {
            mismatches += 1;
            first.get_or_insert_with(|| format!("case {i}: library {a:?}, reference {b:?}"));
        }
    }
    (mismatches, first)
}
