use lisa_core::selector::{
    load_score, proximity_tier, rank_and_shortlist, select, LocalityProfile, SelectionHistory,
    SelectionPolicy, ServiceDescriptor,
};
use proptest::prelude::*;

fn small_opt<T: std::fmt::Debug + Clone + 'static>(
    choices: Vec<T>,
) -> impl Strategy<Value = Option<T>> {
    prop_oneof![1 => Just(None), 4 => proptest::sample::select(choices).prop_map(Some)]
}

fn descriptor(id: usize) -> impl Strategy<Value = ServiceDescriptor> {
    (
        small_opt(vec!["a.org".to_string(), "b.org".into(), "c.org".into()]),
        small_opt(vec![1u32, 2, 3]),
        small_opt(vec!["CH".to_string(), "US".into(), "FR".into()]),
        small_opt(vec!["EU".to_string(), "NA".into()]),
        prop_oneof![Just(0.0), Just(0.5), 0.0f64..4.0],
        0u64..50,
        prop_oneof![Just(0.0), 0.0f64..500.0],
        1u64..2000,
    )
        .prop_map(
            move |(dom, asn, c, cont, load1, clients, traffic, upd)| ServiceDescriptor {
                service_id: format!("r{id:02}"),
                address: format!("10.0.0.{id}:7000"),
                network_domain: dom,
                as_number: asn,
                country: c,
                continent: cont,
                load1,
                connected_clients: clients,
                traffic_mbps: traffic,
                last_update_ms: upd,
            },
        )
}

fn candidates() -> impl Strategy<Value = Vec<ServiceDescriptor>> {
    (1usize..20).prop_flat_map(|n| (0..n).map(descriptor).collect::<Vec<_>>())
}

fn locality() -> impl Strategy<Value = LocalityProfile> {
    (
        small_opt(vec!["a.org".to_string(), "z.org".into()]),
        small_opt(vec![1u32, 9]),
        small_opt(vec!["CH".to_string(), "US".into()]),
        small_opt(vec!["EU".to_string(), "AS".into()]),
    )
        .prop_map(
            |(network_domain, as_number, country, continent)| LocalityProfile {
                network_domain,
                as_number,
                country,
                continent,
            },
        )
}

fn policy() -> impl Strategy<Value = SelectionPolicy> {
    (1usize..6, 0u64..2000)
        .prop_map(|(k, st)| SelectionPolicy::new((1.0, 0.01, 0.001), k, st, 0.8, 3).unwrap())
}

fn key(c: &ServiceDescriptor, me: &LocalityProfile, p: &SelectionPolicy) -> (u8, f64, String) {
    (
        proximity_tier(c, me),
        load_score(c, p),
        c.service_id.clone(),
    )
}

fn not_after(a: &(u8, f64, String), b: &(u8, f64, String)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 <= b.2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn shortlist_dominates_excluded(cands in candidates(), me in locality(), p in policy(), now in 0u64..4000) {
        match rank_and_shortlist(&cands, &me, &p, now) {
            Ok(s) => {
                prop_assert!(s.len() <= p.shortlist_size());
                let ids: Vec<_> = s.iter().map(|e| e.id().to_owned()).collect();
                for c in &cands {
                    let fresh = now.saturating_sub(c.last_update_ms) <= p.staleness_ms();
                    if !fresh {
                        prop_assert!(!ids.contains(&c.service_id));
                        continue;
                    }
                    if ids.contains(&c.service_id) {
                        continue;
                    }
                    let ck = key(c, &me, &p);
                    for e in &s {
                        prop_assert!(not_after(&key(&e.descriptor, &me, &p), &ck));
                    }
                }
                for w in s.windows(2) {
                    prop_assert!(not_after(&key(&w[0].descriptor, &me, &p), &key(&w[1].descriptor, &me, &p)));
                }
            }
            Err(_) => {
                prop_assert!(cands.iter().all(|c| now.saturating_sub(c.last_update_ms) > p.staleness_ms()));
            }
        }
    }

    #[test]
    fn chosen_scale_invariant_and_deterministic(
        cands in candidates(),
        me in locality(),
        rtt_seed in proptest::collection::vec(proptest::option::weighted(0.8, 1u32..200), 20),
        exp in -8i32..8,
    ) {
        let p = SelectionPolicy::new((1.0, 0.01, 0.001), 5, u64::MAX, 0.8, 3).unwrap();
        let s = rank_and_shortlist(&cands, &me, &p, 0).unwrap();
        let rtts: Vec<Option<f64>> = rtt_seed[..s.len()].iter().map(|r| r.map(f64::from)).collect();
        let scale = 2f64.powi(exp);
        let scaled: Vec<Option<f64>> = rtts.iter().map(|r| r.map(|v| v * scale)).collect();
        let a = select(&s, &rtts, None, &p, &mut SelectionHistory::default());
        let b = select(&s, &scaled, None, &p, &mut SelectionHistory::default());
        let again = select(&s, &rtts, None, &p, &mut SelectionHistory::default());
        prop_assert_eq!(a.clone().map(|x| x.chosen), b.map(|x| x.chosen));
        prop_assert_eq!(a, again);
    }

    #[test]
    fn no_advice_without_sustained_margin(
        rounds in proptest::collection::vec((10.0f64..30.0, 10.0f64..30.0), 1..60),
    ) {
        // streaks are broken every third round, so N=3 is never reached
        let p = SelectionPolicy::default();
        let s = rank_and_shortlist(
            &[
                ServiceDescriptor::parse_line("A 10.0.0.1:1 - - - - 0 0 0 1").unwrap(),
                ServiceDescriptor::parse_line("B 10.0.0.2:1 - - - - 0 0 0 1").unwrap(),
            ],
            &LocalityProfile::default(),
            &p,
            1,
        ).unwrap();
        let mut h = SelectionHistory::default();
        for (i, (a, b)) in rounds.into_iter().enumerate() {
            let b = if i % 3 == 2 { a } else { b };
            let adv = select(&s, &[Some(a), Some(b)], Some("A"), &p, &mut h).unwrap();
            prop_assert!(!adv.advise_reconnect);
            prop_assert_eq!(adv.chosen, "A");
        }
    }
}
