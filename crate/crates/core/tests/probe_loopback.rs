mod support;

use support::probes;

#[test]
fn loopback_probe_sanity() {
    let r = probes::run(0.3).unwrap();
    r.check().unwrap();
    assert_eq!(r.bandwidth.len(), 2);
}
