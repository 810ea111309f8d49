use lisa_core::apmon::{Datagram, Param, XdrValue};
use lisa_core::metrics::{MetricRecord, MetricValue};
use proptest::prelude::*;

pub fn identifier() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_.-]{1,24}"
}

pub fn any_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,40}",
        "[a-z %\t]{0,20}",
        any::<String>().prop_map(|s| s.replace(['\n', '\r'], "")),
    ]
}

pub fn metric_value() -> impl Strategy<Value = MetricValue> {
    prop_oneof![
        any::<f64>()
            .prop_filter("finite", |v| v.is_finite())
            .prop_map(MetricValue::Real),
        any::<i64>().prop_map(MetricValue::Integer),
        any_text().prop_map(MetricValue::Text),
    ]
}

pub fn record() -> impl Strategy<Value = MetricRecord> {
    (
        1..=u64::MAX,
        identifier(),
        identifier(),
        metric_value(),
        prop_oneof!["", "[ -~]{1,8}"],
    )
        .prop_map(|(ts, m, p, v, u)| MetricRecord::new(m, p, v, u, ts).expect("valid record"))
}

fn xdr_value() -> impl Strategy<Value = XdrValue> {
    prop_oneof![
        "[ -~]{0,60}".prop_map(XdrValue::String),
        any::<String>().prop_map(XdrValue::String),
        any::<i32>().prop_map(XdrValue::Int32),
        any::<f32>()
            .prop_filter("not NaN", |v| !v.is_nan())
            .prop_map(XdrValue::Real32),
        any::<f64>()
            .prop_filter("not NaN", |v| !v.is_nan())
            .prop_map(XdrValue::Real64),
    ]
}

pub fn datagram() -> impl Strategy<Value = Datagram> {
    (
        "[ -~]{0,12}",
        identifier(),
        identifier(),
        prop::collection::vec((identifier(), xdr_value()), 1..20),
    )
        .prop_map(|(pw, cluster, node, ps)| Datagram {
            header: lisa_core::apmon::header_for(&pw),
            cluster,
            node,
            params: ps.into_iter().map(|(n, v)| Param::new(n, v)).collect(),
        })
}
