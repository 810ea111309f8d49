use lisa_core::apmon::{Datagram, XdrValue};
use lisa_core::bus::{decode_record, encode_record};
use lisa_core::metrics::MetricRecord;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use super::strategies;
use super::xdr_oracle::{read_datagram, OracleValue};

pub fn check_rec(r: &MetricRecord) -> Result<(), String> {
    let line = encode_record(r);
    if line.contains('\n') {
        return Err(format!("newline in {line:?}"));
    }
    match decode_record(&line) {
        Ok(back) if back == *r => Ok(()),
        Ok(back) => Err(format!("{line:?} decoded to {back:?}")),
        Err(e) => Err(format!("{line:?}: {e}")),
    }
}

pub fn check_datagram(d: &Datagram) -> Result<(), String> {
    let bytes = d.encode().map_err(|e| e.to_string())?;
    if bytes.len() != d.encoded_len() {
        return Err(format!(
            "{} bytes, expected {}",
            bytes.len(),
            d.encoded_len()
        ));
    }
    let back = Datagram::decode(&bytes).map_err(|e| e.to_string())?;
    if back != *d {
        return Err(format!("decoded to {back:?}"));
    }
    let o = read_datagram(&bytes).map_err(|e| format!("oracle: {e}"))?;
    if (&o.header, &o.cluster, &o.node) != (&d.header, &d.cluster, &d.node) {
        return Err(format!("oracle envelope {o:?}"));
    }
    if o.params.len() != d.params.len() {
        return Err(format!("oracle saw {} params", o.params.len()));
    }
    for ((name, v), p) in o.params.iter().zip(&d.params) {
        let same = name == &p.name
            && match (v, &p.value) {
                (OracleValue::Str(a), XdrValue::String(b)) => a == b,
                (OracleValue::I32(a), XdrValue::Int32(b)) => a == b,
                (OracleValue::F32(a), XdrValue::Real32(b)) => *a == b.to_bits(),
                (OracleValue::F64(a), XdrValue::Real64(b)) => *a == b.to_bits(),
                _ => false,
            };
        if !same {
            return Err(format!("oracle param {name}: {v:?} vs {:?}", p.value));
        }
    }
    Ok(())
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Runs both round-trip properties for `cases` generated inputs each.
pub fn run(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&strategies::record(), |r| {
            check_rec(&r).map_err(TestCaseError::fail)
        })
        .map_err(|e| format!("REC line: {e}"))?;
    runner(cases)
        .run(&strategies::datagram(), |d| {
            check_datagram(&d).map_err(TestCaseError::fail)
        })
        .map_err(|e| format!("datagram: {e}"))
}
