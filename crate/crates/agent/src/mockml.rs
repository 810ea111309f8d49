//! Mock aggregator: prints every decoded parameter as
//! `<cluster> <node> <name> <TYPE> <value>`.

use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use lisa_core::apmon::AggregatorReceiver;

/// Receives until `stop` is set. Decode failures go to `err` with their
/// byte offset. Returns the number of datagrams decoded.
pub fn run(
    rx: &AggregatorReceiver,
    out: &mut dyn Write,
    err: &mut dyn Write,
    stop: &AtomicBool,
) -> io::Result<u64> {
    let mut n = 0;
    while !stop.load(Ordering::SeqCst) {
        let Some((d, from)) = rx.recv_from(Duration::from_millis(100)) else {
            continue;
        };
        match d {
            Ok(d) => {
                n += 1;
                for l in d.param_lines() {
                    writeln!(out, "{l}")?;
                }
                out.flush()?;
            }
            Err(e) => writeln!(
                err,
                "datagram from {from}: decode error at offset {}: {}",
                e.offset, e.reason
            )?,
        }
    }
    Ok(n)
}
