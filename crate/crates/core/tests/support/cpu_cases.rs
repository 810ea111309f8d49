use std::path::{Path, PathBuf};

use lisa_core::collectors::sample::{sample_cpu, NoSample};
use lisa_core::collectors::{FixtureSource, PlatformSource};

pub fn index() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/cpu/index")
}

/// Expected outcome per transition s(i) -> s(i+1), worked out by hand from
/// the counter deltas in the fixture files.
pub fn expected() -> Vec<Result<(f64, f64, f64), NoSample>> {
    vec![
        Ok((20.0, 5.0, 75.0)),                       // 200/50/750 of 1000
        Ok((100.0 / 7.0, 100.0 / 7.0, 500.0 / 7.0)), // 100/100/500 of 700
        Err(NoSample::ZeroWindow),                   // counters unchanged
        Ok((60.0, 10.0, 30.0)),                      // 600/100/300
        Err(NoSample::Wrapped),                      // counters reset
        Ok((25.0, 12.5, 62.5)),                      // 100/50/250
        Err(NoSample::ZeroWindow),                   // same timestamp
        Ok((100.0, 0.0, 0.0)),                       // 300/0/0
        Ok((0.1, 0.1, 99.8)),                        // 1/1/998
        Ok((50.0, 0.0, 50.0)),                       // 1e12/0/1e12
        Ok((100.0 / 3.0, 100.0 / 3.0, 100.0 / 3.0)), // 1/1/1
        Ok((50.0, 50.0, 0.0)),                       // 100/100/0
        Ok((20.0, 30.0, 50.0)),                      // 2/3/5
    ]
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

/// Replays the fixture and compares every transition with [`expected`].
/// Returns the number of transitions checked.
pub fn check_transitions(index: &Path) -> Result<usize, String> {
    let mut src = FixtureSource::load(index).map_err(|e| e.to_string())?;
    src.advance().map_err(|e| e.to_string())?;
    let mut prev = src.read_cpu_counters().map_err(|e| e.to_string())?;
    let want = expected();
    for (i, w) in want.iter().enumerate() {
        src.advance().map_err(|e| e.to_string())?;
        let curr = src.read_cpu_counters().map_err(|e| e.to_string())?;
        match (sample_cpu(&prev, &curr), w) {
            (Ok(p), Ok((u, s, idle))) => {
                if !(close(p.usr, *u) && close(p.sys, *s) && close(p.idle, *idle)) {
                    return Err(format!("transition {i}: got {p:?}"));
                }
                if !close(p.usr + p.sys + p.idle, 100.0) {
                    return Err(format!("transition {i}: sum {}", p.usr + p.sys + p.idle));
                }
                if p.usr < 0.0 || p.sys < 0.0 || p.idle < 0.0 {
                    return Err(format!("transition {i}: negative rate"));
                }
            }
            (Err(g), Err(w)) if g == *w => {}
            (g, w) => return Err(format!("transition {i}: got {g:?}, want {w:?}")),
        }
        prev = curr;
    }
    Ok(want.len())
}
