//! `REC` line encoding of metric records.
//!
//! ```text
//! REC <timestamp_ms> <module_id> <parameter> <R|I|S> <value> [units]
//! ```
//!
//! Fields are separated by exactly one space. Text values and units are
//! percent-encoded for `%`, space, tab, CR and LF. Reals use the shortest
//! decimal that parses back to the same `f64`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::metrics::{MetricRecord, MetricValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

impl ParseError {
    fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

pub fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' | ' ' | '\t' | '\r' | '\n' => {
                let _ = write!(out, "%{:02X}", c as u32);
            }
            _ => out.push(c),
        }
    }
    out
}

pub fn percent_decode(s: &str) -> Result<String, usize> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3).ok_or(i)?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| i)?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| 0)
}

/// Encodes a record as one line, without the trailing newline.
pub fn encode_record(r: &MetricRecord) -> String {
    let (tag, value) = match r.value() {
        MetricValue::Real(v) => ('R', format!("{v:?}")),
        MetricValue::Integer(v) => ('I', v.to_string()),
        MetricValue::Text(s) => ('S', percent_encode(s)),
    };
    let mut line = format!(
        "REC {} {} {} {} {}",
        r.timestamp_ms(),
        r.module_id(),
        r.parameter(),
        tag,
        value
    );
    if !r.units().is_empty() {
        line.push(' ');
        line.push_str(&percent_encode(r.units()));
    }
    line
}

pub fn decode_record(line: &str) -> Result<MetricRecord, ParseError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let mut tokens = Vec::with_capacity(7);
    let mut start = 0;
    for (i, b) in line.bytes().enumerate() {
        if b == b' ' {
            tokens.push((start, &line[start..i]));
            start = i + 1;
        }
    }
    tokens.push((start, &line[start..]));

    if tokens.len() < 6 {
        return Err(ParseError::new(line.len(), "too few fields"));
    }
    if tokens.len() > 7 {
        return Err(ParseError::new(tokens[7].0, "too many fields"));
    }
    let (off, kw) = tokens[0];
    if kw != "REC" {
        return Err(ParseError::new(off, "expected REC"));
    }
    let (ts_off, ts) = tokens[1];
    let timestamp: u64 = ts
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| ParseError::new(ts_off, "bad timestamp"))?;
    let (mod_off, module) = tokens[2];
    if !crate::metrics::is_identifier(module) {
        return Err(ParseError::new(mod_off, "bad module id"));
    }
    let (par_off, parameter) = tokens[3];
    if !crate::metrics::is_identifier(parameter) {
        return Err(ParseError::new(par_off, "bad parameter"));
    }
    let (tag_off, tag) = tokens[4];
    let (val_off, raw) = tokens[5];
    let value = match tag {
        "R" => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(MetricValue::Real),
        "I" => raw.parse::<i64>().ok().map(MetricValue::Integer),
        "S" => percent_decode(raw)
            .map_err(|i| ParseError::new(val_off + i, "bad percent escape"))
            .map(MetricValue::Text)
            .map(Some)?,
        _ => return Err(ParseError::new(tag_off, "type must be R, I or S")),
    }
    .ok_or_else(|| ParseError::new(val_off, "bad value"))?;
    let units = match tokens.get(6) {
        Some(&(u_off, u)) => {
            if u.is_empty() {
                return Err(ParseError::new(u_off, "empty units field"));
            }
            percent_decode(u).map_err(|i| ParseError::new(u_off + i, "bad percent escape"))?
        }
        None => String::new(),
    };
    MetricRecord::new(module, parameter, value, units, timestamp)
        .map_err(|e| ParseError::new(val_off, e.to_string()))
}
