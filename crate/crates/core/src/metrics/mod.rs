//! Metric data model, the collector contract and the deadline scheduler.
//!
//! A [`MetricRecord`] is one timestamped observation. Collectors produce
//! batches of records that share a timestamp; the [`Scheduler`] runs them at
//! their configured interval and hands each batch to a [`BatchSink`].

mod clock;
mod offload;
mod scheduler;

pub use clock::{Clock, ManualClock, SystemClock};
pub use offload::{BackgroundJob, OffloadedCollector, Sample};
pub use scheduler::{
    BatchSink, CollectError, CollectorModule, ModuleInfo, ModuleState, Scheduler, SchedulerConfig,
    SchedulerError, SchedulerStats, SharedScheduler, MIN_INTERVAL_MS,
};

use std::fmt;

use thiserror::Error;

/// Module id used for the agent's own counters (`core.collect_errors`).
pub const CORE_MODULE_ID: &str = "core";

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("timestamp must be positive")]
    ZeroTimestamp,
    #[error("invalid identifier {0:?}")]
    BadIdentifier(String),
    #[error("non-finite real value")]
    NonFinite,
    #[error("text value contains a newline")]
    NewlineInText,
    #[error("units contain a newline")]
    NewlineInUnits,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Real(f64),
    Integer(i64),
    Text(String),
}

impl MetricValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            MetricValue::Real(v) => Some(v),
            MetricValue::Integer(v) => Some(v as f64),
            MetricValue::Text(_) => None,
        }
    }

    fn validate(&self) -> Result<(), RecordError> {
        match self {
            MetricValue::Real(v) if !v.is_finite() => Err(RecordError::NonFinite),
            MetricValue::Text(s) if s.contains(['\n', '\r']) => Err(RecordError::NewlineInText),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Real(v) => write!(f, "{v:?}"),
            MetricValue::Integer(v) => write!(f, "{v}"),
            MetricValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for MetricValue {
    fn from(v: f64) -> Self {
        MetricValue::Real(v)
    }
}

impl From<i64> for MetricValue {
    fn from(v: i64) -> Self {
        MetricValue::Integer(v)
    }
}

impl From<String> for MetricValue {
    fn from(v: String) -> Self {
        MetricValue::Text(v)
    }
}

impl From<&str> for MetricValue {
    fn from(v: &str) -> Self {
        MetricValue::Text(v.to_owned())
    }
}

/// Returns true when `s` is a non-empty string over `[A-Za-z0-9_.-]`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

/// Maps arbitrary text onto the identifier alphabet, replacing every other
/// character with `_` (`/var/log` becomes `_var_log`).
pub fn sanitize_identifier(s: &str) -> String {
    let out: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if out.is_empty() {
        "_".to_owned()
    } else {
        out
    }
}

/// One timestamped observation. Construct through [`MetricRecord::new`],
/// which enforces the record invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    module_id: String,
    parameter: String,
    value: MetricValue,
    units: String,
    timestamp_ms: u64,
}

impl MetricRecord {
    pub fn new(
        module_id: impl Into<String>,
        parameter: impl Into<String>,
        value: impl Into<MetricValue>,
        units: impl Into<String>,
        timestamp_ms: u64,
    ) -> Result<Self, RecordError> {
        let module_id = module_id.into();
        let parameter = parameter.into();
        let value = value.into();
        let units = units.into();
        if timestamp_ms == 0 {
            return Err(RecordError::ZeroTimestamp);
        }
        if !is_identifier(&module_id) {
            return Err(RecordError::BadIdentifier(module_id));
        }
        if !is_identifier(&parameter) {
            return Err(RecordError::BadIdentifier(parameter));
        }
        if units.contains(['\n', '\r']) {
            return Err(RecordError::NewlineInUnits);
        }
        value.validate()?;
        Ok(Self {
            module_id,
            parameter,
            value,
            units,
            timestamp_ms,
        })
    }

    pub fn module_id(&self) -> &str {
        &self.module_id
    }

    pub fn parameter(&self) -> &str {
        &self.parameter
    }

    pub fn value(&self) -> &MetricValue {
        &self.value
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }
}

/// Helper for collectors: accumulates records sharing one timestamp and
/// counts values rejected by the record invariants.
#[derive(Debug)]
pub struct BatchBuilder {
    module_id: String,
    timestamp_ms: u64,
    records: Vec<MetricRecord>,
    rejected: u64,
}

impl BatchBuilder {
    pub fn new(module_id: impl Into<String>, timestamp_ms: u64) -> Self {
        Self {
            module_id: module_id.into(),
            timestamp_ms,
            records: Vec::new(),
            rejected: 0,
        }
    }

    pub fn push(
        &mut self,
        parameter: impl Into<String>,
        value: impl Into<MetricValue>,
        units: &str,
    ) -> &mut Self {
        match MetricRecord::new(
            self.module_id.clone(),
            parameter,
            value,
            units,
            self.timestamp_ms,
        ) {
            Ok(r) => self.records.push(r),
            Err(e) => {
                log::debug!("{}: rejected value: {e}", self.module_id);
                self.rejected += 1;
            }
        }
        self
    }

    /// Counts a value dropped before it became a record.
    pub fn reject(&mut self, reason: &str) -> &mut Self {
        log::debug!("{}: rejected value: {reason}", self.module_id);
        self.rejected += 1;
        self
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn finish(self) -> Batch {
        Batch {
            records: self.records,
            rejected: self.rejected,
        }
    }
}

/// Output of one `collect()` pass.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Batch {
    pub records: Vec<MetricRecord>,
    /// Values dropped for violating an invariant; added to `core.collect_errors`.
    pub rejected: u64,
}
