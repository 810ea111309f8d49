#![allow(dead_code)]

pub mod cpu_cases;
pub mod hysteresis;
pub mod isolation;
pub mod probes;
pub mod selection_oracle;
pub mod strategies;
pub mod wire_checks;
pub mod xdr_oracle;
