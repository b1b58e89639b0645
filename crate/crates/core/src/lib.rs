//! Deterministic discrete-event simulation of a shared bottleneck managed by
//! DropTail, PIE, MADPIE or CoDel, with CUBIC, CBR and short-file traffic.

pub mod aqm;
pub mod engine;
pub mod metrics;
pub mod netsim;
pub mod packet;
pub mod transport;
pub mod units;
