//! Power-outage restoration analytics.
//!
//! Reads failure records, groups them into weather events, measures how
//! failure size relates to recovery speed, and quantifies the customer impact
//! of the restoration order. A seeded simulator produces synthetic events with
//! known dispatch rules for validation.

pub mod dependence;
pub mod error;
pub mod event;
pub mod impact;
pub mod ingest;
pub mod pipeline;
pub mod scaling;
pub mod synth;
pub mod triage;

pub use error::{Error, Result};
pub use event::{FailureEvent, SeverityClass};
pub use ingest::{DeviceType, FailureRecord};
