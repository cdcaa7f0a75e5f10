//! Conflict-management workbench for multi-xApp RAN control.
//!
//! * [`genc`] synthesizes xApp/ICP/KPI ecosystems and labeled telemetry.
//! * [`rule_engine`] labels rows as no/direct/indirect/implicit conflicts.
//! * [`graph`] encodes rows as small heterogeneous graphs.
//! * [`learn`] trains tabular and message-passing classifiers.
//! * [`cms`] runs the monitor → detect → classify → mitigate loop.
//! * [`bench`] measures per-row classification latency.

pub mod bench;
pub mod cms;
pub mod domain;
pub mod error;
pub mod genc;
pub mod graph;
pub mod learn;
pub mod par;
pub mod rule_engine;

pub use domain::{ConflictLabel, IcpId, KpiId, MappingTables, SystemModel, XAppId};
pub use error::{Error, Result};
