//! Layered causal maps of an ML system and its environment, and tracing of
//! distribution shifts through them.
//!
//! The pieces, bottom up:
//!
//! * [`map`] / [`format`]: the map model, its validation and the `.msm` text format.
//! * [`dataset`]: reference/current observation windows keyed by qualified name.
//! * [`mechanisms`]: discretized per-window mechanisms, exact and sampled
//!   inference, divergences and shift tests.
//! * [`attribution`]: mechanism-swap Shapley attribution.
//! * [`traversal`]: alert detection and the system -> subsystem -> environment trace.
//! * [`simulator`]: a seeded churn-system model with injectable faults.
//! * [`report`]: the versioned report document and its renderers.

// Errors carry qualified names for diagnostics and sit on cold paths.
#![allow(clippy::result_large_err)]
// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod dataset;
pub mod format;
pub mod graph;
pub mod map;
pub mod mechanisms;
pub mod report;
pub mod simulator;
pub mod traversal;

pub use attribution::{AttributionResult, Classification};
pub use dataset::WindowedDataset;
pub use format::{parse_map, serialize_map};
pub use map::{NodeKind, QName, RelationKind, SystemMap, ViewKind};
pub use mechanisms::MechanismSet;
pub use traversal::{trace, TraceConfig, TraceReport};

/// The churn-system map shipped with the simulator.
pub const CHURN_MAP: &str = include_str!("../data/churn.msm");
