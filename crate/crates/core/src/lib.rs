//! Hellsemble: ensembles built from "circles of difficulty".
//!
//! Members are trained in turn on the instances that earlier members got
//! wrong (plus a small carryover of ones they got right). A multiclass router
//! learns which circle an instance belongs to and hands it to exactly one
//! member at prediction time.
//!
//! Modules:
//! - [`data`]: datasets, index subsets, CSV ingestion, stratified splits
//! - [`learners`]: from-scratch base learners and routers
//! - [`hellsemble`]: sequential and greedy construction, routed prediction
//! - [`eval`]: metrics, the experiment grid and report emission

pub mod data;
pub mod eval;
pub mod hellsemble;
pub mod learners;
pub mod seed;
