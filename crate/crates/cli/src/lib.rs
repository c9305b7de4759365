//! Orchestration layer: dataset ingestion, resumable runs, reporting, and the
//! scripted mock endpoint backing the `subthoughts` binary.

pub mod dataset;
pub mod mockserve;
pub mod report;
pub mod run;
