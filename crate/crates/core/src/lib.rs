//! Operator-in-the-loop proactive safety engine.
//!
//! The crate covers the whole loop: a CSTR plant simulation with injectable
//! input faults ([`plant`], [`scenario`]), a box-constrained linear MPC
//! ([`controller`]), statistical process monitoring ([`monitor`]), ingestion of
//! HAZOP sheets, event logs and inspection records ([`ingest`]), an
//! ontology-typed risk knowledge graph ([`graph`]) with keyword queries
//! ([`query`]), and the session orchestration that ties them together
//! ([`session`]).

pub mod config;
pub mod controller;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod monitor;
pub mod plant;
pub mod query;
pub mod scenario;
pub mod session;
pub mod svg;
pub mod text;

pub use error::{Error, Result};
