//! Multi-object tracking with per-target memory banks on synthetic scenes.
//!
//! The tracker keeps a bounded memory bank per target and decides each frame
//! whether the new features enter it, either jointly for all targets that
//! started together ([`policy::PolicyKind::Coupled`]) or per target
//! ([`policy::PolicyKind::Decoupled`]).

pub mod canonical;
pub mod config;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod policy;
pub mod record;
pub mod render;
pub mod report;
pub mod scenario;
pub mod tracker;
pub mod types;
