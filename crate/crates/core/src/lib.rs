//! DPE-aware user association and resource allocation for edge servers
//! that also run blockchain block generation.
//!
//! The pipeline alternates a fractional-programming resource block
//! ([`fp`]) with a semidefinite association block ([`qcqp`], [`sdp`],
//! [`rounding`]); [`daur`] drives both and hosts the baselines.

pub mod daur;
pub mod error;
pub mod fp;
pub mod model;
pub mod qcqp;
pub mod rounding;
pub mod sdp;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
pub use model::{CostBreakdown, Decision, NetworkInstance, Preference, ScenarioParams};
