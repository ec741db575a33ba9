//! Conditional density surrogates for SDE terminal states via
//! pseudo-reversible normalizing flows.

pub mod eval;
pub mod flow;
pub mod nn;
pub mod par;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod train;
pub mod tune;
