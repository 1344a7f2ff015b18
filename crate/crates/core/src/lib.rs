//! Deterministic simulator for gossip learning over dynamic networks in which
//! nodes become inaccessible, with diagnostics for weight divergence and the
//! convergence bound of strongly convex gossip SGD.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accessibility;
pub mod config;
pub mod dataparts;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod format;
pub mod gossip;
pub mod mobility;
pub mod objective;
pub mod rng;
pub mod trace;
pub mod vector;
pub mod workload;

pub use error::{Error, Result};
